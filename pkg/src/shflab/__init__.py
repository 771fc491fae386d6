"""Numerics laboratory for the 2d stochastic heat equation at critical coupling.

Subpackages cover the Dickman-subordinator special functions, exact and
quadrature-based moment formulas for smoothed solutions of the mollified
stochastic heat equation at critical coupling, a Feynman-Kac Monte Carlo
simulator driven by slab-sampled mollified space-time white noise, the
drifted space-time tube construction with certified disjointness, and a
lower-tail certificate pipeline built from those pieces.
"""

__version__ = "0.1.0"
