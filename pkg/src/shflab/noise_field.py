"""Mollified space-time white noise on a grid, in time slabs.

The driving field is white noise smoothed in space at scale epsilon by a
compactly supported probability density j.  A time slab of width dt
contributes, at each grid node, a centered Gaussian W_k with covariance
dt * J_eps(x - x') where J_eps = j_eps * j_eps (spatial convolution).

Discretely, a slab is i.i.d. N(0, dt/h^2) node noise convolved with
pointwise samples of j_eps and scaled by h^2, which makes the discrete
covariance exactly dt * h^2 (K star K) -- compactly supported, so grid
points farther apart than 2 eps are exactly independent.  The pointwise
discrete variance rate (used by the Feynman-Kac normalizer to keep
weights exactly mean-one) follows from the kernel autocorrelations at
offsets (0,0), (1,0), (1,1) combined with bilinear interpolation weights.

The coupling constant sits in the critical window

    beta = sqrt( 2 pi / log(1/eps) + rho / log(1/eps)^2 ),
    rho = pi * theta + rho_offset,

the unique scale at which the smoothed equation keeps a nontrivial limit.
"""

from __future__ import annotations

import io
import json
import math
import threading

import numpy as np
from scipy.signal import fftconvolve

from .errors import AccuracyError, ConfigError, DomainError, GeometryError
from .rng import substream

__all__ = [
    "MollifierSpec",
    "GridSpec",
    "NoiseSlabStack",
    "coupling_beta",
    "convolved_mollifier",
    "sample_slabs",
    "field_at",
]


def coupling_beta(theta: float, epsilon: float, rho_offset: float = 0.0) -> float:
    """Critical coupling beta_{theta, eps}; the o(1) term is set to zero."""
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"coupling_beta requires epsilon in (0, 1), got {epsilon}")
    L = -math.log(epsilon)
    rho = math.pi * float(theta) + float(rho_offset)
    radicand = 2.0 * math.pi / L + rho / (L * L)
    if radicand <= 0.0:
        raise DomainError(
            f"coupling radicand {radicand:g} <= 0 at epsilon={epsilon:g} "
            f"(rho={rho:g} too negative for this scale)"
        )
    return math.sqrt(radicand)


class MollifierSpec:
    """Radially symmetric smooth probability density at scale epsilon.

    The only implemented shape is the standard bump
    j(x) = c exp(-1/(1-|x|^2)) on |x| < 1, with c fixed numerically so
    that int j = 1 (two quadrature resolutions must agree to 1e-12, and
    the unit integral is enforced to 1e-10).  j_eps(x) = j(x/eps)/eps^2
    is supported in |x| <= eps; the convolution J_eps = j_eps * j_eps is
    tabulated radially and vanishes for |x| >= 2 eps.
    """

    def __init__(self, epsilon: float, kind: str = "bump"):
        if kind != "bump":
            raise DomainError(f"unsupported mollifier kind {kind!r}")
        epsilon = float(epsilon)
        if epsilon <= 0.0:
            raise DomainError("mollifier scale epsilon must be positive")
        self.kind = kind
        self.epsilon = epsilon
        m_lo = self._raw_mass(320)
        m_hi = self._raw_mass(480)
        if abs(m_hi - m_lo) > 1e-12:
            raise AccuracyError("mollifier normalization did not converge")
        self.norm_constant = 1.0 / m_hi
        if abs(self.norm_constant * m_hi - 1.0) > 1e-10:
            raise AccuracyError("mollifier does not integrate to 1 within 1e-10")
        j2_lo = self._raw_square_mass(320)
        j2_hi = self._raw_square_mass(480)
        if abs(j2_hi - j2_lo) > 1e-12:
            raise AccuracyError("mollifier square integral did not converge")
        # int j^2 at unit scale; J_eps(0) = this / eps^2
        self.unit_square_integral = self.norm_constant ** 2 * j2_hi
        self._conv_table = self._build_conv_table(240)
        check = self._build_conv_table(360)
        scale = self._conv_table[1][0]
        if np.max(np.abs(self._conv_table[1] - check[1])) > 1e-9 * scale:
            raise AccuracyError("mollifier convolution table did not converge")

    @staticmethod
    def _raw_radial(rho):
        out = np.zeros_like(rho)
        inside = rho < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
        return out

    @classmethod
    def _raw_mass(cls, n):
        z, w = np.polynomial.legendre.leggauss(n)
        rho = 0.5 * (z + 1.0)
        return 2.0 * math.pi * 0.5 * float(w @ (cls._raw_radial(rho) * rho))

    @classmethod
    def _raw_square_mass(cls, n):
        z, w = np.polynomial.legendre.leggauss(n)
        rho = 0.5 * (z + 1.0)
        return 2.0 * math.pi * 0.5 * float(w @ (cls._raw_radial(rho) ** 2 * rho))

    def unit_density(self, points) -> np.ndarray:
        """j at unit scale for planar points (pair on the last axis)."""
        points = np.asarray(points, dtype=float)
        rho = np.sqrt(np.sum(points * points, axis=-1))
        return self.norm_constant * self._raw_radial(np.atleast_1d(rho)).reshape(rho.shape)

    def density(self, points) -> np.ndarray:
        """j_eps(x) = j(x/eps) / eps^2."""
        points = np.asarray(points, dtype=float)
        return self.unit_density(points / self.epsilon) / self.epsilon ** 2

    def _build_conv_table(self, n):
        # radial table of (j * j)(u e1) at unit scale, u in [0, 2]
        z, w = np.polynomial.legendre.leggauss(n)
        x1 = z[:, None]
        x2 = z[None, :]
        w2 = np.outer(w, w)
        base = self.unit_density(np.stack(np.broadcast_arrays(x1, x2), axis=-1))
        u_grid = np.linspace(0.0, 2.0, 241)
        vals = np.empty_like(u_grid)
        for i, u in enumerate(u_grid):
            shifted = self.unit_density(
                np.stack(np.broadcast_arrays(u - x1, -x2 + 0.0 * x1), axis=-1)
            )
            vals[i] = float(np.sum(w2 * base * shifted))
        return u_grid, np.maximum(vals, 0.0)

    @property
    def self_overlap(self) -> float:
        """J_eps(0) = eps^{-2} int j^2."""
        return self.unit_square_integral / self.epsilon ** 2

    def convolved(self, displacements) -> np.ndarray:
        """J_eps at planar displacements; exactly 0 beyond |z| >= 2 eps."""
        displacements = np.asarray(displacements, dtype=float)
        d = np.sqrt(np.sum(displacements * displacements, axis=-1)) / self.epsilon
        u_grid, vals = self._conv_table
        out = np.interp(np.atleast_1d(d).ravel(), u_grid, vals, right=0.0)
        out = np.where(np.atleast_1d(d).ravel() >= 2.0, 0.0, out)
        return (out / self.epsilon ** 2).reshape(d.shape)

    def kernel_samples(self, h: float) -> np.ndarray:
        """Pointwise samples of j_eps on a (2m+1)^2 grid of spacing h."""
        m = int(math.floor(self.epsilon / h + 1e-12))
        offs = h * np.arange(-m, m + 1)
        pts = np.stack(np.meshgrid(offs, offs, indexing="ij"), axis=-1)
        return self.density(pts)


def convolved_mollifier(spec: MollifierSpec, displacement) -> np.ndarray:
    """J_eps(displacement); radial, compactly supported in |z| < 2 eps."""
    return spec.convolved(displacement)


class GridSpec:
    """Origin-centered square lattice: spacing h, full side length >= L."""

    def __init__(self, h: float, L: float):
        h = float(h)
        L = float(L)
        if h <= 0.0 or L <= 0.0:
            raise DomainError("grid needs h > 0 and L > 0")
        half_nodes = int(math.ceil(L / (2.0 * h)))
        self.h = h
        self.n_side = 2 * half_nodes + 1
        self.axis = h * (np.arange(self.n_side) - half_nodes)
        self.half_extent = float(self.axis[-1])
        self.L = 2.0 * self.half_extent

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        lim = self.half_extent - margin
        return np.all(np.abs(points) <= lim, axis=-1)


class NoiseSlabStack:
    """Streamed per-slab Gaussian fields on a grid.

    Slab k is generated on demand from the substream (seed, "noise", k),
    so the stack is deterministic, slabs are mutually independent, and
    memory stays at one slab regardless of the horizon.  A small cache
    keeps the most recently used slabs for repeated sequential sweeps.
    """

    def __init__(self, grid: GridSpec, dt: float, n_slabs: int,
                 mollifier: MollifierSpec, seed: int, _stored=None):
        self.grid = grid
        self.dt = float(dt)
        self.n_slabs = int(n_slabs)
        self.mollifier = mollifier
        self.seed = int(seed)
        self.kernel = mollifier.kernel_samples(grid.h)
        m = self.kernel.shape[0] // 2
        self._pad = m
        h = grid.h
        K = self.kernel
        # exact discrete covariance rates: rho_d = h^2 sum K K(offset d)
        self.rho00 = h * h * float(np.sum(K * K))
        self.rho10 = h * h * float(np.sum(K[1:, :] * K[:-1, :]))
        self.rho11 = h * h * float(np.sum(K[1:, 1:] * K[:-1, :-1]))
        self._stored = _stored
        self._cache: dict[int, np.ndarray] = {}
        self._cache_order: list[int] = []
        self._lock = threading.Lock()

    @property
    def node_variance_rate(self) -> float:
        """Discrete J_eff at a grid node; continuum value is J_eps(0)."""
        return self.rho00

    def slab(self, k: int) -> np.ndarray:
        if not 0 <= k < self.n_slabs:
            raise DomainError(f"slab index {k} outside [0, {self.n_slabs})")
        with self._lock:
            if k in self._cache:
                return self._cache[k]
        if self._stored is not None:
            W = self._stored[k]
        else:
            rng = substream(self.seed, "noise", k)
            n_ext = self.grid.n_side + 2 * self._pad
            eta = rng.standard_normal((n_ext, n_ext))
            W = math.sqrt(self.dt) * self.grid.h * fftconvolve(eta, self.kernel, mode="valid")
        with self._lock:
            self._cache[k] = W
            self._cache_order.append(k)
            if len(self._cache_order) > 3:
                self._cache.pop(self._cache_order.pop(0), None)
        return W

    def _locate(self, positions):
        positions = np.asarray(positions, dtype=float)
        if positions.shape[-1] != 2:
            raise DomainError("positions must be planar points on the last axis")
        g = self.grid
        if not np.all(self.grid.contains(positions)):
            bad = positions[~self.grid.contains(positions)]
            raise GeometryError(
                f"position {bad.reshape(-1, 2)[0]} outside grid extent "
                f"+-{g.half_extent:g}; enlarge L"
            )
        f = (positions - g.axis[0]) / g.h
        idx = np.minimum(np.floor(f).astype(int), g.n_side - 2)
        frac = f - idx
        return idx, frac

    def field_at(self, k: int, positions) -> np.ndarray:
        """Bilinear interpolation of slab k at planar positions."""
        idx, frac = self._locate(positions)
        W = self.slab(k)
        i, j = idx[..., 0], idx[..., 1]
        a, b = frac[..., 0], frac[..., 1]
        return ((1 - a) * (1 - b) * W[i, j] + a * (1 - b) * W[i + 1, j]
                + (1 - a) * b * W[i, j + 1] + a * b * W[i + 1, j + 1])

    def variance_rate(self, positions) -> np.ndarray:
        """Exact per-position variance rate of field_at: Var = dt * J_eff(x).

        Follows from the bilinear weights and the kernel autocorrelations;
        this is the rate the Feynman-Kac normalizer must use for the
        discretized weights to be exactly mean-one.
        """
        _, frac = self._locate(positions)
        a, b = frac[..., 0], frac[..., 1]
        w00 = (1 - a) * (1 - b)
        w10 = a * (1 - b)
        w01 = (1 - a) * b
        w11 = a * b
        sq = w00 ** 2 + w10 ** 2 + w01 ** 2 + w11 ** 2
        adj = w00 * w10 + w01 * w11 + w00 * w01 + w10 * w11
        diag = w00 * w11 + w10 * w01
        return self.rho00 * sq + 2.0 * self.rho10 * adj + 2.0 * self.rho11 * diag

    # -- persistence -----------------------------------------------------

    def dump(self, path: str) -> None:
        """Write header + row-major float32 slabs (replay format)."""
        header = {
            "epsilon": self.mollifier.epsilon,
            "h": self.grid.h,
            "L": self.grid.L,
            "dt": self.dt,
            "seed": self.seed,
            "n_slabs": self.n_slabs,
            "n_side": self.grid.n_side,
        }
        with open(path, "wb") as fh:
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
            for k in range(self.n_slabs):
                fh.write(self.slab(k).astype(np.float32).tobytes())

    @classmethod
    def load(cls, path: str) -> "NoiseSlabStack":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            n = header["n_side"]
            stored = []
            for _ in range(header["n_slabs"]):
                buf = fh.read(4 * n * n)
                stored.append(
                    np.frombuffer(buf, dtype=np.float32).astype(float).reshape(n, n)
                )
        grid = GridSpec(header["h"], header["L"])
        if grid.n_side != n:
            raise ConfigError("stored grid shape does not match its header")
        mol = MollifierSpec(header["epsilon"])
        return cls(grid, header["dt"], header["n_slabs"], mol, header["seed"],
                   _stored=stored)


def sample_slabs(grid: GridSpec, t: float, dt: float, spec: MollifierSpec,
                 seed: int) -> NoiseSlabStack:
    """Build the slab stack for horizon t; validates geometry before sampling."""
    t = float(t)
    dt = float(dt)
    if dt <= 0.0 or t <= 0.0:
        raise ConfigError("t and dt must be positive")
    if grid.h > spec.epsilon / 4.0 + 1e-15:
        raise ConfigError(
            f"grid spacing h={grid.h:g} must be <= epsilon/4 = {spec.epsilon / 4.0:g}"
        )
    n_slabs = int(round(t / dt))
    if n_slabs < 1 or abs(n_slabs * dt - t) > 1e-9 * max(t, 1.0):
        raise ConfigError(f"dt={dt:g} must divide the horizon t={t:g}")
    return NoiseSlabStack(grid, dt, n_slabs, spec, seed)


def field_at(stack: NoiseSlabStack, k: int, position) -> np.ndarray:
    """Module-level convenience wrapper for NoiseSlabStack.field_at."""
    return stack.field_at(k, position)
