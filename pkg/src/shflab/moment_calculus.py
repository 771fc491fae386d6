"""Mean, variance and second-moment formulas for smoothed heat-flow masses.

For initial datum u0 and test profile phi, the smoothed mass Z_t(u0, phi)
has

    mean      int u0(x) p_t(x, y) phi(y) dx dy,
    variance  4 pi int dx dy int_{0<u<v<t} (P_u u0(x))^2
              G_theta(v-u) p_{2(v-u)}(y-x) (P_{t-v} phi(y))^2 du dv,

where P is the heat semigroup and G_theta the weighted Green function of
the Dickman subordinator.  Gaussian profiles reduce analytically: squaring
a gaussian is p_a(z)^2 = p_{a/2}(z)/(4 pi a), after which the spatial
integrals collapse by convolution and only a graded (w, u) quadrature
remains, with w = v - u and the integrable G singularity at w = 0 absorbed
by the exact identity int_0^delta G_theta = int exp((theta-gamma)s)
delta^s / Gamma(s+1) ds.

The small-ball second moment uses the domination
1_{B_eps}/(2 pi eps^2) <= sqrt(e) p_{eps^2} (an exact pointwise
inequality, checked here rather than assumed), which turns the variance
integrand into

    [e^2 / (4 pi (u+eps^2)(t-v+eps^2))] G_theta(v-u) p_X(0),
    X = (u + t - v + 2 eps^2)/2 + 2(v-u),

whose u-slice at fixed w = v - u is elementary, leaving 1d quadratures for
both the sharp reduced integral and its separable upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import ncx2

from .errors import AccuracyError, DomainError
from .special_functions import GreenEvaluator, heat_kernel

__all__ = [
    "ProfileSpec",
    "MomentResult",
    "BallSecondMoment",
    "ScanRow",
    "ScanResult",
    "semigroup_apply",
    "mean_mass",
    "variance_mass",
    "ball_second_moment_reduced",
    "second_moment_bound_region",
    "log_divergence_scan",
    "check_indicator_domination",
]


@dataclass(frozen=True)
class ProfileSpec:
    """A nonnegative profile: gaussian, indicator of a ball, or flat.

    gaussian:       mass * p_variance(x - center)  (variance >= 0)
    indicator_ball: 1 on the ball of radius `radius` around center
    flat:           constant `level`
    """

    kind: str
    variance: float = 0.0
    radius: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    mass: float = 1.0
    level: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "indicator_ball", "flat"):
            raise DomainError(f"unknown profile kind {self.kind!r}")
        if self.kind == "gaussian" and self.variance < 0.0:
            raise DomainError("gaussian profile needs variance >= 0")
        if self.kind == "indicator_ball" and self.radius <= 0.0:
            raise DomainError("indicator_ball profile needs radius > 0")

    def total_mass(self) -> float:
        if self.kind == "gaussian":
            return self.mass
        if self.kind == "indicator_ball":
            return math.pi * self.radius ** 2
        return math.inf


@dataclass(frozen=True)
class MomentResult:
    value: float
    abs_error: float
    evaluations: int = 0


def semigroup_apply(profile: ProfileSpec, t: float, x) -> np.ndarray:
    """(P_t profile)(x) for the 2d heat semigroup; exact for all three kinds.

    Indicator balls use the noncentral chi-square distribution: with
    d = |x - c|, P_t 1_{B_r(c)}(x) = P(chi2_2(d^2/t) <= r^2/t).
    """
    t = float(t)
    if t < 0.0:
        raise DomainError("semigroup time must be >= 0")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise DomainError("points must be 2d on the last axis")
    if profile.kind == "flat":
        return np.broadcast_to(np.asarray(profile.level, dtype=float), x.shape[:-1]).copy()
    d = x - np.asarray(profile.center, dtype=float)
    if profile.kind == "gaussian":
        s = profile.variance + t
        if s <= 0.0:
            raise DomainError("gaussian semigroup needs variance + t > 0")
        return profile.mass * heat_kernel(s, d)
    dist2 = np.sum(d * d, axis=-1)
    if t == 0.0:
        return (dist2 <= profile.radius ** 2).astype(float)
    return ncx2.cdf(profile.radius ** 2 / t, 2, dist2 / t)


# ----------------------------------------------------------------------
# mean
# ----------------------------------------------------------------------

def _polar_nodes(radius, center, n_r, n_phi):
    r_nodes, r_w = np.polynomial.legendre.leggauss(n_r)
    rho = 0.5 * radius * (r_nodes + 1.0)
    w_rho = 0.5 * radius * r_w * rho
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    w_phi = 2.0 * math.pi / n_phi
    pts = np.empty((n_r, n_phi, 2))
    pts[..., 0] = center[0] + rho[:, None] * np.cos(phi)[None, :]
    pts[..., 1] = center[1] + rho[:, None] * np.sin(phi)[None, :]
    wts = w_rho[:, None] * w_phi * np.ones((1, n_phi))
    return pts.reshape(-1, 2), wts.ravel()


def _hermite_nodes(variance, center, n):
    z, w = np.polynomial.hermite_e.hermegauss(n)
    pts = np.empty((n, n, 2))
    sig = math.sqrt(variance)
    pts[..., 0] = center[0] + sig * z[:, None]
    pts[..., 1] = center[1] + sig * z[None, :]
    wts = np.outer(w, w) / (2.0 * math.pi)
    return pts.reshape(-1, 2), wts.ravel()


def _integrate_against(u0: ProfileSpec, fn, n_scale=1.0):
    """int u0(x) fn(x) dx by a rule adapted to u0's support. Returns value."""
    if u0.kind == "indicator_ball":
        pts, wts = _polar_nodes(u0.radius, u0.center, int(48 * n_scale), int(96 * n_scale))
        return float(wts @ fn(pts))
    if u0.kind == "gaussian":
        if u0.variance == 0.0:
            return u0.mass * float(fn(np.asarray([u0.center]))[0])
        pts, wts = _hermite_nodes(u0.variance, u0.center, int(48 * n_scale))
        return u0.mass * float(wts @ fn(pts))
    raise DomainError("flat initial datum has no integrable support")


def mean_mass(u0: ProfileSpec, phi: ProfileSpec, t: float) -> MomentResult:
    """E Z_t(u0, phi) = int u0(x) (P_t phi)(x) dx, exact where closed forms exist."""
    t = float(t)
    if t < 0.0:
        raise DomainError("t must be >= 0")
    if u0.kind == "gaussian" and phi.kind == "gaussian":
        s = u0.variance + t + phi.variance
        dc = np.asarray(phi.center) - np.asarray(u0.center)
        if s == 0.0:
            raise DomainError("degenerate gaussian pair at t = 0")
        v = u0.mass * phi.mass * float(heat_kernel(s, dc))
        return MomentResult(v, 1e-15 * abs(v), 0)
    if phi.kind == "flat":
        m = u0.total_mass()
        if not math.isfinite(m):
            raise DomainError("mean of flat against flat is infinite")
        return MomentResult(phi.level * m, 0.0, 0)
    if u0.kind == "flat":
        m = phi.total_mass()
        if not math.isfinite(m):
            raise DomainError("mean of flat against flat is infinite")
        return MomentResult(u0.level * m, 0.0, 0)

    def fn(pts):
        return semigroup_apply(phi, t, pts)

    lo = _integrate_against(u0, fn, n_scale=1.0)
    hi = _integrate_against(u0, fn, n_scale=1.5)
    return MomentResult(hi, abs(hi - lo), 0)


# ----------------------------------------------------------------------
# variance (gaussian-reduced and generic quadrature paths)
# ----------------------------------------------------------------------

def _w_panels(w_cut, t, grow=4.0, n_linear=6):
    """Panel edges on [w_cut, t], geometric near 0 then linear."""
    edges = [w_cut]
    w = w_cut
    while w * grow < t / 4.0:
        w *= grow
        edges.append(w)
    edges.extend(np.linspace(edges[-1], t, n_linear + 1)[1:])
    return np.asarray(edges)


def _gl_on_panels(edges, n_per_panel):
    z, w = np.polynomial.legendre.leggauss(n_per_panel)
    a = edges[:-1][:, None]
    b = edges[1:][:, None]
    nodes = 0.5 * (b - a) * (z[None, :] + 1.0) + a
    wts = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), wts.ravel()


def _variance_gaussian(u0, phi, t, theta, ev, level):
    v0, v1 = u0.variance, phi.variance
    dc = np.asarray(phi.center) - np.asarray(u0.center)
    dc2 = float(dc @ dc)
    n_u = 24 * level
    w_cut = 1e-11 / 4 ** (level - 1)
    zu, wu = np.polynomial.legendre.leggauss(n_u)

    def inner(w):
        L = t - w
        u = 0.5 * L * (zu + 1.0)
        uw = 0.5 * L * wu
        S = 0.5 * (v0 + u) + 2.0 * w + 0.5 * (v1 + t - u - w)
        p = np.exp(-dc2 / (2.0 * S)) / (2.0 * math.pi * S)
        return float(uw @ (p / ((v0 + u) * (v1 + t - u - w))))

    edges = _w_panels(w_cut, t)
    nodes, wts = _gl_on_panels(edges, 10 + 4 * level)
    gvals = ev.values(theta, nodes)
    ivals = np.array([inner(w) for w in nodes])
    main = float(wts @ (gvals * ivals))
    # exact treatment of the w < w_cut sliver
    c_small = ev.small_time_mass(theta, w_cut)
    i0 = inner(0.0)
    tail = i0 * c_small
    tail_err = abs(inner(w_cut) - i0) * c_small
    pref = u0.mass ** 2 * phi.mass ** 2 / (4.0 * math.pi)
    return pref * (main + tail), pref * tail_err, len(nodes)


def variance_mass(
    u0: ProfileSpec,
    phi: ProfileSpec,
    t: float,
    theta: float = 0.0,
    evaluator: GreenEvaluator | None = None,
    method: str = "auto",
) -> MomentResult:
    """Variance of the smoothed mass Z_t(u0, phi) at coupling parameter theta.

    method "gaussian" requires both profiles gaussian (analytic spatial
    reduction); "generic" integrates the full formula with nested
    quadrature; "auto" picks the reduction when available.  The error
    field is a refinement estimate (two quadrature levels).
    """
    t = float(t)
    if t <= 0.0:
        raise DomainError("variance needs t > 0")
    ev = evaluator if evaluator is not None else GreenEvaluator()
    if method == "auto":
        method = "gaussian" if (u0.kind == "gaussian" and phi.kind == "gaussian") else "generic"
    if method == "gaussian":
        if not (u0.kind == "gaussian" and phi.kind == "gaussian"):
            raise DomainError("gaussian reduction needs gaussian profiles on both ends")
        if u0.variance <= 0.0 or phi.variance <= 0.0:
            raise DomainError("gaussian reduction needs strictly positive variances")
        v1, e1, n1 = _variance_gaussian(u0, phi, t, theta, ev, level=1)
        v2, e2, n2 = _variance_gaussian(u0, phi, t, theta, ev, level=2)
        return MomentResult(v2, abs(v2 - v1) + e2, n1 + n2)
    if method != "generic":
        raise DomainError(f"unknown variance method {method!r}")
    v1, e1 = _variance_generic(u0, phi, t, theta, ev, n_space=32)
    v2, e2 = _variance_generic(u0, phi, t, theta, ev, n_space=48)
    return MomentResult(v2, abs(v2 - v1) + e2, 0)


def _support_box(p: ProfileSpec, t):
    if p.kind == "gaussian":
        half = 7.0 * math.sqrt(p.variance + t) + 1e-6
    elif p.kind == "indicator_ball":
        half = p.radius
    else:
        raise DomainError("flat profiles are not supported by the generic variance path")
    return p.center, half


def _variance_generic(u0, phi, t, theta, ev, n_space):
    """Nested quadrature of the full variance formula (no gaussian shortcuts).

    Spatial double integral per (u, w) node via separable 1d gaussian
    factors: int q(x) p_{2w}(y-x) r(y) dx dy = einsum over tensor grids.
    Below w_switch the heat factor is sharper than the grid, so the slice
    is replaced by its exact w -> 0 limit int q r, weighted by the exact
    small-time Green mass.
    """
    (c0, h0) = _support_box(u0, t)
    (c1, h1) = _support_box(phi, t)
    z, wq = np.polynomial.legendre.leggauss(n_space)
    x1 = c0[0] + h0 * z
    x2 = c0[1] + h0 * z
    y1 = c1[0] + h1 * z
    y2 = c1[1] + h1 * z
    wx = h0 * wq
    wy = h1 * wq
    X = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
    Y = np.stack(np.meshgrid(y1, y2, indexing="ij"), axis=-1)

    cell = min(h0, h1) * 2.0 / n_space
    w_switch = (cell / 3.0) ** 2

    def q_grid(u):
        vals = semigroup_apply(u0, u, X) ** 2
        return vals * np.outer(wx, wx)

    def r_grid(v):
        vals = semigroup_apply(phi, t - v, Y) ** 2
        return vals * np.outer(wy, wy)

    def g1d(w, a, b):
        d = b[None, :] - a[:, None]
        return np.exp(-d * d / (4.0 * w)) / math.sqrt(4.0 * math.pi * w)

    nzu, wzu = np.polynomial.legendre.leggauss(24)

    def slice_J(w):
        A1 = g1d(w, x1, y1)
        A2 = g1d(w, x2, y2)
        L = t - w
        us = 0.5 * L * (nzu + 1.0)
        uw = 0.5 * L * wzu
        total = 0.0
        for u, cw in zip(us, uw):
            Q = q_grid(u)
            R = r_grid(u + w)
            total += cw * float(np.einsum("ab,ai,bj,ij->", Q, A1, A2, R, optimize=True))
        return total

    edges = _w_panels(w_switch, t)
    nodes, wts = _gl_on_panels(edges, 12)
    gvals = ev.values(theta, nodes)
    main = float(wts @ np.array([gvals[i] * slice_J(w) for i, w in enumerate(nodes)]))

    # w < w_switch: exact limit slice int du int q_u r_u
    def limit_slice():
        us = 0.5 * t * (nzu + 1.0)
        uw = 0.5 * t * wzu
        total = 0.0
        for u, cw in zip(us, uw):
            Q = semigroup_apply(u0, u, X) ** 2 * np.outer(wx, wx)
            # evaluate r on the x grid (same points) for the w -> 0 limit
            Rx = semigroup_apply(phi, t - u, X) ** 2
            total += cw * float(np.sum(Q * Rx))
        return total

    c_small = ev.small_time_mass(theta, w_switch)
    tail = limit_slice() * c_small
    value = 4.0 * math.pi * (main + tail)
    err = abs(tail) * 0.05
    return value, err


# ----------------------------------------------------------------------
# small-ball second moment
# ----------------------------------------------------------------------

def check_indicator_domination(epsilon, n_samples=257):
    """Verify 1_{B_eps}(x)/(2 pi eps^2) <= sqrt(e) p_{eps^2}(x) on sampled radii.

    Exact with equality on the boundary |x| = eps; evaluated on a radius
    grid including the endpoints as a guard against regressions in the
    kernel conventions.
    """
    eps = float(epsilon)
    radii = np.linspace(0.0, eps, n_samples)
    pts = np.stack([radii, np.zeros_like(radii)], axis=-1)
    lhs = 1.0 / (2.0 * math.pi * eps ** 2)
    rhs = math.sqrt(math.e) * heat_kernel(eps ** 2, pts)
    if not np.all(lhs <= rhs * (1.0 + 1e-12)):
        raise AccuracyError("indicator-to-gaussian domination violated")
    return True


@dataclass(frozen=True)
class BallSecondMoment:
    sharp: float
    bound: float
    sharp_error: float
    bound_error: float
    epsilon: float
    t: float
    theta: float


def _two_end_graded(span, w_min, end_scale):
    """Panel edges on [w_min, span], geometrically refined toward both ends."""
    left = [w_min]
    w = w_min
    while w * 4.0 < span / 4.0:
        w *= 4.0
        left.append(w)
    right = [span]
    d = span / 4.0
    while d > end_scale:
        right.append(span - d)
        d /= 4.0
    right.append(span - d)
    right = sorted(set(right))
    mid = np.linspace(left[-1], right[0], 5)[1:-1]
    return np.unique(np.concatenate([left, mid, right]))


def _ball_panels(epsilon, t):
    """Graded panel edges on (w_min, t): geometric at both endpoints.

    G_theta is singular at w = 0 (graded from w_min = eps^4 per the
    diagonal policy) and the log factor varies on scale eps^2 near w = t.
    """
    w_min = max(epsilon ** 4, 1e-300)
    end_scale = min(epsilon ** 2 / 4.0, t / 16.0)
    return _two_end_graded(t, w_min, end_scale), w_min


def _ball_factors(w, epsilon, t):
    a = epsilon ** 2
    B = (2.0 / (t - w + 2.0 * a)) * np.log((t - w + a) / a)
    X = 0.5 * t + 1.5 * w + a
    return B, X


def ball_second_moment_reduced(
    epsilon: float,
    t: float,
    theta: float = 0.0,
    evaluator: GreenEvaluator | None = None,
    n_per_panel: int = 16,
) -> BallSecondMoment:
    """Sharp reduced quadrature and separable upper bound for the normalized
    second moment of the mass of an epsilon-ball.

    sharp = int_{0<u<v<t} e^2 / (4 pi (u+e2)(t-v+e2)) G(v-u) p_X(0) du dv
    bound = e^2 / (4 pi^2 t) int_{0<u<v<t} G(v-u) / ((u+e2)(t-v+e2)) du dv

    with e2 = eps^2 and X = (u + t - v + 2 e2)/2 + 2(v-u).  Both collapse
    to 1d integrals in w = v - u because the u-slice is elementary
    (partial fractions) and X depends on w alone.  sharp <= bound holds
    pointwise and is verified on the result.
    """
    epsilon = float(epsilon)
    t = float(t)
    if epsilon <= 0.0 or t <= 0.0:
        raise DomainError("ball second moment needs epsilon > 0 and t > 0")
    ev = evaluator if evaluator is not None else GreenEvaluator()
    check_indicator_domination(epsilon)

    def run(npp):
        edges, w_min = _ball_panels(epsilon, t)
        nodes, wts = _gl_on_panels(edges, npp)
        g = ev.values(theta, nodes)
        B, X = _ball_factors(nodes, epsilon, t)
        sharp_main = float(wts @ (g * B / X)) * (math.e ** 2 / (8.0 * math.pi ** 2))
        bound_main = float(wts @ (g * B)) * (math.e ** 2 / (4.0 * math.pi ** 2 * t))
        # w < w_min sliver by the exact small-time Green mass
        c_small = ev.small_time_mass(theta, w_min)
        B0, X0 = _ball_factors(0.0, epsilon, t)
        sharp_tail = (math.e ** 2 / (8.0 * math.pi ** 2)) * (B0 / X0) * c_small
        bound_tail = (math.e ** 2 / (4.0 * math.pi ** 2 * t)) * B0 * c_small
        return sharp_main + sharp_tail, bound_main + bound_tail

    s1, b1 = run(n_per_panel)
    s2, b2 = run(int(1.7 * n_per_panel))
    if s2 > b2 * (1.0 + 1e-9):
        raise AccuracyError("sharp reduced integral exceeded its separable bound")
    return BallSecondMoment(s2, b2, abs(s2 - s1), abs(b2 - b1), epsilon, t, theta)


def _inner_partial_fraction(u0, u1, w, epsilon, t):
    """int_{u0}^{u1} du / ((u + a)(c - u)) with a = eps^2, c = t - w + eps^2."""
    a = epsilon ** 2
    c = t - w + a
    val = (np.log((u1 + a) / (u0 + a)) + np.log((c - u0) / (c - u1))) / (c + a)
    return val


def second_moment_bound_region(
    region: str,
    epsilon: float,
    t: float,
    theta: float = 0.0,
    evaluator: GreenEvaluator | None = None,
    n_per_panel: int = 16,
) -> float:
    """The bound integrand restricted to one of the decomposition regions.

    region: "full"    {0 < u < v < t}
            "early"   {0 < u < v < 2t/3}
            "late"    {t/3 < u < v < t}
            "split"   {0 < u < t/3} x {2t/3 < v < t}
            "overlap" {t/3 < u < v < 2t/3}

    All values carry the e^2/(4 pi^2 t) prefactor of the separable bound so
    they can be compared and summed directly.
    """
    ev = evaluator if evaluator is not None else GreenEvaluator()
    epsilon = float(epsilon)
    t = float(t)
    pref = math.e ** 2 / (4.0 * math.pi ** 2 * t)

    def triangle(lo, hi):
        # w = v - u on (w_min, span): G is singular at 0 and, when hi = t,
        # the inner u-slice peaks on scale eps^2 as w -> span.
        span = hi - lo
        w_min = max(epsilon ** 4, 1e-300)
        end_scale = min(epsilon ** 2 / 4.0, span / 16.0)
        edges = _two_end_graded(span, w_min, end_scale)
        nodes, wts = _gl_on_panels(edges, n_per_panel)
        g = ev.values(theta, nodes)
        inner = _inner_partial_fraction(lo, hi - nodes, nodes, epsilon, t)
        main = float(wts @ (g * inner))
        c_small = ev.small_time_mass(theta, w_min)
        inner0 = _inner_partial_fraction(lo, hi, 0.0, epsilon, t)
        return main + inner0 * c_small

    if region == "full":
        return pref * triangle(0.0, t)
    if region == "early":
        return pref * triangle(0.0, 2.0 * t / 3.0)
    if region == "late":
        return pref * triangle(t / 3.0, t)
    if region == "overlap":
        return pref * triangle(t / 3.0, 2.0 * t / 3.0)
    if region == "split":
        # w = v - u ranges over (t/3, t); no G singularity, but both inner
        # endpoints switch branch at w = 2t/3 (a derivative kink, so it gets
        # its own panel edge) and the integrand steepens on scale eps^2
        # near w = t.
        kink = 2.0 * t / 3.0
        end_scale = min(epsilon ** 2 / 4.0, t / 16.0)
        right = [t]
        d = (t - kink) / 4.0
        while d > end_scale:
            right.append(t - d)
            d /= 4.0
        right.append(t - d)
        edges = np.unique(np.concatenate([
            np.linspace(t / 3.0, kink, 6),
            np.linspace(kink, min(right), 4),
            np.asarray(right),
        ]))
        nodes, wts = _gl_on_panels(edges, n_per_panel)
        g = ev.values(theta, nodes)
        u_lo = np.maximum(0.0, 2.0 * t / 3.0 - nodes)
        u_hi = np.minimum(t / 3.0, t - nodes)
        ok = u_hi > u_lo
        inner = np.zeros_like(nodes)
        inner[ok] = _inner_partial_fraction(u_lo[ok], u_hi[ok], nodes[ok], epsilon, t)
        return pref * float(wts @ (g * inner))
    raise DomainError(f"unknown region {region!r}")


# ----------------------------------------------------------------------
# epsilon scan
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScanRow:
    epsilon: float
    sharp: float
    bound: float
    normalized_sharp: float
    normalized_bound: float
    sharp_error: float
    bound_error: float


@dataclass(frozen=True)
class ScanResult:
    rows: list[ScanRow]
    t: float
    theta: float
    factor: float
    ratio_sharp: float
    ratio_bound: float

    @property
    def ratio_ok(self) -> bool:
        return self.ratio_sharp < self.factor

    @property
    def ordered_ok(self) -> bool:
        return all(r.sharp <= r.bound * (1.0 + 1e-9) for r in self.rows)


def log_divergence_scan(
    epsilons,
    t: float,
    theta: float = 0.0,
    evaluator: GreenEvaluator | None = None,
    factor: float = 5.0,
) -> ScanResult:
    """Scan the reduced second moment over epsilon and normalize by log^2(1/eps).

    The normalized sharp values should stay within a bounded ratio (default
    factor 5) across the scanned decades, reflecting the (log 1/eps)^2
    divergence rate of the small-ball second moment.
    """
    ev = evaluator if evaluator is not None else GreenEvaluator()
    rows = []
    for eps in epsilons:
        eps = float(eps)
        if not 0.0 < eps < 1.0:
            raise DomainError("scan requires epsilons in (0, 1)")
        bm = ball_second_moment_reduced(eps, t, theta, ev)
        L2 = math.log(1.0 / eps) ** 2
        rows.append(
            ScanRow(eps, bm.sharp, bm.bound, bm.sharp / L2, bm.bound / L2,
                    bm.sharp_error, bm.bound_error)
        )
    ns = [r.normalized_sharp for r in rows]
    nb = [r.normalized_bound for r in rows]
    return ScanResult(rows, float(t), float(theta), float(factor),
                      max(ns) / min(ns), max(nb) / min(nb))
