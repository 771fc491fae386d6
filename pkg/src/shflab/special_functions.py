"""Special functions for the 2d stochastic heat equation at critical coupling.

This module provides the three analytic building blocks everything else
consumes:

* the 2d heat kernel p_t(x) = exp(-|x|^2/(2t)) / (2 pi t) and the product
  identity p_t(x, y) p_t(x', y) = p_{2t}(x, x') p_{t/2}((x+x')/2, y),
* the Dickman-subordinator density f_s(t) (the transition density of the
  subordinator with Levy measure dx/x on (0, 1)), tabulated on an (s, t)
  grid by causal panel marching,
* the exponentially weighted Green function
  G_theta(t) = int_0^inf exp(theta s) f_s(t) ds and its spatial version
  G_theta(t, x) = G_theta(t) p_{2t}(x).

Closed forms: for 0 < t <= 1, f_s(t) = s t^(s-1) exp(-gamma s)/Gamma(s+1).
For t > 1 the density satisfies

    f_s(t) = s t^(s-1) exp(-gamma s)/Gamma(s+1)
             - s t^(s-1) int_0^(t-1) f_s(a) (1+a)^(-s) da,

a delayed recursion whose right side only references values at times
<= t - 1, so it can be marched panel by panel.  On (1, 2] the delayed
integral involves the closed form only and collapses to the series

    int_0^tau a^(s-1)(1+a)^(-s) da = sum_{k>=0} x^(s+k)/(s+k),
    x = tau/(1+tau),

which this module uses as an exact (to machine precision) evaluation, so
marched tables are only ever consulted for t > 2.
"""

from __future__ import annotations

import heapq
import math
import threading

import numpy as np
from scipy.integrate import simpson
from scipy.special import digamma, gammaln, roots_jacobi

from .errors import AccuracyError, DomainError

__all__ = [
    "EULER_GAMMA",
    "heat_kernel",
    "gaussian_product_split",
    "dickman_density",
    "dickman_tail_bound",
    "DickmanGrid",
    "GreenEvaluator",
    "green_function",
    "green_kernel",
]

EULER_GAMMA = float(np.euler_gamma)

_SERIES_TOL = 1e-17
_SERIES_KMAX = 800


# ----------------------------------------------------------------------
# heat kernel
# ----------------------------------------------------------------------

def heat_kernel(t, x, y=None):
    """2d heat kernel p_t(y - x); with y omitted, p_t(x).

    x, y are points or arrays of points with the coordinate pair on the
    last axis.  t broadcasts against the leading axes.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise DomainError(f"heat_kernel requires t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    if y is not None:
        x = np.asarray(y, dtype=float) - x
    if x.shape[-1] != 2:
        raise DomainError("heat_kernel expects 2d points on the last axis")
    sq = np.sum(x * x, axis=-1)
    return np.exp(-sq / (2.0 * t)) / (2.0 * math.pi * t)


def gaussian_product_split(t, x, xp):
    """Split the product p_t(x, y) p_t(x', y) over the shared endpoint y.

    Returns (prefactor, t_half, midpoint) with

        p_t(x, y) p_t(x', y) = prefactor * p_{t_half}(midpoint, y),

    where prefactor = p_{2t}(x, x'), t_half = t/2 and
    midpoint = (x + x')/2.  The identity removes the y-coupling from
    second-moment integrands.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    pref = heat_kernel(2.0 * t, x, xp)
    return pref, 0.5 * t, 0.5 * (x + xp)


# ----------------------------------------------------------------------
# Dickman density: closed forms and the exact (1, 2] panel
# ----------------------------------------------------------------------

def _amp0(s):
    """exp(-gamma s)/Gamma(s+1); the closed form is f_s(t) = s*amp0*t^(s-1)."""
    s = np.asarray(s, dtype=float)
    return np.exp(-EULER_GAMMA * s - gammaln(s + 1.0))


def _s_psi_series(s, tau):
    """s * Psi(tau) with Psi(tau) = int_0^tau a^(s-1)(1+a)^(-s) da.

    Series in x = tau/(1+tau): s*Psi = x^s + sum_{k>=1} s x^(s+k)/(s+k).
    Written so the k = 0 term never divides by s.  Broadcasts s against tau.
    """
    s = np.asarray(s, dtype=float)
    tau = np.asarray(tau, dtype=float)
    x = tau / (1.0 + tau)
    t0 = np.where(x > 0.0, np.exp(np.multiply(s, np.log(np.where(x > 0, x, 1.0)))), 0.0)
    t0 = np.broadcast_to(t0, np.broadcast_shapes(s.shape, tau.shape)).copy()
    acc = t0.copy()
    xk = np.ones_like(x)
    for k in range(1, _SERIES_KMAX):
        xk = xk * x
        term = t0 * (s * xk / (s + k))
        acc += term
        if np.max(np.abs(term)) < _SERIES_TOL:
            break
    else:
        raise AccuracyError("s*Psi series did not converge; tau too close to its radius")
    return acc


def _density_le2(s, t):
    """f_s(t) for 0 < t <= 2, exact in both arguments (series on (1, 2])."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    s_b, t_b = np.broadcast_arrays(s, t)
    out = np.zeros(s_b.shape, dtype=float)
    pos = s_b > 0.0
    if not np.any(pos):
        return out
    sv = s_b[pos]
    tv = t_b[pos]
    lead = sv * _amp0(sv) * np.exp((sv - 1.0) * np.log(tv))
    corr = np.ones_like(lead)
    late = tv > 1.0
    if np.any(late):
        corr[late] = 1.0 - _s_psi_series(sv[late], tv[late] - 1.0)
    out[pos] = lead * corr
    return out


def dickman_tail_bound(s, T):
    """Certified upper bound for int_T^inf f_s via the Laplace exponent.

    The subordinator has E[exp(lam Y_s)] = exp(s m(lam)) with
    m(lam) = sum_{k>=1} lam^k / (k k!), so P(Y_s > T) <= exp(-lam T + s m(lam))
    for every lam > 0.  The bound is minimized over lam by bisection on the
    stationarity condition s (exp(lam)-1)/lam = T.
    """
    s = float(s)
    T = float(T)
    if s < 0.0 or T <= 0.0:
        raise DomainError("dickman_tail_bound requires s >= 0 and T > 0")
    if s == 0.0:
        return 0.0

    def m(lam):
        total = 0.0
        term = 1.0
        for k in range(1, 400):
            term *= lam / k
            inc = term / k
            total += inc
            if term < 1e-18 * (1.0 + total) and k > lam:
                break
        return total

    def slope(lam):
        # d/dlam of (-lam T + s m(lam)) = -T + s (exp(lam)-1)/lam
        return -T + s * math.expm1(lam) / lam

    lo, hi = 1e-9, 1.0
    while slope(hi) < 0.0 and hi < 700.0:
        hi *= 2.0
    hi = min(hi, 700.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if slope(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    return min(1.0, math.exp(-lam * T + s * m(lam)))


class DickmanGrid:
    """Tabulated Dickman densities f_s(t) on a tensor (s, t) grid.

    The t axis is uniform with step 1/n_per_unit up to t_max.  Values for
    t <= 2 come from exact formulas; values for t > 2 are marched through
    the delayed recursion, each panel only referencing times <= t - 1.
    The delayed integral H(tau) = int_0^tau f_s(a)(1+a)^(-s) da is exact
    (series) on (0, 1], Gauss-Jacobi with the (a-1)^s endpoint weight on
    (1, 2], and accumulated with a 4th-order backward rule beyond.
    """

    def __init__(self, s_values, t_max=12.0, n_per_unit=256, abs_tol=1e-8, n_jacobi=24):
        s_values = np.asarray(s_values, dtype=float)
        if s_values.ndim != 1 or len(s_values) < 4:
            raise DomainError("s_values must be a 1d grid with at least 4 nodes")
        if np.any(np.diff(s_values) <= 0.0) or s_values[0] < 0.0:
            raise DomainError("s_values must be strictly increasing and nonnegative")
        if t_max < 2.0:
            raise DomainError("t_max must be >= 2 (shorter horizons need no table)")
        self.s_values = s_values
        self.n_per_unit = int(n_per_unit)
        self.abs_tol = float(abs_tol)
        h = 1.0 / self.n_per_unit
        nt = int(round(t_max * self.n_per_unit))
        self.t_max = nt * h
        self.h = h
        self.t_nodes = h * np.arange(1, nt + 1)
        self._build(n_jacobi)

    # -- construction ---------------------------------------------------

    def _build(self, n_jacobi):
        s = self.s_values
        ns = len(s)
        nt = len(self.t_nodes)
        nu = self.n_per_unit
        h = self.h
        tn = self.t_nodes
        i1, i2 = nu, 2 * nu

        col_s = s[:, None]
        amp0 = _amp0(s)[:, None]
        phi = s[:, None] * amp0

        F = np.zeros((ns, nt))
        H = np.zeros((ns, nt))

        pos = s > 0.0
        # t in (0, 1]: closed form; H from the exact series.
        T1 = tn[:i1]
        F[pos, :i1] = (phi * np.exp((col_s - 1.0) * np.log(T1)))[pos]
        spsi1 = np.zeros((ns, i1))
        spsi1[pos] = _s_psi_series(s[pos, None], T1)
        H[:, :i1] = amp0 * spsi1

        # t in (1, 2]: series panel for f; Gauss-Jacobi for H.
        T2 = tn[i1:i2]
        sps2 = np.zeros((ns, i2 - i1))
        sps2[pos] = _s_psi_series(s[pos, None], T2 - 1.0)
        F[pos, i1:i2] = (phi * np.exp((col_s - 1.0) * np.log(T2)) * (1.0 - sps2))[pos]
        H[:, i1:i2] = H[:, i1 - 1][:, None] + self._h2_panel(T2, n_jacobi)

        if nt > i2:
            self._march(F, H, i2)
        if np.min(F) < -self.abs_tol:
            raise AccuracyError(
                f"marched Dickman table went negative below -abs_tol (min {np.min(F):.3e})"
            )
        np.maximum(F, 0.0, out=F)
        self.table = F
        self._H = H

    def _h2_panel(self, taus, n_jacobi):
        """H(tau) - H(1) for tau in (1, 2], all s rows at once.

        Uses H2(tau) = amp0 [sPsi(tau) - sPsi(1)]
                       - Phi_s int_1^tau (a-1)^s Stilde(a) / (a (1+a)^s) da
        with Stilde(a) = sum_k s ((a-1)/a)^k / (s+k) resolved by series and
        the endpoint weight (a-1)^s handled by Gauss-Jacobi nodes.
        """
        s = self.s_values
        ns = len(s)
        out = np.zeros((ns, len(taus)))
        pos_idx = np.nonzero(s > 0.0)[0]
        for i in pos_idx:
            si = s[i]
            a0 = float(_amp0(si))
            phi_s = si * a0
            smooth = a0 * (_s_psi_series(si, taus) - _s_psi_series(si, 1.0))
            xi, wgt = roots_jacobi(n_jacobi, 0.0, si)
            # a has shape (ntau, ngj); the (a-1)^s factor is absorbed by the rule
            a = 1.0 + 0.5 * (taus[:, None] - 1.0) * (1.0 + xi[None, :])
            y = (a - 1.0) / a
            stil = np.ones_like(a)
            yk = np.ones_like(a)
            for k in range(1, _SERIES_KMAX):
                yk = yk * y
                term = si * yk / (si + k)
                stil += term
                if np.max(term) < _SERIES_TOL:
                    break
            integ = (0.5 * (taus - 1.0)) ** (si + 1.0) * np.sum(
                wgt[None, :] * stil / (a * (1.0 + a) ** si), axis=1
            )
            out[i] = smooth - phi_s * integ
        return out

    def _march(self, F, H, i2):
        """March t > 2 nodes; strictly causal in the delayed argument."""
        s = self.s_values
        nu = self.n_per_unit
        h = self.h
        tn = self.t_nodes
        amp0 = _amp0(s)
        phi = s * amp0
        wm = np.power.outer(1.0 + tn, -s).T  # (ns, nt) weights (1+t)^(-s)
        G = F * wm
        nt = F.shape[1]
        c = h / 24.0
        for p in range(i2, nt):
            ts1 = np.exp((s - 1.0) * math.log(tn[p]))
            F[:, p] = ts1 * (phi - s * H[:, p - nu])
            G[:, p] = F[:, p] * wm[:, p]
            H[:, p] = H[:, p - 1] + c * (
                9.0 * G[:, p] + 19.0 * G[:, p - 1] - 5.0 * G[:, p - 2] + G[:, p - 3]
            )
        self._G = G

    # -- queries ---------------------------------------------------------

    def _require_coverage(self, s, t):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr > self.t_max + 1e-12):
            raise DomainError(f"t beyond tabulated horizon t_max={self.t_max}")
        if np.any((s_arr < self.s_values[0] - 1e-12) | (s_arr > self.s_values[-1] + 1e-12)):
            raise DomainError(
                f"s outside tabulated range [{self.s_values[0]}, {self.s_values[-1]}]"
            )

    def _t_interp_row(self, t):
        """Cubic interpolation in t of all s rows at one t > 2. Returns (ns,)."""
        h = self.h
        tn = self.t_nodes
        # index of the node at or below t, clamped so 4 nodes fit
        j = int(np.clip(math.floor(t / h) - 1, 1, len(tn) - 3))
        idx = np.arange(j - 1, j + 3)
        tj = tn[idx]
        w = np.ones(4)
        for a in range(4):
            for b in range(4):
                if a != b:
                    w[a] *= (t - tj[b]) / (tj[a] - tj[b])
        return self.table[:, idx] @ w

    def density_s_profile(self, t, s_query):
        """f_s(t) for a vector of s values at one fixed t (used by quadrature)."""
        t = float(t)
        s_query = np.asarray(s_query, dtype=float)
        if t <= 0.0:
            raise DomainError("t must be positive")
        if t <= 2.0:
            return _density_le2(s_query, t)
        self._require_coverage(s_query, t)
        row = self._t_interp_row(t)
        from scipy.interpolate import CubicSpline

        spline = CubicSpline(self.s_values, row)
        out = spline(np.clip(s_query, self.s_values[0], self.s_values[-1]))
        return np.maximum(out, 0.0)

    def density(self, s, t):
        """f_s(t) for scalar s, scalar or vector t."""
        s = float(s)
        if s < 0.0:
            raise DomainError("s must be >= 0")
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr <= 0.0):
            raise DomainError("t must be positive")
        out = np.empty_like(t_arr)
        near = t_arr <= 2.0
        if np.any(near):
            out[near] = _density_le2(s, t_arr[near])
        far = ~near
        if np.any(far):
            self._require_coverage(s, t_arr[far])
            for i in np.nonzero(far)[0]:
                row = self._t_interp_row(t_arr[i])
                from scipy.interpolate import CubicSpline

                out[i] = max(float(CubicSpline(self.s_values, row)(s)), 0.0)
        return out if np.ndim(t) else float(out[0])

    def normalization(self, s):
        """(int_0^t_max f_s dt plus nothing, certified tail bound beyond t_max).

        The analytic pieces on (0, 2] are exact; (2, t_max] is Simpson on the
        table; the returned tail bound is the Laplace-exponent certificate.
        """
        s = float(s)
        if s <= 0.0:
            raise DomainError("normalization needs s > 0")
        a0 = float(_amp0(s))
        part1 = a0  # int_0^1 s a0 t^(s-1) dt
        # int_1^2 f = Phi_s (2^s - 1)/s - Phi_s * int_1^2 (a-1)^s Stilde(a)/a da
        phi_s = s * a0
        xi, wgt = roots_jacobi(32, 0.0, s)
        a = 1.0 + 0.5 * (1.0 + xi)
        y = (a - 1.0) / a
        stil = np.ones_like(a)
        yk = np.ones_like(a)
        for k in range(1, _SERIES_KMAX):
            yk = yk * y
            term = s * yk / (s + k)
            stil += term
            if np.max(term) < _SERIES_TOL:
                break
        part2 = a0 * (2.0 ** s - 1.0) - phi_s * 0.5 ** (s + 1.0) * float(wgt @ (stil / a))
        i2 = 2 * self.n_per_unit
        if s in self.s_values:
            row = self.table[int(np.searchsorted(self.s_values, s))]
        else:
            self._require_coverage(s, 2.0)
            from scipy.interpolate import CubicSpline

            row = np.array([
                float(CubicSpline(self.s_values, self.table[:, j])(s))
                for j in range(i2 - 1, self.table.shape[1])
            ])
            part3 = float(simpson(row, dx=self.h))
            return part1 + part2 + part3, dickman_tail_bound(s, self.t_max)
        part3 = float(simpson(row[i2 - 1:], dx=self.h))
        return part1 + part2 + part3, dickman_tail_bound(s, self.t_max)


def dickman_density(s, t, grid: DickmanGrid | None = None):
    """Dickman-subordinator density f_s(t).

    Exact for t <= 2 (any s >= 0); for t > 2 a DickmanGrid covering (s, t)
    must be supplied and values are cubically interpolated from its table.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0):
        raise DomainError("s must be >= 0")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0.0):
        raise DomainError("t must be positive")
    if np.all(t_arr <= 2.0):
        out = _density_le2(s_arr, t_arr)
        return out if out.ndim else float(out)
    if grid is None:
        raise DomainError("t > 2 requires a DickmanGrid")
    if np.ndim(s) == 0:
        return grid.density(float(s), t)
    raise DomainError("vector s with t > 2: use grid.density_s_profile per t")


# ----------------------------------------------------------------------
# adaptive vectorized quadrature (shared by the Green evaluator)
# ----------------------------------------------------------------------

_GL_LO = np.polynomial.legendre.leggauss(10)
_GL_HI = np.polynomial.legendre.leggauss(21)


def _panel_values(fun, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    xs_lo = mid + half * _GL_LO[0]
    xs_hi = mid + half * _GL_HI[0]
    v_lo = half * float(_GL_LO[1] @ fun(xs_lo))
    v_hi = half * float(_GL_HI[1] @ fun(xs_hi))
    return v_hi, abs(v_hi - v_lo)


def adaptive_quadrature(fun, a, b, abs_tol, rel_tol=0.0, max_panels=4000, initial=8):
    """Adaptive Gauss-Legendre pair on [a, b] for a vectorized integrand.

    Splits the worst panel until the summed error estimate is below
    max(abs_tol, rel_tol * |integral|).  Returns (value, error_estimate,
    panel_count).  Panel sums are combined with math.fsum so accumulation
    error stays at the last bit.
    """
    if not b > a:
        raise DomainError("adaptive_quadrature requires b > a")
    edges = np.linspace(a, b, initial + 1)
    heap = []
    for i in range(initial):
        v, e = _panel_values(fun, edges[i], edges[i + 1])
        heap.append((-e, edges[i], edges[i + 1], v, e))
    heapq.heapify(heap)
    n = initial
    while n < max_panels:
        total_err = math.fsum(item[4] for item in heap)
        total_val = math.fsum(item[3] for item in heap)
        if total_err <= max(abs_tol, rel_tol * abs(total_val)):
            break
        _, pa, pb, _, _ = heapq.heappop(heap)
        pm = 0.5 * (pa + pb)
        for qa, qb in ((pa, pm), (pm, pb)):
            v, e = _panel_values(fun, qa, qb)
            heapq.heappush(heap, (-e, qa, qb, v, e))
        n += 1
    else:
        raise AccuracyError(
            f"adaptive quadrature used {max_panels} panels without reaching {abs_tol:g}"
        )
    value = math.fsum(item[3] for item in heap)
    err = math.fsum(item[4] for item in heap)
    return value, err, n


# ----------------------------------------------------------------------
# weighted Green function
# ----------------------------------------------------------------------

class GreenEvaluator:
    """Evaluator for G_theta(t) = int_0^inf exp(theta s) f_s(t) ds.

    The s-integral is truncated at a certified point: the integrand is
    dominated by the log-concave majorant
    M(s) = s t^(s-1) exp((theta-gamma) s)/Gamma(s+1), whose tail beyond S
    is at most M(S)/lambda(S) once the local log-slope lambda(S) is
    positive.  S is found by doubling.  Results are memoized; the cache is
    guarded by a lock so the evaluator can be shared across worker threads.
    """

    def __init__(self, grid: DickmanGrid | None = None, abs_tol=1e-9, s_start=8.0):
        self.grid = grid
        self.abs_tol = float(abs_tol)
        self.s_start = float(s_start)
        self._cache: dict[tuple[float, float], float] = {}
        self._lock = threading.Lock()

    def _ensure_grid(self) -> DickmanGrid:
        # lazily build a default table the first time some t > 2 is requested
        with self._lock:
            if self.grid is None:
                self.grid = DickmanGrid(np.arange(0.0, 60.0001, 0.125))
            return self.grid

    # majorant log-slope: -d/ds log M(s)
    @staticmethod
    def _log_slope(s, theta, t):
        return digamma(s + 1.0) - (theta - EULER_GAMMA) - math.log(t) - 1.0 / s

    @staticmethod
    def _majorant(s, theta, t):
        return math.exp(
            math.log(s) + (s - 1.0) * math.log(t) + (theta - EULER_GAMMA) * s
            - float(gammaln(s + 1.0))
        )

    def _truncation_point(self, theta, t):
        tol = 0.5 * self.abs_tol
        S = self.s_start
        cap = 1e6 if t <= 2.0 else float(self._ensure_grid().s_values[-1])
        while True:
            lam = self._log_slope(S, theta, t)
            if lam > 0.0 and self._majorant(S, theta, t) / lam <= tol:
                return S, self._majorant(S, theta, t) / lam
            if S >= cap:
                if t > 2.0:
                    raise AccuracyError(
                        "Green truncation needs s beyond the grid coverage "
                        f"(need > {S:g}); rebuild the DickmanGrid with larger s range"
                    )
                raise AccuracyError("Green truncation search failed to terminate")
            S = min(2.0 * S, cap)

    def _integrand_factory(self, theta, t):
        if t <= 2.0:
            def fun(s):
                return np.exp(theta * s) * _density_le2(s, t)
            return fun
        grid = self._ensure_grid()
        if t > grid.t_max + 1e-12:
            raise DomainError(
                f"Green function at t={t:g} is beyond the tabulated horizon "
                f"t_max={grid.t_max:g}; build a DickmanGrid with a larger t_max"
            )
        row = grid._t_interp_row(t)
        from scipy.interpolate import CubicSpline

        spline = CubicSpline(grid.s_values, row)

        def fun(s):
            return np.exp(theta * s) * np.maximum(spline(s), 0.0)

        return fun

    def value(self, theta, t):
        """G_theta(t); nonnegative, nondecreasing in theta, memoized."""
        theta = float(theta)
        t = float(t)
        if t <= 0.0:
            raise DomainError("Green function requires t > 0")
        key = (theta, t)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        if t > 2.0:
            grid = self._ensure_grid()
            if t > grid.t_max + 1e-12:
                raise DomainError(
                    f"Green function at t={t:g} is beyond the tabulated horizon "
                    f"t_max={grid.t_max:g}; build a DickmanGrid with a larger t_max"
                )
        S, tail = self._truncation_point(theta, t)
        fun = self._integrand_factory(theta, t)
        val, err, _ = adaptive_quadrature(
            fun, 0.0, S, 0.5 * self.abs_tol, rel_tol=0.5 * self.abs_tol
        )
        if err + tail > 50.0 * self.abs_tol * max(1.0, abs(val)):
            raise AccuracyError(
                f"Green quadrature error {err + tail:.3e} above tolerance at (theta={theta}, t={t})"
            )
        val = max(val, 0.0)
        with self._lock:
            self._cache[key] = val
        return val

    def values(self, theta, ts):
        return np.array([self.value(theta, t) for t in np.atleast_1d(ts)])

    def kernel(self, theta, t, x):
        """Spatial Green kernel G_theta(t, x) = G_theta(t) p_{2t}(x)."""
        return self.value(theta, t) * heat_kernel(2.0 * t, x)

    def small_time_mass(self, theta, delta):
        """Exact identity for int_0^delta G_theta(w) dw, delta <= 1.

        Fubini against the closed form gives
        int_0^delta G = int_0^inf exp((theta-gamma) s) delta^s / Gamma(s+1) ds,
        which is smooth and superexponentially decaying in s.
        """
        theta = float(theta)
        delta = float(delta)
        if not 0.0 < delta <= 1.0:
            raise DomainError("small_time_mass requires 0 < delta <= 1")
        c = theta - EULER_GAMMA + math.log(delta)

        def fun(s):
            return np.exp(c * s - gammaln(s + 1.0))

        # the integrand is its own log-concave majorant (it has f <= M form)
        S = 8.0
        while True:
            lam = digamma(S + 1.0) - c
            m = math.exp(c * S - float(gammaln(S + 1.0)))
            if lam > 0.0 and m / lam <= 0.5 * self.abs_tol:
                break
            S *= 2.0
            if S > 1e6:
                raise AccuracyError("small_time_mass truncation failed")
        val, _, _ = adaptive_quadrature(
            fun, 0.0, S, 0.5 * self.abs_tol, rel_tol=0.5 * self.abs_tol
        )
        return max(val, 0.0)


_DEFAULT_EVALUATOR = GreenEvaluator()


def green_function(theta, t, evaluator: GreenEvaluator | None = None):
    """Module-level convenience wrapper around GreenEvaluator.value."""
    ev = evaluator if evaluator is not None else _DEFAULT_EVALUATOR
    return ev.value(theta, t)


def green_kernel(theta, t, x, evaluator: GreenEvaluator | None = None):
    """G_theta(t, x) = G_theta(t) p_{2t}(x)."""
    ev = evaluator if evaluator is not None else _DEFAULT_EVALUATOR
    return ev.kernel(theta, t, x)
