"""Feynman-Kac Monte Carlo for the mollified multiplicative-noise heat flow.

A path ensemble estimates restricted partition functions

    Z(region) = integral over the start disc of
                E_x[ exp( beta sum_k W_k(omega at slab midpoint k)
                          - beta^2 dt/2 sum_k J_eff(omega at midpoint k) )
                     * 1{omega stays in the region} ] dx,

with one noise value per time slab, evaluated at the path position at
the slab midpoint.  J_eff is the exact discrete variance rate of the
interpolated field, so the exponential weight is mean-one conditional
on the path -- the discrete model is a martingale by construction, not
approximately.

Weights are combined in log space with max subtraction.  Paths are
never clamped: a position landing outside the noise grid while still
contributing aborts, and more than 0.1% aborts fails the run.

simulate_drifted_mass evaluates the noise along the drift-transformed
trajectory h_n(s, omega_s) = omega_s + (axial offset, 0) while confining
the untransformed path to the centered cone, and separately accumulates
the per-path Girsanov factor, giving both sides of the change-of-measure
identity from one ensemble.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import AccuracyError, ConfigError, DomainError, GeometryError
from .noise_field import GridSpec, MollifierSpec, coupling_beta, sample_slabs
from .rng import derive_seed, substream
from .tube_geometry import (TubeFamily, center, girsanov_log_weight,
                            pair_margin, radius)

__all__ = [
    "RegionSpec",
    "DriftSchedule",
    "MassEstimate",
    "DriftedMassEstimate",
    "TailEstimate",
    "IndependenceResult",
    "simulate_mass",
    "simulate_drifted_mass",
    "tail_estimate",
    "independence_check",
    "frozen_path_noise_mean",
]


class RegionSpec:
    """Start law and path constraint for one restricted mass estimate.

    kinds:
      full          -- start uniform on B_{r_start}(start_center), no constraint
      ball_to_ball  -- additionally the endpoint must land in B_{r_end}(end_center)
      tube          -- start on the base disc of tube (n, j); the path must sit
                       inside the tube at every slab midpoint
      cone          -- same with the centered cone (drift removed)
    """

    def __init__(self, kind: str, r_start: float | None = None,
                 r_end: float | None = None, end_center=(0.0, 0.0),
                 start_center=(0.0, 0.0), family: TubeFamily | None = None,
                 n: int | None = None, j: int | None = None):
        if kind not in ("full", "ball_to_ball", "tube", "cone"):
            raise ConfigError(f"unknown region kind {kind!r}")
        self.kind = kind
        self.family = family
        self.n = n
        self.j = j
        if kind in ("full", "ball_to_ball"):
            if r_start is None or r_start <= 0.0:
                raise ConfigError("region needs a positive start radius")
            self.r_start = float(r_start)
            self.start_center = np.asarray(start_center, dtype=float)
            if kind == "ball_to_ball":
                if r_end is None or r_end <= 0.0:
                    raise ConfigError("ball_to_ball needs a positive end radius")
                self.r_end = float(r_end)
                self.end_center = np.asarray(end_center, dtype=float)
        else:
            if family is None or n is None:
                raise ConfigError(f"{kind} region needs a tube family and index n")
            if kind == "tube":
                if j is None:
                    raise ConfigError("tube region needs a rotation index j")
                family._check_indices(n, j)
                self.start_center = center(family, n, j, 0.0)[0]
            else:
                if n not in family.n_range:
                    raise DomainError(f"tube index n={n} outside {family.n_range}")
                self.start_center = np.zeros(2)
            self.r_start = family.base_radius

    @property
    def start_area(self) -> float:
        return math.pi * self.r_start ** 2

    def descriptor(self) -> dict:
        d = {"kind": self.kind, "r_start": self.r_start,
             "start_center": list(map(float, self.start_center))}
        if self.kind == "ball_to_ball":
            d["r_end"] = self.r_end
            d["end_center"] = list(map(float, self.end_center))
        if self.family is not None:
            f = self.family
            d["family"] = {"N": f.N, "alpha": f.alpha, "r": f.r, "t": f.t,
                           "a": list(f.a), "C_drift": f.C_drift}
            d["n"] = self.n
            if self.j is not None:
                d["j"] = self.j
        return d


class DriftSchedule:
    """Tube-center offset added to noise positions, plus its Girsanov factor.

    Paths stay in the centered cone; the noise is evaluated along the
    transformed trajectory path + center(family, n, j, s), i.e. inside
    tube (n, j).  The change-of-measure weight uses the path increments
    projected on the tube's rotated axis.
    """

    def __init__(self, family: TubeFamily | None = None, n: int | None = None,
                 j: int = 0):
        self.family = family
        self.n = n
        self.j = j
        if family is not None:
            if n not in family.n_range:
                raise DomainError(f"tube index n={n} outside {family.n_range}")
            if j not in family.j_range:
                raise DomainError(f"rotation index j={j} outside {family.j_range}")

    @classmethod
    def zero(cls) -> "DriftSchedule":
        return cls()

    @classmethod
    def from_tube(cls, family: TubeFamily, n: int, j: int = 0) -> "DriftSchedule":
        return cls(family, n, j)

    @property
    def is_zero(self) -> bool:
        return self.family is None

    @property
    def boundaries(self) -> list[float]:
        if self.is_zero:
            return []
        f = self.family
        return [f.b_N, f.t / 2.0, f.t - f.b_N]

    def axial_offset(self, s) -> np.ndarray:
        if self.is_zero:
            return np.zeros_like(np.asarray(s, dtype=float))
        return self.family.axial_position(self.n, np.asarray(s, dtype=float))

    def center_at(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.is_zero:
            return np.zeros(s.shape + (2,))
        return center(self.family, self.n, self.j, s)

    def axis(self) -> np.ndarray:
        if self.is_zero:
            return np.array([1.0, 0.0])
        ang = self.family.angle(self.j)
        return np.array([math.cos(ang), math.sin(ang)])

    def max_offset(self) -> float:
        if self.is_zero:
            return 0.0
        return float(self.axial_offset(self.family.t / 2.0))

    def log_weights(self, increments, confined: bool = False) -> np.ndarray:
        if self.is_zero:
            inc = np.asarray(increments, dtype=float)
            return np.zeros(inc.shape[:-1])
        return girsanov_log_weight(self.family, self.n, increments,
                                   confined=confined)

    def tag(self) -> str:
        if self.is_zero:
            return "zero"
        return f"tube:{self.n}:{self.j}"


@dataclass(frozen=True)
class MassEstimate:
    mean: float
    std_error: float
    M: int
    seed: int
    config_digest: str
    aborted: int
    n_noise: int
    log_mean: float      # log of mean; robust when mean under/overflows
    beta: float


@dataclass(frozen=True)
class DriftedMassEstimate:
    plain: MassEstimate      # cone mass with noise along the shifted trajectory
    weighted: MassEstimate   # the same paths additionally carrying E_n


@dataclass(frozen=True)
class TailRow:
    x: float
    count: int
    p_hat: float
    wilson_low: float
    wilson_high: float


@dataclass(frozen=True)
class TailEstimate:
    rows: tuple
    flagged: int          # realizations whose inner relative SE exceeded 10%
    M_outer: int
    M_inner: int
    seed: int
    config_digest: str


@dataclass(frozen=True)
class IndependenceResult:
    correlations: tuple
    max_abs_offdiag: float
    threshold: float      # 3 / sqrt(R)
    ok: bool
    R: int
    M: int
    seed: int
    min_pair_margin: float


def _digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _validate_timeline(t: float, dt: float) -> int:
    if t <= 0.0 or dt <= 0.0:
        raise ConfigError("t and dt must be positive")
    n_steps = int(round(t / dt))
    if n_steps < 1 or abs(n_steps * dt - t) > 1e-9 * max(t, 1.0):
        raise ConfigError(f"dt={dt:g} must divide the horizon t={t:g}")
    return n_steps


def _auto_grid(region: RegionSpec, schedule: DriftSchedule | None,
               epsilon: float, t: float) -> GridSpec:
    """Smallest safe grid: noise is only read at alive (hence contained)
    positions for tube/cone regions, at free paths within 5 sqrt(t) for
    the rest; 2 eps + a few cells of bilinear margin on top."""
    h = epsilon / 4.0
    if region.kind in ("tube", "cone"):
        fam = region.family
        mids = np.linspace(0.0, fam.t, 513)
        rad = radius(fam, region.n, mids)
        if region.kind == "tube":
            cen = center(fam, region.n, region.j, mids)
            reach = float(np.max(np.hypot(cen[:, 0], cen[:, 1]) + rad))
        else:
            if schedule is not None and not schedule.is_zero:
                cen = schedule.center_at(mids)
                reach = float(np.max(np.hypot(cen[:, 0], cen[:, 1]) + rad))
            else:
                reach = float(np.max(rad))
        half = reach + 2.0 * epsilon + 6.0 * h
    else:
        half = float(np.hypot(*region.start_center)) + region.r_start
        if region.kind == "ball_to_ball":
            half = max(half, float(np.hypot(*region.end_center)) + region.r_end)
        half = half + 5.0 * math.sqrt(t) + 2.0 * epsilon + 6.0 * h
    return GridSpec(h, 2.0 * half)


def _block_run(region: RegionSpec, schedule: DriftSchedule | None, beta: float,
               t: float, dt: float, m_paths: int, stack, grid, rng):
    """One common-noise block of the path ensemble.

    Returns (log values including the area factor, alive mask, aborted
    count, log Girsanov weights or None).
    """
    n_steps = int(round(t / dt))
    mids = (np.arange(n_steps) + 0.5) * dt
    events = [(float(s), k, -1) for k, s in enumerate(mids)]
    track_drift = schedule is not None and not schedule.is_zero
    if track_drift:
        for bi, sb in enumerate(schedule.boundaries):
            events.append((float(sb), -1, bi + 1))
    events.append((t, -1, 4 if track_drift else -1))
    events.sort(key=lambda e: e[0])
    merged = []
    for s, k, bidx in events:
        if merged and abs(s - merged[-1][0]) < 1e-15:
            ps, pk, pb = merged[-1]
            merged[-1] = (ps, max(pk, k), max(pb, bidx))
        else:
            merged.append((s, k, bidx))

    ang = rng.uniform(0.0, 2.0 * math.pi, m_paths)
    rad = region.r_start * np.sqrt(rng.uniform(0.0, 1.0, m_paths))
    pos = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
    pos += region.start_center

    if region.kind in ("tube", "cone"):
        fam = region.family
        rad_at = radius(fam, region.n, mids)
        if region.kind == "tube":
            cen_at = center(fam, region.n, region.j, mids)
        else:
            cen_at = np.zeros((n_steps, 2))
    off_at = None
    if track_drift:
        off_at = schedule.center_at(mids)
        axis = schedule.axis()

    alive = np.ones(m_paths, dtype=bool)
    log_w = np.zeros(m_paths)
    recs = np.zeros((m_paths, 5)) if track_drift else None
    if track_drift:
        recs[:, 0] = pos @ axis
    aborted = 0
    s_prev = 0.0
    for s_now, k, bidx in merged:
        std = math.sqrt(s_now - s_prev) if s_now > s_prev else 0.0
        s_prev = s_now
        if std > 0.0:
            pos = pos + std * rng.standard_normal((m_paths, 2))
        if bidx >= 0:
            recs[:, bidx] = pos @ axis
        if k < 0:
            continue
        if region.kind in ("tube", "cone"):
            d = pos - cen_at[k]
            alive &= np.einsum("ij,ij->i", d, d) <= rad_at[k] ** 2
        if beta != 0.0:
            eval_pos = pos if off_at is None else pos + off_at[k]
            in_grid = grid.contains(eval_pos)
            newly_lost = alive & ~in_grid
            aborted += int(np.count_nonzero(newly_lost))
            alive &= in_grid
            idx = np.nonzero(alive)[0]
            if idx.size:
                ep = eval_pos[idx]
                W = stack.field_at(k, ep)
                J = stack.variance_rate(ep)
                log_w[idx] += beta * W - 0.5 * beta * beta * J * dt
    if region.kind == "ball_to_ball":
        d = pos - region.end_center
        alive &= np.einsum("ij,ij->i", d, d) <= region.r_end ** 2
    log_vals = np.where(alive, log_w + math.log(region.start_area), -np.inf)
    log_gir = None
    if track_drift:
        log_gir = np.full(m_paths, -np.inf)
        idx = np.nonzero(alive)[0]
        if idx.size:
            inc = np.diff(recs[idx], axis=1)
            log_gir[idx] = schedule.log_weights(inc)
    return log_vals, alive, aborted, log_gir


def _combine_blocks(block_logs: list[np.ndarray], M: int, n_noise: int):
    """Mean and SE from per-path log values grouped by noise block."""
    if n_noise == 1:
        lv = block_logs[0]
        m = float(np.max(lv))
        if not np.isfinite(m):
            return 0.0, 0.0, -np.inf
        scaled = np.exp(lv - m)
        mean_s = float(np.mean(scaled))
        sd = float(np.std(scaled, ddof=1)) if lv.size > 1 else 0.0
        log_mean = m + math.log(mean_s)
        return math.exp(log_mean) if log_mean < 700 else math.inf, \
            math.exp(m) * sd / math.sqrt(lv.size) if m < 700 else math.inf, \
            log_mean
    log_means = np.array([
        logsumexp(lv) - math.log(lv.size) if np.any(np.isfinite(lv)) else -np.inf
        for lv in block_logs])
    finite = np.isfinite(log_means)
    if not np.any(finite):
        return 0.0, 0.0, -np.inf
    log_mean = float(logsumexp(log_means[finite]) - math.log(n_noise))
    means = np.exp(np.where(finite, log_means, -np.inf))
    se = float(np.std(means, ddof=1) / math.sqrt(n_noise))
    return math.exp(log_mean) if log_mean < 700 else math.inf, se, log_mean


def simulate_mass(region: RegionSpec, theta: float, epsilon: float, t: float,
                  dt: float, M: int, seed: int, *, n_noise: int = 1,
                  beta: float | None = None, rho_offset: float = 0.0,
                  grid: GridSpec | None = None,
                  mollifier: MollifierSpec | None = None,
                  threads: int = 1, _schedule: DriftSchedule | None = None,
                  _stack=None) -> MassEstimate | tuple:
    """Path-ensemble estimate of the restricted mass Z(region).

    M paths are split over n_noise independent noise stacks; the standard
    error is computed across the independent per-stack means (paths under
    one stack share its noise and are not independent samples).
    """
    _validate_timeline(t, dt)
    if M < 1 or n_noise < 1 or M % n_noise != 0:
        raise ConfigError("M must be a positive multiple of n_noise")
    if region.kind in ("tube", "cone") and abs(region.family.t - t) > 1e-12 * t:
        raise ConfigError(
            f"horizon t={t:g} must match the tube family horizon "
            f"{region.family.t:g}"
        )
    if _schedule is not None and not _schedule.is_zero \
            and abs(_schedule.family.t - t) > 1e-12 * t:
        raise ConfigError("drift schedule horizon does not match t")
    m_block = M // n_noise
    if beta is None:
        beta = coupling_beta(theta, epsilon, rho_offset)
    need_noise = beta != 0.0
    if need_noise:
        if mollifier is None:
            mollifier = MollifierSpec(epsilon)
        if grid is None:
            grid = _stack.grid if _stack is not None else \
                _auto_grid(region, _schedule, epsilon, t)

    def run(i):
        if _stack is not None:
            stack = _stack
        elif need_noise:
            stack = sample_slabs(grid, t, dt, mollifier,
                                 derive_seed(seed, "noise-block", i))
        else:
            stack = None
        rng = substream(seed, "paths", i)
        return _block_run(region, _schedule, beta, t, dt, m_block, stack, grid, rng)

    if threads > 1 and n_noise > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, range(n_noise)))
    else:
        results = [run(i) for i in range(n_noise)]

    aborted = sum(r[2] for r in results)
    if aborted > 0.001 * M:
        raise GeometryError(
            f"{aborted} of {M} paths left the noise grid (> 0.1%); "
            f"enlarge the grid extent"
        )
    payload = {"region": region.descriptor(), "theta": theta, "epsilon": epsilon,
               "t": t, "dt": dt, "M": M, "n_noise": n_noise, "beta": beta,
               "rho_offset": rho_offset,
               "schedule": _schedule.tag() if _schedule is not None else "none",
               "grid": [grid.h, grid.L] if grid is not None else None}
    digest = _digest(payload)
    mean, se, log_mean = _combine_blocks([r[0] for r in results], M, n_noise)
    est = MassEstimate(mean, se, M, seed, digest, aborted, n_noise, log_mean, beta)
    if _schedule is None or _schedule.is_zero:
        return est
    with np.errstate(invalid="ignore"):
        weighted_logs = [np.where(np.isfinite(r[0]), r[0] + r[3], -np.inf)
                         for r in results]
    wmean, wse, wlog = _combine_blocks(weighted_logs, M, n_noise)
    west = MassEstimate(wmean, wse, M, seed, digest, aborted, n_noise, wlog, beta)
    return est, west


def simulate_drifted_mass(region: RegionSpec, schedule: DriftSchedule,
                          theta: float, epsilon: float, t: float, dt: float,
                          M: int, seed: int, **kw) -> DriftedMassEstimate:
    """Cone ensemble with noise along the drift-transformed trajectory.

    Returns the plain estimate and the Girsanov-weighted one from the
    same paths and noise.  With the zero schedule this degenerates to
    simulate_mass on the cone, bit for bit (same draws, same arithmetic).
    """
    if region.kind != "cone":
        raise ConfigError("drifted simulation needs a cone region")
    out = simulate_mass(region, theta, epsilon, t, dt, M, seed,
                        _schedule=schedule, **kw)
    if isinstance(out, MassEstimate):
        return DriftedMassEstimate(plain=out, weighted=out)
    return DriftedMassEstimate(plain=out[0], weighted=out[1])


_WILSON_Z = 1.959963984540054


def _wilson(count: int, total: int) -> tuple[float, float, float]:
    p = count / total
    z2 = _WILSON_Z ** 2
    denom = 1.0 + z2 / total
    mid = (p + z2 / (2.0 * total)) / denom
    half = _WILSON_Z * math.sqrt(p * (1.0 - p) / total
                                 + z2 / (4.0 * total * total)) / denom
    # mid - half <= p holds exactly; clamp the float residue at p = 0 or 1
    return p, min(max(mid - half, 0.0), p), max(min(mid + half, 1.0), p)


def tail_estimate(region: RegionSpec, theta: float, epsilon: float, t: float,
                  dt: float, thresholds, M_outer: int, M_inner: int, seed: int,
                  *, grid: GridSpec | None = None, rho_offset: float = 0.0,
                  threads: int = 1) -> TailEstimate:
    """Empirical lower-tail curve of log mass over noise realizations.

    Each realization gets its own stack and M_inner paths; a realization
    whose inner relative standard error exceeds 10% is counted in
    `flagged` (heavy-tailed inner weights are reported, never hidden).
    p_hat(x) = fraction of realizations with log(mass) < -x, with Wilson
    95% interval; nonincreasing in x by construction.
    """
    thresholds = sorted(float(x) for x in thresholds)
    if not thresholds:
        raise ConfigError("tail estimate needs at least one threshold")
    if M_outer < 2:
        raise ConfigError("tail estimate needs at least two realizations")
    mol = MollifierSpec(epsilon)
    if grid is None:
        grid = _auto_grid(region, None, epsilon, t)

    def one(i):
        return simulate_mass(region, theta, epsilon, t, dt, M_inner,
                             derive_seed(seed, "tail-outer", i),
                             n_noise=1, grid=grid, mollifier=mol,
                             rho_offset=rho_offset)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            ests = list(ex.map(one, range(M_outer)))
    else:
        ests = [one(i) for i in range(M_outer)]

    log_masses = np.array([e.log_mean for e in ests])
    flagged = sum(1 for e in ests
                  if not math.isfinite(e.mean) or e.mean <= 0.0
                  or e.std_error > 0.1 * e.mean)
    rows = []
    for x in thresholds:
        count = int(np.count_nonzero(log_masses < -x))
        p, lo, hi = _wilson(count, M_outer)
        rows.append(TailRow(x, count, p, lo, hi))
    payload = {"region": region.descriptor(), "theta": theta, "epsilon": epsilon,
               "t": t, "dt": dt, "M_outer": M_outer, "M_inner": M_inner,
               "thresholds": thresholds, "rho_offset": rho_offset}
    return TailEstimate(tuple(rows), flagged, M_outer, M_inner, seed,
                        _digest(payload))


def independence_check(fam: TubeFamily, tubes, theta: float, epsilon: float,
                       dt: float, M: int, R: int, seed: int, *,
                       grid: GridSpec | None = None, rho_offset: float = 0.0,
                       s_resolution: int = 1000) -> IndependenceResult:
    """Correlation matrix of per-tube masses across shared noise realizations.

    Precondition: every tube pair keeps a certified margin above
    2 eps + 3h (kernel support plus bilinear stencil), which makes the
    noise the tubes read exactly independent; the empirical correlations
    must then vanish within 3/sqrt(R).
    """
    tubes = [tuple(tb) for tb in tubes]
    if len(tubes) < 2:
        raise ConfigError("independence check needs at least two tubes")
    if len(set(tubes)) != len(tubes):
        raise ConfigError("independence check tubes must be distinct")
    t = fam.t
    _validate_timeline(t, dt)
    mol = MollifierSpec(epsilon)
    # Plain paths cannot follow a drifting tube center, so each tube's mass
    # is simulated as cone-confined paths reading the noise along the
    # transformed trajectory that lives inside tube (n, j).
    regions = [RegionSpec("cone", family=fam, n=n) for n, _ in tubes]
    schedules = [DriftSchedule.from_tube(fam, n, j) for n, j in tubes]
    if grid is None:
        h = epsilon / 4.0
        reach = 0.0
        for reg, sched in zip(regions, schedules):
            g = _auto_grid(reg, sched, epsilon, t)
            reach = max(reach, g.L)
        grid = GridSpec(h, reach)
    required = 2.0 * epsilon + 3.0 * grid.h
    min_margin = math.inf
    for ia in range(len(tubes)):
        for ib in range(ia + 1, len(tubes)):
            cert, _, _ = pair_margin(fam, tubes[ia], tubes[ib], s_resolution)
            min_margin = min(min_margin, cert)
            if cert <= required:
                raise ConfigError(
                    f"tubes {tubes[ia]} and {tubes[ib]} have certified margin "
                    f"{cert:g} <= required {required:g} (2 eps + 3h); "
                    f"separate them or shrink epsilon"
                )
    K = len(tubes)
    Z = np.empty((R, K))
    for i in range(R):
        stack = sample_slabs(grid, t, dt, mol, derive_seed(seed, "indep-noise", i))
        for k, (reg, sched) in enumerate(zip(regions, schedules)):
            est = simulate_mass(reg, theta, epsilon, t, dt, M,
                                derive_seed(seed, "indep-paths", i, k),
                                n_noise=1, grid=grid, mollifier=mol,
                                rho_offset=rho_offset, _stack=stack,
                                _schedule=sched)
            Z[i, k] = est[0].mean if isinstance(est, tuple) else est.mean
    sds = np.std(Z, axis=0)
    if np.any(sds == 0.0):
        dead = tubes[int(np.argmin(sds))]
        raise AccuracyError(
            f"tube {dead} produced constant mass across realizations; "
            f"increase M or R"
        )
    corr = np.corrcoef(Z, rowvar=False)
    off = corr[~np.eye(K, dtype=bool)]
    max_off = float(np.max(np.abs(off)))
    thr = 3.0 / math.sqrt(R)
    return IndependenceResult(
        correlations=tuple(map(tuple, corr.tolist())),
        max_abs_offdiag=max_off, threshold=thr, ok=bool(max_off < thr),
        R=R, M=M, seed=seed, min_pair_margin=float(min_margin),
    )


def frozen_path_noise_mean(positions, theta: float, epsilon: float, t: float,
                           dt: float, R: int, seed: int,
                           rho_offset: float = 0.0) -> tuple[float, float]:
    """Mean over R fresh noise realizations of one frozen path's weight.

    The path is pinned at the slab midpoints; the weight is mean-one
    exactly under the discrete model, so the return (mean, std error)
    should satisfy |mean - 1| < 3 SE.  Realizations are packed as blocks
    of slabs in a single streamed stack.
    """
    positions = np.asarray(positions, dtype=float)
    K = _validate_timeline(t, dt)
    if positions.shape != (K, 2):
        raise ConfigError(f"frozen path needs positions at the {K} slab midpoints")
    beta = coupling_beta(theta, epsilon, rho_offset)
    mol = MollifierSpec(epsilon)
    reach = float(np.max(np.abs(positions)))
    grid = GridSpec(epsilon / 4.0, 2.0 * (reach + 2.0 * epsilon + 6.0 * epsilon / 4.0))
    stack = sample_slabs(grid, R * K * dt, dt, mol, seed)
    J = stack.variance_rate(positions)
    norm = 0.5 * beta * beta * float(np.sum(J)) * dt
    log_w = np.empty(R)
    for i in range(R):
        acc = 0.0
        for k in range(K):
            acc += float(stack.field_at(i * K + k, positions[k]))
        log_w[i] = beta * acc - norm
    m = float(np.max(log_w))
    scaled = np.exp(log_w - m)
    mean = math.exp(m) * float(np.mean(scaled))
    se = math.exp(m) * float(np.std(scaled, ddof=1)) / math.sqrt(R)
    return mean, se
