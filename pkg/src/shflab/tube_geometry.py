"""Disjoint space-time tube families and the tail-bound certificate.

A family of N-indexed tubes lives over the time interval [0, t].  Tube
(n, j) starts on a small disc of radius r/(20N) centered at distance
4nr/(5N) from the origin, drifts outward at speed C n^alpha for a short
burn-in b_N = N^-(alpha-1), then at unit speed until t/2, and retraces
the motion in reverse so it returns to its base disc at time t.  The
whole picture is rotated by the angle 20 pi j / N and tilted by a * s/t.
The tube radius r/(20N) + (2s)^(1/alpha) (mirrored about t/2) grows fast
enough that a Brownian path started inside has a decent chance to stay.

Centers are piecewise linear in s, so the minimum distance between two
tubes on a linear piece is an exact quadratic-vertex computation, and
the radius is monotone on each piece; disjointness is certified from
those two facts on a subdivision, with no unverified sampling slack.

The drift change of measure for one tube multiplies four exponential
factors (one per linear piece) built from the path increments along the
pre-rotation axis; confined paths admit an explicit lower bound on the
weight, which is the engine of the tail certificate: the probability
that the total partition function falls below exp(-3 C^2 N^(alpha+1))
decays like exp(-(N/15) * sum of per-tube success probabilities).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, ConfigError, DomainError, GeometryError
from .rng import substream

__all__ = [
    "TubeFamily",
    "ConeSpec",
    "DisjointnessResult",
    "ConfinementEstimate",
    "PZRatio",
    "Certificate",
    "center",
    "radius",
    "separation",
    "pair_margin",
    "disjointness_check",
    "min_drift_constant",
    "girsanov_weight",
    "girsanov_log_weight",
    "confinement_probability",
    "pz_ratio",
    "tail_certificate",
]


@dataclass(frozen=True)
class TubeFamily:
    """Parameters of one tube family; derived quantities are cached."""

    N: int
    alpha: float
    r: float
    t: float
    a: tuple[float, float] = (0.0, 0.0)
    C_drift: float = 0.0

    def __post_init__(self):
        if self.N < 2:
            raise ConfigError("tube family needs N >= 2")
        if not self.alpha > 2.0:
            raise ConfigError("tube family needs alpha > 2")
        if self.r <= 0.0 or self.t <= 0.0:
            raise ConfigError("tube family needs r > 0 and t > 0")
        if self.C_drift < 0.0:
            raise ConfigError("drift constant must be nonnegative")
        object.__setattr__(self, "a", (float(self.a[0]), float(self.a[1])))
        if self.b_N >= self.t / 2.0:
            raise GeometryError(
                f"burn-in b_N = N^-(alpha-1) = {self.b_N:g} must be < t/2 = "
                f"{self.t / 2.0:g}; increase t or N"
            )

    @property
    def b_N(self) -> float:
        return float(self.N) ** (-(self.alpha - 1.0))

    @property
    def base_radius(self) -> float:
        return self.r / (20.0 * self.N)

    @property
    def n_range(self) -> range:
        return range(self.N // 2, self.N + 1)

    @property
    def j_range(self) -> range:
        return range(0, self.N // 15 + 1)

    def base_center_distance(self, n: int) -> float:
        return 4.0 * n * self.r / (5.0 * self.N)

    def angle(self, j: int) -> float:
        return 20.0 * math.pi * j / self.N

    def _check_indices(self, n: int, j: int) -> None:
        if n not in self.n_range:
            raise DomainError(f"tube index n={n} outside {self.n_range}")
        if j not in self.j_range:
            raise DomainError(f"rotation index j={j} outside {self.j_range}")

    def axial_pieces(self, n: int):
        """Pre-rotation first coordinate as (s0, s1, value_at_s0, slope)."""
        b, t, C = self.b_N, self.t, self.C_drift
        x0 = self.base_center_distance(n)
        v = C * float(n) ** self.alpha
        x_b = x0 + v * b
        x_half = x_b + (t / 2.0 - b)
        return [
            (0.0, b, x0, v),
            (b, t / 2.0, x_b, 1.0),
            (t / 2.0, t - b, x_half, -1.0),
            (t - b, t, x_b, -v),
        ]

    def axial_position(self, n: int, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        for s0, s1, x0, slope in self.axial_pieces(n):
            m = (s >= s0) & (s <= s1)
            out[m] = x0 + slope * (s[m] - s0)
        return out


def center(fam: TubeFamily, n: int, j: int, s) -> np.ndarray:
    """Tube center at times s: rotated drift schedule plus linear tilt."""
    fam._check_indices(n, j)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any((s < 0.0) | (s > fam.t)):
        raise DomainError("tube times s must lie in [0, t]")
    ax = fam.axial_position(n, s)
    phi = fam.angle(j)
    out = np.empty(s.shape + (2,))
    out[..., 0] = math.cos(phi) * ax + fam.a[0] * s / fam.t
    out[..., 1] = math.sin(phi) * ax + fam.a[1] * s / fam.t
    return out


def radius(fam: TubeFamily, n: int, s) -> np.ndarray:
    """Tube radius at times s; monotone toward the midpoint, n-independent."""
    if n not in fam.n_range:
        raise DomainError(f"tube index n={n} outside {fam.n_range}")
    s = np.asarray(s, dtype=float)
    if np.any((s < 0.0) | (s > fam.t)):
        raise DomainError("tube times s must lie in [0, t]")
    near = np.minimum(s, fam.t - s)
    return fam.base_radius + (2.0 * near) ** (1.0 / fam.alpha)


def separation(fam: TubeFamily, tube_a, tube_b, s) -> np.ndarray:
    """Signed boundary gap between two tubes at times s."""
    na, ja = tube_a
    nb, jb = tube_b
    ca = center(fam, na, ja, s)
    cb = center(fam, nb, jb, s)
    gap = np.sqrt(np.sum((ca - cb) ** 2, axis=-1))
    return gap - radius(fam, na, s) - radius(fam, nb, s)


@dataclass(frozen=True)
class DisjointnessResult:
    ok: bool
    min_margin: float            # certified lower bound over all pairs and times
    min_sampled: float           # smallest margin seen at sample points
    witness: tuple | None = None  # ((n,j), (n,j), s) where the bound fails


def _graded_edges(s0: float, s1: float, n_uniform: int) -> np.ndarray:
    """Uniform edges plus geometric refinement toward both piece ends.

    The radius profile has infinite slope at the interval endpoints
    (cusp of s^(1/alpha)), so uniform cells cannot certify there; cells
    shrinking geometrically to scale 1e-12 * length resolve the cusp.
    """
    length = s1 - s0
    d = np.geomspace(length * 1e-12, length / 4.0, 40)
    edges = np.concatenate([
        np.linspace(s0, s1, n_uniform + 1), s0 + d, s1 - d])
    return np.unique(np.clip(edges, s0, s1))


def pair_margin(fam: TubeFamily, tube_a, tube_b,
                s_resolution: int = 1000) -> tuple[float, float, float]:
    """Certified and sampled minimum margin for one tube pair.

    Per linear piece of the center schedule the pair distance is
    minimized exactly (quadratic vertex) and the shared radius profile
    is monotone, so max(radius at subinterval endpoints) bounds it.
    Returns (certified minimum, sampled minimum, s at the certified one).
    """
    na, ja = tube_a
    nb, jb = tube_b
    fam._check_indices(na, ja)
    fam._check_indices(nb, jb)
    if tube_a == tube_b:
        raise DomainError("pair margin needs two distinct tubes")
    t = fam.t
    ua = np.array([math.cos(fam.angle(ja)), math.sin(fam.angle(ja))])
    ub = np.array([math.cos(fam.angle(jb)), math.sin(fam.angle(jb))])
    best = math.inf
    best_sampled = math.inf
    best_at = 0.0
    for (s0, s1, xa, va), (_, _, xb, vb) in zip(fam.axial_pieces(na),
                                                fam.axial_pieces(nb)):
        # axial value on the piece: x + v (s - s0)
        A = (xa - va * s0) * ua - (xb - vb * s0) * ub
        B = va * ua - vb * ub
        n_sub = max(2, int(math.ceil(s_resolution * (s1 - s0) / t)))
        edges = _graded_edges(s0, s1, n_sub)
        rad2 = 2.0 * (fam.base_radius
                      + (2.0 * np.minimum(edges, t - edges)) ** (1.0 / fam.alpha))
        bb = float(B @ B)
        if bb < 1e-300:
            s_star = edges[:-1].copy()
        else:
            s_star = np.clip(-float(A @ B) / bb, edges[:-1], edges[1:])
        dmin = np.hypot(A[0] + B[0] * s_star, A[1] + B[1] * s_star)
        margins = dmin - np.maximum(rad2[:-1], rad2[1:])
        k = int(np.argmin(margins))
        if margins[k] < best:
            best = float(margins[k])
            best_at = float(s_star[k])
        gap = np.hypot(A[0] + B[0] * edges, A[1] + B[1] * edges)
        best_sampled = min(best_sampled, float(np.min(gap - rad2)))
    return best, best_sampled, best_at


def disjointness_check(fam: TubeFamily, s_resolution: int = 1000) -> DisjointnessResult:
    """Certify that all distinct tubes in the family stay disjoint.

    The certificate is a positive pair_margin for every unordered pair;
    the tilt a cancels in center differences and never affects the answer.
    """
    if s_resolution < 1000:
        raise ConfigError("disjointness check needs s_resolution >= 1000")
    tubes = [(n, j) for n in fam.n_range for j in fam.j_range]
    best = math.inf
    best_sampled = math.inf
    witness = None
    for ia in range(len(tubes)):
        for ib in range(ia + 1, len(tubes)):
            cert, sampled, s_at = pair_margin(fam, tubes[ia], tubes[ib], s_resolution)
            if cert < best:
                best = cert
                witness = (tubes[ia], tubes[ib], s_at)
            best_sampled = min(best_sampled, sampled)
    ok = bool(best > 0.0)
    return DisjointnessResult(ok, best, best_sampled, None if ok else witness)


def min_drift_constant(alpha: float, r: float, t: float, N: int,
                       margin_target: float = 0.0, rel_tol: float = 1e-3,
                       a=(0.0, 0.0), s_resolution: int = 1000) -> float:
    """Smallest certified-feasible drift constant, to relative tolerance.

    Bisection on C with the disjointness checker as the feasibility
    oracle; monotonicity is verified at the bracket endpoints rather
    than assumed everywhere.
    """

    def margin_at(C):
        fam = TubeFamily(N, alpha, r, t, a=a, C_drift=C)
        return disjointness_check(fam, s_resolution).min_margin

    def feasible(C):
        return margin_at(C) > margin_target

    if feasible(0.0):
        return 0.0
    hi = 1.0
    while not feasible(hi):
        hi *= 2.0
        if hi > 1e6:
            raise GeometryError(
                f"no drift constant up to 1e6 certifies disjointness for "
                f"(alpha={alpha:g}, r={r:g}, t={t:g}, N={N})"
            )
    lo = hi / 2.0 if hi > 1.0 else 0.0
    if feasible(lo):  # pathological non-monotone bracket
        raise GeometryError("feasibility is not monotone on the bracket")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def girsanov_log_weight(fam: TubeFamily, n: int, increments,
                        confined: bool = False) -> np.ndarray:
    """Log of the drift change-of-measure weight; see girsanov_weight.

    Working in log space keeps the per-path floor check meaningful at
    drift strengths where the weight itself underflows to 0.0.
    """
    if n not in fam.n_range:
        raise DomainError(f"tube index n={n} outside {fam.n_range}")
    inc = np.asarray(increments, dtype=float)
    if inc.shape[-1] != 4:
        raise DomainError("need one increment per linear piece (4 of them)")
    b, t, C = fam.b_N, fam.t, fam.C_drift
    v = C * float(n) ** fam.alpha
    drifts = np.array([v, 1.0, -1.0, -v])
    durations = np.array([b, t / 2.0 - b, t / 2.0 - b, b])
    log_w = inc @ drifts - 0.5 * float(drifts ** 2 @ durations)
    if confined:
        # Large-parameter regime check: only sensible when the drift term
        # C^2 N^(alpha+1) dominates the flat-drift cost (t-2b)/2, e.g. the
        # zero-increment path itself already violates it at small C*N.
        floor = -1.5 * C ** 2 * float(fam.N) ** (fam.alpha + 1.0)
        bad = log_w < floor - 1e-12 * abs(floor)
        if np.any(bad):
            raise AccuracyError(
                f"confined-path weight bound violated: log weight "
                f"{float(np.min(log_w)):g} < {floor:g}"
            )
    return log_w


def girsanov_weight(fam: TubeFamily, n: int, increments, confined: bool = False):
    """Drift change-of-measure weight from four axial path increments.

    increments[..., i] is the displacement of the path's pre-rotation
    first coordinate over the i-th linear piece ([0,b], [b,t/2],
    [t/2,t-b], [t-b,t]).  With confined=True every weight is checked
    against the lower bound exp(-(3/2) C^2 N^(alpha+1)) that holds for
    paths trapped in the centered cone once C^2 N^(alpha+1) is large.
    """
    return np.exp(girsanov_log_weight(fam, n, increments, confined=confined))


@dataclass(frozen=True)
class ConeSpec:
    """The tube with its center drift removed: centered, same radius law."""

    family: TubeFamily
    n: int

    def __post_init__(self):
        if self.n not in self.family.n_range:
            raise DomainError(f"tube index n={self.n} outside {self.family.n_range}")

    def radius_at(self, s) -> np.ndarray:
        return radius(self.family, self.n, s)


@dataclass(frozen=True)
class ConfinementEstimate:
    value: float          # integral over the base disc of the stay probability
    std_error: float
    M: int
    dt: float
    seed: int
    implied_c: float      # value written as (c * r/(20N))^2
    survivors: int


def _confinement_run(cone: ConeSpec, M: int, dt: float, rng) -> tuple[int, int]:
    fam = cone.family
    t = fam.t
    n_steps = int(round(t / dt))
    if n_steps < 1 or abs(n_steps * dt - t) > 1e-9 * max(t, 1.0):
        raise ConfigError(f"dt={dt:g} must divide the horizon t={t:g}")
    r0 = fam.base_radius
    mids = (np.arange(n_steps) + 0.5) * dt
    lims = np.atleast_1d(np.asarray(cone.radius_at(mids), dtype=float))
    survivors = 0
    batch = 200_000
    done = 0
    while done < M:
        m = min(batch, M - done)
        done += m
        ang = rng.uniform(0.0, 2.0 * math.pi, m)
        rad = r0 * np.sqrt(rng.uniform(0.0, 1.0, m))
        pos = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        for k in range(n_steps):
            step_var = 0.5 * dt if k == 0 else dt
            pos = pos + math.sqrt(step_var) * rng.standard_normal(pos.shape)
            lim = lims[k]
            alive = np.einsum("ij,ij->i", pos, pos) <= lim * lim
            pos = pos[alive]  # compaction: dead paths never revive
            if pos.shape[0] == 0:
                break
        survivors += pos.shape[0]
    return survivors, M


def confinement_probability(cone: ConeSpec, M: int, dt: float, seed: int,
                            refine_check: bool = True) -> ConfinementEstimate:
    """Monte Carlo for the base-disc integral of the cone stay probability.

    Containment is tested at slab midpoints (matching the simulator's
    convention).  With refine_check the run is repeated at dt/2 and the
    two estimates must agree within twice their combined standard error,
    otherwise the discretization is declared too coarse.
    """
    if M < 1:
        raise ConfigError("confinement estimate needs M >= 1")
    fam = cone.family
    area = math.pi * fam.base_radius ** 2

    def run(step, tag):
        surv, total = _confinement_run(cone, M, step, substream(seed, tag, 0))
        p = surv / total
        est = area * p
        se = area * math.sqrt(max(p * (1.0 - p), 1.0 / total) / total)
        return est, se, surv

    est, se, surv = run(dt, "confine")
    if refine_check:
        est2, se2, _ = run(dt / 2.0, "confine-refine")
        comb = math.hypot(se, se2)
        if abs(est - est2) > 2.0 * comb:
            raise AccuracyError(
                f"halving dt moved the confinement estimate from {est:g} to "
                f"{est2:g} (> 2 combined SE = {2 * comb:g}); rerun with smaller dt"
            )
    implied_c = math.sqrt(est) / fam.base_radius if est > 0.0 else 0.0
    return ConfinementEstimate(est, se, M, dt, seed, implied_c, surv)


@dataclass(frozen=True)
class PZRatio:
    value: float            # lower bound on P(mass > half its mean)
    numerator: float        # squared cone mean
    mean_sq: float          # squared ball-to-ball mean mass
    variance_bound: float   # Gaussian-domination bound on the variance
    implied_constant: float  # value * log(10 N / r)^2
    threshold_ok: bool      # exp(-2 C^2 N^(alpha+1)) <= half the cone mean


def pz_ratio(fam: TubeFamily, n: int, theta: float,
             confinement: ConfinementEstimate, evaluator=None) -> PZRatio:
    """Second-moment lower bound for one tube's mass exceeding half its mean.

    P(Z > E[Z]/2) >= (1/4) E[Z]^2 / E[Z^2]; the second moment of the cone
    mass is dominated by the ball-to-ball second moment at radius
    r/(20N), whose variance part is bounded by the Gaussian-profile
    comparison integral.  Decreasing in theta through that bound.
    """
    from .moment_calculus import ProfileSpec, ball_second_moment_reduced, mean_mass

    if n not in fam.n_range:
        raise DomainError(f"tube index n={n} outside {fam.n_range}")
    r0 = fam.base_radius
    ball = ProfileSpec("indicator_ball", radius=r0)
    mean_bb = mean_mass(ball, ball, fam.t).value
    sharp = ball_second_moment_reduced(r0, fam.t, theta, evaluator=evaluator).sharp
    var_bound = (2.0 * math.pi * r0 ** 2) ** 4 * sharp
    denom = float(mean_bb ** 2 + var_bound)
    value = float(0.25 * confinement.value ** 2 / denom)
    if not value <= 0.25 + 1e-15:
        raise AccuracyError("second-moment ratio exceeded 1/4")
    thresh = math.exp(-2.0 * fam.C_drift ** 2 * float(fam.N) ** (fam.alpha + 1.0)) \
        if fam.C_drift > 0.0 else 1.0
    return PZRatio(
        value=value,
        numerator=float(confinement.value ** 2),
        mean_sq=float(mean_bb ** 2),
        variance_bound=float(var_bound),
        implied_constant=value * math.log(10.0 * fam.N / fam.r) ** 2,
        threshold_ok=bool(thresh <= 0.5 * confinement.value),
    )


@dataclass(frozen=True)
class Certificate:
    N: int
    alpha: float
    r: float
    t: float
    a: tuple[float, float]
    C_drift: float
    theta: float
    threshold: float              # certified deviation scale 3 C^2 N^(alpha+1)
    per_tube_probs: tuple
    bound: float                  # exp(-(N/15) * sum of per-tube probabilities)
    min_margin: float
    confinement: ConfinementEstimate
    seed: int
    inputs_digest: str = field(default="")

    def payload(self) -> dict:
        return {
            "N": self.N, "alpha": self.alpha, "r": self.r, "t": self.t,
            "a": list(self.a), "C_drift": self.C_drift, "theta": self.theta,
            "threshold": self.threshold,
            "per_tube_probs": list(self.per_tube_probs),
            "bound": self.bound, "min_margin": self.min_margin,
            "confinement_value": self.confinement.value,
            "confinement_std_error": self.confinement.std_error,
            "confinement_M": self.confinement.M,
            "confinement_dt": self.confinement.dt,
            "seed": self.seed, "inputs_digest": self.inputs_digest,
        }


def tail_certificate(fam: TubeFamily, theta: float, conf_M: int, conf_dt: float,
                     seed: int, evaluator=None,
                     s_resolution: int = 1000) -> Certificate:
    """Assemble the lower-tail certificate for the total mass.

    Refuses to certify when the tube family is not certifiably disjoint
    (the witness is reported); otherwise combines the per-tube
    second-moment bounds into bound = exp(-(N/15) sum_n p_n) on the
    probability that the mass drops below exp(-threshold).
    """
    dis = disjointness_check(fam, s_resolution)
    if not dis.ok:
        (na, ja), (nb, jb), s_at = dis.witness
        raise GeometryError(
            f"tube family is not certifiably disjoint: tubes (n={na}, j={ja}) "
            f"and (n={nb}, j={jb}) have margin {dis.min_margin:g} near s={s_at:g}"
        )
    if fam.C_drift <= 0.0:
        raise ConfigError("certificate needs a positive drift constant")
    cone = ConeSpec(fam, fam.N)
    conf = confinement_probability(cone, conf_M, conf_dt, seed)
    if conf.survivors == 0:
        raise AccuracyError(
            "confinement Monte Carlo found no surviving paths; increase M"
        )
    p = pz_ratio(fam, fam.N, theta, conf, evaluator=evaluator)
    if not p.threshold_ok:
        raise AccuracyError(
            "deviation threshold exceeds half the cone mean; the per-tube "
            "bound does not apply (increase C_drift or M)"
        )
    probs = tuple([p.value] * len(list(fam.n_range)))
    bound = math.exp(-(fam.N / 15.0) * float(np.sum(probs)))
    digest_src = json.dumps({
        "N": fam.N, "alpha": fam.alpha, "r": fam.r, "t": fam.t,
        "a": list(fam.a), "C_drift": fam.C_drift, "theta": theta,
        "conf_M": conf_M, "conf_dt": conf_dt, "seed": seed,
        "s_resolution": s_resolution,
    }, sort_keys=True)
    return Certificate(
        N=fam.N, alpha=fam.alpha, r=fam.r, t=fam.t, a=fam.a,
        C_drift=fam.C_drift, theta=theta,
        threshold=3.0 * fam.C_drift ** 2 * float(fam.N) ** (fam.alpha + 1.0),
        per_tube_probs=probs, bound=bound, min_margin=dis.min_margin,
        confinement=conf, seed=seed,
        inputs_digest=hashlib.sha256(digest_src.encode()).hexdigest(),
    )
