"""Config-driven experiment runner; the single user entry point.

One JSON config per run.  The master seed comes from the config (or the
--seed override) and is never defaulted.  The resolved config is hashed
and the digest is embedded in every artifact, so identical (config,
seed) reruns produce byte-identical outputs; wall-clock timings go to a
separate sidecar that is excluded from that contract.

All artifact content is built in memory and written only after the
subcommand finished, so a failing run leaves no partial outputs.  Exit
codes: 0 ok, 2 config/schema, 3 accuracy, 4 geometry or precondition,
5 internal error.  Failures print a JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import AccuracyError, ConfigError, DomainError, GeometryError
from .fk_simulator import (DriftSchedule, RegionSpec, independence_check,
                           simulate_drifted_mass, simulate_mass, tail_estimate)
from .moment_calculus import ProfileSpec, log_divergence_scan, mean_mass, variance_mass
from .noise_field import MollifierSpec, convolved_mollifier, coupling_beta
from .special_functions import DickmanGrid, GreenEvaluator, dickman_density, green_function
from .tube_geometry import (TubeFamily, center, disjointness_check,
                            min_drift_constant, pair_margin, radius,
                            tail_certificate)

__all__ = ["main"]


# ---------------------------------------------------------------- plumbing

def _plain(obj):
    """Recursively coerce to JSON-native types; numpy scalars become floats."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__} into an artifact")


def _fmt_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _Run:
    """Artifacts assembled in memory, written only on success."""

    def __init__(self, digest: str):
        self.digest = digest
        self.artifacts: dict[str, str] = {}
        self.derived: dict[str, object] = {}

    def add_json(self, name: str, payload: dict) -> None:
        body = dict(payload)
        body["config_digest"] = self.digest
        self.artifacts[name] = json.dumps(_plain(body), sort_keys=True,
                                          indent=2) + "\n"

    def add_csv(self, name: str, header, rows) -> None:
        lines = [f"# config_digest: {self.digest}", ",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt_cell(v) for v in row))
        self.artifacts[name] = "\n".join(lines) + "\n"

    def add_svg(self, name: str, text: str) -> None:
        head, rest = text.split("\n", 1)
        self.artifacts[name] = (
            head + f"\n<!-- config_digest: {self.digest} -->\n" + rest
        )


# ---------------------------------------------------- config schema helpers

def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _check_keys(block: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _get(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def _num(cfg: dict, key: str, default=None) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"config is missing required key {key!r}")
        return float(default)
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"config key {key!r} must be a number")
    return float(v)


def _int(cfg: dict, key: str, default=None) -> int:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"config is missing required key {key!r}")
        return int(default)
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"config key {key!r} must be an integer")
    return v


def _numlist(cfg: dict, key: str) -> list:
    v = _get(cfg, key)
    if not isinstance(v, list) or not v or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError(f"config key {key!r} must be a non-empty number list")
    return [float(x) for x in v]


def _pair(v, what: str):
    if not isinstance(v, list) or len(v) != 2 or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError(f"{what} must be a [x, y] pair")
    return (float(v[0]), float(v[1]))


_FAMILY_KEYS = {"N", "alpha", "r", "t", "a", "C_drift"}


def _family_from(cfg: dict) -> tuple[TubeFamily, bool]:
    block = _get(cfg, "family")
    if not isinstance(block, dict):
        raise ConfigError("'family' must be an object")
    _check_keys(block, _FAMILY_KEYS, "family")
    N = _int(block, "N")
    alpha = _num(block, "alpha")
    r = _num(block, "r")
    t = _num(block, "t")
    a = _pair(block.get("a", [0.0, 0.0]), "family key 'a'")
    C = _get(block, "C_drift")
    auto = C == "auto"
    if auto:
        C = min_drift_constant(alpha, r, t, N, a=a)
    elif isinstance(C, bool) or not isinstance(C, (int, float)):
        raise ConfigError("family key 'C_drift' must be a number or \"auto\"")
    return TubeFamily(N, alpha, r, t, a=a, C_drift=float(C)), auto


_REGION_KEYS = {"kind", "r_start", "r_end", "start_center", "end_center",
                "n", "j"}


def _region_from(cfg: dict, family: TubeFamily | None) -> RegionSpec:
    block = _get(cfg, "region")
    if not isinstance(block, dict):
        raise ConfigError("'region' must be an object")
    _check_keys(block, _REGION_KEYS, "region")
    kind = block.get("kind")
    if kind in ("tube", "cone"):
        if family is None:
            raise ConfigError(f"{kind} region needs a 'family' block")
        return RegionSpec(kind, family=family, n=block.get("n"),
                          j=block.get("j"))
    return RegionSpec(
        kind if isinstance(kind, str) else "",
        r_start=block.get("r_start"), r_end=block.get("r_end"),
        start_center=_pair(block.get("start_center", [0.0, 0.0]),
                           "region key 'start_center'"),
        end_center=_pair(block.get("end_center", [0.0, 0.0]),
                         "region key 'end_center'"),
    )


_PROFILE_KEYS = {"kind", "variance", "radius", "center", "mass", "level"}


def _profile_from(cfg: dict, key: str) -> ProfileSpec:
    block = _get(cfg, key)
    if not isinstance(block, dict):
        raise ConfigError(f"{key!r} must be an object")
    _check_keys(block, _PROFILE_KEYS, key)
    try:
        return ProfileSpec(
            kind=block.get("kind", ""),
            variance=float(block.get("variance", 0.0)),
            radius=float(block.get("radius", 0.0)),
            center=_pair(block.get("center", [0.0, 0.0]),
                         f"{key} key 'center'"),
            mass=float(block.get("mass", 1.0)),
            level=float(block.get("level", 1.0)),
        )
    except DomainError as exc:
        raise ConfigError(f"bad {key!r} profile: {exc}") from exc


def _estimate_dict(e) -> dict:
    return {"mean": e.mean, "std_error": e.std_error, "M": e.M,
            "seed": e.seed, "aborted": e.aborted, "n_noise": e.n_noise,
            "log_mean": e.log_mean, "beta": e.beta,
            "estimator_digest": e.config_digest}


def _beta_block(run: _Run, theta: float, epsilon: float, rho_offset: float):
    run.derived["beta"] = coupling_beta(theta, epsilon, rho_offset)
    j0 = convolved_mollifier(MollifierSpec(epsilon), np.zeros(2))
    run.derived["J_eff"] = float(np.asarray(j0).reshape(-1)[0])


def _family_block(run: _Run, fam: TubeFamily):
    run.derived["b_N"] = fam.b_N
    run.derived["C_drift"] = fam.C_drift


# ------------------------------------------------------------- subcommands

def _run_dickman(cfg, run, ctx):
    s_values = _numlist(cfg, "s")
    t_max = _num(cfg, "t_max")
    n_points = _int(cfg, "n_points", 200)
    if t_max <= 0.0 or n_points < 2:
        raise ConfigError("dickman needs t_max > 0 and n_points >= 2")
    grid = None
    if t_max > 2.0:
        s_hi = max(4.0, max(s_values) + 1.0)
        grid = DickmanGrid(np.arange(0.0, s_hi + 1e-9, 0.125), t_max=t_max)
    t_vals = t_max * np.arange(1, n_points + 1) / n_points
    rows = []
    for s in s_values:
        f = dickman_density(s, t_vals, grid)
        rows.extend((s, float(tv), float(fv)) for tv, fv in zip(t_vals, f))
    run.add_csv("dickman.csv", ("s", "t", "f"), rows)


def _run_green(cfg, run, ctx):
    thetas = _numlist(cfg, "theta")
    t_values = _numlist(cfg, "t")
    ev = GreenEvaluator()
    rows = [(th, tv, float(green_function(th, tv, ev)))
            for th in thetas for tv in t_values]
    run.add_csv("green.csv", ("theta", "t", "G"), rows)


def _run_moments(cfg, run, ctx):
    u0 = _profile_from(cfg, "u0")
    phi = _profile_from(cfg, "phi")
    t = _num(cfg, "t")
    theta = _num(cfg, "theta")
    mean = mean_mass(u0, phi, t)
    var = variance_mass(u0, phi, t, theta)
    run.add_json("moments.json", {
        "t": t, "theta": theta,
        "mean": mean.value, "mean_abs_error": mean.abs_error,
        "variance": var.value, "variance_abs_error": var.abs_error,
        "second_moment": var.value + mean.value ** 2,
    })


def _run_scan(cfg, run, ctx):
    epsilons = _numlist(cfg, "epsilons")
    t = _num(cfg, "t")
    theta = _num(cfg, "theta")
    factor = _num(cfg, "factor", 5.0)
    res = log_divergence_scan(epsilons, t, theta, factor=factor)
    run.add_csv("scan.csv",
                ("epsilon", "sharp", "bound", "normalized_sharp",
                 "normalized_bound", "sharp_error", "bound_error"),
                [(r.epsilon, r.sharp, r.bound, r.normalized_sharp,
                  r.normalized_bound, r.sharp_error, r.bound_error)
                 for r in res.rows])
    run.add_json("scan.json", {
        "t": res.t, "theta": res.theta, "factor": res.factor,
        "ratio_sharp": res.ratio_sharp, "ratio_bound": res.ratio_bound,
    })


def _run_simulate(cfg, run, ctx):
    family = None
    if "family" in cfg:
        family, _ = _family_from(cfg)
    region = _region_from(cfg, family)
    theta = _num(cfg, "theta")
    epsilon = _num(cfg, "epsilon")
    t = _num(cfg, "t")
    dt = _num(cfg, "dt")
    M = _int(cfg, "M")
    n_noise = _int(cfg, "n_noise", 1)
    rho_offset = _num(cfg, "rho_offset", 0.0)
    kw = dict(n_noise=n_noise, rho_offset=rho_offset, threads=ctx["threads"])
    if "drift" in cfg:
        block = cfg["drift"]
        if not isinstance(block, dict):
            raise ConfigError("'drift' must be an object")
        _check_keys(block, {"n", "j"}, "drift")
        if family is None:
            raise ConfigError("drift block needs a 'family' block")
        sched = DriftSchedule.from_tube(family, _int(block, "n"),
                                        _int(block, "j", 0))
        est = simulate_drifted_mass(region, sched, theta, epsilon, t, dt, M,
                                    ctx["seed"], **kw)
        run.add_json("simulate.json", {
            "plain": _estimate_dict(est.plain),
            "weighted": _estimate_dict(est.weighted),
            "schedule": sched.tag(),
        })
        beta = est.plain.beta
    else:
        est = simulate_mass(region, theta, epsilon, t, dt, M, ctx["seed"], **kw)
        run.add_json("simulate.json", _estimate_dict(est))
        beta = est.beta
    _beta_block(run, theta, epsilon, rho_offset)
    run.derived["beta"] = beta   # the value the estimator actually used
    if family is not None:
        _family_block(run, family)


def _run_tubes(cfg, run, ctx):
    fam, auto = _family_from(cfg)
    s_samples = _int(cfg, "s_samples", 129)
    s_resolution = _int(cfg, "s_resolution", 1000)
    if s_samples < 2:
        raise ConfigError("tubes needs s_samples >= 2")
    res = disjointness_check(fam, s_resolution)
    s_grid = np.linspace(0.0, fam.t, s_samples)
    rows = []
    for n in fam.n_range:
        rad = radius(fam, n, s_grid)
        for j in fam.j_range:
            cen = center(fam, n, j, s_grid)
            rows.extend(
                (n, j, float(s), float(cx), float(cy), float(rv))
                for s, (cx, cy), rv in zip(s_grid, cen, rad))
    run.add_csv("tubes.csv",
                ("n", "j", "s", "center_x", "center_y", "radius"), rows)
    tubes = [(n, j) for n in fam.n_range for j in fam.j_range]
    margin_rows = []
    for ia in range(len(tubes)):
        for ib in range(ia + 1, len(tubes)):
            cert, samp, s_min = pair_margin(fam, tubes[ia], tubes[ib],
                                            s_resolution)
            margin_rows.append((*tubes[ia], *tubes[ib], cert, samp, s_min))
    run.add_csv("margins.csv",
                ("n_a", "j_a", "n_b", "j_b", "certified_margin",
                 "sampled_margin", "s_at_min"), margin_rows)
    run.add_json("tubes.json", {
        "N": fam.N, "alpha": fam.alpha, "r": fam.r, "t": fam.t,
        "a": list(fam.a), "C_drift": fam.C_drift, "b_N": fam.b_N,
        "base_radius": fam.base_radius, "ok": res.ok,
        "min_margin": res.min_margin, "min_sampled": res.min_sampled,
        "witness": None if res.witness is None else
        [list(res.witness[0]), list(res.witness[1]), res.witness[2]],
    })
    _family_block(run, fam)
    if auto:
        run.derived["C_star"] = fam.C_drift


def _run_certificate(cfg, run, ctx):
    fam, _ = _family_from(cfg)
    theta = _num(cfg, "theta")
    conf_M = _int(cfg, "conf_M")
    conf_dt = _num(cfg, "conf_dt")
    s_resolution = _int(cfg, "s_resolution", 1000)
    cert = tail_certificate(fam, theta, conf_M, conf_dt, ctx["seed"],
                            s_resolution=s_resolution)
    run.add_json("certificate.json", cert.payload())
    _family_block(run, fam)
    run.derived["threshold"] = cert.threshold
    run.derived["bound"] = cert.bound


def _run_tail(cfg, run, ctx):
    family = None
    if "family" in cfg:
        family, _ = _family_from(cfg)
    region = _region_from(cfg, family)
    theta = _num(cfg, "theta")
    epsilon = _num(cfg, "epsilon")
    t = _num(cfg, "t")
    dt = _num(cfg, "dt")
    thresholds = _numlist(cfg, "thresholds")
    M_outer = _int(cfg, "M_outer")
    M_inner = _int(cfg, "M_inner")
    rho_offset = _num(cfg, "rho_offset", 0.0)
    est = tail_estimate(region, theta, epsilon, t, dt, thresholds, M_outer,
                        M_inner, ctx["seed"], rho_offset=rho_offset,
                        threads=ctx["threads"])
    run.add_csv("tail.csv",
                ("x", "count", "p_hat", "wilson_low", "wilson_high"),
                [(r.x, r.count, r.p_hat, r.wilson_low, r.wilson_high)
                 for r in est.rows])
    run.add_json("tail.json", {
        "flagged": est.flagged, "M_outer": est.M_outer,
        "M_inner": est.M_inner, "estimator_digest": est.config_digest,
    })
    _beta_block(run, theta, epsilon, rho_offset)
    if family is not None:
        _family_block(run, family)


def _run_independence(cfg, run, ctx):
    fam, _ = _family_from(cfg)
    tubes_cfg = _get(cfg, "tubes")
    if not isinstance(tubes_cfg, list) or any(
            not isinstance(tb, list) or len(tb) != 2
            or any(isinstance(x, bool) or not isinstance(x, int) for x in tb)
            for tb in tubes_cfg):
        raise ConfigError("'tubes' must be a list of [n, j] integer pairs")
    tubes = [(tb[0], tb[1]) for tb in tubes_cfg]
    theta = _num(cfg, "theta")
    epsilon = _num(cfg, "epsilon")
    dt = _num(cfg, "dt")
    M = _int(cfg, "M")
    R = _int(cfg, "R")
    rho_offset = _num(cfg, "rho_offset", 0.0)
    s_resolution = _int(cfg, "s_resolution", 1000)
    res = independence_check(fam, tubes, theta, epsilon, dt, M, R,
                             ctx["seed"], rho_offset=rho_offset,
                             s_resolution=s_resolution)
    run.add_json("independence.json", {
        "correlations": [list(row) for row in res.correlations],
        "max_abs_offdiag": res.max_abs_offdiag, "threshold": res.threshold,
        "ok": res.ok, "R": res.R, "M": res.M,
        "min_pair_margin": res.min_pair_margin, "tubes": [list(tb) for tb in tubes],
    })
    _beta_block(run, theta, epsilon, rho_offset)
    _family_block(run, fam)


# ------------------------------------------------------------------- plots

def _read_csv_artifact(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh
                     if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read csv {path}: {exc}") from exc
    if len(lines) < 2:
        raise ConfigError(f"csv {path} has no data rows")
    header = lines[0].split(",")
    data = [ln.split(",") for ln in lines[1:]]
    if any(len(row) != len(header) for row in data):
        raise ConfigError(f"csv {path} has ragged rows")
    return header, data


def _columns(header, data, names, path):
    missing = [c for c in names if c not in header]
    if missing:
        raise ConfigError(
            f"csv {path} lacks required columns {missing}; found {header}")
    idx = [header.index(c) for c in names]
    try:
        return [np.array([float(row[i]) for row in data]) for i in idx]
    except ValueError as exc:
        raise ConfigError(f"csv {path} has non-numeric cells: {exc}") from exc


def _pyplot(digest: str):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcdefaults()
    plt.rcParams["svg.hashsalt"] = digest
    return plt


def _fig_to_svg(fig) -> str:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue().decode("utf-8")


def _plot_scan(path, digest):
    header, data = _read_csv_artifact(path)
    eps, ns, nb = _columns(header, data,
                           ("epsilon", "normalized_sharp", "normalized_bound"),
                           path)
    plt = _pyplot(digest)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    order = np.argsort(eps)
    ax.semilogx(eps[order], ns[order], "o-", label="sharp / log(1/eps)^2")
    ax.semilogx(eps[order], nb[order], "s--", label="bound / log(1/eps)^2")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("normalized second moment")
    ax.legend()
    svg = _fig_to_svg(fig)
    plt.close(fig)
    return svg


def _plot_separation(path, digest):
    header, data = _read_csv_artifact(path)
    n, j, s, cx, cy, rad = _columns(
        header, data, ("n", "j", "s", "center_x", "center_y", "radius"), path)
    plt = _pyplot(digest)
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    keys = sorted({(int(a), int(b)) for a, b in zip(n, j)})
    cmap = plt.get_cmap("tab10")
    from matplotlib.collections import PatchCollection
    from matplotlib.patches import Circle
    for ki, (kn, kj) in enumerate(keys):
        m = (n == kn) & (j == kj)
        order = np.argsort(s[m])
        x, y, rv = cx[m][order], cy[m][order], rad[m][order]
        color = cmap(ki % 10)
        stride = max(1, len(x) // 12)
        discs = [Circle((x[i], y[i]), rv[i]) for i in range(0, len(x), stride)]
        pc = PatchCollection(discs, facecolor="none", edgecolor=color,
                             linewidth=0.6, alpha=0.8)
        pc.set_gid(f"tube-{kn}-{kj}")
        ax.add_collection(pc)
        ax.plot(x, y, color=color, linewidth=1.0,
                label=f"n={kn}, j={kj}")
    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if len(keys) <= 12:
        ax.legend(fontsize=7)
    svg = _fig_to_svg(fig)
    plt.close(fig)
    return svg


def _plot_tail(path, digest):
    header, data = _read_csv_artifact(path)
    x, p, lo, hi = _columns(header, data,
                            ("x", "p_hat", "wilson_low", "wilson_high"), path)
    plt = _pyplot(digest)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    order = np.argsort(x)
    ax.fill_between(x[order], lo[order], hi[order], alpha=0.25,
                    label="Wilson 95%")
    ax.plot(x[order], p[order], "o-", label="empirical tail")
    ax.set_xlabel("threshold x")
    ax.set_ylabel("P(log mass < -x)")
    ax.legend()
    svg = _fig_to_svg(fig)
    plt.close(fig)
    return svg


_PLOTTERS = {"scan": _plot_scan, "separation": _plot_separation,
             "tail": _plot_tail}


def _run_plot(cfg, run, ctx):
    path = _get(cfg, "csv")
    if not isinstance(path, str):
        raise ConfigError("'csv' must be a path string")
    kind = _get(cfg, "kind")
    if kind not in _PLOTTERS:
        raise ConfigError(
            f"plot kind must be one of {sorted(_PLOTTERS)}, got {kind!r}")
    name = cfg.get("out_name", f"{kind}.svg")
    if not isinstance(name, str) or not name.endswith(".svg"):
        raise ConfigError("'out_name' must be an .svg filename")
    run.add_svg(name, _PLOTTERS[kind](path, run.digest))


_HANDLERS = {
    "dickman": (_run_dickman, {"s", "t_max", "n_points"}),
    "green": (_run_green, {"theta", "t"}),
    "moments": (_run_moments, {"u0", "phi", "t", "theta"}),
    "scan": (_run_scan, {"epsilons", "t", "theta", "factor"}),
    "simulate": (_run_simulate, {"region", "family", "drift", "theta",
                                 "epsilon", "t", "dt", "M", "n_noise",
                                 "rho_offset"}),
    "tubes": (_run_tubes, {"family", "s_samples", "s_resolution"}),
    "certificate": (_run_certificate, {"family", "theta", "conf_M",
                                       "conf_dt", "s_resolution"}),
    "tail": (_run_tail, {"region", "family", "theta", "epsilon", "t", "dt",
                         "thresholds", "M_outer", "M_inner", "rho_offset"}),
    "independence": (_run_independence, {"family", "tubes", "theta",
                                         "epsilon", "dt", "M", "R",
                                         "rho_offset", "s_resolution"}),
    "plot": (_run_plot, {"csv", "kind", "out_name"}),
}

_SEEDLESS = {"plot"}
_MAX_SEED = 2 ** 64 - 1


def _error_record(exc: Exception, code: int, subcommand: str) -> str:
    return json.dumps({"error": type(exc).__name__, "exit_code": code,
                       "message": str(exc), "subcommand": subcommand},
                      sort_keys=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shflab",
        description="Reproducible experiment runs from JSON configs.")
    parser.add_argument("subcommand", choices=sorted(_HANDLERS))
    parser.add_argument("--config", required=True,
                        help="path to the JSON run config")
    parser.add_argument("--out", default=None,
                        help="output directory (default: $SHFLAB_OUT or .)")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed override")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    sub = args.subcommand
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = _load_config(args.config)
        handler, allowed = _HANDLERS[sub]
        _check_keys(cfg, allowed | {"seed"}, "config")
        seed = args.seed if args.seed is not None else cfg.get("seed")
        if sub not in _SEEDLESS:
            if seed is None:
                raise ConfigError(
                    "config must set a master 'seed' (or pass --seed); "
                    "runs never default it")
            if isinstance(seed, bool) or not isinstance(seed, int) \
                    or not 0 <= seed <= _MAX_SEED:
                raise ConfigError("seed must be an integer in [0, 2^64)")
        resolved = dict(cfg)
        if seed is not None:
            resolved["seed"] = seed
        digest = hashlib.sha256(
            json.dumps(resolved, sort_keys=True).encode()).hexdigest()
        run = _Run(digest)
        ctx = {"seed": seed, "threads": args.threads}
        started = time.perf_counter()
        handler(resolved, run, ctx)
        elapsed = time.perf_counter() - started
        out_dir = args.out or os.environ.get("SHFLAB_OUT") or "."
        os.makedirs(out_dir, exist_ok=True)
        manifest = {
            "tool": "shflab", "version": __version__, "subcommand": sub,
            "config_digest": digest, "config": resolved, "seed": seed,
            "derived": _plain(run.derived),
            "artifacts": {name: hashlib.sha256(text.encode()).hexdigest()
                          for name, text in sorted(run.artifacts.items())},
        }
        run.artifacts["run_manifest.json"] = json.dumps(
            manifest, sort_keys=True, indent=2) + "\n"
        # wall-clock sidecar: intentionally not part of the manifest's
        # artifact list, so the determinism contract ignores it
        run.artifacts["timings.json"] = json.dumps(
            {"config_digest": digest, "subcommand": sub,
             "threads": args.threads, "wall_seconds": elapsed},
            sort_keys=True, indent=2) + "\n"
        for name, text in run.artifacts.items():
            with open(os.path.join(out_dir, name), "w", encoding="utf-8",
                      newline="") as fh:
                fh.write(text)
        return 0
    except ConfigError as exc:
        print(_error_record(exc, 2, sub), file=sys.stderr)
        return 2
    except AccuracyError as exc:
        print(_error_record(exc, 3, sub), file=sys.stderr)
        return 3
    except (GeometryError, DomainError) as exc:
        print(_error_record(exc, 4, sub), file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001  -- anything else is exit 5
        print(_error_record(exc, 5, sub), file=sys.stderr)
        return 5


if __name__ == "__main__":
    raise SystemExit(main())
