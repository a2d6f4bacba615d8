"""Batch experiment runner: solve | analyze | blowup | boundary | report.

Every artifact is written deterministically (sorted JSON keys, repr-exact
floats, no timestamps), so identical config + seed gives byte-identical
outputs.  Exit codes: 0 success, 1 validation problem, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis as ana
from . import freeboundary as fb
from .config import ConfigError, ExperimentConfig, analysis_radii, load_experiment
from .exact import OracleFailure
from .grid import DomainError, QuadratureError, ScalarField, field_from_csv, field_to_csv
from .solver import (
    CONTACT,
    OPEN,
    ConvergenceError,
    PartitionMask,
    ValidationError,
    classify,
    default_eps_mask,
    solve,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

_MASK_SCHEMA = "obstlab-mask,1"
_SERIES_SCHEMA = "obstlab-series,1"
_CURVE_SCHEMA = "obstlab-curve,1"


def _json_dump(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def mask_to_csv(mask: PartitionMask, path: Path) -> None:
    g = mask.grid
    with path.open("w") as fh:
        fh.write(_MASK_SCHEMA + "\n")
        fh.write("dims," + ",".join(str(d) for d in g.dims) + "\n")
        fh.write("origin," + ",".join(repr(x) for x in g.origin) + "\n")
        fh.write(f"h,{g.h!r}\n")
        fh.write(f"eps_mask,{mask.eps_mask!r}\n")
        fh.write("legend,0=zero,1=open,2=contact,3=unresolved\n")
        rows = mask.labels.reshape(g.dims[0], -1) if g.n > 1 else mask.labels.reshape(1, -1)
        for row in rows:
            fh.write(",".join(str(int(x)) for x in row) + "\n")


def mask_from_csv(path: Path, grid) -> PartitionMask:
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if lines[0] != _MASK_SCHEMA:
        raise ConfigError(f"{path}: bad mask schema line {lines[0]!r}")
    eps = float(lines[4].split(",")[1])
    data = [np.fromstring(ln, sep=",") for ln in lines[6:]]
    labels = np.concatenate(data).astype(np.int8).reshape(grid.dims)
    return PartitionMask(grid, labels, eps)


def series_to_csv(series: ana.FunctionalSeries, path: Path) -> None:
    with path.open("w") as fh:
        fh.write(_SERIES_SCHEMA + "\n")
        fh.write(f"kind,{series.kind}\n")
        fh.write("r,value,monotone_violation\n")
        for r, v, w in series.rows():
            fh.write(f"{r!r},{v!r},{w!r}\n")


def curves_to_csv(curves: list[fb.FreeBoundaryCurve], path: Path) -> None:
    with path.open("w") as fh:
        fh.write(_CURVE_SCHEMA + "\n")
        fh.write("curve,closed,x,y,nx,ny\n")
        for ci, c in enumerate(curves):
            for p, n in zip(c.points, c.normals):
                fh.write(f"{ci},{int(c.closed)},{p[0]!r},{p[1]!r},{n[0]!r},{n[1]!r}\n")


def _solve_artifacts(cfg: ExperimentConfig):
    u, mask, rep = solve(cfg.problem, cfg.solver)
    return u, mask, rep


def _load_or_solve(cfg: ExperimentConfig):
    upath = cfg.out / "u.csv"
    mpath = cfg.out / "mask.csv"
    if upath.exists() and mpath.exists():
        u = field_from_csv(upath)
        if u.grid.dims != cfg.grid.dims or abs(u.grid.h - cfg.grid.h) > 1e-12:
            raise ConfigError("saved field does not match the configured grid; re-run solve")
        mask = mask_from_csv(mpath, cfg.grid)
        return u, mask, None
    u, mask, rep = _solve_artifacts(cfg)
    _write_solution(cfg, u, mask, rep)
    return u, mask, rep


def _report_payload(rep) -> dict:
    return {
        "iterations": rep.iterations,
        "final_update_norm": rep.final_update_norm,
        "residuals": rep.residuals,
        "d2_sup": rep.d2_sup,
        "measure_fraction_gamma": rep.measure_fraction_gamma,
    }


def _write_solution(cfg: ExperimentConfig, u, mask, rep) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    field_to_csv(u, cfg.out / "u.csv")
    mask_to_csv(mask, cfg.out / "mask.csv")
    if rep is not None:
        _json_dump(_report_payload(rep), cfg.out / "report.json")


def _center(cfg: ExperimentConfig, u, mask) -> np.ndarray:
    spec = cfg.analysis.get("center", "auto")
    if spec != "auto":
        vals = spec if isinstance(spec, list) else [spec]
        if len(vals) != 2:
            raise ConfigError("analysis center must be 'auto' or two coordinates")
        return np.asarray([float(v) for v in vals])
    curves = fb.extract(u, mask, fb.GAMMA)
    if not curves:
        raise ConfigError("center = auto, but no zero-set boundary was found")
    c0 = curves[0]
    return c0.points[int(np.argmin(np.linalg.norm(c0.points, axis=1)))]


def cmd_solve(cfg: ExperimentConfig) -> int:
    u, mask, rep = _solve_artifacts(cfg)
    _write_solution(cfg, u, mask, rep)
    return EXIT_OK


def cmd_analyze(cfg: ExperimentConfig) -> int:
    u, mask, _ = _load_or_solve(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    radii = analysis_radii(cfg)
    if len(radii) == 0:
        raise ConfigError("analysis radii list is empty")
    x0 = _center(cfg, u, mask)
    a = cfg.problem.a
    wser = ana.weiss_series(u, mask, a, x0, radii)
    series_to_csv(wser, cfg.out / "weiss.csv")
    aser = ana.acf_series(u, np.asarray(cfg.analysis["acf_e"], dtype=float), radii, center=x0)
    series_to_csv(aser, cfg.out / "acf.csv")
    tr = [float(t) for t in np.atleast_1d(cfg.analysis["thickness_radii"])]
    tvals = [ana.thickness(mask, x0, r) for r in tr]
    tser = ana.FunctionalSeries(np.asarray(tr), np.asarray(tvals), "THICKNESS")
    series_to_csv(tser, cfg.out / "thickness.csv")

    nd_cfg = cfg.analysis.get("nondegeneracy", {})
    n_centers = int(nd_cfg.get("n_centers", 50))
    nd_radii = [float(r) for r in np.atleast_1d(nd_cfg.get("radii", [0.05, 0.1, 0.2]))]
    rng = np.random.default_rng(cfg.seed)
    cand = np.vstack([mask.points_of(OPEN), mask.points_of(CONTACT)])
    lo, hi = cfg.grid.valid_box()
    margin = max(nd_radii) + 2 * cfg.grid.h
    ok = np.all((cand >= lo + margin) & (cand <= hi - margin), axis=1)
    cand = cand[ok]
    if len(cand) == 0:
        raise ConfigError("no admissible non-degeneracy centers inside the valid box")
    pick = rng.choice(len(cand), size=min(n_centers, len(cand)), replace=False)
    nd = ana.nondegeneracy_check(u, mask, float(nd_cfg.get("c", np.min(cfg.problem.f.values))), cand[pick], nd_radii)
    _json_dump(nd, cfg.out / "nondegeneracy.json")

    dd_cfg = cfg.analysis.get("directional", {})
    delta = float(dd_cfg.get("delta", 0.5))
    Cd = float(dd_cfg.get("C", 2.0))
    r = float(dd_cfg.get("r_start", 0.3))
    shrink = float(dd_cfg.get("shrink", 0.75))
    h = cfg.grid.h
    tol = 2 * h * max(1.0, cfg.problem.a)
    found = None
    while r >= 8 * h:
        dd = ana.directional_check(u, delta, Cd, x0, r)
        if dd["min_directional"] >= -tol and dd["min_drift"] >= -tol:
            found = dd
            break
        r *= shrink
    payload = {"tolerance": tol, "found_radius": None if found is None else found["radius"]}
    payload["result"] = found if found is not None else dd
    payload["pass"] = found is not None
    _json_dump(payload, cfg.out / "directional.json")
    return EXIT_OK


def cmd_blowup(cfg: ExperimentConfig) -> int:
    u, mask, _ = _load_or_solve(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    x0 = _center(cfg, u, mask)
    bl = cfg.analysis.get("blowup", {})
    lambdas = [float(x) for x in np.atleast_1d(bl.get("lambdas", [0.5, 0.25, 0.125, 0.0625]))]
    study = ana.blowup_study(u, x0, lambdas, cfg.problem.a)
    _json_dump(study.to_dict(), cfg.out / "blowup.json")
    return EXIT_OK


def cmd_boundary(cfg: ExperimentConfig) -> int:
    u, mask, _ = _load_or_solve(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    gcurves = fb.extract(u, mask, fb.GAMMA)
    pcurves = fb.extract(u, mask, fb.GAMMA_PSI, psi=cfg.problem.psi)
    curves_to_csv(gcurves, cfg.out / "gamma.csv")
    curves_to_csv(pcurves, cfg.out / "gamma_psi.csv")
    payload: dict = {"gamma_d_events": fb.gamma_d_events(gcurves, pcurves, cfg.grid.h)}
    if gcurves:
        x0 = _center(cfg, u, mask)
        radii = [float(r) for r in np.atleast_1d(cfg.analysis.get("c1_radii", [0.3, 0.2, 0.1, 0.05]))]
        window = int(cfg.analysis.get("c1_window", 8))
        osc = fb.c1_diagnostic(gcurves[0], x0, radii, window=window)
        payload["c1"] = [{"r": r, "oscillation": o} for r, o in osc]
        payload["center"] = [float(v) for v in x0]
    _json_dump(payload, cfg.out / "c1.json")
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig) -> int:
    """Run the full pipeline and bundle pass/fail verdicts."""
    u, mask, rep = _solve_artifacts(cfg)
    _write_solution(cfg, u, mask, rep)
    cmd_analyze(cfg)
    cmd_blowup(cfg)
    cmd_boundary(cfg)
    h = cfg.grid.h
    a = cfg.problem.a
    checks: dict[str, dict] = {}

    checks["solver_converged"] = {
        "pass": rep.final_update_norm <= cfg.solver.tol,
        "final_update_norm": rep.final_update_norm,
        "iterations": rep.iterations,
    }
    res = rep.residuals
    checks["interior_equation"] = {
        "pass": res["open_sup"] <= 100 * cfg.solver.tol / h**2 + 1e-8
        and res["min_laplacian_open_contact"] >= cfg.problem.c - 10 * h,
        **{k: v for k, v in res.items()},
    }
    wser = _series_from_csv(cfg.out / "weiss.csv")
    factor = float(cfg.analysis.get("weiss_violation_factor", 10.0))
    checks["weiss_monotone"] = {
        "pass": wser["violation"] <= factor * h,
        "violation": wser["violation"],
        "tolerance": factor * h,
    }
    x0 = _center(cfg, u, mask)
    lhs, rhs = ana.weiss_derivative_check(
        u, mask, a, x0, float(cfg.analysis["weiss_r"]), float(cfg.analysis["weiss_dr"])
    )
    checks["weiss_derivative_identity"] = {
        "pass": abs(lhs - rhs) <= float(cfg.analysis.get("weiss_deriv_tol", 0.05)),
        "lhs": lhs,
        "rhs": rhs,
    }
    aser = _series_from_csv(cfg.out / "acf.csv")
    checks["acf_monotone"] = {
        "pass": aser["violation"] <= factor * h,
        "violation": aser["violation"],
        "tolerance": factor * h,
    }
    eps0 = float(cfg.analysis.get("thickness_eps0", 0.5))
    tser = _series_from_csv(cfg.out / "thickness.csv")
    psi_pts = ana.zero_set_points(cfg.problem.psi, 1e-9)
    tpsi = [
        ana.thickness(psi_pts, x0, float(r), h=h) for r in np.atleast_1d(cfg.analysis["thickness_radii"])
    ]
    checks["thickness_condition"] = {
        "pass": min(tser["values"]) >= eps0 and min(tpsi) >= eps0,
        "delta_u": tser["values"],
        "delta_psi": tpsi,
        "eps0": eps0,
    }
    nd = json.loads((cfg.out / "nondegeneracy.json").read_text())
    checks["nondegeneracy"] = {"pass": nd["pass"], "min_margin": nd["min_margin"], "eps_nd": nd["eps_nd"]}
    dd = json.loads((cfg.out / "directional.json").read_text())
    checks["directional_monotonicity"] = {"pass": dd["pass"], "found_radius": dd["found_radius"]}
    bl = json.loads((cfg.out / "blowup.json").read_text())
    dists = [s["c1_distance"] for s in bl["scales"]]
    checks["blowup_halfspace"] = {
        "pass": bl["verdict"] == "HALF_SPACE_LOW" and all(b < a_ for a_, b in zip(dists, dists[1:])),
        "verdict": bl["verdict"],
        "distances": dists,
        "k": bl["scales"][-1]["k"],
    }
    c1 = json.loads((cfg.out / "c1.json").read_text())
    osc = [row["oscillation"] for row in c1.get("c1", [])]
    checks["c1_oscillation_decreasing"] = {
        "pass": len(osc) >= 2 and all(b < a_ for a_, b in zip(osc, osc[1:])),
        "oscillation": osc,
    }
    payload = {
        "seed": cfg.seed,
        "h": h,
        "checks": checks,
        "overall_pass": all(c["pass"] for c in checks.values()),
    }
    _json_dump(payload, cfg.out / "report.json")
    # failing verdicts are a reported result, not a command failure
    return EXIT_OK


def _series_from_csv(path: Path) -> dict:
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    rows = [tuple(float(x) for x in ln.split(",")) for ln in lines[3:]]
    return {
        "values": [v for _, v, _ in rows],
        "violation": max((w for _, _, w in rows), default=0.0),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="obstlab",
        description="Double obstacle problem laboratory: solve instances and "
        "run the energy/monotonicity/free-boundary diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve the configured instance; writes u.csv, mask.csv, report.json"),
        ("analyze", "weiss.csv, acf.csv, thickness.csv, nondegeneracy.json, directional.json"),
        ("blowup", "rescaling study at the free-boundary center; writes blowup.json"),
        ("boundary", "extract free boundaries; writes gamma.csv, gamma_psi.csv, c1.json"),
        ("report", "full pipeline with pass/fail verdicts; writes report.json"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory (default from config)")
        p.add_argument("--threads", type=int, default=None, help="worker cap (reserved; ops are deterministic)")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized center selection")
    args = parser.parse_args(argv)
    handlers = {
        "solve": cmd_solve,
        "analyze": cmd_analyze,
        "blowup": cmd_blowup,
        "boundary": cmd_boundary,
        "report": cmd_report,
    }
    try:
        cfg = load_experiment(args.config, out=args.out, seed=args.seed, threads=args.threads)
        return handlers[args.command](cfg)
    except (ConfigError, ValidationError, DomainError, QuadratureError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, OracleFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
