"""Experiment configuration: a small line-based block format.

Syntax (one statement per line, '#' starts a comment):

    key = value [value ...]     scalars parse as int/float when they can
    name {                      nested block
        ...
    }

See the README for the full key reference.  Closed forms are spelled by
family name plus parameters, matching the model catalog.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import exact
from .grid import Grid, ScalarField, field_from_csv, sample
from .solver import Problem, SolverConfig, ValidationError

__all__ = ["ConfigError", "parse_config", "ExperimentConfig", "load_experiment"]


class ConfigError(ValueError):
    """Malformed or incomplete experiment configuration."""


def _coerce(tok: str):
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        return tok


def parse_config(text: str) -> dict:
    """Parse the block format into nested dicts; values are scalars or lists."""
    root: dict[str, Any] = {}
    stack = [root]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "}":
            if len(stack) == 1:
                raise ConfigError(f"line {lineno}: unmatched '}}'")
            stack.pop()
            continue
        if line.endswith("{"):
            name = line[:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: block needs a name")
            block: dict[str, Any] = {}
            stack[-1][name] = block
            stack.append(block)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value' or a block, got {line!r}")
        key, _, rest = line.partition("=")
        key = key.strip()
        toks = rest.split()
        if not key or not toks:
            raise ConfigError(f"line {lineno}: empty key or value")
        vals = [_coerce(t) for t in toks]
        stack[-1][key] = vals[0] if len(vals) == 1 else vals
    if len(stack) != 1:
        raise ConfigError("unclosed block at end of file")
    return root


def _as_list(v) -> list:
    return v if isinstance(v, list) else [v]


def _as_floats(v) -> list[float]:
    return [float(x) for x in _as_list(v)]


def build_form(block: dict, n: int, base: Path) -> exact.ClosedForm | ScalarField:
    """Closed form from a config block; 'csv' loads a field instead."""
    if "form" not in block:
        raise ConfigError(f"closed-form block needs 'form =', got keys {sorted(block)}")
    fam = block["form"]
    if fam == "zero":
        return exact.zero()
    if fam == "constant":
        return exact.constant(float(block["value"]), n=n)
    if fam == "affine":
        return exact.affine(float(block.get("c0", 0.0)), _as_floats(block["g"]))
    if fam == "quadratic":
        q = _as_floats(block["Q"])
        if len(q) != n * n:
            raise ConfigError(f"quadratic needs Q with {n * n} row-major entries, got {len(q)}")
        Q = [q[i * n : (i + 1) * n] for i in range(n)]
        g = _as_floats(block.get("g", [0.0] * n))
        return exact.quadratic(float(block.get("c0", 0.0)), g, Q)
    if fam == "halfspace":
        return exact.halfspace(float(block["k"]), _as_floats(block["e"]))
    if fam == "model_psi":
        return exact.model_psi(float(block["a"]), _as_floats(block["e"]))
    if fam == "piecewise1d":
        breaks = _as_floats(block["breaks"])
        co = _as_floats(block["coeffs"])
        if len(co) != 3 * (len(breaks) - 1):
            raise ConfigError("piecewise1d needs 3 coefficients per interval")
        coeffs = np.array(co).reshape(-1, 3)
        prof = exact.PiecewiseQuadratic1D(np.array(breaks), coeffs)
        return exact.piecewise_1d(prof, _as_floats(block["e"]))
    if fam == "csv":
        path = base / str(block["path"])
        if not path.exists():
            raise ConfigError(f"field file not found: {path}")
        return field_from_csv(path)
    raise ConfigError(f"unknown closed form family {fam!r}")


@dataclass
class ExperimentConfig:
    """Parsed experiment: problem + solver + analysis settings."""

    raw: dict
    base: Path
    problem: Problem
    solver: SolverConfig
    seed: int
    out: Path
    threads: int
    analysis: dict

    @property
    def grid(self) -> Grid:
        return self.problem.grid


def _build_grid(block: dict) -> Grid:
    lo = _as_floats(block["lo"])
    hi = _as_floats(block["hi"])
    dims = [int(x) for x in _as_list(block["dims"])]
    return Grid.from_box(lo, hi, dims)


_ANALYSIS_DEFAULTS = {
    "center": "auto",
    "weiss_r": 0.2,
    "weiss_dr": 0.04,
    "acf_e": [0.0, 1.0],
    "thickness_radii": [0.1, 0.2, 0.4],
    "thickness_eps0": 0.5,
}


def load_experiment(path, out: Path | None = None, seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = parse_config(path.read_text())
    base = path.parent
    try:
        pb = raw["problem"]
        grid = _build_grid(pb["grid"])
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc}") from exc

    def field_of(name: str, required: bool = True):
        if name not in pb:
            if required:
                raise ConfigError(f"problem block needs '{name}'")
            return None
        form = build_form(pb[name], grid.n, base)
        if isinstance(form, ScalarField):
            if form.grid.dims != grid.dims or abs(form.grid.h - grid.h) > 1e-12:
                raise ConfigError(f"{name}: CSV field grid does not match the problem grid")
            return form
        return sample(grid, form)

    f = field_of("f")
    psi = field_of("psi")
    bc = field_of("bc")
    try:
        problem = Problem(
            grid=grid,
            f=f,
            psi=psi,
            c=float(pb.get("c", 1.0)),
            a=float(pb.get("a", 2.0)),
            dirichlet=bc,
        )
    except ValidationError:
        raise
    sb = raw.get("solver", {})
    solver = SolverConfig(
        omega=float(sb.get("omega", 1.5)),
        tol=float(sb.get("tol", 1e-10)),
        max_iters=int(sb.get("max_iters", 1_000_000)),
        sweep=str(sb.get("sweep", "lex")),
        eps_mask=float(sb["eps_mask"]) if "eps_mask" in sb else None,
    )
    analysis = dict(_ANALYSIS_DEFAULTS)
    analysis.update(raw.get("analysis", {}))
    if "radii" not in analysis:
        analysis["radii"] = {"lo": 0.05, "hi": 0.4, "n": 20}
    cfg_seed = int(raw.get("seed", 0)) if seed is None else int(seed)
    cfg_out = Path(raw.get("out", "out")) if out is None else Path(out)
    if not cfg_out.is_absolute():
        cfg_out = (base / cfg_out) if out is None else cfg_out
    cfg_threads = int(raw.get("threads", 1)) if threads is None else int(threads)
    if cfg_threads < 1:
        raise ConfigError("threads must be >= 1")
    return ExperimentConfig(
        raw=raw,
        base=base,
        problem=problem,
        solver=solver,
        seed=cfg_seed,
        out=cfg_out,
        threads=cfg_threads,
        analysis=analysis,
    )


def analysis_radii(cfg: ExperimentConfig) -> np.ndarray:
    r = cfg.analysis["radii"]
    if isinstance(r, dict):
        return np.linspace(float(r.get("lo", 0.05)), float(r.get("hi", 0.4)), int(r.get("n", 20)))
    return np.asarray(_as_floats(r))
