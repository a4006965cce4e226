"""Experiment configuration: declarative TOML file -> problem + run settings."""

import os
import sys
from dataclasses import dataclass
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import expr as ex
from .mesh import KINDS, DistortionSpec, MeshError
from .predictor import AlgoConfig, PredictorError
from .problem import ProblemSpec, from_exact_solution

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]

MODES = ("bf", "pred", "both")
VARIABLES = ("u", "grad", "hess")

_SECTIONS = {
    "problem": {"dim", "name", "D", "r", "exact_u", "f", "g", "h_bottom",
                "h_top", "manufactured_u"},
    "mesh": {"element_kind", "distortion_type", "seed", "magnitude"},
    "fem": {"degrees"},
    "run": {"mode", "variables", "R_min", "c_s", "c_r", "N_max"},
    "output": {"directory", "emit_plots"},
}


class ConfigError(Exception):
    """Invalid experiment configuration; message names the offending key."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: ProblemSpec
    algo: AlgoConfig
    u_m: Optional[ex.Expr]          # None = per-dim default inside the suite
    degrees: tuple
    variables: tuple
    mode: str
    out_dir: str
    emit_plots: bool


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    return parse_config(text, name_hint=os.path.basename(path))


def parse_config(text: str, name_hint: str = "experiment") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"config syntax: {err}") from err
    _check_layout(raw)

    prob_tbl = raw.get("problem")
    if not prob_tbl:
        raise ConfigError("missing required [problem] section")
    dim = _int(prob_tbl, "dim", "problem")
    if dim not in (1, 2):
        raise ConfigError("[problem] dim must be 1 or 2")
    name = prob_tbl.get("name", name_hint.rsplit(".", 1)[0])
    if not isinstance(name, str):
        raise ConfigError("[problem] name must be a string")

    problem, u_m = _build_problem(prob_tbl, dim, name)
    algo = _build_algo(raw.get("mesh", {}), raw.get("run", {}), dim)
    degrees = _degrees(raw.get("fem", {}))
    mode, variables = _run_selection(raw.get("run", {}))
    out_dir, emit_plots = _output(raw.get("output", {}))

    return ExperimentConfig(name, problem, algo, u_m, degrees, variables,
                            mode, out_dir, emit_plots)


def _check_layout(raw):
    for section, tbl in raw.items():
        allowed = _SECTIONS.get(section)
        if allowed is None:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(tbl, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in tbl:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")


def _expr(tbl, key, section, default=None):
    raw = tbl.get(key, default)
    if raw is None:
        return None
    if not isinstance(raw, str):
        raise ConfigError(f"[{section}] {key} must be an expression string")
    try:
        return ex.parse(raw)
    except ex.ExprError as err:
        raise ConfigError(f"[{section}] {key}: {err}") from err


def _int(tbl, key, section, default=None):
    val = tbl.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"[{section}] {key} must be an integer")
    return val


def _diffusion(tbl, dim):
    raw = tbl.get("D", "1")
    if isinstance(raw, str):
        return _expr({"D": raw}, "D", "problem")
    if dim == 1:
        raise ConfigError("[problem] D must be a scalar expression in 1D")
    if (not isinstance(raw, list) or len(raw) != 2
            or any(not isinstance(row, list) or len(row) != 2 for row in raw)):
        raise ConfigError("[problem] D must be a string or a 2x2 array of strings")
    rows = []
    for row in raw:
        rows.append(tuple(_expr({"D": cell}, "D", "problem") for cell in row))
    try:
        ex._as_matrix(tuple(rows), 2)
    except ex.ExprError as err:
        raise ConfigError(f"[problem] D: {err}") from err
    return tuple(rows)


def _build_problem(tbl, dim, name):
    D = _diffusion(tbl, dim)
    r = _expr(tbl, "r", "problem", "0")
    exact = _expr(tbl, "exact_u", "problem")
    f = _expr(tbl, "f", "problem")
    if exact is not None and f is not None:
        raise ConfigError("[problem] give either exact_u or f, not both")
    if exact is not None:
        try:
            problem = from_exact_solution(exact, D, r, dim, name=name)
        except ex.ExprError as err:
            raise ConfigError(f"[problem] exact_u: {err}") from err
    elif f is not None:
        g = _expr(tbl, "g", "problem", "0")
        hb = _expr(tbl, "h_bottom", "problem")
        ht = _expr(tbl, "h_top", "problem")
        if (hb is None) != (ht is None):
            raise ConfigError("[problem] h_bottom and h_top must come together")
        if dim == 1 and hb is not None:
            raise ConfigError("[problem] flux data h_* applies to 2D only")
        neumann = {} if hb is None else {"bottom": hb, "top": ht}
        try:
            problem = ProblemSpec(dim, D, r, f, g, neumann, exact=None, name=name)
        except (ValueError, ex.ExprError) as err:
            raise ConfigError(f"[problem] {err}") from err
    else:
        raise ConfigError("[problem] needs exact_u or f")

    u_m = _expr(tbl, "manufactured_u", "problem")
    if u_m is not None and ex.polynomial_degree(u_m) is None:
        raise ConfigError("[problem] manufactured_u must be polynomial")
    return problem, u_m


def _build_algo(mesh_tbl, run_tbl, dim):
    kind = mesh_tbl.get("element_kind", "")
    if kind and kind not in KINDS:
        raise ConfigError(f"[mesh] unknown element_kind {kind!r}")
    dist_type = _int(mesh_tbl, "distortion_type", "mesh", 1)
    seed = _int(mesh_tbl, "seed", "mesh", 0)
    env_seed = os.environ.get("FEMOPT_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"FEMOPT_SEED must be an integer, got {env_seed!r}")
    distortion = None
    if dist_type != 1:
        if dim != 1:
            raise ConfigError("[mesh] distortion_type > 1 applies to 1D only")
        magnitude = mesh_tbl.get("magnitude", 0.4)
        if isinstance(magnitude, bool) or not isinstance(magnitude, (int, float)):
            raise ConfigError("[mesh] magnitude must be a number")
        try:
            distortion = DistortionSpec(dist_type, seed, float(magnitude))
        except MeshError as err:
            raise ConfigError(f"[mesh] {err}") from err
    elif "magnitude" in mesh_tbl:
        raise ConfigError("[mesh] magnitude needs distortion_type 2")

    overrides = {}
    if "R_min" in run_tbl:
        overrides["r_min_override"] = _int(run_tbl, "R_min", "run")
    for key, field_name in (("c_s", "c_s"), ("c_r", "c_r_override"),
                            ("N_max", "n_max")):
        if key in run_tbl:
            val = run_tbl[key]
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"[run] {key} must be a number")
            overrides[field_name] = float(val)
    try:
        return AlgoConfig(dim=dim, kind=kind, distortion=distortion, **overrides)
    except PredictorError as err:
        raise ConfigError(str(err)) from err


def _degrees(fem_tbl):
    raw = fem_tbl.get("degrees", [1, 2, 3])
    if isinstance(raw, str):
        parts = raw.split("..")
        if len(parts) != 2:
            raise ConfigError('[fem] degrees string must look like "p_min..p_max"')
        try:
            lo, hi = int(parts[0]), int(parts[1])
        except ValueError:
            raise ConfigError(f"[fem] degrees bounds must be integers, got {raw!r}")
        if lo > hi:
            raise ConfigError("[fem] degrees range is empty")
        degrees = list(range(lo, hi + 1))
    elif isinstance(raw, int) and not isinstance(raw, bool):
        degrees = [raw]
    elif isinstance(raw, list):
        if not raw or any(isinstance(d, bool) or not isinstance(d, int) for d in raw):
            raise ConfigError("[fem] degrees list must hold integers")
        degrees = sorted(set(raw))
    else:
        raise ConfigError("[fem] degrees must be an int, a list, or a range string")
    bad = [d for d in degrees if not 1 <= d <= 5]
    if bad:
        raise ConfigError(f"[fem] degrees must lie in 1..5, got {bad}")
    return tuple(degrees)


def _run_selection(run_tbl):
    mode = run_tbl.get("mode", "both")
    if mode not in MODES:
        raise ConfigError(f"[run] mode must be one of {MODES}, got {mode!r}")
    raw = run_tbl.get("variables", list(VARIABLES))
    if not isinstance(raw, list) or not raw:
        raise ConfigError("[run] variables must be a non-empty list")
    seen = []
    for v in raw:
        if v not in VARIABLES:
            raise ConfigError(f"[run] unknown variable {v!r}")
        if v not in seen:
            seen.append(v)
    variables = tuple(v for v in VARIABLES if v in seen)
    return mode, variables


def _output(out_tbl):
    out_dir = out_tbl.get("directory", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("[output] directory must be a non-empty path string")
    emit_plots = out_tbl.get("emit_plots", True)
    if not isinstance(emit_plots, bool):
        raise ConfigError("[output] emit_plots must be a boolean")
    return out_dir, emit_plots
