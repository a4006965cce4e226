"""Highest-accuracy prediction.

The sequence mirrors the four working steps of the method: NORMALIZATION
estimates ||u||_2 at p=2; PARAMETERIZATION fits the round-off model
(alpha_R, beta_R) per variable on a manufactured problem whose solution is
exactly representable, then rescales the offset by ||u_O||/||u_M||;
PREDICTION refines until the observed order q_h reaches beta_T * c_r, anchors
alpha_T there, and intersects the two error branches; POSTPROCESS solves once
at the realizable level closest to N_opt.  brute_force provides the baseline
(refine until the error rises) and cpu_reduction the pct metric.

A RunContext caches solves and error evaluations per (problem, p, level) so a
level computed for one variable is reused by the others, and it records the
first-computation cost of every item so standalone per-scenario bills can be
assembled afterwards.  Brute-force and prediction runs must use separate
contexts; sharing one would let the methods subsidize each other's timings.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis as an
from . import expr as ex
from . import fem, solver
from .analysis import VARIABLES, derivative_order
from .mesh import DistortionSpec, build as build_mesh, count_dofs
from .problem import ProblemSpec, manufactured_variant

__all__ = [
    "PredictorError",
    "NoAsymptoticRegime",
    "NormalizationError",
    "AlgoConfig",
    "MsPlusFit",
    "MsPlusResult",
    "Prediction",
    "BruteForceResult",
    "RunContext",
    "default_manufactured",
    "normalization",
    "parameterize_msplus",
    "optimal_dofs",
    "realizable_level",
    "predict",
    "postprocess",
    "brute_force",
    "cpu_reduction",
    "run_suite",
    "ScenarioResult",
    "SuiteResult",
]

MAX_LEVEL = 40   # hard stop for refinement loops; N overflows long before


class PredictorError(Exception):
    pass


class NoAsymptoticRegime(PredictorError):
    pass


class NormalizationError(PredictorError):
    def __init__(self, message, last_norm=None):
        super().__init__(message)
        self.last_norm = last_norm


@dataclass(frozen=True)
class AlgoConfig:
    dim: int
    kind: str = ""                   # interval | quad | triangle; "" = by dim
    distortion: Optional[DistortionSpec] = None
    n_max: float = 1e8
    c_s: float = 0.1
    r_min_override: Optional[int] = None
    c_r_override: Optional[float] = None
    ms_start: Optional[int] = None   # first manufactured level
    ms_samples: Optional[int] = None
    max_dofs: int = solver.DEFAULT_MAX_DOFS

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise PredictorError("dim must be 1 or 2")
        kind = self.kind or ("interval" if self.dim == 1 else "quad")
        if (self.dim == 1) != (kind == "interval"):
            raise PredictorError(f"element kind {kind!r} does not fit dim {self.dim}")
        object.__setattr__(self, "kind", kind)

    def r_min(self, p: int) -> int:
        if self.r_min_override is not None:
            return self.r_min_override
        if self.dim == 1:
            return 9 - p if p < 6 else 4
        return max(2, 5 - p)

    def c_r(self, p: int) -> float:
        if self.c_r_override is not None:
            return self.c_r_override
        if p < 4:
            return 0.9
        return 0.7 if p < 10 else 0.5

    def ms_window(self):
        # five doublings span 1.5 decades of N: plenty for a two-parameter
        # log-log fit, and the window stays far cheaper than any real solve
        start = self.ms_start if self.ms_start is not None else (4 if self.dim == 1 else 2)
        count = self.ms_samples if self.ms_samples is not None else 5
        return range(start, start + count)

    def ndofs(self, level: int, p: int) -> int:
        return count_dofs(self.kind, level, p)


DEFAULT_UM = {
    1: "(x - 0.5)^2",
    2: "(x - 0.5)^2 + (x - 0.5)*(y - 0.5) + (y - 0.5)^2",
}


def default_manufactured(dim: int) -> ex.Expr:
    return ex.parse(DEFAULT_UM[dim])


class RunContext:
    """Solve/error cache and cost ledger for one method run.

    Items are keyed ("solve", pid, p, R), ("eval", pid, p, R, var),
    ("normval", pid, p, R), or ("misc", tag); each carries the wall time of
    its first computation.  track() funnels every touched item (hit or miss)
    into caller-owned sets, from which price() builds standalone bills.
    """

    def __init__(self, config: AlgoConfig, problem: ProblemSpec):
        if problem.dim != config.dim:
            raise PredictorError("problem and config dimensions differ")
        self.config = config
        self._pids: dict = {}
        self._keep: list = []
        self._costs: dict = {}
        self._solves: dict = {}
        self._errors: dict = {}
        self._norms: dict = {}
        self._meshes: dict = {}
        self._sinks: list = []
        self._pid(problem)

    def _pid(self, problem) -> int:
        key = id(problem)
        if key not in self._pids:
            self._pids[key] = len(self._pids)
            self._keep.append(problem)
        return self._pids[key]

    @contextmanager
    def track(self, sink: set):
        self._sinks.append(sink)
        try:
            yield sink
        finally:
            self._sinks.pop()

    def _emit(self, item):
        for sink in self._sinks:
            sink.add(item)

    def _mesh(self, level: int):
        if level not in self._meshes:
            self._meshes[level] = build_mesh(self.config.dim, self.config.kind,
                                             level, self.config.distortion)
        return self._meshes[level]

    def solution(self, problem: ProblemSpec, p: int, level: int):
        pid = self._pid(problem)
        key = ("solve", pid, p, level)
        self._emit(key)
        if key not in self._costs:
            t0 = time.perf_counter()
            space = fem.build_space(self._mesh(level), p)
            system = fem.assemble(space, problem)
            U = solver.solve_system(system, max_dofs=self.config.max_dofs)
            self._costs[key] = time.perf_counter() - t0
            self._solves[key] = (space, U)
        return self._solves[key]

    def error_items(self, problem: ProblemSpec, p: int, level: int, variable: str):
        pid = self._pid(problem)
        items = {("eval", pid, p, level, variable), ("solve", pid, p, level)}
        if problem.exact is None:
            items.add(("solve", pid, p, level + 1))
        return items

    def error(self, problem: ProblemSpec, p: int, level: int, variable: str) -> float:
        pid = self._pid(problem)
        space, U = self.solution(problem, p, level)
        if problem.exact is None:
            reference = self.solution(problem, p, level + 1)
        else:
            reference = problem.exact
        key = ("eval", pid, p, level, variable)
        self._emit(key)
        if key not in self._costs:
            t0 = time.perf_counter()
            E = an.l2_error(space, U, reference, derivative_order(variable))
            self._costs[key] = time.perf_counter() - t0
            self._errors[key] = E
        return self._errors[key]

    def norm(self, problem: ProblemSpec, p: int, level: int) -> float:
        pid = self._pid(problem)
        space, U = self.solution(problem, p, level)
        key = ("normval", pid, p, level)
        self._emit(key)
        if key not in self._costs:
            t0 = time.perf_counter()
            val = an.l2_norm(space, U, 0)
            self._costs[key] = time.perf_counter() - t0
            self._norms[key] = val
        return self._norms[key]

    def charge(self, tag: str, seconds: float):
        key = ("misc", tag)
        self._emit(key)
        if key not in self._costs:
            self._costs[key] = seconds

    def price(self, items) -> float:
        return sum(self._costs.get(item, 0.0) for item in items)

    @property
    def total_seconds(self) -> float:
        return sum(self._costs.values())


# ----------------------------------------------------------------- algorithms

def normalization(problem: ProblemSpec, config: AlgoConfig, *,
                  context: Optional[RunContext] = None) -> float:
    """||u_O||_2 estimate at p=2: refine until the norm increment is < c_s."""
    ctx = context if context is not None else RunContext(config, problem)
    p = 2
    level = 0
    prev = ctx.norm(problem, p, level)
    while config.ndofs(level, p) < config.n_max and level < MAX_LEVEL:
        level += 1
        cur = ctx.norm(problem, p, level)
        if abs((cur - prev) / prev) < config.c_s:
            return cur
        prev = cur
    raise NormalizationError(
        f"norm not settled below c_s={config.c_s} within N_max={config.n_max:g}; "
        f"last iterate {prev:.6g}", last_norm=prev)


def _representable_degree(u_m: ex.Expr, config: AlgoConfig) -> int:
    deg = ex.polynomial_degree(u_m)
    if deg is None:
        raise PredictorError("manufactured solution must be polynomial")
    dx, dy, total = deg
    return max(dx, dy) if config.kind == "quad" else total


def parameterize_msplus(problem: ProblemSpec, u_m: ex.Expr, p: int,
                        config: AlgoConfig, *, norm_uo: Optional[float] = None,
                        context: Optional[RunContext] = None) -> "MsPlusResult":
    """Round-off fits from a manufactured problem, offset rescaled by norms.

    Every sample of the manufactured series is round-off dominated because u_M
    is exactly representable at degree p, so a straight power-law fit through
    (N, E) gives (alpha_R_M, beta_R_M) per variable; rescaling each offset by
    ||u_O||/||u_M|| transfers it to the original problem's magnitude.
    """
    ctx = context if context is not None else RunContext(config, problem)
    if _representable_degree(u_m, config) > p:
        raise PredictorError(
            f"manufactured solution degree exceeds p={p}; not representable")
    if norm_uo is None:
        norm_uo = normalization(problem, config, context=ctx)

    t0 = time.perf_counter()
    norm_um = an.l2_norm_expr(u_m, config.dim)
    ctx.charge(f"exprnorm:{ex.to_str(u_m)}", time.perf_counter() - t0)

    mprob = manufactured_variant(problem, u_m)
    levels = [lv for lv in config.ms_window() if config.ndofs(lv, p) <= config.n_max]
    if len(levels) < 3:
        raise PredictorError("fewer than 3 usable manufactured samples")

    fits, series = {}, {}
    for var in VARIABLES:
        s = an.ErrorSeries(var, p, "exact")
        for lv in levels:
            E = ctx.error(mprob, p, lv, var)
            s.add(lv, config.ndofs(lv, p), E, ctx.price(ctx.error_items(mprob, p, lv, var)))
        fit = an.fit_powerlaw(s.ndofs, s.errors)
        if fit.exponent <= 0.0:
            raise PredictorError(
                f"manufactured series for {var} does not rise with N "
                f"(slope {fit.exponent:.3g}); samples are not round-off dominated")
        fits[var] = MsPlusFit(fit.alpha, fit.exponent,
                              fit.alpha * norm_uo / norm_um, fit.rms)
        series[var] = s
    return MsPlusResult(fits, float(norm_uo), float(norm_um), u_m, p, series)


@dataclass(frozen=True)
class MsPlusFit:
    alpha_R_M: float
    beta_R_M: float
    alpha_R_Mplus: float     # alpha_R_M * norm_uO / norm_uM
    rms: float


@dataclass
class MsPlusResult:
    fits: dict               # variable -> MsPlusFit
    norm_uO: float
    norm_uM: float
    u_M: ex.Expr
    degree: int
    series: dict             # variable -> manufactured ErrorSeries

    def alpha_R(self, variable: str) -> float:
        return self.fits[variable].alpha_R_Mplus

    def beta_R(self, variable: str) -> float:
        return self.fits[variable].beta_R_M


def optimal_dofs(alpha_t: float, beta_t: float, alpha_r: float, beta_r: float):
    """Minimizer of E(N) = alpha_T N^-beta_T + alpha_R N^beta_R and its value."""
    if min(alpha_t, beta_t, alpha_r, beta_r) <= 0.0:
        raise PredictorError("error-model coefficients must be positive")
    n_opt = (alpha_t * beta_t / (alpha_r * beta_r)) ** (1.0 / (beta_t + beta_r))
    e_min = alpha_t * n_opt ** (-beta_t) + alpha_r * n_opt ** beta_r
    return n_opt, e_min


def realizable_level(kind: str, p: int, n_opt: float) -> int:
    """Refinement level whose DoF count is nearest n_opt in log N."""
    if n_opt <= count_dofs(kind, 0, p):
        return 0
    for level in range(MAX_LEVEL):
        n_hi = count_dofs(kind, level + 1, p)
        if n_hi >= n_opt:
            n_lo = count_dofs(kind, level, p)
            closer_hi = abs(np.log(n_hi / n_opt)) < abs(np.log(n_opt / n_lo))
            return level + 1 if closer_hi else level
    return MAX_LEVEL


@dataclass
class Prediction:
    variable: str
    p: int
    alpha_T: float
    beta_T: float
    alpha_R: float
    beta_R: float
    n_opt: float
    e_min: float
    achievable: bool
    anchor_level: int
    level_opt: int
    series: an.ErrorSeries


def predict(problem: ProblemSpec, variable: str, p: int, msplus: MsPlusResult,
            config: AlgoConfig, *, context: Optional[RunContext] = None) -> Prediction:
    """Refine from R_min until q_h >= beta_T*c_r, anchor alpha_T, intersect."""
    k = derivative_order(variable)
    if k == 2 and p < 2:
        raise PredictorError("hess requires p >= 2")
    ctx = context if context is not None else RunContext(config, problem)
    _, beta_t = an.expected_q(p, k, config.dim)
    alpha_r = msplus.alpha_R(variable)
    beta_r = msplus.beta_R(variable)
    threshold = beta_t * config.c_r(p)
    mode = problem.reference_mode
    series = an.ErrorSeries(variable, p, mode)

    def sample(level):
        # half-grid references solve one level deeper; keep that under N_max too
        ref_level = level if mode == "exact" else level + 1
        if config.ndofs(ref_level, p) > config.n_max:
            raise NoAsymptoticRegime(
                f"{variable} p={p}: N_max={config.n_max:g} reached at level {level} "
                "before the asymptotic regime was observed")
        E = ctx.error(problem, p, level, variable)
        series.add(level, config.ndofs(level, p), E,
                   ctx.price(ctx.error_items(problem, p, level, variable)))
        return E

    # the refinement loop enters with E_2h and E_h in hand, so the first
    # order estimate compares levels R_min-1 and R_min
    level = max(config.r_min(p), 1)
    e_prev = sample(level - 1)
    e_h = sample(level)
    rising = 0
    while True:
        n_h = config.ndofs(level, p)
        if not n_h < config.n_max:
            raise NoAsymptoticRegime(
                f"{variable} p={p}: N_max={config.n_max:g} reached at level {level} "
                "before the asymptotic regime was observed")
        if not e_h > alpha_r * n_h ** beta_r:
            raise NoAsymptoticRegime(
                f"{variable} p={p}: error fell to the round-off model at level "
                f"{level} before the asymptotic regime was observed")
        q_h = an.convergence_order(e_prev, e_h)
        # three straight error increases mean the floor sits above the fitted
        # round-off model; give up instead of refining to the budget
        rising = rising + 1 if q_h <= 0.0 else 0
        if rising >= 3:
            raise NoAsymptoticRegime(
                f"{variable} p={p}: error grew over three refinements at level "
                f"{level} without reaching the asymptotic regime")
        if q_h >= threshold:
            alpha_t = an.alpha_from_anchor(e_h, n_h, beta_t)
            n_opt, e_min = optimal_dofs(alpha_t, beta_t, alpha_r, beta_r)
            lv_opt = realizable_level(config.kind, p, n_opt)
            achievable = (n_opt <= config.n_max
                          and config.ndofs(lv_opt, p) <= config.max_dofs)
            return Prediction(variable, p, alpha_t, beta_t, alpha_r, beta_r,
                              n_opt, e_min, achievable, level, lv_opt, series)
        e_prev = e_h
        level += 1
        e_h = sample(level)


def postprocess(problem: ProblemSpec, variable: str, p: int,
                prediction: Prediction, config: AlgoConfig, *,
                context: Optional[RunContext] = None):
    """Attain the prediction: one solve at the level nearest N_opt."""
    if not prediction.achievable:
        raise PredictorError(
            f"prediction for {variable} p={p} is not achievable "
            f"(N_opt={prediction.n_opt:.3g} beyond the configured limits)")
    ctx = context if context is not None else RunContext(config, problem)
    level = prediction.level_opt
    ref_level = level if problem.reference_mode == "exact" else level + 1
    if config.ndofs(ref_level, p) > config.max_dofs:
        raise PredictorError(
            f"postprocess solve at level {ref_level} exceeds the memory ceiling")
    e_att = ctx.error(problem, p, level, variable)
    seconds = ctx.price(ctx.error_items(problem, p, level, variable))
    return e_att, seconds


@dataclass
class BruteForceResult:
    n_opt: float
    e_min: float
    seconds: float
    series: an.ErrorSeries
    bracketed: bool

    def __iter__(self):
        yield from (self.n_opt, self.e_min, self.seconds, self.series)


def brute_force(problem: ProblemSpec, variable: str, p: int, config: AlgoConfig,
                *, context: Optional[RunContext] = None) -> BruteForceResult:
    """Refine from R=0 until the error first increases (or the budget ends)."""
    k = derivative_order(variable)
    if k == 2 and p < 2:
        raise PredictorError("hess requires p >= 2")
    ctx = context if context is not None else RunContext(config, problem)
    mode = problem.reference_mode
    series = an.ErrorSeries(variable, p, mode)
    prev = None
    bracketed = False
    for level in range(MAX_LEVEL + 1):
        ref_level = level if mode == "exact" else level + 1
        n_ref = config.ndofs(ref_level, p)
        if n_ref > config.n_max or n_ref > config.max_dofs:
            break
        E = ctx.error(problem, p, level, variable)
        series.add(level, config.ndofs(level, p), E,
                   ctx.price(ctx.error_items(problem, p, level, variable)))
        if prev is not None and E > prev:
            bracketed = True
            break
        prev = E
    if not series.samples:
        raise PredictorError("budget excludes even the coarsest level")
    errors = series.errors
    best = int(np.argmin(errors))
    return BruteForceResult(float(series.ndofs[best]), float(errors[best]),
                            float(series.seconds.sum()), series, bracketed)


def cpu_reduction(t_bf: float, t_predplus: float) -> float:
    """pct = (T_BF - T_PRED+) / T_BF * 100."""
    if t_bf <= 0.0:
        raise PredictorError("brute-force time must be positive")
    return (t_bf - t_predplus) / t_bf * 100.0


# ---------------------------------------------------------------- suite runner

@dataclass
class ScenarioResult:
    variable: str
    p: int
    prediction: Optional[Prediction] = None
    e_attained: Optional[float] = None
    bf: Optional[BruteForceResult] = None
    t_pred: Optional[float] = None       # standalone bill incl. shared stages
    t_bf: Optional[float] = None
    pct: Optional[float] = None
    note: str = ""
    # first-touch marginal costs: summed over scenarios they reproduce the
    # batch totals exactly, which standalone bills cannot (solves are shared)
    t_pred_marginal: Optional[float] = None
    t_bf_marginal: Optional[float] = None


@dataclass
class SuiteResult:
    problem: ProblemSpec
    config: AlgoConfig
    degrees: list
    variables: list
    mode: str
    scenarios: list
    norm_uO: Optional[float] = None
    msplus: Optional[MsPlusResult] = None
    shared_seconds: float = 0.0          # normalization + parameterization
    total_bf_seconds: float = 0.0        # actual batch spend, solves shared
    total_pred_seconds: float = 0.0
    aggregate_pct: Optional[float] = None
    skipped: list = field(default_factory=list)


def run_suite(problem: ProblemSpec, config: AlgoConfig, degrees, variables,
              mode: str = "both", u_m: Optional[ex.Expr] = None) -> SuiteResult:
    """Run BF and/or the prediction pipeline over all (variable, p) scenarios.

    Normalization and parameterization run once per suite (the round-off model
    does not depend on p, so the manufactured fit is shared across degrees);
    refinement solves are shared through each method's own context.
    """
    if mode not in ("bf", "pred", "both"):
        raise PredictorError(f"unknown mode {mode!r}")
    degrees = sorted(set(int(p) for p in degrees))
    variables = list(variables)
    for v in variables:
        derivative_order(v)          # validates the name
    if any(p < 1 or p > 5 for p in degrees):
        raise PredictorError("degrees must lie in 1..5")

    result = SuiteResult(problem, config, degrees, variables, mode, [])
    scenarios = []
    for p in degrees:
        for v in variables:
            if v == "hess" and p < 2:
                result.skipped.append((v, p, "hess needs p >= 2"))
                continue
            scenarios.append((v, p))

    bf_ctx = RunContext(config, problem) if mode in ("bf", "both") else None
    pred_ctx = RunContext(config, problem) if mode in ("pred", "both") else None

    shared_items = set()
    if pred_ctx is not None:
        with pred_ctx.track(shared_items):
            result.norm_uO = normalization(problem, config, context=pred_ctx)
            if u_m is None:
                u_m = default_manufactured(config.dim)
            p_m = max(2, _representable_degree(u_m, config))
            result.msplus = parameterize_msplus(
                problem, u_m, p_m, config, norm_uo=result.norm_uO, context=pred_ctx)
        result.shared_seconds = pred_ctx.price(shared_items)

    seen_bf = set()
    seen_pred = set(shared_items)
    for v, p in scenarios:
        sc = ScenarioResult(v, p)
        if bf_ctx is not None:
            bf_items = set()
            with bf_ctx.track(bf_items):
                sc.bf = brute_force(problem, v, p, config, context=bf_ctx)
            sc.t_bf = sc.bf.seconds
            sc.t_bf_marginal = bf_ctx.price(bf_items - seen_bf)
            seen_bf |= bf_items
            if not sc.bf.bracketed:
                sc.note = "minimum not bracketed"
        if pred_ctx is not None:
            items = set()
            try:
                with pred_ctx.track(items):
                    sc.prediction = predict(problem, v, p, result.msplus,
                                            config, context=pred_ctx)
                    if sc.prediction.achievable:
                        sc.e_attained, _ = postprocess(
                            problem, v, p, sc.prediction, config, context=pred_ctx)
                    else:
                        sc.note = (sc.note + "; " if sc.note else "") + \
                            "N_opt beyond budget, optimum not computed"
            except PredictorError as err:
                sc.note = (sc.note + "; " if sc.note else "") + str(err)
            sc.t_pred = pred_ctx.price(items | shared_items)
            sc.t_pred_marginal = pred_ctx.price(items - seen_pred)
            seen_pred |= items
            if sc.t_bf is not None and sc.t_bf > 0.0 and sc.prediction is not None:
                sc.pct = cpu_reduction(sc.t_bf, sc.t_pred)
        result.scenarios.append(sc)

    if bf_ctx is not None:
        result.total_bf_seconds = bf_ctx.total_seconds
    if pred_ctx is not None:
        result.total_pred_seconds = pred_ctx.total_seconds
    if bf_ctx is not None and pred_ctx is not None and result.total_bf_seconds > 0.0:
        result.aggregate_pct = cpu_reduction(result.total_bf_seconds,
                                             result.total_pred_seconds)
    return result
