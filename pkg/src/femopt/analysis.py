"""Error measurement and model fitting.

L2 norms/errors of discrete solutions and their derivatives, observed
convergence orders q_h = log2(E_2h / E_h), and least-squares power-law fits
E = alpha * N^exponent in log10-log10 coordinates.  Derivative errors in 2D
combine components: the full gradient, and the Frobenius norm of the Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import fem, mesh

__all__ = [
    "AnalysisError",
    "ErrorSeries",
    "PowerLawFit",
    "VARIABLES",
    "derivative_order",
    "l2_norm",
    "l2_error",
    "l2_norm_expr",
    "convergence_order",
    "expected_q",
    "fit_powerlaw",
    "alpha_from_anchor",
    "pre_roundoff_orders",
    "roundoff_branch",
]

VARIABLES = ("u", "grad", "hess")


class AnalysisError(Exception):
    pass


def derivative_order(variable: str) -> int:
    try:
        return VARIABLES.index(variable)
    except ValueError:
        raise AnalysisError(f"unknown variable {variable!r}, expected one of {VARIABLES}")


@dataclass
class ErrorSeries:
    variable: str                 # u | grad | hess
    degree: int
    reference_mode: str           # exact | half-grid
    samples: list = field(default_factory=list)   # (R, N, E_h, seconds)

    def add(self, level: int, ndofs: int, error: float, seconds: float):
        if self.samples and level <= self.samples[-1][0]:
            raise AnalysisError("series levels must be strictly increasing")
        self.samples.append((int(level), int(ndofs), float(error), float(seconds)))

    @property
    def levels(self):
        return np.array([s[0] for s in self.samples], dtype=int)

    @property
    def ndofs(self):
        return np.array([s[1] for s in self.samples], dtype=float)

    @property
    def errors(self):
        return np.array([s[2] for s in self.samples])

    @property
    def seconds(self):
        return np.array([s[3] for s in self.samples])

    def orders(self):
        """Observed q_h per sample; the first entry has no predecessor (nan)."""
        E = self.errors
        out = np.full(len(E), np.nan)
        if len(E) > 1:
            out[1:] = np.log2(E[:-1] / E[1:])
        return out


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    exponent: float     # E = alpha * N**exponent; negative for truncation fits
    rms: float          # fit residual in decades

    @property
    def beta(self) -> float:
        return abs(self.exponent)

    def predict(self, ndofs) -> np.ndarray:
        return self.alpha * np.asarray(ndofs, dtype=float) ** self.exponent


def _component_exprs(u: ex.Expr, dim: int, k: int):
    """Reference components matching eval_at_quadrature's layout."""
    if k == 0:
        return [u]
    ux = ex.differentiate(u, "x")
    if dim == 1:
        return [ux] if k == 1 else [ex.differentiate(ux, "x")]
    uy = ex.differentiate(u, "y")
    if k == 1:
        return [ux, uy]
    uxy = ex.differentiate(ux, "y")
    return [ex.differentiate(ux, "x"), uxy, uxy, ex.differentiate(uy, "y")]


def _reference_values(reference, X, dim: int, k: int):
    npts = X.shape[0] * X.shape[1]
    flat = X.reshape(-1, dim)
    x = flat[:, 0]
    y = flat[:, 1] if dim == 2 else None
    if isinstance(reference, tuple):
        fine_space, fine_u = reference
        vals = fem.evaluate_many(fine_space, fine_u, flat, k)
        return vals.reshape(npts, -1)
    comps = _component_exprs(reference, dim, k)
    cols = [np.broadcast_to(np.asarray(ex.evaluate(c, x, y), dtype=float), (npts,))
            for c in comps]
    return np.column_stack(cols)


def l2_norm(space: fem.FeSpace, U, k: int = 0) -> float:
    """L2 norm of u_h, |grad u_h|, or the Hessian Frobenius norm."""
    _, W = fem.quadrature_fields(space)
    vals = fem.eval_at_quadrature(space, U, k).reshape(*W.shape, -1)
    return float(np.sqrt(np.sum(W * np.sum(vals * vals, axis=-1))))


def l2_error(space: fem.FeSpace, U, reference, k: int = 0) -> float:
    """L2 distance between u_h (or a derivative) and a reference.

    The reference is either an exact expression or ``(fine_space, fine_u)``,
    the same variable discretized with grid size h/2, evaluated at the coarse
    quadrature points.
    """
    X, W = fem.quadrature_fields(space)
    got = fem.eval_at_quadrature(space, U, k).reshape(*W.shape, -1)
    want = _reference_values(reference, X, space.dim, k).reshape(got.shape)
    diff = got - want
    return float(np.sqrt(np.sum(W * np.sum(diff * diff, axis=-1))))


def l2_norm_expr(e: ex.Expr, dim: int, k: int = 0, level: int = 6) -> float:
    """Continuous L2 norm of an expression by fine-grid quadrature."""
    kind = "interval" if dim == 1 else "quad"
    space = fem.build_space(mesh.build(dim, kind, level), 3)
    X, W = fem.quadrature_fields(space)
    vals = _reference_values(e, X, dim, k)
    return float(np.sqrt(np.sum(W * np.sum(vals * vals, axis=-1).reshape(W.shape))))


def convergence_order(error_coarse: float, error_fine: float) -> float:
    """Observed order q_h = log2(E_2h / E_h) for one refinement step."""
    if error_coarse <= 0.0 or error_fine <= 0.0:
        raise AnalysisError("convergence order needs positive errors")
    return float(np.log2(error_coarse / error_fine))


def expected_q(p: int, k: int, dim: int):
    """Asymptotic L2 order q = p + 1 - k and DoF exponent beta_T = q / dim."""
    q = p + 1 - k
    return q, q / dim


def fit_powerlaw(ndofs, errors) -> PowerLawFit:
    N = np.asarray(ndofs, dtype=float)
    E = np.asarray(errors, dtype=float)
    if N.shape != E.shape or N.size < 2:
        raise AnalysisError("power-law fit needs at least two (N, E) samples")
    if np.any(N <= 0.0) or np.any(E <= 0.0):
        raise AnalysisError("power-law fit needs positive N and E")
    logN, logE = np.log10(N), np.log10(E)
    slope, intercept = np.polyfit(logN, logE, 1)
    rms = float(np.sqrt(np.mean((logE - (slope * logN + intercept)) ** 2)))
    return PowerLawFit(float(10.0 ** intercept), float(slope), rms)


def alpha_from_anchor(error: float, ndofs: float, beta_t: float) -> float:
    """Truncation prefactor pinned at one sample: alpha_T = E * N^beta_T."""
    return float(error * ndofs ** beta_t)


def pre_roundoff_orders(series: ErrorSeries, guard: float = 50.0):
    """Observed orders restricted to samples safely above the error floor.

    A step counts only when both its endpoints sit at least ``guard`` times
    above the series minimum, keeping round-off out of the order estimate.
    """
    E = series.errors
    if len(E) < 2:
        return np.array([])
    floor = guard * E.min()
    q = series.orders()
    ok = (E[1:] >= floor) & (E[:-1] >= floor)
    return q[1:][ok]


def roundoff_branch(ndofs, errors, min_samples: int = 3):
    """Indices of the rising branch strictly past the error minimum."""
    E = np.asarray(errors, dtype=float)
    idx = np.arange(len(E))[int(np.argmin(E)) + 1:]
    if len(idx) < min_samples:
        raise AnalysisError(
            f"need {min_samples} samples past the minimum, have {len(idx)}")
    return idx
