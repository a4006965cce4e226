"""Problem container: -div(D grad u) + r u = f with the fixed BC layout.

Dirichlet data g applies to the left/right boundaries (both endpoints in 1D),
Neumann data h = D grad(u) . n to the bottom/top boundaries (2D only).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import expr as ex
from .expr import Const, Expr

__all__ = ["ProblemSpec", "from_exact_solution", "manufactured_variant"]


@dataclass(frozen=True)
class ProblemSpec:
    dim: int
    diffusion: object               # Expr (scalar) or symmetric 2x2 tuple of Expr
    reaction: Expr
    source: Expr                    # f
    dirichlet: Expr                 # g, evaluated on the left/right boundary
    neumann: dict = field(default_factory=dict)   # side -> Expr (2D)
    exact: Optional[Expr] = None
    name: str = "problem"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.dim == 2 and set(self.neumann) not in (set(), {"bottom", "top"}):
            raise ValueError("2D Neumann data must cover bottom and top (or neither)")

    @property
    def diffusion_matrix(self):
        """Diffusion normalized to assembly form (scalar in 1D, 2x2 in 2D)."""
        return ex._as_matrix(self.diffusion, self.dim)

    @property
    def reference_mode(self) -> str:
        return "exact" if self.exact is not None else "half-grid"


def from_exact_solution(u: Expr, D, r: Expr, dim: int, name: str = "problem") -> ProblemSpec:
    """Derive f, g, h from a chosen solution u (method of manufactured solutions)."""
    f = ex.manufacture_rhs(u, D, r, dim)
    neumann = ex.conormal_flux(u, D, dim) if dim == 2 else {}
    return ProblemSpec(dim, D, r, f, u, neumann, exact=u, name=name)


def manufactured_variant(base: ProblemSpec, u_m: Expr) -> ProblemSpec:
    """Same operator and BC types as ``base`` but with solution forced to u_m."""
    return from_exact_solution(u_m, base.diffusion, base.reaction, base.dim,
                               name=f"{base.name}-manufactured")
