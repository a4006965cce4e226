"""Direct sparse solves.

Thin wrapper over SuperLU keeping the two policies in one place: a hard dof
ceiling (prediction runs must refuse rather than swap) and error mapping for
singular factorizations.  Solves are deterministic: same matrix bits in, same
solution bits out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

__all__ = ["SolverError", "SingularMatrixError", "Factorization",
           "factorize", "solve_system", "DEFAULT_MAX_DOFS"]

DEFAULT_MAX_DOFS = 100_000_000


class SolverError(Exception):
    pass


class SingularMatrixError(SolverError):
    pass


@dataclass
class Factorization:
    ndofs: int
    _lu: object

    def solve(self, rhs) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        if b.shape != (self.ndofs,):
            raise SolverError(f"rhs has shape {b.shape}, expected ({self.ndofs},)")
        return self._lu.solve(b)


def factorize(A, max_dofs: int = DEFAULT_MAX_DOFS) -> Factorization:
    n = A.shape[0]
    if A.shape[1] != n:
        raise SolverError("matrix must be square")
    if n > max_dofs:
        raise SolverError(f"system size {n} exceeds the dof ceiling {max_dofs}")
    try:
        lu = splu(sparse.csc_matrix(A))
    except RuntimeError as exc:
        if "singular" in str(exc).lower():
            raise SingularMatrixError(str(exc)) from exc
        raise SolverError(str(exc)) from exc
    return Factorization(n, lu)


def solve_system(system, max_dofs: int = DEFAULT_MAX_DOFS) -> np.ndarray:
    """Factor and solve an assembled system in one step."""
    return factorize(system.matrix, max_dofs).solve(system.rhs)
