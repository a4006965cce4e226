"""Quadrature rules on the reference interval, square, and triangle.

Volume rules use p+2 Gauss points per direction so that stiffness/mass
integrands of degree 2p are integrated exactly with headroom; the triangle
rule is a collapsed (Duffy) Gauss-Legendre x Gauss-Jacobi product of the same
strength, exact for total degree <= 2p+2.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

__all__ = ["gauss_legendre_01", "volume_rule", "facet_rule"]


@lru_cache(maxsize=None)
def gauss_legendre_01(n: int):
    """n-point Gauss-Legendre rule mapped to [0,1]."""
    t, w = leggauss(n)
    return (t + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _gauss_jacobi_01(n: int):
    # nodes/weights for integrals of the form int_0^1 (1-s) g(s) ds
    t, w = roots_jacobi(n, 1.0, 0.0)
    return (t + 1.0) / 2.0, w / 4.0


@lru_cache(maxsize=None)
def volume_rule(kind: str, p: int):
    """Reference-element rule for degree p: (points (nq, dim), weights (nq,))."""
    n = p + 2
    x, w = gauss_legendre_01(n)
    if kind == "interval":
        return x.reshape(-1, 1), w.copy()
    if kind == "quad":
        xi, eta = np.meshgrid(x, x, indexing="ij")
        wx, wy = np.meshgrid(w, w, indexing="ij")
        pts = np.column_stack([xi.ravel(), eta.ravel()])
        return pts, (wx * wy).ravel()
    if kind == "triangle":
        s, ws = _gauss_jacobi_01(n)       # collapsed direction, weight (1-s)
        t, wt = gauss_legendre_01(n)
        S, T = np.meshgrid(s, t, indexing="ij")
        WS, WT = np.meshgrid(ws, wt, indexing="ij")
        pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
        return pts, (WS * WT).ravel()
    raise ValueError(f"unknown element kind {kind!r}")


@lru_cache(maxsize=None)
def facet_rule(p: int):
    """1D rule on [0,1] for boundary-edge integrals in 2D."""
    return gauss_legendre_01(p + 2)
