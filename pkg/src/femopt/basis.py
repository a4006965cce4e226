"""Reference Lagrange elements with equidistant support points, degrees 1..5.

Coefficients of every shape function are computed once per (kind, degree) in
exact rational arithmetic (the support points are rational), then frozen as
float64 monomial coefficients.  That keeps the Kronecker property, partition
of unity, and derivative tables clean to machine precision without any
runtime linear solves.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

__all__ = ["ReferenceElement", "reference_element", "BasisError"]


class BasisError(Exception):
    pass


def _invert_exact(mat):
    """Exact inverse of a list-of-lists Fraction matrix (Gauss-Jordan)."""
    n = len(mat)
    a = [row[:] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(mat)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise BasisError("singular Vandermonde; support points are not unisolvent")
        a[col], a[piv] = a[piv], a[col]
        inv = Fraction(1) / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [vr - f * vc for vr, vc in zip(a[r], a[col])]
    return [row[n:] for row in a]


def _lagrange_coeffs_1d(p):
    """coeffs[i][k]: coefficient of t^k in the i-th 1D Lagrange polynomial."""
    nodes = [Fraction(i, p) for i in range(p + 1)]
    vand = [[t ** k for k in range(p + 1)] for t in nodes]
    inv = _invert_exact(vand)
    # L_i(t_j) = delta_ij  <=>  sum_k C[i][k] V[j][k] = delta_ij
    return [[inv[k][i] for k in range(p + 1)] for i in range(p + 1)]


@lru_cache(maxsize=None)
def _bary_data(p):
    """Barycentric weights and nodal differentiation matrices, equidistant nodes."""
    x = np.arange(p + 1) / p
    w = np.array([(-1.0) ** j * comb(p, j) for j in range(p + 1)])
    d1 = np.zeros((p + 1, p + 1))
    for i in range(p + 1):
        for j in range(p + 1):
            if i != j:
                d1[i, j] = (w[j] / w[i]) / (x[i] - x[j])
        d1[i, i] = -d1[i].sum()
    # Welfert's recursion for the second-derivative matrix
    d2 = np.zeros_like(d1)
    for i in range(p + 1):
        for j in range(p + 1):
            if i != j:
                d2[i, j] = 2.0 * d1[i, j] * (d1[i, i] - 1.0 / (x[i] - x[j]))
        d2[i, i] = -d2[i].sum()
    return x, w, d1, d2


def _lagrange_1d(p, t):
    """Values and first two derivatives of the 1D basis at t, each (npts, p+1).

    Values use the barycentric form; derivatives use l_j' = l_j * sig1_j and
    l_j'' = l_j * (sig1_j^2 - sig2_j), where sig_m excludes node j. Both are
    backward stable at every degree, unlike expanded monomial coefficients
    whose alternating signs cost ~2 digits by p=5. The exclusion sums come
    from a zero-diagonal matmul so nothing large is ever subtracted out.
    """
    x, w, d1, d2 = _bary_data(p)
    t = np.asarray(t, dtype=float).reshape(-1)
    diff = t[:, None] - x[None, :]
    hit = diff == 0.0
    on_node = hit.any(axis=1)
    safe = np.where(hit, 1.0, diff)
    r = w / safe
    inv = 1.0 / safe
    denom = r.sum(axis=1)
    # on a node the placeholder weights sum to zero; those rows are replaced
    # with exact nodal data below, the denominator just has to stay finite
    denom[on_node] = 1.0
    vals = r / denom[:, None]
    off = 1.0 - np.eye(p + 1)
    sig1 = inv @ off
    sig2 = (inv * inv) @ off
    der1 = vals * sig1
    bracket = sig1 * sig1 - sig2
    # near a node the two terms agree to ~1/d^2 and their difference loses
    # digits; expand around the dominant term instead, which is exact
    adist = np.abs(diff)
    near = (adist.min(axis=1) < 1e-4) & ~on_node
    if near.any():
        sub = inv[near]
        idx = adist[near].argmin(axis=1)
        rows = np.arange(sub.shape[0])
        big = sub[rows, idx]
        sub[rows, idx] = 0.0
        a = sub @ off
        b = (sub * sub) @ off
        extra = 2.0 * big[:, None] * a
        extra[rows, idx] = 0.0
        bracket[near] = a * a - b + extra
    der2 = vals * bracket
    if on_node.any():
        idx = hit[on_node].argmax(axis=1)
        vals[on_node] = np.eye(p + 1)[idx]
        der1[on_node] = d1[idx]
        der2[on_node] = d2[idx]
    return vals, der1, der2


@dataclass(frozen=True)
class ReferenceElement:
    kind: str
    degree: int
    nodes: np.ndarray        # (nloc, dim) support points on the reference cell
    powers: np.ndarray       # (nterms, dim) monomial exponents
    coeffs: np.ndarray       # (nloc, nterms) float monomial coefficients
    entity: tuple            # per local dof: ("vertex"|"edge"|"interior", id, pos)
    edges: tuple             # local edges as (local vertex a, local vertex b)
    corners: np.ndarray      # (nverts, dim) reference corner coordinates

    @property
    def nloc(self):
        return self.nodes.shape[0]

    @property
    def dim(self):
        return self.nodes.shape[1]

    def _line(self, t):
        # stable 1D tables for tensor kinds; monomial coefficients at p=4..5
        # lose ~2 digits to cancellation, which pollutes round-off floors
        return _lagrange_1d(self.degree, t)

    def _mono(self, points, d):
        """Monomial table with derivative multi-order d, shape (npts, nterms)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        out = np.ones((pts.shape[0], self.powers.shape[0]))
        for axis in range(self.dim):
            k = self.powers[:, axis].astype(float)
            fall = np.ones_like(k)
            for step in range(d[axis]):
                fall = fall * np.maximum(k - step, 0.0)
            expo = np.maximum(self.powers[:, axis] - d[axis], 0)
            dead = self.powers[:, axis] < d[axis]
            col = pts[:, axis][:, None] ** expo[None, :] * fall[None, :]
            col[:, dead] = 0.0
            out = out * col
        return out

    def eval(self, points):
        """Shape function values, (npts, nloc)."""
        if self.kind == "interval":
            return self._line(np.asarray(points, dtype=float).reshape(-1))[0]
        if self.kind == "quad":
            pts = np.asarray(points, dtype=float).reshape(-1, 2)
            ls = self._line(pts[:, 0])[0]
            lt = self._line(pts[:, 1])[0]
            return np.einsum("pj,pi->pji", lt, ls).reshape(pts.shape[0], -1)
        d = (0,) * self.dim
        return self._mono(points, d) @ self.coeffs.T

    def grad(self, points):
        """Reference gradients, (npts, nloc, dim)."""
        if self.kind == "interval":
            return self._line(np.asarray(points, dtype=float).reshape(-1))[1][:, :, None]
        if self.kind == "quad":
            pts = np.asarray(points, dtype=float).reshape(-1, 2)
            ls, d1s, _ = self._line(pts[:, 0])
            lt, d1t, _ = self._line(pts[:, 1])
            n = pts.shape[0]
            gx = np.einsum("pj,pi->pji", lt, d1s).reshape(n, -1)
            gy = np.einsum("pj,pi->pji", d1t, ls).reshape(n, -1)
            return np.stack([gx, gy], axis=-1)
        cols = [self._mono(points, tuple(int(a == axis) for a in range(self.dim))) @ self.coeffs.T
                for axis in range(self.dim)]
        return np.stack(cols, axis=-1)

    def hess(self, points):
        """Reference second derivatives, (npts, nloc, dim, dim)."""
        if self.kind == "interval":
            d2 = self._line(np.asarray(points, dtype=float).reshape(-1))[2]
            return d2[:, :, None, None]
        if self.kind == "quad":
            pts = np.asarray(points, dtype=float).reshape(-1, 2)
            ls, d1s, d2s = self._line(pts[:, 0])
            lt, d1t, d2t = self._line(pts[:, 1])
            n = pts.shape[0]
            out = np.empty((n, self.nloc, 2, 2))
            out[:, :, 0, 0] = np.einsum("pj,pi->pji", lt, d2s).reshape(n, -1)
            out[:, :, 1, 1] = np.einsum("pj,pi->pji", d2t, ls).reshape(n, -1)
            mixed = np.einsum("pj,pi->pji", d1t, d1s).reshape(n, -1)
            out[:, :, 0, 1] = mixed
            out[:, :, 1, 0] = mixed
            return out
        npts = np.asarray(points).reshape(-1, self.dim).shape[0]
        out = np.empty((npts, self.nloc, self.dim, self.dim))
        for a1 in range(self.dim):
            for a2 in range(a1, self.dim):
                d = [0] * self.dim
                d[a1] += 1
                d[a2] += 1
                vals = self._mono(points, tuple(d)) @ self.coeffs.T
                out[:, :, a1, a2] = vals
                out[:, :, a2, a1] = vals
        return out


def _interval_element(p):
    coeffs = _lagrange_coeffs_1d(p)
    nodes = np.array([[i / p] for i in range(p + 1)])
    powers = np.arange(p + 1).reshape(-1, 1)
    entity = []
    for i in range(p + 1):
        if i == 0:
            entity.append(("vertex", 0, 0))
        elif i == p:
            entity.append(("vertex", 1, 0))
        else:
            entity.append(("interior", 0, i - 1))
    return ReferenceElement(
        "interval", p, nodes, powers,
        np.array([[float(c) for c in row] for row in coeffs]),
        tuple(entity), (), np.array([[0.0], [1.0]]),
    )


def _quad_element(p):
    c1 = _lagrange_coeffs_1d(p)
    nloc = (p + 1) ** 2
    nodes = np.empty((nloc, 2))
    powers = np.empty((nloc, 2), dtype=int)
    coeffs = np.zeros((nloc, nloc))
    # local dof (i,j) -> l = j*(p+1)+i; monomial (kx,ky) -> m = ky*(p+1)+kx
    for j in range(p + 1):
        for i in range(p + 1):
            l = j * (p + 1) + i
            nodes[l] = (i / p, j / p)
            for ky in range(p + 1):
                for kx in range(p + 1):
                    coeffs[l, ky * (p + 1) + kx] = float(c1[i][kx] * c1[j][ky])
    for ky in range(p + 1):
        for kx in range(p + 1):
            powers[ky * (p + 1) + kx] = (kx, ky)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    edges = ((0, 1), (1, 2), (3, 2), (0, 3))
    entity = []
    interior = 0
    for j in range(p + 1):
        for i in range(p + 1):
            at_i0, at_ip = i == 0, i == p
            at_j0, at_jp = j == 0, j == p
            if at_i0 and at_j0:
                entity.append(("vertex", 0, 0))
            elif at_ip and at_j0:
                entity.append(("vertex", 1, 0))
            elif at_ip and at_jp:
                entity.append(("vertex", 2, 0))
            elif at_i0 and at_jp:
                entity.append(("vertex", 3, 0))
            elif at_j0:
                entity.append(("edge", 0, i))
            elif at_ip:
                entity.append(("edge", 1, j))
            elif at_jp:
                entity.append(("edge", 2, i))
            elif at_i0:
                entity.append(("edge", 3, j))
            else:
                entity.append(("interior", 0, interior))
                interior += 1
    return ReferenceElement("quad", p, nodes, powers, coeffs, tuple(entity), edges, corners)


def _triangle_element(p):
    lattice = [(i, j) for j in range(p + 1) for i in range(p + 1 - j)]
    mono = [(a, b) for b in range(p + 1) for a in range(p + 1 - b)]
    vand = [[Fraction(i, p) ** a * Fraction(j, p) ** b for (a, b) in mono] for (i, j) in lattice]
    inv = _invert_exact(vand)
    nloc = len(lattice)
    coeffs = np.array([[float(inv[m][l]) for m in range(nloc)] for l in range(nloc)])
    nodes = np.array([(i / p, j / p) for (i, j) in lattice])
    powers = np.array(mono, dtype=int)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    edges = ((0, 1), (0, 2), (1, 2))
    entity = []
    interior = 0
    for (i, j) in lattice:
        if (i, j) == (0, 0):
            entity.append(("vertex", 0, 0))
        elif (i, j) == (p, 0):
            entity.append(("vertex", 1, 0))
        elif (i, j) == (0, p):
            entity.append(("vertex", 2, 0))
        elif j == 0:
            entity.append(("edge", 0, i))
        elif i == 0:
            entity.append(("edge", 1, j))
        elif i + j == p:
            entity.append(("edge", 2, j))
        else:
            entity.append(("interior", 0, interior))
            interior += 1
    return ReferenceElement("triangle", p, nodes, powers, coeffs, tuple(entity), edges, corners)


@lru_cache(maxsize=None)
def reference_element(kind: str, p: int) -> ReferenceElement:
    """Cached reference element for the given kind and degree."""
    if not isinstance(p, (int, np.integer)) or not 1 <= p <= 5:
        raise BasisError(f"polynomial degree must be 1..5, got {p!r}")
    if kind == "interval":
        return _interval_element(p)
    if kind == "quad":
        return _quad_element(p)
    if kind == "triangle":
        return _triangle_element(p)
    raise BasisError(f"unknown element kind {kind!r}")
