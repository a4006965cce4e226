"""Finite element spaces, system assembly, and solution evaluation.

Degrees of freedom are numbered entity-wise: all vertex dofs first (equal to
the mesh vertex ids), then p-1 dofs per mesh edge, then the element interiors.
Shared edge dofs are oriented away from the smaller global vertex id so both
neighbours agree on the ordering.  All cell maps are affine with constant
Jacobians, which the assembly loops exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from . import expr as ex
from .basis import ReferenceElement, reference_element
from .mesh import Mesh, count_dofs, neumann_facets
from .quadrature import facet_rule, volume_rule

__all__ = [
    "FemError",
    "FeSpace",
    "AssembledSystem",
    "build_space",
    "assemble",
    "evaluate",
    "evaluate_many",
    "interpolate",
    "quadrature_fields",
    "eval_at_quadrature",
]

CHUNK = 32768   # elements per assembly block, bounds peak working memory


class FemError(Exception):
    pass


@dataclass
class FeSpace:
    mesh: Mesh
    degree: int
    ref: ReferenceElement
    dof_map: np.ndarray          # (ne, nloc) global dof per local dof
    ndofs: int
    support: np.ndarray          # (ndofs, dim) dof support coordinates
    dirichlet_dofs: np.ndarray   # sorted global ids on the left/right boundary
    origins: np.ndarray          # (ne, dim) image of the reference origin
    jac: np.ndarray              # (ne, dim, dim) constant Jacobians
    jinv: np.ndarray             # (ne, dim, dim)
    det: np.ndarray              # (ne,)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.mesh.dim


@dataclass
class AssembledSystem:
    matrix: sparse.csr_matrix    # symmetric, Dirichlet rows/cols eliminated
    rhs: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray

    @property
    def ndofs(self) -> int:
        return self.rhs.shape[0]

    @property
    def dirichlet_map(self) -> dict:
        return dict(zip(self.dirichlet_dofs.tolist(), self.dirichlet_values.tolist()))


def _geometry(mesh: Mesh):
    elems = mesh.elements
    if mesh.dim == 1:
        vx = mesh.vertices[:, 0]
        h = vx[elems[:, 1]] - vx[elems[:, 0]]
        if np.any(h <= 0.0):
            raise FemError("degenerate interval element")
        origins = vx[elems[:, 0]].reshape(-1, 1)
        jac = h.reshape(-1, 1, 1)
        jinv = 1.0 / jac
        return origins, jac, jinv, h.copy()
    verts = mesh.vertices[elems]                     # (ne, nverts, 2)
    origins = verts[:, 0].copy()
    jac = np.empty((len(elems), 2, 2))
    jac[:, :, 0] = verts[:, 1] - verts[:, 0]
    other = 3 if mesh.kind == "quad" else 2          # corner across the t axis
    jac[:, :, 1] = verts[:, other] - verts[:, 0]
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0.0):
        raise FemError("degenerate or inverted element")
    jinv = np.empty_like(jac)
    jinv[:, 0, 0] = jac[:, 1, 1] / det
    jinv[:, 1, 1] = jac[:, 0, 0] / det
    jinv[:, 0, 1] = -jac[:, 0, 1] / det
    jinv[:, 1, 0] = -jac[:, 1, 0] / det
    return origins, jac, jinv, det


def _edge_table(mesh: Mesh, ref: ReferenceElement):
    """Global edge ids per (element, local edge), ids in lexicographic order."""
    elems = mesh.elements
    pairs = np.stack([np.sort(elems[:, list(e)], axis=1) for e in ref.edges], axis=1)
    flat = pairs.reshape(-1, 2)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return uniq, inverse.reshape(len(elems), len(ref.edges))


def build_space(mesh: Mesh, degree: int) -> FeSpace:
    ref = reference_element(mesh.kind, degree)
    p = degree
    ne = mesh.num_elements
    nv = mesh.num_vertices
    origins, jac, jinv, det = _geometry(mesh)

    n_int = sum(1 for kind, _, _ in ref.entity if kind == "interior")
    if mesh.dim == 2 and p >= 2:
        uniq_edges, edge_ids = _edge_table(mesh, ref)
        n_edges = len(uniq_edges)
    else:
        uniq_edges, edge_ids, n_edges = None, None, 0
    int_base = nv + n_edges * (p - 1)
    ndofs = int_base + ne * n_int
    if mesh.dim == 1:
        # 1D interiors double as the edge dofs of the closed-form count
        ndofs = nv + ne * n_int
    if ndofs != count_dofs(mesh.kind, mesh.level, p):
        raise FemError("dof enumeration disagrees with the closed-form count")

    dof_map = np.empty((ne, ref.nloc), dtype=np.int64)
    elems = mesh.elements
    for l, (kind, eid, pos) in enumerate(ref.entity):
        if kind == "vertex":
            dof_map[:, l] = elems[:, eid]
        elif kind == "interior":
            dof_map[:, l] = int_base + np.arange(ne) * n_int + pos
        else:
            la, lb = ref.edges[eid]
            ga, gb = elems[:, la], elems[:, lb]
            off = np.where(ga < gb, pos - 1, p - 1 - pos)
            dof_map[:, l] = nv + edge_ids[:, eid] * (p - 1) + off

    phys = origins[:, None, :] + np.einsum("eij,lj->eli", jac, ref.nodes)
    support = np.empty((ndofs, mesh.dim))
    support[dof_map.reshape(-1)] = phys.reshape(-1, mesh.dim)

    # left/right boundary support lands exactly on 0.0 / 1.0 (grid coordinates
    # are i/2^R and the affine maps keep the boundary columns exact)
    sx = support[:, 0]
    dirichlet = np.nonzero((sx == 0.0) | (sx == 1.0))[0].astype(np.int64)

    return FeSpace(mesh, p, ref, dof_map, ndofs, support, dirichlet,
                   origins, jac, jinv, det)


def _coef_values(e, x, y):
    vals = ex.evaluate(e, x, y)
    return np.broadcast_to(np.asarray(vals, dtype=float), x.shape)


@lru_cache(maxsize=None)
def _volume_tables(kind, degree):
    """Quadrature rule with basis tables at its points, built once per pair."""
    qp, qw = volume_rule(kind, degree)
    ref = reference_element(kind, degree)
    B = ref.eval(qp)
    G = ref.grad(qp)
    for a in (B, G):
        a.setflags(write=False)
    return qp, qw, B, G


@lru_cache(maxsize=None)
def _hess_table(kind, degree):
    qp, _ = volume_rule(kind, degree)
    H = reference_element(kind, degree).hess(qp)
    H.setflags(write=False)
    return H


def assemble(space: FeSpace, problem) -> AssembledSystem:
    if problem.dim != space.dim:
        raise FemError("problem and space dimensions differ")
    mesh, p = space.mesh, space.degree
    qp, qw, B, G = _volume_tables(mesh.kind, p)
    nq, nloc = B.shape
    dmat = problem.diffusion_matrix
    ne = mesh.num_elements

    rows_parts, cols_parts, vals_parts = [], [], []
    F = np.zeros(space.ndofs)
    for s in range(0, ne, CHUNK):
        t = min(s + CHUNK, ne)
        nb = t - s
        dm = space.dof_map[s:t]
        X = space.origins[s:t, None, :] + np.einsum("eij,qj->eqi", space.jac[s:t], qp)
        x = X[..., 0]
        y = X[..., 1] if space.dim == 2 else None
        W = qw[None, :] * space.det[s:t, None]

        if space.dim == 1:
            gp = G[None, :, :, 0] * space.jinv[s:t, 0, 0][:, None, None]
            wd = W * _coef_values(dmat, x, y)
            K = np.matmul((gp * wd[:, :, None]).transpose(0, 2, 1), gp)
        else:
            gp = np.matmul(G[None], space.jinv[s:t, None])     # (e, q, nloc, 2)
            dq = np.empty(x.shape + (2, 2))
            for a in range(2):
                for b in range(2):
                    dq[..., a, b] = _coef_values(dmat[a][b], x, y)
            flux = np.matmul(gp, dq) * W[:, :, None, None]
            K = np.matmul(flux.transpose(0, 2, 1, 3).reshape(nb, nloc, nq * 2),
                          gp.transpose(0, 1, 3, 2).reshape(nb, nq * 2, nloc))

        wr = W * _coef_values(problem.reaction, x, y)
        K += np.matmul(B.T[None], wr[:, :, None] * B[None])
        wf = W * _coef_values(problem.source, x, y)
        np.add.at(F, dm, wf @ B)

        rows_parts.append(np.broadcast_to(dm[:, :, None], K.shape).reshape(-1))
        cols_parts.append(np.broadcast_to(dm[:, None, :], K.shape).reshape(-1))
        vals_parts.append(K.reshape(-1))

    if space.dim == 2 and problem.neumann:
        _add_neumann(space, problem, F)

    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)

    ddofs = space.dirichlet_dofs
    gx = space.support[ddofs, 0]
    gy = space.support[ddofs, 1] if space.dim == 2 else None
    dvals = np.broadcast_to(np.asarray(ex.evaluate(problem.dirichlet, gx, gy),
                                       dtype=float), ddofs.shape).copy()

    is_d = np.zeros(space.ndofs, dtype=bool)
    is_d[ddofs] = True
    dval_of = np.zeros(space.ndofs)
    dval_of[ddofs] = dvals
    rm, cm = is_d[rows], is_d[cols]
    lift = ~rm & cm
    np.add.at(F, rows[lift], -vals[lift] * dval_of[cols[lift]])
    keep = ~rm & ~cm
    rows = np.concatenate([rows[keep], ddofs])
    cols = np.concatenate([cols[keep], ddofs])
    vals = np.concatenate([vals[keep], np.ones(len(ddofs))])
    F[ddofs] = dvals

    A = sparse.coo_matrix((vals, (rows, cols)),
                          shape=(space.ndofs, space.ndofs)).tocsr()
    return AssembledSystem(A, F, ddofs, dvals)


def _add_neumann(space: FeSpace, problem, F):
    ref = space.ref
    tq, tw = facet_rule(space.degree)
    groups = {}
    for elem, ledge, side in neumann_facets(space.mesh):
        groups.setdefault((ledge, side), []).append(elem)
    for (ledge, side), elems in sorted(groups.items()):
        el = np.asarray(elems, dtype=np.int64)
        la, lb = ref.edges[ledge]
        ra, rb = ref.corners[la], ref.corners[lb]
        rpts = ra[None, :] + tq[:, None] * (rb - ra)[None, :]
        Bf = ref.eval(rpts)                                   # (nfq, nloc)
        Xf = space.origins[el][:, None, :] + np.einsum(
            "eij,qj->eqi", space.jac[el], rpts)
        pa = space.origins[el] + space.jac[el] @ ra
        pb = space.origins[el] + space.jac[el] @ rb
        length = np.linalg.norm(pb - pa, axis=1)
        hv = _coef_values(problem.neumann[side], Xf[..., 0], Xf[..., 1])
        Ff = (hv * tw[None, :] * length[:, None]) @ Bf
        np.add.at(F, space.dof_map[el], Ff)


def _locate(space: FeSpace, pts):
    """Element index containing each point (boundary ties go right/up)."""
    mesh = space.mesh
    if mesh.dim == 1:
        vx = mesh.vertices[:, 0]
        return np.clip(np.searchsorted(vx, pts[:, 0], side="right") - 1,
                       0, mesh.num_elements - 1)
    n = 2 ** mesh.level
    i = np.clip((pts[:, 0] * n).astype(np.int64), 0, n - 1)
    j = np.clip((pts[:, 1] * n).astype(np.int64), 0, n - 1)
    cell = j * n + i
    if mesh.kind == "quad":
        return cell
    s = pts[:, 0] * n - i
    t = pts[:, 1] * n - j
    sub = np.select([t <= np.minimum(s, 1.0 - s),
                     s >= np.maximum(t, 1.0 - t),
                     t >= np.maximum(s, 1.0 - s)], [0, 1, 2], default=3)
    return 4 * cell + sub


def evaluate_many(space: FeSpace, U, points, k: int = 0):
    """u_h (k=0) or its gradient/Hessian (k=1,2) at an (npts, dim) array.

    Returns (npts,) in 1D for every k; (npts,), (npts, 2), (npts, 2, 2) in 2D.
    """
    if k not in (0, 1, 2):
        raise FemError("derivative order must be 0, 1, or 2")
    if k == 2 and space.degree < 2:
        raise FemError("second derivatives require degree >= 2")
    pts = np.asarray(points, dtype=float).reshape(-1, space.dim)
    el = _locate(space, pts)
    ji = space.jinv[el]
    xi = np.matmul(ji, (pts - space.origins[el])[:, :, None])[:, :, 0]
    dofs = np.asarray(U)[space.dof_map[el]]            # (npts, nloc)
    if k == 0:
        out = np.einsum("pl,pl->p", space.ref.eval(xi), dofs)
        return out
    if k == 1:
        gp = np.matmul(space.ref.grad(xi), ji)
        out = np.einsum("pld,pl->pd", gp, dofs)
    else:
        hb = np.matmul(space.ref.hess(xi), ji[:, None])        # (p, l, k, b)
        hp = np.matmul(hb.transpose(0, 1, 3, 2), ji[:, None])  # (p, l, b, a)
        out = np.einsum("plba,pl->pab", hp, dofs)
    return out.reshape(len(pts), *([2] * k)) if space.dim == 2 else out.reshape(-1)


def evaluate(space: FeSpace, U, point, k: int = 0):
    """Point evaluation of the discrete solution or one of its derivatives."""
    out = evaluate_many(space, U, np.atleast_2d(np.asarray(point, dtype=float)), k)
    return out[0]


def interpolate(space: FeSpace, e) -> np.ndarray:
    """Nodal interpolant: expression values at the dof support points."""
    x = space.support[:, 0]
    y = space.support[:, 1] if space.dim == 2 else None
    return np.broadcast_to(np.asarray(ex.evaluate(e, x, y), dtype=float),
                           (space.ndofs,)).copy()


def quadrature_fields(space: FeSpace):
    """Physical quadrature points (ne, nq, dim) and weights w*|J| (ne, nq)."""
    got = space._cache.get("qfields")
    if got is None:
        qp, qw, _, _ = _volume_tables(space.mesh.kind, space.degree)
        X = space.origins[:, None, :] + np.einsum("eij,qj->eqi", space.jac, qp)
        W = qw[None, :] * space.det[:, None]
        got = space._cache["qfields"] = (X, W)
    return got


def eval_at_quadrature(space: FeSpace, U, k: int = 0):
    """Discrete solution derivatives at the volume quadrature points.

    Shapes (ne, nq) for k=0, plus trailing dim axes per derivative order in 2D.
    """
    if k == 2 and space.degree < 2:
        raise FemError("second derivatives require degree >= 2")
    qp, _, B, G = _volume_tables(space.mesh.kind, space.degree)
    ne, nq = space.mesh.num_elements, len(qp)
    Uarr = np.asarray(U)
    if space.dim == 2 and k > 0:
        shape = (ne, nq) + (2,) * k
    else:
        shape = (ne, nq)
    out = np.empty(shape)
    H = _hess_table(space.mesh.kind, space.degree) if k == 2 else None
    for s in range(0, ne, CHUNK):
        t = min(s + CHUNK, ne)
        dofs = Uarr[space.dof_map[s:t]]
        if k == 0:
            out[s:t] = dofs @ B.T
            continue
        ji = space.jinv[s:t]
        if k == 1:
            gp = np.matmul(G[None], ji[:, None])               # (e, q, nloc, d)
            block = np.matmul(dofs[:, None, None, :], gp)[:, :, 0, :]
        else:
            hb = np.matmul(H[None], ji[:, None, None])         # (e, q, l, k, b)
            hp = np.matmul(hb.transpose(0, 1, 2, 4, 3), ji[:, None, None])
            block = np.einsum("eqlba,el->eqab", hp, dofs)
        out[s:t] = block if space.dim == 2 else block.reshape(t - s, nq)
    return out
