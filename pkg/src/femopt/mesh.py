"""Structured meshes of the unit interval / unit square, plus DoF bookkeeping.

Refinement level R halves the grid spacing each time: 2^R subintervals per
direction.  Quads are the raw grid cells; the triangle variant splits every
cell by its two diagonals into four triangles around an added center vertex.
1D meshes can be distorted (types 2-4) to stress the error model; boundary
vertices never move and element lengths must stay positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "Mesh",
    "DistortionSpec",
    "MeshError",
    "build",
    "count_dofs",
    "dofs_per_element",
    "dump",
    "neumann_facets",
]

KINDS = ("interval", "quad", "triangle")


class MeshError(Exception):
    pass


@dataclass(frozen=True)
class DistortionSpec:
    """1D vertex distortion: 1 identity, 2 random, 3 piecewise linear, 4 rational."""

    kind: int = 1
    seed: int = 0
    magnitude: float = 0.4

    def __post_init__(self):
        if self.kind not in (1, 2, 3, 4):
            raise MeshError(f"distortion type must be 1..4, got {self.kind}")
        if self.kind == 2 and not (0.0 <= self.magnitude < 0.5):
            raise MeshError("type-2 distortion magnitude must satisfy 0 <= f_h < 0.5")


@dataclass
class Mesh:
    dim: int
    kind: str
    level: int
    vertices: np.ndarray            # (nv, dim)
    elements: np.ndarray            # (ne, verts per element), int
    boundary: list = field(default_factory=list)   # (verts tuple, side, bc)
    distortion: DistortionSpec = DistortionSpec()

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_elements(self):
        return self.elements.shape[0]


def _validate(kind, level, p=1):
    if kind not in KINDS:
        raise MeshError(f"unknown element kind {kind!r}")
    if not isinstance(level, (int, np.integer)) or level < 0:
        raise MeshError(f"refinement level must be a non-negative integer, got {level!r}")
    if not isinstance(p, (int, np.integer)) or not 1 <= p <= 5:
        raise MeshError(f"polynomial degree must be 1..5, got {p!r}")


def build(dim: int, kind: str, level: int, distortion: Optional[DistortionSpec] = None) -> Mesh:
    """Construct the level-R mesh of the given kind on [0,1]^dim."""
    _validate(kind, level)
    expected_dim = 1 if kind == "interval" else 2
    if dim != expected_dim:
        raise MeshError(f"kind {kind!r} is {expected_dim}D, got dim={dim}")
    if distortion is None:
        distortion = DistortionSpec()
    if kind != "interval" and distortion.kind != 1:
        raise MeshError("mesh distortion is only defined for interval meshes")
    n = 2 ** level
    if kind == "interval":
        x = np.arange(n + 1, dtype=float) / n
        x = _distort(x, level, distortion)
        verts = x.reshape(-1, 1)
        elems = np.column_stack([np.arange(n), np.arange(1, n + 1)]).astype(np.int64)
        boundary = [((0,), "left", "dirichlet"), ((n,), "right", "dirichlet")]
        return Mesh(1, kind, level, verts, elems, boundary, distortion)

    # shared (n+1)^2 grid, row-major: vid(i, j) = j*(n+1) + i
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    grid = np.column_stack([(ii.T.ravel()) / n, (jj.T.ravel()) / n]).astype(float)

    def vid(i, j):
        return j * (n + 1) + i

    i0, j0 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i0 = i0.T.ravel()
    j0 = j0.T.ravel()  # cell (i0, j0), row-major over j then i
    a = vid(i0, j0)
    b = vid(i0 + 1, j0)
    c = vid(i0 + 1, j0 + 1)
    d = vid(i0, j0 + 1)

    boundary = []
    for i in range(n):
        boundary.append(((vid(i, 0), vid(i + 1, 0)), "bottom", "neumann"))
        boundary.append(((vid(i, n), vid(i + 1, n)), "top", "neumann"))
    for j in range(n):
        boundary.append(((vid(0, j), vid(0, j + 1)), "left", "dirichlet"))
        boundary.append(((vid(n, j), vid(n, j + 1)), "right", "dirichlet"))

    if kind == "quad":
        elems = np.column_stack([a, b, c, d]).astype(np.int64)
        return Mesh(2, kind, level, grid, elems, boundary, distortion)

    # triangle: center vertex per cell, cell split fan-wise (CCW triangles)
    centers = np.column_stack([(i0 + 0.5) / n, (j0 + 0.5) / n])
    verts = np.vstack([grid, centers])
    c0 = (n + 1) ** 2 + np.arange(n * n)
    tris = np.empty((4 * n * n, 3), dtype=np.int64)
    tris[0::4] = np.column_stack([a, b, c0])   # bottom
    tris[1::4] = np.column_stack([b, c, c0])   # right
    tris[2::4] = np.column_stack([c, d, c0])   # top
    tris[3::4] = np.column_stack([d, a, c0])   # left
    return Mesh(2, kind, level, verts, tris, boundary, distortion)


def _distort(x, level, spec):
    if spec.kind == 1 or len(x) == 2:
        return x
    out = x.copy()
    inner = x[1:-1]
    if spec.kind == 2:
        h0 = 1.0 / (len(x) - 1)
        # offsets are re-drawn per level: seed keyed by (seed, level)
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, level)))
        signs = rng.choice(np.array([-1.0, 1.0]), size=inner.size)
        out[1:-1] = inner + signs * spec.magnitude * h0
    elif spec.kind == 3:
        lo = inner < 0.5
        hi = inner > 0.5
        out[1:-1] = np.where(lo, 0.5 * inner, np.where(hi, 1.0 - 0.5 * (1.0 - inner), inner))
    else:
        lo = inner <= 0.5
        t = np.where(lo, inner, 1.0 - inner)
        mapped = t / (1.5 - t)
        out[1:-1] = np.where(lo, mapped, 1.0 - mapped)
    if not np.all(np.diff(out) > 0.0):
        raise MeshError("distortion produced a non-positive element length")
    return out


def count_dofs(kind: str, level: int, p: int) -> int:
    """Closed-form Lagrange DoF count for the level-R mesh at degree p."""
    _validate(kind, level, p)
    n = 2 ** level
    if kind == "interval":
        return n * p + 1
    if kind == "quad":
        return (n * p + 1) ** 2
    nv = (n + 1) ** 2 + n * n
    nedges = 2 * n * (n + 1) + 4 * n * n
    ncells = 4 * n * n
    return nv + nedges * (p - 1) + ncells * ((p - 1) * (p - 2) // 2)


def neumann_facets(mesh: Mesh):
    """Owner (element index, local edge, side) for each Neumann boundary facet.

    The element orderings above put the facet on a fixed local edge: quad cells
    carry their bottom/top boundary on local edges 0/2, the fan split puts both
    on local edge 0 of the bottom/top sub-triangle.
    """
    if mesh.dim != 2:
        return []
    n = 2 ** mesh.level
    out = []
    for i in range(n):
        if mesh.kind == "quad":
            out.append((i, 0, "bottom"))
            out.append(((n - 1) * n + i, 2, "top"))
        else:
            out.append((4 * i, 0, "bottom"))
            out.append((4 * ((n - 1) * n + i) + 2, 0, "top"))
    return out


def dofs_per_element(kind: str, p: int) -> int:
    """Local Lagrange basis size for one element."""
    _validate(kind, 0, p)
    if kind == "interval":
        return p + 1
    if kind == "quad":
        return (p + 1) ** 2
    return (p + 1) * (p + 2) // 2


def dump(mesh: Mesh) -> str:
    """Plain-text mesh dump: vertices / elements / boundary blocks."""
    lines = [f"vertices {mesh.num_vertices} {mesh.dim}"]
    for v in mesh.vertices:
        lines.append(" ".join(f"{c:.17g}" for c in v))
    lines.append(f"elements {mesh.num_elements} {mesh.elements.shape[1]}")
    for e in mesh.elements:
        lines.append(" ".join(str(i) for i in e))
    lines.append(f"boundary {len(mesh.boundary)}")
    for verts, side, bc in mesh.boundary:
        lines.append(" ".join(str(i) for i in verts) + f" {side} {bc}")
    return "\n".join(lines) + "\n"
