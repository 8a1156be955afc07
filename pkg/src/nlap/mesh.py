"""Simplex meshes and nested piecewise-linear Galerkin spaces.

A :class:`GalerkinSpace` carries one hat function per interior vertex, so
its coefficient vectors are nodal values at interior vertices.  Spaces on
the square and the cube are exactly nested under refinement; the disk is
rebuilt at each level with its boundary vertices on the unit circle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

DOMAINS = ("square", "disk", "cube")


class MeshError(ValueError):
    pass


@dataclass
class SimplexMesh:
    """Conforming simplicial mesh of a domain in R^N (N = 2 or 3)."""

    vertices: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    domain: str
    level: int
    parent: "SimplexMesh | None" = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    def edge_matrices(self) -> np.ndarray:
        """``B[e] = [x1 - x0, ..., xN - x0]`` as columns, shape ``(E, N, N)``."""
        X = self.vertices[self.elements]
        return np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))

    def signed_volumes(self) -> np.ndarray:
        return np.linalg.det(self.edge_matrices()) / math.factorial(self.dim)

    @property
    def measure(self) -> float:
        return float(np.abs(self.signed_volumes()).sum())

    @property
    def h(self) -> float:
        """Largest element edge length."""
        X = self.vertices[self.elements]
        hmax = 0.0
        for i, j in itertools.combinations(range(self.dim + 1), 2):
            hmax = max(hmax, float(np.linalg.norm(X[:, i] - X[:, j], axis=1).max()))
        return hmax

    def facets(self):
        """Return unique facets and how many elements share each."""
        d = self.dim
        faces = np.concatenate([
            np.delete(self.elements, i, axis=1) for i in range(d + 1)
        ])
        faces = np.sort(faces, axis=1)
        return np.unique(faces, axis=0, return_counts=True)

    def check(self) -> None:
        """Raise :class:`MeshError` when an invariant is violated."""
        if np.any(self.signed_volumes() <= 0):
            raise MeshError("mesh has non-positive element volumes")
        faces, counts = self.facets()
        if np.any(counts > 2):
            raise MeshError("a facet is shared by more than two elements")
        on_bdry = np.zeros(self.num_vertices, dtype=bool)
        on_bdry[faces[counts == 1].ravel()] = True
        if not np.array_equal(on_bdry, self.boundary):
            raise MeshError("boundary flags disagree with facet topology")


def _orient(vertices, elements):
    X = vertices[elements]
    B = np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))
    neg = np.linalg.det(B) < 0
    elements = elements.copy()
    elements[neg, 0], elements[neg, 1] = elements[neg, 1], elements[neg, 0].copy()
    return elements


def _square(level):
    n = 2**level
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i] at (x_i, y_j)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    elems = np.concatenate([
        np.column_stack([v00, v10, v11]),
        np.column_stack([v00, v11, v01]),
    ])
    bdry = np.any((verts == 0.0) | (verts == 1.0), axis=1)
    return verts, elems, bdry


def _cube(level):
    n = 2**level
    x = np.linspace(0.0, 1.0, n + 1)
    Z, Y, X = np.meshgrid(x, x, x, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    idx = np.arange((n + 1) ** 3).reshape(n + 1, n + 1, n + 1)  # idx[k, j, i]
    base = idx[:-1, :-1, :-1].ravel()
    stride = {0: 1, 1: n + 1, 2: (n + 1) ** 2}
    elems = []
    for perm in itertools.permutations(range(3)):
        path = [base]
        cur = base
        for axis in perm:
            cur = cur + stride[axis]
            path.append(cur)
        elems.append(np.column_stack(path))
    elems = np.concatenate(elems)
    bdry = np.any((verts == 0.0) | (verts == 1.0), axis=1)
    return verts, elems, bdry


def _disk(level):
    n = 2**level
    verts = [np.zeros((1, 2))]
    ring_ids = [np.array([0])]
    start = 1
    for i in range(1, n + 1):
        theta = 2.0 * np.pi * np.arange(6 * i) / (6 * i)
        verts.append((i / n) * np.column_stack([np.cos(theta), np.sin(theta)]))
        ring_ids.append(start + np.arange(6 * i))
        start += 6 * i
    verts = np.concatenate(verts)
    elems = []
    inner0 = ring_ids[1]
    for j in range(6):
        elems.append((0, inner0[j], inner0[(j + 1) % 6]))
    for i in range(1, n):
        a, b = ring_ids[i], ring_ids[i + 1]
        na, nb = len(a), len(b)
        # Walk both rings by angle, always advancing the one whose next vertex comes first.
        p = q = 0
        while p < na or q < nb:
            ta = (p + 1) / na
            tb = (q + 1) / nb
            if q < nb and (p >= na or tb <= ta):
                elems.append((a[p % na], b[q % nb], b[(q + 1) % nb]))
                q += 1
            else:
                elems.append((a[p % na], b[q % nb], a[(p + 1) % na]))
                p += 1
    elems = np.array(elems, dtype=np.int64)
    bdry = np.zeros(len(verts), dtype=bool)
    bdry[ring_ids[-1]] = True
    return verts, elems, bdry


def build_mesh(domain: str, level: int) -> SimplexMesh:
    """Structured simplicial mesh with ``2**level`` subdivisions per side.

    ``square`` and ``cube`` are the unit square/cube split along consistent
    diagonals (Kuhn subdivision in 3D); ``disk`` is the unit disk meshed
    by ``2**level`` concentric rings with boundary vertices on the circle.
    """
    if level < 0:
        raise MeshError("level must be >= 0")
    builders = {"square": _square, "cube": _cube, "disk": _disk}
    if domain not in builders:
        raise MeshError(f"unsupported domain {domain!r}; expected one of {DOMAINS}")
    verts, elems, bdry = builders[domain](level)
    elems = _orient(verts, np.asarray(elems, dtype=np.int64))
    return SimplexMesh(vertices=verts, elements=elems, boundary=bdry,
                       domain=domain, level=level)


def locate(mesh: SimplexMesh, points: np.ndarray, tol: float = 1e-10):
    """Element index and barycentric coordinates for each point.

    Points outside the mesh get element ``-1``.
    """
    points = np.atleast_2d(points)
    d = mesh.dim
    X = mesh.vertices[mesh.elements]
    Binv = np.linalg.inv(mesh.edge_matrices())
    tree = cKDTree(X.mean(axis=1))
    k = min(mesh.num_elements, 24)
    _, cand = tree.query(points, k=k)
    cand = np.atleast_2d(cand).reshape(len(points), k)
    elem = -np.ones(len(points), dtype=np.int64)
    bary = np.zeros((len(points), d + 1))

    def _try(pidx, cidx):
        rel = points[pidx, None, :] - X[cidx, 0, :]
        lam = np.einsum("pcij,pcj->pci", Binv[cidx], rel)
        lam = np.concatenate([1.0 - lam.sum(axis=2, keepdims=True), lam], axis=2)
        ok = np.all(lam >= -tol, axis=2)
        first = np.argmax(ok, axis=1)
        found = ok[np.arange(len(pidx)), first]
        hit = pidx[found]
        elem[hit] = cidx[found, first[found]]
        bary[hit] = lam[found, first[found]]

    _try(np.arange(len(points)), cand)
    missing = np.flatnonzero(elem < 0)
    for chunk in np.array_split(missing, max(1, len(missing) // 64)):
        if len(chunk):
            _try(chunk, np.broadcast_to(np.arange(mesh.num_elements), (len(chunk), mesh.num_elements)))
    return elem, bary


class GalerkinSpace:
    """Span of the interior-vertex hat functions of a mesh."""

    def __init__(self, mesh: SimplexMesh):
        self.mesh = mesh
        self.dofs = np.flatnonzero(~mesh.boundary)
        self.dof_of_vertex = -np.ones(mesh.num_vertices, dtype=np.int64)
        self.dof_of_vertex[self.dofs] = np.arange(len(self.dofs))
        self.parent: GalerkinSpace | None = None
        self.prolongation: sparse.csr_matrix | None = None
        self._finer: GalerkinSpace | None = None

    def __repr__(self):
        return f"GalerkinSpace({self.mesh.domain!r}, level={self.level}, m={self.m})"

    @property
    def m(self) -> int:
        return len(self.dofs)

    @property
    def level(self) -> int:
        return self.mesh.level

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.mesh.signed_volumes())

    @cached_property
    def bary_grads(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape ``(E, N+1, N)``."""
        Binv = np.linalg.inv(self.mesh.edge_matrices())
        g = Binv  # rows are grad(lambda_1..lambda_N)
        g0 = -g.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g], axis=1)

    def nodal(self, xi) -> np.ndarray:
        """Vertex values of ``sum_j xi_j w_j`` (zero on the boundary)."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.m,):
            raise ValueError(f"coefficient vector has shape {xi.shape}, space has m = {self.m}")
        u = np.zeros(self.mesh.num_vertices)
        u[self.dofs] = xi
        return u

    def interpolate(self, func) -> np.ndarray:
        """Coefficients of the nodal interpolant of ``func(points)``."""
        return np.asarray(func(self.mesh.vertices[self.dofs]), dtype=float)

    def gradients(self, xi) -> np.ndarray:
        """Element-wise constant gradients, shape ``(E, N)``."""
        u = self.nodal(xi)[self.mesh.elements]
        return np.einsum("ea,ead->ed", u, self.bary_grads)

    def evaluate(self, xi, points) -> np.ndarray:
        """Point values of the discrete function (zero outside the mesh)."""
        elem, bary = locate(self.mesh, np.asarray(points, dtype=float))
        u = self.nodal(xi)
        out = np.zeros(len(elem))
        inside = elem >= 0
        out[inside] = np.einsum("pa,pa->p", u[self.mesh.elements[elem[inside]]], bary[inside])
        return out


def xi_norm(space: GalerkinSpace, xi) -> float:
    """``(int |grad u|^N)^(1/N)`` for ``u = sum xi_j w_j``, exact for P1."""
    g = space.gradients(xi)
    N = space.dim
    top = float(np.max(np.abs(g))) if g.size else 0.0
    if top == 0.0 or not np.isfinite(top):
        return top
    # scale by the largest component so that the powers neither under- nor overflow
    g = g / top
    gn = np.sqrt(np.einsum("ed,ed->e", g, g))
    return top * float(np.dot(space.volumes, gn**N) ** (1.0 / N))


def interpolation_matrix(coarse: GalerkinSpace, fine: GalerkinSpace) -> sparse.csr_matrix:
    """Matrix taking coarse coefficients to the fine nodal interpolant."""
    pts = fine.mesh.vertices[fine.dofs]
    elem, bary = locate(coarse.mesh, pts)
    rows, cols, vals = [], [], []
    d = coarse.dim
    for a in range(d + 1):
        inside = elem >= 0
        verts = coarse.mesh.elements[elem[inside], a]
        dof = coarse.dof_of_vertex[verts]
        keep = (dof >= 0) & (np.abs(bary[inside, a]) > 1e-14)
        rows.append(np.flatnonzero(inside)[keep])
        cols.append(dof[keep])
        vals.append(bary[inside, a][keep])
    P = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(fine.m, coarse.m))
    return P.tocsr()


def build_space(domain: str, level: int) -> GalerkinSpace:
    return GalerkinSpace(build_mesh(domain, level))


def refine(space: GalerkinSpace) -> GalerkinSpace:
    """Uniformly refined space with its prolongation from ``space``.

    The result is cached, so repeated refinement of one space shares the
    finer levels.
    """
    if space._finer is not None:
        return space._finer
    mesh = build_mesh(space.mesh.domain, space.level + 1)
    mesh.parent = space.mesh
    fine = GalerkinSpace(mesh)
    fine.parent = space
    fine.prolongation = interpolation_matrix(space, fine)
    space._finer = fine
    return fine


def space_at(space: GalerkinSpace, level: int) -> GalerkinSpace:
    """The space of the same hierarchy at ``level >= space.level``."""
    if level < space.level:
        raise MeshError(f"cannot coarsen from level {space.level} to {level}")
    while space.level < level:
        space = refine(space)
    return space


def prolong(space: GalerkinSpace, xi, target_level: int) -> np.ndarray:
    """Coefficients of the same function on the space at ``target_level``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (space.m,):
        raise MeshError(f"coefficient vector of length {xi.shape} does not match m = {space.m}")
    if target_level < space.level:
        raise MeshError(f"target level {target_level} is coarser than {space.level}")
    while space.level < target_level:
        space = refine(space)
        xi = space.prolongation @ xi
    return xi


def distance_bump(space: GalerkinSpace) -> np.ndarray:
    """Distance to the boundary at the interior vertices."""
    x = space.mesh.vertices[space.dofs]
    if space.mesh.domain == "disk":
        return 1.0 - np.linalg.norm(x, axis=1)
    return np.minimum(x, 1.0 - x).min(axis=1)
