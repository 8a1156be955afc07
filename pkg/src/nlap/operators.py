"""Weak-form residual of the regularized problem and its derivatives.

For ``u = sum xi_j w_j`` the residual is

    F_j = int |grad u|^(N-2) grad u . grad w_j
          - lam (a1 int (u+)^r1 w_j + a2 int |grad u|^r2 w_j)
          - int f_n(u+) w_j - (1/n) int w_j

assembled element by element with a positive-weight simplex rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .mesh import GalerkinSpace, xi_norm
from .nonlinearity import NonlinearitySpec, RegularizedNonlinearity
from .quadrature import QuadratureRule, simplex_rule


class AssemblyOverflowError(OverflowError):
    """A non-finite integrand was met during assembly."""


@dataclass(frozen=True)
class ProblemSpec:
    """Parameters of ``-Delta_N u = lam (a1 u^r1 + a2 |grad u|^r2) + f(u)``.

    ``lam``, ``a1`` and ``a2`` may be zero so that degenerate reference
    problems (pure N-Laplacian, linear Poisson) fit the same code path.
    """

    N: int
    domain: str
    lam: float
    a1: float
    a2: float
    r1: float
    r2: float
    nonlinearity: NonlinearitySpec

    def __post_init__(self):
        N = self.N
        if N not in (2, 3):
            raise ValueError(f"N must be 2 or 3, got {N}")
        if self.nonlinearity.N != N:
            raise ValueError("nonlinearity.N differs from N")
        if not 0 < self.r1 < N - 1:
            raise ValueError(f"r1 must lie in (0, {N - 1}), got {self.r1}")
        if not 0 < self.r2 < N - 1:
            raise ValueError(f"r2 must lie in (0, {N - 1}), got {self.r2}")
        for name in ("lam", "a1", "a2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def a3(self):
        return self.nonlinearity.a3

    @property
    def alpha(self):
        return self.nonlinearity.alpha

    @property
    def r3(self):
        return self.nonlinearity.r3


class Assembler:
    """Per-space geometric data shared by all assembly routines."""

    def __init__(self, space: GalerkinSpace, order: int = 4):
        self.space = space
        self.rule: QuadratureRule = simplex_rule(space.dim, order)
        self.phi = self.rule.barycentric  # (Q, N+1)
        jac = space.volumes * _factorial(space.dim)
        self.wq = jac[:, None] * self.rule.weights[None, :]  # (E, Q)
        self.dphi = space.bary_grads
        self.elements = space.mesh.elements

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Sum element vectors ``(E, N+1)`` into a dof vector."""
        full = np.bincount(self.elements.ravel(), weights=local.ravel(),
                           minlength=self.space.mesh.num_vertices)
        return full[self.space.dofs]

    def integrate(self, values: np.ndarray) -> float:
        """``int g`` from quadrature-point values ``(E, Q)``."""
        return float(np.sum(self.wq * values))

    def test_integrals(self, values: np.ndarray) -> np.ndarray:
        """``int g w_j`` for all dofs from quadrature-point values of ``g``."""
        return self.scatter((self.wq * values) @ self.phi)

    def matrix(self, local: np.ndarray) -> sparse.csr_matrix:
        """Assemble element matrices ``(E, N+1, N+1)`` restricted to dofs."""
        E, k = self.elements.shape
        rows = np.repeat(self.elements, k, axis=1).ravel()
        cols = np.tile(self.elements, (1, k)).ravel()
        n = self.space.mesh.num_vertices
        A = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        d = self.space.dofs
        return A[d][:, d]

    def field(self, xi) -> "DiscreteField":
        return DiscreteField(self, np.asarray(xi, dtype=float))


def _factorial(n):
    return 2 if n == 2 else 6


def assembler(space: GalerkinSpace, order: int = 4) -> Assembler:
    """Cached :class:`Assembler` of ``space`` for a quadrature order."""
    cache = space.__dict__.setdefault("_assemblers", {})
    if order not in cache:
        cache[order] = Assembler(space, order)
    return cache[order]


@dataclass
class DiscreteField:
    """``u = sum xi_j w_j`` with cached gradients and quadrature values."""

    asm: Assembler
    xi: np.ndarray
    nodal: np.ndarray = field(init=False, repr=False)
    grad: np.ndarray = field(init=False, repr=False)
    grad_norm: np.ndarray = field(init=False, repr=False)
    uq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        space = self.asm.space
        self.xi = np.array(self.xi, dtype=float)
        self.nodal = space.nodal(self.xi)
        local = self.nodal[self.asm.elements]
        self.grad = np.einsum("ea,ead->ed", local, self.asm.dphi)
        self.grad_norm = np.sqrt(np.einsum("ed,ed->e", self.grad, self.grad))
        self.uq = local @ self.asm.phi.T  # (E, Q)

    @property
    def space(self) -> GalerkinSpace:
        return self.asm.space

    @property
    def u_plus(self) -> np.ndarray:
        return np.maximum(self.uq, 0.0)

    def norm(self) -> float:
        return xi_norm(self.space, self.xi)


def make_field(space: GalerkinSpace, xi, order: int = 4) -> DiscreteField:
    return assembler(space, order).field(xi)


def _fn_values(reg, u: DiscreteField):
    if reg is None:
        return np.zeros_like(u.uq)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = reg(u.u_plus)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        e = int(np.flatnonzero(bad.any(axis=1))[0])
        raise AssemblyOverflowError(f"f_n(u+) is not finite on element {e}")
    return vals


def _forcing(n):
    return 0.0 if n is None else 1.0 / n


def residual(spec: ProblemSpec, reg: RegularizedNonlinearity | None, n: int | None,
             u: DiscreteField) -> np.ndarray:
    """Galerkin residual ``F(xi)``; ``n=None`` drops the ``1/n`` load."""
    asm = u.asm
    N = spec.N
    if u.space.m < 1:
        raise ValueError("the Galerkin space has no degrees of freedom")
    flux = (u.grad_norm ** (N - 2))[:, None] * u.grad
    diff = asm.space.volumes[:, None] * np.einsum("ed,ead->ea", flux, asm.dphi)
    src = (spec.lam * spec.a1) * u.u_plus**spec.r1
    src = src + (spec.lam * spec.a2) * (u.grad_norm ** spec.r2)[:, None]
    src = src + _fn_values(reg, u) + _forcing(n)
    load = (asm.wq * src) @ asm.phi
    return asm.scatter(diff - load)


def coercivity_pairing(spec: ProblemSpec, reg, n, u: DiscreteField) -> float:
    """``<F(xi), xi>`` by direct quadrature of the paired integrands."""
    P, M = pairing_decomposition(spec, reg, n, u)
    return P + M


def _pairing_density(spec, reg, n, u):
    # Quadrature-point contributions to <F(xi), xi>, shape (E, Q).
    N = spec.N
    asm = u.asm
    wsum = asm.wq.sum(axis=1, keepdims=True)
    diff = (asm.space.volumes * u.grad_norm**N)[:, None] * (asm.wq / wsum)
    src = (spec.lam * spec.a1) * u.u_plus**spec.r1
    src = src + (spec.lam * spec.a2) * (u.grad_norm ** spec.r2)[:, None]
    src = src + _fn_values(reg, u) + _forcing(n)
    return diff - asm.wq * src * u.uq


def pairing_decomposition(spec: ProblemSpec, reg, n, u: DiscreteField) -> tuple[float, float]:
    """Split ``<F(xi), xi>`` over ``{|u| >= 1/n}`` and ``{|u| < 1/n}``.

    The split is made at quadrature points.
    """
    dens = _pairing_density(spec, reg, n, u)
    big = np.abs(u.uq) >= _forcing(n)
    return float(dens[big].sum()), float(dens[~big].sum())


def default_eps(space: GalerkinSpace) -> float:
    return 1e-8 / space.mesh.h


def jacobian(spec: ProblemSpec, reg, n, u: DiscreteField, eps_reg: float | None = None):
    """Sparse derivative of :func:`residual` with a regularized gradient modulus.

    ``|grad u|`` is replaced by ``sqrt(|grad u|^2 + eps^2)`` in the
    N-Laplacian and convection terms and ``(u+)^r1`` is differentiated as
    ``r1 (u+ + eps)^(r1-1)``; ``f_n'`` uses central differences.
    """
    asm = u.asm
    eps = default_eps(u.space) if eps_reg is None else eps_reg
    if not eps > 0:
        raise ValueError("eps_reg must be positive")
    N = spec.N
    g = u.grad
    s2 = u.grad_norm**2 + eps**2
    dphi = asm.dphi
    # N-Laplacian: D = s^(N-2) I + (N-2) s^(N-4) g g^T
    a = s2 ** ((N - 2) / 2.0)
    b = (N - 2) * s2 ** ((N - 4) / 2.0)
    gd = np.einsum("ed,ead->ea", g, dphi)
    K = a[:, None, None] * np.einsum("ead,ebd->eab", dphi, dphi)
    K = K + b[:, None, None] * gd[:, :, None] * gd[:, None, :]
    K = asm.space.volumes[:, None, None] * K
    # pointwise source derivatives
    pos = u.uq > 0
    c = np.zeros_like(u.uq)
    if spec.lam * spec.a1 != 0:
        c += spec.lam * spec.a1 * spec.r1 * np.where(pos, (u.u_plus + eps) ** (spec.r1 - 1.0), 0.0)
    if reg is not None:
        with np.errstate(over="ignore", invalid="ignore"):
            c += np.where(pos, reg.derivative(u.u_plus), 0.0)
    M = np.einsum("eq,qa,qb->eab", asm.wq * c, asm.phi, asm.phi)
    local = K - M
    if spec.lam * spec.a2 != 0:
        coef = spec.lam * spec.a2 * spec.r2 * s2 ** ((spec.r2 - 2.0) / 2.0)
        wphi = asm.wq @ asm.phi  # int_K phi_a
        local = local - coef[:, None, None] * wphi[:, :, None] * gd[:, None, :]
    if not np.all(np.isfinite(local)):
        raise AssemblyOverflowError("non-finite Jacobian entry")
    return asm.matrix(local)


def stiffness(space: GalerkinSpace) -> sparse.csr_matrix:
    """P1 Laplacian stiffness matrix on the dofs."""
    asm = assembler(space)
    K = np.einsum("ead,ebd->eab", asm.dphi, asm.dphi)
    return asm.matrix(space.volumes[:, None, None] * K)


def load_vector(space: GalerkinSpace, g, order: int = 4) -> np.ndarray:
    """``int g w_j`` for a callable source ``g(points)`` by element quadrature."""
    asm = assembler(space, order)
    X = space.mesh.vertices[space.mesh.elements]  # (E, N+1, N)
    pts = np.einsum("qa,ead->eqd", asm.phi, X)
    vals = np.asarray(g(pts.reshape(-1, space.dim)), dtype=float).reshape(asm.wq.shape)
    return asm.test_integrals(vals)


def quadrature_points(space: GalerkinSpace, order: int = 4) -> np.ndarray:
    asm = assembler(space, order)
    X = space.mesh.vertices[space.mesh.elements]
    return np.einsum("qa,ead->eqd", asm.phi, X)
