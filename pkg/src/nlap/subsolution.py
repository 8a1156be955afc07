"""The sublinear auxiliary problem and the comparison check against it.

``-Delta_N v = lam a1 v^r1`` with ``0 < r1 < N-1`` is the Euler-Lagrange
equation of

    J(v) = (1/N) int |grad v|^N - lam a1 / (r1+1) int (v+)^(r1+1),

so its positive solution is found by minimization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import factorized

from .mesh import GalerkinSpace, MeshError, distance_bump, prolong, space_at, xi_norm
from .nonlinearity import from_name
from .operators import DiscreteField, ProblemSpec, assembler, jacobian, residual

log = logging.getLogger(__name__)


class DegenerateMinimizerError(RuntimeError):
    """Minimization collapsed onto the trivial critical point ``v = 0``."""


@dataclass
class SubsolutionField:
    """Discrete minimizer ``v0`` with its energy and interior margin."""

    field: DiscreteField
    energy: float
    margin: float
    iterations: int
    gradient_norm: float

    @property
    def space(self) -> GalerkinSpace:
        return self.field.space

    def to_dict(self) -> dict:
        return {"energy": self.energy, "margin": self.margin, "iterations": self.iterations,
                "gradient_norm": self.gradient_norm,
                "max": float(self.field.nodal.max())}


def _pure_power(spec: ProblemSpec) -> ProblemSpec:
    # Drop convection and f so that residual() is the gradient of J.
    return replace(spec, a2=0.0, nonlinearity=from_name("zero", N=spec.N, r3=max(spec.r3, spec.N)))


def energy(spec: ProblemSpec, u: DiscreteField) -> float:
    """``J(v)`` for the field ``u``."""
    N = spec.N
    grad_part = float(np.dot(u.space.volumes, u.grad_norm**N)) / N
    c = spec.lam * spec.a1 / (spec.r1 + 1.0)
    return grad_part - c * u.asm.integrate(u.u_plus ** (spec.r1 + 1.0))


def energy_gradient(spec: ProblemSpec, u: DiscreteField) -> np.ndarray:
    """``dJ/dxi``, equal to the residual without convection, ``f`` and load."""
    return residual(_pure_power(spec), None, None, u)


def solve_p5(spec: ProblemSpec, space: GalerkinSpace, tol: float = 1e-10,
             max_iter: int = 2000, energy_tol: float = 1e-16) -> SubsolutionField:
    """Minimize ``J`` by preconditioned gradient descent with Armijo steps.

    The search direction is ``-A^{-1} grad J`` with ``A`` the linearized
    N-Laplacian at the current iterate (the stiffness matrix when N = 2).
    The start is the distance-to-boundary bump scaled to unit norm.

    Parameters
    ----------
    tol : float
        Target for the Euclidean norm of the energy gradient.
    energy_tol : float
        The minimizer counts as trivial when ``J >= -energy_tol``.  It is
        separate from ``tol`` because the minimum energy scales like a
        high power of ``lam a1`` and is tiny for small data.
    """
    if not 0 < spec.r1 < spec.N - 1:
        raise ValueError("need 0 < r1 < N-1")
    if not spec.lam > 0 or not spec.a1 > 0:
        raise ValueError("need lam > 0 and a1 > 0")
    if space.m < 1:
        raise ValueError("the Galerkin space has no degrees of freedom")
    pp = _pure_power(spec)
    diffusion = replace(pp, lam=0.0)
    asm = assembler(space)
    xi = distance_bump(space)
    xi = xi / xi_norm(space, xi)
    u = asm.field(xi)
    J = energy(spec, u)
    g = energy_gradient(spec, u)
    solve = None
    it = 0
    while it < max_iter:
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            break
        it += 1
        if solve is None or spec.N != 2:
            solve = factorized(jacobian(diffusion, None, None, u).tocsc())
        d = -solve(g)
        slope = float(g @ d)
        if not slope < 0:
            d, slope = -g, -gnorm**2
        t = 1.0
        while True:
            trial = asm.field(xi + t * d)
            Jt = energy(spec, trial)
            if Jt <= J + 1e-4 * t * slope or t < 1e-14:
                break
            t *= 0.5
        if t < 1e-14:
            break
        xi, u, J = trial.xi, trial, Jt
        g = energy_gradient(spec, u)
    gnorm = float(np.linalg.norm(g))
    if J >= -energy_tol or not np.any(u.nodal > 0):
        raise DegenerateMinimizerError(
            f"minimizer is trivial (J = {J:.3e}); try a finer level or a larger lambda")
    if gnorm > tol:
        log.warning("subsolution gradient norm %.3e above tolerance %.1e", gnorm, tol)
    margin = float(u.nodal[space.dofs].min())
    if not margin > 0:
        raise DegenerateMinimizerError(f"minimizer is not interior-positive (min = {margin:.3e})")
    return SubsolutionField(u, J, margin, it, gnorm)


def _common(u: DiscreteField, v: DiscreteField):
    su, sv = u.space, v.space
    if su.mesh.domain != sv.mesh.domain or su.dim != sv.dim:
        raise MeshError("fields live on different domains")
    L = max(su.level, sv.level)
    nodal = []
    for s, f in ((su, u), (sv, v)):
        if s.level == L:
            nodal.append((s, f.xi))
        else:
            nodal.append((space_at(s, L), prolong(s, f.xi, L)))
    (s1, x1), (s2, x2) = nodal
    if s1.m != s2.m:
        raise MeshError("no common refinement of the two fields")
    return x1, x2


def comparison_check(u: DiscreteField, v0, slack: float = 1e-3) -> dict:
    """Nodal ordering ``u >= v0`` up to ``slack (1 + max |v0|)``."""
    v = v0.field if isinstance(v0, SubsolutionField) else v0
    xu, xv = _common(u, v)
    vmax = float(np.max(np.abs(xv))) if xv.size else 0.0
    gap = float(np.min(xu - xv)) if xu.size else 0.0
    return {"passed": gap >= -slack * (1.0 + vmax), "min_gap": gap, "slack": slack,
            "v0_max": vmax}


def shooting_center_value(r1: float = 0.5, lam_a1: float = 1.0, radius: float = 1.0) -> float:
    """Centre value of the radial solution of ``-Delta v = c v^r1`` on a disk (N = 2).

    Integrates ``W'' + W'/s = -W^r1`` with ``W(0) = 1`` to its first zero
    ``s0`` and rescales by homogeneity.
    """
    def rhs(s, y):
        w, dw = y
        src = max(w, 0.0) ** r1
        if s == 0.0:
            return [dw, -src / 2.0]
        return [dw, -src - dw / s]

    def hit(s, y):
        return y[0]

    hit.terminal = True
    hit.direction = -1
    # Series start avoids the coordinate singularity.
    s_start = 1e-6
    y0 = [1.0 - s_start**2 / 4.0, -s_start / 2.0]
    sol = solve_ivp(rhs, (s_start, 50.0), y0, events=hit, rtol=1e-11, atol=1e-13,
                    method="DOP853")
    if not sol.t_events[0].size:
        raise RuntimeError("shooting did not reach a zero")
    s0 = float(sol.t_events[0][0])
    # v(x) = A W(k |x|) with k = s0/R and A k^2 = c A^r1, hence A = (c / k^2)^(1/(1-r1)).
    k = s0 / radius
    return (lam_a1 / k**2) ** (1.0 / (1.0 - r1))
