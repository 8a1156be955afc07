"""Ball-constrained Galerkin solves, refinement in m and continuation in n."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .mesh import GalerkinSpace, prolong, space_at, xi_norm
from .nonlinearity import NonlinearitySpec, make_fk
from .operators import (
    DiscreteField,
    ProblemSpec,
    assembler,
    coercivity_pairing,
    jacobian,
    make_field,
    pairing_decomposition,
    residual,
)

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    """Iteration cap reached; carries the best iterate and the residual history."""

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history or []


class StagnationError(RuntimeError):
    """Continuation differences stopped decreasing."""

    def __init__(self, message, differences=None):
        super().__init__(message)
        self.differences = differences or []


@dataclass
class Certificate:
    """Sampled coercivity of ``<F(xi), xi>`` on the sphere ``|xi|_m = r``."""

    min_pairing: float
    rho: float
    num_dirs: int
    passed: bool
    warning: bool

    def to_dict(self):
        return {"min_pairing": self.min_pairing, "rho": self.rho, "num_dirs": self.num_dirs,
                "passed": self.passed, "below_half_rho": self.warning}


def coercivity_certificate(spec: ProblemSpec, reg, n, space: GalerkinSpace, r: float,
                           rho: float, num_dirs: int = 256, seed: int = 0) -> Certificate:
    """Minimum of the pairing over random directions rescaled to norm ``r``.

    Passes when the minimum is positive; ``warning`` flags a minimum below
    ``rho/2``, the margin the estimate promises.
    """
    if num_dirs < 64:
        raise ValueError("num_dirs must be >= 64")
    rng = np.random.default_rng(seed)
    asm = assembler(space)
    worst = math.inf
    for _ in range(num_dirs):
        xi = rng.normal(size=space.m)
        xi *= r / xi_norm(space, xi)
        worst = min(worst, coercivity_pairing(spec, reg, n, asm.field(xi)))
    return Certificate(worst, rho, num_dirs, worst > 0, worst < rho / 2.0)


@dataclass
class FixedSolve:
    xi: np.ndarray
    iterations: int
    residual_norm: float
    norm: float
    history: list = field(default_factory=list)
    newton_steps: int = 0
    descent_steps: int = 0
    decomposition_defects: list = field(default_factory=list)


def _project(space, xi, r):
    nrm = xi_norm(space, xi)
    if nrm > r:
        return xi * (r / nrm), r
    return xi, nrm


def solve_fixed(spec: ProblemSpec, reg, n, space: GalerkinSpace, r: float, xi0,
                tol: float = 1e-10, max_iter: int = 500, eps_reg: float | None = None,
                diagnostics: bool = False) -> FixedSolve:
    """Find ``xi`` with ``||F(xi)||_2 <= tol`` inside the ball ``|xi|_m <= r``.

    Damped Newton with an Armijo line search on ``||F||^2``; iterates that
    leave the ball are scaled back radially.  When Newton fails (singular
    Jacobian or no acceptable step) a block of residual-descent steps
    ``xi <- xi - eta F(xi)`` with adaptive ``eta`` is taken instead.
    """
    if space.m < 1:
        raise ValueError("the Galerkin space has no degrees of freedom")
    asm = assembler(space)
    xi, nrm = _project(space, np.array(xi0, dtype=float), r)
    u = asm.field(xi)
    F = residual(spec, reg, n, u)
    fnorm = float(np.linalg.norm(F))
    history = [fnorm]
    best = (fnorm, xi.copy())
    out = FixedSolve(xi, 0, fnorm, nrm, history)
    eta = 1.0
    descent_left = 0

    def record(v):
        if diagnostics:
            total = coercivity_pairing(spec, reg, n, v)
            P, M = pairing_decomposition(spec, reg, n, v)
            dot = float(residual(spec, reg, n, v) @ v.xi)
            out.decomposition_defects.append(
                max(abs(P + M - total), abs(total - dot)) / max(1.0, abs(total)))

    record(u)
    it = 0
    while fnorm > tol and it < max_iter:
        it += 1
        step_ok = False
        if descent_left == 0:
            try:
                J = jacobian(spec, reg, n, u, eps_reg)
                with np.errstate(all="ignore"), warnings.catch_warnings():
                    warnings.simplefilter("error", MatrixRankWarning)
                    d = spsolve(J.tocsc(), -F)
                if not np.all(np.isfinite(d)):
                    raise np.linalg.LinAlgError("non-finite Newton step")
            except (np.linalg.LinAlgError, MatrixRankWarning, RuntimeError) as exc:
                log.debug("Newton step failed (%s); switching to descent", exc)
                d = None
            if d is not None:
                t = 1.0
                phi0 = fnorm**2
                while t > 1e-8:
                    trial, tn = _project(space, xi + t * d, r)
                    v = asm.field(trial)
                    Ft = residual(spec, reg, n, v)
                    ft = float(np.linalg.norm(Ft))
                    if ft**2 <= (1.0 - 2e-4 * t) * phi0:
                        step_ok = True
                        out.newton_steps += 1
                        break
                    t *= 0.5
            if not step_ok:
                descent_left = 20
        if not step_ok:
            descent_left -= 1
            while eta > 1e-14:
                trial, tn = _project(space, xi - eta * F, r)
                v = asm.field(trial)
                Ft = residual(spec, reg, n, v)
                ft = float(np.linalg.norm(Ft))
                if ft < fnorm:
                    step_ok = True
                    out.descent_steps += 1
                    eta *= 1.5
                    break
                eta *= 0.5
            if not step_ok:
                break
        xi, u, F, fnorm, nrm = trial, v, Ft, ft, tn
        history.append(fnorm)
        record(u)
        if fnorm < best[0]:
            best = (fnorm, xi.copy())
    if fnorm > tol:
        raise NonConvergenceError(
            f"no convergence after {it} iterations: ||F|| = {fnorm:.3e} > {tol:.1e}",
            best=best[1], history=history)
    out.xi, out.iterations, out.residual_norm, out.norm = xi, it, fnorm, nrm
    return out


@dataclass
class ContinuationSchedule:
    """Levels for refinement in m and the n values for continuation."""

    levels: list
    ns: list
    stage_tol: float = 1e-10
    continuation_tol: float = 1e-6
    defect_tol: float | None = None

    def __post_init__(self):
        if any(b < a for a, b in zip(self.ns, self.ns[1:])):
            raise ValueError("ns must be nondecreasing")

    @classmethod
    def geometric(cls, levels, n0: int, stages: int, **kw):
        return cls(levels=list(levels), ns=[int(n0) * 2**j for j in range(stages)], **kw)


@dataclass
class Stage:
    level: int
    n: int
    iterations: int
    residual_norm: float
    norm: float
    difference: float | None = None

    def to_dict(self):
        return dict(self.__dict__)


def refine_in_m(spec: ProblemSpec, reg, n, schedule: ContinuationSchedule,
                base: GalerkinSpace, r: float, xi0=None, floor=None):
    """Solve on every level of ``schedule.levels``, warm-started by prolongation.

    ``floor`` is an optional ``(space, xi)`` field, typically a subsolution;
    each warm start is raised to its nodal interpolant so that no interior
    node starts at the non-smooth point ``u = 0``.

    Returns ``(space, xi, stages)``; ``stages[i].difference`` is
    ``||u_L - prolong(u_{L-1})||`` in the ``W^{1,N}_0`` norm.
    """
    levels = list(schedule.levels)
    if len(levels) < 2:
        raise ValueError("refinement needs at least two levels")
    space = space_at(base, levels[0])
    xi = np.zeros(space.m) if xi0 is None else np.asarray(xi0, dtype=float)
    stages = []
    prev = None
    for L in levels:
        pro = None
        if prev is not None:
            prev_space, prev_xi = prev
            space = space_at(prev_space, L)
            pro = prolong(prev_space, prev_xi, L)
            xi = pro
        if floor is not None:
            fs, fx = floor
            xi = np.maximum(xi, space.interpolate(lambda p: fs.evaluate(fx, p)))
            xi, _ = _project(space, xi, r)
        res = solve_fixed(spec, reg, n, space, r, xi, tol=schedule.stage_tol)
        diff = None if pro is None else xi_norm(space, res.xi - pro)
        stages.append(Stage(L, n, res.iterations, res.residual_norm, res.norm, diff))
        prev = (space, res.xi)
    return space, prev[1], stages


def tail_decreasing(stages) -> bool:
    d = [s.difference for s in stages if s.difference is not None]
    return len(d) < 3 or (d[-1] < d[-2] < d[-3])


def negative_part_check(u: DiscreteField) -> dict:
    """Pass when ``min u >= -1e-10 (1 + max u)`` over the vertices."""
    lo = float(u.nodal.min())
    hi = float(u.nodal.max())
    return {"passed": lo >= -1e-10 * (1.0 + hi), "min": lo, "max": hi}


def final_weak_form_check(spec: ProblemSpec, f_raw: NonlinearitySpec, u: DiscreteField,
                          num_tests: int = 16, seed: int = 0, n: int | None = None) -> float:
    """Largest relative defect of the weak identity with the original ``f``.

    Tests every hat function and ``num_tests`` random fields of the space.
    ``n`` adds the ``1/n`` load when the identity of a regularized stage is
    wanted instead of the limit one.
    """
    asm = u.asm
    N = spec.N
    up = u.u_plus
    flux = (u.grad_norm ** (N - 2))[:, None] * u.grad
    lhs_loc = asm.space.volumes[:, None] * np.einsum("ed,ead->ea", flux, asm.dphi)
    src = spec.lam * (spec.a1 * up**spec.r1 + spec.a2 * (u.grad_norm**spec.r2)[:, None])
    src = src + f_raw(up)
    if n is not None:
        src = src + 1.0 / n
    rhs_loc = (asm.wq * src) @ asm.phi
    lhs = asm.scatter(lhs_loc)
    rhs = asm.scatter(rhs_loc)
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1.0, 1.0, size=(num_tests, u.space.m))
    lhs_all = np.concatenate([lhs, W @ lhs])
    rhs_all = np.concatenate([rhs, W @ rhs])
    return float(np.max(np.abs(lhs_all - rhs_all) / (1.0 + np.abs(lhs_all))))


@dataclass
class ContinuationResult:
    space: GalerkinSpace
    xi: np.ndarray
    stages: list
    differences: list
    defect: float
    accepted: bool

    @property
    def field(self) -> DiscreteField:
        return make_field(self.space, self.xi)


def continue_in_n(spec: ProblemSpec, f: NonlinearitySpec, schedule: ContinuationSchedule,
                  space: GalerkinSpace, r: float, xi0=None, num_tests: int = 16,
                  seed: int = 0) -> ContinuationResult:
    """Solve the regularized problems along ``schedule.ns`` on one space.

    Each stage uses ``f_n = make_fk(f, n)`` and is warm-started from the
    previous one.  Accepts once the last difference is at most
    ``continuation_tol`` (and the original-``f`` defect is at most
    ``defect_tol`` when that is set).
    """
    xi = np.zeros(space.m) if xi0 is None else np.asarray(xi0, dtype=float)
    stages, diffs = [], []
    defect = math.inf
    prev = None
    for n in schedule.ns:
        reg = make_fk(f, n)
        res = solve_fixed(spec, reg, n, space, r, xi, tol=schedule.stage_tol)
        diff = None if prev is None else xi_norm(space, res.xi - prev)
        stages.append(Stage(space.level, n, res.iterations, res.residual_norm, res.norm, diff))
        xi = res.xi
        prev = xi
        if diff is None:
            continue
        diffs.append(diff)
        log.info("n = %d: ||u_n - u_prev|| = %.3e", n, diff)
        if diff <= schedule.continuation_tol:
            defect = final_weak_form_check(spec, f, make_field(space, xi), num_tests, seed)
            if schedule.defect_tol is None or defect <= schedule.defect_tol:
                return ContinuationResult(space, xi, stages, diffs, defect, True)
        if len(diffs) >= 3 and diffs[-3] <= diffs[-2] <= diffs[-1]:
            raise StagnationError(
                f"continuation differences stopped decreasing: {diffs[-3:]}", diffs)
    defect = final_weak_form_check(spec, f, make_field(space, xi), num_tests, seed)
    return ContinuationResult(space, xi, stages, diffs, defect, False)


@dataclass
class SolveReport:
    """Outcome of a full run; every key is present whatever the outcome."""

    domain: str
    level: int
    m: int
    lam: float
    forced: bool
    constants: dict
    certificate: dict | None = None
    subsolution: dict | None = None
    refinement: list = field(default_factory=list)
    refinement_tail_decreasing: bool | None = None
    continuation: list = field(default_factory=list)
    continuation_accepted: bool | None = None
    ball_respected: bool | None = None
    positivity: dict | None = None
    comparison: dict | None = None
    weak_form_defect: float | None = None
    failure: dict | None = None
    xi: np.ndarray | None = field(default=None, repr=False)
    space: GalerkinSpace | None = field(default=None, repr=False)
    subsolution_xi: np.ndarray | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        checks = [
            self.failure is None,
            bool(self.certificate and self.certificate["passed"]),
            bool(self.continuation_accepted),
            bool(self.ball_respected),
            bool(self.positivity and self.positivity["passed"]),
            bool(self.comparison and self.comparison["passed"]),
        ]
        return all(checks)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("xi", "space", "subsolution_xi")}
        d["refinement"] = [s.to_dict() if isinstance(s, Stage) else s for s in self.refinement]
        d["continuation"] = [s.to_dict() if isinstance(s, Stage) else s for s in self.continuation]
        d["passed"] = self.passed
        return d
