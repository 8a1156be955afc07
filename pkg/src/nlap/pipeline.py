"""End-to-end runs: constants, certificate, refinement, continuation, checks."""

from __future__ import annotations

import logging
import math

import numpy as np

from .config import RunConfig
from .constants import ConstantsReport, HypothesisError, certify
from .mesh import GalerkinSpace, build_space, space_at, xi_norm
from .nonlinearity import make_fk
from .operators import AssemblyOverflowError, ProblemSpec, make_field
from .solver import (
    ContinuationSchedule,
    NonConvergenceError,
    SolveReport,
    StagnationError,
    coercivity_certificate,
    continue_in_n,
    final_weak_form_check,
    negative_part_check,
    refine_in_m,
    solve_fixed,
    tail_decreasing,
)
from .subsolution import DegenerateMinimizerError, comparison_check, solve_p5

log = logging.getLogger(__name__)

RECOVERABLE = (NonConvergenceError, StagnationError, AssemblyOverflowError,
               DegenerateMinimizerError, HypothesisError, ArithmeticError)


class RegimeError(ValueError):
    """``lam >= lambda*`` without ``force``."""


def lambda_star(cfg: RunConfig, space: GalerkinSpace) -> ConstantsReport:
    """Constants at ``lam = 0``; ``lambda*`` does not depend on ``lam``."""
    return certify(cfg.problem(0.0), space, trials=cfg.certificate.trials, seed=cfg.seed)


def resolve_lambda(cfg: RunConfig, space: GalerkinSpace) -> float:
    if cfg.lam is not None:
        return float(cfg.lam)
    ls = lambda_star(cfg, space).lambda_star
    if math.isinf(ls):
        raise RegimeError("lam_fraction needs a finite lambda*; set lam instead")
    return cfg.lam_fraction * ls


def constants_for(cfg: RunConfig, space: GalerkinSpace, lam: float | None = None):
    lam = resolve_lambda(cfg, space) if lam is None else lam
    spec = cfg.problem(lam)
    return spec, certify(spec, space, trials=cfg.certificate.trials, seed=cfg.seed)


def _initial_guess(space: GalerkinSpace, v0_space, v0_xi, r: float) -> np.ndarray:
    if v0_xi is None:
        return np.zeros(space.m)
    xi = space.interpolate(lambda p: v0_space.evaluate(v0_xi, p))
    nrm = xi_norm(space, xi)
    return xi * (0.5 * r / nrm) if nrm > 0.5 * r else xi


def run_solve(cfg: RunConfig, lam: float | None = None) -> SolveReport:
    """Run the whole scheme for ``cfg``; raises :class:`RegimeError` outside it."""
    levels = cfg.refinement_levels
    base = build_space(cfg.domain, levels[0])
    space = space_at(base, cfg.level)
    spec, consts = constants_for(cfg, space, lam)
    forced = False
    if not consts.certified:
        if not cfg.force:
            raise RegimeError(f"lambda = {spec.lam:.6g} is not below lambda* = "
                              f"{consts.lambda_star:.6g}; use --force to run anyway")
        forced = True
    rep = SolveReport(domain=cfg.domain, level=cfg.level, m=space.m, lam=spec.lam,
                      forced=forced, constants=consts.to_dict(), space=space)
    r = consts.r
    sched = cfg.schedule
    n_star = consts.n_star if consts.n_star is not None else 1
    n0 = sched.n0 if sched.n0 is not None else max(n_star, sched.min_n)
    if sched.ns is not None:
        ns = list(sched.ns)
    elif sched.limit:
        ns = [n0 * 2**j for j in range(sched.stages)]
    else:
        ns = [n0]
    if not forced and ns[0] < n_star:
        raise RegimeError(f"schedule starts at n = {ns[0]} below n* = {n_star}")
    n0 = ns[0]
    schedule = ContinuationSchedule(levels=levels, ns=ns, stage_tol=cfg.stage_tol,
                                    continuation_tol=sched.continuation_tol,
                                    defect_tol=sched.defect_tol)
    f = spec.nonlinearity
    stage = "certificate"
    try:
        reg0 = make_fk(f, n0)
        cert = coercivity_certificate(spec, reg0, n0, space, r, consts.rho if consts.rho > 0
                                      else 0.0, cfg.certificate.num_dirs, cfg.seed)
        rep.certificate = cert.to_dict()

        stage = "subsolution"
        v0 = None
        if spec.lam * spec.a1 > 0:
            v0 = solve_p5(spec, space)
            rep.subsolution = v0.to_dict()
            rep.subsolution_xi = v0.field.xi

        stage = "refine_in_m"
        coarse = space_at(base, levels[0])
        xi0 = _initial_guess(coarse, space, None if v0 is None else v0.field.xi, r)
        floor = None if v0 is None else (space, v0.field.xi)
        if len(levels) >= 2:
            _, xi, stages = refine_in_m(spec, reg0, n0, schedule, coarse, r, xi0, floor)
            rep.refinement = stages
            rep.refinement_tail_decreasing = tail_decreasing(stages)
        else:
            res = solve_fixed(spec, reg0, n0, space, r, xi0, tol=schedule.stage_tol)
            xi = res.xi
            rep.refinement_tail_decreasing = None

        stage = "continue_in_n"
        if len(ns) > 1:
            out = continue_in_n(spec, f, schedule, space, r, xi0=xi, seed=cfg.seed)
            rep.continuation = out.stages
            rep.continuation_accepted = out.accepted
            rep.weak_form_defect = out.defect
            xi = out.xi
        else:
            rep.continuation_accepted = True
            rep.weak_form_defect = final_weak_form_check(spec, f, make_field(space, xi),
                                                         seed=cfg.seed, n=n0)
        rep.xi = xi
        all_stages = list(rep.refinement) + list(rep.continuation)
        rep.ball_respected = all(s.norm <= r + 1e-12 for s in all_stages) and \
            xi_norm(space, xi) <= r + 1e-12

        stage = "checks"
        u = make_field(space, xi)
        rep.positivity = negative_part_check(u)
        if v0 is not None:
            rep.comparison = comparison_check(u, v0, cfg.comparison_slack)
        else:
            rep.comparison = {"passed": True, "min_gap": None, "slack": cfg.comparison_slack,
                              "v0_max": None, "skipped": "lam * a1 = 0"}
    except RECOVERABLE as exc:
        log.error("stage %s failed: %s", stage, exc)
        rep.failure = {"stage": stage, "error": f"{type(exc).__name__}: {exc}"}
    return rep


def sweep_values(text: str) -> list[float]:
    """Parse ``a:b:steps`` into ``steps`` evenly spaced values."""
    try:
        a, b, steps = text.split(":")
        a, b, steps = float(a), float(b), int(steps)
    except ValueError:
        raise ValueError(f"sweep must look like lo:hi:steps, got {text!r}") from None
    if steps < 1:
        raise ValueError("sweep needs at least one step")
    return [float(x) for x in np.linspace(a, b, steps)]


def problem_summary(spec: ProblemSpec) -> dict:
    return {"N": spec.N, "domain": spec.domain, "lam": spec.lam, "a1": spec.a1, "a2": spec.a2,
            "r1": spec.r1, "r2": spec.r2, "a3": spec.a3, "alpha": spec.alpha, "r3": spec.r3,
            "nonlinearity": spec.nonlinearity.name}
