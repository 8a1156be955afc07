"""Property suites run by ``nlap check``."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .constants import alpha_N, moser_probe, tm_probe
from .mesh import build_space, prolong, refine, xi_norm
from .nonlinearity import (
    EvaluationError,
    breakpoint_defects,
    check_hypothesis_F,
    make_fk,
    uniform_convergence_check,
    verify_growth_bounds,
)
from .operators import ProblemSpec, jacobian, make_field, residual
from .subsolution import energy, energy_gradient

SUITES = ("fk", "norm", "gradient", "tm")


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: dict

    def to_dict(self):
        return {"suite": self.suite, "name": self.name, "passed": bool(self.passed),
                "detail": self.detail}


def jacobian_fd_error(spec: ProblemSpec, reg, n, space, xi, step: float = 1e-6,
                      eps_reg: float | None = None) -> float:
    """Largest relative column error of :func:`jacobian` against central differences."""
    xi = np.asarray(xi, dtype=float)
    J = jacobian(spec, reg, n, make_field(space, xi), eps_reg).toarray()
    worst = 0.0
    for j in range(space.m):
        h = step * max(1.0, abs(xi[j]))
        e = np.zeros(space.m)
        e[j] = h
        fd = (residual(spec, reg, n, make_field(space, xi + e))
              - residual(spec, reg, n, make_field(space, xi - e))) / (2.0 * h)
        scale = max(np.linalg.norm(fd, np.inf), 1e-12)
        worst = max(worst, float(np.linalg.norm(J[:, j] - fd, np.inf) / scale))
    return worst


def energy_gradient_fd_error(spec: ProblemSpec, space, xi, step: float = 1e-6) -> float:
    """Relative error of the energy gradient against central differences."""
    xi = np.asarray(xi, dtype=float)
    g = energy_gradient(spec, make_field(space, xi))
    fd = np.empty_like(g)
    for j in range(space.m):
        h = step * max(1.0, abs(xi[j]))
        e = np.zeros(space.m)
        e[j] = h
        fd[j] = (energy(spec, make_field(space, xi + e))
                 - energy(spec, make_field(space, xi - e))) / (2.0 * h)
    return float(np.linalg.norm(g - fd, np.inf) / max(np.linalg.norm(fd, np.inf), 1e-300))


def positive_samples(space, count: int, seed: int = 0, scale: float = 0.1):
    """Random coefficient vectors with entries in ``scale * [0.2, 1]``."""
    rng = np.random.default_rng(seed)
    return [scale * rng.uniform(0.2, 1.0, size=space.m) for _ in range(count)]


# -- suites ---------------------------------------------------------------------

def suite_fk(spec: ProblemSpec, seed: int = 0):
    f = spec.nonlinearity
    grid = np.linspace(-3.0, 3.0, 2000)
    out = []
    try:
        rep = check_hypothesis_F(f, grid)
        out.append(CheckResult("fk", "hypothesis_F", rep.passed,
                               {"violations": len(rep.violations)}))
    except EvaluationError as exc:
        out.append(CheckResult("fk", "hypothesis_F", False, {"error": str(exc)}))
    for k in (1, 2, 4, 8, 16):
        reg = make_fk(f, k)
        rep = verify_growth_bounds(reg, grid)
        out.append(CheckResult("fk", f"growth_bounds_k{k}", rep.passed, rep.details))
        jump = float(np.max(breakpoint_defects(reg)))
        out.append(CheckResult("fk", f"breakpoints_k{k}", jump <= 1e-9, {"max_defect": jump}))
    table, last_min = uniform_convergence_check(f, 2.0, [1, 4, 16, 64])
    out.append(CheckResult("fk", "uniform_convergence", last_min,
                           {"sup_errors": [e for _, e in table]}))
    return out


def suite_norm(spec: ProblemSpec, level: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    space = build_space(spec.domain, max(1, min(level, 3)))
    out = []
    homog = tri = 0.0
    pos = True
    for _ in range(20):
        x, y = rng.normal(size=space.m), rng.normal(size=space.m)
        t = rng.uniform(-3.0, 3.0)
        nx, ny = xi_norm(space, x), xi_norm(space, y)
        homog = max(homog, abs(xi_norm(space, t * x) - abs(t) * nx) / (abs(t) * nx))
        tri = max(tri, xi_norm(space, x + y) - nx - ny)
        pos = pos and nx > 0
    out.append(CheckResult("norm", "homogeneity", homog <= 1e-12, {"max_rel": homog}))
    out.append(CheckResult("norm", "triangle", tri <= 1e-12, {"max_excess": tri}))
    out.append(CheckResult("norm", "definiteness",
                           pos and xi_norm(space, np.zeros(space.m)) == 0.0, {}))
    if spec.domain != "disk":
        fine = refine(space)
        x = rng.normal(size=space.m)
        a, b = xi_norm(space, x), xi_norm(fine, prolong(space, x, fine.level))
        out.append(CheckResult("norm", "prolongation_isometry", abs(a - b) <= 1e-12 * a,
                               {"coarse": a, "fine": b}))
    return out


def suite_gradient(spec: ProblemSpec, seed: int = 0, n: int = 10):
    space = build_space(spec.domain, 2 if spec.domain != "disk" else 1)
    reg = make_fk(spec.nonlinearity, n)
    errs = [jacobian_fd_error(spec, reg, n, space, xi)
            for xi in positive_samples(space, 3, seed)]
    out = [CheckResult("gradient", "jacobian_fd", max(errs) <= 1e-4, {"max_rel": max(errs)})]
    if spec.lam * spec.a1 > 0:
        e = max(energy_gradient_fd_error(spec, space, xi)
                for xi in positive_samples(space, 3, seed + 1))
        out.append(CheckResult("gradient", "energy_gradient_fd", e <= 1e-4, {"max_rel": e}))
    return out


def suite_tm(spec: ProblemSpec, level: int, seed: int = 0):
    space = build_space(spec.domain, max(1, min(level, 4)))
    measure = space.mesh.measure
    zero = tm_probe(space, alpha_N(spec.N), "zero")
    half = tm_probe(space, 0.5 * alpha_N(spec.N), [moser_probe(space)])
    return [
        CheckResult("tm", "zero_probe_L_at_least_1", zero / measure >= 1.0 - 1e-12,
                    {"L_observed": zero / measure}),
        CheckResult("tm", "subcritical_probe_finite", bool(np.isfinite(half)) and half >= measure,
                    {"integral": half}),
    ]


def run_suites(spec: ProblemSpec, level: int, suites=SUITES, seed: int = 0) -> dict:
    """Run the chosen suites and summarize pass/fail counts."""
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    results = []
    for name in suites:
        if name == "fk":
            results += suite_fk(spec, seed)
        elif name == "norm":
            results += suite_norm(spec, level, seed)
        elif name == "gradient":
            results += suite_gradient(spec, seed)
        elif name == "tm":
            results += suite_tm(spec, level, seed)
    passed = sum(r.passed for r in results)
    return {"suites": list(suites), "passed": passed, "failed": len(results) - passed,
            "results": [r.to_dict() for r in results]}


def with_lambda(spec: ProblemSpec, lam: float) -> ProblemSpec:
    return replace(spec, lam=lam)
