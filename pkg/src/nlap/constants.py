"""Explicit constants of the existence argument, estimated on a discrete space.

The proof only asserts that the embedding constants and the
Trudinger-Moser constant ``L(N)`` exist.  Here they are replaced by probe
estimates (largest observed ratio, inflated by a safety factor), and every
derived quantity (radius ``r``, threshold ``lambda*``, margin ``rho``,
index ``n*``) is a discrete-constant certificate relative to them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .mesh import GalerkinSpace, distance_bump, xi_norm
from .nonlinearity import growth_constants
from .operators import ProblemSpec, assembler, stiffness

SAFETY = 2.0
CERTIFICATE_LABEL = "discrete-constant certificate"


class HypothesisError(ValueError):
    """A structural hypothesis of the existence argument fails."""


def sphere_measure(N: int) -> float:
    """Surface measure of the unit sphere in R^N, ``2 pi^(N/2) / Gamma(N/2)``."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def alpha_N(N: int) -> float:
    """Critical Moser exponent ``N * omega_{N-1}^(1/(N-1))``."""
    if N < 2:
        raise ValueError("N must be >= 2")
    return N * sphere_measure(N) ** (1.0 / (N - 1.0))


# -- probes ------------------------------------------------------------------

def _lq_norm(asm, uq, q):
    return asm.integrate(np.abs(uq) ** q) ** (1.0 / q)


def _ratio(space, asm, xi, q):
    nrm = xi_norm(space, xi)
    if nrm == 0.0:
        return 0.0
    uq = asm.field(xi).uq
    return _lq_norm(asm, uq, q) / nrm


def moser_probe(space: GalerkinSpace, ell: float | None = None) -> np.ndarray:
    """Truncated Moser function centred in the domain, unit ``W^{1,N}_0`` norm.

    The truncation radius defaults to the mesh size ``2**-level`` of the
    inscribed unit ball (radius 1/2 on the square and cube).
    """
    N = space.dim
    x = space.mesh.vertices[space.dofs]
    if space.mesh.domain == "disk":
        centre, R = np.zeros(N), 1.0
    else:
        centre, R = np.full(N, 0.5), 0.5
    if ell is None:
        ell = 2.0**space.level
    ell = max(float(ell), 1.0 + 1e-12)
    rho = np.linalg.norm(x - centre, axis=1) / R
    lg = math.log(ell)
    omega = sphere_measure(N)
    scale = omega ** (-1.0 / N)
    with np.errstate(divide="ignore"):
        outer = np.log(1.0 / np.maximum(rho, 1e-300)) / lg ** (1.0 / N)
    u = scale * np.where(rho <= 1.0 / ell, lg ** ((N - 1.0) / N), np.where(rho < 1.0, outer, 0.0))
    nrm = xi_norm(space, u)
    return u / nrm if nrm > 0 else u


def probe_fields(space: GalerkinSpace, trials: int, seed: int = 0) -> list[np.ndarray]:
    """Deterministic bumps followed by ``trials`` random fields."""
    x = space.mesh.vertices[space.dofs]
    fields = [distance_bump(space)]
    if space.mesh.domain == "disk":
        fields.append(1.0 - np.sum(x**2, axis=1))
    else:
        fields.append(np.prod(np.sin(np.pi * x), axis=1))
    centre = np.argmin(np.linalg.norm(x - x.mean(axis=0), axis=1))
    hat = np.zeros(space.m)
    hat[centre] = 1.0
    fields.append(hat)
    rng = np.random.default_rng(seed)
    smooth = fields[0]
    for _ in range(trials):
        kind = rng.integers(3)
        if kind == 0:
            fields.append(rng.normal(size=space.m))
        elif kind == 1:
            fields.append(smooth * np.exp(rng.normal(scale=0.5, size=space.m)))
        else:
            c = x[rng.integers(space.m)]
            w = rng.uniform(0.1, 0.6)
            fields.append(np.exp(-np.sum((x - c) ** 2, axis=1) / w**2) * smooth)
    return fields


def _ascend(space, asm, xi, q, K, iters=200):
    # Preconditioned ascent on log ||u||_q - log ||grad u||_N from a positive start.
    N = space.dim
    lu = splu(K.tocsc())
    xi = np.abs(xi)

    def value(v):
        return math.log(max(_ratio(space, asm, v, q), 1e-300))

    def gradient(v):
        u = asm.field(v)
        lq = asm.integrate(np.abs(u.uq) ** q)
        g1 = asm.test_integrals(np.sign(u.uq) * np.abs(u.uq) ** (q - 1.0)) / lq
        flux = (u.grad_norm ** (N - 2))[:, None] * u.grad
        loc = space.volumes[:, None] * np.einsum("ed,ead->ea", flux, asm.dphi)
        g2 = asm.scatter(loc) / xi_norm(space, v) ** N
        return g1 - g2

    val = value(xi)
    t = 1.0
    for _ in range(iters):
        g = gradient(xi)
        d = lu.solve(g)
        slope = float(g @ d)
        if slope <= 1e-14 * max(1.0, abs(val)):
            break
        d = d / math.sqrt(slope) * xi_norm(space, xi)
        slope = float(g @ d)
        t = min(2.0 * t, 1.0)
        while t > 1e-10:
            trial = xi + t * d
            v_new = value(trial)
            if v_new >= val + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        gain = v_new - val
        xi, val = trial / xi_norm(space, trial), v_new
        if gain < 1e-12:
            break
    return math.exp(val)


@dataclass
class EmbeddingEstimate:
    """Largest observed ``||u||_q / ||grad u||_N`` per target space."""

    exponents: dict
    ratios: dict
    safety: float = SAFETY

    def inflated(self, key: str) -> float:
        return self.safety * self.ratios[key]


def embedding_ratio(space: GalerkinSpace, q: float, trials: int = 100, seed: int = 0,
                    order: int = 8) -> float:
    """Largest observed ``||u||_q / ||grad u||_N`` over probes, refined by ascent.

    This is the raw (uninflated) estimate behind one entry of
    :func:`estimate_embedding_constants`.
    """
    if space.m == 0:
        raise ValueError("degenerate Galerkin space (m = 0)")
    asm = assembler(space, order)
    fields = probe_fields(space, trials, seed)
    vals = [_ratio(space, asm, f, q) for f in fields]
    best = int(np.argmax(vals))
    start = fields[best] if best < 3 else fields[0]
    return max(max(vals), _ascend(space, asm, start, q, stiffness(space)))


def estimate_embedding_constants(space: GalerkinSpace, spec: ProblemSpec, trials: int = 100,
                                 seed: int = 0, order: int = 8) -> EmbeddingEstimate:
    """Probe the four embeddings used by the coercivity estimate.

    Targets are ``L^(r1+1)``, ``L^(N/(N-r2))``, ``L^(N'(r3+1))`` and ``L^1``.
    Each ratio is the maximum over probe fields, refined by preconditioned
    ascent from the best probe.
    """
    if space.m == 0:
        raise ValueError("degenerate Galerkin space (m = 0)")
    if trials < 100:
        raise ValueError("at least 100 trials are required")
    N = spec.N
    exps = {
        "r1": spec.r1 + 1.0,
        "r2": N / (N - spec.r2),
        "r3": N * (spec.r3 + 1.0) / (N - 1.0),
        "L1": 1.0,
    }
    ratios = {key: embedding_ratio(space, q, trials, seed, order) for key, q in exps.items()}
    return EmbeddingEstimate(exponents=exps, ratios=ratios)


def tm_probe(space: GalerkinSpace, sigma: float, family="moser", seed: int = 0,
             trials: int = 32, order: int = 4) -> float:
    """Largest ``int exp(sigma |u|^(N/(N-1)))`` over a unit-norm probe family.

    ``family`` is ``"zero"``, ``"moser"``, ``"bumps"``, ``"random"``,
    ``"all"`` or an explicit list of coefficient vectors (each rescaled to
    unit norm).  An overflowing probe contributes ``inf``.
    """
    N = space.dim
    if isinstance(family, str):
        if family == "zero":
            fields = [np.zeros(space.m)]
        elif family == "moser":
            fields = [moser_probe(space)]
        elif family == "bumps":
            fields = probe_fields(space, 0)
        elif family == "random":
            fields = probe_fields(space, trials, seed)[3:]
        elif family == "all":
            fields = [np.zeros(space.m), moser_probe(space)] + probe_fields(space, trials, seed)
        else:
            raise ValueError(f"unknown probe family {family!r}")
    else:
        fields = list(family)
    asm = assembler(space, order)
    best = 0.0
    for xi in fields:
        xi = np.asarray(xi, dtype=float)
        nrm = xi_norm(space, xi)
        if nrm > 0:
            xi = xi / nrm
        uq = asm.field(xi).uq
        with np.errstate(over="ignore"):
            val = asm.integrate(np.exp(sigma * np.abs(uq) ** (N / (N - 1.0))))
        if not math.isfinite(val):
            return math.inf
        best = max(best, val)
    return best


def calibrate_L(space: GalerkinSpace, seed: int = 0, trials: int = 32) -> float:
    """``L_estimate = SAFETY * max(observed / |Omega|, 1)`` at ``sigma = alpha_N``."""
    obs = tm_probe(space, alpha_N(space.dim), "all", seed=seed, trials=trials)
    return SAFETY * max(obs / space.mesh.measure, 1.0)


# -- derived quantities ----------------------------------------------------------

def proof_constants(spec: ProblemSpec, emb: EmbeddingEstimate, measure: float) -> dict:
    """Constants ``Cemb1..Cemb5`` standing in for the proof's ``C1..C5``."""
    N = spec.N
    growth_c1, growth_c2 = growth_constants(spec.nonlinearity)
    return {
        "Cemb1": emb.inflated("r1") ** (spec.r1 + 1.0),
        "Cemb2": emb.inflated("r2"),
        "Cemb3": growth_c1 * emb.inflated("r3") ** (spec.r3 + 1.0) * measure ** (1.0 / N),
        "Cemb4": emb.inflated("L1"),
        "Cemb5": growth_c2,
    }


def compute_r(C3: float, L: float, spec: ProblemSpec) -> float:
    """Radius of the ball on which coercivity is certified."""
    N = spec.N
    gap = spec.r3 + 1.0 - N
    if gap <= 0:
        raise HypothesisError(f"need r3 + 1 > N, got r3 = {spec.r3}, N = {N}")
    first = 1.0 / (2.0 * (2.0 * C3 * L ** (1.0 / N)) ** (1.0 / gap))
    second = 0.5 * (alpha_N(N) / (N * spec.alpha)) ** ((N - 1.0) / N)
    return min(first, second)


def rho_of(lam: float, r: float, spec: ProblemSpec, C1: float, C2: float) -> float:
    """Coercivity margin ``r^N/2 - lam (a1 C1 r^(r1+1) + a2 C2 r^(r2+1))``."""
    return r**spec.N / 2.0 - lam * (spec.a1 * C1 * r ** (spec.r1 + 1.0)
                                    + spec.a2 * C2 * r ** (spec.r2 + 1.0))


def compute_lambda_star(r: float, spec: ProblemSpec, C1: float, C2: float):
    """Return ``(lambda*, rho)`` where ``rho(lam)`` is the margin function."""
    if not r > 0:
        raise ValueError("r must be positive")
    den = 2.0 * spec.a1 * C1 * r ** (spec.r1 + 1.0) + 2.0 * spec.a2 * C2 * r ** (spec.r2 + 1.0)
    lam_star = math.inf if den == 0 else 0.5 * r**spec.N / den
    return lam_star, (lambda lam: rho_of(lam, r, spec, C1, C2))


def n_star_lhs(n: float, r: float, spec: ProblemSpec, lam: float, C4: float, C5: float,
               measure: float) -> float:
    """Tail terms that must drop below ``rho/2``."""
    N = spec.N
    e = math.exp(2.0 ** (N / (N - 1.0)) * spec.alpha)
    return (C4 * r / n + lam * spec.a1 * measure / n ** (spec.r1 + 1.0)
            + C5 * e * measure / n**2 + measure / n**2)


def compute_n_star(rho: float, r: float, spec: ProblemSpec, lam: float, C4: float, C5: float,
                   measure: float) -> int:
    """Smallest integer ``n`` with ``n_star_lhs(n) < rho/2``."""
    if not rho > 0:
        raise ValueError("rho must be positive")

    def ok(n):
        return n_star_lhs(n, r, spec, lam, C4, C5, measure) < rho / 2.0

    hi = 1
    while not ok(hi):
        hi *= 2
    lo = hi // 2
    if lo == 0:
        return 1
    while hi - lo > 1:  # ok(hi) holds, ok(lo) fails
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class ConstantsReport:
    N: int
    alpha_N: float
    omega_Nminus1: float
    measure: float
    L_estimate: float
    Cemb1: float
    Cemb2: float
    Cemb3: float
    Cemb4: float
    Cemb5: float
    r: float
    lambda_star: float
    lam: float
    rho: float
    n_star: int | None
    embedding_ratios: dict = field(default_factory=dict)
    label: str = CERTIFICATE_LABEL

    @property
    def certified(self) -> bool:
        return self.lam < self.lambda_star and self.rho > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        ratios = d.pop("embedding_ratios")
        for k, v in ratios.items():
            d[f"embedding_ratio_{k}"] = v
        if math.isinf(d["lambda_star"]):
            d["lambda_star"] = None
        return d


def certify(spec: ProblemSpec, space: GalerkinSpace, lam: float | None = None,
            trials: int = 100, seed: int = 0) -> ConstantsReport:
    """Estimate every constant and derive ``r``, ``lambda*``, ``rho`` and ``n*``.

    ``lam`` defaults to ``spec.lam``; ``n_star`` is ``None`` when ``rho <= 0``.
    """
    lam = spec.lam if lam is None else lam
    N = spec.N
    measure = space.mesh.measure
    emb = estimate_embedding_constants(space, spec, trials=trials, seed=seed)
    C = proof_constants(spec, emb, measure)
    L = calibrate_L(space, seed=seed)
    r = compute_r(C["Cemb3"], L, spec)
    lam_star, rho_fn = compute_lambda_star(r, spec, C["Cemb1"], C["Cemb2"])
    rho = rho_fn(lam)
    n_star = compute_n_star(rho, r, spec, lam, C["Cemb4"], C["Cemb5"], measure) if rho > 0 else None
    return ConstantsReport(
        N=N, alpha_N=alpha_N(N), omega_Nminus1=sphere_measure(N), measure=measure,
        L_estimate=L, r=r, lambda_star=lam_star, lam=lam, rho=rho, n_star=n_star,
        embedding_ratios=dict(emb.ratios), **C,
    )
