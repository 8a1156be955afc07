"""Exponential-growth nonlinearity, its antiderivative and Lipschitz regularization.

The regularized sequence ``f_k`` replaces ``f`` by difference quotients of
the antiderivative ``G``; each ``f_k`` is Lipschitz, keeps the sign condition
``s * f_k(s) >= 0`` and converges to ``f`` uniformly on bounded sets.
"""

from __future__ import annotations

import math
import re
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator


class EvaluationError(ValueError):
    """The nonlinearity returned a non-finite value."""


class QuadratureToleranceError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


# Gauss-Legendre nodes on [0, 1] for the vectorized segment integrals.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class NonlinearitySpec:
    """A nonlinearity ``f`` together with its growth certificate.

    ``f`` must accept numpy arrays.  With ``extension="zero"`` it is only
    consulted on ``(0, inf)`` and taken to vanish for ``s <= 0``; with
    ``extension="full"`` it is evaluated on the whole line.
    """

    f: Callable[[np.ndarray], np.ndarray]
    a3: float
    alpha: float
    r3: float
    N: int = 2
    extension: str = "zero"
    name: str = "custom"

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if not self.a3 > 0:
            raise ValueError("a3 must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.r3 > self.N - 1:
            raise ValueError(f"r3 must exceed N-1 = {self.N - 1}, got {self.r3}")
        if self.extension not in ("zero", "full"):
            raise ValueError("extension must be 'zero' or 'full'")

    @property
    def exponent(self) -> float:
        """The Trudinger-Moser exponent ``N/(N-1)``."""
        return self.N / (self.N - 1.0)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.extension == "full":
            return np.asarray(self.f(s), dtype=float)
        out = np.zeros_like(s)
        pos = s > 0
        if np.any(pos):
            out[pos] = self.f(s[pos])
        return out

    def envelope(self, s):
        """Right-hand side of hypothesis (F): ``a3 |s|^(r3+1) exp(alpha |s|^(N/(N-1)))``."""
        a = np.abs(np.asarray(s, dtype=float))
        return self.a3 * a ** (self.r3 + 1) * np.exp(self.alpha * a**self.exponent)


class Antiderivative:
    """``G(s) = int_0^s f``, evaluated by adaptive quadrature.

    Integrals over the panels ``[i h, (i+1) h]`` are cached; the cache is
    guarded by a lock so concurrent readers are safe.
    """

    def __init__(self, f: Callable, panel: float = 0.25, epsabs: float = 1e-12,
                 epsrel: float = 1e-13):
        self._f = f
        self.panel = panel
        self.epsabs = epsabs
        self.epsrel = epsrel
        self._cache: dict[int, float] = {}
        self._lock = threading.Lock()

    def _scalar_f(self, x):
        return float(self._f(np.array([x]))[0])

    def _quad(self, a: float, b: float) -> float:
        if a == b:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(self._scalar_f, a, b, epsabs=self.epsabs,
                                          epsrel=self.epsrel, limit=200)
            except integrate.IntegrationWarning as exc:
                val, err = integrate.quad(self._scalar_f, a, b, epsabs=self.epsabs,
                                          epsrel=self.epsrel, limit=200)
                raise QuadratureToleranceError(
                    f"quadrature on [{a}, {b}] did not converge: estimate {val!r}, "
                    f"error {err!r} ({exc})", estimate=val, error=err) from exc
        if not math.isfinite(val):
            raise QuadratureToleranceError(
                f"non-finite integral on [{a}, {b}]", estimate=val, error=err)
        if err > max(self.epsabs, self.epsrel * abs(val)) * 10.0:
            raise QuadratureToleranceError(
                f"quadrature on [{a}, {b}] reached only error {err:.3e} "
                f"(estimate {val!r})", estimate=val, error=err)
        return val

    def _panel_integral(self, i: int) -> float:
        with self._lock:
            hit = self._cache.get(i)
        if hit is not None:
            return hit
        val = self._quad(i * self.panel, (i + 1) * self.panel)
        with self._lock:
            self._cache[i] = val
        return val

    def __call__(self, s: float) -> float:
        s = float(s)
        if not math.isfinite(s):
            raise ValueError(f"G evaluated at non-finite point {s}")
        if s == 0.0:
            return 0.0
        i = int(math.floor(abs(s) / self.panel))
        if s > 0:
            total = sum(self._panel_integral(j) for j in range(i))
            return total + self._quad(i * self.panel, s)
        total = sum(self._panel_integral(-j - 1) for j in range(i))
        return -(total + self._quad(s, -i * self.panel))

    def warm(self, bound: float) -> None:
        """Pre-compute every panel in ``[-bound, bound]``."""
        n = int(math.ceil(bound / self.panel))
        for i in range(-n, n):
            self._panel_integral(i)

    def segment(self, a, length: float):
        """Vectorized ``int_a^{a+length} f`` by composite Gauss-Legendre."""
        a = np.asarray(a, dtype=float)
        pieces = max(1, int(math.ceil(length / self.panel)))
        h = length / pieces
        starts = a[..., None] + h * np.arange(pieces)
        x = starts[..., None] + h * _GL_X
        vals = np.asarray(self._f(x.ravel()), dtype=float).reshape(x.shape)
        return h * (vals @ _GL_W).sum(axis=-1)


def antiderivative_G(spec: NonlinearitySpec, s: float) -> float:
    """Return ``int_0^s f`` to absolute tolerance 1e-12."""
    return Antiderivative(spec)(s)


@dataclass
class RegularizedNonlinearity:
    """The Lipschitz approximation ``f_k`` of a nonlinearity."""

    k: int
    base: NonlinearitySpec
    G: Antiderivative
    C1: float
    C2: float
    c_k: float | None = None
    _outer: dict = field(default_factory=dict, repr=False)

    def _outer_value(self, side: int) -> float:
        if side not in self._outer:
            k = self.k
            with np.errstate(over="ignore", invalid="ignore"):
                if side > 0:
                    v = k * self.G.segment(np.array([float(k)]), 1.0 / k)[0]
                else:
                    v = k * self.G.segment(np.array([-k - 1.0 / k]), 1.0 / k)[0]
            self._outer[side] = float(v)
        return self._outer[side]

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = float(self.k)
        h = 1.0 / k
        out = np.empty_like(s)
        a = np.abs(s)
        inner = a <= h
        if np.any(inner):
            pos = self.G.segment(np.array([h]), h)[0]
            neg = self.G.segment(np.array([-2.0 * h]), h)[0]
            si = s[inner]
            # k^2 s [G(2/k) - G(1/k)] for s >= 0 and k^2 s [G(-2/k) - G(-1/k)] below.
            out[inner] = np.where(si >= 0, k * k * si * pos, -k * k * si * neg)
        mid = (a > h) & (a <= k)
        if np.any(mid):
            sm = s[mid]
            start = np.where(sm > 0, sm, sm - h)
            out[mid] = k * self.G.segment(start, h)
        hi = s > k
        if np.any(hi):
            out[hi] = self._outer_value(+1)
        lo = s < -k
        if np.any(lo):
            out[lo] = self._outer_value(-1)
        return out

    def derivative(self, s, step=None):
        """Central difference derivative with step ``1e-6 (1 + |s|)``."""
        s = np.asarray(s, dtype=float)
        d = 1e-6 * (1.0 + np.abs(s)) if step is None else step
        return (self(s + d) - self(s - d)) / (2.0 * d)

    @property
    def breakpoints(self) -> np.ndarray:
        k = float(self.k)
        return np.array([-k, -1.0 / k, 1.0 / k, k])

    def growth_rhs(self, s):
        """Envelopes of the two growth bounds, ``(C1 |s|^r3 E(s), C2 s^2 E(s))``."""
        spec = self.base
        a = np.abs(np.asarray(s, dtype=float))
        e = np.exp(2.0**spec.exponent * spec.alpha * a**spec.exponent)
        return self.C1 * a**spec.r3 * e, self.C2 * a**2 * e


def growth_constants(spec: NonlinearitySpec) -> tuple[float, float]:
    """``C1 = a3 2^r3`` and ``C2 = a3 2^(r3-1) exp(2^(N/(N-1)) alpha)``."""
    c1 = spec.a3 * 2.0**spec.r3
    c2 = spec.a3 * 2.0 ** (spec.r3 - 1.0) * math.exp(2.0**spec.exponent * spec.alpha)
    return c1, c2


def make_fk(spec: NonlinearitySpec, k: int) -> RegularizedNonlinearity:
    """Build ``f_k`` for ``k >= 1``."""
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    c1, c2 = growth_constants(spec)
    return RegularizedNonlinearity(k=int(k), base=spec, G=Antiderivative(spec), C1=c1, C2=c2)


def lipschitz_estimate(reg: RegularizedNonlinearity, M: float, points: int = 100_001) -> float:
    """Sup of forward difference quotients of ``f_k`` on ``[-M, M]``, step ``M * 1e-6``.

    The value is stored on ``reg.c_k``.
    """
    if not M > 0:
        raise ValueError("M must be positive")
    s = np.linspace(-M, M, points)
    h = M * 1e-6
    with np.errstate(over="ignore", invalid="ignore"):
        q = np.abs(reg(s + h) - reg(s)) / h
    c = float(np.max(q))
    reg.c_k = c
    return c


@dataclass
class Report:
    """Outcome of a grid check; ``violations`` lists offending sample points."""

    name: str
    passed: bool
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)


def _finite_or_raise(values, grid, what):
    bad = ~np.isfinite(values)
    if np.any(bad):
        s = float(np.asarray(grid)[bad][0])
        raise EvaluationError(f"{what} is not finite at s = {s!r}")


def check_hypothesis_F(spec: NonlinearitySpec, grid) -> Report:
    """Check ``0 <= s f(s) <= a3 |s|^(r3+1) exp(alpha |s|^(N/(N-1)))`` on ``grid``."""
    s = np.atleast_1d(np.asarray(grid, dtype=float))
    if s.size == 0 or not np.all(np.isfinite(s)):
        raise ValueError("grid must be nonempty and finite")
    with np.errstate(over="ignore", invalid="ignore"):
        fs = spec(s)
    _finite_or_raise(fs, s, "f")
    lhs = s * fs
    with np.errstate(over="ignore"):
        rhs = spec.envelope(s)
    bad = (lhs < 0) | (lhs > rhs * (1.0 + 1e-12))
    return Report("hypothesis_F", not np.any(bad), [float(x) for x in s[bad]])


def verify_growth_bounds(reg: RegularizedNonlinearity, grid) -> Report:
    """Check both growth bounds of ``s f_k(s)`` with the stored ``C1``, ``C2``.

    The first bound is tested where ``|s| >= 1/k``, the second where
    ``|s| <= 1/k``.
    """
    s = np.atleast_1d(np.asarray(grid, dtype=float))
    h = 1.0 / reg.k
    with np.errstate(over="ignore", invalid="ignore"):
        lhs = s * reg(s)
        rhs1, rhs2 = reg.growth_rhs(s)
    _finite_or_raise(lhs, s, "s * f_k(s)")
    slack = 1.0 + 1e-12
    far = np.abs(s) >= h
    near = np.abs(s) <= h
    bad_sign = lhs < 0
    bad1 = far & (lhs > rhs1 * slack)
    bad2 = near & (lhs > rhs2 * slack)
    bad = bad_sign | bad1 | bad2
    return Report(
        "growth_bounds",
        not np.any(bad),
        [float(x) for x in s[bad]],
        {"sign": int(bad_sign.sum()), "far": int(bad1.sum()), "near": int(bad2.sum()),
         "k": reg.k},
    )


def breakpoint_defects(reg: RegularizedNonlinearity, delta: float = 1e-13) -> np.ndarray:
    """Relative jumps ``|f_k(b-) - f_k(b+)| / (1 + |f_k(b)|)`` at the breakpoints."""
    b = reg.breakpoints
    with np.errstate(over="ignore", invalid="ignore"):
        left = reg(b - delta * np.maximum(1.0, np.abs(b)))
        right = reg(b + delta * np.maximum(1.0, np.abs(b)))
        mid = reg(b)
    return np.abs(left - right) / (1.0 + np.abs(mid))


def uniform_convergence_check(spec: NonlinearitySpec, M: float, ks, points: int = 10_000):
    """Return ``[(k, sup_{|s|<=M} |f_k(s) - f(s)|), ...]`` and whether the last is minimal."""
    ks = list(ks)
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("ks must be increasing")
    s = np.linspace(-M, M, points)
    f = spec(s)
    table = []
    for k in ks:
        with np.errstate(over="ignore", invalid="ignore"):
            err = float(np.max(np.abs(make_fk(spec, k)(s) - f)))
        table.append((k, err))
    errs = [e for _, e in table]
    return table, errs[-1] == min(errs)


# -- catalog ---------------------------------------------------------------

def _odd_power(p):
    return lambda t: np.sign(t) * np.abs(t) ** p


def from_name(name: str, *, N: int = 2, a3: float = 1.0, alpha: float = 1.0,
              r3: float = 3.0, csv_path=None) -> NonlinearitySpec:
    """Build a nonlinearity from the catalog.

    Names: ``zero``, ``linear``, ``minus_linear`` (a negative control
    violating the sign condition), ``power(p)``, ``exp_critical``
    (``t exp(alpha |t|^(N/(N-1)))``), ``power_exp``
    (``|t|^(r3-1) t exp(alpha |t|^(N/(N-1)))``) and ``tabulated`` (needs
    ``csv_path``).
    """
    q = N / (N - 1.0)
    key = name.strip().lower()
    m = re.fullmatch(r"power\(\s*([-+0-9.eE]+)\s*\)", key)
    if key == "zero":
        fn, ext = (lambda t: np.zeros_like(t)), "full"
    elif key == "linear":
        fn, ext = (lambda t: np.array(t, dtype=float)), "full"
    elif key == "minus_linear":
        fn, ext = (lambda t: -np.array(t, dtype=float)), "full"
    elif m:
        fn, ext = _odd_power(float(m.group(1))), "full"
    elif key == "exp_critical":
        fn, ext = (lambda t: t * np.exp(alpha * np.abs(t) ** q)), "full"
    elif key == "power_exp":
        fn, ext = (lambda t: np.sign(t) * np.abs(t) ** r3 * np.exp(alpha * np.abs(t) ** q)), "full"
    elif key == "tabulated":
        if csv_path is None:
            raise ValueError("tabulated nonlinearity needs a CSV path")
        fn, ext = tabulated(csv_path), "zero"
    else:
        raise ValueError(f"unknown nonlinearity {name!r}")
    return NonlinearitySpec(f=fn, a3=a3, alpha=alpha, r3=r3, N=N, extension=ext, name=key)


def tabulated(path) -> Callable:
    """Monotone cubic interpolant of an ``s,f`` CSV table (header optional)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = [p.strip() for p in line.split(",")]
            if len(parts) < 2:
                continue
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                continue
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two (s, f) rows")
    data = np.array(sorted(rows))
    interp = PchipInterpolator(data[:, 0], data[:, 1], extrapolate=True)
    return lambda t: interp(np.asarray(t, dtype=float))
