"""Run configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .nonlinearity import NonlinearitySpec, from_name
from .operators import ProblemSpec


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NonlinearityConfig(_Strict):
    name: str
    a3: float
    alpha: float
    r3: float
    csv: Optional[str] = None


class ScheduleConfig(_Strict):
    ns: Optional[list[int]] = None
    n0: Optional[int] = Field(default=None, ge=1)
    stages: int = Field(default=40, ge=1)
    min_n: int = Field(default=10, ge=1)
    stage_tol: Optional[float] = Field(default=None, gt=0)
    continuation_tol: float = Field(default=1e-6, gt=0)
    defect_tol: Optional[float] = Field(default=1e-6, gt=0)
    limit: bool = True


class CertificateConfig(_Strict):
    num_dirs: int = Field(default=256, ge=64)
    trials: int = Field(default=100, ge=100)


class RunConfig(_Strict):
    """Everything a CLI run needs.

    Exactly one of ``lam`` and ``lam_fraction`` must be set; the latter
    means ``lam = lam_fraction * lambda*``.
    """

    N: int = 2
    domain: Literal["square", "disk", "cube"] = "square"
    level: int = Field(default=3, ge=0)
    levels: Optional[list[int]] = None
    lam: Optional[float] = Field(default=None, ge=0)
    lam_fraction: Optional[float] = Field(default=None, ge=0)
    a1: float = 1.0
    a2: float = 0.5
    r1: float = 0.5
    r2: float = 0.5
    nonlinearity: NonlinearityConfig = NonlinearityConfig(name="power_exp", a3=1.0, alpha=1.0, r3=3.0)
    schedule: ScheduleConfig = ScheduleConfig()
    certificate: CertificateConfig = CertificateConfig()
    comparison_slack: float = Field(default=1e-3, ge=0)
    seed: int = 0
    output: str = "nlap_out"
    force: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        if (self.lam is None) == (self.lam_fraction is None):
            if self.lam is None:
                self.lam_fraction = 0.5
            else:
                raise ValueError("lam: give either lam or lam_fraction, not both")
        if (self.domain == "cube") != (self.N == 3):
            raise ValueError(f"domain: {self.domain!r} does not match N = {self.N}")
        if self.levels is not None:
            if not self.levels or sorted(self.levels) != self.levels:
                raise ValueError("levels: must be a nonempty increasing list")
            if self.levels[-1] != self.level:
                raise ValueError("levels: last entry must equal level")
        if self.schedule.ns is not None and sorted(self.schedule.ns) != self.schedule.ns:
            raise ValueError("schedule.ns: must be nondecreasing")
        return self

    # -- derived objects ---------------------------------------------------

    @property
    def refinement_levels(self) -> list[int]:
        if self.levels is not None:
            return list(self.levels)
        first = 1 if self.domain != "disk" else 0
        return list(range(min(first, self.level), self.level + 1))

    @property
    def stage_tol(self) -> float:
        if self.schedule.stage_tol is not None:
            return self.schedule.stage_tol
        return 1e-8 if self.N == 3 else 1e-10

    def nonlinearity_spec(self) -> NonlinearitySpec:
        nl = self.nonlinearity
        try:
            return from_name(nl.name, N=self.N, a3=nl.a3, alpha=nl.alpha, r3=nl.r3,
                             csv_path=nl.csv)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"nonlinearity: {exc}") from exc

    def problem(self, lam: float | None = None) -> ProblemSpec:
        """The :class:`ProblemSpec` with ``lam`` (default: the configured value or 0)."""
        if lam is None:
            lam = self.lam if self.lam is not None else 0.0
        try:
            return ProblemSpec(self.N, self.domain, float(lam), self.a1, self.a2, self.r1,
                               self.r2, self.nonlinearity_spec())
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"problem: {exc}") from exc


def _format(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        msg = err["msg"].removeprefix("Value error, ")
        parts.append(f"{loc}: {msg}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config (or the defaults) and apply flat overrides.

    Supported override keys are ``lam``, ``level``, ``seed``, ``output`` and
    ``force``; a ``lam`` override clears ``lam_fraction``.
    """
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON in {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "lam":
            data.pop("lam_fraction", None)
        if key == "level" and "levels" in data:
            data["levels"] = [L for L in data["levels"] if L < value] + [value]
        data[key] = value
    return parse_config(data)
