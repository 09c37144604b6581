import json
import os
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
import structlog
import yaml
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from trimer.model import ModelParams

log = structlog.get_logger(__name__)

APP_NAME = os.getenv("APP_NAME", "trimer")
ENV = os.getenv("ENV", "dev")
VERSION = os.getenv("BUILD_VERSION") or "0.1.0"
THREADS = int(os.getenv("THREADS", os.cpu_count() or 1))

# numerical defaults, overridable per process
SOLVER_MAX_ITER = int(os.getenv("SOLVER_MAX_ITER", "2000"))
GRADIENT_TOL = float(os.getenv("GRADIENT_TOL", "1e-10"))
EQUILIBRIUM_TOL = float(os.getenv("EQUILIBRIUM_TOL", "1e-10"))
AMPLITUDE_TOL = float(os.getenv("AMPLITUDE_TOL", "1e-6"))
ZERO_MODE_TOL = float(os.getenv("ZERO_MODE_TOL", "1e-6"))

SWEEP_VARIABLES = ("g", "eta", "phi", "kappa")


class Subcommand(str, Enum):
    PHASE_DIAGRAM = "phase-diagram"
    SPECTRA = "spectra"
    SEMICLASSICS = "semiclassics"
    EVOLVE = "evolve"
    SPECTRUM = "spectrum"
    BIFURCATE = "bifurcate"
    FLUCTUATIONS = "fluctuations"
    SCALING = "scaling"
    ESCAPE = "escape"

    @property
    def open_system(self) -> bool:
        return self in (
            Subcommand.EVOLVE,
            Subcommand.SPECTRUM,
            Subcommand.BIFURCATE,
            Subcommand.FLUCTUATIONS,
            Subcommand.ESCAPE,
        )


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class SweepAxis(BaseModel):
    model_config = ConfigDict(frozen=True)

    variable: str
    min: float
    max: float
    points: int = 51
    log: bool = False

    @field_validator("variable")
    @classmethod
    def known_variable(cls, v: str) -> str:
        if v not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {v!r}")
        return v

    @field_validator("points")
    @classmethod
    def positive_points(cls, v: int) -> int:
        if v < 1:
            raise ValueError("points must be >= 1")
        return v

    @model_validator(mode="after")
    def log_bounds(self) -> "SweepAxis":
        if self.log and (self.min <= 0 or self.max <= 0):
            raise ValueError("log sweeps need positive bounds")
        return self

    def values(self) -> np.ndarray:
        if self.points == 1:
            return np.array([self.min])
        if self.log:
            return np.geomspace(self.min, self.max, self.points)
        return np.linspace(self.min, self.max, self.points)


class OutputSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: Optional[Path] = None
    format: OutputFormat = OutputFormat.CSV


class CommandOptions(BaseModel):
    """Per-subcommand knobs. Unused fields are ignored by commands that do not need them."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    eta_range: tuple[float, float] = (-1.0, 1.0)
    phi_values: list[float] = [0.0]
    points: int = 201
    probe_g: Optional[float] = None
    g_range: Optional[tuple[float, float]] = None
    delta_range: tuple[float, float] = (1e-5, 1e-2)
    side: str = "np"
    preset: str = "N"
    t_end: float = 1000.0
    tol: float = 1e-10
    dt: float = 0.05
    t_transient: float = 500.0
    t_measure: float = 2000.0
    site: int = 0
    resolution: int = 11
    classes: list[str] = ["N", "nFS", "FS", "mixed"]
    branch: str = "N"
    dynamical: bool = False
    runs: int = 20


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    subcommand: Subcommand
    params: ModelParams = ModelParams()
    sweep: Optional[SweepAxis] = None
    output: OutputSpec = OutputSpec()
    rng_seed: int = 0
    threads: int = THREADS
    kappa_given: bool = False
    options: CommandOptions = CommandOptions()

    @field_validator("threads")
    @classmethod
    def positive_threads(cls, v: int) -> int:
        return max(1, v)

    def summary(self) -> dict[str, Any]:
        return json.loads(self.model_dump_json())


def read_document(path: Path) -> dict[str, Any]:
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError(f"{path} must contain a flat key/value document")
    return data  # type: ignore[return-value]


def load_params(path: Path) -> ModelParams:
    return ModelParams.model_validate(read_document(path))


def parse_config(flags: dict[str, Any], config_file: Optional[Path] = None) -> RunConfig:
    """Merge a config document over command-line flags and validate the result."""
    merged = dict(flags)
    if config_file is not None:
        document = read_document(config_file)
        params = dict(merged.get("params", {}))
        params.update(document.pop("params", {}))
        merged.update(document)
        merged["params"] = params
        if "kappa" in params:
            merged["kappa_given"] = True
        log.debug("merged config file", path=str(config_file), keys=sorted(document))
    return RunConfig.model_validate(merged)
