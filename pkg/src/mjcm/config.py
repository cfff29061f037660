"""Run configuration schema and loading."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    ValidationError,
    model_validator,
)

from .model import DriveSpec, ModelParams
from .operators import HilbertDims


class ConfigError(ValueError):
    """Configuration could not be parsed or validated."""


def _to_complex(v):
    if isinstance(v, complex):
        return v
    if isinstance(v, bool):
        raise ValueError("expected a number or [re, im]")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return complex(v[0], v[1])
    if isinstance(v, dict) and set(v) == {"re", "im"}:
        return complex(v["re"], v["im"])
    raise ValueError("expected a number, [re, im] or {re, im}")


Complex = Annotated[
    complex,
    BeforeValidator(_to_complex),
    PlainSerializer(lambda z: [z.real, z.imag], return_type=list),
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    e1: float
    e2: float
    omega: float
    gamma: Complex
    m: int = Field(ge=1)
    n_max: int = Field(ge=1)
    allow_zero_coupling: bool = False


class DriveSection(_Strict):
    kind: Literal["constant", "sinusoid", "gaussian-pulse", "step"] = "constant"
    amplitude: float = 1.0
    frequency: float = 0.0
    center: float = 0.0
    width: float = Field(1.0, gt=0)
    onset: float = 0.0


class ProductInit(_Strict):
    level: Literal[1, 2]
    fock: int = Field(ge=0)


class CoherentInit(_Strict):
    level: Literal[1, 2]
    alpha: Complex


class MepInit(_Strict):
    lambdas: dict[str, float]


class InitialState(_Strict):
    product: Optional[ProductInit] = None
    coherent: Optional[CoherentInit] = None
    mep: Optional[MepInit] = None

    @model_validator(mode="after")
    def _one_of(self):
        given = [k for k in ("product", "coherent", "mep") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one of product, coherent, mep is required, got {given or 'none'}")
        return self


class SetSection(_Strict):
    variant: Literal["set1", "set2", "set3"] = "set1"
    depth: Optional[int] = Field(None, ge=0)


class IntegratorSection(_Strict):
    t_end: float = Field(gt=0)
    step: Optional[float] = Field(None, gt=0)
    n_samples: int = Field(200, ge=1)
    convergence_check: bool = False


class OutputsSection(_Strict):
    csv_path: Optional[str] = None
    json_path: Optional[str] = None
    figure_path: Optional[str] = None
    tracked: list[str] = Field(default_factory=list)


class ClosureSection(_Strict):
    n_safe: Optional[int] = Field(None, ge=0)
    tolerance: float = Field(1e-9, gt=0)
    method: Literal["lstsq", "exact"] = "lstsq"
    corrupt_member: Optional[str] = None


class CompareSection(_Strict):
    max_row_depth: Optional[int] = Field(None, ge=0)
    literal_tail: bool = False
    tolerance: float = Field(1e-8, gt=0)


class FitSection(_Strict):
    targets: dict[str, float] = Field(default_factory=dict)
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(200, ge=1)


class RunConfig(_Strict):
    """Full run description; unknown keys are rejected everywhere."""

    model: ModelSection
    drive: DriveSection = Field(default_factory=DriveSection)
    initial_state: Optional[InitialState] = None
    set: SetSection = Field(default_factory=SetSection)
    integrator: Optional[IntegratorSection] = None
    coefficient_mode: Literal["derived", "printed"] = "derived"
    evolution: Literal["exact", "bloch", "both"] = "both"
    outputs: OutputsSection = Field(default_factory=OutputsSection)
    closure: ClosureSection = Field(default_factory=ClosureSection)
    compare: CompareSection = Field(default_factory=CompareSection)
    fit: FitSection = Field(default_factory=FitSection)

    @model_validator(mode="after")
    def _cross_checks(self):
        mdl = self.model
        if mdl.n_max < mdl.m:
            raise ValueError(f"model.n_max={mdl.n_max} must be >= model.m={mdl.m}")
        if mdl.gamma == 0 and not mdl.allow_zero_coupling:
            raise ValueError("model.gamma = 0 requires model.allow_zero_coupling = true")
        if self.set.depth is not None and self.set.depth > mdl.n_max:
            raise ValueError(f"set.depth={self.set.depth} exceeds model.n_max={mdl.n_max}")
        init = self.initial_state
        if init is not None and init.coherent is not None and abs(init.coherent.alpha) ** 2 > mdl.n_max / 4:
            raise ValueError(
                f"initial_state.coherent.alpha: |alpha|^2 = {abs(init.coherent.alpha) ** 2:g} "
                f"exceeds n_max/4 = {mdl.n_max / 4:g}"
            )
        if init is not None and init.product is not None and init.product.fock > mdl.n_max:
            raise ValueError(f"initial_state.product.fock={init.product.fock} exceeds n_max={mdl.n_max}")
        return self

    def params(self) -> ModelParams:
        d = self.drive
        drive = DriveSpec(d.kind, d.amplitude, d.frequency, d.center, d.width, d.onset)
        mdl = self.model
        return ModelParams(
            mdl.e1, mdl.e2, mdl.omega, mdl.gamma, mdl.m, HilbertDims(mdl.n_max), drive, mdl.allow_zero_coupling
        )

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse JSON text into a validated :class:`RunConfig`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_validation(exc)}") from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))
