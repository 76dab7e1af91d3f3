from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from multitax.src.models.lp import LPOptions
from multitax.src.models.params import ModelParams


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Section):
    n_c: int = Field(12, ge=1, description="Nodes along cognitive skill")
    n_m: int = Field(12, ge=1, description="Nodes along manual skill")
    alpha_c: Tuple[float, float] = Field((1.0, 2.0), description="Cognitive skill range")
    alpha_m: Tuple[float, float] = Field((1.0, 2.0), description="Manual skill range")
    spacing: Literal["geometric", "uniform-alpha", "uniform-p"] = "uniform-p"

    @model_validator(mode="after")
    def _check_ranges(self):
        for lo, hi in (self.alpha_c, self.alpha_m):
            if not 0.0 < lo <= hi:
                raise ValueError(f"skill range must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        return self


class DensitySpec(_Section):
    source: Literal["synthetic", "file"] = "synthetic"
    kind: Literal["uniform", "lognormal", "bimodal"] = "lognormal"
    spread: float = Field(0.25, gt=0.0, description="Log-skill dispersion of synthetic densities")
    correlation: float = Field(0.0, gt=-1.0, lt=1.0)
    path: Optional[str] = Field(None, description="Density CSV written by `identify`")


class SolverSpec(_Section):
    ic: bool = Field(True, description="Include incentive and outside-option rows")
    target_eps: float = Field(1e-6, gt=0.0, description="Stop once ε_c + ε_xc + ε_xm is below")
    initial_eps: float = Field(1e-2, gt=0.0)
    shrink: float = Field(0.5, gt=0.0, lt=1.0)
    max_iterations: int = Field(80, ge=1)
    box_scale: float = Field(3.0, gt=1.0, description="Initial boxes are [0, box_scale × benchmark]")
    recenter_fraction: float = Field(0.25, gt=0.0, lt=0.5)
    max_tangents: int = Field(10_000, ge=2)
    max_offset: Optional[int] = Field(None, ge=1, description="Cap on IC offsets; None for certified runs")
    lp: LPOptions = Field(default_factory=LPOptions)


class FirmSpec(_Section):
    kind: Literal["degenerate", "powerlaw-from-eta", "explicit"] = "powerlaw-from-eta"
    value: float = Field(1.0, gt=0.0, description="Project value of the degenerate distribution")
    values: List[float] = Field(default_factory=list)
    masses: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_explicit(self):
        if self.kind == "explicit":
            if not self.values or len(self.values) != len(self.masses):
                raise ValueError("explicit firm distribution needs equal-length values and masses")
            if min(self.values) <= 0 or min(self.masses) < 0 or sum(self.masses) <= 0:
                raise ValueError("firm values must be positive and masses non-negative")
        return self


class AssignmentSpec(_Section):
    firms: FirmSpec = Field(default_factory=FirmSpec)
    max_outer: int = Field(50, ge=1)
    tolerance: float = Field(1e-8, gt=0.0)
    initial: Literal["sorted", "random"] = "sorted"


class WelfareSpec(_Section):
    kind: Literal["from-positive-equilibrium", "explicit"] = "from-positive-equilibrium"
    value: Optional[float] = None

    @model_validator(mode="after")
    def _check_value(self):
        if self.kind == "explicit" and self.value is None:
            raise ValueError("explicit welfare needs a value")
        return self


class ThresholdSpec(_Section):
    policy: Literal["benchmark", "absolute", "relative"] = "benchmark"
    value: float = Field(0.05, ge=0.0, description="Absolute threshold or fraction of max |residual|")
    quantile: float = Field(95.0, gt=0.0, le=100.0, description="Percentile of benchmark-mode residuals")
    factor: float = Field(5.0, gt=0.0, description="Multiplier on the benchmark percentile")
    floor: float = Field(1e-8, ge=0.0)


class AnalysisSpec(_Section):
    rel_tol: float = Field(1e-4, gt=0.0, description="Allocation/type distance ratio for bunching")
    exact_pair_limit: int = Field(2500, ge=1)
    el_threshold: ThresholdSpec = Field(default_factory=ThresholdSpec)
    strip_fraction: float = Field(0.1, gt=0.0, lt=0.5)


class IdentificationSpec(_Section):
    winsorize: Tuple[float, float] = Field((5.0, 95.0), description="Percentile band")
    zeta: float = Field(0.0, ge=0.0, description="Wage intercept used for inversion")
    bandwidth: Optional[Tuple[float, float]] = None
    delimiter: str = ","


class IOSpec(_Section):
    records: Optional[str] = None
    bundle: Optional[str] = None
    dump_lp: bool = False
    lp_format: Literal["mps", "lp-text"] = "mps"
    checkpoints: bool = True


class RunConfig(_Section):
    name: str = "run"
    params: ModelParams = Field(default_factory=ModelParams)
    grid: GridSpec = Field(default_factory=GridSpec)
    density: DensitySpec = Field(default_factory=DensitySpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    assignment: AssignmentSpec = Field(default_factory=AssignmentSpec)
    welfare: WelfareSpec = Field(default_factory=WelfareSpec)
    analysis: AnalysisSpec = Field(default_factory=AnalysisSpec)
    identification: IdentificationSpec = Field(default_factory=IdentificationSpec)
    io: IOSpec = Field(default_factory=IOSpec)
    seed: int = 0
