from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ModelParams(BaseModel):
    rho: float = Field(2.8, gt=2.0, description="Curvature of effort disutility v(ℓ) = κℓ^ρ")
    kappa: float = Field(
        None, gt=0.0, description="Disutility scale; defaults to 1/(2ρ) when omitted")
    eta: float = Field(1.1, ge=1.0, description="Convexity of the wage bill h(X) = X^η + 2ζ")
    tau_linear: float = Field(
        0.3, ge=0.0, lt=1.0, description="Flat earnings tax of the positive economy")
    zeta: float = Field(0.0, ge=0.0, description="Wage intercept (minimum earnings)")
    promised_welfare: Optional[float] = Field(
        None, description="Promised utilitarian welfare; None derives it from the positive economy")
    outside_option: float = Field(0.0, description="Utility floor of every worker")
    consumption_utility: Literal["linear", "log"] = Field(
        "linear", description="Utility from consumption; sets the resource cost C")

    @model_validator(mode="before")
    @classmethod
    def _default_kappa(cls, data):
        if isinstance(data, dict) and data.get("kappa") is None:
            data = dict(data)
            data["kappa"] = 1.0 / (2.0 * float(data.get("rho", 2.8)))
        return data

    model_config = ConfigDict(frozen=True, extra="forbid")

    @property
    def kappa_rho(self) -> float:
        return self.kappa * self.rho

    def with_welfare(self, promised_welfare: float) -> "ModelParams":
        return self.model_copy(update={"promised_welfare": float(promised_welfare)})
