from pydantic import BaseModel, Field


class WorkerRecord(BaseModel):
    wage: float = Field(..., gt=0.0, description="Pre-tax earnings (consumption units)")
    rel_intensity: float = Field(..., gt=0.0, description="Relative task intensity x_m/x_c")
    weight: float = Field(1.0, ge=0.0, description="Sampling weight")


class IdentifiedWorker(BaseModel):
    x_c: float = Field(..., description="Cognitive task input (task units)")
    x_m: float = Field(..., description="Manual task input (task units)")
    alpha_c: float = Field(..., gt=0.0, description="Cognitive skill")
    alpha_m: float = Field(..., gt=0.0, description="Manual skill")
    ell_c: float = Field(..., description="Cognitive effort x_c/α_c")
    ell_m: float = Field(..., description="Manual effort x_m/α_m")
    z: float = Field(..., description="Firm project value paired in equilibrium")
    wage: float = Field(..., description="Wage the worker was identified from")
    weight: float = Field(1.0, ge=0.0)

    @property
    def effective_skill(self) -> float:
        return self.x_c ** 2 + self.x_m ** 2

    def alpha_rho(self, rho: float) -> tuple:
        """Returns (α_c^ρ, α_m^ρ), the skill levels reported in identification tables."""
        return self.alpha_c ** rho, self.alpha_m ** rho
