"""Linear program container and solver result.

Rows are ``matrix @ x (sense) rhs`` with sense in {"G", "L", "E"}; the
objective is always minimised. Duals follow the sensitivity convention
``y_i = d objective / d rhs_i``: ≥ rows carry y ≥ 0, ≤ rows y ≤ 0.
"""
from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

SENSES = ("G", "L", "E")


@dataclass(frozen=True, eq=False)
class LinearProgram:
    objective: np.ndarray
    matrix: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    var_names: Tuple[str, ...]
    row_names: Tuple[str, ...]
    name: str = "MULTITAX"

    @property
    def n_vars(self) -> int:
        return int(self.objective.size)

    @property
    def n_rows(self) -> int:
        return int(self.rhs.size)


class LPOptions(BaseModel):
    backend: Literal["highs", "simplex"] = Field("highs", description="Solver backend")
    scale: bool = Field(True, description="Geometric-mean row/column equilibration")
    scale_passes: int = Field(4, ge=1)
    max_iterations: int = Field(200_000, gt=0, description="Pivot cap per simplex phase")
    refactor_every: int = Field(100, gt=0, description="Pivots between LU refactorizations")
    bland_after: int = Field(50, gt=0, description="Degenerate pivots before Bland's rule")
    tolerance: float = Field(1e-9, gt=0.0)
    max_dense_entries: int = Field(40_000_000, gt=0, description="Tableau cap for the dense simplex")

    model_config = ConfigDict(extra="forbid", frozen=True)


@dataclass(frozen=True, eq=False)
class LPSolution:
    status: Literal["optimal", "infeasible", "unbounded", "iteration-limit"]
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    complementarity_residual: float
    iterations: int
    backend: str
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def dual_of(self, lp: LinearProgram, row_name: str) -> Optional[float]:
        try:
            return float(self.duals[lp.row_names.index(row_name)])
        except ValueError:
            return None
