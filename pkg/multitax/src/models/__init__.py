from multitax.src.models.fields import (
    AllocationField,
    BunchingReport,
    ConvexityViolation,
    IrreduciblePairSet,
    RefinementRecord,
    RefinementState,
    SkillGrid,
    TangentFamily,
    WedgeField,
)
from multitax.src.models.lp import LinearProgram, LPOptions, LPSolution
from multitax.src.models.params import ModelParams
from multitax.src.models.records import IdentifiedWorker, WorkerRecord

__all__ = [
    "AllocationField",
    "BunchingReport",
    "ConvexityViolation",
    "IdentifiedWorker",
    "IrreduciblePairSet",
    "LinearProgram",
    "LPOptions",
    "LPSolution",
    "ModelParams",
    "RefinementRecord",
    "RefinementState",
    "SkillGrid",
    "TangentFamily",
    "WedgeField",
    "WorkerRecord",
]
