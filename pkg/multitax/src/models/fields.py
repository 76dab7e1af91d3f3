"""Immutable numeric containers shared by the services.

All per-node arrays use the row-major lattice order ``node = i_c * n_m + i_m``.
"""
from dataclasses import dataclass, field, fields
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np


def _frozen_array(value, dtype=float) -> np.ndarray:
    arr = np.array(value, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


class _ArrayFields:
    """Copies every ndarray-typed field into a read-only array after init."""

    _array_dtypes: Dict[str, type] = {}

    def __post_init__(self):
        for f in fields(self):
            dtype = self._array_dtypes.get(f.name)
            if dtype is not None:
                object.__setattr__(self, f.name, _frozen_array(getattr(self, f.name), dtype))


@dataclass(frozen=True, eq=False)
class SkillGrid(_ArrayFields):
    alpha_c: np.ndarray
    alpha_m: np.ndarray
    p_c: np.ndarray
    p_m: np.ndarray
    density: np.ndarray
    spacing: str = "geometric"

    _array_dtypes = {"alpha_c": float, "alpha_m": float, "p_c": float, "p_m": float, "density": float}

    @property
    def n_c(self) -> int:
        return int(self.alpha_c.size)

    @property
    def n_m(self) -> int:
        return int(self.alpha_m.size)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_c, self.n_m

    @property
    def n_nodes(self) -> int:
        return self.n_c * self.n_m

    def node_index(self, i_c, i_m):
        return np.asarray(i_c) * self.n_m + np.asarray(i_m)

    @cached_property
    def node_ic(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_c), self.n_m)

    @cached_property
    def node_im(self) -> np.ndarray:
        return np.tile(np.arange(self.n_m), self.n_c)

    @cached_property
    def node_alpha_c(self) -> np.ndarray:
        return self.alpha_c[self.node_ic]

    @cached_property
    def node_alpha_m(self) -> np.ndarray:
        return self.alpha_m[self.node_im]

    @cached_property
    def node_p_c(self) -> np.ndarray:
        return self.p_c[self.node_ic]

    @cached_property
    def node_p_m(self) -> np.ndarray:
        return self.p_m[self.node_im]


@dataclass(frozen=True, eq=False)
class AllocationField(_ArrayFields):
    """Per-node allocation in utility coordinates (x_s = physical task ** ρ)."""

    c: np.ndarray
    x_c: np.ndarray
    x_m: np.ndarray
    z: np.ndarray

    _array_dtypes = {"c": float, "x_c": float, "x_m": float, "z": float}

    @property
    def n_nodes(self) -> int:
        return int(self.c.size)


@dataclass(frozen=True, eq=False)
class ConvexityViolation:
    node: int
    kind: str
    direction: Tuple[int, int]
    excess: float


@dataclass(frozen=True, eq=False)
class TangentFamily(_ArrayFields):
    """Tangent lines t ↦ slope·t − intercept, intercept = conjugate(slope)."""

    slopes: np.ndarray
    intercepts: np.ndarray
    points: np.ndarray
    interval: Tuple[float, float]
    achieved_eps: float
    requested_eps: float

    _array_dtypes = {"slopes": float, "intercepts": float, "points": float}

    def __len__(self) -> int:
        return int(self.slopes.size)

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.max(np.multiply.outer(t, self.slopes) - self.intercepts, axis=-1)


@dataclass(frozen=True, eq=False)
class IrreduciblePairSet(_ArrayFields):
    pairs: np.ndarray
    offsets: np.ndarray
    max_offset: Optional[int] = None

    _array_dtypes = {"pairs": np.int64, "offsets": np.int64}

    def __len__(self) -> int:
        return int(self.pairs.shape[0])

    def as_set(self) -> set:
        return {(int(a), int(b)) for a, b in self.pairs}


@dataclass(frozen=True)
class RefinementRecord:
    iteration: int
    eps_c: float
    eps_xc: float
    eps_xm: float
    proper: bool
    n_binding: int
    lp_objective: float
    true_objective: float
    n_rows: int


@dataclass(frozen=True, eq=False)
class RefinementState(_ArrayFields):
    eps_c: float
    eps_xc: float
    eps_xm: float
    c_lo: np.ndarray
    c_hi: np.ndarray
    xc_lo: np.ndarray
    xc_hi: np.ndarray
    xm_lo: np.ndarray
    xm_hi: np.ndarray
    iteration: int = 0
    proper: bool = False
    history: Tuple[RefinementRecord, ...] = field(default_factory=tuple)

    _array_dtypes = {name: float for name in ("c_lo", "c_hi", "xc_lo", "xc_hi", "xm_lo", "xm_hi")}

    @property
    def total_eps(self) -> float:
        return self.eps_c + self.eps_xc + self.eps_xm

    def error_bound(self, z: np.ndarray) -> float:
        return self.eps_c + float(np.max(z)) * (self.eps_xc + self.eps_xm)


@dataclass(frozen=True, eq=False)
class WedgeField(_ArrayFields):
    tau_c: np.ndarray
    tau_m: np.ndarray

    _array_dtypes = {"tau_c": float, "tau_m": float}


@dataclass(frozen=True, eq=False)
class BunchingReport(_ArrayFields):
    flags: np.ndarray
    class_id: np.ndarray
    classes: Tuple[Tuple[int, ...], ...]
    edges: np.ndarray
    rel_tol: float
    edge_law_violations: int
    labels: Tuple[str, ...] = ()
    shares: Dict[str, float] = field(default_factory=dict)

    _array_dtypes = {"flags": bool, "class_id": np.int64, "edges": np.int64}

    @property
    def n_bunched(self) -> int:
        return int(self.flags.sum())

    def node_labels(self) -> np.ndarray:
        out = np.full(self.flags.size, "", dtype=object)
        for cid, label in enumerate(self.labels):
            out[list(self.classes[cid])] = label
        return out
