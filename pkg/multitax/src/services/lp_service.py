"""LP assembly, validation, scaling and the solver front end.

``lp_solve`` scales the program, dispatches to a backend (HiGHS through
``scipy.optimize.linprog`` or the reference revised simplex), unscales the
result and reports residuals in the original coordinates.
"""
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from multitax.src.exceptions import ArgumentError, NumericError
from multitax.src.models.lp import SENSES, LinearProgram, LPOptions, LPSolution
from multitax.src.services import simplex

logger = logging.getLogger(__name__)

# primary feasibility at optimal status, relative to 1 + |rhs|
PRIMAL_TOL = 1e-7
# above this an "optimal" report is rejected outright
PRIMAL_FAIL_TOL = 1e-5

_HIGHS_STATUS = {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded"}


# ─────────────────────────────────────────────────────────────
# 🧱 ASSEMBLY
# ─────────────────────────────────────────────────────────────
class LPBuilder:
    """
    Incremental assembly of a :class:`LinearProgram`.

    Variables and rows keep insertion order, which fixes the column and row
    numbering of the result. Rows are added one by one or as a block of
    triplets so large constraint families stay vectorized.
    """

    def __init__(self, name: str = "MULTITAX"):
        self.name = name
        self._names: List[str] = []
        self._lower: List[np.ndarray] = []
        self._upper: List[np.ndarray] = []
        self._cost: List[np.ndarray] = []
        self._row_names: List[str] = []
        self._senses: List[np.ndarray] = []
        self._rhs: List[np.ndarray] = []
        self._rows: List[np.ndarray] = []
        self._cols: List[np.ndarray] = []
        self._vals: List[np.ndarray] = []
        self.n_vars = 0
        self.n_rows = 0

    def add_vars(self, names: Sequence[str], lower=0.0, upper=np.inf, cost=0.0) -> np.ndarray:
        k = len(names)
        self._names.extend(names)
        self._lower.append(np.broadcast_to(np.asarray(lower, dtype=float), (k,)).copy())
        self._upper.append(np.broadcast_to(np.asarray(upper, dtype=float), (k,)).copy())
        self._cost.append(np.broadcast_to(np.asarray(cost, dtype=float), (k,)).copy())
        idx = np.arange(self.n_vars, self.n_vars + k)
        self.n_vars += k
        return idx

    def add_var(self, name: str, lower: float = 0.0, upper: float = np.inf, cost: float = 0.0) -> int:
        return int(self.add_vars([name], lower, upper, cost)[0])

    def add_rows(
        self,
        names: Sequence[str],
        rows: np.ndarray,
        cols: np.ndarray,
        vals: np.ndarray,
        senses,
        rhs,
    ) -> np.ndarray:
        """
        Adds a block of rows given as triplets.

        Args:
            names (Sequence[str]): One name per new row.
            rows (np.ndarray): Row positions local to the block (0 … len(names) − 1).
            cols (np.ndarray): Column indices.
            vals (np.ndarray): Coefficients.
            senses: "G", "L" or "E", scalar or per row.
            rhs: Right-hand sides, scalar or per row.

        Returns:
            np.ndarray: Global indices of the new rows.
        """
        k = len(names)
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= k):
            raise ArgumentError("block row positions out of range")
        self._row_names.extend(names)
        self._senses.append(np.broadcast_to(np.asarray(senses, dtype="<U1"), (k,)).copy())
        self._rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (k,)).copy())
        self._rows.append(rows + self.n_rows)
        self._cols.append(np.asarray(cols, dtype=np.int64))
        self._vals.append(np.asarray(vals, dtype=float))
        idx = np.arange(self.n_rows, self.n_rows + k)
        self.n_rows += k
        return idx

    def add_row(self, name: str, cols: Iterable[int], vals: Iterable[float], sense: str, rhs: float) -> int:
        cols = np.fromiter(cols, dtype=np.int64)
        return int(self.add_rows([name], np.zeros(cols.size, dtype=np.int64), cols,
                                 np.fromiter(vals, dtype=float), sense, rhs)[0])

    def build(self) -> LinearProgram:
        def cat(parts, dtype):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

        matrix = sp.coo_matrix(
            (cat(self._vals, float), (cat(self._rows, np.int64), cat(self._cols, np.int64))),
            shape=(self.n_rows, self.n_vars),
        ).tocsr()
        matrix.sum_duplicates()
        lp = LinearProgram(
            objective=cat(self._cost, float),
            matrix=matrix,
            senses=cat(self._senses, "<U1"),
            rhs=cat(self._rhs, float),
            lower=cat(self._lower, float),
            upper=cat(self._upper, float),
            var_names=tuple(self._names),
            row_names=tuple(self._row_names),
            name=self.name,
        )
        validate_lp(lp)
        return lp


def validate_lp(lp: LinearProgram) -> None:
    """Raises :class:`ArgumentError` unless the program is well formed."""
    m, n = lp.matrix.shape
    if lp.objective.shape != (n,) or lp.lower.shape != (n,) or lp.upper.shape != (n,):
        raise ArgumentError(f"objective/bounds must have {n} entries")
    if lp.rhs.shape != (m,) or lp.senses.shape != (m,):
        raise ArgumentError(f"rhs/senses must have {m} entries")
    if len(lp.var_names) != n or len(lp.row_names) != m:
        raise ArgumentError("one name per variable and per row is required")
    if len(set(lp.var_names)) != n or len(set(lp.row_names)) != m:
        raise ArgumentError("variable and row names must be unique")
    bad = set(np.unique(lp.senses)) - set(SENSES)
    if bad:
        raise ArgumentError(f"unsupported row relation(s) {sorted(bad)}")
    if not (np.all(np.isfinite(lp.objective)) and np.all(np.isfinite(lp.matrix.data))
            and np.all(np.isfinite(lp.rhs))):
        raise ArgumentError("LP coefficients must be finite")
    if np.any(np.isnan(lp.lower)) or np.any(np.isnan(lp.upper)) or np.any(lp.lower > lp.upper):
        raise ArgumentError("variable bounds must satisfy lower <= upper")
    if np.any(lp.lower == np.inf) or np.any(lp.upper == -np.inf):
        raise ArgumentError("variable bounds cannot be +inf below or -inf above")
    used = (np.diff(lp.matrix.tocsc().indptr) > 0) | (lp.objective != 0)
    if not np.all(used):
        first = int(np.flatnonzero(~used)[0])
        raise ArgumentError(f"variable '{lp.var_names[first]}' appears in no row and not in the objective")


# ─────────────────────────────────────────────────────────────
# ⚖️ SCALING
# ─────────────────────────────────────────────────────────────
def equilibrate(matrix: sp.csr_matrix, passes: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """
    Geometric-mean row/column equilibration.

    Returns (R, S) so that ``diag(R) @ A @ diag(S)`` has nonzeros whose
    per-row and per-column max·min products are close to one. Scales are
    rounded to powers of two, so scaling itself introduces no rounding.
    """
    m, n = matrix.shape
    row_scale, col_scale = np.ones(m), np.ones(n)
    absolute = abs(matrix).tocsr()
    absolute.eliminate_zeros()
    if absolute.nnz == 0:
        return row_scale, col_scale

    def geometric(mat: sp.csr_matrix, size: int) -> np.ndarray:
        out = np.ones(size)
        has = np.diff(mat.indptr) > 0
        big = np.maximum.reduceat(mat.data, mat.indptr[:-1][has])
        small = np.minimum.reduceat(mat.data, mat.indptr[:-1][has])
        out[has] = 1.0 / np.sqrt(big * small)
        return out

    for _ in range(passes):
        scaled = sp.diags(row_scale) @ absolute @ sp.diags(col_scale)
        row_scale *= geometric(scaled.tocsr(), m)
        scaled = sp.diags(row_scale) @ absolute @ sp.diags(col_scale)
        col_scale *= geometric(scaled.tocsc().T.tocsr(), n)
    return np.exp2(np.round(np.log2(row_scale))), np.exp2(np.round(np.log2(col_scale)))


def scale_lp(lp: LinearProgram, row_scale: np.ndarray, col_scale: np.ndarray) -> LinearProgram:
    """Scaled program in x′ = x / S; objective values are unchanged."""
    return LinearProgram(
        objective=lp.objective * col_scale,
        matrix=(sp.diags(row_scale) @ lp.matrix @ sp.diags(col_scale)).tocsr(),
        senses=lp.senses,
        rhs=lp.rhs * row_scale,
        lower=lp.lower / col_scale,
        upper=lp.upper / col_scale,
        var_names=lp.var_names,
        row_names=lp.row_names,
        name=lp.name,
    )


# ─────────────────────────────────────────────────────────────
# 🚀 BACKENDS
# ─────────────────────────────────────────────────────────────
def _solve_highs(lp: LinearProgram, opts: LPOptions):
    ge, le, eq = (lp.senses == "G"), (lp.senses == "L"), (lp.senses == "E")
    inequality = ge | le
    sign = np.where(ge, -1.0, 1.0)
    a_ub = (sp.diags(sign[inequality]) @ lp.matrix[inequality]).tocsr() if inequality.any() else None
    b_ub = (sign * lp.rhs)[inequality] if inequality.any() else None
    a_eq = lp.matrix[eq] if eq.any() else None
    b_eq = lp.rhs[eq] if eq.any() else None
    res = linprog(
        lp.objective,
        A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
        bounds=np.column_stack([lp.lower, lp.upper]),
        method="highs-ds",
        options={
            "maxiter": opts.max_iterations,
            "primal_feasibility_tolerance": opts.tolerance,
            "dual_feasibility_tolerance": opts.tolerance,
            "presolve": True,
        },
    )
    if res.status not in _HIGHS_STATUS:
        raise NumericError(f"HiGHS reported a numerical failure: {res.message}")
    status = _HIGHS_STATUS[res.status]
    x = np.asarray(res.x, dtype=float) if res.x is not None else np.full(lp.n_vars, np.nan)
    y = np.zeros(lp.n_rows)
    if status == "optimal":
        if inequality.any():
            # marginals are d obj / d b_ub; ≥ rows were negated
            y[inequality] = sign[inequality] * res.ineqlin.marginals
        if eq.any():
            y[eq] = res.eqlin.marginals
    return status, x, y, int(res.nit), str(res.message)


def _residuals(lp: LinearProgram, x: np.ndarray, y: np.ndarray, d: np.ndarray):
    activity = lp.matrix @ x
    slack = activity - lp.rhs
    g, l, e = (lp.senses == "G"), (lp.senses == "L"), (lp.senses == "E")
    row_viol = np.zeros(lp.n_rows)
    row_viol[g] = np.maximum(-slack[g], 0.0)
    row_viol[l] = np.maximum(slack[l], 0.0)
    row_viol[e] = np.abs(slack[e])
    row_viol /= 1.0 + np.abs(lp.rhs)
    bound_viol = np.maximum(np.maximum(lp.lower - x, x - lp.upper), 0.0) / (1.0 + np.abs(x))
    primal = float(max(row_viol.max(initial=0.0), bound_viol.max(initial=0.0)))

    sign_viol = np.concatenate([
        np.maximum(-y[g], 0.0), np.maximum(y[l], 0.0),
        np.where(np.isinf(lp.lower), np.maximum(d, 0.0), 0.0),
        np.where(np.isinf(lp.upper), np.maximum(-d, 0.0), 0.0),
    ])
    dual = float(sign_viol.max(initial=0.0))

    at_bound = _active_bound(lp, x, d)
    comp = np.concatenate([np.abs(y * slack), np.abs(d * (x - at_bound))])
    return primal, dual, float(comp.max(initial=0.0))


def _active_bound(lp: LinearProgram, x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Bound paired with each reduced cost's sign; x itself when that bound is infinite."""
    bound = np.where(d > 0, lp.lower, np.where(d < 0, lp.upper, x))
    return np.where(np.isfinite(bound), bound, x)


def lp_solve(lp: LinearProgram, opts: Optional[LPOptions] = None) -> LPSolution:
    """
    Solves ``min cᵀx`` subject to the rows and bounds of ``lp``.

    Duals follow ``y_i = ∂objective/∂rhs_i`` (≥ rows y ≥ 0, ≤ rows y ≤ 0) and
    reduced costs are ``d = c − Aᵀy``. Both backends are deterministic for a
    fixed input and options.

    Args:
        lp (LinearProgram): The program.
        opts (LPOptions, optional): Backend and tolerances.

    Returns:
        LPSolution: Status, primal/dual values, dual objective and residuals.
    """
    opts = opts or LPOptions()
    validate_lp(lp)
    if opts.scale:
        row_scale, col_scale = equilibrate(lp.matrix, opts.scale_passes)
    else:
        row_scale, col_scale = np.ones(lp.n_rows), np.ones(lp.n_vars)
    scaled = scale_lp(lp, row_scale, col_scale)

    if opts.backend == "highs":
        status, xs, ys, iterations, message = _solve_highs(scaled, opts)
    else:
        status, xs, ys, iterations, message = simplex.solve(scaled, opts)

    x = col_scale * xs
    y = row_scale * ys
    if status != "optimal":
        logger.debug(f"⚠️ LP '{lp.name}' ended with status {status} after {iterations} iterations")
        nan = float("nan")
        return LPSolution(
            status=status, x=x, duals=y, reduced_costs=np.full(lp.n_vars, np.nan),
            objective=nan, dual_objective=nan, primal_residual=nan, dual_residual=nan,
            complementarity_residual=nan, iterations=iterations, backend=opts.backend, message=message,
        )

    x = np.clip(x, lp.lower, lp.upper)
    d = lp.objective - lp.matrix.T @ y
    primal, dual, comp = _residuals(lp, x, y, d)
    objective = float(lp.objective @ x)
    dual_objective = float(lp.rhs @ y + d @ _active_bound(lp, x, d))
    if primal > PRIMAL_FAIL_TOL:
        raise NumericError(f"LP '{lp.name}' reported optimal with primal residual {primal:.3e}", residual=primal)
    if primal > PRIMAL_TOL:
        logger.warning(f"⚠️ LP '{lp.name}' primal residual {primal:.3e} above {PRIMAL_TOL:.0e}")
    logger.debug(
        f"✅ LP '{lp.name}' optimal: obj={objective:.10g} ({iterations} it, {opts.backend}), "
        f"residuals p={primal:.1e} d={dual:.1e} c={comp:.1e}")
    return LPSolution(
        status=status, x=x, duals=y, reduced_costs=d, objective=objective,
        dual_objective=dual_objective, primal_residual=primal, dual_residual=dual,
        complementarity_residual=comp, iterations=iterations, backend=opts.backend, message=message,
    )
