"""Dense two-phase revised simplex used as the reference LP backend.

The basis inverse is held as an LU factorization of the basis matrix plus a
product-form eta file, refactorized every ``refactor_every`` pivots. Pricing
is Dantzig's rule with lowest-index ties; after ``bland_after`` consecutive
degenerate pivots the phase switches to Bland's rule. Ratio-test ties leave
the basic variable with the smallest column index.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from multitax.src.exceptions import NumericError, ResourceError
from multitax.src.models.lp import LinearProgram, LPOptions

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
SINGULAR_TOL = 1e-12


@dataclass
class StandardForm:
    """``A x = b, x ≥ 0`` with b ≥ 0 and a map back to the original variables."""

    matrix: np.ndarray
    rhs: np.ndarray
    cost: np.ndarray
    n_struct: int
    n_orig_rows: int
    row_sign: np.ndarray
    # x_orig = offset + Σ sign · x_std[col] over the columns owned by each variable
    offset: np.ndarray
    owner: np.ndarray
    owner_sign: np.ndarray
    basis: np.ndarray
    artificial: np.ndarray


def to_standard_form(lp: LinearProgram, max_entries: int) -> StandardForm:
    n = lp.n_vars
    lower, upper = lp.lower, lp.upper
    offset = np.zeros(n)
    owner: List[int] = []
    owner_sign: List[float] = []
    bound_rows: List[Tuple[int, float]] = []
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            owner.append(j)
            owner_sign.append(1.0)
            if np.isfinite(hi):
                bound_rows.append((len(owner) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            owner.append(j)
            owner_sign.append(-1.0)
        else:
            owner.extend([j, j])
            owner_sign.extend([1.0, -1.0])
    owner_arr = np.asarray(owner, dtype=np.int64)
    sign_arr = np.asarray(owner_sign)
    n_struct = owner_arr.size

    m_orig = lp.n_rows
    m = m_orig + len(bound_rows)
    n_slack = int(np.sum(lp.senses != "E")) + len(bound_rows)
    if m * (n_struct + n_slack + m) > max_entries:
        raise ResourceError(
            f"dense simplex tableau of {m} x {n_struct + n_slack + m} exceeds {max_entries} entries")

    dense = lp.matrix.toarray()
    struct = np.zeros((m, n_struct))
    struct[:m_orig] = dense[:, owner_arr] * sign_arr
    rhs = np.concatenate([lp.rhs - dense @ offset, np.array([u for _, u in bound_rows])])
    senses = np.concatenate([lp.senses, np.full(len(bound_rows), "L")])
    for k, (col, _) in enumerate(bound_rows):
        struct[m_orig + k, col] = 1.0

    slack_cols = []
    for i in range(m):
        if senses[i] != "E":
            col = np.zeros(m)
            col[i] = 1.0 if senses[i] == "L" else -1.0
            slack_cols.append(col)
    slacks = np.column_stack(slack_cols) if slack_cols else np.zeros((m, 0))
    matrix = np.hstack([struct, slacks])

    row_sign = np.where(rhs < 0, -1.0, 1.0)
    matrix *= row_sign[:, None]
    rhs = rhs * row_sign

    # a slack with +1 after sign normalization starts basic; other rows get an artificial
    basis = np.full(m, -1, dtype=np.int64)
    for k in range(slacks.shape[1]):
        col = n_struct + k
        i = int(np.flatnonzero(matrix[:, col])[0])
        if matrix[i, col] > 0:
            basis[i] = col
    need = np.flatnonzero(basis < 0)
    n_before = matrix.shape[1]
    art = np.zeros((m, need.size))
    art[need, np.arange(need.size)] = 1.0
    matrix = np.hstack([matrix, art])
    basis[need] = n_before + np.arange(need.size)
    artificial = np.zeros(matrix.shape[1], dtype=bool)
    artificial[n_before:] = True

    cost = np.zeros(matrix.shape[1])
    cost[:n_struct] = lp.objective[owner_arr] * sign_arr
    return StandardForm(
        matrix=matrix, rhs=rhs, cost=cost, n_struct=n_struct, n_orig_rows=m_orig,
        row_sign=row_sign, offset=offset, owner=owner_arr, owner_sign=sign_arr,
        basis=basis, artificial=artificial,
    )


class BasisFactor:
    """LU of the basis matrix with a product-form eta file on top."""

    def __init__(self, matrix: np.ndarray, refactor_every: int):
        self.matrix = matrix
        self.refactor_every = refactor_every
        self.etas: List[Tuple[int, np.ndarray]] = []
        self.lu = None

    def refactor(self, basis: np.ndarray) -> None:
        if basis.size == 0:
            self.lu = None
            self.etas = []
            return
        lu, piv = lu_factor(self.matrix[:, basis], check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.min() <= SINGULAR_TOL * max(diag.max(), 1.0):
            raise NumericError("simplex basis became singular", residual=float(diag.min()))
        self.lu = (lu, piv)
        self.etas = []

    @property
    def stale(self) -> bool:
        return len(self.etas) >= self.refactor_every

    def ftran(self, a: np.ndarray) -> np.ndarray:
        if self.lu is None:
            return a.copy()
        w = lu_solve(self.lu, a, check_finite=False)
        for r, e in self.etas:
            pivot = w[r] / e[r]
            w -= pivot * e
            w[r] = pivot
        return w

    def btran(self, c: np.ndarray) -> np.ndarray:
        if self.lu is None:
            return c.copy()
        y = c.copy()
        for r, e in reversed(self.etas):
            y[r] = (y[r] - (e @ y - e[r] * y[r])) / e[r]
        return lu_solve(self.lu, y, trans=1, check_finite=False)

    def update(self, r: int, e: np.ndarray) -> None:
        self.etas.append((r, e.copy()))


def _phase(
    sf: StandardForm,
    factor: BasisFactor,
    x_b: np.ndarray,
    cost: np.ndarray,
    allowed: np.ndarray,
    opts: LPOptions,
    iterations: int,
) -> Tuple[str, np.ndarray, int]:
    """Runs pivots until optimal, unbounded or the iteration cap."""
    A = sf.matrix
    basis = sf.basis
    bland = False
    degenerate_run = 0
    tol = opts.tolerance
    phase_iterations = 0
    while True:
        y = factor.btran(cost[basis])
        d = cost - A.T @ y
        in_basis = np.zeros(A.shape[1], dtype=bool)
        in_basis[basis] = True
        candidates = np.flatnonzero(allowed & ~in_basis & (d < -tol))
        if candidates.size == 0:
            return "optimal", x_b, iterations
        if phase_iterations >= opts.max_iterations:
            return "iteration-limit", x_b, iterations
        if bland:
            q = int(candidates[0])
        else:
            q = int(candidates[np.argmin(d[candidates])])

        w = factor.ftran(A[:, q])
        rows = np.flatnonzero(w > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded", x_b, iterations
        ratios = x_b[rows] / w[rows]
        best = ratios.min()
        tied = rows[ratios <= best + tol * max(1.0, abs(best))]
        r = int(tied[np.argmin(basis[tied])])
        theta = max(x_b[r] / w[r], 0.0)

        if theta <= tol:
            degenerate_run += 1
            if not bland and degenerate_run >= opts.bland_after:
                logger.debug(f"🔁 switching to Bland's rule after {degenerate_run} degenerate pivots")
                bland = True
        else:
            degenerate_run = 0

        x_b = x_b - theta * w
        x_b[r] = theta
        basis[r] = q
        factor.update(r, w)
        iterations += 1
        phase_iterations += 1
        if factor.stale:
            factor.refactor(basis)
            x_b = factor.ftran(sf.rhs)
        x_b = np.where(np.abs(x_b) < 1e-13, 0.0, x_b)


def _drive_out_artificials(sf: StandardForm, factor: BasisFactor, x_b: np.ndarray) -> np.ndarray:
    """Pivots zero-level artificials out of the basis where a structural column allows it."""
    basis = sf.basis
    for r in np.flatnonzero(sf.artificial[basis]):
        row = factor.btran(np.eye(basis.size)[r])
        in_basis = np.zeros(sf.matrix.shape[1], dtype=bool)
        in_basis[basis] = True
        alpha = row @ sf.matrix
        options = np.flatnonzero(~sf.artificial & ~in_basis & (np.abs(alpha) > 1e-9))
        if options.size == 0:
            # redundant row; its artificial stays basic at zero
            continue
        q = int(options[0])
        w = factor.ftran(sf.matrix[:, q])
        basis[r] = q
        factor.update(int(r), w)
        if factor.stale:
            factor.refactor(basis)
        x_b = factor.ftran(sf.rhs)
    return x_b


def solve(lp: LinearProgram, opts: LPOptions) -> Tuple[str, np.ndarray, np.ndarray, int, str]:
    """
    Two-phase revised simplex on ``lp``.

    Returns:
        Tuple: (status, x, duals, iterations, message) in the coordinates of ``lp``.
    """
    sf = to_standard_form(lp, opts.max_dense_entries)
    factor = BasisFactor(sf.matrix, opts.refactor_every)
    factor.refactor(sf.basis)
    x_b = factor.ftran(sf.rhs)
    iterations = 0
    n_total = sf.matrix.shape[1]

    if sf.artificial.any():
        phase_cost = sf.artificial.astype(float)
        status, x_b, iterations = _phase(sf, factor, x_b, phase_cost, np.ones(n_total, dtype=bool), opts, iterations)
        if status == "iteration-limit":
            return status, np.full(lp.n_vars, np.nan), np.zeros(lp.n_rows), iterations, "phase 1 iteration cap"
        infeasibility = float(phase_cost[sf.basis] @ x_b)
        if infeasibility > opts.tolerance * max(1.0, float(np.abs(sf.rhs).max(initial=0.0))) * 1e2:
            return "infeasible", np.full(lp.n_vars, np.nan), np.zeros(lp.n_rows), iterations, \
                f"phase 1 ended with infeasibility {infeasibility:.3e}"
        x_b = _drive_out_artificials(sf, factor, x_b)

    status, x_b, iterations = _phase(sf, factor, x_b, sf.cost, ~sf.artificial, opts, iterations)

    x_std = np.zeros(n_total)
    x_std[sf.basis] = np.maximum(x_b, 0.0)
    x = sf.offset.copy()
    np.add.at(x, sf.owner, sf.owner_sign * x_std[:sf.n_struct])

    y = np.zeros(lp.n_rows)
    if status == "optimal":
        y_std = factor.btran(sf.cost[sf.basis])
        y = (sf.row_sign * y_std)[:sf.n_orig_rows]
    logger.debug(f"simplex finished: {status} after {iterations} pivots")
    return status, x, y, iterations, status
