"""Positive economy: wages, the worker problem, skill identification and sorting."""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import opik
from scipy.optimize import brentq, minimize_scalar

from multitax.src.exceptions import ArgumentError, DomainError, NumericError
from multitax.src.models.fields import SkillGrid
from multitax.src.models.params import ModelParams
from multitax.src.models.records import IdentifiedWorker, WorkerRecord

logger = logging.getLogger(__name__)

# bracket for the scalar root-find in effective skill X
X_BRACKET = (1e-12, 1e6)


def wage(x_c, x_m, params: ModelParams):
    """
    Equilibrium wage schedule w = ½(x_c² + x_m²)^η + ζ.

    Args:
        x_c (float | np.ndarray): Cognitive task input (task units).
        x_m (float | np.ndarray): Manual task input (task units).
        params (ModelParams): Uses η and ζ.

    Returns:
        float | np.ndarray: Wage in consumption units.
    """
    x_c, x_m = np.asarray(x_c, dtype=float), np.asarray(x_m, dtype=float)
    if np.any(x_c < 0) or np.any(x_m < 0):
        raise DomainError("task inputs must be non-negative")
    w = 0.5 * (x_c ** 2 + x_m ** 2) ** params.eta + params.zeta
    return float(w) if w.ndim == 0 else w


def _foc_scale(alpha, params: ModelParams):
    # x_s^(ρ−2) = A_s · X^(η−1)
    return (1.0 - params.tau_linear) * params.eta * np.asarray(alpha, dtype=float) ** params.rho / params.kappa_rho


def worker_solve(alpha_c: float, alpha_m: float, params: ModelParams) -> Tuple[float, float, float, float]:
    """
    Solves the worker's two first-order conditions.

    The FOCs give x_s^(ρ−2) = A_s·X^(η−1) with X = x_c² + x_m², so X solves the
    scalar equation Σ_s (A_s X^(η−1))^(2/(ρ−2)) = X, found by Brent's method
    in log X on the bracket [1e−12, 1e6].

    Returns:
        Tuple[float, float, float, float]: (x_c, x_m, ell_c, ell_m).
    """
    if alpha_c <= 0 or alpha_m <= 0:
        raise DomainError(f"skills must be positive, got ({alpha_c}, {alpha_m})")
    rho, eta = params.rho, params.eta
    growth = 2.0 * (eta - 1.0) / (rho - 2.0)
    if growth >= 1.0:
        raise NumericError(
            f"worker problem has no interior optimum for eta={eta}, rho={rho} (2(η−1)/(ρ−2) ≥ 1)")
    log_a = np.log(_foc_scale([alpha_c, alpha_m], params))
    k = 2.0 / (rho - 2.0)

    def excess(log_x: float) -> float:
        terms = k * (log_a + (eta - 1.0) * log_x)
        top = terms.max()
        return top + np.log(np.exp(terms - top).sum()) - log_x

    lo, hi = np.log(X_BRACKET[0]), np.log(X_BRACKET[1])
    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo * f_hi > 0:
        raise NumericError(
            f"effective skill root not bracketed for alpha=({alpha_c}, {alpha_m})",
            residual=float(min(abs(f_lo), abs(f_hi))))
    log_x = brentq(excess, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    residual = excess(log_x)
    if abs(residual) > 1e-10:
        raise NumericError(f"worker FOC root-find stalled (residual {residual:.3e})", residual=residual)
    x_eff = np.exp(log_x)
    x = np.exp((log_a + (eta - 1.0) * np.log(x_eff)) / (rho - 2.0))
    return float(x[0]), float(x[1]), float(x[0] / alpha_c), float(x[1] / alpha_m)


def identify_skills(record: WorkerRecord, params: ModelParams) -> IdentifiedWorker:
    """
    Recovers tasks and skills that rationalize a worker's wage and task mix.

    The wage pins X = (2(w − ζ))^(1/η); the relative intensity splits X into
    x_c, x_m, and each task's FOC then delivers α_s^ρ.
    """
    headroom = record.wage - params.zeta
    if headroom <= 0:
        raise DomainError(f"wage {record.wage} is at or below minimum earnings {params.zeta}")
    x_c, x_m, alpha_c, alpha_m = _identify_arrays(
        np.array([record.wage]), np.array([record.rel_intensity]), params)
    x_eff = x_c[0] ** 2 + x_m[0] ** 2
    return IdentifiedWorker(
        x_c=float(x_c[0]),
        x_m=float(x_m[0]),
        alpha_c=float(alpha_c[0]),
        alpha_m=float(alpha_m[0]),
        ell_c=float(x_c[0] / alpha_c[0]),
        ell_m=float(x_m[0] / alpha_m[0]),
        z=float(infer_firm(x_eff, params)),
        wage=record.wage,
        weight=record.weight,
    )


def _identify_arrays(wages: np.ndarray, ratios: np.ndarray, params: ModelParams):
    rho, eta = params.rho, params.eta
    twice = 2.0 * (wages - params.zeta)
    x_c = twice ** (1.0 / (2.0 * eta)) / np.sqrt(1.0 + ratios ** 2)
    x_m = ratios * x_c
    marginal = (1.0 - params.tau_linear) * eta * twice ** ((eta - 1.0) / eta)
    alpha_c = (params.kappa_rho * x_c ** (rho - 2.0) / marginal) ** (1.0 / rho)
    alpha_m = (params.kappa_rho * x_m ** (rho - 2.0) / marginal) ** (1.0 / rho)
    return x_c, x_m, alpha_c, alpha_m


@opik.track
def identify_batch(wages, ratios, params: ModelParams):
    """
    Vectorized identification over a record table.

    Element-wise, so results do not depend on how records are partitioned.

    Returns:
        dict: arrays ``x_c, x_m, alpha_c, alpha_m, ell_c, ell_m, z``.
    """
    wages, ratios = np.asarray(wages, dtype=float), np.asarray(ratios, dtype=float)
    if wages.shape != ratios.shape:
        raise ArgumentError("wages and ratios must have the same shape")
    if np.any(wages <= params.zeta):
        raise DomainError("every wage must exceed minimum earnings")
    if np.any(ratios <= 0):
        raise DomainError("relative task intensities must be positive")
    x_c, x_m, alpha_c, alpha_m = _identify_arrays(wages, ratios, params)
    return {
        "x_c": x_c,
        "x_m": x_m,
        "alpha_c": alpha_c,
        "alpha_m": alpha_m,
        "ell_c": x_c / alpha_c,
        "ell_m": x_m / alpha_m,
        "z": infer_firm(x_c ** 2 + x_m ** 2, params),
    }


def worker_foc_residual(worker: IdentifiedWorker, params: ModelParams) -> Tuple[float, float]:
    """Relative residual of each task FOC: κρ x_s^(ρ−2)/α_s^ρ ÷ (1−τ)ηX^(η−1) − 1."""
    rho = params.rho
    x_eff = worker.x_c ** 2 + worker.x_m ** 2
    marginal = (1.0 - params.tau_linear) * params.eta * x_eff ** (params.eta - 1.0)
    r_c = params.kappa_rho * worker.x_c ** (rho - 2.0) / worker.alpha_c ** rho / marginal - 1.0
    r_m = params.kappa_rho * worker.x_m ** (rho - 2.0) / worker.alpha_m ** rho / marginal - 1.0
    return float(r_c), float(r_m)


def infer_firm(X, params: ModelParams):
    """Project value paired with effective skill X: z = h′(X) = η·X^(η−1)."""
    X = np.asarray(X, dtype=float)
    if np.any(~(X > 0)):
        raise DomainError("effective skill must be positive")
    z = params.eta * X ** (params.eta - 1.0)
    return float(z) if z.ndim == 0 else z


def frisch_elasticity(params) -> float:
    """1/(ρ − 1); accepts ModelParams or a bare ρ."""
    rho = params.rho if isinstance(params, ModelParams) else float(params)
    if rho <= 1.0:
        raise DomainError(f"Frisch elasticity needs rho > 1, got {rho}")
    return 1.0 / (rho - 1.0)


def firm_value_conjugate(z: float, params: ModelParams, n_grid: int = 4001) -> float:
    """
    Firm value Ω(z) = sup_X (zX − h(X)) with h(X) = X^η + 2ζ.

    Evaluated on a log grid of X and polished by bounded scalar minimisation
    around the best grid point. Returns +inf when η = 1 and z > 1.
    """
    eta, zeta = params.eta, params.zeta
    if z <= 0:
        raise DomainError("project values are positive")
    if eta == 1.0:
        return np.inf if z > 1.0 else -2.0 * zeta
    xs = np.logspace(-8, 8, n_grid)
    vals = z * xs - xs ** eta
    k = int(np.argmax(vals))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, n_grid - 1)]
    res = minimize_scalar(lambda x: -(z * x - x ** eta), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * hi})
    best = max(-res.fun, vals[k])
    return float(best - 2.0 * zeta)


# ─────────────────────────────────────────────────────────────
# 🔗 SORTING
# ─────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class SortedPairing:
    pairs: List[Tuple[float, float]]
    output: float
    firm_for_worker: np.ndarray


def equilibrium_assignment(workers: Sequence[float], firms: Sequence[float]) -> SortedPairing:
    """
    Positive sorting: rank-to-rank pairing of effective skills with project values.

    Output Σ z_(k)·X_(k) is maximal over all permutations (rearrangement inequality).
    """
    workers = np.asarray(workers, dtype=float)
    firms = np.asarray(firms, dtype=float)
    if workers.shape != firms.shape or workers.ndim != 1:
        raise ArgumentError(f"need equal-length lists, got {workers.shape} and {firms.shape}")
    w_order = np.argsort(workers, kind="stable")
    f_sorted = np.sort(firms, kind="stable")
    firm_for_worker = np.empty_like(firms)
    firm_for_worker[w_order] = f_sorted
    pairs = [(float(workers[i]), float(z)) for i, z in zip(w_order, f_sorted)]
    output = float(np.dot(workers[w_order], f_sorted))
    return SortedPairing(pairs=pairs, output=output, firm_for_worker=firm_for_worker)


def comonotone_coupling(
    index: np.ndarray,
    masses: np.ndarray,
    firm_values: np.ndarray,
    firm_masses: np.ndarray,
    tie_tol: float = 1e-6,
) -> np.ndarray:
    """
    Quantile-matches a discrete firm distribution to weighted worker nodes.

    Nodes are ranked by ``index``; each node (or tie group of nodes whose
    indices agree within ``tie_tol`` relative) receives the mass-weighted mean
    firm value over the quantile interval it occupies. Zero-mass nodes receive
    the quantile value at their position.

    Returns:
        np.ndarray: Project value per node.
    """
    index, masses = np.asarray(index, dtype=float), np.asarray(masses, dtype=float)
    firm_values, firm_masses = np.asarray(firm_values, dtype=float), np.asarray(firm_masses, dtype=float)
    if index.shape != masses.shape:
        raise ArgumentError("index and masses must align")
    if firm_values.shape != firm_masses.shape:
        raise ArgumentError("firm values and masses must align")
    if abs(masses.sum() - firm_masses.sum()) > 1e-9 * max(1.0, masses.sum()):
        raise ArgumentError(
            f"firm mass {firm_masses.sum():.12g} differs from worker mass {masses.sum():.12g}")

    f_order = np.argsort(firm_values, kind="stable")
    v, m = firm_values[f_order], firm_masses[f_order] / firm_masses.sum()
    g = np.concatenate([[0.0], np.cumsum(m)])
    g[-1] = 1.0
    integral = np.concatenate([[0.0], np.cumsum(v * m)])

    def cum_quantile(u: np.ndarray) -> np.ndarray:
        k = np.clip(np.searchsorted(g, u, side="right") - 1, 0, v.size - 1)
        return integral[k] + v[k] * (u - g[k])

    order = np.argsort(index, kind="stable")
    sorted_idx = index[order]
    scale = max(np.max(np.abs(index)), 1e-300)
    breaks = np.nonzero(np.diff(sorted_idx) > tie_tol * scale)[0] + 1
    groups = np.split(np.arange(index.size), breaks)

    w = masses[order] / masses.sum()
    edges = np.concatenate([[0.0], np.cumsum(w)])
    out = np.empty(index.size)
    for grp in groups:
        a, b = edges[grp[0]], min(edges[grp[-1] + 1], 1.0)
        if b - a > 1e-15:
            zval = (cum_quantile(np.array([b]))[0] - cum_quantile(np.array([a]))[0]) / (b - a)
        else:
            zval = v[np.clip(np.searchsorted(g, a, side="right") - 1, 0, v.size - 1)]
        out[order[grp]] = zval
    return out


# ─────────────────────────────────────────────────────────────
# 🌐 POSITIVE ECONOMY ON A GRID
# ─────────────────────────────────────────────────────────────
@opik.track
def positive_equilibrium(grid: SkillGrid, params: ModelParams) -> dict:
    """Worker optimum at every node: tasks, efforts, wages and effective skills."""
    n = grid.n_nodes
    x_c, x_m, ell_c, ell_m = (np.empty(n) for _ in range(4))
    for k in range(n):
        x_c[k], x_m[k], ell_c[k], ell_m[k] = worker_solve(
            grid.node_alpha_c[k], grid.node_alpha_m[k], params)
    return {
        "x_c": x_c,
        "x_m": x_m,
        "ell_c": ell_c,
        "ell_m": ell_m,
        "wage": wage(x_c, x_m, params),
        "effective_skill": x_c ** 2 + x_m ** 2,
    }


def positive_welfare(grid: SkillGrid, params: ModelParams) -> float:
    """Utilitarian welfare Σπ[(1 − τ)w − κ(ℓ_c^ρ + ℓ_m^ρ)] of the flat-tax equilibrium."""
    eq = positive_equilibrium(grid, params)
    utility = (1.0 - params.tau_linear) * eq["wage"] - params.kappa * (
        eq["ell_c"] ** params.rho + eq["ell_m"] ** params.rho)
    welfare = float(np.dot(grid.density, utility))
    logger.info(f"✅ Positive-economy welfare {welfare:.6g}")
    return welfare
