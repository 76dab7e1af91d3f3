"""Calibration helpers: winsorization, boundary-reflected KDE, task aggregation."""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import ndtr

from multitax.src.exceptions import ArgumentError
from multitax.src.models.fields import SkillGrid

logger = logging.getLogger(__name__)


def winsorize(values: Sequence[float], lower_pct: float = 5.0, upper_pct: float = 95.0) -> np.ndarray:
    """
    Clamps values to the [lower_pct, upper_pct] empirical percentile band.

    Args:
        values (Sequence[float]): Sample.
        lower_pct (float): Lower percentile in [0, 100).
        upper_pct (float): Upper percentile in (lower_pct, 100].

    Returns:
        np.ndarray: Clamped copy, same length.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ArgumentError("cannot winsorize an empty sample")
    if not 0.0 <= lower_pct < upper_pct <= 100.0:
        raise ArgumentError(f"need 0 <= lower < upper <= 100, got [{lower_pct}, {upper_pct}]")
    lo, hi = np.percentile(values, [lower_pct, upper_pct])
    return np.clip(values, lo, hi)


def cell_edges(axis: np.ndarray) -> np.ndarray:
    """Cell boundaries: midpoints between nodes, half a cell beyond each end."""
    axis = np.asarray(axis, dtype=float)
    if axis.size == 1:
        half = 0.05 * abs(axis[0]) or 0.5
        return np.array([axis[0] - half, axis[0] + half])
    mid = 0.5 * (axis[1:] + axis[:-1])
    return np.concatenate([[axis[0] - (mid[0] - axis[0])], mid, [axis[-1] + (axis[-1] - mid[-1])]])


def silverman_bandwidth(x: np.ndarray, weights: np.ndarray) -> float:
    """1.06·σ·n_eff^(−1/5) on a weighted sample."""
    total = weights.sum()
    mean = np.dot(weights, x) / total
    sigma = np.sqrt(np.dot(weights, (x - mean) ** 2) / total)
    n_eff = total ** 2 / np.dot(weights, weights)
    return float(1.06 * sigma * n_eff ** (-0.2))


def _cell_masses(centres: np.ndarray, weights: np.ndarray, edges: np.ndarray, h: float, reflect: bool) -> np.ndarray:
    """(n_points, n_cells) kernel mass of every point, reflected copies included."""
    lo, hi = edges[0], edges[-1]
    copies = [centres, 2 * lo - centres, 2 * hi - centres] if reflect else [centres]
    out = np.zeros((centres.size, edges.size - 1))
    for y in copies:
        cdf = ndtr((edges[None, :] - y[:, None]) / h)
        out += np.diff(cdf, axis=1)
    return out


def kde_smooth(
    points: np.ndarray,
    grid: SkillGrid,
    weights: Optional[np.ndarray] = None,
    bandwidth: Optional[Tuple[float, float]] = None,
    reflect: bool = True,
    normalize: bool = True,
    chunk: int = 4096,
) -> np.ndarray:
    """
    Gaussian product-kernel density integrated over the grid cells in α.

    Each point's kernel is reflected across all four edges of the rectangle
    spanned by the cell boundaries (nine copies in total), so mass near the
    boundary is folded back instead of leaking out. Cell masses use the exact
    normal CDF of each cell.

    Args:
        points (np.ndarray): (n, 2) array of (α_c, α_m).
        grid (SkillGrid): Target lattice.
        weights (np.ndarray, optional): Sampling weights, default 1.
        bandwidth (Tuple[float, float], optional): (h_c, h_m); Silverman per axis if omitted.
        reflect (bool): Reflect kernels across the edges.
        normalize (bool): Rescale node masses to sum to one.

    Returns:
        np.ndarray: Node masses in row-major order.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.shape[0] == 0:
        raise ArgumentError("kde_smooth needs at least one point")
    weights = np.ones(points.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if weights.shape[0] != points.shape[0] or np.any(weights < 0) or weights.sum() <= 0:
        raise ArgumentError("weights must be non-negative, aligned with points, and not all zero")

    edges_c, edges_m = cell_edges(grid.alpha_c), cell_edges(grid.alpha_m)
    if bandwidth is None:
        bandwidth = tuple(
            silverman_bandwidth(points[:, k], weights) or float(np.diff(edges).mean())
            for k, edges in ((0, edges_c), (1, edges_m)))
    h_c, h_m = bandwidth
    if h_c <= 0 or h_m <= 0:
        raise ArgumentError(f"bandwidths must be positive, got {bandwidth}")

    clipped = np.column_stack([
        np.clip(points[:, 0], edges_c[0], edges_c[-1]),
        np.clip(points[:, 1], edges_m[0], edges_m[-1]),
    ])
    moved = int(np.sum(np.any(clipped != points, axis=1)))
    if moved:
        logger.warning(f"⚠️ {moved} points outside the grid rectangle were clipped to its edges")

    mass = np.zeros((grid.n_c, grid.n_m))
    for start in range(0, points.shape[0], chunk):
        sl = slice(start, start + chunk)
        kc = _cell_masses(clipped[sl, 0], weights[sl], edges_c, h_c, reflect)
        km = _cell_masses(clipped[sl, 1], weights[sl], edges_m, h_m, reflect)
        mass += np.einsum("n,ni,nj->ij", weights[sl], kc, km)
    mass = mass.reshape(-1) / weights.sum()
    if normalize:
        total = mass.sum()
        if total <= 0:
            raise ArgumentError("smoothed density has no mass on the grid")
        mass = mass / total
    return mass


def aggregate_task_scores(
    table: pd.DataFrame,
    cognitive: Sequence[str],
    manual: Sequence[str],
) -> pd.DataFrame:
    """
    Cobb-Douglas task aggregates q_s = exp(mean of standardized subtask scores).

    Returns:
        pd.DataFrame: columns ``q_c``, ``q_m`` and ``rel_intensity = q_m / q_c``.
    """
    missing = [c for c in (*cognitive, *manual) if c not in table.columns]
    if missing:
        raise ArgumentError(f"missing subtask columns: {missing}")
    if not cognitive or not manual:
        raise ArgumentError("need at least one cognitive and one manual subtask")
    scores = table[list(cognitive) + list(manual)].astype(float)
    std = scores.std(ddof=0).replace(0.0, 1.0)
    standardized = (scores - scores.mean()) / std
    out = pd.DataFrame(index=table.index)
    out["q_c"] = np.exp(standardized[list(cognitive)].mean(axis=1))
    out["q_m"] = np.exp(standardized[list(manual)].mean(axis=1))
    out["rel_intensity"] = out["q_m"] / out["q_c"]
    return out
