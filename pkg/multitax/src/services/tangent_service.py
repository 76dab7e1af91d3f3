"""Tangent-line (Legendre) lower approximations of the convex resource costs."""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from multitax.src.exceptions import ArgumentError, DomainError, ResourceError
from multitax.src.models.fields import TangentFamily
from multitax.src.services.costs import ConvexCost

logger = logging.getLogger(__name__)

DEFAULT_MAX_LINES = 10_000


def build_tangents(
    cost: ConvexCost,
    interval: Tuple[float, float],
    eps: float,
    max_lines: int = DEFAULT_MAX_LINES,
    seed_points: Optional[Sequence[float]] = None,
) -> TangentFamily:
    """
    Covers ``cost`` on ``interval`` with tangents whose upper envelope is within eps.

    Tangency points start at the interval ends. While some pair of adjacent
    tangents leaves a gap above eps, a new tangency is inserted where the two
    lines cross, which is where the gap between them peaks for a convex cost.
    Every offending pair is split in the same round. A left end at the
    boundary of the task domain, where the slope is unbounded, is covered by
    the tangency whose gap at the boundary is exactly eps.

    Args:
        cost (ConvexCost): Cost to approximate.
        interval (Tuple[float, float]): [lo, hi] inside the cost's domain.
        eps (float): Requested uniform accuracy.
        max_lines (int): Resource cap on the family size.
        seed_points (Sequence[float], optional): Extra tangency points kept in
            the family, e.g. a coarser family on the same interval.

    Returns:
        TangentFamily: Slopes, conjugate intercepts and tangency points.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    if not lo <= hi:
        raise ArgumentError(f"interval needs lo <= hi, got [{lo}, {hi}]")
    if lo < cost.domain_lo:
        raise DomainError(f"interval [{lo}, {hi}] leaves the cost domain")

    if cost.is_linear:
        slope, intercept = cost.tangent_at(np.array([hi]))
        return TangentFamily(slopes=slope, intercepts=intercept, points=np.array([hi]),
                             interval=(lo, hi), achieved_eps=0.0, requested_eps=eps)

    left = min(cost.left_tangency(lo, eps), hi)
    points = np.unique(np.array([left, hi] + [
        float(p) for p in (() if seed_points is None else seed_points) if left <= p <= hi], dtype=float))

    while True:
        if points.size > max_lines:
            raise ResourceError(
                f"tangent family on [{lo:.4g}, {hi:.4g}] needs more than {max_lines} lines for eps={eps:.1e}")
        slopes, intercepts = cost.tangent_at(points)
        if points.size == 1:
            break
        cross, gaps = _crossing_gaps(cost, slopes, intercepts, points)
        split = gaps > eps
        if not split.any():
            break
        points = np.unique(np.concatenate([points, cross[split]]))

    achieved = _achieved_gap(cost, slopes, intercepts, points, lo)
    logger.debug(f"built {points.size} tangents on [{lo:.4g}, {hi:.4g}] (gap {achieved:.2e} ≤ {eps:.1e})")
    return TangentFamily(slopes=slopes, intercepts=intercepts, points=points,
                         interval=(lo, hi), achieved_eps=achieved, requested_eps=eps)


def _crossing_gaps(cost: ConvexCost, slopes, intercepts, points) -> Tuple[np.ndarray, np.ndarray]:
    """Crossing abscissa and cost gap there for every adjacent tangent pair."""
    ds = np.diff(slopes)
    safe = ds > 0
    cross = np.where(safe, np.diff(intercepts) / np.where(safe, ds, 1.0), points[:-1])
    cross = np.clip(cross, points[:-1], points[1:])
    gaps = np.where(safe, cost.value(cross) - (slopes[:-1] * cross - intercepts[:-1]), 0.0)
    return cross, gaps


def _achieved_gap(cost: ConvexCost, slopes, intercepts, points, lo: float) -> float:
    gap = 0.0
    if points.size > 1:
        gap = float(_crossing_gaps(cost, slopes, intercepts, points)[1].max())
    if lo < points[0]:
        gap = max(gap, float(cost.value(lo) - (slopes[0] * lo - intercepts[0])))
    return gap


def tangent_gap(cost: ConvexCost, family: TangentFamily, n_scan: int = 10_001) -> float:
    """Largest gap between the cost and the tangent envelope on a dense scan."""
    t = np.linspace(family.interval[0], family.interval[1], n_scan)
    return float(np.max(cost.value(t) - family.evaluate(t)))
