import numpy as np
import pytest

from multitax.src.exceptions import ArgumentError, NumericError
from multitax.src.models.fields import AllocationField, SkillGrid, WedgeField
from multitax.src.services.bunching_service import (
    classify_bunching,
    detect_bunching,
    wedge_strip_profile,
    wedges,
    weighted_median,
)
from multitax.src.services.grid_service import make_grid
from multitax.src.services.planner_service import benchmark_closed_form


def _alloc(x_c, x_m, c=None, z=None):
    n = len(x_c)
    return AllocationField(
        c=np.zeros(n) if c is None else c, x_c=x_c, x_m=x_m, z=np.ones(n) if z is None else z)


def _separated(n):
    return np.arange(n, dtype=float), 10.0 * np.arange(n, dtype=float)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: detection
# ─────────────────────────────────────────────────────────────
def test_identical_allocation_is_one_class(grid_3x3):
    report = detect_bunching(_alloc(np.ones(9), np.ones(9)), grid_3x3)
    assert report.classes == (tuple(range(9)),)
    assert report.n_bunched == 9
    assert np.all(report.class_id == 0)


def test_separated_allocation_has_no_classes(grid_3x3):
    report = detect_bunching(_alloc(*_separated(9)), grid_3x3)
    assert report.classes == ()
    assert not report.flags.any()
    assert np.all(report.class_id == -1)
    assert report.edges.shape == (0, 2)


def test_single_bunched_pair(grid_3x3):
    x_c, x_m = _separated(9)
    x_c[1], x_m[1] = x_c[0], x_m[0]
    report = detect_bunching(_alloc(x_c, x_m), grid_3x3)
    assert report.classes == ((0, 1),)
    assert report.edges.tolist() == [[0, 1]]
    assert report.edge_law_violations == 0


def test_edge_law_violation_is_counted(grid_3x3):
    x_c, x_m = _separated(9)
    x_c[4], x_m[4] = x_c[0], x_m[0]
    report = detect_bunching(_alloc(x_c, x_m), grid_3x3)
    assert report.edge_law_violations == 1


def test_near_but_not_bunched(grid_3x3):
    x_c, x_m = _separated(9)
    x_c[1] = x_c[0] + 1.0
    x_m[1] = x_m[0]
    assert detect_bunching(_alloc(x_c, x_m), grid_3x3).classes == ()


def test_tree_search_matches_exact(grid_4x4, rng):
    x_c, x_m = rng.uniform(0, 1, 16), rng.uniform(0, 1, 16)
    for a, b in ((0, 5), (5, 9), (12, 13)):
        x_c[b], x_m[b] = x_c[a], x_m[a]
    exact = detect_bunching(_alloc(x_c, x_m), grid_4x4, exact_limit=10_000)
    tree = detect_bunching(_alloc(x_c, x_m), grid_4x4, exact_limit=1)
    assert exact.edges.tolist() == tree.edges.tolist()
    assert exact.classes == tree.classes == ((0, 5, 9), (12, 13))


def test_detect_shape_mismatch(grid_3x3):
    with pytest.raises(ArgumentError):
        detect_bunching(_alloc(np.ones(4), np.ones(4)), grid_3x3)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: classification
# ─────────────────────────────────────────────────────────────
def test_weighted_median():
    assert weighted_median(np.array([3.0, 1.0, 2.0]), np.ones(3)) == 2.0
    assert weighted_median(np.array([1.0, 5.0]), np.array([0.9, 0.1])) == 1.0


def test_blunt_and_targeted_classes(grid_3x3):
    x_c, x_m = _separated(9)
    # nodes 0 and 1 sit on one side of the median ratio; 2 and 6 straddle it
    x_c[1], x_m[1] = x_c[0], x_m[0]
    x_c[6], x_m[6] = x_c[2], x_m[2]
    report = classify_bunching(detect_bunching(_alloc(x_c, x_m), grid_3x3), grid_3x3)
    assert report.classes == ((0, 1), (2, 6))
    assert report.labels == ("targeted", "blunt")
    assert report.shares["bunched"] == pytest.approx(4 / 9)
    assert report.shares["blunt"] == pytest.approx(2 / 9)
    assert report.shares["targeted"] == pytest.approx(2 / 9)
    labels = report.node_labels()
    assert labels[6] == "blunt" and labels[1] == "targeted" and labels[4] == ""


def test_classification_without_bunching(grid_3x3):
    report = classify_bunching(detect_bunching(_alloc(*_separated(9)), grid_3x3), grid_3x3)
    assert report.labels == ()
    assert report.shares == {"bunched": 0.0, "blunt": 0.0, "targeted": 0.0}


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: wedges
# ─────────────────────────────────────────────────────────────
@pytest.mark.parametrize("alpha_rho,expected", [(0.5, 0.0), (1.0, 0.5)])
def test_wedge_single_node(params, alpha_rho, expected):
    alpha = alpha_rho ** (1 / params.rho)
    grid = make_grid([alpha], [alpha], params, [1.0])
    field = wedges(_alloc(np.ones(1), np.ones(1)), grid, params)
    assert field.tau_c[0] == pytest.approx(expected, abs=1e-12)
    assert field.tau_m[0] == pytest.approx(expected, abs=1e-12)


def test_benchmark_has_no_wedges(grid_4x4, welfare_params):
    bench, _ = benchmark_closed_form(grid_4x4, 1.3, welfare_params)
    field = wedges(bench, grid_4x4, welfare_params)
    assert np.allclose(field.tau_c, 0.0, atol=1e-10)
    assert np.allclose(field.tau_m, 0.0, atol=1e-10)


def test_log_benchmark_has_no_wedges(grid_3x3, params):
    log_params = params.model_copy(update={"consumption_utility": "log", "promised_welfare": 0.0})
    bench, _ = benchmark_closed_form(grid_3x3, 1.0, log_params)
    assert np.allclose(wedges(bench, grid_3x3, log_params).tau_c, 0.0, atol=1e-10)


def test_wedge_undefined_without_task(grid_3x3, params):
    x_c = np.ones(9)
    x_c[3] = 0.0
    field = wedges(_alloc(x_c, np.ones(9)), grid_3x3, params)
    assert np.isnan(field.tau_c[3])
    assert np.isfinite(field.tau_c[[0, 1, 2, 4]]).all()
    assert np.isfinite(field.tau_m).all()


def test_wedge_forms_must_agree(params):
    alpha = np.array([1.0, 1.5])
    p = params.kappa * alpha ** -params.rho
    inconsistent = SkillGrid(alpha_c=alpha, alpha_m=alpha, p_c=2 * p, p_m=p, density=np.full(4, 0.25))
    with pytest.raises(NumericError):
        wedges(_alloc(np.ones(4), np.ones(4)), inconsistent, params)


def test_wedge_strip_profile(grid_4x4):
    tau = np.where(grid_4x4.node_ic == 3, -0.4, 0.1)
    profile = wedge_strip_profile(WedgeField(tau_c=tau, tau_m=np.full(16, 0.2)), grid_4x4, fraction=0.25)
    assert profile["tau_c_top"] == pytest.approx(0.4)
    assert profile["tau_c_interior"] == pytest.approx(0.1)
    assert profile["tau_m_top"] == pytest.approx(0.2)
    assert profile["tau_m_interior"] == pytest.approx(0.2)
