import numpy as np
import pytest

from multitax.src.exceptions import ArgumentError, DomainError
from multitax.src.models.fields import AllocationField
from multitax.src.models.params import ModelParams
from multitax.src.services.grid_service import (
    alpha_to_p,
    build_grid,
    discrete_convexity_check,
    indirect_utility_field,
    make_grid,
    p_affine,
    p_to_alpha,
    synthetic_density,
    task_cost,
)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: coordinate maps
# ─────────────────────────────────────────────────────────────
def test_alpha_to_p_unit_skill(params):
    """Unit skill maps to kappa."""
    assert alpha_to_p(1.0, params) == pytest.approx(1 / 5.6, rel=1e-12)


def test_alpha_to_p_identity_case():
    """kappa = 1, rho = 3 at unit skill gives p = 1."""
    params = ModelParams(rho=3.0, kappa=1.0)
    assert alpha_to_p(1.0, params) == pytest.approx(1.0)
    assert p_to_alpha(1.0, params) == pytest.approx(1.0)


def test_alpha_to_p_two(params):
    p = alpha_to_p(2.0, params)
    assert p == pytest.approx(0.0256406, abs=1e-7)
    assert p_to_alpha(p, params) == pytest.approx(2.0, abs=1e-9)


def test_round_trip_log_uniform(params, rng):
    """p_to_alpha inverts alpha_to_p over a wide skill range."""
    alpha = np.exp(rng.uniform(np.log(0.1), np.log(10.0), 500))
    assert np.allclose(p_to_alpha(alpha_to_p(alpha, params), params), alpha, rtol=1e-12, atol=0)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_coordinate_maps_reject_non_positive(params, bad):
    with pytest.raises(DomainError):
        alpha_to_p(bad, params)
    with pytest.raises(DomainError):
        p_to_alpha(bad, params)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: task cost
# ─────────────────────────────────────────────────────────────
def test_task_cost_values(params):
    assert task_cost(1.0, params) == pytest.approx(-0.5)
    assert task_cost(0.0, params) == 0.0
    assert task_cost(1.35 ** 2.8, params) == pytest.approx(-0.91125, rel=1e-10)


def test_task_cost_rejects_negative(params):
    with pytest.raises(DomainError):
        task_cost(-1e-3, params)


def test_task_cost_convexity(params, rng):
    a, b = rng.uniform(0.01, 5.0, 200), rng.uniform(0.01, 5.0, 200)
    lam = rng.uniform(0.05, 0.95, 200)
    mixed = task_cost(lam * a + (1 - lam) * b, params)
    chord = lam * task_cost(a, params) + (1 - lam) * task_cost(b, params)
    assert np.all(mixed <= chord + 1e-15)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: lattice construction
# ─────────────────────────────────────────────────────────────
@pytest.mark.parametrize("spacing", ["geometric", "uniform-alpha", "uniform-p"])
def test_build_grid_invariants(params, spacing):
    grid = build_grid(5, 4, (1.0, 2.0), (0.8, 1.6), params, spacing=spacing)
    assert grid.shape == (5, 4)
    assert np.all(np.diff(grid.alpha_c) > 0) and np.all(np.diff(grid.alpha_m) > 0)
    assert np.allclose(grid.p_c, params.kappa * grid.alpha_c ** -params.rho, rtol=1e-15)
    assert grid.density.sum() == pytest.approx(1.0, abs=1e-12)
    assert grid.alpha_c[0] == pytest.approx(1.0) and grid.alpha_c[-1] == pytest.approx(2.0)


def test_uniform_p_grid_is_affine(params):
    assert p_affine(build_grid(4, 4, (1.0, 2.0), (1.0, 2.0), params, spacing="uniform-p"))
    assert not p_affine(build_grid(4, 4, (1.0, 2.0), (1.0, 2.0), params, spacing="geometric"))


def test_row_major_layout(grid_3x3):
    assert grid_3x3.node_index(1, 2) == 5
    assert grid_3x3.node_ic[5] == 1 and grid_3x3.node_im[5] == 2


def test_make_grid_rejects_bad_axes(params):
    with pytest.raises(ArgumentError):
        make_grid([1.0, 1.0], [1.0], params, [0.5, 0.5])
    with pytest.raises(ArgumentError):
        make_grid([1.0, 2.0], [1.0], params, [1.0, -1.0])
    with pytest.raises(ArgumentError):
        make_grid([1.0, 2.0], [1.0], params, [1.0])


@pytest.mark.parametrize("kind", ["uniform", "lognormal", "bimodal"])
def test_synthetic_density_normalized(grid_4x4, kind):
    mass = synthetic_density(grid_4x4, kind)
    assert mass.shape == (16,)
    assert mass.sum() == pytest.approx(1.0)
    assert np.all(mass > 0)


def test_lognormal_density_peaks_mid_grid(params):
    grid = build_grid(9, 9, (1.0, 2.0), (1.0, 2.0), params, spacing="geometric")
    mass = synthetic_density(grid, "lognormal").reshape(9, 9)
    assert np.unravel_index(np.argmax(mass), mass.shape) == (4, 4)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: utility field and convexity
# ─────────────────────────────────────────────────────────────
def test_indirect_utility_field(grid_3x3):
    n = grid_3x3.n_nodes
    zeros = np.zeros(n)
    assert np.all(indirect_utility_field(AllocationField(zeros, zeros, zeros, np.ones(n)), grid_3x3) == 0)
    ones = AllocationField(np.ones(n), zeros, zeros, np.ones(n))
    assert np.all(indirect_utility_field(ones, grid_3x3) == 1)


def test_indirect_utility_hand_arithmetic(params):
    grid = make_grid([p_to_alpha(0.5, params)], [p_to_alpha(0.5, params)], params, [1.0])
    alloc = AllocationField(c=[2.0], x_c=[1.0], x_m=[1.0], z=[1.0])
    assert indirect_utility_field(alloc, grid)[0] == pytest.approx(1.0)


def test_indirect_utility_shape_mismatch(grid_3x3):
    alloc = AllocationField(np.zeros(4), np.zeros(4), np.zeros(4), np.ones(4))
    with pytest.raises(ArgumentError):
        indirect_utility_field(alloc, grid_3x3)


def test_convexity_constant_and_affine(grid_4x4):
    assert discrete_convexity_check(np.full(16, 3.0), grid_4x4) == []
    affine = -grid_4x4.node_p_c - grid_4x4.node_p_m
    assert discrete_convexity_check(affine, grid_4x4, max_offset=2) == []


def test_convexity_reports_bumped_node(grid_3x3):
    u = -grid_3x3.node_p_c - grid_3x3.node_p_m
    u[4] += 1.0
    violations = discrete_convexity_check(u, grid_3x3)
    assert 4 in {v.node for v in violations if v.kind == "midpoint"}


def test_convexity_default_covers_long_offsets(params):
    """A field concave only along (1, 2) passes the unit directions but not the full check."""
    grid = build_grid(5, 5, (1.0, 2.0), (1.0, 2.0), params, spacing="uniform-p")
    i, j = np.meshgrid(np.arange(5), np.arange(5), indexing="ij")
    u = (3 * i ** 2 - 4 * i * j + j ** 2).astype(float).ravel()

    short = discrete_convexity_check(u, grid, max_offset=1)
    assert [v for v in short if v.kind == "midpoint"] == []

    midpoint = [v for v in discrete_convexity_check(u, grid) if v.kind == "midpoint"]
    assert {v.direction for v in midpoint} == {(1, 2)}
    assert len(midpoint) == 3
