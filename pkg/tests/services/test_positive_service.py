from itertools import permutations

import numpy as np
import pytest

from multitax.src.exceptions import ArgumentError, DomainError
from multitax.src.models.params import ModelParams
from multitax.src.models.records import WorkerRecord
from multitax.src.services.positive_service import (
    comonotone_coupling,
    equilibrium_assignment,
    firm_value_conjugate,
    frisch_elasticity,
    identify_batch,
    identify_skills,
    infer_firm,
    positive_equilibrium,
    positive_welfare,
    wage,
    worker_foc_residual,
    worker_solve,
)

# (wage, ratio, tau, eta) → (x_m, x_c, α_m^ρ, α_c^ρ)
TABLE_ROWS = [
    ((1.0, 1.0, 0.0, 1.0), (1.00, 1.00, 0.50, 0.50)),
    ((1.0, 3.0, 0.0, 1.0), (1.35, 0.45, 0.63, 0.26)),
    ((4.0, 1.0, 0.0, 1.0), (2.00, 2.00, 0.87, 0.87)),
    ((1.0, 1.0, 0.3, 1.0), (1.00, 1.00, 0.71, 0.71)),
    ((1.0, 1.0, 0.0, 1.1), (0.97, 0.97, 0.42, 0.42)),
]


def _params(tau: float, eta: float) -> ModelParams:
    return ModelParams(rho=2.8, tau_linear=tau, eta=eta)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: wages and worker optimum
# ─────────────────────────────────────────────────────────────
def test_wage_known_values():
    assert wage(1.0, 1.0, _params(0.0, 1.0)) == pytest.approx(1.0)
    assert wage(0.0, 0.0, ModelParams(zeta=0.3)) == pytest.approx(0.3)
    assert wage(0.97, 0.97, _params(0.0, 1.1)) == pytest.approx(1.0, abs=5e-3)


def test_wage_rejects_negative_tasks(params):
    with pytest.raises(DomainError):
        wage(-0.1, 1.0, params)


@pytest.mark.parametrize("alpha_rho,tau,expected", [
    ((0.5, 0.5), 0.0, (1.00, 1.00)),
    ((0.26, 0.63), 0.0, (0.45, 1.35)),
    ((0.71, 0.71), 0.3, (1.00, 1.00)),
])
def test_worker_solve_table_rows(alpha_rho, tau, expected):
    params = _params(tau, 1.0)
    alpha_c, alpha_m = (a ** (1 / params.rho) for a in alpha_rho)
    x_c, x_m, ell_c, ell_m = worker_solve(alpha_c, alpha_m, params)
    assert (x_c, x_m) == pytest.approx(expected, abs=0.02)
    assert ell_c == pytest.approx(x_c / alpha_c)


def test_worker_solve_skill_ratio_identity(params, rng):
    for alpha_c, alpha_m in rng.uniform(0.5, 2.0, (20, 2)):
        x_c, x_m, _, _ = worker_solve(alpha_c, alpha_m, params)
        ratio = (x_m / x_c) ** ((params.rho - 2) / params.rho)
        assert alpha_m / alpha_c == pytest.approx(ratio, rel=1e-8)


def test_worker_solve_rejects_bad_skill(params):
    with pytest.raises(DomainError):
        worker_solve(0.0, 1.0, params)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: identification
# ─────────────────────────────────────────────────────────────
@pytest.mark.parametrize("inputs,expected", TABLE_ROWS)
def test_identify_skills_table_rows(inputs, expected):
    w, ratio, tau, eta = inputs
    params = _params(tau, eta)
    worker = identify_skills(WorkerRecord(wage=w, rel_intensity=ratio), params)
    alpha_c_rho, alpha_m_rho = worker.alpha_rho(params.rho)
    got = (worker.x_m, worker.x_c, alpha_m_rho, alpha_c_rho)
    assert got == pytest.approx(expected, abs=0.01)


def test_identify_skills_satisfies_wage_and_foc(params):
    worker = identify_skills(WorkerRecord(wage=2.3, rel_intensity=0.7), params)
    assert wage(worker.x_c, worker.x_m, params) == pytest.approx(2.3, rel=1e-8)
    r_c, r_m = worker_foc_residual(worker, params)
    assert abs(r_c) <= 1e-8 and abs(r_m) <= 1e-8


def test_identify_rejects_wage_below_minimum():
    with pytest.raises(DomainError):
        identify_skills(WorkerRecord(wage=0.2, rel_intensity=1.0), ModelParams(zeta=0.5))


def test_identification_round_trip(params, rng):
    """Forward worker optimum, then identification, recovers the skills."""
    alphas = rng.uniform(0.5, 2.0, (2000, 2))
    solved = np.array([worker_solve(a_c, a_m, params)[:2] for a_c, a_m in alphas])
    wages = wage(solved[:, 0], solved[:, 1], params)
    out = identify_batch(wages, solved[:, 1] / solved[:, 0], params)
    assert np.allclose(out["alpha_c"], alphas[:, 0], rtol=1e-6, atol=0)
    assert np.allclose(out["alpha_m"], alphas[:, 1], rtol=1e-6, atol=0)


def test_tax_leaves_tasks_and_scales_skills():
    record = WorkerRecord(wage=1.7, rel_intensity=1.4)
    untaxed = identify_skills(record, _params(0.0, 1.0))
    taxed = identify_skills(record, _params(0.3, 1.0))
    assert taxed.x_c == pytest.approx(untaxed.x_c) and taxed.x_m == pytest.approx(untaxed.x_m)
    assert taxed.alpha_rho(2.8)[0] == pytest.approx(untaxed.alpha_rho(2.8)[0] / 0.7)


def test_identification_is_monotone(params):
    base = identify_batch([1.0, 2.0], [1.0, 1.0], params)
    assert np.all(np.diff(base["alpha_c"]) > 0) and np.all(np.diff(base["alpha_m"]) > 0)
    tilted = identify_batch([1.0, 1.0], [1.0, 2.0], params)
    assert tilted["alpha_m"][1] > tilted["alpha_m"][0]
    assert tilted["alpha_c"][1] < tilted["alpha_c"][0]


def test_identify_batch_partition_independent(params, rng):
    wages, ratios = rng.uniform(0.5, 3.0, 100), rng.uniform(0.3, 3.0, 100)
    whole = identify_batch(wages, ratios, params)
    halves = [identify_batch(wages[s], ratios[s], params) for s in (slice(0, 37), slice(37, 100))]
    assert np.array_equal(np.concatenate([h["alpha_c"] for h in halves]), whole["alpha_c"])


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: firms, calibration quantities
# ─────────────────────────────────────────────────────────────
def test_infer_firm():
    assert infer_firm(5.0, _params(0.0, 1.0)) == pytest.approx(1.0)
    assert infer_firm(1.0, _params(0.0, 1.1)) == pytest.approx(1.1)
    with pytest.raises(DomainError):
        infer_firm(0.0, _params(0.0, 1.1))


@pytest.mark.parametrize("rho,expected", [(2.8, 0.5556), (2.0, 1.0), (3.0, 0.5)])
def test_frisch_elasticity(rho, expected):
    assert frisch_elasticity(rho) == pytest.approx(expected, abs=1e-4)


def test_frisch_elasticity_domain():
    with pytest.raises(DomainError):
        frisch_elasticity(1.0)


@pytest.mark.parametrize("z", [0.8, 1.1, 1.6])
def test_firm_value_conjugate_matches_closed_form(z):
    params = _params(0.0, 1.1)
    best_x = (z / params.eta) ** (1 / (params.eta - 1))
    closed = z * best_x - best_x ** params.eta
    assert firm_value_conjugate(z, params) == pytest.approx(closed, rel=1e-8)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: sorting
# ─────────────────────────────────────────────────────────────
def test_equilibrium_assignment_small_cases():
    assert equilibrium_assignment([1.0], [1.0]).output == pytest.approx(1.0)
    pairing = equilibrium_assignment([2.0, 1.0], [1.0, 3.0])
    assert pairing.output == pytest.approx(7.0)
    assert list(pairing.firm_for_worker) == [3.0, 1.0]
    assert equilibrium_assignment([1.0, 2.0, 3.0], [1.0, 1.0, 1.0]).output == pytest.approx(6.0)


def test_equilibrium_assignment_beats_every_permutation(rng):
    for n in range(1, 7):
        workers, firms = rng.uniform(0, 3, n), rng.uniform(0, 3, n)
        best = max(float(np.dot(workers, np.array(p))) for p in permutations(firms))
        assert equilibrium_assignment(workers, firms).output == pytest.approx(best, rel=1e-12)


def test_equilibrium_assignment_length_mismatch():
    with pytest.raises(ArgumentError):
        equilibrium_assignment([1.0, 2.0], [1.0])


def test_comonotone_coupling_sorts_by_index():
    z = comonotone_coupling(np.array([2.0, 1.0]), np.array([0.5, 0.5]), np.array([1.0, 3.0]), np.array([0.5, 0.5]))
    assert list(z) == pytest.approx([3.0, 1.0])


def test_comonotone_coupling_ties_share_the_mean():
    z = comonotone_coupling(np.array([1.0, 1.0]), np.array([0.5, 0.5]), np.array([1.0, 3.0]), np.array([0.5, 0.5]))
    assert list(z) == pytest.approx([2.0, 2.0])


def test_comonotone_coupling_preserves_mean_value(rng):
    index, masses = rng.uniform(size=30), rng.uniform(size=30)
    values, firm_masses = rng.uniform(0.5, 2.0, 7), rng.uniform(size=7)
    firm_masses *= masses.sum() / firm_masses.sum()
    z = comonotone_coupling(index, masses, values, firm_masses)
    assert np.dot(masses, z) / masses.sum() == pytest.approx(np.dot(firm_masses, values) / firm_masses.sum())
    order = np.argsort(index)
    assert np.all(np.diff(z[order]) >= -1e-12)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: positive economy on a grid
# ─────────────────────────────────────────────────────────────
def test_positive_welfare_matches_node_formula(grid_3x3, params):
    eq = positive_equilibrium(grid_3x3, params)
    utility = 0.7 * eq["wage"] - params.kappa * (eq["ell_c"] ** params.rho + eq["ell_m"] ** params.rho)
    assert positive_welfare(grid_3x3, params) == pytest.approx(float(np.dot(grid_3x3.density, utility)))
    assert np.all(np.diff(eq["effective_skill"].reshape(3, 3), axis=0) > 0)
