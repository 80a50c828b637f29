import numpy as np
import pytest

from rssim.errors import NumericalError
from rssim.estimation import build_estimation_model
from rssim.link import PowerVector, se_report
from rssim.moments import MomentTable, closed_form_moments
from rssim.power import (
    IlaWfOptions,
    ila_wf,
    linearization_terms,
    stationarity_residuals,
    waterfill,
)
from rssim.precoding import build_common_weight_problem, solve_common_weights
from rssim.scenario import CovarianceSet, ScenarioConfig, local_scattering_covariance
from rssim.validation import linearization_fd_errors

from conftest import solve_weights_for


def rs_table(config, model):
    weights = solve_weights_for(config, model)
    return closed_form_moments(model, weights, "circular")


def test_waterfill_arithmetic():
    assert waterfill(0.5, 2.0, 0.0) == pytest.approx(1.5)


def test_waterfill_clamps_to_zero():
    assert waterfill(1.0, 0.5, 0.0) == 0.0  # mu + sigma2 >= sigma1
    assert waterfill(0.3, 1.0, 0.7) == 0.0


def test_waterfill_huge_multiplier():
    assert waterfill(1e5, 2.0, 0.1) == pytest.approx(0.0, abs=2e-5)


def test_waterfill_rejects_bad_inputs():
    with pytest.raises(ValueError):
        waterfill(0.1, 0.0, 0.0)
    with pytest.raises(NumericalError):
        waterfill(-0.5, 1.0, 0.2)


def simple_table():
    return MomentTable(
        g_private=np.array([1.0 + 0j]),
        G_private=np.array([[1.3]]),
        g_common=np.zeros(1, dtype=complex),
        G_common=np.zeros(1),
        source="closed_form",
    )


def test_linearization_single_ue_no_common():
    table = simple_table()
    terms = linearization_terms(PowerVector(0.0, np.array([2.0])), table, 1.0, 0)
    # empty interference sums leave sigma1 = G / sigma^2
    assert terms.sigma1_private[0] == pytest.approx(1.3)
    assert terms.zeta[0, 0] == 0.0


def test_linearization_zero_power_zero_zeta(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    rho = np.array([0.0, 5.0, 3.0])
    terms = linearization_terms(PowerVector(1.0, rho), table, config.noise_mw, 0)
    assert np.all(terms.zeta[:, 0] == 0.0)  # NUM_0 = DEN_0 at zero self-power
    assert np.all(terms.sigma2_private >= 0.0)
    assert terms.sigma2_common >= 0.0


def test_linearization_matches_finite_differences(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    rho_total = config.rho_total_mw
    point = PowerVector(0.1 * rho_total, np.full(config.K, 0.8 * rho_total / config.K))
    worst = linearization_fd_errors(point, table, config.noise_mw, rho_total, 0)
    assert worst <= 1e-5


def test_ila_wf_initialization_state(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    alloc = ila_wf(table, config.rho_total_mw, config.noise_mw, config)
    first = alloc.trace[0]
    assert first.iteration == 0
    assert first.rho_c == 0.0
    assert np.allclose(first.rho, config.rho_total_mw / config.K)
    assert first.mu_low == 0.0
    assert first.mu_high == pytest.approx(1e5)
    assert first.mu == pytest.approx(5e4)


def test_ila_wf_budget_feasible(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    alloc = ila_wf(table, config.rho_total_mw, config.noise_mw, config)
    assert alloc.powers.total <= config.rho_total_mw * (1 + 1e-6)
    for record in alloc.trace:
        if record.feasible:
            assert record.total <= config.rho_total_mw * (1 + 1e-6)


def test_ila_wf_symmetric_two_ues():
    R = local_scattering_covariance(1.5, [0.3, -0.2, 0.8], np.radians(10), 16)
    cov = CovarianceSet(R=np.stack([R, R]), beta=np.array([1.5, 1.5]))
    model = build_estimation_model(cov, 50.0)
    config = ScenarioConfig(M=16, K=2)
    mr = closed_form_moments(model)
    problem = build_common_weight_problem(model, mr, np.full(2, 50.0), 1e-3)
    weights, _ = solve_common_weights(problem)
    assert np.array_equal(weights, [0.5, 0.5])
    table = closed_form_moments(model, weights, "circular")
    alloc = ila_wf(table, 100.0, 1e-3, config)
    assert alloc.converged
    rel = abs(alloc.powers.rho[0] - alloc.powers.rho[1]) / alloc.powers.rho[0]
    assert rel < 1e-8


def test_ila_wf_stationarity_at_convergence(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    alloc = ila_wf(table, config.rho_total_mw, config.noise_mw, config)
    assert alloc.converged
    res_p, res_c = stationarity_residuals(alloc.powers, alloc.mu, table, config.noise_mw)
    active = alloc.powers.rho > 0
    assert np.abs(res_p[active]).max() <= 1e-4 * alloc.mu
    if res_c is not None:
        assert abs(res_c) <= 1e-4 * alloc.mu
    # the reported bottleneck matches the final allocation
    report = se_report(alloc.powers, table, config)
    assert report.l_min == alloc.l_min


def test_ila_wf_improves_on_uniform_init(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    alloc = ila_wf(table, config.rho_total_mw, config.noise_mw, config)
    init = PowerVector(0.0, np.full(config.K, config.rho_total_mw / config.K))
    assert (
        se_report(alloc.powers, table, config).sum_se
        >= se_report(init, table, config).sum_se
    )


def test_ila_wf_freeze_common(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    alloc = ila_wf(
        table, config.rho_total_mw, config.noise_mw, config,
        IlaWfOptions(freeze_common=True),
    )
    assert alloc.powers.rho_c == 0.0
    for record in alloc.trace:
        assert record.rho_c == 0.0


def test_ila_wf_unreachable_tolerance_returns_best_feasible(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    alloc = ila_wf(
        table, config.rho_total_mw, config.noise_mw, config,
        IlaWfOptions(max_iterations=6, se_tol=0.0),  # strict < 0 never fires
    )
    assert not alloc.converged
    assert alloc.powers.total <= config.rho_total_mw * (1 + 1e-6)


def test_ila_wf_nested_mode_agrees(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    default = ila_wf(table, config.rho_total_mw, config.noise_mw, config)
    nested = ila_wf(
        table, config.rho_total_mw, config.noise_mw, config,
        IlaWfOptions(nested_bisection=True),
    )
    assert nested.converged
    se_a = se_report(default.powers, table, config).sum_se
    se_b = se_report(nested.powers, table, config).sum_se
    assert se_b == pytest.approx(se_a, rel=1e-3)


def test_ila_wf_trace_records_sum_se(small_setup):
    config, _, model, weights = small_setup
    table = closed_form_moments(model, weights, "circular")
    alloc = ila_wf(table, config.rho_total_mw, config.noise_mw, config)
    assert len(alloc.trace) == len({r.iteration for r in alloc.trace})
    assert all(np.isfinite(r.sum_se) for r in alloc.trace)
