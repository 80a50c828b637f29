import numpy as np
import pytest

from rssim.errors import ConfigError, InfeasibleGeometryError
from rssim.scenario import (
    ScenarioConfig,
    generate_scenario,
    large_scale_gain_db,
    local_scattering_covariance,
    place_ues,
)
from rssim.estimation import sample_channels


def test_large_scale_gain_reference_point():
    assert large_scale_gain_db(1.0, 0.0) == pytest.approx(-34.53)


def test_large_scale_gain_decade():
    # one decade closer than the reference distance
    assert large_scale_gain_db(0.1, 0.0) == pytest.approx(3.47)


def test_large_scale_gain_shadow_additive():
    assert large_scale_gain_db(1.0, 10.0) == pytest.approx(-24.53)


def test_large_scale_gain_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        large_scale_gain_db(0.0)
    with pytest.raises(ValueError):
        large_scale_gain_db(-3.0)


def test_placement_distance_bounds():
    config = ScenarioConfig(M=4, K=10, cell_side_m=250.0, min_distance_m=35.0, seed=7)
    geometry = place_ues(config, np.random.default_rng(7))
    # independent oracle: the farthest feasible point is a cell corner
    half = config.cell_side_m / 2.0
    corner = max(np.hypot(x, y) for x in (-half, half) for y in (-half, half))
    assert corner == pytest.approx(125.0 * np.sqrt(2.0))
    assert np.all(geometry.distances >= 35.0)
    assert np.all(geometry.distances <= corner)


def test_placement_bit_identical_for_same_seed():
    config = ScenarioConfig(M=4, K=6, seed=11)
    a = place_ues(config, np.random.default_rng(11))
    b = place_ues(config, np.random.default_rng(11))
    for field in ("positions", "distances", "nominal_angles", "shadow_fading_db",
                  "beta_db", "cluster_angles"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_placement_annulus_only():
    # cell shrunk so most of the square is inside the exclusion disk
    config = ScenarioConfig(M=2, K=1, cell_side_m=80.0, min_distance_m=35.0, seed=5)
    for seed in range(20):
        geometry = place_ues(config, np.random.default_rng(seed))
        assert geometry.distances[0] >= 35.0
        assert np.max(np.abs(geometry.positions)) <= 40.0


def test_placement_gives_up_after_max_attempts():
    class CenterRng:
        def uniform(self, low, high, size=None):
            if size == 2:
                return np.zeros(2)  # always inside the exclusion disk
            return np.zeros(size)

        def normal(self, *a, **k):  # pragma: no cover - never reached
            raise AssertionError

    config = ScenarioConfig(M=2, K=1, cell_side_m=100.0, min_distance_m=35.0)
    with pytest.raises(InfeasibleGeometryError):
        place_ues(config, CenterRng())


def test_cluster_angles_within_halfwidth():
    config = ScenarioConfig(M=4, K=8, seed=2)
    geometry = place_ues(config, np.random.default_rng(2))
    halfwidth = np.radians(config.nominal_angle_halfwidth_deg)
    spread = np.abs(geometry.cluster_angles - geometry.nominal_angles[:, None])
    assert np.all(spread <= halfwidth + 1e-12)


def test_config_invariants_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig(tau_p=200, tau=200)
    with pytest.raises(ConfigError):
        ScenarioConfig(K=0)
    with pytest.raises(ConfigError):
        ScenarioConfig(min_distance_m=130.0, cell_side_m=250.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(noise_dbm=float("nan"))


def test_local_scattering_single_antenna():
    r = local_scattering_covariance(1.7, [0.4, -0.5], np.radians(10), 1)
    assert r.shape == (1, 1)
    assert r[0, 0] == pytest.approx(1.7)


def test_local_scattering_zero_spread_rank_one():
    r = local_scattering_covariance(2.5, [0.0], 0.0, 4)
    assert np.allclose(r, 2.5 * np.ones((4, 4)))
    eigs = np.linalg.eigvalsh(r)
    assert eigs[-1] == pytest.approx(10.0)
    assert abs(eigs[:-1]).max() < 1e-12


def test_local_scattering_diagonal_exact():
    rng = np.random.default_rng(0)
    r = local_scattering_covariance(2.0, rng.uniform(-np.pi, np.pi, 6), np.radians(10), 8)
    assert np.allclose(np.diag(r).real, 2.0)
    assert np.allclose(np.diag(r).imag, 0.0)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_generated_covariances_pass_invariants(seed):
    config = ScenarioConfig(M=24, K=4, seed=seed)
    _, cov = generate_scenario(config, np.random.default_rng(seed))
    cov.validate()  # Hermitian, PSD, diagonal equal to beta


def test_generate_scenario_deterministic(small_setup=None):
    config = ScenarioConfig(M=8, K=3, seed=9)
    _, cov_a = generate_scenario(config, np.random.default_rng(9))
    _, cov_b = generate_scenario(config, np.random.default_rng(9))
    assert np.array_equal(cov_a.R, cov_b.R)


def test_sample_mean_covariance_consistency():
    config = ScenarioConfig(M=8, K=2, seed=4)
    _, cov = generate_scenario(config, np.random.default_rng(4))
    batch = sample_channels(cov, 100_000, np.random.default_rng(5))
    for k in range(config.K):
        emp = np.einsum("nm,nl->ml", batch.h[:, k, :], batch.h[:, k, :].conj()) / batch.n_samples
        rel = np.linalg.norm(emp - cov.R[k]) / np.linalg.norm(cov.R[k])
        assert rel < 0.02
