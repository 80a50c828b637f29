import numpy as np
import pytest

from rssim.errors import ConfigError
from rssim.scenario import ScenarioConfig
from rssim.validation import (
    run_validation,
    simplex_grid_max_min,
    tolerance_excess,
)


def test_tolerance_excess_combined_rule():
    # inside 2% relative: passes even with tiny SE
    assert tolerance_excess(100.0, 101.0, 0.0) <= 1.0
    # outside 2% but inside 4 SE: passes
    assert tolerance_excess(100.0, 110.0, 5.0) <= 1.0
    # outside both: fails
    assert tolerance_excess(100.0, 110.0, 1.0) > 1.0
    # both sides zero contribute nothing
    assert tolerance_excess(0.0, 0.0, 0.0) == 0.0


def test_simplex_grid_enumerates_vertices():
    # payoff maximal at the pure second vertex
    v = np.array([[0.1, 0.1], [1.0, 2.0]])
    assert simplex_grid_max_min(v, step=0.5) == pytest.approx(1.0)


def test_validation_refuses_small_sample_budget():
    with pytest.raises(ConfigError, match="mc_samples"):
        run_validation(ScenarioConfig(), 5000)


def test_validation_suite_passes_on_default_scenario():
    report = run_validation(ScenarioConfig(), 20_000)
    text = report.render()
    assert "quartic variant adjudication" in text
    assert "matched variant" in text
    failures = [c.name for c in report.checks if not c.passed]
    assert report.passed, f"failing checks: {failures}"
    # the adjudication names exactly one matching variant and reports the
    # other's deviation
    quartic = report.checks[0]
    assert "rejected variant" in quartic.detail
