"""Link-level simulator for a single-cell TDD massive MIMO downlink where
every UE shares one uplink pilot and the transmitter superposes a common
rate-split stream on per-UE private streams.

The package is organized around a deterministic pipeline: scenario
generation (geometry, fading, spatial covariances), shared-pilot MMSE
estimation statistics, closed-form moment tables validated against Monte
Carlo oracles, precoder design (MR private beams, max-min weighted common
beam), hardening-bound spectral efficiencies, and alternating
water-filling power allocation.
"""

from .config import RunSettings, SweepSpec, load_config, parse_config
from .errors import (
    ConfigError,
    InfeasibleGeometryError,
    InvalidWeightsError,
    NumericalError,
    RssimError,
)
from .estimation import (
    ChannelBatch,
    EstimationModel,
    build_estimation_model,
    mmse_estimate,
    sample_channels,
    simulate_batch,
)
from .link import PowerVector, SEReport, gamma_common, gamma_private, se_report
from .moments import (
    MomentTable,
    QuarticMomentSpec,
    closed_form_moments,
    common_gain,
    common_second_moment,
    default_quartic_variant,
    mc_moments,
    mr_cross_power,
    mr_gain,
    quartic_moment,
    select_quartic_variant,
)
from .power import (
    IlaWfOptions,
    LinearizationTerms,
    PowerAllocation,
    ila_wf,
    linearization_terms,
    stationarity_residuals,
    waterfill,
)
from .precoding import (
    CommonWeightProblem,
    PrecoderSet,
    build_common_weight_problem,
    build_precoders,
    common_precoder,
    mr_precoder,
    solve_common_weights,
)
from .runner import ResultRow, evaluate_point, run_point, run_sweep
from .scenario import (
    CovarianceSet,
    ScenarioConfig,
    UEGeometry,
    generate_covariances,
    generate_scenario,
    large_scale_gain_db,
    local_scattering_covariance,
    place_ues,
)
from .validation import ValidationReport, run_validation

__version__ = "0.1.0"
