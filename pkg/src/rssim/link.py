"""Hardening-bound SINRs and spectral efficiencies.

Receivers are modeled as knowing only the mean effective channels; every
deviation from the mean acts as noise.  The common stream is decoded first
(treating all private streams as interference) and its rate is set by the
bottleneck UE; private streams see the residual common-channel variance
after cancellation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .moments import MomentTable
from .scenario import ScenarioConfig


@dataclass
class PowerVector:
    """Common-stream power and per-UE private powers, in linear mW."""

    rho_c: float
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho_c < 0 or np.any(self.rho < 0):
            raise ValueError("powers must be nonnegative")

    @property
    def total(self) -> float:
        return float(self.rho_c + self.rho.sum())

    def check_budget(self, rho_total: float, tol: float = 1e-9):
        if self.total > rho_total * (1.0 + tol):
            raise ValueError(
                f"power budget violated: {self.total:.6e} > {rho_total:.6e} mW"
            )


@dataclass
class SEReport:
    """Per-UE SINRs and spectral efficiencies plus the totals."""

    gamma_private: np.ndarray  # (K,)
    gamma_common: np.ndarray   # (K,)
    l_min: int
    se_private: np.ndarray     # (K,) bits/s/Hz
    se_common: float
    sum_se: float
    prelog: float

    @property
    def se_private_total(self) -> float:
        return float(self.se_private.sum())


def common_channel_variance(moments: MomentTable) -> np.ndarray:
    """Variance of each UE's effective common channel (never negative)."""
    return np.maximum(moments.G_common - np.abs(moments.g_common) ** 2, 0.0)


def stream_denominators(powers: PowerVector, moments: MomentTable, sigma2: float):
    """Interference-plus-noise terms of every stream at a power point.

    Returns (den_private, num_private, den_common, num_common), each a
    length-K vector.  num = den + own-signal term, so the SINR of stream x
    is num_x / den_x - 1.
    """
    own = np.abs(moments.g_private) ** 2
    delta_c = common_channel_variance(moments)
    rx_power = moments.G_private @ powers.rho
    den_private = rx_power - powers.rho * own + powers.rho_c * delta_c + sigma2
    num_private = den_private + powers.rho * own
    den_common = rx_power + powers.rho_c * delta_c + sigma2
    num_common = den_common + powers.rho_c * np.abs(moments.g_common) ** 2
    return den_private, num_private, den_common, num_common


def _guard_denominator(value: float, scale: float, sigma2: float, context: str) -> float:
    if value > 0:
        return value
    if value > -1e-12 * max(scale, sigma2):
        # pure cancellation noise; pin to a positive sliver of the noise floor
        return 1e-12 * sigma2
    raise NumericalError(
        f"{context}: denominator {value:.3e} violates the variance "
        "nonnegativity invariant of the moment table"
    )


def gamma_private(k: int, powers: PowerVector, moments: MomentTable, sigma2: float) -> float:
    """Private-stream SINR of UE k after the common stream is cancelled."""
    own = np.abs(moments.g_private[k]) ** 2
    delta_c = common_channel_variance(moments)[k]
    rx = float(moments.G_private[k] @ powers.rho)
    den = rx - powers.rho[k] * own + powers.rho_c * delta_c + sigma2
    den = _guard_denominator(den, rx + powers.rho_c * delta_c + sigma2, sigma2, f"gamma_private[{k}]")
    return float(powers.rho[k] * own / den)


def gamma_common(k: int, powers: PowerVector, moments: MomentTable, sigma2: float) -> float:
    """Common-stream SINR at UE k, private streams treated as noise."""
    delta_c = common_channel_variance(moments)[k]
    rx = float(moments.G_private[k] @ powers.rho)
    den = rx + powers.rho_c * delta_c + sigma2
    den = _guard_denominator(den, rx + powers.rho_c * delta_c + sigma2, sigma2, f"gamma_common[{k}]")
    return float(powers.rho_c * np.abs(moments.g_common[k]) ** 2 / den)


def se_report(powers: PowerVector, moments: MomentTable, config: ScenarioConfig) -> SEReport:
    """Full spectral-efficiency report at a power point.

    The common rate is set by the UE with the smallest common SINR
    (lowest index on ties); the prelog is the downlink fraction of the
    coherence block.
    """
    sigma2 = config.noise_mw
    K = moments.K
    g_p = np.array([gamma_private(k, powers, moments, sigma2) for k in range(K)])
    g_c = np.array([gamma_common(k, powers, moments, sigma2) for k in range(K)])
    l_min = int(np.argmin(g_c))
    prelog = config.prelog
    se_p = prelog * np.log2(1.0 + g_p)
    se_c = float(prelog * np.log2(1.0 + g_c[l_min]))
    return SEReport(
        gamma_private=g_p,
        gamma_common=g_c,
        l_min=l_min,
        se_private=se_p,
        se_common=se_c,
        sum_se=se_c + float(se_p.sum()),
        prelog=prelog,
    )
