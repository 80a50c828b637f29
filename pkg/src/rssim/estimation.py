"""Correlated Rayleigh channel sampling and shared-pilot MMSE estimation.

Every UE transmits the same pilot, so the BS sees one contaminated
observation per coherence block and all K estimates are linear functions
of it.  That makes the estimates mutually correlated: the cross-covariance
of estimates i and k is R_i Q^{-1} R_k, with Q the covariance of the
observation.  The model object precomputes Q, its Cholesky factor, the
estimate covariances Phi_i, all pairwise cross-covariances, and the trace
tables that the closed-form moment engine consumes.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .linalg import sampling_factor, standard_complex_gaussian
from .scenario import CovarianceSet


@dataclass
class EstimationModel:
    """Deterministic second-order statistics of the shared-pilot estimator.

    ``rho_tr`` is the pilot power in units of the (unit-variance) pilot
    noise, so the observation covariance is Q = sum_k R_k + (1/rho_tr) I.
    """

    cov: CovarianceSet
    rho_tr: float
    Q: np.ndarray                  # (M, M)
    Q_factor: tuple                # scipy cho_factor of Q
    Phi: np.ndarray                # (K, M, M), Phi_i = R_i Q^{-1} R_i
    cross: np.ndarray              # (K, K, M, M), C[i, k] = R_i Q^{-1} R_k
    cross_trace: np.ndarray        # (K, K) complex, tr(C[i, k])
    phi_trace: np.ndarray          # (K,) real, tr(Phi_i)
    r_phi_trace: np.ndarray        # (K, K) real, [k, i] = tr(R_k Phi_i)
    _triple_trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.cov.K

    @property
    def M(self) -> int:
        return self.cov.M

    def apply_q_inverse(self, b: np.ndarray) -> np.ndarray:
        """Q^{-1} b via triangular solves against the cached factor."""
        return scipy.linalg.cho_solve(self.Q_factor, b)

    @property
    def triple_trace(self) -> np.ndarray:
        """(K, K, K) table [i, j, k] = tr(R_i Q^{-1} R_j R_k).

        Needed only by the common-precoder moments; built lazily and cached.
        """
        if self._triple_trace is None:
            self._triple_trace = np.einsum(
                "ijmn,knm->ijk", self.cross, self.cov.R, optimize=True
            )
        return self._triple_trace


@dataclass
class ChannelBatch:
    """A batch of channel realizations and (optionally) their estimates.

    h = h_hat + h_tilde holds exactly per realization once estimates are
    filled in.  With a shared pilot there is a single observation per
    realization, so by default one pilot-noise vector is shared by all K
    estimates; ``pilot_noise`` has shape (n, M) then, or (n, K, M) when
    independent per-UE noise is requested.
    """

    n_samples: int
    h: np.ndarray                     # (n, K, M)
    h_hat: np.ndarray | None = None   # (n, K, M)
    h_tilde: np.ndarray | None = None
    pilot_noise: np.ndarray | None = None


def build_estimation_model(cov: CovarianceSet, rho_tr: float) -> EstimationModel:
    """Assemble Q, its factorization, and all estimate (cross-)covariances."""
    if rho_tr <= 0:
        raise ValueError("rho_tr must be positive")
    K, M = cov.K, cov.M
    Q = cov.R.sum(axis=0) + np.eye(M) / rho_tr
    try:
        q_factor = scipy.linalg.cho_factor(Q)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - ridge keeps Q PD
        raise NumericalError(f"observation covariance is not positive definite: {exc}") from exc
    # X[k] = Q^{-1} R_k, shared by Phi and all cross terms
    X = scipy.linalg.cho_solve(q_factor, cov.R.transpose(1, 0, 2).reshape(M, K * M))
    X = X.reshape(M, K, M).transpose(1, 0, 2)
    cross = np.empty((K, K, M, M), dtype=complex)
    for i in range(K):
        for k in range(K):
            cross[i, k] = cov.R[i] @ X[k]
    Phi = np.stack([cross[i, i] for i in range(K)])
    cross_trace = np.einsum("ikmm->ik", cross)
    phi_trace = np.real(np.einsum("imm->i", Phi))
    r_phi_trace = np.real(np.einsum("kmn,inm->ki", cov.R, Phi))
    return EstimationModel(
        cov=cov,
        rho_tr=rho_tr,
        Q=Q,
        Q_factor=q_factor,
        Phi=Phi,
        cross=cross,
        cross_trace=cross_trace,
        phi_trace=phi_trace,
        r_phi_trace=r_phi_trace,
    )


def sample_channels(cov: CovarianceSet, n: int, rng: np.random.Generator) -> ChannelBatch:
    """Draw n correlated Rayleigh realizations h_i ~ CN(0, R_i) per UE."""
    if n < 1:
        raise ValueError("need at least one realization")
    K, M = cov.K, cov.M
    h = np.empty((n, K, M), dtype=complex)
    for k in range(K):
        factor = cov._factors.get(k)
        if factor is None:
            factor = sampling_factor(cov.R[k])
            cov._factors[k] = factor
        h[:, k, :] = standard_complex_gaussian(rng, (n, M)) @ factor.T
    return ChannelBatch(n_samples=n, h=h)


def mmse_estimate(
    batch: ChannelBatch,
    model: EstimationModel,
    rho_tr: float,
    rng: np.random.Generator,
    independent_pilot_noise: bool = False,
) -> ChannelBatch:
    """Fill in the shared-pilot MMSE estimates of a sampled batch.

    Per realization the BS observes y = sum_k h_k + n / sqrt(rho_tr) and
    forms h_hat_i = R_i Q^{-1} y for every UE.  ``independent_pilot_noise``
    draws a fresh noise vector per UE instead (the literal per-UE-noise
    reading); the default shares one vector, which is what a single
    physical observation implies.
    """
    if batch.h is None:
        raise ValueError("batch has no truth channels")
    n, K, M = batch.h.shape
    contaminated = batch.h.sum(axis=1)
    if independent_pilot_noise:
        noise = standard_complex_gaussian(rng, (n, K, M))
    else:
        noise = standard_complex_gaussian(rng, (n, M))
    h_hat = np.empty_like(batch.h)
    scale = 1.0 / np.sqrt(rho_tr)
    if independent_pilot_noise:
        for i in range(K):
            y = contaminated + scale * noise[:, i, :]
            h_hat[:, i, :] = (model.cov.R[i] @ model.apply_q_inverse(y.T)).T
    else:
        z = model.apply_q_inverse((contaminated + scale * noise).T)  # (M, n)
        for i in range(K):
            h_hat[:, i, :] = (model.cov.R[i] @ z).T
    batch.h_hat = h_hat
    batch.h_tilde = batch.h - h_hat
    batch.pilot_noise = noise
    return batch


def simulate_batch(
    cov: CovarianceSet,
    model: EstimationModel,
    n: int,
    rng: np.random.Generator,
    independent_pilot_noise: bool = False,
) -> ChannelBatch:
    """Sample truth channels and estimate them in one call."""
    batch = sample_channels(cov, n, rng)
    return mmse_estimate(batch, model, model.rho_tr, rng, independent_pilot_noise)
