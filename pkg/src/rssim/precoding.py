"""Private MR precoders and the max-min weighted common precoder.

The common precoder is a weighted sum of all channel estimates.  Its
weights maximize the smallest (optionally interference-weighted) mean
effective channel across UEs, which after squaring reduces to a linear
program over the weight simplex.  The normalization of both precoder
families is deterministic: the expected squared norm, not the
per-realization norm, equals one.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidWeightsError, NumericalError
from .estimation import ChannelBatch, EstimationModel
from .moments import MomentTable

# imaginary leakage allowed in the nominally-real weight-problem entries
U_REAL_TOL = 1e-10


@dataclass
class PrecoderSet:
    """Per-realization precoders plus the deterministic normalizers."""

    w_private: np.ndarray          # (n, K, M)
    w_common: np.ndarray | None    # (n, M)
    weights: np.ndarray | None     # (K,)
    alpha: float | None            # common normalization scalar


@dataclass
class CommonWeightProblem:
    """Data of the max-min weight program.

    ``u[i, k]`` is the coupling of estimate i to UE k's mean effective
    channel; ``pi`` holds the inverse interference-plus-noise weights.
    """

    u: np.ndarray      # (K, K) real
    pi: np.ndarray     # (K,) positive
    include_pi: bool = True

    @property
    def K(self) -> int:
        return self.u.shape[0]

    def constraint_matrix(self) -> np.ndarray:
        """v[i, k]: coefficient of weight i in UE k's constraint."""
        if self.include_pi:
            return self.u * np.sqrt(self.pi)[None, :]
        return self.u.copy()


def mr_precoder(batch: ChannelBatch, model: EstimationModel) -> np.ndarray:
    """MR beams: each UE's estimate scaled by its deterministic RMS norm."""
    if batch.h_hat is None:
        raise ValueError("batch has no estimates; run mmse_estimate first")
    if np.any(model.phi_trace <= 0):
        bad = int(np.argmin(model.phi_trace))
        raise InvalidWeightsError(f"UE {bad} has tr(Phi) = 0; MR beam undefined")
    return batch.h_hat / np.sqrt(model.phi_trace)[None, :, None]


def build_common_weight_problem(
    model: EstimationModel,
    moments: MomentTable,
    rho_private: np.ndarray,
    sigma2: float,
    include_pi: bool = True,
) -> CommonWeightProblem:
    """Assemble the weight program at the given private power point.

    The interference weights are evaluated from the closed-form MR moment
    table, before any power optimization.
    """
    rho_private = np.asarray(rho_private, dtype=float)
    interference = moments.G_private @ rho_private + sigma2
    if np.any(interference <= 0):
        raise NumericalError("non-positive interference-plus-noise in weight program")
    pi = 1.0 / interference
    u_complex = model.cross_trace
    scale = np.abs(u_complex).max()
    if scale > 0 and np.abs(u_complex.imag).max() > U_REAL_TOL * scale:
        raise NumericalError(
            "weight-problem couplings have a non-negligible imaginary part "
            f"({np.abs(u_complex.imag).max():.3e}); covariances are not array-symmetric"
        )
    return CommonWeightProblem(u=u_complex.real.copy(), pi=pi, include_pi=include_pi)


def solve_common_weights(problem: CommonWeightProblem):
    """Maximize the smallest weighted mean common-channel gain over the
    weight simplex.

    Solved as the epigraph linear program: max t subject to
    sum_i a_i v[i, k] >= t for every UE k, a >= 0, sum a = 1.  Ties are
    broken deterministically: the uniform vector wins when it is optimal,
    otherwise the lexicographically smallest optimal vertex is returned.
    Returns (weights, achieved min).
    """
    K = problem.K
    v = problem.constraint_matrix()
    if np.any(np.all(v <= 0, axis=0)):
        bad = int(np.where(np.all(v <= 0, axis=0))[0][0])
        raise InvalidWeightsError(
            f"UE {bad} cannot be served with positive common gain (all couplings <= 0)"
        )
    if K == 1:
        return np.array([1.0]), float(v[0, 0])

    # variables [a_0 .. a_{K-1}, t]; maximize t
    c = np.zeros(K + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-v.T, np.ones((K, 1))])   # t - v[:, k] @ a <= 0
    b_ub = np.zeros(K)
    a_eq = np.zeros((1, K + 1))
    a_eq[0, :K] = 1.0
    bounds = [(0.0, None)] * K + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise NumericalError(f"weight LP failed: {res.message}")
    t_star = float(res.x[-1])

    uniform = np.full(K, 1.0 / K)
    t_uniform = float(np.min(uniform @ v))
    slack = 1e-12 * max(1.0, abs(t_star))
    if t_uniform >= t_star - slack:
        return uniform, t_uniform

    try:
        weights = _lexicographic_refinement(v, t_star - 1e-9 * max(1.0, abs(t_star)))
    except NumericalError:
        # accumulated stage rounding can starve the last free weights at
        # larger K; the unrefined vertex is already optimal and deterministic
        weights = np.clip(res.x[:K], 0.0, None)
        weights = weights / weights.sum()
    return weights, float(np.min(weights @ v))


def _lexicographic_refinement(v: np.ndarray, t_floor: float) -> np.ndarray:
    """Among weight vectors achieving at least t_floor, pick the
    lexicographically smallest one with a chain of small LPs."""
    K = v.shape[0]
    fixed: list[float] = []
    for j in range(K):
        n_free = K - j
        if n_free == 1:
            fixed.append(max(1.0 - sum(fixed), 0.0))
            break
        c = np.zeros(n_free)
        c[0] = 1.0  # minimize the first still-free weight
        a_ub = -v[j:, :].T
        b_ub = -t_floor + (v[:j, :].T @ np.array(fixed) if j else np.zeros(K))
        a_eq = np.ones((1, n_free))
        b_eq = [1.0 - sum(fixed)]
        res = linprog(
            c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
            bounds=[(0.0, None)] * n_free, method="highs",
        )
        if not res.success:
            raise NumericalError(f"weight tie-break LP failed at position {j}: {res.message}")
        fixed.append(max(float(res.x[0]), 0.0))
    return np.array(fixed)


def common_precoder(weights, batch: ChannelBatch, model: EstimationModel) -> np.ndarray:
    """Per-realization common beams with the deterministic normalizer."""
    if batch.h_hat is None:
        raise ValueError("batch has no estimates; run mmse_estimate first")
    weights = np.asarray(weights, dtype=float)
    norm2 = complex(weights @ model.cross_trace @ weights).real
    if norm2 <= 0:
        raise InvalidWeightsError(f"non-positive common normalization {norm2:.3e}")
    return np.einsum("i,nim->nm", weights, batch.h_hat) / np.sqrt(norm2)


def build_precoders(batch: ChannelBatch, model: EstimationModel, weights=None) -> PrecoderSet:
    """MR beams for every UE plus, optionally, the weighted common beam."""
    w_private = mr_precoder(batch, model)
    w_common = None
    alpha = None
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        norm2 = complex(weights @ model.cross_trace @ weights).real
        if norm2 <= 0:
            raise InvalidWeightsError(f"non-positive common normalization {norm2:.3e}")
        alpha = 1.0 / np.sqrt(norm2)
        w_common = common_precoder(weights, batch, model)
    return PrecoderSet(w_private=w_private, w_common=w_common, weights=weights, alpha=alpha)
