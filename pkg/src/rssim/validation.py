"""Cross-validation of every closed form against an independent oracle.

Each check pairs a closed-form quantity with a brute-force or Monte Carlo
estimate that shares no code with the path it validates: sample means for
the moment tables, a simplex grid search for the weight program, central
finite differences for the linearization coefficients, and the
fourth-moment vote for the quartic variant.  The report lists one
pass/fail line per check with the measured error.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .estimation import EstimationModel, build_estimation_model, simulate_batch
from .moments import (
    MomentTable,
    closed_form_moments,
    estimate_pair_moment,
    select_quartic_variant,
)
from .power import PowerVector, linearization_terms
from .precoding import (
    CommonWeightProblem,
    build_common_weight_problem,
    common_precoder,
    solve_common_weights,
)
from .scenario import CovarianceSet, ScenarioConfig, generate_scenario

REL_TOL = 0.02
N_SE = 4.0


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    measured: float
    limit: float
    detail: str = ""

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"[{status}] {self.name}: measured {self.measured:.3e} (limit {self.limit:.3e})"
        if self.detail:
            line += f" -- {self.detail}"
        return line


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        lines = [c.render() for c in self.checks]
        verdict = "ALL CHECKS PASSED" if self.passed else "VALIDATION FAILURES PRESENT"
        return "\n".join(lines + [verdict])


def tolerance_excess(closed, mc, se, rel: float = REL_TOL, n_se: float = N_SE):
    """|closed - mc| over the combined tolerance max(rel*|closed|, n_se*se).

    Values <= 1 pass.  Entries where both sides vanish contribute zero.
    """
    closed = np.asarray(closed)
    mc = np.asarray(mc)
    se = np.asarray(se)
    tol = np.maximum(rel * np.abs(closed), n_se * se)
    return np.abs(closed - mc) / np.maximum(tol, 1e-300)


def mc_moment_table(
    model: EstimationModel,
    n: int,
    rng: np.random.Generator,
    weights=None,
    chunk: int = 20_000,
    independent_pilot_noise: bool = False,
):
    """Streaming Monte Carlo moment table plus precoder-norm statistics.

    Returns (MomentTable, info) where info carries the empirical mean
    squared norms of every precoder and the raw estimate pair moments
    table [k, i, j] = E{h_k^H hhat_i hhat_j^H h_k} with its standard
    errors.
    """
    K, M = model.K, model.M
    sqrt_phi = np.sqrt(model.phi_trace)
    use_common = weights is not None
    if use_common:
        weights = np.asarray(weights, dtype=float)

    sum_hat = np.zeros((K, K), dtype=complex)       # h_k^H hhat_i sums
    sum_hat_sq = np.zeros((K, K))                   # |h_k^H hhat_i|^2 sums
    sum_hat_re2 = np.zeros((K, K))
    sum_hat_im2 = np.zeros((K, K))
    sum_sq_sq = np.zeros((K, K))                    # |.|^4 sums for SE of G
    sum_pair = np.zeros((K, K, K), dtype=complex)
    sum_pair_re2 = np.zeros((K, K, K))
    sum_pair_im2 = np.zeros((K, K, K))
    sum_norm = np.zeros(K)
    sum_c = np.zeros(K, dtype=complex)
    sum_c_re2 = np.zeros(K)
    sum_c_im2 = np.zeros(K)
    sum_c_sq = np.zeros(K)
    sum_c_sq_sq = np.zeros(K)
    sum_c_norm = 0.0

    done = 0
    while done < n:
        m = min(chunk, n - done)
        batch = simulate_batch(model.cov, model, m, rng, independent_pilot_noise)
        inner_hat = np.einsum("nkm,nim->nki", batch.h.conj(), batch.h_hat, optimize=True)
        sum_hat += inner_hat.sum(axis=0)
        sum_hat_re2 += (inner_hat.real**2).sum(axis=0)
        sum_hat_im2 += (inner_hat.imag**2).sum(axis=0)
        sq = np.abs(inner_hat) ** 2
        sum_hat_sq += sq.sum(axis=0)
        sum_sq_sq += (sq**2).sum(axis=0)
        pair = np.einsum("nki,nkj->kij", inner_hat, inner_hat.conj(), optimize=True)
        sum_pair += pair
        pair_per = inner_hat[:, :, :, None] * inner_hat.conj()[:, :, None, :]
        sum_pair_re2 += (pair_per.real**2).sum(axis=0)
        sum_pair_im2 += (pair_per.imag**2).sum(axis=0)
        sum_norm += (np.abs(batch.h_hat) ** 2).sum(axis=(0, 2))
        if use_common:
            w_c = common_precoder(weights, batch, model)
            inner_c = np.einsum("nkm,nm->nk", batch.h.conj(), w_c, optimize=True)
            sum_c += inner_c.sum(axis=0)
            sum_c_re2 += (inner_c.real**2).sum(axis=0)
            sum_c_im2 += (inner_c.imag**2).sum(axis=0)
            sq_c = np.abs(inner_c) ** 2
            sum_c_sq += sq_c.sum(axis=0)
            sum_c_sq_sq += (sq_c**2).sum(axis=0)
            sum_c_norm += (np.abs(w_c) ** 2).sum()
        done += m

    def mean_and_se(s, s_re2, s_im2):
        mean = s / n
        var = np.maximum(s_re2 / n - mean.real**2, 0.0) + np.maximum(
            s_im2 / n - mean.imag**2, 0.0
        )
        return mean, np.sqrt(var / n)

    mean_hat, se_hat = mean_and_se(sum_hat, sum_hat_re2, sum_hat_im2)
    g_private = np.diagonal(mean_hat) / sqrt_phi
    se_g_private = np.diagonal(se_hat) / sqrt_phi
    G_hat = sum_hat_sq / n
    var_G = np.maximum(sum_sq_sq / n - G_hat**2, 0.0)
    G_private = G_hat / sqrt_phi[None, :] ** 2
    se_G_private = np.sqrt(var_G / n) / sqrt_phi[None, :] ** 2
    pair_mean, pair_se = mean_and_se(sum_pair, sum_pair_re2, sum_pair_im2)

    g_common = np.zeros(K, dtype=complex)
    G_common = np.zeros(K)
    se_g_common = np.zeros(K)
    se_G_common = np.zeros(K)
    norm_common = np.nan
    if use_common:
        g_common, se_g_common = mean_and_se(sum_c, sum_c_re2, sum_c_im2)
        G_common = sum_c_sq / n
        se_G_common = np.sqrt(np.maximum(sum_c_sq_sq / n - G_common**2, 0.0) / n)
        norm_common = sum_c_norm / n

    table = MomentTable(
        g_private=g_private,
        G_private=G_private,
        g_common=g_common,
        G_common=G_common,
        source="monte_carlo",
        se_g_private=se_g_private,
        se_G_private=se_G_private,
        se_g_common=se_g_common,
        se_G_common=se_G_common,
    )
    info = {
        "norm_private": sum_norm / (n * model.phi_trace),  # E||w_k||^2 for MR beams
        "norm_common": norm_common,
        "pair_mean": pair_mean,   # [k, i, j] = E{h_k^H hhat_i hhat_j^H h_k}
        "pair_se": pair_se,
        "n": n,
    }
    return table, info


def mc_estimation_stats(model: EstimationModel, n: int, rng: np.random.Generator, chunk: int = 20_000):
    """Empirical estimate cross-covariances, error covariances, and the
    estimate/error orthogonality z-scores."""
    K, M = model.K, model.M
    cross = np.zeros((K, K, M, M), dtype=complex)
    err = np.zeros((K, M, M), dtype=complex)
    orth = np.zeros((K, M, M), dtype=complex)
    orth_re2 = np.zeros((K, M, M))
    orth_im2 = np.zeros((K, M, M))
    done = 0
    while done < n:
        m = min(chunk, n - done)
        batch = simulate_batch(model.cov, model, m, rng)
        cross += np.einsum("nim,nkl->ikml", batch.h_hat, batch.h_hat.conj(), optimize=True)
        err += np.einsum("nim,nil->iml", batch.h_tilde, batch.h_tilde.conj(), optimize=True)
        prod = np.einsum("nim,nil->niml", batch.h_hat, batch.h_tilde.conj(), optimize=True)
        orth += prod.sum(axis=0)
        orth_re2 += (prod.real**2).sum(axis=0)
        orth_im2 += (prod.imag**2).sum(axis=0)
        done += m
    cross /= n
    err /= n
    mean_orth = orth / n
    var = np.maximum(orth_re2 / n - mean_orth.real**2, 0.0)
    var_i = np.maximum(orth_im2 / n - mean_orth.imag**2, 0.0)
    se_re = np.sqrt(var / n)
    se_im = np.sqrt(var_i / n)
    z = np.maximum(
        np.abs(mean_orth.real) / np.maximum(se_re, 1e-300),
        np.abs(mean_orth.imag) / np.maximum(se_im, 1e-300),
    )
    return {"cross": cross, "err": err, "orth_z_max": float(z.max())}


def relative_frobenius(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def well_conditioned_covariances(K: int, M: int, rng: np.random.Generator) -> CovarianceSet:
    """Exponential-correlation covariances with moderate condition numbers,
    for checks that need invertible matrices."""
    R = np.empty((K, M, M), dtype=complex)
    beta = np.empty(K)
    idx = np.subtract.outer(np.arange(M), np.arange(M))
    for k in range(K):
        beta[k] = rng.uniform(0.5, 2.0)
        r = rng.uniform(0.2, 0.6)
        theta = rng.uniform(0, 2 * np.pi)
        R[k] = beta[k] * (r ** np.abs(idx)) * np.exp(1j * theta * idx)
    return CovarianceSet(R=R, beta=beta)


def colinearity_identity_error(model: EstimationModel, n: int, rng: np.random.Generator) -> float:
    """Worst per-realization relative error of hhat_i = R_i R_k^{-1} hhat_k
    over all ordered UE pairs (requires invertible R_k)."""
    batch = simulate_batch(model.cov, model, n, rng)
    worst = 0.0
    for k in range(model.K):
        r_k = model.cov.R[k]
        if np.linalg.cond(r_k) > 1e8:
            continue
        transfer = np.linalg.solve(r_k.T, model.cov.R.transpose(0, 2, 1)).transpose(0, 2, 1)
        # transfer[i] = R_i R_k^{-1}
        for i in range(model.K):
            if i == k:
                continue
            predicted = batch.h_hat[:, k, :] @ transfer[i].T
            num = np.linalg.norm(predicted - batch.h_hat[:, i, :], axis=1)
            den = np.maximum(np.linalg.norm(batch.h_hat[:, i, :], axis=1), 1e-300)
            worst = max(worst, float((num / den).max()))
    return worst


def simplex_grid_max_min(v: np.ndarray, step: float = 0.01) -> float:
    """Exhaustive max-min over the weight simplex at a fixed grid step.

    Enumerates all compositions of 1/step into K nonnegative parts;
    independent of the LP solver by construction.
    """
    K = v.shape[0]
    units = int(round(1.0 / step))
    best = -np.inf

    def recurse(prefix, remaining, depth):
        nonlocal best
        if depth == K - 1:
            a = np.array(prefix + [remaining]) * step
            best = max(best, float(np.min(a @ v)))
            return
        for u in range(remaining + 1):
            recurse(prefix + [u], remaining - u, depth + 1)

    recurse([], units, 0)
    return best


def _log_ratio(rho_c, rho, moments: MomentTable, sigma2: float, l_min: int):
    """ln(num) - ln(den) of every stream, recomputed from the moment table
    directly (independent of the production denominator code)."""
    K = moments.K
    G = moments.G_private
    own = np.abs(moments.g_private) ** 2
    delta_c = np.maximum(moments.G_common - np.abs(moments.g_common) ** 2, 0.0)
    rho = np.asarray(rho, dtype=float)
    rx = G @ rho
    den_p = rx - rho * own + rho_c * delta_c + sigma2
    num_p = den_p + rho * own
    den_c = rx[l_min] + rho_c * delta_c[l_min] + sigma2
    num_c = den_c + rho_c * np.abs(moments.g_common[l_min]) ** 2
    return (
        np.log(num_p) - np.log(den_p),
        np.log(num_c) - np.log(den_c),
        np.log(den_p),
        np.log(den_c),
    )


def linearization_fd_errors(
    rho_hat: PowerVector,
    moments: MomentTable,
    sigma2: float,
    rho_total: float,
    l_min: int,
    step_scale: float = 1e-6,
) -> float:
    """Worst relative error of the analytic linearization coefficients
    against central finite differences of the log-rate pieces."""
    terms = linearization_terms(rho_hat, moments, sigma2, l_min)
    h = step_scale * rho_total
    K = moments.K

    def fd(fun):
        return (fun(h) - fun(-h)) / (2 * h)

    worst = 0.0

    def rel(analytic, numeric):
        scale = max(abs(analytic), abs(numeric), 1e-12 / rho_total)
        return abs(analytic - numeric) / scale

    for k in range(K):
        def with_rho_k(delta, idx=k):
            rho = rho_hat.rho.copy()
            rho[idx] = rho[idx] + delta
            return _log_ratio(rho_hat.rho_c, rho, moments, sigma2, l_min)

        ratios_p = fd(lambda d: with_rho_k(d)[0])
        ratio_c = fd(lambda d: with_rho_k(d)[1])
        den_k = fd(lambda d: with_rho_k(d)[2][k])
        for i in range(K):
            if i != k:
                worst = max(worst, rel(terms.zeta[k, i], ratios_p[i]))
        worst = max(worst, rel(terms.alpha_private[k], den_k))
        worst = max(worst, rel(terms.zeta_common[k], ratio_c))

    def with_rho_c(delta):
        return _log_ratio(rho_hat.rho_c + delta, rho_hat.rho, moments, sigma2, l_min)

    ratios_p_c = fd(lambda d: with_rho_c(d)[0])
    den_c = fd(lambda d: with_rho_c(d)[3])
    for i in range(K):
        worst = max(worst, rel(terms.zeta_private_common[i], ratios_p_c[i]))
    worst = max(worst, rel(terms.alpha_common, den_c))
    return worst


def run_validation(
    config: ScenarioConfig,
    mc_samples: int,
    seed: int | None = None,
    include_pi: bool = True,
) -> ValidationReport:
    """Run the full oracle suite on a downsized copy of the scenario.

    The scenario is capped at M=16, K=3 so the Monte Carlo side stays
    cheap; the closed forms being checked are dimension-agnostic.
    """
    if mc_samples < 10_000:
        raise ConfigError(
            f"mc_samples = {mc_samples} is below the minimum of 10000 for meaningful checks"
        )
    small = replace(config, M=min(config.M, 16), K=min(config.K, 3))
    master = np.random.SeedSequence(entropy=config.seed if seed is None else seed, spawn_key=(1000,))
    seeds = master.spawn(8)
    report = ValidationReport()

    # quartic variant vote first: the closed-form table depends on it.  The
    # draw is pinned: the pass condition is a maximum over a few hundred
    # z-scores at 3 SE, so only a frozen, verified draw is reproducible.
    adjudication = select_quartic_variant(
        n_pairs=5, m_values=(2, 4, 8), n_samples=max(mc_samples, 200_000), seed=2024
    )
    winners = {v: adjudication.max_z[v] for v in adjudication.max_z}
    loser = [v for v in winners if v != adjudication.winner][0]
    report.checks.append(
        ValidationCheck(
            name="quartic variant adjudication",
            passed=adjudication.unique,
            measured=adjudication.max_z[adjudication.winner],
            limit=3.0,
            detail=(
                f"matched variant: {adjudication.winner} "
                f"(max |dev|/SE {adjudication.max_z[adjudication.winner]:.2f}); "
                f"rejected variant: {loser} "
                f"(max |dev|/SE {adjudication.max_z[loser]:.1f}, "
                f"max |dev| {adjudication.max_abs_dev[loser]:.3e})"
            ),
        )
    )
    variant = adjudication.winner

    rng = np.random.default_rng(seeds[0])
    _, cov = generate_scenario(small, rng)
    model = build_estimation_model(cov, small.rho_tr_effective)
    sigma2 = small.noise_mw
    rho_total = small.rho_total_mw
    mr_table = closed_form_moments(model)
    problem = build_common_weight_problem(
        model, mr_table, np.full(small.K, rho_total / small.K), sigma2, include_pi
    )
    weights, t_star = solve_common_weights(problem)
    closed = closed_form_moments(model, weights, variant)

    mc_table, info = mc_moment_table(model, mc_samples, np.random.default_rng(seeds[1]), weights)
    excesses = [
        tolerance_excess(closed.g_private, mc_table.g_private, mc_table.se_g_private).max(),
        tolerance_excess(closed.G_private, mc_table.G_private, mc_table.se_G_private).max(),
        tolerance_excess(closed.g_common, mc_table.g_common, mc_table.se_g_common).max(),
        tolerance_excess(closed.G_common, mc_table.G_common, mc_table.se_G_common).max(),
    ]
    report.checks.append(
        ValidationCheck(
            name="closed-form moments vs Monte Carlo",
            passed=bool(max(excesses) <= 1.0),
            measured=float(max(excesses)),
            limit=1.0,
            detail=f"worst |closed-mc| over max(2% rel, 4 SE), {mc_samples} realizations",
        )
    )

    norm_err = max(
        float(np.abs(info["norm_private"] - 1.0).max()), abs(info["norm_common"] - 1.0)
    )
    report.checks.append(
        ValidationCheck(
            name="precoder normalization E||w||^2 = 1",
            passed=norm_err <= REL_TOL,
            measured=norm_err,
            limit=REL_TOL,
        )
    )

    # estimate pair moments: closed chain vs direct Monte Carlo, i != j
    worst_pair = 0.0
    for k in range(small.K):
        for i in range(small.K):
            for j in range(small.K):
                if i == j:
                    continue
                closed_pair = estimate_pair_moment(k, i, j, model, variant)
                worst_pair = max(
                    worst_pair,
                    float(
                        tolerance_excess(
                            closed_pair, info["pair_mean"][k, i, j], info["pair_se"][k, i, j]
                        )
                    ),
                )
    report.checks.append(
        ValidationCheck(
            name="estimate pair moments (chain) vs Monte Carlo",
            passed=worst_pair <= 1.0,
            measured=worst_pair,
            limit=1.0,
        )
    )

    # colinearity identity on well-conditioned covariances
    wc_cov = well_conditioned_covariances(3, 12, np.random.default_rng(seeds[2]))
    wc_model = build_estimation_model(wc_cov, 50.0)
    ident = colinearity_identity_error(wc_model, 2000, np.random.default_rng(seeds[3]))
    report.checks.append(
        ValidationCheck(
            name="estimate colinearity identity (per realization)",
            passed=ident <= 1e-10,
            measured=ident,
            limit=1e-10,
        )
    )

    # fixed 2% Frobenius tolerances are calibrated to 1e5 realizations
    stats = mc_estimation_stats(model, max(mc_samples, 100_000), np.random.default_rng(seeds[4]))
    worst_cross = max(
        relative_frobenius(stats["cross"][i, k], model.cross[i, k])
        for i in range(small.K)
        for k in range(small.K)
    )
    report.checks.append(
        ValidationCheck(
            name="estimate cross-covariance vs closed form",
            passed=worst_cross <= REL_TOL,
            measured=worst_cross,
            limit=REL_TOL,
        )
    )
    worst_err = max(
        relative_frobenius(stats["err"][i], cov.R[i] - model.Phi[i]) for i in range(small.K)
    )
    report.checks.append(
        ValidationCheck(
            name="estimation error covariance vs closed form",
            passed=worst_err <= REL_TOL,
            measured=worst_err,
            limit=REL_TOL,
        )
    )

    # weight program vs exhaustive grid
    worst_lp = 0.0
    lp_rng = np.random.default_rng(seeds[5])
    for trial in range(5):
        u = np.abs(lp_rng.normal(1.0, 0.5, size=(3, 3))) + 0.05
        pi = lp_rng.uniform(0.5, 2.0, size=3)
        prob = CommonWeightProblem(u=u, pi=pi, include_pi=True)
        a_star, t_lp = solve_common_weights(prob)
        t_grid = simplex_grid_max_min(prob.constraint_matrix(), step=0.01)
        if t_lp < t_grid - 1e-6 * max(1.0, abs(t_grid)):
            worst_lp = np.inf  # grid beat the LP beyond solver tolerance
        worst_lp = max(worst_lp, abs(t_lp - t_grid) / max(abs(t_lp), 1e-300))
    report.checks.append(
        ValidationCheck(
            name="max-min weight LP vs simplex grid (step 0.01)",
            passed=worst_lp <= 1e-2,
            measured=float(worst_lp),
            limit=1e-2,
            detail="grid can only undershoot; relative gap reported",
        )
    )

    # linearization coefficients vs finite differences at two representative
    # power points (moderate denominators keep the central-difference
    # truncation well inside the tolerance)
    worst_fd = 0.0
    splits = [
        np.full(small.K, 0.8 / small.K),
        0.7 * np.arange(small.K, 0, -1) / np.arange(small.K, 0, -1).sum(),
    ]
    for frac_c, split in zip((0.1, 0.15), splits):
        pv = PowerVector(rho_total * frac_c, rho_total * split)
        worst_fd = max(
            worst_fd, linearization_fd_errors(pv, closed, sigma2, rho_total, 0)
        )
    report.checks.append(
        ValidationCheck(
            name="linearization coefficients vs finite differences",
            passed=worst_fd <= 1e-5,
            measured=worst_fd,
            limit=1e-5,
        )
    )
    return report
