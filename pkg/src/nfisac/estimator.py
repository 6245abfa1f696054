"""Joint range-angle maximum-likelihood estimation from one observation.

Pipeline: a matched-filter bank collapses the symbol axis once per
observation; a two-stage grid search (delay compensation per range row,
then an O(n_a) correlation per angle cell) ranks candidate basins of the
negative-log-likelihood surface; Levenberg-Marquardt iterations on the
analytic score pair (F_d, F_theta) polish the best basins; the lowest
final cost wins.

Cost factorization, for candidate (d, theta) with xi_k the delay- and
pilot-compensated correlation at element k:

    L(d, theta) = s |beta|^2 sum_k 1/r_k^2  -  2 Re{ beta sum_k conj(xi_k) },

with s = N M P_t lambda^2 / (16 pi^2 n_a) shared with the Fisher module.
When the angle grid size is a multiple of the element count, every
element's angular response is a circular shift of one per-row template,
and the angle stage collapses to FFT-sized circular correlations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crlb import beam_coupling, fim, gamma_coefficients, mean_product_scale
from .geometry import (
    SPEED_OF_LIGHT,
    PolarPosition,
    UcaGeometry,
    element_gains,
    element_ranges,
    sensitivities,
    steering_vector,
)
from .signal import Observation, OfdmConfig, delay_phases, pilot_doppler_grid

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MatchedFilterBank:
    """Candidate-independent aggregates Z[k, m] = sum_n conj(x e^{j2pi nu0 n To}) r[n,m,k].

    Built in one pass over all N*M*n_a samples; every later candidate
    evaluation touches only O(n_a * M) entries of this bank.
    """

    aggregates: np.ndarray


@dataclass(frozen=True)
class GridSpec:
    """Coarse search grid: range nodes, uniform angles, basin budget.

    Range nodes are uniform over [d_min_m, d_max_m] unless an explicit
    ``d_nodes`` array is supplied (the harness builds curvature-adaptive
    nodes: the range correlation narrows like 2 lambda d^2 / R^2 in the
    deep near field, far below the delay lobe, so uniform spacing either
    misses close-in peaks or wastes rows far out).
    """

    d_min_m: float
    d_max_m: float
    n_d: int = 256
    n_theta: int = 4096
    n_basins: int = 15
    d_nodes: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.d_min_m <= 0.0 or self.d_min_m >= self.d_max_m:
            raise ValueError(
                f"need 0 < d_min_m < d_max_m, got ({self.d_min_m}, {self.d_max_m})"
            )
        if self.d_nodes is not None:
            object.__setattr__(self, "n_d", len(self.d_nodes))
        if self.n_d < 1 or self.n_theta < 1:
            raise ValueError("grid sizes must be positive")
        if self.n_basins < 1 or self.n_basins > self.n_d * self.n_theta:
            raise ValueError(
                f"n_basins={self.n_basins} must lie in [1, n_d * n_theta]"
            )

    def d_values(self) -> np.ndarray:
        if self.d_nodes is not None:
            return np.asarray(self.d_nodes, dtype=float)
        return np.linspace(self.d_min_m, self.d_max_m, self.n_d)

    def theta_values(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_theta) / self.n_theta


@dataclass(frozen=True)
class GridBasin:
    """One grid-local minimum of the cost surface."""

    position: PolarPosition
    cost: float
    d_index: int
    theta_index: int


@dataclass(frozen=True)
class LmSettings:
    """Levenberg-Marquardt refinement knobs.

    The Jacobian of the score pair is taken by central finite differences
    (fd_step_*); damping follows the classic schedule (x10 on reject,
    /10 on accept). Convergence requires both a small scaled score norm
    and a parameter step below (step_tol_d_m, step_tol_theta_rad).
    ``d_max_m`` bounds iterates; estimates never leave
    (R(1 + 1e-6), d_max_m).
    """

    max_iters: int = 100
    lambda_init: float = 1e-3
    lambda_factor: float = 10.0
    tol_score: float = 1e-10
    step_tol_d_m: float = 1e-7
    step_tol_theta_rad: float = 1e-9
    fd_step_d_m: float = 1e-4
    fd_step_theta_rad: float = 1e-5
    d_max_m: float = 600.0


@dataclass(frozen=True)
class MlEstimate:
    """Winning refined estimate with its final cost and solver status."""

    d_hat_m: float
    theta_hat_rad: float
    cost: float
    converged: bool
    iterations: int
    basin_index: int


def wrap_angle(theta: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    return float(np.mod(theta, TWO_PI))


def matched_filter_bank(obs: Observation) -> MatchedFilterBank:
    """Collapse the symbol axis: Z[k, m] = sum_n conj(C'[n, m]) r[n, m, k]."""
    known = pilot_doppler_grid(obs.config, obs.pilots)
    aggregates = np.einsum("nm,nmk->km", np.conj(known), obs.samples)
    return MatchedFilterBank(aggregates)


def _delay_collapsed(bank: MatchedFilterBank, config: OfdmConfig, d_m: float) -> np.ndarray:
    """Per-element sum_m e^{+j 2 pi m df (Tcp + tau)} Z[k, m] at delay tau = 2d/c."""
    tau0 = 2.0 * d_m / SPEED_OF_LIGHT
    comp = np.conj(delay_phases(config, tau0))
    return bank.aggregates @ comp


def xi(
    candidate: PolarPosition,
    bank: MatchedFilterBank,
    geom: UcaGeometry,
    config: OfdmConfig,
) -> np.ndarray:
    """Matched-filter outputs xi_k = g_k conj(a_k) * delay-compensated bank.

    For a noiseless observation evaluated at its own truth this equals
    s * beta / r_k^2 with s = N M P_t lambda^2 / (16 pi^2 n_a).
    """
    if candidate.d_m <= geom.radius_m:
        raise ValueError(
            f"candidate distance {candidate.d_m} must exceed the radius {geom.radius_m}"
        )
    collapsed = _delay_collapsed(bank, config, candidate.d_m)
    ranges = element_ranges(geom, candidate)
    gains = element_gains(ranges, geom.wavelength_m)
    a = steering_vector(geom, candidate)
    return gains * np.conj(a) * collapsed


def cost(
    candidate: PolarPosition,
    obs: Observation,
    geom: UcaGeometry,
    bank: MatchedFilterBank,
) -> float:
    """Negative-log-likelihood surface L = mu^H mu - 2 Re{r^H mu}.

    Equals ||r - mu||^2 - ||r||^2 for the candidate's model mean; the
    deterministic term needs O(n_a) work, the data term O(n_a * M).
    """
    config = obs.config
    ranges = element_ranges(geom, candidate)
    a = steering_vector(geom, candidate)
    beta = a @ obs.beamformer
    scale = mean_product_scale(config, geom)
    deterministic = scale * float(np.abs(beta) ** 2) * float(np.sum(1.0 / ranges**2))
    xis = xi(candidate, bank, geom, config)
    data = 2.0 * float(np.real(beta * np.sum(np.conj(xis))))
    return deterministic - data


def scores(
    candidate: PolarPosition,
    obs: Observation,
    geom: UcaGeometry,
    bank: MatchedFilterBank,
    config: OfdmConfig,
) -> tuple[float, float]:
    """Analytic score pair (F_d, F_theta) = Re{(r - mu)^H d mu / d eta}.

    Built from the weighted residuals rho_k = xi_k - s beta / r_k^2 and
    the shared derivative factors gamma_k; both vanish together at a
    noiseless observation's truth.
    """
    sens = sensitivities(geom, candidate)
    coupling = beam_coupling(geom, candidate, obs.beamformer)
    gammas = gamma_coefficients(sens, coupling, geom.wavelength_m)
    scale = mean_product_scale(config, geom)
    rho = xi(candidate, bank, geom, config) - scale * coupling.beta / sens.ranges_m**2
    f_d = float(np.real(np.sum(np.conj(gammas.gamma_d) * rho)))
    f_theta = float(np.real(np.sum(np.conj(gammas.gamma_theta) * rho)))
    return f_d, f_theta


def _cost_rows_direct(
    obs: Observation,
    geom: UcaGeometry,
    bank: MatchedFilterBank,
    d_values: np.ndarray,
    theta_values: np.ndarray,
) -> np.ndarray:
    """Reference evaluation of the cost over the full grid, vectorized per row."""
    config = obs.config
    scale = mean_product_scale(config, geom)
    psi = TWO_PI * np.arange(geom.n_a) / geom.n_a
    phi = theta_values[:, None] - psi[None, :]
    cosphi = np.cos(phi)
    out = np.empty((d_values.size, theta_values.size))
    for i, d in enumerate(d_values):
        collapsed = _delay_collapsed(bank, config, d)
        r = np.sqrt(d * d + geom.radius_m**2 - 2.0 * d * geom.radius_m * cosphi)
        a = np.exp(1j * TWO_PI * (d - r) / geom.wavelength_m) / np.sqrt(geom.n_a)
        g = geom.wavelength_m / (4.0 * np.pi * r)
        beta = a @ obs.beamformer
        deterministic = scale * np.abs(beta) ** 2 * np.sum(1.0 / r**2, axis=1)
        # sum_k conj(xi_k) = sum_k g a conj(collapsed_k)
        data = 2.0 * np.real(beta * ((g * a) @ np.conj(collapsed)))
        out[i] = deterministic - data
    return out


def _cost_rows_fft(
    obs: Observation,
    geom: UcaGeometry,
    bank: MatchedFilterBank,
    d_values: np.ndarray,
    theta_values: np.ndarray,
    chunk: int = 32,
) -> np.ndarray:
    """FFT evaluation of the same grid when n_theta is a multiple of n_a.

    On the aligned lattice theta_j = 2 pi j / n_theta the relative angle
    of element k is the grid offset j - k * (n_theta / n_a), so every
    k-sum over elements is a circular correlation of one per-row angular
    template with a sparse weight comb; those correlations are computed
    with length-n_theta FFTs, batched over blocks of range rows.
    """
    config = obs.config
    n_theta = theta_values.size
    n_a = geom.n_a
    q = n_theta // n_a
    scale = mean_product_scale(config, geom)
    u = TWO_PI * np.arange(n_theta) / n_theta
    cosu = np.cos(u)
    # Sparse combs: weights at positions q*k reduce to length-n_a DFTs tiled q times.
    comb_f = np.tile(np.fft.fft(obs.beamformer), q)
    m = np.arange(config.m_subcarriers)
    out = np.empty((d_values.size, n_theta))
    for start in range(0, d_values.size, chunk):
        d = d_values[start : start + chunk][:, None]
        tau = 2.0 * d / SPEED_OF_LIGHT
        delay_comp = np.exp(
            1j * TWO_PI * m[None, :] * config.delta_f_hz * (config.t_cp_s + tau)
        )
        collapsed = delay_comp @ bank.aggregates.T  # rows x n_a
        rho_u = np.sqrt(d * d + geom.radius_m**2 - 2.0 * d * geom.radius_m * cosu[None, :])
        a_u = np.exp(1j * TWO_PI * (d - rho_u) / geom.wavelength_m) / np.sqrt(n_a)
        ga_u = (geom.wavelength_m / (4.0 * np.pi * rho_u)) * a_u
        beta = np.fft.ifft(np.fft.fft(a_u, axis=1) * comb_f[None, :], axis=1)
        comb_y = np.tile(np.fft.fft(np.conj(collapsed), axis=1), (1, q))
        data_sum = np.fft.ifft(np.fft.fft(ga_u, axis=1) * comb_y, axis=1)
        # sum_k 1/r_k^2 is q-periodic across the angle grid: sum it on one
        # period and tile.
        inv2 = 1.0 / rho_u**2
        period = inv2.reshape(-1, n_a, q).sum(axis=1)
        inv_sum = np.tile(period, (1, n_a))
        out[start : start + chunk] = scale * np.abs(beta) ** 2 * inv_sum - 2.0 * np.real(
            beta * data_sum
        )
    return out


def _local_minima(costs: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Boolean mask of 8-neighborhood local minima; angles wrap, ranges clip.

    Separable: c is a local minimum iff c equals the min over its 3x3
    neighborhood (self included), evaluated as a theta-wise 3-min pass
    followed by a range-wise 3-min pass, block by block to keep
    temporaries small.
    """
    n_d, _ = costs.shape
    is_min = np.empty(costs.shape, dtype=bool)
    row_min = np.empty(costs.shape)
    for start in range(0, n_d, chunk):
        block = costs[start : start + chunk]
        np.minimum(np.roll(block, 1, axis=1), np.roll(block, -1, axis=1), out=row_min[start : start + chunk])
        np.minimum(row_min[start : start + chunk], block, out=row_min[start : start + chunk])
    for start in range(0, n_d, chunk):
        stop = min(start + chunk, n_d)
        neigh = row_min[start:stop].copy()
        if start > 0:
            np.minimum(neigh, row_min[start - 1 : stop - 1], out=neigh)
        else:
            np.minimum(neigh[1:], row_min[0 : stop - 1], out=neigh[1:])
        if stop < n_d:
            np.minimum(neigh, row_min[start + 1 : stop + 1], out=neigh)
        else:
            np.minimum(neigh[:-1], row_min[start + 1 : n_d], out=neigh[:-1])
        is_min[start:stop] = costs[start:stop] <= neigh
    return is_min


def coarse_grid_search(
    obs: Observation,
    geom: UcaGeometry,
    bank: MatchedFilterBank,
    spec: GridSpec,
) -> list[GridBasin]:
    """Rank grid-local minima of the cost surface, lowest cost first.

    Returns at most ``spec.n_basins`` basins; ties break on the lowest
    (range index, angle index) pair so the output is deterministic.
    """
    d_values = spec.d_values()
    theta_values = spec.theta_values()
    if spec.n_theta % geom.n_a == 0:
        costs = _cost_rows_fft(obs, geom, bank, d_values, theta_values)
    else:
        costs = _cost_rows_direct(obs, geom, bank, d_values, theta_values)
    mask = _local_minima(costs)
    d_idx, t_idx = np.nonzero(mask)
    values = costs[d_idx, t_idx]
    order = np.lexsort((t_idx, d_idx, values))[: spec.n_basins]
    return [
        GridBasin(
            position=PolarPosition(float(d_values[d_idx[i]]), float(theta_values[t_idx[i]])),
            cost=float(values[i]),
            d_index=int(d_idx[i]),
            theta_index=int(t_idx[i]),
        )
        for i in order
    ]


def _score_scale(geom: UcaGeometry, config: OfdmConfig, basin: PolarPosition) -> float:
    """Natural magnitude of one score term, used to make tol_score relative."""
    ranges = element_ranges(geom, basin)
    scale = mean_product_scale(config, geom)
    return (
        scale * (TWO_PI / geom.wavelength_m) * float(np.sum(1.0 / ranges**2))
    )


def _trust_radii(geom: UcaGeometry, config: OfdmConfig) -> tuple[float, float]:
    """Per-iteration step bounds: half the range and angle correlation lobes.

    The delay matched filter decorrelates over c / (2 M df) in range and
    the circular aperture over 2.405 lambda / (2 pi R) in angle; capping
    each refinement step at half of these keeps the iteration inside the
    basin it was asked to polish.
    """
    range_lobe = SPEED_OF_LIGHT / (2.0 * config.m_subcarriers * config.delta_f_hz)
    angle_lobe = 2.405 * geom.wavelength_m / (TWO_PI * geom.radius_m)
    return 0.5 * range_lobe, 0.5 * angle_lobe


def lm_refine(
    basin: PolarPosition,
    obs: Observation,
    geom: UcaGeometry,
    bank: MatchedFilterBank,
    config: OfdmConfig,
    lm: LmSettings,
) -> tuple[PolarPosition, bool, int]:
    """Damped Gauss-Newton iterations driving the score pair to zero.

    The 2x2 Jacobian of (F_d, F_theta) comes from central finite
    differences; steps are solved from the Marquardt-scaled normal
    equations. Step control uses the likelihood cost as merit: a trial
    step is accepted only if it does not increase the candidate's cost.
    The score norm cannot play that role here, because it also decays
    wherever the matched-filter correlation fades, so norm descent can
    march straight out of the basin along the range-angle ridge. Steps
    are additionally capped at half a correlation lobe per axis; range
    iterates are clamped to (R(1+1e-6), d_max_m), angles wrapped
    modulo 2*pi.
    """
    d_lo = geom.radius_m * (1.0 + 1e-6)
    d_hi = lm.d_max_m

    def clamped(d: float, theta: float) -> PolarPosition:
        return PolarPosition(min(max(d, d_lo), d_hi), wrap_angle(theta))

    current = clamped(basin.d_m, basin.theta_rad)
    f_scale = _score_scale(geom, config, current)
    max_step_d, max_step_t = _trust_radii(geom, config)
    # Float-level allowance so a zero-residual fixed point still accepts
    # its own (null) step and reports convergence.
    cost_slack = 1e-12 * f_scale * geom.wavelength_m / TWO_PI
    # Convergence declares the scores indistinguishable from a root: below
    # the deterministic tolerance, or within a few standard deviations of
    # their own noise floor sigma_F_i = (sigma^2/2) sqrt(J_ii).
    score_floor = np.array([lm.tol_score * f_scale, lm.tol_score * f_scale])
    if config.sigma2_w > 0.0:
        info = fim(geom, current, obs.beamformer, config)
        noise_floor = (config.sigma2_w / 2.0) * np.sqrt(
            np.array([max(info.j_dd, 0.0), max(info.j_thetatheta, 0.0)])
        )
        score_floor = np.maximum(score_floor, 4.0 * noise_floor)

    def score_vec(p: PolarPosition) -> np.ndarray:
        return np.asarray(scores(p, obs, geom, bank, config))

    current_f = score_vec(current)
    current_cost = cost(current, obs, geom, bank)
    damping = lm.lambda_init
    converged = False
    iterations = 0
    tiny_steps = 0

    for iterations in range(1, lm.max_iters + 1):
        hd, ht = lm.fd_step_d_m, lm.fd_step_theta_rad
        jac = np.empty((2, 2))
        jac[:, 0] = (
            score_vec(clamped(current.d_m + hd, current.theta_rad))
            - score_vec(clamped(current.d_m - hd, current.theta_rad))
        ) / (2.0 * hd)
        jac[:, 1] = (
            score_vec(clamped(current.d_m, current.theta_rad + ht))
            - score_vec(clamped(current.d_m, current.theta_rad - ht))
        ) / (2.0 * ht)
        jtj = jac.T @ jac
        jtf = jac.T @ current_f
        diag = np.diag(np.maximum(np.diag(jtj), np.finfo(float).tiny))
        try:
            step = np.linalg.solve(jtj + damping * diag, -jtf)
        except np.linalg.LinAlgError:
            break
        shrink = min(
            1.0,
            max_step_d / abs(step[0]) if step[0] != 0.0 else 1.0,
            max_step_t / abs(step[1]) if step[1] != 0.0 else 1.0,
        )
        step = step * shrink
        candidate = clamped(current.d_m + step[0], current.theta_rad + step[1])
        candidate_f = score_vec(candidate)
        candidate_cost = cost(candidate, obs, geom, bank)
        accepted = candidate_cost <= current_cost + cost_slack
        if accepted:
            actual_step_d = abs(candidate.d_m - current.d_m)
            actual_step_t = abs(
                (candidate.theta_rad - current.theta_rad + np.pi) % TWO_PI - np.pi
            )
            current, current_f, current_cost = candidate, candidate_f, candidate_cost
            damping = max(damping / lm.lambda_factor, 1e-15)
            small_step = (
                actual_step_d < lm.step_tol_d_m
                and actual_step_t < lm.step_tol_theta_rad
            )
            if small_step and np.all(np.abs(current_f) <= score_floor):
                converged = True
                break
            # Stalled at a cost minimum whose scores stay above the floor:
            # stop iterating, the position will not move any further.
            tiny_steps = tiny_steps + 1 if small_step else 0
            if tiny_steps >= 2:
                break
        else:
            damping *= lm.lambda_factor
            if damping > 1e15:
                break
    else:
        iterations = lm.max_iters

    return current, converged, iterations


def polish_basin(
    basin: PolarPosition,
    obs: Observation,
    geom: UcaGeometry,
    bank: MatchedFilterBank,
    spec: GridSpec,
    rounds: int = 2,
    n_scan: int = 65,
) -> PolarPosition:
    """Windowed coordinate descent on the cost around one basin node.

    The grid localizes a basin only to one cell, and in the deep near
    field the true range correlation peak can be centimeters wide with
    oscillatory score structure around it, far below any affordable
    global grid resolution. Alternating 1-D cost scans over the node's
    range and angle cell, with the window shrinking to a few steps of
    the previous resolution each round, deterministically walks into the
    narrow peak and hands the score iteration an initialization inside
    its quadratic region.
    """
    d_values = spec.d_values()
    if d_values.size > 1:
        # Local cell size at this basin (range nodes may be non-uniform).
        idx = int(np.argmin(np.abs(d_values - basin.d_m)))
        gaps = np.diff(d_values)
        d_window = float(np.max(gaps[max(idx - 1, 0) : idx + 1]))
    else:
        d_window = max(spec.d_max_m - spec.d_min_m, 1.0)
    t_window = TWO_PI / spec.n_theta
    d_lo = geom.radius_m * (1.0 + 1e-6)
    current = basin
    for _ in range(rounds):
        offsets_d = np.linspace(-d_window, d_window, n_scan)
        cand_d = np.clip(current.d_m + offsets_d, d_lo, None)
        costs_d = [
            cost(PolarPosition(float(dc), current.theta_rad), obs, geom, bank)
            for dc in cand_d
        ]
        current = PolarPosition(
            float(cand_d[int(np.argmin(costs_d))]), current.theta_rad
        )
        offsets_t = np.linspace(-t_window, t_window, n_scan)
        costs_t = [
            cost(PolarPosition(current.d_m, wrap_angle(current.theta_rad + dt)), obs, geom, bank)
            for dt in offsets_t
        ]
        current = PolarPosition(
            current.d_m,
            wrap_angle(current.theta_rad + float(offsets_t[int(np.argmin(costs_t))])),
        )
        # Next round covers a couple of steps of this round's resolution.
        d_window = 4.0 * (2.0 * d_window / (n_scan - 1))
        t_window = 4.0 * (2.0 * t_window / (n_scan - 1))
    return current


def estimate(
    obs: Observation,
    geom: UcaGeometry,
    spec: GridSpec,
    lm: LmSettings | None = None,
) -> MlEstimate:
    """Full pipeline: bank, coarse grid, polish and refine the top basins.

    Deterministic given (observation, grid, settings); degenerate inputs
    produce converged=False estimates rather than raising.
    """
    if lm is None:
        lm = LmSettings(d_max_m=1.5 * spec.d_max_m)
    bank = matched_filter_bank(obs)
    basins = coarse_grid_search(obs, geom, bank, spec)
    if not basins:
        # No local minimum (pathological flat surface): fall back to mid-grid.
        fallback = PolarPosition(
            float(np.sqrt(spec.d_min_m * spec.d_max_m)), 0.0
        )
        basins = [GridBasin(fallback, cost(fallback, obs, geom, bank), 0, 0)]

    best = None
    for index, basin in enumerate(basins):
        seed = polish_basin(basin.position, obs, geom, bank, spec)
        refined, converged, iterations = lm_refine(
            seed, obs, geom, bank, obs.config, lm
        )
        final_cost = cost(refined, obs, geom, bank)
        if final_cost > basin.cost:
            # Refinement left its basin for the worse; keep the seed node.
            refined, converged, final_cost = basin.position, False, basin.cost
        key = (final_cost, index)
        if best is None or key < best[0]:
            best = (key, refined, converged, iterations, index)

    _, refined, converged, iterations, index = best
    return MlEstimate(
        d_hat_m=refined.d_m,
        theta_hat_rad=refined.theta_rad,
        cost=best[0][0],
        converged=converged,
        iterations=iterations,
        basin_index=index,
    )
