"""Monte Carlo driver: RMSE/CRLB/rate sweeps over radius and distance.

One trial = optimize the transmit beam at the true position, synthesize
a noisy observation with it, run the ML estimator, then score the trial:
received SNR at the truth, achievable rate with a beam rebuilt from the
estimate (C_est) and with the true-position beam (C_opt), convergence
and success flags. Trials are seeded individually from the master seed
with a splitmix64 mix, so aggregation order never matters and any trial
can be reproduced in isolation.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .beamformer import OptimizerConfig, conjugate_focus_beamformer, optimize_beamformer
from .crlb import CrlbBound, UnidentifiableParametersError, crlb_at
from .estimator import GridSpec, LmSettings, estimate, wrap_angle
from .geometry import PolarPosition, UcaGeometry, rayleigh_distance
from .signal import (
    OfdmConfig,
    achievable_rate,
    generate_pilots,
    synthesize_observation,
    ue_received_snr,
)

SUCCESS_TOL_D_M = 0.5
SUCCESS_TOL_THETA_RAD = np.deg2rad(2.0)

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> int:
    """One splitmix64 output step (public-domain mixing constants)."""
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *indices: int) -> int:
    """Fold indices into the master seed, one splitmix64 round per index.

    Distinct index tuples give (with overwhelming probability) distinct
    64-bit child seeds; the map is pure, so trials can run in any order
    or process and still see their own stream.
    """
    state = master_seed & _MASK64
    for index in indices:
        state = _splitmix64(state ^ ((index + 1) & _MASK64))
    return state


@dataclass(frozen=True)
class SweepConfig:
    """Scenario matrix for the Monte Carlo sweeps.

    ``theta_policy`` is either the string 'uniform' (a fresh azimuth per
    trial) or a fixed angle in radians. The grid template's range window
    is re-anchored per radius at max(2R, 1 m); set
    ``n_theta_auto=False`` to use the template's angle count verbatim.
    """

    radii_m: tuple[float, ...]
    distances_m: tuple[float, ...]
    ofdm: OfdmConfig
    grid: GridSpec
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lm: LmSettings | None = None
    theta_policy: str | float = "uniform"
    trials_per_point: int = 200
    master_seed: int = 0
    n_a: int = 64
    wavelength_m: float = 0.005
    n_theta_auto: bool = True
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.radii_m or not self.distances_m:
            raise ValueError("radii_m and distances_m must be non-empty")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if isinstance(self.theta_policy, str) and self.theta_policy != "uniform":
            raise ValueError(
                f"theta_policy must be 'uniform' or an angle in radians, "
                f"got {self.theta_policy!r}"
            )

    def geometry(self, radius_m: float) -> UcaGeometry:
        return UcaGeometry(self.n_a, radius_m, self.wavelength_m)


@dataclass(frozen=True)
class TrialRecord:
    """Everything one Monte Carlo trial produced."""

    radius_m: float
    d_true_m: float
    theta_true_rad: float
    d_hat_m: float
    theta_hat_rad: float
    converged: bool
    success: bool
    snr_db: float
    rate_est_bps: float
    rate_opt_bps: float
    seed: int


@dataclass(frozen=True)
class SweepPoint:
    """Aggregated results for one (radius, distance) cell."""

    radius_m: float
    d_m: float
    rmse_d_m: float
    rmse_theta_rad: float
    rmse_d_se_m: float
    rmse_theta_se_rad: float
    crlb_d_m: float
    crlb_theta_rad: float
    convergence_rate: float
    success_rate: float
    mean_snr_db: float
    mean_rate_est_bps: float
    mean_rate_opt_bps: float
    n_trials: int


@dataclass(frozen=True)
class CrlbPoint:
    """Deterministic bound table row for one (radius, distance) cell."""

    radius_m: float
    d_m: float
    crlb_d_m: float
    crlb_theta_rad: float
    trace: float
    snr_db: float
    status: str


def auto_n_theta(geom: UcaGeometry, nodes_per_lobe: float = 4.0) -> int:
    """Angle grid size sampling the angular correlation main lobe.

    The coherence main lobe of the circular aperture has half-width
    about 2.405 * lambda / (2 pi R); the grid places ``nodes_per_lobe``
    nodes across the full lobe and rounds up to a multiple of the
    element count so the FFT evaluation path applies. Keeping several
    nodes per lobe bounds every node's angular offset well inside the
    basin the downstream polish and refinement can recover from.
    """
    lobe_width = 2.0 * 2.405 * geom.wavelength_m / (2.0 * np.pi * geom.radius_m)
    target = int(np.ceil(2.0 * np.pi / (lobe_width / nodes_per_lobe)))
    target = max(target, geom.n_a)
    blocks = int(np.ceil(target / geom.n_a))
    return blocks * geom.n_a


def range_correlation_width(geom: UcaGeometry, ofdm: OfdmConfig, d_m: float) -> float:
    """Local width of the range correlation peak at distance d.

    Two mechanisms decorrelate a range mismatch: the subcarrier delay
    ramp, with the d-independent lobe c / (2 M df), and the spherical
    wavefront curvature across the aperture, whose lobe grows like
    2 lambda d^2 / R^2. The narrower one governs.
    """
    from .geometry import SPEED_OF_LIGHT

    delay_lobe = SPEED_OF_LIGHT / (2.0 * ofdm.m_subcarriers * ofdm.delta_f_hz)
    curvature_lobe = 2.0 * geom.wavelength_m * d_m**2 / geom.radius_m**2
    return min(delay_lobe, curvature_lobe)


def adaptive_d_nodes(
    geom: UcaGeometry,
    ofdm: OfdmConfig,
    d_min_m: float,
    d_max_m: float,
    nodes_per_lobe: float = 3.0,
) -> tuple[float, ...]:
    """Range nodes with spacing tied to the local correlation width."""
    nodes = [d_min_m]
    d = d_min_m
    while d < d_max_m:
        d += range_correlation_width(geom, ofdm, d) / nodes_per_lobe
        nodes.append(min(d, d_max_m))
    return tuple(nodes)


def grid_for_radius(cfg: SweepConfig, radius_m: float) -> GridSpec:
    """Anchor the grid template to one radius."""
    geom = cfg.geometry(radius_m)
    d_min = max(2.0 * radius_m, 1.0)
    spec = replace(cfg.grid, d_min_m=d_min)
    if cfg.n_theta_auto:
        spec = replace(
            spec,
            n_theta=auto_n_theta(geom),
            d_nodes=adaptive_d_nodes(geom, cfg.ofdm, d_min, spec.d_max_m),
        )
    return spec


def _angle_error(est: float, true: float) -> float:
    """Signed angular error wrapped to (-pi, pi]."""
    return float((est - true + np.pi) % (2.0 * np.pi) - np.pi)


def run_trial(
    cfg: SweepConfig,
    radius_m: float,
    d_true_m: float,
    theta_true_rad: float,
    seed: int,
) -> TrialRecord:
    """One full pipeline pass, deterministic in ``seed``."""
    geom = cfg.geometry(radius_m)
    truth = PolarPosition(d_true_m, wrap_angle(theta_true_rad))
    beam = optimize_beamformer(geom, truth, cfg.ofdm, cfg.optimizer).beamformer
    pilots = generate_pilots(cfg.ofdm, derive_seed(seed, 1))
    obs = synthesize_observation(
        geom, truth, beam, cfg.ofdm, pilots, derive_seed(seed, 2)
    )
    grid = grid_for_radius(cfg, radius_m)
    lm = cfg.lm if cfg.lm is not None else LmSettings(d_max_m=1.5 * grid.d_max_m)
    result = estimate(obs, geom, grid, lm)

    estimate_pos = PolarPosition(result.d_hat_m, wrap_angle(result.theta_hat_rad))
    success = (
        result.converged
        and abs(result.d_hat_m - d_true_m) <= SUCCESS_TOL_D_M
        and abs(_angle_error(result.theta_hat_rad, theta_true_rad)) <= SUCCESS_TOL_THETA_RAD
    )
    snr = ue_received_snr(geom, truth, beam, cfg.ofdm)
    rate_est = achievable_rate(
        geom, truth, conjugate_focus_beamformer(geom, estimate_pos), cfg.ofdm
    )
    rate_opt = achievable_rate(
        geom, truth, conjugate_focus_beamformer(geom, truth), cfg.ofdm
    )
    return TrialRecord(
        radius_m=radius_m,
        d_true_m=d_true_m,
        theta_true_rad=truth.theta_rad,
        d_hat_m=result.d_hat_m,
        theta_hat_rad=wrap_angle(result.theta_hat_rad),
        converged=result.converged,
        success=success,
        snr_db=10.0 * np.log10(snr) if snr > 0.0 else -np.inf,
        rate_est_bps=rate_est,
        rate_opt_bps=rate_opt,
        seed=seed,
    )


def _trial_theta(cfg: SweepConfig, seed: int) -> float:
    if cfg.theta_policy == "uniform":
        return float(np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi))
    return float(cfg.theta_policy)


def _trial_args(cfg: SweepConfig):
    for ri, radius in enumerate(cfg.radii_m):
        for di, distance in enumerate(cfg.distances_m):
            for trial in range(cfg.trials_per_point):
                seed = derive_seed(cfg.master_seed, ri, di, trial)
                theta = _trial_theta(cfg, derive_seed(seed, 3))
                yield cfg, radius, distance, theta, seed


def _run_one(args) -> TrialRecord:
    cfg, radius, distance, theta, seed = args
    return run_trial(cfg, radius, distance, theta, seed)


def run_trials(cfg: SweepConfig) -> list[TrialRecord]:
    """All trials of the sweep, sorted canonically for determinism."""
    args = list(_trial_args(cfg))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_one, args, chunksize=1))
    else:
        records = [_run_one(a) for a in args]
    records.sort(key=lambda r: (r.radius_m, r.d_true_m, r.seed))
    return records


def _crlb_reference(cfg: SweepConfig, radius_m: float, d_m: float) -> CrlbBound:
    """Bound at theta = 0 with the trace-optimized beam (rotation-invariant)."""
    geom = cfg.geometry(radius_m)
    pos = PolarPosition(d_m, 0.0)
    beam = optimize_beamformer(geom, pos, cfg.ofdm, cfg.optimizer).beamformer
    return crlb_at(geom, pos, beam, cfg.ofdm)


def summarize(cfg: SweepConfig, records: list[TrialRecord]) -> list[SweepPoint]:
    """Aggregate trial records into one row per (radius, distance).

    RMSE uses every trial, converged or not, so threshold-regime outliers
    show up at full weight; the standard errors are delta-method
    estimates from the spread of the squared errors.
    """
    points = []
    for radius in cfg.radii_m:
        for distance in cfg.distances_m:
            group = [
                r
                for r in records
                if r.radius_m == radius and r.d_true_m == distance
            ]
            if not group:
                continue
            err_d = np.array([r.d_hat_m - r.d_true_m for r in group])
            err_t = np.array(
                [_angle_error(r.theta_hat_rad, r.theta_true_rad) for r in group]
            )
            n = len(group)
            rmse_d = float(np.sqrt(np.mean(err_d**2)))
            rmse_t = float(np.sqrt(np.mean(err_t**2)))

            def rmse_se(sq_errors, rmse):
                if n < 2 or rmse == 0.0:
                    return 0.0
                return float(np.std(sq_errors, ddof=1) / (2.0 * rmse * np.sqrt(n)))

            bound = _crlb_reference(cfg, radius, distance)
            points.append(
                SweepPoint(
                    radius_m=radius,
                    d_m=distance,
                    rmse_d_m=rmse_d,
                    rmse_theta_rad=rmse_t,
                    rmse_d_se_m=rmse_se(err_d**2, rmse_d),
                    rmse_theta_se_rad=rmse_se(err_t**2, rmse_t),
                    crlb_d_m=float(np.sqrt(bound.var_d)),
                    crlb_theta_rad=float(np.sqrt(bound.var_theta)),
                    convergence_rate=float(np.mean([r.converged for r in group])),
                    success_rate=float(np.mean([r.success for r in group])),
                    mean_snr_db=float(np.mean([r.snr_db for r in group])),
                    mean_rate_est_bps=float(np.mean([r.rate_est_bps for r in group])),
                    mean_rate_opt_bps=float(np.mean([r.rate_opt_bps for r in group])),
                    n_trials=n,
                )
            )
    return points


def rmse_sweep(cfg: SweepConfig) -> list[SweepPoint]:
    """Monte Carlo RMSE versus the closed-form bound, per (radius, distance)."""
    return summarize(cfg, run_trials(cfg))


def rate_sweep(cfg: SweepConfig) -> list[SweepPoint]:
    """Same trial engine, consumed for the rate curves C_est / C_opt.

    Emits a warning-grade sanity check: with the conjugate-focus optimum,
    mean C_opt should grow with mean SNR along each radius.
    """
    points = rmse_sweep(cfg)
    for radius in cfg.radii_m:
        rows = sorted(
            (p for p in points if p.radius_m == radius), key=lambda p: p.mean_snr_db
        )
        rates = [p.mean_rate_opt_bps for p in rows]
        if any(b < a for a, b in zip(rates, rates[1:])):
            import warnings

            warnings.warn(
                f"C_opt is not monotone in SNR for radius {radius} m", stacklevel=2
            )
    return points


def crlb_sweep(cfg: SweepConfig) -> list[CrlbPoint]:
    """Deterministic bound table: no Monte Carlo, one row per cell.

    Unidentifiable geometries are reported as flagged rows rather than
    aborting the sweep.
    """
    rows = []
    for radius in cfg.radii_m:
        geom = cfg.geometry(radius)
        for distance in cfg.distances_m:
            pos = PolarPosition(distance, 0.0)
            try:
                beam = optimize_beamformer(geom, pos, cfg.ofdm, cfg.optimizer).beamformer
                bound = crlb_at(geom, pos, beam, cfg.ofdm)
                snr = ue_received_snr(geom, pos, beam, cfg.ofdm)
                rows.append(
                    CrlbPoint(
                        radius_m=radius,
                        d_m=distance,
                        crlb_d_m=float(np.sqrt(bound.var_d)),
                        crlb_theta_rad=float(np.sqrt(bound.var_theta)),
                        trace=bound.trace,
                        snr_db=10.0 * np.log10(snr) if snr > 0.0 else -np.inf,
                        status="ok",
                    )
                )
            except UnidentifiableParametersError:
                rows.append(
                    CrlbPoint(
                        radius_m=radius,
                        d_m=distance,
                        crlb_d_m=np.nan,
                        crlb_theta_rad=np.nan,
                        trace=np.nan,
                        snr_db=np.nan,
                        status="unidentifiable",
                    )
                )
    return rows


def nearfield_guard(cfg: SweepConfig) -> None:
    """Check that every distance sits inside the smallest radius' near field."""
    smallest = min(cfg.radii_m)
    boundary = rayleigh_distance(cfg.geometry(smallest))
    for distance in cfg.distances_m:
        if distance > boundary:
            raise ValueError(
                f"distance {distance} m exceeds the near-field boundary "
                f"{boundary} m of the smallest radius {smallest} m"
            )
