"""Near-field ISAC estimation lab for a uniform circular array.

Wideband OFDM channel model with spherical wavefronts, closed-form
Cramér-Rao bounds for joint range-angle estimation, CRLB-trace-optimal
transmit beamforming on the unit sphere, grid-initialized maximum
likelihood estimation, and a Monte Carlo harness with a CSV-emitting CLI.
"""

__version__ = "0.1.0"

from .beamformer import (
    OptimizerConfig,
    OptimizerResult,
    conjugate_focus_beamformer,
    optimize_beamformer,
    retract,
    tangent_project,
    trace_objective,
    wirtinger_gradient,
)
from .crlb import (
    BeamCoupling,
    CrlbBound,
    FisherMatrix,
    GammaCoefficients,
    GeometrySums,
    UnidentifiableParametersError,
    beam_coupling,
    crlb_at,
    crlb_closed_form,
    crlb_from_fim,
    fim,
    fim_scale,
    gamma_coefficients,
    geometry_sums,
    mean_product_scale,
)
from .estimator import (
    GridBasin,
    GridSpec,
    LmSettings,
    MatchedFilterBank,
    MlEstimate,
    coarse_grid_search,
    cost,
    estimate,
    lm_refine,
    matched_filter_bank,
    polish_basin,
    scores,
    wrap_angle,
    xi,
)
from .geometry import (
    SPEED_OF_LIGHT,
    GeometrySensitivities,
    PolarPosition,
    UcaGeometry,
    element_angles,
    element_gains,
    element_ranges,
    rayleigh_distance,
    sensitivities,
    steering_vector,
    ula_rayleigh_distance,
)
from .harness import (
    CrlbPoint,
    SweepConfig,
    SweepPoint,
    TrialRecord,
    adaptive_d_nodes,
    auto_n_theta,
    crlb_sweep,
    derive_seed,
    grid_for_radius,
    rate_sweep,
    rmse_sweep,
    run_trial,
    run_trials,
    summarize,
)
from .signal import (
    Observation,
    OfdmConfig,
    PilotGrid,
    achievable_rate,
    generate_pilots,
    noiseless_mean,
    phase_factor,
    synthesize_observation,
    ue_received_snr,
)
