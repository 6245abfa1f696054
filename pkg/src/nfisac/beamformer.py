"""CRLB-trace minimization over unit-norm transmit beamformers.

The objective Tr(C) = (J_dd + J_tt) / (J_dd J_tt - J_dt^2) is a smooth
non-convex function of the beamformer f through the coupling scalars
beta, z_d, z_theta, all linear in f. Descent runs on the complex unit
sphere: analytic Wirtinger gradient, projection onto the tangent space,
normalization retraction, Armijo backtracking line search.

Gradient convention: ``wirtinger_gradient`` returns the conjugate-
coordinate derivative G = d Tr(C) / d f*, so that for a real objective
dT = 2 Re{G^H df}. Along the real parameterization f = u + j v this
means dT/du_i = 2 Re{G_i} and dT/dv_i = 2 Im{G_i}, which is exactly what
the finite-difference checks validate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crlb import UnidentifiableParametersError, crlb_from_fim, fim, fim_scale
from .geometry import PolarPosition, UcaGeometry, sensitivities, steering_vector
from .signal import OfdmConfig, require_unit_norm

RETRACT_MIN_NORM = 1e-14


class StepTooLargeError(ValueError):
    """The retraction update collapsed to (numerically) zero length."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Riemannian gradient descent settings.

    ``grad_tol`` is relative: iteration stops once the tangent gradient
    norm falls below grad_tol times its initial value.
    """

    max_iters: int = 2000
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 50

    def __post_init__(self) -> None:
        if self.grad_tol <= 0.0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol}")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError(
                f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor}"
            )
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError(f"armijo_c must lie in (0, 1), got {self.armijo_c}")
        if self.initial_step <= 0.0:
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")


@dataclass(frozen=True)
class OptimizerResult:
    """Final beamformer plus the accepted-step objective history."""

    beamformer: np.ndarray
    trace_history: np.ndarray
    final_grad_norm: float
    iterations: int
    converged: bool


def conjugate_focus_beamformer(geom: UcaGeometry, pos: PolarPosition) -> np.ndarray:
    """Conjugated steering vector: maximizes |a^T f| over the unit sphere."""
    return np.conj(steering_vector(geom, pos))


def trace_objective(
    f: np.ndarray, geom: UcaGeometry, pos: PolarPosition, config: OfdmConfig
) -> float:
    """CRLB trace (J_dd + J_tt) / det J at beamformer f."""
    return crlb_from_fim(fim(geom, pos, f, config)).trace


def _gamma_design_matrices(geom: UcaGeometry, pos: PolarPosition):
    """Matrices W_d, W_t with gamma_d = W_d f and gamma_theta = W_t f.

    Row k collects how element k's derivative factor depends on every
    beamformer entry, splitting the coupling slopes z_d, z_theta into
    their linear forms.
    """
    sens = sensitivities(geom, pos)
    a = steering_vector(geom, pos)
    wavenumber = 2.0 * np.pi / geom.wavelength_m
    r = sens.ranges_m
    one_minus_ad = 1.0 - sens.alpha_d
    at = sens.alpha_theta
    ones = np.ones(geom.n_a)
    w_d = -(sens.alpha_d / r)[:, None] * a[None, :] + 1j * wavenumber * (
        ones[:, None] * (a * one_minus_ad)[None, :] + one_minus_ad[:, None] * a[None, :]
    )
    w_t = -(at / r)[:, None] * a[None, :] - 1j * wavenumber * (
        ones[:, None] * (a * at)[None, :] + at[:, None] * a[None, :]
    )
    return r, w_d, w_t


class _TraceWorkspace:
    """Geometry-dependent pieces of the objective, computed once per position.

    gamma_d = W_d f and gamma_theta = W_t f are linear forms, so every
    objective or gradient evaluation is a couple of matrix-vector
    products against cached matrices.
    """

    def __init__(self, geom: UcaGeometry, pos: PolarPosition, config: OfdmConfig):
        r, self.w_d, self.w_t = _gamma_design_matrices(geom, pos)
        self.inv_r2 = 1.0 / r**2
        self.scale = fim_scale(config, geom)
        self.w_d_adj = np.conj(self.w_d).T
        self.w_t_adj = np.conj(self.w_t).T

    def quadratics(self, f: np.ndarray):
        gamma_d = self.w_d @ f
        gamma_t = self.w_t @ f
        quad_r = float(np.sum(np.abs(gamma_d) ** 2 * self.inv_r2))
        quad_t = float(np.sum(np.abs(gamma_t) ** 2 * self.inv_r2))
        quad_x = float(np.real(np.sum(np.conj(gamma_d) * gamma_t * self.inv_r2)))
        return gamma_d, gamma_t, quad_r, quad_t, quad_x

    def objective(self, f: np.ndarray) -> float:
        """Trace of the bound; +inf when the pair is unidentifiable at f."""
        _, _, quad_r, quad_t, quad_x = self.quadratics(f)
        det = quad_r * quad_t - quad_x**2
        if det <= 0.0:
            return np.inf
        return (quad_r + quad_t) / (self.scale * det)

    def gradient(self, f: np.ndarray) -> np.ndarray:
        gamma_d, gamma_t, quad_r, quad_t, quad_x = self.quadratics(f)
        det = quad_r * quad_t - quad_x**2
        if det <= 0.0:
            raise UnidentifiableParametersError(
                f"information determinant is non-positive ({det!r}) at this "
                "beamformer; the trace objective has no gradient here"
            )
        grad_r = self.w_d_adj @ (gamma_d * self.inv_r2)
        grad_t = self.w_t_adj @ (gamma_t * self.inv_r2)
        grad_x = 0.5 * (
            self.w_d_adj @ (gamma_t * self.inv_r2)
            + self.w_t_adj @ (gamma_d * self.inv_r2)
        )
        numer = quad_r + quad_t
        return (
            det * (grad_r + grad_t)
            - numer * (quad_t * grad_r + quad_r * grad_t - 2.0 * quad_x * grad_x)
        ) / (self.scale * det**2)


def wirtinger_gradient(
    f: np.ndarray, geom: UcaGeometry, pos: PolarPosition, config: OfdmConfig
) -> np.ndarray:
    """Analytic d Tr(C) / d f* via the quotient rule.

    With R = J_dd/K, T = J_tt/K, X = J_dt/K (all quadratic forms in f),
    Tr(C) = (R + T) / (K (R T - X^2)) and the gradient follows from
    grad R = conj(W_d)^T (gamma_d / r^2) and its T/X analogues.
    """
    f = require_unit_norm(f)
    return _TraceWorkspace(geom, pos, config).gradient(f)


def tangent_project(grad: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Remove the radial component: grad - Re{<f, grad>} f.

    The output satisfies Re{<out, f>} = 0, i.e. it is tangent to the unit
    sphere viewed as a real manifold.
    """
    return grad - np.real(np.vdot(f, grad)) * f


def retract(f: np.ndarray, step: float, descent_dir: np.ndarray) -> np.ndarray:
    """Step against descent_dir and renormalize onto the sphere."""
    update = f - step * descent_dir
    norm = np.linalg.norm(update)
    if norm < RETRACT_MIN_NORM:
        raise StepTooLargeError(
            f"retraction update has norm {norm!r}; shrink the step"
        )
    return update / norm


def optimize_beamformer(
    geom: UcaGeometry,
    pos: PolarPosition,
    config: OfdmConfig,
    opt: OptimizerConfig | None = None,
    init: np.ndarray | None = None,
    on_iterate=None,
) -> OptimizerResult:
    """Project-descend-retract loop with Armijo backtracking.

    Starts from the conjugate-focus beamformer unless ``init`` is given.
    ``trace_history`` records the objective after every accepted step only,
    so it is non-increasing by construction. ``on_iterate(f)`` is called
    with each accepted iterate (testing/diagnostics hook).
    """
    if opt is None:
        opt = OptimizerConfig()
    if init is None:
        f = conjugate_focus_beamformer(geom, pos)
    else:
        f = require_unit_norm(init).copy()

    workspace = _TraceWorkspace(geom, pos, config)
    objective = workspace.objective(f)
    if not np.isfinite(objective):
        raise UnidentifiableParametersError(
            "the trace objective is undefined at the initial beamformer"
        )
    history = [objective]
    if on_iterate is not None:
        on_iterate(f)

    direction = tangent_project(workspace.gradient(f), f)
    grad_norm = float(np.linalg.norm(direction))
    tol = opt.grad_tol * grad_norm
    iterations = 0

    while iterations < opt.max_iters and grad_norm > tol:
        # Armijo model: directional derivative along -direction is -2 ||P||^2.
        expected_slope = 2.0 * grad_norm**2
        step = opt.initial_step
        accepted = False
        for _ in range(opt.max_backtracks):
            try:
                candidate = retract(f, step, direction)
            except StepTooLargeError:
                step *= opt.backtrack_factor
                continue
            candidate_obj = workspace.objective(candidate)
            if candidate_obj <= objective - opt.armijo_c * step * expected_slope:
                accepted = True
                break
            step *= opt.backtrack_factor
        if not accepted:
            # Line search exhausted: no further certified decrease available.
            break
        f = candidate
        objective = candidate_obj
        history.append(objective)
        if on_iterate is not None:
            on_iterate(f)
        iterations += 1
        direction = tangent_project(workspace.gradient(f), f)
        grad_norm = float(np.linalg.norm(direction))

    return OptimizerResult(
        beamformer=f,
        trace_history=np.asarray(history),
        final_grad_norm=grad_norm,
        iterations=iterations,
        converged=grad_norm <= tol,
    )
