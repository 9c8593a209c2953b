"""Boundary evolution beyond self-similarity.

The threshold condition tau(d*(t), t) = c(t) differentiates to the boundary
ODE  dd*/dt = -(tau_t - c'(t)) / tau_r.  For an absolute threshold c is
constant; for relative thresholds c(t) tracks the source value and the
correction term uses the field's temporal derivative at the source.  The
integrator is a fixed-step classical 4th-order scheme: the right-hand side
is smooth on the monotone region and fixed steps keep convergence-order
tests clean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .functionals import BoundarySpec

# Dimensionless stall criterion: |dd*/dt| t / d* below this for 10
# consecutive steps declares a steady state.
STALL_RATE = 1e-6
STALL_STEPS = 10

GRADIENT_FLOOR = 1e-14


@dataclass(frozen=True)
class BoundaryTrajectory:
    times: np.ndarray
    radii: np.ndarray
    terminated_reason: str  # horizon_reached | boundary_vanished | steady_state_detected

    def __post_init__(self):
        if len(self.times) != len(self.radii):
            raise DomainError("times and radii must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("times must be strictly increasing")


@dataclass(frozen=True)
class AdiabaticBoundary:
    """Exact and first-order boundary radii under slow diffusion growth."""

    exact: float
    first_order: float


def boundary_ode_integrate(
    field,
    d0: float,
    t0: float,
    t1: float,
    steps: int,
    spec: BoundarySpec | None = None,
) -> BoundaryTrajectory:
    """Integrate dd*/dt = -(tau_t - frac * tau_t(0)) / tau_r with RK4.

    `spec` supplies the threshold convention; None or an absolute spec gives
    the plain ratio form.  Relative specs require the field to admit
    evaluation at its minimum radius (the source value reference).
    """
    if not d0 > 0:
        raise DomainError(f"initial radius must be > 0, got {d0}")
    if not t0 > 0 or not t1 > t0:
        raise DomainError("need 0 < t0 < t1")
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")

    frac = spec.relative_fraction() if spec is not None else 0.0
    r_source = getattr(field, "r_min", 0.0)

    def rhs(t: float, r: float) -> float:
        num = field.d_dt(r, t)
        if frac != 0.0:
            num -= frac * field.d_dt(r_source, t)
        den = field.d_dr(r, t)
        if abs(den) <= GRADIENT_FLOOR * abs(num):
            raise NumericalError(
                f"singular gradient at t={t:.6g}, r={r:.6g}: threshold crossed "
                "over a flat region"
            )
        return -num / den

    dt = (t1 - t0) / steps
    times = [t0]
    radii = [d0]
    r = d0
    stall_count = 0
    reason = "horizon_reached"
    for i in range(steps):
        t = t0 + i * dt
        k1 = rhs(t, r)
        k2 = rhs(t + 0.5 * dt, r + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, r + 0.5 * dt * k2)
        k4 = rhs(t + dt, r + dt * k3)
        r_new = r + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_new = t + dt
        if r_new <= 0.0:
            reason = "boundary_vanished"
            break
        times.append(t_new)
        radii.append(r_new)
        rate = abs(r_new - r) / dt * t_new / r_new
        stall_count = stall_count + 1 if rate < STALL_RATE else 0
        r = r_new
        if stall_count >= STALL_STEPS:
            reason = "steady_state_detected"
            break
    return BoundaryTrajectory(np.array(times), np.array(radii), reason)


def steady_state_boundary(nu: float, lam: float, q0: float, tau_min: float) -> float | None:
    """Long-run boundary sqrt(nu/lam) ln(Q0 / (lam l tau_min)), l = sqrt(nu/lam).

    Returns None when the logarithm's argument is <= 1, i.e. the threshold
    exceeds the entire steady profile and no positive boundary exists.
    """
    if not nu > 0 or not lam > 0 or not q0 > 0 or not tau_min > 0:
        raise DomainError("steady_state_boundary requires nu, lam, q0, tau_min > 0")
    length = math.sqrt(nu / lam)
    arg = q0 / (lam * length * tau_min)
    if arg <= 1.0:
        return None
    return length * math.log(arg)


def perturbed_boundary(
    d0_star: float,
    tau1_at_boundary: float,
    grad_tau0_at_boundary: float,
    eps: float,
) -> float:
    """First-order boundary shift d0 + eps * tau1 / |grad tau0|; no iteration."""
    if not grad_tau0_at_boundary > 0:
        raise DomainError("perturbed_boundary requires a nondegenerate profile (grad > 0)")
    return d0_star + eps * tau1_at_boundary / grad_tau0_at_boundary


def adiabatic_boundary(
    nu0: float, alpha: float, eps_threshold: float, t: float
) -> AdiabaticBoundary:
    """Boundary under slowly growing diffusion nu(t) = nu0 (1 + alpha t).

    exact       2 sqrt(nu0 (1 + alpha t) t ln(1/(1 - eps)))
    first_order the same to O(alpha t): baseline boundary times (1 + alpha t / 2)
    """
    if not nu0 > 0:
        raise DomainError(f"nu0 must be > 0, got {nu0}")
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if not 0 < eps_threshold < 1:
        raise DomainError(f"eps_threshold must be in (0,1), got {eps_threshold}")
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    log_term = math.log(1.0 / (1.0 - eps_threshold))
    base = 2.0 * math.sqrt(nu0 * t * log_term)
    exact = 2.0 * math.sqrt(nu0 * (1.0 + alpha * t) * t * log_term)
    return AdiabaticBoundary(exact=exact, first_order=base * (1.0 + 0.5 * alpha * t))
