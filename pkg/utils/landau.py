"""
Isotropic Landau flow on radial densities.

    ∂tρ = ∇·(Lρ∇ρ − ρ∇Lρ),   Lρ = (−Δ)^{-1}ρ

in divergence form, and the non-divergence form ∂tρ = Lρ Δρ + αρ² which
coincides with it at α = 1. Time integration is classical RK4 under a
diffusive CFL limit with Lρ as the diffusion coefficient.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from utils.config import SimConfig
from utils.diagnostics import DiagnosticsRecord, evaluate_record, with_time_derivatives
from utils.errors import ConfigurationError, MassDriftError, NumericalBlowupError, NumericalError, UsageError
from utils.grid import (
    Density,
    Parity,
    RadialField,
    RadialGrid,
    ball_density,
    build_uniform_grid,
    ddr,
    div_radial,
    gaussian_density,
    laplacian_radial,
)
from utils.potential import newtonian_potential
from utils.store import load_snapshot

logger = logging.getLogger(__name__)


class RhsForm(str, Enum):
    DIVERGENCE = "divergence"
    NONDIVERGENCE = "nondivergence"


@dataclass(frozen=True)
class StepControl:
    cfl_safety: float = 0.5
    dt_max: float = 0.01
    rho_floor: float = 0.0
    mass_drift_budget: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigurationError(f"time.cfl_safety must lie in (0, 1], got {self.cfl_safety}", key="time.cfl_safety")
        if self.dt_max <= 0.0:
            raise ConfigurationError(f"time.dt_max must be positive, got {self.dt_max}", key="time.dt_max")
        if self.rho_floor < 0.0:
            raise ConfigurationError(f"time.rho_floor must be >= 0, got {self.rho_floor}", key="time.rho_floor")
        if self.mass_drift_budget <= 0.0:
            raise ConfigurationError(
                f"time.mass_drift_budget must be positive, got {self.mass_drift_budget}", key="time.mass_drift_budget"
            )


@dataclass(frozen=True)
class FlowState:
    rho: Density
    t: float = 0.0
    step_count: int = 0
    initial_mass: float = 0.0
    mass_drift: float = 0.0

    @classmethod
    def initial(cls, rho: Density, t: float = 0.0) -> "FlowState":
        return cls(rho=rho, t=t, step_count=0, initial_mass=rho.mass, mass_drift=0.0)


@dataclass(frozen=True)
class Snapshot:
    t: float
    density: Density


@dataclass
class FlowTrace:
    grid: RadialGrid
    records: list[DiagnosticsRecord] = field(default_factory=list)
    error: str | None = None
    failed_at: float | None = None


# ── Right-hand sides ─────────────────────────────────────────────────────────

def _state_field(grid: RadialGrid, rho: Density | RadialField) -> RadialField:
    f = rho.field if isinstance(rho, Density) else rho
    if f.parity is not Parity.EVEN:
        raise UsageError("density state must be an EVEN field")
    return f


def landau_rhs_divform(grid: RadialGrid, rho: Density | RadialField) -> RadialField:
    """∇·(Lρ∇ρ − ρ∇Lρ)."""
    f = _state_field(grid, rho)
    L = newtonian_potential(grid, f).u
    flux = L * ddr(grid, f) - f * ddr(grid, L)
    return div_radial(grid, flux)


def landau_rhs_nondiv(grid: RadialGrid, rho: Density | RadialField, alpha: float = 1.0) -> RadialField:
    """Lρ Δρ + αρ²."""
    if not 0.0 < alpha <= 1.0:
        raise ConfigurationError(f"flow.alpha must lie in (0, 1], got {alpha}", key="flow.alpha")
    f = _state_field(grid, rho)
    L = newtonian_potential(grid, f).u
    return L * laplacian_radial(grid, f) + alpha * (f * f)


def select_rhs(grid: RadialGrid, form: RhsForm, alpha: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Array-to-array right-hand side for the integrator."""
    form = RhsForm(form)
    if form is RhsForm.DIVERGENCE:
        if alpha != 1.0:
            raise ConfigurationError("the divergence form is the alpha = 1 equation", key="flow.alpha")
        return lambda y: landau_rhs_divform(grid, RadialField(grid, y)).values
    if not 0.0 < alpha <= 1.0:
        raise ConfigurationError(f"flow.alpha must lie in (0, 1], got {alpha}", key="flow.alpha")
    return lambda y: landau_rhs_nondiv(grid, RadialField(grid, y), alpha).values


# ── Time stepping ────────────────────────────────────────────────────────────

def cfl_dt(grid: RadialGrid, rho: Density | RadialField, ctrl: StepControl) -> float:
    """safety·h² / (2·max Lρ + ε), capped by dt_max."""
    L = newtonian_potential(grid, _state_field(grid, rho)).u.values
    dt = ctrl.cfl_safety * grid.h**2 / (2.0 * float(L.max()) + np.finfo(float).eps)
    return min(dt, ctrl.dt_max)


def step_rk4(
    grid: RadialGrid,
    state: FlowState,
    ctrl: StepControl,
    form: RhsForm = RhsForm.DIVERGENCE,
    alpha: float = 1.0,
    dt: float | None = None,
) -> FlowState:
    """One classical RK4 step, then clip below rho_floor and check mass drift."""
    rhs = select_rhs(grid, form, alpha)
    if dt is None:
        dt = cfl_dt(grid, state.rho, ctrl)
    step = state.step_count + 1

    def _stage(y: np.ndarray) -> np.ndarray:
        k = rhs(y)
        if not np.all(np.isfinite(k)):
            raise NumericalBlowupError("non-finite right-hand side", step=step, t=state.t)
        return k

    y0 = state.rho.values
    k1 = _stage(y0)
    k2 = _stage(y0 + 0.5 * dt * k1)
    k3 = _stage(y0 + 0.5 * dt * k2)
    k4 = _stage(y0 + dt * k3)
    y = y0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise NumericalBlowupError("non-finite density after update", step=step, t=state.t + dt)

    rho = Density.clipped(grid, y, ctrl.rho_floor)
    drift = abs(rho.mass - state.initial_mass)
    if drift > ctrl.mass_drift_budget:
        raise MassDriftError(drift, ctrl.mass_drift_budget, step=step, t=state.t + dt)
    return FlowState(rho=rho, t=state.t + dt, step_count=step, initial_mass=state.initial_mass, mass_drift=drift)


# ── Runs ─────────────────────────────────────────────────────────────────────

def initial_density(config: SimConfig, grid: RadialGrid) -> Density:
    init = config.init
    if init.kind == "gaussian":
        return gaussian_density(grid, init.sigma, normalize=init.normalize)
    if init.kind == "ball":
        return ball_density(grid, init.radius, init.smoothing, normalize=init.normalize)
    if init.kind == "file":
        t, values = load_snapshot(init.path, grid)
        logger.info("initial density loaded from %s (snapshot t=%g)", init.path, t)
        return Density.from_values(grid, values, normalize=init.normalize)
    raise ConfigurationError(f"unknown init.kind {init.kind!r}", key="init.kind")


def step_control(config: SimConfig) -> StepControl:
    return StepControl(
        cfl_safety=config.time.cfl_safety,
        dt_max=config.time.dt_max,
        rho_floor=config.time.rho_floor,
        mass_drift_budget=config.time.mass_drift_budget,
    )


def _next_dt(remaining: float, dt_limit: float) -> float:
    """Split what is left evenly into steps no longer than dt_limit, so targets are hit exactly."""
    steps = max(1, math.ceil(remaining / dt_limit - 1e-9))
    return remaining / steps


def simulate(config: SimConfig) -> tuple[FlowTrace, list[Snapshot]]:
    """Advance to time.t_end, recording diagnostics every output.every steps."""
    grid = build_uniform_grid(config.grid.n, config.grid.r_max)
    ctrl = step_control(config)
    form = RhsForm(config.flow.rhs)
    alpha = config.flow.alpha
    gradient_flow = alpha == 1.0
    if not gradient_flow:
        logger.info("alpha=%g: gradient-flow diagnostics are skipped", alpha)

    def _record(s: FlowState) -> DiagnosticsRecord:
        return evaluate_record(
            grid, s.rho, s.t, config.diag.gamma, floor_eps=config.diag.floor_eps, gradient_flow=gradient_flow
        )

    state = FlowState.initial(initial_density(config, grid))
    t_end = config.time.t_end
    pending = sorted(t for t in config.output.snapshot_times if 0.0 <= t <= t_end)
    trace = FlowTrace(grid=grid)
    snapshots: list[Snapshot] = []

    logger.info("simulate: n=%d r_max=%g t_end=%g form=%s", grid.n, grid.r_max, t_end, form.value)
    trace.records.append(_record(state))
    while pending and pending[0] <= state.t:
        snapshots.append(Snapshot(state.t, state.rho))
        pending.pop(0)

    try:
        while state.t < t_end:
            target = min(pending[0], t_end) if pending else t_end
            dt = _next_dt(target - state.t, cfl_dt(grid, state.rho, ctrl))
            state = step_rk4(grid, state, ctrl, form, alpha, dt=dt)
            if state.t >= target - 1e-12 * max(1.0, target):
                state = replace(state, t=target)
            if state.step_count % config.output.every == 0 or state.t >= t_end:
                trace.records.append(_record(state))
                logger.debug("t=%.6g step=%d drift=%.2e", state.t, state.step_count, state.mass_drift)
            while pending and pending[0] <= state.t:
                snapshots.append(Snapshot(state.t, state.rho))
                pending.pop(0)
    except NumericalError as exc:
        trace.records = with_time_derivatives(trace.records)
        trace.error = f"{type(exc).__name__}: {exc}"
        trace.failed_at = state.t
        exc.trace = trace
        logger.error("simulate aborted at t=%.6g: %s", state.t, exc)
        raise

    trace.records = with_time_derivatives(trace.records)
    logger.info("simulate: reached t=%g in %d steps, mass drift %.2e", state.t, state.step_count, state.mass_drift)
    return trace, snapshots
