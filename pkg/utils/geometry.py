"""
Riemannian structure behind the isotropic Landau flow.

The Onsager operator of a radial density ρ acts on a potential φ as

    𝒦_ρφ = ∇·(ρLρ∇φ − ρ(−Δ)^{-1}(ρ∇φ)),

and the metric pairs two potentials through ⟨φ₁, −𝒦_ρφ₂⟩. Geodesics solve the
Hamiltonian system for (ρ, Φ) with H = ½⟨Φ, −𝒦_ρΦ⟩. The dynamic distance W_K
is estimated by shooting on the initial potential; W₁ between radial measures
is the L¹ distance of their radial mass functions, checked against an exact
transport LP on small Cartesian clouds.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import ot
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import least_squares
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.spatial.distance import cdist

from utils.diagnostics import entropy
from utils.errors import NonConvergenceError, NumericalBlowupError, NumericalError, ResourceError, UsageError
from utils.grid import Density, Parity, RadialField, RadialGrid, ddr, div_radial, integrate
from utils.potential import newtonian_potential, sample_cartesian_cloud, vector_newtonian_potential

logger = logging.getLogger(__name__)

MASS_MATCH_TOL = 1e-8
NEGATIVE_MASS_LIMIT = 1e-3
SHOOTING_BASIS_SIZE = 12
LP_MAX_POINTS = 15**3
# boundary leakage at r_max puts mean-zero σ slightly outside the discrete range
RANGE_RTOL = 1e-6


def _field(rho: Density | RadialField) -> RadialField:
    return rho.field if isinstance(rho, Density) else rho


# ── Metric ───────────────────────────────────────────────────────────────────

def _flux(grid: RadialGrid, rho: RadialField, phi: RadialField) -> RadialField:
    """ρLρ∇φ − ρ(−Δ)^{-1}(ρ∇φ), radial component."""
    L = newtonian_potential(grid, rho).u
    grad = ddr(grid, phi)
    V = vector_newtonian_potential(grid, rho * grad).u
    return rho * L * grad - rho * V


def apply_onsager(grid: RadialGrid, rho: Density | RadialField, phi: RadialField) -> RadialField:
    """𝒦_ρφ."""
    return div_radial(grid, _flux(grid, _field(rho), phi))


def metric_form(grid: RadialGrid, rho: Density | RadialField, phi1: RadialField, phi2: RadialField) -> float:
    """∫ρLρ∇φ₁·∇φ₂ − ∫(ρ∇φ₁)·(−Δ)^{-1}(ρ∇φ₂).

    Both potentials are built from the same cumulative trapezoid sums, so the
    discrete form is symmetric and positive semi-definite up to round-off.
    """
    f = _field(rho)
    L = newtonian_potential(grid, f).u
    g1 = ddr(grid, phi1)
    g2 = ddr(grid, phi2)
    V2 = vector_newtonian_potential(grid, f * g2).u
    return integrate(grid, f * L * g1 * g2) - integrate(grid, f * g1 * V2)


def metric_scale(grid: RadialGrid, rho: Density | RadialField, phi: RadialField) -> float:
    """∫ρLρ|∇φ|², the local part of the form; reference size for round-off tolerances."""
    f = _field(rho)
    g = ddr(grid, phi)
    return integrate(grid, f * newtonian_potential(grid, f).u * g * g)


def hamiltonian(grid: RadialGrid, rho: Density | RadialField, phi: RadialField) -> float:
    return 0.5 * metric_form(grid, rho, phi, phi)


def weighted_mean(grid: RadialGrid, rho: Density | RadialField, phi: RadialField) -> float:
    """ρ-weighted average of φ."""
    weights = grid.weights * np.maximum(_field(rho).values, 0.0)
    total = math.fsum(weights)
    if total <= 0.0:
        raise UsageError("ρ-weighted mean needs a density with positive mass")
    return math.fsum(weights * phi.values) / total


def gauge_fix(grid: RadialGrid, rho: Density | RadialField, phi: RadialField) -> RadialField:
    return phi - weighted_mean(grid, rho, phi)


def random_smooth_potential(grid: RadialGrid, rng: np.random.Generator, modes: int = 6) -> RadialField:
    """Seeded even cosine series on [0, r_max] with decaying coefficients."""
    coeffs = rng.standard_normal(modes) / (1.0 + np.arange(modes))
    r = grid.nodes / grid.r_max
    values = sum(c * np.cos(math.pi * k * r) for k, c in enumerate(coeffs))
    return RadialField(grid, values)


# ── Inverting the Onsager operator ───────────────────────────────────────────

def solve_potential(
    grid: RadialGrid,
    rho: Density | RadialField,
    sigma: RadialField,
    rtol: float = 1e-8,
    max_iterations: int = 5000,
) -> RadialField:
    """Solve −𝒦_ρφ = σ for mean-zero σ; φ is returned with ρ-weighted mean zero.

    The centred gradient annihilates constants and the node-alternating mode,
    so GMRES runs on the operator with both modes pinned by ρ-weighted
    averages. The discrete 𝒦_ρ is not exactly self-adjoint in the quadrature
    inner product, hence GMRES rather than conjugate gradients. GMRES must
    reach `rtol` on the pinned system; the unregularized residual, which is
    what the pinned modes absorbed, must stay below RANGE_RTOL.
    """
    f = _field(rho)
    s = sigma.values
    size = math.fsum(grid.weights * np.abs(s))
    if abs(integrate(grid, sigma)) > 1e-10 * max(size, np.finfo(float).tiny):
        raise UsageError(f"solve_potential needs ∫σ = 0, got {integrate(grid, sigma):.3e}")
    if not np.any(s):
        return RadialField.zeros(grid)

    weights = grid.weights * np.maximum(f.values, 0.0)
    total = math.fsum(weights)
    if total <= 0.0:
        raise UsageError("solve_potential needs a density with positive mass")
    mean_w = weights / total
    alternating = np.where(np.arange(grid.n) % 2 == 0, 1.0, -1.0)

    def _apply(x: np.ndarray) -> np.ndarray:
        return -apply_onsager(grid, f, RadialField(grid, x)).values

    def _matvec(x: np.ndarray) -> np.ndarray:
        x = np.ravel(x)
        return _apply(x) + (mean_w @ x) + (mean_w @ (alternating * x)) * alternating

    operator = LinearOperator((grid.n, grid.n), matvec=_matvec, dtype=float)
    restart = grid.n
    iterations = 0

    def _count(_):
        nonlocal iterations
        iterations += 1

    x, info = gmres(
        operator,
        s,
        rtol=0.1 * rtol,
        atol=0.0,
        restart=restart,
        maxiter=max(1, math.ceil(max_iterations / restart)),
        callback=_count,
        callback_type="pr_norm",
    )
    s_norm = float(np.linalg.norm(s))
    residual = float(np.linalg.norm(_matvec(x) - s)) / s_norm
    if info != 0 or residual > rtol:
        raise NonConvergenceError("solve_potential did not converge", residual=residual, iterations=iterations)
    x = x - mean_w @ x
    # whatever the pinned modes absorbed is the part of σ outside the range of 𝒦_ρ
    off_range = float(np.linalg.norm(_apply(x) - s)) / s_norm
    if off_range > RANGE_RTOL:
        raise NonConvergenceError("solve_potential: σ is not in the range of the Onsager operator", off_range, iterations)
    logger.debug("solve_potential: %d iterations, residual %.2e, off-range %.2e", iterations, residual, off_range)
    return RadialField(grid, x)


# ── Geodesics ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GeodesicState:
    """(ρ, Φ) on a geodesic; ρ is kept as a plain EVEN field since paths may undershoot zero."""

    rho: RadialField
    phi: RadialField
    t: float = 0.0
    hamiltonian_0: float = 0.0

    @classmethod
    def initial(cls, grid: RadialGrid, rho: Density | RadialField, phi: RadialField) -> "GeodesicState":
        f = _field(rho)
        phi = gauge_fix(grid, f, phi)
        return cls(f, phi, 0.0, hamiltonian(grid, f, phi))


def geodesic_rhs(grid: RadialGrid, state: GeodesicState) -> tuple[RadialField, RadialField]:
    """∂tρ = −𝒦_ρΦ,  ∂tΦ = −½(|∇Φ|²Lρ + (−Δ)^{-1}(|∇Φ|²ρ)) + ∇Φ·(−Δ)^{-1}(ρ∇Φ)."""
    rho, phi = state.rho, state.phi
    L = newtonian_potential(grid, rho).u
    grad = ddr(grid, phi)
    V = vector_newtonian_potential(grid, rho * grad).u
    drho = -div_radial(grid, rho * L * grad - rho * V)
    grad_sq = grad * grad
    dphi = -0.5 * (grad_sq * L + newtonian_potential(grid, grad_sq * rho).u) + grad * V
    return drho, dphi


def _negative_mass_fraction(grid: RadialGrid, rho: RadialField) -> float:
    v = rho.values
    total = math.fsum(grid.weights * np.abs(v))
    if total <= 0.0:
        return 0.0
    return math.fsum(grid.weights * np.maximum(-v, 0.0)) / total


def _geodesic_step(grid: RadialGrid, state: GeodesicState, dt: float) -> GeodesicState:
    def _stage(rho: np.ndarray, phi: np.ndarray):
        drho, dphi = geodesic_rhs(grid, GeodesicState(RadialField(grid, rho), RadialField(grid, phi)))
        return drho.values, dphi.values

    r0, p0 = state.rho.values, state.phi.values
    a1, b1 = _stage(r0, p0)
    a2, b2 = _stage(r0 + 0.5 * dt * a1, p0 + 0.5 * dt * b1)
    a3, b3 = _stage(r0 + 0.5 * dt * a2, p0 + 0.5 * dt * b2)
    a4, b4 = _stage(r0 + dt * a3, p0 + dt * b3)
    rho = r0 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    phi = p0 + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
    t = state.t + dt
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(phi))):
        raise NumericalBlowupError("non-finite geodesic state", step=-1, t=t)
    return GeodesicState(RadialField(grid, rho), RadialField(grid, phi), t, state.hamiltonian_0)


@dataclass(frozen=True)
class PathSample:
    t: float
    rho: RadialField
    phi: RadialField


@dataclass
class GeodesicRun:
    samples: list[PathSample] = field(default_factory=list)
    hamiltonian_0: float = 0.0
    max_relative_drift: float = 0.0
    final: GeodesicState | None = None


def geodesic_integrate(
    grid: RadialGrid,
    state0: GeodesicState,
    t_end: float,
    dt: float,
    sample_every: int = 10,
    track_hamiltonian: bool = True,
) -> GeodesicRun:
    """RK4 on the Hamiltonian system with a fixed step that lands on t_end."""
    if dt <= 0.0:
        raise UsageError(f"geodesic dt must be positive, got {dt}")
    steps = max(0, math.ceil(t_end / dt - 1e-9))
    dt = t_end / steps if steps else dt

    h0 = state0.hamiltonian_0
    run = GeodesicRun(samples=[PathSample(state0.t, state0.rho, state0.phi)], hamiltonian_0=h0)
    state = state0
    for step in range(1, steps + 1):
        try:
            state = _geodesic_step(grid, state, dt)
        except NumericalBlowupError as exc:
            raise NumericalBlowupError("non-finite geodesic state", step=step, t=state.t + dt) from exc
        negative = _negative_mass_fraction(grid, state.rho)
        if negative > NEGATIVE_MASS_LIMIT:
            raise NumericalError(f"geodesic density lost positivity: negative mass fraction {negative:.2e} at t={state.t:.6g}")
        if track_hamiltonian:
            drift = abs(hamiltonian(grid, state.rho, state.phi) - h0) / max(abs(h0), 1e-12)
            run.max_relative_drift = max(run.max_relative_drift, drift)
        if step % sample_every == 0 or step == steps:
            run.samples.append(PathSample(state.t, state.rho, state.phi))
    run.final = state
    logger.info("geodesic: t_end=%g steps=%d H0=%.6e max drift %.2e", t_end, steps, h0, run.max_relative_drift)
    return run


def path_action(
    grid: RadialGrid,
    times: Sequence[float],
    rhos: Sequence[RadialField | Density],
    phis: Sequence[RadialField],
    continuity_tol: float = 1e-2,
) -> float:
    """∫ g_ρ(∂tρ, ∂tρ) dt by the time trapezoid, with ∂tρ represented by φ through ∂tρ = −𝒦_ρφ."""
    if not (len(times) == len(rhos) == len(phis)):
        raise UsageError(f"path_action: {len(times)} times, {len(rhos)} densities, {len(phis)} potentials")
    if len(times) < 2:
        return 0.0
    rhos = [_field(r) for r in rhos]

    velocities = [-apply_onsager(grid, r, p).values for r, p in zip(rhos, phis)]
    for k in range(len(times) - 1):
        dt = times[k + 1] - times[k]
        observed = (rhos[k + 1].values - rhos[k].values) / dt
        predicted = 0.5 * (velocities[k] + velocities[k + 1])
        scale = math.fsum(grid.weights * np.abs(predicted)) + math.fsum(grid.weights * np.abs(observed))
        defect = math.fsum(grid.weights * np.abs(observed - predicted))
        if scale > 0.0 and defect > continuity_tol * scale:
            logger.warning("path_action: continuity defect %.2e between t=%g and t=%g", defect / scale, times[k], times[k + 1])

    values = [metric_form(grid, r, p, p) for r, p in zip(rhos, phis)]
    return float(trapezoid(values, x=np.asarray(times, dtype=float)))


def geodesic_path_action(grid: RadialGrid, run: GeodesicRun) -> float:
    return path_action(grid, [s.t for s in run.samples], [s.rho for s in run.samples], [s.phi for s in run.samples])


def geodesic_entropy_curvature(
    grid: RadialGrid,
    rho: Density | RadialField,
    dt: float = 1e-3,
    floor_eps: float = 1e-30,
) -> float:
    """d²𝓔/dt² at t=0 along the geodesic launched from (ρ, −log ρ), by a centred difference over ±dt."""
    f = _field(rho)
    phi = RadialField(grid, -np.log(np.maximum(f.values, floor_eps)))
    start = GeodesicState.initial(grid, f, phi)
    ahead = _geodesic_step(grid, start, dt)
    behind = _geodesic_step(grid, GeodesicState(start.rho, -start.phi, 0.0, start.hamiltonian_0), dt)

    def _entropy(r: RadialField) -> float:
        return entropy(grid, r.with_values(np.maximum(r.values, 0.0)))

    return (_entropy(ahead.rho) - 2.0 * _entropy(f) + _entropy(behind.rho)) / dt**2


# ── Distances ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ShootingResult:
    wk_estimate: float
    phi0: RadialField
    terminal_residual: float
    iterations: int
    converged: bool


def shooting_basis(grid: RadialGrid, size: int = SHOOTING_BASIS_SIZE) -> list[RadialField]:
    """Centred Gaussians exp(−r²/2w²) with widths spread geometrically over [0.3, 4]."""
    widths = np.geomspace(0.3, 4.0, size)
    return [RadialField.from_function(grid, lambda r, w=w: np.exp(-0.5 * (r / w) ** 2)) for w in widths]


def l1_distance(grid: RadialGrid, a: RadialField, b: RadialField) -> float:
    return math.fsum(grid.weights * np.abs(a.values - b.values))


def _check_masses(grid: RadialGrid, rho0: RadialField, rho1: RadialField) -> None:
    if not grid.matches(rho0.grid) or not grid.matches(rho1.grid):
        raise UsageError("both densities must live on the working grid")
    m0, m1 = integrate(grid, rho0), integrate(grid, rho1)
    if abs(m0 - m1) > MASS_MATCH_TOL:
        raise UsageError(f"endpoint masses differ: {m0:.12g} vs {m1:.12g}")


def wk_distance_shooting(
    grid: RadialGrid,
    rho0: Density | RadialField,
    rho1: Density | RadialField,
    rtol: float = 1e-4,
    max_iterations: int = 40,
    dt: float = 0.01,
) -> ShootingResult:
    """Estimate W_K(ρ₀, ρ₁) by shooting on Φ₀ over a fixed smooth radial basis.

    EXPERIMENTAL: the estimate is the action of the geodesic found, so it
    bounds the distance from above; global optimality is not certified.
    """
    f0, f1 = _field(rho0), _field(rho1)
    _check_masses(grid, f0, f1)
    if np.array_equal(f0.values, f1.values):
        return ShootingResult(0.0, RadialField.zeros(grid), 0.0, 0, True)

    basis = np.array([b.values for b in shooting_basis(grid)])
    weights = grid.weights
    evaluations = 0

    def _phi0(c: np.ndarray) -> RadialField:
        return gauge_fix(grid, f0, RadialField(grid, c @ basis))

    def _terminal(c: np.ndarray) -> RadialField:
        state = GeodesicState.initial(grid, f0, _phi0(c))
        return geodesic_integrate(grid, state, 1.0, dt, sample_every=10**9, track_hamiltonian=False).final.rho

    def _residual(c: np.ndarray) -> np.ndarray:
        nonlocal evaluations
        evaluations += 1
        return weights * (_terminal(c).values - f1.values)

    try:
        fit = least_squares(_residual, np.zeros(len(basis)), method="trf", max_nfev=max_iterations, x_scale="jac")
        coeffs = fit.x
    except NumericalError as exc:
        logger.warning("shooting aborted: %s", exc)
        return ShootingResult(math.nan, RadialField.zeros(grid), math.inf, evaluations, False)

    phi0 = _phi0(coeffs)
    residual = l1_distance(grid, _terminal(coeffs), f1)
    converged = residual < rtol
    wk = math.sqrt(max(2.0 * hamiltonian(grid, f0, phi0), 0.0))
    if not converged:
        logger.warning("shooting did not converge: L1 residual %.3e after %d evaluations", residual, evaluations)
    return ShootingResult(wk, phi0, residual, evaluations, converged)


def _mean_free(grid: RadialGrid, rho: RadialField, sigma: RadialField) -> RadialField:
    """σ minus the multiple of ρ that carries its total; removes the flux left at r_max."""
    total = integrate(grid, sigma)
    if total == 0.0:
        return sigma
    return sigma - rho * (total / integrate(grid, rho))


def interpolation_path_action(
    grid: RadialGrid,
    rho0: Density | RadialField,
    rho1: Density | RadialField,
    samples: int = 11,
    perturbation: float = 0.0,
    seed: int = 0,
) -> float:
    """Action of the straight path ρ₀ + t·σ, optionally bent by a seeded mass-neutral t(1−t)ψ.

    σ is the divergence of the radial flux carrying ρ₀'s mass function onto
    ρ₁'s, and ψ the divergence of a seeded oscillating flux, so every velocity
    along the path is in the range of the Onsager operator.
    """
    f0, f1 = _field(rho0), _field(rho1)
    _check_masses(grid, f0, f1)
    r = grid.nodes
    flux = np.zeros(grid.n)
    dF = mass_function(grid, f1) - mass_function(grid, f0)
    flux[1:] = dF[1:] / (4.0 * math.pi * r[1:] ** 2)
    sigma = _mean_free(grid, f0, div_radial(grid, RadialField(grid, flux, Parity.ODD)))

    rng = np.random.default_rng(seed)
    k, phase = rng.uniform(0.5, 2.0), rng.uniform(0.0, math.pi)
    bump_flux = perturbation * r * 0.5 * (f0.values + f1.values) * np.cos(k * r + phase)
    psi = _mean_free(grid, f0, div_radial(grid, RadialField(grid, bump_flux, Parity.ODD)))

    times = np.linspace(0.0, 1.0, samples)
    rhos, phis = [], []
    for t in times:
        rho_t = f0 + t * sigma + t * (1.0 - t) * psi
        velocity = sigma + (1.0 - 2.0 * t) * psi
        rhos.append(rho_t)
        phis.append(solve_potential(grid, rho_t, velocity))
    return path_action(grid, list(times), rhos, phis)


def mass_function(grid: RadialGrid, rho: Density | RadialField) -> np.ndarray:
    """F(r) = 4π∫₀^r s²ρ(s) ds at every node."""
    f = _field(rho)
    return cumulative_trapezoid(4.0 * math.pi * grid.nodes**2 * f.values, dx=grid.h, initial=0.0)


def w1_from_mass_functions(grid: RadialGrid, F0: np.ndarray, F1: np.ndarray) -> float:
    return float(trapezoid(np.abs(np.asarray(F0) - np.asarray(F1)), dx=grid.h))


def w1_radial(grid: RadialGrid, rho0: Density | RadialField, rho1: Density | RadialField) -> float:
    """W₁ = ∫₀^∞ |F₀(r) − F₁(r)| dr for radial measures of equal mass."""
    f0, f1 = _field(rho0), _field(rho1)
    _check_masses(grid, f0, f1)
    return w1_from_mass_functions(grid, mass_function(grid, f0), mass_function(grid, f1))


def w1_lp_oracle(
    grid: RadialGrid,
    rho0: Density | RadialField,
    rho1: Density | RadialField,
    points_per_axis: int = 11,
    half_width: float | None = None,
) -> float:
    """Exact transport LP between the two densities sampled on one Cartesian cloud.

    Each sample is normalized to unit mass; the result is scaled back by the
    mass of ρ₀. Test oracle only.
    """
    if points_per_axis**3 > LP_MAX_POINTS:
        raise ResourceError(f"LP oracle cloud has {points_per_axis**3} points, limit is {LP_MAX_POINTS}")
    f0, f1 = _field(rho0), _field(rho1)
    _check_masses(grid, f0, f1)
    half_width = grid.r_max / math.sqrt(3.0) if half_width is None else half_width

    def _profile(f: RadialField):
        return lambda radius: np.interp(radius, grid.nodes, f.values, right=0.0)

    points, a, _ = sample_cartesian_cloud(_profile(f0), points_per_axis, half_width)
    _, b, _ = sample_cartesian_cloud(_profile(f1), points_per_axis, half_width)
    if a.sum() <= 0.0 or b.sum() <= 0.0:
        raise UsageError("a density has no mass on the LP cloud")
    cost = cdist(points, points)
    return float(ot.emd2(a / a.sum(), b / b.sum(), cost)) * integrate(grid, f0)


@dataclass(frozen=True)
class InequalityRow:
    label: str
    w1: float
    wk: float
    ratio: float


@dataclass(frozen=True)
class InequalityReport:
    rows: list[InequalityRow]

    @property
    def max_ratio(self) -> float:
        return max((row.ratio for row in self.rows), default=0.0)

    @property
    def all_finite(self) -> bool:
        return all(math.isfinite(row.ratio) for row in self.rows)


def w1_wk_inequality_report(pairs: Sequence[tuple[str, float, ShootingResult]]) -> InequalityReport:
    """Empirical W₁/W_K per pair; identical endpoints count as ratio 0."""
    rows = []
    for label, w1, shot in pairs:
        if not shot.converged:
            logger.warning("pair %s: shooting did not converge, ratio reported as nan", label)
            ratio = math.nan
        elif shot.wk_estimate == 0.0:
            ratio = 0.0 if w1 == 0.0 else math.inf
        else:
            ratio = w1 / shot.wk_estimate
        rows.append(InequalityRow(label, w1, shot.wk_estimate, ratio))
    return InequalityReport(rows)
