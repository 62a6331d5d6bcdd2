"""
Scalar functionals and checks evaluated on radial densities and on run traces.

State functionals (entropy, dissipation, moments, the Hessian of the entropy,
the positivity integrand behind the entropy rate bound) take a grid and a
density. Trace checks (κ-Fisher relation, rate bound, sup-norm and moment
fits) take the list of DiagnosticsRecord rows produced by a run.
"""

import logging
import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import xlogy

from utils.errors import ConfigurationError, InsufficientDataError, ResourceError, UsageError
from utils.grid import Density, Parity, RadialField, RadialGrid, d2dr2, ddr, div_radial, integrate
from utils.potential import newtonian_potential, vector_newtonian_potential

logger = logging.getLogger(__name__)

DEFAULT_FLOOR_EPS = 1e-30
DOUBLE_ORACLE_MAX_NODES = 1025
SUPNORM_MIN_ROWS = 8


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    entropy: float
    dEdt_fd: float | None
    dissipation: float | None
    second_moment: float
    kappa: float
    fisher_weighted: float
    sup_rho: float
    sup_Lrho: float
    hessian_value: float | None
    d2Edt2_fd: float | None
    cube_norm: float
    eqnpos_value: float | None
    rate_alpha: float | None


TRACE_COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))


class Moments(NamedTuple):
    mass: float
    second_moment: float
    cube_norm: float
    sup_rho: float
    sup_Lrho: float


class HessianTerms(NamedTuple):
    total: float
    term1: float
    term2: float
    term3: float
    term4: float
    closed_form: float


class KappaFisherCheck(NamedTuple):
    lhs: float
    holds: bool
    kappa: float
    fisher_weighted: float


def _field(rho: Density | RadialField) -> RadialField:
    return rho.field if isinstance(rho, Density) else rho


def _positive_mask(values: np.ndarray, floor_eps: float) -> np.ndarray:
    return values >= floor_eps


# ── State functionals ────────────────────────────────────────────────────────

def entropy(grid: RadialGrid, rho: Density | RadialField) -> float:
    """∫ρ log ρ with 0 log 0 = 0."""
    f = _field(rho)
    return integrate(grid, f.with_values(xlogy(f.values, f.values)))


def moments_and_sups(grid: RadialGrid, rho: Density | RadialField) -> Moments:
    f = _field(rho)
    r = grid.nodes
    L = newtonian_potential(grid, f).u
    return Moments(
        mass=integrate(grid, f),
        second_moment=integrate(grid, f.with_values(0.5 * r**2 * f.values)),
        cube_norm=integrate(grid, f.with_values(f.values**3)),
        sup_rho=float(np.max(f.values)),
        sup_Lrho=float(np.max(L.values)),
    )


def kappa(second_moment: float) -> float:
    """κ = 1/(8π(√E + 1))."""
    return 1.0 / (8.0 * math.pi * (math.sqrt(max(second_moment, 0.0)) + 1.0))


def fisher_weighted(grid: RadialGrid, rho: Density | RadialField) -> float:
    """∫|∇√ρ|²/(1+|x|)."""
    f = _field(rho)
    root = f.with_values(np.sqrt(np.maximum(f.values, 0.0)))
    grad = ddr(grid, root).values
    return integrate(grid, f.with_values(grad**2 / (1.0 + grid.nodes)))


def dissipation_closed(grid: RadialGrid, rho: Density | RadialField, floor_eps: float = DEFAULT_FLOOR_EPS) -> float:
    """D = ∫Lρ|∇ρ|²/ρ − ∫ρ², with |∇ρ|²/ρ set to 0 where ρ < floor_eps."""
    f = _field(rho)
    v = f.values
    L = newtonian_potential(grid, f).u.values
    grad = ddr(grid, f).values
    mask = _positive_mask(v, floor_eps)
    fisher_density = np.zeros(grid.n)
    fisher_density[mask] = grad[mask] ** 2 / v[mask]
    return integrate(grid, f.with_values(L * fisher_density)) - integrate(grid, f.with_values(v**2))


def dissipation_double_oracle(
    grid: RadialGrid,
    rho: Density | RadialField,
    floor_eps: float = DEFAULT_FLOOR_EPS,
) -> float:
    """(1/8π)∬ρ(x)ρ(y)/|x−y| · |∇logρ(x) − ∇logρ(y)|² by two-radius quadrature.

    With g = ρ′/ρ the angular averages are ⟨1/|x−y|⟩ = 1/max(r,s) and
    ⟨cos θ/|x−y|⟩ = min(r,s)/(3 max(r,s)²), so the integrand over (r, s) is

        ρ(r)ρ(s)[(g(r)² + g(s)²)/max − 2g(r)g(s)·min/(3 max²)]

    weighted by the grid's volume weights in both variables. Test oracle only.
    """
    if grid.n > DOUBLE_ORACLE_MAX_NODES:
        raise ResourceError(f"dissipation_double_oracle supports n <= {DOUBLE_ORACLE_MAX_NODES}, got {grid.n}")
    f = _field(rho)
    v = f.values
    mask = _positive_mask(v, floor_eps)
    g = np.zeros(grid.n)
    g[mask] = ddr(grid, f).values[mask] / v[mask]

    r = grid.nodes
    big = np.maximum.outer(r, r)
    small = np.minimum.outer(r, r)
    inv_big = np.divide(1.0, big, out=np.zeros_like(big), where=big > 0)
    q = grid.weights * v
    gg = g[:, None] ** 2 + g[None, :] ** 2
    kernel = gg * inv_big - 2.0 * np.outer(g, g) * small * inv_big**2 / 3.0
    return float(q @ kernel @ q) / (8.0 * math.pi)


def kappa_fisher_check(
    grid: RadialGrid,
    rho: Density | RadialField,
    dEdt_fd: float,
    tol_rel: float = 1e-6,
) -> KappaFisherCheck:
    """lhs = d𝓔/dt + κ∫|∇√ρ|²/(1+r); holds when lhs ≤ tol_rel·|d𝓔/dt|."""
    m = moments_and_sups(grid, rho)
    k = kappa(m.second_moment)
    fw = fisher_weighted(grid, rho)
    lhs = dEdt_fd + k * fw
    return KappaFisherCheck(lhs, lhs <= tol_rel * abs(dEdt_fd), k, fw)


def _entropy_potential_parts(grid: RadialGrid, f: RadialField, floor_eps: float):
    """Φ′, Φ″ for Φ = −log ρ, masked where ρ < floor_eps, and ρ′."""
    v = f.values
    mask = _positive_mask(v, floor_eps)
    rho_p = ddr(grid, f)
    phi_p = np.zeros(grid.n)
    phi_p[mask] = -rho_p.values[mask] / v[mask]
    phi_p[0] = 0.0
    log_phi = f.with_values(-np.log(np.maximum(v, floor_eps)))
    phi_pp = np.where(mask, d2dr2(grid, log_phi).values, 0.0)
    return RadialField(grid, phi_p, Parity.ODD), phi_pp, rho_p, mask


def hessian_entropy(
    grid: RadialGrid,
    rho: Density | RadialField,
    floor_eps: float = DEFAULT_FLOOR_EPS,
) -> HessianTerms:
    """Riemannian Hessian of the entropy in the direction Φ = −log ρ.

    `total` is the second variation itself. Along the flow σ = 𝒦_ρ log ρ the
    entropy decreases at rate D(ρ), so

        Hess 𝓔(Φ, Φ) = −(1/2) dD(ρ)[σ]

    with dD the exact linearisation of `dissipation_closed` on the grid.

    The four closed-form terms

        term1 = −(3/2)∫ρ²Lρ|∇Φ|²
        term2 =   ∫ρ²∇Φ·(−Δ)^{-1}(ρ∇Φ)
        term3 = −(1/4)∫∇ρ·∇(Lρ)²|∇Φ|²
        term4 =   ∫ρ(Lρ)²‖∇²Φ‖²

    with ‖∇²Φ‖² = Φ″² + 2(Φ′/r)² (3Φ″(0)² at the origin) are reported beside
    it; their sum is `closed_form`. On a Gaussian that sum sits about 30%
    below `total`, which agrees with the curvature of 𝓔 along the geodesic.
    """
    f = _field(rho)
    v = f.values
    if not np.any(v > 0.0):
        return HessianTerms(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    L = newtonian_potential(grid, f).u
    phi_p, phi_pp, rho_p, mask = _entropy_potential_parts(grid, f, floor_eps)
    V = vector_newtonian_potential(grid, -rho_p).u
    grad_sq = (phi_p * phi_p).values

    r = grid.nodes
    hess_sq = np.empty(grid.n)
    hess_sq[0] = 3.0 * phi_pp[0] ** 2
    hess_sq[1:] = phi_pp[1:] ** 2 + 2.0 * (phi_p.values[1:] / r[1:]) ** 2
    hess_sq = np.where(mask, hess_sq, 0.0)

    Lv = L.values
    term1 = -1.5 * integrate(grid, f.with_values(v**2 * Lv * grad_sq))
    term2 = integrate(grid, f.with_values(v**2 * (phi_p * V).values))
    term3 = -0.25 * integrate(grid, f.with_values((rho_p * ddr(grid, L * L)).values * grad_sq))
    term4 = integrate(grid, f.with_values(v * Lv**2 * hess_sq))

    sigma = div_radial(grid, L * rho_p - f * ddr(grid, L))
    total = -0.5 * dissipation_derivative(grid, f, sigma, floor_eps)
    return HessianTerms(total, term1, term2, term3, term4, term1 + term2 + term3 + term4)


def dissipation_derivative(
    grid: RadialGrid,
    rho: Density | RadialField,
    sigma: RadialField,
    floor_eps: float = DEFAULT_FLOOR_EPS,
) -> float:
    """d/dε of `dissipation_closed` at ρ + εσ, with the floor mask of ρ held fixed.

        ∫L[σ]|∇ρ|²/ρ + ∫Lρ(2∇ρ·∇σ/ρ − |∇ρ|²σ/ρ²) − 2∫ρσ
    """
    f = _field(rho)
    v = f.values
    s = sigma.values
    mask = _positive_mask(v, floor_eps)
    L = newtonian_potential(grid, f).u.values
    L_sigma = newtonian_potential(grid, sigma, clamp=False).u.values
    grad = ddr(grid, f).values
    grad_sigma = ddr(grid, sigma).values

    fisher_density = np.zeros(grid.n)
    fisher_change = np.zeros(grid.n)
    fisher_density[mask] = grad[mask] ** 2 / v[mask]
    fisher_change[mask] = 2.0 * grad[mask] * grad_sigma[mask] / v[mask] - grad[mask] ** 2 * s[mask] / v[mask] ** 2
    return (
        integrate(grid, f.with_values(L_sigma * fisher_density))
        + integrate(grid, f.with_values(L * fisher_change))
        - 2.0 * integrate(grid, f.with_values(v * s))
    )


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma < 1.0 / 7.0:
        raise ConfigurationError(f"diag.gamma must lie in (0, 1/7), got {gamma}", key="diag.gamma")


def rate_alpha(gamma: float) -> float:
    """α = (1 − 7γ)/2."""
    _check_gamma(gamma)
    return 0.5 * (1.0 - 7.0 * gamma)


def eqnpos_check(
    grid: RadialGrid,
    rho: Density | RadialField,
    gamma: float,
    floor_eps: float = DEFAULT_FLOOR_EPS,
) -> float:
    """∫(2γρ − |∇ρ|²Lρ/ρ²)(ρ∇Φ·(−Δ)^{-1}(ρ∇Φ) + 3ρ²); ≥ 0 means the assumption holds here."""
    _check_gamma(gamma)
    f = _field(rho)
    v = f.values
    if not np.any(v > 0.0):
        return 0.0

    L = newtonian_potential(grid, f).u.values
    phi_p, _, rho_p, mask = _entropy_potential_parts(grid, f, floor_eps)
    V = vector_newtonian_potential(grid, -rho_p).u
    ratio = np.zeros(grid.n)
    ratio[mask] = rho_p.values[mask] ** 2 * L[mask] / v[mask] ** 2
    first = 2.0 * gamma * v - ratio
    second = v * (phi_p * V).values + 3.0 * v**2
    return integrate(grid, f.with_values(first * second))


def poincare_constant(
    grid: RadialGrid,
    rho: Density | RadialField,
    phis: Sequence[RadialField],
    eps: float,
) -> float:
    """Smallest C_ε certifying ∫ρφ² ≤ ε∫Lρ|∇φ|² + C_ε∫φ² over the given family."""
    if not phis:
        raise UsageError("poincare_constant needs a non-empty family of test functions")
    f = _field(rho)
    L = newtonian_potential(grid, f).u.values
    best = -math.inf
    for phi in phis:
        norm = integrate(grid, phi * phi)
        if norm <= 0.0:
            raise UsageError("poincare_constant test function has zero L² norm on the grid")
        grad = ddr(grid, phi).values
        num = integrate(grid, f * phi * phi) - eps * integrate(grid, f.with_values(L * grad**2))
        best = max(best, num / norm)
    return max(best, 0.0)


def default_test_family(grid: RadialGrid) -> list[RadialField]:
    """20 even Gaussian bumps: 5 centres × 4 widths."""
    family = []
    for centre in (0.0, 0.5, 1.0, 2.0, 3.0):
        for width in (0.25, 0.5, 1.0, 2.0):
            family.append(
                RadialField.from_function(
                    grid,
                    lambda r, c=centre, w=width: np.exp(-0.5 * ((r - c) / w) ** 2) + np.exp(-0.5 * ((r + c) / w) ** 2),
                )
            )
    return family


# ── Records ──────────────────────────────────────────────────────────────────

def evaluate_record(
    grid: RadialGrid,
    rho: Density,
    t: float,
    gamma: float,
    floor_eps: float = DEFAULT_FLOOR_EPS,
    gradient_flow: bool = True,
) -> DiagnosticsRecord:
    """One trace row; finite-difference columns are filled later by with_time_derivatives."""
    m = moments_and_sups(grid, rho)
    return DiagnosticsRecord(
        t=t,
        mass=m.mass,
        entropy=entropy(grid, rho),
        dEdt_fd=None,
        dissipation=dissipation_closed(grid, rho, floor_eps) if gradient_flow else None,
        second_moment=m.second_moment,
        kappa=kappa(m.second_moment),
        fisher_weighted=fisher_weighted(grid, rho),
        sup_rho=m.sup_rho,
        sup_Lrho=m.sup_Lrho,
        hessian_value=hessian_entropy(grid, rho, floor_eps).total if gradient_flow else None,
        d2Edt2_fd=None,
        cube_norm=m.cube_norm,
        eqnpos_value=eqnpos_check(grid, rho, gamma, floor_eps) if gradient_flow else None,
        rate_alpha=rate_alpha(gamma),
    )


def with_time_derivatives(records: Sequence[DiagnosticsRecord]) -> list[DiagnosticsRecord]:
    """Fill dEdt_fd and d2Edt2_fd at interior rows by three-point differences on possibly uneven times."""
    out = list(records)
    for i in range(1, len(records) - 1):
        t0, t1, t2 = records[i - 1].t, records[i].t, records[i + 1].t
        e0, e1, e2 = records[i - 1].entropy, records[i].entropy, records[i + 1].entropy
        h1, h2 = t1 - t0, t2 - t1
        if h1 <= 0.0 or h2 <= 0.0:
            continue
        denom = h1 * h2 * (h1 + h2)
        first = (h1**2 * e2 + (h2**2 - h1**2) * e1 - h2**2 * e0) / denom
        second = 2.0 * (h1 * e2 - (h1 + h2) * e1 + h2 * e0) / denom
        out[i] = replace(records[i], dEdt_fd=first, d2Edt2_fd=second)
    return out


# ── Trace checks ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RateBoundRow:
    t: float
    dEdt_fd: float
    bound: float
    margin: float
    asserted: bool
    holds: bool


@dataclass(frozen=True)
class RateBoundReport:
    rate_alpha: float
    rows: list[RateBoundRow]
    status: str

    @property
    def violations(self) -> list[RateBoundRow]:
        return [row for row in self.rows if row.asserted and not row.holds]


def _trapezoid_tail(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """∫_{t_k}^{t_end} y dt for every k."""
    segments = 0.5 * (y[1:] + y[:-1]) * np.diff(t)
    tail = np.zeros(len(t))
    tail[:-1] = np.cumsum(segments[::-1])[::-1]
    return tail


def rate_bound_check(records: Sequence[DiagnosticsRecord], gamma: float, slack: float = 1e-6) -> RateBoundReport:
    """Compare d𝓔/dt with −α∫_t^{t_end}∫ρ³ on rows where the positivity assumption holds."""
    alpha = rate_alpha(gamma)
    if not records:
        return RateBoundReport(alpha, [], "no rows")
    t = np.array([r.t for r in records])
    tail = _trapezoid_tail(t, np.array([r.cube_norm for r in records]))

    rows = []
    for rec, tail_k in zip(records, tail):
        if rec.dEdt_fd is None:
            continue
        bound = -alpha * float(tail_k)
        asserted = rec.eqnpos_value is not None and rec.eqnpos_value >= 0.0
        rows.append(
            RateBoundRow(
                t=rec.t,
                dEdt_fd=rec.dEdt_fd,
                bound=bound,
                margin=bound - rec.dEdt_fd,
                asserted=asserted,
                holds=rec.dEdt_fd <= bound + slack,
            )
        )

    if not any(row.asserted for row in rows):
        status = "assumption violated, bound not asserted"
    elif all(row.holds for row in rows if row.asserted):
        status = "bound holds on all asserted rows"
    else:
        status = "bound violated"
    skipped = sum(not row.asserted for row in rows)
    if skipped:
        logger.warning("eqnpos assumption fails on %d of %d rows; bound not asserted there", skipped, len(rows))
    return RateBoundReport(alpha, rows, status)


@dataclass(frozen=True)
class SupNormFit:
    s1_hat: float
    s2_hat: float
    c1_hat: float
    c2_hat: float

    @property
    def s1_admissible(self) -> bool:
        return self.s1_hat > 1.0

    @property
    def s2_admissible(self) -> bool:
        return self.s2_hat > 1.0 / 3.0


def _power_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares exponent and constant of y ≈ c·x^s."""
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(math.exp(intercept))


def _power_envelope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares exponent s, with c raised so that y ≤ c·x^s on every row."""
    s, _ = _power_fit(x, y)
    return s, float(np.max(y / x**s))


def supnorm_fit(records: Sequence[DiagnosticsRecord]) -> SupNormFit:
    """Bounds ‖ρ‖_∞ ≤ c₁(1/t+1)^{s₁} and ‖Lρ‖_∞ ≤ c₂(1/t+1)^{s₂} over rows with t > 0.

    The exponents are log-log least-squares slopes; each constant is the
    smallest one that makes the power law an upper bound on the fitted rows.
    """
    rows = [r for r in records if r.t > 0.0]
    if len(rows) < SUPNORM_MIN_ROWS:
        raise InsufficientDataError(f"supnorm_fit needs at least {SUPNORM_MIN_ROWS} rows with t > 0, got {len(rows)}")
    x = np.array([1.0 / r.t + 1.0 for r in rows])
    s1, c1 = _power_envelope(x, np.array([r.sup_rho for r in rows]))
    s2, c2 = _power_envelope(x, np.array([r.sup_Lrho for r in rows]))
    return SupNormFit(s1, s2, c1, c2)


@dataclass(frozen=True)
class HoldoutCheck:
    fit: SupNormFit
    max_ratio: float
    holds: bool


def supnorm_holdout_check(records: Sequence[DiagnosticsRecord], tolerance: float = 0.05) -> HoldoutCheck:
    """Fit on even-indexed rows; check ‖ρ‖_∞ ≤ (1+tolerance)·c₁(1/t+1)^{s₁} on the odd-indexed ones."""
    rows = [r for r in records if r.t > 0.0]
    fit = supnorm_fit(rows[::2])
    held_out = rows[1::2]
    ratios = [r.sup_rho / (fit.c1_hat * (1.0 / r.t + 1.0) ** fit.s1_hat) for r in held_out]
    max_ratio = max(ratios) if ratios else 0.0
    return HoldoutCheck(fit, max_ratio, max_ratio <= 1.0 + tolerance)


@dataclass(frozen=True)
class MomentGrowthFit:
    q_hat: float
    c_hat: float
    q_local_max: float


def moment_growth_fit(records: Sequence[DiagnosticsRecord]) -> MomentGrowthFit:
    """E(t) ≈ C(1+t)^q by least squares on log-log axes.

    `q_local_max` is the steepest slope between consecutive rows, the growth
    exponent the trace itself never exceeds.
    """
    rows = [r for r in records if r.t > 0.0 and r.second_moment > 0.0]
    if len(rows) < 3:
        raise InsufficientDataError(f"moment_growth_fit needs at least 3 rows with t > 0, got {len(rows)}")
    x = np.log([1.0 + r.t for r in rows])
    y = np.log([r.second_moment for r in rows])
    q, c = _power_fit(np.exp(x), np.exp(y))
    dx = np.diff(x)
    local = np.diff(y)[dx > 0.0] / dx[dx > 0.0]
    return MomentGrowthFit(q, c, float(local.max()) if local.size else q)


def cumulative_fisher(records: Sequence[DiagnosticsRecord]) -> float:
    """∫₀ᵀ∫|∇√ρ|²/(1+|x|) dx dt by the trapezoid rule over the trace."""
    if len(records) < 2:
        return 0.0
    t = np.array([r.t for r in records])
    y = np.array([r.fisher_weighted for r in records])
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def hessian_dissipation_ratio(records: Sequence[DiagnosticsRecord]) -> tuple[float, float] | None:
    """min and max of hessian_value / dissipation over rows that have both."""
    ratios = [
        r.hessian_value / r.dissipation
        for r in records
        if r.hessian_value is not None and r.dissipation is not None and r.dissipation > 0.0
    ]
    if not ratios:
        return None
    return min(ratios), max(ratios)
