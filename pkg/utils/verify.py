"""
Run summaries and the identity suite behind `iso_landau verify`.

`summarize_run` turns a flow trace into the report.json body written next to
trace.csv. `VerificationSuite` evaluates every structural identity on fresh
densities and reference runs and emits one pass/fail entry per check, each
with its measured error and the tolerance taken from `utils.tolerances`.
"""

import copy
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from utils.config import SimConfig
from utils.diagnostics import (
    DiagnosticsRecord,
    cumulative_fisher,
    default_test_family,
    dissipation_closed,
    dissipation_double_oracle,
    eqnpos_check,
    hessian_dissipation_ratio,
    hessian_entropy,
    kappa,
    moment_growth_fit,
    poincare_constant,
    rate_bound_check,
    supnorm_fit,
    supnorm_holdout_check,
)
from utils.errors import InsufficientDataError
from utils.geometry import (
    GeodesicState,
    apply_onsager,
    geodesic_entropy_curvature,
    geodesic_integrate,
    geodesic_path_action,
    hamiltonian,
    interpolation_path_action,
    l1_distance,
    mass_function,
    metric_form,
    metric_scale,
    random_smooth_potential,
    shooting_basis,
    w1_from_mass_functions,
    w1_lp_oracle,
    w1_radial,
    w1_wk_inequality_report,
    wk_distance_shooting,
)
from utils.grid import (
    Density,
    RadialField,
    RadialGrid,
    ball_density,
    build_uniform_grid,
    ddr,
    gaussian_density,
    integrate,
)
from utils.landau import FlowTrace, landau_rhs_divform, simulate
from utils.potential import (
    divergence_identity_residual,
    potential_oracle_3d,
    sample_cartesian_cloud,
)
from utils.tolerances import TOLERANCES, tolerance

logger = logging.getLogger(__name__)

# D(M) for the standard Gaussian: (2π)^{-3/2}·5√2/4 − (4π)^{-3/2}
GAUSSIAN_DISSIPATION = (2.0 * math.pi) ** -1.5 * 5.0 * math.sqrt(2.0) / 4.0 - (4.0 * math.pi) ** -1.5
GAUSSIAN_SECOND_MOMENT = 1.5
# along the gradient flow d²E/dt² = 2·Hess(grad E, grad E); along the geodesic it is Hess itself
FLOW_HESSIAN_FACTOR = 2.0


# ---------------------------------------------------------------------------
# Run summary
# ---------------------------------------------------------------------------

def _interior_rows(records: list[DiagnosticsRecord]) -> list[DiagnosticsRecord]:
    return [r for r in records if r.dEdt_fd is not None]


def summarize_run(trace: FlowTrace, gamma: float) -> dict:
    """report.json body for a simulate run."""
    records = trace.records
    entropy_steps = [b.entropy - a.entropy for a, b in zip(records, records[1:])]
    moment_steps = [b.second_moment - a.second_moment for a, b in zip(records, records[1:])]
    interior = _interior_rows(records)

    report: dict = {
        "rows": len(records),
        "t_final": records[-1].t if records else None,
        "error": trace.error,
        "failed_at": trace.failed_at,
        "mass_drift_max": max((abs(r.mass - records[0].mass) for r in records), default=0.0),
        "entropy_monotone": all(step <= tolerance("entropy_step_abs") for step in entropy_steps),
        "entropy_max_increase": max(entropy_steps, default=0.0),
        "second_moment_increasing": all(step >= -tolerance("second_moment_step_abs") for step in moment_steps),
        "cumulative_fisher": cumulative_fisher(records),
    }

    with_d = [r for r in interior if r.dissipation]
    report["h_theorem_max_rel"] = max(
        (abs(r.dEdt_fd + r.dissipation) / abs(r.dissipation) for r in with_d), default=None
    )

    kf_tol = tolerance("kappa_fisher_rel")
    lhs = [r.dEdt_fd + r.kappa * r.fisher_weighted for r in interior]
    report["kappa_fisher"] = {
        "rows": len(lhs),
        "holds_all": all(value <= kf_tol * abs(r.dEdt_fd) for value, r in zip(lhs, interior)),
        "max_lhs": max(lhs, default=None),
    }

    hess_rows = [r for r in interior if r.hessian_value is not None and r.d2Edt2_fd and 0.1 <= r.t <= 1.0]
    report["hessian_agreement"] = {
        "rows": len(hess_rows),
        "max_rel_error": max(
            (abs(FLOW_HESSIAN_FACTOR * r.hessian_value - r.d2Edt2_fd) / abs(r.d2Edt2_fd) for r in hess_rows), default=None
        ),
    }
    ratio = hessian_dissipation_ratio(records)
    report["hessian_dissipation_ratio"] = {"min": ratio[0], "max": ratio[1]} if ratio else None

    if all(r.eqnpos_value is not None for r in records) and records:
        bound = rate_bound_check(records, gamma, slack=tolerance("rate_bound_slack"))
        report["rate_bound"] = {
            "rate_alpha": bound.rate_alpha,
            "status": bound.status,
            "violations": len(bound.violations),
            "rows": [
                {"t": row.t, "margin": row.margin, "asserted": row.asserted, "holds": row.holds}
                for row in bound.rows
            ],
        }
    else:
        report["rate_bound"] = None

    try:
        fit = supnorm_fit(records)
        report["supnorm_fit"] = {
            **asdict(fit),
            "s1_admissible": fit.s1_admissible,
            "s2_admissible": fit.s2_admissible,
        }
    except InsufficientDataError as exc:
        report["supnorm_fit"] = {"error": str(exc)}

    try:
        growth = moment_growth_fit(records)
        report["moment_growth"] = asdict(growth)
    except InsufficientDataError as exc:
        report["moment_growth"] = {"error": str(exc)}
    return report


# ---------------------------------------------------------------------------
# VerificationSuite
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    note: str = ""


class VerificationSuite:
    """Identity checks on the configured grid and its refinements."""

    def __init__(self, config: SimConfig, workers: int = 1):
        self.config = config
        self.workers = max(1, workers)
        n, r_max = config.grid.n, config.grid.r_max
        self.grid = build_uniform_grid(n, r_max)
        self.grid_mid = build_uniform_grid(2 * (n - 1) + 1, r_max)
        self.grid_fine = build_uniform_grid(4 * (n - 1) + 1, r_max)
        self.results: list[CheckResult] = []

    # ── internal helpers ────────────────────────────────────────────────────

    def _add(self, name: str, measured: float, tol_key: str, passed: bool | None = None, note: str = "") -> None:
        tol = tolerance(tol_key)
        if passed is None:
            passed = bool(math.isfinite(measured) and measured <= tol)
        note = note or TOLERANCES[tol_key][1]
        self.results.append(CheckResult(name, float(measured), tol, bool(passed), note))
        log = logger.info if passed else logger.warning
        log("%-32s measured %.3e  tol %.1e  %s", name, measured, tol, "pass" if passed else "FAIL")

    @staticmethod
    def _rel(a: float, b: float) -> float:
        return abs(a - b) / max(abs(b), 1e-300)

    def _densities(self, grid: RadialGrid) -> dict[str, Density]:
        return {
            "gaussian": gaussian_density(grid, 1.0),
            "narrow_gaussian": gaussian_density(grid, 0.7),
            "wide_gaussian": gaussian_density(grid, 1.3),
            "smoothed_ball": ball_density(grid, 1.5, smoothing=0.3),
            "wide_smoothed_ball": ball_density(grid, 2.0, smoothing=0.5),
        }

    def _log_density(self, grid: RadialGrid, rho: Density) -> RadialField:
        return RadialField(grid, np.log(np.maximum(rho.values, self.config.diag.floor_eps)))

    def _initial_potential(self, grid: RadialGrid) -> RadialField:
        geo = self.config.geodesic
        return RadialField.from_function(grid, lambda r: geo.amplitude * np.exp(-0.5 * (r / geo.width) ** 2))

    # ── dissipation ─────────────────────────────────────────────────────────

    def _check_dissipation(self) -> None:
        d_closed = dissipation_closed(self.grid, gaussian_density(self.grid))
        self._add("dissipation_gaussian", abs(d_closed - GAUSSIAN_DISSIPATION), "dissipation_gaussian_abs")

        grid = self.grid if self.grid.n <= 1025 else build_uniform_grid(1025, self.grid.r_max)
        worst = 0.0
        for label in ("gaussian", "narrow_gaussian", "smoothed_ball"):
            rho = self._densities(grid)[label]
            log_rho = self._log_density(grid, rho)
            values = (
                dissipation_closed(grid, rho),
                dissipation_double_oracle(grid, rho),
                metric_form(grid, rho, log_rho, log_rho),
            )
            for i in range(3):
                for j in range(i + 1, 3):
                    worst = max(worst, self._rel(values[i], values[j]))
        self._add("dissipation_triple", worst, "dissipation_triple_rel")

        half = build_uniform_grid(self.grid.n, self.grid.r_max / 2.0)
        rho, rho_lam = gaussian_density(self.grid, 1.0), gaussian_density(half, 0.5)
        d_ratio = dissipation_closed(half, rho_lam) / (8.0 * dissipation_closed(self.grid, rho))
        self._add("dissipation_scaling", abs(d_ratio - 1.0), "dissipation_scaling_rel")

        terms = hessian_entropy(self.grid, rho)
        terms_lam = hessian_entropy(half, rho_lam)
        worst = max(abs(b / (64.0 * a) - 1.0) for a, b in zip(terms, terms_lam) if a != 0.0)
        self._add("hessian_scaling", worst, "hessian_scaling_rel")

    # ── structure ───────────────────────────────────────────────────────────

    def _gradient_flow_error(self, grid: RadialGrid, rho: Density) -> float:
        rhs = landau_rhs_divform(grid, rho).values
        onsager = apply_onsager(grid, rho, self._log_density(grid, rho)).values
        return float(np.max(np.abs(onsager - rhs)) / np.max(np.abs(rhs)))

    def _check_structure(self) -> None:
        worst_fine, worst_ratio_gap, ratios = 0.0, 0.0, []
        for label in ("gaussian", "smoothed_ball"):
            e_mid = self._gradient_flow_error(self.grid_mid, self._densities(self.grid_mid)[label])
            e_fine = self._gradient_flow_error(self.grid_fine, self._densities(self.grid_fine)[label])
            worst_fine = max(worst_fine, e_fine)
            ratios.append(e_mid / e_fine)
        self._add("gradient_flow_identity", worst_fine, "gradient_flow_rel")
        lo, hi = tolerance("gradient_flow_order_lo"), tolerance("gradient_flow_order_hi")
        ratio = min(ratios)
        self._add(
            "gradient_flow_order",
            ratio,
            "gradient_flow_order_lo",
            passed=all(lo <= q <= hi for q in ratios),
            note=f"error ratio n={self.grid_mid.n} → n={self.grid_fine.n}, expected in [{lo}, {hi}]",
        )

        err_mid = divergence_identity_residual(self.grid_mid, gaussian_density(self.grid_mid))
        err_fine = divergence_identity_residual(self.grid_fine, gaussian_density(self.grid_fine))
        self._add("divergence_identity", err_fine, "divergence_identity_abs")
        self._add(
            "divergence_identity_order",
            err_mid / err_fine,
            "gradient_flow_order_lo",
            passed=err_mid / err_fine >= tolerance("gradient_flow_order_lo"),
            note="error ratio under one refinement",
        )

    # ── metric ──────────────────────────────────────────────────────────────

    def _check_metric(self) -> None:
        rng = np.random.default_rng(self.config.seeds.base)
        worst_pos, worst_sym, worst_null = 0.0, 0.0, 0.0
        constant = RadialField(self.grid, np.ones(self.grid.n))
        for rho in self._densities(self.grid).values():
            phis = [random_smooth_potential(self.grid, rng) for _ in range(100)]
            for phi, other in zip(phis, phis[1:] + phis[:1]):
                scale = max(metric_scale(self.grid, rho, phi), metric_scale(self.grid, rho, other), 1e-300)
                worst_pos = max(worst_pos, -metric_form(self.grid, rho, phi, phi) / scale)
                defect = abs(metric_form(self.grid, rho, phi, other) - metric_form(self.grid, rho, other, phi))
                worst_sym = max(worst_sym, defect / scale)
                worst_null = max(worst_null, abs(metric_form(self.grid, rho, constant, phi)))
        self._add("metric_positivity", worst_pos, "metric_positivity")
        self._add("metric_symmetry", worst_sym, "metric_symmetry")
        self._add(
            "metric_null_space", worst_null, "metric_symmetry", passed=worst_null == 0.0, note="g(const, φ) is exactly 0"
        )
        self._check_metric_cloud(rng)

    def _check_metric_cloud(self, rng: np.random.Generator) -> None:
        """The form evaluated by brute force on a 17³ cloud for 3 draws."""
        rho = gaussian_density(self.grid)
        worst_gap, worst_neg = 0.0, 0.0
        for _ in range(3):
            phi = random_smooth_potential(self.grid, rng)
            slope = ddr(self.grid, phi).values
            points, values, cell = sample_cartesian_cloud(
                lambda r: np.interp(r, self.grid.nodes, rho.values, right=0.0), 17, 5.0
            )
            radius = np.linalg.norm(points, axis=1)
            radial_slope = np.interp(radius, self.grid.nodes, slope)
            unit = np.divide(points, radius[:, None], out=np.zeros_like(points), where=radius[:, None] > 0.0)
            grad = radial_slope[:, None] * unit
            L = potential_oracle_3d(points, values, cell, points, workers=self.workers)
            V = np.column_stack(
                [potential_oracle_3d(points, values * grad[:, c], cell, points, workers=self.workers) for c in range(3)]
            )
            local = cell * np.sum(values * L * np.sum(grad**2, axis=1))
            cloud = local - cell * np.sum(values * np.sum(grad * V, axis=1))
            radial = metric_form(self.grid, rho, phi, phi)
            worst_gap = max(worst_gap, self._rel(cloud, radial))
            worst_neg = max(worst_neg, -cloud / max(local, 1e-300))
        self._add("metric_cloud_agreement", worst_gap, "metric_cloud_rel")
        self._add("metric_cloud_positivity", worst_neg, "metric_positivity")

    # ── geodesics ───────────────────────────────────────────────────────────

    def _check_geodesic(self) -> None:
        geo = self.config.geodesic
        # H drifts at O(h²) whatever dt is; the refined grid keeps it under tolerance
        grid = self.grid_mid
        rho0 = gaussian_density(grid)
        state0 = GeodesicState.initial(grid, rho0, self._initial_potential(grid))
        run = geodesic_integrate(grid, state0, geo.t_end, geo.dt, geo.sample_every)
        self._add("hamiltonian_drift", run.max_relative_drift, "hamiltonian_drift_rel")

        action = geodesic_path_action(grid, run)
        expected = 2.0 * state0.hamiltonian_0 * geo.t_end
        self._add("geodesic_path_action", self._rel(action, expected), "path_action_rel")

        half = geodesic_integrate(grid, state0, 0.5, geo.dt, 10**9, track_hamiltonian=False).final
        flipped = GeodesicState(half.rho, -half.phi, 0.0, half.hamiltonian_0)
        back = geodesic_integrate(grid, flipped, 0.5, geo.dt, 10**9, track_hamiltonian=False).final
        self._add("time_reversal", l1_distance(grid, back.rho, rho0.field), "time_reversal_l1")

    # ── flow ────────────────────────────────────────────────────────────────

    def _reference_config(self, n: int, r_max: float, t_end: float, every: int) -> SimConfig:
        cfg = copy.deepcopy(self.config)
        cfg.grid.n, cfg.grid.r_max = n, r_max
        cfg.init.kind, cfg.init.sigma, cfg.init.normalize = "gaussian", 1.0, True
        cfg.flow.alpha, cfg.flow.rhs = 1.0, "divergence"
        cfg.time.t_end = t_end
        cfg.output.every, cfg.output.snapshot_times = every, ()
        return cfg

    def _check_flow(self) -> None:
        trace, _ = simulate(self._reference_config(self.grid_fine.n, self.grid.r_max, 1.0, 10))
        records = trace.records
        summary = summarize_run(trace, self.config.diag.gamma)
        interior = _interior_rows(records)

        self._add("h_theorem", summary["h_theorem_max_rel"] or math.inf, "h_theorem_rel")
        self._add("mass_drift", summary["mass_drift_max"], "mass_drift_abs")
        self._add("entropy_monotone", max(summary["entropy_max_increase"], 0.0), "entropy_step_abs")
        moment_drop = max((a.second_moment - b.second_moment for a, b in zip(records, records[1:])), default=0.0)
        self._add("second_moment_increasing", max(moment_drop, 0.0), "second_moment_step_abs")
        self._add(
            "kappa_gaussian",
            abs(records[0].kappa - kappa(GAUSSIAN_SECOND_MOMENT)),
            "kappa_gaussian_abs",
        )
        worst_kf = max((r.dEdt_fd + r.kappa * r.fisher_weighted) / abs(r.dEdt_fd) for r in interior)
        self._add("kappa_fisher", worst_kf, "kappa_fisher_rel")

        hess = summary["hessian_agreement"]["max_rel_error"]
        self._add("hessian_vs_flow", math.inf if hess is None else hess, "hessian_rel")
        rho0 = gaussian_density(self.grid_fine)
        curvature = geodesic_entropy_curvature(self.grid_fine, rho0, dt=1e-3)
        total = hessian_entropy(self.grid_fine, rho0).total
        self._add("hessian_vs_geodesic", self._rel(total, curvature), "hessian_geodesic_rel")

        bound = summary["rate_bound"]
        self._add(
            "rate_bound",
            float(bound["violations"]),
            "rate_bound_slack",
            passed=bound["violations"] == 0,
            note=f"violating asserted rows; status: {bound['status']}",
        )

    def _check_supnorm(self) -> None:
        cfg = self._reference_config(self.grid_mid.n, 2.4 * self.grid.r_max, 50.0, 50)
        trace, _ = simulate(cfg)
        rows = [r for r in trace.records if r.t >= 0.5]
        check = supnorm_holdout_check(rows, tolerance=tolerance("supnorm_holdout_rel"))
        self._add("supnorm_holdout", max(check.max_ratio - 1.0, 0.0), "supnorm_holdout_rel")

    # ── distances ───────────────────────────────────────────────────────────

    def _check_w1(self) -> None:
        grid = build_uniform_grid(self.grid_fine.n, 8.0)
        ball1, ball2 = ball_density(grid, 1.0), ball_density(grid, 2.0)
        err = abs(w1_radial(grid, ball1, ball2) - 0.75)
        point = np.ones(grid.n)
        for radius in (1.0, 2.0):
            from_point = w1_from_mass_functions(grid, point, mass_function(grid, ball_density(grid, radius)))
            err = max(err, abs(from_point - 0.75 * radius))
        self._add("w1_closed_form", err, "w1_closed_form_abs")

        pairs = [
            (ball1, ball2, 11, 2.2),
            (gaussian_density(grid, 1.0), gaussian_density(grid, 1.5), 15, 5.0),
            (gaussian_density(grid, 1.0), ball_density(grid, 1.5, smoothing=0.3), 15, 4.0),
        ]
        worst = max(
            self._rel(w1_lp_oracle(grid, a, b, k, hw), w1_radial(grid, a, b)) for a, b, k, hw in pairs
        )
        self._add("w1_lp_agreement", worst, "w1_lp_rel")

    def _shooting_instance(self, grid: RadialGrid, coeffs: np.ndarray):
        dist = self.config.distance
        rho0 = gaussian_density(grid)
        basis = np.array([b.values for b in shooting_basis(grid)])
        raw = coeffs @ basis
        phi_star = RadialField(grid, self.config.geodesic.amplitude * raw / np.max(np.abs(raw)))
        state = GeodesicState.initial(grid, rho0, phi_star)
        endpoint = geodesic_integrate(grid, state, 1.0, dist.dt, 10**9, track_hamiltonian=False).final.rho
        # the geodesic keeps mass only up to the boundary flux; the shooting target must match exactly
        target = endpoint * (integrate(grid, rho0.field) / integrate(grid, endpoint))
        expected = math.sqrt(2.0 * hamiltonian(grid, rho0, state.phi))
        shot = wk_distance_shooting(grid, rho0, target, dist.rtol, dist.max_iterations, dist.dt)
        return rho0, target, expected, shot

    def _check_shooting(self) -> None:
        rng = np.random.default_rng(self.config.seeds.base + 1)
        draws = [rng.standard_normal(len(shooting_basis(self.grid))) for _ in range(3)]
        worst_recovery, worst_infimum, pairs = 0.0, 0.0, []
        for k, coeffs in enumerate(draws):
            rho0, target, expected, shot = self._shooting_instance(self.grid, coeffs)
            worst_recovery = max(worst_recovery, self._rel(shot.wk_estimate, expected) if shot.converged else math.inf)
            for seed, bend in enumerate((0.0, 0.1, 0.2)):
                action = interpolation_path_action(self.grid, rho0, target, samples=21, perturbation=bend, seed=seed)
                worst_infimum = max(worst_infimum, shot.wk_estimate**2 / action - 1.0)
            if k < 2:
                pairs.append((coeffs, w1_radial(self.grid, rho0, target), shot))
        self._add("shooting_recovery", worst_recovery, "shooting_recovery_rel")
        self._add("shooting_below_paths", max(worst_infimum, 0.0), "path_infimum_slack")

        coarse = w1_wk_inequality_report([(f"pair{k}", w1, shot) for k, (_, w1, shot) in enumerate(pairs)])
        fine_pairs = []
        for k, (coeffs, _, _) in enumerate(pairs):
            rho0, target, _, shot = self._shooting_instance(self.grid_mid, coeffs)
            fine_pairs.append((f"pair{k}", w1_radial(self.grid_mid, rho0, target), shot))
        fine = w1_wk_inequality_report(fine_pairs)
        change = max(self._rel(a.ratio, b.ratio) for a, b in zip(coarse.rows, fine.rows))
        self._add(
            "w1_wk_ratio_stability",
            change,
            "w1_wk_stability_rel",
            passed=coarse.all_finite and fine.all_finite and change <= tolerance("w1_wk_stability_rel"),
        )

    # ── Poincaré ──────────────────────────────────────────────────────────────

    def _check_poincare(self) -> None:
        eps, gamma = self.config.diag.poincare_eps, self.config.diag.gamma
        c = [poincare_constant(g, gaussian_density(g), default_test_family(g), eps) for g in (self.grid_mid, self.grid_fine)]
        self._add("poincare_stability", abs(c[0] - c[1]), "poincare_stability_abs")
        e = [eqnpos_check(g, gaussian_density(g), gamma) for g in (self.grid_mid, self.grid_fine)]
        self._add("eqnpos_resolution", self._rel(e[0], e[1]), "eqnpos_resolution_rel")

    # ── public API ───────────────────────────────────────────────────────────

    def run(self) -> list[CheckResult]:
        for check in (
            self._check_dissipation,
            self._check_structure,
            self._check_metric,
            self._check_geodesic,
            self._check_flow,
            self._check_supnorm,
            self._check_w1,
            self._check_shooting,
            self._check_poincare,
        ):
            logger.info("verify: %s", check.__name__.removeprefix("_check_"))
            check()
        return self.results

    def payload(self) -> dict:
        return {
            "all_passed": all(r.passed for r in self.results),
            "entries": [asdict(r) for r in self.results],
        }
