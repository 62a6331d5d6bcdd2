import math
import unittest

import numpy as np
from numpy.testing import assert_allclose

from tests.helpers import record, small_grid
from utils.diagnostics import (
    TRACE_COLUMNS,
    cumulative_fisher,
    default_test_family,
    dissipation_closed,
    dissipation_derivative,
    dissipation_double_oracle,
    entropy,
    eqnpos_check,
    evaluate_record,
    fisher_weighted,
    hessian_dissipation_ratio,
    hessian_entropy,
    kappa,
    kappa_fisher_check,
    moment_growth_fit,
    moments_and_sups,
    poincare_constant,
    rate_alpha,
    rate_bound_check,
    supnorm_fit,
    supnorm_holdout_check,
    with_time_derivatives,
)
from utils.errors import ConfigurationError, InsufficientDataError, ResourceError, UsageError
from utils.grid import Density, RadialField, ball_density, build_uniform_grid, gaussian_density
from utils.geometry import geodesic_entropy_curvature
from utils.landau import FlowState, StepControl, landau_rhs_divform, step_rk4

GAUSSIAN_DISSIPATION = (2.0 * math.pi) ** -1.5 * 5.0 * math.sqrt(2.0) / 4.0 - (4.0 * math.pi) ** -1.5


class TestStateFunctionals(unittest.TestCase):
    def setUp(self):
        self.grid = small_grid(513)
        self.rho = gaussian_density(self.grid)

    def test_gaussian_entropy(self):
        assert_allclose(entropy(self.grid, self.rho), -1.5 * math.log(2.0 * math.pi) - 1.5, rtol=1e-8)
        assert_allclose(entropy(self.grid, self.rho), -4.25681, rtol=1e-5)

    def test_entropy_of_zero_density(self):
        zero = Density.from_values(self.grid, np.zeros(self.grid.n))
        self.assertEqual(entropy(self.grid, zero), 0.0)

    def test_uniform_ball_entropy(self):
        grid = build_uniform_grid(1025, 8.0)
        assert_allclose(entropy(grid, ball_density(grid, 1.0)), math.log(3.0 / (4.0 * math.pi)), atol=1e-2)

    def test_moments(self):
        m = moments_and_sups(self.grid, self.rho)
        assert_allclose(m.mass, 1.0, rtol=1e-12)
        assert_allclose(m.second_moment, 1.5, rtol=1e-8)
        assert_allclose(m.cube_norm, (2.0 * math.pi) ** -3 * 3.0**-1.5, rtol=1e-8)
        assert_allclose(m.sup_rho, (2.0 * math.pi) ** -1.5, rtol=1e-12)
        assert_allclose(m.sup_Lrho, 0.063494, rtol=1e-4)

    def test_kappa(self):
        assert_allclose(kappa(1.5), 1.0 / (8.0 * math.pi * (math.sqrt(1.5) + 1.0)), rtol=1e-14)
        assert_allclose(kappa(1.5), 0.0178846, rtol=1e-5)
        assert_allclose(kappa(0.0), 1.0 / (8.0 * math.pi))

    def test_dissipation_closed_form(self):
        assert_allclose(GAUSSIAN_DISSIPATION, 0.0897936, rtol=1e-5)
        assert_allclose(dissipation_closed(self.grid, self.rho), GAUSSIAN_DISSIPATION, rtol=1e-3)

    def test_double_integral_agrees(self):
        grid = small_grid(257)
        for rho in (gaussian_density(grid), gaussian_density(grid, 0.8), ball_density(grid, 1.5, smoothing=0.4)):
            assert_allclose(dissipation_double_oracle(grid, rho), dissipation_closed(grid, rho), rtol=1e-2)

    def test_double_integral_size_limit(self):
        grid = build_uniform_grid(1100, 10.0)
        with self.assertRaises(ResourceError):
            dissipation_double_oracle(grid, gaussian_density(grid))

    def test_dissipation_scales_exactly_on_nested_grids(self):
        half = build_uniform_grid(self.grid.n, self.grid.r_max / 2.0)
        narrow = gaussian_density(half, 0.5)
        assert_allclose(dissipation_closed(half, narrow), 8.0 * dissipation_closed(self.grid, self.rho), rtol=1e-9)

    def test_hessian_terms_scale_exactly_on_nested_grids(self):
        half = build_uniform_grid(self.grid.n, self.grid.r_max / 2.0)
        wide = hessian_entropy(self.grid, self.rho)
        narrow = hessian_entropy(half, gaussian_density(half, 0.5))
        assert_allclose(np.array(narrow), 64.0 * np.array(wide), rtol=1e-8)
        assert_allclose(wide.closed_form, wide.term1 + wide.term2 + wide.term3 + wide.term4, rtol=1e-14)

    def test_hessian_matches_geodesic_curvature(self):
        total = hessian_entropy(self.grid, self.rho).total
        assert_allclose(total, geodesic_entropy_curvature(self.grid, self.rho), rtol=1e-2)
        assert_allclose(total, 4.3051e-3, rtol=1e-2)

    def test_hessian_is_half_the_flow_second_derivative(self):
        # d²𝓔/dt² = 2 Hess along the flow; three RK4 states give it by central differences
        grid = self.grid
        state = FlowState.initial(self.rho)
        dt = 1e-3
        ahead = step_rk4(grid, state, StepControl(dt_max=1.0), dt=dt)
        behind = step_rk4(grid, state, StepControl(dt_max=1.0), dt=-dt)
        d2 = (entropy(grid, ahead.rho) - 2.0 * entropy(grid, state.rho) + entropy(grid, behind.rho)) / dt**2
        assert_allclose(2.0 * hessian_entropy(grid, state.rho).total, d2, rtol=1e-2)

    def test_dissipation_derivative_matches_difference(self):
        grid = small_grid(257)
        rho = gaussian_density(grid).field
        sigma = landau_rhs_divform(grid, rho)
        eps = 1e-5
        fd = (dissipation_closed(grid, rho + sigma * eps) - dissipation_closed(grid, rho - sigma * eps)) / (2.0 * eps)
        assert_allclose(dissipation_derivative(grid, rho, sigma), fd, rtol=1e-6)

    def test_hessian_of_empty_density(self):
        zero = Density.from_values(self.grid, np.zeros(self.grid.n))
        self.assertEqual(tuple(hessian_entropy(self.grid, zero)), (0.0,) * 6)

    def test_fisher_weighted_bounded_by_plain_fisher(self):
        # ∫|∇√M|² = (1/4)∫r²M = 3/4
        value = fisher_weighted(self.grid, self.rho)
        self.assertGreater(value, 0.0)
        self.assertLess(value, 0.75)

    def test_kappa_fisher_holds_at_gaussian(self):
        check = kappa_fisher_check(self.grid, self.rho, -GAUSSIAN_DISSIPATION)
        self.assertTrue(check.holds)
        assert_allclose(check.kappa, kappa(1.5), rtol=1e-8)

    def test_rate_alpha(self):
        assert_allclose(rate_alpha(0.1), 0.15)
        with self.assertRaises(ConfigurationError):
            rate_alpha(0.2)

    def test_eqnpos_rejects_gamma(self):
        with self.assertRaises(ConfigurationError):
            eqnpos_check(self.grid, self.rho, 1.0 / 7.0)

    def test_eqnpos_finite(self):
        self.assertTrue(math.isfinite(eqnpos_check(self.grid, self.rho, 0.1)))


class TestPoincareConstant(unittest.TestCase):
    def setUp(self):
        self.grid = small_grid(257)
        self.rho = gaussian_density(self.grid)

    def test_family_size(self):
        self.assertEqual(len(default_test_family(self.grid)), 20)

    def test_nonnegative_and_monotone_in_eps(self):
        family = default_test_family(self.grid)
        small = poincare_constant(self.grid, self.rho, family, 0.01)
        large = poincare_constant(self.grid, self.rho, family, 1.0)
        self.assertGreaterEqual(large, 0.0)
        self.assertGreaterEqual(small, large)

    def test_empty_family(self):
        with self.assertRaises(UsageError):
            poincare_constant(self.grid, self.rho, [], 0.1)

    def test_zero_function(self):
        with self.assertRaises(UsageError):
            poincare_constant(self.grid, self.rho, [RadialField.zeros(self.grid)], 0.1)


class TestRecords(unittest.TestCase):
    def test_columns(self):
        self.assertEqual(
            ",".join(TRACE_COLUMNS),
            "t,mass,entropy,dEdt_fd,dissipation,second_moment,kappa,fisher_weighted,sup_rho,sup_Lrho,"
            "hessian_value,d2Edt2_fd,cube_norm,eqnpos_value,rate_alpha",
        )

    def test_evaluate_record(self):
        grid = small_grid(129)
        rec = evaluate_record(grid, gaussian_density(grid), 0.0, 0.1)
        self.assertIsNone(rec.dEdt_fd)
        assert_allclose(rec.rate_alpha, 0.15)
        self.assertIsNotNone(rec.hessian_value)
        plain = evaluate_record(grid, gaussian_density(grid), 0.0, 0.1, gradient_flow=False)
        self.assertIsNone(plain.dissipation)
        self.assertIsNone(plain.eqnpos_value)

    def test_time_derivatives_on_uneven_times(self):
        times = [0.0, 0.1, 0.25, 0.3, 0.7]
        rows = with_time_derivatives([record(t, entropy=t**2) for t in times])
        self.assertIsNone(rows[0].dEdt_fd)
        self.assertIsNone(rows[-1].d2Edt2_fd)
        for row in rows[1:-1]:
            assert_allclose(row.dEdt_fd, 2.0 * row.t, rtol=1e-12)
            assert_allclose(row.d2Edt2_fd, 2.0, rtol=1e-10)


class TestTraceChecks(unittest.TestCase):
    def _rows(self, eqnpos):
        times = np.linspace(0.0, 1.0, 6)
        return [
            record(t, dEdt_fd=None if k in (0, 5) else -1.0, cube_norm=1.0, eqnpos_value=eqnpos)
            for k, t in enumerate(times)
        ]

    def test_rate_bound_holds(self):
        report = rate_bound_check(self._rows(1.0), 0.1)
        self.assertEqual(report.status, "bound holds on all asserted rows")
        self.assertEqual(len(report.rows), 4)
        # tail at t=0.2 is 0.8, bound −0.15·0.8
        assert_allclose(report.rows[0].bound, -0.12)
        self.assertEqual(report.violations, [])

    def test_rate_bound_not_asserted(self):
        report = rate_bound_check(self._rows(-1.0), 0.1)
        self.assertEqual(report.status, "assumption violated, bound not asserted")

    def test_rate_bound_violated(self):
        rows = [record(t, dEdt_fd=0.5, cube_norm=1.0, eqnpos_value=1.0) for t in (0.0, 0.5, 1.0)]
        report = rate_bound_check(rows, 0.1)
        self.assertEqual(report.status, "bound violated")
        self.assertEqual(len(report.violations), 3)

    def test_supnorm_fit_recovers_power_law(self):
        times = np.linspace(0.5, 20.0, 16)
        rows = [record(t, sup_rho=2.0 * (1.0 / t + 1.0) ** 1.5, sup_Lrho=0.5 * (1.0 / t + 1.0) ** 0.4) for t in times]
        fit = supnorm_fit(rows)
        assert_allclose([fit.s1_hat, fit.c1_hat, fit.s2_hat, fit.c2_hat], [1.5, 2.0, 0.4, 0.5], rtol=1e-8)
        self.assertTrue(fit.s1_admissible)
        self.assertTrue(fit.s2_admissible)
        self.assertTrue(supnorm_holdout_check(rows).holds)

    def test_supnorm_fit_is_an_upper_bound(self):
        times = np.geomspace(0.5, 50.0, 41)
        rows = [record(t, sup_rho=(1.0 / t + 1.0) ** 1.5 + 0.3, sup_Lrho=0.5 + 0.1 / t) for t in times]
        fit = supnorm_fit(rows)
        for r in rows:
            x = 1.0 / r.t + 1.0
            self.assertLessEqual(r.sup_rho, fit.c1_hat * x**fit.s1_hat * (1.0 + 1e-12))
            self.assertLessEqual(r.sup_Lrho, fit.c2_hat * x**fit.s2_hat * (1.0 + 1e-12))
        check = supnorm_holdout_check(rows)
        self.assertTrue(check.holds)
        self.assertLess(check.max_ratio, 1.05)

    def test_supnorm_fit_needs_rows(self):
        rows = [record(t, sup_rho=1.0, sup_Lrho=1.0) for t in np.linspace(0.0, 1.0, 8)]
        with self.assertRaises(InsufficientDataError):
            supnorm_fit(rows)

    def test_moment_growth(self):
        rows = [record(t, second_moment=3.0 * (1.0 + t) ** 0.5) for t in (0.0, 0.5, 1.0, 2.0, 4.0)]
        fit = moment_growth_fit(rows)
        assert_allclose([fit.q_hat, fit.c_hat], [0.5, 3.0], rtol=1e-8)
        assert_allclose(fit.q_local_max, 0.5, rtol=1e-8)
        with self.assertRaises(InsufficientDataError):
            moment_growth_fit(rows[:3])

    def test_moment_growth_local_slope(self):
        # slope 1 up to t = 1, then flat
        rows = [record(t, second_moment=min(1.0 + t, 2.0)) for t in (0.25, 0.5, 1.0, 2.0, 4.0)]
        fit = moment_growth_fit(rows)
        assert_allclose(fit.q_local_max, 1.0, rtol=1e-12)
        self.assertLess(fit.q_hat, 1.0)

    def test_cumulative_fisher(self):
        rows = [record(t, fisher_weighted=2.0) for t in (0.0, 1.0, 3.0)]
        assert_allclose(cumulative_fisher(rows), 6.0)
        self.assertEqual(cumulative_fisher(rows[:1]), 0.0)

    def test_hessian_dissipation_ratio(self):
        rows = [
            record(0.0, hessian_value=1.0, dissipation=2.0),
            record(1.0, hessian_value=3.0, dissipation=2.0),
            record(2.0),
        ]
        self.assertEqual(hessian_dissipation_ratio(rows), (0.5, 1.5))
        self.assertIsNone(hessian_dissipation_ratio(rows[2:]))
