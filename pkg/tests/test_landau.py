import math
import unittest
from unittest import mock

import numpy as np
from numpy.testing import assert_allclose

from tests.helpers import config_from, small_grid, temp_dir
from utils.diagnostics import entropy
from utils.errors import ConfigurationError, MassDriftError, NumericalBlowupError, UsageError
from utils.grid import Parity, RadialField, build_uniform_grid, gaussian_density
from utils.landau import (
    FlowState,
    RhsForm,
    StepControl,
    cfl_dt,
    initial_density,
    landau_rhs_divform,
    landau_rhs_nondiv,
    select_rhs,
    simulate,
    step_rk4,
)
from utils.potential import newtonian_potential
from utils.store import write_snapshot

# Lρ(0)·Δρ(0) + αρ(0)² for the standard Gaussian, with Δρ(0) = −3ρ(0)
M0 = (2.0 * math.pi) ** -1.5
LM0 = math.sqrt(2.0 / math.pi) / (4.0 * math.pi)


class TestRightHandSides(unittest.TestCase):
    def setUp(self):
        self.grid = small_grid(513)
        self.rho = gaussian_density(self.grid)

    def test_nondivergence_at_origin(self):
        value = landau_rhs_nondiv(self.grid, self.rho).values[0]
        assert_allclose(value, -3.0 * LM0 * M0 + M0**2, rtol=1e-3)
        assert_allclose(value, -0.0080628, rtol=1e-3)

    def test_nondivergence_half_alpha(self):
        value = landau_rhs_nondiv(self.grid, self.rho, alpha=0.5).values[0]
        assert_allclose(value, -0.0100785, rtol=1e-3)

    def test_divergence_form_at_origin(self):
        value = landau_rhs_divform(self.grid, self.rho).values[0]
        assert_allclose(value, -0.0080628, rtol=2e-3)

    def test_forms_agree(self):
        div = landau_rhs_divform(self.grid, self.rho).values
        nondiv = landau_rhs_nondiv(self.grid, self.rho).values
        self.assertLess(np.max(np.abs(div - nondiv)), 1e-2 * np.max(np.abs(nondiv)))

    def test_scaling_covariance(self):
        # ρ_λ(x) = λ³ρ(λx) with λ = 2 on the grid of half the radius: rhs scales by λ⁶
        half = build_uniform_grid(self.grid.n, self.grid.r_max / 2.0)
        rho_lam = gaussian_density(half, 0.5)
        for rhs in (landau_rhs_divform, landau_rhs_nondiv):
            base = 64.0 * rhs(self.grid, self.rho).values
            scaled = rhs(half, rho_lam).values
            assert_allclose(scaled, base, rtol=1e-9, atol=1e-12 * np.max(np.abs(base)))

    def test_divergence_form_conserves_mass(self):
        rhs = landau_rhs_divform(self.grid, self.rho)
        total = float(np.sum(self.grid.weights * rhs.values))
        self.assertLess(abs(total), 1e-12)

    def test_alpha_range(self):
        with self.assertRaises(ConfigurationError):
            landau_rhs_nondiv(self.grid, self.rho, alpha=0.0)
        with self.assertRaises(ConfigurationError):
            landau_rhs_nondiv(self.grid, self.rho, alpha=1.5)

    def test_divergence_form_needs_alpha_one(self):
        with self.assertRaises(ConfigurationError):
            select_rhs(self.grid, RhsForm.DIVERGENCE, alpha=0.5)

    def test_rejects_odd_state(self):
        g = RadialField.from_function(self.grid, lambda r: r, Parity.ODD)
        with self.assertRaises(UsageError):
            landau_rhs_divform(self.grid, g)


class TestStepping(unittest.TestCase):
    def setUp(self):
        self.grid = build_uniform_grid(129, 8.0)
        self.rho = gaussian_density(self.grid)

    def test_cfl_formula(self):
        ctrl = StepControl(cfl_safety=0.5, dt_max=1.0)
        L = newtonian_potential(self.grid, self.rho).u.values
        expected = 0.5 * self.grid.h**2 / (2.0 * L.max() + np.finfo(float).eps)
        assert_allclose(cfl_dt(self.grid, self.rho, ctrl), expected, rtol=1e-14)
        self.assertEqual(cfl_dt(self.grid, self.rho, StepControl(dt_max=1e-6)), 1e-6)

    def test_step_control_validation(self):
        with self.assertRaises(ConfigurationError) as ctx:
            StepControl(cfl_safety=0.0)
        self.assertEqual(ctx.exception.key, "time.cfl_safety")
        with self.assertRaises(ConfigurationError):
            StepControl(rho_floor=-1.0)

    def test_step_conserves_mass(self):
        state = step_rk4(self.grid, FlowState.initial(self.rho), StepControl())
        self.assertEqual(state.step_count, 1)
        self.assertLess(state.mass_drift, 1e-10)
        self.assertGreater(state.t, 0.0)

    def test_rk4_fourth_order(self):
        ctrl = StepControl(dt_max=1.0)

        def run(dt):
            state = FlowState.initial(self.rho)
            for _ in range(int(round(0.2 / dt))):
                state = step_rk4(self.grid, state, ctrl, dt=dt)
            return state.rho.values

        coarse, mid, fine = run(0.004), run(0.002), run(0.001)
        ratio = np.max(np.abs(coarse - mid)) / np.max(np.abs(mid - fine))
        self.assertGreater(ratio, 12.8)
        self.assertLess(ratio, 19.2)

    def test_floor_clipping_trips_mass_budget(self):
        ctrl = StepControl(rho_floor=0.01)
        with self.assertRaises(MassDriftError) as ctx:
            step_rk4(self.grid, FlowState.initial(self.rho), ctrl)
        self.assertEqual(ctx.exception.step, 1)

    def test_blowup_reported(self):
        with mock.patch("utils.landau.select_rhs", return_value=lambda y: np.full_like(y, np.nan)):
            with self.assertRaises(NumericalBlowupError) as ctx:
                step_rk4(self.grid, FlowState.initial(self.rho), StepControl())
        self.assertEqual(ctx.exception.step, 1)

    def test_nondivergence_half_alpha_loses_mass(self):
        ctrl = StepControl(mass_drift_budget=1.0)
        state = step_rk4(self.grid, FlowState.initial(self.rho), ctrl, RhsForm.NONDIVERGENCE, alpha=0.5)
        self.assertLess(state.rho.mass, self.rho.mass)


class TestSimulate(unittest.TestCase):
    def test_zero_horizon(self):
        trace, snapshots = simulate(config_from(grid__n=65, grid__r_max=8, time__t_end=0))
        self.assertEqual(len(trace.records), 1)
        self.assertIsNone(trace.records[0].dEdt_fd)
        self.assertEqual(snapshots, [])

    def test_short_run(self):
        config = config_from(
            grid__n=129,
            grid__r_max=8,
            time__t_end=0.05,
            output__every=1,
            output__snapshot_times="0.0, 0.025",
        )
        trace, snapshots = simulate(config)
        records = trace.records
        self.assertEqual(records[-1].t, 0.05)
        self.assertLess(records[-1].entropy, records[0].entropy)
        self.assertGreater(records[-1].second_moment, records[0].second_moment)
        self.assertLess(max(abs(r.mass - records[0].mass) for r in records), 1e-10)
        self.assertEqual([s.t for s in snapshots], [0.0, 0.025])
        interior = records[1:-1]
        self.assertTrue(all(r.dEdt_fd is not None and r.dEdt_fd < 0.0 for r in interior))
        for r in interior:
            assert_allclose(r.dEdt_fd, -r.dissipation, rtol=5e-2)

    def test_alpha_below_one_skips_gradient_diagnostics(self):
        config = config_from(
            grid__n=65,
            grid__r_max=8,
            time__t_end=0.02,
            flow__alpha=0.5,
            flow__rhs="nondivergence",
            time__mass_drift_budget=1.0,
        )
        trace, _ = simulate(config)
        self.assertTrue(all(r.dissipation is None and r.hessian_value is None for r in trace.records))

    def test_failure_attaches_trace(self):
        config = config_from(grid__n=65, grid__r_max=8, time__t_end=0.05, time__rho_floor=0.01)
        with self.assertRaises(MassDriftError) as ctx:
            simulate(config)
        trace = ctx.exception.trace
        self.assertIsNotNone(trace)
        self.assertEqual(len(trace.records), 1)
        self.assertEqual(trace.failed_at, 0.0)
        self.assertIn("MassDriftError", trace.error)


class TestInitialDensity(unittest.TestCase):
    def test_ball(self):
        grid = build_uniform_grid(129, 8.0)
        rho = initial_density(config_from(init__kind="ball", init__radius=2, init__smoothing=0.2), grid)
        assert_allclose(rho.mass, 1.0, rtol=1e-13)

    def test_from_snapshot(self):
        grid = build_uniform_grid(65, 8.0)
        source = gaussian_density(grid, 1.3)
        with temp_dir() as tmp:
            path = f"{tmp}/snap.json"
            write_snapshot(path, grid, 0.5, source.values)
            config = config_from(grid__n=65, grid__r_max=8, init__kind="file", init__path=path, init__normalize="false")
            rho = initial_density(config, grid)
        assert_allclose(rho.values, source.values, rtol=0, atol=0)
        assert_allclose(entropy(grid, rho), entropy(grid, source), rtol=0)

    def test_snapshot_on_other_grid(self):
        grid = build_uniform_grid(65, 8.0)
        with temp_dir() as tmp:
            path = f"{tmp}/snap.json"
            write_snapshot(path, grid, 0.0, gaussian_density(grid).values)
            other = build_uniform_grid(129, 8.0)
            config = config_from(grid__n=129, grid__r_max=8, init__kind="file", init__path=path)
            with self.assertRaises(ConfigurationError) as ctx:
                initial_density(config, other)
        self.assertEqual(ctx.exception.key, "init.path")
