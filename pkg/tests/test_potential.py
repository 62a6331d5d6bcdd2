import math
import unittest

import numpy as np
from numpy.testing import assert_allclose
from scipy.special import erf

from tests.helpers import node_aligned_grid, small_grid
from utils.errors import ResourceError, UsageError
from utils.grid import Parity, RadialField, ball_density, build_uniform_grid, ddr, gaussian_density, laplacian_radial
from utils.potential import (
    divergence_identity_residual,
    newtonian_potential,
    potential_oracle_3d,
    sample_cartesian_cloud,
    vector_newtonian_potential,
)


def gaussian_potential(r: np.ndarray) -> np.ndarray:
    """erf(r/√2)/(4πr), with the limit √(2/π)/(4π) at the origin."""
    out = np.full_like(r, math.sqrt(2.0 / math.pi) / (4.0 * math.pi))
    nz = r > 0
    out[nz] = erf(r[nz] / math.sqrt(2.0)) / (4.0 * math.pi * r[nz])
    return out


class TestNewtonianPotential(unittest.TestCase):
    def test_gaussian_closed_form(self):
        grid = small_grid(513)
        u = newtonian_potential(grid, gaussian_density(grid)).u
        self.assertIs(u.parity, Parity.EVEN)
        assert_allclose(u.values, gaussian_potential(grid.nodes), rtol=5e-4)
        assert_allclose(u.values[0], 0.063494, rtol=1e-4)

    def test_uniform_ball(self):
        grid = node_aligned_grid()
        u = newtonian_potential(grid, ball_density(grid, 1.0)).u.values
        at = {r: u[int(round(r / grid.h))] for r in (0.0, 1.0, 2.0)}
        assert_allclose(at[0.0], 3.0 / (8.0 * math.pi), rtol=1e-3)
        assert_allclose(at[1.0], 1.0 / (4.0 * math.pi), rtol=1e-3)
        assert_allclose(at[2.0], 1.0 / (8.0 * math.pi), rtol=1e-3)

    def test_far_field_is_point_mass(self):
        grid = small_grid(257)
        u = newtonian_potential(grid, gaussian_density(grid)).u.values
        assert_allclose(u[-1], 1.0 / (4.0 * math.pi * grid.r_max), rtol=1e-6)

    def test_mass_used(self):
        grid = small_grid(257)
        result = newtonian_potential(grid, gaussian_density(grid))
        assert_allclose(result.total_mass_used, 1.0, rtol=1e-12)

    def test_negative_values_clamped(self):
        grid = small_grid(129)
        rho = gaussian_density(grid).field
        dented = rho.with_values(rho.values - 1e-3)
        with self.assertLogs("utils.potential", level="WARNING"):
            clamped = newtonian_potential(grid, dented).u.values
        reference = newtonian_potential(grid, rho.with_values(np.maximum(dented.values, 0.0))).u.values
        assert_allclose(clamped, reference, rtol=1e-14)

    def test_inverts_laplacian_including_origin(self):
        def worst(n):
            grid = small_grid(n)
            rho = gaussian_density(grid)
            u = newtonian_potential(grid, rho).u
            return np.abs(-laplacian_radial(grid, u).values - rho.values), rho.values[0]

        coarse, peak = worst(257)
        fine, _ = worst(513)
        self.assertLess(fine.max(), 2e-3 * peak)
        self.assertLess(fine[0], 2e-3 * peak)
        self.assertGreater(coarse.max() / fine.max(), 3.0)

    def test_origin_step_matches_curvature(self):
        # Lρ(h) − Lρ(0) = −ρ(0)h²/6 + O(h⁴)
        grid = small_grid(513)
        rho = gaussian_density(grid)
        u = newtonian_potential(grid, rho).u.values
        assert_allclose(u[1] - u[0], -rho.values[0] * grid.h**2 / 6.0, rtol=2e-2)

    def test_rejects_odd_source(self):
        grid = small_grid(64)
        with self.assertRaises(UsageError):
            newtonian_potential(grid, RadialField.from_function(grid, lambda r: r, Parity.ODD))

    def test_rejects_foreign_grid(self):
        with self.assertRaises(UsageError):
            newtonian_potential(small_grid(64), gaussian_density(small_grid(65)))


class TestVectorPotential(unittest.TestCase):
    def test_odd_output(self):
        grid = small_grid(129)
        g = RadialField.from_function(grid, lambda r: r * np.exp(-0.5 * r**2), Parity.ODD)
        h = vector_newtonian_potential(grid, g).u
        self.assertIs(h.parity, Parity.ODD)
        self.assertEqual(h.values[0], 0.0)

    def test_rejects_even(self):
        grid = small_grid(64)
        with self.assertRaises(UsageError):
            vector_newtonian_potential(grid, gaussian_density(grid).field)

    def test_commutes_with_gradient(self):
        # (−Δ)^{-1}∇ρ = ∇(−Δ)^{-1}ρ
        def gap(n):
            grid = small_grid(n)
            rho = gaussian_density(grid)
            lhs = vector_newtonian_potential(grid, ddr(grid, rho.field)).u.values
            rhs = ddr(grid, newtonian_potential(grid, rho).u).values
            return np.max(np.abs(lhs - rhs)), np.max(np.abs(rhs))

        coarse, _ = gap(257)
        fine, scale = gap(513)
        self.assertLess(fine, 2e-3 * scale)
        self.assertGreater(coarse / fine, 3.0)

    def test_divergence_identity_converges(self):
        coarse = divergence_identity_residual(small_grid(257), gaussian_density(small_grid(257)))
        fine = divergence_identity_residual(small_grid(513), gaussian_density(small_grid(513)))
        self.assertLess(fine, coarse / 3.0)
        self.assertLess(fine, 1e-3)


class TestCartesianOracle(unittest.TestCase):
    def test_cloud_layout(self):
        points, values, cell = sample_cartesian_cloud(lambda r: np.ones_like(r), 4, 1.0)
        self.assertEqual(points.shape, (64, 3))
        assert_allclose(cell, 0.125)
        assert_allclose(np.sort(np.unique(points[:, 0])), [-0.75, -0.25, 0.25, 0.75])
        assert_allclose(values, 1.0)

    def test_gaussian_potential(self):
        grid = small_grid(257)
        rho = gaussian_density(grid)
        points, values, cell = sample_cartesian_cloud(
            lambda r: np.interp(r, grid.nodes, rho.values, right=0.0), 30, 5.0
        )
        queries = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 4.0, 0.0]])
        oracle = potential_oracle_3d(points, values, cell, queries)
        assert_allclose(oracle, gaussian_potential(np.linalg.norm(queries, axis=1)), rtol=5e-2)

    def test_threads_do_not_change_result(self):
        points, values, cell = sample_cartesian_cloud(lambda r: np.exp(-r**2), 12, 3.0)
        serial = potential_oracle_3d(points, values, cell, points)
        threaded = potential_oracle_3d(points, values, cell, points, workers=3)
        assert_allclose(threaded, serial, rtol=0, atol=0)

    def test_oversize_cloud(self):
        points, values, cell = sample_cartesian_cloud(lambda r: np.ones_like(r), 41, 1.0)
        with self.assertRaises(ResourceError):
            potential_oracle_3d(points, values, cell, points[:1])

    def test_value_count_checked(self):
        points, values, cell = sample_cartesian_cloud(lambda r: np.ones_like(r), 4, 1.0)
        with self.assertRaises(UsageError):
            potential_oracle_3d(points, values[:-1], cell, points[:1])
