"""
Newtonian (inverse-Laplacian) solvers for radial data.

For a radial source ρ the Riesz potential of order 2 in R³,
Lρ(x) = ∫ ρ(y) / (4π|x−y|) dy, reduces to

    u(r) = (1/r)∫₀^r s²ρ(s) ds + ∫_r^∞ sρ(s) ds,

and for a radial vector field g(r)e_r the componentwise inverse Laplacian is
h(r)e_r with

    h(r) = (r/3)∫_r^∞ g(s) ds + (1/(3r²))∫₀^r s³g(s) ds.

Both are evaluated with cumulative trapezoid sums in one O(n) pass. Mass
beyond r_max is taken to be zero, so the far field is exact for the truncated
source. The trapezoid partial sums reproduce the kernels s²/max(r,s) and
min(r,s)³/(3r²) with the grid's own quadrature coefficients, which keeps the
discrete metric built on them symmetric and positive semi-definite. The
origin value of u adds the limit of the inner sum's trapezoid error, so the
nodal profile is one smooth O(h²) perturbation of Lρ and the discrete
−Δu matches ρ at r = 0 as well as in the interior.

`potential_oracle_3d` is a brute-force Cartesian summation used only as a
test oracle.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.spatial.distance import cdist

from utils.errors import ResourceError, UsageError
from utils.grid import Density, Parity, RadialField, RadialGrid, ddr, div_radial, integrate

logger = logging.getLogger(__name__)

MAX_CLOUD_POINTS = 40**3
_QUERY_CHUNK = 256


@dataclass(frozen=True)
class PotentialResult:
    u: RadialField
    total_mass_used: float


def _source_field(grid: RadialGrid, rho: Density | RadialField) -> RadialField:
    f = rho.field if isinstance(rho, Density) else rho
    if not grid.matches(f.grid):
        raise UsageError(f"potential source lives on {f.grid!r}, expected {grid!r}")
    return f


def _from_zero(grid: RadialGrid, y: np.ndarray) -> np.ndarray:
    """∫₀^{r_i} y ds for every node."""
    return cumulative_trapezoid(y, dx=grid.h, initial=0.0)


def _to_rmax(grid: RadialGrid, y: np.ndarray) -> np.ndarray:
    """∫_{r_i}^{r_max} y ds for every node, summed from the outside in."""
    return cumulative_trapezoid(y[::-1], dx=grid.h, initial=0.0)[::-1]


def newtonian_potential(
    grid: RadialGrid,
    rho: Density | RadialField,
    clamp: bool = True,
) -> PotentialResult:
    """Lρ = (−Δ)^{-1}ρ for an EVEN source; negative values are clamped inside the integrals."""
    source = _source_field(grid, rho)
    if source.parity is not Parity.EVEN:
        raise UsageError("newtonian_potential expects an EVEN source")
    values = source.values
    if clamp:
        lowest = float(values.min())
        if lowest < 0.0:
            scale = float(np.abs(values).max())
            log = logger.warning if lowest < -1e-14 * scale else logger.debug
            log("negative source values down to %.3e clamped to 0 in the potential", lowest)
            values = np.maximum(values, 0.0)

    r = grid.nodes
    inner = _from_zero(grid, r**2 * values)
    outer = _to_rmax(grid, r * values)
    u = np.empty(grid.n)
    # inner/r carries the trapezoid error h²(s²ρ)′/(12r), which tends to h²ρ(0)/6 at the origin
    u[0] = outer[0] + grid.h**2 * values[0] / 6.0
    u[1:] = inner[1:] / r[1:] + outer[1:]

    mass = integrate(grid, source.with_values(values))
    return PotentialResult(RadialField(grid, u, Parity.EVEN, "potential"), mass)


def vector_newtonian_potential(grid: RadialGrid, g: RadialField) -> PotentialResult:
    """Componentwise (−Δ)^{-1} of the radial vector field g e_r; returns an ODD field."""
    if not grid.matches(g.grid):
        raise UsageError(f"vector potential source lives on {g.grid!r}, expected {grid!r}")
    if g.parity is not Parity.ODD:
        raise UsageError("vector_newtonian_potential expects an ODD field")

    r = grid.nodes
    values = g.values
    outer = _to_rmax(grid, values)
    inner = _from_zero(grid, r**3 * values)
    h = np.zeros(grid.n)
    h[1:] = r[1:] / 3.0 * outer[1:] + inner[1:] / (3.0 * r[1:] ** 2)

    mass = 4.0 * math.pi * float(_from_zero(grid, r**2 * np.abs(values))[-1])
    return PotentialResult(RadialField(grid, h, Parity.ODD, "vector potential"), mass)


# ── 3-D oracle ───────────────────────────────────────────────────────────────

def sample_cartesian_cloud(
    profile: Callable[[np.ndarray], np.ndarray],
    points_per_axis: int,
    half_width: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Cell-centred samples of a radial profile on the cube [−half_width, half_width]³.

    Returns (points, values, cell_volume).
    """
    spacing = 2.0 * half_width / points_per_axis
    axis = -half_width + spacing * (np.arange(points_per_axis) + 0.5)
    xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    values = np.asarray(profile(np.linalg.norm(points, axis=1)), dtype=float)
    return points, values, spacing**3


def potential_oracle_3d(
    points: np.ndarray,
    values: np.ndarray,
    cell_volume: float,
    queries: np.ndarray,
    workers: int = 1,
) -> np.ndarray:
    """Direct summation of ρ(y_j)ΔV / (4π|x − y_j|) over a Cartesian cloud.

    A query that sits on a sample point replaces that cell's singular term by
    the potential at the centre of a uniform ball of the same volume, ρ a²/2.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    values = np.asarray(values, dtype=float)
    if len(points) > MAX_CLOUD_POINTS:
        raise ResourceError(f"oracle cloud has {len(points)} points, limit is {MAX_CLOUD_POINTS}")
    if len(values) != len(points):
        raise UsageError("oracle cloud: one value per point required")

    ball_radius = (3.0 * cell_volume / (4.0 * math.pi)) ** (1.0 / 3.0)
    self_cutoff = 0.5 * cell_volume ** (1.0 / 3.0)
    charges = values * cell_volume / (4.0 * math.pi)

    def _chunk(start: int) -> np.ndarray:
        dist = cdist(queries[start:start + _QUERY_CHUNK], points)
        is_self = dist < self_cutoff
        safe = np.where(is_self, 1.0, dist)
        terms = np.where(is_self, values * ball_radius**2 / 2.0, charges / safe)
        return terms.sum(axis=1)

    starts = range(0, len(queries), _QUERY_CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk, starts))
    else:
        parts = [_chunk(s) for s in starts]
    return np.concatenate(parts) if parts else np.zeros(0)


def divergence_identity_residual(grid: RadialGrid, rho: Density | RadialField) -> float:
    """max |∇·(−Δ)^{-1}(−∇ρ) − ρ| over the grid, i.e. how well ρ∇(−log ρ) = −∇ρ closes through the potentials."""
    source = _source_field(grid, rho)
    h = vector_newtonian_potential(grid, -ddr(grid, source)).u
    return float(np.max(np.abs(div_radial(grid, h).values - source.values)))
