"""
Radial discretization of R³ for radially symmetric functions.

A radial function f(|x|) is stored by its values on a uniform radius axis
r_i = i·h, i = 0..n−1. Volume integrals ∫_{R³} f dx = 4π∫ f(r) r² dr use the
composite trapezoid rule on r²·f, so the origin node carries zero weight.

Fields carry a parity tag: EVEN for scalars (f′(0) = 0) and ODD for the radial
component of a radial vector field (g(0) = 0). The differential operators use
the matching reflection across r = 0 to close their stencils at the origin.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.special import erfc

from utils.errors import ConfigurationError, UsageError

logger = logging.getLogger(__name__)

MIN_NODES = 16


class Parity(str, Enum):
    EVEN = "even"
    ODD = "odd"


# ── Grid ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform radius axis with trapezoid weights for ∫_{R³}."""

    n: int
    r_max: float
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < MIN_NODES:
            raise ConfigurationError(f"grid.n must be an integer >= {MIN_NODES}, got {self.n}", key="grid.n")
        if not (self.r_max > 0 and math.isfinite(self.r_max)):
            raise ConfigurationError(f"grid.r_max must be positive, got {self.r_max}", key="grid.r_max")

        nodes = np.linspace(0.0, float(self.r_max), int(self.n))
        h = float(self.r_max) / (self.n - 1)
        coeff = np.ones(self.n)
        coeff[0] = coeff[-1] = 0.5
        weights = 4.0 * np.pi * h * coeff * nodes**2
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def h(self) -> float:
        return self.r_max / (self.n - 1)

    def matches(self, other: "RadialGrid") -> bool:
        return self is other or (self.n == other.n and self.r_max == other.r_max)

    def __repr__(self) -> str:
        return f"RadialGrid(n={self.n}, r_max={self.r_max})"


def build_uniform_grid(n: int, r_max: float) -> RadialGrid:
    """Uniform nodes r_i = i·r_max/(n−1) with composite-trapezoid weights on r²·(·)."""
    return RadialGrid(n=n, r_max=r_max)


# ── Fields ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class RadialField:
    """Values of a radial scalar (EVEN) or radial vector component (ODD) on a grid."""

    grid: RadialGrid
    values: np.ndarray
    parity: Parity = Parity.EVEN
    units: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise UsageError(f"field has shape {values.shape}, grid expects ({self.grid.n},)")
        parity = Parity(self.parity)
        if parity is Parity.ODD and values[0] != 0.0:
            raise UsageError(f"ODD field must vanish at r=0, got {values[0]!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "parity", parity)

    @classmethod
    def from_function(
        cls,
        grid: RadialGrid,
        fn: Callable[[np.ndarray], np.ndarray],
        parity: Parity = Parity.EVEN,
        units: str = "",
    ) -> "RadialField":
        values = np.asarray(fn(grid.nodes), dtype=float) * np.ones(grid.n)
        if Parity(parity) is Parity.ODD:
            values[0] = 0.0
        return cls(grid, values, parity, units)

    @classmethod
    def zeros(cls, grid: RadialGrid, parity: Parity = Parity.EVEN) -> "RadialField":
        return cls(grid, np.zeros(grid.n), parity)

    def with_values(self, values: np.ndarray) -> "RadialField":
        return RadialField(self.grid, values, self.parity, self.units)

    # ── arithmetic ──────────────────────────────────────────────────────────

    def _other_values(self, other, op: str) -> np.ndarray | float:
        if isinstance(other, RadialField):
            _require_same_grid(self.grid, other, op)
            return other.values
        return float(other)

    def __add__(self, other):
        if isinstance(other, RadialField) and other.parity is not self.parity:
            raise UsageError(f"cannot add {self.parity.value} and {other.parity.value} fields")
        if not isinstance(other, RadialField) and self.parity is Parity.ODD and float(other) != 0.0:
            raise UsageError("cannot add a constant to an ODD field")
        return RadialField(self.grid, self.values + self._other_values(other, "+"), self.parity, self.units)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return RadialField(self.grid, -self.values, self.parity, self.units)

    def __mul__(self, other):
        if isinstance(other, RadialField):
            parity = Parity.EVEN if other.parity is self.parity else Parity.ODD
            values = self.values * self._other_values(other, "*")
            if parity is Parity.ODD:
                values[0] = 0.0
            return RadialField(self.grid, values, parity)
        return RadialField(self.grid, self.values * float(other), self.parity, self.units)

    __rmul__ = __mul__

    def __truediv__(self, other: float):
        if isinstance(other, RadialField):
            raise UsageError("field division is not defined; guard divisions explicitly")
        return RadialField(self.grid, self.values / float(other), self.parity, self.units)


@dataclass(frozen=True, eq=False)
class Density:
    """A nonnegative EVEN field with its cached mass."""

    field: RadialField
    mass: float

    @classmethod
    def from_values(cls, grid: RadialGrid, values, normalize: bool = False) -> "Density":
        values = np.array(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise UsageError("density values must be finite")
        if np.any(values < 0.0):
            raise UsageError(f"density must be nonnegative, min value {values.min():.3e}")
        field_ = RadialField(grid, values, Parity.EVEN, "density")
        mass = integrate(grid, field_)
        if normalize:
            if mass <= 0.0:
                raise UsageError("cannot normalize a density with zero mass")
            field_ = field_ * (1.0 / mass)
            mass = integrate(grid, field_)
        return cls(field_, mass)

    @classmethod
    def clipped(cls, grid: RadialGrid, values, floor: float = 0.0) -> "Density":
        """Density from raw values with everything below `floor` set to 0."""
        values = np.array(values, dtype=float)
        values[values < floor] = 0.0
        return cls.from_values(grid, values)

    @property
    def grid(self) -> RadialGrid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def gaussian_density(grid: RadialGrid, sigma: float = 1.0, normalize: bool = True) -> Density:
    """Isotropic Gaussian of standard deviation σ per axis; σ=1 is the standard Maxwellian M."""
    if sigma <= 0:
        raise ConfigurationError(f"init.sigma must be positive, got {sigma}", key="init.sigma")
    r = grid.nodes
    values = np.exp(-0.5 * (r / sigma) ** 2) / (2.0 * np.pi * sigma**2) ** 1.5
    return Density.from_values(grid, values, normalize=normalize)


def ball_density(
    grid: RadialGrid,
    radius: float = 1.0,
    smoothing: float = 0.0,
    normalize: bool = True,
) -> Density:
    """Uniform ball, or an erfc-smoothed ball when `smoothing` > 0.

    The sharp ball takes half its interior value on the boundary node when the
    radius falls on a node, so the trapezoid rule integrates it to second order.
    """
    if radius <= 0 or radius > grid.r_max:
        raise ConfigurationError(f"init.radius must lie in (0, r_max], got {radius}", key="init.radius")
    r = grid.nodes
    if smoothing > 0:
        values = 0.5 * erfc((r - radius) / (math.sqrt(2.0) * smoothing))
    else:
        values = np.where(r < radius, 1.0, 0.0)
        values[np.isclose(r, radius, rtol=0.0, atol=1e-9 * grid.h)] = 0.5
    values = values * 3.0 / (4.0 * np.pi * radius**3)
    return Density.from_values(grid, values, normalize=normalize)


# ── Quadrature ───────────────────────────────────────────────────────────────

def _require_same_grid(grid: RadialGrid, f: RadialField, op: str) -> None:
    if not grid.matches(f.grid):
        raise UsageError(f"{op}: field lives on {f.grid!r}, expected {grid!r}")


def _require(grid: RadialGrid, f: RadialField, parity: Parity, op: str) -> np.ndarray:
    _require_same_grid(grid, f, op)
    if f.parity is not parity:
        raise UsageError(f"{op} expects an {parity.value.upper()} field, got {f.parity.value.upper()}")
    return f.values


def integrate(grid: RadialGrid, f: RadialField) -> float:
    """∫_{R³} f dx for an EVEN field; exactly rounded sum, independent of thread count."""
    values = _require(grid, f, Parity.EVEN, "integrate")
    return math.fsum(grid.weights * values)


# ── Differential operators ───────────────────────────────────────────────────

def ddr(grid: RadialGrid, f: RadialField) -> RadialField:
    """f′ e_r of an EVEN field; zero at the origin, one-sided 2nd order at r_max."""
    v = _require(grid, f, Parity.EVEN, "ddr")
    h = grid.h
    out = np.empty(grid.n)
    out[0] = 0.0
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return RadialField(grid, out, Parity.ODD, f.units)


def d2dr2(grid: RadialGrid, f: RadialField) -> RadialField:
    """f″ of an EVEN field, using the even reflection f(−h) = f(h) at the origin."""
    v = _require(grid, f, Parity.EVEN, "d2dr2")
    h2 = grid.h**2
    out = np.empty(grid.n)
    out[0] = 2.0 * (v[1] - v[0]) / h2
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h2
    return RadialField(grid, out, Parity.EVEN, f.units)


def div_radial(grid: RadialGrid, g: RadialField) -> RadialField:
    """∇·(g e_r) = g′ + 2g/r; at the origin the limit 3g′(0) from the odd reflection."""
    v = _require(grid, g, Parity.ODD, "div_radial")
    h = grid.h
    r = grid.nodes
    out = np.empty(grid.n)
    out[0] = 3.0 * v[1] / h
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h) + 2.0 * v[1:-1] / r[1:-1]
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h) + 2.0 * v[-1] / r[-1]
    return RadialField(grid, out, Parity.EVEN, g.units)


def laplacian_radial(grid: RadialGrid, f: RadialField) -> RadialField:
    """Δf = f″ + 2f′/r; at the origin the limit 3f″(0)."""
    second = d2dr2(grid, f).values
    first = ddr(grid, f).values
    r = grid.nodes
    out = np.empty(grid.n)
    out[0] = 3.0 * second[0]
    out[1:] = second[1:] + 2.0 * first[1:] / r[1:]
    return RadialField(grid, out, Parity.EVEN, f.units)


def vector_laplacian_radial(grid: RadialGrid, g: RadialField) -> RadialField:
    """Radial component of Δ(g e_r): g″ + 2g′/r − 2g/r², zero at the origin."""
    v = _require(grid, g, Parity.ODD, "vector_laplacian_radial")
    h = grid.h
    r = grid.nodes
    second = np.empty(grid.n)
    first = np.empty(grid.n)
    second[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    first[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    second[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    first[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    out = np.zeros(grid.n)
    out[1:] = second[1:] + 2.0 * first[1:] / r[1:] - 2.0 * v[1:] / r[1:] ** 2
    return RadialField(grid, out, Parity.ODD, g.units)
