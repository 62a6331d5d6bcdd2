"""Small grids, configs and synthetic trace rows shared by the test modules."""

import tempfile
from dataclasses import replace
from pathlib import Path

from utils.config import SimConfig, parse_config
from utils.diagnostics import DiagnosticsRecord
from utils.grid import RadialGrid, build_uniform_grid


def small_grid(n: int = 257, r_max: float = 10.0) -> RadialGrid:
    return build_uniform_grid(n, r_max)


def node_aligned_grid(n: int = 513, r_max: float = 8.0) -> RadialGrid:
    """h = 1/64, so radii 1 and 2 fall on nodes."""
    return build_uniform_grid(n, r_max)


def config_from(**keys) -> SimConfig:
    """parse_config over `section__key=value` keyword pairs."""
    return parse_config("\n".join(f"{k.replace('__', '.')} = {v}" for k, v in keys.items()))


def write_config(directory: str | Path, **keys) -> Path:
    path = Path(directory) / "run.cfg"
    path.write_text("\n".join(f"{k.replace('__', '.')} = {v}" for k, v in keys.items()) + "\n", encoding="utf-8")
    return path


def temp_dir() -> tempfile.TemporaryDirectory:
    return tempfile.TemporaryDirectory(prefix="iso_landau_test_")


_BLANK = DiagnosticsRecord(
    t=0.0,
    mass=1.0,
    entropy=0.0,
    dEdt_fd=None,
    dissipation=None,
    second_moment=1.5,
    kappa=0.0,
    fisher_weighted=0.0,
    sup_rho=1.0,
    sup_Lrho=1.0,
    hessian_value=None,
    d2Edt2_fd=None,
    cube_norm=0.0,
    eqnpos_value=None,
    rate_alpha=0.15,
)


def record(t: float, **values) -> DiagnosticsRecord:
    return replace(_BLANK, t=t, **values)
