"""
Shared pieces of the Streamlit pages: the configuration editor and cached runs.

Runs are cached on the configuration text, so revisiting a page with the same
settings does not recompute. Cached values are plain dicts and lists.
"""

import logging

import streamlit as st

from utils.cli import distance_target, initial_potential, oracle_workers
from utils.config import SimConfig, format_config, parse_config
from utils.diagnostics import entropy
from utils.errors import ConfigurationError, LabError, NumericalError
from utils.geometry import (
    GeodesicState,
    geodesic_integrate,
    geodesic_path_action,
    w1_radial,
    wk_distance_shooting,
)
from utils.grid import build_uniform_grid, integrate
from utils.landau import initial_density, simulate
from utils.store import shooting_payload
from utils.verify import VerificationSuite, summarize_run

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_TEXT = format_config(SimConfig())


# ── Config editor ────────────────────────────────────────────────────────────

def config_editor() -> tuple[str, SimConfig | None]:
    """Text area shared by all pages; returns (text, config) or (text, None) after showing the error."""
    if "config_text" not in st.session_state:
        st.session_state.config_text = DEFAULT_CONFIG_TEXT
    with st.expander("Configuration", expanded=False):
        st.text_area("section.key = value", key="config_text", height=320)
        if st.button("Reset to defaults"):
            st.session_state.config_text = DEFAULT_CONFIG_TEXT
            st.rerun()
    text = st.session_state.config_text
    try:
        return text, parse_config(text)
    except ConfigurationError as exc:
        st.error(f"Configuration error: {exc}")
        return text, None


# ── Cached runs ──────────────────────────────────────────────────────────────

@st.cache_data(show_spinner=False)
def run_simulation(config_text: str) -> dict:
    config = parse_config(config_text)
    try:
        trace, snapshots = simulate(config)
    except NumericalError as exc:
        if exc.trace is None:
            raise
        trace, snapshots = exc.trace, []
    return {
        "records": trace.records,
        "failed_at": trace.failed_at,
        "error": trace.error,
        "report": summarize_run(trace, config.diag.gamma),
        "snapshot_times": [s.t for s in snapshots],
    }


@st.cache_data(show_spinner=False)
def run_geodesic(config_text: str) -> dict:
    config = parse_config(config_text)
    geo = config.geodesic
    grid = build_uniform_grid(config.grid.n, config.grid.r_max)
    state = GeodesicState.initial(grid, initial_density(config, grid), initial_potential(config, grid))
    run = geodesic_integrate(grid, state, geo.t_end, geo.dt, geo.sample_every)
    rows = [
        {
            "t": s.t,
            "mass": integrate(grid, s.rho),
            "entropy": entropy(grid, s.rho.with_values(s.rho.values.clip(min=0.0))),
            "min_rho": float(s.rho.values.min()),
        }
        for s in run.samples
    ]
    return {
        "rows": rows,
        "hamiltonian_0": run.hamiltonian_0,
        "max_relative_drift": run.max_relative_drift,
        "path_action": geodesic_path_action(grid, run),
        "expected_action": 2.0 * run.hamiltonian_0 * geo.t_end,
    }


@st.cache_data(show_spinner=False)
def run_distance(config_text: str) -> dict:
    config = parse_config(config_text)
    dist = config.distance
    grid = build_uniform_grid(config.grid.n, config.grid.r_max)
    rho0 = initial_density(config, grid)
    rho1 = distance_target(config, grid, rho0)
    shot = wk_distance_shooting(grid, rho0, rho1, dist.rtol, dist.max_iterations, dist.dt)
    return {**shooting_payload(shot), "w1": w1_radial(grid, rho0, rho1)}


@st.cache_data(show_spinner=False)
def run_verify(config_text: str) -> dict:
    suite = VerificationSuite(parse_config(config_text), workers=oracle_workers())
    suite.run()
    return suite.payload()


def guarded(fn, config_text: str, label: str) -> dict | None:
    """Call a cached run, turning lab errors into st.error."""
    try:
        with st.spinner(f"{label}…"):
            return fn(config_text)
    except LabError as exc:
        logger.error("%s failed: %s", label, exc)
        st.error(f"{label} failed ({type(exc).__name__}, exit code {exc.exit_code}): {exc}")
        return None
