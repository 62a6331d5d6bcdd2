"""
Command line: `iso_landau {simulate,geodesic,distance,verify} --config <path> --out <dir>`.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from utils.config import SimConfig, load_config, write_resolved
from utils.errors import LabError, NumericalError
from utils.geometry import (
    GeodesicState,
    geodesic_integrate,
    geodesic_path_action,
    w1_radial,
    w1_wk_inequality_report,
    wk_distance_shooting,
)
from utils.grid import Density, RadialField, RadialGrid, build_uniform_grid, gaussian_density, integrate
from utils.landau import initial_density, simulate
from utils.store import path_payload, shooting_payload, write_json, write_snapshot, write_trace_csv
from utils.verify import VerificationSuite, summarize_run

logger = logging.getLogger(__name__)

THREADS_ENV = "ISO_LANDAU_THREADS"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def oracle_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        logger.warning("%s=%r is not an integer; using 1 worker", THREADS_ENV, raw)
        return 1


def _out_dir(config: SimConfig, out: str | None) -> Path:
    if out:
        config.output.dir = out
    path = Path(config.output.dir)
    path.mkdir(parents=True, exist_ok=True)
    write_resolved(config, path)
    return path


def initial_potential(config: SimConfig, grid: RadialGrid) -> RadialField:
    """Φ₀ = amplitude·exp(−r²/2w²) from the geodesic section."""
    geo = config.geodesic
    return RadialField.from_function(grid, lambda r: geo.amplitude * np.exp(-0.5 * (r / geo.width) ** 2))


def distance_target(config: SimConfig, grid: RadialGrid, rho0: Density) -> RadialField:
    """Endpoint ρ₁ with mass distance.target_mass."""
    dist = config.distance
    if dist.target == "gaussian":
        base = gaussian_density(grid, dist.target_sigma).field
    else:
        state = GeodesicState.initial(grid, rho0, initial_potential(config, grid))
        run = geodesic_integrate(grid, state, 1.0, config.geodesic.dt, 10**9, track_hamiltonian=False)
        base = run.final.rho
    return base * (dist.target_mass / integrate(grid, base))


# ── Commands ─────────────────────────────────────────────────────────────────

def cmd_simulate(config: SimConfig, out: Path) -> int:
    """Run the flow; write trace.csv, snapshots and report.json."""
    try:
        trace, snapshots = simulate(config)
    except NumericalError as exc:
        if exc.trace is not None:
            write_trace_csv(out / "trace.csv", exc.trace.records, failed_at=exc.trace.failed_at)
            write_json(out / "report.json", summarize_run(exc.trace, config.diag.gamma))
        raise
    write_trace_csv(out / "trace.csv", trace.records)
    for snap in snapshots:
        write_snapshot(out / f"snapshot_{snap.t:.6g}.json", trace.grid, snap.t, snap.density.values)
    write_json(out / "report.json", summarize_run(trace, config.diag.gamma))
    return 0


def cmd_geodesic(config: SimConfig, out: Path) -> int:
    """Integrate a geodesic; write geodesic_path.json and report.json."""
    geo = config.geodesic
    grid = build_uniform_grid(config.grid.n, config.grid.r_max)
    rho0 = initial_density(config, grid)
    state = GeodesicState.initial(grid, rho0, initial_potential(config, grid))
    run = geodesic_integrate(grid, state, geo.t_end, geo.dt, geo.sample_every)
    write_json(out / "geodesic_path.json", path_payload(run.samples))
    action = geodesic_path_action(grid, run)
    write_json(
        out / "report.json",
        {
            "hamiltonian_0": run.hamiltonian_0,
            "max_relative_drift": run.max_relative_drift,
            "path_action": action,
            "expected_action": 2.0 * run.hamiltonian_0 * geo.t_end,
            "samples": len(run.samples),
        },
    )
    return 0


def cmd_distance(config: SimConfig, out: Path) -> int:
    """Estimate W_K and W₁ to the configured target; write shooting.json."""
    dist = config.distance
    grid = build_uniform_grid(config.grid.n, config.grid.r_max)
    rho0 = initial_density(config, grid)
    rho1 = distance_target(config, grid, rho0)
    shot = wk_distance_shooting(grid, rho0, rho1, dist.rtol, dist.max_iterations, dist.dt)
    w1 = w1_radial(grid, rho0, rho1)
    row = w1_wk_inequality_report([(dist.target, w1, shot)]).rows[0]
    payload = {**shooting_payload(shot), "w1": w1, "w1_over_wk": row.ratio, "phi0": shot.phi0.values}
    write_json(out / "shooting.json", payload)
    return 0


def cmd_verify(config: SimConfig, out: Path) -> int:
    """Run the identity suite; write verify.json."""
    suite = VerificationSuite(config, workers=oracle_workers())
    suite.run()
    payload = suite.payload()
    write_json(out / "verify.json", payload)
    failed = [e["name"] for e in payload["entries"] if not e["passed"]]
    if failed:
        logger.warning("verify: %d checks failed: %s", len(failed), ", ".join(failed))
        return 1
    logger.info("verify: all %d checks passed", len(payload["entries"]))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "geodesic": cmd_geodesic,
    "distance": cmd_distance,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iso_landau", description="Isotropic Landau equation lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        cmd = sub.add_parser(name, help=fn.__doc__)
        cmd.add_argument("--config", help="configuration file (section.key = value lines)")
        cmd.add_argument("--out", help="output directory, overrides output.dir")
        cmd.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        config = load_config(args.config)
        out = _out_dir(config, args.out)
        return COMMANDS[args.command](config, out)
    except LabError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
