"""
Run configuration: flat `section.key = value` lines over nested dataclasses.

    # comments start with '#' or ';'
    grid.n = 1025
    init.kind = gaussian
    output.snapshot_times = 0.5, 1.0

Unknown keys are rejected with the closest known key as a suggestion.

The parser is a few lines of string handling rather than configparser or
a TOML reader. Keys are dotted paths straight onto the dataclass fields.
The CLI and the pages pass the same text around, so the format stays one
key per line with no section headers.
"""

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from rapidfuzz import process

from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

SUGGESTION_CUTOFF = 80
INIT_KINDS = ("gaussian", "ball", "file")
RHS_FORMS = ("divergence", "nondivergence")
DISTANCE_TARGETS = ("geodesic", "gaussian")


@dataclass
class GridSection:
    n: int = 513
    r_max: float = 10.0


@dataclass
class InitSection:
    kind: str = "gaussian"
    sigma: float = 1.0
    radius: float = 1.0
    smoothing: float = 0.0
    path: str = ""
    normalize: bool = True


@dataclass
class FlowSection:
    alpha: float = 1.0
    rhs: str = "divergence"


@dataclass
class TimeSection:
    t_end: float = 1.0
    cfl_safety: float = 0.5
    dt_max: float = 0.01
    rho_floor: float = 0.0
    mass_drift_budget: float = 1e-6


@dataclass
class OutputSection:
    every: int = 10
    dir: str = "out"
    snapshot_times: tuple[float, ...] = ()


@dataclass
class DiagSection:
    gamma: float = 0.1
    poincare_eps: float = 0.1
    floor_eps: float = 1e-30


@dataclass
class GeodesicSection:
    amplitude: float = 0.1
    width: float = 1.0
    t_end: float = 1.0
    dt: float = 1e-3
    sample_every: int = 10


@dataclass
class DistanceSection:
    target: str = "geodesic"
    target_sigma: float = 1.2
    target_mass: float = 1.0
    rtol: float = 1e-4
    max_iterations: int = 40
    dt: float = 0.01


@dataclass
class SeedsSection:
    base: int = 0


@dataclass
class SimConfig:
    grid: GridSection = field(default_factory=GridSection)
    init: InitSection = field(default_factory=InitSection)
    flow: FlowSection = field(default_factory=FlowSection)
    time: TimeSection = field(default_factory=TimeSection)
    output: OutputSection = field(default_factory=OutputSection)
    diag: DiagSection = field(default_factory=DiagSection)
    geodesic: GeodesicSection = field(default_factory=GeodesicSection)
    distance: DistanceSection = field(default_factory=DistanceSection)
    seeds: SeedsSection = field(default_factory=SeedsSection)


def known_keys() -> list[str]:
    config = SimConfig()
    return sorted(
        f"{section.name}.{item.name}"
        for section in fields(config)
        for item in fields(getattr(config, section.name))
    )


# ── Parsing ──────────────────────────────────────────────────────────────────

def _suggest(key: str) -> str | None:
    match = process.extractOne(key, known_keys(), score_cutoff=SUGGESTION_CUTOFF)
    return match[0] if match else None


def _coerce(key: str, raw: str, current: Any) -> Any:
    try:
        if isinstance(current, bool):
            lowered = raw.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigurationError(
            f"{key}: cannot read {raw!r} as {type(current).__name__}", key=key
        ) from None
    return raw.strip().strip('"').strip("'")


def _validate(config: SimConfig) -> None:
    def _require(ok: bool, key: str, message: str) -> None:
        if not ok:
            raise ConfigurationError(f"{key} {message}", key=key)

    _require(config.grid.n >= 16, "grid.n", "must be >= 16")
    _require(config.grid.r_max > 0, "grid.r_max", "must be positive")
    _require(config.init.kind in INIT_KINDS, "init.kind", f"must be one of {', '.join(INIT_KINDS)}")
    _require(config.init.sigma > 0, "init.sigma", "must be positive")
    _require(0 < config.init.radius <= config.grid.r_max, "init.radius", "must lie in (0, grid.r_max]")
    _require(config.init.smoothing >= 0, "init.smoothing", "must be >= 0")
    _require(config.init.kind != "file" or bool(config.init.path), "init.path", "is required when init.kind = file")
    _require(0 < config.flow.alpha <= 1, "flow.alpha", "must lie in (0, 1]")
    _require(config.flow.rhs in RHS_FORMS, "flow.rhs", f"must be one of {', '.join(RHS_FORMS)}")
    _require(
        config.flow.rhs == "nondivergence" or config.flow.alpha == 1,
        "flow.alpha",
        "other than 1 requires flow.rhs = nondivergence",
    )
    _require(config.time.t_end >= 0, "time.t_end", "must be >= 0")
    _require(0 < config.time.cfl_safety <= 1, "time.cfl_safety", "must lie in (0, 1]")
    _require(config.time.dt_max > 0, "time.dt_max", "must be positive")
    _require(config.time.rho_floor >= 0, "time.rho_floor", "must be >= 0")
    _require(config.time.mass_drift_budget > 0, "time.mass_drift_budget", "must be positive")
    _require(config.output.every >= 1, "output.every", "must be >= 1")
    _require(0 < config.diag.gamma < 1 / 7, "diag.gamma", "must lie in (0, 1/7)")
    _require(config.diag.poincare_eps > 0, "diag.poincare_eps", "must be positive")
    _require(config.diag.floor_eps > 0, "diag.floor_eps", "must be positive")
    _require(config.geodesic.width > 0, "geodesic.width", "must be positive")
    _require(config.geodesic.t_end >= 0, "geodesic.t_end", "must be >= 0")
    _require(config.geodesic.dt > 0, "geodesic.dt", "must be positive")
    _require(config.geodesic.sample_every >= 1, "geodesic.sample_every", "must be >= 1")
    _require(
        config.distance.target in DISTANCE_TARGETS,
        "distance.target",
        f"must be one of {', '.join(DISTANCE_TARGETS)}",
    )
    _require(config.distance.target_sigma > 0, "distance.target_sigma", "must be positive")
    _require(config.distance.target_mass > 0, "distance.target_mass", "must be positive")
    _require(config.distance.rtol > 0, "distance.rtol", "must be positive")
    _require(config.distance.max_iterations >= 1, "distance.max_iterations", "must be >= 1")
    _require(config.distance.dt > 0, "distance.dt", "must be positive")


def parse_config(text: str) -> SimConfig:
    """Parse `section.key = value` lines; missing keys keep their defaults."""
    config = SimConfig()
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'section.key = value', got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        section_name, _, item_name = key.partition(".")
        section = getattr(config, section_name, None) if item_name else None
        if section is None or item_name not in {f.name for f in fields(section)}:
            hint = _suggest(key)
            message = f"unknown configuration key {key!r}"
            if hint:
                message += f" (did you mean {hint!r}?)"
            raise ConfigurationError(message, key=key)
        if key in seen:
            logger.warning("configuration key %s set more than once; last value wins", key)
        seen.add(key)
        setattr(section, item_name, _coerce(key, raw, getattr(section, item_name)))
    _validate(config)
    return config


def load_config(path: str | Path | None) -> SimConfig:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration file {path}: {exc}") from exc
    return parse_config(text)


# ── Echo ─────────────────────────────────────────────────────────────────────

def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(config: SimConfig) -> str:
    """All keys, sorted, in the same line format parse_config reads."""
    lines = []
    for key in known_keys():
        section_name, item_name = key.split(".", 1)
        lines.append(f"{key} = {_format(getattr(getattr(config, section_name), item_name))}")
    return "\n".join(lines) + "\n"


def write_resolved(config: SimConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.resolved"
    path.write_text(format_config(config), encoding="utf-8")
    logger.info("wrote %s", path)
    return path
