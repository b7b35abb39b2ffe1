"""Experiment configuration: Table-I and desk profiles, key-value config files and CLI overrides.

Precedence is profile < config file < flags. Config files hold one
``key = value`` pair per line, where keys are ``ExperimentConfig`` field
names, ``#`` starts a comment, lists are comma-separated and fractions such
as ``3/8`` are accepted wherever a real number is expected.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Optional

try:  # pragma: no cover - package-relative imports
    from .geometry import ArrayArchitecture
    from .optimizer import SCHEMES, AoConfig
    from .pso import SwarmConfig
except ImportError:  # pragma: no cover - fallback for direct script execution
    from geometry import ArrayArchitecture
    from optimizer import SCHEMES, AoConfig
    from pso import SwarmConfig

SWEEP_AXES = ("num_subarrays", "region_length", "alpha")


class ConfigError(ValueError):
    """Invalid configuration; ``source`` names the file line or flag that supplied the value."""

    def __init__(self, message: str, source: Optional[str] = None) -> None:
        super().__init__(f"{source}: {message}" if source else message)
        self.source = source


@dataclass(frozen=True)
class ExperimentConfig:
    # carrier frequency is informational; positions are already in wavelengths
    carrier_frequency_ghz: float = 10.0
    snr_db: float = 9.78
    num_antennas: int = 12
    num_users: int = 3
    num_paths: int = 3
    num_subarrays: tuple[int, ...] = (4,)
    alpha: tuple[float, ...] = (0.375,)
    region_length: tuple[float, ...] = (24.0,)
    num_particles: int = 300
    num_iterations: int = 200
    antenna_particles: int = 300
    antenna_iterations: int = 200
    inertia: float = 0.9
    cognitive: float = 2.0
    social: float = 2.0
    penalty_coefficient: float = 1e6
    velocity_clamp: float = 0.2
    ao_max_rounds: int = 10
    ao_epsilon: float = 1e-3
    all_at_once_particles: Optional[int] = None
    all_at_once_iterations: Optional[int] = None
    num_trials: int = 100
    seed: int = 0
    schemes: tuple[str, ...] = SCHEMES
    sweep_axis: str = "num_subarrays"
    out: Path = Path("results/sweep.csv")

    @property
    def snr_linear(self) -> float:
        """Linear transmit SNR with the path-gain power normalized to one."""
        return 10 ** (self.snr_db / 10)

    @property
    def subarray_swarm(self) -> SwarmConfig:
        return SwarmConfig(
            num_particles=self.num_particles,
            num_iterations=self.num_iterations,
            inertia=self.inertia,
            cognitive=self.cognitive,
            social=self.social,
            penalty_coefficient=self.penalty_coefficient,
            velocity_clamp=self.velocity_clamp,
        )

    @property
    def antenna_swarm(self) -> SwarmConfig:
        return replace(
            self.subarray_swarm, num_particles=self.antenna_particles, num_iterations=self.antenna_iterations
        )

    def ao_config(self) -> AoConfig:
        return AoConfig(
            subarray_swarm=self.subarray_swarm,
            antenna_swarm=self.antenna_swarm,
            max_rounds=self.ao_max_rounds,
            epsilon=self.ao_epsilon,
            all_at_once_particles=self.all_at_once_particles,
            all_at_once_iterations=self.all_at_once_iterations,
        )

    def sweep_points(self) -> list["SweepPoint"]:
        """Every value of the swept list; other parameters take the first value of their lists."""
        if self.sweep_axis == "alpha":
            return [SweepPoint("alpha", a, self.num_subarrays[0], self.region_length[0], (a,)) for a in self.alpha]
        if self.sweep_axis == "region_length":
            return [
                SweepPoint("region_length", length, self.num_subarrays[0], length, self.alpha)
                for length in self.region_length
            ]
        return [
            SweepPoint("num_subarrays", float(m_s), m_s, self.region_length[0], self.alpha)
            for m_s in self.num_subarrays
        ]

    def architecture(self, num_subarrays: int, region_length: float, alpha: float) -> ArrayArchitecture:
        return ArrayArchitecture.from_alpha(num_subarrays, self.num_antennas // num_subarrays, region_length, alpha)

    def validate(self) -> list[tuple[str, str]]:
        """Returns (field, message) pairs; an empty list means the config is usable."""
        problems: list[tuple[str, str]] = []
        for name in ("num_antennas", "num_users", "num_paths", "num_trials", "ao_max_rounds"):
            if getattr(self, name) < 1:
                problems.append((name, f"{name} must be >= 1, got {getattr(self, name)}"))
        if self.sweep_axis not in SWEEP_AXES:
            problems.append(("sweep_axis", f"unknown sweep axis '{self.sweep_axis}', expected one of {SWEEP_AXES}"))
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown or not self.schemes:
            problems.append(("schemes", f"unknown schemes {unknown}, expected a subset of {SCHEMES}"))
        for name in ("num_subarrays", "alpha", "region_length"):
            if not getattr(self, name):
                problems.append((name, f"{name} needs at least one value"))
        try:
            self.ao_config()
        except ValueError as exc:
            problems.append(("num_particles", str(exc)))
        if problems:
            return problems

        for m_s in self.num_subarrays:
            if m_s < 1 or self.num_antennas % m_s:
                problems.append(("num_subarrays", f"M_S={m_s} must divide M={self.num_antennas}"))
                continue
            for length in self.region_length:
                bound = self.num_antennas / (2 * length)
                for a in self.alpha:
                    if not bound < a <= 1:
                        problems.append(("alpha", f"alpha={a} outside ({bound:g}, 1] for M={self.num_antennas}, L={length:g}"))
                        continue
                    for violation in self.architecture(m_s, length, a).violations():
                        problems.append(("alpha", violation))
        return problems


class SweepPoint(NamedTuple):
    axis: str
    value: float
    num_subarrays: int
    region_length: float
    alphas: tuple[float, ...]


TABLE1 = ExperimentConfig()
DESK = replace(
    TABLE1,
    num_particles=60,
    num_iterations=60,
    antenna_particles=60,
    antenna_iterations=60,
    num_trials=50,
)
PROFILES = {"table1": TABLE1, "desk": DESK}


def _real(raw: str) -> float:
    return float(Fraction(raw.strip()))


def _integer(raw: str) -> int:
    return int(raw.strip())


def _optional_int(raw: str) -> Optional[int]:
    return None if raw.strip().lower() in {"", "none", "auto"} else int(raw.strip())


def _list_of(item: Callable[[str], object]) -> Callable[[str], tuple]:
    def parse(raw: str) -> tuple:
        return tuple(item(part) for part in raw.split(",") if part.strip())

    return parse


_PARSERS: dict[str, Callable[[str], object]] = {
    "carrier_frequency_ghz": _real,
    "snr_db": _real,
    "num_antennas": _integer,
    "num_users": _integer,
    "num_paths": _integer,
    "num_subarrays": _list_of(_integer),
    "alpha": _list_of(_real),
    "region_length": _list_of(_real),
    "num_particles": _integer,
    "num_iterations": _integer,
    "antenna_particles": _integer,
    "antenna_iterations": _integer,
    "inertia": _real,
    "cognitive": _real,
    "social": _real,
    "penalty_coefficient": _real,
    "velocity_clamp": _real,
    "ao_max_rounds": _integer,
    "ao_epsilon": _real,
    "all_at_once_particles": _optional_int,
    "all_at_once_iterations": _optional_int,
    "num_trials": _integer,
    "seed": _integer,
    "schemes": _list_of(str.strip),
    "sweep_axis": str.strip,
    "out": lambda raw: Path(raw.strip()),
}


def flag_name(key: str) -> str:
    return "--" + key.replace("_", "-")


def _parse(key: str, raw: str, source: str) -> object:
    try:
        return _PARSERS[key](raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse {key} from '{raw}' ({exc})", source) from exc


def read_config_file(path: Path) -> tuple[dict[str, object], dict[str, str]]:
    """Parse a key-value file into typed values plus the ``file:line`` that set each key."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, object] = {}
    sources: dict[str, str] = {}
    for number, raw_line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        source = f"{path}:{number}"
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{raw_line.strip()}'", source)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key '{key}'", source)
        values[key] = _parse(key, value, source)
        sources[key] = source
    return values, sources


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, object]] = None,
    profile: str = "table1",
) -> ExperimentConfig:
    """Resolve a config from a profile, an optional file and flag overrides.

    String override values are parsed like file values; errors name the flag.
    """
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile '{profile}', expected one of {sorted(PROFILES)}", "--profile")
    values: dict[str, object] = {}
    sources: dict[str, str] = {}
    if path is not None:
        values, sources = read_config_file(path)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _PARSERS:
            raise ConfigError(f"unknown setting '{key}'", flag_name(key))
        if isinstance(value, str):
            value = _parse(key, value, flag_name(key))
        elif isinstance(value, list):
            value = tuple(value)
        values[key] = value
        sources[key] = flag_name(key)

    config = replace(PROFILES[profile], **values)
    problems = config.validate()
    if problems:
        key, message = problems[0]
        raise ConfigError(message, sources.get(key))
    return config
