"""Flat key-value configuration documents with a strict schema.

The format is one ``key = value`` assignment per line, ``#`` comments, and
blank lines.  Keys are exactly the scenario, sweep, and solver field names
below; anything else is rejected by name.  All powers are entered in dBm
and converted once, at this boundary.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError
from .power import IlaWfOptions
from .scenario import ScenarioConfig

SWEEP_AXES = ("power_dbm", "antennas", "users")
MODES = ("rs", "no_rs")


@dataclass
class SweepSpec:
    """One sweep: an axis, its values, and how many UE drops per point."""

    axis: str = "power_dbm"
    values: tuple = ()
    drops: int = 1
    mc_samples: int = 100_000
    modes: tuple = ("rs", "no_rs")
    output_path: str = "sweep.csv"

    def validate(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep needs at least one value")
        vals = np.asarray(self.values, dtype=float)
        if np.any(np.diff(vals) <= 0):
            raise ConfigError("sweep values must be strictly increasing")
        if self.drops < 1:
            raise ConfigError(f"drops must be >= 1, got {self.drops}")
        if self.mc_samples < 1:
            raise ConfigError(f"mc_samples must be >= 1, got {self.mc_samples}")
        for m in self.modes:
            if m not in MODES:
                raise ConfigError(f"mode must be one of {MODES}, got {m!r}")
        if len(self.modes) == 0:
            raise ConfigError("need at least one mode")


@dataclass
class RunSettings:
    """Toggles that select between documented model variants."""

    include_pi: bool = True               # interference weighting in the weight program
    independent_pilot_noise: bool = False
    quartic_variant: str = "auto"         # "auto" adjudicates by Monte Carlo


_SCENARIO_FIELDS = {f.name: f.type for f in fields(ScenarioConfig)}
_SWEEP_FIELDS = {f.name for f in fields(SweepSpec)}
_SOLVER_FIELDS = {f.name for f in fields(IlaWfOptions) if f.name != "freeze_common"}
_SETTINGS_FIELDS = {f.name for f in fields(RunSettings)}

_INT_SCENARIO = {"M", "K", "tau", "tau_p", "num_clusters", "seed"}
_INT_SWEEP = {"drops", "mc_samples"}
_INT_SOLVER = {"max_iterations"}
_BOOL_KEYS = {"nested_bisection", "include_pi", "independent_pilot_noise"}


def _parse_scalar(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")
    if key in _INT_SCENARIO | _INT_SWEEP | _INT_SOLVER:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: expected an integer, got {raw!r}") from exc
    if key in ("axis", "output_path", "quartic_variant"):
        return raw
    if key == "values":
        try:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        except ValueError as exc:
            raise ConfigError(f"key 'values': expected comma-separated numbers, got {raw!r}") from exc
    if key == "modes":
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected a number, got {raw!r}") from exc


def parse_config(text: str):
    """Parse a config document into (ScenarioConfig, SweepSpec | None,
    IlaWfOptions, RunSettings).

    Unspecified scenario fields take the standard defaults.  A SweepSpec is
    returned only when the document sets at least one sweep key.
    """
    scenario_kwargs = {}
    sweep_kwargs = {}
    solver_kwargs = {}
    settings_kwargs = {}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        value = _parse_scalar(key, raw)
        if key in _SCENARIO_FIELDS:
            scenario_kwargs[key] = value
        elif key in _SWEEP_FIELDS:
            sweep_kwargs[key] = value
        elif key in _SOLVER_FIELDS:
            solver_kwargs[key] = value
        elif key in _SETTINGS_FIELDS:
            settings_kwargs[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    config = ScenarioConfig(**scenario_kwargs)  # validates in __post_init__
    sweep = None
    if sweep_kwargs:
        sweep = SweepSpec(**sweep_kwargs)
        sweep.validate()
    solver = IlaWfOptions(**solver_kwargs)
    settings = RunSettings(**settings_kwargs)
    if settings.quartic_variant not in ("auto", "real", "circular"):
        raise ConfigError(
            f"quartic_variant must be auto, real, or circular, got {settings.quartic_variant!r}"
        )
    return config, sweep, solver, settings


def load_config(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
