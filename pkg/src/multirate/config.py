"""Study configuration: strict JSON parsing with per-kind defaults."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError

KINDS = ("ode", "heat", "stokes")
SCHEDULES = ("uniform", "refine_sub1_only", "refine_sub2_only")
REQUIRED = ("kind", "schedule", "levels")

# per-kind defaults for keys left out of the JSON
_DEFAULTS = {
    "ode": {"nu1": 1.0, "nu2": 1.0, "order_r": 1, "space_m": 1},
    "heat": {"nu1": 1.0, "nu2": 1.0, "order_r": 1, "space_m": 64},
    "stokes": {"nu1": 1.0, "nu2": 56.0, "order_r": 2, "space_m": 8},
}


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    schedule: str
    levels: int
    nu1: Optional[float] = None
    nu2: Optional[float] = None
    gamma: Optional[float] = None
    order_r: Optional[int] = None
    space_m: Optional[int] = None
    initial_steps: int = 4
    horizon: float = 1.0
    n_ref: int = 1024
    time_mesh: Optional[dict] = None
    ode_problem: str = "linear"
    manufactured: bool = True
    benchmark: str = "two_pipe"
    output: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        # fields left as None take the per-kind default
        for key, value in _DEFAULTS[self.kind].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if not isinstance(self.levels, int) or self.levels < 1:
            raise ConfigError(f"levels must be an integer >= 1, got {self.levels!r}")
        if self.nu1 <= 0 or self.nu2 <= 0:
            raise ConfigError("nu1 and nu2 must be positive")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.initial_steps < 1 or self.space_m < 1 or self.horizon <= 0:
            raise ConfigError("initial_steps, space_m and horizon must be positive")
        if self.kind == "stokes" and self.order_r < 2:
            raise ConfigError("stokes needs order_r >= 2")
        if self.kind == "stokes" and self.benchmark != "two_pipe":
            raise ConfigError(f"unknown benchmark {self.benchmark!r}")
        if self.kind == "heat" and not self.manufactured:
            raise ConfigError("heat studies need the manufactured solution")
        if self.ode_problem not in ("linear", "fast_slow"):
            raise ConfigError(f"unknown ode_problem {self.ode_problem!r}")

    def replace(self, **changes) -> "StudyConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


_FIELDS = {f.name: f for f in dataclasses.fields(StudyConfig)}


def parse_config(text) -> StudyConfig:
    """Parse JSON text (or a dict) into a validated :class:`StudyConfig`.

    Unknown keys and missing required keys raise :class:`ConfigError`.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    if isinstance(text, str):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    else:
        data = dict(text)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "kind" in data and data["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {data['kind']!r}")
    for key in REQUIRED:
        if key not in data:
            raise ConfigError(f"missing required config key: {key}")
    merged = dict(data)
    for key in ("nu1", "nu2", "horizon"):
        if isinstance(merged.get(key), int) and not isinstance(merged[key], bool):
            merged[key] = float(merged[key])
    if merged.get("gamma") is not None:
        merged["gamma"] = float(merged["gamma"])
    return StudyConfig(**merged)
