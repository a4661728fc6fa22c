"""Run configuration: planner knobs, pattern overrides, bench settings.

Precedence is CLI flag over config file over built-in default.  Unknown
keys are rejected so typos fail loudly instead of silently running with
defaults.
"""

import json
import math
from dataclasses import dataclass, field, fields

from lgplan.bench import BenchConfig, BenchError
from lgplan.planner import PlannerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    budget: int = 10000
    exploration: float = math.sqrt(2.0)
    action_width: int = 8
    pose_tries: int = 64
    relocation_tries: int = 64
    check_tolerance: float = 4.0
    seed: int = None
    out: str = None
    jobs: int = 1
    patterns: dict = field(default_factory=dict)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if not isinstance(self.patterns, dict):
            raise ConfigError("patterns must be a table of per-pattern overrides")
        try:
            self.planner()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def planner(self, frozen_ids=frozenset()) -> PlannerConfig:
        return PlannerConfig(
            budget=self.budget,
            exploration=self.exploration,
            action_width=self.action_width,
            pose_tries=self.pose_tries,
            relocation_tries=self.relocation_tries,
            check_tolerance=self.check_tolerance,
            frozen_ids=frozenset(frozen_ids),
        )

    def to_json(self) -> dict:
        return {
            "budget": self.budget,
            "exploration": self.exploration,
            "action_width": self.action_width,
            "pose_tries": self.pose_tries,
            "relocation_tries": self.relocation_tries,
            "check_tolerance": self.check_tolerance,
            "seed": self.seed,
            "out": self.out,
            "jobs": self.jobs,
            "patterns": dict(self.patterns),
            "bench": self.bench.to_json(),
        }


def config_from_data(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = dict(data)
    if "bench" in kwargs:
        try:
            kwargs["bench"] = BenchConfig.from_json(kwargs["bench"])
        except BenchError as exc:
            raise ConfigError(str(exc)) from None
    try:
        return RunConfig(**kwargs)
    except (TypeError, BenchError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_data(data)


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """New RunConfig with non-None overrides applied (flags beat files)."""
    data = {f.name: getattr(config, f.name) for f in fields(RunConfig)}
    for key, value in overrides.items():
        if key not in data:
            raise ConfigError(f"unknown config key: {key}")
        if value is not None:
            data[key] = value
    return RunConfig(**data)
