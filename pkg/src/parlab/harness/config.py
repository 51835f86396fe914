"""Experiment configuration, loaded from a single JSON document."""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, InvalidParameterError, InvalidSpecError
from ..optimizer import RLConfig
from ..orchestrator import (
    ActionToken,
    default_vocabulary,
    token_from_dict,
    vocabulary_manifest,
)
from ..rewards import PARLConfig, ToggleConfig
from ..seeding import derive_seed
from ..task_gen import (
    TaskKind,
    TaskSpec,
    gen_batch_download,
    gen_deep_search,
    gen_wide_search,
    task_spec_from_dict,
    task_spec_to_dict,
)

POLICY_NAMES = ("learned", "swarm_script", "serial_script")
TRACE_LEVELS = ("summary", "full")

# Size parameters each family accepts; values may be ints or [lo, hi] ranges.
_FAMILY_PARAMS = {
    TaskKind.WIDE_SEARCH: ("n_items", "sources_per_item"),
    TaskKind.DEEP_SEARCH: ("depth", "branching"),
    TaskKind.BATCH_DOWNLOAD: ("n_files", "file_cost"),
}


@dataclass(frozen=True)
class TaskDistribution:
    """A family of generated tasks: which generator, how many, what sizes."""

    family: TaskKind
    count: int
    params: dict

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ConfigError("task distribution count must be >= 1")
        allowed = _FAMILY_PARAMS[self.family]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ConfigError(
                f"unknown {self.family.value} size parameters: {sorted(unknown)}"
            )

    def materialize(self, seed: int, start_index: int = 0) -> list[TaskSpec]:
        """Draw `count` concrete tasks; ranges are sampled per task."""
        generators = {
            TaskKind.WIDE_SEARCH: gen_wide_search,
            TaskKind.DEEP_SEARCH: gen_deep_search,
            TaskKind.BATCH_DOWNLOAD: gen_batch_download,
        }
        out: list[TaskSpec] = []
        for i in range(self.count):
            index = start_index + i
            task_seed = derive_seed("task", seed, self.family.value, index)
            rng = random.Random(derive_seed("task-size", seed, self.family.value, index))
            kwargs = {}
            for name, value in self.params.items():
                if isinstance(value, (list, tuple)):
                    lo, hi = value
                    kwargs[name] = rng.randint(int(lo), int(hi))
                else:
                    kwargs[name] = int(value)
            out.append(generators[self.family](task_seed, **kwargs))
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "count": self.count,
            "params": dict(self.params),
        }


@dataclass
class ExperimentConfig:
    """Everything a run needs beyond the output location.

    `tasks` holds generator distributions; `inline_tasks` holds fully
    specified task specs (e.g. a corpus emitted by the `gen` verb). A run
    uses the union of both.
    """

    tasks: list[TaskDistribution] = field(default_factory=list)
    inline_tasks: list[TaskSpec] = field(default_factory=list)
    vocab: tuple[ActionToken, ...] = field(default_factory=default_vocabulary)
    rl: RLConfig = field(default_factory=RLConfig)
    parl: PARLConfig = field(default_factory=PARLConfig)
    toggle: ToggleConfig | None = None
    seeds: tuple[int, ...] = (0,)
    concurrency_limit: int = 1
    output_dir: str = "runs"
    trace_level: str = "full"
    policies: tuple[str, ...] = ("learned",)
    eval_episodes: int = 8
    speedup_thresholds: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7)

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        if self.trace_level not in TRACE_LEVELS:
            raise ConfigError(f"trace_level must be one of {TRACE_LEVELS}")
        for policy in self.policies:
            if policy not in POLICY_NAMES:
                raise ConfigError(f"unknown policy {policy!r}; choose from {POLICY_NAMES}")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        for threshold in self.speedup_thresholds:
            if not 0.0 < threshold <= 1.0:
                raise ConfigError("speedup thresholds must lie in (0, 1]")

    def materialize_tasks(self, seed: int) -> list[TaskSpec]:
        out = list(self.inline_tasks)
        for dist in self.tasks:
            out.extend(dist.materialize(seed, start_index=len(out)))
        if not out:
            raise ConfigError("config defines no tasks")
        return out

    def to_dict(self) -> dict:
        data: dict = {
            "tasks": [d.to_dict() for d in self.tasks],
            "inline_tasks": [task_spec_to_dict(t) for t in self.inline_tasks],
            "vocab": vocabulary_manifest(self.vocab),
            "rl": dataclasses.asdict(self.rl),
            "parl": dataclasses.asdict(self.parl),
            "seeds": list(self.seeds),
            "concurrency_limit": self.concurrency_limit,
            "output_dir": self.output_dir,
            "trace_level": self.trace_level,
            "policies": list(self.policies),
            "eval_episodes": self.eval_episodes,
            "speedup_thresholds": list(self.speedup_thresholds),
        }
        if self.toggle is not None:
            data["toggle"] = dataclasses.asdict(self.toggle)
        return data


_KNOWN_KEYS = {
    "tasks",
    "inline_tasks",
    "vocab",
    "rl",
    "parl",
    "toggle",
    "seeds",
    "concurrency_limit",
    "output_dir",
    "trace_level",
    "policies",
    "eval_episodes",
    "speedup_thresholds",
}


def _distribution_from_dict(data: dict) -> TaskDistribution:
    try:
        family = TaskKind(data["family"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad task family: {exc}") from exc
    return TaskDistribution(
        family=family,
        count=int(data.get("count", 1)),
        params=dict(data.get("params", {})),
    )


def config_from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        tasks = [_distribution_from_dict(d) for d in data.get("tasks", [])]
        inline = [task_spec_from_dict(t) for t in data.get("inline_tasks", [])]
        vocab = tuple(token_from_dict(t) for t in data.get("vocab", []))
        if not vocab:
            vocab = default_vocabulary()
        rl = RLConfig(**data.get("rl", {}))
        parl = PARLConfig(**data.get("parl", {}))
        toggle = ToggleConfig(**data["toggle"]) if "toggle" in data else None
    except (InvalidParameterError, InvalidSpecError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return ExperimentConfig(
        tasks=tasks,
        inline_tasks=inline,
        vocab=vocab,
        rl=rl,
        parl=parl,
        toggle=toggle,
        seeds=tuple(int(s) for s in data.get("seeds", [0])),
        concurrency_limit=int(data.get("concurrency_limit", 1)),
        output_dir=str(data.get("output_dir", "runs")),
        trace_level=str(data.get("trace_level", "full")),
        policies=tuple(data.get("policies", ["learned"])),
        eval_episodes=int(data.get("eval_episodes", 8)),
        speedup_thresholds=tuple(
            float(x) for x in data.get("speedup_thresholds", [0.3, 0.4, 0.5, 0.6, 0.7])
        ),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(data)
