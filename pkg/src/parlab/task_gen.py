"""Synthetic task generators with machine-checkable ground truth.

Three task families, each stressing sequential agents in a different way:

* wide search   — many mutually independent key/value items to collect,
* deep search   — several independent lookup chains whose leaf values are
                  aggregated into one final answer,
* batch download — a set of files, each needing a fixed number of
                  sequential download steps.

Generation is a pure function of ``(kind, seed, params)``: the same inputs
always produce a byte-identical spec, and specs serialize to plain JSON so a
corpus can be generated once and replayed.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidParameterError, InvalidSpecError
from .seeding import derive_seed


class TaskKind(str, Enum):
    WIDE_SEARCH = "wide_search"
    DEEP_SEARCH = "deep_search"
    BATCH_DOWNLOAD = "batch_download"


@dataclass(frozen=True)
class StepLimits:
    """Episode budgets: orchestrator steps, per-sub-agent steps, action tokens."""

    orchestrator_max_steps: int
    subagent_max_steps: int
    max_tokens: int

    def validate(self) -> None:
        if self.orchestrator_max_steps <= 0:
            raise InvalidSpecError("orchestrator_max_steps must be positive")
        if self.subagent_max_steps <= 0:
            raise InvalidSpecError("subagent_max_steps must be positive")
        if self.max_tokens <= 0:
            raise InvalidSpecError("max_tokens must be positive")


#: Default budgets per family. Deep chains get a tight orchestrator budget and
#: generous sub-agents; wide collection gets generous budgets on both sides;
#: bulk downloads get a generous orchestrator and tighter sub-agents.
DEFAULT_LIMITS: dict[TaskKind, StepLimits] = {
    TaskKind.WIDE_SEARCH: StepLimits(100, 100, 100),
    TaskKind.DEEP_SEARCH: StepLimits(15, 100, 15),
    TaskKind.BATCH_DOWNLOAD: StepLimits(100, 50, 100),
}


@dataclass(frozen=True)
class WideTruth:
    """Independent key -> value items; each key needs ``fetches_required[key]``
    fetch calls before its value is revealed."""

    items: dict[str, str]
    fetches_required: dict[str, int]


@dataclass(frozen=True)
class DeepBranch:
    """One lookup chain: fetching ``nodes[i]`` reveals ``nodes[i+1]``; the last
    node reveals ``value``."""

    nodes: tuple[str, ...]
    value: str


@dataclass(frozen=True)
class DeepTruth:
    branches: tuple[DeepBranch, ...]
    answer: str


@dataclass(frozen=True)
class BatchTruth:
    """File identifiers with the number of sequential download steps each costs."""

    files: dict[str, int]


@dataclass(frozen=True)
class GroundTruth:
    """Hidden solution data. Exactly one of the three sections is populated;
    only the tool simulator and reward computation may read it."""

    wide: WideTruth | None = None
    deep: DeepTruth | None = None
    batch: BatchTruth | None = None


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    kind: TaskKind
    seed: int
    params: dict[str, int]
    ground_truth: GroundTruth
    limits: StepLimits
    description: str = field(default="")

    def total_units(self) -> int:
        """Number of work units the task decomposes into."""
        if self.kind is TaskKind.WIDE_SEARCH:
            return len(self.ground_truth.wide.items)
        if self.kind is TaskKind.DEEP_SEARCH:
            return len(self.ground_truth.deep.branches)
        return len(self.ground_truth.batch.files)


def combine_leaves(values: list[str] | tuple[str, ...]) -> str:
    """Order-independent aggregation of deep-search leaf values.

    Sorted concatenation hashed down to a short token, so the answer is
    checkable no matter in which order branches complete.
    """
    joined = ",".join(sorted(values))
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


def _token(rng: random.Random, prefix: str, used: set[str]) -> str:
    while True:
        cand = f"{prefix}-{rng.getrandbits(32):08x}"
        if cand not in used:
            used.add(cand)
            return cand


def gen_wide_search(
    seed: int,
    n_items: int,
    sources_per_item: int,
    limits: StepLimits | None = None,
) -> TaskSpec:
    """Generate a wide-search task: ``n_items`` independent items, each
    resolvable with between 1 and ``sources_per_item`` fetch calls."""
    if n_items < 1 or sources_per_item < 1:
        raise InvalidParameterError(
            f"n_items and sources_per_item must be >= 1, got {n_items}, {sources_per_item}"
        )
    rng = random.Random(derive_seed("wide", seed, n_items, sources_per_item))
    used: set[str] = set()
    items: dict[str, str] = {}
    fetches: dict[str, int] = {}
    for _ in range(n_items):
        key = _token(rng, "item", used)
        items[key] = f"{rng.getrandbits(24):06x}"
        fetches[key] = rng.randint(1, sources_per_item)
    params = {"n_items": n_items, "sources_per_item": sources_per_item}
    return TaskSpec(
        task_id=f"wide-{seed}-{n_items}x{sources_per_item}",
        kind=TaskKind.WIDE_SEARCH,
        seed=seed,
        params=params,
        ground_truth=GroundTruth(wide=WideTruth(items=items, fetches_required=fetches)),
        limits=limits or DEFAULT_LIMITS[TaskKind.WIDE_SEARCH],
        description=(
            f"Collect the value of each of {n_items} independent items. "
            f"Resolving an item may take up to {sources_per_item} fetches."
        ),
    )


def gen_deep_search(
    seed: int,
    depth: int,
    branching: int,
    limits: StepLimits | None = None,
) -> TaskSpec:
    """Generate a deep-search task: ``branching`` independent chains of
    ``depth`` dependent lookups, aggregated into a single final answer."""
    if depth < 1 or branching < 1:
        raise InvalidParameterError(
            f"depth and branching must be >= 1, got {depth}, {branching}"
        )
    rng = random.Random(derive_seed("deep", seed, depth, branching))
    used: set[str] = set()
    branches = []
    for _ in range(branching):
        nodes = tuple(_token(rng, "node", used) for _ in range(depth))
        value = f"{rng.getrandbits(24):06x}"
        branches.append(DeepBranch(nodes=nodes, value=value))
    answer = combine_leaves([b.value for b in branches])
    params = {"depth": depth, "branching": branching}
    return TaskSpec(
        task_id=f"deep-{seed}-{depth}x{branching}",
        kind=TaskKind.DEEP_SEARCH,
        seed=seed,
        params=params,
        ground_truth=GroundTruth(deep=DeepTruth(branches=tuple(branches), answer=answer)),
        limits=limits or DEFAULT_LIMITS[TaskKind.DEEP_SEARCH],
        description=(
            f"Follow {branching} independent lookup chains of {depth} steps each "
            f"and submit the aggregate of their leaf values."
        ),
    )


def gen_batch_download(
    seed: int,
    n_files: int,
    file_cost: int,
    limits: StepLimits | None = None,
) -> TaskSpec:
    """Generate a batch-download task: ``n_files`` files, each acquired after
    ``file_cost`` sequential download steps."""
    if n_files < 1 or file_cost < 1:
        raise InvalidParameterError(
            f"n_files and file_cost must be >= 1, got {n_files}, {file_cost}"
        )
    rng = random.Random(derive_seed("batch", seed, n_files, file_cost))
    used: set[str] = set()
    files = {_token(rng, "file", used): file_cost for _ in range(n_files)}
    params = {"n_files": n_files, "file_cost": file_cost}
    return TaskSpec(
        task_id=f"batch-{seed}-{n_files}x{file_cost}",
        kind=TaskKind.BATCH_DOWNLOAD,
        seed=seed,
        params=params,
        ground_truth=GroundTruth(batch=BatchTruth(files=files)),
        limits=limits or DEFAULT_LIMITS[TaskKind.BATCH_DOWNLOAD],
        description=(
            f"Acquire all {n_files} files. Each file takes {file_cost} download steps."
        ),
    )


def validate_task_spec(spec: TaskSpec) -> None:
    """Check structural soundness: declared sizes must match ground truth.

    Raises :class:`InvalidSpecError` on any mismatch.
    """
    spec.limits.validate()
    gt = spec.ground_truth
    populated = [s is not None for s in (gt.wide, gt.deep, gt.batch)]
    if sum(populated) != 1:
        raise InvalidSpecError("exactly one ground-truth section must be populated")
    if spec.kind is TaskKind.WIDE_SEARCH:
        if gt.wide is None:
            raise InvalidSpecError("wide-search spec lacks wide ground truth")
        n = spec.params["n_items"]
        if len(gt.wide.items) != n:
            raise InvalidSpecError(
                f"ground truth has {len(gt.wide.items)} items, params declare {n}"
            )
        if set(gt.wide.fetches_required) != set(gt.wide.items):
            raise InvalidSpecError("fetches_required keys do not match items")
        cap = spec.params["sources_per_item"]
        if any(not 1 <= f <= cap for f in gt.wide.fetches_required.values()):
            raise InvalidSpecError("fetches_required out of [1, sources_per_item]")
    elif spec.kind is TaskKind.DEEP_SEARCH:
        if gt.deep is None:
            raise InvalidSpecError("deep-search spec lacks deep ground truth")
        if len(gt.deep.branches) != spec.params["branching"]:
            raise InvalidSpecError("branch count does not match params")
        if any(len(b.nodes) != spec.params["depth"] for b in gt.deep.branches):
            raise InvalidSpecError("branch depth does not match params")
        if gt.deep.answer != combine_leaves([b.value for b in gt.deep.branches]):
            raise InvalidSpecError("deep answer does not aggregate the leaf values")
    else:
        if gt.batch is None:
            raise InvalidSpecError("batch-download spec lacks batch ground truth")
        if len(gt.batch.files) != spec.params["n_files"]:
            raise InvalidSpecError("file count does not match params")
        if any(c != spec.params["file_cost"] for c in gt.batch.files.values()):
            raise InvalidSpecError("per-file cost does not match params")


# --- JSON round-trip ---------------------------------------------------------


def task_spec_to_dict(spec: TaskSpec) -> dict:
    gt = spec.ground_truth
    gt_dict: dict[str, object | None] = {"wide": None, "deep": None, "batch": None}
    if gt.wide is not None:
        gt_dict["wide"] = {
            "items": dict(gt.wide.items),
            "fetches_required": dict(gt.wide.fetches_required),
        }
    if gt.deep is not None:
        gt_dict["deep"] = {
            "branches": [
                {"nodes": list(b.nodes), "value": b.value} for b in gt.deep.branches
            ],
            "answer": gt.deep.answer,
        }
    if gt.batch is not None:
        gt_dict["batch"] = {"files": dict(gt.batch.files)}
    return {
        "task_id": spec.task_id,
        "kind": spec.kind.value,
        "seed": spec.seed,
        "params": dict(spec.params),
        "ground_truth": gt_dict,
        "limits": {
            "orchestrator_max_steps": spec.limits.orchestrator_max_steps,
            "subagent_max_steps": spec.limits.subagent_max_steps,
            "max_tokens": spec.limits.max_tokens,
        },
        "description": spec.description,
    }


def task_spec_from_dict(data: dict) -> TaskSpec:
    gt_data = data["ground_truth"]
    wide = deep = batch = None
    if gt_data.get("wide") is not None:
        wide = WideTruth(
            items=dict(gt_data["wide"]["items"]),
            fetches_required={k: int(v) for k, v in gt_data["wide"]["fetches_required"].items()},
        )
    if gt_data.get("deep") is not None:
        deep = DeepTruth(
            branches=tuple(
                DeepBranch(nodes=tuple(b["nodes"]), value=b["value"])
                for b in gt_data["deep"]["branches"]
            ),
            answer=gt_data["deep"]["answer"],
        )
    if gt_data.get("batch") is not None:
        batch = BatchTruth(files={k: int(v) for k, v in gt_data["batch"]["files"].items()})
    limits = data["limits"]
    return TaskSpec(
        task_id=data["task_id"],
        kind=TaskKind(data["kind"]),
        seed=int(data["seed"]),
        params={k: int(v) for k, v in data["params"].items()},
        ground_truth=GroundTruth(wide=wide, deep=deep, batch=batch),
        limits=StepLimits(
            orchestrator_max_steps=int(limits["orchestrator_max_steps"]),
            subagent_max_steps=int(limits["subagent_max_steps"]),
            max_tokens=int(limits["max_tokens"]),
        ),
        description=data.get("description", ""),
    )


def task_spec_to_json(spec: TaskSpec) -> str:
    """Canonical JSON form; equal specs serialize to equal bytes."""
    return json.dumps(task_spec_to_dict(spec), sort_keys=True, separators=(",", ":"))


def task_spec_from_json(text: str) -> TaskSpec:
    return task_spec_from_dict(json.loads(text))
