"""Cost and behavior accounting for parallel-agent episodes.

An episode is a sequence of stages. Each stage is one orchestrator action,
optionally fanning out a group of sub-agents that run concurrently. The cost
of a stage under parallel execution is its main-agent steps plus the steps of
the longest-running sub-agent in the group, and the episode's critical steps
are the sum of stage costs -- the parallel analog of a critical path. Total
steps count all work performed regardless of concurrency.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:  # pragma: no cover
    from .orchestrator import EpisodeTrace


@dataclass(frozen=True)
class StageRecord:
    """One execution stage: the orchestrator's own steps plus the step counts
    of the sub-agent group it spawned (empty for direct tool calls)."""

    stage_index: int
    main_steps: int
    sub_steps: tuple[int, ...] = ()
    assigned: int = 0
    completed: int = 0
    result_tokens: int = 0
    note: str = ""

    def __post_init__(self) -> None:
        if self.completed > self.assigned:
            raise ValueError("completed cannot exceed assigned")
        if len(self.sub_steps) != self.assigned:
            raise ValueError("sub_steps length must equal assigned")


@dataclass(frozen=True)
class ParallelismStats:
    max_width: int
    mean_width: float
    episodes_with_zero_spawn: bool


@dataclass(frozen=True)
class ContextConstants:
    """Token-accounting constants. Only ratios between serial and parallel
    context are ever asserted, so the absolute values are configurable."""

    tokens_per_action_overhead: int = 10
    tokens_per_subagent_step: int = 10


def critical_steps(stages: Sequence[StageRecord]) -> int:
    """Sum over stages of main steps plus the longest sub-agent in the stage.

    The max over an empty group is 0, so serial episodes reduce to plain step
    counting.
    """
    return sum(s.main_steps + (max(s.sub_steps) if s.sub_steps else 0) for s in stages)


def total_steps(stages: Sequence[StageRecord]) -> int:
    """Sum of all work performed: main steps plus every sub-agent's steps."""
    return sum(s.main_steps + sum(s.sub_steps) for s in stages)


def parallelism_degree(stages: Sequence[StageRecord]) -> ParallelismStats:
    """Group widths per stage: maximum, mean, and whether nothing was spawned."""
    widths = [len(s.sub_steps) for s in stages]
    if not widths:
        return ParallelismStats(max_width=0, mean_width=0.0, episodes_with_zero_spawn=True)
    return ParallelismStats(
        max_width=max(widths),
        mean_width=sum(widths) / len(widths),
        episodes_with_zero_spawn=all(w == 0 for w in widths),
    )


def finish_rate(stages: Sequence[StageRecord]) -> float:
    """Completed subtasks over assigned subtasks, aggregated over the episode.

    Defined as 0 when nothing was assigned: a policy that never decomposes
    must not collect the completion bonus.
    """
    assigned = sum(s.assigned for s in stages)
    if assigned == 0:
        return 0.0
    return sum(s.completed for s in stages) / assigned


def context_usage(
    trace: "EpisodeTrace",
    constants: ContextConstants = ContextConstants(),
) -> tuple[int, int]:
    """Context ledger for one episode.

    Returns ``(orchestrator_tokens, max_subagent_tokens)``. The orchestrator
    context grows by a fixed per-action overhead plus the result tokens routed
    back in each stage; sub-agent internal traces never enter it. A sub-agent's
    own context is proportional to the steps it ran.
    """
    orch = sum(
        constants.tokens_per_action_overhead + s.result_tokens for s in trace.stages
    )
    max_sub = max(
        (step for s in trace.stages for step in s.sub_steps),
        default=0,
    )
    return orch, max_sub * constants.tokens_per_subagent_step


EPISODE_CSV_FIELDS = (
    "task_id",
    "kind",
    "critical_steps",
    "total_steps",
    "max_width",
    "mean_width",
    "finish_rate",
    "orchestrator_tokens",
    "n_action_tokens",
    "r_perf",
    "terminal_flag",
)


def episode_metrics_row(
    trace: "EpisodeTrace", r_perf: float | None = None
) -> dict[str, object]:
    """One CSV row of per-episode metrics.

    The outcome score is computed by the reward layer, which sits above this
    module, so it is passed in rather than derived here.
    """
    stats = parallelism_degree(trace.stages)
    orchestrator_tokens, _ = context_usage(trace)
    return {
        "task_id": trace.task.task_id,
        "kind": trace.task.kind.value,
        "critical_steps": critical_steps(trace.stages),
        "total_steps": total_steps(trace.stages),
        "max_width": stats.max_width,
        "mean_width": stats.mean_width,
        "finish_rate": finish_rate(trace.stages),
        "orchestrator_tokens": orchestrator_tokens,
        "n_action_tokens": len(trace.tokens),
        "r_perf": "" if r_perf is None else r_perf,
        "terminal_flag": trace.terminal_flag,
    }
