"""Reward shaping for orchestrator training.

The composite episode reward adds two shaping terms to the task outcome: a
parallel-instantiation bonus and a sub-agent finish-rate bonus, both scaled by
coefficients annealed linearly to zero over training. Shaping gets the policy
to discover delegation early; by the end of the anneal only task performance
is optimized. The instantiation bonus alone is gameable by launching agents
with nothing to do, which is exactly what the finish-rate term punishes.

A separate length-budget transform alternates between an enforcement phase,
where over-budget responses lose their reward once the group is mostly
solved, and a recovery phase where rewards pass through untouched.
"""

from __future__ import annotations

import math

from dataclasses import dataclass

from .errors import (
    FrozenBudgetError,
    InvalidParameterError,
    MissingBudgetError,
)
from .metrics import ParallelismStats, finish_rate, parallelism_degree
from .orchestrator import EpisodeTrace
from .task_gen import TaskKind, TaskSpec


@dataclass(frozen=True)
class PARLConfig:
    """Composite reward coefficients and anneal schedule."""

    lambda1_init: float = 0.3
    lambda2_init: float = 0.3
    anneal_horizon: int = 100
    parallel_cap: int = 4

    def __post_init__(self) -> None:
        if self.anneal_horizon < 1:
            raise InvalidParameterError("anneal_horizon must be >= 1")
        if self.parallel_cap < 1:
            raise InvalidParameterError("parallel_cap must be >= 1")
        if self.lambda1_init < 0 or self.lambda2_init < 0:
            raise InvalidParameterError("reward coefficients must be nonnegative")


@dataclass(frozen=True)
class RewardBreakdown:
    r_perf: float
    r_parallel: float
    r_finish: float
    lambda1_t: float
    lambda2_t: float

    @property
    def composite(self) -> float:
        return self.lambda1_t * self.r_parallel + self.lambda2_t * self.r_finish + self.r_perf

    def to_dict(self) -> dict:
        return {
            "r_perf": self.r_perf,
            "r_parallel": self.r_parallel,
            "r_finish": self.r_finish,
            "lambda1_t": self.lambda1_t,
            "lambda2_t": self.lambda2_t,
            "composite": self.composite,
        }


def breakdown_from_dict(data: dict) -> RewardBreakdown:
    return RewardBreakdown(
        r_perf=data["r_perf"],
        r_parallel=data["r_parallel"],
        r_finish=data["r_finish"],
        lambda1_t=data["lambda1_t"],
        lambda2_t=data["lambda2_t"],
    )


def item_f1(predicted: dict[str, str], truth: dict[str, str]) -> float:
    """F1 over exact (key, value) pairs. An empty prediction scores 0."""
    if not truth:
        raise InvalidParameterError("truth item set must be nonempty")
    if not predicted:
        return 0.0
    true_positive = sum(1 for k, v in predicted.items() if truth.get(k) == v)
    precision = true_positive / len(predicted)
    recall = true_positive / len(truth)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def answer_score(task: TaskSpec, answer: object) -> float:
    """Outcome score in [0, 1] of a submitted answer, graded per family."""
    if task.kind is TaskKind.WIDE_SEARCH:
        if not isinstance(answer, dict) or not answer:
            return 0.0
        return item_f1(answer, task.ground_truth.wide.items)
    if task.kind is TaskKind.DEEP_SEARCH:
        return 1.0 if answer == task.ground_truth.deep.answer else 0.0
    if not isinstance(answer, (list, tuple, set)):
        return 0.0
    files = task.ground_truth.batch.files
    acquired = sum(1 for f in set(answer) if f in files)
    return acquired / len(files)


def r_perf(task: TaskSpec, trace: EpisodeTrace) -> float:
    """Task outcome of a terminal episode."""
    if trace.partial or not trace.terminal_flag:
        raise InvalidParameterError("r_perf needs a terminal trace")
    return answer_score(task, trace.final_answer)


def r_parallel(stats: ParallelismStats, cfg: PARLConfig) -> float:
    """Instantiation bonus: widest launched group, saturating at the cap."""
    return min(stats.max_width, cfg.parallel_cap) / cfg.parallel_cap


def anneal(lambda_init: float, t: int, horizon: int) -> float:
    """Linear decay to zero: full strength at t=0, zero from t=horizon on."""
    if horizon < 1:
        raise InvalidParameterError("horizon must be >= 1")
    if t < 0:
        raise InvalidParameterError("t must be >= 0")
    return lambda_init * max(0.0, 1.0 - t / horizon)


def parl_reward(task: TaskSpec, trace: EpisodeTrace, cfg: PARLConfig, t: int) -> RewardBreakdown:
    """Composite reward of one terminal episode at training iteration ``t``.

    Also stores the breakdown on the trace so persisted records carry it.
    """
    breakdown = RewardBreakdown(
        r_perf=r_perf(task, trace),
        r_parallel=r_parallel(parallelism_degree(trace.stages), cfg),
        r_finish=finish_rate(trace.stages),
        lambda1_t=anneal(cfg.lambda1_init, t, cfg.anneal_horizon),
        lambda2_t=anneal(cfg.lambda2_init, t, cfg.anneal_horizon),
    )
    trace.reward = breakdown
    return breakdown


# --- length-budget transform ---------------------------------------------------


@dataclass(frozen=True)
class ToggleConfig:
    """Alternating length-budget enforcement.

    Iterations [0, m) enforce, [m, 2m) recover, and so on. Enforcement only
    bites once the group's mean reward reaches ``accuracy_threshold``: a
    budget never punishes a group that is still failing. ``rho`` picks the
    percentile of correct-response lengths that defines each budget, and
    ``fallback_budget`` covers problems with no correct response yet.
    """

    m: int = 10
    accuracy_threshold: float = 0.7
    rho: float = 50.0
    fallback_budget: int = 8

    def __post_init__(self) -> None:
        if self.m < 1:
            raise InvalidParameterError("m must be >= 1")
        if not 0.0 < self.rho <= 100.0:
            raise InvalidParameterError("rho must be in (0, 100]")
        if self.fallback_budget < 1:
            raise InvalidParameterError("fallback_budget must be >= 1")


class BudgetTable:
    """Per-problem token budgets: written during estimation, then frozen."""

    def __init__(self) -> None:
        self._budgets: dict[str, int] = {}
        self.frozen = False

    def set_budget(self, problem_id: str, budget: int) -> None:
        if self.frozen:
            raise FrozenBudgetError("budget table is frozen")
        if budget < 1:
            raise InvalidParameterError("budget must be >= 1")
        self._budgets[problem_id] = budget

    def freeze(self) -> None:
        self.frozen = True

    def budget_for(self, problem_id: str) -> int:
        if problem_id not in self._budgets:
            raise MissingBudgetError(f"no budget estimated for {problem_id!r}")
        return self._budgets[problem_id]

    def __contains__(self, problem_id: str) -> bool:
        return problem_id in self._budgets

    def to_dict(self) -> dict[str, int]:
        return dict(self._budgets)

    @classmethod
    def from_dict(cls, data: dict[str, int], frozen: bool = True) -> BudgetTable:
        table = cls()
        for problem_id, budget in data.items():
            table.set_budget(problem_id, budget)
        if frozen:
            table.freeze()
        return table


def estimate_budget(
    responses: list[tuple[int, float]], rho: float = 50.0, fallback: int = 8
) -> int:
    """Nearest-rank ``rho``-th percentile of correct-response lengths.

    ``responses`` are (length, reward) pairs from one problem's sampling pass;
    a response is correct when its reward reaches 1. With no correct response
    the ``fallback`` budget applies.
    """
    if not 0.0 < rho <= 100.0:
        raise InvalidParameterError("rho must be in (0, 100]")
    if not responses:
        raise InvalidParameterError("cannot estimate a budget from zero responses")
    lengths = sorted(length for length, reward in responses if reward >= 1.0)
    if not lengths:
        return fallback
    rank = math.ceil(rho / 100.0 * len(lengths))
    rank = min(max(rank, 1), len(lengths))
    return lengths[rank - 1]


def toggle_phase(t: int, m: int) -> int:
    """0 = enforcement, 1 = recovery."""
    if m < 1:
        raise InvalidParameterError("m must be >= 1")
    if t < 0:
        raise InvalidParameterError("t must be >= 0")
    return (t // m) % 2


def toggle_reward(
    x_id: str,
    responses: list[tuple[int, float]],
    budgets: BudgetTable,
    cfg: ToggleConfig,
    t: int,
) -> list[float]:
    """Apply the length budget to one problem's (length, reward) group.

    The budget lookup happens in both phases, so a missing estimate fails
    fast instead of surfacing halfway through training.
    """
    if not responses:
        raise InvalidParameterError("response group must be nonempty")
    if not budgets.frozen:
        raise FrozenBudgetError("budget table must be frozen before use")
    budget = budgets.budget_for(x_id)
    rewards = [reward for _, reward in responses]
    if toggle_phase(t, cfg.m) == 1:
        return rewards
    mean_reward = sum(rewards) / len(rewards)
    if mean_reward < cfg.accuracy_threshold:
        return rewards
    return [
        0.0 if length > budget else reward
        for length, reward in responses
    ]
