"""Step accounting: critical path, total work, widths, finish rate, context."""

import random

import pytest
from hypothesis import given, strategies as st

from parlab import (
    ContextConstants,
    StageRecord,
    context_usage,
    critical_steps,
    finish_rate,
    parallelism_degree,
    total_steps,
)
from parlab.metrics import EPISODE_CSV_FIELDS, episode_metrics_row

from conftest import make_stages, one_trace, random_stages


stage_lists = st.lists(
    st.tuples(
        st.integers(min_value=1, max_value=3),
        st.lists(st.integers(min_value=1, max_value=9), max_size=5),
    ),
    max_size=8,
).map(make_stages)


class TestCriticalSteps:
    def test_three_serial_stages_cost_three(self):
        assert critical_steps(make_stages([(1, []), (1, []), (1, [])])) == 3

    def test_groups_cost_their_longest_member(self):
        stages = make_stages([(1, [4, 2, 7]), (1, [3, 3])])
        assert critical_steps(stages) == 12

    def test_total_counts_every_subagent(self):
        assert total_steps(make_stages([(1, [4, 2, 7])])) == 14

    def test_empty_episode_costs_nothing(self):
        assert critical_steps([]) == 0
        assert total_steps([]) == 0

    @given(stage_lists)
    def test_critical_never_exceeds_total(self, stages):
        assert critical_steps(stages) <= total_steps(stages)

    @given(stage_lists)
    def test_equality_exactly_when_no_stage_fans_out(self, stages):
        serial = all(len(s.sub_steps) <= 1 for s in stages)
        assert (critical_steps(stages) == total_steps(stages)) == serial

    @given(stage_lists, stage_lists)
    def test_appending_stages_never_reduces_cost(self, head, tail):
        assert critical_steps(head + tail) >= critical_steps(head)
        assert total_steps(head + tail) >= total_steps(head)

    def test_random_episodes_agree_with_bruteforce(self):
        rng = random.Random(99)
        for _ in range(200):
            stages = random_stages(rng)
            expected = sum(
                s.main_steps + (max(s.sub_steps) if s.sub_steps else 0)
                for s in stages
            )
            assert critical_steps(stages) == expected


class TestParallelism:
    def test_width_summary(self):
        stats = parallelism_degree(make_stages([(1, []), (1, [1, 1, 1]), (1, [1] * 5)]))
        assert stats.max_width == 5
        assert stats.mean_width == pytest.approx(8 / 3)
        assert stats.episodes_with_zero_spawn is False

    def test_no_stages_counts_as_zero_spawn(self):
        stats = parallelism_degree([])
        assert stats == parallelism_degree(make_stages([]))
        assert stats.episodes_with_zero_spawn is True
        assert stats.max_width == 0

    def test_all_serial_sets_zero_spawn_flag(self):
        assert parallelism_degree(make_stages([(1, []), (2, [])])).episodes_with_zero_spawn

    @given(stage_lists)
    def test_zero_spawn_implies_critical_equals_total(self, stages):
        if parallelism_degree(stages).episodes_with_zero_spawn:
            assert critical_steps(stages) == total_steps(stages)


class TestFinishRate:
    def test_everything_completed(self):
        assert finish_rate(make_stages([(1, [2, 2]), (1, [3])])) == 1.0

    def test_partial_completion(self):
        stages = [
            StageRecord(0, 1, sub_steps=(1, 1, 1, 1), assigned=4, completed=1)
        ]
        assert finish_rate(stages) == 0.25

    def test_no_assignments_yields_zero(self):
        assert finish_rate(make_stages([(1, []), (1, [])])) == 0.0

    @given(stage_lists)
    def test_rate_is_a_proper_fraction(self, stages):
        assert 0.0 <= finish_rate(stages) <= 1.0


class TestStageRecord:
    def test_completed_cannot_exceed_assigned(self):
        with pytest.raises(ValueError):
            StageRecord(0, 1, sub_steps=(1,), assigned=1, completed=2)

    def test_sub_steps_must_match_assigned(self):
        with pytest.raises(ValueError):
            StageRecord(0, 1, sub_steps=(1, 1), assigned=3, completed=0)


class TestContextUsage:
    def test_serial_episode_has_no_subagent_context(self, wide_task):
        trace = one_trace(wide_task)
        trace.stages = make_stages([(1, []), (1, [])])
        _, max_sub = context_usage(trace)
        assert max_sub == 0

    def test_orchestrator_ledger_arithmetic(self, wide_task):
        trace = one_trace(wide_task)
        trace.stages = [
            StageRecord(0, 1, sub_steps=(4, 2), assigned=2, completed=2,
                        result_tokens=6),
            StageRecord(1, 1, result_tokens=3),
        ]
        constants = ContextConstants(tokens_per_action_overhead=10,
                                     tokens_per_subagent_step=7)
        orch, max_sub = context_usage(trace, constants)
        assert orch == (10 + 6) + (10 + 3)
        assert max_sub == 4 * 7

    def test_subagent_context_scales_with_longest_run(self, wide_task):
        trace = one_trace(wide_task)
        trace.stages = make_stages([(1, [4, 2, 7]), (1, [3, 3])])
        _, max_sub = context_usage(trace)
        assert max_sub == 7 * ContextConstants().tokens_per_subagent_step


class TestMetricsRow:
    def test_row_has_exactly_the_csv_fields(self, wide_task):
        row = episode_metrics_row(one_trace(wide_task), r_perf=0.5)
        assert tuple(row) == EPISODE_CSV_FIELDS

    def test_row_values_match_direct_computation(self, wide_task):
        trace = one_trace(wide_task)
        row = episode_metrics_row(trace)
        assert row["critical_steps"] == critical_steps(trace.stages)
        assert row["total_steps"] == total_steps(trace.stages)
        assert row["finish_rate"] == finish_rate(trace.stages)
        assert row["n_action_tokens"] == len(trace.tokens)
        assert row["r_perf"] == ""
        assert row["kind"] == "wide_search"
