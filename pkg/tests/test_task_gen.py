"""Task generators: deterministic, size-sound, and serialization-stable."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parlab import (
    DEFAULT_LIMITS,
    InvalidParameterError,
    InvalidSpecError,
    StepLimits,
    TaskKind,
    combine_leaves,
    gen_batch_download,
    gen_deep_search,
    gen_wide_search,
    task_spec_from_json,
    task_spec_to_json,
    validate_task_spec,
)


class TestWideSearch:
    def test_item_count_matches_request(self):
        spec = gen_wide_search(7, n_items=40, sources_per_item=2)
        assert len(spec.ground_truth.wide.items) == 40
        assert set(spec.ground_truth.wide.fetches_required) == set(
            spec.ground_truth.wide.items
        )

    def test_same_inputs_give_identical_specs(self):
        a = gen_wide_search(7, n_items=40, sources_per_item=2)
        b = gen_wide_search(7, n_items=40, sources_per_item=2)
        assert task_spec_to_json(a) == task_spec_to_json(b)

    def test_zero_items_rejected(self):
        with pytest.raises(InvalidParameterError):
            gen_wide_search(7, n_items=0, sources_per_item=2)
        with pytest.raises(InvalidParameterError):
            gen_wide_search(7, n_items=4, sources_per_item=0)

    def test_fetch_requirements_stay_within_sources(self):
        spec = gen_wide_search(11, n_items=30, sources_per_item=3)
        for req in spec.ground_truth.wide.fetches_required.values():
            assert 1 <= req <= 3


class TestDeepSearch:
    def test_degenerate_tree_answer_is_its_single_leaf(self):
        spec = gen_deep_search(3, depth=1, branching=1)
        truth = spec.ground_truth.deep
        assert len(truth.branches) == 1
        assert len(truth.branches[0].nodes) == 1
        assert truth.answer == combine_leaves([truth.branches[0].value])

    def test_lookup_count_is_depth_times_branching(self):
        spec = gen_deep_search(3, depth=4, branching=5)
        truth = spec.ground_truth.deep
        assert sum(len(b.nodes) for b in truth.branches) == 20

    def test_answer_aggregates_leaves_order_independently(self):
        spec = gen_deep_search(9, depth=2, branching=3)
        truth = spec.ground_truth.deep
        leaves = [b.value for b in truth.branches]
        assert truth.answer == combine_leaves(leaves)
        assert truth.answer == combine_leaves(list(reversed(leaves)))

    def test_determinism(self):
        assert task_spec_to_json(gen_deep_search(3, 4, 5)) == task_spec_to_json(
            gen_deep_search(3, 4, 5)
        )

    def test_zero_sizes_rejected(self):
        with pytest.raises(InvalidParameterError):
            gen_deep_search(3, depth=0, branching=1)
        with pytest.raises(InvalidParameterError):
            gen_deep_search(3, depth=1, branching=0)


class TestBatchDownload:
    def test_total_sequential_cost(self):
        spec = gen_batch_download(1, n_files=8, file_cost=3)
        assert sum(spec.ground_truth.batch.files.values()) == 24

    def test_single_file_single_step(self):
        spec = gen_batch_download(1, n_files=1, file_cost=1)
        assert list(spec.ground_truth.batch.files.values()) == [1]

    def test_distinct_seeds_rarely_collide(self):
        seen = {
            frozenset(gen_batch_download(s, n_files=5, file_cost=2).ground_truth.batch.files)
            for s in range(100)
        }
        assert len(seen) >= 99

    def test_zero_sizes_rejected(self):
        with pytest.raises(InvalidParameterError):
            gen_batch_download(1, n_files=0, file_cost=1)
        with pytest.raises(InvalidParameterError):
            gen_batch_download(1, n_files=1, file_cost=0)


class TestSpecPlumbing:
    def test_default_limits_per_family(self):
        assert gen_wide_search(1, 4, 1).limits == DEFAULT_LIMITS[TaskKind.WIDE_SEARCH]
        assert gen_deep_search(1, 2, 2).limits == DEFAULT_LIMITS[TaskKind.DEEP_SEARCH]
        assert (
            gen_batch_download(1, 2, 1).limits == DEFAULT_LIMITS[TaskKind.BATCH_DOWNLOAD]
        )

    def test_explicit_limits_are_kept(self):
        limits = StepLimits(5, 6, 7)
        assert gen_wide_search(1, 4, 1, limits=limits).limits == limits

    def test_nonpositive_limits_rejected(self):
        with pytest.raises(InvalidSpecError):
            StepLimits(0, 1, 1).validate()
        with pytest.raises(InvalidSpecError):
            StepLimits(1, -1, 1).validate()
        with pytest.raises(InvalidSpecError):
            StepLimits(1, 1, 0).validate()

    def test_validation_rejects_cardinality_mismatch(self):
        spec = gen_wide_search(1, n_items=4, sources_per_item=1)
        broken = task_spec_from_json(
            task_spec_to_json(spec).replace('"n_items":4', '"n_items":5')
        )
        with pytest.raises(InvalidSpecError):
            validate_task_spec(broken)

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(min_value=0, max_value=10_000),
        st.sampled_from(["wide", "deep", "batch"]),
        st.integers(min_value=1, max_value=12),
        st.integers(min_value=1, max_value=4),
    )
    def test_any_valid_spec_validates_and_round_trips(self, seed, family, size, aux):
        spec = {
            "wide": lambda: gen_wide_search(seed, n_items=size, sources_per_item=aux),
            "deep": lambda: gen_deep_search(seed, depth=aux, branching=size),
            "batch": lambda: gen_batch_download(seed, n_files=size, file_cost=aux),
        }[family]()
        validate_task_spec(spec)
        text = task_spec_to_json(spec)
        assert task_spec_to_json(task_spec_from_json(text)) == text
