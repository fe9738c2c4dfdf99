"""
Stage one tests
Quasi-rectangles, goal functions, pixel swaps and library building
"""

from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsr.errors import InvalidArgumentError, LibraryAuditError
from tsr.grid import ClusterShape, distance_histogram
from tsr.seeds import derive_rng
from tsr.synthesis import (
    TargetStats,
    _SwapState,
    _shell,
    _UniformDraws,
    audit_library,
    build_surrogate,
    f1,
    f2,
    init_quasi_rectangle,
    mean_shape_index,
    propose_swap,
    random_polyomino,
    synthesize_cluster,
    synthesize_library,
)

logger = logging.getLogger("tests.synthesis")

SHORT_BUDGET: int = 100


def _shape(*rows: str) -> ClusterShape:
    return ClusterShape.from_mask(np.array([[ch == "1" for ch in row] for row in rows]))


def _assert_valid_surrogate(target: TargetStats, shape: ClusterShape) -> None:
    assert shape.area == target.area
    assert shape.interface == target.interface
    assert shape.is_connected()
    assert not shape.has_pores()


# ------------------------------------------------------------------------------
# Quasi-rectangles
# ------------------------------------------------------------------------------
@pytest.mark.synthesis
@pytest.mark.parametrize(
    "area, pixels",
    [
        (1, {(0, 0)}),
        (5, {(0, 0), (1, 0), (2, 0), (0, 1), (1, 1)}),
        (9, {(r, c) for r in range(3) for c in range(3)}),
    ],
)
def test_quasi_rectangle_fills_columns(area: int, pixels: set) -> None:
    """
    TC_SYN_001: Columns of the (n+1)x(n+1) square are filled top to bottom.
    """
    assert init_quasi_rectangle(area).pixel_set() == pixels


@pytest.mark.synthesis
@given(st.integers(min_value=1, max_value=400))
def test_quasi_rectangle_is_valid_seed(area: int) -> None:
    """
    TC_SYN_002: Every quasi-rectangle is connected, pore-free and of exact area.
    """
    shape = init_quasi_rectangle(area)

    assert shape.area == area
    assert shape.is_connected()
    assert not shape.has_pores()


# ------------------------------------------------------------------------------
# Goal functions
# ------------------------------------------------------------------------------
@pytest.mark.synthesis
def test_f1_values() -> None:
    """
    TC_SYN_003: f1 is the squared relative interface deviation.
    """
    assert f1(76, 76) == 0.0
    assert f1(152, 76) == 1.0
    assert f1(76, 95) == pytest.approx(0.04)
    assert f1(95 - 19, 95) == f1(95 + 19, 95)


@pytest.mark.synthesis
def test_f1_rejects_zero_target() -> None:
    """
    TC_SYN_004: A zero target interface is an error.
    """
    with pytest.raises(InvalidArgumentError):
        f1(4, 0)


@pytest.mark.synthesis
def test_f2_worked_example() -> None:
    """
    TC_SYN_005: N=2, h_target=(4,6), h=(4,0) gives 0.5.
    """
    target = TargetStats(area=2, interface=6, histogram=np.array([4, 6]), bins=2)

    assert f2(np.array([4, 0]), target) == pytest.approx(0.5)
    assert f2(target.histogram, target) == 0.0


@pytest.mark.synthesis
def test_f2_rejects_bin_mismatch() -> None:
    """
    TC_SYN_006: Histograms must share the target's bin count.
    """
    target = TargetStats(area=2, interface=6, histogram=np.array([4, 6]), bins=2)

    with pytest.raises(InvalidArgumentError):
        f2(np.array([4, 0, 0]), target)


@pytest.mark.synthesis
def test_target_stats_bins_from_longest_edge_distance() -> None:
    """
    TC_SYN_007: N = 2·(floor(max edge distance) + 1).
    """
    bar = _shape("1111")

    stats = TargetStats.from_shape(bar)

    assert stats.bins == 8
    assert stats.histogram.tolist() == [4, 3, 2, 1, 0, 0, 0, 0]
    assert (stats.area, stats.interface) == (4, 10)


# ------------------------------------------------------------------------------
# Pixel swaps
# ------------------------------------------------------------------------------
@pytest.mark.synthesis
def test_domino_swap_stays_a_domino(rng: np.random.Generator) -> None:
    """
    TC_SYN_008: Swaps on a domino always yield another domino.
    """
    domino = _shape("11")

    for _ in range(50):
        swapped = propose_swap(domino, rng)

        assert swapped is not None
        assert swapped.area == 2
        assert swapped.interface == 6


@pytest.mark.synthesis
def test_swaps_preserve_area_connectivity_and_pores(rng: np.random.Generator) -> None:
    """
    TC_SYN_009: A chain of swaps never splits the cluster or opens a pore.
    """
    shape = _shape("111", "111", "111")

    for _ in range(300):
        swapped = propose_swap(shape, rng)
        if swapped is None:
            continue
        assert swapped.area == 9
        assert swapped.is_connected()
        assert not swapped.has_pores()
        shape = swapped


@pytest.mark.synthesis
def test_swap_needs_two_pixels(rng: np.random.Generator) -> None:
    """
    TC_SYN_010: Single pixels cannot be swapped.
    """
    with pytest.raises(InvalidArgumentError):
        propose_swap(_shape("1"), rng)


@pytest.mark.synthesis
@given(st.integers(min_value=1, max_value=60), st.integers(min_value=0, max_value=2**32 - 1))
def test_random_polyomino_is_valid(area: int, seed: int) -> None:
    """
    TC_SYN_011: Random polyominoes are connected, pore-free and of exact area.
    """
    shape = random_polyomino(area, np.random.default_rng(seed))

    assert shape.area == area
    assert shape.is_connected()
    assert not shape.has_pores()


# ------------------------------------------------------------------------------
# Single-cluster synthesis
# ------------------------------------------------------------------------------
@pytest.mark.synthesis
def test_single_pixel_target_returned_unchanged(rng: np.random.Generator) -> None:
    """
    TC_SYN_012: Area 1 bypasses the swap loop with f1 = f2 = 0.
    """
    target = TargetStats.from_shape(_shape("1"))

    result = synthesize_cluster(target, rng)

    assert result.shape == _shape("1")
    assert (result.f1, result.f2, result.attempts) == (0.0, 0.0, 0)


@pytest.mark.synthesis
def test_square_target_keeps_interface(rng: np.random.Generator) -> None:
    """
    TC_SYN_013: A square target is already matched by its quasi-rectangle.
    """
    target = TargetStats.from_shape(_shape("111", "111", "111"))

    result = synthesize_cluster(target, rng, budget_factor=SHORT_BUDGET)

    _assert_valid_surrogate(target, result.shape)
    assert result.f1 == 0.0


@pytest.mark.synthesis
@pytest.mark.parametrize(
    "rows",
    [
        ("1111",),
        ("11", "10", "10"),
        ("010", "111", "010"),
        ("11100", "00111"),
        ("1111", "1000", "1000"),
    ],
)
def test_build_surrogate_matches_interface(rows) -> None:
    """
    TC_SYN_014: Library members reach f1 = 0 with a non-increasing f1 trace.
    """
    # Arrange
    target = TargetStats.from_shape(_shape(*rows))

    # Act
    result = build_surrogate(target, index=0, seed=3, budget_factor=SHORT_BUDGET, restart_cap=10)

    # Assert
    _assert_valid_surrogate(target, result.shape)
    trace = result.f1_trace
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert trace[-1] == 0.0


@pytest.mark.synthesis
def test_build_surrogate_is_reproducible() -> None:
    """
    TC_SYN_015: The same seed and index give the same surrogate.
    """
    target = TargetStats.from_shape(_shape("11100", "00111"))

    first = build_surrogate(target, 4, seed=9, budget_factor=20, restart_cap=10)
    second = build_surrogate(target, 4, seed=9, budget_factor=20, restart_cap=10)

    assert first.shape == second.shape
    assert first.f1_trace == second.f1_trace


# ------------------------------------------------------------------------------
# Libraries
# ------------------------------------------------------------------------------
@pytest.mark.synthesis
def test_unit_pixel_library() -> None:
    """
    TC_SYN_016: One unit-pixel target gives a unit-pixel library with <q> = 0.25.
    """
    library = synthesize_library([TargetStats.from_shape(_shape("1"))], seed=1)

    assert library.shapes == (_shape("1"),)
    assert library.mean_shape_index == 0.25


@pytest.mark.synthesis
def test_random_targets_yield_matching_library() -> None:
    """
    TC_SYN_017: Random polyomino targets get surrogates of equal area and interface.
    """
    # Arrange
    rng = derive_rng(5, "test-targets")
    shapes = [random_polyomino(int(rng.integers(1, 21)), rng) for _ in range(8)]
    targets = [TargetStats.from_shape(shape) for shape in shapes]

    # Act
    library = synthesize_library(targets, seed=2, budget_factor=SHORT_BUDGET, restart_cap=10)

    # Assert
    audit_library(targets, library.shapes)
    assert library.mean_shape_index == mean_shape_index(shapes)
    for result in library.results:
        assert all(b <= a for a, b in zip(result.f1_trace, result.f1_trace[1:]))


@pytest.mark.synthesis
def test_audit_reports_first_mismatch() -> None:
    """
    TC_SYN_018: The audit names the first cluster whose interface differs.
    """
    targets = [TargetStats.from_shape(_shape("11")), TargetStats.from_shape(_shape("1111"))]
    shapes = [_shape("11"), _shape("11", "11")]

    with pytest.raises(LibraryAuditError) as excinfo:
        audit_library(targets, shapes)

    assert excinfo.value.cluster_index == 1


@pytest.mark.synthesis
def test_audit_rejects_pores() -> None:
    """
    TC_SYN_019: A surrogate with a pore fails the audit.
    """
    ring = _shape("111", "101", "111")
    target = TargetStats(area=8, interface=16, histogram=ring.distance_histogram(6), bins=6)

    with pytest.raises(LibraryAuditError, match="pores"):
        audit_library([target], [ring])


@pytest.mark.synthesis
@pytest.mark.slow
@pytest.mark.timeout(300)
@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=400), st.integers(min_value=0, max_value=2**32 - 1))
def test_stage_one_guarantee_on_random_targets(area: int, seed: int) -> None:
    """
    TC_SYN_020: Random targets of area 1..400 are matched within the default budget.
    """
    target = TargetStats.from_shape(random_polyomino(area, np.random.default_rng(seed)))

    result = build_surrogate(target, index=0, seed=seed)

    _assert_valid_surrogate(target, result.shape)
    assert all(b <= a for a, b in zip(result.f1_trace, result.f1_trace[1:]))


@pytest.mark.synthesis
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_swap_state_tracks_full_recomputation(seed: int) -> None:
    """
    TC_SYN_021: Incremental interface, shell, edges and histogram equal a rebuild after every decision.
    """
    bins = 24
    state = _SwapState(random_polyomino(40, np.random.default_rng(seed)), bins)
    draws = _UniformDraws(np.random.default_rng(seed + 100))
    decisions = np.random.default_rng(seed + 200)
    committed = 0

    for _ in range(400):
        swap = state.propose(draws, 64)
        if swap is None:
            continue
        if decisions.random() < 0.5:
            state.revert(swap)
        else:
            lost, gained = state.edge_changes(swap)
            state.commit(lost, gained, state.histogram_after(lost, gained))
            committed += 1

        shape = state.shape()
        assert state.interface == shape.interface
        assert set(state.shell[i] for i in range(len(state.shell))) == set(_shell(state.pixels))
        assert {state.edges[i] for i in range(len(state.edges))} == {
            (int(r), int(c)) for r, c in shape.edge_pixels
        }
        np.testing.assert_array_equal(state.histogram, distance_histogram(shape.edge_pixels, bins))

    logger.info("seed %d: %d swaps committed", seed, committed)
    assert committed > 0


@pytest.mark.synthesis
def test_patience_stops_matched_cluster_early(rng: np.random.Generator) -> None:
    """
    TC_SYN_022: A matched cluster stops after patience × Q_max stale attempts; patience 0 spends the budget.
    """
    square = _shape("1111", "1111", "1111", "1111")
    target = TargetStats.from_shape(square)

    early = synthesize_cluster(target, rng, budget_factor=20, patience=1)
    full = synthesize_cluster(target, rng, budget_factor=20, patience=0)

    assert early.f1 == 0.0
    assert early.attempts <= 3 * square.area + 1
    assert full.attempts > 20 * 3 * len(square.edge_pixels)
    _assert_valid_surrogate(target, early.shape)


@pytest.mark.synthesis
def test_negative_patience_rejected(rng: np.random.Generator) -> None:
    """
    TC_SYN_023: Patience must be non-negative.
    """
    target = TargetStats.from_shape(_shape("111", "111"))

    with pytest.raises(InvalidArgumentError):
        synthesize_cluster(target, rng, patience=-1)
