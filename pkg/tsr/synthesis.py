"""
Stage one: surrogate cluster synthesis

Responsibilities:
- Target statistics (area, interface, edge-distance histogram) of inclusions
- Quasi-rectangle seed shapes
- Boundary pixel swaps gated by the Moore-ring wall count
- Acceptance rules driven by f1 (interface) and f2 (distance histogram)
- Library building with per-member seeds and restarts
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from tsr.errors import InvalidArgumentError, LibraryAuditError, SynthesisError
from tsr.grid import MOORE_RING, SIDE_STEPS, ClusterShape, Pixel, distance_histogram, ring_walls
from tsr.seeds import derive_rng

logger = logging.getLogger("tsr.synthesis")

# ------------------------------------------------------------------------------
# Defaults
# ------------------------------------------------------------------------------
BUDGET_FACTOR: int = 3_000          # attempts stop past BUDGET_FACTOR × Q_max
SELECTION_RETRY_FACTOR: int = 64    # draws per proposal = factor × surface pixels
RESTART_CAP: int = 5
PATIENCE: int = 20                 # matched clusters stop after PATIENCE × Q_max stale attempts


# ------------------------------------------------------------------------------
# Types
# ------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class TargetStats:
    area: int
    interface: int
    histogram: np.ndarray
    bins: int

    def __post_init__(self) -> None:
        if self.area < 1:
            raise InvalidArgumentError("target area must be >= 1")
        if self.interface < 4:
            raise InvalidArgumentError("target interface must be >= 4")
        if len(self.histogram) != self.bins:
            raise InvalidArgumentError("histogram length must equal bins")

    @property
    def max_h(self) -> int:
        return int(np.max(self.histogram))

    @classmethod
    def from_shape(cls, shape: ClusterShape) -> TargetStats:
        edges = shape.edge_pixels
        longest = float(pdist(edges.astype(float)).max()) if len(edges) > 1 else 0.0
        bins = 2 * (math.floor(longest) + 1)
        return cls(
            area=shape.area,
            interface=shape.interface,
            histogram=shape.distance_histogram(bins),
            bins=bins,
        )


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    shape: ClusterShape
    f1: float
    f2: float
    attempts: int
    accepted: int
    f1_trace: tuple[float, ...] = field(repr=False)
    restarts: int = 0


@dataclass(frozen=True, eq=False)
class SurrogateLibrary:
    seed: int
    shapes: tuple[ClusterShape, ...]
    results: tuple[SynthesisResult, ...] = field(repr=False, default=())

    @property
    def mean_shape_index(self) -> float:
        return mean_shape_index(self.shapes)

    def __len__(self) -> int:
        return len(self.shapes)


def mean_shape_index(shapes: Sequence[ClusterShape]) -> float:
    if not shapes:
        return 0.0
    return sum(shape.shape_index for shape in shapes) / len(shapes)


# ------------------------------------------------------------------------------
# Goal functions
# ------------------------------------------------------------------------------
def f1(interface: int, target_interface: int) -> float:
    """(1 - I/I_target)², written so that ±d deviations give equal values."""
    if target_interface == 0:
        raise InvalidArgumentError("target interface must be non-zero")
    return ((target_interface - interface) / target_interface) ** 2


def f2(histogram: np.ndarray, target: TargetStats) -> float:
    """Mean squared histogram difference normalized by max h_target."""
    h = np.asarray(histogram, dtype=float)
    if len(h) != target.bins:
        raise InvalidArgumentError(f"histogram has {len(h)} bins, expected {target.bins}")
    max_h = target.max_h
    if max_h == 0:
        raise InvalidArgumentError("target histogram is empty")
    diff = target.histogram.astype(float) - h
    return float(np.sum(diff * diff)) / (max_h * max_h) / target.bins


# ------------------------------------------------------------------------------
# Shapes
# ------------------------------------------------------------------------------
def init_quasi_rectangle(area: int) -> ClusterShape:
    """Fill an (n+1)×(n+1) square column by column, top to bottom."""
    if area < 1:
        raise InvalidArgumentError("area must be >= 1")
    side = math.isqrt(area - 1) + 1
    return ClusterShape.from_pixels((i % side, i // side) for i in range(area))


def _touches_side(pixels: set[Pixel], pixel: Pixel) -> bool:
    row, col = pixel
    return any((row + dr, col + dc) in pixels for dr, dc in SIDE_STEPS)


def _shell(pixels: set[Pixel]) -> list[Pixel]:
    shell = {
        (row + dr, col + dc)
        for row, col in pixels
        for dr in (-1, 0, 1)
        for dc in (-1, 0, 1)
    }
    return sorted(shell - pixels)


def _is_edge(pixels: set[Pixel], pixel: Pixel) -> bool:
    row, col = pixel
    return pixel in pixels and not all((row + dr, col + dc) in pixels for dr, dc in SIDE_STEPS)


# ------------------------------------------------------------------------------
# Incremental swap state
# ------------------------------------------------------------------------------
class _UniformDraws:
    """Buffered uniform draws; one generator call per block."""

    def __init__(self, rng: np.random.Generator, block: int = 4096) -> None:
        self._rng = rng
        self._block = block
        self._buffer: list[float] = []
        self._next = 0

    def index(self, n: int) -> int:
        if self._next == len(self._buffer):
            self._buffer = self._rng.random(self._block).tolist()
            self._next = 0
        u = self._buffer[self._next]
        self._next += 1
        return min(int(u * n), n - 1)


class _PixelPool:
    """Pixel list with O(1) membership, insertion, removal and uniform picks."""

    def __init__(self, pixels: Iterable[Pixel] = ()) -> None:
        self._items: list[Pixel] = []
        self._where: dict[Pixel, int] = {}
        self._coords: np.ndarray | None = None
        for pixel in pixels:
            self.add(pixel)

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, pixel: object) -> bool:
        return pixel in self._where

    def __getitem__(self, i: int) -> Pixel:
        return self._items[i]

    def add(self, pixel: Pixel) -> None:
        if pixel in self._where:
            return
        self._where[pixel] = len(self._items)
        self._items.append(pixel)
        self._coords = None

    def discard(self, pixel: Pixel) -> None:
        i = self._where.pop(pixel, None)
        if i is None:
            return
        last = self._items.pop()
        if i < len(self._items):
            self._items[i] = last
            self._where[last] = i
        self._coords = None

    def coords(self) -> np.ndarray:
        if self._coords is None:
            self._coords = np.array(self._items, dtype=np.int64).reshape(-1, 2)
        return self._coords


def _distance_bins(a: np.ndarray, b: np.ndarray, bins: int) -> np.ndarray:
    """Histogram bin of every (a_i, b_j) distance, clamped to the last bin."""
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return np.minimum(np.floor(np.sqrt(d2.astype(float))).astype(np.int64), bins - 1)


def _as_coords(pixels: Sequence[Pixel]) -> np.ndarray:
    return np.array(pixels, dtype=np.int64).reshape(-1, 2)


class _SwapState:
    """
    Mutable cluster used by the synthesis loop.

    Keeps the black pixel set, the white shell (white pixels with a black
    8-neighbour), the edge pixels, the interface and the edge-distance
    histogram current under single swaps. A swap is applied tentatively by
    ``propose`` and then either committed or reverted.
    """

    def __init__(self, shape: ClusterShape, bins: int = 1) -> None:
        self.pixels: set[Pixel] = shape.pixel_set()
        self._cover: dict[Pixel, int] = {}
        for row, col in self.pixels:
            for dr, dc in MOORE_RING:
                n = (row + dr, col + dc)
                self._cover[n] = self._cover.get(n, 0) + 1
        self.shell = _PixelPool(sorted(p for p in self._cover if p not in self.pixels))
        self.edges = _PixelPool(sorted(p for p in self.pixels if _is_edge(self.pixels, p)))
        self.interface = shape.interface
        self.bins = bins
        self.histogram = distance_histogram(self.edges.coords(), bins)

    def _black_sides(self, pixel: Pixel) -> int:
        row, col = pixel
        return sum((row + dr, col + dc) in self.pixels for dr, dc in SIDE_STEPS)

    def _remove(self, pixel: Pixel) -> None:
        self.pixels.discard(pixel)
        self.interface += 2 * self._black_sides(pixel) - 4
        row, col = pixel
        for dr, dc in MOORE_RING:
            n = (row + dr, col + dc)
            self._cover[n] -= 1
            if self._cover[n] == 0:
                del self._cover[n]
                self.shell.discard(n)
        if pixel in self._cover:
            self.shell.add(pixel)

    def _add(self, pixel: Pixel) -> None:
        self.interface += 4 - 2 * self._black_sides(pixel)
        self.pixels.add(pixel)
        self.shell.discard(pixel)
        row, col = pixel
        for dr, dc in MOORE_RING:
            n = (row + dr, col + dc)
            self._cover[n] = self._cover.get(n, 0) + 1
            if n not in self.pixels:
                self.shell.add(n)

    def propose(self, draws: _UniformDraws, retry_factor: int) -> tuple[Pixel, Pixel] | None:
        """Apply one black-white swap tentatively; None leaves the state untouched."""
        tries = retry_factor * len(self.edges)
        is_black = self.pixels.__contains__

        black: Pixel | None = None
        for _ in range(tries):
            candidate = self.edges[draws.index(len(self.edges))]
            if ring_walls(is_black, candidate) == 2:
                black = candidate
                break
        if black is None:
            return None

        self._remove(black)
        for _ in range(tries):
            candidate = self.shell[draws.index(len(self.shell))]
            if candidate == black:
                continue
            if _touches_side(self.pixels, candidate) and ring_walls(is_black, candidate) == 2:
                self._add(candidate)
                return black, candidate
        self._add(black)
        return None

    def revert(self, swap: tuple[Pixel, Pixel]) -> None:
        black, white = swap
        self._remove(white)
        self._add(black)

    def edge_changes(self, swap: tuple[Pixel, Pixel]) -> tuple[list[Pixel], list[Pixel]]:
        """Edge pixels lost and gained by the applied swap (3×3 neighbourhoods only)."""
        touched: set[Pixel] = set()
        for row, col in swap:
            touched.add((row, col))
            touched.update((row + dr, col + dc) for dr, dc in SIDE_STEPS)
        lost, gained = [], []
        for pixel in sorted(touched):
            was, now = pixel in self.edges, _is_edge(self.pixels, pixel)
            if was and not now:
                lost.append(pixel)
            elif now and not was:
                gained.append(pixel)
        return lost, gained

    def histogram_after(self, lost: Sequence[Pixel], gained: Sequence[Pixel]) -> np.ndarray:
        """
        Histogram of the edge set with ``lost`` removed and ``gained`` added.

        Only pairs touching a changed pixel are counted: changed-to-old pairs
        with weight -1 (lost) or +1 (gained), changed-to-changed pairs with
        +1 (same kind) or -1 (mixed), and one self-distance per gained pixel.
        """
        changed = _as_coords([*lost, *gained])
        if len(changed) == 0:
            return self.histogram
        bins = self.bins
        sign = np.concatenate([-np.ones(len(lost)), np.ones(len(gained))])

        to_old = _distance_bins(changed, self.edges.coords(), bins)
        update = np.bincount(
            to_old.ravel(), weights=np.repeat(sign, to_old.shape[1]), minlength=bins
        )
        if len(changed) > 1:
            i, j = np.triu_indices(len(changed), k=1)
            among = _distance_bins(changed, changed, bins)[i, j]
            update += np.bincount(among, weights=sign[i] * sign[j], minlength=bins)
        update[0] += len(gained)
        return self.histogram + update.astype(np.int64)

    def commit(self, lost: Sequence[Pixel], gained: Sequence[Pixel], histogram: np.ndarray) -> None:
        for pixel in lost:
            self.edges.discard(pixel)
        for pixel in gained:
            self.edges.add(pixel)
        self.histogram = histogram

    def shape(self) -> ClusterShape:
        return ClusterShape.from_pixels(self.pixels)


def propose_swap(
    shape: ClusterShape,
    rng: np.random.Generator,
    retry_factor: int = SELECTION_RETRY_FACTOR,
) -> ClusterShape | None:
    """
    Swap one black surface pixel with one white neighbour pixel.

    Both central pixels must see exactly two walls on their Moore ring; the
    white one must also share a side with the cluster that remains after the
    black one is removed. Returns None when selection draws run out.
    """
    if shape.area < 2:
        raise InvalidArgumentError("swaps need a cluster of at least two pixels")
    state = _SwapState(shape)
    if state.propose(_UniformDraws(rng), retry_factor) is None:
        return None
    return state.shape()


def random_polyomino(area: int, rng: np.random.Generator) -> ClusterShape:
    """Random 4-connected, pore-free shape of exact area grown pixel by pixel."""
    if area < 1:
        raise InvalidArgumentError("area must be >= 1")
    pixels: set[Pixel] = {(0, 0)}
    while len(pixels) < area:
        shell = [p for p in _shell(pixels) if _touches_side(pixels, p)]
        candidate = shell[int(rng.integers(len(shell)))]
        if ring_walls(pixels.__contains__, candidate) == 2:
            pixels.add(candidate)
    return ClusterShape.from_pixels(pixels)


# ------------------------------------------------------------------------------
# Single-cluster synthesis
# ------------------------------------------------------------------------------
def synthesize_cluster(
    target: TargetStats,
    rng: np.random.Generator,
    budget_factor: int = BUDGET_FACTOR,
    patience: int = PATIENCE,
) -> SynthesisResult:
    """
    Evolve a quasi-rectangle towards the target interface and histogram.

    Acceptance (comparisons non-strict):
      f1 worsens                              -> reject, Q += 1
      f2 improves                             -> accept, Q = 0
      f2 does not improve and Q > Q_max       -> accept, Q = 0
      otherwise                               -> reject, Q += 1
    Stops once attempts exceed budget_factor × Q_max, or, with the interface
    matched, once patience × Q_max attempts pass without a new best f2
    (patience 0 runs the full budget).
    """
    if patience < 0:
        raise InvalidArgumentError("patience must be >= 0")
    seed_shape = init_quasi_rectangle(target.area)
    state = _SwapState(seed_shape, target.bins)
    gap = abs(target.interface - state.interface)
    f1_value = f1(state.interface, target.interface)
    f2_value = f2(state.histogram, target)
    trace = [f1_value]

    if target.area <= 2:
        return SynthesisResult(seed_shape, f1_value, f2_value, 0, 0, tuple(trace))

    draws = _UniformDraws(rng)
    rejections = 0
    attempts = 0
    accepted = 0
    q_max = 3 * len(state.edges)
    best_f2 = f2_value if gap == 0 else math.inf
    last_progress = 0

    while attempts <= budget_factor * q_max:
        if patience and gap == 0 and attempts - last_progress > patience * q_max:
            break
        attempts += 1
        swap = state.propose(draws, SELECTION_RETRY_FACTOR)
        if swap is None:
            rejections += 1
            continue

        new_gap = abs(target.interface - state.interface)
        if new_gap > gap:
            state.revert(swap)
            rejections += 1
            continue

        lost, gained = state.edge_changes(swap)
        histogram = state.histogram_after(lost, gained)
        new_f2 = f2(histogram, target)
        if new_f2 <= f2_value or rejections > q_max:
            state.commit(lost, gained, histogram)
            if new_gap < gap or (new_gap == 0 and new_f2 < best_f2):
                last_progress = attempts
            if new_gap == 0:
                best_f2 = min(best_f2, new_f2)
            gap, f2_value = new_gap, new_f2
            f1_value = f1(state.interface, target.interface)
            trace.append(f1_value)
            accepted += 1
            rejections = 0
            q_max = 3 * len(state.edges)
        else:
            state.revert(swap)
            rejections += 1

    shape = state.shape()
    logger.debug(
        "Synthesis area=%d interface=%d/%d f2=%.3g after %d attempts (%d accepted)",
        target.area, shape.interface, target.interface, f2_value, attempts, accepted,
    )
    return SynthesisResult(shape, f1_value, f2_value, attempts, accepted, tuple(trace))


def build_surrogate(
    target: TargetStats,
    index: int,
    seed: int,
    budget_factor: int = BUDGET_FACTOR,
    restart_cap: int = RESTART_CAP,
    patience: int = PATIENCE,
) -> SynthesisResult:
    """Synthesize until f1 = 0, restarting with fresh derived seeds."""
    for restart in range(restart_cap + 1):
        rng = derive_rng(seed, "library", index, restart)
        result = synthesize_cluster(target, rng, budget_factor, patience)
        if result.shape.interface == target.interface:
            if restart:
                logger.info("Cluster %d matched after %d restarts", index, restart)
            return SynthesisResult(
                result.shape, result.f1, result.f2, result.attempts,
                result.accepted, result.f1_trace, restart,
            )
        logger.warning(
            "Cluster %d ended with interface %d (target %d), restart %d/%d",
            index, result.shape.interface, target.interface, restart + 1, restart_cap,
        )
    raise SynthesisError(index, f"cluster {index} never reached interface {target.interface}")


def _build_member(args: tuple[TargetStats, int, int, int, int, int]) -> SynthesisResult:
    return build_surrogate(*args)


def synthesize_library(
    targets: Sequence[TargetStats],
    seed: int,
    budget_factor: int = BUDGET_FACTOR,
    restart_cap: int = RESTART_CAP,
    workers: int = 1,
    patience: int = PATIENCE,
) -> SurrogateLibrary:
    """One surrogate per target, same order; members seeded from (seed, index)."""
    if not targets:
        raise InvalidArgumentError("target list must not be empty")

    jobs = [
        (target, index, seed, budget_factor, restart_cap, patience)
        for index, target in enumerate(targets)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_build_member, jobs))
    else:
        results = [_build_member(job) for job in jobs]

    library = SurrogateLibrary(seed, tuple(r.shape for r in results), tuple(results))
    logger.info(
        "Library seed=%d built: %d clusters, <q>=%.6f",
        seed, len(library), library.mean_shape_index,
    )
    return library


def audit_library(targets: Sequence[TargetStats], shapes: Sequence[ClusterShape]) -> None:
    """Pairwise area/interface equality plus connectivity and pore checks."""
    if len(targets) != len(shapes):
        raise LibraryAuditError(
            min(len(targets), len(shapes)),
            f"library holds {len(shapes)} clusters, target has {len(targets)}",
        )
    for index, (target, shape) in enumerate(zip(targets, shapes)):
        if shape.area != target.area:
            raise LibraryAuditError(index, f"area {shape.area} != {target.area}")
        if shape.interface != target.interface:
            raise LibraryAuditError(index, f"interface {shape.interface} != {target.interface}")
        if not shape.is_connected():
            raise LibraryAuditError(index, "cluster is not 4-connected")
        if shape.has_pores():
            raise LibraryAuditError(index, "cluster contains pores")
