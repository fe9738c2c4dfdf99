"""
Multi-scale statistical descriptors of binary images

Responsibilities:
- Sliding-window occupancies under hard walls
- Configurational entropy S, its bounds S_max / S_min, and the ED triplet
  S_Δγ^α (α = 0, 1, 2)
- Orthogonal two-point correlation S₂ (periodic) and lineal path L (hard walls)
- Incremental occupancy cache for the annealing inner loop
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from tsr.errors import InvalidArgumentError
from tsr.grid import BinaryImage

logger = logging.getLogger("tsr.descriptors")

# Below this spread S_max and S_min are treated as equal.
DEGENERATE_SPREAD: float = 1e-12


class CurveKind(str, enum.Enum):
    S_DELTA = "s_delta"
    S_DELTA_GAMMA = "c_s"
    S_DELTA_GAMMA2 = "s_delta_gamma2"
    TWO_POINT = "s2"
    LINEAL_PATH = "lineal_path"


TRIPLET_KINDS: tuple[CurveKind, ...] = (
    CurveKind.S_DELTA,
    CurveKind.S_DELTA_GAMMA,
    CurveKind.S_DELTA_GAMMA2,
)


# ------------------------------------------------------------------------------
# Types
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class ScaleSet:
    """Strictly increasing window sizes 2 <= k <= L."""

    scales: tuple[int, ...]

    def __post_init__(self) -> None:
        values = tuple(int(k) for k in self.scales)
        if not values:
            raise InvalidArgumentError("scale set must not be empty")
        if values[0] < 2 or any(b <= a for a, b in zip(values, values[1:])):
            raise InvalidArgumentError(f"scales must be >= 2 and strictly increasing: {values}")
        object.__setattr__(self, "scales", values)

    @classmethod
    def every(cls, side_length: int, stride: int = 2, start: int = 2) -> ScaleSet:
        """k = start, start+stride, ... <= L (the default matches k = 2, 4, ...)."""
        if stride < 1:
            raise InvalidArgumentError("scale stride must be >= 1")
        if side_length < 2:
            raise InvalidArgumentError(f"domain side {side_length} admits no window of size >= 2")
        start = min(start, side_length)
        return cls(tuple(range(start, side_length + 1, stride)))

    def check(self, side_length: int) -> None:
        if self.scales[-1] > side_length:
            raise InvalidArgumentError(f"scale {self.scales[-1]} exceeds domain side {side_length}")

    def __len__(self) -> int:
        return len(self.scales)

    def __iter__(self):
        return iter(self.scales)


@dataclass(frozen=True, eq=False)
class DescriptorCurve:
    kind: CurveKind
    scales: np.ndarray
    values: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(v) for k, v in zip(self.scales, self.values)}

    def __len__(self) -> int:
        return len(self.scales)


@dataclass(frozen=True)
class EntropyProfile:
    """Entropy bookkeeping of one scale k."""

    k: int
    lam: int
    total: int
    s: float
    s_max: float
    s_min: float
    s_delta: float
    gamma: float

    @property
    def degenerate(self) -> bool:
        return self.s_max - self.s_min <= DEGENERATE_SPREAD

    def triplet(self) -> tuple[float, float, float]:
        if self.degenerate:
            return (0.0, 0.0, 0.0)
        return (
            self.s_delta,
            self.s_delta * self.gamma,
            self.s_delta * self.gamma * self.gamma,
        )


@dataclass(frozen=True, eq=False)
class EdTriplet:
    scales: ScaleSet
    profiles: tuple[EntropyProfile, ...]
    values: np.ndarray = field(repr=False)

    def curve(self, kind: CurveKind) -> DescriptorCurve:
        row = TRIPLET_KINDS.index(kind)
        return DescriptorCurve(kind, np.array(self.scales.scales), self.values[row].copy())

    def curves(self) -> list[DescriptorCurve]:
        return [self.curve(kind) for kind in TRIPLET_KINDS]


# ------------------------------------------------------------------------------
# Log-binomials
# ------------------------------------------------------------------------------
@lru_cache(maxsize=None)
def log_binomial_table(m: int) -> np.ndarray:
    """ln C(m, n) for n = 0..m via log-gamma."""
    n = np.arange(m + 1, dtype=float)
    table = gammaln(m + 1.0) - gammaln(n + 1.0) - gammaln(m - n + 1.0)
    table[0] = table[-1] = 0.0
    table.setflags(write=False)
    return table


def _window_sums(grid: np.ndarray, k: int) -> np.ndarray:
    acc = np.zeros((grid.shape[0] + 1, grid.shape[1] + 1), dtype=np.int64)
    acc[1:, 1:] = np.asarray(grid, dtype=np.int64).cumsum(axis=0).cumsum(axis=1)
    return acc[k:, k:] - acc[:-k, k:] - acc[k:, :-k] + acc[:-k, :-k]


# ------------------------------------------------------------------------------
# Entropy operations
# ------------------------------------------------------------------------------
def window_occupancies(image: BinaryImage, k: int) -> np.ndarray:
    """
    Black-pixel counts of every k×k window sliding by one pixel.

    Returns an (L-k+1)×(L-k+1) array; its row-major flattening is the
    occupancy list n_1..n_λ.
    """
    side = image.side_length
    if not 1 <= k <= side:
        raise InvalidArgumentError(f"window size {k} outside [1, {side}]")
    return _window_sums(image.pixels, k)


def _occupancy_histogram(occupancies: np.ndarray, k: int) -> np.ndarray:
    flat = np.asarray(occupancies, dtype=np.int64).ravel()
    if flat.size and (flat.min() < 0 or flat.max() > k * k):
        raise InvalidArgumentError(f"occupancies must lie in [0, {k * k}]")
    return np.bincount(flat, minlength=k * k + 1)


def _histogram_entropy(histogram: np.ndarray, k: int) -> float:
    return float(histogram @ log_binomial_table(k * k))


def entropy_actual(occupancies: np.ndarray | Sequence[int], k: int) -> float:
    """S = Σ ln C(k², n_i)."""
    return _histogram_entropy(_occupancy_histogram(np.asarray(occupancies), k), k)


def _check_total(total: int, lam: int, k: int) -> None:
    if not 0 <= total <= lam * k * k:
        raise InvalidArgumentError(f"total occupancy {total} outside [0, {lam * k * k}]")


def entropy_max(total: int, lam: int, k: int) -> float:
    """Entropy of the most uniform macrostate holding ``total`` in λ windows."""
    if lam < 1:
        raise InvalidArgumentError("lambda must be >= 1")
    _check_total(total, lam, k)
    table = log_binomial_table(k * k)
    r0 = total % lam
    n0 = (total - r0) // lam
    value = (lam - r0) * table[n0]
    if r0:
        value += r0 * table[n0 + 1]
    return float(value)


def entropy_min(total: int, k: int, lam: int | None = None) -> float:
    """Entropy of the most inhomogeneous macrostate: ln C(k², N mod k²)."""
    if lam is not None:
        _check_total(total, lam, k)
    elif total < 0:
        raise InvalidArgumentError("total occupancy must be >= 0")
    return float(log_binomial_table(k * k)[total % (k * k)])


def _profile(histogram: np.ndarray, total: int, k: int, lam: int) -> EntropyProfile:
    s = _histogram_entropy(histogram, k)
    s_max = entropy_max(total, lam, k)
    s_min = entropy_min(total, k, lam)
    spread = s_max - s_min
    if spread > DEGENERATE_SPREAD:
        gamma = min(max((s - s_min) / spread, 0.0), 1.0)
    else:
        gamma = 0.0
    return EntropyProfile(
        k=k,
        lam=lam,
        total=total,
        s=s,
        s_max=s_max,
        s_min=s_min,
        s_delta=max(s_max - s, 0.0) / lam,
        gamma=gamma,
    )


def entropy_profile(image: BinaryImage, k: int) -> EntropyProfile:
    occupancies = window_occupancies(image, k)
    histogram = _occupancy_histogram(occupancies, k)
    return _profile(histogram, int(occupancies.sum()), k, occupancies.size)


def _triplet_from_profiles(scales: ScaleSet, profiles: Sequence[EntropyProfile]) -> EdTriplet:
    values = np.array([p.triplet() for p in profiles], dtype=float).T.copy()
    return EdTriplet(scales, tuple(profiles), values)


def ed_triplet(image: BinaryImage, scales: ScaleSet) -> EdTriplet:
    """S_Δγ^α for α = 0, 1, 2 at every scale (hard walls)."""
    scales.check(image.side_length)
    return _triplet_from_profiles(scales, [entropy_profile(image, k) for k in scales])


# ------------------------------------------------------------------------------
# Correlation functions
# ------------------------------------------------------------------------------
def two_point_s2(image: BinaryImage, max_k: int) -> DescriptorCurve:
    """Orthogonal S₂(k), k = 0..max_k, periodic in both directions."""
    side = image.side_length
    if not 0 <= max_k <= side:
        raise InvalidArgumentError(f"max_k {max_k} outside [0, {side}]")
    grid = image.pixels
    values = np.empty(max_k + 1, dtype=float)
    for k in range(max_k + 1):
        rows = np.count_nonzero(grid & np.roll(grid, k, axis=0))
        cols = np.count_nonzero(grid & np.roll(grid, k, axis=1))
        values[k] = (rows + cols) / (2.0 * grid.size)
    return DescriptorCurve(CurveKind.TWO_POINT, np.arange(max_k + 1), values)


def _segment_hits(grid: np.ndarray, k: int, axis: int) -> int:
    runs = np.cumsum(np.asarray(grid, dtype=np.int64), axis=axis)
    runs = np.concatenate([np.zeros_like(runs.take([0], axis=axis)), runs], axis=axis)
    n = grid.shape[axis]
    sums = runs.take(range(k, n + 1), axis=axis) - runs.take(range(0, n - k + 1), axis=axis)
    return int(np.count_nonzero(sums == k))


def lineal_path(image: BinaryImage, max_k: int) -> DescriptorCurve:
    """Orthogonal L(k), k = 1..max_k; segments must lie inside the domain."""
    side = image.side_length
    if not 1 <= max_k <= side:
        raise InvalidArgumentError(f"max_k {max_k} outside [1, {side}]")
    grid = image.pixels
    values = np.empty(max_k, dtype=float)
    for k in range(1, max_k + 1):
        hits = _segment_hits(grid, k, axis=0) + _segment_hits(grid, k, axis=1)
        values[k - 1] = hits / (2.0 * side * (side - k + 1))
    return DescriptorCurve(CurveKind.LINEAL_PATH, np.arange(1, max_k + 1), values)


# ------------------------------------------------------------------------------
# Incremental occupancy cache
# ------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class _ScaleUpdate:
    k: int
    rows: slice
    cols: slice
    block: np.ndarray
    histogram: np.ndarray
    total: int


@dataclass(frozen=True, eq=False)
class PendingUpdate:
    """Result of a previewed pixel change; applied only by ``commit``."""

    updates: tuple[_ScaleUpdate, ...]
    profiles: tuple[EntropyProfile, ...]
    values: np.ndarray


def _band(lo: int, hi: int, start: int, length: int, k: int) -> np.ndarray:
    """
    0/1 matrix of windows at anchors lo..hi-1 covering pixels start..start+length-1.

    For a change array D at (top, left), the window-sum change over an
    anchor block is band_rows @ D @ band_cols.T.
    """
    offset = start + np.arange(length)[None, :] - np.arange(lo, hi)[:, None]
    return ((offset >= 0) & (offset < k)).astype(np.int64)


class IncrementalEntropy:
    """
    Occupancy and histogram cache per scale.

    A pixel change touches only windows overlapping it, so ``preview``
    recomputes those and derives S from integer histograms. Full and
    incremental paths therefore produce identical floats. Single owner:
    not safe to share between threads.
    """

    def __init__(self, pixels: np.ndarray, scales: ScaleSet) -> None:
        grid = np.asarray(pixels, dtype=bool)
        self._side = int(grid.shape[0])
        scales.check(self._side)
        self.scales = scales
        self._occupancy: dict[int, np.ndarray] = {}
        self._histogram: dict[int, np.ndarray] = {}
        self._total: dict[int, int] = {}
        for k in scales:
            occ = _window_sums(grid, k)
            self._occupancy[k] = occ
            self._histogram[k] = np.bincount(occ.ravel(), minlength=k * k + 1)
            self._total[k] = int(occ.sum())
        self.profiles = tuple(self._profile(k) for k in scales)
        self.values = _triplet_from_profiles(scales, self.profiles).values

    def _profile(self, k: int) -> EntropyProfile:
        lam = (self._side - k + 1) ** 2
        return _profile(self._histogram[k], self._total[k], k, lam)

    def preview(self, delta: np.ndarray, origin: tuple[int, int]) -> PendingUpdate:
        """
        Evaluate adding ``delta`` (−1/0/+1 per pixel) at ``origin``.

        The cache itself is left untouched.
        """
        delta = np.asarray(delta, dtype=np.int64)
        top, left = origin
        height, width = delta.shape
        updates: list[_ScaleUpdate] = []
        profiles: list[EntropyProfile] = []

        for i, k in enumerate(self.scales):
            anchors = self._side - k + 1
            rs, re = max(top - k + 1, 0), min(top + height, anchors)
            cs, ce = max(left - k + 1, 0), min(left + width, anchors)
            histogram = self._histogram[k]
            total = self._total[k]
            block = np.empty((0, 0), dtype=np.int64)

            if rs < re and cs < ce:
                change = _band(rs, re, top, height, k) @ delta @ _band(cs, ce, left, width, k).T
                old = self._occupancy[k][rs:re, cs:ce]
                block = old + change
                touched = change != 0
                if touched.any():
                    size = k * k + 1
                    histogram = (
                        histogram
                        - np.bincount(old[touched], minlength=size)
                        + np.bincount(block[touched], minlength=size)
                    )
                    total += int(change.sum())

            if histogram is self._histogram[k]:
                profile = self.profiles[i]
            else:
                profile = _profile(histogram, total, k, anchors * anchors)
            updates.append(_ScaleUpdate(k, slice(rs, re), slice(cs, ce), block, histogram, total))
            profiles.append(profile)

        values = _triplet_from_profiles(self.scales, profiles).values
        return PendingUpdate(tuple(updates), tuple(profiles), values)

    def commit(self, pending: PendingUpdate) -> None:
        for update in pending.updates:
            if update.block.size:
                self._occupancy[update.k][update.rows, update.cols] = update.block
            self._histogram[update.k] = update.histogram
            self._total[update.k] = update.total
        self.profiles = pending.profiles
        self.values = pending.values

    def occupancy(self, k: int) -> np.ndarray:
        return self._occupancy[k].copy()

    def histogram(self, k: int) -> np.ndarray:
        return self._histogram[k].copy()


def curves_by_kind(curves: Iterable[DescriptorCurve]) -> dict[CurveKind, DescriptorCurve]:
    return {curve.kind: curve for curve in curves}
