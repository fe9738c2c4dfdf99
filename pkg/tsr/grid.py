"""
Binary-image primitives

Responsibilities:
- Two-phase pixel grids (black inclusions, white matrix)
- Cluster extraction by 4-connected labeling
- Interface, edge pixels and edge-distance histograms of clusters
- Moore-ring wall count used to pick swappable pixels
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import pdist

from tsr.errors import InvalidArgumentError

logger = logging.getLogger("tsr.grid")

Pixel = tuple[int, int]

FOUR_CONNECTIVITY = ndimage.generate_binary_structure(2, 1)
EIGHT_CONNECTIVITY = ndimage.generate_binary_structure(2, 2)

# Moore ring walked as a cycle; consecutive cells share a unit edge.
MOORE_RING: tuple[Pixel, ...] = (
    (-1, -1), (-1, 0), (-1, 1), (0, 1),
    (1, 1), (1, 0), (1, -1), (0, -1),
)
SIDE_STEPS: tuple[Pixel, ...] = ((-1, 0), (0, 1), (1, 0), (0, -1))


# ------------------------------------------------------------------------------
# Images
# ------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Square L×L two-phase image; True marks the black (inclusion) phase."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise InvalidArgumentError(f"image must be a non-empty square grid, got {arr.shape}")
        if arr.dtype != bool:
            if not np.isin(arr, (0, 1)).all():
                raise InvalidArgumentError("image must contain exactly two phases (0/1)")
            arr = arr.astype(bool)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def blank(cls, side_length: int) -> BinaryImage:
        if side_length < 1:
            raise InvalidArgumentError("side_length must be >= 1")
        return cls(np.zeros((side_length, side_length), dtype=bool))

    @classmethod
    def from_rows(cls, rows: Sequence[str]) -> BinaryImage:
        """Build from strings of '0'/'1' characters, '1' = black."""
        try:
            grid = np.array([[int(ch) for ch in row.strip()] for row in rows], dtype=np.int8)
        except ValueError as exc:
            raise InvalidArgumentError("rows may only contain '0' and '1'") from exc
        return cls(grid)

    @property
    def side_length(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def black_count(self) -> int:
        return int(np.count_nonzero(self.pixels))

    @property
    def black_fraction(self) -> float:
        return self.black_count / self.pixels.size

    def to_rows(self) -> list[str]:
        return ["".join("1" if v else "0" for v in row) for row in self.pixels]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None  # type: ignore[assignment]


# ------------------------------------------------------------------------------
# Cluster shapes
# ------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ClusterShape:
    """
    Compact set of pixel offsets normalized to min row = min col = 0.

    Offsets are stored row-major sorted as an (area, 2) integer array. Derived
    quantities are computed lazily and cached on the instance.
    """

    offsets: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.offsets, dtype=np.int64).reshape(-1, 2)
        if len(arr) == 0:
            raise InvalidArgumentError("a cluster needs at least one pixel")
        arr = arr - arr.min(axis=0)
        arr = np.unique(arr, axis=0)
        arr.setflags(write=False)
        object.__setattr__(self, "offsets", arr)

    @classmethod
    def from_pixels(cls, pixels: Iterable[Pixel]) -> ClusterShape:
        return cls(np.array(list(pixels), dtype=np.int64))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> ClusterShape:
        return cls(np.argwhere(np.asarray(mask, dtype=bool)))

    @cached_property
    def mask(self) -> np.ndarray:
        rows, cols = self.offsets.max(axis=0) + 1
        grid = np.zeros((rows, cols), dtype=bool)
        grid[self.offsets[:, 0], self.offsets[:, 1]] = True
        grid.setflags(write=False)
        return grid

    @cached_property
    def halo(self) -> np.ndarray:
        """Mask padded by one pixel and dilated with the 8-neighbourhood."""
        return ndimage.binary_dilation(np.pad(self.mask, 1), structure=EIGHT_CONNECTIVITY)

    @property
    def height(self) -> int:
        return int(self.mask.shape[0])

    @property
    def width(self) -> int:
        return int(self.mask.shape[1])

    @property
    def area(self) -> int:
        return int(len(self.offsets))

    @cached_property
    def interface(self) -> int:
        return _mask_interface(self.mask)

    @cached_property
    def edge_pixels(self) -> np.ndarray:
        return _mask_edges(self.mask)

    @cached_property
    def shape_index(self) -> float:
        return shape_index(self.area, self.interface)

    def pixel_set(self) -> set[Pixel]:
        return {(int(r), int(c)) for r, c in self.offsets}

    def distance_histogram(self, bins: int) -> np.ndarray:
        return distance_histogram(self.edge_pixels, bins)

    def is_connected(self) -> bool:
        _, count = ndimage.label(self.mask, structure=FOUR_CONNECTIVITY)
        return count == 1

    def has_pores(self) -> bool:
        """True if some white pixel is cut off from the outside (4-connected white)."""
        white = ~np.pad(self.mask, 1)
        _, count = ndimage.label(white, structure=FOUR_CONNECTIVITY)
        return count > 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClusterShape):
            return NotImplemented
        return np.array_equal(self.offsets, other.offsets)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"<ClusterShape area={self.area} interface={self.interface}>"


class LabeledCluster(NamedTuple):
    shape: ClusterShape
    anchor: Pixel


# ------------------------------------------------------------------------------
# Mask helpers
# ------------------------------------------------------------------------------
def _mask_interface(mask: np.ndarray) -> int:
    padded = np.pad(np.asarray(mask, dtype=np.int8), 1)
    return int(
        np.count_nonzero(np.diff(padded, axis=0)) + np.count_nonzero(np.diff(padded, axis=1))
    )


def _mask_edges(mask: np.ndarray) -> np.ndarray:
    p = np.pad(np.asarray(mask, dtype=bool), 1)
    core = p[1:-1, 1:-1]
    enclosed = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return np.argwhere(core & ~enclosed)


def _offsets_to_mask(offsets: Iterable[Pixel]) -> np.ndarray:
    arr = np.array(list(offsets), dtype=np.int64).reshape(-1, 2)
    if len(arr) == 0:
        raise InvalidArgumentError("pixel set must not be empty")
    arr = arr - arr.min(axis=0)
    grid = np.zeros(tuple(arr.max(axis=0) + 1), dtype=bool)
    grid[arr[:, 0], arr[:, 1]] = True
    return grid


# ------------------------------------------------------------------------------
# Operations
# ------------------------------------------------------------------------------
def label_clusters(image: BinaryImage) -> list[LabeledCluster]:
    """
    Extract every maximal 4-connected black component.

    Entries are ordered by the row-major position of each component's first
    pixel; the anchor is the top-left corner of its bounding box.
    """
    labels, count = ndimage.label(image.pixels, structure=FOUR_CONNECTIVITY)
    if count == 0:
        return []

    found: list[tuple[Pixel, LabeledCluster]] = []
    for index, box in enumerate(ndimage.find_objects(labels), start=1):
        local = labels[box] == index
        shape = ClusterShape.from_mask(local)
        anchor = (box[0].start, box[1].start)
        first = np.argwhere(local)[0]
        found.append(
            ((anchor[0] + int(first[0]), anchor[1] + int(first[1])), LabeledCluster(shape, anchor))
        )

    found.sort(key=lambda item: item[0])
    logger.debug("Labeled %d clusters in %dx%d image", count, *image.pixels.shape)
    return [cluster for _, cluster in found]


def render(clusters: Iterable[tuple[ClusterShape, Pixel]], side_length: int) -> BinaryImage:
    """Stamp shapes at their anchors onto a blank L×L image."""
    grid = np.zeros((side_length, side_length), dtype=bool)
    for shape, (row, col) in clusters:
        grid[row:row + shape.height, col:col + shape.width] |= shape.mask
    return BinaryImage(grid)


def interface_of(offsets: Iterable[Pixel]) -> int:
    """Number of unit sides between member pixels and non-members."""
    return _mask_interface(_offsets_to_mask(offsets))


def ring_walls(is_black: Callable[[Pixel], bool], pixel: Pixel) -> int:
    """Black/white walls met while walking the Moore ring around ``pixel``."""
    row, col = pixel
    colours = [is_black((row + dr, col + dc)) for dr, dc in MOORE_RING]
    return sum(colours[i] != colours[i - 1] for i in range(len(colours)))


def wall_count(image: BinaryImage, pixel: Pixel) -> int:
    """Moore-ring wall count; cells outside the domain count as white."""
    side = image.side_length
    row, col = pixel
    if not (0 <= row < side and 0 <= col < side):
        raise InvalidArgumentError(f"pixel {pixel} outside a {side}x{side} domain")
    grid = image.pixels

    def is_black(p: Pixel) -> bool:
        r, c = p
        return 0 <= r < side and 0 <= c < side and bool(grid[r, c])

    return ring_walls(is_black, pixel)


def distance_histogram(edges: np.ndarray | Iterable[Pixel], bins: int) -> np.ndarray:
    """
    Histogram of centre-to-centre distances between edge pixels.

    Bin i holds distances in [i, i+1); the last bin absorbs everything
    beyond. Each edge pixel adds its zero self-distance to bin 0.
    """
    if bins < 1:
        raise InvalidArgumentError("bins must be >= 1")
    points = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=float)
    points = points.reshape(-1, 2)

    counts = np.zeros(bins, dtype=np.int64)
    counts[0] = len(points)
    if len(points) > 1:
        index = np.minimum(np.floor(pdist(points)).astype(np.int64), bins - 1)
        counts += np.bincount(index, minlength=bins)
    return counts


def shape_index(area: int, interface: int) -> float:
    """q = sqrt(area) / interface; 0.25 for any square."""
    if interface <= 0:
        raise InvalidArgumentError("interface must be positive")
    return math.sqrt(area) / interface
