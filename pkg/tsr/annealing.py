"""
Stage two: cluster-move simulated annealing

Responsibilities:
- Configurations of 8-separated clusters inside the domain
- Random sequential placement and best-of-M start selection
- ED-triplet cost relative to a target pattern
- Metropolis annealing with whole-cluster translations
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from tsr.descriptors import (
    EdTriplet,
    IncrementalEntropy,
    ScaleSet,
    ed_triplet,
)
from tsr.errors import (
    ConfigurationError,
    DegenerateTargetError,
    InvalidArgumentError,
    PackingError,
    ScaleMismatchError,
)
from tsr.grid import BinaryImage, ClusterShape, render

logger = logging.getLogger("tsr.annealing")

PLACEMENT_RETRIES: int = 10_000


# ------------------------------------------------------------------------------
# Configuration
# ------------------------------------------------------------------------------
class Placement(NamedTuple):
    cluster: int
    row: int
    col: int


class Configuration:
    """
    Placement of library shapes in an L×L domain.

    ``owner`` holds the index of the cluster covering each pixel (−1 for
    matrix) and is kept in step with ``occupancy``.
    """

    def __init__(self, domain_side: int, shapes: Sequence[ClusterShape]) -> None:
        if domain_side < 1:
            raise InvalidArgumentError("domain side must be >= 1")
        self.domain_side = domain_side
        self.shapes: tuple[ClusterShape, ...] = tuple(shapes)
        self.anchors: list[Optional[tuple[int, int]]] = [None] * len(self.shapes)
        self.occupancy = np.zeros((domain_side, domain_side), dtype=bool)
        self.owner = np.full((domain_side, domain_side), -1, dtype=np.int32)

    @classmethod
    def from_placements(
        cls,
        domain_side: int,
        shapes: Sequence[ClusterShape],
        placements: Sequence[Placement],
    ) -> Configuration:
        config = cls(domain_side, shapes)
        for cluster, row, col in placements:
            if not config.fits(cluster, row, col):
                raise ConfigurationError(f"cluster {cluster} cannot sit at ({row}, {col})")
            config.place(cluster, row, col)
        return config

    @property
    def placements(self) -> list[Placement]:
        return [
            Placement(index, anchor[0], anchor[1])
            for index, anchor in enumerate(self.anchors)
            if anchor is not None
        ]

    @property
    def complete(self) -> bool:
        return all(anchor is not None for anchor in self.anchors)

    def copy(self) -> Configuration:
        clone = Configuration(self.domain_side, self.shapes)
        clone.anchors = list(self.anchors)
        clone.occupancy = self.occupancy.copy()
        clone.owner = self.owner.copy()
        return clone

    def fits(self, index: int, row: int, col: int) -> bool:
        """Inside the domain and not touching any other cluster, corners included."""
        shape = self.shapes[index]
        side = self.domain_side
        if row < 0 or col < 0 or row + shape.height > side or col + shape.width > side:
            return False
        top, left = row - 1, col - 1
        rs, cs = max(top, 0), max(left, 0)
        re = min(top + shape.height + 2, side)
        ce = min(left + shape.width + 2, side)
        halo = shape.halo[rs - top:re - top, cs - left:ce - left]
        owners = self.owner[rs:re, cs:ce][halo]
        return bool(np.all((owners == -1) | (owners == index)))

    def _stamp(self, index: int, row: int, col: int, present: bool) -> None:
        shape = self.shapes[index]
        rows = slice(row, row + shape.height)
        cols = slice(col, col + shape.width)
        if present:
            self.occupancy[rows, cols] |= shape.mask
            self.owner[rows, cols][shape.mask] = index
        else:
            self.occupancy[rows, cols] &= ~shape.mask
            self.owner[rows, cols][shape.mask] = -1

    def place(self, index: int, row: int, col: int) -> None:
        if self.anchors[index] is not None:
            raise InvalidArgumentError(f"cluster {index} is already placed")
        self._stamp(index, row, col, True)
        self.anchors[index] = (row, col)

    def remove(self, index: int) -> None:
        anchor = self.anchors[index]
        if anchor is None:
            return
        self._stamp(index, anchor[0], anchor[1], False)
        self.anchors[index] = None

    def move(self, index: int, drow: int, dcol: int) -> None:
        anchor = self.anchors[index]
        if anchor is None:
            raise InvalidArgumentError(f"cluster {index} is not placed")
        self.remove(index)
        self.place(index, anchor[0] + drow, anchor[1] + dcol)

    def image(self) -> BinaryImage:
        return BinaryImage(self.occupancy)

    def check_invariants(self) -> None:
        placed = [(self.shapes[i], (r, c)) for i, r, c in self.placements]
        expected = render(placed, self.domain_side).pixels
        if not np.array_equal(expected, self.occupancy):
            raise ConfigurationError("occupancy grid differs from the placed shapes")
        if np.count_nonzero(self.owner >= 0) != np.count_nonzero(self.occupancy):
            raise ConfigurationError("owner grid differs from occupancy")
        for index, row, col in self.placements:
            if not self.fits(index, row, col):
                raise ConfigurationError(f"cluster {index} violates containment or separation")


# ------------------------------------------------------------------------------
# Schedule and cost
# ------------------------------------------------------------------------------
class AnnealSchedule(BaseModel):
    """
    Cooling T(l) = t0 · ratio^l over loops of c·(1+l)·clusters evaluated moves.

    With ``count_infeasible`` off, only feasible moves fill a loop and a loop
    also ends after ``max_draw_factor`` × its length draws.
    """

    t0: float = Field(5e-5, gt=0)
    ratio: float = Field(0.82, gt=0, lt=1)
    tolerance: float = Field(7e-5, gt=0)
    max_loops: int = Field(60, ge=1)
    loop_c: int = Field(10, ge=1)
    max_step: Optional[int] = Field(None, ge=1)
    count_infeasible: bool = False
    max_draw_factor: int = Field(20, ge=1)
    rng_seed: int = Field(0, ge=0)
    check_invariants: bool = False

    def temperature(self, loop: int) -> float:
        return self.t0 * self.ratio ** loop

    def loop_length(self, loop: int, clusters: int) -> int:
        return self.loop_c * (1 + loop) * clusters

    def draw_limit(self, loop: int, clusters: int) -> int:
        length = self.loop_length(loop, clusters)
        return length if self.count_infeasible else self.max_draw_factor * length

    def step_limit(self, domain_side: int) -> int:
        return self.max_step or max(1, domain_side // 8)


@dataclass(frozen=True, eq=False)
class CostContext:
    """
    Target ED triplet with per-curve maxima as normalizers.

    Curves whose target maximum is zero are left out of the cost.
    """

    side_length: int
    scales: ScaleSet
    target: EdTriplet
    normalizers: tuple[float, ...]
    active: tuple[int, ...] = field(default=(0, 1, 2))

    @classmethod
    def from_image(cls, image: BinaryImage, scales: ScaleSet) -> CostContext:
        if image.black_count in (0, image.pixels.size):
            raise DegenerateTargetError("target must contain both phases")
        target = ed_triplet(image, scales)
        maxima = tuple(float(row.max()) for row in target.values)
        active = tuple(i for i, value in enumerate(maxima) if value > 0.0)
        if not active:
            raise DegenerateTargetError("all target descriptor curves vanish")
        if len(active) < 3:
            logger.warning("Dropping %d flat target curves from the cost", 3 - len(active))
        return cls(image.side_length, scales, target, maxima, active)

    def cost(self, values: np.ndarray) -> float:
        """E = mean over used curves and scales of squared normalized differences."""
        total = 0.0
        for row in self.active:
            diff = (values[row] - self.target.values[row]) / self.normalizers[row]
            total += float(np.dot(diff, diff))
        return total / (len(self.active) * len(self.scales))


def energy(config: Configuration, ctx: CostContext) -> float:
    """Cost of a configuration recomputed from scratch."""
    if config.domain_side != ctx.side_length:
        raise ScaleMismatchError(
            f"configuration side {config.domain_side} != target side {ctx.side_length}"
        )
    return ctx.cost(ed_triplet(config.image(), ctx.scales).values)


# ------------------------------------------------------------------------------
# Initial configurations
# ------------------------------------------------------------------------------
def random_configuration(
    library: Sequence[ClusterShape],
    side_length: int,
    rng: np.random.Generator,
    retries: int = PLACEMENT_RETRIES,
) -> Configuration:
    """
    Random sequential placement, largest clusters first.

    Anchors are uniform over positions keeping the cluster inside the
    domain; anchors touching an already placed cluster are redrawn.
    """
    config = Configuration(side_length, library)
    if sum(shape.area for shape in library) >= side_length * side_length and library:
        raise PackingError(0, "library area does not fit in the domain")

    order = sorted(range(len(library)), key=lambda i: (-library[i].area, i))
    for index in order:
        shape = library[index]
        rows = side_length - shape.height + 1
        cols = side_length - shape.width + 1
        if rows < 1 or cols < 1:
            raise PackingError(index, f"cluster {index} is larger than the domain")
        for _ in range(retries):
            row = int(rng.integers(rows))
            col = int(rng.integers(cols))
            if config.fits(index, row, col):
                config.place(index, row, col)
                break
        else:
            raise PackingError(index, f"no free site for cluster {index} after {retries} draws")
    return config


@dataclass(frozen=True, eq=False)
class InitialSelection:
    configuration: Configuration
    energy: float
    candidate_energies: tuple[float, ...]


def select_initial(
    library: Sequence[ClusterShape],
    side_length: int,
    starts: int,
    ctx: CostContext,
    rng: np.random.Generator,
) -> InitialSelection:
    """Lowest-energy configuration among ``starts`` random ones (first on ties)."""
    if starts < 1:
        raise InvalidArgumentError("at least one start is required")
    best: Configuration | None = None
    best_energy = math.inf
    energies: list[float] = []
    for child in rng.spawn(starts):
        candidate = random_configuration(library, side_length, child)
        value = energy(candidate, ctx)
        energies.append(value)
        if value < best_energy:
            best, best_energy = candidate, value
    assert best is not None
    logger.info("Selected start E=%.4g among %d candidates", best_energy, starts)
    return InitialSelection(best, best_energy, tuple(energies))


def generate_target(
    library: Sequence[ClusterShape],
    side_length: int,
    rng: np.random.Generator,
) -> BinaryImage:
    return random_configuration(library, side_length, rng).image()


def lineal_path_of_library(
    library: Sequence[ClusterShape], side_length: int, max_k: int
) -> np.ndarray:
    """
    L(k), k = 1..max_k, of any valid configuration of ``library``.

    Clusters are 8-separated and inside the domain, so every all-black
    segment lies within one cluster and the count is placement-free.
    """
    if not 1 <= max_k <= side_length:
        raise InvalidArgumentError(f"max_k {max_k} outside [1, {side_length}]")
    hits = np.zeros(max_k, dtype=np.int64)
    for shape in library:
        for grid in (shape.mask, shape.mask.T):
            for line in grid:
                for run in _runs(line):
                    upto = min(run, max_k)
                    hits[:upto] += run - np.arange(upto)
    samples = 2.0 * side_length * (side_length - np.arange(1, max_k + 1) + 1)
    return hits / samples


def _runs(line: np.ndarray) -> list[int]:
    padded = np.concatenate(([0], line.astype(np.int8), [0]))
    edges = np.flatnonzero(np.diff(padded))
    return list(edges[1::2] - edges[::2])


# ------------------------------------------------------------------------------
# Moves
# ------------------------------------------------------------------------------
class Move(NamedTuple):
    cluster: int
    drow: int
    dcol: int
    feasible: bool


class StepOutcome(NamedTuple):
    accepted: bool
    delta_e: float


def propose_move(config: Configuration, rng: np.random.Generator, max_step: int) -> Move:
    if not config.shapes:
        raise InvalidArgumentError("configuration has no clusters to move")
    index = int(rng.integers(len(config.shapes)))
    drow = dcol = 0
    while drow == 0 and dcol == 0:
        drow, dcol = (int(v) for v in rng.integers(-max_step, max_step + 1, size=2))
    row, col = config.anchors[index]
    return Move(index, drow, dcol, config.fits(index, row + drow, col + dcol))


def metropolis_accept(delta_e: float, temperature: float, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(−ΔE/T))."""
    if temperature <= 0:
        raise InvalidArgumentError("temperature must be positive")
    if delta_e <= 0:
        return True
    return bool(rng.random() < math.exp(-delta_e / temperature))


class AnnealState:
    """Configuration plus its incremental descriptor cache and energy."""

    def __init__(self, config: Configuration, ctx: CostContext) -> None:
        if config.domain_side != ctx.side_length:
            raise ScaleMismatchError(
                f"configuration side {config.domain_side} != target side {ctx.side_length}"
            )
        self.config = config.copy()
        self.cache = IncrementalEntropy(self.config.occupancy, ctx.scales)
        self.energy = ctx.cost(self.cache.values)

    def move_delta(self, move: Move) -> tuple[np.ndarray, tuple[int, int]]:
        shape = self.config.shapes[move.cluster]
        row, col = self.config.anchors[move.cluster]
        new_row, new_col = row + move.drow, col + move.dcol
        top, left = min(row, new_row), min(col, new_col)
        height = max(row, new_row) - top + shape.height
        width = max(col, new_col) - left + shape.width
        delta = np.zeros((height, width), dtype=np.int64)
        mask = shape.mask.astype(np.int64)
        delta[row - top:row - top + shape.height, col - left:col - left + shape.width] -= mask
        delta[new_row - top:new_row - top + shape.height,
              new_col - left:new_col - left + shape.width] += mask
        return delta, (top, left)


def metropolis_step(
    state: AnnealState,
    move: Move,
    ctx: CostContext,
    temperature: float,
    rng: np.random.Generator,
) -> StepOutcome:
    """Evaluate a feasible move; commit it only when the Metropolis rule accepts."""
    if temperature <= 0:
        raise InvalidArgumentError("temperature must be positive")
    if not move.feasible:
        raise InvalidArgumentError("metropolis_step needs a feasible move")

    delta, origin = state.move_delta(move)
    pending = state.cache.preview(delta, origin)
    new_energy = ctx.cost(pending.values)
    delta_e = new_energy - state.energy

    if not metropolis_accept(delta_e, temperature, rng):
        return StepOutcome(False, delta_e)

    state.cache.commit(pending)
    state.config.move(move.cluster, move.drow, move.dcol)
    state.energy = new_energy
    return StepOutcome(True, delta_e)


# ------------------------------------------------------------------------------
# Annealing driver
# ------------------------------------------------------------------------------
class TraceRow(NamedTuple):
    accepted_step: int
    loop: int
    temperature: float
    energy: float


@dataclass(frozen=True, eq=False)
class AnnealResult:
    configuration: Configuration
    trace: tuple[TraceRow, ...]
    converged: bool
    start_energy: float
    energy: float
    accepted_steps: int
    proposals: int
    evaluations: int
    loops: int


def anneal(start: Configuration, ctx: CostContext, schedule: AnnealSchedule) -> AnnealResult:
    """
    Run temperature loops until E < tolerance or the loop budget is spent.

    Infeasible proposals are skipped without an energy evaluation; they
    fill the loop only when the schedule counts them.
    The first row of the trace is the starting state.
    """
    rng = np.random.default_rng(schedule.rng_seed)
    state = AnnealState(start, ctx)
    max_step = schedule.step_limit(start.domain_side)
    clusters = len(start.shapes)
    start_energy = state.energy

    trace = [TraceRow(0, 0, schedule.temperature(0), start_energy)]
    accepted = 0
    proposals = 0
    evaluations = 0
    converged = start_energy < schedule.tolerance
    loop = 0

    while not converged and clusters and loop < schedule.max_loops:
        temperature = schedule.temperature(loop)
        loop_accepted = 0
        length = schedule.loop_length(loop, clusters)
        filled = 0
        for _ in range(schedule.draw_limit(loop, clusters)):
            if filled >= length:
                break
            proposals += 1
            move = propose_move(state.config, rng, max_step)
            if schedule.count_infeasible or move.feasible:
                filled += 1
            if not move.feasible:
                continue
            evaluations += 1
            outcome = metropolis_step(state, move, ctx, temperature, rng)
            if not outcome.accepted:
                continue
            accepted += 1
            loop_accepted += 1
            trace.append(TraceRow(accepted, loop, temperature, state.energy))
            if schedule.check_invariants:
                state.config.check_invariants()
            if state.energy < schedule.tolerance:
                converged = True
                break
        logger.debug(
            "Loop %d T=%.3g accepted=%d E=%.4g", loop, temperature, loop_accepted, state.energy
        )
        loop += 1

    if converged:
        logger.info("Converged E=%.4g after %d accepted steps", state.energy, accepted)
    else:
        logger.warning(
            "Budget exhausted after %d loops, E=%.4g (tolerance %.3g)",
            loop, state.energy, schedule.tolerance,
        )
    return AnnealResult(
        configuration=state.config,
        trace=tuple(trace),
        converged=converged,
        start_energy=start_energy,
        energy=state.energy,
        accepted_steps=accepted,
        proposals=proposals,
        evaluations=evaluations,
        loops=loop,
    )
