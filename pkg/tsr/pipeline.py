"""
End-to-end reconstruction workflow

Each ``cmd_*`` function reads its inputs, runs one stage and writes its
artifacts into ``out_dir``. Output files depend only on the inputs and the
seeds, never on wall-clock time, so identical configurations reproduce
identical files.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from tsr import metrics
from tsr.annealing import (
    AnnealResult,
    Configuration,
    CostContext,
    InitialSelection,
    anneal,
    lineal_path_of_library,
    random_configuration,
    select_initial,
)
from tsr.config import RunConfig
from tsr.descriptors import (
    TRIPLET_KINDS,
    CurveKind,
    DescriptorCurve,
    ScaleSet,
    ed_triplet,
    lineal_path,
    two_point_s2,
)
from tsr.errors import InputError
from tsr.formats import (
    read_image,
    read_library,
    write_configuration,
    write_curve_csv,
    write_library,
    write_overlay_csv,
    write_pbm,
    write_trace_csv,
)
from tsr.grid import BinaryImage, ClusterShape, label_clusters
from tsr.seeds import derive_rng, derive_seed
from tsr.synthesis import (
    SurrogateLibrary,
    TargetStats,
    audit_library,
    mean_shape_index,
    random_polyomino,
    synthesize_library,
)

logger = logging.getLogger("tsr.pipeline")


class ExitStatus(enum.IntEnum):
    OK = 0
    CONVERGED = 0
    BUDGET_EXHAUSTED = 2
    INPUT_ERROR = 3
    PACKING_FAILURE = 4
    SYNTHESIS_FAILURE = 5


# ------------------------------------------------------------------------------
# Report schemas
# ------------------------------------------------------------------------------
class ClusterSummary(BaseModel):
    index: int
    row: int
    col: int
    area: int
    interface: int
    shape_index: float


class AnalysisSummary(BaseModel):
    side_length: int
    black_fraction: float
    cluster_count: int
    mean_shape_index: float
    clusters: list[ClusterSummary]


class LibrarySummary(BaseModel):
    seed: int
    path: str
    mean_shape_index: float
    lineal_sse: float
    selected: bool


class Stage2Summary(BaseModel):
    converged: bool
    start_energy: float
    final_energy: float
    accepted_steps: int
    proposals: int
    evaluations: int
    loops: int
    candidate_energies: list[float]


class CurveDeviation(BaseModel):
    kind: str
    max_abs: float
    mean_abs: float


class ValidationReport(BaseModel):
    side_length: int
    deviations: list[CurveDeviation]


# ------------------------------------------------------------------------------
# Shared helpers
# ------------------------------------------------------------------------------
def _require_target(config: RunConfig) -> BinaryImage:
    if config.target_path is None:
        raise InputError("no target image given")
    return read_image(config.target_path)


def _out_dir(config: RunConfig) -> Path:
    config.out_dir.mkdir(parents=True, exist_ok=True)
    return config.out_dir


def descriptor_curves(image: BinaryImage, scales: ScaleSet) -> dict[CurveKind, DescriptorCurve]:
    """ED triplet on ``scales`` plus S₂ up to L/2 and L up to L."""
    side = image.side_length
    curves = {curve.kind: curve for curve in ed_triplet(image, scales).curves()}
    curves[CurveKind.TWO_POINT] = two_point_s2(image, side // 2)
    curves[CurveKind.LINEAL_PATH] = lineal_path(image, side)
    return curves


def summarize(image: BinaryImage) -> AnalysisSummary:
    clusters = label_clusters(image)
    rows = [
        ClusterSummary(
            index=i,
            row=anchor[0],
            col=anchor[1],
            area=shape.area,
            interface=shape.interface,
            shape_index=shape.shape_index,
        )
        for i, (shape, anchor) in enumerate(clusters)
    ]
    return AnalysisSummary(
        side_length=image.side_length,
        black_fraction=image.black_fraction,
        cluster_count=len(rows),
        mean_shape_index=mean_shape_index([c.shape for c in clusters]),
        clusters=rows,
    )


def target_stats(image: BinaryImage) -> list[TargetStats]:
    return [TargetStats.from_shape(cluster.shape) for cluster in label_clusters(image)]


def _write_json(model: BaseModel, path: Path) -> Path:
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


# ------------------------------------------------------------------------------
# analyze
# ------------------------------------------------------------------------------
def cmd_analyze(config: RunConfig) -> AnalysisSummary:
    image = _require_target(config)
    out = _out_dir(config)
    summary = summarize(image)
    _write_json(summary, out / "analysis.json")

    scales = ScaleSet.every(image.side_length, config.scale_stride)
    for kind, curve in descriptor_curves(image, scales).items():
        write_curve_csv(curve, out / f"target_{kind.value}.csv")

    logger.info(
        "Analyzed %s: phi=%.4f, %d clusters, <q>=%.6f",
        config.target_path, summary.black_fraction, summary.cluster_count, summary.mean_shape_index,
    )
    return summary


# ------------------------------------------------------------------------------
# stage one
# ------------------------------------------------------------------------------
def lineal_sse(library: Sequence[ClusterShape], target_lineal: DescriptorCurve, side: int) -> float:
    """Σ_k [L*(k) − L_target(k)]² for the library's placement-free L*(k)."""
    own = lineal_path_of_library(library, side, len(target_lineal))
    diff = own - target_lineal.values
    return float(np.dot(diff, diff))


def select_library(
    libraries: Sequence[SurrogateLibrary], target_lineal: DescriptorCurve, side: int
) -> tuple[int, list[float]]:
    """Index of the library with the smallest lineal-path SSE (first on ties), and all SSEs."""
    scores = [lineal_sse(lib.shapes, target_lineal, side) for lib in libraries]
    return int(np.argmin(scores)), scores


@dataclass(frozen=True)
class Stage1Result:
    libraries: tuple[LibrarySummary, ...]
    selected_path: Path


def cmd_stage1(config: RunConfig) -> Stage1Result:
    if not config.library_seeds:
        raise InputError("stage1 needs at least one library seed")
    image = _require_target(config)
    out = _out_dir(config)
    targets = target_stats(image)
    if not targets:
        raise InputError(f"{config.target_path}: target contains no inclusions")

    libraries: list[SurrogateLibrary] = []
    for seed in config.library_seeds:
        library = synthesize_library(
            targets,
            seed,
            budget_factor=config.budget_factor,
            restart_cap=config.restart_cap,
            patience=config.patience,
            workers=config.workers,
        )
        audit_library(targets, library.shapes)
        metrics.record_synthesis(len(library))
        libraries.append(library)

    side = image.side_length
    target_lineal = lineal_path(image, side)
    best, scores = select_library(libraries, target_lineal, side)
    chosen = best if config.library_selection == "lineal" else 0

    summaries = []
    for i, (library, score) in enumerate(zip(libraries, scores)):
        path = write_library(library.shapes, out / f"library_seed_{library.seed}.txt", library.seed)
        summaries.append(
            LibrarySummary(
                seed=library.seed,
                path=path.name,
                mean_shape_index=library.mean_shape_index,
                lineal_sse=score,
                selected=i == chosen,
            )
        )
    selected = write_library(libraries[chosen].shapes, out / "library.txt", libraries[chosen].seed)
    (out / "libraries.json").write_text(
        "[\n" + ",\n".join(s.model_dump_json(indent=2) for s in summaries) + "\n]\n",
        encoding="utf-8",
    )
    logger.info("Stage one: %d libraries, selected seed %d", len(libraries), libraries[chosen].seed)
    return Stage1Result(tuple(summaries), selected)


# ------------------------------------------------------------------------------
# stage two
# ------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Stage2Result:
    selection: InitialSelection
    anneal: AnnealResult

    @property
    def status(self) -> ExitStatus:
        return ExitStatus.CONVERGED if self.anneal.converged else ExitStatus.BUDGET_EXHAUSTED


def load_library(path: str | Path, targets: Sequence[TargetStats]) -> list[ClusterShape]:
    shapes = read_library(path).shapes
    audit_library(targets, shapes)
    return shapes


def _write_overlays(
    out: Path,
    target: BinaryImage,
    initial: BinaryImage,
    final: BinaryImage,
    scales: ScaleSet,
) -> None:
    curves = [descriptor_curves(image, scales) for image in (target, initial, final)]
    for kind in (*TRIPLET_KINDS, CurveKind.TWO_POINT, CurveKind.LINEAL_PATH):
        write_overlay_csv(
            curves[0][kind].scales,
            {
                "target": curves[0][kind].values,
                "initial": curves[1][kind].values,
                "final": curves[2][kind].values,
            },
            out / f"overlay_{kind.value}.csv",
        )


def _write_configuration(config: Configuration, path: Path, seed: int) -> None:
    anchors = [anchor for anchor in config.anchors if anchor is not None]
    write_configuration(config.shapes, anchors, config.domain_side, path, seed)


def run_stage2(
    target: BinaryImage,
    library: Sequence[ClusterShape],
    config: RunConfig,
) -> Stage2Result:
    """Best-of-M start selection followed by cluster annealing."""
    scales = ScaleSet.every(target.side_length, config.scale_stride)
    ctx = CostContext.from_image(target, scales)
    selection = select_initial(
        library,
        target.side_length,
        config.starts,
        ctx,
        derive_rng(config.master_seed, "start"),
    )
    schedule = config.schedule(derive_seed(config.master_seed, "anneal"))
    result = anneal(selection.configuration, ctx, schedule)
    metrics.record_anneal(result.proposals, result.accepted_steps)
    return Stage2Result(selection, result)


def cmd_stage2(config: RunConfig, library_path: str | Path) -> Stage2Result:
    target = _require_target(config)
    out = _out_dir(config)
    library = load_library(library_path, target_stats(target))

    result = run_stage2(target, library, config)
    initial = result.selection.configuration
    final = result.anneal.configuration

    write_pbm(initial.image(), out / "initial.pbm")
    write_pbm(final.image(), out / "final.pbm")
    write_trace_csv(result.anneal.trace, out / "trace.csv")
    _write_configuration(initial, out / "initial_configuration.txt", config.master_seed)
    _write_configuration(final, out / "final_configuration.txt", config.master_seed)
    _write_overlays(
        out, target, initial.image(), final.image(),
        ScaleSet.every(target.side_length, config.scale_stride),
    )
    _write_json(
        Stage2Summary(
            converged=result.anneal.converged,
            start_energy=result.anneal.start_energy,
            final_energy=result.anneal.energy,
            accepted_steps=result.anneal.accepted_steps,
            proposals=result.anneal.proposals,
            evaluations=result.anneal.evaluations,
            loops=result.anneal.loops,
            candidate_energies=list(result.selection.candidate_energies),
        ),
        out / "stage2.json",
    )
    return result


# ------------------------------------------------------------------------------
# validate
# ------------------------------------------------------------------------------
def compare(
    target: BinaryImage, reconstruction: BinaryImage, scales: ScaleSet
) -> tuple[ValidationReport, dict[CurveKind, tuple[DescriptorCurve, DescriptorCurve]]]:
    if target.side_length != reconstruction.side_length:
        raise InputError(
            f"size mismatch: target {target.side_length}, reconstruction {reconstruction.side_length}"
        )
    ours = descriptor_curves(target, scales)
    theirs = descriptor_curves(reconstruction, scales)
    deviations = []
    for kind, curve in ours.items():
        scale = float(np.max(np.abs(curve.values))) or 1.0
        diff = np.abs(theirs[kind].values - curve.values) / scale
        deviations.append(
            CurveDeviation(kind=kind.value, max_abs=float(diff.max()), mean_abs=float(diff.mean()))
        )
    pairs = {kind: (ours[kind], theirs[kind]) for kind in ours}
    return ValidationReport(side_length=target.side_length, deviations=deviations), pairs


def cmd_validate(config: RunConfig, reconstruction_path: str | Path) -> ValidationReport:
    target = _require_target(config)
    reconstruction = read_image(reconstruction_path)
    out = _out_dir(config)
    scales = ScaleSet.every(target.side_length, config.scale_stride)

    report, pairs = compare(target, reconstruction, scales)
    for kind, (ours, theirs) in pairs.items():
        write_overlay_csv(
            ours.scales,
            {"target": ours.values, "reconstruction": theirs.values},
            out / f"compare_{kind.value}.csv",
        )
    _write_json(report, out / "validation.json")
    return report


# ------------------------------------------------------------------------------
# generate
# ------------------------------------------------------------------------------
def generate_target_image(
    side_length: int,
    clusters: int,
    min_area: int,
    max_area: int,
    seed: int,
) -> BinaryImage:
    """Random polyomino inclusions placed 8-separated in an L×L domain."""
    if not 1 <= min_area <= max_area:
        raise InputError("need 1 <= min_area <= max_area")
    rng = derive_rng(seed, "generate")
    shapes = [random_polyomino(int(rng.integers(min_area, max_area + 1)), rng) for _ in range(clusters)]
    return random_configuration(shapes, side_length, rng).image()


def cmd_generate(
    config: RunConfig,
    side_length: int,
    clusters: int,
    min_area: int,
    max_area: int,
    name: str = "target.pbm",
) -> Path:
    out = _out_dir(config)
    image = generate_target_image(side_length, clusters, min_area, max_area, config.master_seed)
    path = write_pbm(image, out / name)
    logger.info("Generated %s: %d clusters, phi=%.4f", path, clusters, image.black_fraction)
    return path

