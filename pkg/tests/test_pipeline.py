"""
Workflow tests
analyze / stage1 / stage2 / validate / generate through the library API and the CLI
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from tsr.cli import app
from tsr.config import RunConfig, load_run_config
from tsr.errors import ConfigurationError, InputError, LibraryAuditError, PackingError
from tsr.formats import read_image, read_library, write_library, write_pbm
from tsr.grid import BinaryImage, label_clusters
from tsr.pipeline import (
    ExitStatus,
    cmd_analyze,
    cmd_stage1,
    cmd_stage2,
    cmd_validate,
    select_library,
)
from tsr.synthesis import SurrogateLibrary

logger = logging.getLogger("tests.pipeline")

runner = CliRunner()

# (area, interface) of the fixture clusters as listed in its header
FIXTURE_PAIRS = [(9, 12), (4, 10), (1, 4), (10, 14), (3, 8), (16, 16), (5, 12), (1, 4), (1, 4)]

CURVE_FILES = ["s_delta", "c_s", "s_delta_gamma2", "s2", "lineal_path"]


def _own_library(image: BinaryImage, path: Path) -> Path:
    shapes = [cluster.shape for cluster in label_clusters(image)]
    return write_library(shapes, path, master_seed=0)


def _files(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


# ------------------------------------------------------------------------------
# Configuration
# ------------------------------------------------------------------------------
@pytest.mark.pipeline
def test_config_file_and_overrides(tmp_path: Path) -> None:
    """
    TC_PIPE_001: File values load; explicit overrides win; None overrides are ignored.
    """
    path = tmp_path / "run.conf"
    path.write_text("# stage two\nmaster_seed = 5\nstarts = 2\nlibrary_seeds = 1, 2, 3\n")

    config = load_run_config(path, starts=7, t0=None)

    assert config.master_seed == 5
    assert config.starts == 7
    assert config.library_seeds == [1, 2, 3]
    assert config.t0 == 5e-5


@pytest.mark.pipeline
def test_unknown_config_key_is_input_error(tmp_path: Path) -> None:
    """
    TC_PIPE_002: Unknown keys and out-of-range values are rejected.
    """
    path = tmp_path / "run.conf"
    path.write_text("temprature = 1\n")

    with pytest.raises(InputError):
        load_run_config(path)
    with pytest.raises(InputError):
        load_run_config(None, ratio=1.5)


# ------------------------------------------------------------------------------
# analyze
# ------------------------------------------------------------------------------
@pytest.mark.pipeline
def test_analyze_fixture_anchors(fixture_path: Path, make_config) -> None:
    """
    TC_PIPE_003: φ, cluster count and <q> of the fixture match its stated oracle.
    """
    # Arrange
    config = make_config(target_path=fixture_path)
    expected_q = sum(math.sqrt(a) / i for a, i in FIXTURE_PAIRS) / len(FIXTURE_PAIRS)

    # Act
    summary = cmd_analyze(config)

    # Assert
    assert summary.black_fraction == 50 / 1024
    assert summary.cluster_count == 9
    assert summary.mean_shape_index == pytest.approx(expected_q, abs=1e-15)
    assert [(c.area, c.interface) for c in summary.clusters] == FIXTURE_PAIRS
    for name in CURVE_FILES:
        assert (config.out_dir / f"target_{name}.csv").is_file()
    report = json.loads((config.out_dir / "analysis.json").read_text())
    assert report["cluster_count"] == 9


@pytest.mark.pipeline
def test_cli_analyze(fixture_path: Path, tmp_path: Path) -> None:
    """
    TC_PIPE_004: `tsr analyze` prints the summary and exits 0.
    """
    result = runner.invoke(app, ["analyze", str(fixture_path), "--out", str(tmp_path)])

    assert result.exit_code == 0, result.output
    assert "clusters=9" in result.output


@pytest.mark.pipeline
def test_cli_missing_target_exits_3(tmp_path: Path) -> None:
    """
    TC_PIPE_005: An unreadable target is an input error.
    """
    result = runner.invoke(app, ["analyze", str(tmp_path / "absent.pbm"), "--out", str(tmp_path)])

    assert result.exit_code == ExitStatus.INPUT_ERROR


@pytest.mark.pipeline
def test_cli_bad_config_exits_3(fixture_path: Path, tmp_path: Path) -> None:
    """
    TC_PIPE_006: A config file with unknown keys is an input error.
    """
    conf = tmp_path / "bad.conf"
    conf.write_text("colour = blue\n")

    result = runner.invoke(app, ["analyze", str(fixture_path), "--config", str(conf)])

    assert result.exit_code == ExitStatus.INPUT_ERROR


# ------------------------------------------------------------------------------
# stage1
# ------------------------------------------------------------------------------
@pytest.mark.pipeline
def test_stage1_builds_libraries_per_seed(small_target_path: Path, make_config) -> None:
    """
    TC_PIPE_007: Every seed yields an audited library; the lineal criterion picks the lowest SSE.
    """
    # Arrange
    config = make_config(target_path=small_target_path, library_seeds=[1, 2], library_selection="lineal")
    targets = label_clusters(read_image(small_target_path))

    # Act
    result = cmd_stage1(config)

    # Assert
    assert [s.seed for s in result.libraries] == [1, 2]
    assert sum(s.selected for s in result.libraries) == 1
    chosen = next(s for s in result.libraries if s.selected)
    assert chosen.lineal_sse == min(s.lineal_sse for s in result.libraries)
    library = read_library(result.selected_path)
    assert [(s.area, s.interface) for s in library.shapes] == [
        (c.shape.area, c.shape.interface) for c in targets
    ]
    assert (config.out_dir / "libraries.json").is_file()


@pytest.mark.pipeline
def test_select_library_prefers_first_on_ties(small_target: BinaryImage) -> None:
    """
    TC_PIPE_008: Equal lineal-path scores resolve to the first library.
    """
    from tsr.descriptors import lineal_path

    shapes = tuple(cluster.shape for cluster in label_clusters(small_target))
    libraries = [SurrogateLibrary(4, shapes), SurrogateLibrary(9, shapes)]

    best, scores = select_library(libraries, lineal_path(small_target, 24), 24)

    assert best == 0
    assert scores == [0.0, 0.0]


@pytest.mark.pipeline
def test_stage1_without_seeds_is_input_error(small_target_path: Path, make_config) -> None:
    """
    TC_PIPE_009: An empty seed list is rejected.
    """
    config = make_config(target_path=small_target_path, library_seeds=[])

    with pytest.raises(InputError):
        cmd_stage1(config)


# ------------------------------------------------------------------------------
# stage2
# ------------------------------------------------------------------------------
@pytest.mark.pipeline
def test_stage2_writes_all_artifacts(small_target: BinaryImage, small_target_path: Path, make_config, tmp_path: Path) -> None:
    """
    TC_PIPE_010: Stage two writes images, trace, configurations, overlays and a summary.
    """
    # Arrange
    config = make_config(target_path=small_target_path, master_seed=3)
    library = _own_library(small_target, tmp_path / "library.txt")

    # Act
    result = cmd_stage2(config, library)

    # Assert
    out = config.out_dir
    for name in ("initial.pbm", "final.pbm", "trace.csv", "stage2.json",
                 "initial_configuration.txt", "final_configuration.txt"):
        assert (out / name).is_file(), name
    for name in CURVE_FILES:
        assert (out / f"overlay_{name}.csv").is_file()
    assert read_image(out / "final.pbm").black_count == small_target.black_count
    assert result.status in (ExitStatus.CONVERGED, ExitStatus.BUDGET_EXHAUSTED)
    summary = json.loads((out / "stage2.json").read_text())
    assert len(summary["candidate_energies"]) == 3


@pytest.mark.pipeline
def test_stage2_is_deterministic(small_target: BinaryImage, small_target_path: Path, tmp_path: Path) -> None:
    """
    TC_PIPE_011: Two runs with the same master seed produce identical files.
    """
    library = _own_library(small_target, tmp_path / "library.txt")
    outputs = []
    for run in ("a", "b"):
        config = RunConfig(
            target_path=small_target_path, out_dir=tmp_path / run, master_seed=21, starts=2, max_loops=3
        )
        cmd_stage2(config, library)
        outputs.append(_files(config.out_dir))

    assert outputs[0] == outputs[1]


@pytest.mark.pipeline
def test_cli_stage2_exit_status(small_target: BinaryImage, small_target_path: Path, tmp_path: Path) -> None:
    """
    TC_PIPE_012: `tsr stage2` exits 0 when converged and 2 when the loop budget runs out.
    """
    library = _own_library(small_target, tmp_path / "library.txt")

    result = runner.invoke(
        app,
        ["stage2", str(small_target_path), str(library), "--out", str(tmp_path / "out"),
         "--seed", "4", "--starts", "2", "--max-loops", "2"],
    )

    assert result.exit_code in (ExitStatus.CONVERGED, ExitStatus.BUDGET_EXHAUSTED), result.output
    assert "E_final=" in result.output


@pytest.mark.pipeline
def test_cli_library_mismatch_exits_5(fixture_path: Path, small_target: BinaryImage, tmp_path: Path) -> None:
    """
    TC_PIPE_013: A library built for another target fails the audit.
    """
    library = _own_library(small_target, tmp_path / "library.txt")

    result = runner.invoke(app, ["stage2", str(fixture_path), str(library), "--out", str(tmp_path / "out")])

    assert result.exit_code == ExitStatus.SYNTHESIS_FAILURE


@pytest.mark.pipeline
@pytest.mark.parametrize(
    "error, status",
    [
        (PackingError(2), ExitStatus.PACKING_FAILURE),
        (LibraryAuditError(0, "area 3 != 4"), ExitStatus.SYNTHESIS_FAILURE),
        (InputError("broken"), ExitStatus.INPUT_ERROR),
        (ConfigurationError("cluster 1 cannot sit at (0, 0)"), ExitStatus.INPUT_ERROR),
    ],
)
def test_cli_maps_failures_to_exit_status(
    monkeypatch: pytest.MonkeyPatch, small_target_path: Path, tmp_path: Path, error, status
) -> None:
    """
    TC_PIPE_014: Stage failures map onto their documented exit statuses.
    """
    def _fail(config, library_path):
        raise error

    monkeypatch.setattr("tsr.cli.cmd_stage2", _fail)

    result = runner.invoke(app, ["stage2", str(small_target_path), str(tmp_path / "lib.txt")])

    assert result.exit_code == status


# ------------------------------------------------------------------------------
# validate and generate
# ------------------------------------------------------------------------------
@pytest.mark.pipeline
def test_validate_self_has_no_deviation(fixture_path: Path, make_config) -> None:
    """
    TC_PIPE_015: A target compared with itself deviates nowhere.
    """
    config = make_config(target_path=fixture_path)

    report = cmd_validate(config, fixture_path)

    assert {d.kind for d in report.deviations} == set(CURVE_FILES)
    assert all(d.max_abs == 0.0 for d in report.deviations)
    assert (config.out_dir / "compare_s2.csv").is_file()


@pytest.mark.pipeline
def test_validate_size_mismatch(fixture_path: Path, small_target_path: Path, make_config) -> None:
    """
    TC_PIPE_016: Images of different sides cannot be compared.
    """
    config = make_config(target_path=fixture_path)

    with pytest.raises(InputError):
        cmd_validate(config, small_target_path)


@pytest.mark.pipeline
def test_cli_generate_is_reproducible(tmp_path: Path) -> None:
    """
    TC_PIPE_017: `tsr generate` with a seed writes the same target twice.
    """
    args = ["generate", "--side", "32", "--clusters", "6", "--min-area", "3", "--max-area", "12", "--seed", "8"]

    first = runner.invoke(app, [*args, "--out", str(tmp_path / "a")])
    second = runner.invoke(app, [*args, "--out", str(tmp_path / "b")])

    assert first.exit_code == 0 and second.exit_code == 0, first.output
    assert (tmp_path / "a" / "target.pbm").read_bytes() == (tmp_path / "b" / "target.pbm").read_bytes()
    image = read_image(tmp_path / "a" / "target.pbm")
    assert len(label_clusters(image)) == 6


@pytest.mark.pipeline
def test_validate_translated_cluster(tmp_path: Path, make_config) -> None:
    """
    TC_PIPE_018: Translating one cluster keeps L(k) exactly and moves S2 and the ED curves.
    """
    # Arrange
    before = np.zeros((16, 16), dtype=bool)
    before[2:4, 2:4] = True
    after = before.copy()
    before[2:4, 8:10] = True
    after[10:12, 8:10] = True
    target = write_pbm(BinaryImage(before), tmp_path / "before.pbm")
    moved = write_pbm(BinaryImage(after), tmp_path / "after.pbm")
    config = make_config(target_path=target)

    # Act
    report = cmd_validate(config, moved)

    # Assert
    deviation = {d.kind: d.max_abs for d in report.deviations}
    assert deviation["lineal_path"] == 0.0
    assert deviation["s2"] > 0.0
    assert deviation["s_delta"] > 0.0


@pytest.mark.pipeline
def test_cli_over_dense_target_exits_4(tmp_path: Path) -> None:
    """
    TC_PIPE_019: Thirteen unit clusters cannot be 8-separated in a 6x6 domain.
    """
    rows = ["101010", "010100", "101010", "010100", "101010", "000000"]
    image = BinaryImage.from_rows(rows)
    target = write_pbm(image, tmp_path / "dense.pbm")
    library = _own_library(image, tmp_path / "library.txt")
    assert len(label_clusters(image)) == 13

    result = runner.invoke(
        app, ["stage2", str(target), str(library), "--out", str(tmp_path / "out"), "--starts", "1"]
    )

    assert result.exit_code == ExitStatus.PACKING_FAILURE, result.output


@pytest.mark.pipeline
def test_full_pipeline_is_deterministic(small_target_path: Path, tmp_path: Path, make_config) -> None:
    """
    TC_PIPE_020: analyze, stage1, stage2 and validate twice with one master seed give identical files.
    """
    outputs = []
    for run in ("a", "b"):
        config = make_config(
            target_path=small_target_path,
            out_dir=tmp_path / run,
            master_seed=13,
            library_seeds=[1, 2],
            library_selection="lineal",
        )
        cmd_analyze(config)
        stage1 = cmd_stage1(config)
        cmd_stage2(config, stage1.selected_path)
        cmd_validate(config, config.out_dir / "final.pbm")
        outputs.append(_files(config.out_dir))

    assert outputs[0] == outputs[1]
    assert {"library_seed_1.txt", "library_seed_2.txt", "library.txt", "final.pbm", "validation.json"} <= set(outputs[0])


@pytest.mark.pipeline
def test_stage1_libraries_independent_of_workers(small_target_path: Path, tmp_path: Path, make_config) -> None:
    """
    TC_PIPE_021: Parallel synthesis writes the same library files as a single worker.
    """
    outputs = []
    for workers in (1, 2):
        config = make_config(
            target_path=small_target_path,
            out_dir=tmp_path / f"workers_{workers}",
            library_seeds=[3, 4],
            workers=workers,
        )
        cmd_stage1(config)
        outputs.append(_files(config.out_dir))

    assert outputs[0] == outputs[1]
