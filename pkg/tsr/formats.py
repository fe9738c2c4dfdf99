"""
File formats

- Images: PBM (P1/P4) and strict two-value PNG on input, plain P1 on output
- Curves and traces: CSV
- Surrogate libraries and configurations: line-oriented text
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from tsr.descriptors import DescriptorCurve
from tsr.errors import InputError, InvalidArgumentError
from tsr.grid import BinaryImage, ClusterShape

logger = logging.getLogger("tsr.formats")


# ------------------------------------------------------------------------------
# Images
# ------------------------------------------------------------------------------
def read_image(path: str | Path) -> BinaryImage:
    """Read a PBM or PNG image; black pixels become the inclusion phase."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == "1":
                # Pillow maps PBM bit 1 (black) to 0.
                pixels = ~np.asarray(img, dtype=bool)
            else:
                grey = np.asarray(img.convert("L"))
                values = set(np.unique(grey).tolist())
                if not values <= {0, 255}:
                    raise InputError(f"{path}: expected a two-value image, found {sorted(values)[:6]}")
                pixels = grey == 0
    except (OSError, UnidentifiedImageError) as exc:
        raise InputError(f"{path}: cannot read image ({exc})") from exc

    try:
        return BinaryImage(pixels)
    except InvalidArgumentError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_pbm(image: BinaryImage, path: str | Path) -> Path:
    """Plain P1 bitmap, one text line per image row."""
    path = Path(path)
    side = image.side_length
    lines = ["P1", f"{side} {side}"]
    lines.extend(" ".join("1" if v else "0" for v in row) for row in image.pixels)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


# ------------------------------------------------------------------------------
# CSV
# ------------------------------------------------------------------------------
def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def write_curve_csv(curve: DescriptorCurve, path: str | Path) -> Path:
    rows = ((int(k), float(v)) for k, v in zip(curve.scales, curve.values))
    return _write_rows(Path(path), ("k", "value"), rows)


def write_overlay_csv(
    scales: Sequence[int],
    columns: dict[str, Sequence[float]],
    path: str | Path,
) -> Path:
    """Multi-column curves sharing one k axis, e.g. ``k,target,initial,final``."""
    for name, values in columns.items():
        if len(values) != len(scales):
            raise InvalidArgumentError(f"column {name} has {len(values)} values for {len(scales)} scales")
    rows = (
        (int(k), *(float(values[i]) for values in columns.values()))
        for i, k in enumerate(scales)
    )
    return _write_rows(Path(path), ("k", *columns), rows)


def write_trace_csv(trace: Iterable[Sequence[object]], path: str | Path) -> Path:
    rows = ((int(s), int(l), float(t), float(e)) for s, l, t, e in trace)
    return _write_rows(Path(path), ("accepted_step", "loop", "temperature", "energy"), rows)


def read_curve_csv(path: str | Path) -> dict[int, float]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return {int(row["k"]): float(row["value"]) for row in reader}


# ------------------------------------------------------------------------------
# Libraries and configurations
# ------------------------------------------------------------------------------
def _cluster_block(index: int, shape: ClusterShape, anchor: tuple[int, int] | None) -> list[str]:
    lines = [f"cluster {index} area {shape.area} interface {shape.interface}"]
    if anchor is not None:
        lines.append(f"anchor {anchor[0]},{anchor[1]}")
    lines.extend(f"{int(r)},{int(c)}" for r, c in shape.offsets)
    return lines


def write_library(
    shapes: Sequence[ClusterShape],
    path: str | Path,
    master_seed: int,
    anchors: Sequence[tuple[int, int]] | None = None,
    domain_side: int | None = None,
) -> Path:
    header = [f"# master_seed {master_seed}"]
    if domain_side is not None:
        header.append(f"# domain_side {domain_side}")
    blocks = [
        "\n".join(_cluster_block(i, shape, anchors[i] if anchors else None))
        for i, shape in enumerate(shapes)
    ]
    path = Path(path)
    path.write_text("\n".join(header) + "\n\n" + "\n\n".join(blocks) + "\n", encoding="utf-8")
    return path


class LibraryFile:
    """Parsed library or configuration file."""

    def __init__(self) -> None:
        self.master_seed: int | None = None
        self.domain_side: int | None = None
        self.shapes: list[ClusterShape] = []
        self.anchors: list[tuple[int, int] | None] = []


def read_library(path: str | Path) -> LibraryFile:
    """Parse a library; declared area and interface are re-checked."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read library ({exc})") from exc

    parsed = LibraryFile()
    for line in text.splitlines():
        if line.startswith("# master_seed"):
            parsed.master_seed = int(line.split()[-1])
        elif line.startswith("# domain_side"):
            parsed.domain_side = int(line.split()[-1])

    blocks = [b for b in text.split("\n\n") if b.strip() and not b.lstrip().startswith("#")]
    for block in blocks:
        lines = [ln.strip() for ln in block.strip().splitlines() if ln.strip()]
        try:
            _, index, _, area, _, interface = lines[0].split()
            anchor = None
            body = lines[1:]
            if body and body[0].startswith("anchor"):
                row, col = body[0].split()[1].split(",")
                anchor = (int(row), int(col))
                body = body[1:]
            shape = ClusterShape.from_pixels(tuple(int(v) for v in ln.split(",")) for ln in body)
        except (ValueError, IndexError, InvalidArgumentError) as exc:
            raise InputError(f"{path}: malformed cluster block: {lines[:1]}") from exc

        if int(index) != len(parsed.shapes):
            raise InputError(f"{path}: cluster {index} out of order")
        if shape.area != int(area) or shape.interface != int(interface):
            raise InputError(
                f"{path}: cluster {index} declares area {area}/interface {interface}, "
                f"offsets give {shape.area}/{shape.interface}"
            )
        parsed.shapes.append(shape)
        parsed.anchors.append(anchor)
    return parsed


def write_configuration(
    shapes: Sequence[ClusterShape],
    anchors: Sequence[tuple[int, int]],
    domain_side: int,
    path: str | Path,
    master_seed: int,
) -> Path:
    return write_library(shapes, path, master_seed, anchors=anchors, domain_side=domain_side)


def read_configuration(path: str | Path) -> LibraryFile:
    """Parse a configuration file; every cluster must carry an anchor."""
    parsed = read_library(path)
    if parsed.domain_side is None or any(anchor is None for anchor in parsed.anchors):
        raise InputError(f"{path}: not a configuration (missing domain_side or anchors)")
    return parsed
