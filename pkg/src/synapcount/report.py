"""Report serialization (CSV, JSON) and the two rendered output images:
the analyzed region, and the detected synapses marked with blue crosses."""

import csv
import io
import json
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, InputError
from .images import GrayImage, RgbImage, normalize_to_8bit
from .traces import Mask
from .detect import (
    GLOBAL_ID,
    AnalysisConfig,
    DendriteResult,
    NeuronReport,
)

__all__ = [
    "CSV_HEADER",
    "CROSS_ARM",
    "to_csv",
    "to_json",
    "report_to_dict",
    "parse_report_json",
    "render_region_overlay",
    "render_candidates_overlay",
    "render_marked_synapses",
]

CSV_HEADER = ["dendrite", "length_px", "length_um", "synapses", "density_per_100um"]

#: cross arm length in pixels on each side of the center
CROSS_ARM = 5

_CROSS_COLOR = (0, 0, 255)  # pure blue
_CANDIDATE_COLOR = (255, 0, 0)  # pure red


def _density_cell(density: float | None) -> str:
    return "NA" if density is None else f"{density:.2f}"


def result_row(r: DendriteResult) -> list[str]:
    """CSV cells for one result row (shared with the batch table)."""
    label = GLOBAL_ID if r.dendrite_id == GLOBAL_ID else f"d{r.dendrite_id}"
    return [
        label,
        f"{r.length_px:.2f}",
        f"{r.length_um:.2f}",
        str(r.synapse_count),
        _density_cell(r.density_per_100um),
    ]


def to_csv(report: NeuronReport) -> str:
    """Render the results table: one row per dendrite in id order, then the
    whole-neuron `all` row. Lengths and densities use two decimals; a
    zero-length dendrite gets density `NA`."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(report.per_dendrite, key=lambda r: r.dendrite_id):
        writer.writerow(result_row(r))
    writer.writerow(result_row(report.overall))
    return buf.getvalue()


def global_csv_row(report: NeuronReport) -> str:
    """Just the `all` row, as printed by the CLI."""
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(result_row(report.overall))
    return buf.getvalue().rstrip("\n")


def _result_obj(r: DendriteResult) -> dict:
    return {
        "dendrite_id": r.dendrite_id,
        "length_px": r.length_px,
        "length_um": r.length_um,
        "synapse_count": r.synapse_count,
        "density_per_100um": r.density_per_100um,
    }


def _config_obj(c: AnalysisConfig) -> dict:
    return {
        "scale": c.scale,
        "thickness": c.thickness,
        "threshold_red": c.threshold_red,
        "threshold_green": c.threshold_green,
        "min_area": c.min_area,
        "connectivity": c.connectivity,
        "mode": c.mode,
    }


def report_to_dict(report: NeuronReport, created_at: str | None = None) -> dict:
    """The JSON object form of a report, with a stable key order."""
    return {
        "inputs": dict(report.inputs),
        "config": _config_obj(report.config),
        "per_dendrite": [_result_obj(r) for r in report.per_dendrite],
        "global": _result_obj(report.overall),
        "warnings": list(report.warnings),
        "meta": {"created_at": created_at},
    }


def to_json(report: NeuronReport, created_at: str | None = None) -> str:
    """Serialize a report losslessly.

    ``created_at`` lands in the ``meta`` object and is the only field that
    may vary between otherwise identical runs.
    """
    return json.dumps(report_to_dict(report, created_at=created_at), indent=2)


def _parse_result(obj: dict, where: str) -> DendriteResult:
    try:
        return DendriteResult(
            dendrite_id=obj["dendrite_id"],
            length_px=float(obj["length_px"]),
            length_um=float(obj["length_um"]),
            synapse_count=int(obj["synapse_count"]),
            density_per_100um=(
                None if obj["density_per_100um"] is None else float(obj["density_per_100um"])
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{where}: bad result object ({exc})") from exc


def parse_report_json(text: str | bytes) -> NeuronReport:
    """Inverse of to_json (the meta object is not part of the report)."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid report JSON: {exc}") from exc
    try:
        config = AnalysisConfig(**obj["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"config: bad config object ({exc})") from exc
    per = tuple(
        _parse_result(item, f"per_dendrite[{i}]")
        for i, item in enumerate(obj.get("per_dendrite", []))
    )
    if "global" not in obj:
        raise InputError("global: missing field")
    return NeuronReport(
        per_dendrite=per,
        overall=_parse_result(obj["global"], "global"),
        config=config,
        inputs=dict(obj.get("inputs", {})),
        warnings=tuple(obj.get("warnings", ())),
    )


def _check_dims(red: GrayImage, green: GrayImage, region: Mask) -> None:
    dims = {(red.width, red.height), (green.width, green.height), (region.width, region.height)}
    if len(dims) != 1:
        raise DimensionMismatchError(f"overlay inputs must share dimensions: {sorted(dims)}")


def render_region_overlay(red: GrayImage, green: GrayImage, region: Mask) -> RgbImage:
    """Pack the two (normalized) marker channels into R and G and paint the
    traced structure into the blue channel."""
    _check_dims(red, green, region)
    out = np.zeros((region.height, region.width, 3), dtype=np.uint8)
    out[:, :, 0] = normalize_to_8bit(red).pixels
    out[:, :, 1] = normalize_to_8bit(green).pixels
    out[:, :, 2] = np.where(region.bits, 255, 0)
    return RgbImage(region.width, region.height, out)


def render_candidates_overlay(
    red: GrayImage, green: GrayImage, region: Mask, candidates: Mask
) -> RgbImage:
    """Region overlay with the current threshold candidates in pure red."""
    base = render_region_overlay(red, green, region)
    if (candidates.width, candidates.height) != (region.width, region.height):
        raise DimensionMismatchError("candidate mask dimensions differ from region")
    out = np.array(base.pixels)
    out[candidates.bits] = _CANDIDATE_COLOR
    return RgbImage(base.width, base.height, out)


def render_marked_synapses(base: RgbImage, centroids: Sequence[tuple[float, float]]) -> RgbImage:
    """Draw a plus-shaped pure blue cross (arm length 5 px) at each rounded
    centroid, clipped to the image bounds; everything else is untouched."""
    out = np.array(base.pixels)
    h, w = base.height, base.width
    for cx, cy in centroids:
        px = int(np.floor(cx))
        py = int(np.floor(cy))
        x0 = max(0, px - CROSS_ARM)
        x1 = min(w - 1, px + CROSS_ARM)
        y0 = max(0, py - CROSS_ARM)
        y1 = min(h - 1, py + CROSS_ARM)
        if 0 <= py < h and x0 <= x1:
            out[py, x0 : x1 + 1] = _CROSS_COLOR
        if 0 <= px < w and y0 <= y1:
            out[y0 : y1 + 1, px] = _CROSS_COLOR
    return RgbImage(w, h, out)
