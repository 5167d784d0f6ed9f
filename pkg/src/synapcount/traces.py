"""Dendrite traces: NDF/JSON parsing, lengths, and the tube region of interest.

A trace is an ordered polyline along one dendrite. The analyzable region is
the union of "tubes": each polyline dilated to the dendrite's mean thickness
(a capsule per segment). Pixel membership is decided at pixel centers
(i + 0.5, j + 0.5) with a closed distance inequality, so rasterization is
deterministic and checkable against a brute-force distance oracle.
"""

import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatchError, InputError

__all__ = [
    "Point",
    "DendriteTrace",
    "TraceSet",
    "Mask",
    "NdfParseError",
    "TraceJsonError",
    "parse_ndf",
    "parse_traces_json",
    "serialize_traces_json",
    "load_traces_file",
    "trace_length_px",
    "px_to_microns",
    "polyline_distance",
    "rasterize_tube",
    "union_masks",
]

logger = logging.getLogger(__name__)

NDF_HEADER = "// NeuronJ Data File"
NDF_FOOTER = "// End of NeuronJ Data File"


class NdfParseError(InputError):
    """Malformed NDF input; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TraceJsonError(InputError):
    """Malformed native JSON trace document; message names the field path."""


class Point(NamedTuple):
    x: float
    y: float


def _validated_points(points: Iterable, where: str) -> tuple[Point, ...]:
    """Coerce to Points, check finiteness/sign, collapse consecutive duplicates."""
    out: list[Point] = []
    for p in points:
        x, y = float(p[0]), float(p[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"{where}: coordinates must be finite, got ({x}, {y})")
        if x < 0 or y < 0:
            raise ValueError(f"{where}: coordinates must be non-negative, got ({x}, {y})")
        pt = Point(x, y)
        if not out or out[-1] != pt:
            out.append(pt)
    if not out:
        raise ValueError(f"{where}: a trace needs at least one point")
    return tuple(out)


@dataclass(frozen=True)
class DendriteTrace:
    """One traced dendrite: an id, a display name and an ordered polyline."""

    id: int
    name: str
    points: tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "points", _validated_points(self.points, f"trace {self.id}")
        )


@dataclass(frozen=True)
class TraceSet:
    """All traces of one neuron, in file order."""

    traces: tuple[DendriteTrace, ...]
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        if not self.traces:
            raise ValueError("a trace set needs at least one trace")
        ids = [t.id for t in self.traces]
        if len(set(ids)) != len(ids):
            raise ValueError(f"trace ids must be unique, got {ids}")

    def __iter__(self):
        return iter(self.traces)


class Mask:
    """Binary raster; ``bits`` is a read-only ``(height, width)`` bool array."""

    __slots__ = ("width", "height", "bits")

    def __init__(self, width: int, height: int, bits) -> None:
        if width <= 0 or height <= 0:
            raise ValueError(f"mask dimensions must be positive, got {width}x{height}")
        arr = np.asarray(bits)
        if arr.ndim == 1:
            if arr.size != width * height:
                raise ValueError(f"bit count {arr.size} != width*height {width * height}")
            arr = arr.reshape(height, width)
        elif arr.shape != (height, width):
            raise ValueError(f"expected bit shape ({height}, {width}), got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=bool)
        arr.flags.writeable = False
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "height", int(height))
        object.__setattr__(self, "bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Mask is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.bits, other.bits)
        )

    def count(self) -> int:
        """Number of set pixels."""
        return int(self.bits.sum())

    def __repr__(self) -> str:
        return f"Mask({self.width}x{self.height}, {self.count()} set)"


# ---------------------------------------------------------------------------
# NDF parsing (NeuronJ data file subset)
# ---------------------------------------------------------------------------

_TRACING_RE = re.compile(r"^//\s*Tracing\s+N?(\d+)\s*$")
_SEGMENT_RE = re.compile(r"^//\s*Segment\s+\d+\s*$")


def _is_int_line(text: str) -> bool:
    try:
        int(text)
        return True
    except ValueError:
        return False


def parse_ndf(text: str | bytes) -> TraceSet:
    """Parse the NDF subset: header, tracings, coordinate segments.

    Each tracing contributes one trace whose points are the concatenation of
    its segments' coordinate pairs in file order. Unknown ``//`` sections are
    skipped with a warning. Errors carry the offending line number.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    lines = text.splitlines()

    first_content = next((i for i, ln in enumerate(lines) if ln.strip()), None)
    if first_content is None or lines[first_content].strip() != NDF_HEADER:
        raise NdfParseError("missing NDF header line '// NeuronJ Data File'", line=1)

    traces: list[DendriteTrace] = []
    seen_ids: set[int] = set()

    cur_id: int | None = None
    cur_id_line = 0
    cur_name: str | None = None
    cur_coords: list[int] = []  # flat x,y,... for the segment being read
    cur_points: list[tuple[float, float]] = []
    in_segment = False
    skipping_unknown = False

    def close_segment(at_line: int) -> None:
        nonlocal cur_coords, in_segment
        if not in_segment:
            return
        if len(cur_coords) % 2 != 0:
            raise NdfParseError(
                f"segment has an odd coordinate count ({len(cur_coords)})", line=at_line
            )
        cur_points.extend(
            (float(cur_coords[k]), float(cur_coords[k + 1]))
            for k in range(0, len(cur_coords), 2)
        )
        cur_coords = []
        in_segment = False

    def close_tracing(at_line: int) -> None:
        nonlocal cur_id, cur_name, cur_points
        if cur_id is None:
            return
        close_segment(at_line)
        if not cur_points:
            raise NdfParseError(f"tracing {cur_id} has no points", line=cur_id_line)
        name = cur_name if cur_name is not None else f"N{cur_id}"
        try:
            traces.append(DendriteTrace(cur_id, name, tuple(cur_points)))
        except ValueError as exc:
            raise NdfParseError(str(exc), line=cur_id_line) from exc
        cur_id, cur_name, cur_points = None, None, []

    for lineno, raw in enumerate(lines[first_content + 1 :], start=first_content + 2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("//"):
            m = _TRACING_RE.match(line)
            if m:
                close_tracing(lineno)
                skipping_unknown = False
                cur_id = int(m.group(1))
                cur_id_line = lineno
                if cur_id in seen_ids:
                    raise NdfParseError(f"duplicate tracing id {cur_id}", line=lineno)
                seen_ids.add(cur_id)
                continue
            if _SEGMENT_RE.match(line):
                if cur_id is None:
                    raise NdfParseError("segment outside of a tracing", line=lineno)
                close_segment(lineno)
                in_segment = True
                skipping_unknown = False
                continue
            if line == NDF_FOOTER:
                close_tracing(lineno)
                skipping_unknown = False
                continue
            # unknown section marker: skip its body
            close_segment(lineno)
            if cur_id is None:
                skipping_unknown = True
                logger.warning("skipping unknown NDF section %r (line %d)", line, lineno)
            else:
                # unknown marker inside a tracing closes it too
                close_tracing(lineno)
                skipping_unknown = True
                logger.warning("skipping unknown NDF section %r (line %d)", line, lineno)
            continue

        # data line
        if skipping_unknown:
            continue
        if in_segment:
            if not _is_int_line(line):
                raise NdfParseError(f"non-numeric coordinate line {line!r}", line=lineno)
            cur_coords.append(int(line))
        elif cur_id is not None:
            # between '// Tracing' and its first segment: integer attribute
            # lines are skipped, the first non-numeric line is the label
            if not _is_int_line(line) and cur_name is None:
                cur_name = line
        # data outside any tracing (e.g. parameter block values) is ignored

    close_tracing(len(lines))

    if not traces:
        raise NdfParseError("no traces in file")
    return TraceSet(tuple(traces), source="ndf")


# ---------------------------------------------------------------------------
# Native JSON trace format
# ---------------------------------------------------------------------------


def parse_traces_json(text: str | bytes) -> TraceSet:
    """Parse ``{"traces":[{"id":int,"name":str,"points":[[x,y],...]}]}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceJsonError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise TraceJsonError("document root must be an object")
    if "traces" not in doc:
        raise TraceJsonError("traces: missing field")
    items = doc["traces"]
    if not isinstance(items, list):
        raise TraceJsonError("traces: must be a list")
    if not items:
        raise TraceJsonError("traces: must not be empty")

    traces: list[DendriteTrace] = []
    seen: set[int] = set()
    for i, item in enumerate(items):
        where = f"traces[{i}]"
        if not isinstance(item, dict):
            raise TraceJsonError(f"{where}: must be an object")
        for key in ("id", "name", "points"):
            if key not in item:
                raise TraceJsonError(f"{where}.{key}: missing field")
        tid = item["id"]
        if isinstance(tid, bool) or not isinstance(tid, int):
            raise TraceJsonError(f"{where}.id: must be an integer")
        if tid in seen:
            raise TraceJsonError(f"{where}.id: duplicate id {tid}")
        seen.add(tid)
        name = item["name"]
        if not isinstance(name, str):
            raise TraceJsonError(f"{where}.name: must be a string")
        pts = item["points"]
        if not isinstance(pts, list) or not pts:
            raise TraceJsonError(f"{where}.points: must be a non-empty list")
        coords: list[tuple[float, float]] = []
        for j, xy in enumerate(pts):
            if (
                not isinstance(xy, (list, tuple))
                or len(xy) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in xy)
            ):
                raise TraceJsonError(f"{where}.points[{j}]: must be an [x, y] number pair")
            coords.append((float(xy[0]), float(xy[1])))
        try:
            traces.append(DendriteTrace(tid, name, tuple(coords)))
        except ValueError as exc:
            raise TraceJsonError(f"{where}.points: {exc}") from exc
    return TraceSet(tuple(traces), source="json")


def serialize_traces_json(ts: TraceSet) -> str:
    """Inverse of parse_traces_json; parse(serialize(ts)) == ts."""
    doc = {
        "traces": [
            {"id": t.id, "name": t.name, "points": [[p.x, p.y] for p in t.points]}
            for t in ts.traces
        ]
    }
    return json.dumps(doc, indent=2)


def load_traces_file(path: str | Path) -> TraceSet:
    """Read a traces file, sniffing NDF vs native JSON from its content."""
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise InputError(f"cannot read traces file: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read traces file {path}: {exc}") from exc
    head = data.lstrip()[:32]
    if head.startswith(b"//"):
        return parse_ndf(data)
    return parse_traces_json(data)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def trace_length_px(trace: DendriteTrace) -> float:
    """Sum of Euclidean segment lengths; a single point has length 0."""
    pts = trace.points
    return sum(
        math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(pts, pts[1:])
    )


def px_to_microns(length_px: float, scale: float) -> float:
    """Convert a pixel length to microns given the scale in um/pixel."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return length_px * scale


def _segment_distance_sq(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> float:
    dx = bx - ax
    dy = by - ay
    seg_len_sq = dx * dx + dy * dy
    if seg_len_sq == 0.0:
        ex = px - ax
        ey = py - ay
        return ex * ex + ey * ey
    t = ((px - ax) * dx + (py - ay) * dy) / seg_len_sq
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return ex * ex + ey * ey


def polyline_distance(trace: DendriteTrace, x: float, y: float) -> float:
    """Distance from a point to the nearest point on the trace's polyline."""
    pts = trace.points
    if len(pts) == 1:
        return math.hypot(x - pts[0].x, y - pts[0].y)
    best = min(
        _segment_distance_sq(x, y, a.x, a.y, b.x, b.y) for a, b in zip(pts, pts[1:])
    )
    return math.sqrt(best)


def rasterize_tube(
    trace: DendriteTrace, thickness_px: float, width: int, height: int
) -> Mask:
    """Rasterize the dendrite tube: pixels whose center lies within
    thickness/2 of the polyline.

    Pixel (i, j) is set iff the distance from its center (i+0.5, j+0.5) to
    the nearest point on any segment is <= thickness_px/2, clipped to the
    image bounds. The mask may be empty if the trace lies outside the frame.
    """
    if thickness_px <= 0:
        raise ValueError(f"thickness must be positive, got {thickness_px}")
    radius = thickness_px / 2.0
    r_sq = radius * radius
    bits = np.zeros((height, width), dtype=bool)

    pts = trace.points
    segments = list(zip(pts, pts[1:])) if len(pts) > 1 else [(pts[0], pts[0])]
    for a, b in segments:
        # pixel-index window that can contain centers within `radius`
        lo_x = max(0, math.floor(min(a.x, b.x) - radius - 0.5))
        hi_x = min(width - 1, math.ceil(max(a.x, b.x) + radius - 0.5))
        lo_y = max(0, math.floor(min(a.y, b.y) - radius - 0.5))
        hi_y = min(height - 1, math.ceil(max(a.y, b.y) + radius - 0.5))
        if lo_x > hi_x or lo_y > hi_y:
            continue
        cx = np.arange(lo_x, hi_x + 1, dtype=np.float64) + 0.5
        cy = np.arange(lo_y, hi_y + 1, dtype=np.float64) + 0.5
        gx = cx[np.newaxis, :]
        gy = cy[:, np.newaxis]
        dx = b.x - a.x
        dy = b.y - a.y
        seg_len_sq = dx * dx + dy * dy
        if seg_len_sq == 0.0:
            ex = gx - a.x
            ey = gy - a.y
            dist_sq = ex * ex + ey * ey
        else:
            t = ((gx - a.x) * dx + (gy - a.y) * dy) / seg_len_sq
            np.clip(t, 0.0, 1.0, out=t)
            ex = gx - (a.x + t * dx)
            ey = gy - (a.y + t * dy)
            dist_sq = ex * ex + ey * ey
        bits[lo_y : hi_y + 1, lo_x : hi_x + 1] |= dist_sq <= r_sq
    return Mask(width, height, bits)


def union_masks(masks: Sequence[Mask]) -> Mask:
    """Pixelwise OR of equally sized masks."""
    if not masks:
        raise ValueError("union of zero masks is undefined")
    first = masks[0]
    for m in masks[1:]:
        if m.width != first.width or m.height != first.height:
            raise DimensionMismatchError(
                f"mask dimensions differ: {first.width}x{first.height} vs {m.width}x{m.height}"
            )
    bits = np.zeros((first.height, first.width), dtype=bool)
    for m in masks:
        bits |= m.bits
    return Mask(first.width, first.height, bits)
