"""Counting core: colocalization candidates inside the dendrite region,
connected-component counting, per-dendrite assignment and density metrics.

A synapse candidate is a pixel that clears both channel thresholds inside
the traced tube region; a synapse is a connected component of candidates.
Everything here is a pure function of its inputs, so identical images,
traces and configuration always produce bit-identical reports.
"""

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatchError
from .images import GrayImage, normalize_to_8bit
from .traces import (
    Mask,
    TraceSet,
    polyline_distance,
    px_to_microns,
    rasterize_tube,
    trace_length_px,
    union_masks,
)

__all__ = [
    "AnalysisConfig",
    "Component",
    "ComponentSet",
    "DendriteResult",
    "NeuronReport",
    "AnalysisDetail",
    "MODE_GLOBAL",
    "MODE_PER_DENDRITE",
    "colocalization_mask",
    "connected_components",
    "filter_components",
    "assign_to_dendrites",
    "density_per_100_micron",
    "mean_count",
    "inhibition_percentage",
    "analyze",
    "run_analysis",
    "GLOBAL_ID",
]

MODE_GLOBAL = "global"
MODE_PER_DENDRITE = "per-dendrite"

#: dendrite_id used for the whole-neuron result row.
GLOBAL_ID = "all"


@dataclass(frozen=True)
class AnalysisConfig:
    """Settings for one analysis; thresholds live on the 0-255 8-bit scale."""

    scale: float  # um per pixel
    thickness: float  # dendrite mean thickness, um
    threshold_red: int
    threshold_green: int
    min_area: int = 1
    connectivity: int = 8
    mode: str = MODE_GLOBAL

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError(f"scale: must be positive, got {self.scale}")
        if not (self.thickness > 0):
            raise ValueError(f"thickness: must be positive, got {self.thickness}")
        for name in ("threshold_red", "threshold_green"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"{name}: must be an integer, got {value!r}")
            if not 0 <= value <= 255:
                raise ValueError(f"{name}: out of range 0-255, got {value}")
        if not isinstance(self.min_area, int) or self.min_area < 1:
            raise ValueError(f"min_area: must be an integer >= 1, got {self.min_area}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity: must be 4 or 8, got {self.connectivity}")
        if self.mode not in (MODE_GLOBAL, MODE_PER_DENDRITE):
            raise ValueError(f"mode: must be 'global' or 'per-dendrite', got {self.mode!r}")

    @property
    def thickness_px(self) -> float:
        return self.thickness / self.scale


class Component(NamedTuple):
    id: int
    area: int
    centroid: tuple[float, float]  # pixel-center coordinates (x, y)
    bbox: tuple[int, int, int, int]  # inclusive (min_x, min_y, max_x, max_y)


@dataclass(frozen=True)
class ComponentSet:
    """Labeled connected components; label 0 is background, ids run 1..count."""

    count: int
    labels: np.ndarray  # (height, width) int32, read-only
    components: tuple[Component, ...]


def colocalization_mask(
    red: GrayImage, green: GrayImage, region: Mask, t_r: int, t_g: int
) -> Mask:
    """Pixels inside the region whose red AND green intensities clear their
    thresholds (>= t on both channels)."""
    if red.bit_depth != 8 or green.bit_depth != 8:
        raise ValueError("colocalization expects 8-bit channels; normalize first")
    dims = {(red.width, red.height), (green.width, green.height), (region.width, region.height)}
    if len(dims) != 1:
        raise DimensionMismatchError(f"channel/region dimensions differ: {sorted(dims)}")
    for name, t in (("t_r", t_r), ("t_g", t_g)):
        if not 0 <= t <= 255:
            raise ValueError(f"{name}: threshold out of range 0-255, got {t}")
    bits = region.bits & (red.pixels >= t_r) & (green.pixels >= t_g)
    return Mask(region.width, region.height, bits)


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def connected_components(mask: Mask, connectivity: int = 8) -> ComponentSet:
    """Label maximal connected foreground regions of a binary mask.

    Uses run-length encoding per row and union-find across row pairs, then
    renumbers so labels follow raster-scan discovery order (the component
    whose first pixel comes first gets label 1). Deterministic by
    construction.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    bits = mask.bits
    h, w = bits.shape
    labels = np.zeros((h, w), dtype=np.int32)

    # run = (start, end) half-open column interval on one row
    parent: list[int] = []
    runs: list[tuple[int, int, int]] = []  # (y, start, end) indexed by run id
    reach = 1 if connectivity == 8 else 0

    pad = np.zeros(w + 2, dtype=np.int8)
    prev: list[tuple[int, int, int]] = []  # (start, end, run_id) of previous row
    for y in range(h):
        row = bits[y]
        if not row.any():
            prev = []
            continue
        pad[1:-1] = row
        diff = np.diff(pad)
        starts = np.flatnonzero(diff == 1).tolist()
        ends = np.flatnonzero(diff == -1).tolist()
        cur: list[tuple[int, int, int]] = []
        for s, e in zip(starts, ends):
            rid = len(parent)
            parent.append(rid)
            runs.append((y, s, e))
            cur.append((s, e, rid))
        ai = bi = 0
        while ai < len(prev) and bi < len(cur):
            ps, pe, pid = prev[ai]
            s, e, rid = cur[bi]
            if s < pe + reach and ps < e + reach:
                ra = _find(parent, pid)
                rb = _find(parent, rid)
                if ra != rb:
                    parent[rb] = ra
            if pe <= e:
                ai += 1
            else:
                bi += 1
        prev = cur

    label_of_root: dict[int, int] = {}
    area: list[int] = [0]
    sum_cx: list[float] = [0.0]
    sum_cy: list[float] = [0.0]
    bbox: list[list[int]] = [[0, 0, 0, 0]]
    for rid, (y, s, e) in enumerate(runs):
        root = _find(parent, rid)
        lbl = label_of_root.get(root)
        if lbl is None:
            lbl = len(area)
            label_of_root[root] = lbl
            area.append(0)
            sum_cx.append(0.0)
            sum_cy.append(0.0)
            bbox.append([s, y, e - 1, y])
        labels[y, s:e] = lbl
        n = e - s
        area[lbl] += n
        sum_cx[lbl] += n * (s + e) / 2.0  # sum of centers i+0.5 over [s, e)
        sum_cy[lbl] += (y + 0.5) * n
        box = bbox[lbl]
        if s < box[0]:
            box[0] = s
        if e - 1 > box[2]:
            box[2] = e - 1
        box[3] = y  # rows visited in increasing order

    count = len(area) - 1
    components = tuple(
        Component(
            id=lbl,
            area=area[lbl],
            centroid=(sum_cx[lbl] / area[lbl], sum_cy[lbl] / area[lbl]),
            bbox=tuple(bbox[lbl]),
        )
        for lbl in range(1, count + 1)
    )
    labels.flags.writeable = False
    return ComponentSet(count=count, labels=labels, components=components)


def filter_components(cs: ComponentSet, min_area: int) -> ComponentSet:
    """Drop components smaller than min_area; survivors are relabeled 1..n
    preserving their order."""
    if min_area < 1:
        raise ValueError(f"min_area must be >= 1, got {min_area}")
    if min_area == 1:
        return cs
    kept = [c for c in cs.components if c.area >= min_area]
    mapping = np.zeros(cs.count + 1, dtype=np.int32)
    components = []
    for new_id, comp in enumerate(kept, start=1):
        mapping[comp.id] = new_id
        components.append(comp._replace(id=new_id))
    labels = mapping[cs.labels]
    labels.flags.writeable = False
    return ComponentSet(count=len(components), labels=labels, components=tuple(components))


def assign_to_dendrites(
    cs: ComponentSet,
    tubes: Sequence[tuple[int, Mask]],
    traces: TraceSet,
) -> dict[int, list[int]]:
    """Partition components among dendrites.

    A component goes to the unique tube containing its centroid pixel; if
    several tubes contain it (or none does), to the dendrite whose polyline
    is nearest to the centroid, ties broken by lowest dendrite id.
    """
    if not tubes:
        raise ValueError("assignment needs at least one dendrite tube")
    trace_by_id = {t.id: t for t in traces.traces}
    for did, _ in tubes:
        if did not in trace_by_id:
            raise ValueError(f"tube dendrite id {did} has no matching trace")
    result: dict[int, list[int]] = {did: [] for did, _ in tubes}
    all_ids = [did for did, _ in tubes]
    for comp in cs.components:
        cx, cy = comp.centroid
        px = int(cx)  # centroid is strictly inside the raster, floor == int
        py = int(cy)
        containing = [
            did
            for did, tube in tubes
            if 0 <= px < tube.width and 0 <= py < tube.height and tube.bits[py, px]
        ]
        if len(containing) == 1:
            chosen = containing[0]
        else:
            candidates = containing if containing else all_ids
            chosen = min(
                candidates,
                key=lambda did: (polyline_distance(trace_by_id[did], cx, cy), did),
            )
        result[chosen].append(comp.id)
    return result


def density_per_100_micron(count: int, length_um: float) -> float:
    """Synapses per 100 um of dendrite length."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if not (length_um > 0):
        raise ValueError(f"length must be positive, got {length_um}")
    return count * 100.0 / length_um


def mean_count(counts: Sequence[float]) -> float:
    """Arithmetic mean of a non-empty list of counts."""
    if len(counts) == 0:
        raise ValueError("mean of an empty list is undefined")
    return sum(float(c) for c in counts) / len(counts)


def inhibition_percentage(control_mean: float, treated_mean: float) -> float:
    """Percent reduction of the treated mean relative to the control mean."""
    if not (control_mean > 0):
        raise ValueError(f"control mean must be positive, got {control_mean}")
    if treated_mean < 0:
        raise ValueError(f"treated mean must be non-negative, got {treated_mean}")
    return (1.0 - treated_mean / control_mean) * 100.0


@dataclass(frozen=True)
class DendriteResult:
    """Length, count and density for one dendrite (or the whole neuron)."""

    dendrite_id: int | str
    length_px: float
    length_um: float
    synapse_count: int
    density_per_100um: float | None  # None when the length is zero

    def __post_init__(self):
        if self.length_um > 0 and self.density_per_100um is None:
            raise ValueError("density missing for a dendrite with positive length")


@dataclass(frozen=True)
class NeuronReport:
    """Analysis output: per-dendrite rows (in per-dendrite mode), the
    whole-neuron row, and the configuration snapshot that produced them."""

    per_dendrite: tuple[DendriteResult, ...]
    overall: DendriteResult
    config: AnalysisConfig
    inputs: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class AnalysisDetail:
    """Full analysis result including the intermediate rasters the report
    does not carry (used by the preview/marks endpoints and by tests)."""

    report: NeuronReport
    region: Mask
    candidates: Mask
    components: ComponentSet
    tubes: tuple[tuple[int, Mask], ...]


def _dendrite_result(dendrite_id, length_px: float, scale: float, count: int) -> DendriteResult:
    length_um = px_to_microns(length_px, scale)
    density = density_per_100_micron(count, length_um) if length_um > 0 else None
    return DendriteResult(
        dendrite_id=dendrite_id,
        length_px=length_px,
        length_um=length_um,
        synapse_count=count,
        density_per_100um=density,
    )


def run_analysis(
    red: GrayImage,
    green: GrayImage,
    traces: TraceSet,
    config: AnalysisConfig,
    inputs: Mapping[str, str] | None = None,
) -> AnalysisDetail:
    """The full pipeline, keeping intermediate rasters around.

    Steps: normalize both channels to 8-bit (full-range), rasterize one tube
    per dendrite at the configured thickness, take their union as the
    region, threshold both channels inside it, label connected components,
    drop those under min_area, then compute lengths, counts and densities.
    """
    if (red.width, red.height) != (green.width, green.height):
        raise DimensionMismatchError(
            f"channel dimensions differ: {red.width}x{red.height} vs "
            f"{green.width}x{green.height}"
        )
    width, height = red.width, red.height
    red8 = normalize_to_8bit(red)
    green8 = normalize_to_8bit(green)

    thickness_px = config.thickness_px
    tubes = tuple(
        (t.id, rasterize_tube(t, thickness_px, width, height)) for t in traces.traces
    )
    region = union_masks([m for _, m in tubes])
    candidates = colocalization_mask(
        red8, green8, region, config.threshold_red, config.threshold_green
    )
    components = filter_components(
        connected_components(candidates, config.connectivity), config.min_area
    )

    warnings = tuple(
        f"dendrite {t.id} extends beyond the image bounds; "
        "its full polyline length is used"
        for t in traces.traces
        if any(p.x > width or p.y > height for p in t.points)
    )

    lengths = {t.id: trace_length_px(t) for t in traces.traces}
    overall = _dendrite_result(
        GLOBAL_ID, sum(lengths.values()), config.scale, components.count
    )

    per_dendrite: tuple[DendriteResult, ...] = ()
    if config.mode == MODE_PER_DENDRITE:
        assignment = assign_to_dendrites(components, tubes, traces)
        per_dendrite = tuple(
            _dendrite_result(t.id, lengths[t.id], config.scale, len(assignment[t.id]))
            for t in sorted(traces.traces, key=lambda t: t.id)
        )

    report = NeuronReport(
        per_dendrite=per_dendrite,
        overall=overall,
        config=config,
        inputs=dict(inputs or {}),
        warnings=warnings,
    )
    return AnalysisDetail(
        report=report,
        region=region,
        candidates=candidates,
        components=components,
        tubes=tubes,
    )


def analyze(
    red: GrayImage,
    green: GrayImage,
    traces: TraceSet,
    config: AnalysisConfig,
    inputs: Mapping[str, str] | None = None,
) -> NeuronReport:
    """Run the whole counting pipeline and return the report."""
    return run_analysis(red, green, traces, config, inputs=inputs).report
