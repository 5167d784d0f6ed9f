"""Synapse counting on traced dendrites.

Quantifies synapses by colocalizing two fluorescence marker channels inside
a traced dendrite region, counting the connected components of the
candidate pixels, and reporting lengths, counts and densities per 100 um,
for single neurons and for whole experiment folders.
"""

from .errors import DimensionMismatchError, InputError, SynapCountError
from .images import (
    GrayImage,
    RgbImage,
    load_png,
    load_tiff,
    normalize_to_8bit,
    save_png,
    save_tiff,
)
from .traces import (
    DendriteTrace,
    Mask,
    Point,
    TraceSet,
    load_traces_file,
    parse_ndf,
    parse_traces_json,
    px_to_microns,
    rasterize_tube,
    serialize_traces_json,
    trace_length_px,
    union_masks,
)
from .detect import (
    AnalysisConfig,
    AnalysisDetail,
    Component,
    ComponentSet,
    DendriteResult,
    NeuronReport,
    analyze,
    assign_to_dendrites,
    colocalization_mask,
    connected_components,
    density_per_100_micron,
    filter_components,
    inhibition_percentage,
    mean_count,
    run_analysis,
)
from .report import (
    parse_report_json,
    render_candidates_overlay,
    render_marked_synapses,
    render_region_overlay,
    to_csv,
    to_json,
)
from .batch import (
    BatchConfig,
    BatchReport,
    batch_csv,
    discover_groups,
    load_config,
    run_batch,
    save_config,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "AnalysisDetail",
    "BatchConfig",
    "BatchReport",
    "Component",
    "ComponentSet",
    "DendriteResult",
    "DendriteTrace",
    "DimensionMismatchError",
    "GrayImage",
    "InputError",
    "Mask",
    "NeuronReport",
    "Point",
    "RgbImage",
    "SynapCountError",
    "TraceSet",
    "analyze",
    "assign_to_dendrites",
    "batch_csv",
    "colocalization_mask",
    "connected_components",
    "density_per_100_micron",
    "discover_groups",
    "filter_components",
    "inhibition_percentage",
    "load_config",
    "load_png",
    "load_tiff",
    "load_traces_file",
    "mean_count",
    "normalize_to_8bit",
    "parse_ndf",
    "parse_report_json",
    "parse_traces_json",
    "px_to_microns",
    "rasterize_tube",
    "render_candidates_overlay",
    "render_marked_synapses",
    "render_region_overlay",
    "run_analysis",
    "run_batch",
    "save_config",
    "save_png",
    "save_tiff",
    "serialize_traces_json",
    "to_csv",
    "to_json",
    "trace_length_px",
    "union_masks",
]
