"""Batch mode: persist one analysis configuration and apply it to a folder
of neuron image groups (red TIFF + green TIFF + traces file per stem)."""

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import InputError, SynapCountError
from .detect import AnalysisConfig, NeuronReport, analyze, mean_count
from .images import load_tiff
from .report import CSV_HEADER, result_row
from .traces import load_traces_file

__all__ = [
    "BatchConfig",
    "BatchReport",
    "ConfigError",
    "Group",
    "save_config",
    "load_config",
    "discover_groups",
    "run_batch",
    "batch_csv",
]

logger = logging.getLogger(__name__)

_CONFIG_KEYS = {"analysis", "red_suffix", "green_suffix", "traces_suffix"}
_ANALYSIS_KEYS = {
    "scale",
    "thickness",
    "threshold_red",
    "threshold_green",
    "min_area",
    "connectivity",
    "mode",
}


class ConfigError(InputError):
    """Configuration file violates the schema; message names the field."""


@dataclass(frozen=True)
class BatchConfig:
    """Analysis settings plus the filename suffixes that define a group."""

    analysis: AnalysisConfig
    red_suffix: str = "_red.tif"
    green_suffix: str = "_green.tif"
    traces_suffix: str = "_traces.ndf"

    def __post_init__(self):
        suffixes = (self.red_suffix, self.green_suffix, self.traces_suffix)
        if any(not s for s in suffixes):
            raise ValueError("suffixes must be non-empty")
        if len(set(suffixes)) != 3:
            raise ValueError(f"suffixes must be pairwise distinct, got {suffixes}")


def save_config(cfg: BatchConfig, path: str | Path) -> None:
    """Write the configuration as JSON (round-trips through load_config)."""
    obj = {
        "analysis": {
            "scale": cfg.analysis.scale,
            "thickness": cfg.analysis.thickness,
            "threshold_red": cfg.analysis.threshold_red,
            "threshold_green": cfg.analysis.threshold_green,
            "min_area": cfg.analysis.min_area,
            "connectivity": cfg.analysis.connectivity,
            "mode": cfg.analysis.mode,
        },
        "red_suffix": cfg.red_suffix,
        "green_suffix": cfg.green_suffix,
        "traces_suffix": cfg.traces_suffix,
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_config(path: str | Path) -> BatchConfig:
    """Read and validate a configuration file; unknown fields are rejected."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid config JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config root must be an object")
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    if "analysis" not in obj:
        raise ConfigError("analysis: missing field")
    analysis = obj["analysis"]
    if not isinstance(analysis, dict):
        raise ConfigError("analysis: must be an object")
    unknown = set(analysis) - _ANALYSIS_KEYS
    if unknown:
        raise ConfigError(f"unknown analysis field(s): {', '.join(sorted(unknown))}")
    for required in ("scale", "thickness", "threshold_red", "threshold_green"):
        if required not in analysis:
            raise ConfigError(f"analysis.{required}: missing field")
    try:
        analysis_cfg = AnalysisConfig(**analysis)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"analysis.{exc}") from exc
    suffixes = {
        key: obj[key]
        for key in ("red_suffix", "green_suffix", "traces_suffix")
        if key in obj
    }
    for key, value in suffixes.items():
        if not isinstance(value, str):
            raise ConfigError(f"{key}: must be a string")
    try:
        return BatchConfig(analysis=analysis_cfg, **suffixes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


class Group(NamedTuple):
    stem: str
    red_path: str
    green_path: str
    traces_path: str


def discover_groups(directory: str | Path, cfg: BatchConfig) -> list[Group]:
    """Find complete groups: stems for which all three suffix files exist.

    Groups come back sorted by stem regardless of filesystem order;
    incomplete stems are logged as warnings, never errors.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"not a readable directory: {directory}")
    try:
        names = [entry.name for entry in directory.iterdir() if entry.is_file()]
    except OSError as exc:
        raise InputError(f"cannot list directory {directory}: {exc}") from exc

    by_suffix: dict[str, dict[str, str]] = {
        cfg.red_suffix: {},
        cfg.green_suffix: {},
        cfg.traces_suffix: {},
    }
    for name in names:
        for suffix, stems in by_suffix.items():
            if name.endswith(suffix) and len(name) > len(suffix):
                stems[name[: -len(suffix)]] = name

    reds = by_suffix[cfg.red_suffix]
    greens = by_suffix[cfg.green_suffix]
    trace_files = by_suffix[cfg.traces_suffix]
    groups = []
    for stem in sorted(set(reds) | set(greens) | set(trace_files)):
        missing = [
            suffix
            for suffix, stems in by_suffix.items()
            if stem not in stems
        ]
        if missing:
            logger.warning(
                "incomplete group %r: missing %s", stem, ", ".join(sorted(missing))
            )
            continue
        groups.append(
            Group(
                stem=stem,
                red_path=str(directory / reds[stem]),
                green_path=str(directory / greens[stem]),
                traces_path=str(directory / trace_files[stem]),
            )
        )
    return groups


@dataclass(frozen=True)
class BatchReport:
    """Per-neuron reports keyed by stem, per-stem failures, and the
    aggregate means across the successfully analyzed neurons."""

    neurons: dict[str, NeuronReport]
    failures: dict[str, str] = field(default_factory=dict)
    mean_synapse_count: float | None = None
    mean_density: float | None = None


def analyze_group(group: Group, cfg: AnalysisConfig) -> NeuronReport:
    """Analyze one group exactly as the standalone analyze command would."""
    red = load_tiff(group.red_path, channel="red")
    green = load_tiff(group.green_path, channel="green")
    traces = load_traces_file(group.traces_path)
    inputs = {
        "red": group.red_path,
        "green": group.green_path,
        "traces": group.traces_path,
    }
    return analyze(red, green, traces, cfg, inputs=inputs)


def run_batch(directory: str | Path, cfg: BatchConfig) -> BatchReport:
    """Apply one configuration to every complete group in a folder.

    A failing group is recorded under its stem and does not abort the rest
    of the batch.
    """
    groups = discover_groups(directory, cfg)
    if not groups:
        raise InputError(f"no groups found in {directory}")
    neurons: dict[str, NeuronReport] = {}
    failures: dict[str, str] = {}
    for group in groups:
        try:
            neurons[group.stem] = analyze_group(group, cfg.analysis)
        except (SynapCountError, OSError, ValueError) as exc:
            logger.warning("group %r failed: %s", group.stem, exc)
            failures[group.stem] = str(exc)
    counts = [r.overall.synapse_count for r in neurons.values()]
    densities = [
        r.overall.density_per_100um
        for r in neurons.values()
        if r.overall.density_per_100um is not None
    ]
    return BatchReport(
        neurons=neurons,
        failures=failures,
        mean_synapse_count=mean_count(counts) if counts else None,
        mean_density=mean_count(densities) if densities else None,
    )


def batch_csv(report: BatchReport) -> str:
    """The batch table: the per-neuron report rows with a stem column in front."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["neuron"] + CSV_HEADER)
    for stem, neuron in report.neurons.items():
        for r in sorted(neuron.per_dendrite, key=lambda r: r.dendrite_id):
            writer.writerow([stem] + result_row(r))
        writer.writerow([stem] + result_row(neuron.overall))
    return buf.getvalue()
