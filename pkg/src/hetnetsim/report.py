"""CSV, JSON bundle and SVG overlay output, plus multi-run comparison."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .config import from_dict  # noqa: E402
from .metrics import Band, BucketStats, MetricSeries  # noqa: E402
from .simulation import ResultBundle  # noqa: E402

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "bucket_start_s",
    "n_samples",
    "mean_jitter_ms",
    "mean_delay_ms",
    "loss_frac",
    "mean_mos",
    "delay_band",
    "jitter_band",
)

# Fixed salt keeps SVG element ids stable between runs.
SVG_HASH_SALT = "hetnetsim"


class BucketMismatch(ValueError):
    """Bundles being compared were bucketed with different widths."""


@dataclasses.dataclass(frozen=True)
class MetricDef:
    name: str
    column: str
    unit: str
    lower_is_better: bool = True


METRIC_DEFS: Dict[str, MetricDef] = {
    "jitter": MetricDef(name="Average VoIP Jitter", column="mean_jitter_ms", unit="ms"),
    "delay": MetricDef(name="Packet End-to-End Delay", column="mean_delay_ms", unit="ms"),
    "mos": MetricDef(name="Average MOS", column="mean_mos", unit="MOS", lower_is_better=False),
}


def _fmt(value: float) -> str:
    """Six significant digits; NaN (no samples) is written as an empty cell."""
    if math.isnan(value):
        return ""
    return format(value, ".6g")


def _optional_float(value: Any) -> float:
    if value is None or value == "":
        return math.nan
    return float(value)


def _optional_band(value: Any) -> Optional[Band]:
    return Band(value) if value else None


def _band_value(band: Optional[Band]) -> str:
    return band.value if band is not None else ""


def bundle_stem(bundle: ResultBundle) -> str:
    return f"{bundle.scenario}_seed{bundle.seed}"


def write_series_csv(series: MetricSeries, path: Path) -> Path:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for bucket in series.buckets:
            writer.writerow(
                [
                    _fmt(bucket.bucket_start_s),
                    bucket.n_samples,
                    _fmt(bucket.mean_jitter_ms),
                    _fmt(bucket.mean_delay_ms),
                    _fmt(bucket.loss_frac),
                    _fmt(bucket.mean_mos),
                    _band_value(bucket.delay_band),
                    _band_value(bucket.jitter_band),
                ]
            )
    return path


def _bucket_from_row(row: Dict[str, Any]) -> BucketStats:
    return BucketStats(
        bucket_start_s=float(row["bucket_start_s"]),
        n_samples=int(row["n_samples"]),
        mean_jitter_ms=_optional_float(row["mean_jitter_ms"]),
        mean_delay_ms=_optional_float(row["mean_delay_ms"]),
        loss_frac=float(row["loss_frac"]),
        mean_mos=float(row["mean_mos"]),
        delay_band=_optional_band(row["delay_band"]),
        jitter_band=_optional_band(row["jitter_band"]),
    )


def read_series_csv(path: Path, bucket_width_s: float) -> MetricSeries:
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        buckets = tuple(_bucket_from_row(row) for row in reader)
    return MetricSeries(bucket_width_s=bucket_width_s, buckets=buckets)


def write_bundle(bundle: ResultBundle, out_dir: Path) -> Tuple[Path, Path]:
    """Write ``<scenario>_seed<N>.csv`` and the matching JSON bundle."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = bundle_stem(bundle)
    csv_path = write_series_csv(bundle.series, out_dir / f"{stem}.csv")
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(bundle.to_dict(), indent=2) + "\n", encoding="utf-8", newline="\n")
    logger.info("Wrote %s and %s", csv_path, json_path)
    return csv_path, json_path


def load_bundle(path: Path) -> ResultBundle:
    data = json.loads(path.read_text(encoding="utf-8"))
    series = MetricSeries(
        bucket_width_s=float(data["bucket_width_s"]),
        buckets=tuple(_bucket_from_row(row) for row in data["series"]),
    )
    return ResultBundle(
        config=from_dict(data["config"]),
        seed=int(data["seed"]),
        series=series,
        summary=data["summary"],
    )


def plot_overlay(curves: Dict[str, MetricSeries], metric: MetricDef, path: Path) -> Path:
    """One line per curve against bucket start time, written as SVG."""
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(8, 4.5), dpi=100)
        for label, series in curves.items():
            ax.plot(
                [b / 60 for b in series.column("bucket_start_s")],
                series.column(metric.column),
                marker="o",
                markersize=3,
                label=label,
            )
        ax.set_title(f"{metric.name} (Overlaid)")
        ax.set_xlabel("time (min)")
        ax.set_ylabel(metric.unit)
        ax.grid(True, alpha=0.3)
        if curves:
            ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def _labels(bundles: Sequence[ResultBundle]) -> List[str]:
    names = [b.scenario for b in bundles]
    if len(set(names)) == len(names):
        return names
    names = [bundle_stem(b) for b in bundles]
    if len(set(names)) == len(names):
        return names
    return [f"{name} ({i + 1})" for i, name in enumerate(names)]


def ordering_table(curves: Dict[str, MetricSeries]) -> List[Dict[str, Any]]:
    """Per bucket, the curve that is best for each metric; ties go to the first curve."""
    indexed = {label: series.by_start() for label, series in curves.items()}
    starts = sorted({start for buckets in indexed.values() for start in buckets})
    rows: List[Dict[str, Any]] = []
    for start in starts:
        row: Dict[str, Any] = {"bucket_start_s": start}
        for key, metric in METRIC_DEFS.items():
            best: Optional[Tuple[str, float]] = None
            for label, buckets in indexed.items():
                if start not in buckets:
                    continue
                value = getattr(buckets[start], metric.column)
                if math.isnan(value):
                    continue
                if best is None or (value < best[1] if metric.lower_is_better else value > best[1]):
                    best = (label, value)
            row[f"best_{key}"] = best[0] if best else ""
        rows.append(row)
    return rows


def compare(bundles: Sequence[ResultBundle], out_dir: Path) -> Dict[str, Any]:
    """Overlay SVG per metric, ``ordering.csv`` and ``compare.json``."""
    if len(bundles) < 2:
        raise ValueError("compare needs at least two bundles")
    widths = {b.series.bucket_width_s for b in bundles}
    if len(widths) != 1:
        raise BucketMismatch(f"bundles use different bucket widths: {sorted(widths)}")
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = dict(zip(_labels(bundles), (b.series for b in bundles)))

    plots = {}
    for key, metric in METRIC_DEFS.items():
        plots[key] = str(plot_overlay(curves, metric, out_dir / f"{key}.svg"))

    rows = ordering_table(curves)
    columns = ["bucket_start_s"] + [f"best_{key}" for key in METRIC_DEFS]
    ordering_path = out_dir / "ordering.csv"
    with ordering_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "bucket_start_s": _fmt(row["bucket_start_s"])})

    best_share: Dict[str, Dict[str, float]] = {}
    for key in METRIC_DEFS:
        winners = [row[f"best_{key}"] for row in rows]
        best_share[key] = {
            label: (winners.count(label) / len(winners) if winners else 0.0) for label in curves
        }

    report = {
        "curves": list(curves),
        "bucket_width_s": widths.pop(),
        "buckets": len(rows),
        "best_share": best_share,
        "plots": plots,
        "ordering": str(ordering_path),
        "summaries": {label: b.summary.get("qos", {}) for label, b in zip(curves, bundles)},
    }
    (out_dir / "compare.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8", newline="\n")
    logger.info("Compared %s runs into %s", len(bundles), out_dir)
    return report
