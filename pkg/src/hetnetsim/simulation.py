"""Run orchestration: build the network, drive calls, collect a ResultBundle."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import ScenarioConfig, to_dict, validate
from .metrics import (
    Band,
    BucketStats,
    EModelParams,
    MetricSeries,
    MetricsCollector,
    bucket_mos,
    classify_delay,
    classify_jitter,
    mos_label,
    sig6,
)
from .rng import RngFactory
from .scheduler import Kernel, millis, seconds
from .topology import Network
from .voip import VoipApp

logger = logging.getLogger(__name__)

CLOUD_NOTE = (
    "IP cloud latency is an assumed constant; curves from other simulators "
    "shift by the difference in backbone delay"
)


@dataclasses.dataclass(frozen=True)
class ResultBundle:
    """Everything one (scenario, seed) run produced."""

    config: ScenarioConfig
    seed: int
    series: MetricSeries
    summary: Dict[str, Any]

    @property
    def scenario(self) -> str:
        return self.config.name

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": 1,
            "scenario": self.scenario,
            "seed": self.seed,
            "config": to_dict(self.config),
            "bucket_width_s": self.series.bucket_width_s,
            "series": [_bucket_dict(bucket) for bucket in self.series.buckets],
            "summary": self.summary,
        }


def _bucket_dict(bucket: BucketStats) -> Dict[str, Any]:
    """JSON row; a loss-only bucket has null delay, jitter and bands."""
    row = dataclasses.asdict(bucket)
    for key, value in row.items():
        if isinstance(value, float) and math.isnan(value):
            row[key] = None
    row["delay_band"] = bucket.delay_band.value if bucket.delay_band else None
    row["jitter_band"] = bucket.jitter_band.value if bucket.jitter_band else None
    return row


def codec_delay(config: ScenarioConfig) -> int:
    codec = config.codec
    return millis(codec.encode_delay_ms + codec.lookahead_ms + codec.decode_delay_ms + config.playout_delay_ms)


def _period_stats(collector: MetricsCollector, start: int, end: Optional[int]) -> Dict[str, Any]:
    acc = collector.totals(start, end)
    return {
        "n_samples": acc.received,
        "mean_jitter_ms": sig6(acc.mean_jitter_ms),
        "mean_delay_ms": sig6(acc.mean_delay_ms),
        "loss_frac": sig6(acc.loss_fraction),
    }


def _summarize(
    config: ScenarioConfig,
    seed: int,
    kernel: Kernel,
    network: Network,
    app: VoipApp,
    collector: MetricsCollector,
    series: MetricSeries,
    params: EModelParams,
) -> Dict[str, Any]:
    flows = [flow for session in app.sessions.values() for flow in session.flows.values()]
    sent = sum(f.sent for f in flows)
    received = sum(f.received for f in flows)
    lost = sum(f.lost for f in flows)
    overall = collector.totals()
    mos_values = np.asarray(series.column("mean_mos"), dtype=float)
    mean_mos = float(mos_values.mean()) if mos_values.size else 0.0
    warmup = seconds(config.warmup_s)
    stats = app.stats

    verdicts: Dict[str, Any] = {}
    if series.buckets:
        verdicts = {
            "delay": classify_delay(sig6(overall.mean_delay_ms)).value,
            "jitter": classify_jitter(sig6(overall.mean_jitter_ms)).value,
            "mos_label": mos_label(min(max(mean_mos, 1.0), 5.0)).value,
            "delay_bands": _band_counts(b.delay_band for b in series.buckets),
            "jitter_bands": _band_counts(b.jitter_band for b in series.buckets),
        }

    after = [b.mean_mos for b in series.buckets if b.bucket_start_s >= config.warmup_s]
    return {
        "scenario": config.name,
        "seed": seed,
        "duration_s": config.duration_s,
        "events": kernel.events_processed,
        "calls": {
            "attempted": stats.attempted,
            "established": stats.established,
            "completed": stats.completed,
            "truncated": stats.truncated,
            "blocked": stats.blocked,
            "retargeted": stats.retargeted,
            "abandoned": stats.abandoned,
            "mean_setup_delay_ms": sig6(stats.mean_setup_delay_ms),
        },
        "packets": {
            "sent": sent,
            "received": received,
            "lost": lost,
            "loss_frac": sig6(lost / sent) if sent else 0.0,
            "drops": dict(sorted(stats.drops.items())),
            "sip_lost": stats.sip_lost,
        },
        "qos": {
            "mean_jitter_ms": sig6(overall.mean_jitter_ms),
            "mean_delay_ms": sig6(overall.mean_delay_ms),
            "delay_std_ms": sig6(collector.delay_std_ms),
            "mean_mos": sig6(mean_mos),
            "pooled_mos": sig6(bucket_mos(overall, params)) if overall.received else 0.0,
            "throughput_bps": sig6(collector.received_bits / config.duration_s) if config.duration_s else 0.0,
        },
        "itu": verdicts,
        "convergence": {
            "warmup_s": config.warmup_s,
            "during": _period_stats(collector, 0, warmup),
            "after": _period_stats(collector, warmup, None),
            "mos_std_after": sig6(float(np.std(after))) if after else 0.0,
        },
        "mac": network.mac_stats(),
        "cloud": {
            "base_latency_ms": config.cloud.base_latency_ms,
            "latency_jitter_ms": config.cloud.latency_jitter_ms,
            "note": CLOUD_NOTE,
        },
    }


def _band_counts(bands: Iterable[Optional[Band]]) -> Dict[str, int]:
    counts = Counter(band.value for band in bands if band is not None)
    return dict(sorted(counts.items()))


class Simulation:
    """Coordinates kernel, network and VoIP application for one seed."""

    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None, trace: bool = False) -> None:
        validate(config)
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.kernel = Kernel(trace=trace)
        self.rngs = RngFactory(self.seed)
        self.params = EModelParams.for_codec(config.codec)
        # AdmissionRefused surfaces here, before any event runs.
        self.network = Network(self.kernel, config, self.rngs)
        self.metrics = MetricsCollector(
            bucket_width=seconds(config.bucket_width_s),
            codec_delay=codec_delay(config),
            keep_delays=config.mos_mode == "packet",
        )
        self.app = VoipApp(self.kernel, self.network, config, self.rngs, self.metrics)

    @property
    def end_time(self) -> int:
        return seconds(self.config.duration_s) + seconds(self.config.call_profile.teardown_grace_s)

    def run(self) -> ResultBundle:
        logger.info("Running scenario %s (seed %s, %ss)", self.config.name, self.seed, self.config.duration_s)
        started = time.perf_counter()
        self.app.start_call_generator()
        self.kernel.run_until(self.end_time)
        self.app.finalize()
        series = self.metrics.series(self.params, self.config.mos_mode)
        summary = _summarize(
            self.config, self.seed, self.kernel, self.network, self.app, self.metrics, series, self.params
        )
        if self.kernel.trace:
            summary["trace_digest"] = self.kernel.trace_digest()
        logger.info(
            "Scenario %s seed %s done: %s events, %s calls, %.2fs wall",
            self.config.name,
            self.seed,
            self.kernel.events_processed,
            self.app.stats.established,
            time.perf_counter() - started,
        )
        return ResultBundle(config=self.config.with_seed(self.seed), seed=self.seed, series=series, summary=summary)


def run(config: ScenarioConfig, seed: Optional[int] = None, trace: bool = False) -> ResultBundle:
    """Deterministic run of ``config`` under ``seed`` (config seed when omitted)."""
    return Simulation(config, seed, trace).run()


def run_many(config: ScenarioConfig, seeds: Sequence[int], jobs: int = 1) -> List[ResultBundle]:
    """Independent runs, one per seed, optionally across worker processes."""
    if jobs <= 1 or len(seeds) <= 1:
        return [run(config, seed) for seed in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, [config] * len(seeds), seeds))
