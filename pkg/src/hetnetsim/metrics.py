"""Per-packet QoS measurement, E-model scoring, ITU-T bands and time buckets."""

from __future__ import annotations

import dataclasses
import logging
import math
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

from .config import CodecConfig
from .scheduler import SimTime, to_millis

logger = logging.getLogger(__name__)


class Band(str, Enum):
    GOOD = "Good"
    ACCEPTABLE = "Acceptable"
    POOR = "Poor"


class MosLabel(str, Enum):
    EXCELLENT = "Excellent"
    GOOD = "Good"
    FAIR = "Fair"
    POOR = "Poor"
    BAD = "Bad"


# score -> (label, listening effort)
MOS_SCALE: Dict[int, Tuple[MosLabel, str]] = {
    5: (MosLabel.EXCELLENT, "No effort is required."),
    4: (MosLabel.GOOD, "No considerable effort is required."),
    3: (MosLabel.FAIR, "Moderate effort is required."),
    2: (MosLabel.POOR, "Considerable effort is required."),
    1: (MosLabel.BAD, "Not understood even with considerable effort."),
}


@dataclasses.dataclass(frozen=True)
class ItuBands:
    """Upper edges (inclusive) of the Good and Acceptable bands, in ms."""

    delay_good_ms: float = 150.0
    delay_acceptable_ms: float = 300.0
    jitter_good_ms: float = 20.0
    jitter_acceptable_ms: float = 50.0


ITU_BANDS = ItuBands()


@dataclasses.dataclass(frozen=True)
class EModelParams:
    r0: float = 93.2
    ie: float = 0.0
    bpl: float = 4.3

    @classmethod
    def for_codec(cls, codec: CodecConfig) -> "EModelParams":
        return cls(ie=codec.ie, bpl=codec.bpl)


@dataclasses.dataclass
class QosSample:
    """One received voice packet."""

    call_id: int
    direction: str
    seq: int
    send_ts: SimTime
    arrival_ts: SimTime
    e2e_delay: SimTime
    jitter: Optional[SimTime] = None


def jitter_sample(prev: QosSample, cur: QosSample) -> Optional[SimTime]:
    """Arrival spacing minus send spacing; None across a loss gap."""
    if cur.seq != prev.seq + 1:
        return None
    return (cur.arrival_ts - prev.arrival_ts) - (cur.send_ts - prev.send_ts)


def e_model_r(one_way_delay_ms: float, loss_fraction: float, params: EModelParams = EModelParams()) -> float:
    """Transmission rating R from one-way delay and packet loss."""
    if not (math.isfinite(one_way_delay_ms) and math.isfinite(loss_fraction)):
        raise ValueError("E-model inputs must be finite")
    if not 0.0 <= loss_fraction <= 1.0:
        raise ValueError(f"loss fraction {loss_fraction} outside [0, 1]")
    d = one_way_delay_ms
    delay_impairment = 0.024 * d
    if d > 177.3:
        delay_impairment += 0.11 * (d - 177.3)
    ppl = 100.0 * loss_fraction
    ie_eff = params.ie + (95.0 - params.ie) * ppl / (ppl + params.bpl)
    r = params.r0 - delay_impairment - ie_eff
    return min(max(r, 0.0), 100.0)


def mos_from_r(r: float) -> float:
    if r <= 0:
        return 1.0
    if r >= 100:
        return 4.5
    return 1.0 + 0.035 * r + 7e-6 * r * (r - 60.0) * (100.0 - r)


def _classify(value: float, good: float, acceptable: float, what: str) -> Band:
    if value < 0:
        raise ValueError(f"{what} must be non-negative, got {value}")
    if value <= good:
        return Band.GOOD
    if value <= acceptable:
        return Band.ACCEPTABLE
    return Band.POOR


def classify_delay(delay_ms: float, bands: ItuBands = ITU_BANDS) -> Band:
    return _classify(delay_ms, bands.delay_good_ms, bands.delay_acceptable_ms, "delay")


def classify_jitter(jitter_ms: float, bands: ItuBands = ITU_BANDS) -> Band:
    return _classify(jitter_ms, bands.jitter_good_ms, bands.jitter_acceptable_ms, "jitter")


def mos_label(score: float) -> MosLabel:
    if not 1.0 <= score <= 5.0:
        raise ValueError(f"MOS {score} outside [1, 5]")
    rounded = min(max(math.floor(score + 0.5), 1), 5)
    return MOS_SCALE[rounded][0]


def sig6(value: float) -> float:
    """Round to the 6 significant digits used in CSV output."""
    return float(f"{value:.6g}")


@dataclasses.dataclass
class BucketAccumulator:
    """Additive per-bucket sums; merging two equals bucketing their union."""

    received: int = 0
    lost: int = 0
    delay_sum: SimTime = 0
    jitter_abs_sum: SimTime = 0
    jitter_count: int = 0
    delays: List[SimTime] = dataclasses.field(default_factory=list)

    def add_sample(self, sample: QosSample, keep_delay: bool = False) -> None:
        self.received += 1
        self.delay_sum += sample.e2e_delay
        if sample.jitter is not None:
            self.jitter_abs_sum += abs(sample.jitter)
            self.jitter_count += 1
        if keep_delay:
            self.delays.append(sample.e2e_delay)

    def add_loss(self, count: int = 1) -> None:
        self.lost += count

    def merge(self, other: "BucketAccumulator") -> "BucketAccumulator":
        return BucketAccumulator(
            received=self.received + other.received,
            lost=self.lost + other.lost,
            delay_sum=self.delay_sum + other.delay_sum,
            jitter_abs_sum=self.jitter_abs_sum + other.jitter_abs_sum,
            jitter_count=self.jitter_count + other.jitter_count,
            delays=self.delays + other.delays,
        )

    @property
    def loss_fraction(self) -> float:
        total = self.received + self.lost
        return self.lost / total if total else 0.0

    @property
    def mean_delay_ms(self) -> float:
        return to_millis(self.delay_sum) / self.received if self.received else 0.0

    @property
    def mean_jitter_ms(self) -> float:
        return to_millis(self.jitter_abs_sum) / self.jitter_count if self.jitter_count else 0.0


@dataclasses.dataclass(frozen=True)
class BucketStats:
    bucket_start_s: float
    n_samples: int
    mean_jitter_ms: float
    mean_delay_ms: float
    loss_frac: float
    mean_mos: float
    delay_band: Optional[Band]
    jitter_band: Optional[Band]

    @property
    def has_samples(self) -> bool:
        return self.n_samples > 0


@dataclasses.dataclass(frozen=True)
class MetricSeries:
    """
    Time-bucketed QoS series.

    Buckets with neither received nor lost packets are absent. A bucket that
    only saw losses has NaN delay and jitter, no bands, and the MOS of total
    loss.
    """

    bucket_width_s: float
    buckets: Tuple[BucketStats, ...]

    def column(self, name: str) -> List[float]:
        return [getattr(bucket, name) for bucket in self.buckets]

    def by_start(self) -> Dict[float, BucketStats]:
        return {bucket.bucket_start_s: bucket for bucket in self.buckets}


def bucket_mos(acc: BucketAccumulator, params: EModelParams, mos_mode: str = "bucket") -> float:
    loss = acc.loss_fraction
    if mos_mode == "packet" and acc.delays:
        scores = [mos_from_r(e_model_r(to_millis(d), loss, params)) for d in acc.delays]
        return sum(scores) / len(scores)
    return mos_from_r(e_model_r(acc.mean_delay_ms, loss, params))


def series_from_accumulators(
    accumulators: Dict[int, BucketAccumulator],
    bucket_width: SimTime,
    params: EModelParams = EModelParams(),
    mos_mode: str = "bucket",
) -> MetricSeries:
    buckets = []
    for index in sorted(accumulators):
        acc = accumulators[index]
        if acc.received + acc.lost == 0:
            continue
        if acc.received:
            mean_jitter = sig6(acc.mean_jitter_ms)
            mean_delay = sig6(acc.mean_delay_ms)
            delay_band: Optional[Band] = classify_delay(mean_delay)
            jitter_band: Optional[Band] = classify_jitter(mean_jitter)
        else:
            mean_jitter = mean_delay = math.nan
            delay_band = jitter_band = None
        buckets.append(
            BucketStats(
                bucket_start_s=sig6(index * bucket_width / 1_000_000),
                n_samples=acc.received,
                mean_jitter_ms=mean_jitter,
                mean_delay_ms=mean_delay,
                loss_frac=sig6(acc.loss_fraction),
                mean_mos=sig6(bucket_mos(acc, params, mos_mode)),
                delay_band=delay_band,
                jitter_band=jitter_band,
            )
        )
    return MetricSeries(bucket_width_s=sig6(bucket_width / 1_000_000), buckets=tuple(buckets))


def bucket_index(ts: SimTime, bucket_width: SimTime) -> int:
    return ts // bucket_width


def bucket_aggregate(
    samples: Iterable[QosSample],
    bucket_width: SimTime,
    lost_send_ts: Iterable[SimTime] = (),
    params: EModelParams = EModelParams(),
    mos_mode: str = "bucket",
) -> MetricSeries:
    """Bucket samples (and losses) by send time into a MetricSeries."""
    return series_from_accumulators(
        accumulate(samples, bucket_width, lost_send_ts, keep_delays=mos_mode == "packet"),
        bucket_width,
        params,
        mos_mode,
    )


def accumulate(
    samples: Iterable[QosSample],
    bucket_width: SimTime,
    lost_send_ts: Iterable[SimTime] = (),
    keep_delays: bool = False,
) -> Dict[int, BucketAccumulator]:
    accumulators: Dict[int, BucketAccumulator] = {}
    for sample in samples:
        index = bucket_index(sample.send_ts, bucket_width)
        accumulators.setdefault(index, BucketAccumulator()).add_sample(sample, keep_delays)
    for ts in lost_send_ts:
        accumulators.setdefault(bucket_index(ts, bucket_width), BucketAccumulator()).add_loss()
    return accumulators


class MetricsCollector:
    """
    Online QoS bookkeeping for a run.

    Jitter is computed per (call, direction) against the previous received
    packet. Bucket sums are kept instead of raw samples unless
    ``keep_samples`` is set.
    """

    def __init__(
        self,
        bucket_width: SimTime,
        codec_delay: SimTime,
        keep_samples: bool = False,
        keep_delays: bool = False,
    ) -> None:
        self.bucket_width = bucket_width
        self.codec_delay = codec_delay
        self.keep_samples = keep_samples
        self.keep_delays = keep_delays
        self.accumulators: Dict[int, BucketAccumulator] = {}
        self.samples: List[QosSample] = []
        self._last: Dict[Tuple[int, str], QosSample] = {}
        self.received_bits = 0
        # Welford running moments of one-way delay, in ms.
        self._delay_n = 0
        self._delay_mean = 0.0
        self._delay_m2 = 0.0

    def _bucket(self, send_ts: SimTime) -> BucketAccumulator:
        index = bucket_index(send_ts, self.bucket_width)
        acc = self.accumulators.get(index)
        if acc is None:
            acc = self.accumulators[index] = BucketAccumulator()
        return acc

    def record_received(
        self, call_id: int, direction: str, seq: int, send_ts: SimTime, arrival_ts: SimTime, size_bytes: int
    ) -> QosSample:
        sample = QosSample(
            call_id=call_id,
            direction=direction,
            seq=seq,
            send_ts=send_ts,
            arrival_ts=arrival_ts,
            e2e_delay=arrival_ts - send_ts + self.codec_delay,
        )
        key = (call_id, direction)
        prev = self._last.get(key)
        if prev is not None:
            sample.jitter = jitter_sample(prev, sample)
        self._last[key] = sample
        self._bucket(send_ts).add_sample(sample, self.keep_delays)
        if self.keep_samples:
            self.samples.append(sample)
        self.received_bits += 8 * size_bytes
        delay_ms = to_millis(sample.e2e_delay)
        self._delay_n += 1
        delta = delay_ms - self._delay_mean
        self._delay_mean += delta / self._delay_n
        self._delay_m2 += delta * (delay_ms - self._delay_mean)
        return sample

    def record_lost(self, send_ts: SimTime) -> None:
        self._bucket(send_ts).add_loss()

    def close_flow(self, call_id: int, direction: str) -> None:
        self._last.pop((call_id, direction), None)

    @property
    def delay_std_ms(self) -> float:
        return math.sqrt(self._delay_m2 / (self._delay_n - 1)) if self._delay_n > 1 else 0.0

    def totals(self, start: SimTime = 0, end: Optional[SimTime] = None) -> BucketAccumulator:
        """Merged accumulator of buckets starting in [start, end)."""
        total = BucketAccumulator()
        for index, acc in self.accumulators.items():
            bucket_start = index * self.bucket_width
            if bucket_start < start or (end is not None and bucket_start >= end):
                continue
            total = BucketAccumulator(
                received=total.received + acc.received,
                lost=total.lost + acc.lost,
                delay_sum=total.delay_sum + acc.delay_sum,
                jitter_abs_sum=total.jitter_abs_sum + acc.jitter_abs_sum,
                jitter_count=total.jitter_count + acc.jitter_count,
            )
        return total

    def series(self, params: EModelParams, mos_mode: str = "bucket") -> MetricSeries:
        return series_from_accumulators(self.accumulators, self.bucket_width, params, mos_mode)
