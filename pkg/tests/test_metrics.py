from __future__ import annotations

import math

import pytest

from hetnetsim.metrics import (
    Band,
    BucketAccumulator,
    EModelParams,
    MetricsCollector,
    MosLabel,
    QosSample,
    accumulate,
    bucket_aggregate,
    classify_delay,
    classify_jitter,
    e_model_r,
    jitter_sample,
    mos_from_r,
    mos_label,
    series_from_accumulators,
)
from hetnetsim.scheduler import millis, seconds

G711 = EModelParams()


def _sample(seq, send_ms, arrival_ms, jitter=None):
    return QosSample(
        call_id=1,
        direction="fwd",
        seq=seq,
        send_ts=millis(send_ms),
        arrival_ts=millis(arrival_ms),
        e2e_delay=millis(arrival_ms - send_ms),
        jitter=jitter,
    )


def test_constant_delay_gives_zero_jitter():
    a, b, c = _sample(0, 0, 10), _sample(1, 20, 30), _sample(2, 40, 50)
    assert jitter_sample(a, b) == 0
    assert jitter_sample(b, c) == 0


@pytest.mark.parametrize("arrival_ms, expected_us", [(35, 5_000), (25, -5_000)])
def test_jitter_sample_sign(arrival_ms, expected_us):
    assert jitter_sample(_sample(0, 0, 10), _sample(1, 20, arrival_ms)) == expected_us


def test_jitter_is_undefined_across_a_gap():
    assert jitter_sample(_sample(0, 0, 10), _sample(2, 40, 50)) is None


def test_e_model_oracles():
    assert e_model_r(0, 0, G711) == pytest.approx(93.2)
    assert e_model_r(100, 0, G711) == pytest.approx(90.8)
    assert e_model_r(0, 1.0, G711) == pytest.approx(93.2 - 95 * 100 / 104.3)
    assert e_model_r(0, 1.0, G711) == pytest.approx(2.12, abs=0.01)


def test_e_model_long_delay_term():
    d = 300.0
    assert e_model_r(d, 0, G711) == pytest.approx(93.2 - 0.024 * d - 0.11 * (d - 177.3))


def test_e_model_clamps_to_zero():
    assert e_model_r(1000, 1.0, G711) == 0.0


@pytest.mark.parametrize("delay, loss", [(float("nan"), 0.0), (10.0, 1.5), (10.0, -0.1)])
def test_e_model_rejects_bad_input(delay, loss):
    with pytest.raises(ValueError):
        e_model_r(delay, loss, G711)


def test_mos_mapping():
    assert mos_from_r(0) == 1.0
    assert mos_from_r(-5) == 1.0
    assert mos_from_r(100) == 4.5
    assert mos_from_r(93.2) == pytest.approx(4.409, abs=0.001)


def test_mos_is_monotone_in_delay_and_loss():
    delays = [0, 50, 100, 150, 177.3, 200, 300, 400, 600]
    losses = [0, 0.001, 0.01, 0.05, 0.1, 0.3, 1.0]
    for loss in losses:
        scores = [mos_from_r(e_model_r(d, loss)) for d in delays]
        assert all(x >= y for x, y in zip(scores, scores[1:]))
    for d in delays:
        scores = [mos_from_r(e_model_r(d, loss)) for loss in losses]
        assert all(x >= y for x, y in zip(scores, scores[1:]))


@pytest.mark.parametrize(
    "delay, band",
    [(0, Band.GOOD), (100, Band.GOOD), (150, Band.GOOD), (150.01, Band.ACCEPTABLE), (300, Band.ACCEPTABLE), (400, Band.POOR)],
)
def test_delay_bands(delay, band):
    assert classify_delay(delay) == band


@pytest.mark.parametrize(
    "jitter, band",
    [(0, Band.GOOD), (20, Band.GOOD), (30, Band.ACCEPTABLE), (50, Band.ACCEPTABLE), (51, Band.POOR)],
)
def test_jitter_bands(jitter, band):
    assert classify_jitter(jitter) == band


def test_classification_rejects_negative():
    with pytest.raises(ValueError):
        classify_delay(-1)
    with pytest.raises(ValueError):
        classify_jitter(-0.5)


@pytest.mark.parametrize(
    "score, label",
    [
        (5.0, MosLabel.EXCELLENT),
        (4.0, MosLabel.GOOD),
        (3.7, MosLabel.GOOD),
        (3.0, MosLabel.FAIR),
        (2.5, MosLabel.FAIR),
        (2.0, MosLabel.POOR),
        (1.0, MosLabel.BAD),
    ],
)
def test_mos_labels(score, label):
    assert mos_label(score) == label


@pytest.mark.parametrize("score", [0.5, 5.1])
def test_mos_label_rejects_out_of_range(score):
    with pytest.raises(ValueError):
        mos_label(score)


def test_single_bucket_means():
    samples = [
        _sample(0, 0, 10),
        _sample(1, 20, 35, jitter=millis(5)),
        _sample(2, 40, 50, jitter=millis(-5)),
    ]
    series = bucket_aggregate(samples, seconds(60))
    [bucket] = series.buckets
    assert bucket.bucket_start_s == 0
    assert bucket.n_samples == 3
    assert bucket.mean_jitter_ms == pytest.approx(5.0)
    assert bucket.mean_delay_ms == pytest.approx((10 + 15 + 10) / 3, rel=1e-5)
    assert bucket.loss_frac == 0
    assert bucket.delay_band == Band.GOOD


def test_empty_bucket_is_absent():
    samples = [_sample(0, 1_000, 1_010), _sample(1, 200_000, 200_010)]
    series = bucket_aggregate(samples, seconds(60))
    assert [b.bucket_start_s for b in series.buckets] == [0, 180]


def test_loss_only_bucket_is_kept():
    collector = MetricsCollector(bucket_width=seconds(60), codec_delay=0)
    collector.record_received(1, "fwd", 0, 0, millis(10), 200)
    for i in range(50):
        collector.record_lost(seconds(60) + i * millis(20))
    first, second = collector.series(G711).buckets
    assert (first.bucket_start_s, first.loss_frac) == (0, 0)
    assert second.bucket_start_s == 60
    assert second.n_samples == 0
    assert not second.has_samples
    assert second.loss_frac == 1
    assert math.isnan(second.mean_delay_ms) and math.isnan(second.mean_jitter_ms)
    assert second.delay_band is None and second.jitter_band is None
    assert second.mean_mos == pytest.approx(mos_from_r(e_model_r(0, 1.0)), abs=1e-5)
    totals = collector.totals()
    assert (totals.received, totals.lost) == (first.n_samples + second.n_samples, 50)


def test_losses_enter_bucket_loss_fraction():
    samples = [_sample(i, i * 20, i * 20 + 10) for i in range(3)]
    series = bucket_aggregate(samples, seconds(60), lost_send_ts=[millis(70)])
    [bucket] = series.buckets
    assert bucket.loss_frac == pytest.approx(0.25)
    assert bucket.mean_mos == pytest.approx(mos_from_r(e_model_r(10, 0.25)), abs=1e-5)


def test_two_buckets_against_brute_force():
    samples = [_sample(i, i * 7_000, i * 7_000 + 10 + i, jitter=millis(i % 3)) for i in range(20)]
    series = bucket_aggregate(samples, seconds(60))
    for bucket in series.buckets:
        members = [s for s in samples if s.send_ts // seconds(60) * 60 == bucket.bucket_start_s]
        assert bucket.n_samples == len(members)
        assert bucket.mean_delay_ms == pytest.approx(sum(s.e2e_delay for s in members) / 1000 / len(members), rel=1e-5)
    assert len(series.buckets) == 3


def test_merging_accumulators_equals_rebucketing_union():
    samples = [_sample(i, i * 5_000, i * 5_000 + 10 + i % 4, jitter=millis(i % 4)) for i in range(40)]
    left, right = samples[::2], samples[1::2]
    width = seconds(60)
    a, b = accumulate(left, width), accumulate(right, width)
    merged = {k: a.get(k, BucketAccumulator()).merge(b.get(k, BucketAccumulator())) for k in set(a) | set(b)}
    assert series_from_accumulators(merged, width) == bucket_aggregate(samples, width)


def test_collector_adds_codec_delay_and_tracks_jitter():
    collector = MetricsCollector(bucket_width=seconds(60), codec_delay=2_000)
    first = collector.record_received(1, "fwd", 0, 1_000, 6_000, 200)
    second = collector.record_received(1, "fwd", 1, 21_000, 27_000, 200)
    other = collector.record_received(2, "fwd", 0, 21_000, 22_000, 200)
    assert first.e2e_delay == 7_000
    assert first.jitter is None
    assert second.jitter == 1_000
    assert other.jitter is None
    collector.record_lost(41_000)
    totals = collector.totals()
    assert (totals.received, totals.lost) == (3, 1)
    assert collector.received_bits == 3 * 1600
    assert collector.delay_std_ms > 0


def test_packet_mos_mode_averages_per_packet_scores():
    collector = MetricsCollector(bucket_width=seconds(60), codec_delay=0, keep_delays=True)
    collector.record_received(1, "fwd", 0, 0, millis(100), 200)
    collector.record_received(1, "fwd", 1, millis(20), millis(420), 200)
    [bucket] = collector.series(G711, mos_mode="packet").buckets
    expected = (mos_from_r(e_model_r(100, 0)) + mos_from_r(e_model_r(400, 0))) / 2
    assert bucket.mean_mos == pytest.approx(expected, abs=1e-5)
