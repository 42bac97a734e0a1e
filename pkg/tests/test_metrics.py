import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fanetsim.errors import DomainError, UndefinedMetricError
from fanetsim.metrics import (
    CSV_COLUMNS,
    METRICS,
    ChannelCounters,
    RunReport,
    SweepSummary,
    aggregate,
    format_number,
    location_error,
    received_packet_ratio,
    runs_csv,
    summary_csv,
    throughput,
)
from fanetsim.protocol import UavState

import oracles


def report(sent=0, received=0, bits=0, sim_time=1.0):
    return RunReport(ChannelCounters(sent=sent, received=received), payload_bits_delivered=bits, sim_time=sim_time)


def test_throughput_example():
    assert throughput(report(10, 10, 10 * 8000, 1.0)) == 80_000.0
    assert throughput(report(sim_time=2.0)) == 0.0


def test_throughput_undefined_at_zero_time():
    with pytest.raises(UndefinedMetricError):
        throughput(report(sim_time=0.0))
    assert report(sim_time=0.0).throughput_bps == 0.0


@pytest.mark.parametrize("sent,received,ratio", [(100, 90, 0.9), (0, 0, 0.0), (5, 0, 0.0), (3, 3, 1.0)])
def test_received_packet_ratio(sent, received, ratio):
    assert received_packet_ratio(report(sent, received)) == ratio


def nodes_with(truth, cache):
    n = len(truth)
    out = []
    for i in range(n):
        s = UavState.initial(i, n, truth[i])
        for j in range(n):
            if cache[i][j] is not None:
                s.cache.set(j, cache[i][j], 1, 0.5)
        out.append(s)
    return out


def test_location_error_example():
    truth = [(0.0, 0.0, 0.0), (10.0, 0.0, 0.0), (0.0, 0.0, 0.0)]
    # only node 0's view of node 1 is off, by 10 m
    cache = [[None, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)],
             [(0.0, 0.0, 0.0), None, (0.0, 0.0, 0.0)],
             [(0.0, 0.0, 0.0), (10.0, 0.0, 0.0), None]]
    err, age = location_error(nodes_with(truth, cache), now=1.5, diagonal=100.0)
    assert err == pytest.approx(10 / 6, rel=1e-12)
    assert err == pytest.approx(oracles.mean_pair_error(cache, truth, 100.0), rel=1e-12)
    assert age == pytest.approx(1.0, rel=1e-12)


def test_unknown_entries_count_as_diagonal():
    truth = [(0.0, 0.0, 0.0), (3.0, 4.0, 0.0)]
    err, age = location_error(nodes_with(truth, [[None, None], [None, None]]), now=2.0, diagonal=50.0)
    assert (err, age) == (50.0, 2.0)


@given(st.integers(2, 6), st.integers(0, 10_000))
def test_location_error_matches_oracle(n, seed):
    rng = np.random.default_rng(seed)
    truth = [tuple(rng.uniform(0, 500, 3)) for _ in range(n)]
    cache = [[None if rng.random() < 0.3 else tuple(rng.uniform(0, 500, 3)) for _ in range(n)] for _ in range(n)]
    err, _ = location_error(nodes_with(truth, cache), now=1.0, diagonal=714.0)
    assert err == pytest.approx(oracles.mean_pair_error(cache, truth, 714.0), rel=1e-9)


def test_location_error_needs_two_nodes():
    with pytest.raises(DomainError):
        location_error(nodes_with([(0, 0, 0)], [[None]]), 1.0)


def test_aggregate_mean_and_sample_std():
    stats = aggregate([report(1, 1), report(2, 2), report(3, 3)])
    s = stats["data_frames_sent"]
    assert (s.mean, s.std, s.runs) == (2.0, 1.0, 3)
    assert aggregate([report(4, 4)])["data_frames_sent"].std == 0.0
    with pytest.raises(DomainError):
        aggregate([])


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=20))
def test_aggregate_matches_numpy(values):
    s = aggregate([report(v, 0) for v in values])["data_frames_sent"]
    assert s.mean == pytest.approx(np.mean(values))
    assert s.std == pytest.approx(np.std(values, ddof=1) if len(values) > 1 else 0.0, abs=1e-9)


@pytest.mark.parametrize("v,text", [(3, "3"), (0.1, "0.1"), (1 / 3, "0.3333333333333333"), (True, "1"), (2.0, "2.0")])
def test_format_number_round_trips(v, text):
    assert format_number(v) == text
    assert float(text) == float(v)


def test_summary_csv_layout():
    summary = SweepSummary("nodes", [5, 10], seed_base=7)
    summary.points = [aggregate([report(1, 1), report(3, 2)]), aggregate([report(2, 2)])]
    rows = list(csv.reader(io.StringIO(summary_csv(summary))))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 2 * len(METRICS)
    sent = [r for r in rows[1:] if r[2] == "data_frames_sent"]
    assert sent == [["nodes", "5", "data_frames_sent", "2.0", repr(math.sqrt(2)), "2", "7"],
                    ["nodes", "10", "data_frames_sent", "2.0", "0.0", "1", "7"]]
    assert [p.mean for p in summary.series("data_frames_sent")] == [2.0, 2.0]


def test_runs_csv_layout():
    text = runs_csv("snr_db", [(8.0, 0, report(4, 2, 100, 2.0))])
    header, row = list(csv.reader(io.StringIO(text)))
    assert header == ["parameter", "value", "seed", *METRICS]
    assert row[:5] == ["snr_db", "8.0", "0", "50.0", "0.5"]
