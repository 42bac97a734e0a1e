import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanetsim import ScenarioConfig, Simulator
from fanetsim.engine import Ev, frames_overlap, resolve_reception, rng_stream
from fanetsim.model import Channel, Frame, FrameKind, MobilityConfig, new_token

STATIC = MobilityConfig(v_max=0.0)
PAIR = [[0.0, 0.0, 0.0], [50.0, 0.0, 0.0]]


def lossless(**kw):
    base = dict(mobility=STATIC, link_model="threshold", snr_db=30.0, seed=1)
    base.update(kw)
    return ScenarioConfig(**base)


def data_frame(t0, t1, src=0, dst=1):
    return Frame(Channel.DATA, FrameKind.TOKEN, src, dst, 800, t0, t1, new_token(1, 0, 2))


# ---------------------------------------------------------------- rng streams
def test_rng_streams_reproducible_and_distinct():
    a = rng_stream(5, 0, "loss").random(4)
    assert np.array_equal(a, rng_stream(5, 0, "loss").random(4))
    others = [rng_stream(5, 1, "loss"), rng_stream(5, 0, "mobility"), rng_stream(6, 0, "loss")]
    for g in others:
        assert not np.array_equal(a, g.random(4))


# ---------------------------------------------------------------- reception
@pytest.mark.parametrize(
    "a,b,hit",
    [((0, 300), (150, 450), True), ((0, 300), (400, 700), False), ((0, 300), (300, 600), False)],
)
def test_overlap_examples(a, b, hit):
    fa, fb = data_frame(*a), data_frame(*b, src=2)
    assert frames_overlap(fa, fb) is hit
    rng = np.random.default_rng(0)
    assert resolve_reception(fa, [fa, fb], 1.0, rng) is (not hit)


def test_resolve_reception_draws_only_when_uncertain():
    f = data_frame(0, 1)
    rng = np.random.default_rng(3)
    assert resolve_reception(f, [], 0.0, rng) is False
    assert resolve_reception(f, [], 1.0, rng) is True
    # certain outcomes leave the stream untouched
    assert rng.bit_generator.state == np.random.default_rng(3).bit_generator.state
    hits = sum(resolve_reception(f, [], 0.3, rng) for _ in range(20000))
    assert abs(hits / 20000 - 0.3) < 4 * math.sqrt(0.3 * 0.7 / 20000)


def test_transmit_reaches_neighbours_at_airtime():
    cfg = lossless(node_count=3, mcs_index=1)
    sim = Simulator(cfg, positions=[[0, 0, 0], [100, 0, 0], [400, 0, 0]])
    end = 800 / 3e6 + 40e-6
    frame = Frame(Channel.DATA, FrameKind.TOKEN, 0, 1, 800, 0.0, end, new_token(1, 0, 3))
    events = sim.transmit(frame)
    assert [(t, k, p[1]) for t, k, p in events] == [(end, Ev.DELIVERY, 1)]
    assert end * 1e6 == pytest.approx(306.67, abs=0.005)
    assert sim.report.data.sent == 1


# ---------------------------------------------------------------- small runs
def test_two_nodes_alternate_and_share():
    trace = []
    sim = Simulator(lossless(node_count=2, sim_duration=0.003), positions=PAIR, trace=trace)
    rep = sim.run()
    rx = [line.split() for line in trace if line.split()[2] == "RX"]
    assert [r[1] for r in rx[:4]] == ["1", "0", "1", "0"]
    assert [s.cache.counter.tolist() for s in sim.nodes] == [[1, 1], [1, 1]]
    assert rep.data.corrupted == rep.data.collided == 0
    assert rep.received_packet_ratio == 1.0


def test_zero_duration_is_empty():
    rep = Simulator(ScenarioConfig(sim_duration=0.0)).run()
    assert rep.data.sent == rep.control.sent == 0
    assert rep.samples == [] and rep.sim_time == 0.0
    assert rep.throughput_bps == 0.0 and rep.mean_cache_age_s == 0.0


def test_threshold_at_min_sinr_never_corrupts():
    cfg = lossless(node_count=2, mcs_index=3, snr_db=13.0, sim_duration=0.05)
    rep = Simulator(cfg, positions=PAIR).run()
    assert rep.data.received > 50 and rep.data.corrupted == 0
    below = cfg.with_(snr_db=math.nextafter(13.0, 0.0))
    rep = Simulator(below, positions=PAIR).run()
    assert rep.data.received == 0 and rep.data.corrupted > 0


def test_failed_frames_retry_then_hold():
    cfg = lossless(node_count=2, snr_db=0.0, sim_duration=0.05)
    trace = []
    rep = Simulator(cfg, positions=PAIR, trace=trace).run()
    events = [line.split()[2] for line in trace]
    assert events.count("DROP") >= 1
    first_drop = events.index("DROP")
    assert events[:first_drop].count("RETX") == cfg.max_attempts - 1
    assert rep.retransmissions >= cfg.max_attempts - 1


def test_no_frame_outlives_the_horizon():
    sim = Simulator(lossless(node_count=4, sim_duration=0.0123), positions=[[i * 60.0, 0, 0] for i in range(4)])
    frames = []
    orig = sim.transmit
    sim.transmit = lambda f: frames.append(f) or orig(f)
    sim.run()
    assert frames and max(f.tx_end for f in frames) <= 0.0123


def test_max_data_frames_stops_early():
    rep = Simulator(lossless(node_count=2, max_data_frames=7, sim_duration=5.0), positions=PAIR).run()
    assert rep.data.resolved == 7 and rep.sim_time < 0.01


# ---------------------------------------------------------------- invariants
@given(
    st.integers(2, 8),
    st.integers(1, 4),
    st.integers(0, 10_000),
    st.booleans(),
    st.sampled_from([4.0, 10.0, 30.0]),
)
@settings(max_examples=25, deadline=None)
def test_invariants_hold_every_event(n, k, seed, cs, snr):
    cfg = ScenarioConfig(
        node_count=n, number_of_tokens=min(k, n), seed=seed, sim_duration=0.3,
        carrier_sense=cs, snr_db=snr, comm_range=250.0,
    )
    sim = Simulator(cfg, check_invariants=True)
    rep = sim.run()
    # every data frame put on air is resolved, or still on air at the horizon
    assert 0 <= rep.data.sent - rep.data.resolved <= cfg.number_of_tokens
    assert rep.data.received <= rep.data.sent
    assert 0.0 <= rep.received_packet_ratio <= 1.0
    for s in sim.nodes:
        assert s.own_counter == s.cache.counter[s.id]


def test_determinism_and_seed_sensitivity():
    cfg = ScenarioConfig(node_count=6, number_of_tokens=2, sim_duration=0.5, seed=11)
    traces = []
    for c in (cfg, cfg, cfg.with_(seed=12)):
        t = []
        Simulator(c, trace=t).run()
        traces.append(t)
    assert traces[0] == traces[1]
    assert traces[0] != traces[2]


# ---------------------------------------------------------------- cache age
class AgeObserver:
    """Integrates the mean off-diagonal entry age between consecutive events."""

    def __init__(self, n):
        self.n = n
        self.t = 0.0
        self.u = 0.0
        self.area = 0.0

    def __call__(self, sim, kind):
        self.advance(sim.now)
        self.u = sum(
            float(s.cache.updated_at.sum() - s.cache.updated_at[s.id]) for s in sim.nodes
        )

    def advance(self, t):
        pairs = self.n * (self.n - 1)
        # age(t) = t - u/pairs, piecewise linear between events
        self.area += (t * t - self.t * self.t) / 2.0 - (self.u / pairs) * (t - self.t)
        self.t = t


@pytest.mark.parametrize("tokens,seed", [(1, 0), (2, 3), (3, 8)])
def test_time_averaged_age_matches_observer(tokens, seed):
    cfg = ScenarioConfig(node_count=6, number_of_tokens=tokens, seed=seed, sim_duration=0.7)
    obs = AgeObserver(cfg.node_count)
    sim = Simulator(cfg, observer=obs)
    rep = sim.run()
    obs.advance(rep.sim_time)
    assert rep.mean_cache_age_s == pytest.approx(obs.area / rep.sim_time, rel=1e-9)


def test_isolated_nodes_age_is_half_the_horizon():
    # isolated nodes never learn anything: every off-diagonal entry stays at t=0
    cfg = lossless(node_count=2, sim_duration=0.4)
    rep = Simulator(cfg, positions=[[0, 0, 0], [400, 0, 0]]).run()
    assert rep.data.sent == 0
    assert rep.mean_cache_age_s == pytest.approx(0.2, rel=1e-12)
