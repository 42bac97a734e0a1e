"""Deterministic discrete-event core.

Events are processed in ``(time, seq)`` order. ``seq`` is a global counter
assigned at scheduling time, so a scenario and seed fully determine the run.

A token forward is a three frame exchange with zero gaps: the holder sends RTS
on the control channel, the target answers CTS, then the holder sends the
token frame on the data channel. Control frames are never lost. Data frames
that overlap in time at a receiver destroy each other; otherwise they survive
with the link model's frame success probability. A failed token frame is
retried by its sender after one airtime plus jitter, up to ``max_attempts``
times, after which the token goes back to the sender's held set.

With ``carrier_sense`` on, RTS and CTS announce when the exchange ends.
Overhearers do not start a handshake before then, a reserved target does not
answer, and an initiator that heard an earlier exchange still on air gives up
its slot at data start. A missing CTS times out after three control airtimes.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from enum import IntEnum

import numpy as np

from . import phy
from .errors import ProtocolError
from .metrics import RunReport, Sample, location_error
from .mobility import AdjacencyMatrix, build_adjacency, find_neighbours, step_mobility
from .model import Channel, Frame, FrameKind, ScenarioConfig, initial_holder, new_token
from .protocol import (
    ActionKind,
    UavState,
    on_receive_frame,
    release_reservation,
    retry_held_tokens,
    update_own_entry,
    yields_to,
)

PURPOSES = {"mobility": 0, "loss": 1, "protocol": 2}


def rng_stream(seed, node, purpose) -> np.random.Generator:
    """Independent reproducible stream for one ``(node, purpose)`` pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(node), PURPOSES[purpose]))
    return np.random.Generator(np.random.PCG64(ss))


class Ev(IntEnum):
    END = 0
    TX_START = 1
    DELIVERY = 2
    MOBILITY = 3
    SELF_UPDATE = 4
    RETRY_HELD = 5
    RETRANSMIT = 6
    SAMPLE = 7
    CTS_TIMEOUT = 8


def frames_overlap(a, b) -> bool:
    return a.tx_start < b.tx_end and b.tx_start < a.tx_end


def resolve_reception(frame, overlapping, success_probability, rng) -> bool:
    """Collision first, then a Bernoulli draw against the success probability.

    ``overlapping`` holds the other data frames heard by this receiver. The
    draw is skipped when the outcome is certain.
    """
    if any(o is not frame and frames_overlap(frame, o) for o in overlapping):
        return False
    if success_probability >= 1.0:
        return True
    if success_probability <= 0.0:
        return False
    return rng.random() < success_probability


class Simulator:
    """One scenario, one engine.

    ``positions`` fixes the initial positions instead of drawing them;
    ``topology`` replaces the range-derived adjacency with a fixed graph
    (static scenarios only). ``trace`` and ``position_trace`` are lists that
    receive text lines. ``observer(sim, kind)`` runs after every event.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        *,
        mcs_table=None,
        positions=None,
        topology=None,
        trace=None,
        position_trace=None,
        check_invariants=False,
        observer=None,
    ):
        config.validate()
        self.cfg = cfg = config
        n = cfg.node_count
        self.mcs = phy.mcs_lookup(cfg.mcs_index, mcs_table)
        self.link = phy.LinkModel(cfg.link_model, cfg.preamble_us)
        self.data_airtime = phy.frame_airtime(cfg.data_frame_bits, self.mcs, self.link)
        self.ctrl_airtime = phy.frame_airtime(cfg.control_bits, self.mcs, self.link)
        self.busy_window = (
            2.0 * self.data_airtime if cfg.control_busy_window is None else cfg.control_busy_window
        )
        self.hold_interval = cfg.hold_interval or cfg.mobility.step_interval
        self.p_data = phy.frame_success_probability(
            cfg.snr_db, self.mcs, cfg.data_frame_bits, self.link
        )

        self.rng_mobility = [rng_stream(cfg.seed, i, "mobility") for i in range(n)]
        self.rng_loss = [rng_stream(cfg.seed, i, "loss") for i in range(n)]
        self.rng_protocol = [rng_stream(cfg.seed, i, "protocol") for i in range(n)]

        if positions is None:
            lo = np.asarray(cfg.arena.lo, dtype=float)
            hi = np.asarray(cfg.arena.hi, dtype=float)
            positions = np.stack([lo + g.random(3) * (hi - lo) for g in self.rng_mobility])
        self.positions = np.array(positions, dtype=float).reshape(n, 3)

        if topology is not None:
            if cfg.mobility.v_max != 0:
                raise ValueError("a fixed topology requires v_max == 0")
            if not isinstance(topology, AdjacencyMatrix):
                topology = AdjacencyMatrix(np.asarray(topology, dtype=bool))
            if topology.n != n:
                raise ValueError("topology size does not match node_count")
        self.topology = topology
        self._adj = topology
        self._nbrs = [None] * n

        self.nodes = [UavState.initial(i, n, self.positions[i]) for i in range(n)]
        self.report = RunReport()
        self.trace = trace
        self.position_trace = position_trace
        self.check_invariants = check_invariants
        self.observer = observer

        self.now = 0.0
        self._queue = []
        self._seq = 0
        self._last_key = (-math.inf, -1)
        self._frame_ids = 0
        self._records = [[] for _ in range(n)]
        self._outbox = [deque() for _ in range(n)]
        self._radio_busy = [False] * n
        self._handshake = [None] * n
        self._retry_at = [math.inf] * n
        self.in_flight = {}
        self._done = False
        self._started = False
        self._prev_counters = None
        # exact time integral of the summed off-diagonal entry timestamps
        self._u_rows = np.zeros(n)
        self._u_total = 0.0
        self._u_integral = 0.0
        self._u_since = 0.0

    # ------------------------------------------------------------------
    # scheduling
    # ------------------------------------------------------------------
    def _schedule(self, time, kind, payload=None):
        if time < self.now:
            raise RuntimeError(f"causality violation: {time} < {self.now}")
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, kind, payload))

    def _trace(self, node, event, token_id=None, peer=None):
        if self.trace is None:
            return
        ctr = ",".join(map(str, self.nodes[node].cache.counter.tolist()))
        tok = "-" if token_id is None else token_id
        pr = "-" if peer is None else peer
        self.trace.append(f"{self.now!r} {node} {event} {tok} {pr} {ctr}")

    # ------------------------------------------------------------------
    # topology
    # ------------------------------------------------------------------
    def adjacency(self) -> AdjacencyMatrix:
        if self._adj is None:
            self._adj = build_adjacency(self.positions, self.cfg.comm_range)
            self._nbrs = [None] * self.cfg.node_count
        return self._adj

    def neighbours(self, uav) -> frozenset:
        nb = self._nbrs[uav]
        if nb is None or self._adj is None:
            nb = find_neighbours(self.adjacency(), uav)
            self._nbrs[uav] = nb
        return nb

    # ------------------------------------------------------------------
    # main loop
    # ------------------------------------------------------------------
    def _start(self):
        cfg = self.cfg
        self._started = True
        for st in self.nodes:
            update_own_entry(st, 0.0)
            self._trace(st.id, "SELF")
        self._log_positions()
        for tid in range(1, cfg.number_of_tokens + 1):
            holder = initial_holder(tid, cfg.node_count, cfg.number_of_tokens)
            st = self.nodes[holder]
            tok = new_token(tid, holder, cfg.node_count, st.true_pos, 0.0)
            st.hold(tok)
        self._schedule(cfg.sim_duration, Ev.END)
        if cfg.sim_duration <= 0:
            return
        if cfg.mobility.step_interval <= cfg.sim_duration:
            self._schedule(cfg.mobility.step_interval, Ev.MOBILITY)
        if cfg.sample_interval <= cfg.sim_duration:
            self._schedule(cfg.sample_interval, Ev.SAMPLE)
        for st in self.nodes:
            if st.held_tokens:
                self._request_retry(st.id, 0.0)

    def run(self) -> RunReport:
        if not self._started:
            self._start()
        handlers = {
            Ev.TX_START: self._on_tx_start,
            Ev.DELIVERY: self._on_delivery,
            Ev.MOBILITY: self._on_mobility,
            Ev.SELF_UPDATE: self._on_self_update,
            Ev.RETRY_HELD: self._on_retry_held,
            Ev.RETRANSMIT: self._on_retransmit,
            Ev.SAMPLE: self._on_sample,
            Ev.CTS_TIMEOUT: self._on_cts_timeout,
        }
        while self._queue and not self._done:
            time, seq, kind, payload = heapq.heappop(self._queue)
            if (time, seq) <= self._last_key:
                raise RuntimeError("event processed out of order")
            self._last_key = (time, seq)
            self.now = time
            if kind is Ev.END:
                self._done = True
            else:
                handlers[kind](payload)
            if self.check_invariants:
                self.assert_invariants()
            if self.observer is not None:
                self.observer(self, kind)
        self.report.sim_time = self.now if self._done else self.cfg.sim_duration
        self.now = self.report.sim_time
        self.report.time_avg_cache_age_s = self.time_averaged_cache_age()
        if self.cfg.sim_duration > 0 and not self.report.samples:
            self._on_sample(None, reschedule=False)
        return self.report

    # ------------------------------------------------------------------
    # token send pipeline
    # ------------------------------------------------------------------
    def _apply_actions(self, uav, actions):
        for act in actions:
            if act.kind is ActionKind.SEND_TOKEN:
                self.in_flight[act.token.token_id] = uav
                self._outbox[uav].append((act.target, act.token, 1))
                self.report.forwards += 1
                self._trace(uav, "SEND", act.token.token_id, act.target)
            elif act.kind is ActionKind.HOLD_TOKEN:
                self._trace(uav, "HOLD", act.token.token_id)
                self._request_retry(uav)
            elif act.kind is ActionKind.SEND_CTS:
                self._send_cts(uav, act.target)
        self._pump(uav)

    def _pump(self, uav):
        while not self._radio_busy[uav] and self._outbox[uav]:
            target, token, attempt = self._outbox[uav].popleft()
            self._begin_handshake(uav, target, token, attempt)

    def _return_to_held(self, uav, token):
        del self.in_flight[token.token_id]
        self.nodes[uav].hold(token)
        self._trace(uav, "HOLD", token.token_id)
        self._request_retry(uav, self.now)

    def _begin_handshake(self, uav, target, token, attempt):
        if target not in self.neighbours(uav):
            self._return_to_held(uav, token)
            return
        st = self.nodes[uav]
        if self.cfg.carrier_sense and st.nav_until > self.now:
            del self.in_flight[token.token_id]
            st.hold(token)
            self._trace(uav, "DEFER", token.token_id, target)
            self._request_retry(uav, st.nav_until)
            return
        self._radio_busy[uav] = True
        draw = self.rng_protocol[uav].random() if self.cfg.carrier_sense else 0.0
        self._handshake[uav] = [target, token, attempt, self.now, "rts", draw]
        self._transmit_now(
            Channel.CONTROL, FrameKind.RTS, uav, target, self.cfg.control_bits,
            reserve=self._exchange_end(self.now), contention=draw,
        )
        if self.cfg.carrier_sense:
            self._schedule(self.now + 3.0 * self.ctrl_airtime, Ev.CTS_TIMEOUT, (uav, self.now))

    def _send_cts(self, uav, initiator):
        hs = self._handshake[initiator]
        if hs is None or hs[0] != uav:
            return
        if initiator not in self.neighbours(uav):
            self._abort_handshake(initiator)
            return
        start = hs[3]
        self._transmit_now(
            Channel.CONTROL, FrameKind.CTS, uav, initiator, self.cfg.control_bits,
            start=start, reserve=self._exchange_end(start), contention=hs[5],
        )

    def _exchange_end(self, start):
        # same summation order as the event chain, so the times match exactly
        return start + self.ctrl_airtime + self.ctrl_airtime + self.data_airtime

    def _on_cts_timeout(self, payload):
        uav, start = payload
        hs = self._handshake[uav]
        if hs is None or hs[3] != start or hs[4] != "rts":
            return
        self._trace(uav, "NO_CTS", hs[1].token_id, hs[0])
        # random backoff so that contending initiators fall out of step
        backoff = self.rng_protocol[uav].random() * self.data_airtime
        self._abort_handshake(uav, self.now + backoff)

    def _abort_handshake(self, uav, retry_at=None):
        target, token, _, start = self._handshake[uav][:4]
        self._handshake[uav] = None
        self._radio_busy[uav] = False
        if self.cfg.carrier_sense:
            # the announced exchange will not happen: listeners drop it
            for r in self.neighbours(uav) | self.neighbours(target) | {target}:
                if r != uav and release_reservation(self.nodes[r], uav, start):
                    if self.nodes[r].held_tokens:
                        self._request_retry(r, self.now)
        del self.in_flight[token.token_id]
        self.nodes[uav].hold(token)
        self._trace(uav, "HOLD", token.token_id)
        self._request_retry(uav, self.now if retry_at is None else retry_at)
        self._pump(uav)

    def _on_cts_at_initiator(self, uav, frame):
        hs = self._handshake[uav]
        if hs is None or hs[0] != frame.src:
            return
        target, token, attempt, start, _, draw = hs
        if target not in self.neighbours(uav):
            self._abort_handshake(uav)
            return
        if self.cfg.carrier_sense and yields_to(self.nodes[uav], start, draw, self.now):
            self._trace(uav, "YIELD", token.token_id, target)
            self._abort_handshake(uav)
            return
        hs[4] = "data"
        self._transmit_now(
            Channel.DATA, FrameKind.TOKEN, uav, target, self.cfg.data_frame_bits, token, attempt
        )

    def _transmit_now(
        self, channel, kind, src, dst, bits, token=None, attempt=1, start=None, reserve=0.0,
        contention=0.0,
    ):
        airtime = self.data_airtime if channel is Channel.DATA else self.ctrl_airtime
        end = self.now + airtime
        if end > self.cfg.sim_duration:
            # cannot complete before the horizon; never put on air
            return None
        if not self.cfg.carrier_sense:
            reserve = 0.0
        self._frame_ids += 1
        frame = Frame(
            channel, kind, src, dst, bits, self.now, end, token, self._frame_ids, attempt,
            exchange_start=self.now if start is None else start, reserve_until=reserve,
            contention=contention,
        )
        for ev in self.transmit(frame):
            self._schedule(*ev)
        return frame

    def transmit(self, frame):
        """Put ``frame`` on air from its sender; returns the delivery events.

        Every node in range of the sender at ``tx_start`` gets a delivery at
        ``tx_end``; the destination check happens at the receiver.
        """
        if frame.tx_start != self.now:
            raise RuntimeError("frames start at the current simulation time")
        counters = self.report.data if frame.channel is Channel.DATA else self.report.control
        counters.sent += 1
        self._trace(frame.src, "TX_" + frame.kind.name, frame.token.token_id if frame.token else None, frame.dst)
        receivers = sorted(self.neighbours(frame.src))
        if frame.channel is Channel.DATA:
            for r in receivers:
                self._records[r].append(frame)
        return [(frame.tx_end, Ev.DELIVERY, (frame, r)) for r in receivers]

    def _on_tx_start(self, payload):
        frame = payload
        for ev in self.transmit(frame):
            self._schedule(*ev)

    # ------------------------------------------------------------------
    # reception
    # ------------------------------------------------------------------
    def _on_delivery(self, payload):
        frame, rx = payload
        if frame.channel is Channel.CONTROL:
            self._on_control_delivery(frame, rx)
        else:
            self._on_data_delivery(frame, rx)

    def _on_control_delivery(self, frame, rx):
        st = self.nodes[rx]
        if rx == frame.dst:
            self.report.control.received += 1
            if self.cfg.carrier_sense and frame.kind is FrameKind.RTS and self._radio_busy[rx]:
                hs = self._handshake[rx]
                mine = (hs[3], hs[5], rx) if hs is not None else None
                theirs = (frame.exchange_start, frame.contention, frame.src)
                if hs is None or hs[4] != "rts" or mine < theirs:
                    # own exchange in progress: no CTS
                    return
                # crossing RTS from an earlier initiator: give way and answer
                self._trace(rx, "YIELD", hs[1].token_id, hs[0])
                self._abort_handshake(rx)
        else:
            self.report.control.overheard += 1
        _, actions = on_receive_frame(st, frame, True, self.now, busy_window=self.busy_window)
        if frame.kind is FrameKind.CTS and rx == frame.dst:
            self._on_cts_at_initiator(rx, frame)
        if actions:
            self._apply_actions(rx, actions)

    def _on_data_delivery(self, frame, rx):
        recs = self._records[rx]
        horizon = self.now - 2.0 * self.data_airtime
        if recs and recs[0].tx_end <= horizon:
            recs[:] = [f for f in recs if f.tx_end > horizon]
        collided = any(o is not frame and frames_overlap(frame, o) for o in recs)
        if collided:
            ok = False
        else:
            ok = resolve_reception(frame, (), self.p_data, self.rng_loss[rx])
        addressed = rx == frame.dst
        st = self.nodes[rx]
        tid = frame.token.token_id
        c = self.report.data
        actions = []
        if ok:
            try:
                _, actions = on_receive_frame(
                    st, frame, True, self.now, self.neighbours(rx), self.busy_window
                )
            except ProtocolError:
                c.malformed += 1
                ok = False
                collided = False
        if ok:
            self._touch_cache(rx)
        if not addressed:
            if ok:
                c.overheard += 1
                self._trace(rx, "OVERHEAR", tid, frame.src)
            return

        if ok:
            c.received += 1
            self.report.payload_bits_delivered += frame.payload_bits
            del self.in_flight[tid]
            self._trace(rx, "RX", tid, frame.src)
            self._finish_send(frame.src)
            self._apply_actions(rx, actions)
        else:
            if collided:
                c.collided += 1
                self._trace(rx, "COLLIDE", tid, frame.src)
            else:
                c.corrupted += 1
                self._trace(rx, "CORRUPT", tid, frame.src)
            self._on_send_failed(frame)
        if self.cfg.max_data_frames is not None and c.resolved >= self.cfg.max_data_frames:
            self._done = True

    def _touch_cache(self, uav):
        t = self.nodes[uav].cache.updated_at
        row = float(t.sum() - t[uav])
        old = self._u_rows[uav]
        if row != old:
            self._u_integral += self._u_total * (self.now - self._u_since)
            self._u_since = self.now
            self._u_rows[uav] = row
            self._u_total = float(self._u_rows.sum())

    def time_averaged_cache_age(self) -> float:
        """Mean over ordered pairs and over [0, now] of cache entry age."""
        if self.now <= 0:
            return 0.0
        n = self.cfg.node_count
        integral = self._u_integral + self._u_total * (self.now - self._u_since)
        return self.now / 2.0 - integral / (n * (n - 1) * self.now)

    def _finish_send(self, uav):
        self._handshake[uav] = None
        self._radio_busy[uav] = False
        self._pump(uav)

    def _on_send_failed(self, frame):
        uav = frame.src
        self._handshake[uav] = None
        if frame.attempt < self.cfg.max_attempts:
            jitter = self.rng_loss[uav].random() * frame.attempt * self.data_airtime
            self._schedule(
                self.now + self.data_airtime + jitter,
                Ev.RETRANSMIT,
                (uav, frame.dst, frame.token, frame.attempt + 1),
            )
            return
        self._radio_busy[uav] = False
        self._trace(uav, "DROP", frame.token.token_id, frame.dst)
        self._return_to_held(uav, frame.token)
        self._pump(uav)

    def _on_retransmit(self, payload):
        uav, target, token, attempt = payload
        self.report.retransmissions += 1
        self._trace(uav, "RETX", token.token_id, target)
        self._radio_busy[uav] = False
        self._begin_handshake(uav, target, token, attempt)
        self._pump(uav)

    # ------------------------------------------------------------------
    # held tokens
    # ------------------------------------------------------------------
    def _request_retry(self, uav, at=None):
        if at is None:
            st = self.nodes[uav]
            busy = [
                st.busy_neighbors[u]
                for u in self.neighbours(uav)
                if st.busy_neighbors.get(u, -math.inf) > self.now
            ]
            at = min(busy) if busy else self.now + self.hold_interval
        if at > self.cfg.sim_duration:
            return
        if self._retry_at[uav] <= at and self._retry_at[uav] >= self.now:
            return
        self._retry_at[uav] = at
        self._schedule(at, Ev.RETRY_HELD, uav)

    def _on_retry_held(self, uav):
        if self._retry_at[uav] == self.now:
            self._retry_at[uav] = math.inf
        st = self.nodes[uav]
        if not st.held_tokens:
            return
        _, actions = retry_held_tokens(st, self.neighbours(uav), self.now)
        self._apply_actions(uav, actions)
        if st.held_tokens:
            self._request_retry(uav)

    # ------------------------------------------------------------------
    # mobility, self updates, sampling
    # ------------------------------------------------------------------
    def _on_mobility(self, _):
        cfg = self.cfg
        if cfg.mobility.v_max > 0:
            self.positions = step_mobility(
                self.positions, cfg.mobility, cfg.arena, self.rng_mobility
            )
            for st in self.nodes:
                st.true_pos = self.positions[st.id].copy()
            if self.topology is None:
                self._adj = None
        self._log_positions()
        for st in self.nodes:
            self._schedule(self.now, Ev.SELF_UPDATE, st.id)
        for st in self.nodes:
            if st.held_tokens:
                self._request_retry(st.id, self.now)
        nxt = self.now + cfg.mobility.step_interval
        if nxt <= cfg.sim_duration:
            self._schedule(nxt, Ev.MOBILITY)

    def _on_self_update(self, uav):
        update_own_entry(self.nodes[uav], self.now)
        self._trace(uav, "SELF")

    def _on_sample(self, _, reschedule=True):
        err, age = location_error(self.nodes, self.now, self.cfg.arena.diagonal)
        c = self.report.data
        self.report.samples.append(
            Sample(self.now, c.sent, c.received, self.report.payload_bits_delivered, err, age)
        )
        if reschedule:
            nxt = self.now + self.cfg.sample_interval
            if nxt <= self.cfg.sim_duration:
                self._schedule(nxt, Ev.SAMPLE)

    def _log_positions(self):
        if self.position_trace is None:
            return
        for i, p in enumerate(self.positions):
            self.position_trace.append(f"{self.now!r} {i} {p[0]!r} {p[1]!r} {p[2]!r}")

    # ------------------------------------------------------------------
    # invariants
    # ------------------------------------------------------------------
    def token_locations(self) -> dict:
        """token id -> list of places it currently occupies."""
        where = {}
        for st in self.nodes:
            for tid in st.held_tokens:
                where.setdefault(tid, []).append(("held", st.id))
        for tid, uav in self.in_flight.items():
            where.setdefault(tid, []).append(("flight", uav))
        return where

    def assert_invariants(self):
        k = self.cfg.number_of_tokens
        where = self.token_locations()
        if set(where) != set(range(1, k + 1)):
            raise AssertionError(f"token set changed: {sorted(where)}")
        for tid, places in where.items():
            if len(places) != 1:
                raise AssertionError(f"token {tid} duplicated: {places}")
        counters = np.stack([st.cache.counter for st in self.nodes])
        own = np.array([st.own_counter for st in self.nodes])
        if (counters > own[None, :]).any():
            raise AssertionError("a cache is ahead of the owner's counter")
        if self._prev_counters is not None and (counters < self._prev_counters).any():
            raise AssertionError("a cache counter decreased")
        self._prev_counters = counters


def run(scenario, **kwargs) -> RunReport:
    return Simulator(scenario, **kwargs).run()
