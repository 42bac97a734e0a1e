"""Shared domain types: positions, location tables, tokens, frames, scenarios."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidScenarioError, ProtocolError

BROADCAST = 0xFFFF
"""Reserved destination id; never a valid UAV index."""

DEFAULT_HEADER_BITS = 128
DEFAULT_ENTRY_BITS = 96


class Position(NamedTuple):
    x: float
    y: float
    z: float


class Channel(Enum):
    DATA = "data"
    CONTROL = "control"


class FrameKind(Enum):
    TOKEN = "token"
    RTS = "rts"
    CTS = "cts"


class LinkModelKind(Enum):
    ANALYTIC_BER = "analytic"
    SINR_THRESHOLD = "threshold"


@dataclass(frozen=True)
class LocationEntry:
    uav: int
    pos: Position
    counter: int = 0
    updated_at: float = 0.0


class LocationTable:
    """One row per UAV: cached position, freshness counter, origin timestamp.

    Stored column-wise in numpy arrays so merges run through the kernels.
    """

    __slots__ = ("pos", "counter", "updated_at")

    def __init__(self, n, pos=None, counter=None, updated_at=None):
        self.pos = np.zeros((n, 3)) if pos is None else pos
        self.counter = np.zeros(n, dtype=np.int64) if counter is None else counter
        self.updated_at = np.zeros(n) if updated_at is None else updated_at

    def __len__(self):
        return self.counter.shape[0]

    def __getitem__(self, uav) -> LocationEntry:
        p = self.pos[uav]
        return LocationEntry(
            int(uav),
            Position(float(p[0]), float(p[1]), float(p[2])),
            int(self.counter[uav]),
            float(self.updated_at[uav]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def set(self, uav, pos, counter, updated_at):
        self.pos[uav] = pos
        self.counter[uav] = counter
        self.updated_at[uav] = updated_at

    def copy(self) -> "LocationTable":
        return LocationTable(
            len(self), self.pos.copy(), self.counter.copy(), self.updated_at.copy()
        )

    def __eq__(self, other):
        if not isinstance(other, LocationTable):
            return NotImplemented
        return (
            np.array_equal(self.pos, other.pos)
            and np.array_equal(self.counter, other.counter)
            and np.array_equal(self.updated_at, other.updated_at)
        )

    def __repr__(self):
        return f"LocationTable(counters={self.counter.tolist()})"

    @classmethod
    def from_entries(cls, entries) -> "LocationTable":
        entries = list(entries)
        t = cls(len(entries))
        for i, e in enumerate(entries):
            if e.uav != i:
                raise ProtocolError(f"entry {i} is for UAV {e.uav}")
            t.set(i, e.pos, e.counter, e.updated_at)
        return t


@dataclass(eq=False)
class Token:
    token_id: int
    source: Optional[int]
    destination: Optional[int]
    table: LocationTable
    hop_count: int = 0

    @property
    def node_count(self):
        return len(self.table)

    def copy(self) -> "Token":
        return Token(self.token_id, self.source, self.destination, self.table.copy(), self.hop_count)

    def __eq__(self, other):
        if not isinstance(other, Token):
            return NotImplemented
        return (
            self.token_id == other.token_id
            and self.source == other.source
            and self.destination == other.destination
            and self.hop_count == other.hop_count
            and self.table == other.table
        )


@dataclass(eq=False)
class Frame:
    channel: Channel
    kind: FrameKind
    src: int
    dst: int
    payload_bits: int
    tx_start: float
    tx_end: float
    token: Optional[Token] = None
    frame_id: int = 0
    attempt: int = 1
    # RTS/CTS only: start of the announced exchange and end of its data frame
    exchange_start: float = 0.0
    reserve_until: float = 0.0
    # random tie-break between exchanges that start at the same instant
    contention: float = 0.0

    def __post_init__(self):
        if (self.kind is FrameKind.TOKEN) != (self.channel is Channel.DATA):
            raise ProtocolError(f"{self.kind.name} frame cannot use the {self.channel.name} channel")
        if (self.token is not None) != (self.kind is FrameKind.TOKEN):
            raise ProtocolError("a token is carried by TOKEN frames only")
        if not self.tx_end > self.tx_start:
            raise ProtocolError("tx_end must be after tx_start")
        if self.payload_bits <= 0:
            raise ProtocolError("payload_bits must be positive")


def new_token(token_id, holder, node_count, pos=(0.0, 0.0, 0.0), now=0.0) -> Token:
    if node_count < 2:
        raise InvalidScenarioError(f"need at least 2 UAVs, got {node_count}")
    if token_id < 1:
        raise InvalidScenarioError(f"token ids start at 1, got {token_id}")
    if not 0 <= holder < node_count:
        raise InvalidScenarioError(f"holder {holder} outside 0..{node_count - 1}")
    table = LocationTable(node_count)
    table.set(holder, pos, 1, now)
    return Token(token_id, None, None, table, 0)


def token_length_bits(token, header_bits=DEFAULT_HEADER_BITS, entry_bits=DEFAULT_ENTRY_BITS) -> int:
    n = token if isinstance(token, int) else token.node_count
    return header_bits + n * entry_bits


# --------------------------------------------------------------------------
# wire format (default widths only)
#
#   header, 16 bytes, big endian:
#     u8 version | u16 token_id | u16 source | u16 destination
#     u16 node_count | u32 hop_count | 3 bytes reserved (zero)
#   entry, 12 bytes:
#     u8 uav | u16 counter | 3 x s24 coordinate in 1/256 m
#
# An unset source/destination is sent as BROADCAST. updated_at is simulator
# bookkeeping and is not carried; decoded entries get 0.0.
# --------------------------------------------------------------------------
WIRE_VERSION = 1
COORD_SCALE = 256.0
_COORD_MAX = (1 << 23) - 1
_HEADER = struct.Struct(">BHHHHI3x")
_ENTRY_HEAD = struct.Struct(">BH")


def quantize_coord(v) -> float:
    q = round(v * COORD_SCALE)
    if not -_COORD_MAX - 1 <= q <= _COORD_MAX:
        raise ProtocolError(f"coordinate {v} outside the 24-bit wire range")
    return q / COORD_SCALE


def encode_token(token: Token) -> bytes:
    n = token.node_count
    if n > 0xFF:
        raise ProtocolError("wire format holds at most 255 UAVs")
    src = BROADCAST if token.source is None else token.source
    dst = BROADCAST if token.destination is None else token.destination
    out = bytearray(_HEADER.pack(WIRE_VERSION, token.token_id, src, dst, n, token.hop_count))
    for i in range(n):
        c = int(token.table.counter[i])
        if c > 0xFFFF:
            raise ProtocolError(f"counter {c} exceeds 16 bits")
        out += _ENTRY_HEAD.pack(i, c)
        for v in token.table.pos[i]:
            q = round(quantize_coord(float(v)) * COORD_SCALE)
            out += (q & 0xFFFFFF).to_bytes(3, "big")
    return bytes(out)


def decode_token(data: bytes) -> Token:
    if len(data) < _HEADER.size:
        raise ProtocolError("truncated token header")
    version, tid, src, dst, n, hops = _HEADER.unpack_from(data, 0)
    if version != WIRE_VERSION:
        raise ProtocolError(f"unknown wire version {version}")
    if len(data) != _HEADER.size + 12 * n:
        raise ProtocolError(f"table length mismatch: header says {n} entries")
    table = LocationTable(n)
    off = _HEADER.size
    for i in range(n):
        uav, c = _ENTRY_HEAD.unpack_from(data, off)
        if uav != i:
            raise ProtocolError(f"entry {i} carries UAV id {uav}")
        off += 3
        xyz = []
        for _ in range(3):
            q = int.from_bytes(data[off:off + 3], "big")
            if q & 0x800000:
                q -= 1 << 24
            xyz.append(q / COORD_SCALE)
            off += 3
        table.set(i, xyz, c, 0.0)
    return Token(
        tid,
        None if src == BROADCAST else src,
        None if dst == BROADCAST else dst,
        table,
        hops,
    )


# --------------------------------------------------------------------------
# scenario
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Arena:
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (500.0, 500.0, 100.0)

    @property
    def diagonal(self) -> float:
        return math.dist(self.lo, self.hi)

    def contains(self, p) -> bool:
        return all(a <= v <= b for a, v, b in zip(self.lo, p, self.hi))


@dataclass(frozen=True)
class MobilityConfig:
    v_max: float = 10.0
    step_interval: float = 0.1


@dataclass(frozen=True)
class ScenarioConfig:
    node_count: int = 10
    arena: Arena = field(default_factory=Arena)
    comm_range: float = 150.0
    mcs_index: int = 1
    snr_db: float = 20.0
    link_model: LinkModelKind = LinkModelKind.ANALYTIC_BER
    pdu_payload_bits: int = 512
    number_of_tokens: int = 1
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    seed: int = 0
    sim_duration: float = 10.0
    # None: twice the airtime of a token frame
    control_busy_window: Optional[float] = None
    header_bits: int = DEFAULT_HEADER_BITS
    entry_bits: int = DEFAULT_ENTRY_BITS
    control_bits: int = 160
    preamble_us: float = 40.0
    max_attempts: int = 8
    sample_interval: float = 0.1
    # None: one mobility step
    hold_interval: Optional[float] = None
    # stop early once this many addressed data frames have been resolved
    max_data_frames: Optional[int] = None
    # defer to exchanges announced by overheard RTS/CTS (NAV)
    carrier_sense: bool = True

    def __post_init__(self):
        if isinstance(self.link_model, str):
            object.__setattr__(self, "link_model", LinkModelKind(self.link_model))
        self.validate()

    def validate(self):
        def bad(msg):
            raise InvalidScenarioError(msg)

        if self.node_count < 2:
            bad(f"node_count must be >= 2, got {self.node_count}")
        if self.node_count >= BROADCAST:
            bad("node_count collides with the broadcast address")
        if not 1 <= self.mcs_index <= 8:
            bad(f"mcs_index must be in 1..8, got {self.mcs_index}")
        if not self.comm_range > 0:
            bad("comm_range must be > 0")
        if not math.isfinite(self.snr_db):
            bad("snr_db must be finite")
        if self.pdu_payload_bits < 1:
            bad("pdu_payload_bits must be positive")
        if not 1 <= self.number_of_tokens <= self.node_count:
            bad(
                f"number_of_tokens must be in 1..node_count ({self.node_count}), "
                f"got {self.number_of_tokens}"
            )
        if self.mobility.v_max < 0:
            bad("v_max must be >= 0")
        if not self.mobility.step_interval > 0:
            bad("step_interval must be > 0")
        if not self.sim_duration >= 0 or not math.isfinite(self.sim_duration):
            bad("sim_duration must be finite and >= 0")
        if self.control_busy_window is not None and self.control_busy_window < 0:
            bad("control_busy_window must be >= 0")
        if self.header_bits <= 0 or self.entry_bits <= 0 or self.control_bits <= 0:
            bad("frame field widths must be positive")
        if self.preamble_us < 0:
            bad("preamble_us must be >= 0")
        if self.max_attempts < 1:
            bad("max_attempts must be >= 1")
        if not self.sample_interval > 0:
            bad("sample_interval must be > 0")
        if self.hold_interval is not None and not self.hold_interval > 0:
            bad("hold_interval must be > 0")
        if self.max_data_frames is not None and self.max_data_frames < 1:
            bad("max_data_frames must be >= 1")
        if not 0 <= self.seed < 2**64:
            bad("seed must be a 64-bit unsigned integer")
        lo, hi = self.arena.lo, self.arena.hi
        if len(lo) != 3 or len(hi) != 3 or any(b < a for a, b in zip(lo, hi)):
            bad("arena must be an axis-aligned box with lo <= hi")

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    @property
    def token_bits(self) -> int:
        return token_length_bits(self.node_count, self.header_bits, self.entry_bits)

    @property
    def data_frame_bits(self) -> int:
        """Token table plus the application PDU carried with it."""
        return self.token_bits + self.pdu_payload_bits


def initial_holder(token_id, node_count, number_of_tokens) -> int:
    """Spread tokens evenly over node indices."""
    return (token_id - 1) * node_count // number_of_tokens
