"""802.11p MCS table, AWGN bit error rates, frame success and airtime."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

from . import kernels
from .errors import ConfigError, DomainError, UnknownMcsError
from .model import LinkModelKind


class Modulation(Enum):
    BPSK = ("BPSK", 2)
    QPSK = ("QPSK", 4)
    QAM16 = ("16QAM", 16)
    QAM64 = ("64QAM", 64)

    def __init__(self, label, order):
        self.label = label
        self.order = order

    @classmethod
    def parse(cls, text):
        key = text.strip().upper().replace("-", "")
        for m in cls:
            if key in (m.label, m.name, m.label[2:] + m.label[:2]):
                return m
        raise ValueError(f"unknown modulation {text!r}")


@dataclass(frozen=True)
class McsProfile:
    index: int
    modulation: Modulation
    coding_rate: Fraction
    data_rate_mbps: float
    min_sinr_db: float
    range_m: float
    reference_duration_us: float


# IEEE 802.11p, 10 MHz channel
_TABLE_ROWS = [
    (1, Modulation.BPSK, Fraction(1, 2), 3.0, 10.0, 223, 848),
    (2, Modulation.BPSK, Fraction(3, 4), 4.5, 11.0, 210, 584),
    (3, Modulation.QPSK, Fraction(1, 2), 6.0, 13.0, 188, 448),
    (4, Modulation.QPSK, Fraction(3, 4), 9.0, 15.0, 167, 312),
    (5, Modulation.QAM16, Fraction(1, 2), 12.0, 18.0, 141, 248),
    (6, Modulation.QAM16, Fraction(3, 4), 18.0, 22.0, 112, 176),
    (7, Modulation.QAM64, Fraction(1, 2), 24.0, 26.0, 89, 144),
    (8, Modulation.QAM64, Fraction(3, 4), 27.0, 27.0, 84, 136),
]

MCS_TABLE = {r[0]: McsProfile(*r) for r in _TABLE_ROWS}


def mcs_lookup(index, table=None) -> McsProfile:
    table = MCS_TABLE if table is None else table
    try:
        return table[index]
    except KeyError:
        raise UnknownMcsError(
            f"unknown MCS index {index!r}; valid indices are {min(table)}..{max(table)}"
        ) from None


def format_mcs_table(table=None) -> str:
    """Render a table in the text format read by ``load_mcs_table``."""
    table = MCS_TABLE if table is None else table
    lines = ["# mcs modulation coding_rate rate_mbps min_sinr_db range_m duration"]
    for p in table.values():
        lines.append(
            f"{p.index} {p.modulation.label} {p.coding_rate} {p.data_rate_mbps:g} "
            f"{p.min_sinr_db:.1f} {p.range_m:g} {p.reference_duration_us:g}"
        )
    return "\n".join(lines) + "\n"


def parse_mcs_table(text) -> dict:
    rows = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 7:
            raise ConfigError(f"expected 7 columns, got {len(parts)}", line=lineno)
        try:
            prof = McsProfile(
                int(parts[0]),
                Modulation.parse(parts[1]),
                Fraction(parts[2]),
                float(parts[3]),
                float(parts[4]),
                float(parts[5]),
                float(parts[6]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno) from None
        if prof.index in rows:
            raise ConfigError(f"duplicate MCS index {prof.index}", line=lineno)
        rows[prof.index] = prof
    if not rows:
        raise ConfigError("empty MCS table")
    return dict(sorted(rows.items()))


def load_mcs_table(path) -> dict:
    return parse_mcs_table(Path(path).read_text())


# --------------------------------------------------------------------------
# bit error rates
# --------------------------------------------------------------------------
def db_to_linear(snr_db):
    return 10.0 ** (snr_db / 10.0)


def qfunc(x):
    """Gaussian tail probability P(N(0,1) > x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def bit_error_rate(snr_linear, modulation) -> float:
    """Uncoded Gray-mapped AWGN bit error rate.

    BPSK and QPSK use Q(sqrt(2 snr)); square M-QAM uses the nearest-neighbour
    approximation (4/log2 M)(1 - 1/sqrt M) Q(sqrt(3 snr / (M - 1))).
    """
    if math.isnan(snr_linear) or snr_linear < 0:
        raise DomainError(f"linear SNR must be >= 0, got {snr_linear}")
    if math.isinf(snr_linear):
        return 0.0
    if modulation in (Modulation.BPSK, Modulation.QPSK):
        return qfunc(math.sqrt(2.0 * snr_linear))
    m = modulation.order
    k = math.log2(m)
    ber = (4.0 / k) * (1.0 - 1.0 / math.sqrt(m)) * qfunc(math.sqrt(3.0 * snr_linear / (m - 1)))
    return min(ber, 1.0)


@dataclass(frozen=True)
class LinkModel:
    kind: LinkModelKind = LinkModelKind.ANALYTIC_BER
    preamble_us: float = 40.0

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", LinkModelKind(self.kind))
        if self.preamble_us < 0:
            raise DomainError("preamble_us must be >= 0")


def frame_success_probability(snr_db, mcs, length_bits, model) -> float:
    if length_bits < 1:
        raise DomainError("length_bits must be >= 1")
    if model.kind is LinkModelKind.SINR_THRESHOLD:
        return 1.0 if snr_db >= mcs.min_sinr_db else 0.0
    return frame_success_from_ber(bit_error_rate(db_to_linear(snr_db), mcs.modulation), length_bits)


def frame_success_from_ber(ber, length_bits) -> float:
    """(1 - ber) ** length_bits, independent bit errors."""
    if ber >= 1.0:
        return 0.0
    return math.exp(length_bits * math.log1p(-ber))


def frame_airtime(length_bits, mcs, model) -> float:
    """Seconds on air: fixed preamble plus payload at the MCS data rate."""
    if length_bits < 1:
        raise DomainError("length_bits must be >= 1")
    return model.preamble_us * 1e-6 + length_bits / (mcs.data_rate_mbps * 1e6)


def in_range(a, b, comm_range) -> bool:
    if not comm_range > 0:
        raise DomainError("comm_range must be > 0")
    # squared form, same arithmetic as the adjacency kernels
    dx = float(a[0]) - float(b[0])
    dy = float(a[1]) - float(b[1])
    dz = float(a[2]) - float(b[2])
    return dx * dx + dy * dy + dz * dz <= comm_range * comm_range


def simulate_bit_errors(ber, n_bits, rng, chunk=1 << 20) -> int:
    """Monte-Carlo bit error count: one Bernoulli(ber) draw per bit."""
    if not 0.0 <= ber <= 1.0:
        raise DomainError(f"ber must be in [0, 1], got {ber}")
    errors = 0
    left = int(n_bits)
    while left > 0:
        n = min(chunk, left)
        errors += int(kernels.count_below(rng.random(n), float(ber)))
        left -= n
    return errors
