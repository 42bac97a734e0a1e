"""Flat ``key = value`` scenario files.

One scenario per file, ``#`` starts a comment. A sweep can be declared inline
with ``param``, ``grid`` (``a:b:step`` inclusive, or a comma list),
``repeats`` and ``seed_base``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Optional

from .errors import ConfigError, InvalidScenarioError
from .model import Arena, LinkModelKind, MobilityConfig, ScenarioConfig
from .phy import MCS_TABLE

REQUIRED_KEYS = ("nodes", "mcs", "snr_db", "seed", "duration")


class SweepParam(Enum):
    SNR_DB = "snr_db"
    NODE_COUNT = "nodes"
    PDU_BITS = "pdu_bits"
    MCS_INDEX = "mcs"
    TOKEN_COUNT = "tokens"

    @property
    def is_integer(self):
        return self is not SweepParam.SNR_DB

    @classmethod
    def parse(cls, text) -> "SweepParam":
        key = str(text).strip().lower()
        key = _PARAM_ALIASES.get(key, key)
        for p in cls:
            if p.value == key:
                return p
        names = ", ".join(p.value for p in cls)
        raise ConfigError(f"unknown sweep parameter {text!r}; expected one of {names}", key="param")

    def apply(self, config, value) -> ScenarioConfig:
        return set_key(config, self.value, value)


_PARAM_ALIASES = {
    "snr": "snr_db",
    "node_count": "nodes",
    "pdu_payload_bits": "pdu_bits",
    "mcs_index": "mcs",
    "number_of_tokens": "tokens",
}


@dataclass(frozen=True)
class SweepSpec:
    parameter: SweepParam
    grid: tuple
    repeats: int = 1
    seed_base: int = 0

    def __post_init__(self):
        if not self.grid:
            raise ConfigError("sweep grid is empty", key="grid")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1", key="repeats")

    def scenarios(self, base):
        """Yield ``(value, seed, scenario)`` in grid order, then run order."""
        for value in self.grid:
            for r in range(self.repeats):
                seed = self.seed_base + r
                yield value, seed, self.parameter.apply(base, value).with_(seed=seed)


# --------------------------------------------------------------------------
# value parsers
# --------------------------------------------------------------------------
def _int(text):
    try:
        return int(text, 0)
    except ValueError:
        v = _float(text)
        if v != int(v):
            raise ValueError(f"expected an integer, got {text!r}") from None
        return int(v)


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}") from None


def _opt_float(text):
    return None if text.lower() in ("none", "auto", "") else _float(text)


def _opt_int(text):
    return None if text.lower() in ("none", "") else _int(text)


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _arena(text):
    vals = [_float(v) for v in text.replace(",", " ").split()]
    if len(vals) == 3:
        return Arena((0.0, 0.0, 0.0), tuple(vals))
    if len(vals) == 6:
        return Arena(tuple(vals[:3]), tuple(vals[3:]))
    raise ValueError("arena takes 3 numbers (x y z size) or 6 (lo then hi corner)")


def _mcs(text):
    v = _int(text)
    lo, hi = min(MCS_TABLE), max(MCS_TABLE)
    if not lo <= v <= hi:
        raise ValueError(f"mcs must be in {lo}..{hi}, got {v}")
    return v


def _link(text):
    try:
        return LinkModelKind(text.lower())
    except ValueError:
        raise ValueError(f"link_model must be analytic or threshold, got {text!r}") from None


_d = ScenarioConfig.__dataclass_fields__


def _default(name):
    f = _d[name]
    return f.default_factory() if callable(f.default_factory) else f.default


# key -> (ScenarioConfig field or mobility.<field>, parser, help)
SCENARIO_KEYS = {
    "nodes": ("node_count", _int, "number of UAVs (>= 2)"),
    "arena": ("arena", _arena, "box size 'x y z' in m, or 'x0 y0 z0 x1 y1 z1'"),
    "comm_range": ("comm_range", _float, "radio range in m"),
    "mcs": ("mcs_index", _mcs, "MCS row 1..8"),
    "snr_db": ("snr_db", _float, "link SNR in dB, same on every link"),
    "link_model": ("link_model", _link, "analytic | threshold"),
    "pdu_bits": ("pdu_payload_bits", _int, "PDU payload bits added to each token frame"),
    "tokens": ("number_of_tokens", _int, "tokens in circulation (<= nodes)"),
    "v_max": ("mobility.v_max", _float, "maximum UAV speed in m/s"),
    "step_interval": ("mobility.step_interval", _float, "mobility step in s"),
    "seed": ("seed", _int, "master seed"),
    "duration": ("sim_duration", _float, "simulated seconds"),
    "busy_window": ("control_busy_window", _opt_float, "busy mark after overheard RTS/CTS in s (auto: 2 data airtimes)"),
    "header_bits": ("header_bits", _int, "token header bits"),
    "entry_bits": ("entry_bits", _int, "bits per location entry"),
    "control_bits": ("control_bits", _int, "RTS/CTS frame bits"),
    "preamble_us": ("preamble_us", _float, "PHY preamble per frame in us"),
    "max_attempts": ("max_attempts", _int, "token frame attempts before giving up"),
    "sample_interval": ("sample_interval", _float, "metric sampling period in s"),
    "hold_interval": ("hold_interval", _opt_float, "retry period for held tokens in s (auto: one mobility step)"),
    "max_data_frames": ("max_data_frames", _opt_int, "stop after this many addressed token frames (none: no limit)"),
    "carrier_sense": ("carrier_sense", _bool, "defer to exchanges announced by overheard RTS/CTS"),
}

SWEEP_KEYS = {
    "param": "sweep parameter: " + ", ".join(p.value for p in SweepParam),
    "grid": "sweep values: 'a:b:step' (inclusive) or 'v1, v2, ...'",
    "repeats": "runs per grid value (seeds seed_base .. seed_base + repeats - 1)",
    "seed_base": "first seed of every grid value (default: seed)",
}


def default_of(key) -> str:
    field_name = SCENARIO_KEYS[key][0]
    if field_name.startswith("mobility."):
        v = getattr(MobilityConfig(), field_name.split(".", 1)[1])
    else:
        v = _default(field_name)
    if isinstance(v, Arena):
        return " ".join(f"{x:g}" for x in v.hi)
    if isinstance(v, Enum):
        return v.value
    if v is None:
        return "auto" if key in ("busy_window", "hold_interval") else "none"
    return str(v).lower() if isinstance(v, bool) else str(v)


def keys_help() -> str:
    width = max(map(len, list(SCENARIO_KEYS) + list(SWEEP_KEYS)))
    lines = ["scenario keys (required: " + ", ".join(REQUIRED_KEYS) + "):"]
    for key, (_, _, text) in SCENARIO_KEYS.items():
        lines.append(f"  {key:<{width}}  {text} [default: {default_of(key)}]")
    lines.append("sweep keys:")
    for key, text in SWEEP_KEYS.items():
        lines.append(f"  {key:<{width}}  {text}")
    return "\n".join(lines)


def set_key(config, key, value) -> ScenarioConfig:
    """Copy of ``config`` with one file key changed."""
    field_name = SCENARIO_KEYS[key][0]
    if field_name.startswith("mobility."):
        mob = replace(config.mobility, **{field_name.split(".", 1)[1]: value})
        return config.with_(mobility=mob)
    return config.with_(**{field_name: value})


def parse_value(key, text):
    """Parse one scenario value; raises ``ConfigError`` naming the key."""
    if key not in SCENARIO_KEYS:
        raise ConfigError(f"unknown key {key!r}", key=key)
    try:
        return SCENARIO_KEYS[key][1](text.strip())
    except ValueError as e:
        raise ConfigError(str(e), key=key) from None


def parse_grid(text, integer=False) -> tuple:
    text = text.strip()
    try:
        if ":" in text:
            parts = [Decimal(p.strip()) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError("range grid is 'start:stop:step'")
            a, b, step = parts
            if step <= 0 or b < a:
                raise ValueError("range grid needs step > 0 and stop >= start")
            count = int((b - a) / step) + 1
            vals = [a + i * step for i in range(count)]
        else:
            vals = [Decimal(p.strip()) for p in text.split(",") if p.strip()]
    except InvalidOperation:
        raise ValueError(f"cannot parse grid {text!r}") from None
    if not vals:
        raise ValueError("grid is empty")
    if integer:
        if any(v != v.to_integral_value() for v in vals):
            raise ValueError(f"grid {text!r} must hold integers")
        return tuple(int(v) for v in vals)
    return tuple(float(v) for v in vals)


def parse_config(text, require=REQUIRED_KEYS) -> tuple[ScenarioConfig, Optional[SweepSpec]]:
    """Parse a scenario file; returns ``(config, sweep or None)``.

    Every problem is reported as ``ConfigError`` with the key and line.
    """
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        key, _, value = (s.strip() for s in line.partition("="))
        key = key.lower()
        if key not in SCENARIO_KEYS and key not in SWEEP_KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key (first on line {seen[key][0]})", key=key, line=lineno)
        seen[key] = (lineno, value)

    for key in require:
        if key not in seen:
            raise ConfigError("missing required key", key=key)

    fields = {}
    mobility = {}
    for key, (lineno, value) in seen.items():
        if key not in SCENARIO_KEYS:
            continue
        try:
            parsed = parse_value(key, value)
        except ConfigError as e:
            raise ConfigError(e.message, key=key, line=lineno) from None
        field_name = SCENARIO_KEYS[key][0]
        if field_name.startswith("mobility."):
            mobility[field_name.split(".", 1)[1]] = parsed
        else:
            fields[field_name] = parsed
    try:
        if mobility:
            fields["mobility"] = MobilityConfig(**mobility)
        config = ScenarioConfig(**fields)
    except InvalidScenarioError as e:
        key, lineno = _blame(str(e), seen)
        raise ConfigError(str(e), key=key, line=lineno) from None

    sweep = _parse_sweep(seen, config)
    return config, sweep


def _blame(message, seen):
    # best effort: the validator names the offending field first
    hits = []
    for key, (field_name, _, _) in SCENARIO_KEYS.items():
        at = message.find(field_name.split(".")[-1])
        if key in seen and at >= 0:
            hits.append((at, key))
    if not hits:
        return None, None
    key = min(hits)[1]
    return key, seen[key][0]


def _parse_sweep(seen, config) -> Optional[SweepSpec]:
    present = [k for k in SWEEP_KEYS if k in seen]
    if not present:
        return None
    if "param" not in seen or "grid" not in seen:
        missing = "param" if "param" not in seen else "grid"
        key = present[0]
        raise ConfigError(f"sweep needs both 'param' and 'grid' ({missing} missing)", key=key, line=seen[key][0])
    lineno, ptext = seen["param"]
    try:
        param = SweepParam.parse(ptext)
    except ConfigError as e:
        raise ConfigError(e.message, key="param", line=lineno) from None
    repeats, seed_base = 1, config.seed
    try:
        if "repeats" in seen:
            lineno, v = seen["repeats"]
            repeats = _int(v)
        if "seed_base" in seen:
            lineno, v = seen["seed_base"]
            seed_base = _int(v)
        lineno, gtext = seen["grid"]
        grid = parse_grid(gtext, param.is_integer)
    except ValueError as e:
        key = next(k for k, (ln, _) in seen.items() if ln == lineno)
        raise ConfigError(str(e), key=key, line=lineno) from None
    sweep = SweepSpec(param, grid, repeats, seed_base)
    check_sweep(config, sweep)
    return sweep


def check_sweep(config, sweep):
    """Validate every grid point against the base scenario before any run."""
    for value in sweep.grid:
        try:
            sweep.parameter.apply(config, value)
        except (InvalidScenarioError, ValueError) as e:
            raise ConfigError(f"grid value {value}: {e}", key="grid") from None
