"""Multi-token circulation: per-UAV state transitions.

Every function here takes a node's state and returns it together with the
effects the engine must carry out. State is mutated in place and returned, so
callers that need the old value must copy first. Tokens are never mutated in
place: a frame's token is shared by every receiver of that frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import kernels
from .errors import ProtocolError
from .model import FrameKind, LocationTable, Token


@dataclass
class UavState:
    id: int
    true_pos: np.ndarray
    cache: LocationTable
    held_tokens: dict = field(default_factory=dict)
    busy_neighbors: dict = field(default_factory=dict)
    own_counter: int = 0
    # virtual carrier sense: end of the latest announced exchange
    nav_until: float = -math.inf
    # initiator -> (exchange start, contention draw, reserved until)
    reservations: dict = field(default_factory=dict)
    # neighbour -> last time this node handed it a token
    last_sent: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, uav, node_count, pos) -> "UavState":
        return cls(uav, np.array(pos, dtype=float), LocationTable(node_count))

    def hold(self, token):
        if token.token_id in self.held_tokens:
            raise ProtocolError(f"UAV {self.id} already holds token {token.token_id}")
        self.held_tokens[token.token_id] = token


class ActionKind(Enum):
    SEND_TOKEN = "send_token"
    HOLD_TOKEN = "hold_token"
    SEND_RTS = "send_rts"
    SEND_CTS = "send_cts"
    NONE = "none"


@dataclass(frozen=True)
class ProtocolAction:
    kind: ActionKind
    target: Optional[int] = None
    token: Optional[Token] = None

    @classmethod
    def send_token(cls, target, token):
        return cls(ActionKind.SEND_TOKEN, target, token)

    @classmethod
    def hold(cls, token):
        return cls(ActionKind.HOLD_TOKEN, None, token)

    @classmethod
    def rts(cls, target):
        return cls(ActionKind.SEND_RTS, target)

    @classmethod
    def cts(cls, target):
        return cls(ActionKind.SEND_CTS, target)


NO_ACTION = ProtocolAction(ActionKind.NONE)


def update_own_entry(state, now) -> UavState:
    state.own_counter += 1
    state.cache.set(state.id, state.true_pos, state.own_counter, now)
    return state


def merge_into(dst, src) -> int:
    """Take every row of ``src`` whose counter is strictly newer; in place."""
    if len(dst) != len(src):
        raise ProtocolError(f"table length mismatch: {len(dst)} vs {len(src)}")
    return kernels.merge_newer(
        dst.pos, dst.counter, dst.updated_at, src.pos, src.counter, src.updated_at
    )


def merge_cache(cache, table) -> LocationTable:
    """Per UAV, the strictly larger counter wins; ties keep ``cache``."""
    out = cache.copy()
    merge_into(out, table)
    return out


def update_token(state, token) -> Token:
    if token.destination != state.id:
        raise ProtocolError(
            f"UAV {state.id} cannot update token {token.token_id} addressed to {token.destination}"
        )
    out = token.copy()
    merge_into(out.table, state.cache)
    me = state.id
    out.table.set(me, state.cache.pos[me], state.cache.counter[me], state.cache.updated_at[me])
    out.hop_count += 1
    return out


def _is_busy(state, uav, now):
    return state.busy_neighbors.get(uav, -math.inf) > now


def select_next_uav(state, neighbors, token, now) -> ProtocolAction:
    """Pick the next holder.

    Busy neighbours go first. One survivor gets the token, none means hold.
    With several left the previous forwarder is dropped and the survivor whose
    entry in the token is stalest wins: lowest counter, then the neighbour this
    node served least recently, then lowest id.
    """
    candidates = sorted(u for u in neighbors if u != state.id and not _is_busy(state, u, now))
    if not candidates:
        return ProtocolAction.hold(token)
    if len(candidates) == 1:
        return ProtocolAction.send_token(candidates[0], token)
    if token.source in candidates:
        candidates.remove(token.source)
    counters = token.table.counter
    last = state.last_sent
    target = min(candidates, key=lambda u: (counters[u], last.get(u, -math.inf), u))
    return ProtocolAction.send_token(target, token)


def _hand_over(state, token, target, now):
    # token must be a private copy
    token.source = state.id
    token.destination = target
    state.last_sent[target] = now
    return [ProtocolAction.rts(target), ProtocolAction.send_token(target, token)]


def _dispatch(state, token, neighbors, now):
    # token is a private copy made by update_token
    action = select_next_uav(state, neighbors, token, now)
    if action.kind is ActionKind.HOLD_TOKEN:
        state.hold(token)
        return [action]
    return _hand_over(state, token, action.target, now)


def on_receive_frame(state, frame, success, now, neighbors=(), busy_window=0.0):
    """Handle one decoded (or failed) frame. Returns ``(state, actions)``.

    Raises ``ProtocolError`` for a token whose table does not match the
    network size; the caller drops the frame.
    """
    if not success:
        return state, []
    me = state.id
    if frame.kind is FrameKind.TOKEN:
        token = frame.token
        if len(token.table) != len(state.cache):
            raise ProtocolError(
                f"token {token.token_id} carries {len(token.table)} entries, expected {len(state.cache)}"
            )
        if frame.dst != me:
            # overheard: read only
            merge_into(state.cache, token.table)
            return state, []
        token = update_token(state, token)
        merge_into(state.cache, token.table)
        return state, _dispatch(state, token, neighbors, now)

    # RTS / CTS
    if me in (frame.src, frame.dst):
        if frame.kind is FrameKind.RTS and frame.dst == me:
            if state.nav_until > now:
                # medium reserved by someone else: stay silent
                return state, []
            if frame.reserve_until > now:
                state.reservations[frame.src] = _reservation(frame)
                state.nav_until = max(state.nav_until, frame.reserve_until)
            return state, [ProtocolAction.cts(frame.src)]
        return state, []
    until = now + busy_window
    for uav in (frame.src, frame.dst):
        if state.busy_neighbors.get(uav, -math.inf) < until:
            state.busy_neighbors[uav] = until
    if frame.reserve_until > now:
        state.nav_until = max(state.nav_until, frame.reserve_until)
        initiator = frame.src if frame.kind is FrameKind.RTS else frame.dst
        state.reservations[initiator] = _reservation(frame)
    return state, []


def _reservation(frame):
    return (frame.exchange_start, frame.contention, frame.reserve_until)


def yields_to(state, exchange_start, contention, now) -> bool:
    """True if an overheard exchange that started first still holds the medium.

    Ties on start time go to the lower contention draw, then the lower id.
    """
    mine = (exchange_start, contention, state.id)
    for initiator, (start, draw, until) in state.reservations.items():
        if until > now and initiator != state.id and (start, draw, initiator) < mine:
            return True
    return False


def release_reservation(state, initiator, exchange_start) -> bool:
    """Forget an announced exchange that never reached its data frame."""
    held = state.reservations.get(initiator)
    if held is None or held[0] != exchange_start:
        return False
    del state.reservations[initiator]
    state.nav_until = max((u for _, _, u in state.reservations.values()), default=-math.inf)
    return True


def retry_held_tokens(state, neighbors, now):
    """Re-run selection for every held token, lowest token id first."""
    actions = []
    for tid in sorted(state.held_tokens):
        token = state.held_tokens[tid]
        action = select_next_uav(state, neighbors, token, now)
        if action.kind is ActionKind.SEND_TOKEN:
            del state.held_tokens[tid]
            actions += _hand_over(state, token.copy(), action.target, now)
    return state, actions
