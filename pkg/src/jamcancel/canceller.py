"""Jamming cancellation state machine driven by the network outputs.

Per block the receiver classifies the channel (noise / single / collision)
from the two signal indicators, tracks the jammer phase shift with
exponential smoothing, estimates the amplitude ratio from the power ledger
kept across single/collision transitions, and nulls the jammer with
    R1 - A_J * e^{j*delta_phi_J} * R2.

State values are plain data and every transition returns a new state, so a
recorded stream replays to identical outputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import modem
from .iqcore import UsageError, circular_distance, measure_power, wrap_phase

DEFAULT_LAMBDA = 0.01


class ChannelState(enum.Enum):
    NOISE = "noise"
    SINGLE = "single"
    COLLISION = "collision"


class ActionKind(enum.Enum):
    PASS = "pass"
    CANCELLED = "cancelled"
    SKIP = "skip"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    samples: np.ndarray | None = None


def indicators(i_s1: float, i_s2: float) -> tuple[int, int]:
    """Threshold the confidences: a slot holds a real signal iff > 0.5."""
    return int(i_s1 > 0.5), int(i_s2 > 0.5)


def classify(ind: tuple[int, int]) -> ChannelState:
    total = ind[0] + ind[1]
    return (ChannelState.NOISE, ChannelState.SINGLE,
            ChannelState.COLLISION)[total]


def smooth_phase(current: float | None, new: float, lam: float,
                 mode: str = "phasor") -> float:
    """Exponentially smooth a phase estimate.

    `phasor` mode blends on the unit circle, arg(lam*e^{j*new} +
    (1-lam)*e^{j*cur}), which behaves correctly across the +-pi wrap;
    `linear` mode is the literal weighted average of the raw radians.
    """
    if not 0 < lam <= 1:
        raise UsageError("smoothing weight must be in (0, 1]")
    if current is None:
        return float(wrap_phase(new))
    if mode == "linear":
        return float(wrap_phase(lam * new + (1 - lam) * current))
    if mode != "phasor":
        raise UsageError(f"unknown smoothing mode {mode!r}")
    blended = lam * np.exp(1j * new) + (1 - lam) * np.exp(1j * current)
    if abs(blended) < 1e-12:  # antipodal inputs at lam=0.5; keep the old value
        return float(wrap_phase(current))
    return float(wrap_phase(np.angle(blended)))


def cancel(r1, r2, a_j: float, delta_phi_j: float) -> np.ndarray:
    """Null the jammer: R1 - p1*R2 with p1 = A_J * e^{j*delta_phi_J}."""
    if a_j <= 0:
        raise UsageError("amplitude ratio must be positive")
    p1 = a_j * np.exp(1j * delta_phi_j)
    return np.asarray(r1, dtype=np.complex128) - p1 * np.asarray(r2, dtype=np.complex128)


@dataclass(frozen=True)
class CancellerState:
    delta_phi_j: float | None = None    # tracked jammer phase shift
    delta_phi_s: float | None = None    # tracked sender phase shift
    e_s: tuple[float, float] | None = None  # sender power ledger, per antenna
    e_j: tuple[float, float] | None = None  # jammer power ledger, per antenna
    i_last_j: int = 0
    a_j_last: float | None = None
    lam: float = DEFAULT_LAMBDA
    smoothing_mode: str = "phasor"
    prev_indicators: tuple[int, int] = (0, 0)
    prev_state: ChannelState = ChannelState.NOISE
    e_s_frozen: bool = False            # set once E_S is refreshed inside a collision run
    pending: tuple = ()                 # buffered single-state antenna-1 samples
    pending_resolved: str = ""          # "", "sender" or "jammer"
    degenerate_ratio_count: int = 0
    cold_start_count: int = 0

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise UsageError("lambda must be in (0, 1]")


def select_jammer_phase(p_s1: float, p_s2: float, state: CancellerState) -> tuple[float, bool]:
    """Pick the collision phase estimate that tracks the jammer.

    Returns (phase, confident). Prefers the candidate circularly closest to
    the tracked jammer phase; with no jammer history it picks the candidate
    farther from the tracked sender phase, and with no history at all it
    falls back to the second slot (low confidence).
    """
    if state.delta_phi_j is not None:
        d1 = circular_distance(p_s1, state.delta_phi_j)
        d2 = circular_distance(p_s2, state.delta_phi_j)
        return (p_s1 if d1 <= d2 else p_s2), True
    if state.delta_phi_s is not None:
        d1 = circular_distance(p_s1, state.delta_phi_s)
        d2 = circular_distance(p_s2, state.delta_phi_s)
        return (p_s1 if d1 > d2 else p_s2), True
    return p_s2, False


def estimate_amplitude_ratio(state: CancellerState, e_t: tuple[float, float]):
    """Amplitude-ratio estimate at a collision block; returns (a_j, state').

    If the previous period was a lone transmission by the jammer, the sender
    power ledger is refreshed as E_S_i = E_T_i - E_J_i (and then held for
    the rest of the collision). Degenerate subtractions fall back to the
    last good ratio, or 1.0 if none exists.
    """
    st = state
    prev_xor = (st.prev_indicators[0] ^ st.prev_indicators[1]) == 1
    if st.i_last_j == 1 and prev_xor and st.e_j is not None and not st.e_s_frozen:
        e_s = (e_t[0] - st.e_j[0], e_t[1] - st.e_j[1])
        if e_s[0] > 0 and e_s[1] > 0:
            st = replace(st, e_s=e_s, e_s_frozen=True)
    if st.e_s is None:
        return (st.a_j_last if st.a_j_last is not None else 1.0,
                replace(st, degenerate_ratio_count=st.degenerate_ratio_count + 1))
    num = e_t[0] - st.e_s[0]
    den = e_t[1] - st.e_s[1]
    if num <= 0 or den <= 0:
        return (st.a_j_last if st.a_j_last is not None else 1.0,
                replace(st, degenerate_ratio_count=st.degenerate_ratio_count + 1))
    a_j = float(np.sqrt(num / den))
    return a_j, replace(st, a_j_last=a_j)


# Single-state decode buffering: per-block CRC is impossible since packets
# span blocks, so consecutive single-state blocks accumulate until either a
# packet decodes (sender) or the buffer clearly holds no preamble (jammer).
_MAX_PENDING_BLOCKS = 64


def _resolve_single(state: CancellerState, scheme: modem.ModScheme):
    """Try to classify the buffered single-emitter stream."""
    buffered = np.concatenate(state.pending)
    decodable, _ = modem.check_decodable(buffered, scheme)
    if decodable:
        return "sender"
    # No preamble anywhere in a buffer long enough to contain one: jammer.
    _, _, peak = modem.find_preamble(buffered)
    if peak < modem.PREAMBLE_THRESHOLD and buffered.size >= 4 * modem.PREAMBLE_LEN:
        return "jammer"
    if len(state.pending) >= _MAX_PENDING_BLOCKS:
        return "jammer"
    return ""


@dataclass(frozen=True)
class StepDiagnostics:
    state: ChannelState
    role: str               # "", "sender", "jammer"
    phase: float | None
    a_j: float | None
    e_t: tuple[float, float]
    confident: bool


def step(state: CancellerState, block1, block2, p_s1: float, p_s2: float,
         i_s1: float, i_s2: float, scheme: modem.ModScheme):
    """One period of the cancellation loop.

    Returns (Action, new_state, StepDiagnostics). `block1`/`block2` are the
    two antennas' sample windows for this period.
    """
    r1 = np.asarray(block1, dtype=np.complex128)
    r2 = np.asarray(block2, dtype=np.complex128)
    ind = indicators(i_s1, i_s2)
    ch_state = classify(ind)
    e_t = (measure_power(r1), measure_power(r2))

    if ch_state is ChannelState.NOISE:
        new = replace(state, prev_indicators=ind, prev_state=ch_state,
                      pending=(), pending_resolved="")
        diag = StepDiagnostics(ch_state, "", None, None, e_t, True)
        return Action(ActionKind.SKIP), new, diag

    if ch_state is ChannelState.SINGLE:
        raw_phase = p_s1 if ind[0] == 1 else p_s2
        pending = state.pending + (r1,) if state.prev_state is ChannelState.SINGLE else (r1,)
        st = replace(state, pending=pending)
        role = st.pending_resolved if state.prev_state is ChannelState.SINGLE else ""
        if role != "sender":
            role = _resolve_single(st, scheme)
        if role == "sender":
            st = replace(
                st, e_s=e_t, i_last_j=0, e_s_frozen=False,
                delta_phi_s=smooth_phase(st.delta_phi_s, raw_phase, st.lam,
                                         st.smoothing_mode),
                pending_resolved="sender")
        elif role == "jammer":
            st = replace(
                st, e_j=e_t, i_last_j=1, e_s_frozen=False,
                delta_phi_j=smooth_phase(st.delta_phi_j, raw_phase, st.lam,
                                         st.smoothing_mode),
                pending_resolved="jammer")
        st = replace(st, prev_indicators=ind, prev_state=ch_state)
        diag = StepDiagnostics(ch_state, role, raw_phase, None, e_t, role != "")
        return Action(ActionKind.PASS, r1), st, diag

    # Collision.
    raw_phase, confident = select_jammer_phase(p_s1, p_s2, state)
    st = state
    if not confident:
        st = replace(st, cold_start_count=st.cold_start_count + 1)
    smoothed = smooth_phase(st.delta_phi_j, raw_phase, st.lam, st.smoothing_mode)
    st = replace(st, delta_phi_j=smoothed)
    a_j, st = estimate_amplitude_ratio(st, e_t)
    cleaned = cancel(r1, r2, a_j, smoothed)
    st = replace(st, prev_indicators=ind, prev_state=ChannelState.COLLISION,
                 pending=(), pending_resolved="")
    diag = StepDiagnostics(ChannelState.COLLISION, "", smoothed, a_j, e_t, confident)
    return Action(ActionKind.CANCELLED, cleaned), st, diag


def run_stream(state: CancellerState, r1, r2, net_outputs, scheme: modem.ModScheme,
               block_len: int):
    """Apply the state machine over a whole recording.

    `net_outputs` is (p (n,2), i (n,2)) aligned with the blocks. Returns
    (output samples, actions, diagnostics, final state); PASS and CANCELLED
    blocks contribute their samples, SKIP blocks contribute the raw antenna-1
    block so the output stays time-aligned.
    """
    r1 = np.asarray(r1, dtype=np.complex128)
    r2 = np.asarray(r2, dtype=np.complex128)
    p, i = net_outputs
    n_blocks = min(r1.size // block_len, p.shape[0])
    out = np.empty(n_blocks * block_len, dtype=np.complex128)
    actions, diags = [], []
    for b in range(n_blocks):
        sl = slice(b * block_len, (b + 1) * block_len)
        action, state, diag = step(state, r1[sl], r2[sl],
                                   float(p[b, 0]), float(p[b, 1]),
                                   float(i[b, 0]), float(i[b, 1]), scheme)
        out[sl] = r1[sl] if action.samples is None else action.samples
        actions.append(action.kind)
        diags.append(diag)
    return out, actions, diags, state
