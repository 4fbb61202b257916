"""Two-antenna slow-fading channel, jammer waveforms and scenario builder.

The channel is flat and constant for a whole scenario: each emitter reaches
each antenna through a single complex gain, so the received streams are
    R_i = h_Si * S + h_Ji * J + N_i
with independent complex Gaussian noise per antenna. SJR is defined at
antenna 1: 10*log10(E_S1 / E_J1).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from . import modem
from .iqcore import (
    DEFAULT_BLOCK_LEN,
    UsageError,
    complex_gaussian,
    make_rng,
    wrap_phase,
)


@dataclass(frozen=True)
class ChannelGains:
    """The four emitter->antenna complex gains. Derived values recomputed."""

    h_s1: complex
    h_s2: complex
    h_j1: complex
    h_j2: complex

    def __post_init__(self):
        for name in ("h_s1", "h_s2", "h_j1", "h_j2"):
            if getattr(self, name) == 0:
                raise UsageError(f"channel gain {name} must be nonzero")

    @property
    def delta_phi_s(self) -> float:
        return float(wrap_phase(np.angle(self.h_s1) - np.angle(self.h_s2)))

    @property
    def delta_phi_j(self) -> float:
        return float(wrap_phase(np.angle(self.h_j1) - np.angle(self.h_j2)))

    @property
    def a_j(self) -> float:
        return abs(self.h_j1) / abs(self.h_j2)

    @property
    def sep(self) -> float:
        return float(np.abs(wrap_phase(self.delta_phi_s - self.delta_phi_j)))

    @property
    def p1(self) -> complex:
        """Nulling coefficient h_J1 / h_J2 = A_J * e^{j*delta_phi_j}."""
        return self.h_j1 / self.h_j2

    @property
    def p2(self) -> complex:
        """Post-cancellation gain of the legitimate signal."""
        return self.h_s1 - self.p1 * self.h_s2


def make_gains(sep: float, a_j: float, rng: np.random.Generator) -> ChannelGains:
    """Draw gains with the requested phase-shift separation and amplitude ratio.

    The absolute phases (three remaining degrees of freedom) are uniform;
    sender gains have unit magnitude, |h_j2| = 1 and |h_j1| = a_j.
    """
    if not 0.0 <= sep <= np.pi:
        raise UsageError(f"sep must be in [0, pi], got {sep}")
    if a_j <= 0:
        raise UsageError(f"a_j must be positive, got {a_j}")
    phi_s1, phi_s2, phi_j2 = rng.uniform(-np.pi, np.pi, 3)
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    delta_phi_j = wrap_phase((phi_s1 - phi_s2) - sign * sep)
    phi_j1 = wrap_phase(delta_phi_j + phi_j2)
    return ChannelGains(
        h_s1=complex(np.exp(1j * phi_s1)),
        h_s2=complex(np.exp(1j * phi_s2)),
        h_j1=complex(a_j * np.exp(1j * phi_j1)),
        h_j2=complex(np.exp(1j * phi_j2)),
    )


def apply_channel(sender_samples, jammer_samples, gains: ChannelGains,
                  noise_power: float, rng: np.random.Generator):
    """R_i = h_Si*S + h_Ji*J + N_i; an absent emitter contributes zero."""
    if noise_power < 0:
        raise UsageError("noise_power must be >= 0")
    lengths = [np.asarray(x).size for x in (sender_samples, jammer_samples)
               if x is not None]
    if not lengths:
        raise UsageError("at least one emitter (or a length) required")
    if len(set(lengths)) > 1:
        raise UsageError("sender and jammer streams must have equal length")
    n = lengths[0]
    r1 = np.zeros(n, dtype=np.complex128)
    r2 = np.zeros(n, dtype=np.complex128)
    if sender_samples is not None:
        s = np.asarray(sender_samples, dtype=np.complex128)
        r1 += gains.h_s1 * s
        r2 += gains.h_s2 * s
    if jammer_samples is not None:
        j = np.asarray(jammer_samples, dtype=np.complex128)
        r1 += gains.h_j1 * j
        r2 += gains.h_j2 * j
    if noise_power > 0:
        r1 += complex_gaussian(rng, n, noise_power)
        r2 += complex_gaussian(rng, n, noise_power)
    return r1, r2


class JammerWaveform(enum.Enum):
    GAUSSIAN_NOISE = "noise"
    MODULATED = "modulated"


@dataclass(frozen=True)
class JammerProfile:
    waveform: JammerWaveform = JammerWaveform.GAUSSIAN_NOISE
    scheme: modem.ModScheme = modem.ModScheme.DQPSK  # used when MODULATED
    schedule: str = "continuous"  # continuous | intermittent | reactive
    on_blocks: int = 1
    off_blocks: int = 1
    trigger_threshold: float = 0.1
    power_db_rel: float = 0.0

    def __post_init__(self):
        if self.schedule not in ("continuous", "intermittent", "reactive"):
            raise UsageError(f"unknown jammer schedule {self.schedule!r}")
        if self.schedule == "intermittent" and (self.on_blocks < 1 or self.off_blocks < 1):
            raise UsageError("intermittent on/off block counts must be >= 1")


def _jammer_waveform(profile: JammerProfile, length: int, rng) -> np.ndarray:
    if profile.waveform is JammerWaveform.GAUSSIAN_NOISE:
        return complex_gaussian(rng, length, 1.0)
    # Modulated jammer: back-to-back random-payload packets, unit power.
    chunks = []
    total = 0
    while total < length:
        payload = rng.integers(0, 2, 256).astype(np.uint8)
        sym = modem.serialize_packet(modem.frame(payload), profile.scheme)
        chunks.append(sym)
        total += sym.size
    return np.concatenate(chunks)[:length]


def generate_jammer(profile: JammerProfile, length: int, rng,
                    block_len: int = DEFAULT_BLOCK_LEN,
                    sender_block_power=None):
    """Jammer sample stream plus a per-block activity mask.

    `sender_block_power` (per-block sender power at the emitter) drives the
    reactive schedule: the jammer reacts with one block of latency to the
    sender's activity in the previous block.
    """
    n_blocks = -(-length // block_len)
    if profile.schedule == "continuous":
        mask = np.ones(n_blocks, dtype=bool)
    elif profile.schedule == "intermittent":
        period = profile.on_blocks + profile.off_blocks
        mask = (np.arange(n_blocks) % period) < profile.on_blocks
    else:  # reactive
        mask = np.zeros(n_blocks, dtype=bool)
        if sender_block_power is not None:
            prev = np.asarray(sender_block_power)[:n_blocks]
            mask[1:] = prev[:-1] > profile.trigger_threshold
    samples = _jammer_waveform(profile, n_blocks * block_len, rng)[:length]
    active = np.repeat(mask, block_len)[:length]
    samples = samples * active
    return samples, mask


class BlockState(enum.Enum):
    NOISE = "noise"
    SENDER_ONLY = "sender_only"
    JAMMER_ONLY = "jammer_only"
    COLLISION = "collision"


@dataclass
class ScenarioConfig:
    scheme: modem.ModScheme = modem.ModScheme.DBPSK
    sjr_db: float = -10.0
    snr_db: float = 20.0
    sep_rad: float = 2 * np.pi / 3
    a_j: float = 1.0
    jammer_waveform: JammerWaveform = JammerWaveform.GAUSSIAN_NOISE
    jammer_schedule: str = "continuous"
    seed: int = 0
    n_packets: int = 8
    payload_bytes: int = 128
    block_len: int = DEFAULT_BLOCK_LEN
    warmup_blocks: int = 30
    gap_blocks: int = 0
    jammer_on_blocks: int = 1
    jammer_off_blocks: int = 1

    def validate(self):
        checks = [
            ("sjr_db", -60 <= self.sjr_db <= 60),
            ("snr_db", self.snr_db >= 0),
            ("sep_rad", 0 <= self.sep_rad <= np.pi),
            ("a_j", self.a_j > 0),
            ("n_packets", self.n_packets >= 0),
            ("payload_bytes", self.payload_bytes >= 1),
            ("block_len", self.block_len >= 8),
            ("warmup_blocks", self.warmup_blocks >= 0),
            ("gap_blocks", self.gap_blocks >= 0),
        ]
        for name, ok in checks:
            if not ok:
                raise UsageError(f"invalid scenario config field: {name}")


_CONFIG_PARSERS = {
    "scheme": lambda v: modem.ModScheme(v.lower()),
    "sjr_db": float,
    "snr_db": float,
    "sep_rad": float,
    "a_j": float,
    "jammer_waveform": lambda v: JammerWaveform(v.lower()),
    "jammer_schedule": str,
    "seed": int,
    "n_packets": int,
    "payload_bytes": int,
    "block_len": int,
    "warmup_blocks": int,
    "gap_blocks": int,
    "jammer_on_blocks": int,
    "jammer_off_blocks": int,
}


def load_scenario_config(path) -> ScenarioConfig:
    """Parse a flat key-value scenario config file (one `key = value` per line)."""
    cfg = ScenarioConfig()
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_PARSERS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                setattr(cfg, key, _CONFIG_PARSERS[key](value))
            except (ValueError, KeyError) as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}")
    cfg.validate()
    return cfg


@dataclass
class ScenarioTruth:
    states: list
    gains: ChannelGains
    sender_mask: np.ndarray
    jammer_mask: np.ndarray
    sent_payloads: list
    packet_symbol_ranges: list  # (start_symbol, end_symbol) per packet


@dataclass
class Scenario:
    r1: np.ndarray
    r2: np.ndarray
    truth: ScenarioTruth
    sender_samples: np.ndarray
    jammer_samples: np.ndarray
    config: ScenarioConfig


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Deterministic two-antenna scenario with per-block ground truth.

    Timeline: `warmup_blocks` blocks with the sender idle, then `n_packets`
    packets separated by `gap_blocks` idle blocks. The jammer follows its
    own schedule over the full timeline. Jammer samples are scaled so that
    the configured SJR holds at antenna 1.
    """
    cfg.validate()
    rng = make_rng(cfg.seed)
    m = cfg.block_len

    # Sender timeline.
    payload_len = cfg.payload_bytes * 8
    payloads, pieces, ranges = [], [], []
    pos = cfg.warmup_blocks * m
    pieces.append(np.zeros(pos, dtype=np.complex128))
    for _ in range(cfg.n_packets):
        payload = rng.integers(0, 2, payload_len).astype(np.uint8)
        sym = modem.serialize_packet(modem.frame(payload), cfg.scheme)
        payloads.append(payload)
        ranges.append((pos, pos + sym.size))
        pieces.append(sym)
        pos += sym.size
        if cfg.gap_blocks:
            gap = cfg.gap_blocks * m
            pieces.append(np.zeros(gap, dtype=np.complex128))
            pos += gap
    total = -(-pos // m) * m  # round the timeline up to whole blocks
    sender = np.concatenate(pieces)
    sender = np.concatenate([sender, np.zeros(total - sender.size, dtype=np.complex128)])
    n_blocks = total // m

    sender_block_power = (np.abs(sender.reshape(n_blocks, m)) ** 2).mean(axis=1)
    sender_mask = sender_block_power > 1e-6

    # Jammer timeline, scaled to the configured SJR at antenna 1.
    gains = make_gains(cfg.sep_rad, cfg.a_j, rng)
    profile = JammerProfile(
        waveform=cfg.jammer_waveform,
        scheme=cfg.scheme,
        schedule=cfg.jammer_schedule,
        on_blocks=cfg.jammer_on_blocks,
        off_blocks=cfg.jammer_off_blocks,
    )
    jammer, jammer_mask = generate_jammer(
        profile, total, rng, m, sender_block_power=sender_block_power)
    e_s1 = abs(gains.h_s1) ** 2  # sender waveform is unit power
    jam_scale = np.sqrt(e_s1 * 10 ** (-cfg.sjr_db / 10) / abs(gains.h_j1) ** 2)
    jammer = jammer * jam_scale

    noise_power = abs(gains.h_s1) ** 2 * 10 ** (-cfg.snr_db / 10)
    r1, r2 = apply_channel(sender, jammer, gains, noise_power, rng)

    states = []
    for b in range(n_blocks):
        s, j = sender_mask[b], jammer_mask[b]
        if s and j:
            states.append(BlockState.COLLISION)
        elif s:
            states.append(BlockState.SENDER_ONLY)
        elif j:
            states.append(BlockState.JAMMER_ONLY)
        else:
            states.append(BlockState.NOISE)

    truth = ScenarioTruth(
        states=states,
        gains=gains,
        sender_mask=sender_mask,
        jammer_mask=jammer_mask,
        sent_payloads=payloads,
        packet_symbol_ranges=ranges,
    )
    return Scenario(r1=r1, r2=r2, truth=truth, sender_samples=sender,
                    jammer_samples=jammer, config=cfg)


# ---------------------------------------------------------------------------
# Recorded IQ file format "IQ2A": header {magic, version u16, M u32,
# count u64}, then interleaved little-endian float32 quads (I1,Q1,I2,Q2).

IQ2A_MAGIC = b"IQ2A"
IQ2A_VERSION = 1
_IQ2A_HEADER = struct.Struct("<4sHIQ")


class FormatError(Exception):
    """Corrupt or mismatched on-disk artifact."""


def write_iq2a(path, r1, r2, block_len: int = DEFAULT_BLOCK_LEN):
    r1 = np.asarray(r1, dtype=np.complex128)
    r2 = np.asarray(r2, dtype=np.complex128)
    if r1.size != r2.size:
        raise UsageError("antenna streams must have equal length")
    quads = np.empty((r1.size, 4), dtype="<f4")
    quads[:, 0] = r1.real
    quads[:, 1] = r1.imag
    quads[:, 2] = r2.real
    quads[:, 3] = r2.imag
    with open(path, "wb") as f:
        f.write(_IQ2A_HEADER.pack(IQ2A_MAGIC, IQ2A_VERSION, block_len, r1.size))
        f.write(quads.tobytes())


IQ1A_MAGIC = b"IQ1A"


def write_iq1a(path, samples, block_len: int = DEFAULT_BLOCK_LEN):
    """Single-antenna variant of IQ2A: float32 (I, Q) pairs after the header."""
    s = np.asarray(samples, dtype=np.complex128)
    pairs = np.empty((s.size, 2), dtype="<f4")
    pairs[:, 0] = s.real
    pairs[:, 1] = s.imag
    with open(path, "wb") as f:
        f.write(_IQ2A_HEADER.pack(IQ1A_MAGIC, IQ2A_VERSION, block_len, s.size))
        f.write(pairs.tobytes())


def read_iq1a(path):
    with open(path, "rb") as f:
        header = f.read(_IQ2A_HEADER.size)
        if len(header) != _IQ2A_HEADER.size:
            raise FormatError("truncated IQ1A header")
        magic, version, block_len, count = _IQ2A_HEADER.unpack(header)
        if magic != IQ1A_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != IQ2A_VERSION:
            raise FormatError(f"unsupported IQ1A version {version}")
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != count * 2:
        raise FormatError("truncated IQ1A payload")
    pairs = data.reshape(count, 2).astype(np.float64)
    return pairs[:, 0] + 1j * pairs[:, 1], int(block_len)


def read_iq2a(path):
    with open(path, "rb") as f:
        header = f.read(_IQ2A_HEADER.size)
        if len(header) != _IQ2A_HEADER.size:
            raise FormatError("truncated IQ2A header")
        magic, version, block_len, count = _IQ2A_HEADER.unpack(header)
        if magic != IQ2A_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != IQ2A_VERSION:
            raise FormatError(f"unsupported IQ2A version {version}")
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != count * 4:
        raise FormatError("truncated IQ2A payload")
    quads = data.reshape(count, 4).astype(np.float64)
    r1 = quads[:, 0] + 1j * quads[:, 1]
    r2 = quads[:, 2] + 1j * quads[:, 3]
    return r1, r2, int(block_len)
