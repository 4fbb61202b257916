"""Labeled-example construction for the phase network.

The labeling pipeline mirrors how captures would be labeled on hardware:
record each emitter separately through the channel, cross-correlate each
antenna against the known transmitted samples to extract the per-antenna
phases, diversify by rotating one antenna, and synthesize collisions by
adding sender and jammer captures.

Examples carry a 2 x M x 2 real tensor (I/Q rows, M samples, 2 antennas),
two phase slots ordered phi_1 <= phi_2 when both are present, and the two
signal indicators. A masked slot stores phase 0.0 with indicator 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import modem
from .channel import ChannelGains, FormatError, apply_channel
from .iqcore import (
    DEFAULT_BLOCK_LEN,
    IqBlock,
    UsageError,
    complex_gaussian,
    cross_correlate,
    make_rng,
    circular_distance,
    rotate,
    wrap_phase,
)

SPLIT_RATIOS = (0.64, 0.16, 0.20)
DEFAULT_CHUNK_LEN = 1024


class LabelingError(Exception):
    """Correlation peak too weak to trust the derived phase label."""


def build_input_tensor(block1: IqBlock, block2: IqBlock) -> np.ndarray:
    """Stack two antenna blocks into the 2 x M x 2 network input tensor."""
    if not isinstance(block1, IqBlock) or not isinstance(block2, IqBlock):
        raise UsageError("build_input_tensor expects IqBlock inputs")
    if {block1.antenna_id, block2.antenna_id} != {1, 2}:
        raise UsageError("need one block from each antenna")
    if block1.antenna_id == 2:
        block1, block2 = block2, block1
    if len(block1) != len(block2):
        raise UsageError("blocks must have equal length")
    m = len(block1)
    tensor = np.empty((2, m, 2), dtype=np.float32)
    tensor[0, :, 0] = block1.samples.real
    tensor[1, :, 0] = block1.samples.imag
    tensor[0, :, 1] = block2.samples.real
    tensor[1, :, 1] = block2.samples.imag
    return tensor


def tensor_to_blocks(tensor: np.ndarray) -> tuple[IqBlock, IqBlock]:
    """Inverse of build_input_tensor."""
    t = np.asarray(tensor)
    if t.ndim != 3 or t.shape[0] != 2 or t.shape[2] != 2:
        raise UsageError(f"expected a (2, M, 2) tensor, got shape {t.shape}")
    b1 = IqBlock(t[0, :, 0] + 1j * t[1, :, 0], 1)
    b2 = IqBlock(t[0, :, 1] + 1j * t[1, :, 1], 2)
    return b1, b2


def label_phase_shift(rx1, rx2, reference, min_peak: float = 0.5) -> float:
    """Phase-shift label wrap(phi_1 - phi_2) from per-antenna correlation peaks.

    `min_peak` is a normalized-correlation confidence floor; chunks whose
    peak falls below it raise LabelingError and are discarded.
    """
    ref = np.asarray(reference, dtype=np.complex128)
    ref_energy = np.sum(np.abs(ref) ** 2)
    phases = []
    for rx in (rx1, rx2):
        rx = np.asarray(rx, dtype=np.complex128)
        lag, phase, mag = cross_correlate(rx, ref)
        rx_energy = np.sum(np.abs(rx[lag:lag + ref.size]) ** 2)
        norm = mag / max(np.sqrt(ref_energy * rx_energy), 1e-300)
        if norm < min_peak:
            raise LabelingError(f"correlation peak {norm:.3f} below {min_peak}")
        phases.append(phase)
    return float(wrap_phase(phases[0] - phases[1]))


def augment_rotation(capture1, capture2, label: float, rng):
    """Diversify a capture pair by rotating antenna 2.

    `theta` is drawn uniform in [-pi, pi] and is the increment added to the
    phase-shift label; antenna 2 is counter-rotated by theta so that
    relabeling the augmented pair by correlation reproduces the new label.
    """
    theta = float(rng.uniform(-np.pi, np.pi))
    return (
        np.asarray(capture1, dtype=np.complex128),
        rotate(capture2, -theta),
        float(wrap_phase(label + theta)),
    )


def synthesize_collision(sender_pair, jammer_pair):
    """Element-wise per-antenna sum of two single-emitter capture pairs."""
    s1, s2 = (np.asarray(x, dtype=np.complex128) for x in sender_pair)
    j1, j2 = (np.asarray(x, dtype=np.complex128) for x in jammer_pair)
    if s1.size != j1.size or s2.size != j2.size:
        raise UsageError("capture pairs must have equal lengths")
    return s1 + j1, s2 + j2


def augment_batch_rotation(tensors, phis, inds, rng):
    """Fresh per-example rotation of antenna 2 with matching label shift.

    Same transform as augment_rotation, applied to a training batch of
    (n, 2, M, 2) tensors: antenna 2 is rotated by -theta, every active phase
    slot gains +theta, and collision slot pairs are re-sorted to keep the
    phi_1 <= phi_2 convention. Returns new (tensors, phis); inds are
    unchanged. Masked slots keep phase 0.
    """
    t = np.asarray(tensors)
    n = t.shape[0]
    theta = rng.uniform(-np.pi, np.pi, n)
    out = t.copy()
    re = t[:, 0, :, 1]
    im = t[:, 1, :, 1]
    c = np.cos(-theta)[:, None]
    s = np.sin(-theta)[:, None]
    out[:, 0, :, 1] = re * c - im * s
    out[:, 1, :, 1] = re * s + im * c
    ind = np.asarray(inds)
    phi = wrap_phase(np.asarray(phis, dtype=np.float64) + theta[:, None])
    phi = np.where(ind > 0, phi, 0.0)
    both = (ind > 0).all(axis=1)
    phi[both] = np.sort(phi[both], axis=1)
    return out, phi.astype(np.float32)


@dataclass(frozen=True)
class LabeledExample:
    tensor: np.ndarray  # (2, M, 2) float32
    phi_1: float
    phi_2: float
    ind_1: int
    ind_2: int


@dataclass
class Dataset:
    """Column-wise storage of examples; cheap to slice and serialize."""

    tensors: np.ndarray  # (n, 2, M, 2) float32
    phis: np.ndarray     # (n, 2) float32
    inds: np.ndarray     # (n, 2) uint8

    def __len__(self):
        return self.tensors.shape[0]

    @property
    def block_len(self) -> int:
        return self.tensors.shape[2]

    def example(self, i: int) -> LabeledExample:
        return LabeledExample(self.tensors[i], float(self.phis[i, 0]),
                              float(self.phis[i, 1]),
                              int(self.inds[i, 0]), int(self.inds[i, 1]))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.tensors[idx], self.phis[idx], self.inds[idx])

    @staticmethod
    def concatenate(parts: list["Dataset"]) -> "Dataset":
        return Dataset(
            np.concatenate([p.tensors for p in parts]),
            np.concatenate([p.phis for p in parts]),
            np.concatenate([p.inds for p in parts]),
        )

    def class_of(self) -> np.ndarray:
        """0 = noise, 1 = single, 2 = collision, from the indicator pair."""
        return self.inds.sum(axis=1)


@dataclass
class DatasetSplit:
    train: Dataset
    val: Dataset
    test: Dataset


def split_dataset(data: Dataset, seed: int) -> DatasetSplit:
    """Seeded shuffle then a 0.64 / 0.16 / 0.20 disjoint split."""
    n = len(data)
    order = make_rng(seed).permutation(n)
    n_train = round(SPLIT_RATIOS[0] * n)
    n_val = round(SPLIT_RATIOS[1] * n)
    return DatasetSplit(
        train=data.subset(order[:n_train]),
        val=data.subset(order[n_train:n_train + n_val]),
        test=data.subset(order[n_train + n_val:]),
    )


@dataclass
class DatasetConfig:
    n_noise: int = 20000
    n_single: int = 20000
    n_collision: int = 20000
    block_len: int = DEFAULT_BLOCK_LEN
    chunk_len: int = DEFAULT_CHUNK_LEN
    snr_db: float = 20.0
    # Collision mixing range. The weaker component must stay above the
    # receiver noise floor, or the example is unlabelable in principle: a
    # signal buried under both the other emitter and the noise leaves no
    # evidence in a 128-sample block, and training on such "collisions"
    # teaches the model to hallucinate second signals.
    sjr_db_range: tuple[float, float] = (-18.0, 12.0)
    single_level_db_range: tuple[float, float] = (-10.0, 22.0)
    # Two emitters with (near-)identical phase shifts are physically one
    # spatial signature; below this separation the two-signal label is
    # meaningless, so collision draws are rejected.
    min_sep_rad: float = np.pi / 12
    schemes: tuple[modem.ModScheme, ...] = (
        modem.ModScheme.DBPSK, modem.ModScheme.DQPSK,
        modem.ModScheme.D8PSK, modem.ModScheme.QAM16)
    noise_jammer_fraction: float = 0.5
    seed: int = 0


def _random_gains(rng) -> ChannelGains:
    phi = rng.uniform(-np.pi, np.pi, 4)
    a_j = float(np.exp(rng.uniform(np.log(0.5), np.log(2.0))))
    return ChannelGains(
        h_s1=complex(np.exp(1j * phi[0])),
        h_s2=complex(np.exp(1j * phi[1])),
        h_j1=complex(a_j * np.exp(1j * phi[2])),
        h_j2=complex(np.exp(1j * phi[3])),
    )


def _emitter_waveform(rng, n: int, cfg: DatasetConfig, noise_like: bool) -> np.ndarray:
    if noise_like:
        return complex_gaussian(rng, n, 1.0)
    scheme = cfg.schemes[rng.integers(0, len(cfg.schemes))]
    chunks, total = [], 0
    # Over-generate by at least one packet and slice at a random offset, so
    # captures are stationary segments of a packet stream. Without this every
    # capture would begin at a packet boundary and the preamble's fixed
    # position would become a spurious classification cue.
    pad = None
    while pad is None or total < n + pad:
        payload = rng.integers(0, 2, 256).astype(np.uint8)
        sym = modem.serialize_packet(modem.frame(payload), scheme)
        chunks.append(sym)
        total += sym.size
        pad = pad if pad is not None else sym.size
    stream = np.concatenate(chunks)
    off = rng.integers(0, stream.size - n + 1)
    return stream[off:off + n]


def _labeled_capture(rng, cfg: DatasetConfig, use_jammer_path: bool,
                     noise_like: bool):
    """One simulated single-emitter capture: (rx1, rx2, label).

    The transmitted samples play the role of the reference stored at the
    receiver; the label comes from correlation, not from the injected gains.
    """
    gains = _random_gains(rng)
    reference = _emitter_waveform(rng, cfg.chunk_len, cfg, noise_like)
    noise_power = 10 ** (-cfg.snr_db / 10)
    if use_jammer_path:
        rx1, rx2 = apply_channel(None, reference, gains, noise_power, rng)
    else:
        rx1, rx2 = apply_channel(reference, None, gains, noise_power, rng)
    label = label_phase_shift(rx1, rx2, reference)
    rx1, rx2, label = augment_rotation(rx1, rx2, label, rng)
    return rx1, rx2, label


def _chunk_to_examples(rx1, rx2, m: int):
    n = rx1.size // m
    tensors = np.empty((n, 2, m, 2), dtype=np.float32)
    b1 = rx1[:n * m].reshape(n, m)
    b2 = rx2[:n * m].reshape(n, m)
    tensors[:, 0, :, 0] = b1.real
    tensors[:, 1, :, 0] = b1.imag
    tensors[:, 0, :, 1] = b2.real
    tensors[:, 1, :, 1] = b2.imag
    return tensors


def assemble_dataset(cfg: DatasetConfig) -> Dataset:
    """Generate the configured class mix of noise/single/collision examples."""
    rng = make_rng(cfg.seed)
    m = cfg.block_len
    per_chunk = cfg.chunk_len // m
    if per_chunk < 1:
        raise UsageError("chunk_len must be at least block_len")
    noise_power = 10 ** (-cfg.snr_db / 10)

    tensors, phis, inds = [], [], []

    def emit(t, phi_pair, ind_pair):
        tensors.append(t)
        n = t.shape[0]
        phis.append(np.tile(np.asarray(phi_pair, dtype=np.float32), (n, 1)))
        inds.append(np.tile(np.asarray(ind_pair, dtype=np.uint8), (n, 1)))

    # Noise examples: receiver noise floor only.
    count = 0
    while count < cfg.n_noise:
        n = min(per_chunk, cfg.n_noise - count)
        rx1 = complex_gaussian(rng, n * m, noise_power)
        rx2 = complex_gaussian(rng, n * m, noise_power)
        emit(_chunk_to_examples(rx1, rx2, m), (0.0, 0.0), (0, 0))
        count += n

    # Single-emitter examples: the lone phase occupies slot 1.
    count = 0
    while count < cfg.n_single:
        noise_like = rng.uniform() < cfg.noise_jammer_fraction
        try:
            rx1, rx2, label = _labeled_capture(rng, cfg, noise_like, noise_like)
        except LabelingError:
            continue
        level = 10 ** (rng.uniform(*cfg.single_level_db_range) / 20)
        n = min(per_chunk, cfg.n_single - count)
        emit(_chunk_to_examples(level * rx1[:n * m], level * rx2[:n * m], m),
             (label, 0.0), (1, 0))
        count += n

    # Collisions: sender capture + scaled jammer capture; sorted labels.
    count = 0
    while count < cfg.n_collision:
        jammer_noise_like = rng.uniform() < cfg.noise_jammer_fraction
        try:
            s1, s2, phi_s = _labeled_capture(rng, cfg, False, False)
            j1, j2, phi_j = _labeled_capture(rng, cfg, True, jammer_noise_like)
        except LabelingError:
            continue
        if circular_distance(phi_s, phi_j) < cfg.min_sep_rad:
            continue
        jam_scale = 10 ** (-rng.uniform(*cfg.sjr_db_range) / 20)
        rx1, rx2 = synthesize_collision((s1, s2), (jam_scale * j1, jam_scale * j2))
        lo, hi = sorted((phi_s, phi_j))
        n = min(per_chunk, cfg.n_collision - count)
        emit(_chunk_to_examples(rx1[:n * m], rx2[:n * m], m), (lo, hi), (1, 1))
        count += n

    return Dataset(np.concatenate(tensors), np.concatenate(phis),
                   np.concatenate(inds))


# ---------------------------------------------------------------------------
# Dataset file format "JCDS": header {magic, version u16, M u32, count u64},
# then per example little-endian float32 tensor (2*M*2), float32 phi_1,
# float32 phi_2, u8 ind_1, u8 ind_2.

JCDS_MAGIC = b"JCDS"
JCDS_VERSION = 1
_JCDS_HEADER = struct.Struct("<4sHIQ")


def _record_dtype(m: int) -> np.dtype:
    return np.dtype([
        ("tensor", "<f4", (2, m, 2)),
        ("phi", "<f4", (2,)),
        ("ind", "u1", (2,)),
    ])


def write_dataset(path, data: Dataset):
    m = data.block_len if len(data) else DEFAULT_BLOCK_LEN
    records = np.zeros(len(data), dtype=_record_dtype(m))
    if len(data):
        records["tensor"] = data.tensors
        records["phi"] = data.phis
        records["ind"] = data.inds
    with open(path, "wb") as f:
        f.write(_JCDS_HEADER.pack(JCDS_MAGIC, JCDS_VERSION, m, len(data)))
        f.write(records.tobytes())


def read_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        header = f.read(_JCDS_HEADER.size)
        if len(header) != _JCDS_HEADER.size:
            raise FormatError("truncated JCDS header")
        magic, version, m, count = _JCDS_HEADER.unpack(header)
        if magic != JCDS_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != JCDS_VERSION:
            raise FormatError(f"unsupported JCDS version {version}")
        body = f.read()
    dtype = _record_dtype(m)
    if len(body) != count * dtype.itemsize:
        raise FormatError("truncated JCDS payload")
    records = np.frombuffer(body, dtype=dtype)
    if count == 0:
        return Dataset(np.zeros((0, 2, m, 2), np.float32),
                       np.zeros((0, 2), np.float32), np.zeros((0, 2), np.uint8))
    return Dataset(records["tensor"].copy(), records["phi"].copy(),
                   records["ind"].copy())
