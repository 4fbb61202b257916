"""Differential modems, packet framing and the decodability check.

All four schemes are differential so an unknown constant channel phase never
needs a pilot: the PSK schemes encode bits purely in symbol-to-symbol phase
transitions, and 16-QAM rotates the quadrant differentially (2 bits) while
the remaining 2 bits pick the point inside the quadrant.

Packet layout on the wire (symbols):
    [preamble: 64 fixed symbols][length: u16 BE, bits][payload bits][CRC-32]
The data bits are differentially encoded starting from the last preamble
symbol. CRC-32 is the standard IEEE variant (polynomial 0x04C11DB7,
reflected, init 0xFFFFFFFF) over the payload bits packed MSB-first into
bytes.
"""

from __future__ import annotations

import binascii
import enum
from dataclasses import dataclass

import numpy as np

from .iqcore import UsageError, make_rng

PREAMBLE_LEN = 64
PREAMBLE_THRESHOLD = 0.6
LENGTH_FIELD_BITS = 16
CRC_BITS = 32


class ModScheme(enum.Enum):
    DBPSK = "dbpsk"
    DQPSK = "dqpsk"
    D8PSK = "d8psk"
    QAM16 = "qam16"


BITS_PER_SYMBOL = {
    ModScheme.DBPSK: 1,
    ModScheme.DQPSK: 2,
    ModScheme.D8PSK: 3,
    ModScheme.QAM16: 4,
}

# Fixed pseudo-random QPSK preamble, identical for every packet and scheme.
_pre_rng = make_rng(0x4A43_5052)
PREAMBLE = np.exp(1j * (np.pi / 4 + np.pi / 2 * _pre_rng.integers(0, 4, PREAMBLE_LEN)))
del _pre_rng

# 16-QAM intra-quadrant points in the first-quadrant frame, unit average
# constellation power (grid levels {1,3} scaled by 1/sqrt(10)).
_QAM_LEVELS = np.array([1.0, 3.0]) / np.sqrt(10.0)
_QAM_AXIS_THRESHOLD = 2.0 / np.sqrt(10.0)


def _gray_encode(k: np.ndarray) -> np.ndarray:
    return k ^ (k >> 1)


def _gray_decode_table(order: int) -> np.ndarray:
    """Lookup table mapping a Gray code word to its rank."""
    table = np.zeros(order, dtype=np.int64)
    table[_gray_encode(np.arange(order))] = np.arange(order)
    return table


_GRAY_RANK = {order: _gray_decode_table(order) for order in (2, 4, 8)}


def _pad_bits(bits, bps: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8).ravel()
    if np.any(b > 1):
        raise UsageError("bit stream must contain only 0/1")
    pad = (-b.size) % bps
    if pad:
        b = np.concatenate([b, np.zeros(pad, dtype=np.uint8)])
    return b


def _bits_to_words(bits: np.ndarray, bps: int) -> np.ndarray:
    words = bits.reshape(-1, bps).astype(np.int64)
    weights = 1 << np.arange(bps - 1, -1, -1)
    return words @ weights


def _words_to_bits(words: np.ndarray, bps: int) -> np.ndarray:
    shifts = np.arange(bps - 1, -1, -1)
    return ((words[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def _encode_psk(bits: np.ndarray, scheme: ModScheme, ref: complex) -> np.ndarray:
    bps = BITS_PER_SYMBOL[scheme]
    order = 1 << bps
    gray = _bits_to_words(bits, bps)
    steps = _GRAY_RANK[order][gray]
    phases = np.angle(ref) + np.cumsum(steps) * (2 * np.pi / order)
    return np.exp(1j * phases)


def _decode_psk(samples: np.ndarray, scheme: ModScheme) -> np.ndarray:
    bps = BITS_PER_SYMBOL[scheme]
    order = 1 << bps
    delta = np.angle(samples[1:] * np.conj(samples[:-1]))
    steps = np.round(delta / (2 * np.pi / order)).astype(np.int64) % order
    return _words_to_bits(_gray_encode(steps), bps)


def _quadrant(x: np.ndarray) -> np.ndarray:
    """Quadrant index 0..3 of each sample (angle // 90 degrees)."""
    ang = np.mod(np.angle(x), 2 * np.pi)
    return np.floor_divide(ang, np.pi / 2).astype(np.int64) % 4


def _encode_qam16(bits: np.ndarray, ref: complex) -> np.ndarray:
    words = bits.reshape(-1, 4)
    gray_q = _bits_to_words(words[:, :2].reshape(-1), 2)
    steps = _GRAY_RANK[4][gray_q]
    quadrants = (_quadrant(np.array([ref]))[0] + np.cumsum(steps)) % 4
    re = _QAM_LEVELS[words[:, 2].astype(np.int64)]
    im = _QAM_LEVELS[words[:, 3].astype(np.int64)]
    return (re + 1j * im) * np.exp(1j * quadrants * np.pi / 2)


def _decode_qam16(samples: np.ndarray) -> np.ndarray:
    scale = np.sqrt(np.mean(np.abs(samples) ** 2))
    if scale <= 0:
        return np.zeros(4 * (samples.size - 1), dtype=np.uint8)
    x = samples / scale
    q = _quadrant(x)
    steps = (q[1:] - q[:-1]) % 4
    qbits = _words_to_bits(_gray_encode(steps), 2).reshape(-1, 2)
    base = x[1:] * np.exp(-1j * q[1:] * np.pi / 2)
    abit = (base.real > _QAM_AXIS_THRESHOLD).astype(np.uint8)
    bbit = (base.imag > _QAM_AXIS_THRESHOLD).astype(np.uint8)
    return np.column_stack([qbits, abit, bbit]).ravel().astype(np.uint8)


def modulate(bits, scheme: ModScheme) -> np.ndarray:
    """Map a bit stream to unit-average-power symbols.

    The first output symbol is the differential reference; bits are padded
    with zeros to a symbol boundary if needed.
    """
    b = _pad_bits(bits, BITS_PER_SYMBOL[scheme])
    ref = np.exp(1j * np.pi / 4)
    if b.size == 0:
        return np.array([ref])
    if scheme is ModScheme.QAM16:
        body = _encode_qam16(b, ref)
    else:
        body = _encode_psk(b, scheme, ref)
    return np.concatenate([[ref], body])


def demodulate(samples, scheme: ModScheme) -> np.ndarray:
    """Inverse of modulate: decides each symbol against its predecessor.

    Noisy symbols decode to the nearest constellation decision. The PSK
    schemes are invariant to any constant rotation of the whole sequence;
    16-QAM tolerates quarter-turn rotations and assumes amplitude has been
    equalized to unit average power (it self-normalizes by RMS).
    """
    x = np.asarray(samples, dtype=np.complex128)
    if x.size < 2:
        raise UsageError("need at least 2 samples to demodulate")
    if scheme is ModScheme.QAM16:
        return _decode_qam16(x)
    return _decode_psk(x, scheme)


def crc32_of_bits(bits) -> int:
    """CRC-32 (IEEE) over the bit stream packed MSB-first into bytes."""
    b = np.asarray(bits, dtype=np.uint8).ravel()
    return binascii.crc32(np.packbits(b).tobytes()) & 0xFFFFFFFF


def _int_to_bits(value: int, width: int) -> np.ndarray:
    return ((value >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8)


def _bits_to_int(bits: np.ndarray) -> int:
    return int(np.asarray(bits, dtype=np.uint64) @ (1 << np.arange(bits.size - 1, -1, -1, dtype=np.uint64)))


@dataclass(frozen=True)
class Packet:
    payload_bits: np.ndarray
    crc: int


def frame(payload_bits) -> Packet:
    """Attach the CRC to a payload bit stream."""
    b = np.asarray(payload_bits, dtype=np.uint8).ravel()
    if b.size == 0:
        raise UsageError("payload must be non-empty")
    if b.size >= 1 << LENGTH_FIELD_BITS:
        raise UsageError("payload too long for the 16-bit length field")
    return Packet(payload_bits=b, crc=crc32_of_bits(b))


def packet_data_bits(packet: Packet) -> np.ndarray:
    """[length u16 BE][payload][CRC-32] as a bit stream."""
    return np.concatenate([
        _int_to_bits(packet.payload_bits.size, LENGTH_FIELD_BITS),
        packet.payload_bits,
        _int_to_bits(packet.crc, CRC_BITS),
    ])


def serialize_packet(packet: Packet, scheme: ModScheme) -> np.ndarray:
    """Preamble symbols followed by the differentially encoded data bits."""
    bits = _pad_bits(packet_data_bits(packet), BITS_PER_SYMBOL[scheme])
    ref = PREAMBLE[-1]
    if scheme is ModScheme.QAM16:
        body = _encode_qam16(bits, ref)
    else:
        body = _encode_psk(bits, scheme, ref)
    return np.concatenate([PREAMBLE, body])


def packet_symbol_count(payload_len_bits: int, scheme: ModScheme) -> int:
    bps = BITS_PER_SYMBOL[scheme]
    data_bits = LENGTH_FIELD_BITS + payload_len_bits + CRC_BITS
    return PREAMBLE_LEN + -(-data_bits // bps)


def find_preamble(samples: np.ndarray) -> tuple[int, complex, float]:
    """Locate the preamble by normalized correlation.

    Returns (lag, complex_gain, normalized_peak); normalized_peak is in
    [0, 1] and compares against PREAMBLE_THRESHOLD.
    """
    x = np.asarray(samples, dtype=np.complex128)
    if x.size < PREAMBLE_LEN:
        return 0, 0j, 0.0
    corr = np.correlate(x, PREAMBLE, mode="valid")
    e = np.abs(x) ** 2
    csum = np.concatenate([[0.0], np.cumsum(e)])
    window = csum[PREAMBLE_LEN:] - csum[:-PREAMBLE_LEN]
    denom = np.sqrt(np.maximum(window, 1e-300) * PREAMBLE_LEN)
    norm = np.abs(corr) / denom
    lag = int(np.argmax(norm))
    gain = corr[lag] / PREAMBLE_LEN
    return lag, complex(gain), float(norm[lag])


def check_decodable(samples, scheme: ModScheme, threshold: float = PREAMBLE_THRESHOLD):
    """Alg.-style decodability oracle: preamble correlation + CRC.

    Returns (decodable, payload_bits or None). Never raises on bad input
    data; any failure is just "not decodable".
    """
    x = np.asarray(samples, dtype=np.complex128)
    if x.size < PREAMBLE_LEN + 2:
        return False, None
    lag, gain, peak = find_preamble(x)
    if peak < threshold or abs(gain) < 1e-12:
        return False, None
    eq = x[lag:] / gain
    if eq.size < PREAMBLE_LEN + 1:
        return False, None
    bits = demodulate(eq[PREAMBLE_LEN - 1:], scheme)
    if bits.size < LENGTH_FIELD_BITS + CRC_BITS:
        return False, None
    length = _bits_to_int(bits[:LENGTH_FIELD_BITS])
    end = LENGTH_FIELD_BITS + length + CRC_BITS
    if length == 0 or end > bits.size:
        return False, None
    payload = bits[LENGTH_FIELD_BITS:LENGTH_FIELD_BITS + length]
    crc = _bits_to_int(bits[LENGTH_FIELD_BITS + length:end])
    if crc != crc32_of_bits(payload):
        return False, None
    return True, payload


def bit_error_rate(sent, received) -> float:
    """Fraction of differing bit positions between two equal-length streams."""
    a = np.asarray(sent, dtype=np.uint8).ravel()
    b = np.asarray(received, dtype=np.uint8).ravel()
    if a.size != b.size:
        raise UsageError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise UsageError("empty bit streams")
    return float(np.mean(a != b))
