"""Complex-baseband primitives shared by every stage of the pipeline.

Samples are numpy complex128 arrays throughout the DSP path; a block is a
fixed-length window of samples tagged with the antenna it came from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BLOCK_LEN = 128

TWO_PI = 2.0 * np.pi


class UsageError(ValueError):
    """Caller violated a precondition (empty block, bad lengths, ...)."""


def wrap_phase(theta):
    """Wrap an angle (or array of angles) into [-pi, pi)."""
    return np.mod(np.asarray(theta) + np.pi, TWO_PI) - np.pi


def circular_distance(a, b):
    """Shortest angular distance |wrap(a - b)|, in [0, pi]."""
    return np.abs(wrap_phase(np.asarray(a) - np.asarray(b)))


@dataclass(frozen=True)
class IqBlock:
    """One fixed-length window of complex samples from a single antenna."""

    samples: np.ndarray
    antenna_id: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", s)
        if s.ndim != 1 or s.size == 0:
            raise UsageError("block samples must be a non-empty 1-D array")
        if self.antenna_id not in (1, 2):
            raise UsageError(f"antenna_id must be 1 or 2, got {self.antenna_id}")
        if not np.all(np.isfinite(s.view(np.float64))):
            raise UsageError("block contains non-finite samples")

    def __len__(self):
        return self.samples.size


def _as_samples(x) -> np.ndarray:
    if isinstance(x, IqBlock):
        return x.samples
    return np.asarray(x, dtype=np.complex128)


def measure_power(block) -> float:
    """Mean squared magnitude (1/M) * sum |x_t|^2 of a block or sample array."""
    s = _as_samples(block)
    if s.size == 0:
        raise UsageError("cannot measure power of an empty block")
    return float(np.mean(np.abs(s) ** 2))


def rotate(block, theta: float):
    """Multiply every sample by e^{j*theta}; power is preserved.

    Returns the same container kind as the input (IqBlock in, IqBlock out).
    """
    phasor = np.exp(1j * float(theta))
    if isinstance(block, IqBlock):
        return IqBlock(block.samples * phasor, block.antenna_id)
    return _as_samples(block) * phasor


def cross_correlate(received, reference):
    """Direct time-domain cross-correlation peak search.

    Scans every lag where the reference fits inside the received sequence
    and returns (peak_lag, peak_phase, peak_magnitude) for the lag that
    maximizes |sum_t received[t+lag] * conj(reference[t])|.
    """
    rx = _as_samples(received)
    ref = _as_samples(reference)
    if ref.size == 0 or rx.size == 0:
        raise UsageError("received and reference must be non-empty")
    if ref.size > rx.size:
        raise UsageError("reference longer than received sequence")
    # np.correlate conjugates its second argument, matching sum rx[t+lag]*conj(ref[t]).
    corr = np.correlate(rx, ref, mode="valid")
    lag = int(np.argmax(np.abs(corr)))
    peak = corr[lag]
    return lag, float(wrap_phase(np.angle(peak))), float(np.abs(peak))


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic random stream (PCG64); same seed, same draws, any platform."""
    return np.random.Generator(np.random.PCG64(seed))


def complex_gaussian(rng: np.random.Generator, n: int, power: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given mean power."""
    if power < 0:
        raise UsageError("noise power must be >= 0")
    scale = np.sqrt(power / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def split_into_blocks(samples, block_len: int, antenna_id: int) -> list[IqBlock]:
    """Chop a sample stream into consecutive full blocks; trailing remainder dropped."""
    s = _as_samples(samples)
    n_blocks = s.size // block_len
    return [
        IqBlock(s[i * block_len:(i + 1) * block_len], antenna_id)
        for i in range(n_blocks)
    ]
