"""Differential modulation basics: round trips, rotation invariance, AWGN BER.

Run with:  python3 demos/01_modem_basics.py
"""

import numpy as np

from jamcancel import modem
from jamcancel.iqcore import complex_gaussian, make_rng
from jamcancel.modem import ModScheme

rng = make_rng(1)

print("=== Round trips under an unknown constant channel rotation ===")
bits = rng.integers(0, 2, 1200)
for scheme in ModScheme:
    symbols = modem.modulate(bits, scheme)
    # A differential receiver never learns the absolute carrier phase, so a
    # constant rotation of the whole stream must be invisible to it. The
    # quadrant-differential 16-QAM keeps two bits per symbol in absolute
    # amplitude positions, so its invariance holds for quarter-turn
    # multiples only; the PSK schemes tolerate any rotation.
    theta = np.pi / 2 if scheme is ModScheme.QAM16 else 0.77
    rotated = symbols * np.exp(1j * theta)
    decoded = modem.demodulate(rotated, scheme)[:bits.size]
    ok = np.array_equal(decoded, bits)
    print(f"  {scheme.value:7s}  {symbols.size:4d} symbols for {bits.size} bits"
          f"  round trip under rotation: {'ok' if ok else 'BROKEN'}")

print()
print("=== DBPSK over AWGN vs. the closed-form error rate ===")
n_bits = 200_000
bits = rng.integers(0, 2, n_bits)
for snr_db in (4, 6, 8, 10):
    symbols = modem.modulate(bits, ModScheme.DBPSK)
    noisy = symbols + complex_gaussian(rng, symbols.size, 10 ** (-snr_db / 10))
    decoded = modem.demodulate(noisy, ModScheme.DBPSK)[:n_bits]
    ber = np.mean(decoded != bits)
    theory = 0.5 * np.exp(-(10 ** (snr_db / 10)))
    print(f"  SNR {snr_db:2d} dB   measured {ber:.3e}   theory {theory:.3e}")

print()
print("=== Packet framing: preamble + length + payload + CRC-32 ===")
payload = rng.integers(0, 2, 256)
packet = modem.frame(payload)
symbols = modem.serialize_packet(packet, ModScheme.DQPSK)
lag, gain, peak = modem.find_preamble(symbols)
print(f"  packet of {symbols.size} DQPSK symbols, CRC 0x{packet.crc:08X}, "
      f"preamble peak {peak:.3f} at lag {lag}")
print(f"  decodable (preamble + CRC pass): {modem.check_decodable(symbols, ModScheme.DQPSK)[0]}")
corrupted = symbols.copy()
corrupted[80] *= -1
print(f"  after flipping one symbol:       {modem.check_decodable(corrupted, ModScheme.DQPSK)[0]}")
