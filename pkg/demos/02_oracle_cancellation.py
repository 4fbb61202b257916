"""Two-antenna nulling with ground-truth channel knowledge.

A jammer 20 dB stronger than the sender is removed exactly by combining the
two antenna streams with the true nulling coefficient p1 = h_J1 / h_J2:

    R1 - p1 * R2 = (h_S1 - p1 * h_S2) * S

The jammer vanishes and the sender survives scaled by p2 = h_S1 - p1*h_S2,
whose magnitude grows with the phase-shift separation between the two
emitters. Run with:  python3 demos/02_oracle_cancellation.py
"""

import numpy as np

from jamcancel.channel import ScenarioConfig, build_scenario
from jamcancel.harness import oracle_cancel_stream, packet_bit_errors
from jamcancel.modem import ModScheme

print("scheme   sep      |p2|    BER before   BER after")
for scheme in (ModScheme.DBPSK, ModScheme.DQPSK, ModScheme.QAM16):
    for sep in (np.pi / 3, np.pi / 2, 2 * np.pi / 3):
        cfg = ScenarioConfig(scheme=scheme, sjr_db=-20.0, snr_db=40.0,
                             sep_rad=sep, seed=3, n_packets=8,
                             payload_bytes=256)
        sc = build_scenario(cfg)

        raw_errors, bits = packet_bit_errors(sc.r1, sc)
        out = oracle_cancel_stream(sc)
        errors, _ = packet_bit_errors(out, sc)

        p2 = abs(sc.truth.gains.p2)
        print(f"{scheme.value:7s}  {sep:5.3f}  {p2:5.3f}   "
              f"{raw_errors / bits:9.3e}   {errors / bits:9.3e}")

print()
print("The 'before' column is the jammed antenna-1 stream (unreadable at")
print("SJR -20 dB); the 'after' column is the combined stream.")
