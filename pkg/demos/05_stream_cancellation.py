"""The full receive loop on a recorded two-antenna stream.

Simulates a collision-heavy capture, saves it in the two-antenna interleaved
file format, then replays it through the classify/track/cancel state machine
the way the `jamcancel cancel-stream` command does. Requires the trained
weights in models/phase_net_desk.jcnn (see demos/03 or the README for how to
train them).

Run with:  python3 demos/05_stream_cancellation.py
"""

import collections
import pathlib

from jamcancel.canceller import CancellerState, run_stream
from jamcancel.channel import ScenarioConfig, build_scenario, read_iq2a, write_iq2a
from jamcancel.harness import infer_stream, packet_bit_errors
from jamcancel.network import load_weights

WEIGHTS = pathlib.Path(__file__).resolve().parent.parent / "models" / "phase_net_desk.jcnn"
if not WEIGHTS.exists():
    raise SystemExit(f"train a model first; no weights at {WEIGHTS}")

cfg = ScenarioConfig(sjr_db=-12.0, snr_db=20.0, n_packets=12, seed=5,
                     jammer_schedule="intermittent", jammer_on_blocks=40,
                     jammer_off_blocks=10)
scenario = build_scenario(cfg)
capture = pathlib.Path("demo_capture.iq2a")
write_iq2a(capture, scenario.r1, scenario.r2, cfg.block_len)
print(f"recorded {scenario.r1.size} samples per antenna to {capture}")

r1, r2, block_len = read_iq2a(capture)
net = load_weights(WEIGHTS)
outputs = infer_stream(net, r1, r2, block_len)
out, actions, diags, _ = run_stream(CancellerState(lam=0.01), r1, r2,
                                    outputs, cfg.scheme, block_len)

counts = collections.Counter(a.name for a in actions)
print("block actions:", dict(counts))

raw_err, bits = packet_bit_errors(scenario.r1, scenario)
out_err, _ = packet_bit_errors(out, scenario)
print(f"BER on the jammed antenna-1 stream: {raw_err / bits:.3e}")
print(f"BER after cancellation:             {out_err / bits:.3e}")
