"""BER vs. SJR sweep: unprotected receiver vs. ground-truth cancellation.

Sweeps the signal-to-jamming ratio, measures packet BER in each mode, writes
a CSV, and renders an SVG plot. If the trained weights in
models/phase_net_desk.jcnn exist, the learned canceller is swept too.

Run with:  python3 demos/04_ber_sweep.py
"""

import pathlib

from jamcancel.harness import RESULT_HEADER, SweepSpec, run_sweep, write_csv
from jamcancel.network import load_weights
from jamcancel.svgplot import line_plot

WEIGHTS = pathlib.Path(__file__).resolve().parent.parent / "models" / "phase_net_desk.jcnn"

modes = ["no_cancel", "oracle_cancel"]
net = None
if WEIGHTS.exists():
    net = load_weights(WEIGHTS)
    modes.append("cnn_cancel")
else:
    print(f"(no trained weights at {WEIGHTS}; skipping cnn_cancel)")

spec = SweepSpec(sjr_db=(-18.0, -12.0, -6.0, 0.0, 6.0), modes=tuple(modes),
                 bits_per_point=100_000, seed=1)
rows = run_sweep(spec, net=net)

out_csv = pathlib.Path("demo_sweep.csv")
write_csv(out_csv, RESULT_HEADER, [r.as_tuple() for r in rows])
print(f"wrote {out_csv}")
print(f"{'mode':14s} " + " ".join(f"{s:>9.0f}" for s in spec.sjr_db))
series = {}
for mode in modes:
    pts = [(r.sjr_db, max(r.ber, 1e-7)) for r in rows if r.mode == mode]
    series[mode] = pts
    print(f"{mode:14s} " + " ".join(f"{b:9.2e}" for _, b in pts))

svg = pathlib.Path("demo_sweep.svg")
svg.write_text(line_plot(series, title="DBPSK BER vs SJR",
                         xlabel="SJR (dB)", ylabel="BER", log_y=True))
print(f"wrote {svg}")
