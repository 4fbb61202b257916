"""Train a miniature phase-shift estimator end to end in about a minute.

Builds a small labeled dataset (noise / single emitter / collision blocks),
trains a reduced network on it, and prints the channel-state classification
report on the held-out test split.

Telling a lone Gaussian-noise jammer apart from plain receiver noise takes
learned cross-antenna correlation, so the miniature run here is deliberately
under-trained and scores modestly. The full-size run behind the committed
weights in models/ (60,000 examples, 64 filters) uses the CLI:

    jamcancel generate-dataset --out desk.jcds --seed 0
    jamcancel train --dataset desk.jcds --weights-out phase_net_desk.jcnn

Run with:  python3 demos/03_train_small_model.py
"""

import pathlib

from jamcancel.dataset import DatasetConfig, assemble_dataset, split_dataset
from jamcancel.harness import classify_dataset
from jamcancel.network import NetConfig, TrainConfig, load_weights, train

WEIGHTS = pathlib.Path(__file__).resolve().parent.parent / "models" / "phase_net_desk.jcnn"


def report(tag, net, test):
    r = classify_dataset(net, test)
    print(f"{tag}: accuracy {r.accuracy:.2%}, collision recall {r.recall[2]:.2%}")
    print("  confusion matrix (rows = truth: noise, single, collision):")
    for row in r.confusion:
        print("   ", "  ".join(f"{int(v):4d}" for v in row))


print("assembling 1,500 labeled blocks ...")
data = assemble_dataset(DatasetConfig(n_noise=500, n_single=500,
                                      n_collision=500, seed=0))
split = split_dataset(data, seed=0)

print("training a 16-filter model for 6 epochs ...")
net, history = train(split, NetConfig(n_filters=16),
                     TrainConfig(epochs=6, batch_size=128, seed=0))
for h in history:
    print(f"  epoch {h['epoch']}  train {h['train_loss']:.4f}  "
          f"val {h['val_loss']:.4f}  lr {h['lr']:g}")
print()
report("miniature model", net, split.test)

if WEIGHTS.exists():
    print()
    report("full-size committed model on the same test blocks",
           load_weights(WEIGHTS), split.test)
else:
    print(f"\n(no committed weights at {WEIGHTS}; train them with the CLI "
          f"to see the full-scale comparison)")
