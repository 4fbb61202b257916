"""Command-line driver.

Subcommands: generate-dataset, train, classify, ber-sweep, smoothing-study,
cancel-stream. Each takes an optional flat key-value config file via
--config; explicit flags win over config-file values.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 acceptance
assertion failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import canceller, channel, dataset, harness, modem, network
from .channel import FormatError
from .iqcore import UsageError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ASSERTION = 3


def _load_kv_config(path) -> dict[str, str]:
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _merged(args, parser_defaults: dict):
    """Config-file values fill in options the command line left unset."""
    overrides = _load_kv_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, default in parser_defaults.items():
        given = getattr(args, key)
        if given is not None:
            out[key] = given
        elif key in overrides:
            caster = type(default) if default is not None else str
            raw = overrides[key]
            out[key] = caster(raw) if caster is not bool else raw.lower() in ("1", "true", "yes")
        else:
            out[key] = default
    return out


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _scheme_list(text: str) -> tuple[modem.ModScheme, ...]:
    return tuple(modem.ModScheme(v.strip().lower())
                 for v in text.replace(",", " ").split())


# ---------------------------------------------------------------------------

_DATASET_DEFAULTS = dict(n_noise=20000, n_single=20000, n_collision=20000,
                         block_len=128, chunk_len=1024, snr_db=20.0, seed=0)


def cmd_generate_dataset(args) -> int:
    opts = _merged(args, _DATASET_DEFAULTS)
    for key in ("n_noise", "n_single", "n_collision"):
        if opts[key] == 0:
            print(f"warning: zero examples configured for {key}", file=sys.stderr)
    cfg = dataset.DatasetConfig(
        n_noise=opts["n_noise"], n_single=opts["n_single"],
        n_collision=opts["n_collision"], block_len=opts["block_len"],
        chunk_len=opts["chunk_len"], snr_db=opts["snr_db"], seed=opts["seed"])
    data = dataset.assemble_dataset(cfg)
    dataset.write_dataset(args.out, data)
    cls = data.class_of()
    labeled = data.phis[data.inds.astype(bool)]
    print(f"wrote {len(data)} examples to {args.out}")
    print(f"class counts: noise={int(np.sum(cls == 0))} "
          f"single={int(np.sum(cls == 1))} collision={int(np.sum(cls == 2))}")
    if labeled.size:
        print(f"phase labels: mean={labeled.mean():+.4f} "
              f"std={labeled.std():.4f} min={labeled.min():+.4f} max={labeled.max():+.4f}")
    return EXIT_OK


_TRAIN_DEFAULTS = dict(lr=0.005, batch_size=256, epochs=20, plateau_patience=3,
                       plateau_factor=0.5, seed=0, split_seed=0, n_filters=64,
                       augment=0)


def cmd_train(args) -> int:
    opts = _merged(args, _TRAIN_DEFAULTS)
    data = dataset.read_dataset(args.dataset)
    split = dataset.split_dataset(data, opts["split_seed"])
    net_cfg = network.NetConfig(block_len=data.block_len,
                                n_filters=opts["n_filters"])
    train_cfg = network.TrainConfig(
        lr=opts["lr"], batch_size=opts["batch_size"], epochs=opts["epochs"],
        plateau_patience=opts["plateau_patience"],
        plateau_factor=opts["plateau_factor"], seed=opts["seed"],
        rotation_augment=bool(opts["augment"]))

    def log(row):
        print(f"epoch {row['epoch']:3d}  train {row['train_loss']:.5f}  "
              f"val {row['val_loss']:.5f}  lr {row['lr']:.5g}", flush=True)

    if args.resume:
        net = network.load_weights(args.resume)
        net, history = _train_from(net, split, train_cfg, log)
    else:
        net, history = network.train(split, net_cfg, train_cfg, log=log)
    network.save_weights(args.weights_out, net)
    history_path = args.history or (str(args.weights_out) + ".history.csv")
    harness.write_csv(history_path, ["epoch", "train_loss", "val_loss", "lr"],
                      [(h["epoch"], h["train_loss"], h["val_loss"], h["lr"])
                       for h in history])
    best = min(h["val_loss"] for h in history)
    print(f"best validation loss: {best:.5f}")
    print(f"weights written to {args.weights_out}")
    return EXIT_OK


def _train_from(net, split, train_cfg, log):
    """Continue training from existing weights (fresh optimizer moments;
    the learning-rate schedule continues from the configured lr)."""
    opt = network._Adam(net.params, train_cfg.lr)
    history = []
    best_val = np.inf
    best = net.copy_weights()
    since_improve = 0
    shuffle_rng = network.make_rng(train_cfg.seed + 0x5EED)
    aug_rng = (network.make_rng(train_cfg.seed + 0xA06)
               if train_cfg.rotation_augment else None)
    n = len(split.train)
    for epoch in range(train_cfg.epochs):
        order = shuffle_rng.permutation(n)
        train_loss, seen = 0.0, 0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            t = split.train.tensors[idx]
            ph = split.train.phis[idx]
            ii = split.train.inds[idx]
            if aug_rng is not None:
                t, ph = dataset.augment_batch_rotation(t, ph, ii, aug_rng)
            loss, grads = net.loss_and_grads(t, ph, ii)
            if not np.isfinite(loss):
                raise network.TrainingDiverged(f"loss non-finite at epoch {epoch}")
            opt.step(net.params, grads)
            train_loss += loss * idx.size
            seen += idx.size
        val_loss = network._eval_loss(net, split.val, train_cfg.batch_size)
        history.append({"epoch": epoch, "train_loss": train_loss / seen,
                        "val_loss": val_loss, "lr": opt.lr})
        if log:
            log(history[-1])
        if val_loss < best_val - 1e-6:
            best_val, best, since_improve = val_loss, net.copy_weights(), 0
        else:
            since_improve += 1
            if since_improve > train_cfg.plateau_patience:
                opt.lr = max(opt.lr * train_cfg.plateau_factor, train_cfg.min_lr)
                since_improve = 0
    net.set_weights(best)
    return net, history


def cmd_classify(args) -> int:
    net = network.load_weights(args.weights)
    if args.dataset:
        data = dataset.read_dataset(args.dataset)
        split = dataset.split_dataset(data, args.split_seed or 0)
        report = harness.classify_dataset(net, split.test)
    else:
        cfg = channel.load_scenario_config(args.scenario_config)
        scenario = channel.build_scenario(cfg)
        report = harness.classify_scenario(net, scenario)
    harness.write_csv(args.out, ["kind", "name", "predicted", "value"],
                      harness.report_rows(report))
    print(f"accuracy: {report.accuracy:.4%}")
    print(f"macro precision/recall/F1: {report.macro_precision:.4f} "
          f"{report.macro_recall:.4f} {report.macro_f1:.4f}")
    print(f"collision recall: {report.recall[2]:.4%}")
    print(f"report written to {args.out}")
    return EXIT_OK


_SWEEP_DEFAULTS = dict(schemes="dbpsk", sjr_db="-18,-14,-10,-6,-2",
                       sep_rad="2.0944", lambdas="0.01",
                       modes="no_cancel,oracle_cancel,cnn_cancel",
                       snr_db=20.0, bits_per_point=100_000, seed=1)


def cmd_ber_sweep(args) -> int:
    opts = _merged(args, _SWEEP_DEFAULTS)
    modes = tuple(m.strip() for m in opts["modes"].replace(",", " ").split())
    for mode in modes:
        if mode not in harness.MODES:
            raise UsageError(f"unknown mode {mode!r}")
    spec = harness.SweepSpec(
        schemes=_scheme_list(opts["schemes"]),
        sjr_db=_float_list(opts["sjr_db"]),
        sep_rad=_float_list(opts["sep_rad"]),
        lambdas=_float_list(opts["lambdas"]),
        modes=modes, snr_db=opts["snr_db"],
        bits_per_point=opts["bits_per_point"], seed=opts["seed"])
    net = network.load_weights(args.weights) if args.weights else None
    if net is None and "cnn_cancel" in modes:
        raise UsageError("cnn_cancel mode requires --weights")
    rows = harness.run_sweep(spec, net=net, weights_path=args.weights)
    harness.write_csv(args.out, harness.RESULT_HEADER,
                      [r.as_tuple() for r in rows])
    print(f"{len(rows)} rows written to {args.out}")
    if args.svg:
        from .svgplot import line_plot
        for scheme in spec.schemes:
            series = {}
            for r in rows:
                if r.scheme != scheme.value or r.ber <= 0:
                    continue
                series.setdefault(
                    f"{r.mode} sep={r.sep_rad:.2f}", []).append((r.sjr_db, r.ber))
            svg = line_plot(series, title=f"BER vs SJR ({scheme.value})",
                            xlabel="SJR (dB)", ylabel="BER", log_y=True)
            path = args.svg.replace("SCHEME", scheme.value)
            with open(path, "w") as f:
                f.write(svg)
            print(f"plot written to {path}")
    return EXIT_OK


_SMOOTH_DEFAULTS = dict(scheme="dbpsk", sep_rad=float(np.pi / 2), sjr_db=-12.0,
                        snr_db=20.0, lambdas="1,0.1,0.01,0.001",
                        n_packets=24, seed=7)


def cmd_smoothing_study(args) -> int:
    opts = _merged(args, _SMOOTH_DEFAULTS)
    net = network.load_weights(args.weights)
    results = harness.smoothing_study(
        net, scheme=modem.ModScheme(opts["scheme"]), sep_rad=opts["sep_rad"],
        sjr_db=opts["sjr_db"], snr_db=opts["snr_db"],
        lambdas=_float_list(opts["lambdas"]), n_packets=opts["n_packets"],
        seed=opts["seed"])
    rows = [(r.lam, r.energy_variance, r.ber) for r in results]
    harness.write_csv(args.out, ["lambda", "energy_variance", "ber"], rows)
    trace_path = args.out.replace(".csv", "") + ".energy.csv"
    trace_rows = []
    for r in results:
        for b, e in enumerate(r.energies):
            trace_rows.append((r.lam, b, float(e)))
    harness.write_csv(trace_path, ["lambda", "block", "energy"], trace_rows)
    for r in results:
        print(f"lambda={r.lam:<7g} energy_variance={r.energy_variance:.6g} ber={r.ber:.3g}")
    by_lam = {r.lam: r for r in results}
    ok = True
    if {1.0, 0.1, 0.01} <= set(by_lam):
        ok = (by_lam[0.01].energy_variance < by_lam[0.1].energy_variance
              < by_lam[1.0].energy_variance)
    if not ok:
        print("assertion failed: energy variance not ordered "
              "var(0.01) < var(0.1) < var(1)", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_cancel_stream(args) -> int:
    net = network.load_weights(args.weights)
    r1, r2, block_len = channel.read_iq2a(args.iq_in)
    outputs = harness.infer_stream(net, r1, r2, block_len)
    state = canceller.CancellerState(lam=args.smoothing_lambda)
    scheme = modem.ModScheme(args.scheme)
    out, actions, diags, _ = canceller.run_stream(
        state, r1, r2, outputs, scheme, block_len)
    if out.size < r1.size:
        out = np.concatenate([out, r1[out.size:]])
    channel.write_iq1a(args.iq_out, out, block_len)
    if args.trace:
        rows = []
        for b, (kind, d) in enumerate(zip(actions, diags)):
            rows.append((b, d.state.value, kind.value, d.role,
                         "" if d.phase is None else f"{d.phase:.6f}",
                         "" if d.a_j is None else f"{d.a_j:.6f}",
                         f"{d.e_t[0]:.6g}", f"{d.e_t[1]:.6g}"))
        harness.write_csv(args.trace,
                          ["block", "state", "action", "role", "phase", "a_j",
                           "e_t1", "e_t2"], rows)
        print(f"trace written to {args.trace}")
    print(f"{out.size} samples written to {args.iq_out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jamcancel",
        description="Two-antenna jamming detection and cancellation testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-dataset", help="synthesize a labeled dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    for key in _DATASET_DEFAULTS:
        p.add_argument(f"--{key.replace('_', '-')}",
                       dest=key, type=type(_DATASET_DEFAULTS[key]))
    p.set_defaults(func=cmd_generate_dataset)

    p = sub.add_parser("train", help="train the phase network")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--weights-out", required=True)
    p.add_argument("--history")
    p.add_argument("--resume", help="continue from an existing weights file")
    for key in _TRAIN_DEFAULTS:
        p.add_argument(f"--{key.replace('_', '-')}",
                       dest=key, type=type(_TRAIN_DEFAULTS[key]))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="channel-state confusion matrix")
    p.add_argument("--weights", required=True)
    p.add_argument("--scenario-config")
    p.add_argument("--dataset", help="use the test split of a dataset file instead")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("ber-sweep", help="BER grid over SJR/sep/lambda/scheme")
    p.add_argument("--config")
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", help="SVG output path; SCHEME is substituted")
    for key, default in _SWEEP_DEFAULTS.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=type(default))
    p.set_defaults(func=cmd_ber_sweep)

    p = sub.add_parser("smoothing-study", help="lambda sweep on one scenario")
    p.add_argument("--config")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    for key, default in _SMOOTH_DEFAULTS.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=type(default))
    p.set_defaults(func=cmd_smoothing_study)

    p = sub.add_parser("cancel-stream", help="apply the canceller to an IQ2A file")
    p.add_argument("--weights", required=True)
    p.add_argument("--scheme", default="dbpsk")
    p.add_argument("--smoothing-lambda", type=float, default=0.01)
    p.add_argument("--trace", help="per-block diagnostics CSV")
    p.add_argument("iq_in")
    p.add_argument("iq_out")
    p.set_defaults(func=cmd_cancel_stream)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, dataset.LabelingError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
