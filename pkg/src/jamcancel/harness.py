"""Experiment drivers: BER sweeps, channel-state classification, smoothing
study and offline stream cancellation.

Every result row is reproducible bit-exact from (config, seed): scenarios
are seeded, grid points derive their own seeds, and rows are sorted before
CSV emission so worker scheduling cannot change the output.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import modem
from .canceller import ActionKind, CancellerState, run_stream
from .channel import BlockState, Scenario, ScenarioConfig, build_scenario
from .dataset import Dataset
from .iqcore import UsageError, measure_power
from .network import PhaseNet, load_weights

STATE_NAMES = ("noise", "single", "collision")

_SCHEME_NAMES = {s: s.value for s in modem.ModScheme}


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_csv(path, header: list[str], rows: list[tuple]):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def stream_tensors(r1, r2, block_len: int) -> np.ndarray:
    """Stack a two-antenna recording into the (n, 2, M, 2) network batch."""
    n = min(r1.size, r2.size) // block_len
    b1 = np.asarray(r1)[:n * block_len].reshape(n, block_len)
    b2 = np.asarray(r2)[:n * block_len].reshape(n, block_len)
    t = np.empty((n, 2, block_len, 2), dtype=np.float32)
    t[:, 0, :, 0] = b1.real
    t[:, 1, :, 0] = b1.imag
    t[:, 0, :, 1] = b2.real
    t[:, 1, :, 1] = b2.imag
    return t


def infer_stream(net: PhaseNet, r1, r2, block_len: int, batch_size: int = 512):
    """Network outputs (p (n,2), i (n,2)) for every block of a recording."""
    tensors = stream_tensors(r1, r2, block_len)
    ps, is_ = [], []
    for start in range(0, tensors.shape[0], batch_size):
        p, i = net.infer(tensors[start:start + batch_size])
        ps.append(p)
        is_.append(i)
    if not ps:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.concatenate(ps), np.concatenate(is_)


# ---------------------------------------------------------------------------
# BER measurement: per-packet preamble equalization then differential demod.

def packet_bit_errors(output_stream: np.ndarray, scenario: Scenario):
    """(errors, bits) counted over the payload bits of every packet."""
    scheme = scenario.config.scheme
    errors = 0
    bits = 0
    for payload, (a, b) in zip(scenario.truth.sent_payloads,
                               scenario.truth.packet_symbol_ranges):
        if b > output_stream.size:
            continue
        chunk = output_stream[a:b]
        gain = np.vdot(modem.PREAMBLE, chunk[:modem.PREAMBLE_LEN]) / modem.PREAMBLE_LEN
        if abs(gain) < 1e-12:
            errors += payload.size  # unrecoverable packet: count all bits wrong
            bits += payload.size
            continue
        eq = chunk / gain
        decoded = modem.demodulate(eq[modem.PREAMBLE_LEN - 1:], scheme)
        start = modem.LENGTH_FIELD_BITS
        got = decoded[start:start + payload.size]
        if got.size < payload.size:
            got = np.concatenate([got, np.zeros(payload.size - got.size, np.uint8)])
        errors += int(np.sum(got != payload))
        bits += payload.size
    return errors, bits


def oracle_cancel_stream(scenario: Scenario) -> np.ndarray:
    """Cancel every collision block using the ground-truth p1."""
    cfg = scenario.config
    m = cfg.block_len
    out = scenario.r1.copy()
    p1 = scenario.truth.gains.p1
    for b, state in enumerate(scenario.truth.states):
        if state is BlockState.COLLISION:
            sl = slice(b * m, (b + 1) * m)
            out[sl] = scenario.r1[sl] - p1 * scenario.r2[sl]
    return out


def cnn_cancel_stream(net: PhaseNet, scenario: Scenario, lam: float,
                      smoothing_mode: str = "phasor"):
    cfg = scenario.config
    outputs = infer_stream(net, scenario.r1, scenario.r2, cfg.block_len)
    state = CancellerState(lam=lam, smoothing_mode=smoothing_mode)
    out, actions, diags, state = run_stream(
        state, scenario.r1, scenario.r2, outputs, cfg.scheme, cfg.block_len)
    if out.size < scenario.r1.size:
        out = np.concatenate([out, scenario.r1[out.size:]])
    return out, actions, diags, state


# ---------------------------------------------------------------------------
# BER sweep.

MODES = ("no_cancel", "oracle_cancel", "cnn_cancel")


@dataclass
class SweepSpec:
    schemes: tuple = (modem.ModScheme.DBPSK,)
    sjr_db: tuple = (-18.0, -14.0, -10.0, -6.0, -2.0)
    sep_rad: tuple = (2 * np.pi / 3,)
    lambdas: tuple = (0.01,)
    modes: tuple = MODES
    snr_db: float = 20.0
    bits_per_point: int = 100_000
    payload_bytes: int = 256
    warmup_blocks: int = 30
    seed: int = 1


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    sjr_db: float
    sep_rad: float
    lam: float
    mode: str
    ber: float
    bits_counted: int
    errors_counted: int
    low_confidence: int

    def as_tuple(self):
        return (self.scheme, self.sjr_db, self.sep_rad, self.lam, self.mode,
                self.ber, self.bits_counted, self.errors_counted,
                self.low_confidence)


RESULT_HEADER = ["scheme", "sjr_db", "sep_rad", "lambda", "mode", "ber",
                 "bits_counted", "errors_counted", "low_confidence"]


def _point_seed(base: int, scheme, sjr, sep, lam, mode) -> int:
    key = f"{scheme.value}|{sjr:.6f}|{sep:.6f}|{lam:.6f}|{mode}"
    h = 0
    for ch in key:
        h = (h * 131 + ord(ch)) & 0xFFFFFFFF
    return (base * 0x9E3779B1 + h) & 0x7FFFFFFF


def run_sweep_point(net: PhaseNet | None, spec: SweepSpec, scheme, sjr, sep,
                    lam, mode) -> ResultRow:
    payload_bits = spec.payload_bytes * 8
    n_packets = max(1, -(-spec.bits_per_point // payload_bits))
    cfg = ScenarioConfig(
        scheme=scheme, sjr_db=sjr, snr_db=spec.snr_db, sep_rad=sep,
        seed=_point_seed(spec.seed, scheme, sjr, sep, lam, mode),
        n_packets=n_packets, payload_bytes=spec.payload_bytes,
        warmup_blocks=spec.warmup_blocks)
    scenario = build_scenario(cfg)
    if mode == "no_cancel":
        out = scenario.r1
    elif mode == "oracle_cancel":
        out = oracle_cancel_stream(scenario)
    elif mode == "cnn_cancel":
        if net is None:
            raise UsageError("cnn_cancel mode requires trained weights")
        out, _, _, _ = cnn_cancel_stream(net, scenario, lam)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    errors, bits = packet_bit_errors(out, scenario)
    ber = errors / bits if bits else 1.0
    return ResultRow(scheme.value, float(sjr), float(sep), float(lam), mode,
                     ber, bits, errors, int(errors < 10))


def _grid(spec: SweepSpec):
    for scheme in spec.schemes:
        for sjr in spec.sjr_db:
            for sep in spec.sep_rad:
                for lam in spec.lambdas:
                    for mode in spec.modes:
                        yield scheme, float(sjr), float(sep), float(lam), mode


def _sweep_worker(args):
    spec, weights_path, point = args
    net = load_weights(weights_path) if (
        weights_path and point[4] == "cnn_cancel") else None
    return run_sweep_point(net, spec, *point)


def run_sweep(spec: SweepSpec, net: PhaseNet | None = None,
              weights_path=None) -> list[ResultRow]:
    """Evaluate the whole grid; rows come back sorted regardless of workers."""
    points = list(_grid(spec))
    workers = int(os.environ.get("JC_THREADS", "1") or "1")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker,
                                 [(spec, weights_path, pt) for pt in points]))
    else:
        rows = []
        for pt in points:
            use_net = net
            if use_net is None and weights_path and pt[4] == "cnn_cancel":
                use_net = load_weights(weights_path)
            rows.append(run_sweep_point(use_net, spec, *pt))
    return sorted(rows, key=lambda r: (r.scheme, r.mode, r.sep_rad, r.lam, r.sjr_db))


def sjr_at_ber(rows: list[ResultRow], target_ber: float) -> float | None:
    """SJR (dB) where BER crosses the target, by log-linear interpolation.

    Rows must share scheme/mode/sep/lambda and span the crossing; returns the
    lowest (hardest) crossing SJR, or None if the target is never reached.
    """
    pts = sorted((r.sjr_db, max(r.ber, 1e-12)) for r in rows)
    best = None
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if (y0 - target_ber) * (y1 - target_ber) <= 0 and y0 != y1:
            t = (np.log10(target_ber) - np.log10(y0)) / (np.log10(y1) - np.log10(y0))
            best = x0 + t * (x1 - x0)
            break
    if best is None:
        reached = [x for x, y in pts if y <= target_ber]
        best = min(reached) if reached else None
    return best


# ---------------------------------------------------------------------------
# Channel-state classification.

@dataclass
class ClassificationReport:
    confusion: np.ndarray  # 3x3, rows = truth, cols = predicted
    accuracy: float
    precision: np.ndarray  # per class
    recall: np.ndarray
    f1: np.ndarray

    @property
    def macro_precision(self):
        return float(np.mean(self.precision))

    @property
    def macro_recall(self):
        return float(np.mean(self.recall))

    @property
    def macro_f1(self):
        return float(np.mean(self.f1))


def _report_from_labels(true_cls: np.ndarray, pred_cls: np.ndarray) -> ClassificationReport:
    confusion = np.zeros((3, 3), dtype=np.int64)
    np.add.at(confusion, (true_cls, pred_cls), 1)
    accuracy = float(np.trace(confusion) / max(confusion.sum(), 1))
    precision = np.zeros(3)
    recall = np.zeros(3)
    for k in range(3):
        col = confusion[:, k].sum()
        row = confusion[k, :].sum()
        precision[k] = confusion[k, k] / col if col else 0.0
        recall[k] = confusion[k, k] / row if row else 0.0
    denom = np.where(precision + recall > 0, precision + recall, 1.0)
    f1 = np.where(precision + recall > 0, 2 * precision * recall / denom, 0.0)
    return ClassificationReport(confusion, accuracy, precision, recall, f1)


def classify_dataset(net: PhaseNet, data: Dataset, batch_size: int = 512) -> ClassificationReport:
    """Confusion over labeled examples (0 noise, 1 single, 2 collision)."""
    true_cls = data.class_of().astype(np.int64)
    preds = []
    for start in range(0, len(data), batch_size):
        _, i = net.infer(data.tensors[start:start + batch_size])
        preds.append((i > 0.5).sum(axis=1))
    pred_cls = np.concatenate(preds).astype(np.int64) if preds else np.zeros(0, np.int64)
    return _report_from_labels(true_cls, pred_cls)


_STATE_TO_CLASS = {
    BlockState.NOISE: 0,
    BlockState.SENDER_ONLY: 1,
    BlockState.JAMMER_ONLY: 1,
    BlockState.COLLISION: 2,
}


def classify_scenario(net: PhaseNet, scenario: Scenario) -> ClassificationReport:
    """Per-block channel-state confusion against scenario ground truth."""
    cfg = scenario.config
    p, i = infer_stream(net, scenario.r1, scenario.r2, cfg.block_len)
    pred_cls = (i > 0.5).sum(axis=1).astype(np.int64)
    true_cls = np.array([_STATE_TO_CLASS[s] for s in scenario.truth.states],
                        dtype=np.int64)[:pred_cls.size]
    return _report_from_labels(true_cls, pred_cls)


def report_rows(report: ClassificationReport) -> list[tuple]:
    rows = []
    for t in range(3):
        for pr in range(3):
            rows.append(("confusion", STATE_NAMES[t], STATE_NAMES[pr],
                         int(report.confusion[t, pr])))
    rows.append(("metric", "accuracy", "", report.accuracy))
    rows.append(("metric", "macro_precision", "", report.macro_precision))
    rows.append(("metric", "macro_recall", "", report.macro_recall))
    rows.append(("metric", "macro_f1", "", report.macro_f1))
    for k in range(3):
        rows.append(("metric", f"recall_{STATE_NAMES[k]}", "", float(report.recall[k])))
        rows.append(("metric", f"precision_{STATE_NAMES[k]}", "", float(report.precision[k])))
    return rows


# ---------------------------------------------------------------------------
# Smoothing study.

@dataclass
class SmoothingResult:
    lam: float
    energy_variance: float
    ber: float
    energies: np.ndarray


def smoothing_study(net: PhaseNet, scheme=modem.ModScheme.DBPSK,
                    sep_rad: float = np.pi / 2, sjr_db: float = -12.0,
                    snr_db: float = 20.0, lambdas=(1.0, 0.1, 0.01, 0.001),
                    n_packets: int = 24, payload_bytes: int = 256,
                    seed: int = 7) -> list[SmoothingResult]:
    """Per-lambda block-energy traces and BER on one collision-heavy scenario."""
    cfg = ScenarioConfig(scheme=scheme, sjr_db=sjr_db, snr_db=snr_db,
                         sep_rad=sep_rad, seed=seed, n_packets=n_packets,
                         payload_bytes=payload_bytes, warmup_blocks=30)
    scenario = build_scenario(cfg)
    m = cfg.block_len
    results = []
    for lam in lambdas:
        out, actions, _, _ = cnn_cancel_stream(net, scenario, lam)
        energies = np.array([
            measure_power(out[b * m:(b + 1) * m])
            for b, kind in enumerate(actions) if kind is ActionKind.CANCELLED])
        errors, bits = packet_bit_errors(out, scenario)
        results.append(SmoothingResult(
            lam=float(lam),
            energy_variance=float(np.var(energies)) if energies.size else 0.0,
            ber=errors / bits if bits else 1.0,
            energies=energies))
    return results
