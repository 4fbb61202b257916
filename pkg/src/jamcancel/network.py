"""From-scratch CNN for phase-shift estimation and signal detection.

Architecture: three 3x3 conv layers (zero-pad 1, stride 1) each followed by
batch norm and ReLU, then a 2x1 conv (no padding) that collapses the I/Q
axis, batch norm, ReLU, flatten, and a single fully-connected map to four
outputs: two linear phase estimates and two sigmoid signal confidences.

The input tensor is (2, M, 2): I/Q rows x M samples x 2 antennas. Antennas
are the convolution channels; the 2 x M plane (I/Q x time) is spatial. Each
example is scaled to unit RMS before the first layer so the network is
invariant to absolute receive power.

Everything runs on plain numpy arrays; convolutions are lowered to matrix
multiplies via im2col so BLAS does the heavy lifting.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .channel import FormatError
from .dataset import DatasetSplit, augment_batch_rotation
from .iqcore import DEFAULT_BLOCK_LEN, UsageError, make_rng

_SIGMOID_CLIP = 30.0


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class NetConfig:
    block_len: int = DEFAULT_BLOCK_LEN
    n_filters: int = 64
    dtype: type = np.float32
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1


@dataclass
class TrainConfig:
    lr: float = 0.005
    batch_size: int = 256
    epochs: int = 20
    plateau_patience: int = 3
    plateau_factor: float = 0.5
    min_lr: float = 1e-5
    # Re-rotate antenna 2 of every training example each epoch (labels shifted
    # to match). The fixed dataset bakes in one rotation per capture; fresh
    # rotations stop the network from memorizing them, which otherwise shows
    # up as a systematic angle-dependent bias in the phase estimates.
    rotation_augment: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise UsageError("lr must be positive")
        if not 0 < self.plateau_factor < 1:
            raise UsageError("plateau_factor must be in (0, 1)")


# ---------------------------------------------------------------------------
# Layer primitives.

def _im2col(x: np.ndarray, kh: int, kw: int, ph: int, pw: int) -> np.ndarray:
    """(B, C, H, W) -> (B*H_out*W_out, C*kh*kw) patch matrix."""
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    b, c, ho, wo = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols)


def conv2d_forward(x, w, b, pad):
    f, c, kh, kw = w.shape
    ph, pw = pad
    bsz, _, h, wd = x.shape
    ho, wo = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1
    cols = _im2col(x, kh, kw, ph, pw)
    y = cols @ w.reshape(f, -1).T
    y += b
    return y.reshape(bsz, ho, wo, f).transpose(0, 3, 1, 2)


def conv2d_backward(x, w, pad, dy):
    """Returns (dx, dw, db). Recomputes the patch matrix from x."""
    f, c, kh, kw = w.shape
    ph, pw = pad
    bsz, _, h, wd = x.shape
    ho, wo = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1
    dy_rows = dy.transpose(0, 2, 3, 1).reshape(-1, f)
    cols = _im2col(x, kh, kw, ph, pw)
    dw = (dy_rows.T @ cols).reshape(w.shape)
    db = dy_rows.sum(axis=0)
    dcols = dy_rows @ w.reshape(f, -1)
    dcols = dcols.reshape(bsz, ho, wo, c, kh, kw)
    dxp = np.zeros((bsz, c, h + 2 * ph, wd + 2 * pw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, ph:h + ph, pw:wd + pw] if (ph or pw) else dxp
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var,
                      eps, momentum, train):
    """Per-channel batch norm over (B, H, W); running stats updated in train."""
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, (xhat, inv_std)


def batchnorm_backward(cache, gamma, dy):
    xhat, inv_std = cache
    n = dy.shape[0] * dy.shape[2] * dy.shape[3]
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    dx = (dxhat - dxhat.mean(axis=(0, 2, 3), keepdims=True)
          - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True) / n)
    dx *= inv_std[None, :, None, None]
    return dx, dgamma, dbeta


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_SIGMOID_CLIP, _SIGMOID_CLIP)))


# ---------------------------------------------------------------------------
# Loss functions. They accept a single example's (p, i) pair or a batch
# (leading axis); the batched form returns the per-example values.

def loss_phase(p, phi, ind):
    """Indicator-masked squared error on the two phase slots."""
    p = np.asarray(p, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    ind = np.asarray(ind, dtype=np.float64)
    val = (ind * (phi - p) ** 2).sum(axis=-1)
    return float(val) if val.ndim == 0 else val


def loss_signal(i, ind):
    """Binary cross-entropy summed over the two indicator heads."""
    i = np.clip(np.asarray(i, dtype=np.float64), 1e-12, 1 - 1e-12)
    ind = np.asarray(ind, dtype=np.float64)
    val = -(ind * np.log(i) + (1 - ind) * np.log(1 - i)).sum(axis=-1)
    return float(val) if val.ndim == 0 else val


def loss_total(p, i, phi, ind):
    return loss_phase(p, phi, ind) + loss_signal(i, ind)


# ---------------------------------------------------------------------------

_CONV_SPECS = (
    # name, kernel (kh, kw), padding (ph, pw)
    ("conv1", (3, 3), (1, 1)),
    ("conv2", (3, 3), (1, 1)),
    ("conv3", (3, 3), (1, 1)),
    ("conv4", (2, 1), (0, 0)),
)


class PhaseNet:
    """The phase/indicator network with explicit forward and backward."""

    def __init__(self, config: NetConfig = NetConfig(), seed: int = 0):
        self.config = config
        dt = config.dtype
        f = config.n_filters
        rng = make_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        self.stats: dict[str, np.ndarray] = {}
        c_in = 2
        for name, (kh, kw), _ in _CONV_SPECS:
            fan_in = c_in * kh * kw
            self.params[f"{name}_w"] = (
                rng.standard_normal((f, c_in, kh, kw)) * np.sqrt(2.0 / fan_in)
            ).astype(dt)
            self.params[f"{name}_b"] = np.zeros(f, dtype=dt)
            self.params[f"{name}_gamma"] = np.ones(f, dtype=dt)
            self.params[f"{name}_beta"] = np.zeros(f, dtype=dt)
            self.stats[f"{name}_mean"] = np.zeros(f, dtype=dt)
            self.stats[f"{name}_var"] = np.ones(f, dtype=dt)
            c_in = f
        d = f * config.block_len
        self.params["fc_w"] = (rng.standard_normal((4, d)) * np.sqrt(1.0 / d)).astype(dt)
        self.params["fc_b"] = np.zeros(4, dtype=dt)

    # -- forward -----------------------------------------------------------

    def _prepare(self, tensors: np.ndarray) -> np.ndarray:
        t = np.asarray(tensors)
        if t.ndim == 3:
            t = t[None]
        if t.shape[1:] != (2, self.config.block_len, 2):
            raise UsageError(
                f"expected (n, 2, {self.config.block_len}, 2) tensors, got {t.shape}")
        # (n, iq, M, antenna) -> (n, C=antenna, H=iq, W=M), unit RMS per example.
        x = t.transpose(0, 3, 1, 2).astype(self.config.dtype)
        rms = np.sqrt((x.astype(np.float64) ** 2).mean(axis=(1, 2, 3)) + 1e-30)
        x /= rms[:, None, None, None].astype(self.config.dtype)
        return np.ascontiguousarray(x)

    def forward(self, tensors, train: bool = False):
        """Returns (p (n,2), i (n,2), cache); cache is None in infer mode."""
        x = self._prepare(tensors)
        cache = {"inputs": [], "bn": [], "relu": []} if train else None
        h = x
        for name, _, pad in _CONV_SPECS:
            pre = h
            h = conv2d_forward(h, self.params[f"{name}_w"],
                               self.params[f"{name}_b"], pad)
            h, bn_cache = batchnorm_forward(
                h, self.params[f"{name}_gamma"], self.params[f"{name}_beta"],
                self.stats[f"{name}_mean"], self.stats[f"{name}_var"],
                self.config.bn_eps, self.config.bn_momentum, train)
            mask = h > 0
            h = h * mask
            if train:
                cache["inputs"].append(pre)
                cache["bn"].append(bn_cache)
                cache["relu"].append(mask)
        n = h.shape[0]
        flat = h.reshape(n, -1)
        out = flat @ self.params["fc_w"].T + self.params["fc_b"]
        p = out[:, :2].astype(np.float64)
        logits = out[:, 2:].astype(np.float64)
        i = _sigmoid(logits)
        if train:
            cache["flat"] = flat
            cache["conv_out_shape"] = h.shape
            cache["i"] = i
        return p, i, cache

    def infer(self, tensors):
        """Inference-mode outputs (p, i) using running BN statistics."""
        p, i, _ = self.forward(tensors, train=False)
        return p, i

    # -- backward ----------------------------------------------------------

    def backward(self, cache, phi, ind):
        """Gradients of the mean total loss over the batch in `cache`."""
        dt = self.config.dtype
        phi = np.asarray(phi, dtype=np.float64)
        ind = np.asarray(ind, dtype=np.float64)
        n = cache["flat"].shape[0]
        # Head gradients: masked MSE for phases, BCE via sigmoid for signals.
        flat = cache["flat"]
        p = (flat @ self.params["fc_w"].T + self.params["fc_b"])[:, :2].astype(np.float64)
        dout = np.empty((n, 4), dtype=dt)
        dout[:, :2] = (2.0 * ind * (p - phi) / n).astype(dt)
        dout[:, 2:] = ((cache["i"] - ind) / n).astype(dt)

        grads = {}
        grads["fc_w"] = dout.T @ flat
        grads["fc_b"] = dout.sum(axis=0)
        dh = (dout @ self.params["fc_w"]).reshape(cache["conv_out_shape"])

        for idx in range(len(_CONV_SPECS) - 1, -1, -1):
            name, _, pad = _CONV_SPECS[idx]
            dh = dh * cache["relu"][idx]
            dh, dgamma, dbeta = batchnorm_backward(
                cache["bn"][idx], self.params[f"{name}_gamma"], dh)
            grads[f"{name}_gamma"] = dgamma.astype(dt)
            grads[f"{name}_beta"] = dbeta.astype(dt)
            dh, dw, db = conv2d_backward(
                cache["inputs"][idx], self.params[f"{name}_w"], pad, dh)
            grads[f"{name}_w"] = dw.astype(dt)
            grads[f"{name}_b"] = db.astype(dt)
        return grads

    def loss_and_grads(self, tensors, phi, ind):
        p, i, cache = self.forward(tensors, train=True)
        loss = float(np.mean(loss_total(p, i, phi, ind)))
        grads = self.backward(cache, phi, ind)
        return loss, grads

    def batch_loss(self, tensors, phi, ind, train: bool = False):
        p, i, _ = self.forward(tensors, train=train)
        return float(np.mean(loss_total(p, i, phi, ind)))

    def copy_weights(self):
        return ({k: v.copy() for k, v in self.params.items()},
                {k: v.copy() for k, v in self.stats.items()})

    def set_weights(self, snapshot):
        params, stats = snapshot
        for k, v in params.items():
            self.params[k] = v.copy()
        for k, v in stats.items():
            self.stats[k] = v.copy()


# ---------------------------------------------------------------------------
# Training loop: Adam with reduce-on-plateau learning-rate decay.

class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1c = 1 - self.beta1 ** self.t
        b2c = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            g = g.astype(np.float64)
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            update = self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
            params[k] -= update.astype(params[k].dtype)


def _eval_loss(net: PhaseNet, data, batch_size: int) -> float:
    total, n = 0.0, len(data)
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        p, i, _ = net.forward(data.tensors[sl], train=False)
        total += float(np.sum(loss_total(p, i, data.phis[sl], data.inds[sl])))
    return total / max(n, 1)


def train(split: DatasetSplit, net_config: NetConfig = NetConfig(),
          train_config: TrainConfig = TrainConfig(), log=None):
    """Train on the split; returns (net with best-val weights, history rows)."""
    if len(split.train) == 0 or len(split.val) == 0:
        raise UsageError("train and val splits must be non-empty")
    cfg = train_config
    net = PhaseNet(net_config, seed=cfg.seed)
    opt = _Adam(net.params, cfg.lr)
    shuffle_rng = make_rng(cfg.seed + 0x5EED)
    aug_rng = make_rng(cfg.seed + 0xA06) if cfg.rotation_augment else None
    history = []
    best_val = np.inf
    best = net.copy_weights()
    since_improve = 0
    n = len(split.train)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        train_loss, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            t = split.train.tensors[idx]
            ph = split.train.phis[idx]
            ii = split.train.inds[idx]
            if aug_rng is not None:
                t, ph = augment_batch_rotation(t, ph, ii, aug_rng)
            loss, grads = net.loss_and_grads(t, ph, ii)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch}, step {start // cfg.batch_size}")
            opt.step(net.params, grads)
            train_loss += loss * idx.size
            seen += idx.size
        train_loss /= seen
        val_loss = _eval_loss(net, split.val, cfg.batch_size)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"validation loss non-finite at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss, "lr": opt.lr})
        if log:
            log(history[-1])
        if val_loss < best_val - 1e-6:
            best_val = val_loss
            best = net.copy_weights()
            since_improve = 0
        else:
            since_improve += 1
            if since_improve > cfg.plateau_patience:
                opt.lr = max(opt.lr * cfg.plateau_factor, cfg.min_lr)
                since_improve = 0
    net.set_weights(best)
    return net, history


# ---------------------------------------------------------------------------
# Weights file "JCNN": header {magic, version u16, M u32, n_filters u32},
# then named shape-prefixed little-endian float32 parameter blocks in a
# fixed order (learned parameters first, then BN running stats).

JCNN_MAGIC = b"JCNN"
JCNN_VERSION = 1
_JCNN_HEADER = struct.Struct("<4sHII")


def _ordered_blocks(net: PhaseNet):
    for key in sorted(net.params):
        yield key, net.params[key]
    for key in sorted(net.stats):
        yield f"stat:{key}", net.stats[key]


def save_weights(path, net: PhaseNet):
    with open(path, "wb") as f:
        f.write(_JCNN_HEADER.pack(JCNN_MAGIC, JCNN_VERSION,
                                  net.config.block_len, net.config.n_filters))
        for name, arr in _ordered_blocks(net):
            encoded = name.encode()
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f4").tobytes())


def load_weights(path, dtype=np.float32) -> PhaseNet:
    with open(path, "rb") as f:
        header = f.read(_JCNN_HEADER.size)
        if len(header) != _JCNN_HEADER.size:
            raise FormatError("truncated JCNN header")
        magic, version, block_len, n_filters = _JCNN_HEADER.unpack(header)
        if magic != JCNN_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != JCNN_VERSION:
            raise FormatError(f"unsupported JCNN version {version}")
        net = PhaseNet(NetConfig(block_len=block_len, n_filters=n_filters,
                                 dtype=dtype), seed=0)
        for name, expected in _ordered_blocks(net):
            raw = f.read(2)
            if len(raw) != 2:
                raise FormatError(f"missing parameter block {name!r}")
            (name_len,) = struct.unpack("<H", raw)
            got_name = f.read(name_len).decode()
            if got_name != name:
                raise FormatError(f"expected block {name!r}, found {got_name!r}")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            if shape != expected.shape:
                raise FormatError(
                    f"shape mismatch for {name}: file {shape}, model {expected.shape}")
            data = np.frombuffer(f.read(4 * int(np.prod(shape))), dtype="<f4")
            if data.size != int(np.prod(shape)):
                raise FormatError(f"truncated data for block {name!r}")
            arr = data.reshape(shape).astype(dtype)
            if name.startswith("stat:"):
                net.stats[name[5:]] = arr
            else:
                net.params[name] = arr
    return net
