"""Shared helpers and fixtures for the test suite."""

import pathlib

import numpy as np
import pytest

from jamcancel import dataset, network

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
DESK_WEIGHTS = REPO_ROOT / "models" / "phase_net_desk.jcnn"

# 60k examples; chunk_len 128 gives every example its own channel draw,
# which matters far more than correlation sharpness at this data scale.
DESK_DATASET_CONFIG = dataset.DatasetConfig(chunk_len=128, seed=0)
DESK_SPLIT_SEED = 0


def gradient_check(net: network.PhaseNet, tensors, phi, ind,
                   step: float = 1e-3, entries_per_block: int | None = None,
                   seed: int = 0):
    """Central-difference verification of every parameter block.

    Compares the analytic gradient of each block against central differences
    norm-wise: ||analytic - numeric|| / max(||analytic||, ||numeric||) over
    the checked entries (all entries by default; pass `entries_per_block`
    for a faster random subsample). Returns {block_name: relative error}.
    """
    tensors = np.asarray(tensors)
    phi = np.asarray(phi)
    ind = np.asarray(ind)
    _, grads = net.loss_and_grads(tensors, phi, ind)
    rng = np.random.default_rng(seed)
    errors = {}
    for name, param in net.params.items():
        flat = param.reshape(-1)
        g = grads[name].reshape(-1)
        if entries_per_block is None or entries_per_block >= flat.size:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=entries_per_block, replace=False)
        analytic = g[idx].astype(np.float64)
        numeric = np.empty_like(analytic)
        for pos, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + step
            up = net.batch_loss(tensors, phi, ind, train=True)
            flat[k] = orig - step
            down = net.batch_loss(tensors, phi, ind, train=True)
            flat[k] = orig
            numeric[pos] = (up - down) / (2 * step)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        diff = float(np.linalg.norm(analytic - numeric))
        # Blocks whose true gradient is exactly zero (a conv bias feeding
        # batch norm is a no-op) compare on absolute error: both sides are
        # pure float roundoff there and any ratio would be meaningless.
        errors[name] = diff / denom if denom > 1e-8 else diff
    return errors


def tiny_double_net(block_len: int = 8, n_filters: int = 2,
                    seed: int = 0) -> network.PhaseNet:
    """Double-precision miniature network for gradient verification."""
    cfg = network.NetConfig(block_len=block_len, n_filters=n_filters,
                            dtype=np.float64)
    return network.PhaseNet(cfg, seed=seed)


def tiny_batch(block_len: int = 8, n: int = 4, seed: int = 3):
    """A small mixed batch with both masked and unmasked phase slots."""
    rng = np.random.default_rng(seed)
    tensors = rng.normal(size=(n, 2, block_len, 2)).astype(np.float64)
    phi = rng.uniform(-np.pi, np.pi, size=(n, 2)).astype(np.float64)
    ind = np.array([[0, 0], [1, 0], [1, 1], [1, 1]][:n], dtype=np.float64)
    phi[ind == 0] = 0.0
    return tensors, phi, ind


@pytest.fixture(scope="session")
def desk_dataset():
    """The full desk-scale dataset, regenerated deterministically."""
    return dataset.assemble_dataset(DESK_DATASET_CONFIG)


@pytest.fixture(scope="session")
def desk_split(desk_dataset):
    return dataset.split_dataset(desk_dataset, DESK_SPLIT_SEED)


@pytest.fixture(scope="session")
def desk_net(desk_split):
    """The trained desk-scale model: loaded from the committed weights if
    present, otherwise trained from scratch (CPU, well under two hours)."""
    if DESK_WEIGHTS.exists():
        return network.load_weights(DESK_WEIGHTS)
    net, _ = network.train(desk_split, network.NetConfig(),
                           network.TrainConfig(seed=0, epochs=27,
                                               rotation_augment=True))
    DESK_WEIGHTS.parent.mkdir(exist_ok=True)
    network.save_weights(DESK_WEIGHTS, net)
    return net
