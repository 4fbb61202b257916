"""Two-antenna jamming detection and cancellation testbed.

Submodules:
    iqcore    -- complex baseband primitives (blocks, power, correlation, RNG)
    modem     -- differential modulation schemes, packet framing, CRC
    channel   -- two-antenna channel model, jammer profiles, scenarios, IQ files
    dataset   -- labeled tensor construction, augmentation, dataset files
    network   -- from-scratch convolutional phase/indicator estimator
    canceller -- per-block cancellation state machine
    harness   -- BER sweeps, classification reports, smoothing studies
    cli       -- command-line driver
"""

from . import canceller, channel, dataset, harness, iqcore, modem, network
from .canceller import CancellerState, cancel, run_stream, smooth_phase
from .channel import ScenarioConfig, build_scenario, load_scenario_config
from .dataset import DatasetConfig, assemble_dataset, read_dataset, write_dataset
from .iqcore import IqBlock, UsageError, make_rng, wrap_phase
from .modem import ModScheme, Packet, demodulate, frame, modulate, serialize_packet
from .network import NetConfig, PhaseNet, TrainConfig, load_weights, save_weights, train

__all__ = [
    "canceller", "channel", "dataset", "harness", "iqcore", "modem", "network",
    "CancellerState", "cancel", "run_stream", "smooth_phase",
    "ScenarioConfig", "build_scenario", "load_scenario_config",
    "DatasetConfig", "assemble_dataset", "read_dataset", "write_dataset",
    "IqBlock", "UsageError", "make_rng", "wrap_phase",
    "ModScheme", "Packet", "demodulate", "frame", "modulate", "serialize_packet",
    "NetConfig", "PhaseNet", "TrainConfig", "load_weights", "save_weights", "train",
]

__version__ = "0.1.0"
