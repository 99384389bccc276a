"""ST-LSTM, PilotNet and J-Net stacks, the trainer, and weight serialisation.

Inputs are batches shaped (N, T, H, W, C) as produced by the data pipeline.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .data import DatasetSplit
from .nn.layers import (BatchNorm, Conv, ConvLSTM2D, Dense, Dropout, Flatten, MaxPool,
                        Network, Normalize, Permute, ReLU, Reshape)
from .nn.ops import mse_loss
from .nn.optim import AdamState, adam_step
from .search_space import Configuration


@dataclass(frozen=True)
class STLSTMConfig:
    convlstm_maps: tuple[int, int, int, int] = (4, 4, 4, 4)
    conv3d_maps: int = 1
    fc_neurons: int = 5
    dropout_rate: float = 0.0
    learning_rate: float = 1e-3
    kernel_size: tuple[int, int] = (3, 3)
    conv3d_kernel: tuple[int, int, int] = (3, 3, 3)
    pixel_input: bool = False  # True: inputs are raw 0..255 pixels

    def __post_init__(self):
        object.__setattr__(self, "convlstm_maps", tuple(int(m) for m in self.convlstm_maps))
        object.__setattr__(self, "kernel_size", tuple(self.kernel_size))
        object.__setattr__(self, "conv3d_kernel", tuple(self.conv3d_kernel))
        if len(self.convlstm_maps) != 4 or min(self.convlstm_maps) < 1:
            raise ValueError("need four positive ConvLSTM feature-map counts")
        if self.conv3d_maps < 1 or self.fc_neurons < 1:
            raise ValueError("layer widths must be positive")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ValueError("dropout must lie in [0, 0.5]")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")

    @classmethod
    def from_configuration(cls, cfg, **kw) -> "STLSTMConfig":
        v = cfg.values if isinstance(cfg, Configuration) else cfg
        return cls(convlstm_maps=tuple(int(v[f"convlstm{i}_maps"]) for i in range(1, 5)),
                   conv3d_maps=int(v["conv3d_maps"]), fc_neurons=int(v["fc_neurons"]),
                   dropout_rate=float(v["dropout"]), learning_rate=float(v["learning_rate"]), **kw)


def _normalizer(pixel_input: bool) -> Normalize:
    return Normalize() if pixel_input else Normalize(1.0, 0.0)


def build_stlstm(cfg: STLSTMConfig, input_shape, seed: int = 0) -> Network:
    """Normalisation -> 4 x (ConvLSTM + BN) -> Conv3D -> 2x2x2 max-pool -> Flatten ->
    Dense(fc) -> Dropout -> Dense(1).  ``input_shape`` is (T, H, W, C)."""
    T, H, W, C = input_shape
    rng = np.random.default_rng(seed)
    pad = tuple(k // 2 for k in cfg.conv3d_kernel)
    if T < 2 or H < 2 or W < 2:
        raise ValueError(f"input {input_shape} too small for 2x2x2 pooling")
    layers = [_normalizer(cfg.pixel_input), Permute((0, 3, 1, 2))]  # -> (T, C, H, W)
    ch = C
    for maps in cfg.convlstm_maps:
        layers += [ConvLSTM2D(ch, maps, (H, W), rng, cfg.kernel_size), BatchNorm(maps, axis=2)]
        ch = maps
    layers += [Permute((1, 0, 2, 3)),  # -> (C, T, H, W)
               Conv(ch, cfg.conv3d_maps, cfg.conv3d_kernel, rng, padding=pad), ReLU(),
               MaxPool((2, 2, 2)), Flatten()]
    flat = cfg.conv3d_maps * (T // 2) * (H // 2) * (W // 2)
    layers += [Dense(flat, cfg.fc_neurons, rng), ReLU(),
               Dropout(cfg.dropout_rate, seed), Dense(cfg.fc_neurons, 1, rng)]
    meta = {"arch": "stlstm", "input_shape": list(input_shape), "seed": seed,
            "config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}}
    return Network(layers, "stlstm", meta)


def stlstm_param_count(cfg: STLSTMConfig, input_shape) -> int:
    """Closed-form trainable-parameter count of ``build_stlstm``."""
    T, H, W, C = input_shape
    kh, kw = cfg.kernel_size
    total, ch = 0, C
    for m in cfg.convlstm_maps:
        total += 4 * m * ch * kh * kw + 4 * m * m * kh * kw + 3 * m * H * W + 4 * m  # cell
        total += 2 * m  # batch norm
        ch = m
    total += cfg.conv3d_maps * ch * math.prod(cfg.conv3d_kernel) + cfg.conv3d_maps
    flat = cfg.conv3d_maps * (T // 2) * (H // 2) * (W // 2)
    total += flat * cfg.fc_neurons + cfg.fc_neurons + cfg.fc_neurons + 1
    return total


@dataclass(frozen=True)
class ConvSpec:
    out_ch: int
    kernel: int
    stride: int = 1


PILOTNET_CONVS = (ConvSpec(24, 5, 2), ConvSpec(36, 5, 2), ConvSpec(48, 5, 2),
                  ConvSpec(64, 3), ConvSpec(64, 3))
PILOTNET_DENSE = (100, 50, 10)
JNET_CONVS = (ConvSpec(16, 3), ConvSpec(32, 3), ConvSpec(64, 3))
JNET_DENSE = 10


def _frames_as_channels(input_shape, pixel_input):
    T, H, W, C = input_shape
    # (T, H, W, C) -> (T, C, H, W) -> (T*C, H, W)
    return [_normalizer(pixel_input), Permute((0, 3, 1, 2)), Reshape((T * C, H, W))], T * C, H, W


def build_pilotnet(input_shape, seed: int = 0, convs=PILOTNET_CONVS, dense=PILOTNET_DENSE,
                   pixel_input: bool = False) -> Network:
    """Normalisation, five convolutions (three 5x5 stride 2, two 3x3), three dense layers.

    ``input_shape`` is (T, H, W, C); frames are stacked along channels.
    """
    input_shape = tuple(input_shape) if len(input_shape) == 4 else (1, *input_shape)
    rng = np.random.default_rng(seed)
    layers, ch, h, w = _frames_as_channels(input_shape, pixel_input)
    for spec in convs:
        h = (h - spec.kernel) // spec.stride + 1
        w = (w - spec.kernel) // spec.stride + 1
        if h < 1 or w < 1:
            raise ValueError(f"input {input_shape} too small for PilotNet")
        layers += [Conv(ch, spec.out_ch, (spec.kernel,) * 2, rng, stride=spec.stride), ReLU()]
        ch = spec.out_ch
    layers.append(Flatten())
    n = ch * h * w
    for width in dense:
        layers += [Dense(n, width, rng), ReLU()]
        n = width
    layers.append(Dense(n, 1, rng))
    meta = {"arch": "pilotnet", "input_shape": list(input_shape), "seed": seed}
    return Network(layers, "pilotnet", meta)


def build_jnet(input_shape, seed: int = 0, convs=JNET_CONVS, dense: int = JNET_DENSE,
               pixel_input: bool = False) -> Network:
    """Normalisation, three convolutions each followed by 2x2 max-pooling, a
    ten-unit dense layer and the output unit."""
    input_shape = tuple(input_shape) if len(input_shape) == 4 else (1, *input_shape)
    rng = np.random.default_rng(seed)
    layers, ch, h, w = _frames_as_channels(input_shape, pixel_input)
    for spec in convs:
        h = ((h - spec.kernel) // spec.stride + 1) // 2
        w = ((w - spec.kernel) // spec.stride + 1) // 2
        if h < 1 or w < 1:
            raise ValueError(f"input {input_shape} too small for J-Net")
        layers += [Conv(ch, spec.out_ch, (spec.kernel,) * 2, rng, stride=spec.stride), ReLU(),
                   MaxPool((2, 2))]
        ch = spec.out_ch
    layers += [Flatten(), Dense(ch * h * w, dense, rng), ReLU(), Dense(dense, 1, rng)]
    meta = {"arch": "jnet", "input_shape": list(input_shape), "seed": seed}
    return Network(layers, "jnet", meta)


def build_network(arch: str, input_shape, seed: int = 0, cfg: STLSTMConfig | None = None) -> Network:
    if arch == "stlstm":
        return build_stlstm(cfg or STLSTMConfig(), input_shape, seed)
    if arch == "pilotnet":
        return build_pilotnet(input_shape, seed)
    if arch == "jnet":
        return build_jnet(input_shape, seed)
    raise ValueError(f"unknown architecture {arch!r}")


# --- training ------------------------------------------------------------------

@dataclass
class TrainReport:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    epochs_run: int = 0
    early_stopped: bool = False
    diverged: bool = False
    best_epoch: int = 0
    weights_digest: str = ""

    @property
    def best_val_mse(self) -> float:
        return self.val_mse[self.best_epoch]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def predict_angles(network: Network, samples, batch_size: int = 50) -> np.ndarray:
    """Eval-mode forward pass; accepts Sample objects or an (N, T, H, W, C) array."""
    X = samples if isinstance(samples, np.ndarray) else np.stack([s.tensor for s in samples])
    expected = tuple(network.meta.get("input_shape", X.shape[1:]))
    if tuple(X.shape[1:]) != expected:
        raise ValueError(f"sample shape {X.shape[1:]} does not match network input {expected}")
    out = [network.forward(X[i:i + batch_size], train=False) for i in range(0, len(X), batch_size)]
    return np.concatenate(out).ravel() if out else np.zeros(0)


def _mse(network, X, y, batch_size):
    return float(np.mean((predict_angles(network, X, batch_size) - y) ** 2))


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    chunks = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    # a size-1 tail would break batch-norm statistics: fold it into the previous batch
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate(chunks[-2:])
        chunks.pop()
    return chunks


def train(network: Network, split: DatasetSplit, lr: float, epochs: int = 15,
          batch_size: int = 50, patience: int = 5, seed: int = 0,
          restore_best: bool = True) -> TrainReport:
    """Mini-batch Adam on MSE with seeded shuffling and early stopping.

    Validation MSE is recorded before training (epoch 0) and after each epoch;
    training stops once it has not improved for ``patience`` consecutive epochs.
    """
    if not split.train or not split.validation:
        raise ValueError("need non-empty train and validation sets")
    Xtr, ytr = DatasetSplit.arrays(split.train)
    Xva, yva = DatasetSplit.arrays(split.validation)
    rng = np.random.default_rng([seed, 7])
    state = AdamState(lr=lr)
    report = TrainReport([_mse(network, Xtr, ytr, batch_size)], [_mse(network, Xva, yva, batch_size)])
    best = _snapshot(network)
    since_best, step = 0, 0
    for epoch in range(1, epochs + 1):
        for idx in _batches(len(ytr), batch_size, rng):
            network.set_step(step)
            step += 1
            network.zero_grad()
            pred = network.forward(Xtr[idx], train=True)
            loss, dpred = mse_loss(pred.ravel(), ytr[idx])
            if not math.isfinite(loss):
                report.diverged = True
                break
            network.backward(dpred.reshape(pred.shape))
            grads = network.grad_dict()
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                report.diverged = True
                break
            adam_step(network.param_dict(), grads, state)
        if report.diverged:
            break
        report.epochs_run = epoch
        report.train_mse.append(_mse(network, Xtr, ytr, batch_size))
        val = _mse(network, Xva, yva, batch_size)
        report.val_mse.append(val)
        if not math.isfinite(val):
            report.diverged = True
            break
        if val < report.val_mse[report.best_epoch]:
            report.best_epoch = epoch
            best = _snapshot(network)
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                report.early_stopped = True
                break
    if restore_best and not report.diverged:
        _restore(network, best)
    report.weights_digest = weights_digest(network)
    return report


def _snapshot(network):
    return ([v.copy() for _, v in network.named_params()],
            [v.copy() for _, v in network.named_buffers()])


def _restore(network, snap):
    params, buffers = snap
    for (_, v), saved in zip(network.named_params(), params):
        v[...] = saved
    for (_, v), saved in zip(network.named_buffers(), buffers):
        v[...] = saved


def weights_digest(network: Network) -> str:
    h = hashlib.sha256()
    for _, v in list(network.named_params()) + list(network.named_buffers()):
        h.update(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return h.hexdigest()


# --- serialisation -------------------------------------------------------------

def save_weights(network: Network, path: str | Path) -> None:
    arrays = list(network.named_params()) + list(network.named_buffers())
    write_container(path, {"kind": "weights", "name": network.name, "meta": network.meta,
                           "layers": network.manifest()}, arrays)


def read_weights(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "weights":
        raise ValueError(f"{path}: container does not hold network weights")
    return manifest, arrays


def load_weights(network: Network, path: str | Path) -> Network:
    """Copy stored arrays into ``network``; the layer manifests must agree."""
    manifest, arrays = read_weights(path)
    if manifest["layers"] != json.loads(json.dumps(network.manifest())):
        raise ValueError("weights file does not match the network architecture")
    for name, v in list(network.named_params()) + list(network.named_buffers()):
        if name not in arrays or arrays[name].shape != v.shape:
            raise ValueError(f"weights file lacks a compatible array for {name}")
        v[...] = arrays[name]
    return network


def network_from_weights(path: str | Path) -> Network:
    """Rebuild the network recorded in a weights file and load its arrays."""
    manifest, _ = read_weights(path)
    meta = manifest["meta"]
    cfg = STLSTMConfig(**meta["config"]) if meta["arch"] == "stlstm" else None
    net = build_network(meta["arch"], tuple(meta["input_shape"]), meta.get("seed", 0), cfg)
    return load_weights(net, path)
