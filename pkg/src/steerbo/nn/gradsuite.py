"""Finite-difference checks over one small instance of every layer type."""

from __future__ import annotations

import numpy as np

from .gradcheck import grad_check
from .layers import BatchNorm, Conv, ConvLSTM2D, Dense, Dropout, MaxPool, Network, ReLU


def _randomise(net, rng):
    # non-trivial values everywhere, including peepholes that start at zero
    for _, p in net.named_params():
        p[...] = rng.uniform(-0.5, 0.5, p.shape)


def suite_cases(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    cases = {
        "conv2d": (Network([Conv(4, 3, (3, 3), rng, stride=2, padding=1)]),
                   rng.standard_normal((2, 4, 6, 6))),
        "conv3d": (Network([Conv(2, 3, (3, 3, 3), rng, padding=1)]),
                   rng.standard_normal((2, 2, 3, 4, 4))),
        "convlstm_cell": (Network([ConvLSTM2D(2, 3, (4, 5), rng, return_sequence=False)]),
                          rng.standard_normal((2, 1, 2, 4, 5))),
        "convlstm_layer_T3": (Network([ConvLSTM2D(2, 3, (4, 5), rng)]),
                              rng.standard_normal((2, 3, 2, 4, 5))),
        "batchnorm": (Network([BatchNorm(3, axis=2)]), rng.standard_normal((4, 2, 3, 3, 3))),
        "maxpool": (Network([MaxPool((2, 2, 2))]), rng.standard_normal((2, 2, 3, 5, 4))),
        "dense": (Network([Dense(5, 4, rng), ReLU(), Dense(4, 1, rng)]),
                  rng.standard_normal((3, 5))),
        "dropout": (Network([Dense(5, 4, rng), Dropout(0.3, seed)]), rng.standard_normal((3, 5))),
    }
    for net, _ in cases.values():
        _randomise(net, rng)
    return cases


def run_suite(seed: int = 0) -> dict[str, float]:
    """Max relative error per case (train-mode forward)."""
    return {name: grad_check(net, x, seed=seed).max_rel_error
            for name, (net, x) in suite_cases(seed).items()}
