"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Network


@dataclass
class GradReport:
    max_rel_error: float
    per_tensor: dict = field(default_factory=dict)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def rel_error(a, n):
    a, n = np.asarray(a, float), np.asarray(n, float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numeric_grad(f, x: np.ndarray, h: float = 1e-5, index=None) -> np.ndarray:
    """Central differences of scalar f() w.r.t. the array x (perturbed in place)."""
    g = np.zeros_like(x)
    it = index if index is not None else np.ndindex(*x.shape)
    for ix in it:
        old = x[ix]
        x[ix] = old + h
        fp = f()
        x[ix] = old - h
        fm = f()
        x[ix] = old
        g[ix] = (fp - fm) / (2 * h)
    return g


def grad_check(network: Network, x: np.ndarray, h: float = 1e-5, train: bool = True,
               seed: int = 0, max_per_tensor: int | None = None) -> GradReport:
    """Compare backprop against finite differences for every parameter tensor and the input.

    The loss is sum(out * R) for a fixed random R, so every output element
    carries a distinct, non-degenerate weight.
    """
    rng = np.random.default_rng(seed)
    out = network.forward(x, train)
    R = rng.standard_normal(out.shape)

    def loss():
        return float(np.sum(network.forward(x, train) * R))

    network.zero_grad()
    network.forward(x, train)
    dx = network.backward(R)
    analytic = {name: g.copy() for name, g in network.named_grads()}
    report = GradReport(0.0)
    targets = list(network.named_params()) + [("input", x)]
    analytic["input"] = dx
    for name, arr in targets:
        index = None
        if max_per_tensor is not None and arr.size > max_per_tensor:
            flat = rng.choice(arr.size, max_per_tensor, replace=False)
            index = [np.unravel_index(i, arr.shape) for i in flat]
        num = numeric_grad(loss, arr, h, index)
        idx = tuple(np.array(index).T) if index is not None else ...
        err = float(np.max(rel_error(analytic[name][idx], num[idx]), initial=0.0))
        report.per_tensor[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
    return report
