"""Layer objects with cached forward passes and explicit backward passes."""

from __future__ import annotations

import math

import numpy as np

from . import convlstm as cl
from . import ops


def glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class.  ``params``/``grads`` share keys; ``buffers`` hold non-trained state."""

    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def config(self) -> dict:
        return {}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def output_shape(self, shape):
        """Per-sample output shape (batch axis excluded)."""
        out = self.forward(np.zeros((2,) + tuple(shape)), train=False)
        return out.shape[1:]


class Normalize(Layer):
    """Fixed affine pixel scaling x * scale + offset."""

    kind = "normalize"

    def __init__(self, scale=1.0 / 127.5, offset=-1.0):
        super().__init__()
        self.scale, self.offset = scale, offset

    def forward(self, x, train=False):
        return x * self.scale + self.offset

    def backward(self, dout):
        return dout * self.scale

    def config(self):
        return {"scale": self.scale, "offset": self.offset}


class Permute(Layer):
    kind = "permute"

    def __init__(self, axes):
        super().__init__()
        self.axes = tuple(axes)  # per-sample axes, batch axis excluded

    def forward(self, x, train=False):
        return x.transpose((0,) + tuple(a + 1 for a in self.axes))

    def backward(self, dout):
        return dout.transpose(np.argsort((0,) + tuple(a + 1 for a in self.axes)))

    def config(self):
        return {"axes": list(self.axes)}


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x, train=False):
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dout):
        return dout.reshape(self._cache)

    def config(self):
        return {"shape": list(self.shape)}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cache)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, dout):
        return dout * self._cache


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, rng):
        super().__init__()
        self.params = {"W": glorot(rng, (n_in, n_out), n_in, n_out), "b": np.zeros(n_out)}
        self.zero_grad()

    def forward(self, x, train=False):
        out, self._cache = ops.dense_forward(x, self.params["W"], self.params["b"])
        return out

    def backward(self, dout):
        dx, dW, db = ops.dense_backward(dout, self._cache)
        self.grads["W"] += dW
        self.grads["b"] += db
        return dx

    def config(self):
        return {"n_in": self.params["W"].shape[0], "n_out": self.params["W"].shape[1]}


class Conv(Layer):
    """2-D or 3-D convolution, chosen by the length of ``kernel``."""

    kind = "conv"

    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0):
        super().__init__()
        kernel = tuple(kernel)
        self.stride, self.padding = stride, padding
        k = int(np.prod(kernel))
        self.params = {"w": glorot(rng, (out_ch, in_ch) + kernel, in_ch * k, out_ch * k),
                       "b": np.zeros(out_ch)}
        self.zero_grad()

    def forward(self, x, train=False):
        out, self._cache = ops.conv_forward(x, self.params["w"], self.params["b"],
                                            self.stride, self.padding)
        return out

    def backward(self, dout):
        dx, dw, db = ops.conv_backward(dout, self._cache)
        self.grads["w"] += dw
        self.grads["b"] += db
        return dx

    def config(self):
        w = self.params["w"]
        return {"in_ch": w.shape[1], "out_ch": w.shape[0], "kernel": list(w.shape[2:]),
                "stride": self.stride, "padding": self.padding}


class MaxPool(Layer):
    kind = "maxpool"

    def __init__(self, window):
        super().__init__()
        self.window = tuple(window)

    def forward(self, x, train=False):
        out, self._cache = ops.maxpool_forward(x, self.window)
        return out

    def backward(self, dout):
        return ops.maxpool_backward(dout, self._cache)

    def config(self):
        return {"window": list(self.window)}


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, channels, axis=1):
        super().__init__()
        self.axis = axis  # channel axis including the batch axis
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}
        self.state = ops.BNState(channels)
        self.zero_grad()

    @property
    def buffers(self):
        return {"running_mean": self.state.mean, "running_var": self.state.var}

    @buffers.setter
    def buffers(self, value):
        if value:
            self.state.mean = np.array(value["running_mean"], dtype=float)
            self.state.var = np.array(value["running_var"], dtype=float)

    def forward(self, x, train=False):
        out, self._cache = ops.batchnorm_forward(x, self.params["gamma"], self.params["beta"],
                                                 "train" if train else "eval", self.state, self.axis)
        return out

    def backward(self, dout):
        dx, dg, db = ops.batchnorm_backward(dout, self._cache)
        self.grads["gamma"] += dg
        self.grads["beta"] += db
        return dx

    def config(self):
        return {"channels": self.params["gamma"].size, "axis": self.axis}


class Dropout(Layer):
    """Inverted dropout.  The mask is a function of (seed, step) so that a
    forward pass can be repeated exactly; the trainer advances ``step``."""

    kind = "dropout"

    def __init__(self, rate, seed=0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate, self.seed, self.step = float(rate), int(seed), 0

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._cache = None
            return x
        rng = np.random.default_rng([self.seed, self.step])
        self._cache = ops.dropout_mask(x.shape, self.rate, rng)
        return x * self._cache

    def backward(self, dout):
        return dout if self._cache is None else dout * self._cache

    def config(self):
        return {"rate": self.rate, "seed": self.seed}


class ConvLSTM2D(Layer):
    """Input and output (N, T, C, H, W); zero initial state."""

    kind = "convlstm2d"

    def __init__(self, in_ch, hidden, spatial, rng, kernel=(3, 3), return_sequence=True):
        super().__init__()
        kh, kw = kernel
        k = kh * kw
        self.return_sequence = return_sequence
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0  # forget-gate bias
        self.params = {
            "W_x": glorot(rng, (4 * hidden, in_ch, kh, kw), in_ch * k, hidden * k),
            "W_h": glorot(rng, (4 * hidden, hidden, kh, kw), hidden * k, hidden * k),
            "W_ci": np.zeros((hidden, *spatial)),
            "W_cf": np.zeros((hidden, *spatial)),
            "W_co": np.zeros((hidden, *spatial)),
            "b": b,
        }
        self.zero_grad()

    @property
    def cell_params(self) -> cl.ConvLSTMParams:
        return cl.ConvLSTMParams(**self.params)

    def forward(self, x, train=False):
        out, self._cache = cl.layer_forward(x, self.cell_params, self.return_sequence)
        return out

    def backward(self, dout):
        dx, grads = cl.layer_backward(dout, self._cache, self.cell_params)
        for k, g in grads.items():
            self.grads[k] += g
        return dx

    def config(self):
        w = self.params["W_x"]
        return {"in_ch": w.shape[1], "hidden": w.shape[0] // 4, "kernel": list(w.shape[2:]),
                "spatial": list(self.params["W_ci"].shape[1:]),
                "return_sequence": self.return_sequence}


class Network:
    """A sequential stack of layers."""

    def __init__(self, layers, name="network", meta=None):
        self.layers = list(layers)
        self.name = name
        self.meta = dict(meta or {})

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def set_step(self, step: int):
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.step = step

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                yield f"{i}.{layer.kind}.{k}", v

    def named_grads(self):
        for i, layer in enumerate(self.layers):
            for k in layer.params:
                yield f"{i}.{layer.kind}.{k}", layer.grads[k]

    def named_buffers(self):
        for i, layer in enumerate(self.layers):
            for k, v in layer.buffers.items():
                yield f"{i}.{layer.kind}.{k}", v

    def param_dict(self) -> dict[str, np.ndarray]:
        return dict(self.named_params())

    def grad_dict(self) -> dict[str, np.ndarray]:
        return dict(self.named_grads())

    @property
    def n_params(self) -> int:
        return sum(v.size for _, v in self.named_params())

    def manifest(self) -> list[dict]:
        return [{"kind": layer.kind, **layer.config()} for layer in self.layers]
