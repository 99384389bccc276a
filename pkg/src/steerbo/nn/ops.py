"""Forward/backward kernels in float64.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
consumes ``(dout, cache)``.  Spatial layouts are channels-first:
(N, C, H, W) for 2-D and (N, C, T, H, W) for 3-D operations.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _tuple(v, n):
    return tuple(v) if isinstance(v, (tuple, list)) else (v,) * n


def conv_output_size(size: int, k: int, stride: int = 1, pad: int = 0) -> int:
    return (size + 2 * pad - k) // stride + 1


# --- convolution (2-D and 3-D share one implementation) ------------------------

def conv_forward(x, w, b, stride=1, padding=0):
    """Cross-correlation of x (N, C, *S) with w (F, C, *K), plus bias b (F,)."""
    nd = w.ndim - 2
    if x.ndim != nd + 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"incompatible shapes: input {x.shape}, weights {w.shape}")
    stride, padding = _tuple(stride, nd), _tuple(padding, nd)
    ksize = w.shape[2:]
    if any(s + 2 * p < k for s, p, k in zip(x.shape[2:], padding, ksize)):
        raise ValueError(f"kernel {ksize} larger than padded input {x.shape[2:]}")
    xp = np.pad(x, [(0, 0), (0, 0)] + [(p, p) for p in padding]) if any(padding) else x
    win = sliding_window_view(xp, ksize, axis=tuple(range(2, 2 + nd)))
    win = win[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]
    # win: (N, C, *O, *K)
    c_axes = [1] + list(range(2 + nd, 2 + 2 * nd))
    out = np.tensordot(win, w, axes=(c_axes, [1] + list(range(2, 2 + nd))))  # (N, *O, F)
    out = np.moveaxis(out, -1, 1)
    if b is not None:
        out = out + b.reshape((1, -1) + (1,) * nd)
    return out, (x.shape, xp.shape, win, w, stride, padding)


def conv_backward(dout, cache):
    x_shape, xp_shape, win, w, stride, padding = cache
    nd = w.ndim - 2
    osz = dout.shape[2:]
    spatial = tuple(range(2, 2 + nd))
    dw = np.tensordot(dout, win, axes=([0] + list(spatial), [0] + list(spatial)))
    db = dout.sum(axis=(0,) + spatial)
    dxp = np.zeros(xp_shape)
    for offs in np.ndindex(*w.shape[2:]):
        wk = w[(slice(None), slice(None)) + offs]  # (F, C)
        contrib = np.moveaxis(np.tensordot(dout, wk, axes=([1], [0])), -1, 1)
        idx = tuple(slice(o, o + s * n, s) for o, s, n in zip(offs, stride, osz))
        dxp[(slice(None), slice(None)) + idx] += contrib
    if any(padding):
        crop = tuple(slice(p, p + n) for p, n in zip(padding, x_shape[2:]))
        dxp = dxp[(slice(None), slice(None)) + crop]
    return dxp, dw, db


def conv2d(x, w, b, stride=1, padding=0):
    if w.ndim != 4:
        raise ValueError("conv2d expects weights of shape (F, C, kh, kw)")
    return conv_forward(x, w, b, stride, padding)[0]


def conv3d(x, w, b, stride=1, padding=0):
    if w.ndim != 5:
        raise ValueError("conv3d expects weights of shape (F, C, kt, kh, kw)")
    return conv_forward(x, w, b, stride, padding)[0]


# --- pooling -------------------------------------------------------------------

def maxpool_forward(x, window):
    """Non-overlapping max pool over the trailing len(window) axes (remainder dropped)."""
    nd = len(window)
    lead, spatial = x.shape[:-nd], x.shape[-nd:]
    if any(s < k for s, k in zip(spatial, window)):
        raise ValueError(f"pool window {window} larger than input extent {spatial}")
    osz = tuple(s // k for s, k in zip(spatial, window))
    xc = x[(...,) + tuple(slice(0, o * k) for o, k in zip(osz, window))]
    shaped = xc.reshape(lead + tuple(v for o, k in zip(osz, window) for v in (o, k)))
    nl = len(lead)
    perm = list(range(nl)) + [nl + 2 * i for i in range(nd)] + [nl + 2 * i + 1 for i in range(nd)]
    blocks = shaped.transpose(perm).reshape(lead + osz + (-1,))
    arg = blocks.argmax(axis=-1)  # first occurrence in row-major window order
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, window, osz, arg, perm)


def maxpool_backward(dout, cache):
    x_shape, window, osz, arg, perm = cache
    nd = len(window)
    lead = x_shape[:-nd]
    blocks = np.zeros(lead + osz + (int(np.prod(window)),))
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    shaped = blocks.reshape(lead + osz + tuple(window)).transpose(np.argsort(perm))
    dxc = shaped.reshape(lead + tuple(o * k for o, k in zip(osz, window)))
    dx = np.zeros(x_shape)
    dx[(...,) + tuple(slice(0, o * k) for o, k in zip(osz, window))] = dxc
    return dx


def maxpool(x, window):
    return maxpool_forward(x, tuple(window))[0]


# --- batch normalisation -------------------------------------------------------

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


class BNState:
    """Running statistics for one batch-norm layer."""

    def __init__(self, channels: int):
        self.mean = np.zeros(channels)
        self.var = np.ones(channels)


def _bn_shape(x, axis):
    shape = [1] * x.ndim
    shape[axis] = x.shape[axis]
    return shape


def batchnorm_forward(x, gamma, beta, mode, state: BNState, axis=1):
    red = tuple(i for i in range(x.ndim) if i != axis)
    shp = _bn_shape(x, axis)
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batch norm needs a batch of at least 2 in train mode")
        mu = x.mean(axis=red)
        var = x.var(axis=red)
        state.mean = BN_MOMENTUM * state.mean + (1 - BN_MOMENTUM) * mu
        state.var = BN_MOMENTUM * state.var + (1 - BN_MOMENTUM) * var
    elif mode == "eval":
        mu, var = state.mean, state.var
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu.reshape(shp)) * inv.reshape(shp)
    out = gamma.reshape(shp) * xhat + beta.reshape(shp)
    return out, (xhat, inv, gamma, red, shp, mode)


def batchnorm_backward(dout, cache):
    xhat, inv, gamma, red, shp, mode = cache
    dgamma = (dout * xhat).sum(axis=red)
    dbeta = dout.sum(axis=red)
    dxhat = dout * gamma.reshape(shp)
    if mode == "eval":
        return dxhat * inv.reshape(shp), dgamma, dbeta
    m = xhat.size // gamma.size
    dx = (inv.reshape(shp) / m) * (m * dxhat - dxhat.sum(axis=red, keepdims=True)
                                   - xhat * (dxhat * xhat).sum(axis=red, keepdims=True))
    return dx, dgamma, dbeta


def batchnorm(x, gamma, beta, mode, state, axis=1):
    return batchnorm_forward(x, gamma, beta, mode, state, axis)[0]


# --- dense, dropout, activations, loss -----------------------------------------

def dense_forward(x, W, b):
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ValueError(f"incompatible shapes: input {x.shape}, weights {W.shape}")
    return x @ W + b, (x, W)


def dense_backward(dout, cache):
    x, W = cache
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)


def dense(x, W, b):
    return dense_forward(x, W, b)[0]


def dropout_mask(shape, rate, rng: np.random.Generator):
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout(x, rate, mode, seed=0):
    """Inverted dropout; identity in eval mode."""
    if mode == "eval" or rate == 0.0:
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        return x
    return x * dropout_mask(x.shape, rate, np.random.default_rng(seed))


def sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def mse_loss(pred, target):
    """Mean squared error and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
