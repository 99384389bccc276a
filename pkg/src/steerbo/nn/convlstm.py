"""Convolutional LSTM cell with Hadamard peephole connections.

    i_t = sigmoid(W_xi * X_t + W_hi * H_{t-1} + W_ci o C_{t-1} + b_i)
    f_t = sigmoid(W_xf * X_t + W_hf * H_{t-1} + W_cf o C_{t-1} + b_f)
    C_t = f_t o C_{t-1} + i_t o tanh(W_xc * X_t + W_hc * H_{t-1} + b_c)
    o_t = sigmoid(W_xo * X_t + W_ho * H_{t-1} + W_co o C_{t-1} + b_o)
    H_t = o_t o tanh(C_t)

``*`` is a same-padded convolution and ``o`` the elementwise product.  The
four input and hidden kernels are stored stacked along the output-channel
axis in gate order (i, f, c, o).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import conv_backward, conv_forward, sigmoid

GATES = ("i", "f", "c", "o")


@dataclass
class ConvLSTMParams:
    W_x: np.ndarray   # (4*hid, in_ch, kh, kw)
    W_h: np.ndarray   # (4*hid, hid, kh, kw)
    W_ci: np.ndarray  # (hid, H, W)
    W_cf: np.ndarray
    W_co: np.ndarray
    b: np.ndarray     # (4*hid,)

    def __post_init__(self):
        hid = self.hidden_channels
        kh, kw = self.kernel_size
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("same padding needs odd kernel sizes")
        if self.W_x.shape[0] != 4 * hid or self.W_h.shape[:2] != (4 * hid, hid):
            raise ValueError("input/hidden kernels must stack four gates")
        if self.W_h.shape[2:] != (kh, kw):
            raise ValueError("input and hidden kernels must share a size")
        if not (self.W_ci.shape == self.W_cf.shape == self.W_co.shape) or self.W_ci.shape[0] != hid:
            raise ValueError("peephole weights must match the cell-state shape")
        if self.b.shape != (4 * hid,):
            raise ValueError("bias must have 4*hidden entries")

    @property
    def hidden_channels(self) -> int:
        return self.W_h.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.W_x.shape[2], self.W_x.shape[3]

    @property
    def padding(self) -> tuple[int, int]:
        kh, kw = self.kernel_size
        return kh // 2, kw // 2

    def named(self) -> dict[str, np.ndarray]:
        """Per-gate views using the W_x?/W_h?/W_c?/b_? naming."""
        hid = self.hidden_channels
        out = {}
        for g, name in enumerate(GATES):
            sl = slice(g * hid, (g + 1) * hid)
            out[f"W_x{name}"] = self.W_x[sl]
            out[f"W_h{name}"] = self.W_h[sl]
            out[f"b_{name}"] = self.b[sl]
        out.update(W_ci=self.W_ci, W_cf=self.W_cf, W_co=self.W_co)
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W_x": self.W_x, "W_h": self.W_h, "W_ci": self.W_ci, "W_cf": self.W_cf,
                "W_co": self.W_co, "b": self.b}

    @classmethod
    def zeros(cls, in_ch, hid, spatial, kernel=(3, 3)):
        kh, kw = kernel
        return cls(np.zeros((4 * hid, in_ch, kh, kw)), np.zeros((4 * hid, hid, kh, kw)),
                   np.zeros((hid, *spatial)), np.zeros((hid, *spatial)), np.zeros((hid, *spatial)),
                   np.zeros(4 * hid))


def cell_forward(x, h_prev, c_prev, p: ConvLSTMParams):
    """One step on batched inputs x (N, C, H, W), h_prev/c_prev (N, hid, H, W)."""
    if x.shape[2:] != h_prev.shape[2:] or h_prev.shape != c_prev.shape:
        raise ValueError("spatial dimensions of x, h and c must agree")
    if c_prev.shape[1:] != p.W_ci.shape:
        raise ValueError(f"cell state {c_prev.shape[1:]} does not match peepholes {p.W_ci.shape}")
    hid = p.hidden_channels
    zx, cx = conv_forward(x, p.W_x, None, 1, p.padding)
    zh, ch = conv_forward(h_prev, p.W_h, None, 1, p.padding)
    z = zx + zh + p.b[None, :, None, None]
    zi, zf, zg, zo = (z[:, k * hid:(k + 1) * hid] for k in range(4))
    i = sigmoid(zi + p.W_ci * c_prev)
    f = sigmoid(zf + p.W_cf * c_prev)
    g = np.tanh(zg)
    o = sigmoid(zo + p.W_co * c_prev)
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (cx, ch, c_prev, i, f, g, o, tc)


def cell_backward(dh, dc_next, cache, p: ConvLSTMParams):
    """Gradients of one step given dL/dh_t and dL/dc_t from later steps."""
    cx, ch, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc_next + dh * o * (1.0 - tc * tc)
    dzi = dc * g * i * (1.0 - i)
    dzf = dc * c_prev * f * (1.0 - f)
    dzg = dc * i * (1.0 - g * g)
    dzo = do * o * (1.0 - o)
    dc_prev = dc * f + p.W_ci * dzi + p.W_cf * dzf + p.W_co * dzo
    dz = np.concatenate([dzi, dzf, dzg, dzo], axis=1)
    dx, dWx, _ = conv_backward(dz, cx)
    dh_prev, dWh, _ = conv_backward(dz, ch)
    grads = {"W_x": dWx, "W_h": dWh, "W_ci": (dzi * c_prev).sum(0), "W_cf": (dzf * c_prev).sum(0),
             "W_co": (dzo * c_prev).sum(0), "b": dz.sum(axis=(0, 2, 3))}
    return dx, dh_prev, dc_prev, grads


def convlstm_cell(x_t, h_prev, c_prev, p: ConvLSTMParams):
    h, c, _ = cell_forward(x_t, h_prev, c_prev, p)
    return h, c


def layer_forward(x_seq, p: ConvLSTMParams, return_sequence: bool = True):
    """Unroll over x_seq (N, T, C, H, W) from a zero state."""
    N, T = x_seq.shape[:2]
    if T == 0:
        raise ValueError("sequence must contain at least one step")
    state = (N, p.hidden_channels) + x_seq.shape[3:]
    h, c = np.zeros(state), np.zeros(state)
    hs, caches = [], []
    for t in range(T):
        h, c, cache = cell_forward(x_seq[:, t], h, c, p)
        hs.append(h)
        caches.append(cache)
    out = np.stack(hs, axis=1) if return_sequence else h
    return out, (caches, return_sequence, x_seq.shape)


def layer_backward(dout, cache, p: ConvLSTMParams):
    caches, return_sequence, x_shape = cache
    T = x_shape[1]
    dx = np.zeros(x_shape)
    grads = {k: np.zeros_like(v) for k, v in p.arrays().items()}
    dh_next = np.zeros((x_shape[0], p.hidden_channels) + x_shape[3:])
    dc_next = np.zeros_like(dh_next)
    for t in reversed(range(T)):
        if return_sequence:
            dh = dout[:, t] + dh_next
        else:
            dh = dout + dh_next if t == T - 1 else dh_next
        dx[:, t], dh_next, dc_next, g = cell_backward(dh, dc_next, caches[t], p)
        for k in grads:
            grads[k] += g[k]
    return dx, grads


def convlstm_layer(x_seq, p: ConvLSTMParams, return_sequence: bool = True):
    return layer_forward(x_seq, p, return_sequence)[0]
