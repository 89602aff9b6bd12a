"""Layer forward/backward pairs.

Every layer caches what its backward pass needs on the instance, so a layer
instance is exclusively owned during one forward/backward cycle. Gradients
accumulate into the ParamStore buffers (the optimizer zeroes them).

Conventions that the parameter accounting depends on: convolutions carry no
bias (batch norm follows every convolution), batch norm contributes one gamma
and one beta per channel (running statistics are non-trainable state), dense
layers are biased, and an LSTM direction packs its four gates (i, f, g, o)
into single (4H, C), (4H, H) weight matrices plus ONE combined (4H,) bias.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from ..rng import Rng
from .params import ParamStore


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax_over_classes(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis; rows sum to 1."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


class Conv1d:
    """1-D cross-correlation, stride 1, zero padding to preserve length.

    Left pad is floor((K-1)/2) and right pad ceil((K-1)/2), so the output has
    exactly the input length for every K >= 1. No bias term.
    """

    def __init__(self, store: ParamStore, name: str, in_channels: int,
                 filters: int, kernel: int, rng: Rng):
        if kernel < 1:
            raise ConfigError("kernel size must be >= 1")
        limit = glorot_limit(in_channels * kernel, filters * kernel)
        self.w = store.add(f"{name}.w",
                           rng.uniform(-limit, limit, (filters, in_channels, kernel)))
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.left_pad = (kernel - 1) // 2
        self._xp: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, length = x.shape
        if c != self.in_channels:
            raise ShapeError(f"{self.w.name}: expected {self.in_channels} channels, got {c}")
        k = self.kernel
        xp = np.zeros((n, c, length + k - 1))
        xp[:, :, self.left_pad:self.left_pad + length] = x
        self._xp = xp
        w = self.w.value
        out = np.zeros((n, self.filters, length))
        for j in range(k):
            out += np.matmul(w[:, :, j], xp[:, :, j:j + length])
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        xp = self._xp
        n, _, length = dout.shape
        k = self.kernel
        w = self.w.value
        dxp = np.zeros_like(xp)
        for j in range(k):
            self.w.grad[:, :, j] += np.tensordot(dout, xp[:, :, j:j + length],
                                                 axes=([0, 2], [0, 2]))
            dxp[:, :, j:j + length] += np.matmul(w[:, :, j].T, dout)
        return dxp[:, :, self.left_pad:self.left_pad + (xp.shape[2] - k + 1)]


class BatchNorm1d:
    """Per-channel batch normalization over the (N, L) axes.

    Train mode normalizes with batch statistics (population variance,
    eps=1e-5) and updates running stats with momentum 0.1; eval mode uses the
    running stats and fails if none were ever recorded.
    """

    def __init__(self, store: ParamStore, name: str, channels: int,
                 eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = store.add(f"{name}.gamma", np.ones(channels))
        self.beta = store.add(f"{name}.beta", np.zeros(channels))
        self.running_mean = store.add(f"{name}.running_mean", np.zeros(channels),
                                      trainable=False)
        self.running_var = store.add(f"{name}.running_var", np.ones(channels),
                                     trainable=False)
        self.initialized = store.add(f"{name}.initialized", np.zeros(1),
                                     trainable=False)
        self.eps = eps
        self.momentum = momentum
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.shape[1] != self.gamma.value.shape[0]:
            raise ShapeError(f"{self.gamma.name}: channel mismatch")
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            m = self.momentum
            self.running_mean.value[...] = (1 - m) * self.running_mean.value + m * mean
            self.running_var.value[...] = (1 - m) * self.running_var.value + m * var
            self.initialized.value[...] = 1.0
        else:
            if self.initialized.value[0] == 0.0:
                raise ConfigError(
                    f"{self.gamma.name}: eval before any train-mode batch statistics")
            mean = self.running_mean.value
            var = self.running_var.value
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * invstd[None, :, None]
        self._cache = (xhat, invstd, train)
        return self.gamma.value[None, :, None] * xhat + self.beta.value[None, :, None]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        xhat, invstd, train = self._cache
        self.gamma.grad += (dout * xhat).sum(axis=(0, 2))
        self.beta.grad += dout.sum(axis=(0, 2))
        dxhat = dout * self.gamma.value[None, :, None]
        if not train:
            return dxhat * invstd[None, :, None]
        n, _, length = dout.shape
        r = n * length
        sum_dxhat = dxhat.sum(axis=(0, 2), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        return (invstd[None, :, None] / r) * (r * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)


class Relu:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dout, 0.0)


class Sigmoid:
    def __init__(self):
        self._out = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._out = sigmoid(x)
        return self._out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout * self._out * (1.0 - self._out)


class SoftmaxClasses:
    """Softmax over the class (last) axis."""

    def __init__(self):
        self._out = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._out = softmax_over_classes(x)
        return self._out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        s = self._out
        return s * (dout - (dout * s).sum(axis=-1, keepdims=True))


class Dropout:
    """Inverted dropout; active only in train mode, masks from a seeded Rng."""

    def __init__(self, p: float, rng: Rng | None = None):
        if not (0.0 <= p < 1.0):
            raise ConfigError(f"dropout p must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng or Rng(0)
        self._mask = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if not train or self.p == 0.0:
            self._mask = None
            return x
        keep = self.rng.uniform(size=x.shape) >= self.p
        self._mask = keep / (1.0 - self.p)
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return dout
        return dout * self._mask


class GlobalAvgPool:
    """Mean over the time axis: (N, C, L) -> (N, C)."""

    def __init__(self):
        self._length = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._length = x.shape[2]
        return x.mean(axis=2)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return np.repeat(dout[:, :, None], self._length, axis=2) / self._length


class Dense:
    """Affine map (N, D) -> (N, M) with bias."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, rng: Rng):
        limit = glorot_limit(in_dim, out_dim)
        self.w = store.add(f"{name}.w", rng.uniform(-limit, limit, (in_dim, out_dim)))
        self.b = store.add(f"{name}.b", np.zeros(out_dim))
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.w.value.shape[0]:
            raise ShapeError(
                f"{self.w.name}: expected (N, {self.w.value.shape[0]}), got {x.shape}")
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.w.grad += self._x.T @ dout
        self.b.grad += dout.sum(axis=0)
        return dout @ self.w.value.T


class MaxPool1dSame:
    """Max pool, kernel 3, stride 1, same padding (used by inception modules)."""

    KERNEL = 3

    def __init__(self):
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, length = x.shape
        xp = np.full((n, c, length + 2), -np.inf)
        xp[:, :, 1:1 + length] = x
        stacked = np.stack([xp[:, :, j:j + length] for j in range(self.KERNEL)])
        arg = stacked.argmax(axis=0)
        self._cache = (arg, length)
        return np.take_along_axis(stacked, arg[None], axis=0)[0]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        arg, length = self._cache
        dxp = np.zeros((dout.shape[0], dout.shape[1], length + 2))
        for j in range(self.KERNEL):
            dxp[:, :, j:j + length] += dout * (arg == j)
        return dxp[:, :, 1:1 + length]


class _LstmDirection:
    """One direction of an LSTM layer: parameters plus BPTT caches."""

    def __init__(self, store: ParamStore, name: str, in_channels: int, hidden: int,
                 rng: Rng):
        limit = 1.0 / np.sqrt(hidden)
        self.w_ih = store.add(f"{name}.w_ih",
                              rng.uniform(-limit, limit, (4 * hidden, in_channels)))
        self.w_hh = store.add(f"{name}.w_hh",
                              rng.uniform(-limit, limit, (4 * hidden, hidden)))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # forget-gate bias opens the memory path
        self.b = store.add(f"{name}.b", bias)
        self.hidden = hidden
        self._cache = None

    def forward(self, xs: np.ndarray) -> np.ndarray:
        """xs is (L, N, C) in consumption order; returns hidden states (L, N, H)."""
        length, n, _ = xs.shape
        h = self.hidden
        w_ih, w_hh, b = self.w_ih.value, self.w_hh.value, self.b.value
        gates_i = np.empty((length, n, h))
        gates_f = np.empty((length, n, h))
        gates_g = np.empty((length, n, h))
        gates_o = np.empty((length, n, h))
        cells = np.empty((length, n, h))
        tanh_c = np.empty((length, n, h))
        hs = np.empty((length, n, h))
        h_prev = np.zeros((n, h))
        c_prev = np.zeros((n, h))
        for t in range(length):
            z = xs[t] @ w_ih.T + h_prev @ w_hh.T + b
            i_t = sigmoid(z[:, :h])
            f_t = sigmoid(z[:, h:2 * h])
            g_t = np.tanh(z[:, 2 * h:3 * h])
            o_t = sigmoid(z[:, 3 * h:])
            c_t = f_t * c_prev + i_t * g_t
            tc = np.tanh(c_t)
            h_t = o_t * tc
            gates_i[t], gates_f[t], gates_g[t], gates_o[t] = i_t, f_t, g_t, o_t
            cells[t], tanh_c[t], hs[t] = c_t, tc, h_t
            h_prev, c_prev = h_t, c_t
        self._cache = (xs, gates_i, gates_f, gates_g, gates_o, cells, tanh_c, hs)
        return hs

    def backward(self, dh_seq: np.ndarray) -> np.ndarray:
        """dh_seq is (L, N, H) in consumption order; returns dxs (L, N, C)."""
        xs, gi, gf, gg, go, cells, tanh_c, hs = self._cache
        length, n, _ = xs.shape
        h = self.hidden
        w_ih, w_hh = self.w_ih.value, self.w_hh.value
        dw_ih = np.zeros_like(w_ih)
        dw_hh = np.zeros_like(w_hh)
        db = np.zeros_like(self.b.value)
        dxs = np.empty_like(xs)
        dh_next = np.zeros((n, h))
        dc_next = np.zeros((n, h))
        dz = np.empty((n, 4 * h))
        for t in range(length - 1, -1, -1):
            dh = dh_seq[t] + dh_next
            dc = dc_next + dh * go[t] * (1.0 - tanh_c[t] ** 2)
            c_prev = cells[t - 1] if t > 0 else np.zeros((n, h))
            h_prev = hs[t - 1] if t > 0 else np.zeros((n, h))
            dz[:, :h] = dc * gg[t] * gi[t] * (1.0 - gi[t])
            dz[:, h:2 * h] = dc * c_prev * gf[t] * (1.0 - gf[t])
            dz[:, 2 * h:3 * h] = dc * gi[t] * (1.0 - gg[t] ** 2)
            dz[:, 3 * h:] = dh * tanh_c[t] * go[t] * (1.0 - go[t])
            dw_ih += dz.T @ xs[t]
            dw_hh += dz.T @ h_prev
            db += dz.sum(axis=0)
            dxs[t] = dz @ w_ih
            dh_next = dz @ w_hh
            dc_next = dc * gf[t]
        self.w_ih.grad += dw_ih
        self.w_hh.grad += dw_hh
        self.b.grad += db
        return dxs


class Lstm:
    """Uni- or bidirectional LSTM over (N, C, L) with exact full-window BPTT.

    Gate order is (i, f, g, o) with one combined bias per direction; initial
    hidden and cell states are zero. 'sequence' output is (N, H*dirs, L) with
    the backward direction aligned to original time; 'last' is (N, H*dirs),
    the final state of each direction.
    """

    def __init__(self, store: ParamStore, name: str, in_channels: int, hidden: int,
                 rng: Rng, bidirectional: bool = False, return_sequence: bool = False):
        if hidden < 1:
            raise ConfigError("hidden size must be >= 1")
        self.hidden = hidden
        self.in_channels = in_channels
        self.bidirectional = bidirectional
        self.return_sequence = return_sequence
        self.fw = _LstmDirection(store, f"{name}.fw", in_channels, hidden, rng)
        self.bw = (_LstmDirection(store, f"{name}.bw", in_channels, hidden, rng)
                   if bidirectional else None)
        self._length = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, length = x.shape
        if c != self.in_channels:
            raise ShapeError(f"lstm expected {self.in_channels} channels, got {c}")
        self._length = length
        xs = np.ascontiguousarray(np.moveaxis(x, 2, 0))  # (L, N, C)
        hs_f = self.fw.forward(xs)
        if self.bw is None:
            if self.return_sequence:
                return np.moveaxis(hs_f, 0, 2)
            return hs_f[-1].copy()
        hs_b = self.bw.forward(xs[::-1])
        if self.return_sequence:
            out = np.concatenate([hs_f, hs_b[::-1]], axis=2)  # (L, N, 2H)
            return np.moveaxis(out, 0, 2)
        return np.concatenate([hs_f[-1], hs_b[-1]], axis=1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        length = self._length
        h = self.hidden
        n = dout.shape[0]
        if self.return_sequence:
            dh = np.moveaxis(dout, 2, 0)  # (L, N, H*dirs)
            dh_f = np.ascontiguousarray(dh[:, :, :h])
            dh_b = None if self.bw is None else np.ascontiguousarray(dh[::-1, :, h:])
        else:
            dh_f = np.zeros((length, n, h))
            dh_f[-1] = dout[:, :h]
            dh_b = None
            if self.bw is not None:
                dh_b = np.zeros((length, n, h))
                dh_b[-1] = dout[:, h:]
        dxs = self.fw.backward(dh_f)
        if self.bw is not None:
            dxs = dxs + self.bw.backward(dh_b)[::-1]
        return np.moveaxis(dxs, 0, 2)
