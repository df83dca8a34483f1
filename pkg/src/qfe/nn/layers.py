"""Differentiable layers on channels-last numpy arrays.

Every layer maps a batch ``(B, *in_shape)`` to ``(B, *out_shape)``. ``forward``
caches what ``backward`` needs; ``backward`` fills ``grads`` (same order as
``params``) and returns the gradient with respect to the input unless
``need_input_grad`` is False.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from qfe.errors import SpecError

ACTIVATIONS = ("relu", "linear")
INITS = ("he", "glorot")


class Layer:
    kind = "layer"
    has_params = False

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []
        self.in_shape: tuple = ()
        self.out_shape: tuple = ()
        self.need_input_grad = True

    def config(self) -> dict:
        return {}

    def build(self, in_shape: tuple, rng: np.random.Generator, dtype) -> tuple:
        self.in_shape = tuple(in_shape)
        self.out_shape = self.output_shape(self.in_shape)
        return self.out_shape

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def param_count(self, in_shape: tuple | None = None) -> int:
        return 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray | None:
        raise NotImplementedError


class _Activated(Layer):
    has_params = True

    def __init__(self, activation: str = "relu", init: str = "he"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise SpecError(f"unknown activation {activation!r}")
        if init not in INITS:
            raise SpecError(f"unknown init {init!r}")
        self.activation = activation
        self.init = init
        self._mask = None

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            self._mask = z > 0
            return z * self._mask
        return z

    def _deactivate(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask if self.activation == "relu" else dy


def _init_weights(rng, shape, fan_in, fan_out, init, dtype):
    """Uniform init: ``he`` has limit sqrt(6 / fan_in), ``glorot`` sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / fan_in) if init == "he" else math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, target: tuple):
        super().__init__()
        self.target = tuple(int(t) for t in target)

    def config(self):
        return {"target": list(self.target)}

    def output_shape(self, in_shape):
        if math.prod(in_shape) != math.prod(self.target):
            raise SpecError(f"cannot reshape {in_shape} to {self.target}")
        return self.target

    def forward(self, x):
        return x.reshape((x.shape[0],) + self.target)

    def backward(self, dy):
        return dy.reshape((dy.shape[0],) + self.in_shape)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (math.prod(in_shape),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape((dy.shape[0],) + self.in_shape)


class ZeroPad2D(Layer):
    kind = "zeropad2d"

    def __init__(self, pad: int = 1):
        super().__init__()
        self.pad = int(pad)

    def config(self):
        return {"pad": self.pad}

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise SpecError(f"ZeroPad2D expects (H, W, C), got {in_shape}")
        h, w, c = in_shape
        return (h + 2 * self.pad, w + 2 * self.pad, c)

    def forward(self, x):
        p = self.pad
        return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))

    def backward(self, dy):
        p = self.pad
        return dy[:, p:dy.shape[1] - p, p:dy.shape[2] - p, :]


class Dense(_Activated):
    kind = "dense"

    def __init__(self, units: int, activation: str = "relu", init: str = "he"):
        super().__init__(activation, init)
        self.units = int(units)

    def config(self):
        return {"units": self.units, "activation": self.activation,
                "init": self.init}

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise SpecError(f"Dense expects a flat input, got {in_shape}")
        return (self.units,)

    def param_count(self, in_shape=None):
        n = (in_shape or self.in_shape)[0]
        return n * self.units + self.units

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        n = in_shape[0]
        self.params = [_init_weights(rng, (n, self.units), n, self.units, self.init, dtype), np.zeros(self.units, dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        return out

    def forward(self, x):
        self._x = x
        w, b = self.params
        return self._activate(x @ w + b)

    def backward(self, dy):
        dz = self._deactivate(dy)
        w, _ = self.params
        self.grads[0][...] = self._x.T @ dz
        self.grads[1][...] = dz.sum(axis=0)
        return dz @ w.T if self.need_input_grad else None


class LocallyConnected2D(_Activated):
    """Convolution-shaped layer with a separate kernel and bias per output location."""

    kind = "lc2d"

    def __init__(self, filters: int, kernel=(2, 2), stride=(1, 1), activation: str = "relu", init: str = "he"):
        super().__init__(activation, init)
        self.filters = int(filters)
        self.kernel = tuple(int(k) for k in kernel)
        self.stride = tuple(int(s) for s in stride)

    def config(self):
        return {"filters": self.filters, "kernel": list(self.kernel), "stride": list(self.stride),
                "activation": self.activation,
                "init": self.init}

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise SpecError(f"LocallyConnected2D expects (H, W, C), got {in_shape}")
        h, w, _ = in_shape
        (kh, kw), (sh, sw) = self.kernel, self.stride
        if h < kh or w < kw:
            raise SpecError(f"kernel {self.kernel} larger than input {in_shape}")
        return ((h - kh) // sh + 1, (w - kw) // sw + 1, self.filters)

    def param_count(self, in_shape=None):
        in_shape = in_shape or self.in_shape
        oh, ow, f = self.output_shape(in_shape)
        k = self.kernel[0] * self.kernel[1] * in_shape[2]
        return oh * ow * (k * f + f)

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        oh, ow, f = out
        k = self.kernel[0] * self.kernel[1] * in_shape[2]
        self.params = [_init_weights(rng, (oh * ow, k, f), k, f, self.init, dtype), np.zeros((oh * ow, f), dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        return out

    def _patches(self, x):
        (kh, kw), (sh, sw) = self.kernel, self.stride
        oh, ow, _ = self.out_shape
        v = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, :oh * sh:sh, :ow * sw:sw]
        # (B, oh, ow, C, kh, kw) -> (oh*ow, B, kh*kw*C)
        v = v.transpose(1, 2, 0, 4, 5, 3)
        return v.reshape(oh * ow, x.shape[0], -1)

    def forward(self, x):
        self._batch = x.shape[0]
        self._cols = self._patches(x)
        w, b = self.params
        z = np.matmul(self._cols, w) + b[:, None, :]
        oh, ow, f = self.out_shape
        return self._activate(z.transpose(1, 0, 2).reshape(x.shape[0], oh, ow, f))

    def backward(self, dy):
        oh, ow, f = self.out_shape
        dz = self._deactivate(dy).reshape(self._batch, oh * ow, f).transpose(1, 0, 2)
        w, _ = self.params
        self.grads[0][...] = np.matmul(self._cols.transpose(0, 2, 1), dz)
        self.grads[1][...] = dz.sum(axis=1)
        if not self.need_input_grad:
            return None
        (kh, kw), (sh, sw) = self.kernel, self.stride
        c = self.in_shape[2]
        dcols = np.matmul(dz, w.transpose(0, 2, 1)).reshape(oh, ow, self._batch, kh, kw, c)
        dx = np.zeros((self._batch,) + self.in_shape, dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, i:i + oh * sh:sh, j:j + ow * sw:sw, :] += dcols[:, :, :, i, j, :].transpose(2, 0, 1, 3)
        return dx


class Conv3D(_Activated):
    """Shared-weight 3D convolution, stride 1, zero 'same' padding.

    For even kernels the extra padding goes after: ``(k - 1) // 2`` before,
    ``k - 1 - (k - 1) // 2`` after.
    """

    kind = "conv3d"

    def __init__(self, filters: int, kernel=(4, 4, 4), activation: str = "relu", init: str = "he"):
        super().__init__(activation, init)
        self.filters = int(filters)
        self.kernel = tuple(int(k) for k in kernel)

    def config(self):
        return {"filters": self.filters, "kernel": list(self.kernel), "activation": self.activation,
                "init": self.init}

    def output_shape(self, in_shape):
        if len(in_shape) != 4:
            raise SpecError(f"Conv3D expects (D, H, W, C), got {in_shape}")
        return tuple(in_shape[:3]) + (self.filters,)

    def param_count(self, in_shape=None):
        in_shape = in_shape or self.in_shape
        k = math.prod(self.kernel) * in_shape[3]
        return k * self.filters + self.filters

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        k = math.prod(self.kernel) * in_shape[3]
        self.params = [_init_weights(rng, (k, self.filters), k, math.prod(self.kernel) * self.filters, self.init, dtype), np.zeros(self.filters, dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        return out

    @property
    def _pads(self):
        return [((k - 1) // 2, k - 1 - (k - 1) // 2) for k in self.kernel]

    def forward(self, x):
        b = x.shape[0]
        d, h, w, _ = self.in_shape
        xp = np.pad(x, [(0, 0)] + self._pads + [(0, 0)])
        v = sliding_window_view(xp, self.kernel, axis=(1, 2, 3))
        # (B, D, H, W, C, kd, kh, kw) -> rows (B*D*H*W), cols (kd*kh*kw*C)
        self._cols = v.transpose(0, 1, 2, 3, 5, 6, 7, 4).reshape(b * d * h * w, -1)
        wt, bias = self.params
        z = self._cols @ wt + bias
        return self._activate(z.reshape((b,) + self.out_shape))

    def backward(self, dy):
        b = dy.shape[0]
        d, h, w, c = self.in_shape
        dz = self._deactivate(dy).reshape(-1, self.filters)
        wt, _ = self.params
        self.grads[0][...] = self._cols.T @ dz
        self.grads[1][...] = dz.sum(axis=0)
        if not self.need_input_grad:
            return None
        kd, kh, kw = self.kernel
        dcols = (dz @ wt.T).reshape(b, d, h, w, kd, kh, kw, c)
        (pd, _), (ph, _), (pw, _) = self._pads
        dxp = np.zeros((b, d + kd - 1, h + kh - 1, w + kw - 1, c), dtype=dy.dtype)
        for i in range(kd):
            for j in range(kh):
                for k in range(kw):
                    dxp[:, i:i + d, j:j + h, k:k + w, :] += dcols[:, :, :, :, i, j, k, :]
        return dxp[:, pd:pd + d, ph:ph + h, pw:pw + w, :]


LAYER_KINDS = {
    cls.kind: cls for cls in (Reshape, Flatten, ZeroPad2D, Dense, LocallyConnected2D, Conv3D)
}


def layer_from_config(kind: str, cfg: dict) -> Layer:
    if kind not in LAYER_KINDS:
        raise SpecError(f"unknown layer kind {kind!r}")
    try:
        return LAYER_KINDS[kind](**cfg)
    except TypeError as exc:
        raise SpecError(f"bad {kind} config {cfg}: {exc}") from None
