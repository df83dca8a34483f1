"""Sequential networks, the two shipped presets, and checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from qfe.errors import SpecError
from qfe.nn.layers import Layer, layer_from_config

CHECKPOINT_FORMAT = "qfe-ckpt/1"

# Preset defaults: linear activations and Glorot-uniform init, the defaults of
# the Keras layers these architectures are written for. See README, "Networks".
LC_ACTIVATION = "linear"
CONV_ACTIVATION = "linear"
DENSE_ACTIVATION = "linear"
INIT = "glorot"


@dataclass
class NetworkSpec:
    """Input shape (without batch axis) and ordered ``(kind, config)`` layers."""

    input_shape: tuple
    layers: list = field(default_factory=list)
    name: str = "custom"

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape),
                "layers": [[k, dict(c)] for k, c in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["input_shape"]), [(k, dict(c)) for k, c in d["layers"]], d.get("name", "custom"))

    def instantiate(self) -> list[Layer]:
        return [layer_from_config(k, c) for k, c in self.layers]

    def summary(self) -> list[tuple[str, tuple, int]]:
        """(kind, output shape, params) per layer, computed without allocating weights."""
        rows = []
        shape = tuple(self.input_shape)
        for i, layer in enumerate(self.instantiate()):
            try:
                out = layer.output_shape(shape)
            except SpecError as exc:
                raise SpecError(f"layer {i} ({layer.kind}): {exc}") from None
            rows.append((layer.kind, out, layer.param_count(shape)))
            shape = out
        if shape != (1,):
            raise SpecError(f"network must end in a scalar output, got {shape}")
        return rows

    def param_count(self) -> int:
        return sum(r[2] for r in self.summary())


def lc2d_spec(rows: int = 3, cols: int = 3, channels: int = 13, lc_activation: str = LC_ACTIVATION,
              dense_activation: str = DENSE_ACTIVATION, init: str = INIT) -> NetworkSpec:
    """Single-moment locally connected regressor (27,857 params on 3x3x13)."""
    lc = {"stride": [1, 1], "activation": lc_activation, "init": init}
    dense = {"activation": dense_activation, "init": init}
    return NetworkSpec(
        (1, rows, cols, channels),
        [
            ("reshape", {"target": [rows, cols, channels]}),
            ("zeropad2d", {"pad": 1}),
            ("lc2d", dict(lc, filters=16, kernel=[2, 2])),
            ("lc2d", dict(lc, filters=16, kernel=[1, 1])),
            ("lc2d", dict(lc, filters=16, kernel=[1, 1])),
            ("lc2d", dict(lc, filters=1, kernel=[1, 1])),
            ("flatten", {}),
            ("dense", dict(dense, units=64)),
            ("dense", dict(dense, units=64)),
            ("dense", {"units": 1, "activation": "linear", "init": init}),
        ],
        name="lc2d-3x3",
    )


def cnn3d_spec(input_shape=(12, 5, 5, 15), filters: int = 50, hidden: int = 500, narrow: int = 50,
               conv_activation: str = CONV_ACTIVATION, dense_activation: str = DENSE_ACTIVATION,
               init: str = INIT) -> NetworkSpec:
    """Multi-moment 3D CNN (8,645,253 params on 12x5x5x15).

    The two trailing Dense(1) layers are both linear, so together they are an
    affine recalibration of the scalar head.
    """
    conv = {"filters": filters, "kernel": [4, 4, 4], "activation": conv_activation, "init": init}
    dense = {"activation": dense_activation, "init": init}
    head = {"units": 1, "activation": "linear", "init": init}
    return NetworkSpec(
        tuple(input_shape),
        [("conv3d", dict(conv)), ("conv3d", dict(conv)), ("conv3d", dict(conv)), ("flatten", {})]
        + [("dense", dict(dense, units=hidden)) for _ in range(4)]
        + [("dense", dict(dense, units=narrow)), ("dense", dict(head)), ("dense", dict(head))],
        name="cnn3d",
    )


PRESETS = {"lc2d-3x3": lc2d_spec, "cnn3d": cnn3d_spec}


class Network:
    """A built network: layers with parameters, scalar output per sample."""

    def __init__(self, spec: NetworkSpec, seed=0, dtype=np.float64):
        spec.summary()
        self.spec = spec
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers = spec.instantiate()
        shape = tuple(spec.input_shape)
        for layer in self.layers:
            shape = layer.build(shape, rng, self.dtype)
        # the first parameterized layer never needs an input gradient
        for layer in self.layers:
            if layer.has_params:
                layer.need_input_grad = False
                break

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def param_count(self) -> int:
        return sum(p.size for p in self.params)

    def _batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape == tuple(self.spec.input_shape):
            x = x[None]
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise SpecError(f"input shape {x.shape[1:]} does not match {tuple(self.spec.input_shape)}")
        return x

    def forward(self, x) -> np.ndarray:
        """Predictions of shape ``(B,)``."""
        h = self._batch(x)
        for layer in self.layers:
            h = layer.forward(h)
        return h[:, 0]

    def backward(self, dout) -> None:
        """Backpropagate d(loss)/d(output) of shape ``(B,)`` into ``grads``."""
        g = np.asarray(dout, dtype=self.dtype)[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)
            if g is None:
                break

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        x = self._batch(x)
        return np.concatenate([self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])

    def loss_and_grad(self, x, y) -> float:
        """Mean squared error on a batch; gradients left in ``grads``."""
        pred = self.forward(x)
        diff = pred - np.asarray(y, dtype=self.dtype)
        self.backward(2.0 * diff / diff.size)
        return float(np.mean(diff * diff))

    def calibrate_output(self, x, y, batch_size: int = 256) -> tuple[float, float]:
        """Data-dependent init of the last layer, used once before training.

        The head weights are shrunk (never grown) so the prediction spread on
        ``x`` is at most the spread of ``y``, then the bias is shifted so the
        mean prediction equals the mean of ``y``. Returns ``(scale, shift)``.
        """
        head = self.layers[-1]
        if not head.has_params:
            raise SpecError("the last layer has no weights to calibrate")
        y = np.asarray(y, dtype=float)
        pred = self.predict(x, batch_size).astype(float)
        scale = 1.0
        if np.std(pred) > np.std(y):
            scale = float(np.std(y) / np.std(pred))
            head.params[0][...] *= scale
            head.params[1][...] *= scale
            pred = pred * scale
        shift = float(np.mean(y) - np.mean(pred))
        head.params[1][...] += shift
        return scale, shift

    def loss(self, x, y) -> float:
        diff = self.forward(x) - np.asarray(y, dtype=self.dtype)
        return float(np.mean(diff * diff))

    def save(self, path) -> None:
        arrays = {f"p{i}": p for i, p in enumerate(self.params)}
        meta = {"format": CHECKPOINT_FORMAT, "spec": self.spec.to_dict(), "dtype": self.dtype.name}
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> "Network":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise SpecError(f"unsupported checkpoint format {meta.get('format')!r}")
            net = cls(NetworkSpec.from_dict(meta["spec"]), seed=0, dtype=meta["dtype"])
            for i, p in enumerate(net.params):
                p[...] = data[f"p{i}"]
        return net


def build_network(spec: NetworkSpec | str, seed=0, dtype=np.float64, **preset_kwargs) -> Network:
    if isinstance(spec, str):
        try:
            spec = PRESETS[spec](**preset_kwargs)
        except KeyError:
            raise SpecError(f"unknown preset {spec!r}; available: {sorted(PRESETS)}") from None
    return Network(spec, seed=seed, dtype=dtype)


def param_count(network: Network | NetworkSpec) -> int:
    return network.param_count()
