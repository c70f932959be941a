"""A small NumPy convolutional-network library with hand-written backpropagation.

Tensors are NHWC. Networks are declared as a :class:`NetworkSpec` (an ordered list
of :class:`LayerSpec`) and end in a softmax trained with (soft-target)
cross-entropy and Adam.
"""

from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

LAYER_KINDS = ("conv", "dropout", "layernorm", "relu", "swish", "maxpool", "avgpool", "dense", "softmax")


class SpecError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel: int = 1
    stride: int = 1
    padding: str = "same"
    rate: float = 0.0
    units: int = 0
    name: str = ""

    def label(self, index: int) -> str:
        return self.name or f"{self.kind}_{index}"


def conv(filters, kernel, stride=1, padding="same", name=""):
    return LayerSpec("conv", filters=filters, kernel=kernel, stride=stride, padding=padding, name=name)


def dropout(rate, name=""):
    return LayerSpec("dropout", rate=rate, name=name)


def dense(units, name=""):
    return LayerSpec("dense", units=units, name=name)


def maxpool(size=2, stride=2, name=""):
    return LayerSpec("maxpool", kernel=size, stride=stride, padding="valid", name=name)


def layer(kind, name=""):
    return LayerSpec(kind, name=name)


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    outputs: int
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    loss: str = "cross-entropy"
    input_channels: int = 1
    name: str = ""

    def validate(self):
        if self.input_channels != 1:
            raise SpecError("networks consume single-channel images")
        kinds = [l.kind for l in self.layers]
        for i, l in enumerate(self.layers):
            if l.kind not in LAYER_KINDS:
                raise SpecError(f"layer {l.label(i)}: unknown kind {l.kind!r}")
            if l.kind in ("conv", "maxpool") and (l.stride < 1 or l.kernel < 1):
                raise SpecError(f"layer {l.label(i)}: stride and kernel must be >= 1")
            if l.kind == "dropout" and not 0 <= l.rate < 1:
                raise SpecError(f"layer {l.label(i)}: dropout rate must lie in [0, 1)")
            if l.kind == "conv" and l.padding not in ("same", "valid"):
                raise SpecError(f"layer {l.label(i)}: padding must be 'same' or 'valid'")
        if kinds.count("softmax") != 1 or kinds[-1] != "softmax":
            raise SpecError("exactly one softmax layer is required, and it must come last")
        if self.optimizer != "adam" or self.loss != "cross-entropy":
            raise SpecError("only Adam with cross-entropy is supported")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "NetworkSpec":
        d = dict(d)
        d["layers"] = tuple(LayerSpec(**l) for l in d["layers"])
        return cls(**d)


def _same_pads(size, k, s):
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


# --- layers -----------------------------------------------------------------

class Layer:
    params: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, training, rng):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError


class Conv2D(Layer):
    def __init__(self, cin, cout, k, stride, padding, rng, dtype):
        super().__init__()
        self.k, self.s, self.padding = k, stride, padding
        self.input_grad = True
        limit = math.sqrt(6.0 / (k * k * cin))
        self.params = {
            "W": rng.uniform(-limit, limit, size=(k, k, cin, cout)).astype(dtype),
            "b": np.zeros(cout, dtype=dtype),
        }

    def out_shape(self, h, w):
        if self.padding == "same":
            return _same_pads(h, self.k, self.s)[0], _same_pads(w, self.k, self.s)[0]
        return (h - self.k) // self.s + 1, (w - self.k) // self.s + 1

    def forward(self, x, training, rng):
        k, s = self.k, self.s
        B, H, W, C = x.shape
        if self.padding == "same":
            ho, pt, pb = _same_pads(H, k, s)
            wo, pl, pr = _same_pads(W, k, s)
            xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if pt + pb + pl + pr else x
        else:
            ho, wo = (H - k) // s + 1, (W - k) // s + 1
            pt = pl = 0
            xp = x
        cols = np.empty((B, ho, wo, k, k, C), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i, j, :] = xp[:, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s, :]
        cols = cols.reshape(B * ho * wo, k * k * C)
        Wm = self.params["W"].reshape(k * k * C, -1)
        out = cols @ Wm + self.params["b"]
        self.cache = (cols, xp.shape, x.shape, (pt, pl), (ho, wo))
        return out.reshape(B, ho, wo, -1)

    def backward(self, g):
        cols, xp_shape, x_shape, (pt, pl), (ho, wo) = self.cache
        k, s = self.k, self.s
        B, H, W, C = x_shape
        g2 = g.reshape(B * ho * wo, -1)
        self.grads["W"] = (cols.T @ g2).reshape(self.params["W"].shape)
        self.grads["b"] = g2.sum(axis=0)
        if not self.input_grad:
            self.cache = None
            return None
        dcols = (g2 @ self.params["W"].reshape(k * k * C, -1).T).reshape(B, ho, wo, k, k, C)
        dxp = np.zeros(xp_shape, dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s, :] += dcols[:, :, :, i, j, :]
        self.cache = None
        return dxp[:, pt : pt + H, pl : pl + W, :]


class Dense(Layer):
    def __init__(self, n_in, n_out, rng, dtype):
        super().__init__()
        limit = math.sqrt(6.0 / n_in)
        self.params = {
            "W": rng.uniform(-limit, limit, size=(n_in, n_out)).astype(dtype),
            "b": np.zeros(n_out, dtype=dtype),
        }

    def forward(self, x, training, rng):
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, g):
        self.grads["W"] = self.x.T @ g
        self.grads["b"] = g.sum(axis=0)
        return g @ self.params["W"].T


class Dropout(Layer):
    """Inverted dropout: surviving activations are scaled by ``1 / (1 - rate)``."""

    def __init__(self, rate):
        super().__init__()
        self.rate = rate

    def forward(self, x, training, rng):
        if not training or self.rate == 0:
            self.mask = None
            return x
        keep = 1.0 - self.rate
        self.mask = (rng.random(x.shape, dtype=np.float64) < keep).astype(x.dtype) / x.dtype.type(keep)
        return x * self.mask

    def backward(self, g):
        return g if self.mask is None else g * self.mask


class LayerNorm(Layer):
    """Normalizes the channel vector at every spatial position."""

    eps = 1e-3

    def __init__(self, channels, dtype):
        super().__init__()
        self.params = {"gamma": np.ones(channels, dtype=dtype), "beta": np.zeros(channels, dtype=dtype)}

    def forward(self, x, training, rng):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + x.dtype.type(self.eps))
        xhat = xc * inv
        self.cache = (xhat, inv)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, g):
        xhat, inv = self.cache
        axes = tuple(range(g.ndim - 1))
        self.grads["gamma"] = (g * xhat).sum(axis=axes)
        self.grads["beta"] = g.sum(axis=axes)
        gx = g * self.params["gamma"]
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        return inv * (gx - m1 - xhat * m2)


class ReLU(Layer):
    def forward(self, x, training, rng):
        self.pos = x > 0
        return x * self.pos

    def backward(self, g):
        return g * self.pos


class Swish(Layer):
    def forward(self, x, training, rng):
        sig = 1.0 / (1.0 + np.exp(-x))
        self.cache = (x, sig)
        return x * sig

    def backward(self, g):
        x, sig = self.cache
        return g * (sig * (1.0 + x * (1.0 - sig)))


class MaxPool(Layer):
    def __init__(self, size, stride):
        super().__init__()
        if size != stride:
            raise SpecError("only non-overlapping max pooling (size == stride) is supported")
        self.size = size

    def out_shape(self, h, w):
        return h // self.size, w // self.size

    def forward(self, x, training, rng):
        p = self.size
        B, H, W, C = x.shape
        ho, wo = H // p, W // p
        xr = x[:, : ho * p, : wo * p, :].reshape(B, ho, p, wo, p, C).transpose(0, 1, 3, 5, 2, 4)
        xr = xr.reshape(B, ho, wo, C, p * p)
        idx = xr.argmax(axis=-1)
        self.cache = (x.shape, idx)
        return np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]

    def backward(self, g):
        shape, idx = self.cache
        p = self.size
        B, H, W, C = shape
        ho, wo = g.shape[1:3]
        win = np.zeros((B, ho, wo, C, p * p), dtype=g.dtype)
        np.put_along_axis(win, idx[..., None], g[..., None], axis=-1)
        win = win.reshape(B, ho, wo, C, p, p).transpose(0, 1, 4, 2, 5, 3).reshape(B, ho * p, wo * p, C)
        dx = np.zeros(shape, dtype=g.dtype)
        dx[:, : ho * p, : wo * p, :] = win
        return dx


class GlobalAvgPool(Layer):
    def forward(self, x, training, rng):
        self.shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, g):
        B, H, W, C = self.shape
        return np.broadcast_to(g[:, None, None, :] / (H * W), self.shape).copy()


class Flatten(Layer):
    def forward(self, x, training, rng):
        self.shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self.shape)


# --- network ----------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs_or_logits: np.ndarray, targets: np.ndarray, from_logits: bool = True) -> float:
    """Mean soft-target cross-entropy over the batch."""
    if from_logits:
        z = probs_or_logits - probs_or_logits.max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    else:
        logp = np.log(np.clip(probs_or_logits, 1e-12, None))
    return float(-(targets * logp).sum(axis=-1).mean())


class Network:
    """Trainable network built from a :class:`NetworkSpec`."""

    beta1, beta2, epsilon = 0.9, 0.999, 1e-7

    def __init__(self, spec: NetworkSpec, input_shape=(30, 30), seed=0, dtype=np.float32):
        spec.validate()
        self.spec = spec
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers: list[tuple[str, Layer]] = []
        h, w = self.input_shape
        c, flat = spec.input_channels, None
        for i, ls in enumerate(spec.layers):
            name = ls.label(i)
            if ls.kind == "conv":
                if flat is not None:
                    raise SpecError(f"layer {name}: convolution after pooling to a vector")
                lay = Conv2D(c, ls.filters, ls.kernel, ls.stride, ls.padding, rng, self.dtype)
                h, w = lay.out_shape(h, w)
                c = ls.filters
            elif ls.kind == "maxpool":
                lay = MaxPool(ls.kernel, ls.stride)
                h, w = lay.out_shape(h, w)
            elif ls.kind == "avgpool":
                lay = GlobalAvgPool()
                flat = c
            elif ls.kind == "dense":
                if flat is None:
                    self.layers.append((f"flatten_{i}", Flatten()))
                    flat = h * w * c
                lay = Dense(flat, ls.units, rng, self.dtype)
                flat = ls.units
            elif ls.kind == "layernorm":
                lay = LayerNorm(flat if flat is not None else c, self.dtype)
            elif ls.kind == "dropout":
                lay = Dropout(ls.rate)
            elif ls.kind == "relu":
                lay = ReLU()
            elif ls.kind == "swish":
                lay = Swish()
            else:  # softmax: the output head is folded into the loss
                if flat is None or flat != spec.outputs:
                    raise SpecError(f"layer {name}: softmax must follow a layer with {spec.outputs} units")
                continue
            if h < 1 or w < 1:
                raise SpecError(f"layer {name}: spatial size drops below 1x1 for input {self.input_shape}")
            self.layers.append((name, lay))
        # nothing upstream of the first layer needs a gradient
        first = self.layers[0][1]
        if isinstance(first, Conv2D):
            first.input_grad = False
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        self.v = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        self.history: list[dict] = []

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{name}/{k}": v for name, lay in self.layers for k, v in lay.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{name}/{k}": v for name, lay in self.layers for k, v in lay.grads.items()}

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.parameters().values()))

    def _as_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[..., None]
        if x.ndim != 4 or x.shape[1:3] != self.input_shape or x.shape[3] != self.spec.input_channels:
            raise ValueError(f"expected images of shape {self.input_shape}, got {x.shape[1:]}")
        return x

    def logits(self, x, training=False, rng=None) -> np.ndarray:
        x = self._as_input(x)
        if training and rng is None:
            rng = np.random.default_rng()
        for _, lay in self.layers:
            x = lay.forward(x, training, rng)
        return x

    def forward(self, x, training=False, rng=None) -> np.ndarray:
        """Class probabilities for a batch of images."""
        return softmax(self.logits(x, training, rng))

    def predict_proba(self, x, batch_size=256) -> np.ndarray:
        x = np.asarray(x)
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.spec.outputs), dtype=self.dtype)

    def loss_and_gradients(self, x, targets, rng=None) -> tuple[float, dict]:
        """Forward in training mode, then backpropagate the mean cross-entropy."""
        targets = np.asarray(targets, dtype=self.dtype)
        z = self.logits(x, training=True, rng=rng)
        loss = cross_entropy(z, targets)
        g = (softmax(z) - targets) / self.dtype.type(len(z))
        for _, lay in reversed(self.layers):
            g = lay.backward(g)
            if g is None:
                break
        return loss, self.gradients()

    def adam_step(self, grads: dict, lr: float | None = None):
        lr = self.spec.learning_rate if lr is None else lr
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        # bias corrections folded into the step size
        a = lr * math.sqrt(1 - b2**self.step) / (1 - b1**self.step)
        eps_hat = self.epsilon * math.sqrt(1 - b2**self.step)
        params = self.parameters()
        for key, g in grads.items():
            m, v = self.m[key], self.v[key]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            params[key] -= (a * m / (np.sqrt(v) + eps_hat)).astype(self.dtype, copy=False)

    def get_weights(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def set_weights(self, weights: dict):
        params = self.parameters()
        for k, v in weights.items():
            params[k][...] = v


def build(spec: NetworkSpec, seed=0, input_shape=(30, 30), dtype=np.float32) -> Network:
    return Network(spec, input_shape=input_shape, seed=seed, dtype=dtype)


def count_parameters(spec: NetworkSpec, input_shape=(30, 30)) -> int:
    return build(spec, 0, input_shape).n_params


def accuracy(probs: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == np.argmax(targets, axis=1)))


def train(net: Network, x_train, y_train, x_val, y_val, epochs=30, batch_size=64, seed=0, patience=5,
          lr=None, log_every=0) -> list[dict]:
    """Minibatch Adam training with early stopping on validation loss.

    The weights with the lowest validation loss are restored at the end. Returns
    (and appends to ``net.history``) one record per epoch.
    """
    if len(x_train) == 0:
        raise ValueError("training set is empty")
    if len(x_val) == 0:
        raise ValueError("validation set is empty")
    rng = np.random.default_rng(seed)
    x_train = np.asarray(x_train, dtype=net.dtype)
    y_train = np.asarray(y_train, dtype=net.dtype)
    best, best_loss, waited = net.get_weights(), math.inf, 0
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(x_train))
        total, seen, correct = 0.0, 0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            loss, grads = net.loss_and_gradients(x_train[idx], y_train[idx], rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, step {net.step}")
            net.adam_step(grads, lr)
            total += loss * len(idx)
            seen += len(idx)
        val_probs = net.predict_proba(x_val)
        val_loss = cross_entropy(val_probs, np.asarray(y_val), from_logits=False)
        record = {
            "epoch": epoch,
            "train_loss": total / seen,
            "val_loss": val_loss,
            "val_accuracy": accuracy(val_probs, np.asarray(y_val)),
        }
        history.append(record)
        if log_every and epoch % log_every == 0:
            logger.info("epoch %d: %s", epoch, record)
        if val_loss < best_loss - 1e-6:
            best, best_loss, waited = net.get_weights(), val_loss, 0
        else:
            waited += 1
            if waited >= patience:
                break
    net.set_weights(best)
    net.history.extend(history)
    return history


# --- checkpoints ------------------------------------------------------------

CHECKPOINT_FORMAT = "qdtune-checkpoint/1"


def save_checkpoint(net: Network, path, extra: dict | None = None) -> Path:
    """Write ``manifest.json`` + ``params.bin`` (float32/float64 LE, row-major)."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    dt = net.dtype.newbyteorder("<")
    with open(out / "params.bin", "wb") as fh:
        for group, tensors in (("param", net.parameters()), ("adam_m", net.m), ("adam_v", net.v)):
            for key, arr in tensors.items():
                blob = np.ascontiguousarray(arr, dtype=dt).tobytes()
                fh.write(blob)
                entries.append({"group": group, "name": key, "shape": list(arr.shape), "offset": offset,
                                "crc32": zlib.crc32(blob)})
                offset += len(blob)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "spec": net.spec.to_dict(),
        "input_shape": list(net.input_shape),
        "dtype": dt.str,
        "adam_step": net.step,
        "tensors": entries,
        "history": net.history,
        "extra": extra or {},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return out


def load_checkpoint(path) -> tuple[Network, dict]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a qdtune checkpoint")
    dt = np.dtype(manifest["dtype"])
    net = Network(NetworkSpec.from_dict(manifest["spec"]), tuple(manifest["input_shape"]), 0, dt.newbyteorder("="))
    raw = (path / "params.bin").read_bytes()
    groups = {"param": net.parameters(), "adam_m": net.m, "adam_v": net.v}
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"])) * dt.itemsize
        blob = raw[e["offset"] : e["offset"] + n]
        if len(blob) != n or zlib.crc32(blob) != e["crc32"]:
            raise ValueError(f"tensor {e['name']} in {path} is truncated or corrupt")
        groups[e["group"]][e["name"]][...] = np.frombuffer(blob, dtype=dt).reshape(e["shape"])
    net.step = manifest["adam_step"]
    net.history = manifest["history"]
    return net, manifest.get("extra", {})
