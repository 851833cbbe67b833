"""From-scratch neural stack for voxel-wise FA regression.

Two architectures:

* FCN: dense ReLU stack on the 6 normalized signals (units 100/100/10,
  linear scalar output).
* SCNN: spectral spherical network on the ADC profile.  Each spherical
  layer scales SH coefficients with an isotropic per-degree filter
  (shared across m, which is what makes it rotation equivariant),
  synthesizes onto an oversampled grid, applies bias + ReLU there, and
  analyzes back to the working bandlimit.  The readout is the
  per-channel power spectrum (exactly rotation invariant) followed by a
  small dense ReLU head.

Gradients are hand-derived per layer; the optimizer is Adam.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import sphere
from .sphere import SHCoeffs, SphGrid, SphSignal

ADC_SCALE = 1.0e-3  # mm^2/s; SCNN inputs are ADC / ADC_SCALE


class ShapeMismatch(ValueError):
    """Input shape does not match the model."""


class EmptyDataset(ValueError):
    """Training requires at least one example."""


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # "fcn" | "scnn"
    fcn_layers: tuple = (6, 100, 100, 10, 1)
    scnn_channels: tuple = (1, 8, 8)
    scnn_bandlimit: int = 8
    scnn_oversample: int = 2
    readout_hidden: int = 32
    activation: str = "relu"  # "identity" linearizes the spherical layers

    def __post_init__(self):
        if self.kind not in ("fcn", "scnn"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.001
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("invalid training configuration")


@dataclass
class NetworkModel:
    spec: ModelSpec
    params: np.ndarray
    views: dict = field(repr=False, default_factory=dict)
    adam_m: np.ndarray | None = None
    adam_v: np.ndarray | None = None
    adam_t: int = 0

    def view(self, name: str) -> np.ndarray:
        sl, shape = self.views[name]
        return self.params[sl].reshape(shape)


def _param_layout(spec: ModelSpec):
    """Ordered (name, shape) list defining the flat parameter layout."""
    layout = []
    if spec.kind == "fcn":
        units = spec.fcn_layers
        for i in range(len(units) - 1):
            layout.append((f"w{i}", (units[i + 1], units[i])))
            layout.append((f"b{i}", (units[i + 1],)))
    else:
        ch = spec.scnn_channels
        ll = spec.scnn_bandlimit
        for i in range(len(ch) - 1):
            layout.append((f"conv_w{i}", (ch[i + 1], ch[i], ll)))
            layout.append((f"conv_b{i}", (ch[i + 1],)))
        feat = ch[-1] * ll
        layout.append(("head_w0", (spec.readout_hidden, feat)))
        layout.append(("head_b0", (spec.readout_hidden,)))
        layout.append(("head_w1", (spec.readout_hidden,)))
        layout.append(("head_b1", (1,)))
    return layout


def _fan_in(name: str, shape) -> int:
    if name.startswith("conv_w"):
        return shape[1] * shape[2]
    if name.startswith(("w", "head_w")) and len(shape) > 1:
        return shape[1]
    return shape[0]


def init_model(spec: ModelSpec, seed: int = 0) -> NetworkModel:
    """He-style uniform fan-in initialization; biases start at zero."""
    rng = np.random.default_rng(seed)
    layout = _param_layout(spec)
    total = sum(int(np.prod(s)) for _, s in layout)
    params = np.zeros(total)
    views = {}
    pos = 0
    for name, shape in layout:
        size = int(np.prod(shape))
        sl = slice(pos, pos + size)
        views[name] = (sl, shape)
        if "b" not in name.split("_")[-1][:1] and not name.startswith("b"):
            bound = np.sqrt(6.0 / _fan_in(name, shape))
            params[sl] = rng.uniform(-bound, bound, size)
        pos += size
    model = NetworkModel(spec=spec, params=params, views=views)
    model.adam_m = np.zeros(total)
    model.adam_v = np.zeros(total)
    return model


# ---------------------------------------------------------------------------
# spherical layer machinery


class _ScnnOps:
    """Shared read-only matrices for one (bandlimit, oversample) pair."""

    def __init__(self, bandlimit: int, oversample: int):
        self.bandlimit = bandlimit
        self.grid = SphGrid(bandlimit)
        self.os_grid = SphGrid(bandlimit * oversample)
        os_plan = sphere.get_plan(self.os_grid)
        l2 = bandlimit ** 2
        self.synth = os_plan.synthesis[:, :l2]         # (n_os, L^2)
        self.analyze = os_plan.analysis[:l2, :]        # (L^2, n_os)
        self.ell = np.concatenate([np.full(2 * l + 1, l)
                                   for l in range(bandlimit)])
        # segment-sum matrix: (L, L^2)
        self.seg = np.zeros((bandlimit, l2))
        self.seg[self.ell, np.arange(l2)] = 1.0


_OPS: dict[tuple, _ScnnOps] = {}


def _ops(spec: ModelSpec) -> _ScnnOps:
    key = (spec.scnn_bandlimit, spec.scnn_oversample)
    if key not in _OPS:
        _OPS[key] = _ScnnOps(*key)
    return _OPS[key]


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return z
    return np.maximum(z, 0.0)


def _act_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return np.ones_like(z)
    return (z > 0.0).astype(float)


def scnn_input_coeffs(signal: SphSignal) -> np.ndarray:
    """Network input: SH coefficients of the ADC profile scaled to O(1)."""
    return sphere.sht_forward(signal).coeffs / ADC_SCALE


def _check_inputs(model: NetworkModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if model.spec.kind == "fcn":
        want = model.spec.fcn_layers[0]
    else:
        want = model.spec.scnn_bandlimit ** 2
    if x.ndim != 2 or x.shape[1] != want:
        raise ShapeMismatch(f"expected (batch, {want}) inputs, got {x.shape}")
    return x


def _fcn_forward(model: NetworkModel, x: np.ndarray, cache=None) -> np.ndarray:
    n_layers = len(model.spec.fcn_layers) - 1
    h = x
    for i in range(n_layers):
        w, b = model.view(f"w{i}"), model.view(f"b{i}")
        z = h @ w.T + b
        if i < n_layers - 1:
            zn = _act(z, "relu")
        else:
            zn = z
        if cache is not None:
            cache.append((h, z))
        h = zn
    return h[:, 0]


def _scnn_forward(model: NetworkModel, x: np.ndarray, cache=None) -> np.ndarray:
    ops = _ops(model.spec)
    spec = model.spec
    a = x[:, None, :]  # (B, 1, L^2)
    n_conv = len(spec.scnn_channels) - 1
    for i in range(n_conv):
        w = model.view(f"conv_w{i}")[:, :, ops.ell]  # (Cout, Cin, L^2)
        b = model.view(f"conv_b{i}")
        ahat = np.einsum("ock,bck->bok", w, a)
        z = ahat @ ops.synth.T + b[None, :, None]
        h = _act(z, spec.activation)
        if cache is not None:
            cache.append((a, z))
        a = h @ ops.analyze.T
    p = (a * a) @ ops.seg.T  # (B, C, L)
    u = p.reshape(p.shape[0], -1)
    w0, b0 = model.view("head_w0"), model.view("head_b0")
    z3 = u @ w0.T + b0
    h3 = _act(z3, "relu")
    out = h3 @ model.view("head_w1") + model.view("head_b1")[0]
    if cache is not None:
        cache.append((a, u, z3, h3))
    return out


def forward(model: NetworkModel, inp) -> float:
    """Scalar FA estimate for a single input.

    FCN takes the 6 normalized signals; SCNN takes a SphSignal on the
    model grid (or a precomputed scaled coefficient vector).
    """
    if model.spec.kind == "fcn":
        x = np.asarray(inp, dtype=float).reshape(1, -1)
        return float(_fcn_forward(model, _check_inputs(model, x))[0])
    if isinstance(inp, SphSignal):
        x = scnn_input_coeffs(inp).reshape(1, -1)
    else:
        x = np.asarray(inp, dtype=float).reshape(1, -1)
    return float(_scnn_forward(model, _check_inputs(model, x))[0])


def forward_batch(model: NetworkModel, inputs: np.ndarray) -> np.ndarray:
    x = _check_inputs(model, np.asarray(inputs, dtype=float))
    if model.spec.kind == "fcn":
        return _fcn_forward(model, x)
    return _scnn_forward(model, x)


def predict_batch(model: NetworkModel, inputs, chunk: int = 2048) -> np.ndarray:
    """Forward pass clamped to the valid FA range [0, 1].

    Evaluates in chunks to bound the memory of the spherical layers.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[0] == 0:
        return np.zeros(0)
    outs = [forward_batch(model, inputs[i:i + chunk])
            for i in range(0, inputs.shape[0], chunk)]
    return np.clip(np.concatenate(outs), 0.0, 1.0)


def _fcn_backward(model, cache, dout):
    n_layers = len(model.spec.fcn_layers) - 1
    grads = {}
    dh = dout[:, None]
    for i in range(n_layers - 1, -1, -1):
        h, z = cache[i]
        dz = dh if i == n_layers - 1 else dh * _act_grad(z, "relu")
        grads[f"w{i}"] = dz.T @ h
        grads[f"b{i}"] = dz.sum(axis=0)
        dh = dz @ model.view(f"w{i}")
    return grads


def _scnn_backward(model, cache, dout):
    ops = _ops(model.spec)
    spec = model.spec
    grads = {}
    a_last, u, z3, h3 = cache[-1]
    dh3 = dout[:, None] * model.view("head_w1")[None, :]
    grads["head_w1"] = h3.T @ dout
    grads["head_b1"] = np.array([dout.sum()])
    dz3 = dh3 * _act_grad(z3, "relu")
    grads["head_w0"] = dz3.T @ u
    grads["head_b0"] = dz3.sum(axis=0)
    du = dz3 @ model.view("head_w0")
    dp = du.reshape(a_last.shape[0], spec.scnn_channels[-1], spec.scnn_bandlimit)
    da = 2.0 * a_last * (dp @ ops.seg)
    n_conv = len(spec.scnn_channels) - 1
    for i in range(n_conv - 1, -1, -1):
        a_prev, z = cache[i]
        dh = da @ ops.analyze
        dz = dh * _act_grad(z, spec.activation)
        grads[f"conv_b{i}"] = dz.sum(axis=(0, 2))
        dahat = dz @ ops.synth
        dw_full = np.einsum("bok,bck->ock", dahat, a_prev)
        grads[f"conv_w{i}"] = dw_full @ ops.seg.T
        w = model.view(f"conv_w{i}")[:, :, ops.ell]
        da = np.einsum("ock,bok->bck", w, dahat)
    return grads


def loss_and_grad(model: NetworkModel, inputs, targets):
    """Mean squared error over the batch and its exact gradient w.r.t. theta."""
    x = _check_inputs(model, np.asarray(inputs, dtype=float))
    t = np.asarray(targets, dtype=float)
    if x.shape[0] == 0:
        raise EmptyDataset("empty batch")
    if t.shape != (x.shape[0],):
        raise ShapeMismatch("targets must be one scalar per input")
    cache = []
    if model.spec.kind == "fcn":
        out = _fcn_forward(model, x, cache)
    else:
        out = _scnn_forward(model, x, cache)
    resid = out - t
    mse = float(resid @ resid) / x.shape[0]
    dout = 2.0 * resid / x.shape[0]
    if model.spec.kind == "fcn":
        grads = _fcn_backward(model, cache, dout)
    else:
        grads = _scnn_backward(model, cache, dout)
    flat = np.zeros_like(model.params)
    for name, (sl, shape) in model.views.items():
        flat[sl] = grads[name].reshape(-1)
    return mse, flat


def adam_step(model: NetworkModel, grad: np.ndarray,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Standard Adam update, in place."""
    if grad.shape != model.params.shape:
        raise ShapeMismatch("gradient does not align with parameters")
    model.adam_t += 1
    model.adam_m = beta1 * model.adam_m + (1 - beta1) * grad
    model.adam_v = beta2 * model.adam_v + (1 - beta2) * grad * grad
    mhat = model.adam_m / (1 - beta1 ** model.adam_t)
    vhat = model.adam_v / (1 - beta2 ** model.adam_t)
    model.params -= lr * mhat / (np.sqrt(vhat) + eps)


def train(model: NetworkModel, inputs, targets, cfg: TrainConfig):
    """Minibatch Adam training; returns (model, per-epoch mean batch MSE)."""
    x = _check_inputs(model, np.asarray(inputs, dtype=float))
    t = np.asarray(targets, dtype=float)
    if x.shape[0] == 0:
        raise EmptyDataset("dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        losses = []
        for start in range(0, x.shape[0], cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            mse, grad = loss_and_grad(model, x[idx], t[idx])
            adam_step(model, grad, cfg.learning_rate)
            losses.append(mse)
        trace.append(float(np.mean(losses)))
    return model, trace


# ---------------------------------------------------------------------------
# serialization

_MAGIC = b"SPHADC01"
_KINDS = {"fcn": 0, "scnn": 1}
_ACTS = {"relu": 0, "identity": 1}


def save_model(model: NetworkModel, path) -> None:
    """Versioned little-endian binary: magic, spec header, float64 theta."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        spec = model.spec
        fh.write(struct.pack("<II", _KINDS[spec.kind], _ACTS[spec.activation]))
        if spec.kind == "fcn":
            fh.write(struct.pack("<I", len(spec.fcn_layers)))
            fh.write(struct.pack(f"<{len(spec.fcn_layers)}I", *spec.fcn_layers))
        else:
            fh.write(struct.pack("<III", spec.scnn_bandlimit,
                                 spec.scnn_oversample, spec.readout_hidden))
            fh.write(struct.pack("<I", len(spec.scnn_channels)))
            fh.write(struct.pack(f"<{len(spec.scnn_channels)}I",
                                 *spec.scnn_channels))
        fh.write(struct.pack("<Q", model.params.size))
        fh.write(model.params.astype("<f8").tobytes())


def load_model(path) -> NetworkModel:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a sphadc model file")
        kind_i, act_i = struct.unpack("<II", fh.read(8))
        kind = {v: k for k, v in _KINDS.items()}[kind_i]
        act = {v: k for k, v in _ACTS.items()}[act_i]
        if kind == "fcn":
            (n,) = struct.unpack("<I", fh.read(4))
            layers = struct.unpack(f"<{n}I", fh.read(4 * n))
            spec = ModelSpec(kind="fcn", fcn_layers=tuple(layers),
                             activation=act)
        else:
            ll, ov, hidden = struct.unpack("<III", fh.read(12))
            (n,) = struct.unpack("<I", fh.read(4))
            ch = struct.unpack(f"<{n}I", fh.read(4 * n))
            spec = ModelSpec(kind="scnn", scnn_channels=tuple(ch),
                             scnn_bandlimit=ll, scnn_oversample=ov,
                             readout_hidden=hidden, activation=act)
        (count,) = struct.unpack("<Q", fh.read(8))
        params = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(float)
    model = init_model(spec, seed=0)
    if params.size != model.params.size:
        raise ValueError("parameter count mismatch in model file")
    model.params = params
    model.adam_m = np.zeros_like(params)
    model.adam_v = np.zeros_like(params)
    return model
