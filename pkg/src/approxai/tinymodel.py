"""Small feed-forward networks with analytic input gradients.

Model arithmetic stays in float64. Supported layers: ``dense``,
``conv2d`` (stride 1, zero ``same`` padding, odd kernel sides) and
``flatten``; activations ``identity``, ``relu``, ``tanh`` and ``softmax``.

Model files are JSON::

    {
      "schema_version": 1,
      "input_shape": [4],
      "layers": [
        {"kind": "dense", "weights": [[...], ...], "bias": [...], "activation": "relu"},
        {"kind": "conv2d", "weights": [[[[...]]]], "bias": [...],
         "stride": 1, "padding": "same", "activation": "relu"},
        {"kind": "flatten"}
      ]
    }

Dense weights are ``(out, in)``; conv weights are ``(c_out, c_in, kh, kw)``
applied to inputs shaped ``(c_in, h, w)`` (cross-correlation, as in most
frameworks).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteWeightsError, ParseError, SchemaVersionError, ShapeMismatchError

SCHEMA_VERSION = 1
KINDS = ("dense", "conv2d", "flatten")
ACTIVATIONS = ("identity", "relu", "tanh", "softmax")


@dataclass(frozen=True, eq=False)
class Layer:
    kind: str
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    activation: str = "identity"
    stride: int = 1
    padding: str = "same"

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return (self.kind == other.kind and self.activation == other.activation
                and self.stride == other.stride and self.padding == other.padding
                and _arr_eq(self.weights, other.weights) and _arr_eq(self.bias, other.bias))

    __hash__ = None


def _arr_eq(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class TinyModel:
    layers: tuple
    input_shape: tuple
    output_dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = _check_layer(layer, shape, f"layers[{i}]")
        object.__setattr__(self, "output_dim", int(np.prod(shape)))

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_shape))

    def __eq__(self, other):
        if not isinstance(other, TinyModel):
            return NotImplemented
        return self.input_shape == other.input_shape and self.layers == other.layers

    __hash__ = None


def _check_layer(layer: Layer, shape: tuple, where: str) -> tuple:
    if layer.kind not in KINDS:
        raise ShapeMismatchError(f"{where}.kind: unknown layer kind {layer.kind!r}")
    if layer.activation not in ACTIVATIONS:
        raise ShapeMismatchError(f"{where}.activation: unknown activation {layer.activation!r}")
    for name in ("weights", "bias"):
        arr = getattr(layer, name)
        if arr is not None and not np.all(np.isfinite(arr)):
            raise NonFiniteWeightsError(f"{where}.{name}: non-finite entries")
    if layer.kind == "flatten":
        return (int(np.prod(shape)),)
    if layer.kind == "dense":
        w, b = layer.weights, layer.bias
        if w is None or w.ndim != 2:
            raise ShapeMismatchError(f"{where}.weights: dense weights must be 2-D")
        if len(shape) != 1 or w.shape[1] != shape[0]:
            raise ShapeMismatchError(f"{where}.weights: expects input ({w.shape[1]},), got {shape}")
        if b is None or b.shape != (w.shape[0],):
            raise ShapeMismatchError(f"{where}.bias: expected shape ({w.shape[0]},)")
        return (w.shape[0],)
    w, b = layer.weights, layer.bias
    if layer.stride != 1:
        raise ShapeMismatchError(f"{where}.stride: only stride 1 is supported, got {layer.stride}")
    if layer.padding != "same":
        raise ShapeMismatchError(f"{where}.padding: only 'same' padding is supported")
    if w is None or w.ndim != 4 or w.shape[2] % 2 == 0 or w.shape[3] % 2 == 0:
        raise ShapeMismatchError(f"{where}.weights: conv2d weights must be (c_out, c_in, kh, kw) with odd kh, kw")
    if len(shape) != 3 or shape[0] != w.shape[1]:
        raise ShapeMismatchError(f"{where}.weights: expects input ({w.shape[1]}, h, w), got {shape}")
    if b is None or b.shape != (w.shape[0],):
        raise ShapeMismatchError(f"{where}.bias: expected shape ({w.shape[0]},)")
    return (w.shape[0], shape[1], shape[2])


# ----------------------------------------------------------------------------
# Layer math


def _conv_same(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Cross-correlate ``(c_in, h, w)`` with ``(c_out, c_in, kh, kw)``, zero same padding."""
    c_out, c_in, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    h, wd = x.shape[1], x.shape[2]
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((c_out, h, wd))
    for di in range(kh):
        for dj in range(kw):
            patch = xp[:, di:di + h, dj:dj + wd]
            out += np.einsum("oc,chw->ohw", w[:, :, di, dj], patch)
    return out


def _conv_same_input_grad(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_conv_same` with respect to its input."""
    c_out, c_in, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    h, wd = g.shape[1], g.shape[2]
    gx = np.zeros((c_in, h + 2 * ph, wd + 2 * pw))
    for di in range(kh):
        for dj in range(kw):
            gx[:, di:di + h, dj:dj + wd] += np.einsum("oc,ohw->chw", w[:, :, di, dj], g)
    return gx[:, ph:ph + h, pw:pw + wd]


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "identity":
        return z
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    flat = z.ravel()
    e = np.exp(flat - flat.max())
    return (e / e.sum()).reshape(z.shape)


def _activation_vjp(z: np.ndarray, a: np.ndarray, g: np.ndarray, act: str) -> np.ndarray:
    if act == "identity":
        return g
    if act == "relu":
        return g * (z > 0)
    if act == "tanh":
        return g * (1.0 - a * a)
    af, gf = a.ravel(), g.ravel()
    return (af * (gf - np.dot(af, gf))).reshape(z.shape)


def _as_input(m: TinyModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size != m.input_dim:
        raise ShapeMismatchError(f"input has {x.size} values, model expects {m.input_dim} {m.input_shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeMismatchError("input contains non-finite values")
    return x.reshape(m.input_shape)


def _forward_trace(m: TinyModel, x: np.ndarray):
    trace = []
    a = x
    for layer in m.layers:
        if layer.kind == "flatten":
            z = a.reshape(-1)
        elif layer.kind == "dense":
            z = layer.weights @ a + layer.bias
        else:
            z = _conv_same(a, layer.weights) + layer.bias[:, None, None]
        out = _activate(z, layer.activation)
        trace.append((a, z, out))
        a = out
    return a, trace


def forward(m: TinyModel, x) -> np.ndarray:
    """Model output as a flat float64 vector."""
    out, _ = _forward_trace(m, _as_input(m, x))
    return np.asarray(out, dtype=np.float64).reshape(-1)


def forward_batch(m: TinyModel, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    return np.stack([forward(m, row) for row in xs.reshape(len(xs), -1)])


def input_gradient(m: TinyModel, x, class_index: int) -> np.ndarray:
    """Analytic gradient of output ``class_index`` w.r.t. the (flattened) input."""
    if not 0 <= class_index < m.output_dim:
        raise ShapeMismatchError(f"class_index {class_index} outside [0, {m.output_dim})")
    x = _as_input(m, x)
    out, trace = _forward_trace(m, x)
    g = np.zeros(out.size)
    g[class_index] = 1.0
    g = g.reshape(out.shape)
    for layer, (a_in, z, a_out) in zip(reversed(m.layers), reversed(trace)):
        g = _activation_vjp(z, a_out, g, layer.activation)
        if layer.kind == "flatten":
            g = g.reshape(a_in.shape)
        elif layer.kind == "dense":
            g = layer.weights.T @ g
        else:
            g = _conv_same_input_grad(g, layer.weights)
    return g.reshape(-1)


def pre_activations(m: TinyModel, x) -> list:
    """Pre-activation arrays of every layer (used to stay clear of relu kinks)."""
    _, trace = _forward_trace(m, _as_input(m, x))
    return [z for _, z, _ in trace]


# ----------------------------------------------------------------------------
# Serialization


def _layer_to_dict(layer: Layer) -> dict:
    d = {"kind": layer.kind}
    if layer.kind != "flatten":
        d["weights"] = layer.weights.tolist()
        d["bias"] = layer.bias.tolist()
        d["activation"] = layer.activation
    elif layer.activation != "identity":
        d["activation"] = layer.activation
    if layer.kind == "conv2d":
        d["stride"] = layer.stride
        d["padding"] = layer.padding
    return d


def model_to_dict(m: TinyModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "input_shape": list(m.input_shape),
        "layers": [_layer_to_dict(layer) for layer in m.layers],
    }


def canonical_json(m: TinyModel) -> str:
    return json.dumps(model_to_dict(m), sort_keys=True, separators=(",", ":"))


def model_digest(m: TinyModel) -> str:
    """SHA-256 of the canonical serialization."""
    return hashlib.sha256(canonical_json(m).encode()).hexdigest()


def _array(value, where: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ParseError(f"{where}: expected a {ndim}-D array, got {arr.ndim}-D")
    return arr


def model_from_dict(d: dict, source: str = "<model>") -> TinyModel:
    if not isinstance(d, dict):
        raise ParseError(f"{source}: top level must be an object")
    if "schema_version" not in d:
        raise SchemaVersionError(f"{source}: missing schema_version")
    if d["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionError(f"{source}: unsupported schema_version {d['schema_version']!r}")
    shape = d.get("input_shape")
    if not isinstance(shape, list) or not shape or not all(isinstance(s, int) and s > 0 for s in shape):
        raise ParseError(f"{source}: input_shape must be a non-empty list of positive integers")
    raw_layers = d.get("layers")
    if not isinstance(raw_layers, list):
        raise ParseError(f"{source}: layers must be a list")
    layers = []
    for i, raw in enumerate(raw_layers):
        where = f"{source}: layers[{i}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: must be an object")
        kind = raw.get("kind")
        if kind not in KINDS:
            raise ParseError(f"{where}.kind: expected one of {KINDS}, got {kind!r}")
        act = raw.get("activation", "identity")
        if act not in ACTIVATIONS:
            raise ParseError(f"{where}.activation: expected one of {ACTIVATIONS}, got {act!r}")
        if kind == "flatten":
            layers.append(Layer("flatten", activation=act))
            continue
        for key in ("weights", "bias"):
            if key not in raw:
                raise ParseError(f"{where}.{key}: missing")
        w = _array(raw["weights"], f"{where}.weights", 2 if kind == "dense" else 4)
        b = _array(raw["bias"], f"{where}.bias", 1)
        stride = raw.get("stride", 1)
        padding = raw.get("padding", "same")
        if kind == "conv2d":
            if not isinstance(stride, int) or stride < 1:
                raise ParseError(f"{where}.stride: must be a positive integer, got {stride!r}")
            if stride != 1:
                raise ParseError(f"{where}.stride: only stride 1 is supported, got {stride}")
            if padding != "same":
                raise ParseError(f"{where}.padding: only 'same' is supported, got {padding!r}")
        layers.append(Layer(kind, w, b, act, stride, padding))
    try:
        return TinyModel(tuple(layers), tuple(shape))
    except NonFiniteWeightsError:
        raise
    except ShapeMismatchError as exc:
        raise ParseError(f"{source}: {exc}") from None


def load_model(path) -> TinyModel:
    """Read a model file.

    Raises:
        ParseError: malformed JSON (with line/column) or a bad field.
        SchemaVersionError: missing or unsupported ``schema_version``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return model_from_dict(d, str(path))


def save_model(m: TinyModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), indent=1) + "\n")


# ----------------------------------------------------------------------------
# Builders


def dense(weights, bias, activation: str = "identity") -> Layer:
    return Layer("dense", np.asarray(weights, dtype=np.float64),
                 np.asarray(bias, dtype=np.float64), activation)


def conv2d(weights, bias, activation: str = "identity") -> Layer:
    return Layer("conv2d", np.asarray(weights, dtype=np.float64),
                 np.asarray(bias, dtype=np.float64), activation)


def flatten() -> Layer:
    return Layer("flatten")


def random_mlp(sizes, rng: np.random.Generator, hidden: str = "relu",
               final: str = "identity", scale: float = 1.0) -> TinyModel:
    """Dense network ``sizes[0] -> ... -> sizes[-1]`` with Gaussian weights."""
    layers = []
    for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
        act = final if i == len(sizes) - 2 else hidden
        w = rng.normal(0.0, scale / np.sqrt(a), (b, a))
        layers.append(dense(w, rng.normal(0.0, 0.1, b), act))
    return TinyModel(tuple(layers), (sizes[0],))
