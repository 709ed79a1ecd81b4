"""A deterministic feedforward softmax classifier with explicit derivatives.

Parameters live in one flat vector. Layers are laid out in order, each as a
row-major ``(fan_in, fan_out)`` weight block followed by its bias block, so
a layer computes ``a @ W + b``. Hidden layers use ReLU (subgradient 0 at 0)
or tanh; the last layer is affine and produces the logits.
"""

import struct
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FormatError, ResourceLimitError
from .logistic import ce_gradient, ce_loss
from .validation import as_float_array, check_labels

ACTIVATIONS = ("relu", "tanh")
CHECKPOINT_MAGIC = b"HANATOMY1"

Slot = namedtuple("Slot", ["layer", "kind", "shape", "offset"])


def _layout(layer_sizes):
    slots = []
    offset = 0
    for l, (fi, fo) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        slots.append(Slot(l, "W", (fi, fo), offset))
        offset += fi * fo
        slots.append(Slot(l, "b", (fo,), offset))
        offset += fo
    return slots, offset


@dataclass
class MlpModel:
    """Feedforward classifier ``f(x; theta)`` with logits of width ``layer_sizes[-1]``.

    A model with only ``(d_in, C)`` is a plain multinomial logistic
    regression; :func:`init_mlp` insists on at least one hidden layer but the
    class itself does not.
    """

    layer_sizes: tuple
    activation: str
    params: np.ndarray

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ConfigError(f"invalid layer sizes {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.n_params,):
            raise ConfigError(f"expected {self.n_params} parameters, got shape {self.params.shape}")
        if not np.all(np.isfinite(self.params)):
            raise DataError("model parameters must be finite")

    @property
    def layout(self):
        return _layout(self.layer_sizes)[0]

    @property
    def n_params(self):
        return _layout(self.layer_sizes)[1]

    @property
    def n_classes(self):
        return self.layer_sizes[-1]

    @property
    def n_features(self):
        return self.layer_sizes[0]

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    def weights(self, layer):
        fi, fo = self.layer_sizes[layer], self.layer_sizes[layer + 1]
        off = self.layout[2 * layer].offset
        return self.params[off:off + fi * fo].reshape(fi, fo)

    def bias(self, layer):
        slot = self.layout[2 * layer + 1]
        return self.params[slot.offset:slot.offset + slot.shape[0]]

    def with_params(self, params):
        return MlpModel(self.layer_sizes, self.activation, np.array(params, dtype=np.float64))

    def copy(self):
        return self.with_params(self.params.copy())


def init_mlp(layer_sizes, activation="relu", seed=0):
    """He-normal initialisation: weights ~ N(0, 2 / fan_in), biases zero.

    Weight blocks are drawn in layout order from
    ``numpy.random.default_rng(seed)``.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 3:
        raise ConfigError("an MLP needs an input width, at least one hidden layer and an output width")
    if min(sizes) < 1:
        raise ConfigError(f"layer widths must be >= 1, got {sizes}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
    rng = np.random.default_rng(seed)
    slots, n_params = _layout(sizes)
    theta = np.zeros(n_params)
    for slot in slots:
        if slot.kind == "W":
            fi, fo = slot.shape
            theta[slot.offset:slot.offset + fi * fo] = (
                rng.standard_normal((fi, fo)) * np.sqrt(2.0 / fi)).ravel()
    return MlpModel(sizes, activation, theta)


def _act(name, h):
    return np.maximum(h, 0.0) if name == "relu" else np.tanh(h)


def _act_deriv(name, h):
    if name == "relu":
        return (h > 0.0).astype(np.float64)
    t = np.tanh(h)
    return 1.0 - t * t


def _inputs(model, x):
    X = as_float_array(x, "x")
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DataError(f"expected inputs of width {model.n_features}, got shape {np.shape(x)}")
    return X, single


def _forward(model, X):
    a = X
    inputs, pre = [], []
    for l in range(model.n_layers):
        inputs.append(a)
        h = a @ model.weights(l) + model.bias(l)
        pre.append(h)
        a = _act(model.activation, h) if l < model.n_layers - 1 else h
    return a, inputs, pre


def _pullback(model, inputs, pre, signal):
    """Vector-Jacobian products for a stack of logit-space signals.

    ``signal`` has shape ``(n, m, C)``; the result ``(n, m, P)`` holds
    ``signal[i, j] @ d f(x_i) / d theta``.
    """
    n, m = signal.shape[:2]
    out = np.empty((n, m, model.n_params))
    S = signal
    for l in reversed(range(model.n_layers)):
        w_slot, b_slot = model.layout[2 * l], model.layout[2 * l + 1]
        fi, fo = w_slot.shape
        out[:, :, w_slot.offset:w_slot.offset + fi * fo] = np.einsum(
            "nmk,nj->nmjk", S, inputs[l]).reshape(n, m, fi * fo)
        out[:, :, b_slot.offset:b_slot.offset + fo] = S
        if l > 0:
            S = (S @ model.weights(l).T) * _act_deriv(model.activation, pre[l - 1])[:, None, :]
    return out


def forward(model, x):
    """Logits for one input vector or an ``(n, d_in)`` batch."""
    X, single = _inputs(model, x)
    z = _forward(model, X)[0]
    return z[0] if single else z


def logit_jacobian(model, x):
    """Logit Jacobian ``d f / d theta``: ``(C, P)`` per input, ``(n, C, P)`` for a batch.

    One reverse pass per logit coordinate, sharing a single forward pass.
    """
    X, single = _inputs(model, x)
    _, inputs, pre = _forward(model, X)
    eye = np.broadcast_to(np.eye(model.n_classes), (X.shape[0], model.n_classes, model.n_classes))
    J = _pullback(model, inputs, pre, eye)
    return J[0] if single else J


def loss_grad(model, x, y):
    """Per-example gradient of the cross-entropy loss in theta."""
    X, single = _inputs(model, x)
    y = check_labels(np.atleast_1d(y), model.n_classes)
    z, inputs, pre = _forward(model, X)
    g = ce_gradient(z, y)
    grads = _pullback(model, inputs, pre, g[:, None, :])[:, 0, :]
    return grads[0] if single else grads


def loss_and_grad(model, X, y):
    """Mean cross-entropy over a batch and its gradient in theta."""
    X, _ = _inputs(model, X)
    y = check_labels(np.atleast_1d(y), model.n_classes)
    z, inputs, pre = _forward(model, X)
    losses = ce_loss(z, y)
    g = ce_gradient(z, y) / X.shape[0]
    grad = _pullback(model, inputs, pre, g[:, None, :])[:, 0, :].sum(axis=0)
    return float(np.mean(losses)), grad


def dataset_loss(model, X, y):
    X, _ = _inputs(model, X)
    return float(np.mean(ce_loss(forward(model, X), check_labels(np.atleast_1d(y), model.n_classes))))


def accuracy(model, X, y):
    return float(np.mean(np.argmax(forward(model, X), axis=1) == np.asarray(y)))


def full_hessian_fd(model, X, y, step=1e-5, max_params=3000):
    """Dense Hessian of the mean training loss by central differences of the gradient.

    Test oracle only: costs ``2 P`` full-batch gradient evaluations. The
    result is returned unsymmetrized so callers can inspect its asymmetry.
    """
    P = model.n_params
    if P > max_params:
        raise ResourceLimitError(
            f"finite-difference Hessian refused for P={P} (limit {max_params})",
            required=P, limit=max_params)
    theta = model.params
    H = np.empty((P, P))
    probe = model.copy()
    for j in range(P):
        probe.params[:] = theta
        probe.params[j] = theta[j] + step
        g_plus = loss_and_grad(probe, X, y)[1]
        probe.params[j] = theta[j] - step
        g_minus = loss_and_grad(probe, X, y)[1]
        H[:, j] = (g_plus - g_minus) / (2.0 * step)
    return H


def save_checkpoint(model, path):
    """Write ``HANATOMY1`` checkpoint.

    Layout (little-endian): magic, uint32 number of layer sizes, the sizes as
    uint32, uint32 activation id (0 relu, 1 tanh), uint64 P, then P float64
    parameters in layout order.
    """
    sizes = model.layer_sizes
    header = CHECKPOINT_MAGIC + struct.pack(
        f"<I{len(sizes)}IIQ", len(sizes), *sizes, ACTIVATIONS.index(model.activation), model.n_params)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.params.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise FormatError(f"{path}: missing {CHECKPOINT_MAGIC.decode()} magic")
    pos = len(CHECKPOINT_MAGIC)
    try:
        (n_sizes,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        sizes = struct.unpack_from(f"<{n_sizes}I", blob, pos)
        pos += 4 * n_sizes
        act_id, n_params = struct.unpack_from("<IQ", blob, pos)
        pos += 12
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if act_id >= len(ACTIVATIONS):
        raise FormatError(f"{path}: unknown activation id {act_id}")
    if len(blob) - pos != 8 * n_params:
        raise FormatError(f"{path}: expected {n_params} parameters, found {(len(blob) - pos) / 8}")
    params = np.frombuffer(blob, dtype="<f8", offset=pos).astype(np.float64)
    model = MlpModel(sizes, ACTIVATIONS[act_id], params)
    if model.n_params != n_params:
        raise FormatError(f"{path}: parameter count {n_params} does not match layer sizes {sizes}")
    return model
