"""Forward computation of all network layers.

Quaternion layers operate on :class:`~quatnet.quaternion.QTensor` values with
shapes ``(batch, features)`` or ``(batch, channels, length)``; the real
counterparts used by the comparison models take plain float64 ndarrays of the
same logical shapes.  Layers are forward-only; the gradient engines live in
:mod:`quatnet.backprop` and :mod:`quatnet.autodiff` and read the records each
layer appends to the tape during the forward pass.
"""

from __future__ import annotations

import numpy as np

from .quaternion import QTensor, qmatvec

WEIGHT_LEFT = "weight-left"
INPUT_LEFT = "input-left"

_ACTIVATIONS = {
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
    "relu": (lambda x: np.maximum(x, 0.0),
             lambda x: (x > 0.0).astype(np.float64)),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    "tanhshrink": (lambda x: x - np.tanh(x), lambda x: np.tanh(x) ** 2),
}

ACTIVATION_KINDS = tuple(_ACTIVATIONS)


def activation_fn(kind: str):
    """(sigma, sigma') pair applied componentwise; sigma'(0) = 0 for relu."""
    try:
        return _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}, expected one of {ACTIVATION_KINDS}")


def _window_index(length: int, kernel: int, stride: int) -> np.ndarray:
    if kernel < 1 or stride < 1:
        raise ValueError("kernel and stride must be >= 1")
    if length < kernel:
        raise ValueError(f"input length {length} shorter than kernel {kernel}")
    n_out = (length - kernel) // stride + 1
    return stride * np.arange(n_out)[:, None] + np.arange(kernel)[None, :]


def conv_output_length(length: int, kernel: int, stride: int) -> int:
    return (length - kernel) // stride + 1


def uniform_init(rng: np.random.Generator, shape, fan_in_real: int) -> np.ndarray:
    # matches the variance scale of a real layer with fan_in_real inputs
    bound = 1.0 / np.sqrt(fan_in_real)
    return rng.uniform(-bound, bound, size=shape)


class QLinear:
    """Fully connected quaternion layer, z_i = sum_j w_ij ⊗ a_j + b_i."""

    def __init__(self, w: np.ndarray, b: np.ndarray):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.ndim != 3 or w.shape[-1] != 4:
            raise ValueError(f"weights must be (m, n, 4), got {w.shape}")
        if b.shape != (w.shape[0], 4):
            raise ValueError(f"bias must be ({w.shape[0]}, 4), got {b.shape}")
        self.w = w
        self.b = b

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "QLinear":
        w = uniform_init(rng, (n_out, n_in, 4), 4 * n_in)
        return cls(w, np.zeros((n_out, 4)))

    @property
    def n_in(self) -> int:
        return self.w.shape[1]

    @property
    def n_out(self) -> int:
        return self.w.shape[0]

    def forward(self, x: QTensor, training=False, rng=None, tape=None) -> QTensor:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected {self.n_in} input features, got {x.shape[-1]}")
        z = qmatvec(self.w, x.data) + self.b
        if tape is not None:
            tape.append((self, {"x": x.data}))
        return QTensor(z)


class QConv1d:
    """1D quaternion convolution, no padding, dilation 1.

    The default product order multiplies the weight on the left of each input
    element so the hand-derived affine-layer gradients carry over to the
    convolution unchanged; ``input-left`` swaps the operands and is served by
    the component-level gradient engine only.
    """

    def __init__(self, w: np.ndarray, b: np.ndarray, stride: int = 1,
                 product_order: str = WEIGHT_LEFT):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.ndim != 4 or w.shape[-1] != 4:
            raise ValueError(f"weights must be (c_out, c_in, k, 4), got {w.shape}")
        if b.shape != (w.shape[0], 4):
            raise ValueError(f"bias must be ({w.shape[0]}, 4), got {b.shape}")
        if stride < 1:
            raise ValueError("stride must be >= 1")
        if product_order not in (WEIGHT_LEFT, INPUT_LEFT):
            raise ValueError(f"unknown product order {product_order!r}")
        self.w = w
        self.b = b
        self.stride = stride
        self.product_order = product_order

    @classmethod
    def init(cls, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
             stride: int = 1, product_order: str = WEIGHT_LEFT) -> "QConv1d":
        w = uniform_init(rng, (c_out, c_in, kernel, 4), 4 * c_in * kernel)
        return cls(w, np.zeros((c_out, 4)), stride, product_order)

    @property
    def c_in(self) -> int:
        return self.w.shape[1]

    @property
    def c_out(self) -> int:
        return self.w.shape[0]

    @property
    def kernel(self) -> int:
        return self.w.shape[2]

    def forward(self, x: QTensor, training=False, rng=None, tape=None) -> QTensor:
        batch, c_in, length = x.shape
        if c_in != self.c_in:
            raise ValueError(f"expected {self.c_in} input channels, got {c_in}")
        idx = _window_index(length, self.kernel, self.stride)
        n_out = idx.shape[0]
        # (B, C_in, L_out, K, 4) -> (B, L_out, C_in * K, 4)
        cols = x.data[:, :, idx, :].transpose(0, 2, 1, 3, 4).reshape(
            batch, n_out, self.c_in * self.kernel, 4)
        w_mat = self.w.reshape(self.c_out, self.c_in * self.kernel, 4)
        z = qmatvec(w_mat, cols, input_left=self.product_order == INPUT_LEFT)
        z = z + self.b
        z = z.transpose(0, 2, 1, 3)
        if tape is not None:
            tape.append((self, {"cols": cols, "in_shape": x.shape}))
        return QTensor(z)


class Activation:
    """Elementwise activation applied to each of the four components."""

    def __init__(self, kind: str):
        self.kind = kind
        self.sigma, self.sigma_prime = activation_fn(kind)

    def forward(self, x, training=False, rng=None, tape=None):
        is_qtensor = isinstance(x, QTensor)
        z = x.data if is_qtensor else x
        y = self.sigma(z)
        if tape is not None:
            tape.append((self, {"z": z}))
        return QTensor(y) if is_qtensor else y


def component_max_pool(x: QTensor, kernel: int, stride: int):
    """Per-component maxima over each window.

    The output quaternion can mix components picked from different window
    positions; the returned indices have one entry per component and are used
    to route gradients back.
    """
    idx = _window_index(x.shape[-1], kernel, stride)
    windows = x.data[:, :, idx, :]                      # (B, C, L_out, K, 4)
    argmax = windows.argmax(axis=3)                     # first max wins ties
    pooled = np.take_along_axis(windows, argmax[:, :, :, None, :], axis=3)
    return QTensor(pooled[:, :, :, 0, :]), argmax


def magnitude_max_pool(x: QTensor, kernel: int, stride: int):
    """Whole-quaternion selection of the window element with the largest norm.

    Signs survive pooling (a -2 beats a 1), unlike componentwise pooling.
    Ties resolve to the lowest index.
    """
    idx = _window_index(x.shape[-1], kernel, stride)
    windows = x.data[:, :, idx, :]
    norms = np.sum(windows * windows, axis=-1)          # squared norm, same argmax
    argmax = norms.argmax(axis=3)                       # (B, C, L_out)
    pooled = np.take_along_axis(windows, argmax[:, :, :, None, None], axis=3)
    return QTensor(pooled[:, :, :, 0, :]), argmax


class QMaxPool1d:
    """Quaternion max pooling in either component or magnitude mode."""

    def __init__(self, mode: str, kernel: int, stride: int | None = None):
        if mode not in ("component", "magnitude"):
            raise ValueError(f"unknown pooling mode {mode!r}")
        self.mode = mode
        self.kernel = kernel
        self.stride = stride if stride is not None else kernel

    def forward(self, x: QTensor, training=False, rng=None, tape=None) -> QTensor:
        pool = component_max_pool if self.mode == "component" else magnitude_max_pool
        y, indices = pool(x, self.kernel, self.stride)
        if tape is not None:
            tape.append((self, {"indices": indices, "in_length": x.shape[-1]}))
        return y


def qdropout(x: QTensor, p: float, training: bool, rng: np.random.Generator | None):
    """Zero whole quaternions with probability p, scaling survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, np.ones(x.shape)
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p).astype(np.float64)
    mask = keep / (1.0 - p)
    return QTensor(x.data * mask[..., None]), mask


class QDropout:
    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p

    def forward(self, x: QTensor, training=False, rng=None, tape=None) -> QTensor:
        y, mask = qdropout(x, self.p, training, rng)
        if tape is not None:
            tape.append((self, {"mask": mask}))
        return y


class QFlatten:
    """(B, C, L) -> (B, C*L), channel-major then position."""

    def forward(self, x: QTensor, training=False, rng=None, tape=None) -> QTensor:
        y = QTensor(x.data.reshape(x.shape[0], -1, 4))
        if tape is not None:
            tape.append((self, {"in_shape": x.shape}))
        return y


class RealHead:
    """Trainable map from quaternion features to real class logits.

    Each quaternion unpacks to four reals in (q0, q1, q2, q3) order before a
    standard affine layer; there is no natural quaternion probability
    distribution, so classification ends in real space.
    """

    def __init__(self, w: np.ndarray, b: np.ndarray):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] % 4 != 0:
            raise ValueError(f"head weights must be (classes, 4f), got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"head bias must be ({w.shape[0]},), got {b.shape}")
        self.w = w
        self.b = b

    @classmethod
    def init(cls, n_features: int, classes: int, rng: np.random.Generator) -> "RealHead":
        w = uniform_init(rng, (classes, 4 * n_features), 4 * n_features)
        return cls(w, np.zeros(classes))

    def forward(self, x: QTensor, training=False, rng=None, tape=None) -> np.ndarray:
        batch, feats = x.shape
        if 4 * feats != self.w.shape[1]:
            raise ValueError(f"head expects {self.w.shape[1] // 4} features, got {feats}")
        xr = x.data.reshape(batch, 4 * feats)
        logits = xr @ self.w.T + self.b
        if tape is not None:
            tape.append((self, {"xr": xr}))
        return logits


# ---------------------------------------------------------------------------
# Real-valued counterparts for the comparison models.

class RealLinear:
    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "RealLinear":
        return cls(uniform_init(rng, (n_out, n_in), n_in), np.zeros(n_out))

    def forward(self, x, training=False, rng=None, tape=None):
        y = x @ self.w.T + self.b
        if tape is not None:
            tape.append((self, {"x": x}))
        return y


class RealConv1d:
    def __init__(self, w: np.ndarray, b: np.ndarray, stride: int = 1):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.stride = stride

    @classmethod
    def init(cls, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
             stride: int = 1) -> "RealConv1d":
        w = uniform_init(rng, (c_out, c_in, kernel), c_in * kernel)
        return cls(w, np.zeros(c_out), stride)

    @property
    def kernel(self) -> int:
        return self.w.shape[2]

    def forward(self, x, training=False, rng=None, tape=None):
        batch, c_in, length = x.shape
        idx = _window_index(length, self.kernel, self.stride)
        cols = x[:, :, idx].transpose(0, 2, 1, 3).reshape(batch, idx.shape[0], -1)
        w_mat = self.w.reshape(self.w.shape[0], -1)
        y = (cols @ w_mat.T + self.b).transpose(0, 2, 1)
        if tape is not None:
            tape.append((self, {"cols": cols, "in_shape": x.shape}))
        return y


class RealMaxPool1d:
    def __init__(self, kernel: int, stride: int | None = None):
        self.kernel = kernel
        self.stride = stride if stride is not None else kernel

    def forward(self, x, training=False, rng=None, tape=None):
        idx = _window_index(x.shape[-1], self.kernel, self.stride)
        windows = x[:, :, idx]
        argmax = windows.argmax(axis=3)
        y = np.take_along_axis(windows, argmax[:, :, :, None], axis=3)[:, :, :, 0]
        if tape is not None:
            tape.append((self, {"indices": argmax, "in_length": x.shape[-1]}))
        return y


class RealDropout:
    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p

    def forward(self, x, training=False, rng=None, tape=None):
        if not training or self.p == 0.0:
            mask = np.ones(x.shape)
        else:
            if rng is None:
                raise ValueError("dropout in training mode needs an rng")
            mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        if tape is not None:
            tape.append((self, {"mask": mask}))
        return x * mask


class RealFlatten:
    def forward(self, x, training=False, rng=None, tape=None):
        if tape is not None:
            tape.append((self, {"in_shape": x.shape}))
        return x.reshape(x.shape[0], -1)


PARAM_LAYERS = (QLinear, QConv1d, RealHead, RealLinear, RealConv1d)


class Model:
    """Plain layer sequence; forward threads the tape through every layer."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, training: bool = False, rng=None, tape=None):
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng, tape=tape)
        return x

    def param_layers(self):
        return [l for l in self.layers if isinstance(l, PARAM_LAYERS)]

    def has_input_left_conv(self) -> bool:
        return any(isinstance(l, QConv1d) and l.product_order == INPUT_LEFT
                   for l in self.layers)

    def layer_name(self, index: int) -> str:
        return f"{index}:{type(self.layers[index]).__name__}"
