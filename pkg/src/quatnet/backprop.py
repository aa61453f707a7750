"""Hand-derived GHR-calculus backpropagation.

Gradients with respect to quaternion parameters are the conjugate-variable
derivatives (the steepest-descent directions); the message flowing backward
through the network is p = dL/da, the derivative of the loss with respect to
a layer's activation output.  For the final affine layer with error
e = d - y these specialise to dL/dw* = -1/2 e a* and dL/db* = -1/2 e; a
hidden layer with incoming message q = p ∘ sigma'(z) gets dL/dw* = q* a*,
dL/db* = q* and passes p_j = sum_i q_i w_ij to its predecessor.

Component-level cotangents crossing the real head convert to quaternion
messages as p = 1/4 (s0 - s1 i - s2 j - s3 k); real-parameter gradients keep
the same 1/4 scale so that every parameter satisfies the factor-4 relation
against the component-level engine in :mod:`quatnet.autodiff`.
"""

from __future__ import annotations

import numpy as np

from .layers import (
    Activation,
    INPUT_LEFT,
    Model,
    QConv1d,
    QDropout,
    QFlatten,
    QLinear,
    QMaxPool1d,
    RealConv1d,
    RealDropout,
    RealFlatten,
    RealHead,
    RealLinear,
    RealMaxPool1d,
)
from .quaternion import (
    QTensor,
    Quaternion,
    conjugate,
    conjugate_arr,
    hadamard,
    hamilton,
    qouter,
    qvecmat,
)


def loss_mse_quat(y: QTensor, d: QTensor) -> float:
    """Sum over outputs of e* e with e = d - y; equals the sum of all 4m
    squared component errors."""
    if y.shape != d.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {d.shape}")
    e = d.data - y.data
    return float(np.sum(e * e))


def mse_output_message(y: QTensor, d: QTensor) -> np.ndarray:
    """GHR message at the model output for the quaternion squared-error loss:
    p = dL/dy = -1/2 e*."""
    if y.shape != d.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {d.shape}")
    return -0.5 * conjugate_arr(d.data - y.data)


# -- closed-form per-quaternion gradients ------------------------------------

def grad_final_weights(e: Quaternion, a: Quaternion) -> Quaternion:
    """dL/dw* of an output unit: -1/2 e a*."""
    return hamilton(e, conjugate(a)) * -0.5


def grad_final_bias(e: Quaternion) -> Quaternion:
    """dL/db* of an output unit: -1/2 e."""
    return e * -0.5


def grad_final_activations(e: QTensor, w: QTensor) -> QTensor:
    """dL/da_j = sum_i -1/2 e_i* w_ij for the layer feeding the output."""
    ec = -0.5 * conjugate_arr(e.data)
    return QTensor(qvecmat(ec[None, :, :], w.data)[0])


def grad_activation_input(p: Quaternion, z: Quaternion, kind: str) -> Quaternion:
    """q = p ∘ sigma'(z), sigma' applied per component of z."""
    from .layers import activation_fn

    _, dsigma = activation_fn(kind)
    sp = Quaternion.from_array(dsigma(z.as_array()))
    return hadamard(p, sp)


def grad_hidden_weights(q: Quaternion, a: Quaternion) -> Quaternion:
    """dL/dw* of a hidden unit: q* a*."""
    return hamilton(conjugate(q), conjugate(a))


def grad_hidden_bias(q: Quaternion) -> Quaternion:
    """dL/db* of a hidden unit: q*."""
    return conjugate(q)


def grad_hidden_activations(q: QTensor, w: QTensor) -> QTensor:
    """p_j = sum_i q_i w_ij, the message passed to the previous layer."""
    return QTensor(qvecmat(q.data[None, :, :], w.data)[0])


# -- vectorised forms used by the engine (separable for fault injection) -----

def hidden_weight_grad(q: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Batch-summed q* a* outer product; q (N, m, 4), a (N, n, 4) -> (m, n, 4)."""
    return qouter(conjugate_arr(q), conjugate_arr(a))


def hidden_bias_grad(q: np.ndarray) -> np.ndarray:
    """Batch-summed q*; q (N, m, 4) -> (m, 4)."""
    return conjugate_arr(q).sum(axis=0)


def hidden_activation_grad(q: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-sample sum_i q_i w_ij; q (N, m, 4), w (m, n, 4) -> (N, n, 4)."""
    return qvecmat(q, w)


def component_to_quaternion_message(s: np.ndarray) -> np.ndarray:
    """Convert a component cotangent (..., 4) to the GHR message 1/4 s*."""
    return 0.25 * conjugate_arr(s)


# -- shared routing backward (identical in both gradient engines) ------------

def pool_backward(layer, rec, msg):
    indices = rec["indices"]
    length = rec["in_length"]
    quat = msg.ndim == 4
    shape = msg.shape[:2] + (length, 4) if quat else msg.shape[:2] + (length,)
    out = np.zeros(shape)
    batch, channels, n_out = msg.shape[:3]
    b_idx = np.arange(batch)[:, None, None]
    c_idx = np.arange(channels)[None, :, None]
    base = layer.stride * np.arange(n_out)[None, None, :]
    if getattr(layer, "mode", None) == "component":
        # each component routes to its own argmax position
        b4 = b_idx[..., None]
        c4 = c_idx[..., None]
        pos = base[..., None] + indices
        comp = np.arange(4)[None, None, None, :]
        np.add.at(out, (b4, c4, pos, comp), msg)
    else:
        pos = base + indices
        np.add.at(out, (b_idx, c_idx, pos), msg)
    return out


def conv_scatter(cols_grad, layer, in_shape, quat: bool):
    """Scatter per-window input gradients back onto the input sequence."""
    batch, c_in, length = in_shape
    kernel, stride = layer.kernel, layer.stride
    n_out = cols_grad.shape[0] // batch
    if quat:
        g = cols_grad.reshape(batch, n_out, c_in, kernel, 4).transpose(0, 2, 1, 3, 4)
        out = np.zeros((batch, c_in, length, 4))
    else:
        g = cols_grad.reshape(batch, n_out, c_in, kernel).transpose(0, 2, 1, 3)
        out = np.zeros((batch, c_in, length))
    offsets = stride * np.arange(n_out)
    for k in range(kernel):
        out[:, :, offsets + k] += g[:, :, :, k]
    return out


def route_backward(layer, rec, msg):
    """Backward through the engine-agnostic layers (routing and real algebra).

    Returns (message_to_previous_layer, grads_or_None).  Activation, pooling,
    dropout and flatten act per component, so the same computation serves the
    quaternion-message and component-cotangent engines.
    """
    if isinstance(layer, Activation):
        return msg * layer.sigma_prime(rec["z"]), None
    if isinstance(layer, (QMaxPool1d, RealMaxPool1d)):
        return pool_backward(layer, rec, msg), None
    if isinstance(layer, QDropout):
        return msg * rec["mask"][..., None], None
    if isinstance(layer, RealDropout):
        return msg * rec["mask"], None
    if isinstance(layer, (QFlatten, RealFlatten)):
        shape = rec["in_shape"]
        if isinstance(layer, QFlatten):
            shape = tuple(shape) + (4,)
        return msg.reshape(shape), None
    if isinstance(layer, RealLinear):
        x = rec["x"]
        grads = {"w": msg.T @ x, "b": msg.sum(axis=0)}
        return msg @ layer.w, grads
    if isinstance(layer, RealConv1d):
        cols = rec["cols"]
        n_cols = cols.shape[-1]
        g2 = msg.transpose(0, 2, 1).reshape(-1, msg.shape[1])
        cols2 = cols.reshape(-1, n_cols)
        grads = {"w": (g2.T @ cols2).reshape(layer.w.shape), "b": g2.sum(axis=0)}
        cols_grad = g2 @ layer.w.reshape(layer.w.shape[0], -1)
        return conv_scatter(cols_grad, layer, rec["in_shape"], quat=False), grads
    raise TypeError(f"no backward rule for layer {type(layer).__name__}")


def backward(model: Model, tape, *, logits_grad=None, output_message=None,
             collect_messages: bool = False):
    """Run the GHR engine over a recorded forward pass.

    Exactly one of ``logits_grad`` (dL/dlogits for models ending in the real
    head) and ``output_message`` (the quaternion message p at the model
    output) must be given.  Returns ``(grads, messages, input_message)``:
    ``grads`` aligns with ``model.layers``, ``messages[i]`` is the message at
    layer i's output (None unless ``collect_messages``), and
    ``input_message`` is dL/d(model input) in the same convention.
    """
    if (logits_grad is None) == (output_message is None):
        raise ValueError("provide exactly one of logits_grad / output_message")
    if len(tape) != len(model.layers):
        raise ValueError("tape does not match model (one record per layer expected)")
    msg = logits_grad if logits_grad is not None else output_message
    grads = [None] * len(model.layers)
    messages = [None] * len(model.layers) if collect_messages else None
    for i in range(len(tape) - 1, -1, -1):
        layer, rec = tape[i]
        if layer is not model.layers[i]:
            raise ValueError("tape order does not match model layers")
        if collect_messages:
            messages[i] = msg
        if isinstance(layer, RealHead):
            xr = rec["xr"]
            grads[i] = {"w": 0.25 * (msg.T @ xr), "b": 0.25 * msg.sum(axis=0)}
            s_in = (msg @ layer.w).reshape(xr.shape[0], -1, 4)
            msg = component_to_quaternion_message(s_in)
        elif isinstance(layer, QLinear):
            x = rec["x"]
            grads[i] = {"w": hidden_weight_grad(msg, x),
                        "b": hidden_bias_grad(msg)}
            msg = hidden_activation_grad(msg, layer.w)
        elif isinstance(layer, QConv1d):
            if layer.product_order == INPUT_LEFT:
                raise ValueError(
                    "input-left convolutions are served by the component-level "
                    "engine; use quatnet.autodiff.backward")
            cols = rec["cols"]
            c_out = layer.c_out
            q2 = msg.transpose(0, 2, 1, 3).reshape(-1, c_out, 4)
            cols2 = cols.reshape(-1, cols.shape[-2], 4)
            w_mat = layer.w.reshape(c_out, -1, 4)
            grads[i] = {"w": hidden_weight_grad(q2, cols2).reshape(layer.w.shape),
                        "b": hidden_bias_grad(q2)}
            p_cols = hidden_activation_grad(q2, w_mat)
            msg = conv_scatter(p_cols, layer, rec["in_shape"], quat=True)
        else:
            msg, grads[i] = route_backward(layer, rec, msg)
    return grads, messages, msg


def sgd_step(model: Model, grads, lam: float) -> None:
    """In-place steepest-descent update w <- w - lam dW, b <- b - lam db."""
    if lam <= 0:
        raise ValueError("learning rate must be positive")
    for layer, g in zip(model.layers, grads):
        if g is None:
            continue
        layer.w -= lam * g["w"]
        layer.b -= lam * g["b"]
