"""Component-level reverse-mode differentiation and its relation to the GHR engine.

This engine applies the chain rule to the four real components of every
quaternion, exactly as a generic autodiff framework would when a quaternion
layer is emulated with structured 4x4 real blocks.  Each Hamilton product is
one tape node with a 16-term adjoint rule: for z = u ⊗ v with output
cotangent s the operand cotangents are du = s ⊗ v* and dv = u* ⊗ s
(componentwise assembly of the real partials).

Relative to the GHR engine the results differ in a fixed way: every
parameter gradient is 4 times the GHR gradient, and every backward message is
4 times the conjugate of the GHR message.  :func:`verify_ghr_ad_relation`
checks this layer by layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backprop
from .layers import (
    Activation,
    INPUT_LEFT,
    Model,
    QConv1d,
    QDropout,
    QFlatten,
    QLinear,
    QMaxPool1d,
    RealHead,
)
from .quaternion import QTensor, conjugate_arr, qouter, qvecmat

_QUAT_MSG_LAYERS = (QLinear, QConv1d, QMaxPool1d, QDropout, QFlatten)


def ad_loss_grad(y: QTensor, d: QTensor) -> np.ndarray:
    """Component gradient of the quaternion squared-error loss: -2e per output.

    This is the conjugate of the GHR message -1/2 e*, scaled by 4.
    """
    if y.shape != d.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {d.shape}")
    return -2.0 * (d.data - y.data)


def _linear_backward(s, x, w):
    """Adjoints of z = w ⊗ x + b at component level; s, x are (N, ., 4)."""
    dw = qouter(s, conjugate_arr(x))
    db = s.sum(axis=0)
    dx = conjugate_arr(qvecmat(conjugate_arr(s), w))
    return dw, db, dx


def _linear_backward_input_left(s, x, w):
    """Adjoints of z = x ⊗ w + b: dw = x* ⊗ s, dx = s ⊗ w*."""
    dw = qouter(conjugate_arr(x), s).transpose(1, 0, 2)
    db = s.sum(axis=0)
    dx = qvecmat(s, conjugate_arr(w))
    return dw, db, dx


def backward(model: Model, tape, *, logits_grad=None, output_message=None,
             collect_messages: bool = False):
    """Component-level backward pass; mirrors :func:`quatnet.backprop.backward`.

    ``output_message`` is the component cotangent dL/dy at a quaternion model
    output.  Gradients come back in the same component layout as the
    parameters, so the same SGD step applies.  Returns
    ``(grads, messages, input_cotangent)`` like the GHR engine.
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
            grads[i] = {"w": msg.T @ xr, "b": msg.sum(axis=0)}
            msg = (msg @ layer.w).reshape(xr.shape[0], -1, 4)
        elif isinstance(layer, QLinear):
            dw, db, msg = _linear_backward(msg, rec["x"], layer.w)
            grads[i] = {"w": dw, "b": db}
        elif isinstance(layer, QConv1d):
            cols = rec["cols"]
            s2 = msg.transpose(0, 2, 1, 3).reshape(-1, layer.c_out, 4)
            cols2 = cols.reshape(-1, cols.shape[-2], 4)
            w_mat = layer.w.reshape(layer.c_out, -1, 4)
            rule = (_linear_backward_input_left
                    if layer.product_order == INPUT_LEFT else _linear_backward)
            dw, db, cols_grad = rule(s2, cols2, w_mat)
            grads[i] = {"w": dw.reshape(layer.w.shape), "b": db}
            msg = backprop.conv_scatter(cols_grad, layer, rec["in_shape"], quat=True)
        else:
            msg, grads[i] = backprop.route_backward(layer, rec, msg)
    return grads, messages, msg


# -- structured real emulation ------------------------------------------------

def real_block(q: np.ndarray) -> np.ndarray:
    """4x4 real left-multiplication block of one quaternion."""
    q0, q1, q2, q3 = q
    return np.array([
        [q0, -q1, -q2, -q3],
        [q1, q0, -q3, q2],
        [q2, q3, q0, -q1],
        [q3, -q2, q1, q0],
    ])


def emulation_matrix(w: np.ndarray) -> np.ndarray:
    """Expand quaternion weights (m, n, 4) to the (4m, 4n) structured real matrix."""
    m, n, _ = w.shape
    blocks = np.empty((m, 4, n, 4))
    w0, w1, w2, w3 = w[..., 0], w[..., 1], w[..., 2], w[..., 3]
    blocks[:, 0, :, 0], blocks[:, 0, :, 1], blocks[:, 0, :, 2], blocks[:, 0, :, 3] = w0, -w1, -w2, -w3
    blocks[:, 1, :, 0], blocks[:, 1, :, 1], blocks[:, 1, :, 2], blocks[:, 1, :, 3] = w1, w0, -w3, w2
    blocks[:, 2, :, 0], blocks[:, 2, :, 1], blocks[:, 2, :, 2], blocks[:, 2, :, 3] = w2, w3, w0, -w1
    blocks[:, 3, :, 0], blocks[:, 3, :, 1], blocks[:, 3, :, 2], blocks[:, 3, :, 3] = w3, -w2, w1, w0
    return blocks.reshape(4 * m, 4 * n)


def emulate_linear_forward(layer: QLinear, x: QTensor) -> QTensor:
    """Forward the affine layer through its real 4x4-block emulation."""
    batch = x.shape[0]
    wr = emulation_matrix(layer.w)
    xr = x.data.reshape(batch, -1)
    zr = xr @ wr.T + layer.b.reshape(-1)
    return QTensor(zr.reshape(batch, -1, 4))


# -- GHR vs component-level relation ------------------------------------------

@dataclass
class VerificationEntry:
    layer: str
    tensor: str
    max_rel_dev: float
    ok: bool


@dataclass
class VerificationReport:
    tol: float
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.ok for e in self.entries)

    @property
    def max_deviation(self) -> float:
        return max((e.max_rel_dev for e in self.entries), default=0.0)

    def failures(self):
        return [e for e in self.entries if not e.ok]

    def render(self) -> str:
        lines = [f"{'layer':<24}{'tensor':<12}{'max-rel-dev':<16}status"]
        for e in self.entries:
            lines.append(f"{e.layer:<24}{e.tensor:<12}{e.max_rel_dev:<16.3e}"
                         f"{'pass' if e.ok else 'FAIL'}")
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"overall: {verdict} (tolerance {self.tol:g})")
        return "\n".join(lines)


def _rel_dev(actual: np.ndarray, expected: np.ndarray) -> float:
    scale = float(np.max(np.abs(expected))) if expected.size else 0.0
    if scale == 0.0:
        return float(np.max(np.abs(actual))) if actual.size else 0.0
    return float(np.max(np.abs(actual - expected))) / scale


def _is_quat_message(layer, msg) -> bool:
    if isinstance(layer, _QUAT_MSG_LAYERS):
        return True
    return isinstance(layer, Activation) and msg.ndim >= 2 and msg.shape[-1] == 4


def relation_report(model: Model, ghr_grads, ghr_msgs, ad_grads, ad_msgs,
                    tol: float = 1e-10) -> VerificationReport:
    """Compare already-computed engine outputs: grads 4x, messages 4x conjugate."""
    report = VerificationReport(tol=tol)
    for i, layer in enumerate(model.layers):
        name = model.layer_name(i)
        if ghr_grads[i] is not None:
            for tensor in ("w", "b"):
                dev = _rel_dev(ad_grads[i][tensor], 4.0 * ghr_grads[i][tensor])
                report.entries.append(
                    VerificationEntry(name, tensor, dev, dev <= tol))
        if ghr_msgs is None or ad_msgs is None:
            continue
        p, s = ghr_msgs[i], ad_msgs[i]
        if _is_quat_message(layer, p):
            expected = 4.0 * conjugate_arr(p)
        else:
            expected = p
        dev = _rel_dev(s, expected)
        report.entries.append(VerificationEntry(name, "message", dev, dev <= tol))
    return report


def verify_ghr_ad_relation(model: Model, x, *, target=None, logits_grad_fn=None,
                           training: bool = False, rng=None,
                           tol: float = 1e-10) -> VerificationReport:
    """Assert the fixed relation between the two gradient engines.

    Layer by layer: component-level parameter gradients must equal 4x the GHR
    gradients, and component-level backward messages must equal 4x the
    conjugate of the GHR messages.  ``target`` seeds the quaternion
    squared-error loss for quaternion-output models; ``logits_grad_fn`` maps
    logits to dL/dlogits for models ending in the real head.
    """
    tape = []
    out = model.forward(x, training=training, rng=rng, tape=tape)
    if isinstance(out, QTensor):
        if target is None:
            raise ValueError("quaternion-output model needs a target")
        ghr_seed = {"output_message": backprop.mse_output_message(out, target)}
        ad_seed = {"output_message": ad_loss_grad(out, target)}
    else:
        if logits_grad_fn is None:
            raise ValueError("real-output model needs logits_grad_fn")
        g = logits_grad_fn(out)
        ghr_seed = {"logits_grad": g}
        ad_seed = {"logits_grad": g}
    ghr_grads, ghr_msgs, _ = backprop.backward(model, tape, collect_messages=True,
                                               **ghr_seed)
    ad_grads, ad_msgs, _ = backward(model, tape, collect_messages=True, **ad_seed)
    return relation_report(model, ghr_grads, ghr_msgs, ad_grads, ad_msgs, tol)
