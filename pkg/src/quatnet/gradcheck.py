"""Finite-difference validation of both gradient engines on randomised models.

For every parameter component the loss is centrally differenced with step h.
The component-level gradients must match the raw differences; the GHR
gradients must match the conjugate-derivative assembly
1/4 (dL/dw0 + dL/dw1 i + dL/dw2 j + dL/dw3 k).  The message at the model
input is checked the same way against 1/4 (dL/dx0 - dL/dx1 i - ...).

Randomised trials draw small quaternion networks (at most three parameter
layers, widths <= 8, batch <= 4) with identity/tanh/tanhshrink activations,
both pooling modes and optional dropout, trained against the quaternion
squared-error loss.  Inputs are resampled when a pooling decision sits too
close to a tie, since an argmax flip inside the h-neighbourhood invalidates
the difference quotient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff, backprop
from .layers import (
    Activation,
    Model,
    QConv1d,
    QDropout,
    QFlatten,
    QLinear,
    QMaxPool1d,
    conv_output_length,
)
from .quaternion import QTensor, conjugate_arr

POOL_MARGIN = 1e-4
_TRIAL_ACTIVATIONS = ("identity", "tanh", "tanhshrink")


@dataclass
class GradcheckIssue:
    trial: int
    path: str
    deviation: float

    def __str__(self) -> str:
        return f"trial {self.trial}: {self.path}: deviation {self.deviation:.3e}"


@dataclass
class GradcheckReport:
    trials: int
    tol_rel: float
    tol_abs: float
    issues: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.issues

    def render(self) -> str:
        lines = [f"gradient check: {self.trials} trials, "
                 f"tolerances rel={self.tol_rel:g} abs={self.tol_abs:g}"]
        if self.passed:
            lines.append("all finite-difference and engine-relation checks passed")
        else:
            lines.extend(str(issue) for issue in self.issues)
            lines.append(f"FAILED: {len(self.issues)} violation(s)")
        return "\n".join(lines)


def _deviation(actual: np.ndarray, expected: np.ndarray,
               tol_rel: float, tol_abs: float) -> float:
    """Largest violation of |a - e| <= tol_abs + tol_rel |e|; 0 when inside."""
    gap = np.abs(actual - expected) - (tol_abs + tol_rel * np.abs(expected))
    worst = float(gap.max()) if gap.size else 0.0
    return max(worst, 0.0)


def random_trial(rng: np.random.Generator):
    """One random network, input and target for the squared-error loss."""
    batch = int(rng.integers(1, 5))
    activation = str(rng.choice(_TRIAL_ACTIVATIONS))
    pooling = "magnitude" if rng.integers(2) else "component"
    dropout = 0.3 if rng.integers(2) else 0.0
    layers = []
    n_param = 0
    if rng.integers(2):
        c_in = int(rng.integers(1, 4))
        c_out = int(rng.integers(1, 4))
        kernel = int(rng.integers(2, 4))
        stride = int(rng.integers(1, 3))
        length = int(rng.integers(6, 11))
        layers.append(QDropout(dropout))
        layers.append(QConv1d.init(c_in, c_out, kernel, rng, stride=stride))
        layers.append(Activation(activation))
        length_c = conv_output_length(length, kernel, stride)
        pool_k = int(rng.integers(1, min(3, length_c) + 1))
        layers.append(QMaxPool1d(pooling, pool_k, pool_k))
        layers.append(QFlatten())
        features = c_out * conv_output_length(length_c, pool_k, pool_k)
        x_shape = (batch, c_in, length)
        n_param += 1
    else:
        features = int(rng.integers(2, 8))
        x_shape = (batch, features)
    n_linear = int(rng.integers(1, 4 - n_param))
    for _ in range(n_linear):
        width = int(rng.integers(1, 7))
        layers.append(QDropout(dropout))
        layers.append(QLinear.init(features, width, rng))
        layers.append(Activation(activation))
        features = width
    model = Model(layers)
    x = QTensor(rng.uniform(-1.0, 1.0, size=x_shape + (4,)))
    out_shape = _forward_shape(model, x)
    d = QTensor(rng.uniform(-1.0, 1.0, size=out_shape + (4,)))
    return model, x, d


def _forward_shape(model: Model, x: QTensor):
    return model.forward(x, training=False).shape


def _pool_margins_ok(model: Model, x: QTensor, mask_seed: int) -> bool:
    """Reject configurations whose pooling argmax sits within POOL_MARGIN of a tie."""
    rng = np.random.default_rng(mask_seed)
    value = x
    for layer in model.layers:
        if isinstance(layer, QMaxPool1d) and layer.kernel > 1:
            idx = (layer.stride * np.arange(
                (value.shape[-1] - layer.kernel) // layer.stride + 1)[:, None]
                + np.arange(layer.kernel)[None, :])
            windows = value.data[:, :, idx, :]
            if layer.mode == "magnitude":
                scores = np.sum(windows * windows, axis=-1)
            else:
                scores = np.moveaxis(windows, -1, 2)        # component-wise
            top2 = np.sort(scores, axis=-1)[..., -2:]
            if np.any(top2[..., 1] - top2[..., 0] < POOL_MARGIN):
                return False
        value = layer.forward(value, training=True, rng=rng)
    return True


def fd_check_model(model: Model, x: QTensor, d: QTensor, mask_seed: int,
                   tol_rel: float = 1e-5, tol_abs: float = 1e-8,
                   h: float = 1e-5, trial: int = 0,
                   max_input_probes: int = 64,
                   relation_tol: float = 1e-10):
    """All finite-difference and relation checks for one model; returns issues."""

    def run_loss() -> float:
        rng = np.random.default_rng(mask_seed)
        out = model.forward(x, training=True, rng=rng)
        return backprop.loss_mse_quat(out, d)

    def fd_tensor(arr: np.ndarray) -> np.ndarray:
        flat = arr.reshape(-1)
        grad = np.empty_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            hi = run_loss()
            flat[i] = keep - h
            lo = run_loss()
            flat[i] = keep
            grad[i] = (hi - lo) / (2.0 * h)
        return grad.reshape(arr.shape)

    tape = []
    rng = np.random.default_rng(mask_seed)
    out = model.forward(x, training=True, rng=rng, tape=tape)
    p_out = backprop.mse_output_message(out, d)
    s_out = autodiff.ad_loss_grad(out, d)
    ghr_grads, ghr_msgs, ghr_in = backprop.backward(
        model, tape, output_message=p_out, collect_messages=True)
    ad_grads, ad_msgs, ad_in = autodiff.backward(
        model, tape, output_message=s_out, collect_messages=True)

    issues = []

    def check(path, actual, expected):
        dev = _deviation(actual, expected, tol_rel, tol_abs)
        if dev > 0.0:
            issues.append(GradcheckIssue(trial, path, dev))

    for li, layer in enumerate(model.layers):
        if ghr_grads[li] is None:
            continue
        name = model.layer_name(li)
        for tensor in ("w", "b"):
            fd = fd_tensor(getattr(layer, tensor))
            check(f"{name}.{tensor} [component engine vs fd]",
                  ad_grads[li][tensor], fd)
            check(f"{name}.{tensor} [ghr engine vs fd assembly]",
                  ghr_grads[li][tensor], 0.25 * fd)

    # input message: spot-check a deterministic subset of input components
    probe_rng = np.random.default_rng(mask_seed + 1)
    flat_x = x.data.reshape(-1)
    n_probe = min(max_input_probes, flat_x.size)
    probes = probe_rng.choice(flat_x.size, size=n_probe, replace=False)
    fd_x = np.zeros_like(flat_x)
    for i in probes:
        keep = flat_x[i]
        flat_x[i] = keep + h
        hi = run_loss()
        flat_x[i] = keep - h
        lo = run_loss()
        flat_x[i] = keep
        fd_x[i] = (hi - lo) / (2.0 * h)
    sel = probes
    fd_sel = fd_x[sel]
    check("input [component engine vs fd]", ad_in.reshape(-1)[sel], fd_sel)
    ghr_expected = 0.25 * conjugate_arr(fd_x.reshape(x.data.shape)).reshape(-1)[sel]
    check("input [ghr message vs fd assembly]", ghr_in.reshape(-1)[sel], ghr_expected)

    relation = autodiff.relation_report(model, ghr_grads, ghr_msgs,
                                        ad_grads, ad_msgs, relation_tol)
    for entry in relation.failures():
        issues.append(GradcheckIssue(trial, f"{entry.layer}.{entry.tensor} "
                                            "[engine relation]", entry.max_rel_dev))
    return issues


def run_gradcheck(seed: int = 0, trials: int = 20, tol_rel: float = 1e-5,
                  tol_abs: float = 1e-8, h: float = 1e-5) -> GradcheckReport:
    report = GradcheckReport(trials=trials, tol_rel=tol_rel, tol_abs=tol_abs)
    for trial in range(trials):
        trial_rng = np.random.default_rng((seed, trial))
        mask_seed = int(trial_rng.integers(2 ** 31))
        for _ in range(50):
            model, x, d = random_trial(trial_rng)
            if _pool_margins_ok(model, x, mask_seed):
                break
        else:
            raise RuntimeError("could not draw a tie-free pooling configuration")
        report.issues.extend(fd_check_model(
            model, x, d, mask_seed, tol_rel=tol_rel, tol_abs=tol_abs,
            h=h, trial=trial))
    return report
