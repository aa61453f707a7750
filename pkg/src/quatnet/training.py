"""Model assembly, synthetic data, and the training/evaluation loops."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff, backprop
from .compression import CompressedSeries, RealSeries, compress, mean_downsample, real_expand
from .config import ConfigError, ModelConfig, TrainSpec, CONV_KERNEL, CONV_STRIDE, POOL_KERNEL, POOL_STRIDE
from .layers import (
    Activation,
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
    conv_output_length,
)
from .quaternion import QTensor


class TrainingDiverged(RuntimeError):
    pass


class EngineRelationError(RuntimeError):
    """The component-level and GHR gradients broke their fixed relation."""

    def __init__(self, report):
        super().__init__("engine relation violated:\n" + report.render())
        self.report = report


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of the true class."""
    loss, _ = cross_entropy_with_grad(logits, labels)
    return loss


def cross_entropy_with_grad(logits: np.ndarray, labels: np.ndarray):
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"logits {logits.shape} do not match labels {labels.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1))
    batch = logits.shape[0]
    loss = float(np.mean(logz - shifted[np.arange(batch), labels]))
    softmax = np.exp(shifted) / np.exp(logz)[:, None]
    grad = softmax.copy()
    grad[np.arange(batch), labels] -= 1.0
    return loss, grad / batch


def squared_error_with_grad(logits: np.ndarray, labels: np.ndarray, classes: int):
    """Batch-summed squared error of the logits against a one-hot target.

    This is the real-valued specialisation of the quaternion squared-error
    loss; the gradient -2e matches the component-level convention.
    """
    target = np.zeros_like(logits)
    target[np.arange(logits.shape[0]), labels] = 1.0
    e = target - logits
    return float(np.sum(e * e)), -2.0 * e


@dataclass
class Dataset:
    x: object                    # QTensor or float64 ndarray, leading axis = samples
    y: np.ndarray
    classes: int

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.y) == 0:
            raise ValueError("dataset is empty")
        if self.y.min() < 0 or self.y.max() >= self.classes:
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx):
        x = QTensor(self.x.data[idx]) if isinstance(self.x, QTensor) else self.x[idx]
        return x, self.y[idx]


def build_model(cfg: ModelConfig, seed_or_rng=0) -> Model:
    """Assemble the layer stack: (dropout, conv, activation, pool) per conv
    block, flatten, (dropout, linear, activation) per linear block, then the
    class head."""
    cfg.validate()
    if cfg.in_channels is None or cfg.in_length is None:
        raise ConfigError("in_channels and in_length must be set before building")
    rng = (seed_or_rng if isinstance(seed_or_rng, np.random.Generator)
           else np.random.default_rng(seed_or_rng))
    conv_channels, linear_sizes = cfg.widths()
    quat = cfg.numeric == "quaternion"
    layers = []
    channels, length = cfg.in_channels, cfg.in_length
    for c_out in conv_channels:
        if length < CONV_KERNEL:
            raise ConfigError(f"sequence length {length} too short for conv kernel {CONV_KERNEL}")
        if quat:
            layers.append(QDropout(cfg.dropout))
            layers.append(QConv1d.init(channels, c_out, CONV_KERNEL, rng,
                                       stride=CONV_STRIDE, product_order=cfg.conv_order))
        else:
            layers.append(RealDropout(cfg.dropout))
            layers.append(RealConv1d.init(channels, c_out, CONV_KERNEL, rng,
                                          stride=CONV_STRIDE))
        layers.append(Activation(cfg.activation))
        length = conv_output_length(length, CONV_KERNEL, CONV_STRIDE)
        if length < POOL_KERNEL:
            raise ConfigError(f"sequence length {length} too short for pooling")
        if quat:
            layers.append(QMaxPool1d(cfg.pooling, POOL_KERNEL, POOL_STRIDE))
        else:
            layers.append(RealMaxPool1d(POOL_KERNEL, POOL_STRIDE))
        length = conv_output_length(length, POOL_KERNEL, POOL_STRIDE)
        channels = c_out
    layers.append(QFlatten() if quat else RealFlatten())
    features = channels * length
    for size in linear_sizes:
        if quat:
            layers.append(QDropout(cfg.dropout))
            layers.append(QLinear.init(features, size, rng))
        else:
            layers.append(RealDropout(cfg.dropout))
            layers.append(RealLinear.init(features, size, rng))
        layers.append(Activation(cfg.activation))
        features = size
    if quat:
        layers.append(RealHead.init(features, cfg.classes, rng))
    else:
        layers.append(RealLinear.init(features, cfg.classes, rng))
    return Model(layers)


def count_parameters(model: Model) -> int:
    """Trainable real scalars (each quaternion counts its four components)."""
    return sum(layer.w.size + layer.b.size for layer in model.param_layers())


# ---------------------------------------------------------------------------
# Synthetic fault-classification data.

@dataclass
class SynthData:
    train_x: np.ndarray          # (N, channels, length) raw real series
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    classes: int
    chunk_len: int


def synth_dataset(classes: int, channels: int, length: int, seed: int,
                  train_per_class: int = 30, test_per_class: int = 20,
                  base_sigma: float = 0.5, sigma_ratio: float = 3.0,
                  chunk_len: int = 8) -> SynthData:
    """Variance-coded classes over a shared random base signal.

    Within every compression chunk the sample mean equals a label-independent
    base value exactly (the in-chunk noise is re-centred), so per-chunk mean
    downsampling carries no label information, while the in-chunk spread
    (min, max, std) scales with the class sigma = base_sigma * sigma_ratio^c.
    """
    if classes < 1 or channels < 1:
        raise ValueError("classes and channels must be >= 1")
    if length % chunk_len != 0:
        raise ValueError("length must be a multiple of chunk_len")
    rng = np.random.default_rng(seed)
    k = length // chunk_len

    def draw(n_per_class):
        n = classes * n_per_class
        x = np.empty((n, channels, length))
        y = np.repeat(np.arange(classes), n_per_class)
        for i in range(n):
            sigma = base_sigma * sigma_ratio ** y[i]
            base = rng.standard_normal((channels, k))
            noise = rng.standard_normal((channels, k, chunk_len))
            noise -= noise.mean(axis=2, keepdims=True)
            x[i] = (base[:, :, None] + sigma * noise).reshape(channels, length)
        return x, y

    train_x, train_y = draw(train_per_class)
    test_x, test_y = draw(test_per_class)
    return SynthData(train_x, train_y, test_x, test_y, classes, chunk_len)


def compress_batch(x: np.ndarray, chunk_len: int) -> np.ndarray:
    """(N, C, L) raw samples -> (N, C, k, 4) chunk-statistic quaternions."""
    n, c, length = x.shape
    packed = compress(RealSeries(x.reshape(n * c, length)), chunk_len)
    return packed.quats.data.reshape(n, c, -1, 4)


def make_dataset(x: np.ndarray, y: np.ndarray, classes: int,
                 representation: str, numeric: str, chunk_len: int) -> Dataset:
    """Turn raw (N, C, L) series into model input for the chosen pipeline."""
    if representation == "compressed":
        quats = compress_batch(x, chunk_len)
        if numeric == "quaternion":
            return Dataset(QTensor(quats), y, classes)
        n = x.shape[0]
        expanded = quats.transpose(0, 1, 3, 2).reshape(n, -1, quats.shape[2])
        return Dataset(expanded, y, classes)
    if numeric == "quaternion":
        raise ConfigError("quaternion models require the compressed representation")
    if representation == "mean":
        n, c, length = x.shape
        means = mean_downsample(RealSeries(x.reshape(n * c, length)), chunk_len)
        return Dataset(means.values.reshape(n, c, -1), y, classes)
    if representation == "raw":
        return Dataset(np.asarray(x, dtype=np.float64), y, classes)
    raise ConfigError(f"unknown representation {representation!r}")


# ---------------------------------------------------------------------------
# Optimisation.

def _loss_and_grad(spec: TrainSpec, logits, labels, classes):
    if spec.loss == "cross-entropy":
        return cross_entropy_with_grad(logits, labels)
    return squared_error_with_grad(logits, labels, classes)


def train(model: Model, data: Dataset, spec: TrainSpec, test_data: Dataset | None = None,
          relation_tol: float = 1e-10):
    """SGD over seeded shuffled mini-batches; returns the per-epoch history.

    With engine "both" the GHR gradients drive the update and the
    component-level engine is run alongside, asserting the factor-4 /
    conjugation relation at every step.
    """
    spec.validate()
    if model.has_input_left_conv() and spec.engine != "ad":
        raise ConfigError("input-left convolutions are trained with engine 'ad' "
                          "(use learning_rate/4 for GHR-equivalent steps)")
    rng = np.random.default_rng(spec.seed)
    n = len(data)
    history = []
    for epoch in range(spec.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, spec.batch_size):
            idx = order[start:start + spec.batch_size]
            xb, yb = data.take(idx)
            tape = []
            logits = model.forward(xb, training=True, rng=rng, tape=tape)
            loss, g = _loss_and_grad(spec, logits, yb, data.classes)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {start // spec.batch_size}")
            per_sample = loss if spec.loss != "cross-entropy" else loss * len(idx)
            total_loss += per_sample
            collect = spec.engine == "both"
            if spec.engine == "ad":
                grads, _, _ = autodiff.backward(model, tape, logits_grad=g)
            else:
                grads, ghr_msgs, _ = backprop.backward(
                    model, tape, logits_grad=g, collect_messages=collect)
                if spec.engine == "both":
                    ad_grads, ad_msgs, _ = autodiff.backward(
                        model, tape, logits_grad=g, collect_messages=True)
                    report = autodiff.relation_report(
                        model, grads, ghr_msgs, ad_grads, ad_msgs, relation_tol)
                    if not report.passed:
                        raise EngineRelationError(report)
            backprop.sgd_step(model, grads, spec.learning_rate)
        history.append({
            "epoch": epoch,
            "loss": total_loss / n,
            "train_acc": evaluate(model, data),
            "test_acc": evaluate(model, test_data) if test_data is not None else float("nan"),
        })
    return history


def evaluate(model: Model, data: Dataset) -> float:
    """Classification accuracy in [0, 1] with dropout disabled."""
    logits = model.forward(data.x, training=False)
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == data.y))


def dataset_dims(data: Dataset):
    """(model input channels, sequence length) implied by a dataset."""
    shape = data.x.shape
    if len(shape) != 3:
        raise ConfigError(f"expected (samples, channels, length) input, got {shape}")
    return shape[1], shape[2]


def _load_csv_split(entries, window: int, stride: int):
    from .compression import sliding_window
    from .io import read_series_csv

    xs, ys, series_list = [], [], []
    for entry in entries:
        series = read_series_csv(entry.path)
        series_list.append(series)
        for win in sliding_window(series, window, stride):
            xs.append(win.values)
            ys.append(entry.label)
    return xs, ys, series_list


def prepare_run_data(run):
    """Datasets for a run config; returns (train, test)."""
    from .compression import channel_stats
    from .config import RunConfig  # noqa: F401  (documented parameter type)

    data_cfg = run.data
    if data_cfg.kind == "synth":
        s = data_cfg.synth
        raw = synth_dataset(s.classes, s.channels, s.length, run.train.seed,
                            train_per_class=s.train_per_class,
                            test_per_class=s.test_per_class,
                            base_sigma=s.base_sigma, sigma_ratio=s.sigma_ratio,
                            chunk_len=data_cfg.chunk_len)
        classes = raw.classes
        train_x, train_y = raw.train_x, raw.train_y
        test_x, test_y = raw.test_x, raw.test_y
    else:
        csv_cfg = data_cfg.csv
        test_stride = csv_cfg.test_stride or csv_cfg.window
        train_xs, train_ys, train_series = _load_csv_split(
            csv_cfg.train, csv_cfg.window, csv_cfg.train_stride)
        test_xs, test_ys, _ = _load_csv_split(
            csv_cfg.test, csv_cfg.window, test_stride)
        if not train_xs:
            raise ConfigError("csv data produced no training windows")
        if csv_cfg.zscore:
            # normalisation statistics come from the training series only
            joined = np.concatenate([s.values for s in train_series], axis=1)
            mean, std = channel_stats(joined)
            train_xs = [(x - mean) / std for x in train_xs]
            test_xs = [(x - mean) / std for x in test_xs]
        train_x, train_y = np.stack(train_xs), np.asarray(train_ys)
        test_x = np.stack(test_xs) if test_xs else None
        test_y = np.asarray(test_ys) if test_xs else None
        classes = int(train_y.max()) + 1 if test_y is None else \
            int(max(train_y.max(), test_y.max())) + 1
    if classes != run.model.classes:
        raise ConfigError(f"data has {classes} classes but the model is "
                          f"configured for {run.model.classes}")
    train = make_dataset(train_x, train_y, classes, data_cfg.representation,
                         run.model.numeric, data_cfg.chunk_len)
    test = None
    if test_x is not None:
        test = make_dataset(test_x, test_y, classes, data_cfg.representation,
                            run.model.numeric, data_cfg.chunk_len)
    return train, test
