"""Quaternionic time-series compression and its baselines.

A real multivariate series of m channels and n samples is cut into chunks of
length l (the final chunk may be shorter) and each chunk collapses to one
quaternion holding (min, max, mean, std) in the components (q0, q1 i, q2 j,
q3 k).  This maps an (m, n) real series to an (m, ceil(n/l)) quaternion
series; counting reals, the data shrinks by a factor of l/4.

The standard deviation is the sample standard deviation (n-1 denominator);
single-element chunks get std = 0 since the sample estimate is undefined
there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quaternion import QTensor


@dataclass
class RealSeries:
    """Real multivariate series: one row per channel, one column per sample."""

    values: np.ndarray
    channel_names: list | None = None
    sample_period: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"series values must be (channels, samples), got {self.values.shape}")
        if self.values.shape[1] < 1:
            raise ValueError("series must contain at least one sample")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series contains non-finite values")
        if self.channel_names is not None and len(self.channel_names) != self.values.shape[0]:
            raise ValueError("channel_names length does not match channel count")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


@dataclass
class CompressedSeries:
    """Quaternion-packed chunk statistics of a real series."""

    quats: QTensor                      # (channels, chunks)
    chunk_len: int
    last_chunk_len: int
    channel_names: list | None = None

    @property
    def n_channels(self) -> int:
        return self.quats.shape[0]

    @property
    def n_chunks(self) -> int:
        return self.quats.shape[1]


def _chunk_stats(chunk: np.ndarray) -> np.ndarray:
    """(min, max, mean, sample std) of a (channels, width) chunk."""
    mean = chunk.mean(axis=1)
    width = chunk.shape[1]
    if width > 1:
        # two-pass variance for robustness on long chunks
        dev = chunk - mean[:, None]
        std = np.sqrt(np.sum(dev * dev, axis=1) / (width - 1))
    else:
        std = np.zeros_like(mean)
    return np.stack([chunk.min(axis=1), chunk.max(axis=1), mean, std], axis=-1)


def compress(x: RealSeries, chunk_len: int) -> CompressedSeries:
    """Pack per-chunk (min, max, mean, std) into quaternions, channel by channel."""
    if chunk_len < 1:
        raise ValueError("chunk length must be >= 1")
    m, n = x.values.shape
    k = math.ceil(n / chunk_len)
    n_full = n // chunk_len
    out = np.empty((m, k, 4))
    if n_full:
        full = x.values[:, :n_full * chunk_len].reshape(m, n_full, chunk_len)
        mean = full.mean(axis=2)
        if chunk_len > 1:
            dev = full - mean[:, :, None]
            std = np.sqrt(np.sum(dev * dev, axis=2) / (chunk_len - 1))
        else:
            std = np.zeros_like(mean)
        out[:, :n_full, 0] = full.min(axis=2)
        out[:, :n_full, 1] = full.max(axis=2)
        out[:, :n_full, 2] = mean
        out[:, :n_full, 3] = std
    last_len = n - n_full * chunk_len
    if last_len:
        out[:, -1, :] = _chunk_stats(x.values[:, n_full * chunk_len:])
    return CompressedSeries(QTensor(out), chunk_len,
                            last_len if last_len else min(chunk_len, n),
                            x.channel_names)


def mean_downsample(x: RealSeries, chunk_len: int) -> RealSeries:
    """Per-chunk mean only (piecewise aggregate approximation baseline)."""
    if chunk_len < 1:
        raise ValueError("chunk length must be >= 1")
    m, n = x.values.shape
    k = math.ceil(n / chunk_len)
    n_full = n // chunk_len
    out = np.empty((m, k))
    if n_full:
        out[:, :n_full] = x.values[:, :n_full * chunk_len].reshape(
            m, n_full, chunk_len).mean(axis=2)
    if n_full * chunk_len < n:
        out[:, -1] = x.values[:, n_full * chunk_len:].mean(axis=1)
    return RealSeries(out, x.channel_names, x.sample_period)


def real_expand(c: CompressedSeries) -> RealSeries:
    """Unpack to a 4m-channel real series for the real-valued comparison models.

    Channel order is source-channel-major: (min, max, mean, std) of channel 0,
    then of channel 1, and so on.
    """
    m, k = c.quats.shape
    values = c.quats.data.transpose(0, 2, 1).reshape(4 * m, k)
    names = None
    if c.channel_names is not None:
        names = [f"{ch}_{stat}" for ch in c.channel_names
                 for stat in ("min", "max", "mean", "std")]
    return RealSeries(values, names)


def sliding_window(x: RealSeries, window: int, stride: int = 1) -> list:
    """Windows starting at 0, ``stride`` apart; count floor((n-window)/stride)+1."""
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    if window > x.n_samples:
        raise ValueError(f"window {window} longer than series ({x.n_samples} samples)")
    starts = range(0, x.n_samples - window + 1, stride)
    return [RealSeries(x.values[:, s:s + window].copy(), x.channel_names,
                       x.sample_period) for s in starts]


def channel_stats(x: np.ndarray):
    """Per-channel mean and std over samples for optional z-scoring."""
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    std = np.where(std == 0.0, 1.0, std)
    return mean, std


def zscore(x: RealSeries, mean=None, std=None) -> RealSeries:
    """Standardise each channel; stats default to the series' own."""
    if mean is None or std is None:
        mean, std = channel_stats(x.values)
    return RealSeries((x.values - mean) / std, x.channel_names, x.sample_period)
