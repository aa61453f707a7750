"""File formats: series CSV, compressed CSV/binary, model checkpoints, history.

Binary layouts (all little-endian):

* compressed series, magic ``QTS1``: u32 channels m, u32 chunks k, u32 chunk
  length l, then m*k quaternions as four f64 in (min, max, mean, std) order,
  row-major over (channel, chunk).
* model checkpoint, magic ``QNN1``: u32 record count, then one record per
  parameterised layer: u32 type tag, and for each of the weight and bias
  tensors a u8 rank, u32 dims and the f64 payload; quaternion tensors stream
  their components in (q0, q1, q2, q3) order.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .compression import CompressedSeries, RealSeries
from .layers import Model, QConv1d, QLinear, RealConv1d, RealHead, RealLinear
from .quaternion import QTensor

QTS_MAGIC = b"QTS1"
QNN_MAGIC = b"QNN1"

_LAYER_TAGS = {QLinear: 1, QConv1d: 2, RealHead: 3, RealLinear: 4, RealConv1d: 5}


class CsvFormatError(Exception):
    """Malformed CSV input; message carries the 1-based row/column."""


def read_series_csv(path) -> RealSeries:
    """Read a series CSV: header of channel names, one row per time step."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if not header or any(not name.strip() for name in header):
            raise CsvFormatError(f"{path}: row 1: blank channel name in header")
        names = [name.strip() for name in header]
        rows = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise CsvFormatError(
                    f"{path}: row {row_no}: expected {len(names)} cells, got {len(row)}")
            parsed = []
            for col_no, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: row {row_no}, column {col_no}: "
                        f"not a number: {cell.strip()!r}") from None
            rows.append(parsed)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return RealSeries(np.array(rows).T, names)


def write_series_csv(series: RealSeries, path) -> None:
    names = series.channel_names or [f"ch{i}" for i in range(series.n_channels)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        writer.writerows(series.values.T.tolist())


def write_compressed_csv(c: CompressedSeries, path) -> None:
    """Header ``channel,chunk,min,max,mean,std``; one row per (channel, chunk)."""
    names = c.channel_names or [str(i) for i in range(c.n_channels)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "chunk", "min", "max", "mean", "std"])
        for ch in range(c.n_channels):
            for chunk in range(c.n_chunks):
                q = c.quats.data[ch, chunk]
                writer.writerow([names[ch], chunk, *(repr(float(v)) for v in q)])


def write_compressed_binary(c: CompressedSeries, path) -> None:
    with open(path, "wb") as fh:
        fh.write(QTS_MAGIC)
        fh.write(struct.pack("<III", c.n_channels, c.n_chunks, c.chunk_len))
        fh.write(np.ascontiguousarray(c.quats.data, dtype="<f8").tobytes())


def read_compressed_binary(path) -> CompressedSeries:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != QTS_MAGIC:
        raise ValueError(f"{path}: not a compressed-series file (bad magic)")
    m, k, chunk_len = struct.unpack_from("<III", blob, 4)
    payload = np.frombuffer(blob, dtype="<f8", offset=16)
    if payload.size != m * k * 4:
        raise ValueError(f"{path}: truncated payload")
    quats = QTensor(payload.reshape(m, k, 4).astype(np.float64))
    # the binary layout does not carry the final chunk's true length
    return CompressedSeries(quats, chunk_len, chunk_len)


def _write_tensor(fh, arr: np.ndarray) -> None:
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_tensor(blob: bytes, offset: int):
    (rank,) = struct.unpack_from("<B", blob, offset)
    offset += 1
    shape = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    count = int(np.prod(shape, dtype=int))
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return arr.reshape(shape).astype(np.float64), offset + 8 * count


def save_model(model: Model, path) -> None:
    records = model.param_layers()
    with open(path, "wb") as fh:
        fh.write(QNN_MAGIC)
        fh.write(struct.pack("<I", len(records)))
        for layer in records:
            fh.write(struct.pack("<I", _LAYER_TAGS[type(layer)]))
            _write_tensor(fh, layer.w)
            _write_tensor(fh, layer.b)


def load_model(model: Model, path) -> None:
    """Load parameters into an already-built model of the same architecture."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != QNN_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    (count,) = struct.unpack_from("<I", blob, 4)
    layers = model.param_layers()
    if count != len(layers):
        raise ValueError(f"{path}: checkpoint has {count} parameter layers, "
                         f"model has {len(layers)}")
    offset = 8
    for layer in layers:
        (tag,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if tag != _LAYER_TAGS[type(layer)]:
            raise ValueError(f"{path}: layer type mismatch "
                             f"(tag {tag} vs {type(layer).__name__})")
        w, offset = _read_tensor(blob, offset)
        b, offset = _read_tensor(blob, offset)
        if w.shape != layer.w.shape or b.shape != layer.b.shape:
            raise ValueError(f"{path}: shape mismatch for {type(layer).__name__}: "
                             f"{w.shape} vs {layer.w.shape}")
        layer.w = w
        layer.b = b


def write_history(history, path) -> None:
    """Training history as ``epoch,loss,train_acc,test_acc`` CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_acc", "test_acc"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["loss"]),
                             repr(row["train_acc"]), repr(row["test_acc"])])
