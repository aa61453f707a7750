"""Architecture and training configuration.

The architecture registry mirrors the six conv/linear width combinations of
the study setup (one, two or three convolution blocks followed by three or
four linear blocks, each in a narrow and a wide variant), for the quaternion
models and both real-valued comparison families.  Real widths marked "x4" in
the source table are stored already multiplied out.

All convolutions use kernel 4 with stride 1 and every convolution block ends
in max pooling with kernel 2, stride 2; these values are fixed by the
published trainable-parameter counts (e.g. 327030 for the narrow
one-convolution quaternion model on a 52-channel, length-40 input).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

ARCHS = ("1c3l", "2c4l", "3c4l")
WIDTHS = ("low", "high")
NUMERICS = ("quaternion", "real-equal-params", "real-equal-features")
POOLINGS = ("component", "magnitude")
ENGINES = ("ghr", "ad", "both")
LOSSES = ("cross-entropy", "quaternion-mse")
REPRESENTATIONS = ("compressed", "mean", "raw")

CONV_KERNEL = 4
CONV_STRIDE = 1
POOL_KERNEL = 2
POOL_STRIDE = 2

# (conv output channels, linear output sizes); the class head is appended at
# build time with the configured class count.
ARCH_TABLE = {
    ("1c3l", "low", "quaternion"): ([32], [128, 8]),
    ("1c3l", "low", "real-equal-params"): ([100], [133, 30]),
    ("1c3l", "low", "real-equal-features"): ([128], [512, 32]),
    ("1c3l", "high", "quaternion"): ([96], [256, 8]),
    ("1c3l", "high", "real-equal-params"): ([340], [256, 32]),
    ("1c3l", "high", "real-equal-features"): ([384], [1024, 32]),
    ("2c4l", "low", "quaternion"): ([32, 32], [128, 128, 8]),
    ("2c4l", "low", "real-equal-params"): ([100, 100], [128, 96, 32]),
    ("2c4l", "low", "real-equal-features"): ([128, 128], [512, 512, 32]),
    ("2c4l", "high", "quaternion"): ([96, 96], [256, 256, 8]),
    ("2c4l", "high", "real-equal-params"): ([292, 292], [259, 256, 32]),
    ("2c4l", "high", "real-equal-features"): ([384, 384], [1024, 1024, 32]),
    ("3c4l", "low", "quaternion"): ([32, 32, 32], [128, 128, 8]),
    ("3c4l", "low", "real-equal-params"): ([92, 88, 88], [96, 60, 24]),
    ("3c4l", "low", "real-equal-features"): ([128, 128, 128], [512, 512, 32]),
    ("3c4l", "high", "quaternion"): ([96, 96, 96], [256, 256, 8]),
    ("3c4l", "high", "real-equal-params"): ([264, 264, 264], [124, 60, 24]),
    ("3c4l", "high", "real-equal-features"): ([384, 384, 384], [1024, 1024, 32]),
}


class ConfigError(ValueError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass
class ModelConfig:
    arch: str = "1c3l"
    width: str = "low"
    numeric: str = "quaternion"
    pooling: str = "magnitude"
    activation: str = "tanh"
    dropout: float = 0.0
    classes: int = 22
    in_channels: int | None = None      # quaternion channels, or real channels
    in_length: int | None = None
    conv_order: str = "weight-left"

    def validate(self) -> "ModelConfig":
        _require(self.arch in ARCHS, f"arch must be one of {ARCHS}")
        _require(self.width in WIDTHS, f"width must be one of {WIDTHS}")
        _require(self.numeric in NUMERICS, f"numeric must be one of {NUMERICS}")
        _require(self.pooling in POOLINGS, f"pooling must be one of {POOLINGS}")
        _require(self.activation in ("relu", "tanh", "tanhshrink", "identity"),
                 "unknown activation")
        _require(0.0 <= self.dropout < 1.0, "dropout must be in [0, 1)")
        _require(self.classes >= 2, "class count must be >= 2")
        _require(self.conv_order in ("weight-left", "input-left"),
                 "conv_order must be weight-left or input-left")
        return self

    def widths(self):
        """(conv channels, linear sizes) from the architecture registry."""
        return ARCH_TABLE[(self.arch, self.width, self.numeric)]


@dataclass
class TrainSpec:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    engine: str = "ghr"
    loss: str = "cross-entropy"

    def validate(self) -> "TrainSpec":
        _require(self.learning_rate > 0, "learning rate must be positive")
        _require(self.batch_size >= 1, "batch size must be >= 1")
        _require(self.epochs >= 1, "epochs must be >= 1")
        _require(self.engine in ENGINES, f"engine must be one of {ENGINES}")
        _require(self.loss in LOSSES, f"loss must be one of {LOSSES}")
        return self


@dataclass
class SynthDataConfig:
    classes: int = 4
    channels: int = 8
    length: int = 320
    train_per_class: int = 30
    test_per_class: int = 20
    base_sigma: float = 0.5
    sigma_ratio: float = 3.0


@dataclass
class CsvEntry:
    path: str
    label: int


@dataclass
class CsvDataConfig:
    train: list
    test: list
    window: int = 320
    train_stride: int = 1
    test_stride: int | None = None      # defaults to the window length
    zscore: bool = False


@dataclass
class DataConfig:
    kind: str = "synth"
    chunk_len: int = 8
    representation: str = "compressed"
    synth: SynthDataConfig = field(default_factory=SynthDataConfig)
    csv: CsvDataConfig | None = None

    def validate(self) -> "DataConfig":
        _require(self.kind in ("synth", "csv"), "data kind must be synth or csv")
        _require(self.chunk_len >= 1, "chunk_len must be >= 1")
        _require(self.representation in REPRESENTATIONS,
                 f"representation must be one of {REPRESENTATIONS}")
        if self.kind == "csv":
            _require(self.csv is not None, "csv data block missing")
        return self


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainSpec
    data: DataConfig
    checkpoint: str = "model.qnn1"
    history: str = "history.csv"

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.train.validate()
        self.data.validate()
        if self.model.numeric == "quaternion":
            _require(self.data.representation == "compressed",
                     "quaternion models require the compressed representation")
        return self


def _from_dict(cls, obj: dict, context: str):
    _require(isinstance(obj, dict), f"{context}: expected an object")
    allowed = {f.name for f in fields(cls)}
    unknown = set(obj) - allowed
    _require(not unknown,
             f"{context}: unknown keys {sorted(unknown)} (allowed: {sorted(allowed)})")
    return cls(**obj)


def parse_run_config(obj: dict) -> RunConfig:
    """Build a validated RunConfig from a JSON-style dict; unknown keys reject."""
    _require(isinstance(obj, dict), "run config must be a JSON object")
    allowed = {"model", "train", "data", "checkpoint", "history"}
    unknown = set(obj) - allowed
    _require(not unknown, f"unknown top-level keys {sorted(unknown)}")
    model = _from_dict(ModelConfig, obj.get("model", {}), "model")
    train = _from_dict(TrainSpec, obj.get("train", {}), "train")

    data_obj = dict(obj.get("data", {}))
    synth_obj = data_obj.pop("synth", {})
    csv_obj = data_obj.pop("csv", None)
    data = _from_dict(DataConfig, data_obj, "data")
    data.synth = _from_dict(SynthDataConfig, synth_obj, "data.synth")
    if csv_obj is not None:
        csv_obj = dict(csv_obj)
        for split in ("train", "test"):
            entries = csv_obj.get(split, [])
            csv_obj[split] = [_from_dict(CsvEntry, e, f"data.csv.{split}[{i}]")
                              for i, e in enumerate(entries)]
        data.csv = _from_dict(CsvDataConfig, csv_obj, "data.csv")
    run = RunConfig(model=model, train=train, data=data,
                    checkpoint=obj.get("checkpoint", "model.qnn1"),
                    history=obj.get("history", "history.csv"))
    return run.validate()
