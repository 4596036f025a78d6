"""UCI HAR raw inertial signals: parsing, min-max normalisation, model layouts.

Expected layout under ``root``::

    train/Inertial Signals/body_acc_x_train.txt   (one file per channel)
    train/y_train.txt
    test/...                                      (same with _test)
"""

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

WINDOW = 128
N_CLASSES = 6
CHANNELS = (
    "body_acc_x", "body_acc_y", "body_acc_z",
    "body_gyro_x", "body_gyro_y", "body_gyro_z",
    "total_acc_x", "total_acc_y", "total_acc_z",
)
ACTIVITIES = (
    "WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING", "LAYING",
)
SPLITS = ("train", "test")
ROOT_ENV = "HAR_ROOT"

# sub4x32x9: four subsequences of 32 steps
N_SUBSEQ = 4
SUBSEQ_LEN = WINDOW // N_SUBSEQ
TARGETS = ("flat1152", "seq128x9", "img128x9x1", "sub4x32x9")


class DatasetError(ValueError):
    pass


@dataclass
class RawSignalSet:
    channels: dict  # name -> (rows, 128) float64, in CHANNELS order
    split: str

    def __post_init__(self):
        rows = {m.shape[0] for m in self.channels.values()}
        if len(rows) != 1:
            raise DatasetError(f"channel row counts differ: {sorted(rows)}")
        for name, m in self.channels.items():
            if m.ndim != 2 or m.shape[1] != WINDOW:
                raise DatasetError(f"{name}: expected (rows, {WINDOW}), got {m.shape}")

    @property
    def n_windows(self):
        return next(iter(self.channels.values())).shape[0]

    def stack(self):
        """(N, 128, 9) float32 in canonical channel order."""
        return np.stack([self.channels[c] for c in CHANNELS], axis=-1).astype(np.float32)


@dataclass
class WindowBatch:
    data: np.ndarray    # (N, 128, 9) float32
    labels: np.ndarray  # (N,) int, values 1..6
    split: str

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[1:] != (WINDOW, len(CHANNELS)):
            raise DatasetError(f"window batch must be (N, {WINDOW}, {len(CHANNELS)}), got {self.data.shape}")
        if self.labels.shape != (self.data.shape[0],):
            raise DatasetError("one label per window required")
        check_labels(self.labels)

    def __len__(self):
        return self.data.shape[0]

    def subset(self, idx):
        return WindowBatch(self.data[idx], self.labels[idx], self.split)


@dataclass
class NormalizationParams:
    min: np.ndarray  # (9,)
    max: np.ndarray  # (9,)

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float32)
        self.max = np.asarray(self.max, dtype=np.float32)
        if not np.all(self.max > self.min):
            bad = [CHANNELS[i] for i in np.flatnonzero(~(self.max > self.min))]
            raise DatasetError(f"degenerate channel(s) with max == min: {bad}")

    def to_dict(self):
        return {"channels": list(CHANNELS), "min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["min"]), np.array(d["max"]))


def check_labels(labels):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 1 or labels.max() > N_CLASSES):
        raise DatasetError(f"labels must lie in 1..{N_CLASSES}, got range [{labels.min()}, {labels.max()}]")
    return labels


def parse_signal_file(path, columns=WINDOW):
    """Read a whitespace-separated text matrix with exactly ``columns`` values per row."""
    path = Path(path)
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DatasetError(f"{path}: empty file")
    rows = []
    for lineno, line in enumerate(lines, 1):
        tokens = line.split()
        if len(tokens) != columns:
            raise DatasetError(f"{path}:{lineno}: expected {columns} values, found {len(tokens)}")
        try:
            rows.append([float(t) for t in tokens])
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=np.float64)


def parse_label_file(path):
    path = Path(path)
    try:
        labels = np.loadtxt(path, dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if labels.size == 0:
        raise DatasetError(f"{path}: empty file")
    return check_labels(labels)


def signal_path(root, split, channel):
    return Path(root) / split / "Inertial Signals" / f"{channel}_{split}.txt"


def label_path(root, split):
    return Path(root) / split / f"y_{split}.txt"


def resolve_root(root=None):
    root = root or os.environ.get(ROOT_ENV)
    if not root:
        raise DatasetError(f"no dataset root given and ${ROOT_ENV} is unset")
    return Path(root)


def load_split(root, split):
    """Return (RawSignalSet, labels) for ``split`` in canonical channel order."""
    if split not in SPLITS:
        raise DatasetError(f"split must be one of {SPLITS}, got {split!r}")
    root = resolve_root(root)
    channels = {}
    for ch in CHANNELS:
        p = signal_path(root, split, ch)
        if not p.is_file():
            raise DatasetError(f"missing signal file {p}")
        channels[ch] = parse_signal_file(p)
    lp = label_path(root, split)
    if not lp.is_file():
        raise DatasetError(f"missing label file {lp}")
    raw = RawSignalSet(channels, split)
    labels = parse_label_file(lp)
    if labels.shape[0] != raw.n_windows:
        raise DatasetError(f"{lp}: {labels.shape[0]} labels for {raw.n_windows} windows")
    return raw, labels


def load_windows(root, split):
    raw, labels = load_split(root, split)
    return WindowBatch(raw.stack(), labels, split)


def normalize_fit(train):
    """Per-channel min/max over every window and timestep of ``train``."""
    data = train.data if isinstance(train, WindowBatch) else np.asarray(train)
    return NormalizationParams(data.min(axis=(0, 1)), data.max(axis=(0, 1)))


def normalize_apply(batch, params):
    """Scale to [0, 1] with the fitted range; values outside it are clamped."""
    scaled = (batch.data - params.min) / (params.max - params.min)
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return WindowBatch(scaled.astype(np.float32, copy=False), batch.labels, batch.split)


def reshape_for_model(data, target):
    """Reshape (N, 128, 9) windows into one of the model input layouts."""
    data = np.asarray(data)
    if data.ndim != 3 or data.shape[1:] != (WINDOW, len(CHANNELS)):
        raise DatasetError(f"expected (N, {WINDOW}, {len(CHANNELS)}), got {data.shape}")
    n = data.shape[0]
    if target == "flat1152":
        return data.reshape(n, WINDOW * len(CHANNELS))
    if target == "seq128x9":
        return data
    if target == "img128x9x1":
        return data.reshape(n, WINDOW, len(CHANNELS), 1)
    if target == "sub4x32x9":
        return data.reshape(n, N_SUBSEQ, SUBSEQ_LEN, len(CHANNELS))
    raise DatasetError(f"unknown target layout {target!r}; expected one of {TARGETS}")


def restore_windows(x, target):
    """Inverse of :func:`reshape_for_model`."""
    x = np.asarray(x)
    if target not in TARGETS:
        raise DatasetError(f"unknown target layout {target!r}")
    if x.size % (WINDOW * len(CHANNELS)):
        raise DatasetError(f"cannot restore {x.shape} to windows")
    return x.reshape(-1, WINDOW, len(CHANNELS))


def one_hot(labels):
    labels = check_labels(labels)
    out = np.zeros((labels.shape[0], N_CLASSES), dtype=np.float32)
    out[np.arange(labels.shape[0]), labels - 1] = 1.0
    return out
