"""The four autoencoders and the convolutional-LSTM classifier.

Each builder returns a :class:`ModelGraph`. Autoencoders carry a boundary
index: layers before it form the encoder, layers from it on the decoder.
"""

import hashlib
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import har, ops
from .layers import (LSTM, Conv1D, Conv2D, Dense, Dropout, MaxPool, RepeatVector, Reshape,
                     TimeDistributed, UpSample2D)
from .optim import AdamState, adam_step
from .tensor import NumericError, Tape, Tensor

log = logging.getLogger(__name__)

INFER_BATCH = 256


class TrainingDiverged(RuntimeError):
    """Loss or gradients became NaN/Inf during training."""

    def __init__(self, msg, epoch, batch):
        super().__init__(f"{msg} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch


class ModelGraph:
    def __init__(self, name, input_shape, layers, boundary=None, input_layout=None, seed=0):
        self.name = name
        self.input_shape = tuple(input_shape)
        self.layers = list(layers)
        self.boundary = boundary
        self.input_layout = input_layout
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        self.shapes = [shape]
        for layer in self.layers:
            shape = layer.build(shape, rng)
            self.shapes.append(shape)

    @property
    def output_shape(self):
        return self.shapes[-1]

    @property
    def latent_shape(self):
        if self.boundary is None:
            raise ValueError(f"{self.name} has no encoder/decoder boundary")
        return self.shapes[self.boundary]

    @property
    def is_autoencoder(self):
        return self.boundary is not None

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def n_params(self):
        return sum(p.size for p in self.params())

    def layer_specs(self):
        return [layer.spec() for layer in self.layers]

    def fingerprint(self):
        """64-bit hash of the architecture (layer specs, input shape, boundary)."""
        blob = json.dumps(
            {"input": list(self.input_shape), "boundary": self.boundary,
             "layers": self.layer_specs()},
            sort_keys=True,
        ).encode()
        return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little")

    def _run(self, x, layers, training, rng):
        for layer in layers:
            x = layer(x, training, rng)
        return x

    def forward(self, x, training=False, rng=None):
        return self._run(x, self.layers, training, rng)

    __call__ = forward

    def encode_tensor(self, x, training=False, rng=None):
        return self._run(x, self.layers[:self.latent_index], training, rng)

    def decode_tensor(self, z, training=False, rng=None):
        return self._run(z, self.layers[self.latent_index:], training, rng)

    @property
    def latent_index(self):
        if self.boundary is None:
            raise ValueError(f"{self.name} has no encoder/decoder boundary")
        return self.boundary

    def summary(self):
        lines = [f"{self.name}: input {self.input_shape}"]
        for i, (layer, shape) in enumerate(zip(self.layers, self.shapes[1:])):
            mark = "  <- latent" if self.boundary is not None and i == self.boundary - 1 else ""
            lines.append(f"  {layer!r:<70} -> {shape}{mark}")
        lines.append(f"  parameters: {self.n_params()}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_mlp_ae(seed=0):
    enc = [Dense(u, "relu") for u in (512, 256, 128, 64, 32)]
    dec = [Dense(u, "relu") for u in (64, 128, 256, 512)] + [Dense(1152, "sigmoid")]
    return ModelGraph("mlp_ae", (1152,), enc + dec, boundary=len(enc),
                      input_layout="flat1152", seed=seed)


def build_conv_ae(seed=0):
    # pooling/upsampling act on the time axis only: 128 -> 64 -> 32
    enc = [
        Conv2D(16, activation="relu"), MaxPool((2, 1), (0, 1)),
        Conv2D(32, activation="relu"), MaxPool((2, 1), (0, 1)),
        Conv2D(64, activation="relu"),
    ]
    dec = [
        Conv2D(64, activation="relu"), UpSample2D((2, 1)),
        Conv2D(32, activation="relu"), UpSample2D((2, 1)),
        Conv2D(16, activation="relu"), Conv2D(1, activation="linear"),
    ]
    return ModelGraph("conv_ae", (128, 9, 1), enc + dec, boundary=len(enc),
                      input_layout="img128x9x1", seed=seed)


def build_lstm_ae(seed=0, units=64):
    enc = [LSTM(units, return_sequences=True, cell_activation="relu")]
    dec = [
        LSTM(units, return_sequences=True, cell_activation="relu"),
        TimeDistributed(Dense(9, "linear")),
    ]
    return ModelGraph("lstm_ae", (128, 9), enc + dec, boundary=len(enc),
                      input_layout="seq128x9", seed=seed)


def build_convlstm_ae(seed=0):
    s, t, c = har.N_SUBSEQ, har.SUBSEQ_LEN, len(har.CHANNELS)
    enc = [
        TimeDistributed(Conv1D(64, 3, activation="relu")),
        TimeDistributed(Conv1D(64, 3, activation="relu")),
        MaxPool((2,), (1,)),
        Reshape((s, (t // 2) * 64)),
        LSTM(100, output_activation="relu"),
    ]
    dec = [
        RepeatVector(s),
        LSTM(100, output_activation="relu"),
        RepeatVector(s * t),
        Reshape((s, t, 100)),
        TimeDistributed(Conv1D(64, 3, activation="relu")),
        TimeDistributed(Conv1D(64, 3, activation="relu")),
        TimeDistributed(Conv1D(1, 3, activation="linear")),
        TimeDistributed(Dense(c, "linear")),
    ]
    return ModelGraph("convlstm_ae", (s, t, c), enc + dec, boundary=len(enc),
                      input_layout="sub4x32x9", seed=seed)


def build_classifier(seed=0):
    s, t, c = har.N_SUBSEQ, har.SUBSEQ_LEN, len(har.CHANNELS)
    layers = [
        TimeDistributed(Conv1D(64, 3, activation="relu")),
        TimeDistributed(Conv1D(64, 3, activation="relu")),
        Dropout(0.5),
        MaxPool((2,), (1,)),
        Reshape((s, (t // 2) * 64)),
        LSTM(100),
        Dropout(0.6),
        Dense(100, "relu"),
        Dense(har.N_CLASSES, "softmax"),
    ]
    return ModelGraph("classifier", (s, t, c), layers, input_layout="sub4x32x9", seed=seed)


BUILDERS = {
    "mlp_ae": build_mlp_ae,
    "conv_ae": build_conv_ae,
    "lstm_ae": build_lstm_ae,
    "convlstm_ae": build_convlstm_ae,
    "classifier": build_classifier,
}


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 0.001
    decay: float = 0.0
    clip_value: float | None = None
    batch_size: int = 32
    epochs: int = 1
    loss: str = "mse"            # mse | cce
    validation: str = "fixed"    # fixed | split | none
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss not in ("mse", "cce"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.validation not in ("fixed", "split", "none"):
            raise ValueError(f"unknown validation policy {self.validation!r}")


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    max_abs_grad: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def split_holdout(n, fraction, seed):
    """Seeded permutation split into (train_idx, val_idx)."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * fraction))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _loss(model_out, target, kind):
    if kind == "mse":
        return ops.mse(model_out, target)
    return ops.categorical_cross_entropy(model_out, target)


def fit(model, x, y=None, config=None, validation_data=None):
    """Train ``model`` in place with Adam; returns a :class:`History`.

    For autoencoders leave ``y`` as None (targets are the inputs).
    ``validation_data`` is an ``(x, y)`` pair (``y`` may be None) used with
    the ``fixed`` policy; ``split`` carves a seeded holdout from ``x``.
    """
    config = config or TrainConfig()
    x = np.asarray(x, dtype=np.float32)
    y = x if y is None else np.asarray(y, dtype=np.float32)
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"{model.name} expects inputs {model.input_shape}, got {x.shape[1:]}")

    xv = yv = None
    if config.validation == "split":
        tr, va = split_holdout(len(x), config.val_fraction, config.seed)
        x, y, xv, yv = x[tr], y[tr], x[va], y[va]
    elif config.validation == "fixed" and validation_data is not None:
        xv = np.asarray(validation_data[0], dtype=np.float32)
        yv = xv if validation_data[1] is None else np.asarray(validation_data[1], dtype=np.float32)

    params = model.params()
    state = AdamState(lr=config.lr, decay=config.decay, clip_value=config.clip_value)
    rng = np.random.default_rng(config.seed)
    hist = History()
    n = len(x)
    n_batches = math.ceil(n / config.batch_size)

    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        total, correct, peak = 0.0, 0, 0.0
        for b in range(n_batches):
            idx = perm[b * config.batch_size:(b + 1) * config.batch_size]
            xb, yb = Tensor(x[idx]), y[idx]
            try:
                with Tape() as tape:
                    out = model.forward(xb, training=True, rng=rng)
                    loss = _loss(out, yb, config.loss)
                tape.backward(loss)
            except NumericError as exc:
                raise TrainingDiverged(f"{model.name}: {exc}", epoch, b) from exc
            value = float(loss.item())
            grads = [p.grad for p in params]
            if not math.isfinite(value) or not all(np.isfinite(g).all() for g in grads):
                raise TrainingDiverged(f"{model.name}: non-finite loss {value}", epoch, b)
            adam_step(params, grads, state)
            peak = max(peak, state.last_max_abs_grad)
            total += value * len(idx)
            if config.loss == "cce":
                correct += int((out.data.argmax(1) == yb.argmax(1)).sum())
        hist.train_loss.append(total / n)
        hist.max_abs_grad.append(peak)
        if config.loss == "cce":
            hist.train_acc.append(correct / n)
        if xv is not None:
            pred = predict(model, xv)
            if config.loss == "mse":
                hist.val_loss.append(float(np.mean((pred - yv) ** 2)))
            else:
                hist.val_loss.append(float(ops.categorical_cross_entropy(
                    Tensor(pred), yv, validate=False).item()))
                hist.val_acc.append(float(np.mean(pred.argmax(1) == yv.argmax(1))))
        log.info("%s epoch %d/%d loss %.5f%s", model.name, epoch, config.epochs,
                 hist.train_loss[-1], f" val {hist.val_loss[-1]:.5f}" if hist.val_loss else "")
    return hist


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def _batched(fn, x, batch_size):
    outs = [fn(Tensor(x[i:i + batch_size])).data for i in range(0, len(x), batch_size)]
    return np.concatenate(outs, axis=0)


def predict(model, x, batch_size=INFER_BATCH):
    x = np.asarray(x, dtype=np.float32)
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"{model.name} expects inputs {model.input_shape}, got {x.shape[1:]}")
    return _batched(model.forward, x, batch_size)


def encode(model, x, batch_size=INFER_BATCH):
    x = np.asarray(x, dtype=np.float32)
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"{model.name} expects inputs {model.input_shape}, got {x.shape[1:]}")
    return _batched(model.encode_tensor, x, batch_size)


def decode(model, z, batch_size=INFER_BATCH):
    z = np.asarray(z, dtype=np.float32)
    if z.shape[1:] != model.latent_shape:
        raise ValueError(f"{model.name} expects latents {model.latent_shape}, got {z.shape[1:]}")
    return _batched(model.decode_tensor, z, batch_size)


def evaluate_accuracy(classifier, data, labels, batch_size=INFER_BATCH):
    """Fraction of windows whose argmax class (ties -> lowest index) equals the label (1..6)."""
    labels = har.check_labels(labels)
    probs = predict(classifier, data, batch_size)
    return float(np.mean(probs.argmax(axis=1) + 1 == labels))


# ---------------------------------------------------------------------------
# weight files
# ---------------------------------------------------------------------------

WEIGHT_MAGIC = b"SCWT"
WEIGHT_VERSION = 1


class WeightFileError(ValueError):
    pass


def save_weights(model, path):
    """Write ``model``'s parameters; returns bytes written."""
    chunks = [WEIGHT_MAGIC, struct.pack("<HQ", WEIGHT_VERSION, model.fingerprint())]
    for p in model.params():
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    blob = b"".join(chunks)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    return len(blob)


def _read_weights(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != WEIGHT_MAGIC:
        raise WeightFileError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 14:
        raise WeightFileError(f"{path}: truncated header")
    version, fp = struct.unpack_from("<HQ", blob, 4)
    if version > WEIGHT_VERSION:
        raise WeightFileError(f"{path}: format version {version} is newer than {WEIGHT_VERSION}")
    pos = 14
    arrays = []
    while pos < len(blob):
        rank = blob[pos]
        pos += 1
        if pos + 4 * rank > len(blob):
            raise WeightFileError(f"{path}: truncated dims")
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        nbytes = 4 * int(np.prod(dims))
        if pos + nbytes > len(blob):
            raise WeightFileError(f"{path}: truncated payload")
        arrays.append(np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=pos)
                      .reshape(dims).astype(np.float32))
        pos += nbytes
    return fp, arrays


def load_weights(path, model=None):
    """Load a weight file into ``model`` (or a freshly built matching architecture).

    Without ``model`` the architecture is found among :data:`BUILDERS` by
    fingerprint. A fingerprint or parameter-shape mismatch is an error.
    """
    fp, arrays = _read_weights(path)
    if model is None:
        for build in BUILDERS.values():
            candidate = build()
            if candidate.fingerprint() == fp:
                model = candidate
                break
        else:
            raise WeightFileError(f"{path}: fingerprint {fp:#018x} matches no known architecture")
    elif model.fingerprint() != fp:
        raise WeightFileError(
            f"{path}: fingerprint {fp:#018x} does not match {model.name} ({model.fingerprint():#018x})"
        )
    params = model.params()
    if len(params) != len(arrays):
        raise WeightFileError(f"{path}: {len(arrays)} tensors for {len(params)} parameters")
    for p, a in zip(params, arrays):
        if p.shape != a.shape:
            raise WeightFileError(f"{path}: parameter shape {a.shape} != {p.shape}")
        p.data = a
    return model
