"""End-to-end experiment: train an autoencoder, store latents, reconstruct, classify."""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import codec, har, models
from .models import TrainConfig

log = logging.getLogger(__name__)

EXPERIMENTS = {
    1: ("Exp. 1: MLP deep autoencoder", models.build_mlp_ae,
        TrainConfig(lr=0.001, batch_size=128, epochs=20, loss="mse", validation="fixed")),
    2: ("Exp. 2: Convolutional deep autoencoder", models.build_conv_ae,
        TrainConfig(lr=0.001, batch_size=16, epochs=150, loss="mse", validation="fixed")),
    3: ("Exp. 3: LSTM autoencoder", models.build_lstm_ae,
        TrainConfig(lr=0.0001, clip_value=0.5, batch_size=128, epochs=300, loss="mse",
                    validation="fixed")),
    4: ("Exp. 4: Convolutional LSTM autoencoder", models.build_convlstm_ae,
        TrainConfig(lr=0.001, decay=1e-6, batch_size=16, epochs=100, loss="mse",
                    validation="split", val_fraction=0.2)),
}

CLASSIFIER_CONFIG = TrainConfig(lr=0.00001, batch_size=16, epochs=150, loss="cce",
                                validation="none")


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class AuditLog:
    """Names of the data tensors consumed by each pipeline stage."""

    def __init__(self):
        self.stages = []

    def consume(self, stage, *names):
        self.stages.append({"stage": stage, "consumed": list(names)})

    def consumers_of(self, name):
        return [s["stage"] for s in self.stages if name in s["consumed"]]

    def write(self, path):
        Path(path).write_text(json.dumps({"stages": self.stages}, indent=2) + "\n")


@dataclass
class ExperimentConfig:
    exp_id: int
    root: str | None = None
    out_dir: str = "runs"
    seed: int = 0
    epochs: int | None = None
    batch_size: int | None = None
    subsample: int | None = None
    no_clip: bool = False
    storage_dtype: str = "f32"
    classifier_path: str | None = None
    classifier_epochs: int | None = None

    def __post_init__(self):
        if self.exp_id not in EXPERIMENTS:
            raise ValueError(f"experiment id must be one of {sorted(EXPERIMENTS)}")
        if self.storage_dtype not in ("f32", "f64"):
            raise ValueError("storage dtype must be f32 or f64")

    def train_config(self):
        base = EXPERIMENTS[self.exp_id][2]
        cfg = asdict(base)
        cfg["seed"] = self.seed
        if self.epochs is not None:
            cfg["epochs"] = self.epochs
        if self.batch_size is not None:
            cfg["batch_size"] = self.batch_size
        if self.no_clip:
            cfg["clip_value"] = None
        return TrainConfig(**cfg)


@dataclass
class ExperimentResult:
    exp_id: int
    name: str
    reconstruction_loss: float
    accuracy_percent: float
    original_bytes: int
    encoded_bytes: int
    original_mb: float
    encoded_mb: float
    reduction_percent: float
    seconds: float
    seed: int
    latent_shape: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class Dataset:
    train: har.WindowBatch
    test: har.WindowBatch
    params: har.NormalizationParams


def _subsample(batch, k, rng):
    if k is None or k >= len(batch):
        return batch
    return batch.subset(np.sort(rng.choice(len(batch), size=k, replace=False)))


def load_dataset(root=None, subsample=None, seed=0):
    """Normalised train/test windows; the scaling is fit on the full training split."""
    train = har.load_windows(root, "train")
    test = har.load_windows(root, "test")
    params = har.normalize_fit(train)
    rng = np.random.default_rng(seed)
    train = _subsample(har.normalize_apply(train, params), subsample, rng)
    test = _subsample(har.normalize_apply(test, params), subsample, rng)
    return Dataset(train, test, params)


def train_baseline_classifier(dataset, out_path, epochs=None, seed=0):
    """Fit the classifier on normalised training windows and save its weights.

    Returns ``(model, history, train_accuracy)``; accuracy is measured in
    inference mode on the training windows.
    """
    cfg = asdict(CLASSIFIER_CONFIG)
    cfg["seed"] = seed
    if epochs is not None:
        cfg["epochs"] = epochs
    model = models.build_classifier(seed=seed)
    x = har.reshape_for_model(dataset.train.data, "sub4x32x9")
    hist = models.fit(model, x, har.one_hot(dataset.train.labels), TrainConfig(**cfg))
    models.save_weights(model, out_path)
    acc = models.evaluate_accuracy(model, x, dataset.train.labels)
    return model, hist, acc


def run_experiment(config, dataset=None):
    """Run one experiment end to end and write its artifacts under ``config.out_dir``."""
    t0 = time.perf_counter()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name, build, _ = EXPERIMENTS[config.exp_id]
    train_cfg = config.train_config()
    audit = AuditLog()
    stage = "load"
    try:
        if dataset is None:
            dataset = load_dataset(config.root, config.subsample, config.seed)
        audit.consume("load", "train_windows", "train_labels", "test_windows", "test_labels")

        stage = "train_autoencoder"
        ae = build(seed=config.seed)
        layout = ae.input_layout
        x_train = har.reshape_for_model(dataset.train.data, layout)
        x_test = har.reshape_for_model(dataset.test.data, layout)
        if train_cfg.validation == "fixed":
            audit.consume(stage, "train_windows", "test_windows")
            hist = models.fit(ae, x_train, config=train_cfg, validation_data=(x_test, None))
        else:
            audit.consume(stage, "train_windows")
            hist = models.fit(ae, x_train, config=train_cfg)
        models.save_weights(ae, out / "autoencoder.scwt")
        (out / "history.json").write_text(json.dumps(hist.to_dict(), indent=2) + "\n")

        stage = "encode"
        audit.consume(stage, "train_windows", "test_windows")
        z_train = models.encode(ae, x_train)
        z_test = models.encode(ae, x_test)

        stage = "serialize"
        fp = ae.fingerprint()
        baseline_path = out / "baseline_train.encf"
        latent_path = out / "latent_train.encf"
        codec.serialize_features(x_train, 0, baseline_path, config.storage_dtype)
        codec.serialize_features(z_train, fp, latent_path, config.storage_dtype)
        codec.serialize_features(z_test, fp, out / "latent_test.encf", config.storage_dtype)
        storage = codec.StorageReport.from_files(baseline_path, latent_path)

        stage = "deserialize"
        z_loaded, stored_fp = codec.deserialize_features(out / "latent_test.encf")
        if stored_fp != fp:
            raise ValueError(f"latents were produced by {stored_fp:#018x}, decoder is {fp:#018x}")

        stage = "decode"
        audit.consume(stage, "latent_test")
        recon = models.decode(ae, z_loaded)
        recon_windows = har.reshape_for_model(har.restore_windows(recon, layout), "sub4x32x9")

        stage = "classifier"
        clf_path = Path(config.classifier_path) if config.classifier_path else out / "classifier.scwt"
        if config.classifier_path and clf_path.is_file():
            clf = models.load_weights(clf_path, models.build_classifier())
        else:
            audit.consume(stage, "train_windows", "train_labels")
            clf, _, _ = train_baseline_classifier(dataset, clf_path, config.classifier_epochs,
                                                  config.seed)

        stage = "evaluate"
        audit.consume(stage, "reconstructed_test", "test_labels")
        accuracy = models.evaluate_accuracy(clf, recon_windows, dataset.test.labels)
    except models.TrainingDiverged as exc:
        raise StageError(stage, f"experiment {config.exp_id}: {exc}") from exc
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, f"experiment {config.exp_id}: {exc}") from exc

    result = ExperimentResult(
        exp_id=config.exp_id,
        name=name,
        reconstruction_loss=hist.val_loss[-1] if hist.val_loss else hist.train_loss[-1],
        accuracy_percent=100.0 * accuracy,
        original_bytes=storage.original_bytes,
        encoded_bytes=storage.encoded_bytes,
        original_mb=storage.original_mb,
        encoded_mb=storage.encoded_mb,
        reduction_percent=storage.reduction_percent,
        seconds=time.perf_counter() - t0,
        seed=config.seed,
        latent_shape=list(ae.latent_shape),
    )
    (out / "result.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    audit.write(out / "audit.json")
    log.info("%s: loss %.4f, accuracy %.2f%%, reduction %.2f%%", name,
             result.reconstruction_loss, result.accuracy_percent, result.reduction_percent)
    return result


def collect_results(paths):
    """Load ``result.json`` files from run directories (searched recursively)."""
    found = {}
    for p in paths:
        p = Path(p)
        files = [p] if p.is_file() else sorted(p.rglob("result.json"))
        for f in files:
            r = ExperimentResult.from_dict(json.loads(f.read_text()))
            found[r.exp_id] = r
    return [found[k] for k in sorted(found)]
