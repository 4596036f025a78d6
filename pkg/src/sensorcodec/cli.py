"""Command-line entry point: ``sensorcodec {ingest,train-classifier,run,report}``."""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import codec, har, models, pipeline, report

log = logging.getLogger("sensorcodec")


def cmd_ingest(args):
    train = har.load_windows(args.root, "train")
    test = har.load_windows(args.root, "test")
    params = har.normalize_fit(train)
    n_train, n_test = len(train), len(test)
    summary = {
        "root": str(har.resolve_root(args.root)),
        "n_train": n_train,
        "n_test": n_test,
        "n_total": n_train + n_test,
        "channels": list(har.CHANNELS),
        "train_bytes_f32": n_train * har.WINDOW * len(har.CHANNELS) * 4,
        "train_bytes_f64": n_train * har.WINDOW * len(har.CHANNELS) * 8,
        "normalization": params.to_dict(),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
    print(f"train windows: {n_train}")
    print(f"test windows:  {n_test}")
    print(f"total:         {n_train + n_test}")
    return 0


def cmd_train_classifier(args):
    data = pipeline.load_dataset(args.root, args.subsample, args.seed)
    model, hist, train_acc = pipeline.train_baseline_classifier(
        data, args.out, epochs=args.epochs, seed=args.seed)
    x_test = har.reshape_for_model(data.test.data, "sub4x32x9")
    test_acc = models.evaluate_accuracy(model, x_test, data.test.labels)
    hist_path = Path(args.out).with_suffix(".history.json")
    hist_path.write_text(json.dumps(
        {**hist.to_dict(), "train_accuracy": train_acc, "test_accuracy": test_acc}, indent=2) + "\n")
    print(f"train accuracy: {100 * train_acc:.2f}%")
    print(f"test accuracy:  {100 * test_acc:.2f}%")
    return 0


def cmd_run(args):
    cfg = pipeline.ExperimentConfig(
        exp_id=args.exp, root=args.root, out_dir=args.out, seed=args.seed, epochs=args.epochs,
        batch_size=args.batch_size, subsample=args.subsample, no_clip=args.no_clip,
        storage_dtype=args.storage_dtype, classifier_path=args.classifier,
        classifier_epochs=args.classifier_epochs,
    )
    r = pipeline.run_experiment(cfg)
    print(f"{r.name}")
    print(f"  reconstruction loss (MSE): {r.reconstruction_loss:.4f}")
    print(f"  accuracy on reconstructions: {r.accuracy_percent:.2f}%")
    print(f"  stored: {r.encoded_mb:.3f} MB of {r.original_mb:.3f} MB "
          f"({r.reduction_percent:.2f}% reduction)")
    return 0


def cmd_report(args):
    results = pipeline.collect_results(args.runs)
    if not results:
        raise pipeline.StageError("report", f"no result.json found under {args.runs}")
    report.emit_report(results, args.out, args.format)
    print(f"wrote {args.out} ({len(results)} experiments)")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="sensorcodec",
        description="Train autoencoders on inertial windows, store latents, validate reconstructions.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    root_help = f"UCI HAR dataset directory (default: ${har.ROOT_ENV})"

    s = sub.add_parser("ingest", help="parse and validate the dataset")
    s.add_argument("--root", help=root_help)
    s.add_argument("--out", help="write a JSON summary with normalisation parameters")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train-classifier", help="train the validation classifier")
    s.add_argument("--root", help=root_help)
    s.add_argument("--out", default="classifier.scwt", help="weight file to write")
    s.add_argument("--epochs", type=int)
    s.add_argument("--subsample", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train_classifier)

    s = sub.add_parser("run", help="run one experiment end to end")
    s.add_argument("--exp", type=int, choices=sorted(pipeline.EXPERIMENTS), required=True)
    s.add_argument("--root", help=root_help)
    s.add_argument("--out", required=True, help="output directory for artifacts")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, help="override autoencoder epochs")
    s.add_argument("--batch-size", type=int, help="override autoencoder batch size")
    s.add_argument("--subsample", type=int, help="use N train and N test windows")
    s.add_argument("--no-clip", action="store_true", help="disable gradient clipping")
    s.add_argument("--storage-dtype", choices=("f32", "f64"), default="f32")
    s.add_argument("--classifier", help="existing classifier weights (trained if missing)")
    s.add_argument("--classifier-epochs", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="tabulate finished runs")
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("md", "csv"), default="md")
    s.add_argument("--runs", nargs="+", default=["runs"],
                   help="run directories or result.json files")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except pipeline.StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2
    except (har.DatasetError, codec.CodecError, models.WeightFileError) as exc:
        print(f"error [{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
