"""Table-style experiment reports (markdown or CSV)."""

import csv
import io
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .codec import compute_reduction

COLUMNS = (
    "Experiment",
    "Reconstruction Loss (MSE)",
    "Accuracy (%) on the classifier",
    "Storage Reduction (%)",
)
CSV_COLUMNS = ("experiment", "reconstruction_loss", "accuracy_percent", "storage_reduction_percent")

# Published reference rows: (id, name, loss, accuracy %, stored MB, reduction %)
REFERENCE_BASELINE_MB = 67.75
REFERENCE_ROWS = (
    (1, "Exp. 1: MLP deep autoencoder", 0.0038, 24.0, 1.84, 90.18),
    (2, "Exp. 2: Convolutional deep autoencoder", 0.0024, 95.28, 60.228, 11.18),
    (3, "Exp. 3: LSTM autoencoder", 0.0221, 52.01, 33.88, 49.99),
    (4, "Exp. 4: Convolutional LSTM autoencoder", 0.0593, 46.12, 18.738, 72.35),
)
REDUCTION_TOLERANCE = 0.02


def fmt_decimal(value, places):
    """Round half away from zero to ``places`` decimals."""
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP))


def reference_consistency(tolerance=REDUCTION_TOLERANCE):
    """Recompute each reference row's reduction from its stored size.

    Returns one dict per row with the recomputed and listed percentages and
    whether they agree within ``tolerance`` percentage points.
    """
    rows = []
    for exp_id, name, _, _, size_mb, listed in REFERENCE_ROWS:
        computed = compute_reduction(REFERENCE_BASELINE_MB, size_mb)
        rows.append({
            "exp_id": exp_id,
            "name": name,
            "stored_mb": size_mb,
            "computed": computed,
            "listed": listed,
            "consistent": abs(computed - listed) <= tolerance,
        })
    return rows


def _row(result):
    r = result if isinstance(result, dict) else result.to_dict()
    return r["exp_id"], (
        r["name"],
        fmt_decimal(r["reconstruction_loss"], 4),
        fmt_decimal(r["accuracy_percent"], 2),
        fmt_decimal(r["reduction_percent"], 2),
    )


def _rows(results):
    return [cells for _, cells in sorted((_row(r) for r in results), key=lambda t: t[0])]


def render_markdown(results):
    lines = ["| " + " | ".join(COLUMNS) + " |", "|" + "---|" * len(COLUMNS)]
    for cells in _rows(results):
        lines.append("| " + " | ".join(cells) + " |")
    notes = [c for c in reference_consistency() if not c["consistent"]]
    if notes:
        lines.append("")
        lines.append("Notes:")
        for i, c in enumerate(notes, 1):
            lines.append(
                f"{i}. Reference row \"{c['name']}\" lists {c['stored_mb']} MB of "
                f"{REFERENCE_BASELINE_MB} MB, which computes to {fmt_decimal(c['computed'], 2)}% "
                f"reduction, not the listed {fmt_decimal(c['listed'], 2)}%."
            )
    return "\n".join(lines) + "\n"


def render_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(_rows(results))
    return buf.getvalue()


def emit_report(results, path, fmt="md"):
    if fmt in ("md", "markdown"):
        text = render_markdown(results)
    elif fmt == "csv":
        text = render_csv(results)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.write_text(text)
    return path


def read_report_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "name": r["experiment"],
            "reconstruction_loss": float(r["reconstruction_loss"]),
            "accuracy_percent": float(r["accuracy_percent"]),
            "reduction_percent": float(r["storage_reduction_percent"]),
        }
        for r in rows
    ]
