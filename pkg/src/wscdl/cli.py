"""Command-line interface: generate, train, predict, eval, plot.

Exit codes:
  0  success
  2  usage error (bad flags; argparse)
  3  invalid configuration (hyperparameter out of range, bad config file)
  4  data error (unreadable/ill-formed files, dimension mismatch, empty CSV)
  5  numerical failure (non-finite values during training)
  6  degenerate evaluation (single-class labels; AUC undefined)

Every output file is written atomically (temp file + rename).  The eval and
train report paths also render matplotlib figures next to the CSV output;
``plot`` emits self-contained SVG polyline charts.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile
from xml.sax.saxutils import escape

import numpy as np

from wscdl import data as data_mod
from wscdl import metrics as metrics_mod
from wscdl import train as train_mod
from wscdl.core import ConfigError, DataError, Hyperparams
from wscdl.train import TrainingError

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5
EXIT_DEGENERATE = 6

_EXIT_DOC = """exit codes:
  0  success
  2  usage error (unknown or malformed flags)
  3  invalid configuration value
  4  data error (bad file, dimension mismatch, empty input)
  5  numerical failure during training
  6  degenerate evaluation input (AUC undefined)
"""


# ---------------------------------------------------------------------------
# atomic file helpers


def _atomic_write(path, write_fn, mode="w"):
    """Write via a temp file in the destination directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_file_output(path, write_to_path):
    """Same idea for writers that need a path instead of a handle."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    os.close(fd)
    try:
        write_to_path(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header, rows):
    def go(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    _atomic_write(path, go)


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"{path} has no data rows")
    try:
        values = np.array([[float(v) for v in row] for row in body])
    except ValueError as exc:
        raise DataError(f"{path} contains non-numeric data: {exc}") from exc
    if values.ndim != 2 or values.shape[1] < 2:
        raise DataError(f"{path} needs at least two columns")
    return header, values


# ---------------------------------------------------------------------------
# matplotlib rendering (report paths)


def _render_lines_png(path, series, xlabel, ylabel, title):
    """series: list of (label, x array, y array)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label, x, y in series:
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1 or series[0][0]:
        ax.legend()
    fig.tight_layout()
    _atomic_file_output(path, lambda p: fig.savefig(p, format="png"))
    plt.close(fig)


# ---------------------------------------------------------------------------
# hand-rolled SVG polyline charts


_SVG_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def render_svg(header, values) -> str:
    """Standalone SVG 1.1 line chart: column 0 is x, the rest are series."""
    width, height = 640, 480
    ml, mr, mt, mb = 70, 20, 30, 50
    px, py = width - ml - mr, height - mt - mb
    x = values[:, 0]
    ys = values[:, 1:]
    x_lo, x_hi = float(x.min()), float(x.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(v):
        return ml + (v - x_lo) / x_span * px

    def sy(v):
        return mt + py - (v - y_lo) / y_span * py

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        # axes
        f'<line x1="{ml}" y1="{mt + py}" x2="{ml + px}" y2="{mt + py}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + py}" '
        'stroke="black" stroke-width="1"/>',
    ]
    # min/max tick labels
    parts.append(
        f'<text x="{ml}" y="{height - 30}" font-size="12" '
        f'text-anchor="middle">{x_lo:g}</text>'
    )
    parts.append(
        f'<text x="{ml + px}" y="{height - 30}" font-size="12" '
        f'text-anchor="middle">{x_hi:g}</text>'
    )
    parts.append(
        f'<text x="{ml - 6}" y="{mt + py}" font-size="12" '
        f'text-anchor="end">{y_lo:g}</text>'
    )
    parts.append(
        f'<text x="{ml - 6}" y="{mt + 10}" font-size="12" '
        f'text-anchor="end">{y_hi:g}</text>'
    )
    # axis labels from the CSV header
    xlabel = escape(header[0]) if header else "x"
    parts.append(
        f'<text x="{ml + px / 2}" y="{height - 8}" font-size="14" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    for j in range(ys.shape[1]):
        color = _SVG_COLORS[j % len(_SVG_COLORS)]
        pts = " ".join(
            f"{sx(float(xv)):.2f},{sy(float(yv)):.2f}"
            for xv, yv in zip(x, ys[:, j])
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{pts}"/>'
        )
        label = escape(header[j + 1]) if len(header) > j + 1 else f"series {j}"
        parts.append(
            f'<text x="{ml + 8}" y="{mt + 14 + 16 * j}" font-size="12" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    spec = data_mod.SynthSpec(
        seed=args.seed, snr_db=args.snr_db, signal_len=args.length
    )
    train, test, banks = data_mod.generate_synthetic(spec)
    _atomic_file_output(args.out_train, lambda p: data_mod.write_dataset(p, train))
    _atomic_file_output(args.out_test, lambda p: data_mod.write_dataset(p, test))
    if args.out_features:
        _atomic_file_output(args.out_features, lambda p: _save_npy(p, banks))
    print(f"wrote {len(train)} train bags to {args.out_train}, "
          f"{len(test)} test bags to {args.out_test}")
    return EXIT_OK


def _save_npy(path, arr):
    with open(path, "wb") as fh:
        np.save(fh, arr)


def cmd_train(args):
    bags = data_mod.read_dataset(args.data)
    hp = Hyperparams(
        lam=args.lam, eta=args.eta, mu=args.mu, delta=args.delta, rho=args.rho,
        eps=args.tol, window=args.window, k0=args.k0, kc=_parse_kc(args.kc),
        epochs=args.epochs, seed=args.seed,
    )
    trace_rows = []

    def sink(epoch, loss, elapsed):
        trace_rows.append((epoch, loss))
        print(f"epoch {epoch}: loss {loss:.6g} ({elapsed:.1f}s)", flush=True)

    state = train_mod.train(bags, hp, sink=sink, threads=args.threads)
    _atomic_file_output(
        args.model_out,
        lambda p: data_mod.write_model(p, state.model, state.projection, hp),
    )
    if args.loss_out:
        _write_csv(args.loss_out, ["epoch", "loss"], trace_rows)
        _render_lines_png(
            _sibling_png(args.loss_out),
            [("loss", np.array([r[0] for r in trace_rows]),
              np.array([r[1] for r in trace_rows]))],
            "epoch", "objective", "training loss",
        )
    return EXIT_OK


def _sibling_png(csv_path):
    base, _ = os.path.splitext(csv_path)
    return base + ".png"


def _parse_kc(text):
    parts = [p for p in str(text).split(",") if p]
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad --kc value {text!r}; expected ints") from None


def cmd_predict(args):
    model, projection, hp = data_mod.read_model(args.model)
    bags = data_mod.read_dataset(args.data)
    scores = train_mod.predict_bags(
        bags, model, projection, hp, encode_epochs=20, threads=args.threads,
        pooling=args.pooling,
    )
    header = [f"class_{c}" for c in range(scores.shape[1])]
    _write_csv(args.scores_out, header,
               [[f"{v:.17g}" for v in row] for row in scores])
    return EXIT_OK


def _parse_threshold(text):
    if text == "dynamic":
        return None
    if text.startswith("fixed:"):
        try:
            return float(text[len("fixed:"):])
        except ValueError:
            pass
    raise ConfigError(f"bad --threshold {text!r}; use dynamic or fixed:<v>")


def cmd_eval(args):
    fixed = _parse_threshold(args.threshold)
    _, scores = _read_csv(args.scores)
    labels = np.stack([b.labels for b in data_mod.read_dataset(args.labels_from)])
    if scores.shape != labels.shape:
        raise DataError(
            f"scores {scores.shape} and labels {labels.shape} do not match"
        )
    threshold = fixed if fixed is not None else metrics_mod.dynamic_threshold(scores)
    acc, prec, rec, f1 = metrics_mod.binary_metrics(scores, labels, threshold)
    subset = metrics_mod.subset_accuracy(scores, labels, threshold)
    degenerate = False
    try:
        roc_curve, pr_curve, roc_auc, pr_auc = metrics_mod.roc_pr(scores, labels)
    except DataError:
        degenerate = True
        roc_curve = pr_curve = None
        roc_auc = pr_auc = None

    rows = [
        ("threshold", f"{threshold:.17g}"),
        ("accuracy", f"{acc:.17g}"),
        ("precision", f"{prec:.17g}"),
        ("recall", f"{rec:.17g}"),
        ("f1", f"{f1:.17g}"),
        ("subset_accuracy", f"{subset:.17g}"),
        ("roc_auc", "" if roc_auc is None else f"{roc_auc:.17g}"),
        ("pr_auc", "" if pr_auc is None else f"{pr_auc:.17g}"),
    ]
    _write_csv(args.report_out, ["metric", "value"], rows)
    if not degenerate:
        if args.roc_out:
            _write_csv(args.roc_out, ["fpr", "tpr"],
                       [[f"{a:.17g}", f"{b:.17g}"] for a, b in roc_curve])
            _render_lines_png(
                _sibling_png(args.roc_out),
                [(f"AUC={roc_auc:.4f}", roc_curve[:, 0], roc_curve[:, 1])],
                "false positive rate", "true positive rate", "ROC",
            )
        if args.pr_out:
            _write_csv(args.pr_out, ["recall", "precision"],
                       [[f"{a:.17g}", f"{b:.17g}"] for a, b in pr_curve])
            _render_lines_png(
                _sibling_png(args.pr_out),
                [(f"AUC={pr_auc:.4f}", pr_curve[:, 0], pr_curve[:, 1])],
                "recall", "precision", "precision-recall",
            )
    for name, value in rows:
        print(f"{name}: {value if value else 'n/a'}")
    if degenerate:
        print("warning: labels contain a single class; AUC is undefined",
              file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_plot(args):
    sources = [(args.loss, "loss"), (args.roc, "roc"), (args.pr, "pr")]
    given = [(path, kind) for path, kind in sources if path]
    if len(given) != 1:
        raise ConfigError("give exactly one of --loss, --roc, --pr")
    path, _kind = given[0]
    header, values = _read_csv(path)
    svg = render_svg(header, values)
    _atomic_write(args.out, lambda fh: fh.write(svg))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _load_config(path):
    values = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path}:{lineno}: expected key=value, got {line!r}"
                    )
                key, value = line.split("=", 1)
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wscdl",
        description="Weakly supervised convolutional dictionary learning.",
        epilog=_EXIT_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write the synthetic benchmark")
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--out-features", default=None,
                   help="optional .npy feature-bank output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--length", type=int, default=1600)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit dictionaries on a dataset file")
    p.add_argument("--config", default=None,
                   help="key=value file; flags given explicitly win")
    p.add_argument("--data", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--loss-out", default=None)
    p.add_argument("--k0", type=int, default=5)
    p.add_argument("--kc", default="8", help="per-class atom count, or comma list")
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.9)
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score bags with a trained model")
    p.add_argument("--config", default=None,
                   help="key=value file; flags given explicitly win")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scores-out", required=True)
    p.add_argument("--pooling", choices=["avg", "max", "rectified"],
                   default="rectified",
                   help="activation pooling used for scoring")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="metrics and curves from a scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels-from", required=True,
                   help="dataset file supplying the true labels")
    p.add_argument("--threshold", default="dynamic",
                   help="dynamic or fixed:<value>")
    p.add_argument("--report-out", required=True)
    p.add_argument("--roc-out", default=None)
    p.add_argument("--pr-out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render a CSV as an SVG line chart")
    p.add_argument("--loss", default=None, help="loss CSV input")
    p.add_argument("--roc", default=None, help="ROC CSV input")
    p.add_argument("--pr", default=None, help="PR CSV input")
    p.add_argument("--out", required=True, help="SVG output path")
    p.set_defaults(func=cmd_plot)

    return parser


_CONFIG_TYPES = {
    "k0": int, "window": int, "epochs": int, "seed": int, "threads": int,
    "lam": float, "eta": float, "mu": float, "delta": float, "rho": float,
    "tol": float, "kc": str, "pooling": str,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # pre-scan for --config so its values become defaults (flags win)
        if "--config" in argv:
            cfg_path = argv[argv.index("--config") + 1]
            raw = _load_config(cfg_path)
            typed = {}
            for key, value in raw.items():
                if key == "lambda":
                    key = "lam"
                if key not in _CONFIG_TYPES:
                    raise ConfigError(f"unknown config key {key!r}")
                try:
                    typed[key] = _CONFIG_TYPES[key](value)
                except ValueError:
                    raise ConfigError(
                        f"bad value for config key {key!r}: {value!r}"
                    ) from None
            if typed.get("pooling") not in (None, "avg", "max", "rectified"):
                raise ConfigError(
                    f"bad value for config key 'pooling': {typed['pooling']!r}"
                )
            for sub_action in parser._subparsers._group_actions[0].choices.values():
                sub_action.set_defaults(
                    **{k: v for k, v in typed.items()
                       if k in {a.dest for a in sub_action._actions}}
                )
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
