"""Command-line front end.

Five subcommands: adapt (fit or extend a state snapshot from an embedding
stream), eval (score a labeled stream under a mode and protocol), simulate
(write a synthetic clean/corrupt dataset plus a matching head), diagnose
(shift decomposition reports for a clean/corrupt pair), and transfer
(cross-domain centroid matrices from a manifest).

Exit codes: 0 on success, 2 on input errors (unreadable or malformed files,
mismatched shapes), 3 on configuration errors (bad flag combinations,
impossible geometry).  Every JSON document embeds a config echo sufficient
to re-run the command.  Reports render matplotlib figures next to their
CSV/JSON files unless suppressed with --no-figures.
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adapter import AdapterState, EmbeddingBatch, UpdateMode, update, update_continual
from .diagnostics import alignment_table, decompose_shift, top_shift_histogram, transfer_matrix
from .errors import InvalidDimension, NeoError, WrongMode
from .geometry import (
    PairedDataset,
    apply_shift,
    build_etf,
    head_from_etf,
    random_class_shifts,
    random_global_shift,
    sample_clean,
    verify_nc,
    ShiftModel,
)
from .io import (
    AdapterSnapshot,
    load_head,
    load_manifest,
    load_state,
    read_embeddings,
    read_labels,
    save_head,
    save_state,
    write_embeddings,
    write_labels,
)
from .metrics import AdaptMode, Protocol, evaluate


class _ConfigError(Exception):
    """Flag combination that can never work; maps to exit code 3."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse default exits with 2
        self.exit(3, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="neo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"neo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: _Parser) -> None:
        p.add_argument("--format", choices=("json", "csv"), default="json",
                       help="report encoding (default json)")
        p.add_argument("--out", type=Path, default=None,
                       help="write the report here instead of stdout")

    p = sub.add_parser("adapt", help="fold an embedding stream into a state snapshot")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--mode", choices=("neo", "neo-continual", "neo-mse"), default="neo")
    p.add_argument("--alpha", type=float, default=0.01,
                   help="ema smoothing for neo-continual (default 0.01)")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--state-in", type=Path, default=None,
                   help="resume from this snapshot")
    p.add_argument("--state-out", type=Path, required=True)
    add_common(p)

    p = sub.add_parser("eval", help="score a labeled stream")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--head", type=Path, required=True,
                   help="weight matrix as a (C, d) embedding block")
    p.add_argument("--head-bias", type=Path, default=None,
                   help="bias as a (1, C) embedding block")
    p.add_argument("--mode", choices=("none", "neo", "neo-continual", "neo-mse"),
                   default="neo")
    p.add_argument("--protocol", choices=("online", "frozen"), default="online")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--bins", type=int, default=15, help="calibration bins (default 15)")
    p.add_argument("--state-in", type=Path, default=None)
    add_common(p)

    p = sub.add_parser("simulate", help="write a synthetic clean/corrupt dataset and head")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--per-class", type=int, default=64)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--within-std", type=float, default=0.05)
    p.add_argument("--shift-norm", type=float, default=3.0)
    p.add_argument("--class-shift-norm", type=float, default=0.0)
    p.add_argument("--residual-std", type=float, default=0.0)
    p.add_argument("--sparse-support", type=int, default=None,
                   help="restrict the global shift to this many seeded dimensions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("diagnose", help="decomposition reports for a clean/corrupt pair")
    p.add_argument("--clean", type=Path, required=True)
    p.add_argument("--corrupt", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--classes", type=int, default=None,
                   help="class count (default: 1 + max label)")
    p.add_argument("--figures", type=Path, default=None,
                   help="render figures into this directory")
    p.add_argument("--no-figures", action="store_true")
    add_common(p)

    p = sub.add_parser("transfer", help="cross-domain centroid matrices from a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--figures", type=Path, default=None)
    p.add_argument("--no-figures", action="store_true")
    add_common(p)

    return parser


# --- emission helpers -------------------------------------------------------

def _echo(args: argparse.Namespace, command: str) -> dict:
    skip = {"command", "func"}
    flags = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        flags[key.replace("_", "-")] = str(value) if isinstance(value, Path) else value
    return {"command": command, "flags": flags}


def _emit(doc_text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(doc_text)
        if not doc_text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(doc_text if doc_text.endswith("\n") else doc_text + "\n",
                       encoding="utf-8")


def _csv_text(header: list[str], rows: list[list[object]], comments: list[str] | None = None) -> str:
    buf = _stdio.StringIO()
    for line in comments or []:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _alignment_csv(table) -> str:
    return _csv_text(
        ["adjustment", "mean_cosine", "mean_norm_gap"],
        [[r.kind.value, f"{r.mean_cosine:.12g}", f"{r.mean_norm_gap:.12g}"] for r in table.rows],
    )


def _histogram_csv(hist) -> str:
    rows = [
        [rank + 1, int(hist.dimensions[rank]), int(hist.counts[rank]),
         f"{hist.cumulative_fraction[rank]:.12g}"]
        for rank in range(hist.dimensions.shape[0])
    ]
    return _csv_text(["rank", "dimension", "count", "cumulative_fraction"], rows)


def _matrix_csv(names: tuple[str, ...], matrix: np.ndarray) -> str:
    rows = [[names[i]] + [f"{matrix[i, j]:.12g}" for j in range(len(names))]
            for i in range(len(names))]
    return _csv_text(["domain", *names], rows)


def _alignment_dict(table) -> list[dict]:
    return [
        {"adjustment": r.kind.value, "mean_cosine": r.mean_cosine,
         "mean_norm_gap": r.mean_norm_gap}
        for r in table.rows
    ]


def _histogram_dict(hist) -> dict:
    return {
        "n": hist.n,
        "dimensions": [int(v) for v in hist.dimensions],
        "counts": [int(v) for v in hist.counts],
        "cumulative_fraction": [float(v) for v in hist.cumulative_fraction],
    }


# --- commands ----------------------------------------------------------------

def _load_state_arg(path: Path | None) -> AdapterState | None:
    return load_state(path).to_state() if path is not None else None


def cmd_adapt(args: argparse.Namespace) -> int:
    if args.batch_size < 1:
        raise _ConfigError(f"--batch-size must be >= 1, got {args.batch_size}")
    batch = read_embeddings(args.embeddings)
    mode = AdaptMode(args.mode)
    state = _load_state_arg(args.state_in)
    if state is None:
        if mode is AdaptMode.NEO_CONTINUAL:
            if not (0.0 < args.alpha <= 1.0):
                raise _ConfigError(f"--alpha must be in (0, 1], got {args.alpha}")
            state = AdapterState.initial(batch.dim, mode=UpdateMode.EMA, alpha=args.alpha)
        else:
            state = AdapterState.initial(batch.dim)
    update_fn = update_continual if mode is AdaptMode.NEO_CONTINUAL else update
    for start in range(0, batch.rows, args.batch_size):
        chunk = EmbeddingBatch(batch.data[start:start + args.batch_size])
        state = update_fn(state, chunk)
    args.state_out.parent.mkdir(parents=True, exist_ok=True)
    save_state(args.state_out, AdapterSnapshot.from_state(state))

    summary = {
        "n": state.count,
        "dim": state.dim,
        "mode": mode.value,
        "mean_norm": float(np.linalg.norm(state.mean)),
        "state_out": str(args.state_out),
    }
    if args.format == "json":
        _emit(json.dumps({**summary, "config": _echo(args, "adapt")}, indent=2), args.out)
    else:
        _emit(_csv_text(["key", "value"], [[k, v] for k, v in summary.items()]), args.out)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.batch_size < 1:
        raise _ConfigError(f"--batch-size must be >= 1, got {args.batch_size}")
    if args.bins < 1:
        raise _ConfigError(f"--bins must be >= 1, got {args.bins}")
    if not (0.0 < args.alpha <= 1.0):
        raise _ConfigError(f"--alpha must be in (0, 1], got {args.alpha}")
    batch = read_embeddings(args.embeddings)
    labels = read_labels(args.labels)
    head = load_head(args.head, args.head_bias)
    state = _load_state_arg(args.state_in)
    report = evaluate(
        head,
        batch,
        labels,
        mode=AdaptMode(args.mode),
        protocol=Protocol(args.protocol),
        state=state,
        batch_size=args.batch_size,
        n_bins=args.bins,
        alpha=args.alpha,
    )
    if args.format == "json":
        _emit(json.dumps({**report.to_dict(), "protocol": args.protocol,
                          "config": _echo(args, "eval")}, indent=2), args.out)
    else:
        comments = [
            f"n={report.n}", f"accuracy={report.accuracy:.12g}",
            f"ece={report.ece.ece:.12g}", f"mode={report.mode.value}",
            f"protocol={args.protocol}",
        ]
        rows = [
            [b + 1, f"{report.ece.bin_edges[b]:.12g}", f"{report.ece.bin_edges[b + 1]:.12g}",
             s.count, f"{s.mean_confidence:.12g}", f"{s.mean_accuracy:.12g}"]
            for b, s in enumerate(report.ece.per_bin)
        ]
        _emit(_csv_text(["bin", "lo", "hi", "count", "mean_confidence", "mean_accuracy"],
                        rows, comments), args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    for name in ("per_class",):
        if getattr(args, name) < 1:
            raise _ConfigError(f"--{name.replace('_', '-')} must be >= 1")
    if args.classes < 2:
        raise _ConfigError(f"--classes must be >= 2, got {args.classes}")
    if args.sparse_support is not None and not (1 <= args.sparse_support <= args.dim):
        raise _ConfigError("--sparse-support must be in [1, dim]")

    # Sub-seeds are fixed offsets of --seed so one flag pins every stream.
    geometry = build_etf(args.classes, args.dim, scale=args.scale, seed=args.seed)
    dataset = sample_clean(geometry, args.per_class, args.within_std, seed=args.seed + 1)
    support = None
    if args.sparse_support is not None:
        support = np.sort(
            np.random.default_rng(args.seed + 2).choice(
                args.dim, size=args.sparse_support, replace=False
            )
        )
    shift = ShiftModel(
        global_shift=random_global_shift(args.dim, args.shift_norm, seed=args.seed + 3,
                                         support=support),
        class_shifts=random_class_shifts(args.classes, args.dim, args.class_shift_norm,
                                         seed=args.seed + 4),
        residual_std=args.residual_std,
        seed=args.seed + 5,
        sparse_support=support,
    )
    dataset = apply_shift(dataset, shift)
    head = head_from_etf(geometry)

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(out / "clean.neoe", dataset.clean)
    write_embeddings(out / "corrupt.neoe", dataset.corrupt)
    write_labels(out / "labels.neol", dataset.labels)
    save_head(out / "head.neoe", head, out / "head.bias.neoe")

    report = verify_nc(geometry, dataset, head)
    params = {
        "classes": args.classes,
        "dim": args.dim,
        "per_class": args.per_class,
        "scale": args.scale,
        "within_std": args.within_std,
        "shift_norm": args.shift_norm,
        "class_shift_norm": args.class_shift_norm,
        "residual_std": args.residual_std,
        "sparse_support": None if support is None else [int(v) for v in support],
        "seed": args.seed,
        "files": {
            "clean": "clean.neoe",
            "corrupt": "corrupt.neoe",
            "labels": "labels.neol",
            "head": "head.neoe",
            "head_bias": "head.bias.neoe",
        },
        "collapse_check": report.to_dict(),
        "config": _echo(args, "simulate"),
    }
    (out / "params.json").write_text(json.dumps(params, indent=2) + "\n", encoding="utf-8")
    sys.stdout.write(f"wrote dataset to {out}\n")
    return 0


def _render_figures(args: argparse.Namespace, renderers: dict[str, object]) -> list[Path]:
    """Figure paths for a report command: --figures dir, else next to --out."""
    if args.no_figures:
        return []
    fig_dir = args.figures
    if fig_dir is None:
        if args.out is None:
            return []
        fig_dir = args.out if args.out.suffix == "" else args.out.parent
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, render in renderers.items():
        written.append(render(fig_dir / f"{stem}.png"))
    return written


def cmd_diagnose(args: argparse.Namespace) -> int:
    clean = read_embeddings(args.clean)
    corrupt = read_embeddings(args.corrupt)
    labels = read_labels(args.labels)
    num_classes = args.classes if args.classes is not None else int(labels.max()) + 1
    if num_classes < 2:
        raise _ConfigError(f"--classes must be >= 2, got {num_classes}")
    dataset = PairedDataset(clean=clean, corrupt=corrupt, labels=labels,
                            num_classes=num_classes)
    parts = decompose_shift(dataset)
    table = alignment_table(dataset)
    hist = top_shift_histogram(dataset)

    from .figures import save_alignment_figure, save_histogram_figure

    figures = _render_figures(args, {
        "alignment": lambda p: save_alignment_figure(table, p),
        "top_dims": lambda p: save_histogram_figure(hist, p),
    })

    summary = {
        "n": dataset.rows,
        "dim": dataset.dim,
        "classes": num_classes,
        "global_shift_norm": float(np.linalg.norm(parts.global_shift)),
        "mean_class_shift_norm": float(np.linalg.norm(parts.per_class, axis=1).mean()),
        "residual_rms": float(np.sqrt(np.mean(parts.residuals ** 2))),
        "missing_classes": list(parts.missing_classes),
    }
    if args.format == "json":
        doc = {
            "summary": summary,
            "alignment": _alignment_dict(table),
            "top_dims": _histogram_dict(hist),
            "figures": [str(p) for p in figures],
            "config": _echo(args, "diagnose"),
        }
        _emit(json.dumps(doc, indent=2), args.out if args.out and args.out.suffix else
              (args.out / "diagnosis.json" if args.out else None))
    else:
        alignment_text = _alignment_csv(table)
        histogram_text = _histogram_csv(hist)
        if args.out is None:
            sys.stdout.write("# alignment\n" + alignment_text)
            sys.stdout.write("# top_dims\n" + histogram_text)
        else:
            out_dir = args.out
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "alignment.csv").write_text(alignment_text, encoding="utf-8")
            (out_dir / "top_dims.csv").write_text(histogram_text, encoding="utf-8")
    return 0


def cmd_transfer(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if len(manifest.domains) < 2:
        raise _ConfigError(f"transfer needs >= 2 domains, manifest has {len(manifest.domains)}")
    head = load_head(manifest.head, manifest.head_bias)
    domains = [
        (d.name, read_embeddings(d.embeddings), read_labels(d.labels))
        for d in manifest.domains
    ]
    tm = transfer_matrix(domains, head)

    from .figures import save_transfer_figure

    figures = _render_figures(args, {"transfer": lambda p: save_transfer_figure(tm, p)})

    if args.format == "json":
        doc = {
            "domains": list(tm.domains),
            "centroid_cosine": [[float(v) for v in row] for row in tm.centroid_cosine],
            "accuracy_delta": [[float(v) for v in row] for row in tm.accuracy_delta],
            "figures": [str(p) for p in figures],
            "config": _echo(args, "transfer"),
        }
        _emit(json.dumps(doc, indent=2), args.out if args.out and args.out.suffix else
              (args.out / "transfer.json" if args.out else None))
    else:
        cosine_text = _matrix_csv(tm.domains, tm.centroid_cosine)
        delta_text = _matrix_csv(tm.domains, tm.accuracy_delta)
        if args.out is None:
            sys.stdout.write("# centroid_cosine\n" + cosine_text)
            sys.stdout.write("# accuracy_delta\n" + delta_text)
        else:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "centroid_cosine.csv").write_text(cosine_text, encoding="utf-8")
            (args.out / "accuracy_delta.csv").write_text(delta_text, encoding="utf-8")
    return 0


_COMMANDS = {
    "adapt": cmd_adapt,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "transfer": cmd_transfer,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (_ConfigError, InvalidDimension, WrongMode) as exc:
        print(f"neo {args.command}: configuration error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"neo {args.command}: configuration error: {exc}", file=sys.stderr)
        return 3
    except NeoError as exc:
        print(f"neo {args.command}: input error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"neo {args.command}: input error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    raise SystemExit(main())
