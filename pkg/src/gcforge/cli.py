"""Command-line front end: each subcommand is one pipeline stage, stages
talk only through the documented file formats, and every run is
deterministic given its flags.

Exit codes: 0 success, 1 verification failure, 2 usage or data errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from . import net
from .graph import (
    GraphError,
    dump_edge_list,
    infer_knn_graph,
    is_connected,
    load_coordinates,
    load_edge_list,
)
from .layer import (
    SchemeError,
    build_scheme,
    check_scheme_against_graph,
    export_scheme,
    import_scheme,
    verify_grid_equivalence,
)
from .propagation import (
    PlacementFormatError,
    init_kernel,
    most_central_vertex,
    parse_placements,
    placement_report,
    propagate,
    serialize_placements,
)
from .translations import TranslationError


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated invocation: the subcommand plus its checked inputs."""

    subcommand: str
    args: argparse.Namespace

    @staticmethod
    def from_args(args: argparse.Namespace) -> "RunConfig":
        for name in ("coords", "graph", "placements", "scheme", "train_data", "test_data"):
            p = getattr(args, name, None)
            if p is not None and not Path(p).exists():
                raise UsageError(f"input file not found: {p}")
        for name, lo in (("k", 1), ("radius", 0), ("epochs", 0), ("batch", 1),
                         ("classes", 2), ("samples_per_class", 1), ("hidden", 1),
                         ("channels", 1), ("workers", 1)):
            v = getattr(args, name, None)
            if v is not None and v < lo:
                raise UsageError(f"--{name.replace('_', '-')} must be >= {lo}, got {v}")
        for name in ("alpha", "beta", "sigma", "lr"):
            v = getattr(args, name, None)
            if v is not None and v < 0:
                raise UsageError(f"--{name} must be nonnegative, got {v}")
        if getattr(args, "dropout", None) is not None and not (0.0 <= args.dropout < 1.0):
            raise UsageError(f"--dropout must be in [0, 1), got {args.dropout}")
        return RunConfig(subcommand=args.command, args=args)


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def cmd_infer_graph(args) -> int:
    coords = load_coordinates(_read(args.coords))
    g = infer_knn_graph(coords, args.k)
    _write(args.out, dump_edge_list(g))
    print(f"wrote {args.out}: {g.n} vertices, {len(g.edges)} edges")
    return 0


def cmd_translate(args) -> int:
    g = load_edge_list(_read(args.graph))
    if not is_connected(g):
        raise UsageError("input graph is not connected")
    seed = args.seed_vertex if args.seed_vertex is not None else most_central_vertex(g)
    if not (0 <= seed < g.n):
        raise UsageError(f"--seed-vertex {seed} out of range 0..{g.n - 1}")
    kernel = init_kernel(g, seed, radius=args.radius)
    pm = propagate(g, kernel, alpha=args.alpha, beta=args.beta, workers=args.workers)
    _write(args.out, serialize_placements(pm))
    report = placement_report(pm)
    print(f"wrote {args.out}: seed vertex {seed}, kernel size {pm.k}")
    print(report.render(), end="")
    return 0


def cmd_build_layer(args) -> int:
    pm = parse_placements(_read(args.placements))
    scheme = build_scheme(pm)
    _write(args.out, export_scheme(scheme, transpose=args.transpose))
    kind = "transposed " if args.transpose else ""
    print(f"wrote {args.out}: {kind}scheme with {len(scheme.triples)} wires, K={scheme.k}")
    return 0


def cmd_verify_grid(args) -> int:
    scheme = import_scheme(_read(args.scheme))
    report = verify_grid_equivalence(scheme, args.rows, args.cols)
    print(report.render(), end="")
    return 0 if report.passed else 1


def cmd_make_dataset(args) -> int:
    g = load_edge_list(_read(args.graph))
    pm = parse_placements(_read(args.placements))
    if pm.n != g.n:
        raise UsageError(f"placements cover n={pm.n} but graph has n={g.n}")
    # templates are seeded separately so train and test splits (different
    # --seed) still describe the same classes
    templates = net.make_templates(
        args.classes, pm.k, seed=args.template_seed, amplitude=args.amplitude
    )
    ds = net.make_translated_dataset(
        g, pm, templates, args.samples_per_class, sigma=args.sigma, seed=args.seed
    )
    _write(args.out, net.dataset_to_csv(ds))
    print(f"wrote {args.out}: {len(ds)} samples, {args.classes} classes")
    return 0


def cmd_train(args) -> int:
    scheme = import_scheme(_read(args.scheme))
    if args.graph is not None:
        g = load_edge_list(_read(args.graph))
        check_scheme_against_graph(scheme, g)
    train_ds = net.dataset_from_csv(_read(args.train_data), expect_n=scheme.n)
    test_ds = net.dataset_from_csv(_read(args.test_data), expect_n=scheme.n)
    classes = int(max(train_ds.labels.max(), test_ds.labels.max())) + 1
    if classes < 2:
        raise UsageError("need at least 2 classes to train")
    model = net.build_conv_model(
        scheme,
        hidden=args.hidden,
        classes=classes,
        channels=args.channels,
        dropout=args.dropout,
        seed=args.seed,
    )
    config = net.TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed)
    history = net.train(model, train_ds, test_ds, config)
    _write(args.metrics_out, history.to_csv())
    if args.checkpoint_out is not None:
        _write(args.checkpoint_out, net.save_checkpoint(model))
    final = history.records[-1] if history.records else None
    if final is not None:
        print(
            f"epoch {final.epoch}: train_acc={final.train_accuracy:.3f} "
            f"test_acc={final.test_accuracy:.3f}"
        )
    print(f"wrote {args.metrics_out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcforge",
        description="Build and train graph convolutional layers by translating a weight kernel.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer-graph", help="k-NN graph from vertex coordinates")
    p.add_argument("--coords", required=True, help="coordinate CSV, one row per vertex")
    p.add_argument("--k", type=int, default=6, help="neighbors per vertex (default 6)")
    p.add_argument("--out", required=True, help="edge-list output path")
    p.set_defaults(func=cmd_infer_graph)

    p = sub.add_parser("translate", help="propagate a kernel from the most central vertex")
    p.add_argument("--graph", required=True, help="edge-list input path")
    p.add_argument("--radius", type=int, default=1, help="kernel radius in hops (default 1)")
    p.add_argument("--alpha", type=float, default=1.0, help="cost per lost slot (default 1)")
    p.add_argument("--beta", type=float, default=1.0, help="cost per broken pair (default 1)")
    p.add_argument("--seed-vertex", type=int, default=None,
                   help="override the centrality-chosen seed vertex")
    p.add_argument("--workers", type=int, default=1,
                   help="frontier evaluation workers (GCF_THREADS caps this)")
    p.add_argument("--out", required=True, help="placement-map output path")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("build-layer", help="weight-sharing scheme from placements")
    p.add_argument("--placements", required=True, help="placement-map input path")
    p.add_argument("--transpose", action="store_true",
                   help="emit the kernel-centered-at-input convention")
    p.add_argument("--out", required=True, help="scheme output path")
    p.set_defaults(func=cmd_build_layer)

    p = sub.add_parser("verify-grid", help="check a scheme equals 2D convolution on a grid")
    p.add_argument("--scheme", required=True, help="scheme input path")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.set_defaults(func=cmd_verify_grid)

    p = sub.add_parser("make-dataset", help="synthetic translated-pattern dataset")
    p.add_argument("--graph", required=True, help="edge-list input path")
    p.add_argument("--placements", required=True, help="placement-map input path")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--samples-per-class", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.1, help="noise level (default 0.1)")
    p.add_argument("--amplitude", type=float, default=1.0, help="template norm (default 1)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--template-seed", type=int, default=0,
                   help="class template seed, shared across splits (default 0)")
    p.add_argument("--out", required=True, help="dataset CSV output path")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="train the conv model on dataset files")
    p.add_argument("--scheme", required=True, help="scheme input path")
    p.add_argument("--graph", default=None, help="optional edge list to validate the scheme")
    p.add_argument("--train-data", required=True, help="training dataset CSV")
    p.add_argument("--test-data", required=True, help="test dataset CSV")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics-out", required=True, help="per-epoch metrics CSV output")
    p.add_argument("--checkpoint-out", default=None, help="optional parameter dump output")
    p.set_defaults(func=cmd_train)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        RunConfig.from_args(args)
        return args.func(args)
    except (
        UsageError,
        GraphError,
        TranslationError,
        SchemeError,
        PlacementFormatError,
        net.NetError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
