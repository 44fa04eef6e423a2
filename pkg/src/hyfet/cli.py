"""Command-line entry point.

Subcommands: ``synth`` (generate a labeled corpus), ``stats`` (corpus
summary), ``build-graph`` (construct and save the mention graph),
``train`` (fit a model, writing a checkpoint and metrics log), ``eval``
(metrics and optional predictions from a checkpoint), and ``report``
(analysis tables as CSV plus rendered PNG figures).

Exit codes: 0 on success, 1 on runtime failure (e.g. divergent
training), 2 on usage or configuration errors (bad flags, missing or
malformed input files, inconsistent checkpoint/corpus combinations).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from hyfet.config import Config, ConfigError, dump_config, load_config
from hyfet.corpus import (
    Corpus,
    CorpusError,
    SynthSpec,
    bifurcate,
    load_corpus,
    load_hierarchy,
    save_corpus,
    save_hierarchy,
    synth_corpus,
    synth_hierarchy,
)
from hyfet.graphbuild import GraphError, GraphVariant
from hyfet.manifolds import ManifoldError, Model
from hyfet.pipeline import Pipeline, PipelineError
from hyfet.report import ReportError, render_report
from hyfet.trainer import TrainingError, load_checkpoint
from hyfet.typer import ScoreSpace, save_predictions

USAGE_ERRORS = (
    ConfigError,
    CorpusError,
    GraphError,
    PipelineError,
    ReportError,
    FileNotFoundError,
    IsADirectoryError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyfet",
        description="Two-stage fine-grained entity typing with hyperbolic label smoothing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_corpus_args(p, dev_test=True):
        p.add_argument("--hierarchy", required=True, help="type hierarchy file")
        p.add_argument("--train", required=True, help="training corpus (JSON lines)")
        if dev_test:
            p.add_argument("--dev", help="development corpus")
            p.add_argument("--test", help="test corpus")

    def add_override_args(p):
        p.add_argument("--config", help="configuration file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override trainer.seed")
        p.add_argument(
            "--manifold", choices=[m.value for m in Model], help="override manifold.model"
        )
        p.add_argument(
            "--graph-variant",
            choices=[v.value for v in GraphVariant],
            help="override graph.variant",
        )
        p.add_argument(
            "--score-space",
            choices=[s.value for s in ScoreSpace],
            help="override score.space",
        )
        p.add_argument("--layers", type=int, help="override trainer.layers")
        p.add_argument("--delta", type=float, help="override graph.delta")
        p.add_argument("--epochs", type=int, help="override trainer.epochs")

    p = sub.add_parser("synth", help="generate a synthetic distantly-supervised corpus")
    p.add_argument("--out-dir", required=True, help="directory for hierarchy + split files")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--branching", type=int, default=2)
    p.add_argument("--train-mentions", type=int, default=2000)
    p.add_argument("--dev-mentions", type=int, default=200)
    p.add_argument("--test-mentions", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.3, help="noisy fraction of train mentions")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="summarize a corpus")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--corpus", required=True, action="append", help="repeatable")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("build-graph", help="construct the mention graph and save it")
    add_corpus_args(p)
    add_override_args(p)
    p.add_argument("--out", required=True, help="edge-list output file")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train a typing model")
    add_corpus_args(p)
    add_override_args(p)
    p.add_argument("--checkpoint", required=True, help="model output file")
    p.add_argument("--log", help="per-epoch metrics CSV")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    add_corpus_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", help="train, dev, or test (default test)")
    p.add_argument("--predictions", help="write JSON-lines predictions here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="analysis tables (CSV) and figures (PNG)")
    add_corpus_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--log", help="training log to render as curves")
    p.set_defaults(func=cmd_report)

    return parser


def resolved_config(args) -> Config:
    config = load_config(args.config) if args.config else Config()
    if args.manifold is not None:
        config = config.replace("manifold", model=Model(args.manifold))
    if args.graph_variant is not None:
        config = config.replace("graph", variant=GraphVariant(args.graph_variant))
    if args.delta is not None:
        config = config.replace("graph", delta=args.delta)
    if args.score_space is not None:
        config = config.replace("score", space=ScoreSpace(args.score_space))
    trainer_kw = {}
    for flag, key in (("seed", "seed"), ("layers", "layers"), ("epochs", "epochs")):
        value = getattr(args, flag)
        if value is not None:
            trainer_kw[key] = value
    if trainer_kw:
        config = config.replace("trainer", **trainer_kw)
    return config


def load_splits(args) -> tuple[Corpus, Corpus | None, Corpus | None]:
    hierarchy = load_hierarchy(args.hierarchy)
    train = load_corpus(args.train, hierarchy)
    dev = load_corpus(args.dev, hierarchy) if getattr(args, "dev", None) else None
    test = load_corpus(args.test, hierarchy) if getattr(args, "test", None) else None
    return train, dev, test


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = dict(depth=args.depth, branching=args.branching)
    splits = {
        "train": SynthSpec(
            n_mentions=args.train_mentions, noise_rate=args.noise, seed=args.seed, **base
        ),
        "dev": SynthSpec(
            n_mentions=args.dev_mentions, noise_rate=0.0, seed=args.seed + 1, **base
        ),
        "test": SynthSpec(
            n_mentions=args.test_mentions, noise_rate=0.0, seed=args.seed + 2, **base
        ),
    }
    hierarchy = synth_hierarchy(args.depth, args.branching)
    for name, spec in splits.items():
        if spec.n_mentions == 0:
            continue
        corpus = synth_corpus(spec)
        save_corpus(corpus, out / f"{name}.jsonl")
        print(f"wrote {out / f'{name}.jsonl'} ({len(corpus)} mentions)")
    save_hierarchy(hierarchy, out / "hierarchy.txt")
    print(f"wrote {out / 'hierarchy.txt'} ({len(hierarchy)} types)")
    return 0


def cmd_stats(args) -> int:
    hierarchy = load_hierarchy(args.hierarchy)
    print(f"hierarchy: {len(hierarchy)} types, "
          f"max depth {max(hierarchy.depth(t) for t in range(len(hierarchy)))}")
    for path in args.corpus:
        corpus = load_corpus(path, hierarchy)
        clean, noisy = bifurcate(corpus.records, hierarchy)
        frac = 100.0 * len(clean) / len(corpus) if len(corpus) else 0.0
        print(f"{path}: {len(corpus.sentences)} sentences, {len(corpus)} mentions, "
              f"{len(clean)} clean ({frac:.2f}%), {len(noisy)} noisy")
    return 0


def cmd_build_graph(args) -> int:
    config = resolved_config(args)
    train, dev, test = load_splits(args)
    pipeline = Pipeline(config, train, dev, test)
    pipeline.graph.save(args.out)
    print(f"wrote {args.out}: {pipeline.graph.n} mentions, "
          f"{pipeline.graph.n_edges} edges ({pipeline.graph.variant.value}, "
          f"delta={pipeline.graph.delta})")
    return 0


def cmd_train(args) -> int:
    config = resolved_config(args)
    print(dump_config(config).rstrip())
    train, dev, test = load_splits(args)
    pipeline = Pipeline(config, train, dev, test)
    resume = load_checkpoint(args.resume) if args.resume else None
    history = pipeline.train(
        log_path=args.log, checkpoint_path=args.checkpoint, resume=resume
    )
    print(f"graph: {pipeline.graph.n} mentions, {pipeline.graph.n_edges} edges")
    for stats in history:
        print(f"epoch {stats.epoch}: loss {stats.loss:.4f} "
              f"strict {stats.metrics.strict:.4f} macro {stats.metrics.macro_f1:.4f} "
              f"micro {stats.metrics.micro_f1:.4f}")
    print(f"wrote {args.checkpoint}")
    if args.log:
        print(f"wrote {args.log}")
    return 0


def cmd_eval(args) -> int:
    train, dev, test = load_splits(args)
    pipeline, _ = Pipeline.from_checkpoint(args.checkpoint, train, dev, test)
    keys, gold, pred = pipeline.predictions(args.split)
    metrics = pipeline.evaluate(args.split)
    print(f"split {args.split}: {len(keys)} mentions")
    print(f"strict   {metrics.strict:.4f}")
    print(f"macro_f1 {metrics.macro_f1:.4f}")
    print(f"micro_f1 {metrics.micro_f1:.4f}")
    if args.predictions:
        save_predictions(args.predictions, keys, gold, pred, pipeline.hierarchy)
        print(f"wrote {args.predictions}")
    return 0


def cmd_report(args) -> int:
    train, dev, test = load_splits(args)
    pipeline, _ = Pipeline.from_checkpoint(args.checkpoint, train, dev, test)
    texts, files = render_report(pipeline, args.split, args.out_dir, log_path=args.log)
    for name in ("per_label", "label_norms", "corrections"):
        print(f"== {name} ==")
        print(texts[name])
        print()
    for path in files:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems itself
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, ManifoldError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
