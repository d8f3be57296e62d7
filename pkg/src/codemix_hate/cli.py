"""``codemix-hate`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(including unreadable checkpoints), 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from codemix_hate import pipeline
from codemix_hate.augment import augment_corpus, save_lexicon
from codemix_hate.config import RunConfig, load_config
from codemix_hate.corpus import (
    DatasetFormat,
    load_dataset,
    save_dataset,
    stratified_split,
    write_provenance,
    write_text_atomic,
)
from codemix_hate.embeddings import encode_sequence
from codemix_hate.errors import ConfigError, DatasetError, PipelineError
from codemix_hate.evaluate import CLASS_NAMES, compare_runs, evaluate, load_report, save_report
from codemix_hate.preprocess import preprocess_pipeline
from codemix_hate.synthetic import VocabularySpec, generate_synthetic, reference_proportion_counts
from codemix_hate.training import checkpoint_load, last_path

logger = logging.getLogger("codemix_hate")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_triple(text: str) -> tuple[int, int, int]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated integers")
    return tuple(int(p) for p in parts)


def _fmt(cfg: RunConfig) -> DatasetFormat:
    return DatasetFormat(delimiter=cfg.data.delimiter)


def _config(args, overrides: dict | None = None) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    data_over = {
        "data.stopwords": getattr(args, "stopwords", None),
        "data.dictionary": getattr(args, "dictionary", None),
        "data.lexicon": getattr(args, "lexicon", None),
        "data.embeddings": getattr(args, "embeddings", None),
    }
    return cfg.with_overrides({**data_over, **(overrides or {})})


def _provenance(cfg: RunConfig, seed: int | None, **extra) -> dict:
    return {"config_hash": cfg.digest(), "seed": seed, **extra}


def cmd_gen_synthetic(args) -> int:
    if args.counts:
        counts = args.counts
    elif args.reference_proportions:
        counts = reference_proportion_counts(args.reference_proportions)
    else:
        counts = (args.per_class,) * 3
    spec = VocabularySpec(indicative_per_class=args.indicative, filler=args.filler,
                          min_length=args.min_length, max_length=args.max_length)
    corpus, lexicon = generate_synthetic(counts, args.mode, args.overlap, args.seed, spec)
    save_dataset(corpus, args.output, with_origin=False)
    lex_path = args.lexicon_out or str(Path(args.output).with_suffix("")) + ".lexicon.tsv"
    save_lexicon(lexicon, lex_path)
    write_provenance(args.output, seed=args.seed, mode=args.mode, overlap=args.overlap,
                     counts=list(counts), lexicon=lex_path)
    print(f"wrote {len(corpus)} rows {corpus.counts} to {args.output}; lexicon {lex_path}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    fmt = _fmt(cfg)
    corpus = load_dataset(args.input, fmt)
    resources = pipeline.resources_for(cfg)
    processed, stats = pipeline.preprocess_corpus(corpus, resources)
    if len(processed) == 0:
        raise DatasetError("every message was empty after preprocessing")
    save_dataset(processed, args.output, fmt)
    write_provenance(args.output, **_provenance(cfg, None, stage="preprocess",
                                                  source=str(args.input)))
    for line in stats.lines():
        print(line)
    if args.trace:
        for rec in list(corpus)[: args.trace]:
            msg = preprocess_pipeline(rec.text, resources, audit=True)
            print(f"{rec.id}\t{msg.stage_trace}\t{msg.text}")
    return 0


def cmd_split(args) -> int:
    cfg = _config(args, {"split.test_fraction": args.test_fraction, "split.seed": args.seed})
    fmt = _fmt(cfg)
    corpus = load_dataset(args.input, fmt)
    train, test = stratified_split(corpus, cfg.split.test_fraction, cfg.split.seed,
                                   test_counts=args.test_counts)
    out = Path(args.out_dir)
    save_dataset(train, out / "train.tsv", fmt)
    save_dataset(test, out / "test.tsv", fmt)
    meta = _provenance(cfg, cfg.split.seed, test_fraction=cfg.split.test_fraction,
                       test_counts=list(args.test_counts) if args.test_counts else None,
                       source=str(args.input), train_counts=list(train.counts),
                       test_counts_actual=list(test.counts))
    write_text_atomic(out / "split.meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"train {train.counts} total {len(train)}; test {test.counts} total {len(test)}")
    return 0


def cmd_augment(args) -> int:
    cfg = _config(args, {
        "augment.multipliers": list(args.multipliers) if args.multipliers else None,
        "augment.alpha": args.alpha,
        "augment.deletion_probability": args.p,
        "augment.seed": args.seed,
    })
    fmt = _fmt(cfg)
    corpus = load_dataset(args.input, fmt)
    resources = pipeline.resources_for(cfg)
    out = augment_corpus(corpus, cfg.augment.to_augment_config(), pipeline.lexicon_for(cfg),
                         resources.stopwords)
    save_dataset(out, args.output, fmt)
    write_provenance(args.output, **_provenance(cfg, cfg.augment.seed, stage="augment",
                                                  multipliers=list(cfg.augment.multipliers)))
    print(f"{corpus.counts} -> {out.counts} total {len(out)}")
    return 0


def _train_overrides(args) -> dict:
    return {
        "model.cell_kind": args.cell,
        "model.hidden_units": args.units,
        "model.embedding_dimension": args.dim,
        "model.max_length": args.max_length,
        "model.recurrent_dropout": args.dropout,
        "model.embeddings_trainable": False if args.freeze_embeddings else None,
        "model.seed": args.seed,
        "schedule.initial_learning_rate": args.lr,
        "schedule.epochs": args.epochs,
        "schedule.batch_size": args.batch_size,
        "schedule.seed": args.seed,
        "split.seed": args.seed,
    }


def cmd_train(args) -> int:
    from dataclasses import replace

    from codemix_hate.plotting import plot_history

    cfg = _config(args, _train_overrides(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    cfg = replace(cfg, schedule=replace(cfg.schedule, checkpoint_path=str(ckpt)))
    fmt = _fmt(cfg)
    train_corpus = load_dataset(args.train, fmt)
    if args.validation:
        fit, val = train_corpus, load_dataset(args.validation, fmt)
    else:
        fit, val = pipeline.split_validation(train_corpus, cfg)
    resume = None
    if args.resume:
        resume = checkpoint_load(args.resume)
        if resume.state is None:
            raise ConfigError(f"{args.resume} has no training state to resume from")
    result = pipeline.train_from_corpora(cfg, fit, val, resume=resume)
    history = result.history
    write_text_atomic(out / "history.jsonl", history.to_jsonl())
    summary = {**history.summary(), **_provenance(cfg, cfg.schedule.seed),
               "config": cfg.to_dict(), "train_counts": list(fit.counts),
               "validation_counts": list(val.counts), "vocabulary_size": len(result.vocabulary),
               "checkpoint": str(ckpt)}
    write_text_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    result.vocabulary.save(out / "vocab.tsv")
    plot_history(history, out / "history.png")
    print(f"trained {len(history)} epochs; best epoch {summary['best_epoch']} "
          f"val_loss {summary['best_val_loss']:.5f}; checkpoint {ckpt} (resume state {last_path(ckpt)})")
    return 0


def cmd_evaluate(args) -> int:
    from codemix_hate.plotting import plot_report

    ckpt = checkpoint_load(args.checkpoint)
    if ckpt.vocabulary is None:
        raise DatasetError(f"{args.checkpoint} does not embed its vocabulary")
    cfg = _config(args)
    test = load_dataset(args.test, _fmt(cfg))
    test_set = pipeline.encode_labeled(test, ckpt.vocabulary, ckpt.model.config.max_length)
    report = evaluate(ckpt.model, test_set, seed=ckpt.model.config.seed,
                      config_hash=args.config_hash or cfg.digest())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_report(report, out / "report")
    rows = ["class,precision,recall,f1,support"]
    rows += [f"{n},{p:.6f},{r:.6f},{f:.6f},{s}" for n, p, r, f, s in
             zip(report.class_names, report.precision, report.recall, report.f1, report.support)]
    write_text_atomic(out / "report.csv", "\n".join(rows) + "\n")
    plot_report(report, out / "report.png")
    print(report.to_text(), end="")
    return 0


def cmd_predict(args) -> int:
    ckpt = checkpoint_load(args.checkpoint)
    if ckpt.vocabulary is None:
        raise DatasetError(f"{args.checkpoint} does not embed its vocabulary")
    cfg = _config(args)
    resources = pipeline.resources_for(cfg)
    texts = list(args.text or [])
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            texts.extend(line.rstrip("\n") for line in fh if line.strip())
    if not texts:
        raise ConfigError("nothing to predict: pass --text or --input")
    from codemix_hate.model import predict

    print("label\t" + "\t".join(f"p_{n}" for n in CLASS_NAMES) + "\ttext")
    for text in texts:
        tokens = list(preprocess_pipeline(text, resources).tokens)
        seq = encode_sequence(tokens, ckpt.vocabulary, ckpt.model.config.max_length)
        label, probs = predict(ckpt.model, seq)
        print(CLASS_NAMES[label] + "\t" + "\t".join(f"{p:.4f}" for p in probs) + f"\t{text}")
    return 0


def cmd_grid(args) -> int:
    from codemix_hate.plotting import plot_comparison

    cfg = _config(args)
    if args.seed is not None:
        cfg = pipeline.with_seed(cfg, args.seed)
    raw = load_dataset(args.data, _fmt(cfg))
    out = Path(args.out_dir)
    cells = out / "cells"
    cells.mkdir(parents=True, exist_ok=True)
    reports, names = [], []
    for point in pipeline.grid_points(cfg):
        name = pipeline.cell_name(point)
        cell_cfg = cfg.with_overrides(point)
        path = cells / name / "report.json"
        if path.exists():
            report = load_report(path)
            print(f"[skip] {name} (already done)")
        else:
            result = pipeline.run_experiment(cell_cfg, raw)
            report = result.report
            save_report(report, path.with_suffix(""))
            write_text_atomic(path.with_name("history.jsonl"), result.history.to_jsonl())
            print(f"[done] {name} macro_f1={report.macro_f1:.4f}")
        reports.append(report)
        names.append(name)
    table = compare_runs(reports, names)
    write_text_atomic(out / "comparison.csv", table.to_csv())
    write_text_atomic(out / "comparison.txt", table.to_text())
    plot_comparison(table, out / "comparison.png")
    print(table.to_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="codemix-hate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress per epoch")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def resources(p):
        p.add_argument("--config", help="YAML/JSON run configuration")
        p.add_argument("--stopwords", help="stopword file (default: bundled)")
        p.add_argument("--dictionary", help="transliteration dictionary (default: bundled)")

    p = sub.add_parser("gen-synthetic", help="write a synthetic three-class dataset")
    p.add_argument("--output", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--per-class", type=int, default=10)
    g.add_argument("--counts", type=_int_triple, help="per-class counts, e.g. 211,57,332")
    g.add_argument("--reference-proportions", type=int, metavar="TOTAL",
                   help="TOTAL rows in 1121:303:1765 proportions")
    p.add_argument("--mode", choices=["separable", "hard"], default="separable")
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--indicative", type=int, default=24, help="indicative words per class")
    p.add_argument("--filler", type=int, default=80, help="shared filler words")
    p.add_argument("--min-length", type=int, default=6)
    p.add_argument("--max-length", type=int, default=14)
    p.add_argument("--lexicon-out", help="synonym lexicon path (default: next to output)")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("preprocess", help="clean, filter and transliterate a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--trace", type=int, default=0, metavar="N",
                   help="print the stage trace of the first N messages")
    resources(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", help="seeded stratified train/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--test-counts", type=_int_triple, help="explicit per-class test sizes")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="EDA oversampling of a processed training file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--multipliers", type=_int_triple)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=float, help="random deletion probability")
    p.add_argument("--seed", type=int)
    p.add_argument("--lexicon", help="synonym lexicon (default: bundled)")
    resources(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a classifier on a processed training file")
    p.add_argument("--train", required=True)
    p.add_argument("--validation", help="validation file (default: carved from --train)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", help="checkpoint with training state (model.ckpt.last)")
    p.add_argument("--embeddings", help="GloVe-style text vectors")
    p.add_argument("--cell", choices=["simple_rnn", "lstm", "gru", "bilstm"])
    p.add_argument("--units", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--max-length", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a processed test file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config-hash", help="config hash to record (default: hash of --config)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify raw messages")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", action="append")
    p.add_argument("--input", help="file with one raw message per line")
    resources(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grid", help="train and evaluate every point of the config's grid")
    p.add_argument("--data", required=True, help="raw labeled dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="set every stage seed")
    p.add_argument("--config")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
