"""Command-line pipeline: synth, ingest, ngram, lstm, baseline, eval, agree.

Every report embeds the effective option values and the SHA-256 of each input
file, so a result can be re-derived from the report alone.  Randomness flows
from the --seed flag of the invocation; outputs are byte-identical across
repeated runs with the same seed and worker count.  Reports default to
content-addressed filenames in --out-dir to avoid silent overwrites.
"""

import argparse
import hashlib
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import baselines, evaluation, ingest, lstm, ngram, synth
from .errors import ConfigError, NextactionError


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _default_workers() -> int:
    raw = os.environ.get("NEXTACTION_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _read_kv_config(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line is not key=value: {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        values[key.replace("-", "_")] = raw
    return values


def _merge_options(args: argparse.Namespace, defaults: dict) -> dict:
    """Flag value if given, else config-file value, else the hard default."""
    file_values = _read_kv_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in file_values:
            caster = type(default) if default is not None else str
            raw = file_values[key]
            merged[key] = raw.lower() in ("1", "true", "yes") if caster is bool else caster(raw)
        else:
            merged[key] = default
    return merged


def _write_artifact(text: str, out_dir: str, prefix: str, explicit: str | None) -> Path:
    if explicit:
        path = Path(explicit)
    else:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
        path = Path(out_dir) / f"{prefix}-{digest}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")
    return path


_PATH_OPTIONS = {"events", "roster", "corpus", "vocab", "model", "syllabus"}


def _config_metadata(options: dict, inputs: dict[str, str]) -> dict[str, str]:
    # path-valued options are echoed by basename; the checksums below pin
    # the exact content, keeping reports byte-stable across directories
    meta = {}
    for key, value in options.items():
        if value is None:
            continue
        meta[f"config.{key}"] = Path(str(value)).name if key in _PATH_OPTIONS else str(value)
    for name, path in inputs.items():
        meta[f"input.{name}.sha256"] = _sha256_file(path)
    return meta


def _load_corpus(options: dict) -> ingest.Corpus:
    vocab = ingest.load_vocabulary(options["vocab"])
    return ingest.load_corpus(options["corpus"], vocab)


def _select_cohort(corpus: ingest.Corpus, cohort: str, min_actions: int) -> ingest.Corpus:
    if cohort == "all":
        kept = [s for s in corpus.sequences if len(s) >= min_actions]
        return ingest.Corpus(corpus.vocabulary, kept, corpus.vocab_size)
    if cohort not in ("certified", "uncertified"):
        raise ConfigError(f"cohort must be certified, uncertified or all, got {cohort!r}")
    return ingest.filter_cohort(corpus, cohort == "certified", min_actions)


# ---------------------------------------------------------------- synth

def _cmd_synth(args) -> int:
    cfg = synth.load_config(args.config) if args.config else synth.SynthConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    cfg.validate()
    outputs = synth.generate(cfg, args.out_dir)
    lines = ["# nextaction synth report"]
    for name in synth.SynthConfig.__dataclass_fields__:
        lines.append(f"config.{name}: {getattr(cfg, name)}")
    for label, path in (
        ("events", outputs.events_path),
        ("roster", outputs.roster_path),
        ("syllabus", outputs.syllabus_path),
    ):
        lines.append(f"output.{label}: {path.name}")
        lines.append(f"output.{label}.sha256: {_sha256_file(path)}")
    _write_artifact("\n".join(lines) + "\n", args.out_dir, "synth", args.report)
    return 0


# ---------------------------------------------------------------- ingest

def _cmd_ingest(args) -> int:
    options = _merge_options(args, {
        "events": None, "roster": None, "min_count": 40, "on_malformed": "abort",
    })
    if not options["events"] or not options["roster"]:
        raise ConfigError("ingest needs --events and --roster")
    corpus, stats = ingest.ingest_files(
        options["events"], options["roster"],
        min_count=options["min_count"], on_malformed=options["on_malformed"],
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab_path = Path(args.vocab_out) if args.vocab_out else out_dir / "vocab.tsv"
    corpus_path = Path(args.corpus_out) if args.corpus_out else out_dir / "corpus.nact"
    ingest.save_vocabulary(corpus.vocabulary, vocab_path)
    ingest.save_corpus(corpus, corpus_path)
    print(f"wrote {vocab_path}")
    print(f"wrote {corpus_path}")

    meta = _config_metadata(options, {"events": options["events"], "roster": options["roster"]})
    lines = ["# nextaction ingest report"]
    lines.append(f"vocab_size: {corpus.vocab_size}")
    lines.append(f"sequences: {len(corpus.sequences)}")
    lines.append(f"total_actions: {corpus.total_actions}")
    for name in (
        "total_lines", "ignored_lines", "malformed_lines", "parsed_events",
        "kept_actions", "dropped_token_events", "dropped_student_events",
        "dropped_students", "unrostered_students",
    ):
        lines.append(f"stats.{name}: {getattr(stats, name)}")
    lines.extend(f"meta.{k}: {v}" for k, v in sorted(meta.items()))
    lines.append(f"output.vocab.sha256: {_sha256_file(vocab_path)}")
    lines.append(f"output.corpus.sha256: {_sha256_file(corpus_path)}")
    _write_artifact("\n".join(lines) + "\n", args.out_dir, "ingest", args.report)
    return 0


# ---------------------------------------------------------------- ngram

def _cmd_ngram(args) -> int:
    options = _merge_options(args, {
        "max_order": 10, "folds": 5, "seed": 0, "cohort": "certified",
        "min_actions": 1, "workers": _default_workers(), "sweep": False,
        "usage": False,
    })
    if options["max_order"] < 1:
        raise ConfigError(f"--max-order must be >= 1, got {options['max_order']}")
    if options["sweep"] and options["max_order"] < 2:
        raise ConfigError("--sweep needs --max-order >= 2")
    corpus = _select_cohort(_load_corpus(args.__dict__), options["cohort"], options["min_actions"])
    plan = evaluation.make_folds(corpus.student_ids(), options["folds"], options["seed"])
    meta = _config_metadata(options, {"corpus": args.corpus, "vocab": args.vocab})

    if options["sweep"]:
        reports = ngram.sweep_orders(
            corpus, range(2, options["max_order"] + 1), plan, workers=options["workers"]
        )
        lines = ["# nextaction n-gram order sweep"]
        lines.extend(f"meta.{k}: {v}" for k, v in sorted(meta.items()))
        for order in sorted(reports):
            accs = " ".join(f"{a:.10f}" for a in reports[order].per_fold_accuracy)
            lines.append(f"order.{order}.cv_accuracy: {reports[order].cv_accuracy:.10f}")
            lines.append(f"order.{order}.fold_accuracy: {accs}")
        _write_artifact("\n".join(lines) + "\n", args.out_dir, "ngram-sweep", args.report)
        return 0

    def factory(train_corpus, fold):
        return ngram.NGramPredictor(ngram.fit(train_corpus, options["max_order"]))

    report = evaluation.cross_validate(
        factory, corpus, plan,
        model_name=f"{options['max_order']}-gram backoff",
        workers=options["workers"],
        keep_streams=bool(args.stream),
    )
    report.metadata.update(meta)

    if options["usage"] or args.save_model:
        table = ngram.fit(corpus, options["max_order"])
        if options["usage"]:
            usage = ngram.backoff_usage(table, corpus)
            for order, fraction in usage.items():
                report.metadata[f"backoff_usage.{order}"] = f"{fraction:.10f}"
        if args.save_model:
            ngram.save_table(table, args.save_model)
            print(f"wrote {args.save_model}")
    if args.stream:
        evaluation.write_stream(report.streams, args.stream)
        print(f"wrote {args.stream}")
    _write_artifact(report.to_text(), args.out_dir, "ngram-report", args.report)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
        print(f"wrote {args.csv}")
    return 0


# ---------------------------------------------------------------- lstm

def _parse_list(raw: str, caster):
    return [caster(part) for part in str(raw).split(",") if part != ""]


def _cmd_lstm(args) -> int:
    options = _merge_options(args, {
        "layers": "1", "nodes": "64", "lr": "0.01", "epochs": 10, "window": 10,
        "dropout": 0.2, "emb_dim": 64, "batch": 32, "folds": 5, "seed": 0,
        "cell": "lstm", "cohort": "certified", "min_actions": 1,
        "workers": _default_workers(),
    })
    layer_list = _parse_list(options["layers"], int)
    node_list = _parse_list(options["nodes"], int)
    lr_list = _parse_list(options["lr"], float)
    if not layer_list or not node_list or not lr_list:
        raise ConfigError("--layers, --nodes and --lr need at least one value")

    corpus = _select_cohort(_load_corpus(args.__dict__), options["cohort"], options["min_actions"])
    plan = evaluation.make_folds(corpus.student_ids(), options["folds"], options["seed"])
    meta = _config_metadata(options, {"corpus": args.corpus, "vocab": args.vocab})
    base_cfg = lstm.TrainConfig(
        learning_rate=lr_list[0], epochs=options["epochs"], window=options["window"],
        batch_size=options["batch"], dropout_rate=options["dropout"],
        seed=options["seed"], hidden_size=node_list[0], layers=layer_list[0],
        embedding_dim=options["emb_dim"], cell=options["cell"],
    )
    base_cfg.validate()

    combos = [(l, n, r) for l in layer_list for n in node_list for r in lr_list]
    if len(combos) > 1:
        results = lstm.grid_search(corpus, combos, plan, base_cfg, workers=options["workers"])
        lines = ["# nextaction lstm grid report"]
        lines.extend(f"meta.{k}: {v}" for k, v in sorted(meta.items()))
        for cfg, report in results:
            accs = " ".join(f"{a:.10f}" for a in report.per_fold_accuracy)
            key = f"grid.layers={cfg.layers}.nodes={cfg.hidden_size}.lr={cfg.learning_rate:g}"
            lines.append(f"{key}.cv_accuracy: {report.cv_accuracy:.10f}")
            lines.append(f"{key}.fold_accuracy: {accs}")
        _write_artifact("\n".join(lines) + "\n", args.out_dir, "lstm-grid", args.report)
        return 0

    factory, curves = lstm.cv_factory(base_cfg)
    report = evaluation.cross_validate(
        factory, corpus, plan,
        model_name=f"{base_cfg.cell} layers={base_cfg.layers} nodes={base_cfg.hidden_size}",
        workers=options["workers"],
        keep_streams=bool(args.stream),
    )
    report.metadata.update(meta)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = args.curve_prefix or "curve"
    for fold in sorted(curves):
        rows = ["epoch,train_loss,hillclimb_accuracy"]
        rows.extend(
            f"{s.epoch},{s.train_loss:.10f},{s.hillclimb_accuracy:.10f}"
            for s in curves[fold]
        )
        curve_path = out_dir / f"{prefix}-fold{fold}.csv"
        curve_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        print(f"wrote {curve_path}")

    if args.save_model:
        net, final_curve = lstm.train(corpus, base_cfg)
        lstm.save_checkpoint(net, args.save_model)
        print(f"wrote {args.save_model}")
        rows = ["epoch,train_loss,hillclimb_accuracy"]
        rows.extend(
            f"{s.epoch},{s.train_loss:.10f},{s.hillclimb_accuracy:.10f}"
            for s in final_curve
        )
        final_path = out_dir / f"{prefix}-final.csv"
        final_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        print(f"wrote {final_path}")
    if args.stream:
        evaluation.write_stream(report.streams, args.stream)
        print(f"wrote {args.stream}")
    _write_artifact(report.to_text(), args.out_dir, "lstm-report", args.report)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
        print(f"wrote {args.csv}")
    return 0


# ---------------------------------------------------------------- baseline

def _cmd_baseline(args) -> int:
    options = _merge_options(args, {
        "model": "repeat", "folds": 5, "seed": 0, "cohort": "certified",
        "min_actions": 1, "workers": _default_workers(),
    })
    corpus = _select_cohort(_load_corpus(args.__dict__), options["cohort"], options["min_actions"])
    inputs = {"corpus": args.corpus, "vocab": args.vocab}

    if options["model"] == "repeat":
        model = baselines.RepeatModel()
    else:
        if not args.syllabus:
            raise ConfigError(f"baseline {options['model']!r} needs --syllabus")
        syllabus = baselines.load_syllabus(args.syllabus, corpus.vocabulary)
        inputs["syllabus"] = args.syllabus
        if options["model"] == "syllabus":
            model = baselines.SyllabusModel(syllabus)
        elif options["model"] == "combined":
            model = baselines.SyllabusRepeatModel(syllabus)
        else:
            raise ConfigError(f"unknown baseline {options['model']!r}")

    plan = evaluation.make_folds(corpus.student_ids(), options["folds"], options["seed"])
    report = evaluation.cross_validate(
        lambda train_corpus, fold: model, corpus, plan,
        model_name=model.name, workers=options["workers"],
        keep_streams=bool(args.stream),
    )
    report.metadata.update(_config_metadata(options, inputs))
    if args.stream:
        evaluation.write_stream(report.streams, args.stream)
        print(f"wrote {args.stream}")
    _write_artifact(report.to_text(), args.out_dir, "baseline-report", args.report)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
        print(f"wrote {args.csv}")
    return 0


# ---------------------------------------------------------------- eval

def _load_model(path: str, window: int | None):
    blob = Path(path).read_bytes()
    if blob.startswith(lstm.CHECKPOINT_MAGIC):
        net = lstm.load_checkpoint(path, window=window)
        return lstm.LstmPredictor(net), f"lstm checkpoint {Path(path).name}"
    if blob.startswith(b"#NGRAM"):
        table = ngram.load_table(path)
        return ngram.NGramPredictor(table), f"{table.max_order}-gram table {Path(path).name}"
    raise ConfigError(f"unrecognized model file {path!r}")


def _cmd_eval(args) -> int:
    options = _merge_options(args, {
        "cohort": "uncertified", "min_actions": 30,
    })
    corpus = _select_cohort(_load_corpus(args.__dict__), options["cohort"], 1)
    model, description = _load_model(args.model, args.window)
    accuracy, n_scored = evaluation.transfer_eval(model, corpus, options["min_actions"])
    meta = _config_metadata(options, {
        "corpus": args.corpus, "vocab": args.vocab, "model": args.model,
    })
    lines = ["# nextaction transfer report"]
    lines.append(f"model: {description}")
    lines.append(f"accuracy: {accuracy:.10f}")
    lines.append(f"sequences_scored: {n_scored}")
    lines.extend(f"meta.{k}: {v}" for k, v in sorted(meta.items()))
    _write_artifact("\n".join(lines) + "\n", args.out_dir, "transfer", args.report)
    return 0


# ---------------------------------------------------------------- agree

def _cmd_agree(args) -> int:
    table = evaluation.agreement(
        evaluation.read_stream(args.a), evaluation.read_stream(args.b)
    )
    text = table.to_text()
    sys.stdout.write(text)
    if args.report or args.out_dir != ".":
        _write_artifact(text, args.out_dir, "agreement", args.report)
    return 0


# ---------------------------------------------------------------- parser

def _add_common(sub, *names):
    if "config" in names:
        sub.add_argument("--config", help="key=value file supplying option defaults")
    if "seed" in names:
        sub.add_argument("--seed", type=int, default=None)
    if "workers" in names:
        sub.add_argument("--workers", type=int, default=None,
                         help="parallel workers (default from NEXTACTION_WORKERS)")
    if "corpus" in names:
        sub.add_argument("--corpus", required=True, help="encoded corpus file")
        sub.add_argument("--vocab", required=True, help="vocabulary file")
    if "cohort" in names:
        sub.add_argument("--cohort", choices=["certified", "uncertified", "all"], default=None)
        sub.add_argument("--min-actions", type=int, default=None, dest="min_actions")
    if "report" in names:
        sub.add_argument("--report", help="explicit report path (default content-addressed)")
        sub.add_argument("--out-dir", default=".", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nextaction",
        description="Next-action prediction pipeline for sequential event logs",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="key=value generator config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--out-dir", default=".", dest="out_dir")
    p.set_defaults(func=_cmd_synth)

    p = commands.add_parser("ingest", help="event log + roster -> vocab + corpus")
    _add_common(p, "config", "report")
    p.add_argument("--events")
    p.add_argument("--roster")
    p.add_argument("--min-count", type=int, default=None, dest="min_count")
    p.add_argument("--on-malformed", choices=["abort", "skip"], default=None,
                   dest="on_malformed")
    p.add_argument("--vocab-out", dest="vocab_out")
    p.add_argument("--corpus-out", dest="corpus_out")
    p.set_defaults(func=_cmd_ingest)

    p = commands.add_parser("ngram", help="fit/sweep gram models with CV report")
    _add_common(p, "config", "seed", "workers", "corpus", "cohort", "report")
    p.add_argument("--max-order", type=int, default=None, dest="max_order")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--sweep", action="store_const", const=True, default=None,
                   help="evaluate every order from 2 to --max-order")
    p.add_argument("--usage", action="store_const", const=True, default=None,
                   help="include the backoff order-usage histogram")
    p.add_argument("--save-model", dest="save_model")
    p.add_argument("--stream", help="write the per-position prediction stream")
    p.add_argument("--csv", help="write fold accuracies as CSV")
    p.set_defaults(func=_cmd_ngram)

    p = commands.add_parser("lstm", help="train or grid-search the recurrent model")
    _add_common(p, "config", "seed", "workers", "corpus", "cohort", "report")
    p.add_argument("--layers", help="layer count, or comma list for a grid")
    p.add_argument("--nodes", help="hidden size, or comma list for a grid")
    p.add_argument("--lr", help="learning rate, or comma list for a grid")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--emb-dim", type=int, default=None, dest="emb_dim")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--cell", choices=["lstm", "rnn"], default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--save-model", dest="save_model")
    p.add_argument("--stream")
    p.add_argument("--csv", help="write fold accuracies as CSV")
    p.add_argument("--curve-prefix", dest="curve_prefix")
    p.set_defaults(func=_cmd_lstm)

    p = commands.add_parser("baseline", help="repeat / syllabus / combined predictors")
    _add_common(p, "config", "seed", "workers", "corpus", "cohort", "report")
    p.add_argument("--model", choices=["repeat", "syllabus", "combined"], default=None)
    p.add_argument("--syllabus", help="course-order token file")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--stream")
    p.add_argument("--csv", help="write fold accuracies as CSV")
    p.set_defaults(func=_cmd_baseline)

    p = commands.add_parser("eval", help="apply a saved model to a cohort")
    _add_common(p, "config", "corpus", "cohort", "report")
    p.add_argument("--model", required=True, help="saved n-gram table or checkpoint")
    p.add_argument("--window", type=int, default=None,
                   help="context window override for checkpoints")
    p.set_defaults(func=_cmd_eval)

    p = commands.add_parser("agree", help="2x2 agreement between prediction streams")
    p.add_argument("a", help="first prediction stream")
    p.add_argument("b", help="second prediction stream")
    p.add_argument("--report", default=None)
    p.add_argument("--out-dir", default=".", dest="out_dir")
    p.set_defaults(func=_cmd_agree)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (NextactionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
