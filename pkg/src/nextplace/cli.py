"""Command-line surface: preprocess -> graph-embed -> priors -> train ->
evaluate -> report, plus baselines and ablations, driven by one run config.

Every stage writes its artifacts under the output directory and records
input/output content digests in manifest.json. A stage whose recorded
input digest matches the current one (and whose outputs are intact) is
skipped with a "cached" log line, so `pipeline` is restartable.

Exit codes: 0 success, 1 usage, 2 data/validation problems, 3 internal
invariant violations.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from .autodiff import ShapeError, TapeError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_run_config
from .data import (DataError, build_corpus, build_queries, load_corpus,
                   parse_records, save_corpus)
from .graph import (EmbeddingIOError, build_transition_graph, load_embeddings,
                    node2vec_walks, save_embeddings, train_skipgram)
from .markov import fit_markov
from .model import VARIANTS, NextPlaceModel, build_parameters
from .optim import GradientError
from .priors import (PriorsIOError, UnsupportedModeError, build_priors,
                     load_priors, save_priors)
from .reports import (distance_distribution, load_loss_curve, save_loss_curve,
                      save_weight_proportion, weight_proportion)
from .train import (BaselineParams, RecentLstmBaseline, TrainingError,
                    evaluate_baseline, evaluate_markov, evaluate_model, fit,
                    fit_baseline, run_ablation)
from .util import digest_of_file, digest_of_json

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

REPORT_KINDS = ("distance-dist", "weights", "loss-curve")


class UsageError(Exception):
    pass


class ArtifactError(RuntimeError):
    """A required stage artifact is missing or stale."""


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _log(stage: str, message: str) -> None:
    print(f"[{stage}] {message}", flush=True)


# ---------------------------------------------------------------------------
# manifest: stage -> input digest + output digests

class Manifest:
    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / "manifest.json"
        self.stages: dict = {}
        if self.path.exists():
            try:
                self.stages = json.loads(self.path.read_text())["stages"]
            except (json.JSONDecodeError, KeyError):
                self.stages = {}

    def fresh(self, stage: str, input_digest: str) -> bool:
        record = self.stages.get(stage)
        if record is None or record["inputs"] != input_digest:
            return False
        for name, digest in record["outputs"].items():
            path = self.out_dir / name
            if not path.exists() or digest_of_file(path) != digest:
                return False
        return True

    def record(self, stage: str, input_digest: str, outputs: list[Path]) -> None:
        self.stages[stage] = {
            "inputs": input_digest,
            "outputs": {p.name: digest_of_file(p) for p in outputs},
        }
        payload = json.dumps({"stages": self.stages}, indent=2, sort_keys=True)
        self.path.write_text(payload + "\n", encoding="utf-8")


def _input_digest(files: list[Path], settings) -> str:
    parts = {}
    for path in files:
        if not path.exists():
            raise ArtifactError(
                f"missing artifact {path}; run the earlier pipeline stages first")
        parts[path.name] = digest_of_file(path)
    return digest_of_json({"files": parts, "settings": settings})


def _run_stage(manifest: Manifest, stage: str, input_digest: str,
               outputs: list[Path], builder) -> bool:
    """Returns True when the stage actually ran."""
    if manifest.fresh(stage, input_digest):
        _log(stage, "cached")
        return False
    started = time.perf_counter()
    builder()
    manifest.record(stage, input_digest, outputs)
    _log(stage, f"done in {time.perf_counter() - started:.1f}s")
    return True


# ---------------------------------------------------------------------------
# shared plumbing

def _load_config(args, require_input: bool) -> RunConfig:
    overrides = {
        "input": getattr(args, "input", None),
        "mode": getattr(args, "mode", None),
        "output_dir": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
    }
    return load_run_config(getattr(args, "config", None), overrides,
                           require_input=require_input)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved(config: RunConfig, out: Path) -> None:
    (out / "resolved_config.json").write_text(config.resolved_json() + "\n",
                                              encoding="utf-8")


def _corpus_paths(out: Path, sessions_flag=None) -> tuple[Path, Path]:
    if sessions_flag is not None:
        sessions = Path(sessions_flag)
        return sessions, sessions.parent / "vocab.json"
    return out / "sessions.jsonl", out / "vocab.json"


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}; run `{hint}` first")
    return path


def _load_corpus_artifacts(sessions_path: Path, vocab_path: Path):
    _require(sessions_path, "nextplace preprocess")
    _require(vocab_path, "nextplace preprocess")
    return load_corpus(sessions_path, vocab_path)


def _embedding_levels(config: RunConfig) -> list[str]:
    return ["location", "category"] if config.has_categories else ["location"]


def _load_tables(config: RunConfig, out: Path, vocab_digest: str):
    """Frozen embedding tables for model construction, validated against
    the vocabulary they were trained on."""
    if config.model.variant == "no-node2vec":
        return None, None
    loc = load_embeddings(_require(out / "embeddings_location.bin",
                                   "nextplace graph-embed --level location"),
                          expected_vocab_digest=vocab_digest)
    cat = None
    if config.has_categories:
        cat = load_embeddings(_require(out / "embeddings_category.bin",
                                       "nextplace graph-embed --level category"),
                              expected_vocab_digest=vocab_digest)
    return loc.matrix, (cat.matrix if cat is not None else None)


def _model_for(config: RunConfig, corpus, out: Path, variant: str):
    vocab_digest = digest_of_file(out / "vocab.json")
    run = dataclasses.replace(config, model=dataclasses.replace(
        config.model, variant=variant))
    location_table, category_table = _load_tables(run, out, vocab_digest)
    model_config = run.model_config(corpus.vocab.n_users,
                                    corpus.vocab.n_locations,
                                    corpus.vocab.n_categories, variant)
    params = build_parameters(model_config, location_table, category_table)
    return NextPlaceModel(model_config, params), location_table, category_table


# ---------------------------------------------------------------------------
# stages (each callable from its subcommand and from `pipeline`)

def stage_preprocess(config: RunConfig, out: Path, manifest: Manifest) -> None:
    sessions_path, vocab_path = _corpus_paths(out)
    raw = Path(config.input)
    if not raw.exists():
        raise DataError(f"input file not found: {raw}")
    digest = _input_digest([raw], {
        "mode": config.mode,
        "preprocess": dataclasses.asdict(config.preprocess),
    })

    def build():
        parsed = parse_records(raw, mode=config.mode)
        corpus = build_corpus(parsed.records, config.mode, config.preprocess)
        save_corpus(corpus, sessions_path, vocab_path)
        _log("preprocess",
             f"{len(parsed.records)} records -> "
             f"{len(corpus.train_sessions())} train / "
             f"{len(corpus.test_sessions())} test sessions "
             f"({corpus.vocab.n_users} users, "
             f"{corpus.vocab.n_locations} locations)")
        if parsed.malformed:
            _log("preprocess", f"skipped {len(parsed.malformed)} malformed lines")

    _run_stage(manifest, "preprocess", digest, [sessions_path, vocab_path], build)


def stage_graph_embed(config: RunConfig, out: Path, manifest: Manifest,
                      level: str, sessions_flag=None) -> None:
    sessions_path, vocab_path = _corpus_paths(out, sessions_flag)
    target = out / f"embeddings_{level}.bin"
    walk_config = config.walk_config(level)
    digest = _input_digest([_require(sessions_path, "nextplace preprocess"),
                            _require(vocab_path, "nextplace preprocess")],
                           {"walk": dataclasses.asdict(walk_config)})

    def build():
        corpus = load_corpus(sessions_path, vocab_path)
        n_nodes = (corpus.vocab.n_locations if level == "location"
                   else corpus.vocab.n_categories)
        graph = build_transition_graph(corpus.train_sessions(), n_nodes,
                                       level=level)
        walks = node2vec_walks(graph, walk_config)
        table = train_skipgram(walks, n_nodes, walk_config, level=level)
        save_embeddings(table, target, vocab_digest=digest_of_file(vocab_path),
                        config_digest=digest_of_json(
                            dataclasses.asdict(walk_config)))
        _log("graph-embed", f"{level}: {n_nodes} nodes, {len(walks)} walks, "
             f"dim {walk_config.embedding_dim}")

    _run_stage(manifest, f"graph-embed-{level}", digest, [target], build)


def stage_priors(config: RunConfig, out: Path, manifest: Manifest,
                 sessions_flag=None) -> None:
    sessions_path, vocab_path = _corpus_paths(out, sessions_flag)
    target = out / "priors.bin"
    digest = _input_digest([_require(sessions_path, "nextplace preprocess"),
                            _require(vocab_path, "nextplace preprocess")],
                           {"has_categories": config.has_categories})

    def build():
        corpus = load_corpus(sessions_path, vocab_path)
        priors = build_priors(corpus.train_sessions(), corpus.vocab.coords,
                              corpus.vocab.n_categories, config.has_categories,
                              config_digest=digest)
        save_priors(priors, target)
        _log("priors", f"time correlation 48x48, activity "
             f"{'on' if priors.has_activity else 'off'}")

    _run_stage(manifest, "priors", digest, [target], build)


def _train_inputs(config: RunConfig, out: Path) -> list[Path]:
    files = [out / "sessions.jsonl", out / "vocab.json", out / "priors.bin"]
    if config.model.variant != "no-node2vec":
        files.append(out / "embeddings_location.bin")
        if config.has_categories:
            files.append(out / "embeddings_category.bin")
    return files


def stage_train(config: RunConfig, out: Path, manifest: Manifest,
                variant: str) -> None:
    config = dataclasses.replace(config, model=dataclasses.replace(
        config.model, variant=variant))
    checkpoint_path = out / "checkpoint.bin"
    curve_path = out / "loss_curve.csv"
    digest = _input_digest(_train_inputs(config, out), {
        "model": dataclasses.asdict(config.model),
        "train": dataclasses.asdict(config.train),
        "seed": config.seed,
    })

    def build():
        corpus = _load_corpus_artifacts(*_corpus_paths(out))
        priors = load_priors(_require(out / "priors.bin", "nextplace priors"))
        model, _, _ = _model_for(config, corpus, out, variant)
        queries = build_queries(corpus, "train", config.preprocess)
        result = fit(model, priors, queries, config.train_config(variant))
        save_checkpoint(checkpoint_path, model.params.state_entries())
        save_loss_curve(result.loss_curve, curve_path)
        _log("train", f"variant {variant}: {len(queries)} samples, "
             f"best epoch {result.best_epoch}, "
             f"stopped after epoch {result.stopped_epoch}")

    _run_stage(manifest, "train", digest, [checkpoint_path, curve_path], build)


def _restore_model(config: RunConfig, corpus, out: Path, variant: str,
                   checkpoint_path: Path):
    model, _, _ = _model_for(config, corpus, out, variant)
    state = load_checkpoint(_require(checkpoint_path, "nextplace train"),
                            model.params.expected_shapes())
    model.params.load_state(state)
    return model


def stage_evaluate(config: RunConfig, out: Path, manifest: Manifest,
                   variant: str, checkpoint_flag=None) -> None:
    checkpoint_path = (Path(checkpoint_flag) if checkpoint_flag is not None
                       else out / "checkpoint.bin")
    report_path = out / "eval_report.json"
    digest = _input_digest(
        _train_inputs(config, out) + [_require(checkpoint_path,
                                               "nextplace train")],
        {"evaluate": dataclasses.asdict(config.evaluate), "variant": variant})

    def build():
        corpus = _load_corpus_artifacts(*_corpus_paths(out))
        priors = load_priors(_require(out / "priors.bin", "nextplace priors"))
        model = _restore_model(config, corpus, out, variant, checkpoint_path)
        queries = build_queries(corpus, "test", config.preprocess)
        report = evaluate_model(model, priors, queries,
                                k_values=tuple(config.evaluate.k_values),
                                workers=config.workers,
                                set_form=config.evaluate.set_form)
        report.save(report_path)
        _log("evaluate", f"{report.n_queries} queries\n{report.table()}")

    _run_stage(manifest, "evaluate", digest, [report_path], build)


def stage_baseline(config: RunConfig, out: Path, manifest: Manifest,
                   kind: str) -> None:
    target = out / f"baseline_{kind}.json"
    settings = {"kind": kind, "evaluate": dataclasses.asdict(config.evaluate)}
    files = [out / "sessions.jsonl", out / "vocab.json"]
    if kind == "lstm":
        settings["model"] = dataclasses.asdict(config.model)
        settings["train"] = dataclasses.asdict(config.train)
        settings["seed"] = config.seed
        files.append(out / "embeddings_location.bin")
        if config.has_categories:
            files.append(out / "embeddings_category.bin")
    digest = _input_digest([_require(f, "nextplace preprocess") for f in files],
                           settings)

    def build():
        corpus = _load_corpus_artifacts(*_corpus_paths(out))
        test_queries = build_queries(corpus, "test", config.preprocess)
        k_values = tuple(config.evaluate.k_values)
        if kind == "markov":
            markov = fit_markov(corpus.train_sessions(),
                                corpus.vocab.n_locations)
            report = evaluate_markov(markov, test_queries, k_values=k_values,
                                     workers=config.workers,
                                     set_form=config.evaluate.set_form)
        else:
            vocab_digest = digest_of_file(out / "vocab.json")
            location_table, category_table = _load_tables(
                dataclasses.replace(config, model=dataclasses.replace(
                    config.model, variant="full")), out, vocab_digest)
            model_config = config.model_config(corpus.vocab.n_users,
                                               corpus.vocab.n_locations,
                                               corpus.vocab.n_categories,
                                               variant="full")
            baseline = RecentLstmBaseline(
                model_config, BaselineParams(model_config, location_table,
                                             category_table))
            fit_baseline(baseline, build_queries(corpus, "train",
                                                 config.preprocess),
                         config.train_config())
            report = evaluate_baseline(baseline, test_queries,
                                       k_values=k_values,
                                       workers=config.workers,
                                       set_form=config.evaluate.set_form)
        report.save(target)
        _log("baseline", f"{kind}\n{report.table()}")

    _run_stage(manifest, f"baseline-{kind}", digest, [target], build)


def stage_ablate(config: RunConfig, out: Path, manifest: Manifest,
                 variants: list[str]) -> None:
    corpus = None
    for variant in variants:
        run = dataclasses.replace(config, model=dataclasses.replace(
            config.model, variant=variant))
        checkpoint_path = out / f"checkpoint_{variant}.bin"
        report_path = out / f"report_{variant}.json"
        digest = _input_digest(_train_inputs(run, out), {
            "model": dataclasses.asdict(run.model),
            "train": dataclasses.asdict(run.train),
            "evaluate": dataclasses.asdict(run.evaluate),
            "seed": run.seed,
        })
        if manifest.fresh(f"ablate-{variant}", digest):
            _log("ablate", f"{variant}: cached")
            continue
        if corpus is None:
            corpus = _load_corpus_artifacts(*_corpus_paths(out))
            priors = load_priors(_require(out / "priors.bin",
                                          "nextplace priors"))
            train_queries = build_queries(corpus, "train", config.preprocess)
            test_queries = build_queries(corpus, "test", config.preprocess)
            vocab_digest = digest_of_file(out / "vocab.json")
        location_table, category_table = _load_tables(run, out, vocab_digest)
        model_config = run.model_config(corpus.vocab.n_users,
                                        corpus.vocab.n_locations,
                                        corpus.vocab.n_categories, variant)
        started = time.perf_counter()
        model, _, report = run_ablation(
            variant, model_config, priors, train_queries, test_queries,
            run.train_config(variant), location_table, category_table,
            workers=config.workers)
        save_checkpoint(checkpoint_path, model.params.state_entries())
        report.save(report_path)
        manifest.record(f"ablate-{variant}", digest,
                        [checkpoint_path, report_path])
        _log("ablate", f"{variant}: done in "
             f"{time.perf_counter() - started:.1f}s\n{report.table()}")


def stage_report(config: RunConfig, out: Path, manifest: Manifest,
                 kind: str, variant: str) -> None:
    if kind == "loss-curve":
        curve = load_loss_curve(_require(out / "loss_curve.csv",
                                         "nextplace train"))
        epoch, train_loss, test_loss = curve[-1]
        _log("report", f"loss curve: {len(curve)} epochs, final train "
             f"{train_loss:.4f}, final test {test_loss:.4f}")
        return

    checkpoint_path = out / "checkpoint.bin"
    target = out / ("distance_hist.csv" if kind == "distance-dist"
                    else "weight_proportion.csv")
    digest = _input_digest(
        _train_inputs(config, out) + [_require(checkpoint_path,
                                               "nextplace train")],
        {"kind": kind, "variant": variant})

    def build():
        corpus = _load_corpus_artifacts(*_corpus_paths(out))
        priors = load_priors(_require(out / "priors.bin", "nextplace priors"))
        model = _restore_model(config, corpus, out, variant, checkpoint_path)
        queries = build_queries(corpus, "test", config.preprocess)
        if kind == "distance-dist":
            histogram = distance_distribution(model, priors, queries)
            histogram.save_csv(target)
            _log("report", f"distance distribution over "
                 f"{histogram.n_pairs} pairs")
        else:
            shares = weight_proportion(model, priors, queries)
            save_weight_proportion(shares, target)
            _log("report", "weight proportion: " + ", ".join(
                f"{name} {share:.3f}" for name, share in shares.items()))

    _run_stage(manifest, f"report-{kind}", digest, [target], build)


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_preprocess(args) -> int:
    config = _load_config(args, require_input=True)
    out = _out_dir(config)
    _write_resolved(config, out)
    stage_preprocess(config, out, Manifest(out))
    return EXIT_OK


def cmd_graph_embed(args) -> int:
    config = _load_config(args, require_input=False)
    out = (Path(args.sessions).parent if args.sessions is not None
           else _out_dir(config))
    stage_graph_embed(config, out, Manifest(out), args.level, args.sessions)
    return EXIT_OK


def cmd_priors(args) -> int:
    config = _load_config(args, require_input=False)
    out = (Path(args.sessions).parent if args.sessions is not None
           else _out_dir(config))
    stage_priors(config, out, Manifest(out), args.sessions)
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args, require_input=False)
    out = _out_dir(config)
    _write_resolved(config, out)
    stage_train(config, out, Manifest(out),
                args.variant or config.model.variant)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args, require_input=False)
    out = _out_dir(config)
    stage_evaluate(config, out, Manifest(out),
                   args.variant or config.model.variant, args.checkpoint)
    return EXIT_OK


def cmd_baseline(args) -> int:
    config = _load_config(args, require_input=False)
    out = _out_dir(config)
    stage_baseline(config, out, Manifest(out), args.kind)
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _load_config(args, require_input=False)
    out = _out_dir(config)
    variants = list(VARIANTS) if args.all else [args.variant]
    if variants == [None]:
        raise UsageError("ablate: pass --all or --variant TAG")
    stage_ablate(config, out, Manifest(out), variants)
    return EXIT_OK


def cmd_report(args) -> int:
    config = _load_config(args, require_input=False)
    out = _out_dir(config)
    stage_report(config, out, Manifest(out), args.kind,
                 args.variant or config.model.variant)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = _load_config(args, require_input=True)
    out = _out_dir(config)
    _write_resolved(config, out)
    manifest = Manifest(out)
    variant = config.model.variant
    stage_preprocess(config, out, manifest)
    for level in _embedding_levels(config):
        if variant != "no-node2vec":
            stage_graph_embed(config, out, manifest, level)
    stage_priors(config, out, manifest)
    stage_train(config, out, manifest, variant)
    stage_evaluate(config, out, manifest, variant)
    stage_report(config, out, manifest, "distance-dist", variant)
    stage_report(config, out, manifest, "weights", variant)
    _log("pipeline", "complete")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> _Parser:
    parser = _Parser(prog="nextplace",
                     description="Next-place prediction pipeline.")
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="F",
                        help="run configuration file (YAML)")
    shared.add_argument("--out", metavar="D", help="output directory")
    shared.add_argument("--workers", metavar="N", type=int,
                        help="worker count for evaluation fan-out")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("preprocess", parents=[shared],
                       help="parse raw records into sessions + vocabulary")
    p.add_argument("--input", metavar="F", help="raw records file")
    p.add_argument("--mode", choices=("checkin", "cdr"))
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("graph-embed", parents=[shared],
                       help="train transition-graph embeddings")
    p.add_argument("--sessions", metavar="F", help="sessions.jsonl path")
    p.add_argument("--level", choices=("location", "category"),
                   default="location")
    p.set_defaults(func=cmd_graph_embed)

    p = sub.add_parser("priors", parents=[shared],
                       help="build spatio-temporal prior tables")
    p.add_argument("--sessions", metavar="F", help="sessions.jsonl path")
    p.set_defaults(func=cmd_priors)

    p = sub.add_parser("train", parents=[shared], help="train the model")
    p.add_argument("--variant", choices=VARIANTS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[shared],
                       help="rank held-out targets with a trained checkpoint")
    p.add_argument("--checkpoint", metavar="F",
                   help="checkpoint path (default: <out>/checkpoint.bin)")
    p.add_argument("--variant", choices=VARIANTS,
                   help="must match the trained checkpoint")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", parents=[shared],
                       help="fit and evaluate a reference model")
    p.add_argument("--kind", choices=("markov", "lstm"), required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("ablate", parents=[shared],
                       help="train and evaluate model variants")
    p.add_argument("--all", action="store_true", help="every variant")
    p.add_argument("--variant", choices=VARIANTS, help="a single variant")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", parents=[shared],
                       help="derive analysis artifacts from a trained run")
    p.add_argument("--kind", choices=REPORT_KINDS, required=True)
    p.add_argument("--variant", choices=VARIANTS,
                   help="must match the trained checkpoint")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", parents=[shared],
                       help="run every stage in order with caching")
    p.add_argument("--input", metavar="F", help="raw records file")
    p.add_argument("--mode", choices=("checkin", "cdr"))
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    # ShapeError subclasses ValueError: internal failures must match first
    except (TapeError, ShapeError, GradientError, TrainingError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ConfigError, DataError, ArtifactError, CheckpointError,
            EmbeddingIOError, PriorsIOError, UnsupportedModeError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
