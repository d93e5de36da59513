"""Command-line entry point: ``tempre run | score | audit | replay | cache``.

Settings come from flags, then an optional ``--config`` file (JSON or YAML), then defaults.
Exit status is 0 on success, 1 when some pairs failed, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import FORMATS, CorpusError
from .gateway import GatewayError
from .metrics import ScoringError
from .runner import RunConfig, cache_gc, execute_audit, execute_run, replay_config, score_run
from .schema import ConfigurationError, SchemaError

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

# flag dest -> RunConfig field; flags default to None so "not given" is detectable
_FLAG_FIELDS = {
    "dataset": "dataset", "format": "format", "schema": "schema", "documents": "documents",
    "strategy": "strategy", "provider": "provider", "model": "model", "endpoint": "endpoint",
    "temperature": "temperature", "seed": "seed", "noise": "noise", "confusion": "confusion",
    "violation_rate": "violation_rate", "commit_rate": "commit_rate", "incorrect_rate": "incorrect_rate",
    "max_context_sentences": "max_context_sentences", "tag_style": "tag_style",
    "conflict_threshold": "conflict_threshold", "workers": "workers", "cache_dir": "cache_dir",
    "out": "out", "run_id": "run_id", "max_retries": "max_retries",
}


def load_config_file(path: str) -> dict:
    text = Path(path).read_text("utf-8")
    if path.endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config must be a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def build_config(args: argparse.Namespace) -> RunConfig:
    merged = load_config_file(args.config) if getattr(args, "config", None) else {}
    for dest, name in _FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            merged[name] = value
    if getattr(args, "no_same_event", False):
        merged["same_event_turn"] = False
    return RunConfig.from_dict(merged)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or YAML file of run settings")
    p.add_argument("--dataset", help="corpus path or bundled fixture name (e.g. fixtures/mini)")
    p.add_argument("--format", choices=("auto",) + FORMATS)
    p.add_argument("--schema", help="built-in schema name or schema JSON path")
    p.add_argument("--documents", help="TimeML directory for TSV pair files")
    p.add_argument("--strategy", choices=["zero-shot", "event-ranking", "cot", "zero_shot", "event_ranking"])
    p.add_argument("--provider", choices=["gold-oracle", "noisy-oracle", "refusal-oracle", "inconsistent-oracle",
                                          "replay", "http"])
    p.add_argument("--model")
    p.add_argument("--endpoint")
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float, help="label flip rate for noisy-oracle")
    p.add_argument("--confusion", help="JSON confusion matrix for noisy-oracle")
    p.add_argument("--violation-rate", type=float)
    p.add_argument("--commit-rate", type=float)
    p.add_argument("--incorrect-rate", type=float)
    p.add_argument("--max-context-sentences", type=int, help="0 disables the context window")
    p.add_argument("--tag-style", choices=["bracket", "angle"])
    p.add_argument("--conflict-threshold", type=int, choices=[2, 3])
    p.add_argument("--no-same-event", action="store_true", help="skip the same-event turn in cot")
    p.add_argument("--workers", type=int)
    p.add_argument("--cache-dir")
    p.add_argument("--out")
    p.add_argument("--run-id")
    p.add_argument("--max-retries", type=int)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempre", description="Temporal relation extraction with chat models")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="predict relations for every gold pair")
    _add_run_flags(run)
    run.add_argument("--score", action="store_true", help="score the run when it finishes")

    sc = sub.add_parser("score", help="score a run directory")
    sc.add_argument("run_dir")
    sc.add_argument("--exclude-vague-overall", action="store_true")
    sc.add_argument("--dataset", help="override the dataset recorded in the manifest")
    sc.add_argument("--format", choices=("auto",) + FORMATS)
    sc.add_argument("--documents")

    au = sub.add_parser("audit", help="inverse-query and unknown-followup consistency audits")
    au.add_argument("run_dir", nargs="?", help="reuse a run's dataset and assertions")
    _add_run_flags(au)
    au.add_argument("--mode", choices=["inverse", "unknown-followup", "both"], default="both")
    au.add_argument("--n", type=int, help="number of items to audit per mode")
    au.add_argument("--synthetic", action="store_true", help="audit a generated corpus sized to --n")

    rp = sub.add_parser("replay", help="rerun a recorded run from its transcripts")
    rp.add_argument("run_dir")
    rp.add_argument("--out")

    ca = sub.add_parser("cache", help="reply cache maintenance")
    ca.add_argument("action", choices=["stats", "gc"])
    ca.add_argument("--cache-dir", default="cache")
    ca.add_argument("--runs", nargs="*", default=[], help="run directories whose replies must be kept")
    return parser


def _cmd_run(args) -> int:
    config = build_config(args)
    result = execute_run(config)
    m = result.manifest
    print(f"{m['run_id']}: {m['prediction_count']} predictions, {len(result.failures)} failed, "
          f"{m['provider_calls']} provider calls, {m['cache_hits']} cache hits -> {result.run_dir}")
    if args.score:
        print(score_run(result.run_dir).table(), end="")
    return EXIT_PARTIAL if result.failures else EXIT_OK


def _cmd_score(args) -> int:
    corpus = None
    if args.dataset:
        from .runner import load_manifest, resolve_dataset

        cfg = RunConfig.from_dict(load_manifest(args.run_dir)["config"])
        cfg.dataset = args.dataset
        cfg.format = args.format or cfg.format
        cfg.documents = args.documents or cfg.documents
        corpus = resolve_dataset(cfg)
    report = score_run(args.run_dir, include_vague_overall=not args.exclude_vague_overall, corpus=corpus)
    print(report.table(), end="")
    return EXIT_OK


def _cmd_audit(args) -> int:
    if args.run_dir:
        from .runner import load_manifest

        base = load_manifest(args.run_dir)["config"]
        overrides = build_config(args).to_dict()
        defaults = RunConfig().to_dict()
        merged = {**base, **{k: v for k, v in overrides.items() if v != defaults[k]}}
        config = RunConfig.from_dict(merged)
    else:
        config = build_config(args)
    synthetic = args.synthetic or (args.run_dir is None and args.dataset is None and args.n is not None)
    report, out_dir = execute_audit(config, args.mode, args.n, args.run_dir, synthetic=synthetic)
    print(report.table(), end="")
    print(f"written to {out_dir}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    config = replay_config(args.run_dir, args.out)
    result = execute_run(config)
    print(f"{result.manifest['run_id']}: replayed {result.manifest['prediction_count']} predictions, "
          f"{len(result.failures)} failed -> {result.run_dir}")
    return EXIT_PARTIAL if result.failures else EXIT_OK


def _cmd_cache(args) -> int:
    if args.action == "stats":
        from .gateway import ReplyCache

        print(json.dumps(ReplyCache(args.cache_dir).stats(), sort_keys=True))
    else:
        print(json.dumps(cache_gc(args.cache_dir, args.runs), sort_keys=True))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "score": _cmd_score, "audit": _cmd_audit, "replay": _cmd_replay, "cache": _cmd_cache}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, SchemaError, CorpusError, ScoringError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GatewayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
