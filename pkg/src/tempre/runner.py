"""Run orchestration and the on-disk run directory.

A run directory holds ``manifest.json``, ``predictions.json``, ``transcripts/``
and, for event ranking, ``assertions.json``. Everything is plain JSON.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

from .auditor import AuditReport, audit_inverse, audit_unknown_followup
from .corpus import Corpus, load_corpus
from .fixtures import BUNDLED, FixtureSpec, bundled_path, generate_fixture
from .gateway import (Gateway, GatewayError, HTTPChatProvider, ReplayProvider, ReplyCache, TranscriptStore,
                      atomic_write_text, cache_key)
from .metrics import EvalReport, score
from .oracles import GoldOracle, InconsistentOracle, NoisyOracle, RefusalOracle
from .schema import Assertion, ConfigurationError, resolve_schema
from .strategies import (STRATEGIES, Prediction, aggregate_event_ranking, failed_prediction, run_cot,
                         run_event_ranking, run_zero_shot, with_transcripts)

log = logging.getLogger(__name__)

# Excluded from the run id: they change where or how fast a run happens, not what it computes.
_NON_IDENTITY = ("workers", "out", "cache_dir", "run_id", "max_retries")


@dataclass
class RunConfig:
    dataset: str = "mini"
    format: str = "auto"
    schema: str | None = None
    documents: str | None = None
    strategy: str = "zero_shot"
    provider: str = "gold-oracle"
    model: str | None = None
    endpoint: str | None = None
    temperature: float | None = None
    seed: int = 0
    noise: float = 0.0
    confusion: str | None = None
    violation_rate: float = 0.0
    commit_rate: float | None = None
    incorrect_rate: float = 1.0
    max_context_sentences: int | None = None
    tag_style: str = "bracket"
    conflict_threshold: int = 2
    same_event_turn: bool = True
    workers: int = 1
    cache_dir: str | None = None
    out: str = "runs"
    run_id: str | None = None
    replay_from: str | None = None
    max_retries: int = 5

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def normalized_strategy(self) -> str:
        s = self.strategy.replace("-", "_")
        if s not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        return s

    def identity_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _NON_IDENTITY}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def effective_window(config: RunConfig, corpus: Corpus) -> int | None:
    """Context budget for event ranking; 0 disables, None means the dataset default."""
    if config.max_context_sentences is None:
        return 8 if corpus.dataset_name == "tddman" else None
    if config.max_context_sentences <= 0:
        return None
    return config.max_context_sentences


def resolve_dataset(config: RunConfig) -> Corpus:
    path = Path(config.dataset)
    if not path.exists():
        key = config.dataset.removeprefix("fixtures/").removesuffix(".json")
        if key in BUNDLED:
            path = bundled_path(key)
        else:
            raise ConfigurationError(f"dataset {config.dataset!r} is neither a path nor a bundled fixture "
                                     f"({', '.join(sorted(BUNDLED))})")
    schema = resolve_schema(config.schema) if config.schema else None
    return load_corpus(path, config.format, schema=schema, documents=config.documents)


def build_provider(config: RunConfig, corpus: Corpus):
    name = config.provider
    if name == "gold-oracle":
        return GoldOracle(corpus)
    if name == "noisy-oracle":
        if config.confusion:
            confusion = json.loads(Path(config.confusion).read_text("utf-8"))
            return NoisyOracle(corpus, confusion, config.seed)
        return NoisyOracle.uniform(corpus, config.noise, config.seed)
    if name == "refusal-oracle":
        return RefusalOracle(corpus)
    if name == "inconsistent-oracle":
        return InconsistentOracle(corpus, config.violation_rate, config.seed, commit_rate=config.commit_rate,
                                  incorrect_rate=config.incorrect_rate)
    if name == "replay":
        if not config.replay_from:
            raise ConfigurationError("the replay provider needs replay_from (a recorded run directory)")
        return ReplayProvider.from_run(config.replay_from)
    if name == "http":
        return HTTPChatProvider(config.endpoint, config.model or "gpt-3.5-turbo", temperature=config.temperature,
                                max_retries=config.max_retries)
    raise ConfigurationError(f"unknown provider {name!r}")


def default_cache_dir(config: RunConfig) -> Path:
    return Path(config.cache_dir) if config.cache_dir else Path(config.out).parent / "cache"


@dataclass
class RunResult:
    run_dir: Path
    predictions: list[Prediction]
    manifest: dict
    gateway: Gateway
    failures: list[tuple[str, str, str]] = field(default_factory=list)
    assertions: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _map(fn, items, workers: int):
    """Apply ``fn`` to every item, returning results in input order; exceptions are returned, not raised."""
    def guarded(item):
        try:
            return fn(item)
        except GatewayError as exc:
            log.warning("gateway failure on %s: %s", item, exc)
            return exc

    if workers <= 1:
        return [guarded(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, items))


def ranking_anchors(pairs) -> list[str]:
    return list(dict.fromkeys(t for p in pairs for t in (p.e1, p.e2)))


def _run_pairwise(corpus, strategy, gateway, config):
    schema = corpus.schema
    fn = run_zero_shot if strategy == "zero_shot" else run_cot

    def one(pair):
        doc = corpus.documents[pair.doc_id]
        if strategy == "cot":
            return run_cot(doc, pair, schema, gateway, config.tag_style, config.same_event_turn)
        return fn(doc, pair, schema, gateway, config.tag_style)

    results = _map(one, corpus.pairs, config.workers)
    preds, failures = [], []
    for pair, res in zip(corpus.pairs, results):
        if isinstance(res, Exception):
            preds.append(failed_prediction(pair, strategy))
            failures.append(pair.key)
        else:
            preds.append(res)
    return preds, failures, []


def _run_ranking(corpus, gateway, config):
    schema = corpus.schema
    window = effective_window(config, corpus)
    by_doc = corpus.pairs_by_doc()
    tasks = [(doc_id, a) for doc_id, pairs in by_doc.items() for a in ranking_anchors(pairs)]

    def one(task):
        doc_id, anchor = task
        return run_event_ranking(corpus.documents[doc_id], anchor, schema, gateway, window, config.tag_style)

    results = dict(zip(tasks, _map(one, tasks, config.workers)))
    preds, failures, assertion_rows = [], [], []
    for doc_id, pairs in by_doc.items():
        assertions = []
        for a in ranking_anchors(pairs):
            res = results[(doc_id, a)]
            if isinstance(res, Exception):
                continue
            assertions.extend(res.assertions)
            for x in res.assertions:
                assertion_rows.append({"doc_id": doc_id, "anchor": x.anchor, "relation": x.relation,
                                       "other": x.other, "source": list(x.source)})
        for pred in aggregate_event_ranking(assertions, pairs, schema, config.conflict_threshold):
            ends = [results[(doc_id, pred.e1)], results[(doc_id, pred.e2)]]
            if any(isinstance(r, Exception) for r in ends):
                pair = next(p for p in pairs if (p.e1, p.e2) == (pred.e1, pred.e2))
                preds.append(failed_prediction(pair, "event_ranking"))
                failures.append(pred.key)
                continue
            refs = [ref for r in ends for ref in r.transcripts]
            extra = ["truncated_context"] if any(r.truncated for r in ends) else []
            preds.append(with_transcripts(pred, refs, extra))
    return preds, failures, assertion_rows


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def predictions_json(preds) -> str:
    return _dump([p.to_dict() for p in preds])


def load_predictions(run_dir: str | Path) -> list[Prediction]:
    path = Path(run_dir) / "predictions.json"
    if not path.exists():
        raise FileNotFoundError(f"{path}: no predictions in this run directory")
    return [Prediction.from_dict(d) for d in json.loads(path.read_text("utf-8"))]


def load_manifest(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / "manifest.json").read_text("utf-8"))


def execute_run(config: RunConfig, corpus: Corpus | None = None, provider=None,
                use_cache: bool = True) -> RunResult:
    strategy = config.normalized_strategy()
    if config.tag_style not in ("bracket", "angle"):
        raise ConfigurationError(f"unknown tag style {config.tag_style!r}")
    if config.conflict_threshold not in (2, 3):
        raise ConfigurationError("conflict_threshold must be 2 or 3")
    corpus = corpus or resolve_dataset(config)
    provider = provider or build_provider(config, corpus)
    run_id = config.run_id or f"{corpus.dataset_name}-{strategy}-{config.identity_hash()[:10]}"
    run_dir = Path(config.out) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    cache = ReplyCache(default_cache_dir(config)) if use_cache and config.provider != "replay" else None
    gateway = Gateway(provider, cache=cache, store=TranscriptStore(run_dir))
    started = datetime.now(timezone.utc).isoformat()

    if strategy == "event_ranking":
        preds, failures, assertion_rows = _run_ranking(corpus, gateway, config)
        atomic_write_text(run_dir / "assertions.json", _dump(assertion_rows))
    else:
        preds, failures, assertion_rows = _run_pairwise(corpus, strategy, gateway, config)
    atomic_write_text(run_dir / "predictions.json", predictions_json(preds))

    schema = corpus.schema
    failed = set(failures)
    manifest = {
        "run_id": run_id,
        "dataset": corpus.dataset_name,
        "dataset_source": config.dataset,
        "strategy": strategy,
        "provider": gateway.provider_id,
        "model": gateway.model,
        "provider_name": config.provider,
        "schema_hash": schema.fingerprint(),
        "template_hashes": {
            name: hashlib.sha256(text.encode()).hexdigest()
            for name, text in _templates(schema).items()
        },
        "seed": config.seed,
        "max_context_sentences": effective_window(config, corpus),
        "tag_style": config.tag_style,
        "conflict_threshold": config.conflict_threshold,
        "config": config.to_dict(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "pairs": {":".join(p.key): ("failed" if p.key in failed else "done") for p in corpus.pairs},
        "failed": [list(k) for k in failures],
        "prediction_count": len(preds),
        # replayed replies come from transcripts, not a live service
        "provider_calls": 0 if config.provider == "replay" else gateway.provider_calls,
        "replayed": gateway.provider_calls if config.provider == "replay" else 0,
        "cache_hits": gateway.cache_hits,
    }
    atomic_write_text(run_dir / "manifest.json", _dump(manifest))
    return RunResult(run_dir, preds, manifest, gateway, failures, assertion_rows)


def _templates(schema) -> dict[str, str]:
    out = {"zero_shot": schema.zero_shot_template, "same_event": schema.same_event_template}
    out.update({f"rank_{r}": t for r, t in schema.question_phrasings.items()})
    out.update({f"ask_{r}": t for r, t in schema.yesno_phrasings.items()})
    return out


def replay_config(run_dir: str | Path, out: str | None = None) -> RunConfig:
    manifest = load_manifest(run_dir)
    cfg = RunConfig.from_dict(manifest["config"])
    cfg.provider = "replay"
    cfg.replay_from = str(run_dir)
    cfg.run_id = manifest["run_id"] + "-replay"
    if out:
        cfg.out = out
    return cfg


def score_run(run_dir: str | Path, include_vague_overall: bool = True, corpus: Corpus | None = None,
              write: bool = True) -> EvalReport:
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    preds = load_predictions(run_dir)
    if corpus is None:
        corpus = resolve_dataset(RunConfig.from_dict(manifest["config"]))
    report = score(preds, corpus.pairs, corpus.schema, include_vague_overall, manifest["strategy"])
    if write:
        suffix = "" if include_vague_overall else "_no_vague"
        atomic_write_text(run_dir / f"report{suffix}.json", report.to_json())
        atomic_write_text(run_dir / f"report{suffix}.txt", report.table())
    return report


# ---------------------------------------------------------------------------
# audits


def synthetic_audit_corpus(dataset_name: str, n: int, seed: int = 0) -> Corpus:
    pairs_per_doc = 10
    spec = FixtureSpec(dataset_name=dataset_name, random_docs=math.ceil(n / pairs_per_doc) + 1,
                       sentences_per_doc=(6, 10), pairs_per_doc=pairs_per_doc, seed=seed, doc_prefix="audit")
    return generate_fixture(spec)


def _load_assertions(run_dir: Path) -> dict[str, list[Assertion]] | None:
    path = run_dir / "assertions.json"
    if not path.exists():
        return None
    out: dict[str, list[Assertion]] = {}
    for row in json.loads(path.read_text("utf-8")):
        out.setdefault(row["doc_id"], []).append(
            Assertion(row["anchor"], row["relation"], row["other"], tuple(row["source"])))
    return out


def execute_audit(config: RunConfig, mode: str = "both", n: int | None = None, run_dir: str | Path | None = None,
                  corpus: Corpus | None = None, synthetic: bool = False) -> tuple[AuditReport, Path]:
    """Run the inverse-query and/or unknown-followup audits; ``n`` caps audited items per mode."""
    if mode not in ("inverse", "unknown-followup", "both"):
        raise ConfigurationError(f"unknown audit mode {mode!r}")
    assertions_by_doc = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        assertions_by_doc = _load_assertions(run_dir)
    if corpus is None:
        if synthetic:
            name = resolve_schema(config.schema or "matres").dataset_name
            corpus = synthetic_audit_corpus(name, n or 100, config.seed)
        else:
            corpus = resolve_dataset(config)
    provider = build_provider(config, corpus)
    out_dir = run_dir / "audit" if run_dir is not None else \
        Path(config.out) / f"audit-{corpus.dataset_name}-{config.identity_hash()[:10]}"
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = ReplyCache(default_cache_dir(config)) if config.provider != "replay" else None
    gateway = Gateway(provider, cache=cache, store=TranscriptStore(out_dir))
    schema = corpus.schema
    window = effective_window(config, corpus)
    report = AuditReport()
    by_doc = corpus.pairs_by_doc()

    if mode in ("inverse", "both"):
        budget = n
        for doc_id, pairs in by_doc.items():
            if budget is not None and budget <= 0:
                break
            doc = corpus.documents[doc_id]
            if assertions_by_doc is not None:
                assertions = assertions_by_doc.get(doc_id, [])
            else:
                assertions = []
                for a in ranking_anchors(pairs):
                    try:
                        assertions.extend(run_event_ranking(doc, a, schema, gateway, window,
                                                            config.tag_style).assertions)
                    except GatewayError:
                        report.unaudited += 1
            if budget is not None:
                assertions = assertions[:budget]
                budget -= len(assertions)
            report += audit_inverse(doc, assertions, schema, gateway, window, config.tag_style)

    if mode in ("unknown-followup", "both"):
        pairs = list(corpus.pairs)[: n] if n is not None else list(corpus.pairs)
        gold = corpus.gold_index()

        def one(pair):
            return audit_unknown_followup(corpus.documents[pair.doc_id], pair, schema, gateway,
                                          gold_label=gold[pair.key], tag_style=config.tag_style)

        for frag in _map(one, pairs, config.workers):
            if isinstance(frag, Exception):
                report.unaudited += 1
            else:
                report += frag

    atomic_write_text(out_dir / "audit.json", report.to_json())
    atomic_write_text(out_dir / "audit.txt", report.table())
    return report, out_dir


# ---------------------------------------------------------------------------
# cache maintenance


def referenced_keys(run_dirs) -> set[str]:
    keys = set()
    for run_dir in run_dirs:
        for sub in [Path(run_dir), Path(run_dir) / "audit"]:
            store = TranscriptStore(sub)
            for t in store:
                provider, model = t.metadata.get("provider"), t.metadata.get("model")
                msgs = t.messages
                for i, m in enumerate(msgs):
                    if m.role == "assistant" and i:
                        keys.add(cache_key(provider, model, [(x.role, x.content) for x in msgs[: i - 1]],
                                           msgs[i - 1].content))
    return keys


def cache_gc(cache_dir: str | Path, run_dirs=()) -> dict:
    """Drop temp files and corrupt entries; with ``run_dirs``, also entries no run references."""
    cache = ReplyCache(cache_dir)
    removed = 0
    if cache.root.exists():
        for tmp in cache.root.glob(".*.tmp"):
            tmp.unlink()
            removed += 1
    keep = referenced_keys(run_dirs) if run_dirs else None
    for key in cache.keys():
        if cache.get(key) is None or (keep is not None and key not in keep):
            cache.path(key).unlink()
            removed += 1
    return {"removed": removed, **cache.stats()}
