"""Simulated providers that answer from gold annotations through the query intent.

Each answer draws its randomness from a hash of the oracle seed and the query
identity, so answer streams do not depend on scheduling order or worker count.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
from typing import Mapping

from .corpus import Corpus
from .gateway import INTENT_KINDS, QueryIntent
from .schema import ANCHOR_FIRST, VAGUE, display

UNKNOWN_REPLY = "Unknown."


class OracleError(RuntimeError):
    pass


def derived_rng(seed, *parts) -> random.Random:
    blob = json.dumps([seed, *parts], separators=(",", ":"))
    return random.Random(int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "big"))


def _yes(flag: bool) -> str:
    return "Yes." if flag else "No."


def _label_reply(label: str) -> str:
    text = display(label)
    return text[0].upper() + text[1:] + "."


def knowledge_digest(corpus: Corpus) -> str:
    blob = {
        "schema": corpus.schema.fingerprint(),
        "pairs": sorted([p.doc_id, p.e1, p.e2, p.label] for p in corpus.pairs),
        "same_event": sorted(sorted(sorted(g) for g in d.same_event) for d in corpus.documents.values()),
    }
    return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:12]


class SimulatedOracle:
    provider_id = "oracle"
    variant = "oracle"
    kinds = frozenset(INTENT_KINDS)

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self.schema = corpus.schema
        self.calls = 0
        self._lock = threading.Lock()
        self._gold: dict[str, dict[tuple[str, str], str]] = {}
        for p in corpus.pairs:
            self._gold.setdefault(p.doc_id, {})[(p.e1, p.e2)] = p.label
        self.knowledge = knowledge_digest(corpus)

    @property
    def model(self) -> str:
        # Replies depend on the gold annotations, so they are part of the model identity
        # (otherwise two corpora sharing a text would share cache entries).
        return f"{self.variant}@{self.knowledge}"

    # -- gold helpers ------------------------------------------------------
    def gold_pair(self, doc_id: str, a: str, b: str) -> tuple[tuple[str, str], str] | None:
        """The gold pair over {a, b} as ``((e1, e2), label)``, or None."""
        g = self._gold.get(doc_id, {})
        if (a, b) in g:
            return (a, b), g[(a, b)]
        if (b, a) in g:
            return (b, a), g[(b, a)]
        return None

    def believed(self, doc_id: str, a: str, b: str, group: str) -> str:
        """Relation of (a, b) this oracle believes in; vague for pairs without gold."""
        hit = self.gold_pair(doc_id, a, b)
        if hit is None:
            return VAGUE
        (e1, e2), label = hit
        label = self.perturb(doc_id, e1, e2, label, group)
        return label if (e1, e2) == (a, b) else self.schema.inverse[label]

    def perturb(self, doc_id, e1, e2, label, group) -> str:
        return label

    def neighbours(self, doc_id: str, anchor: str) -> list[str]:
        out = []
        for (e1, e2) in self._gold.get(doc_id, {}):
            if e1 == anchor:
                out.append(e2)
            elif e2 == anchor:
                out.append(e1)
        return out

    def ranking_members(self, intent: QueryIntent) -> list[str]:
        direction = self.schema.ranking_direction.get(intent.relation)
        members = []
        for m in self.neighbours(intent.doc_id, intent.anchor):
            if intent.candidates and m not in intent.candidates:
                continue
            if direction == ANCHOR_FIRST:
                rel = self.believed(intent.doc_id, intent.anchor, m, "ranking")
            else:
                rel = self.believed(intent.doc_id, m, intent.anchor, "ranking")
            if rel == intent.relation:
                members.append(m)
        return members

    def _order(self, doc_id, ids) -> list[str]:
        doc = self.corpus.documents[doc_id]
        pos = {tid: i for i, tid in enumerate(doc.trigger_ids)}
        return sorted(set(ids), key=lambda t: pos.get(t, 0))

    def list_reply(self, doc_id, ids) -> str:
        ids = self._order(doc_id, ids)
        return ", ".join(ids) if ids else "None."

    # -- provider protocol -------------------------------------------------
    def complete(self, messages, intent: QueryIntent) -> str:
        if intent.kind not in self.kinds:
            raise OracleError(f"{self.provider_id} does not answer {intent.kind} queries")
        if intent.doc_id not in self.corpus.documents:
            raise OracleError(f"unknown document {intent.doc_id}")
        with self._lock:
            self.calls += 1
        return getattr(self, f"answer_{intent.kind}")(intent)

    def answer_relation_multiclass(self, intent):
        return _label_reply(self.believed(intent.doc_id, intent.e1, intent.e2, "multiclass"))

    def answer_relation_yesno(self, intent):
        return _yes(self.believed(intent.doc_id, intent.e1, intent.e2, "yesno") == intent.relation)

    def answer_same_event(self, intent):
        return _yes(self.corpus.documents[intent.doc_id].coreferent(intent.e1, intent.e2))

    def answer_event_ranking(self, intent):
        return self.list_reply(intent.doc_id, self.ranking_members(intent))


class GoldOracle(SimulatedOracle):
    provider_id = "gold-oracle"
    variant = "gold"


class NoisyOracle(SimulatedOracle):
    """Answers from a label drawn per pair from ``confusion[gold]``."""

    provider_id = "noisy-oracle"

    def __init__(self, corpus: Corpus, confusion: Mapping[str, Mapping[str, float]], seed: int = 0):
        super().__init__(corpus)
        out = corpus.schema.output_labels
        self.confusion = {}
        for gold in corpus.schema.gold_labels:
            dist = dict(confusion.get(gold, {gold: 1.0}))
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9 or any(p < 0 for p in dist.values()):
                raise ValueError(f"confusion row for {gold!r} must be a probability distribution")
            bad = [r for r in dist if r not in out]
            if bad:
                raise ValueError(f"confusion row for {gold!r} names labels outside the schema: {bad}")
            self.confusion[gold] = dist
        self.seed = seed
        digest = hashlib.sha256(json.dumps(self.confusion, sort_keys=True).encode()).hexdigest()[:10]
        self.variant = f"noisy(seed={seed},confusion={digest})"

    @classmethod
    def uniform(cls, corpus: Corpus, flip: float, seed: int = 0) -> "NoisyOracle":
        """Keep the gold label with probability ``1 - flip``, else any other output label."""
        out = corpus.schema.output_labels
        confusion = {}
        for g in corpus.schema.gold_labels:
            others = [r for r in out if r != g]
            row = {r: flip / len(others) for r in others}
            row[g] = 1.0 - flip
            confusion[g] = row
        return cls(corpus, confusion, seed)

    def perturb(self, doc_id, e1, e2, label, group):
        # Keyed on the pair, not the relation asked, so one CoT session sees a single belief.
        rng = derived_rng(self.seed, doc_id, e1, e2, group)
        labels = sorted(self.confusion[label])
        weights = [self.confusion[label][r] for r in labels]
        return rng.choices(labels, weights)[0]


class RefusalOracle(SimulatedOracle):
    provider_id = "refusal-oracle"
    variant = "refusal"

    def answer_relation_multiclass(self, intent):
        return UNKNOWN_REPLY

    answer_relation_yesno = answer_same_event = answer_event_ranking = answer_relation_multiclass


class InconsistentOracle(SimulatedOracle):
    """Reproduces the two consistency failures seen with a real chat model.

    * Inverse ranking queries issued by the audit (``probe="counterpart"``) lose
      the expected event with probability ``violation_rate``, either dropping it
      (omission) or listing it under another relation (misplacement).
    * Yes/no questions about ``unknown_relations`` are answered "Unknown."; any
      other yes/no question is answered definitely with probability
      ``commit_rate`` (default ``violation_rate``) and that answer is wrong with
      probability ``incorrect_rate``. Otherwise the reply is "Unknown.".
    """

    provider_id = "inconsistent-oracle"

    def __init__(self, corpus: Corpus, violation_rate: float, seed: int = 0, commit_rate: float | None = None,
                 incorrect_rate: float = 1.0, unknown_relations=("before",), misplacement_share: float = 0.5):
        super().__init__(corpus)
        commit_rate = violation_rate if commit_rate is None else commit_rate
        for name, p in (("violation_rate", violation_rate), ("commit_rate", commit_rate),
                        ("incorrect_rate", incorrect_rate), ("misplacement_share", misplacement_share)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        self.violation_rate = violation_rate
        self.commit_rate = commit_rate
        self.incorrect_rate = incorrect_rate
        self.unknown_relations = tuple(unknown_relations)
        self.misplacement_share = misplacement_share
        self.seed = seed
        self.variant = (f"inconsistent(v={violation_rate},commit={commit_rate},incorrect={incorrect_rate},"
                        f"unknown={'+'.join(self.unknown_relations)},mis={misplacement_share},seed={seed})")

    def answer_relation_multiclass(self, intent):
        truth = self.believed(intent.doc_id, intent.e1, intent.e2, "multiclass")
        rng = derived_rng(self.seed, intent.doc_id, intent.e1, intent.e2, "multiclass")
        if rng.random() < self.violation_rate:
            truth = rng.choice([r for r in self.schema.output_labels if r != truth])
        return _label_reply(truth)

    def answer_relation_yesno(self, intent):
        if intent.relation in self.unknown_relations:
            return UNKNOWN_REPLY
        rng = derived_rng(self.seed, intent.doc_id, intent.e1, intent.e2, intent.relation, intent.kind)
        if rng.random() >= self.commit_rate:
            return UNKNOWN_REPLY
        truth = self.believed(intent.doc_id, intent.e1, intent.e2, "yesno") == intent.relation
        wrong = rng.random() < self.incorrect_rate
        return _yes(truth != wrong)

    def _corruption(self, doc_id: str, asker: str, member: str) -> tuple[str, str | None] | None:
        """None if consistent, else ``("omission", None)`` or ``("misplacement", relation)``."""
        rng = derived_rng(self.seed, doc_id, asker, member, "counterpart")
        if rng.random() >= self.violation_rate:
            return None
        if rng.random() >= self.misplacement_share:
            return ("omission", None)
        direction = self.schema.ranking_direction
        true_rel = {r for r in self.schema.queryable
                    if (self.believed(doc_id, asker, member, "ranking") if direction[r] == ANCHOR_FIRST
                        else self.believed(doc_id, member, asker, "ranking")) == r}
        choices = [r for r in self.schema.queryable if r not in true_rel]
        return ("misplacement", rng.choice(choices))

    def answer_event_ranking(self, intent):
        members = self.ranking_members(intent)
        if intent.probe != "counterpart":
            return self.list_reply(intent.doc_id, members)
        out = []
        for m in self.neighbours(intent.doc_id, intent.anchor):
            if intent.candidates and m not in intent.candidates:
                continue
            fault = self._corruption(intent.doc_id, intent.anchor, m)
            if fault is None:
                if m in members:
                    out.append(m)
            elif fault[0] == "misplacement" and fault[1] == intent.relation:
                out.append(m)
        return self.list_reply(intent.doc_id, out)


PROVIDER_NAMES = ("gold-oracle", "noisy-oracle", "refusal-oracle", "inconsistent-oracle", "replay", "http")
