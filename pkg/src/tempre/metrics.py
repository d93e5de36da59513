"""Per-relation and overall (micro) precision, recall and F1."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .schema import VAGUE, RelationSchema, display

FLAG_KEYS = ("conflict_vague", "undetected_vague", "abstain_vague", "truncated_context", "same_event",
             "ambiguous_reply", "failed")


class ScoringError(ValueError):
    pass


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float, bool]:
    """Precision, recall, F1 and whether any of them hit a 0/0."""
    degenerate = False
    if tp + fp:
        p = tp / (tp + fp)
    else:
        p, degenerate = 0.0, True
    if tp + fn:
        r = tp / (tp + fn)
    else:
        r, degenerate = 0.0, True
    if tp:
        # same value as 2pr/(p+r), but exact for ratios like 4/20
        f = 2 * tp / (2 * tp + fp + fn)
    else:
        f, degenerate = 0.0, True
    return p, r, f, degenerate


@dataclass(frozen=True)
class LabelTally:
    label: str
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return prf(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return prf(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self) -> float:
        return prf(self.tp, self.fp, self.fn)[2]

    @property
    def degenerate(self) -> bool:
        return prf(self.tp, self.fp, self.fn)[3]

    def to_dict(self) -> dict:
        return {"label": self.label, "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "degenerate": self.degenerate}


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    strategy: str | None
    per_label: tuple[LabelTally, ...]
    overall: LabelTally
    prediction_count: int
    gold_count: int
    include_vague_overall: bool = True
    flags: dict = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1

    def label(self, name: str) -> LabelTally:
        for t in self.per_label:
            if t.label == name:
                return t
        raise KeyError(name)

    def to_dict(self) -> dict:
        overall = self.overall.to_dict()
        overall["label"] = "overall"
        return {
            "dataset": self.dataset,
            "strategy": self.strategy,
            "include_vague_overall": self.include_vague_overall,
            "prediction_count": self.prediction_count,
            "gold_count": self.gold_count,
            "overall": overall,
            "per_label": [t.to_dict() for t in self.per_label],
            "flags": dict(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        """Relation rows against prec / recall / F1 in percent, overall first."""
        title = f"{self.dataset}" + (f" / {self.strategy}" if self.strategy else "")
        rows = [("overall", self.overall)] + [(display(t.label), t) for t in self.per_label]
        width = max(12, max(len(name) for name, _ in rows))
        lines = [title, f"{'Relation':<{width}}  {'prec':>6}  {'recall':>6}  {'F1':>6}"]
        for name, t in rows:
            mark = " *" if t.degenerate else ""
            lines.append(f"{name:<{width}}  {100 * t.precision:6.1f}  {100 * t.recall:6.1f}  {100 * t.f1:6.1f}{mark}")
        if not self.include_vague_overall:
            lines.append("(overall excludes vague)")
        if any(t.degenerate for _, t in rows):
            lines.append("* 0/0 in precision or recall, reported as 0.0")
        return "\n".join(lines) + "\n"


def score(predictions, gold, schema: RelationSchema, include_vague_overall: bool = True,
          strategy: str | None = None) -> EvalReport:
    """Score predictions (objects with ``key`` and ``label``) against gold pairs.

    Matching is on the ordered pair; every gold pair must have exactly one prediction.
    """
    gold_map = {}
    for g in gold:
        gold_map[g.key] = g.label
    seen = {}
    flags = Counter()
    for p in predictions:
        if p.key not in gold_map:
            raise ScoringError(f"prediction for unknown pair {p.key}")
        if p.key in seen:
            raise ScoringError(f"duplicate prediction for pair {p.key}")
        if p.label not in schema.output_labels:
            raise ScoringError(f"prediction label {p.label!r} outside the schema")
        seen[p.key] = p.label
        for f in getattr(p, "flags", ()):
            flags[f] += 1
    missing = [k for k in gold_map if k not in seen]
    if missing:
        raise ScoringError(f"{len(missing)} gold pairs have no prediction, e.g. {missing[0]}")

    tp, fp, fn = Counter(), Counter(), Counter()
    for key, g in gold_map.items():
        p = seen[key]
        if p == g:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    per_label = tuple(LabelTally(r, tp[r], fp[r], fn[r]) for r in schema.output_labels)
    pooled = [t for t in per_label if include_vague_overall or t.label != VAGUE]
    overall = LabelTally("overall", sum(t.tp for t in pooled), sum(t.fp for t in pooled), sum(t.fn for t in pooled))
    return EvalReport(schema.dataset_name, strategy, per_label, overall, len(seen), len(gold_map),
                      include_vague_overall, {k: flags.get(k, 0) for k in FLAG_KEYS})
