"""Relation label sets, the inverse-relation algebra and per-label prompt phrasings."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple

LABEL_NAMES = ("before", "after", "equal", "simultaneous", "include", "is_included", "vague")
VAGUE = "vague"

CANONICAL_INVERSE = {
    "before": "after",
    "after": "before",
    "include": "is_included",
    "is_included": "include",
    "equal": "equal",
    "simultaneous": "simultaneous",
    "vague": "vague",
}

# anchor_first templates ask "(anchor, r, ?)", answer_first ones ask "(?, r, anchor)".
ANSWER_FIRST = "answer_first"
ANCHOR_FIRST = "anchor_first"

DEFAULT_REFUSALS = (
    "cannot determine",
    "can't determine",
    "cannot be determined",
    "unable to determine",
    "unclear from the given information",
    "it is unclear",
    "cannot answer",
    "can't answer",
    "not possible to determine",
    "not enough information",
    "insufficient information",
    "unknown",
)

DEFAULT_SYNONYMS = {
    "before": ("before",),
    "after": ("after",),
    "equal": ("equal",),
    "simultaneous": ("simultaneous", "simultaneously"),
    "include": ("include", "includes"),
    "is_included": ("is included", "is_included", "is-included"),
    "vague": ("vague",),
}


class SchemaError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class Assertion(NamedTuple):
    """An oriented triplet ``(anchor, relation, other)``.

    ``source`` names the ranking query that produced it as ``(query_anchor, query_relation)``.
    """

    anchor: str
    relation: str
    other: str
    source: tuple[str, str] | None = None


def display(label: str) -> str:
    """Human-facing spelling used inside prompts (``is_included`` -> ``is included``)."""
    return label.replace("_", " ")


@dataclass(frozen=True)
class RelationSchema:
    dataset_name: str
    labels: tuple[str, ...]
    inverse: Mapping[str, str]
    queryable: tuple[str, ...]
    question_phrasings: Mapping[str, str]
    ranking_direction: Mapping[str, str]
    yesno_phrasings: Mapping[str, str]
    zero_shot_template: str
    same_event_template: str
    cot_order: tuple[str, ...]
    synonyms: Mapping[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_SYNONYMS))
    refusal_phrases: tuple[str, ...] = DEFAULT_REFUSALS

    def __post_init__(self):
        validate_schema(self)

    @property
    def gold_labels(self) -> tuple[str, ...]:
        return self.labels

    @property
    def output_labels(self) -> tuple[str, ...]:
        """Gold labels plus ``vague``, which every schema can emit."""
        if VAGUE in self.labels:
            return self.labels
        return self.labels + (VAGUE,)

    def inverse_of(self, r: str) -> str:
        if r not in self.output_labels:
            raise SchemaError(f"label {r!r} is not in the {self.dataset_name} schema")
        return self.inverse[r]

    def orient(self, assertion, target_pair) -> str:
        return orient(assertion, target_pair, self)

    def to_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "labels": list(self.labels),
            "inverse": dict(self.inverse),
            "queryable": list(self.queryable),
            "question_phrasings": dict(self.question_phrasings),
            "ranking_direction": dict(self.ranking_direction),
            "yesno_phrasings": dict(self.yesno_phrasings),
            "zero_shot_template": self.zero_shot_template,
            "same_event_template": self.same_event_template,
            "cot_order": list(self.cot_order),
            "synonyms": {k: list(v) for k, v in self.synonyms.items()},
            "refusal_phrases": list(self.refusal_phrases),
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def validate_schema(schema: RelationSchema) -> None:
    unknown = [r for r in schema.labels if r not in LABEL_NAMES]
    if unknown:
        raise SchemaError(f"unknown relation labels {unknown}")
    if len(set(schema.labels)) != len(schema.labels):
        raise SchemaError("duplicate labels")
    out = schema.output_labels
    for r in out:
        inv = schema.inverse.get(r)
        if inv is None:
            raise SchemaError(f"inverse map is missing {r!r}")
        if inv not in out:
            raise SchemaError(f"inverse of {r!r} is {inv!r}, outside the schema")
        if schema.inverse.get(inv) != r:
            raise SchemaError(f"inverse map is not an involution at {r!r}")
    if schema.inverse[VAGUE] != VAGUE:
        raise SchemaError("vague must be self-inverse")
    if VAGUE in schema.queryable:
        raise SchemaError("vague has no ranking question")
    for r in schema.queryable:
        if r not in schema.labels:
            raise SchemaError(f"queryable label {r!r} not in labels")
        if r not in schema.question_phrasings:
            raise SchemaError(f"no ranking question for {r!r}")
        if schema.ranking_direction.get(r) not in (ANSWER_FIRST, ANCHOR_FIRST):
            raise SchemaError(f"ranking direction for {r!r} must be {ANSWER_FIRST} or {ANCHOR_FIRST}")
    for r in schema.cot_order:
        if r not in out:
            raise SchemaError(f"cot_order label {r!r} not in schema")
        if r not in schema.yesno_phrasings:
            raise SchemaError(f"no yes/no question for {r!r}")
    for r in schema.synonyms:
        if r not in LABEL_NAMES:
            raise SchemaError(f"synonyms given for unknown label {r!r}")


def inverse_of(schema: RelationSchema, r: str) -> str:
    return schema.inverse_of(r)


def orient(assertion, target_pair, schema: RelationSchema | None = None) -> str:
    """Project an ``(anchor, r, other)`` answer onto the ordered pair ``(e1, e2)``."""
    anchor, r, other = assertion[0], assertion[1], assertion[2]
    e1, e2 = target_pair
    inverse = schema.inverse if schema is not None else CANONICAL_INVERSE
    if schema is not None and r not in schema.output_labels:
        raise SchemaError(f"label {r!r} is not in the {schema.dataset_name} schema")
    if (anchor, other) == (e1, e2):
        return r
    if (anchor, other) == (e2, e1):
        return inverse[r]
    raise AssertionError(f"assertion ({anchor}, {r}, {other}) does not concern pair ({e1}, {e2})")


def _template(family: str, name: str) -> str:
    return resources.files("tempre.templates").joinpath(family).joinpath(f"{name}.txt").read_text("utf-8").rstrip("\n")


def _default_cot_order(labels, yesno) -> tuple[str, ...]:
    # Co-occurrence first, then recitation order, vague last (only where a question exists).
    head = [r for r in ("equal", "simultaneous") if r in labels]
    rest = [r for r in labels if r not in head and r != VAGUE]
    order = head + rest
    if VAGUE in yesno:
        order.append(VAGUE)
    return tuple(r for r in order if r in yesno)


def _build(dataset_name: str, family: str, labels: tuple[str, ...], queryable: tuple[str, ...], asked) -> RelationSchema:
    direction = {r: (ANCHOR_FIRST if r in ("include", "is_included") else ANSWER_FIRST) for r in queryable}
    yesno = {r: _template(family, f"ask_{r}") for r in asked}
    return RelationSchema(
        dataset_name=dataset_name,
        labels=labels,
        inverse={r: CANONICAL_INVERSE[r] for r in set(labels) | {VAGUE}},
        queryable=queryable,
        question_phrasings={r: _template(family, f"rank_{r}") for r in queryable},
        ranking_direction=direction,
        yesno_phrasings=yesno,
        zero_shot_template=_template(family, "zero_shot"),
        same_event_template=_template(family, "same_event"),
        cot_order=_default_cot_order(labels, yesno),
    )


DENSE_QUERYABLE = ("before", "after", "simultaneous", "include", "is_included")


def builtin_schema(dataset_name: str) -> RelationSchema:
    name = dataset_name.lower().replace("-", "").replace("_", "")
    if name == "matres":
        return _build("matres", "matres", ("before", "after", "vague", "equal"),
                      ("before", "after", "equal"), ("before", "after", "equal", "vague"))
    if name in ("tbdense", "timebankdense"):
        return _build("tbdense", "dense",
                      ("before", "after", "include", "is_included", "simultaneous", "vague"),
                      DENSE_QUERYABLE, DENSE_QUERYABLE)
    if name in ("tddman", "tddiscourse"):
        return _build("tddman", "dense",
                      ("before", "after", "include", "is_included", "simultaneous"),
                      DENSE_QUERYABLE, DENSE_QUERYABLE)
    raise ConfigurationError(f"unknown dataset {dataset_name!r}; expected matres, tbdense or tddman")


BUILTIN_DATASETS = ("matres", "tbdense", "tddman")


def load_schema(path: str | Path) -> RelationSchema:
    """Load a schema override from JSON.

    Fields missing from the file are taken from the built-in schema of the same
    ``dataset_name`` when one exists. All invariants are re-validated.
    """
    data = json.loads(Path(path).read_text("utf-8"))
    if "dataset_name" not in data:
        raise SchemaError(f"{path}: dataset_name is required")
    try:
        base = builtin_schema(data["dataset_name"]).to_dict()
    except ConfigurationError:
        base = {}
    merged = {**base, **data}
    for required in ("labels", "inverse", "queryable", "question_phrasings", "yesno_phrasings",
                     "zero_shot_template", "same_event_template"):
        if required not in merged:
            raise SchemaError(f"{path}: missing field {required!r}")
    labels = tuple(merged["labels"])
    yesno = dict(merged["yesno_phrasings"])
    queryable = tuple(merged["queryable"])
    direction = merged.get("ranking_direction") or {
        r: (ANCHOR_FIRST if r in ("include", "is_included") else ANSWER_FIRST) for r in queryable}
    synonyms = {**DEFAULT_SYNONYMS, **{k: tuple(v) for k, v in merged.get("synonyms", {}).items()}}
    refusals = tuple(merged.get("refusal_phrases", DEFAULT_REFUSALS))
    if "extra_refusal_phrases" in data:
        refusals += tuple(data["extra_refusal_phrases"])
    return RelationSchema(
        dataset_name=merged["dataset_name"],
        labels=labels,
        inverse=dict(merged["inverse"]),
        queryable=queryable,
        question_phrasings=dict(merged["question_phrasings"]),
        ranking_direction=dict(direction),
        yesno_phrasings=yesno,
        zero_shot_template=merged["zero_shot_template"],
        same_event_template=merged["same_event_template"],
        cot_order=tuple(merged.get("cot_order") or _default_cot_order(labels, yesno)),
        synonyms=synonyms,
        refusal_phrases=refusals,
    )


def resolve_schema(spec: str | Path | RelationSchema) -> RelationSchema:
    """Accept a schema object, a built-in dataset name or a JSON path."""
    if isinstance(spec, RelationSchema):
        return spec
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        return load_schema(path)
    return builtin_schema(str(spec))
