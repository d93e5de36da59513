"""The zero-shot, event-ranking and chain-of-thought prompting procedures."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .corpus import Document, GoldPair, context_window, mark_events, tag_legend, tagged
from .gateway import Gateway, QueryIntent
from .normalizer import ABSTAIN, YES, parse_event_list, parse_label, parse_yesno
from .schema import ANCHOR_FIRST, VAGUE, Assertion, RelationSchema, display

STRATEGIES = ("zero_shot", "event_ranking", "cot")
FLAGS = ("truncated_context", "conflict_vague", "undetected_vague", "abstain_vague", "same_event",
         "ambiguous_reply", "failed")
IN_THAT_EVENT = " in that event"


@dataclass(frozen=True)
class Prediction:
    doc_id: str
    e1: str
    e2: str
    label: str
    strategy: str
    transcripts: tuple[str, ...] = ()
    flags: frozenset = frozenset()

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.doc_id, self.e1, self.e2)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "e1": self.e1,
            "e2": self.e2,
            "label": self.label,
            "strategy": self.strategy,
            "transcripts": list(self.transcripts),
            "flags": sorted(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Prediction":
        return cls(d["doc_id"], d["e1"], d["e2"], d["label"], d["strategy"],
                   tuple(d.get("transcripts", ())), frozenset(d.get("flags", ())))


def _pair_ids(pair) -> tuple[str, str]:
    if isinstance(pair, GoldPair):
        return pair.e1, pair.e2
    return tuple(pair)


def relation_list(schema: RelationSchema) -> str:
    return ", ".join(display(r) for r in schema.labels)


def run_zero_shot(doc: Document, pair, schema: RelationSchema, gateway: Gateway,
                  tag_style: str = "bracket") -> Prediction:
    e1, e2 = _pair_ids(pair)
    prompt = schema.zero_shot_template.format(
        document=mark_events(doc, tag_style), relation_list=relation_list(schema),
        e1=tagged(doc.trigger(e1), tag_style), e2=tagged(doc.trigger(e2), tag_style), tags=tag_legend(tag_style))
    session = gateway.open(strategy="zero_shot", doc_id=doc.doc_id, pair=[e1, e2], purpose="zero_shot")
    reply = gateway.send(session, prompt, QueryIntent("relation_multiclass", doc.doc_id, e1, e2))
    ref = gateway.close(session)
    verdict = parse_label(reply, schema)
    flags = set()
    if verdict.parse_status == ABSTAIN:
        flags.add("abstain_vague")
    if verdict.ambiguous:
        flags.add("ambiguous_reply")
    return Prediction(doc.doc_id, e1, e2, verdict.label, "zero_shot", (ref,), frozenset(flags))


@dataclass
class RankingResult:
    anchor: str
    assertions: list[Assertion] = field(default_factory=list)
    lists: dict[str, tuple[str, ...]] = field(default_factory=dict)
    transcripts: list[str] = field(default_factory=list)
    truncated: bool = False
    window: tuple[int, ...] = ()
    dropped: int = 0


def ranking_prompt(view: Document, anchor: str, relation: str, schema: RelationSchema,
                   tag_style: str = "bracket") -> str:
    return schema.question_phrasings[relation].format(
        document=mark_events(view, tag_style), anchor=tagged(view.trigger(anchor), tag_style),
        tags=tag_legend(tag_style))


def run_event_ranking(doc: Document, anchor: str, schema: RelationSchema, gateway: Gateway,
                      max_sentences: int | None = None, tag_style: str = "bracket",
                      relations: Sequence[str] | None = None, probe: str = "primary",
                      target: str | None = None) -> RankingResult:
    """Ask one "which events ..." question per queryable relation around ``anchor``."""
    doc.trigger(anchor)
    result = RankingResult(anchor)
    view = doc
    if max_sentences is not None:
        window = context_window(doc, [anchor], max_sentences)
        view = window.document
        result.truncated = window.truncated
        result.window = window.sentence_indices
    for r in relations or schema.queryable:
        prompt = ranking_prompt(view, anchor, r, schema, tag_style)
        session = gateway.open(strategy="event_ranking", doc_id=doc.doc_id, anchor=anchor, relation=r,
                               purpose=probe, window=list(result.window))
        intent = QueryIntent("event_ranking", doc.doc_id, anchor=anchor, relation=r,
                             candidates=view.trigger_ids, probe=probe, target=target)
        reply = gateway.send(session, prompt, intent)
        result.transcripts.append(gateway.close(session))
        verdict = parse_event_list(reply, view)
        result.dropped += verdict.dropped
        members = tuple(a for a in verdict.events if a != anchor)
        result.lists[r] = members
        for a in members:
            if schema.ranking_direction[r] == ANCHOR_FIRST:
                result.assertions.append(Assertion(anchor, r, a, (anchor, r)))
            else:
                result.assertions.append(Assertion(a, r, anchor, (anchor, r)))
    return result


def decide(labels: Iterable[str], schema: RelationSchema, conflict_threshold: int = 2) -> tuple[str, set]:
    """Collapse the oriented labels asserted for one pair into a single label."""
    counts = Counter(labels)
    if not counts:
        return VAGUE, {"undetected_vague"}
    if len(counts) >= conflict_threshold:
        return VAGUE, {"conflict_vague"}
    order = {r: i for i, r in enumerate(schema.output_labels)}
    best = min(counts, key=lambda r: (-counts[r], order.get(r, len(order))))
    return best, set()


def aggregate_event_ranking(assertions: Iterable[Assertion], gold_pairs: Iterable[GoldPair],
                            schema: RelationSchema, conflict_threshold: int = 2) -> list[Prediction]:
    """One prediction per gold pair from the assertions of a single document."""
    by_pair: dict[frozenset, list[Assertion]] = {}
    for a in assertions:
        by_pair.setdefault(frozenset((a.anchor, a.other)), []).append(a)
    out = []
    for gp in gold_pairs:
        found = by_pair.get(frozenset((gp.e1, gp.e2)), [])
        oriented = [schema.orient(a, (gp.e1, gp.e2)) for a in found]
        label, flags = decide(oriented, schema, conflict_threshold)
        out.append(Prediction(gp.doc_id, gp.e1, gp.e2, label, "event_ranking", (), frozenset(flags)))
    return out


def cot_question(schema: RelationSchema, relation: str, e1: str, e2: str, scope: str = "",
                 tag_style: str = "bracket") -> str:
    return schema.yesno_phrasings[relation].format(e1=e1, e2=e2, scope=scope, tags=tag_legend(tag_style))


def run_cot(doc: Document, pair, schema: RelationSchema, gateway: Gateway, tag_style: str = "bracket",
            same_event_turn: bool = True) -> Prediction:
    """Same-event check, then one yes/no question per relation until the first yes."""
    e1, e2 = _pair_ids(pair)
    marked = mark_events(doc, tag_style)
    t1 = tagged(doc.trigger(e1), tag_style)
    t2 = tagged(doc.trigger(e2), tag_style)
    session = gateway.open(strategy="cot", doc_id=doc.doc_id, pair=[e1, e2], purpose="cot")
    flags = set()
    scope = ""
    preamble = ""
    if same_event_turn:
        prompt = schema.same_event_template.format(document=marked, e1=t1, e2=t2, tags=tag_legend(tag_style))
        reply = gateway.send(session, prompt, QueryIntent("same_event", doc.doc_id, e1, e2))
        if parse_yesno(reply, schema.refusal_phrases) == YES:
            flags.add("same_event")
            scope = IN_THAT_EVENT
    else:
        preamble = f"Given the document {marked}. "
    label = None
    for r in schema.cot_order:
        question = preamble + cot_question(schema, r, t1, t2, scope, tag_style)
        preamble = ""
        reply = gateway.send(session, question, QueryIntent("relation_yesno", doc.doc_id, e1, e2, relation=r))
        if parse_yesno(reply, schema.refusal_phrases) == YES:
            label = r
            break
    if label is None:
        label = VAGUE
        flags.add("abstain_vague")
    ref = gateway.close(session)
    return Prediction(doc.doc_id, e1, e2, label, "cot", (ref,), frozenset(flags))


def failed_prediction(pair: GoldPair, strategy: str) -> Prediction:
    return Prediction(pair.doc_id, pair.e1, pair.e2, VAGUE, strategy, (), frozenset({"failed"}))


def with_transcripts(pred: Prediction, refs: Iterable[str], extra_flags: Iterable[str] = ()) -> Prediction:
    return replace(pred, transcripts=tuple(dict.fromkeys(refs)), flags=pred.flags | frozenset(extra_flags))
