"""Consistency audits: inverse ranking queries and unknown-then-commit follow-ups."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

from .corpus import Document, context_window, mark_events, tag_legend, tagged
from .gateway import Gateway, GatewayError, QueryIntent
from .normalizer import NO, UNKNOWN, YES, parse_event_list, parse_yesno
from .schema import Assertion, RelationSchema
from .strategies import cot_question, ranking_prompt

CONSISTENT, OMISSION, MISPLACEMENT = "consistent", "omission", "misplacement"
MAX_EXAMPLES = 5


def rate(count: int, total: int) -> float | None:
    return count / total if total else None


@dataclass
class AuditReport:
    audited_count: int = 0
    inverse_consistent: int = 0
    inverse_omission: int = 0
    inverse_misplacement: int = 0
    unaudited: int = 0
    unknown_followup_asked: int = 0
    unknown_followup_total: int = 0
    unknown_followup_committed: int = 0
    committed_yes: int = 0
    committed_incorrect: int = 0
    committed_with_gold: int = 0
    examples: dict = field(default_factory=dict)

    def note(self, category: str, ref: str) -> None:
        refs = self.examples.setdefault(category, [])
        if len(refs) < MAX_EXAMPLES and ref not in refs:
            refs.append(ref)

    def __iadd__(self, other: "AuditReport") -> "AuditReport":
        for f in fields(self):
            if f.name == "examples":
                for cat, refs in other.examples.items():
                    for ref in refs:
                        self.note(cat, ref)
            else:
                setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    @property
    def inverse_violations(self) -> int:
        return self.inverse_omission + self.inverse_misplacement

    def rates(self) -> dict:
        n = self.audited_count
        return {
            "inverse_consistent_rate": rate(self.inverse_consistent, n),
            "inverse_violation_rate": rate(self.inverse_violations, n),
            "inverse_omission_rate": rate(self.inverse_omission, n),
            "inverse_misplacement_rate": rate(self.inverse_misplacement, n),
            "unknown_rate": rate(self.unknown_followup_total, self.unknown_followup_asked),
            "commit_rate": rate(self.unknown_followup_committed, self.unknown_followup_total),
            "commit_yes_rate": rate(self.committed_yes, self.unknown_followup_total),
            "committed_incorrect_rate": rate(self.committed_incorrect, self.committed_with_gold),
        }

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        # Undefined rates are left out rather than reported as 0.
        d["rates"] = {k: v for k, v in self.rates().items() if v is not None}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        r = self.rates()

        def fmt(v):
            return "    n/a" if v is None else f"{100 * v:6.1f}%"

        lines = [
            "Inverse-query audit",
            f"  audited               {self.audited_count:6d}",
            f"  consistent            {self.inverse_consistent:6d}  {fmt(r['inverse_consistent_rate'])}",
            f"  omission              {self.inverse_omission:6d}  {fmt(r['inverse_omission_rate'])}",
            f"  misplacement          {self.inverse_misplacement:6d}  {fmt(r['inverse_misplacement_rate'])}",
            f"  unaudited             {self.unaudited:6d}",
            "Unknown-then-commit audit",
            f"  questions asked       {self.unknown_followup_asked:6d}",
            f"  answered unknown      {self.unknown_followup_total:6d}  {fmt(r['unknown_rate'])}",
            f"  committed afterwards  {self.unknown_followup_committed:6d}  {fmt(r['commit_rate'])}",
            f"  committed incorrectly {self.committed_incorrect:6d}  {fmt(r['committed_incorrect_rate'])}",
        ]
        for cat in sorted(self.examples):
            lines.append(f"  e.g. {cat}: {', '.join(ref[:12] for ref in self.examples[cat])}")
        return "\n".join(lines) + "\n"


def binomial_bound(p: float, n: int, sigmas: float = 3.0) -> float:
    return sigmas * math.sqrt(p * (1 - p) / n) if n else 0.0


def _view(doc: Document, anchor: str, max_sentences: int | None) -> Document:
    if max_sentences is None:
        return doc
    return context_window(doc, [anchor], max_sentences).document


def audit_inverse(doc: Document, assertions: Iterable[Assertion], schema: RelationSchema, gateway: Gateway,
                  max_sentences: int | None = None, tag_style: str = "bracket") -> AuditReport:
    """Re-ask each ranking question, then ask the inverse question anchored at the returned event.

    The original anchor should appear in the inverse list; if it only appears in
    another relation's list it is misplaced, and if in none it is omitted.
    """
    report = AuditReport()
    for a in assertions:
        if a.source is None:
            report.unaudited += 1
            continue
        anchor, r = a.source
        member = a.other if a.anchor == anchor else a.anchor
        counterpart = schema.inverse.get(r)
        if counterpart not in schema.queryable:
            report.unaudited += 1
            continue
        first = _view(doc, anchor, max_sentences)
        second = _view(doc, member, max_sentences)
        session = gateway.open(strategy="audit_inverse", doc_id=doc.doc_id, anchor=anchor, relation=r,
                               pair=[anchor, member], purpose="audit_inverse")
        try:
            gateway.send(session, ranking_prompt(first, anchor, r, schema, tag_style),
                         QueryIntent("event_ranking", doc.doc_id, anchor=anchor, relation=r,
                                     candidates=first.trigger_ids))
            category = OMISSION
            order = [counterpart] + [q for q in schema.queryable if q != counterpart]
            for q in order:
                reply = gateway.send(
                    session, ranking_prompt(second, member, q, schema, tag_style),
                    QueryIntent("event_ranking", doc.doc_id, anchor=member, relation=q,
                                candidates=second.trigger_ids, probe="counterpart", target=anchor))
                if anchor in parse_event_list(reply, second).events:
                    category = CONSISTENT if q == counterpart else MISPLACEMENT
                    break
        except GatewayError:
            report.unaudited += 1
            continue
        ref = gateway.close(session)
        report.audited_count += 1
        if category == CONSISTENT:
            report.inverse_consistent += 1
        elif category == MISPLACEMENT:
            report.inverse_misplacement += 1
        else:
            report.inverse_omission += 1
        report.note(category, ref)
    return report


def audit_unknown_followup(doc: Document, pair, schema: RelationSchema, gateway: Gateway,
                           gold_label: str | None = None,
                           question_pairs: Sequence[tuple[str, str]] = (("before", "after"),),
                           tag_style: str = "bracket") -> AuditReport:
    """Ask r1's yes/no question; after an unknown, ask r2's in the same conversation.

    A definite yes or no to r2 after claiming not to know r1 counts as committed;
    it is incorrect when it disagrees with ``gold_label``.
    """
    e1, e2 = (pair.e1, pair.e2) if hasattr(pair, "e1") else tuple(pair)
    report = AuditReport()
    marked = mark_events(doc, tag_style)
    t1 = tagged(doc.trigger(e1), tag_style)
    t2 = tagged(doc.trigger(e2), tag_style)
    for r1, r2 in question_pairs:
        if r1 not in schema.yesno_phrasings or r2 not in schema.yesno_phrasings:
            continue
        session = gateway.open(strategy="audit_unknown", doc_id=doc.doc_id, pair=[e1, e2], relation=r1,
                               purpose="audit_unknown")
        try:
            q1 = f"Given the document {marked}. " + cot_question(schema, r1, t1, t2, tag_style=tag_style)
            a1 = parse_yesno(gateway.send(session, q1, QueryIntent("relation_yesno", doc.doc_id, e1, e2,
                                                                   relation=r1)), schema.refusal_phrases)
            a2 = None
            if a1 == UNKNOWN:
                q2 = cot_question(schema, r2, t1, t2, tag_style=tag_style)
                a2 = parse_yesno(gateway.send(session, q2, QueryIntent("relation_yesno", doc.doc_id, e1, e2,
                                                                       relation=r2)), schema.refusal_phrases)
        except GatewayError:
            report.unaudited += 1
            continue
        ref = gateway.close(session)
        report.unknown_followup_asked += 1
        if a1 != UNKNOWN:
            continue
        report.unknown_followup_total += 1
        if a2 in (YES, NO):
            report.unknown_followup_committed += 1
            report.committed_yes += a2 == YES
            if gold_label is not None:
                report.committed_with_gold += 1
                if (a2 == YES) != (gold_label == r2):
                    report.committed_incorrect += 1
                    report.note("committed_incorrect", ref)
            report.note("committed", ref)
        else:
            report.note("stayed_unknown", ref)
    return report
