"""Turn free-text assistant replies into structured verdicts."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .corpus import Document
from .schema import DEFAULT_REFUSALS, VAGUE, RelationSchema

log = logging.getLogger(__name__)

CLEAN, FUZZY, ABSTAIN = "clean", "fuzzy", "abstain"
YES, NO, UNKNOWN = "yes", "no", "unknown"

_NEGATION = re.compile(r"\b(not|no|never|neither|nor|isn't|wasn't|didn't|doesn't)\b")
_WORD = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_'\-]*")
_EVENT_TAG = re.compile(r"[\[<]\s*/?\s*EVENT\s+([^\]>\s]+)\s*[\]>]", re.IGNORECASE)

# Words that carry no event mention and are neither resolved nor counted as dropped.
_FILLER = frozenset("""
a an and or the of in on at to as by is are was were be been that this these those which who
event events trigger triggers word words none nothing no following following: include includes
happened happen happening before after same time than it its with from for also e.g i.e list
answer answers there here
""".split())


@dataclass(frozen=True)
class Verdict:
    kind: str
    raw_reply: str
    parse_status: str
    label: str | None = None
    yesno: str | None = None
    events: tuple[str, ...] = ()
    ambiguous: bool = False
    refusal: bool = False
    dropped: int = 0
    ambiguous_mentions: int = 0
    found: tuple[str, ...] = field(default=())


def _contains_phrase(text: str, phrase: str) -> bool:
    return re.search(r"(?<![a-z0-9_])" + re.escape(phrase) + r"(?![a-z0-9_])", text) is not None


def is_refusal(raw: str, phrases=DEFAULT_REFUSALS) -> bool:
    low = " ".join(raw.lower().split())
    return any(_contains_phrase(low, p.lower()) for p in phrases)


def parse_label(raw: str, schema: RelationSchema) -> Verdict:
    """Map a multi-class reply onto one schema label; anything unusable becomes vague."""
    low = " ".join(raw.lower().split())
    if is_refusal(low, schema.refusal_phrases):
        return Verdict("label", raw, ABSTAIN, label=VAGUE, refusal=True)

    forms = []
    for label in schema.output_labels:
        for form in schema.synonyms.get(label, (label,)):
            forms.append((form.lower(), label))
    # Longest surface first so "is included" claims its span before "include" can.
    forms.sort(key=lambda f: (-len(f[0]), f[0]))
    taken = [False] * len(low)
    hits: list[tuple[int, str]] = []
    for form, label in forms:
        for m in re.finditer(r"(?<![a-z0-9_])" + re.escape(form) + r"(?![a-z0-9_])", low):
            if any(taken[m.start():m.end()]):
                continue
            for i in range(m.start(), m.end()):
                taken[i] = True
            hits.append((m.start(), label))
    hits.sort()
    found = tuple(dict.fromkeys(label for _, label in hits))
    if not found:
        return Verdict("label", raw, ABSTAIN, label=VAGUE)
    first = found[0]
    if len(found) == 1:
        status = FUZZY if _NEGATION.search(low) else CLEAN
        return Verdict("label", raw, status, label=first, found=found)
    if len(found) == 2 and schema.inverse.get(found[0]) == found[1]:
        # "e1 before e2, i.e. e2 after e1": the first mention describes the asked order.
        return Verdict("label", raw, FUZZY, label=first, found=found)
    log.info("ambiguous relation reply %r -> %s", raw, found)
    return Verdict("label", raw, FUZZY, label=VAGUE, ambiguous=True, found=found)


def parse_yesno(raw: str, refusal_phrases=DEFAULT_REFUSALS) -> str:
    low = " ".join(raw.lower().split())
    if not low or is_refusal(low, refusal_phrases):
        return UNKNOWN
    words = _WORD.findall(low)
    if not words:
        return UNKNOWN
    if words[0] in ("yes", "yeah", "yep", "correct", "true"):
        return YES
    if words[0] in ("no", "nope", "false", "incorrect"):
        return NO
    has_yes = "yes" in words
    has_no = "no" in words
    if has_yes and not has_no:
        return YES
    if has_no and not has_yes:
        return NO
    return UNKNOWN


def yesno_verdict(raw: str, refusal_phrases=DEFAULT_REFUSALS) -> Verdict:
    answer = parse_yesno(raw, refusal_phrases)
    refusal = is_refusal(raw, refusal_phrases)
    status = CLEAN if answer != UNKNOWN else ABSTAIN
    return Verdict("yesno", raw, status, yesno=answer, refusal=refusal)


def parse_event_list(raw: str, doc: Document) -> Verdict:
    """Resolve the trigger mentions in a ranking reply to trigger ids of ``doc``.

    Mentions are tags (``[EVENT e3]``), bare trigger ids, or trigger surface strings.
    A surface shared by several triggers resolves to nothing.
    """
    ids = set(doc.trigger_ids)
    by_surface: dict[str, list[str]] = {}
    for t in doc.triggers:
        by_surface.setdefault(t.surface.lower(), []).append(t.trigger_id)

    hits: list[tuple[int, str]] = []
    text = raw
    dropped = 0
    ambiguous = 0

    def blank(s: str, a: int, b: int) -> str:
        return s[:a] + " " * (b - a) + s[b:]

    for m in list(_EVENT_TAG.finditer(text)):
        tid = m.group(1)
        if tid in ids:
            hits.append((m.start(), tid))
        elif not m.group(0).lstrip("[<").lstrip().startswith("/"):
            dropped += 1
        text = blank(text, m.start(), m.end())

    for m in list(_WORD.finditer(text)):
        if m.group(0) in ids:
            hits.append((m.start(), m.group(0)))
            text = blank(text, m.start(), m.end())

    low = text.lower()
    for surface in sorted(by_surface, key=lambda s: (-len(s), s)):
        pattern = r"(?<![a-z0-9_])" + re.escape(surface) + r"(?![a-z0-9_])"
        for m in list(re.finditer(pattern, low)):
            owners = by_surface[surface]
            if len(owners) == 1:
                hits.append((m.start(), owners[0]))
            else:
                ambiguous += 1
            low = blank(low, m.start(), m.end())

    for m in _WORD.finditer(low):
        w = m.group(0).strip("'-")
        if w and w not in _FILLER:
            dropped += 1

    hits.sort()
    events = tuple(dict.fromkeys(tid for _, tid in hits))
    status = CLEAN if not dropped and not ambiguous else FUZZY
    return Verdict("events", raw, status, events=events, dropped=dropped, ambiguous_mentions=ambiguous)
