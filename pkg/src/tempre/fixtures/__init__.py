"""Synthetic mini-corpora for offline runs and tests.

Bundled fixtures live next to this module as native JSON and are rebuilt with::

    python -m tempre.fixtures
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from ..corpus import Corpus, Document, EventTrigger, GoldPair, build_corpus, dump_native, load_corpus
from ..schema import VAGUE, resolve_schema


class FixtureError(ValueError):
    pass


@dataclass
class DocTemplate:
    """Sentences with ``*word*`` marking each trigger; pairs name triggers by surface."""

    doc_id: str
    sentences: Sequence[str]
    pairs: Sequence[tuple[str, str, str]] = ()
    same_event: Sequence[tuple[str, str]] = ()


@dataclass
class FixtureSpec:
    dataset_name: str = "matres"
    documents: Sequence[DocTemplate] = ()
    random_docs: int = 0
    sentences_per_doc: tuple[int, int] = (4, 6)
    triggers_per_doc: int | None = None
    pairs_per_doc: int = 5
    require_all_labels: bool = False
    vague_rate: float = 0.15
    seed: int = 0
    doc_prefix: str = "synth"


SUBJECTS = ["The mayor", "Officials", "The committee", "Police", "The company", "Investors", "The minister",
            "Residents", "The union", "Analysts", "The court", "Rebels", "The board", "Doctors", "The army"]
OBJECTS = ["the proposal", "the budget", "a statement", "the deal", "new rules", "the results", "the plan",
           "a report", "the offer", "the agreement", "its forecast", "the strike", "the contract"]
TAILS = ["on Monday", "after the meeting", "last week", "in the capital", "before dawn", "during the talks",
         "late on Friday", "in a brief note", "at the hearing", "earlier this year", ""]
VERBS = ["announced", "approved", "rejected", "signed", "criticized", "delayed", "reviewed", "released",
         "praised", "questioned", "blocked", "revised", "defended", "endorsed", "cancelled", "published",
         "challenged", "accepted", "drafted", "suspended", "disputed", "confirmed", "discussed", "unveiled",
         "withdrew", "proposed", "negotiated", "finalized", "debated", "investigated", "postponed", "filed",
         "adopted", "amended", "examined", "condemned", "backed", "welcomed", "opposed", "supported",
         "renewed", "extended", "restored", "outlined", "submitted", "ratified", "audited", "leaked"]

_MARK = re.compile(r"\*([^*]+)\*")


def _relation_from_intervals(a, b, labels, rng, vague_rate) -> str:
    if VAGUE in labels and rng.random() < vague_rate:
        return VAGUE
    (s1, e1), (s2, e2) = a, b
    candidates = []
    if "equal" in labels:
        candidates = ["before" if s1 < s2 else "after" if s1 > s2 else "equal"]
    else:
        if (s1, e1) == (s2, e2):
            candidates = ["simultaneous"]
        elif e1 <= s2:
            candidates = ["before"]
        elif e2 <= s1:
            candidates = ["after"]
        elif s1 <= s2 and e2 <= e1:
            candidates = ["include"]
        elif s2 <= s1 and e1 <= e2:
            candidates = ["is_included"]
        else:
            candidates = [VAGUE if VAGUE in labels else ("before" if s1 < s2 else "after")]
    return candidates[0]


def _render(template: DocTemplate, doc_index: int) -> tuple[Document, dict[str, str]]:
    text_parts = []
    spans = []
    triggers = []
    by_surface: dict[str, str] = {}
    pos = 0
    for k, sent in enumerate(template.sentences):
        if k:
            text_parts.append(" ")
            pos += 1
        start = pos
        out = []
        last = 0
        for m in _MARK.finditer(sent):
            out.append(sent[last:m.start()])
            pos += m.start() - last
            surface = m.group(1)
            if surface in by_surface:
                raise FixtureError(f"{template.doc_id}: trigger surface {surface!r} is not unique")
            tid = f"e{len(triggers) + 1}"
            triggers.append(EventTrigger(tid, surface, pos, pos + len(surface)))
            by_surface[surface] = tid
            out.append(surface)
            pos += len(surface)
            last = m.end()
        out.append(sent[last:])
        pos += len(sent) - last
        text_parts.append("".join(out))
        spans.append((start, pos))
    same = frozenset(frozenset((by_surface[a], by_surface[b])) for a, b in template.same_event)
    return Document(template.doc_id, "".join(text_parts), tuple(spans), tuple(triggers), same), by_surface


def check_inverse_consistency(pairs: Sequence[tuple[str, str, str]], schema, where: str = "") -> None:
    seen: dict[tuple[str, str], str] = {}
    for a, b, r in pairs:
        if a == b:
            raise FixtureError(f"{where}pair relates {a} to itself")
        if (a, b) in seen and seen[(a, b)] != r:
            raise FixtureError(f"{where}pair ({a}, {b}) labelled both {seen[(a, b)]} and {r}")
        if (b, a) in seen and seen[(b, a)] != schema.inverse[r]:
            raise FixtureError(f"{where}pair ({a}, {b}) labelled {r} but ({b}, {a}) labelled {seen[(b, a)]}")
        seen[(a, b)] = r


def _random_template(spec: FixtureSpec, rng: random.Random, index: int, schema) -> DocTemplate:
    lo, hi = spec.sentences_per_doc
    n_sent = rng.randint(lo, hi)
    n_trig = spec.triggers_per_doc or n_sent
    verbs = rng.sample(VERBS, n_trig)
    hosts = sorted(rng.sample(range(n_sent), n_trig)) if n_trig <= n_sent else \
        sorted(list(range(n_sent)) + rng.choices(range(n_sent), k=n_trig - n_sent))
    per_sentence: dict[int, list[str]] = {}
    for v, h in zip(verbs, hosts):
        per_sentence.setdefault(h, []).append(v)
    sentences = []
    for i in range(n_sent):
        subj = rng.choice(SUBJECTS)
        obj = rng.choice(OBJECTS)
        tail = rng.choice(TAILS)
        vs = per_sentence.get(i, [])
        if not vs:
            body = f"{subj} made no comment {tail}".strip()
        elif len(vs) == 1:
            body = f"{subj} *{vs[0]}* {obj} {tail}".strip()
        else:
            body = f"{subj} *{vs[0]}* {obj} and " + " and ".join(f"*{v}* it" for v in vs[1:]) + f" {tail}"
            body = body.strip()
        sentences.append(body + ".")
    intervals = {}
    for v in verbs:
        s = rng.randint(0, 8)
        intervals[v] = (s, s + rng.choice([0, 1, 2, 4]) if "equal" not in schema.labels else s)
    everything = [(verbs[i], verbs[j]) for i in range(len(verbs)) for j in range(i + 1, len(verbs))]
    chosen = rng.sample(everything, min(spec.pairs_per_doc, len(everything)))
    chosen.sort(key=lambda p: (verbs.index(p[0]), verbs.index(p[1])))
    gold = list(schema.gold_labels)
    pairs = [(a, b, _relation_from_intervals(intervals[a], intervals[b], gold, rng, spec.vague_rate))
             for a, b in chosen]
    if spec.require_all_labels:
        missing = [r for r in gold if r not in {p[2] for p in pairs}]
        if len(gold) > len(pairs):
            raise FixtureError(f"{len(pairs)} pairs cannot cover {len(gold)} labels")
        counts = {r: sum(p[2] == r for p in pairs) for r in gold}
        for r in missing:
            k = next(i for i in rng.sample(range(len(pairs)), len(pairs)) if counts[pairs[i][2]] > 1)
            counts[pairs[k][2]] -= 1
            pairs[k] = (pairs[k][0], pairs[k][1], r)
            counts[r] = 1
    return DocTemplate(f"{spec.doc_prefix}{index:03d}", sentences, pairs)


def generate_fixture(spec: FixtureSpec, seed: int | None = None) -> Corpus:
    seed = spec.seed if seed is None else seed
    rng = random.Random(seed)
    schema = resolve_schema(spec.dataset_name)
    templates = list(spec.documents)
    for i in range(spec.random_docs):
        templates.append(_random_template(spec, rng, i, schema))
    docs, pairs = [], []
    for k, t in enumerate(templates):
        doc, by_surface = _render(t, k)
        for a, b, r in t.pairs:
            if a not in by_surface or b not in by_surface:
                raise FixtureError(f"{t.doc_id}: pair ({a}, {b}) names an unmarked trigger")
            if r not in schema.gold_labels:
                raise FixtureError(f"{t.doc_id}: label {r!r} not in {schema.dataset_name} gold labels")
        check_inverse_consistency([(by_surface[a], by_surface[b], r) for a, b, r in t.pairs], schema,
                                  f"{t.doc_id}: ")
        docs.append(doc)
        pairs.extend(GoldPair(t.doc_id, by_surface[a], by_surface[b], r) for a, b, r in t.pairs)
    return build_corpus(schema, docs, pairs, schema.dataset_name)


# ---------------------------------------------------------------------------
# bundled mini corpora (20 pairs each)

SEASON = [
    "The season *started* in May with a home game.",
    "Fans *cheered* as the team *won* its opening match.",
    "Injuries *hurt* the squad through the summer.",
    "The coach *blamed* the schedule in an interview.",
    "The season *ended* in October after a close final.",
]
COUNCIL = [
    "The city council *met* on Tuesday to review the budget.",
    "Members *argued* for hours about road repairs.",
    "The mayor *spoke* briefly at the end.",
    "Reporters *asked* about the delayed vote.",
]
HARBOR = [
    "A storm *hit* the coast early on Sunday.",
    "Waves *flooded* the old harbor district.",
    "Residents *fled* to higher ground.",
    "Emergency crews *arrived* within an hour.",
    "The mayor *declared* a state of emergency.",
    "Power lines *fell* across the main road.",
    "Volunteers *cleared* debris for two days.",
    "Insurers *estimated* the damage on Wednesday.",
    "The governor *visited* the area later that week.",
    "Officials *promised* new sea walls.",
    "Engineers *surveyed* the damaged piers.",
    "The harbor *reopened* a month later.",
]

MINI_PAIRS = {
    "matres": {
        "season": [("started", "ended", "before"), ("started", "cheered", "before"), ("cheered", "won", "equal"),
                   ("won", "ended", "before"), ("hurt", "ended", "before"), ("cheered", "hurt", "vague"),
                   ("blamed", "hurt", "after")],
        "council": [("met", "argued", "before"), ("argued", "spoke", "before"), ("spoke", "asked", "vague"),
                    ("asked", "met", "after")],
        "harbor": [("hit", "flooded", "before"), ("fled", "flooded", "after"), ("arrived", "declared", "vague"),
                   ("fell", "hit", "after"), ("cleared", "estimated", "before"), ("visited", "promised", "equal"),
                   ("hit", "reopened", "before"), ("surveyed", "reopened", "before"), ("flooded", "surveyed", "before")],
    },
    "tbdense": {
        "season": [("started", "ended", "before"), ("started", "cheered", "before"),
                   ("cheered", "won", "simultaneous"), ("won", "ended", "before"), ("hurt", "ended", "before"),
                   ("cheered", "hurt", "vague"), ("blamed", "hurt", "after")],
        "council": [("met", "argued", "include"), ("argued", "spoke", "before"), ("spoke", "met", "is_included"),
                    ("asked", "met", "after")],
        "harbor": [("hit", "flooded", "before"), ("fled", "flooded", "after"), ("arrived", "declared", "vague"),
                   ("fell", "hit", "is_included"), ("cleared", "estimated", "before"),
                   ("visited", "promised", "include"), ("hit", "reopened", "before"),
                   ("surveyed", "reopened", "before"), ("flooded", "surveyed", "simultaneous")],
    },
    "tddman": {
        "season": [("started", "ended", "before"), ("started", "cheered", "before"),
                   ("cheered", "won", "simultaneous"), ("won", "ended", "before"), ("hurt", "ended", "before"),
                   ("cheered", "hurt", "before"), ("blamed", "hurt", "after")],
        "council": [("met", "argued", "include"), ("argued", "spoke", "before"), ("spoke", "met", "is_included"),
                    ("asked", "met", "after")],
        "harbor": [("hit", "flooded", "before"), ("fled", "flooded", "after"), ("arrived", "declared", "before"),
                   ("fell", "hit", "is_included"), ("cleared", "estimated", "before"),
                   ("visited", "promised", "include"), ("hit", "reopened", "before"),
                   ("surveyed", "reopened", "before"), ("flooded", "surveyed", "simultaneous")],
    },
}


def mini_spec(dataset_name: str = "matres") -> FixtureSpec:
    pairs = MINI_PAIRS[dataset_name]
    return FixtureSpec(
        dataset_name=dataset_name,
        documents=[
            DocTemplate("season", SEASON, pairs["season"], same_event=[("started", "ended")]),
            DocTemplate("council", COUNCIL, pairs["council"]),
            DocTemplate("harbor", HARBOR, pairs["harbor"]),
        ],
        seed=7,
    )


BUNDLED = {"mini": "matres", "mini_matres": "matres", "mini_tbdense": "tbdense", "mini_tddman": "tddman"}


def bundled_path(name: str) -> Path:
    key = name.removeprefix("fixtures/").removesuffix(".json")
    if key not in BUNDLED:
        raise KeyError(name)
    if key == "mini":
        key = "mini_matres"
    return Path(str(resources.files("tempre.fixtures").joinpath(f"{key}.json")))


def load_bundled(name: str = "mini") -> Corpus:
    return load_corpus(bundled_path(name), "native_json")


def regenerate(directory: str | Path | None = None) -> list[Path]:
    directory = Path(directory) if directory else Path(__file__).parent
    written = []
    for name in ("matres", "tbdense", "tddman"):
        path = directory / f"mini_{name}.json"
        path.write_text(dump_native(generate_fixture(mini_spec(name))), "utf-8")
        written.append(path)
    return written
