"""Event-annotated corpora: loading, event marking and bounded context windows."""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .schema import RelationSchema, resolve_schema

FORMATS = ("native_json", "timeml_xml", "matres_tsv", "tdd_tsv")

# Official distributions spell labels differently; every spelling maps onto a canonical name.
LABEL_ALIASES = {
    "before": "before", "b": "before",
    "after": "after", "a": "after",
    "equal": "equal", "e": "equal",
    "simultaneous": "simultaneous", "s": "simultaneous",
    "include": "include", "includes": "include", "i": "include",
    "is_included": "is_included", "is included": "is_included", "ii": "is_included",
    "vague": "vague", "v": "vague", "none": "vague",
}

TAG_STYLES = ("bracket", "angle")


class CorpusError(ValueError):
    pass


class MarkingError(ValueError):
    pass


@dataclass(frozen=True)
class EventTrigger:
    trigger_id: str
    surface: str
    start: int
    end: int
    sentence_index: int = -1

    @property
    def char_span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    sentence_spans: tuple[tuple[int, int], ...]
    triggers: tuple[EventTrigger, ...]
    same_event: frozenset = frozenset()
    _index: Mapping[str, EventTrigger] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {t.trigger_id: t for t in self.triggers})

    def trigger(self, trigger_id: str) -> EventTrigger:
        try:
            return self._index[trigger_id]
        except KeyError:
            raise CorpusError(f"document {self.doc_id}: unknown trigger {trigger_id!r}") from None

    def has_trigger(self, trigger_id: str) -> bool:
        return trigger_id in self._index

    @property
    def trigger_ids(self) -> tuple[str, ...]:
        return tuple(t.trigger_id for t in self.triggers)

    def sentence(self, i: int) -> str:
        s, e = self.sentence_spans[i]
        return self.text[s:e]

    def coreferent(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.same_event


@dataclass(frozen=True)
class GoldPair:
    doc_id: str
    e1: str
    e2: str
    label: str

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.doc_id, self.e1, self.e2)


@dataclass(frozen=True)
class Corpus:
    dataset_name: str
    schema: RelationSchema
    documents: Mapping[str, Document]
    pairs: tuple[GoldPair, ...]

    def pairs_by_doc(self) -> dict[str, list[GoldPair]]:
        out: dict[str, list[GoldPair]] = {}
        for p in self.pairs:
            out.setdefault(p.doc_id, []).append(p)
        return out

    def gold_index(self) -> dict[tuple[str, str, str], str]:
        return {p.key: p.label for p in self.pairs}


# ---------------------------------------------------------------------------
# validation


def _assign_sentences(doc_id, text, spans, triggers) -> tuple[EventTrigger, ...]:
    out = []
    for t in triggers:
        idx = -1
        for i, (s, e) in enumerate(spans):
            if s <= t.start and t.end <= e:
                idx = i
                break
        if idx < 0:
            raise CorpusError(f"document {doc_id}: trigger {t.trigger_id} is not inside any sentence")
        if t.sentence_index not in (-1, idx):
            raise CorpusError(f"document {doc_id}: trigger {t.trigger_id} sentence index mismatch")
        out.append(EventTrigger(t.trigger_id, t.surface, t.start, t.end, idx))
    return tuple(out)


def validate_document(doc: Document) -> Document:
    n = len(doc.text)
    prev_end = 0
    for i, (s, e) in enumerate(doc.sentence_spans):
        if not (0 <= s < e <= n):
            raise CorpusError(f"document {doc.doc_id}: sentence {i} span ({s}, {e}) out of bounds")
        if s < prev_end:
            raise CorpusError(f"document {doc.doc_id}: sentence {i} overlaps or is out of order")
        prev_end = e
    seen = set()
    for t in doc.triggers:
        if t.trigger_id in seen:
            raise CorpusError(f"document {doc.doc_id}: duplicate trigger id {t.trigger_id}")
        seen.add(t.trigger_id)
        if not (0 <= t.start < t.end <= n):
            raise CorpusError(f"document {doc.doc_id}: trigger {t.trigger_id} span out of bounds")
        if doc.text[t.start:t.end] != t.surface:
            raise CorpusError(
                f"document {doc.doc_id}: trigger {t.trigger_id} surface {t.surface!r} does not match "
                f"text {doc.text[t.start:t.end]!r}")
    triggers = _assign_sentences(doc.doc_id, doc.text, doc.sentence_spans, doc.triggers)
    for pair in doc.same_event:
        for tid in pair:
            if tid not in seen:
                raise CorpusError(f"document {doc.doc_id}: same_event names unknown trigger {tid}")
    return Document(doc.doc_id, doc.text, tuple(doc.sentence_spans), triggers, doc.same_event)


def build_corpus(schema: RelationSchema, documents: Iterable[Document], pairs: Iterable[GoldPair],
                 dataset_name: str | None = None) -> Corpus:
    docs: dict[str, Document] = {}
    for d in documents:
        if d.doc_id in docs:
            raise CorpusError(f"duplicate document id {d.doc_id}")
        docs[d.doc_id] = validate_document(d)
    seen = set()
    checked = []
    gold = set(schema.gold_labels)
    for p in pairs:
        doc = docs.get(p.doc_id)
        if doc is None:
            raise CorpusError(f"pair ({p.e1}, {p.e2}) references unknown document {p.doc_id}")
        for tid in (p.e1, p.e2):
            if not doc.has_trigger(tid):
                raise CorpusError(f"document {p.doc_id}: pair references unresolvable trigger {tid}")
        if p.e1 == p.e2:
            raise CorpusError(f"document {p.doc_id}: pair relates {p.e1} to itself")
        if p.label not in gold:
            raise CorpusError(f"document {p.doc_id}: label {p.label!r} not in {schema.dataset_name} gold labels")
        if p.key in seen:
            raise CorpusError(f"document {p.doc_id}: duplicate pair ({p.e1}, {p.e2})")
        seen.add(p.key)
        checked.append(p)
    return Corpus(dataset_name or schema.dataset_name, schema, docs, tuple(checked))


def canonical_label(raw: str, label_map: Mapping[str, str] | None = None, where: str = "") -> str:
    key = raw.strip()
    if label_map and key in label_map:
        return label_map[key]
    norm = key.lower().replace("-", "_")
    if norm in LABEL_ALIASES:
        return LABEL_ALIASES[norm]
    norm = norm.replace("_", " ")
    if norm in LABEL_ALIASES:
        return LABEL_ALIASES[norm]
    raise CorpusError(f"{where}unknown label string {raw!r}")


# ---------------------------------------------------------------------------
# sentence splitting

_SENT_BOUNDARY = re.compile(r"([.!?][\"')\]]*)\s+(?=[\"'(\[]*[A-Z0-9])|()\n\s*\n")


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Regex sentence splitter; spans exclude surrounding whitespace."""
    spans = []
    start = 0
    for m in _SENT_BOUNDARY.finditer(text):
        end = m.end(1) if m.group(1) is not None else m.start()
        spans.append((start, end))
        start = m.end()
    spans.append((start, len(text)))
    out = []
    for s, e in spans:
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        if e > s:
            out.append((s, e))
    return out


def _merge_straddled(spans, triggers) -> list[tuple[int, int]]:
    spans = list(spans)
    for t in triggers:
        hits = [i for i, (s, e) in enumerate(spans) if s < t.end and t.start < e]
        if len(hits) > 1:
            lo, hi = hits[0], hits[-1]
            spans[lo:hi + 1] = [(spans[lo][0], spans[hi][1])]
    return spans


# ---------------------------------------------------------------------------
# native JSON


def _doc_from_json(obj: dict, where: str) -> tuple[Document, list[GoldPair], list[dict]]:
    try:
        doc_id = str(obj["doc_id"])
        text = obj["text"]
        triggers = [EventTrigger(str(t["id"]), t["surface"], int(t["start"]), int(t["end"]))
                    for t in obj["triggers"]]
        sents = obj.get("sentences")
        spans = [tuple(map(int, s)) for s in sents] if sents is not None else split_sentences(text)
        same = frozenset(frozenset(map(str, p)) for p in obj.get("same_event", []))
        raw_pairs = obj.get("pairs", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"{where}: malformed document record ({exc!r})") from None
    return Document(doc_id, text, tuple(spans), tuple(triggers), same), [], raw_pairs


def _load_native(path: Path, schema_spec, label_map):
    raw = path.read_text("utf-8")
    records: list[tuple[str, dict]]
    dataset_name = None
    if path.suffix == ".jsonl":
        records = []
        for lineno, line in enumerate(raw.splitlines(), 1):
            if not line.strip():
                continue
            try:
                records.append((f"{path}:{lineno}", json.loads(line)))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc.msg}") from None
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{exc.lineno}: {exc.msg}") from None
        if isinstance(data, dict) and "documents" in data:
            dataset_name = data.get("dataset_name")
            data = data["documents"]
        if not isinstance(data, list):
            raise CorpusError(f"{path}: expected a list of documents")
        records = [(f"{path}: document #{i}", d) for i, d in enumerate(data)]
    schema = resolve_schema(schema_spec or dataset_name or "")
    docs, pairs = [], []
    for where, obj in records:
        doc, _, raw_pairs = _doc_from_json(obj, where)
        docs.append(doc)
        for j, p in enumerate(raw_pairs):
            try:
                label = canonical_label(p["label"], label_map, f"{where} pair #{j}: ")
                pairs.append(GoldPair(doc.doc_id, str(p["e1"]), str(p["e2"]), label))
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"{where} pair #{j}: malformed pair ({exc!r})") from None
    return build_corpus(schema, docs, pairs, dataset_name or schema.dataset_name)


def corpus_to_native(corpus: Corpus) -> dict:
    by_doc = corpus.pairs_by_doc()
    documents = []
    for doc_id, doc in corpus.documents.items():
        documents.append({
            "doc_id": doc_id,
            "text": doc.text,
            "sentences": [list(s) for s in doc.sentence_spans],
            "triggers": [{"id": t.trigger_id, "surface": t.surface, "start": t.start, "end": t.end}
                         for t in doc.triggers],
            "same_event": sorted(sorted(p) for p in doc.same_event),
            "pairs": [{"e1": p.e1, "e2": p.e2, "label": p.label} for p in by_doc.get(doc_id, [])],
        })
    return {"dataset_name": corpus.dataset_name, "documents": documents}


def dump_native(corpus: Corpus) -> str:
    return json.dumps(corpus_to_native(corpus), indent=1, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# TimeML


@dataclass
class _TimeMLDoc:
    doc_id: str
    document: Document
    instances: dict[str, str]  # eiid -> eid
    tlinks: list[tuple[str, str, str, str]]  # (eiid1, eiid2, relType, where)


def _parse_timeml(path: Path) -> _TimeMLDoc:
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise CorpusError(f"{path}: line {exc.position[0]} column {exc.position[1]}: malformed XML") from None
    text_el = root.find(".//TEXT")
    if text_el is None:
        raise CorpusError(f"{path}: no TEXT element")
    if path.name.endswith(".tml"):
        doc_id = path.name[: -len(".tml")]
    else:
        docid_el = root.find(".//DOCID")
        doc_id = docid_el.text.strip() if docid_el is not None and docid_el.text else path.stem

    parts: list[str] = []
    events: list[tuple[str, int, int]] = []
    sent_spans: list[tuple[int, int]] = []
    pos = 0

    def walk(el):
        nonlocal pos
        start = pos
        if el.text:
            parts.append(el.text)
            pos += len(el.text)
        for child in el:
            walk(child)
            if child.tail:
                parts.append(child.tail)
                pos += len(child.tail)
        if el.tag == "EVENT":
            eid = el.get("eid")
            if eid is None:
                raise CorpusError(f"{path}: EVENT without eid at offset {start}")
            events.append((eid, start, pos))
        elif el.tag == "s":
            sent_spans.append((start, pos))

    walk(text_el)
    text = "".join(parts)
    triggers = [EventTrigger(eid, text[s:e], s, e) for eid, s, e in events]
    if sent_spans:
        spans = [(s, e) for s, e in sent_spans if e > s]
    else:
        spans = split_sentences(text)
    spans = _merge_straddled(spans, triggers)
    doc = Document(doc_id, text, tuple(spans), tuple(triggers))

    instances = {}
    for mi in root.iter("MAKEINSTANCE"):
        if mi.get("eiid") and mi.get("eventID"):
            instances[mi.get("eiid")] = mi.get("eventID")
    tlinks = []
    for i, tl in enumerate(root.iter("TLINK")):
        a = tl.get("eventInstanceID")
        b = tl.get("relatedToEventInstance")
        if a is None or b is None:
            continue  # timex-anchored link
        tlinks.append((a, b, tl.get("relType", ""), f"{path}: TLINK #{i} ({tl.get('lid', '?')})"))
    return _TimeMLDoc(doc_id, doc, instances, tlinks)


def _timeml_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.rglob("*") if p.suffix in (".tml", ".xml"))
        if not files:
            raise CorpusError(f"{path}: no .tml files")
        return files
    return [path]


def _resolve_instance(tdoc: _TimeMLDoc, ref: str, where: str) -> str:
    if tdoc.document.has_trigger(ref):
        return ref
    if ref in tdoc.instances:
        return tdoc.instances[ref]
    if ref.isdigit() and f"ei{ref}" in tdoc.instances:
        return tdoc.instances[f"ei{ref}"]
    raise CorpusError(f"{where}: document {tdoc.doc_id}: unresolvable event reference {ref!r}")


def _load_timeml(path: Path, schema_spec, label_map):
    schema = resolve_schema(schema_spec or "tbdense")
    docs, pairs = [], []
    for f in _timeml_files(path):
        tdoc = _parse_timeml(f)
        docs.append(tdoc.document)
        for a, b, rel, where in tdoc.tlinks:
            e1 = _resolve_instance(tdoc, a, where)
            e2 = _resolve_instance(tdoc, b, where)
            pairs.append(GoldPair(tdoc.doc_id, e1, e2, canonical_label(rel, label_map, f"{where}: ")))
    return build_corpus(schema, docs, pairs)


def _load_tsv(path: Path, fmt: str, schema_spec, label_map, documents):
    if documents is None:
        raise CorpusError(f"{fmt} needs the TimeML documents (documents=...)")
    schema = resolve_schema(schema_spec or ("matres" if fmt == "matres_tsv" else "tddman"))
    tdocs = {t.doc_id: t for t in (_parse_timeml(f) for f in _timeml_files(Path(documents)))}
    files = sorted(p for p in path.iterdir() if p.suffix in (".tsv", ".txt")) if path.is_dir() else [path]
    pairs = []
    used = {}
    for f in files:
        for lineno, line in enumerate(f.read_text("utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.rstrip("\n").split("\t")
            where = f"{f}:{lineno}"
            if fmt == "matres_tsv" and len(cols) == 6:
                doc_id, _, _, a, b, rel = cols
            elif len(cols) == 4:
                doc_id, a, b, rel = cols
            else:
                raise CorpusError(f"{where}: expected 4{' or 6' if fmt == 'matres_tsv' else ''} "
                                  f"tab-separated columns, got {len(cols)}")
            doc_id = doc_id.strip()
            if doc_id.endswith(".tml"):
                doc_id = doc_id[:-4]
            tdoc = tdocs.get(doc_id)
            if tdoc is None:
                raise CorpusError(f"{where}: document {doc_id} not found among TimeML files")
            e1 = _resolve_instance(tdoc, a.strip(), where)
            e2 = _resolve_instance(tdoc, b.strip(), where)
            pairs.append(GoldPair(doc_id, e1, e2, canonical_label(rel, label_map, f"{where}: ")))
            used[doc_id] = tdoc.document
    return build_corpus(schema, used.values(), pairs)


def load_corpus(path: str | Path, format: str = "auto", schema=None, documents: str | Path | None = None,
                label_map: Mapping[str, str] | None = None) -> Corpus:
    """Load and validate a corpus.

    ``schema`` is a dataset name, JSON path or schema object; native files may carry
    their own ``dataset_name``. The TSV formats need ``documents``, a TimeML file or
    directory supplying the text.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"{path}: no such file or directory")
    if format == "auto":
        if path.suffix in (".json", ".jsonl"):
            format = "native_json"
        elif path.suffix in (".tml", ".xml") or path.is_dir():
            format = "timeml_xml"
        else:
            raise CorpusError(f"{path}: cannot infer the format; pass one of {FORMATS}")
    if format == "native_json":
        return _load_native(path, schema, label_map)
    if format == "timeml_xml":
        return _load_timeml(path, schema, label_map)
    if format in ("matres_tsv", "tdd_tsv"):
        return _load_tsv(path, format, schema, label_map, documents)
    raise CorpusError(f"unknown format {format!r}; expected one of {FORMATS}")


# ---------------------------------------------------------------------------
# marking and windows


def tag_pair(trigger_id: str, style: str = "bracket") -> tuple[str, str]:
    if style == "bracket":
        return f"[EVENT {trigger_id}]", f"[/EVENT {trigger_id}]"
    if style == "angle":
        return f"<EVENT {trigger_id}>", f"</EVENT {trigger_id}>"
    raise MarkingError(f"unknown tag style {style!r}")


def tag_legend(style: str = "bracket") -> str:
    return "[EVENT][/EVENT]" if style == "bracket" else "<EVENT></EVENT>"


def tagged(trigger: EventTrigger, style: str = "bracket") -> str:
    open_, close = tag_pair(trigger.trigger_id, style)
    return f"{open_}{trigger.surface}{close}"


_TAG_RE = re.compile(r"\[/?EVENT[^\]]*\]|</?EVENT[^>]*>")


def strip_event_tags(text: str) -> str:
    return _TAG_RE.sub("", text)


def mark_events(doc: Document, style: str = "bracket", subset: Iterable[str] | None = None) -> str:
    if subset is None:
        chosen = list(doc.triggers)
    else:
        chosen = [doc.trigger(tid) for tid in dict.fromkeys(subset)]
    chosen.sort(key=lambda t: (t.start, t.end))
    for a, b in zip(chosen, chosen[1:]):
        if b.start < a.end:
            raise MarkingError(f"document {doc.doc_id}: triggers {a.trigger_id} and {b.trigger_id} overlap")
    out = []
    pos = 0
    for t in chosen:
        open_, close = tag_pair(t.trigger_id, style)
        out.append(doc.text[pos:t.start])
        out.append(open_ + doc.text[t.start:t.end] + close)
        pos = t.end
    out.append(doc.text[pos:])
    return "".join(out)


@dataclass(frozen=True)
class Window:
    document: Document
    sentence_indices: tuple[int, ...]
    truncated: bool
    contiguous: bool
    overflow: bool


def select_window(n_sentences: int, anchor_sentences: Iterable[int], max_sentences: int = 8) -> tuple[list[int], bool]:
    """Pick sentence indices around the anchors; returns ``(indices, overflow)``.

    Expansion proceeds by distance: at distance d every anchor sentence, in order,
    offers the sentence d before it and then the one d after it.
    """
    if max_sentences < 1:
        raise ValueError("max_sentences must be >= 1")
    anchors = sorted(set(anchor_sentences))
    if not anchors:
        raise ValueError("at least one anchor is required")
    if len(anchors) > max_sentences:
        return anchors, True
    chosen = set(anchors)
    d = 1
    while len(chosen) < min(max_sentences, n_sentences):
        for a in anchors:
            for cand in (a - d, a + d):
                if len(chosen) >= max_sentences:
                    break
                if 0 <= cand < n_sentences:
                    chosen.add(cand)
        d += 1
    return sorted(chosen), False


def context_window(doc: Document, anchors: Iterable[str], max_sentences: int = 8) -> Window:
    anchors = list(anchors)
    if not anchors:
        raise ValueError("anchors must be non-empty")
    anchor_sents = [doc.trigger(a).sentence_index for a in anchors]
    indices, overflow = select_window(len(doc.sentence_spans), anchor_sents, max_sentences)
    runs: list[list[int]] = []
    for i in indices:
        if runs and runs[-1][-1] == i - 1:
            runs[-1].append(i)
        else:
            runs.append([i])
    pieces, spans, offsets = [], [], []
    cursor = 0
    for k, run in enumerate(runs):
        if k:
            pieces.append(" ... ")
            cursor += 5
        lo = doc.sentence_spans[run[0]][0]
        hi = doc.sentence_spans[run[-1]][1]
        offsets.append((lo, hi, cursor - lo))
        for i in run:
            s, e = doc.sentence_spans[i]
            spans.append((s + cursor - lo, e + cursor - lo))
        pieces.append(doc.text[lo:hi])
        cursor += hi - lo
    triggers = []
    keep = set(indices)
    for t in doc.triggers:
        if t.sentence_index not in keep:
            continue
        for lo, hi, shift in offsets:
            if lo <= t.start and t.end <= hi:
                triggers.append(EventTrigger(t.trigger_id, t.surface, t.start + shift, t.end + shift,
                                             indices.index(t.sentence_index)))
                break
    same = frozenset(p for p in doc.same_event if all(any(tr.trigger_id == x for tr in triggers) for x in p))
    sub = Document(doc.doc_id, "".join(pieces), tuple(spans), tuple(triggers), same)
    return Window(sub, tuple(indices), len(indices) < len(doc.sentence_spans), len(runs) <= 1, overflow)
