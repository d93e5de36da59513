import json

import pytest
from hypothesis import given, settings, strategies as st

from tempre.corpus import (CorpusError, Document, EventTrigger, GoldPair, MarkingError, build_corpus,
                           context_window, corpus_to_native, dump_native, load_corpus, mark_events,
                           select_window, split_sentences, strip_event_tags, tag_pair)
from tempre.fixtures import FixtureSpec, generate_fixture
from tempre.schema import builtin_schema

from conftest import ids, make_corpus


def twenty_sentences():
    sents = [f"Sentence number {i} is plain." for i in range(20)]
    sents[0] = "The storm *hit* the town."
    sents[5] = "The mayor *spoke* to reporters."
    sents[6] = "Crews *arrived* soon after."
    sents[19] = "The town *recovered* slowly."
    return make_corpus("matres", {"long": (sents, [])}).documents["long"]


# -- native format -----------------------------------------------------------

def test_native_two_docs_five_pairs(tmp_path):
    corpus = make_corpus("matres", {
        "d1": (["A *x1* happened.", "Then *x2* and *x3* came."],
               [("x1", "x2", "before"), ("x2", "x3", "equal"), ("x1", "x3", "before")]),
        "d2": (["He *y1* and she *y2*."], [("y1", "y2", "vague"), ("y2", "y1", "vague")]),
    })
    path = tmp_path / "c.json"
    path.write_text(dump_native(corpus))
    loaded = load_corpus(path, "native_json")
    assert len(loaded.pairs) == 5
    assert corpus_to_native(loaded) == corpus_to_native(corpus)


def test_native_jsonl_and_list(tmp_path):
    corpus = make_corpus("matres", {"d": (["A *x* then *y*."], [("x", "y", "before")])})
    docs = corpus_to_native(corpus)["documents"]
    p = tmp_path / "c.jsonl"
    p.write_text("\n".join(json.dumps(d) for d in docs))
    assert len(load_corpus(p, schema="matres").pairs) == 1
    p2 = tmp_path / "l.json"
    p2.write_text(json.dumps(docs))
    assert load_corpus(p2, schema="matres").dataset_name == "matres"


def _one_doc(pairs, triggers=None):
    text = "The storm hit. Crews arrived."
    triggers = triggers or [{"id": "e1", "surface": "hit", "start": 10, "end": 13},
                            {"id": "e2", "surface": "arrived", "start": 21, "end": 28}]
    return {"dataset_name": "matres", "documents": [{"doc_id": "d", "text": text, "triggers": triggers,
                                                    "pairs": pairs}]}


@pytest.mark.parametrize("pairs,needle", [
    ([{"e1": "e1", "e2": "e9", "label": "before"}], "e9"),
    ([{"e1": "e1", "e2": "e1", "label": "before"}], "itself"),
    ([{"e1": "e1", "e2": "e2", "label": "include"}], "include"),
    ([{"e1": "e1", "e2": "e2", "label": "sooner"}], "sooner"),
    ([{"e1": "e1", "e2": "e2", "label": "before"}, {"e1": "e1", "e2": "e2", "label": "after"}], "duplicate"),
])
def test_native_validation_errors(tmp_path, pairs, needle):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(_one_doc(pairs)))
    with pytest.raises(CorpusError, match=needle):
        load_corpus(p)


def test_surface_mismatch_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(_one_doc([], [{"id": "e1", "surface": "hat", "start": 10, "end": 13}])))
    with pytest.raises(CorpusError, match="e1"):
        load_corpus(p)


def test_malformed_json_position(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"documents": [\n  {"doc_id": }\n]}')
    with pytest.raises(CorpusError, match=":2"):
        load_corpus(p)


# -- TimeML and TSV ----------------------------------------------------------

TML = """<?xml version="1.0" ?>
<TimeML>
<DOCID>wsj_0001</DOCID>
<TEXT><s>The company <EVENT eid="e1" class="OCCURRENCE">said</EVENT> on <TIMEX3 tid="t1">Monday</TIMEX3> it <EVENT eid="e2">sold</EVENT> the unit.</s> <s>Shares <EVENT eid="e3">rose</EVENT> later.</s></TEXT>
<MAKEINSTANCE eiid="ei1" eventID="e1"/>
<MAKEINSTANCE eiid="ei2" eventID="e2"/>
<MAKEINSTANCE eiid="ei3" eventID="e3"/>
<TLINK lid="l1" relType="AFTER" eventInstanceID="ei1" relatedToEventInstance="ei2"/>
<TLINK lid="l2" relType="IS_INCLUDED" eventInstanceID="ei2" relatedToTime="t1"/>
<TLINK lid="l3" relType="BEFORE" eventInstanceID="ei2" relatedToEventInstance="ei3"/>
<TLINK lid="l4" relType="SIMULTANEOUS" eventInstanceID="ei1" relatedToEventInstance="ei3"/>
</TimeML>
"""


def write_tml(tmp_path, body=TML, name="wsj_0001.tml"):
    d = tmp_path / "tml"
    d.mkdir(exist_ok=True)
    (d / name).write_text(body)
    return d


def test_timeml_event_event_only(tmp_path):
    corpus = load_corpus(write_tml(tmp_path), "timeml_xml", schema="tbdense")
    doc = corpus.documents["wsj_0001"]
    assert [t.surface for t in doc.triggers] == ["said", "sold", "rose"]
    for t in doc.triggers:
        assert doc.text[t.start:t.end] == t.surface
    assert [(p.e1, p.e2, p.label) for p in corpus.pairs] == [
        ("e1", "e2", "after"), ("e2", "e3", "before"), ("e1", "e3", "simultaneous")]
    assert len(doc.sentence_spans) == 2
    assert doc.trigger("e3").sentence_index == 1


def test_timeml_unresolvable_instance(tmp_path):
    bad = TML.replace('relatedToEventInstance="ei3"/>\n<TLINK lid="l4"', 'relatedToEventInstance="ei7"/>\n<TLINK lid="l4"')
    with pytest.raises(CorpusError, match=r"wsj_0001.*ei7"):
        load_corpus(write_tml(tmp_path, bad), "timeml_xml", schema="tbdense")


def test_timeml_malformed_xml_position(tmp_path):
    with pytest.raises(CorpusError, match="line"):
        load_corpus(write_tml(tmp_path, TML.replace("</s> <s>", "</s> <s")), "timeml_xml")


def test_timeml_unknown_label(tmp_path):
    with pytest.raises(CorpusError, match="OVERLAPS"):
        load_corpus(write_tml(tmp_path, TML.replace('"AFTER"', '"OVERLAPS"')), "timeml_xml", schema="tbdense")


def test_matres_tsv(tmp_path):
    docs = write_tml(tmp_path)
    tsv = tmp_path / "test.txt"
    tsv.write_text("wsj_0001\tsaid\tsold\t1\t2\tAFTER\nwsj_0001\tsold\trose\t2\t3\tBEFORE\n"
                   "wsj_0001\tsaid\trose\t1\t3\tEQUAL\n")
    corpus = load_corpus(tsv, "matres_tsv", documents=docs)
    assert corpus.dataset_name == "matres"
    assert [(p.e1, p.e2, p.label) for p in corpus.pairs] == [
        ("e1", "e2", "after"), ("e2", "e3", "before"), ("e1", "e3", "equal")]


def test_tdd_tsv(tmp_path):
    docs = write_tml(tmp_path)
    tsv = tmp_path / "tdd.tsv"
    tsv.write_text("wsj_0001\te1\te3\ti\nwsj_0001\te3\te2\tii\n")
    corpus = load_corpus(tsv, "tdd_tsv", documents=docs)
    assert corpus.dataset_name == "tddman"
    assert [p.label for p in corpus.pairs] == ["include", "is_included"]


def test_tsv_bad_row(tmp_path):
    docs = write_tml(tmp_path)
    tsv = tmp_path / "tdd.tsv"
    tsv.write_text("wsj_0001\te1\te3\ti\nwsj_0001\te3\n")
    with pytest.raises(CorpusError, match=":2"):
        load_corpus(tsv, "tdd_tsv", documents=docs)


def test_tsv_needs_documents(tmp_path):
    tsv = tmp_path / "tdd.tsv"
    tsv.write_text("x\te1\te2\tb\n")
    with pytest.raises(CorpusError):
        load_corpus(tsv, "tdd_tsv")


# -- marking -----------------------------------------------------------------

def _doc(text, spans):
    triggers = tuple(EventTrigger(f"e{i}", text[s:e], s, e) for i, (s, e) in spans)
    return Document("d", text, ((0, len(text)),), triggers)


def test_mark_single_trigger():
    doc = _doc("The season started.", [(3, (11, 18))])
    assert mark_events(doc) == "The season [EVENT e3]started[/EVENT e3]."
    assert mark_events(doc, "angle") == "The season <EVENT e3>started</EVENT e3>."


def test_mark_empty_subset():
    doc = _doc("The season started.", [(3, (11, 18))])
    assert mark_events(doc, subset=[]) == doc.text


def splice_oracle(text, spans, style):
    chars = list(text)
    for tid, s, e in sorted(spans, key=lambda x: -x[1]):
        o, c = tag_pair(tid, style)
        chars[e:e] = list(c)
        chars[s:s] = list(o)
    return "".join(chars)


@pytest.mark.parametrize("style", ["bracket", "angle"])
def test_mark_two_triggers_in_one_sentence(style):
    text = "Officials  said   the plant  closed today."
    s1, s2 = text.index("said"), text.index("closed")
    doc = _doc(text, [(1, (s1, s1 + 4)), (2, (s2, s2 + 6))])
    assert mark_events(doc, style) == splice_oracle(text, [("e1", s1, s1 + 4), ("e2", s2, s2 + 6)], style)


def test_mark_overlap_error():
    doc = Document("d", "fighting", ((0, 8),), (EventTrigger("a", "fighting", 0, 8), EventTrigger("b", "fight", 0, 5)))
    with pytest.raises(MarkingError):
        mark_events(doc)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["bracket", "angle"]))
def test_strip_tags_round_trip(seed, style):
    corpus = generate_fixture(FixtureSpec(random_docs=2, sentences_per_doc=(2, 6), pairs_per_doc=1), seed)
    for doc in corpus.documents.values():
        assert strip_event_tags(mark_events(doc, style)) == doc.text
        subset = [t.trigger_id for t in doc.triggers[::2]]
        assert strip_event_tags(mark_events(doc, style, subset)) == doc.text


# -- windows -----------------------------------------------------------------

def test_window_larger_than_doc(mini):
    doc = mini.documents["season"]
    assert len(doc.sentence_spans) == 5
    w = context_window(doc, [doc.triggers[0].trigger_id], 8)
    assert w.sentence_indices == tuple(range(5))
    assert w.document.text == doc.text
    assert not w.truncated


def test_window_adjacent_anchors():
    doc = twenty_sentences()
    w = context_window(doc, ids(doc, "spoke", "arrived"), 8)
    assert w.sentence_indices == (2, 3, 4, 5, 6, 7, 8, 9)
    assert w.contiguous and w.truncated and not w.overflow


def test_window_far_anchors():
    doc = twenty_sentences()
    w = context_window(doc, ids(doc, "hit", "recovered"), 8)
    assert w.sentence_indices == (0, 1, 2, 3, 16, 17, 18, 19)
    assert not w.contiguous and w.truncated
    assert " ... " in w.document.text


def test_window_overflow_keeps_anchors_only():
    doc = twenty_sentences()
    w = context_window(doc, ids(doc, "hit", "spoke", "recovered"), 2)
    assert w.sentence_indices == (0, 5, 19)
    assert w.overflow


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30), st.data())
def test_select_window_properties(n, data):
    anchors = data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=min(n, 5)))
    budget = data.draw(st.integers(1, 12))
    chosen, overflow = select_window(n, anchors, budget)
    assert set(anchors) <= set(chosen)
    assert chosen == sorted(set(chosen))
    if overflow:
        assert chosen == sorted(anchors) and len(anchors) > budget
    else:
        assert len(chosen) == min(budget, n)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5000), st.integers(1, 8))
def test_window_rebases_spans(seed, budget):
    corpus = generate_fixture(FixtureSpec(random_docs=1, sentences_per_doc=(6, 14), pairs_per_doc=2), seed)
    doc = next(iter(corpus.documents.values()))
    anchor = doc.triggers[len(doc.triggers) // 2].trigger_id
    w = context_window(doc, [anchor], budget)
    sub = w.document
    assert sub.has_trigger(anchor)
    assert len(sub.sentence_spans) <= budget
    for t in sub.triggers:
        assert sub.text[t.start:t.end] == t.surface
        assert doc.trigger(t.trigger_id).sentence_index in w.sentence_indices
    for s, e in sub.sentence_spans:
        assert sub.text[s:e] in doc.text


# -- sentences and bundled data ------------------------------------------------

def test_split_sentences_keeps_quotes():
    text = 'He said "we won." Then it rained.\n\nNew paragraph here'
    spans = split_sentences(text)
    assert [text[s:e] for s, e in spans] == ['He said "we won."', "Then it rained.", "New paragraph here"]


def test_build_corpus_requires_resolution():
    schema = builtin_schema("matres")
    doc = Document("d", "A hit.", ((0, 6),), (EventTrigger("e1", "hit", 2, 5),))
    with pytest.raises(CorpusError):
        build_corpus(schema, [doc], [GoldPair("d", "e1", "e2", "before")])


def test_bundled_fixtures_validate(any_mini):
    assert len(any_mini.pairs) == 20
    assert any(len(d.sentence_spans) > 8 for d in any_mini.documents.values())
    assert any(d.same_event for d in any_mini.documents.values())
