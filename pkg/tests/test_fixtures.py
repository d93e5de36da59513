import pytest

from tempre.corpus import dump_native, load_corpus
from tempre.fixtures import (BUNDLED, DocTemplate, FixtureError, FixtureSpec, bundled_path, generate_fixture,
                             load_bundled, regenerate)

from conftest import ids


def test_seed_determinism():
    spec = FixtureSpec(dataset_name="tbdense", random_docs=3, pairs_per_doc=4)
    assert dump_native(generate_fixture(spec, 7)) == dump_native(generate_fixture(spec, 7))
    assert dump_native(generate_fixture(spec, 7)) != dump_native(generate_fixture(spec, 8))


def test_pass_through_label():
    spec = FixtureSpec(documents=[DocTemplate("d", ["The *a* came before *b*."], [("a", "b", "before")])])
    corpus = generate_fixture(spec)
    a, b = ids(corpus.documents["d"], "a", "b")
    assert [(p.e1, p.e2, p.label) for p in corpus.pairs] == [(a, b, "before")]


@pytest.mark.parametrize("seed", range(25))
def test_six_labels_over_four_events(seed):
    spec = FixtureSpec(dataset_name="tbdense", random_docs=1, sentences_per_doc=(4, 4), triggers_per_doc=4,
                       pairs_per_doc=6, require_all_labels=True)
    corpus = generate_fixture(spec, seed)
    assert len(corpus.documents["synth000"].triggers) == 4
    found = set()
    for p in corpus.pairs:
        found.add(p.label)
    assert found == set(corpus.schema.labels)


def test_inconsistent_graph_rejected():
    t = DocTemplate("d", ["*a* and *b*."], [("a", "b", "before"), ("b", "a", "before")])
    with pytest.raises(FixtureError):
        generate_fixture(FixtureSpec(documents=[t]))


def test_label_outside_dataset_rejected():
    t = DocTemplate("d", ["*a* and *b*."], [("a", "b", "include")])
    with pytest.raises(FixtureError):
        generate_fixture(FixtureSpec(dataset_name="matres", documents=[t]))


def test_duplicate_surface_rejected():
    with pytest.raises(FixtureError):
        generate_fixture(FixtureSpec(documents=[DocTemplate("d", ["*a* and *a*."], [])]))


def test_regeneration_matches_shipped(tmp_path):
    for path in regenerate(tmp_path):
        assert path.read_bytes() == bundled_path(path.stem).read_bytes()


@pytest.mark.parametrize("name", sorted(BUNDLED))
def test_bundled_round_trip(name):
    corpus = load_bundled(name)
    assert len(corpus.pairs) == 20
    assert len(load_corpus(bundled_path(name)).pairs) == 20
    season = corpus.documents["season"]
    started, ended = ids(season, "started", "ended")
    assert season.coreferent(started, ended)
    assert max(len(d.sentence_spans) for d in corpus.documents.values()) > 8
    for doc in corpus.documents.values():
        surfaces = [t.surface for t in doc.triggers]
        assert len(surfaces) == len(set(surfaces))


def test_fixture_prefix_accepted():
    assert bundled_path("fixtures/mini") == bundled_path("mini_matres")


def test_module_check_reports_up_to_date(tmp_path):
    import subprocess
    import sys

    done = subprocess.run([sys.executable, "-m", "tempre.fixtures", "--check"], capture_output=True, text=True)
    assert done.returncode == 0 and done.stdout.strip() == "ok"
    done = subprocess.run([sys.executable, "-m", "tempre.fixtures", "--out", str(tmp_path)], capture_output=True, text=True)
    assert done.returncode == 0 and len(list(tmp_path.glob("mini_*.json"))) == 3
