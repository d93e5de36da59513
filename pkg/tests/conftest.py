import pytest

from tempre.fixtures import DocTemplate, FixtureSpec, generate_fixture, load_bundled
from tempre.gateway import Gateway, ReplyCache, TranscriptStore
from tempre.oracles import GoldOracle


def make_corpus(dataset, docs, seed=0):
    """``docs`` maps doc_id to (sentences with *trigger* markers, pairs by surface[, same_event])."""
    templates = []
    for doc_id, spec in docs.items():
        sentences, pairs = spec[0], spec[1]
        same = spec[2] if len(spec) > 2 else ()
        templates.append(DocTemplate(doc_id, sentences, pairs, same_event=same))
    return generate_fixture(FixtureSpec(dataset_name=dataset, documents=templates, seed=seed))


def ids(doc, *surfaces):
    by = {t.surface: t.trigger_id for t in doc.triggers}
    return tuple(by[s] for s in surfaces)


@pytest.fixture
def mini():
    return load_bundled("mini")


@pytest.fixture(params=["mini_matres", "mini_tbdense", "mini_tddman"])
def any_mini(request):
    return load_bundled(request.param)


@pytest.fixture
def gateway_for(tmp_path):
    def build(provider, cache=False, store=True):
        return Gateway(provider,
                       cache=ReplyCache(tmp_path / "cache") if cache else None,
                       store=TranscriptStore(tmp_path / "run") if store else None)
    return build


@pytest.fixture
def gold_gateway(mini, gateway_for):
    return gateway_for(GoldOracle(mini))


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, note = ACCEPTANCE[n]
        terminalreporter.write_line(f"{status} criterion {n}: {note}")
