import json
from pathlib import Path

import pytest

from tempre.cli import main
from tempre.fixtures import DocTemplate, FixtureSpec, generate_fixture
from tempre.corpus import dump_native
from tempre.gateway import GatewayError, TranscriptStore
from tempre.oracles import GoldOracle
from tempre.runner import RunConfig, execute_run, load_manifest


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def run(*argv):
    return main(list(argv))


def only_run(out="runs"):
    (d,) = [p for p in Path(out).iterdir() if p.is_dir()]
    return d


def test_run_cot_gold(capsys):
    assert run("run", "--dataset", "fixtures/mini", "--strategy", "cot", "--provider", "gold-oracle") == 0
    d = only_run()
    m = load_manifest(d)
    assert m["prediction_count"] == 20 and m["failed"] == []
    assert set(m["pairs"].values()) == {"done"}
    assert m["provider_calls"] > 0
    preds = json.loads((d / "predictions.json").read_text())
    assert len(preds) == 20
    # rerun: everything from cache
    assert run("run", "--dataset", "fixtures/mini", "--strategy", "cot", "--provider", "gold-oracle") == 0
    assert load_manifest(d)["provider_calls"] == 0
    assert json.loads((d / "predictions.json").read_text()) == preds


def test_manifest_contents():
    run("run", "--dataset", "fixtures/mini", "--strategy", "event-ranking", "--seed", "3", "--tag-style", "angle")
    m = load_manifest(only_run())
    for key in ("run_id", "dataset", "strategy", "provider", "model", "schema_hash", "template_hashes", "seed",
                "max_context_sentences", "tag_style", "started", "finished", "pairs", "config"):
        assert key in m
    assert m["seed"] == 3 and m["tag_style"] == "angle" and m["strategy"] == "event_ranking"
    assert (only_run() / "assertions.json").exists()


def test_every_referenced_transcript_exists():
    for s in ("zero-shot", "event-ranking", "cot"):
        run("run", "--dataset", "fixtures/mini_tbdense", "--strategy", s, "--out", s)
        d = only_run(s)
        store = TranscriptStore(d)
        refs = [r for p in json.loads((d / "predictions.json").read_text()) for r in p["transcripts"]]
        assert refs and all(store.exists(r) for r in refs)


def test_score_and_exclude_vague(capsys):
    run("run", "--dataset", "fixtures/mini", "--strategy", "zero-shot", "--provider", "noisy-oracle",
        "--noise", "0.5", "--seed", "1")
    d = only_run()
    assert run("score", str(d)) == 0
    incl = json.loads((d / "report.json").read_text())
    assert run("score", str(d), "--exclude-vague-overall") == 0
    excl = json.loads((d / "report_no_vague.json").read_text())
    assert incl["per_label"] == excl["per_label"]
    assert incl["overall"] != excl["overall"]
    assert "overall" in capsys.readouterr().out


def test_gold_run_scores_one():
    run("run", "--dataset", "fixtures/mini_tddman", "--strategy", "cot")
    run("score", str(only_run()))
    assert json.loads((only_run() / "report.json").read_text())["overall"]["f1"] == 1.0


def test_score_missing_predictions(tmp_path):
    (tmp_path / "empty").mkdir()
    (tmp_path / "empty" / "manifest.json").write_text(json.dumps({"config": {}, "strategy": "cot"}))
    assert run("score", "empty") == 2


def ten_pair_fixture(path):
    sents = ["The *a1* and *b1* happened.", "Then *c1* and *d1* came.", "Finally *f1* and *g1* ended."]
    pairs = [("a1", "b1", "before"), ("a1", "c1", "before"), ("a1", "d1", "before"), ("b1", "c1", "before"),
             ("b1", "d1", "after"), ("c1", "d1", "after"), ("c1", "f1", "after"), ("d1", "f1", "equal"),
             ("f1", "g1", "vague"), ("a1", "g1", "vague")]
    corpus = generate_fixture(FixtureSpec(documents=[DocTemplate("ten", sents, pairs)]))
    path.write_text(dump_native(corpus))
    return path


def test_all_vague_replay(tmp_path):
    data = ten_pair_fixture(tmp_path / "ten.json")
    assert run("run", "--dataset", str(data), "--strategy", "zero-shot", "--provider", "refusal-oracle") == 0
    rec = only_run()
    assert run("replay", str(rec), "--out", "replayed") == 0
    rep_dir = only_run("replayed")
    assert (rep_dir / "predictions.json").read_bytes() == (rec / "predictions.json").read_bytes()
    assert load_manifest(rep_dir)["provider_calls"] == 0
    assert run("score", str(rep_dir)) == 0
    rep = json.loads((rep_dir / "report.json").read_text())
    vague = next(t for t in rep["per_label"] if t["label"] == "vague")
    assert (vague["precision"], vague["recall"]) == (0.2, 1.0)
    assert vague["f1"] == pytest.approx(1 / 3)
    assert rep["overall"]["f1"] == rep["overall"]["precision"] == 0.2


def test_replay_miss_is_partial_failure():
    run("run", "--dataset", "fixtures/mini", "--strategy", "zero-shot")
    d = only_run()
    victim = sorted((d / "transcripts").iterdir())[0]
    victim.unlink()
    assert run("replay", str(d), "--out", "replayed") == 1
    m = load_manifest(only_run("replayed"))
    assert len(m["failed"]) == 1
    assert list(m["pairs"].values()).count("failed") == 1


def test_resume_after_interruption(tmp_path):
    class Flaky(GoldOracle):
        budget = 30

        def complete(self, messages, intent):
            if self.calls >= self.budget:
                raise GatewayError("connection reset")
            return super().complete(messages, intent)

    cfg = RunConfig(dataset="mini", strategy="cot", out="runs", cache_dir="cache")
    from tempre.runner import resolve_dataset
    corpus = resolve_dataset(cfg)
    first = execute_run(cfg, corpus, Flaky(corpus))
    assert first.failures and first.manifest["provider_calls"] > 30
    second = execute_run(cfg, corpus, GoldOracle(corpus))
    assert not second.failures
    assert second.manifest["cache_hits"] >= 30
    full = execute_run(RunConfig(dataset="mini", strategy="cot", out="fresh", cache_dir="cache2"), corpus)
    assert second.manifest["provider_calls"] == full.manifest["provider_calls"] - 30


def test_config_precedence(tmp_path):
    (tmp_path / "c.yaml").write_text("strategy: cot\nseed: 5\nprovider: noisy-oracle\nnoise: 0.2\n")
    assert run("run", "--config", "c.yaml", "--dataset", "mini", "--seed", "9") == 0
    cfg = load_manifest(only_run())["config"]
    assert (cfg["strategy"], cfg["seed"], cfg["noise"]) == ("cot", 9, 0.2)
    (tmp_path / "c.json").write_text(json.dumps({"strategy": "zero-shot", "max-context-sentences": 4}))
    assert run("run", "--config", "c.json", "--out", "j") == 0
    assert load_manifest(only_run("j"))["config"]["max_context_sentences"] == 4


@pytest.mark.parametrize("argv", [
    ["run", "--dataset", "nope"],
    ["run", "--strategy", "cot", "--provider", "http", "--dataset", "missing.json"],
])
def test_config_errors_exit_2(argv):
    assert run(*argv) == 2


def test_bad_config_key(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"strategy": "cot", "colour": "blue"}))
    assert run("run", "--config", "c.json") == 2


def test_audit_commands(capsys):
    assert run("audit", "--dataset", "mini", "--provider", "gold-oracle", "--out", "a1") == 0
    (d,) = Path("a1").iterdir()
    rep = json.loads((d / "audit.json").read_text())
    assert rep["rates"]["inverse_violation_rate"] == 0.0
    assert (d / "audit.txt").exists()

    assert run("audit", "--provider", "inconsistent-oracle", "--violation-rate", "0.3", "--n", "1000",
               "--mode", "inverse", "--out", "a2") == 0
    (d,) = Path("a2").iterdir()
    rep = json.loads((d / "audit.json").read_text())
    assert rep["audited_count"] == 1000
    assert abs(rep["rates"]["inverse_violation_rate"] - 0.3) <= 3 * (0.3 * 0.7 / 1000) ** 0.5

    assert run("audit", "--dataset", "mini", "--mode", "unknown-followup", "--provider", "refusal-oracle",
               "--out", "a3") == 0
    (d,) = Path("a3").iterdir()
    assert json.loads((d / "audit.json").read_text())["rates"]["commit_rate"] == 0.0


def test_audit_does_not_change_scores():
    run("run", "--dataset", "mini", "--strategy", "event-ranking")
    d = only_run()
    run("score", str(d))
    before = (d / "predictions.json").read_bytes(), (d / "report.json").read_bytes()
    assert run("audit", str(d), "--provider", "inconsistent-oracle", "--violation-rate", "0.5") == 0
    run("score", str(d))
    assert ((d / "predictions.json").read_bytes(), (d / "report.json").read_bytes()) == before
    assert (d / "audit" / "audit.json").exists()


def test_cache_stats_and_gc(capsys):
    run("run", "--dataset", "mini", "--strategy", "zero-shot", "--out", "r1")
    run("run", "--dataset", "mini", "--strategy", "cot", "--out", "r2")
    capsys.readouterr()
    assert run("cache", "stats") == 0
    total = json.loads(capsys.readouterr().out)["entries"]
    assert run("cache", "gc", "--runs", str(only_run("r1"))) == 0
    kept = json.loads(capsys.readouterr().out)["entries"]
    assert 0 < kept == 20 < total
    assert run("run", "--dataset", "mini", "--strategy", "zero-shot", "--out", "r1") == 0
    assert load_manifest(only_run("r1"))["provider_calls"] == 0
