# %% [markdown]
# # Three prompting strategies on a bundled fixture
#
# Runs zero-shot, event ranking and chain-of-thought against the gold oracle.
# Nothing here touches the network.

# %%
import tempfile

from tempre.fixtures import load_bundled
from tempre.metrics import score
from tempre.runner import RunConfig, execute_run

work = tempfile.mkdtemp(prefix="tempre-nb-")
corpus = load_bundled("mini")
print(len(corpus.documents), "documents,", len(corpus.pairs), "gold pairs")

# %%
for strategy in ("zero_shot", "event_ranking", "cot"):
    res = execute_run(RunConfig(dataset="mini", strategy=strategy, out=f"{work}/runs"))
    rep = score(res.predictions, corpus.pairs, corpus.schema)
    print(f"{strategy:14s} F1={rep.f1:.3f} calls={res.manifest['provider_calls']}")

# %% [markdown]
# One chain-of-thought transcript, turn by turn.

# %%
from tempre.gateway import TranscriptStore

t = next(t for t in TranscriptStore(res.run_dir))
for m in t.messages:
    print(f"{m.role:>9}: {m.content[:110]}")
