# %% [markdown]
# # Reproducing a run
#
# Every reply lands in a content-addressed cache and in per-pair transcripts.
# A replay reads the transcripts back and must produce the same predictions.

# %%
import tempfile
from pathlib import Path

from tempre.gateway import ReplyCache
from tempre.runner import RunConfig, cache_gc, execute_run, replay_config

work = tempfile.mkdtemp(prefix="tempre-nb-")
cfg = RunConfig(dataset="mini_tddman", strategy="event_ranking", provider="noisy-oracle", noise=0.25,
                seed=5, workers=4, out=f"{work}/runs")
first = execute_run(cfg)
second = execute_run(cfg)
print("calls:", first.manifest["provider_calls"], "then", second.manifest["provider_calls"],
      "| cache hits on rerun:", second.manifest["cache_hits"])

# %%
replayed = execute_run(replay_config(first.run_dir, f"{work}/replay"))
same = (Path(first.run_dir) / "predictions.json").read_bytes() == (replayed.run_dir / "predictions.json").read_bytes()
print("replay identical:", same, "| provider calls:", replayed.manifest["provider_calls"])

# %%
cache = f"{work}/cache"
print(ReplyCache(cache).stats())
print(cache_gc(cache, [first.run_dir]))
