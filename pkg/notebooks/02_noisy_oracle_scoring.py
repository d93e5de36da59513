# %% [markdown]
# # Scoring a noisy model
#
# The noisy oracle flips gold labels at a fixed rate. Per-label scores show
# where the damage lands; dropping vague from the overall figure changes the picture.

# %%
import tempfile

from tempre.runner import RunConfig, execute_run, score_run

work = tempfile.mkdtemp(prefix="tempre-nb-")
res = execute_run(RunConfig(dataset="mini_tbdense", strategy="zero_shot", provider="noisy-oracle",
                            noise=0.3, seed=7, out=f"{work}/runs"))

# %%
print(score_run(res.run_dir).table())
print(score_run(res.run_dir, include_vague_overall=False).table())

# %% [markdown]
# Sweep the flip rate; overall F1 should fall roughly linearly.

# %%
for noise in (0.0, 0.1, 0.2, 0.4, 0.6):
    r = execute_run(RunConfig(dataset="mini_tbdense", provider="noisy-oracle", noise=noise, seed=7,
                              out=f"{work}/sweep"))
    print(f"noise={noise:.1f} F1={score_run(r.run_dir, write=False).f1:.3f}")
