# %% [markdown]
# # Consistency audits
#
# The inverse audit re-asks each ranking answer from the other side. The
# unknown-followup audit pushes a model that said "unknown" for a definite answer.

# %%
import tempfile

from tempre.runner import RunConfig, execute_audit, synthetic_audit_corpus

work = tempfile.mkdtemp(prefix="tempre-nb-")
corpus = synthetic_audit_corpus("matres", 500, seed=0)

# %%
for v in (0.0, 0.3, 1.0):
    rep, _ = execute_audit(RunConfig(provider="inconsistent-oracle", violation_rate=v, seed=1, out=work),
                           "inverse", 500, corpus=corpus)
    print(f"configured {v:.1f} -> measured {rep.rates()['inverse_violation_rate']:.3f}")

# %%
rep, out_dir = execute_audit(RunConfig(provider="inconsistent-oracle", commit_rate=0.84, incorrect_rate=0.96,
                                       seed=2, out=work), "both", 500, corpus=corpus)
print(rep.table())
print("written to", out_dir)
