# %% [markdown]
# # Who cashes out?
#
# Note features and transaction features are joined per client, and three
# classifiers are compared by 5-fold stratified cross-validation.

# %%
import numpy as np

from notesforge import classify, pipeline, synth
from notesforge.classify import ModelSpec

scenario = synth.gen_scenario(synth.ScenarioSpec(n_clients=2000, seed=7))
run = pipeline.scenario_dataset(scenario)
ds = run.dataset
print(ds.X.shape, "base rate", round(ds.y.mean(), 4))

# %%
print(f"{'model':<9} {'train AUC':>9} {'test AUC':>9} {'test wF1':>9}")
reports = {}
for kind in ("logistic", "tree", "gbt"):
    rep = classify.cross_validate(ds, ModelSpec(kind=kind), k=5, seed=7)
    reports[kind] = rep
    print(f"{kind:<9} {rep.mean_train['auc']:9.4f} {rep.mean_test['auc']:9.4f} {rep.mean_test['weighted_f1']:9.4f}")

# %% [markdown]
# The ROC kept for each model comes from its most typical fold.

# %%
for kind, rep in reports.items():
    fpr = np.array([p[0] for p in rep.roc])
    tpr = np.array([p[1] for p in rep.roc])
    print(kind, "TPR at FPR <= 0.1:", round(float(tpr[fpr <= 0.1].max()), 3))

# %%
model = classify.train(ds, ModelSpec(kind="logistic"))
ranking = classify.feature_importance(model)
for name, value in ranking[:10]:
    print(f"{name:<42} {value:.4f}")
print("note share of the top 10:", classify.top_k_source_share(ranking, 10))
