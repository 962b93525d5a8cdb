# # Label model versus majority vote
#
# Eight noisy rules vote on 1000 sentences. Some rules are much better than
# others, and majority vote cannot tell them apart. The EM label model
# estimates each rule's accuracy from the agreement pattern alone.

# %%
import numpy as np

from cqa_perspectives.labels import ABSTAIN
from cqa_perspectives.synthetic import label_benchmark
from cqa_perspectives.weak_supervision import majority_vote, predict_proba, train_label_model

bench = label_benchmark(n=1000, n_rules=8, seed=42)
L = bench.matrix.cells
print("label matrix", L.shape, "votes:", int((L != ABSTAIN).sum()))

# %% [markdown]
# True accuracies and coverages, drawn from U[0.55, 0.9] and U[0.3, 0.8].

# %%
for j, (a, c) in enumerate(zip(bench.accuracy, bench.coverage)):
    print(f"rule_{j}: accuracy {a:.3f}  coverage {c:.3f}")

# %%
params = train_label_model(bench.matrix, epochs=500, seed=42)
print("epochs run:", params.epochs_run)
print("learned accuracies:", np.round(params.accuracy, 3))
print("max abs error:", float(np.abs(params.accuracy - bench.accuracy).max()))

# %% [markdown]
# Compare on the rows where at least one rule fired.

# %%
covered = (L != ABSTAIN).any(axis=1)
mv = majority_vote(bench.matrix)
em = predict_proba(params, bench.matrix).argmax(axis=1)
truth = bench.truth
print(f"majority vote: {np.mean(mv[covered] == truth[covered]):.4f}")
print(f"label model:   {np.mean(em[covered] == truth[covered]):.4f}")

# %% [markdown]
# The log-likelihood climbs quickly and then flattens.

# %%
ll = params.log_likelihood
for i in (0, 1, 2, 5, len(ll) - 1):
    print(f"step {i:3d}: {ll[i]:.4f}")
