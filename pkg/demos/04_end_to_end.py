# # End to end on the toy corpus
#
# Runs every stage with stub backends, the same as
#
#     python -m cqa_perspectives run-all --config demos/toy.toml
#
# and then looks at what came out.

# %%
import json
from collections import Counter
from pathlib import Path

from cqa_perspectives.config import load_config
from cqa_perspectives.pipeline import run_pipeline

cfg = load_config(Path(__file__).with_name("toy.toml"))
for stage, state in run_pipeline(cfg).items():
    print(f"{stage}: {state}")
out = cfg.paths.output_dir

# %% [markdown]
# Where did each predicted span's label come from?

# %%
predictions = json.loads((out / "predictions.json").read_text())
print(Counter(p["provenance"] for p in predictions))
print(Counter(p["label"] for p in predictions))

# %%
summaries = json.loads((out / "summaries.json").read_text())
first = summaries[0]
print(first["thread_id"])
for label, s in first["summaries"].items():
    print(f"  {label}: {s['final'][:70]!r}")

# %%
report = json.loads((out / "report.json").read_text())
for part in ("task_a", "task_b"):
    print(part, {k: round(v, 3) for k, v in report[part].items()})
print("avg_score", round(report["avg_score"], 4))
