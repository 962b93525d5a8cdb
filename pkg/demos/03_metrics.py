# # Evaluation metrics by hand
#
# A few small cases that show how each score behaves.

# %%
from cqa_perspectives.data import PerspectiveSpan
from cqa_perspectives.embeddings import StubEmbeddingBackend
from cqa_perspectives.labels import Perspective
from cqa_perspectives.metrics import (
    bertscore, bleu, meteor, proportional_matching, rouge_l, rouge_n, strict_matching,
)

ref = "drink warm ginger tea twice a day"
cand = "drink ginger tea daily"
print("R1", rouge_n(cand, ref, 1))
print("R2", rouge_n(cand, ref, 2))
print("RL", rouge_l(cand, ref))
print("BLEU", bleu(cand, ref))
print("METEOR", meteor(cand, ref))
print("BERTScore (stub embeddings)", bertscore(cand, ref, StubEmbeddingBackend(64, 0)))

# %% [markdown]
# Span matching. Strict matching wants identical offsets and label;
# proportional matching gives credit for the overlapping characters.

# %%
S = Perspective.SUGGESTION
gold = [PerspectiveSpan("a1", 0, 20, S)]
pred = [PerspectiveSpan("a1", 0, 10, S)]
print("strict      ", strict_matching(pred, gold))
print("proportional", proportional_matching(pred, gold))
