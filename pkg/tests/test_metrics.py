import csv
import io
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cqa_perspectives.data import Answer, GoldAnnotation, PerspectiveSpan, Thread, load_dataset, toy_corpus_path
from cqa_perspectives.embeddings import StubEmbeddingBackend
from cqa_perspectives.labels import LABELS, Perspective
from cqa_perspectives.metrics import (
    REPORT_FIELDS,
    average_score,
    bertscore,
    bleu,
    classification_f1,
    evaluate_run,
    lcs_length,
    majority_span_labels,
    meteor,
    proportional_matching,
    rouge_l,
    rouge_n,
    strict_matching,
)
from cqa_perspectives.data import Sentence

EXPE, INFO, CAUS, SUGG, QUES = LABELS
STUB = StubEmbeddingBackend(32, 0)


def span(start, end, label=SUGG, answer="a"):
    return PerspectiveSpan(answer, start, end, label)


# -- classification


def test_classification_identity():
    assert classification_f1([SUGG, INFO], [SUGG, INFO]) == (1.0, 1.0)


def test_classification_hand_example():
    macro, weighted = classification_f1([EXPE, INFO, INFO, INFO], [EXPE, EXPE, INFO, INFO])
    assert macro == pytest.approx((2 / 3 + 0.8) / 2, abs=1e-12)
    assert weighted == pytest.approx((2 / 3 + 0.8) / 2, abs=1e-12)


def test_classification_single_gold_class():
    assert classification_f1([CAUS] * 3, [CAUS] * 3) == (1.0, 1.0)


def test_classification_none_is_a_miss_only():
    macro, _ = classification_f1([None, SUGG], [SUGG, SUGG])
    assert macro == pytest.approx(2 * 1 * 0.5 / 1.5)


def test_classification_errors():
    with pytest.raises(ValueError):
        classification_f1([SUGG], [SUGG, SUGG])
    with pytest.raises(ValueError):
        classification_f1([], [])


def test_sentence_gold_label_is_majority_coverage():
    sents = [Sentence("a", 0, 10, "x" * 10), Sentence("a", 11, 20, "y" * 9), Sentence("b", 0, 5, "zzzzz")]
    gold = [span(0, 4, INFO), span(4, 15, SUGG)]
    assert majority_span_labels(sents, gold) == [SUGG, SUGG, None]


# -- span matching


def test_strict_examples():
    gold = [span(0, 10), span(20, 30, INFO)]
    assert strict_matching(gold, gold) == (1, 1, 1)
    assert strict_matching([span(1, 10)], [span(0, 10)]) == (0, 0, 0)
    p, r, f = strict_matching([span(0, 10)], gold)
    assert (p, r) == (1.0, 0.5) and f == pytest.approx(2 / 3)
    assert strict_matching([], []) == (1, 1, 1)
    assert strict_matching([], gold) == (0, 0, 0)


def test_strict_is_one_to_one():
    assert strict_matching([span(0, 10), span(0, 10)], [span(0, 10)]) == (0.5, 1.0, pytest.approx(2 / 3))


def test_proportional_examples():
    gold = [span(0, 10)]
    assert proportional_matching(gold, gold) == (1, 1, 1)
    p, r, f = proportional_matching([span(0, 5)], gold)
    assert (p, r) == (1.0, 0.5) and f == pytest.approx(2 / 3)
    assert proportional_matching([span(0, 5, INFO)], gold) == (0, 0, 0)
    assert proportional_matching([span(0, 5, answer="b")], gold) == (0, 0, 0)


# -- text metrics


def test_rouge_examples():
    assert rouge_n("the cat", "the cat", 1) == (1, 1, 1)
    p, r, f = rouge_n("the cat sat", "the cat", 1)
    assert (p, r) == (2 / 3, 1.0) and f == pytest.approx(0.8, abs=1e-12)
    assert rouge_n("a b c d", "a b x d", 2) == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-12)
    assert rouge_n("", "", 1) == (1, 1, 1)
    assert rouge_n("", "x", 1) == (0, 0, 0)
    assert rouge_n("Cat, sat!", "cat , sat !", 1) == (1, 1, 1)


def test_rouge_l_examples():
    assert rouge_l("a b c", "a b c") == (1, 1, 1)
    assert rouge_l("a c b", "a b c") == pytest.approx((2 / 3,) * 3, abs=1e-12)
    assert rouge_l("x y", "a b") == (0, 0, 0)


def test_bleu_examples():
    assert bleu("a b c d e", "a b c d e") == 1.0
    assert bleu("", "a b") == 0.0
    cand, ref = "e d c b a", "a b c d e"
    # no shared bigrams: every order n >= 2 gets 1/(total+1)
    expected = math.exp((math.log(1.0) + math.log(1 / 5) + math.log(1 / 4) + math.log(1 / 3)) / 4)
    assert bleu(cand, ref) == pytest.approx(expected, abs=1e-12)
    assert bleu(cand, ref) < 1.0


def test_bleu_short_candidate_and_brevity():
    # two tokens: orders 1 and 2 only; brevity exp(1 - 4/2)
    expected = math.exp(1 - 2) * math.sqrt(1.0 * (1 + 1) / (1 + 1))
    assert bleu("a b", "a b c d") == pytest.approx(expected, abs=1e-12)


def test_meteor_examples():
    assert meteor("a b c", "a b c") == 1.0
    assert meteor("tea", "tea") == 1.0
    assert meteor("x", "y") == 0.0
    assert meteor("a b c d", "a b c e") == pytest.approx(0.75 * (1 - 0.5 / 27), abs=1e-12)
    # two matches in two chunks: penalty 0.5 * (2/2)^3
    assert meteor("a b", "b a") == pytest.approx(0.5, abs=1e-12)
    p, r = 2 / 3, 2 / 4
    assert meteor("a b z", "a b c d") == pytest.approx(10 * p * r / (r + 9 * p) * (1 - 0.5 / 8), abs=1e-12)


def test_bertscore_examples():
    assert bertscore("drink warm tea", "drink warm tea", STUB) == (1, 1, 1)
    assert bertscore("", "tea", STUB) == (0, 0, 0)
    p, r, _ = bertscore("warm tea", "drink warm tea daily", STUB)
    assert p == 1.0 and r < 1.0


# -- agreement with the brute-force oracles

tokens = st.lists(st.sampled_from(["a", "b", "c", "d", "."]), max_size=10).map(" ".join)


@settings(max_examples=200)
@given(tokens, tokens)
def test_text_metrics_match_oracles(cand, ref):
    for n in (1, 2):
        assert rouge_n(cand, ref, n) == pytest.approx(oracles.rouge_n(cand, ref, n), abs=1e-12)
    assert rouge_l(cand, ref) == pytest.approx(oracles.rouge_l(cand, ref, oracles.lcs_bruteforce), abs=1e-12)
    assert bleu(cand, ref) == pytest.approx(oracles.bleu(cand, ref), abs=1e-12)
    assert meteor(cand, ref) == pytest.approx(oracles.meteor(cand, ref), abs=1e-12)


@given(st.lists(st.integers(0, 3), max_size=12), st.lists(st.integers(0, 3), max_size=12))
def test_lcs_matches_table(a, b):
    assert lcs_length(a, b) == oracles.lcs_table(a, b) == oracles.lcs_bruteforce(a, b)


label_lists = st.integers(1, 15).flatmap(lambda n: st.tuples(
    st.lists(st.sampled_from([None, *LABELS]), min_size=n, max_size=n),
    st.lists(st.sampled_from(LABELS), min_size=n, max_size=n)))


@given(label_lists)
def test_classification_matches_confusion_matrix(pair):
    pred, gold = pair
    ours = classification_f1(pred, gold)
    ref = oracles.confusion_f1(pred, gold, list(LABELS))
    assert ours == pytest.approx(ref, abs=1e-12)


@st.composite
def span_lists(draw):
    out = []
    for _ in range(draw(st.integers(0, 5))):
        start = draw(st.integers(0, 20))
        out.append(PerspectiveSpan(draw(st.sampled_from("ab")), start, start + draw(st.integers(1, 10)),
                                   draw(st.sampled_from([SUGG, INFO]))))
    return out


@settings(max_examples=200)
@given(span_lists(), span_lists())
def test_span_metrics_match_oracles_and_strict_is_bounded(pred, gold):
    s = strict_matching(pred, gold)
    p = proportional_matching(pred, gold)
    assert s == pytest.approx(oracles.strict(pred, gold), abs=1e-12)
    assert p == pytest.approx(oracles.proportional(pred, gold), abs=1e-12)
    assert s[0] <= p[0] + 1e-12 and s[1] <= p[1] + 1e-12
    assert strict_matching(pred[::-1], gold) == pytest.approx(s, abs=1e-12)
    assert proportional_matching(pred[::-1], gold[::-1]) == pytest.approx(p, abs=1e-12)
    assert all(0 <= x <= 1 for x in (*s, *p))


# -- run report


def gold_identity(threads):
    preds = {t.id: list(t.gold.spans) for t in threads}
    sums = {t.id: dict(t.gold.summaries) for t in threads}
    return preds, sums


def test_identity_run_scores_one():
    threads = load_dataset(toy_corpus_path())
    report = evaluate_run(threads, *gold_identity(threads), STUB)
    values = report.scalars()
    assert list(values) == list(REPORT_FIELDS)
    for key in REPORT_FIELDS:
        assert values[key] == 1.0, key
    assert report.avg_score == 1.0


def test_empty_predictions_score_zero_on_spans():
    threads = load_dataset(toy_corpus_path())
    _, sums = gold_identity(threads)
    report = evaluate_run(threads, {}, sums, STUB)
    assert report.task_a.strict == (0, 0, 0) and report.task_a.proportional == (0, 0, 0)


def test_missing_gold_is_an_error():
    from cqa_perspectives.errors import DataError
    with pytest.raises(DataError):
        evaluate_run([Thread("t", "q", (Answer("a", "x."),))], {}, {}, STUB)
    with pytest.raises(DataError):
        evaluate_run([], {}, {}, STUB)


def test_report_serializations():
    threads = load_dataset(toy_corpus_path())
    report = evaluate_run(threads, *gold_identity(threads), STUB)
    obj = json.loads(report.to_json("fp"))
    assert set(obj["task_a"]) | set(obj["task_b"]) == set(REPORT_FIELDS)
    assert obj["config_fingerprint"] == "fp"
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0] == [*REPORT_FIELDS, "avg_score"]


def test_average_score_weights():
    values = {k: 0.0 for k in REPORT_FIELDS} | {"R1": 1.0}
    assert average_score(values) == pytest.approx(1 / 14)
    assert average_score(values, {"R1": 1.0, "R2": 1.0}) == 0.5
    with pytest.raises(ValueError):
        average_score(values, {"nope": 1.0})


def test_factuality_hook_is_recorded():
    threads = load_dataset(toy_corpus_path())
    report = evaluate_run(threads, *gold_identity(threads), STUB, factuality=lambda c, r: {"AlignScore": 0.5})
    assert report.task_b.factuality == {"AlignScore": 0.5}
    assert "AlignScore" not in report.scalars()


def test_summary_metrics_average_over_gold_pairs():
    t = Thread("t", "q", (Answer("a", "Try tea. It works."),),
               gold=GoldAnnotation((span(0, 8), span(9, 18, INFO)),
                                   {SUGG: "try tea", INFO: "it works"}))
    report = evaluate_run([t], {"t": list(t.gold.spans)}, {"t": {SUGG: "try tea"}}, STUB)
    assert report.task_b.rouge1 == 0.5
