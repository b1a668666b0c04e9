import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marn.errors import ContractError
from marn.metrics import bleu4, cider, corpus_scores, lcs_length, rouge_l, rouge_l_sentence

from oracles import bleu4_oracle, cider_oracle, hand_corpus, lcs_oracle, rouge_l_oracle


def test_bleu_identity_and_disjoint():
    refs = {"a": [["the", "cat", "sat", "on", "it"]], "b": [["a", "dog", "ran", "far", "away"]]}
    assert bleu4({k: v[0] for k, v in refs.items()}, refs) == pytest.approx(1.0, abs=1e-12)
    assert bleu4({"a": ["x"] * 5, "b": ["y"] * 5}, refs) == 0.0


def test_bleu_empty_candidate_counts_as_no_match():
    refs = {"a": [["the", "cat", "sat", "on", "it"]], "b": [["a", "dog", "ran", "far", "away"]]}
    assert bleu4({"a": [], "b": refs["b"][0]}, refs) < 1.0


def test_rouge_examples():
    assert rouge_l_sentence(["a", "b", "c"], [["a", "b", "c"]]) == pytest.approx(1.0)
    assert rouge_l_sentence(["a", "b"], [["c", "d"]]) == 0.0


def test_lcs_matches_recursive_oracle():
    rng = random.Random(3)
    for _ in range(100):
        a = tuple(rng.choice("abcd") for _ in range(rng.randint(0, 7)))
        b = tuple(rng.choice("abcd") for _ in range(rng.randint(0, 7)))
        assert lcs_length(a, b) == lcs_oracle(a, b)


def test_cider_self_similarity_dominates():
    refs = {f"v{i}": [[f"w{i}", "is", "here", f"x{i}"]] * 3 for i in range(5)}
    perfect = {k: list(v[0]) for k, v in refs.items()}
    best = cider(perfect, refs)
    for i in range(5):
        for pos in range(4):
            cand = {k: list(v) for k, v in perfect.items()}
            cand[f"v{i}"][pos] = "zzz"
            assert cider(cand, refs) < best


def test_cider_no_shared_ngram_is_zero():
    refs = {"a": [["red", "car"]], "b": [["blue", "boat"]]}
    assert cider({"a": ["green", "tree"], "b": ["pink", "fish"]}, refs) == 0.0


def test_cider_needs_two_videos():
    with pytest.raises(ContractError, match="document frequenc"):
        cider({"a": ["x"]}, {"a": [["x"]]})


# values produced by the brute-force oracles in oracles.py, frozen
HAND_BLEU4 = 0.29084685537637245
HAND_ROUGE_L = 0.6617782968974587
HAND_CIDER = 2.1908434843568805


def test_hand_corpus_frozen_values():
    cands, refs = hand_corpus()
    assert bleu4(cands, refs) == pytest.approx(HAND_BLEU4, abs=1e-6)
    assert rouge_l(cands, refs) == pytest.approx(HAND_ROUGE_L, abs=1e-6)
    assert cider(cands, refs) == pytest.approx(HAND_CIDER, abs=1e-6)


def test_hand_corpus_matches_oracles():
    cands, refs = hand_corpus()
    assert len(cands) == 20
    assert bleu4(cands, refs) == pytest.approx(bleu4_oracle(cands, refs), abs=1e-6)
    assert rouge_l(cands, refs) == pytest.approx(rouge_l_oracle(cands, refs), abs=1e-6)
    assert cider(cands, refs) == pytest.approx(cider_oracle(cands, refs), abs=1e-6)
    assert 0 < bleu4(cands, refs) < 1


@settings(max_examples=30, deadline=None)
@given(st.randoms())
def test_metrics_ignore_corpus_order(r):
    cands, refs = hand_corpus()
    keys = list(cands)
    r.shuffle(keys)
    shuffled_c = {k: cands[k] for k in keys}
    shuffled_r = {k: [list(x) for x in reversed(refs[k])] for k in reversed(keys)}
    a, b = corpus_scores(cands, refs), corpus_scores(shuffled_c, shuffled_r)
    for name in a:
        assert a[name] == pytest.approx(b[name], abs=1e-12)


def test_scores_in_range():
    cands, refs = hand_corpus()
    s = corpus_scores(cands, refs)
    assert 0 <= s["BLEU-4"] <= 1 and 0 <= s["ROUGE-L"] <= 1 and s["CIDEr"] >= 0
