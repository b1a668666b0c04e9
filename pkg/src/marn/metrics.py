"""Corpus-level caption metrics: BLEU-4, ROUGE-L and CIDEr.

Candidates map a video id to a token list; references map the same ids to a
list of token lists.  Conventions:

* BLEU-4: clipped n-gram precision (clip = max count in any single reference),
  uniform weights over n = 1..4, corpus brevity penalty with the closest
  reference length (ties to the shorter), no smoothing.
* ROUGE-L: LCS-based F-measure with beta = 1.2 using the best precision and
  best recall over a candidate's references; averaged over the corpus.
* CIDEr: TF-IDF n-gram vectors (n = 1..4), IDF from the references of the
  evaluated corpus, mean cosine similarity over references, mean over n,
  times 10; averaged over the corpus.  No length penalty or count clipping.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Mapping, Sequence

from .errors import ContractError

Tokens = Sequence[str]


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _pairs(candidates: Mapping[str, Tokens], references: Mapping[str, Sequence[Tokens]]):
    if not candidates:
        raise ContractError("metrics need at least one candidate")
    out = []
    for vid in sorted(candidates):
        refs = references.get(vid)
        if not refs:
            raise ContractError(f"candidate {vid!r} has no reference")
        out.append((list(candidates[vid]), [list(r) for r in refs]))
    return out


def bleu4(candidates: Mapping[str, Tokens], references: Mapping[str, Sequence[Tokens]]) -> float:
    pairs = _pairs(candidates, references)
    match = [0] * 4
    total = [0] * 4
    cand_len = ref_len = 0
    for cand, refs in pairs:
        cand_len += len(cand)
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, 5):
            counts = ngrams(cand, n)
            best: Counter = Counter()
            for r in refs:
                best |= ngrams(r, n)
            match[n - 1] += sum(min(c, best[g]) for g, c in counts.items())
            total[n - 1] += max(len(cand) - n + 1, 0)
    if cand_len == 0 or min(match) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(match, total)) / 4.0
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_p)


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_sentence(cand: Tokens, refs: Sequence[Tokens], beta: float = 1.2) -> float:
    if not cand:
        return 0.0
    precs, recs = [], []
    for r in refs:
        lcs = lcs_length(cand, r)
        precs.append(lcs / len(cand))
        recs.append(lcs / len(r) if r else 0.0)
    p, r = max(precs), max(recs)
    if p == 0 or r == 0:
        return 0.0
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


def rouge_l(candidates: Mapping[str, Tokens], references: Mapping[str, Sequence[Tokens]]) -> float:
    pairs = _pairs(candidates, references)
    return sum(rouge_l_sentence(c, refs) for c, refs in pairs) / len(pairs)


def _tfidf(tokens: Tokens, df: Counter, log_n: float):
    vecs, norms = [], []
    for n in range(1, 5):
        vec = {g: c * (log_n - math.log(max(1.0, df[g]))) for g, c in ngrams(tokens, n).items()}
        vecs.append(vec)
        norms.append(math.sqrt(sum(x * x for x in vec.values())))
    return vecs, norms


def cider_per_video(candidates: Mapping[str, Tokens], references: Mapping[str, Sequence[Tokens]]) -> dict[str, float]:
    pairs = _pairs(candidates, references)
    if len(pairs) < 2:
        raise ContractError("CIDEr needs at least 2 videos to estimate document frequencies")
    df: Counter = Counter()
    for _, refs in pairs:
        seen = set()
        for r in refs:
            for n in range(1, 5):
                seen.update(ngrams(r, n))
        df.update(seen)
    log_n = math.log(len(pairs))
    scores = {}
    for vid, (cand, refs) in zip(sorted(candidates), pairs):
        cv, cn = _tfidf(cand, df, log_n)
        acc = [0.0] * 4
        for r in refs:
            rv, rn = _tfidf(r, df, log_n)
            for i in range(4):
                if cn[i] and rn[i]:
                    acc[i] += sum(x * rv[i].get(g, 0.0) for g, x in cv[i].items()) / (cn[i] * rn[i])
        scores[vid] = 10.0 * sum(acc) / 4.0 / len(refs)
    return scores


def cider(candidates: Mapping[str, Tokens], references: Mapping[str, Sequence[Tokens]]) -> float:
    per = cider_per_video(candidates, references)
    return sum(per.values()) / len(per)


def corpus_scores(candidates, references) -> dict[str, float]:
    return {
        "BLEU-4": bleu4(candidates, references),
        "ROUGE-L": rouge_l(candidates, references),
        "CIDEr": cider(candidates, references),
    }
