"""Independent brute-force reference implementations shared by the tests."""

import math
from collections import Counter

import numpy as np


def visual_context_oracle(records, projected, k):
    """Explicit double sum: per occurrence, per selected item, then divide by the stream's weight mass."""
    out = None
    for stream in (0, 1):
        num, den = None, 0.0
        for rec in records:
            w = rec.weights2d if stream == 0 else rec.weights3d
            feats = projected[rec.video_id][stream]
            chosen = sorted(range(len(w)), key=lambda j: (-w[j], j))[: min(k, len(w))]
            for j in chosen:
                term = w[j] * feats[j]
                num = term if num is None else num + term
                den += w[j]
        part = num / den
        out = part if out is None else out + part
    return out


def _ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def bleu4_oracle(cands, refs):
    matches, totals = [0] * 4, [0] * 4
    c_len = r_len = 0
    for vid in sorted(cands):
        c = cands[vid]
        c_len += len(c)
        r_len += min((abs(len(r) - len(c)), len(r)) for r in refs[vid])[1]
        for n in range(1, 5):
            grams = _ngrams(c, n)
            totals[n - 1] += len(grams)
            for g in set(grams):
                best = max(sum(1 for x in _ngrams(r, n) if x == g) for r in refs[vid])
                matches[n - 1] += min(sum(1 for x in grams if x == g), best)
    if min(matches) == 0:
        return 0.0
    logp = sum(math.log(matches[i] / totals[i]) for i in range(4)) / 4
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return bp * math.exp(logp)


def lcs_oracle(a, b):
    if not a or not b:
        return 0
    if a[-1] == b[-1]:
        return lcs_oracle(a[:-1], b[:-1]) + 1
    return max(lcs_oracle(a[:-1], b), lcs_oracle(a, b[:-1]))


def rouge_l_oracle(cands, refs, beta=1.2):
    total = 0.0
    for vid in cands:
        c = cands[vid]
        lcs = [lcs_oracle(tuple(c), tuple(r)) for r in refs[vid]]
        p = max(l / len(c) if c else 0.0 for l in lcs)
        r = max(l / len(ref) for l, ref in zip(lcs, refs[vid]))
        total += 0.0 if p == 0 or r == 0 else (1 + beta ** 2) * p * r / (r + beta ** 2 * p)
    return total / len(cands)


def cider_oracle(cands, refs):
    vids = sorted(cands)
    n_docs = len(vids)
    score = 0.0
    for vid in vids:
        per_n = []
        for n in range(1, 5):
            df = Counter()
            for other in vids:
                seen = set()
                for r in refs[other]:
                    seen.update(_ngrams(r, n))
                df.update(seen)

            def vec(tokens):
                tf = Counter(_ngrams(tokens, n))
                return {g: c * math.log(n_docs / max(1.0, df[g])) for g, c in tf.items()}

            cv = vec(cands[vid])
            sims = []
            for r in refs[vid]:
                rv = vec(r)
                dot = sum(cv[g] * rv.get(g, 0.0) for g in cv)
                nc = math.sqrt(sum(x * x for x in cv.values()))
                nr = math.sqrt(sum(x * x for x in rv.values()))
                sims.append(dot / (nc * nr) if nc > 0 and nr > 0 else 0.0)
            per_n.append(sum(sims) / len(sims))
        score += 10.0 * sum(per_n) / 4
    return score / n_docs


def exhaustive_best(step_table, K, T):
    """Highest-probability sequence over a fixed table ``step_table(prefix) -> probs``.

    Sequences stop at token ``eos=2`` or after ``T`` tokens.
    """
    best, best_lp = None, -math.inf

    def walk(prefix, lp):
        nonlocal best, best_lp
        if (prefix and prefix[-1] == 2) or len(prefix) == T:
            if lp > best_lp:
                best, best_lp = list(prefix), lp
            return
        p = step_table(tuple(prefix))
        for tok in range(K):
            if p[tok] > 0:
                walk(prefix + [tok], lp + math.log(p[tok]))

    walk([], 0.0)
    return best, best_lp


HAND_CORPUS = {
    "v00": ("a man is playing a guitar", ["a man plays a guitar", "someone is playing guitar"]),
    "v01": ("a woman is cooking", ["a woman is cooking food", "a lady cooks in a kitchen"]),
    "v02": ("a dog runs on the grass", ["a dog is running on grass", "the dog runs across a field"]),
    "v03": ("two people are talking", ["two men are talking", "people talk to each other"]),
    "v04": ("a cat is sleeping", ["a cat sleeps on a bed", "the cat is sleeping"]),
    "v05": ("a man is driving a car", ["a man drives a car", "someone is driving"]),
    "v06": ("a girl is singing", ["a girl sings a song", "a young woman is singing on stage"]),
    "v07": ("a boy is swimming in a pool", ["a boy swims in the pool", "a kid is swimming"]),
    "v08": ("people are dancing", ["a group of people dance", "people are dancing at a party"]),
    "v09": ("a man is cutting vegetables", ["a man slices vegetables", "someone is cutting an onion"]),
    "v10": ("a bird is flying", ["a bird flies in the sky", "a bird is flying over water"]),
    "v11": ("a player kicks a ball", ["a soccer player kicks the ball", "a man kicks a ball"]),
    "v12": ("a woman is reading a book", ["a woman reads", "a lady is reading a book"]),
    "v13": ("a car is racing", ["cars race on a track", "a race car is speeding"]),
    "v14": ("a man is talking", ["a man talks to the camera", "a person is speaking"]),
    "v15": ("a child is playing", ["a child plays with toys", "a kid is playing with a ball"]),
    "v16": ("a horse is running", ["a horse runs in a field", "a horse is galloping"]),
    "v17": ("a chef is cooking pasta", ["a chef cooks pasta", "someone is making pasta in a kitchen"]),
    "v18": ("a monkey eats a banana", ["a monkey is eating a banana", "an ape eats fruit"]),
    "v19": ("", ["a man is skiing", "someone skis down a hill"]),
}


def hand_corpus():
    cands = {vid: c.split() for vid, (c, _) in HAND_CORPUS.items()}
    refs = {vid: [r.split() for r in rs] for vid, (_, rs) in HAND_CORPUS.items()}
    return cands, refs
