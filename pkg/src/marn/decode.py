"""Caption generation from the basis distribution, optionally fused with the memory decoder."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .basis import BasisModel, build_context, gru_step, initial_state, predict_word, project_features
from .errors import ContractError
from .features import VideoFeatures
from .memdec import MemoryDecoderParams, fuse_probabilities, relevance_scores, word_terms
from .memory import MemoryBank
from .tensor import softmax_array
from .vocab import BOS_ID, EOS_ID

StepFn = Callable[[Any, int], tuple[np.ndarray, Any]]


@dataclass
class BeamHypothesis:
    token_ids: tuple[int, ...]
    log_prob: float
    state: Any


def _check_distribution(name: str, p: np.ndarray, tol: float = 1e-6) -> None:
    total = float(p.sum())
    if abs(total - 1.0) > tol or (p < 0).any():
        raise AssertionError(f"{name} is not a distribution (sum={total!r}, min={p.min()!r})")


@dataclass
class Captioner:
    """Step function over the basis decoder, fused with ``P_m`` when a memory decoder is given.

    With ``check=True`` every step asserts that ``P_b``, ``P_m`` and the fused
    distribution are non-negative and sum to 1 within 1e-6.
    """

    basis: BasisModel
    memdec: MemoryDecoderParams | None = None
    memory: MemoryBank | None = None
    lam: float = 0.0
    check: bool = False
    checked_steps: int = field(default=0, init=False)

    def __post_init__(self):
        if (self.memdec is None) != (self.memory is None):
            raise ContractError("memory decoder and memory bank must be supplied together")
        if not 0.0 <= self.lam <= 1.0:
            raise ContractError(f"lambda must lie in [0, 1], got {self.lam}")
        self._G = word_terms(self.memory, self.memdec) if self.memdec is not None else None

    def start(self, video: VideoFeatures):
        f2, f3 = project_features(video, self.basis.enc)
        return (f2, f3, initial_state(self.basis.dims))

    def step(self, state, prev_token: int):
        f2, f3, dstate = state
        dec = self.basis.dec
        dstate = replace(dstate, prev_token=prev_token)
        c_t, _, _ = build_context(dstate.h, f2, f3, dec)
        nstate = gru_step(dstate, c_t, dec)
        p_b = predict_word(nstate.h, dec).data
        if self.memdec is None:
            if self.check:
                _check_distribution("P_b", p_b)
                self.checked_steps += 1
            return p_b, (f2, f3, nstate)
        e_prev = dec.E.data[:, prev_token]
        q = relevance_scores(c_t, e_prev, dstate.h, self.memory, self.memdec, G=self._G).data
        p_m = softmax_array(q)
        p = fuse_probabilities(p_b, p_m, self.lam)
        if self.check:
            for name, dist in (("P_b", p_b), ("P_m", p_m), ("P", p)):
                _check_distribution(name, dist)
            self.checked_steps += 1
        return p, (f2, f3, nstate)


def greedy_search(step: StepFn, state, max_len: int = 20) -> list[int]:
    """Argmax decoding from ``<bos>``; the result (``<bos>`` excluded) holds at most ``max_len - 1`` tokens."""
    if max_len < 2:
        raise ContractError("max_len must be >= 2")
    out: list[int] = []
    prev = BOS_ID
    while len(out) < max_len - 1:
        p, state = step(state, prev)
        prev = int(np.argmax(p))
        out.append(prev)
        if prev == EOS_ID:
            break
    return out


def beam_search(step: StepFn, state, beam_width: int = 3, max_len: int = 20) -> BeamHypothesis:
    """Length-unnormalised beam search over log-probabilities.

    All candidate extensions of the live beam are ranked together (ties keep
    enumeration order, i.e. earlier hypothesis then lower token id) and the best
    ``beam_width`` survive; those ending in ``<eos>`` are retired as finished.
    Hypotheses still live at ``max_len`` count as finished.
    """
    if beam_width < 1:
        raise ContractError("beam_width must be >= 1")
    if max_len < 2:
        raise ContractError("max_len must be >= 2")
    live = [BeamHypothesis((), 0.0, state)]
    finished: list[BeamHypothesis] = []
    for _ in range(max_len - 1):
        rows, states = [], []
        for hyp in live:
            p, nstate = step(hyp.state, hyp.token_ids[-1] if hyp.token_ids else BOS_ID)
            with np.errstate(divide="ignore"):
                rows.append(hyp.log_prob + np.log(p))
            states.append(nstate)
        scores = np.concatenate(rows)
        K = len(rows[0])
        order = np.argsort(-scores, kind="stable")[:beam_width]
        nxt = []
        for flat in order:
            hi, w = divmod(int(flat), K)
            hyp = BeamHypothesis(live[hi].token_ids + (w,), float(scores[flat]), states[hi])
            (finished if w == EOS_ID else nxt).append(hyp)
        live = nxt
        if not live:
            break
    finished.extend(live)
    return max(finished, key=lambda h: h.log_prob)


def greedy_decode(video: VideoFeatures, captioner: Captioner, max_len: int = 20) -> list[int]:
    return greedy_search(captioner.step, captioner.start(video), max_len)


def beam_decode(video: VideoFeatures, captioner: Captioner, beam_width: int = 3, max_len: int = 20) -> list[int]:
    return list(beam_search(captioner.step, captioner.start(video), beam_width, max_len).token_ids)


def decode(video: VideoFeatures, captioner: Captioner, beam_width: int = 1, max_len: int = 20) -> list[int]:
    if beam_width == 1:
        return greedy_decode(video, captioner, max_len)
    return beam_decode(video, captioner, beam_width, max_len)
