"""Frame-synchronous greedy and beam-search decoding with optional shallow fusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import ModelBundle, PredState, acoustic_projections, advance_state, initial_state, joint_step

MAX_SYMBOLS_PER_FRAME = 5


@dataclass
class Hypothesis:
    tokens: tuple
    e2e_logscore: float
    lm_logscore: float
    state: PredState
    lm_state: Optional[PredState] = None

    def fused(self, lambda_T: float) -> float:
        return fuse_score(self, lambda_T)


@dataclass
class FusionConfig:
    lambda_T: float
    external_lm: ModelBundle

    def __post_init__(self):
        if self.lambda_T < 0:
            raise ValueError("lambda_T must be >= 0")
        if "vocab_lm.out.W" not in self.external_lm.params:
            raise ValueError("external LM bundle has no vocab_lm parameters")


def fuse_score(h: Hypothesis, lambda_T: float) -> float:
    return h.e2e_logscore + lambda_T * h.lm_logscore


def _max_labels(T: int) -> int:
    return 2 * T


def greedy_decode(m: ModelBundle, feats, max_symbols_per_frame: int = MAX_SYMBOLS_PER_FRAME) -> list[int]:
    """Argmax over V+1 at each lattice position; blank advances the frame.

    At most ``max_symbols_per_frame`` labels per frame and ``2*T`` labels in
    total, after which blank is forced.
    """
    ac = acoustic_projections(m, feats)
    T = ac["T"]
    blank = m.config.blank_id
    st = initial_state(m)
    out: list[int] = []
    for t in range(T):
        for _ in range(max_symbols_per_frame):
            if len(out) >= _max_labels(T):
                break
            k = int(np.argmax(joint_step(m, ac, t, st)))
            if k == blank:
                break
            out.append(k)
            st = advance_state(m, st, k)
    return out


def _check_fusion(m: ModelBundle, fusion: Optional[FusionConfig]) -> float:
    if fusion is None:
        return 0.0
    if fusion.external_lm.config.V != m.config.V:
        raise ValueError(
            f"external LM vocabulary size {fusion.external_lm.config.V} != model vocabulary {m.config.V}"
        )
    return fusion.lambda_T


def beam_search(
    m: ModelBundle,
    feats,
    beam: int = 5,
    fusion: Optional[FusionConfig] = None,
    max_symbols_per_frame: int = MAX_SYMBOLS_PER_FRAME,
) -> list[Hypothesis]:
    """N-best list ranked by ``e2e + lambda_T * lm`` (best first).

    Within a frame, every active hypothesis proposes its blank extension and
    its ``beam`` best label extensions; the ``beam`` best proposals overall
    survive. Blank-extended survivors are finished for the frame (identical
    token sequences are merged by log-sum-exp of their E2E scores), label
    survivors keep expanding. With ``beam=1`` this is exactly greedy search.
    """
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")
    lam = _check_fusion(m, fusion)
    lm = fusion.external_lm if fusion is not None else None
    ac = acoustic_projections(m, feats)
    T = ac["T"]
    V = m.config.V
    blank = m.config.blank_id
    cap = _max_labels(T)

    def rank_key(score, tokens):
        return (-score, tokens)

    hyps = [Hypothesis((), 0.0, 0.0, initial_state(m), initial_state(lm) if lm is not None else None)]
    for t in range(T):
        active = hyps
        finished: dict[tuple, Hypothesis] = {}
        for s in range(max_symbols_per_frame + 1):
            if not active:
                break
            proposals = []
            for hi, h in enumerate(active):
                lp = joint_step(m, ac, t, h.state)
                base = h.e2e_logscore + lam * h.lm_logscore
                proposals.append((base + lp[blank], h.tokens, hi, blank, lp[blank], 0.0))
                if s < max_symbols_per_frame and len(h.tokens) < cap:
                    lm_lp = h.lm_state.lm_vocab if h.lm_state is not None else np.zeros(V)
                    fused = lp[:V] + lam * lm_lp
                    top = np.argsort(-fused, kind="stable")[:beam]
                    for k in top:
                        k = int(k)
                        proposals.append((base + fused[k], h.tokens + (k,), hi, k, lp[k], lm_lp[k]))
            proposals.sort(key=lambda p: rank_key(p[0], p[1]))
            next_active = []
            for score, tokens, hi, k, e2e_inc, lm_inc in proposals[:beam]:
                h = active[hi]
                if k == blank:
                    prev = finished.get(tokens)
                    e2e = h.e2e_logscore + e2e_inc
                    if prev is None:
                        finished[tokens] = Hypothesis(tokens, e2e, h.lm_logscore, h.state, h.lm_state)
                    else:
                        prev.e2e_logscore = float(np.logaddexp(prev.e2e_logscore, e2e))
                else:
                    next_active.append(Hypothesis(
                        tokens,
                        h.e2e_logscore + float(e2e_inc),
                        h.lm_logscore + float(lm_inc),
                        advance_state(m, h.state, k),
                        advance_state(lm, h.lm_state, k) if lm is not None else None,
                    ))
            active = next_active
        hyps = sorted(finished.values(), key=lambda h: rank_key(fuse_score(h, lam), h.tokens))[:beam]
    return hyps


def decode(m: ModelBundle, feats, beam: int = 1, fusion: Optional[FusionConfig] = None) -> list[int]:
    """Best token sequence: greedy for ``beam == 1`` without fusion, else beam search."""
    if beam == 1 and fusion is None:
        return greedy_decode(m, feats)
    return list(beam_search(m, feats, beam, fusion)[0].tokens)


def default_beam(arch: str) -> int:
    """Decoding policy: beam 5 for the standard transducer, greedy for factorized ones."""
    return 5 if arch == "NT" else 1
