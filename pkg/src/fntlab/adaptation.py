"""Text-only adaptation of the internal LM, external LM training, and perplexity."""

from __future__ import annotations

import fnmatch
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .models import FACTORIZED, ArchitectureError, ModelBundle, ModelConfig, init_model, lm_loss
from .numerics import OptimConfig, adam_step


@dataclass
class AdaptConfig:
    """Fine-tuning settings. Only parameters matching ``trainable`` are updated."""

    steps: int = 300
    batch_size: int = 16
    lr: float = 3e-3
    trainable: tuple[str, ...] = ("vocab_lm.*",)
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.trainable = tuple(self.trainable)


def split_params(m: ModelBundle, patterns: Sequence[str]) -> tuple[list[str], list[str]]:
    """(trainable, frozen) parameter names under ``patterns``."""
    train = [n for n in m.params.names() if any(fnmatch.fnmatchcase(n, p) for p in patterns)]
    chosen = set(train)
    return train, [n for n in m.params.names() if n not in chosen]


def _lm_training(m: ModelBundle, corpus, steps, batch_size, lr, seed, names) -> list[float]:
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    rng = np.random.default_rng(seed)
    opt = OptimConfig(lr=lr, seed=seed)
    m.params.zero_grad()
    order = rng.permutation(len(corpus))
    pos = 0
    losses = []
    for _ in range(steps):
        idx = []
        while len(idx) < batch_size:
            if pos == len(order):
                order = rng.permutation(len(corpus))
                pos = 0
            idx.append(order[pos])
            pos += 1
        n_tok = sum(corpus[i].size + 1 for i in idx)
        total = 0.0
        for i in idx:
            total += lm_loss(m, corpus[i], backward=True, scale=1.0 / n_tok)
        adam_step(m.params, opt, names)
        losses.append(total / n_tok)
    return losses


def adapt_text_only(m: ModelBundle, corpus, cfg: AdaptConfig | None = None):
    """Fine-tune the vocabulary decoder of an FNT/IFNT model on target-domain text.

    Returns ``(adapted_bundle, per_step_token_ce)``; the input bundle is left
    untouched and every non-trainable parameter of the copy is bit-identical
    to it. Optimizer moments start fresh.
    """
    cfg = cfg or AdaptConfig()
    if m.arch not in FACTORIZED:
        raise ArchitectureError(
            f"text-only adaptation needs a factorized model (FNT/IFNT), got {m.arch}; "
            "for NT train an external LM and use shallow fusion"
        )
    out = m.copy()
    out.params.reset_optimizer()
    names, frozen = split_params(out, cfg.trainable)
    losses = _lm_training(out, corpus, cfg.steps, cfg.batch_size, cfg.lr, cfg.seed, names)
    out.info = {**m.info, "adapted": True, "trainable": list(cfg.trainable), "frozen": frozen}
    return out, losses


@dataclass
class LMTrainConfig:
    steps: int = 600
    batch_size: int = 16
    lr: float = 3e-3
    seed: int = 0
    dec_width: int = 32
    embed_dim: int = 16


def train_external_lm(corpus, V: int, cfg: LMTrainConfig | None = None) -> tuple[ModelBundle, list[float]]:
    """Standalone recurrent LM (same family as the vocabulary decoder) trained from scratch."""
    cfg = cfg or LMTrainConfig()
    if len(corpus) == 0:
        raise ValueError("cannot train a language model on an empty corpus")
    mcfg = ModelConfig(arch="LM", V=V, dec_width=cfg.dec_width, embed_dim=cfg.embed_dim)
    m = init_model(mcfg, cfg.seed)
    losses = _lm_training(m, corpus, cfg.steps, cfg.batch_size, cfg.lr, cfg.seed, m.params.names())
    return m, losses


def corpus_nll(m: ModelBundle, corpus) -> tuple[float, int]:
    """Total ``-log P`` (nats, EOS included) and token count."""
    total = 0.0
    count = 0
    for s in corpus:
        total += lm_loss(m, s)
        count += len(s) + 1
    return total, count


def perplexity(m: ModelBundle, corpus) -> float:
    if len(corpus) == 0:
        raise ValueError("perplexity of an empty corpus is undefined")
    total, count = corpus_nll(m, corpus)
    return math.exp(total / count)
