"""Mini-batch Adam training of a transducer on paired utterances."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Utterance
from .models import ModelBundle, compute_loss
from .numerics import OptimConfig, adam_step

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 3e-3
    warmup_steps: int = 100
    seed: int = 0
    checkpoint_every: int = 50
    keep_last: int = 5


@dataclass
class StepLog:
    step: int
    J_t: float
    lm_ce: float
    J_f: float


def train(
    m: ModelBundle,
    utts: Sequence[Utterance],
    cfg: TrainConfig,
    on_checkpoint: Optional[Callable[[int, ModelBundle], None]] = None,
    on_step: Optional[Callable[[StepLog], None]] = None,
) -> list[StepLog]:
    """Train ``m`` in place. Logged losses are per-utterance means over the batch.

    ``on_checkpoint(step, bundle)`` fires every ``checkpoint_every`` steps and
    at the last step; ``on_step(log)`` after every update. A non-finite loss
    aborts before the parameters change, so the last checkpoint stays good.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = OptimConfig(lr=cfg.lr, seed=cfg.seed, warmup_steps=cfg.warmup_steps)
    order = rng.permutation(len(utts))
    pos = 0
    history: list[StepLog] = []
    m.params.zero_grad()
    for step in range(1, cfg.steps + 1):
        idx = []
        while len(idx) < cfg.batch_size:
            if pos == len(order):
                order = rng.permutation(len(utts))
                pos = 0
            idx.append(order[pos])
            pos += 1
        J_t = lm_ce = J_f = 0.0
        B = len(idx)
        for i in idx:
            lb = compute_loss(m, utts[i].feats, utts[i].transcript, backward=True, scale=1.0 / B)
            J_t += lb.J_t / B
            lm_ce += lb.lm_ce / B
            J_f += lb.J_f / B
        if not math.isfinite(J_f):
            m.params.zero_grad()
            raise NonFiniteLossError(f"non-finite loss at step {step}")
        adam_step(m.params, opt)
        history.append(StepLog(step, J_t, lm_ce, J_f))
        if on_step is not None:
            on_step(history[-1])
        if step % 100 == 0:
            log.info("step %d J_t=%.4f lm_ce=%.4f J_f=%.4f", step, J_t, lm_ce, J_f)
        if on_checkpoint is not None and (step % cfg.checkpoint_every == 0 or step == cfg.steps):
            on_checkpoint(step, m)
    return history
