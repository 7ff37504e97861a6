"""Transducer alignment loss: forward-backward over the (t, u) lattice.

Convention: an alignment is a sequence of T blanks and U labels whose last
symbol is a blank emitted at the final frame, so under uniform emissions
there are C(T+U-1, U) alignments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .numerics import log_softmax_backward, logsumexp

BRUTE_FORCE_MAX = 14


class NoAlignmentError(ValueError):
    pass


@dataclass
class EmissionLattice:
    """Per-(t, u) log-probabilities over the vocabulary plus blank."""

    logp: np.ndarray  # [T, U+1, V+1]
    target: np.ndarray  # [U]
    blank_id: int

    def __post_init__(self):
        self.logp = np.ascontiguousarray(self.logp, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.int64).reshape(-1)
        if self.logp.ndim != 3:
            raise ValueError(f"lattice must be [T, U+1, V+1], got shape {self.logp.shape}")
        T, U1, K = self.logp.shape
        if U1 != self.target.size + 1:
            raise ValueError(f"lattice has U+1={U1} rows but target has {self.target.size} labels")
        if not 0 <= self.blank_id < K:
            raise ValueError(f"blank_id {self.blank_id} outside [0, {K})")
        if np.any(self.target == self.blank_id) or np.any((self.target < 0) | (self.target >= K)):
            raise ValueError("target ids must be non-blank vocabulary ids")

    @property
    def T(self) -> int:
        return self.logp.shape[0]

    @property
    def U(self) -> int:
        return self.target.size

    def check_normalized(self, tol: float = 1e-8) -> bool:
        return bool(np.all(np.abs(np.exp(self.logp).sum(-1) - 1.0) < tol))


@dataclass
class AlphaBeta:
    alpha: np.ndarray  # [T, U+1]
    beta: np.ndarray  # [T, U+1]


def _require_alignable(T: int, U: int) -> None:
    if T < 1:
        raise NoAlignmentError(f"no alignment exists for T={T}, U={U}")


def forward_backward(lat: EmissionLattice) -> tuple[AlphaBeta, float]:
    """Returns the alpha/beta tables and the total log-likelihood."""
    _require_alignable(lat.T, lat.U)
    alpha, beta, loglik, _ = kernels.transducer_fwd_bwd(lat.logp, lat.target, lat.blank_id)
    return AlphaBeta(alpha, beta), float(loglik)


def loss_and_grad(lat: EmissionLattice) -> tuple[float, np.ndarray]:
    """``-log P(y|x)`` and its gradient w.r.t. ``lat.logp``."""
    _require_alignable(lat.T, lat.U)
    _, _, loglik, grad = kernels.transducer_fwd_bwd(lat.logp, lat.target, lat.blank_id)
    return -float(loglik), grad


def loss_grad(lat: EmissionLattice) -> np.ndarray:
    return loss_and_grad(lat)[1]


def loss_grad_logits(lat: EmissionLattice) -> np.ndarray:
    """Gradient w.r.t. the pre-softmax logits that produced ``lat.logp``."""
    return log_softmax_backward(loss_grad(lat), lat.logp)


def rnnt_loss(lat: EmissionLattice) -> float:
    return -forward_backward(lat)[1]


def brute_force_loss(lat: EmissionLattice) -> float:
    """Loss by explicit enumeration of every alignment that collapses to the target.

    Label positions are chosen among the first T+U-1 slots (the last slot is
    the terminating blank); each choice is one alignment.
    """
    T, U = lat.T, lat.U
    _require_alignable(T, U)
    if T + U > BRUTE_FORCE_MAX:
        raise ValueError(f"T+U={T + U} exceeds enumeration bound {BRUTE_FORCE_MAX}")
    n = T + U
    blank = lat.blank_id
    path_scores = []
    for label_slots in itertools.combinations(range(n - 1), U):
        slots = set(label_slots)
        t = u = 0
        score = 0.0
        for i in range(n):
            if i in slots:
                score += lat.logp[t, u, lat.target[u]]
                u += 1
            else:
                score += lat.logp[t, u, blank]
                t += 1
        path_scores.append(score)
    return -float(logsumexp(np.array(path_scores)))


def batch_loss_and_grad(logps: Sequence[np.ndarray], targets: Sequence, blank_id: int, T_lens, U_lens):
    """Summed loss over padded lattices [B, Tmax, Umax+1, K] with length masks.

    Padded cells get exactly zero gradient.
    """
    logps = np.asarray(logps, dtype=np.float64)
    grad = np.zeros_like(logps)
    total = 0.0
    for i, (T, U) in enumerate(zip(T_lens, U_lens)):
        lat = EmissionLattice(logps[i, :T, : U + 1], np.asarray(targets[i])[:U], blank_id)
        loss, g = loss_and_grad(lat)
        total += loss
        grad[i, :T, : U + 1] = g
    return total, grad


def dump_alpha_beta(ab: AlphaBeta, loglik: float | None = None) -> str:
    """Plain-text rendering of alpha/beta tables, rows indexed by t."""
    lines = []
    if loglik is not None:
        lines.append(f"loglik {loglik:.10g}")
    for label, table in (("alpha", ab.alpha), ("beta", ab.beta)):
        lines.append(f"{label} [T={table.shape[0]}, U+1={table.shape[1]}]")
        for t, row in enumerate(table):
            lines.append(f"t={t:3d} " + " ".join(f"{v:12.6f}" for v in row))
    return "\n".join(lines)


def uniform_loss(T: int, U: int, V: int) -> float:
    """Closed form for a uniform lattice over V+1 classes."""
    return (T + U) * math.log(V + 1) - math.log(math.comb(T + U - 1, U))
