"""Error-rate scoring and checkpoint averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .models import ModelBundle
from .numerics import ParamStore


@dataclass
class WerReport:
    substitutions: int
    insertions: int
    deletions: int
    ref_count: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_count

    def __add__(self, other: "WerReport") -> "WerReport":
        return WerReport(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_count + other.ref_count,
        )

    def as_record(self, name: str = "all") -> str:
        return (f"{name}: S={self.substitutions} I={self.insertions} D={self.deletions} "
                f"N={self.ref_count} WER={100 * self.wer:.2f}%")

    def as_keyvalue(self, name: str = "all") -> dict:
        return {f"{name}.S": self.substitutions, f"{name}.I": self.insertions,
                f"{name}.D": self.deletions, f"{name}.N": self.ref_count, f"{name}.wer": self.wer}


def edit_distance(ref: Sequence, hyp: Sequence) -> WerReport:
    """Levenshtein alignment counts; ties prefer substitution, then deletion, then insertion."""
    if len(ref) == 0:
        raise ValueError("reference must be non-empty")
    if isinstance(ref[0], str) or (len(hyp) and isinstance(hyp[0], str)):
        table: dict = {}
        ref = [table.setdefault(x, len(table)) for x in ref]
        hyp = [table.setdefault(x, len(table)) for x in hyp]
    S, I, D = kernels.levenshtein_counts(np.asarray(ref, dtype=np.int64), np.asarray(hyp, dtype=np.int64))
    return WerReport(int(S), int(I), int(D), len(ref))


def corpus_wer(pairs: Iterable[tuple[Sequence, Sequence]]) -> WerReport:
    """Pooled counts over (ref, hyp) pairs."""
    total = None
    for ref, hyp in pairs:
        r = edit_distance(ref, hyp)
        total = r if total is None else total + r
    if total is None:
        raise ValueError("corpus_wer needs at least one pair")
    return total


def write_report(path, reports: dict[str, WerReport], extra: dict | None = None) -> None:
    """Human-readable record at ``path`` and ``key=value`` lines at ``path`` + ``.kv``."""
    path = Path(path)
    lines = [r.as_record(name) for name, r in reports.items()]
    kv = {}
    for name, r in reports.items():
        kv.update(r.as_keyvalue(name))
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
        kv[k] = v
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    Path(str(path) + ".kv").write_text("".join(f"{k}={v}\n" for k, v in kv.items()), encoding="utf-8")


def _exact_mean(columns: np.ndarray) -> np.ndarray:
    """Mean of each column of ``[n, k]``, off the exact rational mean by at most a rounding.

    ``fsum`` is exact up to its final rounding, so the result ignores input
    order. One residual correction repairs the error of dividing a rounded
    sum, which also makes n identical values come back bit-exact.
    """
    n = columns.shape[0]
    out = np.empty(columns.shape[1])
    for i, xs in enumerate(columns.T.tolist()):
        m = math.fsum(xs) / n
        out[i] = m + math.fsum(xs + [-m] * n) / n
    return out


def average_checkpoints(sources: Sequence) -> ModelBundle:
    """Per-parameter arithmetic mean of checkpoints (paths or bundles) sharing one config."""
    bundles = [s if isinstance(s, ModelBundle) else ModelBundle.load(s) for s in sources]
    if not bundles:
        raise ValueError("no checkpoints to average")
    ref = bundles[0]
    ref_cfg = ref.config.to_dict()
    for b in bundles[1:]:
        cfg = b.config.to_dict()
        for key in ref_cfg:
            if cfg.get(key) != ref_cfg[key]:
                raise ValueError(f"checkpoint config mismatch in field {key!r}: {ref_cfg[key]!r} vs {cfg.get(key)!r}")
        if b.params.names() != ref.params.names():
            raise ValueError("checkpoint parameter sets differ")
    store = ParamStore()
    n = len(bundles)
    for name in ref.params.names():
        stack = np.stack([b.params[name] for b in bundles])
        store.add(name, _exact_mean(stack.reshape(n, -1)).reshape(stack.shape[1:]))
    store.step = max(b.params.step for b in bundles)
    return ModelBundle(ref.config, store, {"averaged_steps": [b.params.step for b in bundles]})
