"""End-to-end experiment: train on a source domain, adapt on target text, evaluate before/after.

Per seed:

1. Sample a source domain and a language-shifted target domain that shares
   its acoustics. Paired source train/dev, text-only target train, paired
   target dev/test.
2. Train NT, FNT and IFNT on source pairs; average the last checkpoints.
3. FNT/IFNT: fine-tune ``vocab_lm.*`` on target text only; measure target
   PPL and WER before/after and source WER after.
4. NT: train an external LM on target text, pick the fusion weight on target
   dev, report target test WER against NT alone.

Only target *text* ever reaches training; target audio is used for scoring.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import data
from .adaptation import AdaptConfig, LMTrainConfig, adapt_text_only, perplexity, train_external_lm
from .decoding import FusionConfig, beam_search, default_beam, greedy_decode
from .metrics import WerReport, average_checkpoints, corpus_wer
from .models import ModelBundle, ModelConfig, init_model, lm_view
from .training import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    # synthetic domains
    V: int = 31
    feat_dim: int = 8
    successors: int = 6
    twin_gap: float = 1.3
    twin_bias: float = 0.85
    smoothing: float = 0.15
    noise: float = 0.5
    shift: float = 0.8
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    n_target_text: int = 2000
    # model
    D: int = 32
    enc_width: int = 32
    enc_layers: int = 2
    dec_width: int = 32
    embed_dim: int = 16
    lambda_f: float = 0.1
    # optimisation
    steps: int = 2000
    batch_size: int = 8
    lr: float = 3e-3
    warmup_steps: int = 100
    checkpoint_every: int = 50
    average_last: int = 5
    adapt_steps: int = 100
    adapt_lr: float = 3e-3
    lm_steps: int = 800
    # decoding
    beam: int = 5
    lambda_T_grid: tuple = (0.0, 0.1, 0.3)
    archs: tuple = ("NT", "FNT", "IFNT")

    def model_config(self, arch: str) -> ModelConfig:
        return ModelConfig(arch=arch, V=self.V, D=self.D, feat_dim=self.feat_dim, enc_width=self.enc_width,
                           enc_layers=self.enc_layers, dec_width=self.dec_width, embed_dim=self.embed_dim,
                           lambda_f=self.lambda_f)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DomainData:
    source: data.DomainSpec
    target: data.DomainSpec
    source_train: list
    source_dev: list
    target_text: data.TextCorpus
    target_dev: list
    target_test: list


def make_data(cfg: ExperimentConfig, seed: int) -> DomainData:
    src = data.random_domain_spec(seed, V=cfg.V, feat_dim=cfg.feat_dim, successors=cfg.successors,
                                  twin_gap=cfg.twin_gap, noise=cfg.noise, twin_bias=cfg.twin_bias,
                                  smoothing=cfg.smoothing)
    tgt = data.make_shifted_domain(src, cfg.shift, successors=cfg.successors, twin_bias=cfg.twin_bias,
                                   smoothing=cfg.smoothing)
    base = 10_000 * (seed + 1)
    src_train, _ = data.generate_domain(src, cfg.n_train, seed=base + 1, prefix="src_train_")
    src_dev, _ = data.generate_domain(src, cfg.n_dev, seed=base + 2, prefix="src_dev_")
    tgt_text = data.generate_text(tgt, cfg.n_target_text, seed=base + 3)
    tgt_dev, _ = data.generate_domain(tgt, cfg.n_dev, seed=base + 4, prefix="tgt_dev_")
    tgt_test, _ = data.generate_domain(tgt, cfg.n_test, seed=base + 5, prefix="tgt_test_")
    return DomainData(src, tgt, src_train, src_dev, tgt_text, tgt_dev, tgt_test)


def train_source_model(cfg: ExperimentConfig, arch: str, utts, seed: int) -> tuple[ModelBundle, list]:
    """Train from scratch and return the average of the last ``average_last`` checkpoints."""
    m = init_model(cfg.model_config(arch), seed)
    snapshots: list[ModelBundle] = []

    def keep(step, bundle):
        snapshots.append(bundle.copy())
        del snapshots[: -cfg.average_last]

    tcfg = TrainConfig(steps=cfg.steps, batch_size=cfg.batch_size, lr=cfg.lr, warmup_steps=cfg.warmup_steps,
                       seed=seed, checkpoint_every=cfg.checkpoint_every, keep_last=cfg.average_last)
    history = train(m, utts, tcfg, on_checkpoint=keep)
    return average_checkpoints(snapshots), history


def decode_set(m: ModelBundle, utts, beam: int = 1, fusion: Optional[FusionConfig] = None) -> list[list[int]]:
    if beam == 1 and fusion is None:
        return [greedy_decode(m, u.feats) for u in utts]
    return [list(beam_search(m, u.feats, beam, fusion)[0].tokens) for u in utts]


def score(utts, hyps) -> WerReport:
    return corpus_wer((u.transcript, h) for u, h in zip(utts, hyps))


def run_seed(cfg: ExperimentConfig, seed: int, models: Optional[dict] = None) -> dict:
    """All measurements for one seed. ``models`` may carry pre-trained source models by arch."""
    t0 = time.time()
    d = make_data(cfg, seed)
    out: dict = {"seed": seed}
    models = dict(models or {})
    for arch in cfg.archs:
        if arch not in models:
            t_train = time.time()
            models[arch], hist = train_source_model(cfg, arch, d.source_train, seed)
            out[f"{arch}.train_seconds"] = time.time() - t_train
            out[f"{arch}.train_first_J_f"] = hist[0].J_f
            out[f"{arch}.train_last_J_f"] = float(np.mean([h.J_f for h in hist[-50:]]))
        m = models[arch]
        beam = 1 if arch != "NT" else cfg.beam
        out[f"{arch}.source_dev_wer"] = score(d.source_dev, decode_set(m, d.source_dev, beam)).wer
        out[f"{arch}.target_test_wer"] = score(d.target_test, decode_set(m, d.target_test, beam)).wer

        if arch in ("FNT", "IFNT"):
            t_adapt = time.time()
            dev_text = data.TextCorpus([u.transcript for u in d.target_dev])
            out[f"{arch}.target_ppl"] = perplexity(lm_view(m), dev_text)
            adapted, _ = adapt_text_only(m, d.target_text, AdaptConfig(steps=cfg.adapt_steps, lr=cfg.adapt_lr,
                                                                      seed=seed))
            out[f"{arch}.adapted_target_ppl"] = perplexity(lm_view(adapted), dev_text)
            out[f"{arch}.adapted_target_test_wer"] = score(d.target_test, decode_set(adapted, d.target_test)).wer
            out[f"{arch}.adapted_source_dev_wer"] = score(d.source_dev, decode_set(adapted, d.source_dev)).wer
            models[f"{arch}.adapted"] = adapted
            out[f"{arch}.adapt_seconds"] = time.time() - t_adapt

        if arch == "NT":
            ext, _ = train_external_lm(d.target_text, cfg.V, LMTrainConfig(steps=cfg.lm_steps, seed=seed,
                                                                          dec_width=cfg.dec_width,
                                                                          embed_dim=cfg.embed_dim))
            models["ext_lm"] = ext
            best = None
            for lam in cfg.lambda_T_grid:
                fusion = FusionConfig(lam, ext)
                dev_wer = score(d.target_dev, decode_set(m, d.target_dev, cfg.beam, fusion)).wer
                out[f"NT.fusion_dev_wer@{lam}"] = dev_wer
                if best is None or dev_wer < best[1]:
                    best = (lam, dev_wer)
            out["NT.fusion_lambda_T"] = best[0]
            fusion = FusionConfig(best[0], ext)
            out["NT.fusion_target_test_wer"] = score(d.target_test, decode_set(m, d.target_test, cfg.beam,
                                                                               fusion)).wer
    out["seconds"] = time.time() - t0
    out["_models"] = models
    return out
