"""Standard (NT), factorized (FNT) and improved factorized (IFNT) transducers.

All three share the same frame encoder. They differ in how label history
enters the per-(t, u) output distribution:

* NT: one label recurrence; encoder and label projections are added in the
  joint space of width ``D``, squashed with tanh and projected to V+1.
* FNT: a blank branch (own recurrence, NT-style joint with a single output)
  and a vocabulary branch whose scores are ``proj_V(f_t) + log P_LM(.|y<u)``.
* IFNT: blank branch as FNT; the LM hidden state goes through a sigmoid, is
  projected to ``D`` and fused NT-style with the encoder before projecting to
  V, and the LM log-posterior is added to the resulting vocabulary scores.

The standalone language model inside FNT/IFNT lives entirely under the
``vocab_lm.*`` parameter prefix. An ``LM`` bundle holds only that subtree and
serves as the external LM for shallow fusion.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import rnnt_loss
from .numerics import (
    ParamStore,
    ShapeError,
    affine,
    affine_backward,
    dumps_tensors,
    load_tensors,
    log_softmax,
    log_softmax_backward,
    loads_tensors,
    outer_add,
    outer_add_backward,
    recurrent_step,
    recurrent_step_backward,
    save_tensors,
    sigmoid,
    sigmoid_backward,
    store_from_tensors,
    tanh_backward,
)

ARCHS = ("NT", "FNT", "IFNT", "LM")
FACTORIZED = ("FNT", "IFNT")
LM_PREFIX = "vocab_lm."


class ArchitectureError(ValueError):
    pass


@dataclass
class ModelConfig:
    arch: str = "IFNT"
    V: int = 31
    D: int = 32
    feat_dim: int = 8
    enc_width: int = 32
    enc_layers: int = 2
    context: int = 1
    dec_width: int = 32
    embed_dim: int = 16
    lambda_f: float = 0.1

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ArchitectureError(f"unknown architecture {self.arch!r}; expected one of {ARCHS}")
        if self.V < 2:
            raise ValueError("V must be >= 2")
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if self.lambda_f < 0:
            raise ValueError("lambda_f must be >= 0")
        if self.enc_layers < 1:
            raise ValueError("enc_layers must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @property
    def blank_id(self) -> int:
        return self.V

    @property
    def sos_id(self) -> int:
        return self.V


@dataclass
class ModelBundle:
    config: ModelConfig
    params: ParamStore
    info: dict = field(default_factory=dict)

    @property
    def arch(self) -> str:
        return self.config.arch

    def copy(self) -> "ModelBundle":
        return ModelBundle(ModelConfig.from_dict(self.config.to_dict()), self.params.copy(), dict(self.info))

    def metadata(self, **extra) -> dict:
        meta = {"arch": self.config.arch, "config": self.config.to_dict(), "step": self.params.step,
                "info": self.info}
        meta.update(extra)
        return meta

    def to_bytes(self, **extra_meta) -> bytes:
        return dumps_tensors(dict(self.params.items()), self.metadata(**extra_meta))

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelBundle":
        tensors, meta = loads_tensors(blob)
        return cls._from_parts(tensors, meta)

    def save(self, path, **extra_meta) -> None:
        save_tensors(path, dict(self.params.items()), self.metadata(**extra_meta))

    @classmethod
    def load(cls, path) -> "ModelBundle":
        tensors, meta = load_tensors(path)
        return cls._from_parts(tensors, meta)

    @classmethod
    def _from_parts(cls, tensors, meta) -> "ModelBundle":
        cfg = ModelConfig.from_dict(meta["config"])
        if meta.get("arch", cfg.arch) != cfg.arch:
            raise ArchitectureError("checkpoint architecture tag disagrees with its config")
        return cls(cfg, store_from_tensors(tensors, int(meta.get("step", 0))), dict(meta.get("info", {})))


@dataclass
class LossBreakdown:
    J_t: float
    lm_ce: float
    J_f: float
    lambda_f: float


# --------------------------------------------------------------------------- construction


def init_model(cfg: ModelConfig, seed: int = 0) -> ModelBundle:
    rng = np.random.default_rng(seed)
    p = ParamStore()
    V, D, H, E = cfg.V, cfg.D, cfg.dec_width, cfg.embed_dim

    def linear(name, fan_in, fan_out):
        p.add(name + ".W", rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)))
        p.add(name + ".b", np.zeros(fan_out))

    def recurrence(name):
        # row V of the embedding is the start-of-sequence symbol
        p.add(name + ".embed", rng.normal(0.0, 1.0, (V + 1, E)))
        linear(name + ".rnn", H + E, H)

    if cfg.arch != "LM":
        width = cfg.feat_dim * (2 * cfg.context + 1)
        for i in range(cfg.enc_layers):
            linear(f"encoder.l{i}", width, cfg.enc_width)
            width = cfg.enc_width
    if cfg.arch == "NT":
        recurrence("pred")
        linear("joint.enc_proj", cfg.enc_width, D)
        linear("joint.pred_proj", H, D)
        linear("joint.out", D, V + 1)
    if cfg.arch in FACTORIZED:
        recurrence("blank_dec")
        linear("blank_joint.enc_proj", cfg.enc_width, D)
        linear("blank_joint.pred_proj", H, D)
        linear("blank_joint.out", D, 1)
    if cfg.arch in FACTORIZED + ("LM",):
        recurrence("vocab_lm")
        linear("vocab_lm.out", H, V + 1)
    if cfg.arch == "FNT":
        linear("vocab_joint.enc_proj", cfg.enc_width, V)
    if cfg.arch == "IFNT":
        linear("vocab_joint.enc_proj", cfg.enc_width, D)
        linear("vocab_joint.lm_proj", H, D)
        linear("vocab_joint.out", D, V)
    return ModelBundle(cfg, p)


def param_counts(m: ModelBundle) -> dict[str, int]:
    """Parameter totals per top-level subtree, plus ``total``."""
    out: dict[str, int] = {}
    for name, value in m.params.items():
        top = name.split(".")[0]
        out[top] = out.get(top, 0) + value.size
    out["total"] = m.params.num_params()
    return out


# --------------------------------------------------------------------------- encoder


def splice(feats: np.ndarray, context: int) -> np.ndarray:
    """Stack each frame with its ``context`` neighbours on both sides (zero padded)."""
    T, F = feats.shape
    if context == 0:
        return feats
    padded = np.zeros((T + 2 * context, F))
    padded[context : context + T] = feats
    return np.concatenate([padded[k : k + T] for k in range(2 * context + 1)], axis=1)


def _encode_fwd(m: ModelBundle, feats: np.ndarray):
    cfg = m.config
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError(f"encoder input must be a non-empty [T, feat_dim] array, got {feats.shape}")
    if feats.shape[1] != cfg.feat_dim:
        raise ShapeError(f"feature width {feats.shape[1]} != configured feat_dim {cfg.feat_dim}")
    acts = [splice(feats, cfg.context)]
    for i in range(cfg.enc_layers):
        acts.append(np.tanh(affine(acts[-1], m.params[f"encoder.l{i}.W"], m.params[f"encoder.l{i}.b"])))
    return acts[-1], acts


def _encode_bwd(m: ModelBundle, df, acts, grads):
    for i in reversed(range(m.config.enc_layers)):
        dz = tanh_backward(df, acts[i + 1])
        df, dW, db = affine_backward(dz, acts[i], m.params[f"encoder.l{i}.W"])
        _acc(grads, f"encoder.l{i}.W", dW)
        _acc(grads, f"encoder.l{i}.b", db)


def encode(m: ModelBundle, feats: np.ndarray) -> np.ndarray:
    if m.arch == "LM":
        raise ArchitectureError("a standalone LM has no acoustic encoder")
    return _encode_fwd(m, feats)[0]


# --------------------------------------------------------------------------- recurrences


def _acc(grads: dict, name: str, g: np.ndarray) -> None:
    if name in grads:
        grads[name] += g
    else:
        grads[name] = np.array(g, dtype=np.float64)


def _rec_fwd(p: ParamStore, name: str, ids: Sequence[int]):
    E, W, b = p[name + ".embed"], p[name + ".rnn.W"], p[name + ".rnn.b"]
    h = np.zeros(W.shape[1])
    states = [h]
    for x in ids:
        h = recurrent_step(h, E[x], W, b)
        states.append(h)
    return np.array(states[1:]), states


def _rec_bwd(p: ParamStore, name: str, ids, states, dH, grads):
    E, W = p[name + ".embed"], p[name + ".rnn.W"]
    gE = np.zeros_like(E)
    gW = np.zeros_like(W)
    gb = np.zeros(W.shape[1])
    carry = np.zeros(W.shape[1])
    for i in reversed(range(len(ids))):
        ds, de, dW, db = recurrent_step_backward(dH[i] + carry, states[i], E[ids[i]], W, states[i + 1])
        gE[ids[i]] += de
        gW += dW
        gb += db
        carry = ds
    _acc(grads, name + ".embed", gE)
    _acc(grads, name + ".rnn.W", gW)
    _acc(grads, name + ".rnn.b", gb)


def _prefix_ids(m: ModelBundle, target) -> list[int]:
    return [m.config.sos_id] + [int(y) for y in target]


# --------------------------------------------------------------------------- language model


def _lm_fwd(m: ModelBundle, ids):
    H, states = _rec_fwd(m.params, "vocab_lm", ids)
    logits = affine(H, m.params["vocab_lm.out.W"], m.params["vocab_lm.out.b"])
    V = m.config.V
    full = log_softmax(logits)  # over V tokens + EOS
    vocab = log_softmax(logits[:, :V])  # over V tokens, used inside the lattice
    return H, states, full, vocab


def _lm_bwd(m: ModelBundle, ids, H, states, full, vocab, dfull, dvocab, dH_extra, grads):
    V = m.config.V
    dlogits = np.zeros_like(full)
    if dfull is not None:
        dlogits += log_softmax_backward(dfull, full)
    if dvocab is not None:
        dlogits[:, :V] += log_softmax_backward(dvocab, vocab)
    dH, dW, db = affine_backward(dlogits, H, m.params["vocab_lm.out.W"])
    _acc(grads, "vocab_lm.out.W", dW)
    _acc(grads, "vocab_lm.out.b", db)
    if dH_extra is not None:
        dH = dH + dH_extra
    _rec_bwd(m.params, "vocab_lm", ids, states, dH, grads)


def _require_lm(m: ModelBundle) -> None:
    if m.arch not in FACTORIZED + ("LM",):
        raise ArchitectureError(f"{m.arch} has no vocabulary decoder; use an external LM for fusion")


def vocab_lm_logprobs(m: ModelBundle, prefix: Sequence[int], include_eos: bool = False):
    """LM log-posteriors for each prefix position u = 0..U, plus LM hidden states.

    Row ``u`` conditions on start-of-sequence and ``prefix[:u]``. With
    ``include_eos`` the rows cover V tokens plus EOS, otherwise V tokens.
    """
    _require_lm(m)
    H, _, full, vocab = _lm_fwd(m, _prefix_ids(m, prefix))
    return (full if include_eos else vocab), H


def lm_loss(m: ModelBundle, sentence: Sequence[int], backward: bool = False, scale: float = 1.0) -> float:
    """Teacher-forced ``-log P_LM(sentence + EOS)``; optionally accumulates gradients."""
    _require_lm(m)
    ids = _prefix_ids(m, sentence)
    H, states, full, vocab = _lm_fwd(m, ids)
    tgt = list(sentence) + [m.config.V]
    ce = -float(full[np.arange(len(tgt)), tgt].sum())
    if backward:
        grads: dict = {}
        dfull = np.zeros_like(full)
        dfull[np.arange(len(tgt)), tgt] = -scale
        _lm_bwd(m, ids, H, states, full, vocab, dfull, None, None, grads)
        for name, g in grads.items():
            m.params.accumulate(name, g)
    return ce


# --------------------------------------------------------------------------- joints


def _nt_style_fwd(p: ParamStore, name: str, f, g, pred_key: str = "pred_proj"):
    A = affine(f, p[name + ".enc_proj.W"], p[name + ".enc_proj.b"])
    B = affine(g, p[f"{name}.{pred_key}.W"], p[f"{name}.{pred_key}.b"])
    Z = np.tanh(outer_add(A, B))
    out = affine(Z, p[name + ".out.W"], p[name + ".out.b"])
    return out, (f, g, Z)


def _nt_style_bwd(p: ParamStore, name: str, dout, cache, grads, pred_key: str = "pred_proj"):
    f, g, Z = cache
    dZ, dW, db = affine_backward(dout, Z, p[name + ".out.W"])
    _acc(grads, name + ".out.W", dW)
    _acc(grads, name + ".out.b", db)
    dA, dB = outer_add_backward(tanh_backward(dZ, Z))
    df, dW, db = affine_backward(dA, f, p[name + ".enc_proj.W"])
    _acc(grads, name + ".enc_proj.W", dW)
    _acc(grads, name + ".enc_proj.b", db)
    dg, dW, db = affine_backward(dB, g, p[f"{name}.{pred_key}.W"])
    _acc(grads, f"{name}.{pred_key}.W", dW)
    _acc(grads, f"{name}.{pred_key}.b", db)
    return df, dg


def _check_joint_inputs(f, *rows):
    if f.ndim != 2:
        raise ShapeError(f"encoder output must be [T, enc_width], got {f.shape}")
    U1 = rows[0].shape[0]
    for r in rows:
        if r.ndim != 2 or r.shape[0] != U1:
            raise ShapeError(f"label-side inputs disagree on U+1: {[x.shape for x in rows]}")


def joint_nt(f, g, params: ParamStore) -> np.ndarray:
    """``log_softmax(out(tanh(enc_proj(f_t) + pred_proj(g_u))))`` -> [T, U+1, V+1]."""
    _check_joint_inputs(f, g)
    return log_softmax(_nt_style_fwd(params, "joint", f, g)[0])


def _fnt_fwd(p, f, g_blank, lm_vocab):
    blank, bcache = _nt_style_fwd(p, "blank_joint", f, g_blank)
    Av = affine(f, p["vocab_joint.enc_proj.W"], p["vocab_joint.enc_proj.b"])
    scores = Av[:, None, :] + lm_vocab[None, :, :]
    return log_softmax(np.concatenate([scores, blank], axis=-1)), (bcache, f)


def joint_fnt(f, g_blank, lm_logprobs, params: ParamStore) -> np.ndarray:
    """Blank logit from an NT-style joint; vocab scores ``proj_V(f_t) + lm_logprobs[u]``."""
    _check_joint_inputs(f, g_blank, lm_logprobs)
    return _fnt_fwd(params, f, g_blank, lm_logprobs)[0]


def _ifnt_fwd(p, f, g_blank, lm_hidden, lm_vocab):
    blank, bcache = _nt_style_fwd(p, "blank_joint", f, g_blank)
    squashed = sigmoid(lm_hidden)
    acoustic, vcache = _nt_style_fwd(p, "vocab_joint", f, squashed, pred_key="lm_proj")
    scores = acoustic + lm_vocab[None, :, :]
    return log_softmax(np.concatenate([scores, blank], axis=-1)), (bcache, vcache, squashed)


def joint_ifnt(f, g_blank, lm_hidden, lm_logprobs, params: ParamStore) -> np.ndarray:
    """Blank branch as FNT; vocab scores ``out(tanh(enc_proj(f_t) + lm_proj(sigmoid(h_u)))) + lm_logprobs[u]``."""
    _check_joint_inputs(f, g_blank, lm_hidden, lm_logprobs)
    return _ifnt_fwd(params, f, g_blank, lm_hidden, lm_logprobs)[0]


# --------------------------------------------------------------------------- full model


def _forward(m: ModelBundle, feats, target):
    """Lattice log-probs plus everything the backward pass needs."""
    p = m.params
    arch = m.arch
    if arch == "LM":
        raise ArchitectureError("a standalone LM cannot produce an emission lattice")
    f, acts = _encode_fwd(m, feats)
    ids = _prefix_ids(m, target)
    ctx = {"f": f, "acts": acts, "ids": ids}
    if arch == "NT":
        g, gstates = _rec_fwd(p, "pred", ids)
        logits, jcache = _nt_style_fwd(p, "joint", f, g)
        logp = log_softmax(logits)
        ctx.update(g=g, gstates=gstates, jcache=jcache)
        return logp, ctx
    gb, gbstates = _rec_fwd(p, "blank_dec", ids)
    H, hstates, full, vocab = _lm_fwd(m, ids)
    ctx.update(gb=gb, gbstates=gbstates, H=H, hstates=hstates, full=full, vocab=vocab)
    if arch == "FNT":
        logp, jcache = _fnt_fwd(p, f, gb, vocab)
    else:
        logp, jcache = _ifnt_fwd(p, f, gb, H, vocab)
    ctx["jcache"] = jcache
    return logp, ctx


def lattice(m: ModelBundle, feats, target) -> rnnt_loss.EmissionLattice:
    logp, _ = _forward(m, feats, target)
    return rnnt_loss.EmissionLattice(logp, np.asarray(target, dtype=np.int64), m.config.blank_id)


def compute_loss(m: ModelBundle, feats, target, backward: bool = True, scale: float = 1.0) -> LossBreakdown:
    """Transducer loss plus, for FNT/IFNT, ``lambda_f`` times the LM cross-entropy.

    With ``backward`` the gradient of ``scale * J_f`` is added to ``m.params``.
    """
    target = np.asarray(target, dtype=np.int64)
    if target.size == 0:
        raise ValueError("target must be non-empty")
    cfg = m.config
    p = m.params
    logp, ctx = _forward(m, feats, target)
    lat = rnnt_loss.EmissionLattice(logp, target, cfg.blank_id)
    J_t, dlogp = rnnt_loss.loss_and_grad(lat)
    if m.arch == "NT":
        lm_ce = 0.0
    else:
        tgt = list(target) + [cfg.V]
        lm_ce = -float(ctx["full"][np.arange(len(tgt)), tgt].sum())
    lam = cfg.lambda_f if m.arch != "NT" else 0.0
    out = LossBreakdown(J_t, lm_ce, J_t + lam * lm_ce, cfg.lambda_f)
    if not backward:
        return out

    grads: dict = {}
    dlogits = log_softmax_backward(dlogp * scale, logp)
    f = ctx["f"]
    ids = ctx["ids"]
    if m.arch == "NT":
        df, dg = _nt_style_bwd(p, "joint", dlogits, ctx["jcache"], grads)
        _rec_bwd(p, "pred", ids, ctx["gstates"], dg, grads)
    else:
        V = cfg.V
        dscores = dlogits[..., :V]
        dblank = dlogits[..., V:]
        df, dgb = _nt_style_bwd(p, "blank_joint", dblank, ctx["jcache"][0], grads)
        _rec_bwd(p, "blank_dec", ids, ctx["gbstates"], dgb, grads)
        dvocab = dscores.sum(axis=0)
        dH_extra = None
        if m.arch == "FNT":
            dAv = dscores.sum(axis=1)
            df2, dW, db = affine_backward(dAv, f, p["vocab_joint.enc_proj.W"])
            _acc(grads, "vocab_joint.enc_proj.W", dW)
            _acc(grads, "vocab_joint.enc_proj.b", db)
        else:
            _, vcache, squashed = ctx["jcache"]
            df2, dsq = _nt_style_bwd(p, "vocab_joint", dscores, vcache, grads, pred_key="lm_proj")
            dH_extra = sigmoid_backward(dsq, squashed)
        df = df + df2
        dfull = np.zeros_like(ctx["full"])
        dfull[np.arange(len(ids)), list(target) + [V]] = -lam * scale
        _lm_bwd(m, ids, ctx["H"], ctx["hstates"], ctx["full"], ctx["vocab"], dfull, dvocab, dH_extra, grads)
    _encode_bwd(m, df, ctx["acts"], grads)
    for name, g in grads.items():
        p.accumulate(name, g)
    return out


def batch_loss(m: ModelBundle, batch, backward: bool = True, scale: float = 1.0) -> LossBreakdown:
    """Summed breakdown over a padded batch; padding never enters the computation."""
    J_t = lm_ce = 0.0
    for i in range(len(batch.ids)):
        T, U = int(batch.T_lens[i]), int(batch.U_lens[i])
        lb = compute_loss(m, batch.feats[i, :T], batch.targets[i, :U], backward, scale)
        J_t += lb.J_t
        lm_ce += lb.lm_ce
    lam = m.config.lambda_f if m.arch != "NT" else 0.0
    return LossBreakdown(J_t, lm_ce, J_t + lam * lm_ce, m.config.lambda_f)


# --------------------------------------------------------------------------- incremental evaluation (decoding)


class PredState:
    """Label-side state after consuming a token prefix: recurrence hiddens plus cached projections."""

    __slots__ = ("hidden", "proj", "lm_vocab")

    def __init__(self, hidden: dict, proj: dict, lm_vocab):
        self.hidden = hidden
        self.proj = proj
        self.lm_vocab = lm_vocab


def acoustic_projections(m: ModelBundle, feats) -> dict:
    """Encoder output projected into every joint that consumes it, for all frames."""
    p = m.params
    f = encode(m, feats)
    if m.arch == "NT":
        return {"A": affine(f, p["joint.enc_proj.W"], p["joint.enc_proj.b"]), "T": f.shape[0]}
    return {
        "Ab": affine(f, p["blank_joint.enc_proj.W"], p["blank_joint.enc_proj.b"]),
        "Av": affine(f, p["vocab_joint.enc_proj.W"], p["vocab_joint.enc_proj.b"]),
        "T": f.shape[0],
    }


def _make_state(m: ModelBundle, hidden: dict) -> PredState:
    p = m.params
    V = m.config.V
    if m.arch == "NT":
        return PredState(hidden, {"B": affine(hidden["pred"], p["joint.pred_proj.W"], p["joint.pred_proj.b"])}, None)
    h = hidden["vocab_lm"]
    logits = affine(h, p["vocab_lm.out.W"], p["vocab_lm.out.b"])
    lm_vocab = log_softmax(logits[:V])
    if m.arch == "LM":
        return PredState(hidden, {}, lm_vocab)
    proj = {"Bb": affine(hidden["blank_dec"], p["blank_joint.pred_proj.W"], p["blank_joint.pred_proj.b"])}
    if m.arch == "IFNT":
        proj["Bv"] = affine(sigmoid(h), p["vocab_joint.lm_proj.W"], p["vocab_joint.lm_proj.b"])
    return PredState(hidden, proj, lm_vocab)


def _recurrence_names(arch: str) -> tuple[str, ...]:
    return {"NT": ("pred",), "FNT": ("blank_dec", "vocab_lm"), "IFNT": ("blank_dec", "vocab_lm"),
            "LM": ("vocab_lm",)}[arch]


def initial_state(m: ModelBundle) -> PredState:
    H = m.config.dec_width
    return advance_state(m, PredState({n: np.zeros(H) for n in _recurrence_names(m.arch)}, {}, None),
                         m.config.sos_id)


def advance_state(m: ModelBundle, st: PredState, token: int) -> PredState:
    p = m.params
    hidden = {
        n: recurrent_step(h, p[n + ".embed"][token], p[n + ".rnn.W"], p[n + ".rnn.b"])
        for n, h in st.hidden.items()
    }
    return _make_state(m, hidden)


def joint_step(m: ModelBundle, ac: dict, t: int, st: PredState) -> np.ndarray:
    """Log-probabilities over V+1 at frame ``t`` for label state ``st``."""
    p = m.params
    if m.arch == "NT":
        z = np.tanh(ac["A"][t] + st.proj["B"])
        return log_softmax(z @ p["joint.out.W"] + p["joint.out.b"])
    zb = np.tanh(ac["Ab"][t] + st.proj["Bb"])
    blank = zb @ p["blank_joint.out.W"] + p["blank_joint.out.b"]
    if m.arch == "FNT":
        scores = ac["Av"][t] + st.lm_vocab
    else:
        zv = np.tanh(ac["Av"][t] + st.proj["Bv"])
        scores = zv @ p["vocab_joint.out.W"] + p["vocab_joint.out.b"] + st.lm_vocab
    return log_softmax(np.concatenate([scores, blank]))


def lm_view(m: ModelBundle) -> ModelBundle:
    """Standalone LM bundle sharing (copying) the ``vocab_lm.*`` parameters of ``m``."""
    _require_lm(m)
    if m.arch == "LM":
        return m
    store = ParamStore()
    for name, value in m.params.items():
        if name.startswith(LM_PREFIX):
            store.add(name, value)
    cfg = ModelConfig.from_dict({**m.config.to_dict(), "arch": "LM"})
    return ModelBundle(cfg, store)
