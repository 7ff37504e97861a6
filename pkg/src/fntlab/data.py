"""Vocabulary, text/manifest I/O, batching and the synthetic two-domain toy-speech generator.

The toy task: each token is rendered as a few noisy frames around a
per-token prototype vector. Tokens come in acoustically confusable pairs
that share a base prototype and differ only by a small offset, so language
context carries real information for recognition. Domains differ only in
their bigram statistics, never in acoustics.
"""

from __future__ import annotations

import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import load_tensors, save_tensors

UNK = "<unk>"


class Vocabulary:
    """Ordered symbol inventory. ``blank_id`` and ``eos_id`` are both ``V``.

    Blank lives in the transducer output space (V+1 classes), EOS in the
    language-model output space (V+1 classes); neither is a symbol.
    """

    def __init__(self, symbols: Sequence[str], level: str = "word"):
        symbols = list(symbols)
        if len(set(symbols)) != len(symbols):
            raise ValueError("vocabulary symbols must be unique")
        if level not in ("word", "char"):
            raise ValueError(f"unknown tokenization level {level!r}")
        if UNK not in symbols:
            symbols = [UNK] + symbols
        self.symbols = symbols
        self.level = level
        self.index = {s: i for i, s in enumerate(symbols)}
        self.oov = Counter()

    def __len__(self) -> int:
        return len(self.symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.symbols == other.symbols and self.level == other.level

    @property
    def V(self) -> int:
        return len(self.symbols)

    @property
    def blank_id(self) -> int:
        return len(self.symbols)

    @property
    def eos_id(self) -> int:
        return len(self.symbols)

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    def save(self, path) -> None:
        Path(path).write_text("".join(s + "\n" for s in self.symbols), encoding="utf-8")

    @classmethod
    def load(cls, path, level: str = "word") -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines, level=level)


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Map text to ids; unknown symbols become ``<unk>`` and are tallied in ``vocab.oov``."""
    units = list(text) if vocab.level == "char" else text.split()
    out = []
    for s in units:
        i = vocab.index.get(s)
        if i is None:
            vocab.oov[s] += 1
            i = vocab.unk_id
        out.append(i)
    return out


def detokenize(ids: Iterable[int], vocab: Vocabulary) -> str:
    sep = "" if vocab.level == "char" else " "
    return sep.join(vocab.symbols[int(i)] for i in ids)


@dataclass
class Utterance:
    id: str
    feats: np.ndarray  # [T, feat_dim]
    transcript: np.ndarray  # [U] int64

    @property
    def T(self) -> int:
        return self.feats.shape[0]


class TextCorpus(list):
    """List of non-empty token-id sequences."""

    def __init__(self, sentences: Iterable[Sequence[int]] = (), V: int | None = None):
        super().__init__(np.asarray(s, dtype=np.int64) for s in sentences)
        for s in self:
            if s.size == 0:
                raise ValueError("corpus sentences must be non-empty")
            if V is not None and (s.min() < 0 or s.max() >= V):
                raise ValueError(f"token id outside [0, {V})")

    def num_tokens(self, with_eos: bool = True) -> int:
        return sum(s.size + with_eos for s in self)


# --------------------------------------------------------------------------- synthetic domains


@dataclass
class DomainSpec:
    """Bigram language plus acoustic rendering for one synthetic domain.

    ``transitions`` is [V+1, V+1]: row ``V`` is the sentence-start state and
    column ``V`` is end-of-sentence. Token 0 is ``<unk>`` and never sampled.
    """

    seed: int
    transitions: np.ndarray
    prototypes: np.ndarray  # [V, feat_dim]
    frames_per_token: tuple[int, int] = (2, 4)
    noise: float = 0.5
    max_len: int = 40

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        V = self.prototypes.shape[0]
        if self.transitions.shape != (V + 1, V + 1):
            raise ValueError(f"transitions must be [{V + 1}, {V + 1}], got {self.transitions.shape}")
        if np.any(self.transitions < 0) or np.any(np.abs(self.transitions.sum(1) - 1.0) > 1e-9):
            raise ValueError("transition rows must be non-negative and sum to 1")
        if self.transitions[V, V] != 0:
            raise ValueError("empty sentences are not allowed (start -> end must be 0)")
        lo, hi = self.frames_per_token
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid frames_per_token range {self.frames_per_token}")
        if self.noise < 0:
            raise ValueError("noise scale must be >= 0")

    @property
    def V(self) -> int:
        return self.prototypes.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.prototypes.shape[1]


def partner(i: int) -> int:
    """Acoustic twin of word ``i`` (words are 1-based; pairs are (1,2), (3,4), ...)."""
    return i + 1 if i % 2 == 1 else i - 1


def _sub_seed(seed: int, tag: str) -> int:
    return zlib.crc32(f"{seed}:{tag}".encode()) & 0x7FFFFFFF


def random_bigram(
    rng: np.random.Generator,
    V: int,
    successors: int = 4,
    p_end: float = 0.15,
    twin_bias: float = 0.75,
    smoothing: float = 0.0,
) -> np.ndarray:
    """Peaked bigram over words 1..V-1 with an end column.

    Each word is followed mostly by ``successors // 2`` twin pairs (never its
    own pair). Within a pair one twin gets ``twin_bias`` of the pair's mass, so
    both twins occur in the same context and only acoustics separate them,
    while the language model still carries a useful prior. A ``smoothing``
    fraction of each row is spread uniformly over every word outside the
    current pair, so all transitions show up in training data eventually.
    """
    if not 0.5 <= twin_bias < 1.0:
        raise ValueError("twin_bias must lie in [0.5, 1)")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError("smoothing must lie in [0, 1)")
    P = np.zeros((V + 1, V + 1))
    pairs = np.arange(1, V, 2)
    k_row = max(1, successors // 2)
    for i in range(V + 1):
        if i == 0:
            P[0, 1:V] = (1.0 - p_end) / (V - 1)
            P[0, V] = p_end
            continue
        if i == V:
            allowed, k, end = pairs, min(len(pairs), 2 * k_row), 0.0
        else:
            allowed = pairs[pairs != (i if i % 2 == 1 else i - 1)]
            k, end = min(len(allowed), k_row), p_end
        chosen = rng.choice(allowed, size=k, replace=False)
        w = rng.dirichlet(np.ones(k)) * (1.0 - end)
        first = rng.random(k) < 0.5
        for a, wa, fa in zip(chosen, w, first):
            P[i, a] = wa * (twin_bias if fa else 1.0 - twin_bias)
            P[i, a + 1] = wa * (1.0 - twin_bias if fa else twin_bias)
        if smoothing > 0.0:
            support = np.concatenate([allowed, allowed + 1])
            P[i, 1:V] *= 1.0 - smoothing
            P[i, support] += smoothing * (1.0 - end) / len(support)
        P[i, V] = end
    return P


def random_domain_spec(
    seed: int,
    V: int = 31,
    feat_dim: int = 8,
    successors: int = 4,
    p_end: float = 0.15,
    twin_gap: float = 0.6,
    noise: float = 0.5,
    frames_per_token: tuple[int, int] = (2, 4),
    twin_bias: float = 0.75,
    smoothing: float = 0.0,
) -> DomainSpec:
    """Source-domain spec: random bigram plus paired prototypes separated by ``twin_gap``."""
    if V < 5 or V % 2 == 0:
        raise ValueError("V must be odd and >= 5 (<unk> plus at least two word pairs)")
    rng = np.random.default_rng(_sub_seed(seed, "domain"))
    P = random_bigram(rng, V, successors, p_end, twin_bias, smoothing)
    n_pairs = (V - 1) // 2
    base = rng.normal(size=(n_pairs, feat_dim))
    direction = rng.normal(size=(n_pairs, feat_dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    protos = np.zeros((V, feat_dim))
    protos[0] = rng.normal(size=feat_dim)
    for k in range(n_pairs):
        protos[2 * k + 1] = base[k] + 0.5 * twin_gap * direction[k]
        protos[2 * k + 2] = base[k] - 0.5 * twin_gap * direction[k]
    return DomainSpec(seed, P, protos, tuple(frames_per_token), noise)


def make_shifted_domain(
    src: DomainSpec, shift: float, successors: int = 4, twin_bias: float = 0.75, smoothing: float = 0.0
) -> DomainSpec:
    """Same acoustics; bigram blended toward an independently seeded one by ``shift``."""
    if not 0.0 <= shift <= 1.0:
        raise ValueError(f"shift must lie in [0, 1], got {shift}")
    if shift == 0.0:
        return DomainSpec(src.seed, src.transitions.copy(), src.prototypes.copy(),
                          src.frames_per_token, src.noise, src.max_len)
    V = src.V
    p_end = float(src.transitions[1, V])
    alt = random_bigram(np.random.default_rng(_sub_seed(src.seed, "shifted")), V, successors, p_end, twin_bias,
                        smoothing)
    P = (1.0 - shift) * src.transitions + shift * alt
    P /= P.sum(axis=1, keepdims=True)
    return DomainSpec(src.seed, P, src.prototypes.copy(), src.frames_per_token, src.noise, src.max_len)


def sample_sentence(spec: DomainSpec, rng: np.random.Generator) -> list[int]:
    V = spec.V
    state = V
    out: list[int] = []
    while len(out) < spec.max_len:
        nxt = int(rng.choice(V + 1, p=spec.transitions[state]))
        if nxt == V:
            break
        out.append(nxt)
        state = nxt
    return out


def render_frames(spec: DomainSpec, tokens: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.frames_per_token
    frames = []
    for tok in tokens:
        n = int(rng.integers(lo, hi + 1))
        frames.append(spec.prototypes[tok] + spec.noise * rng.normal(size=(n, spec.feat_dim)))
    return np.concatenate(frames, axis=0)


def generate_domain(spec: DomainSpec, n_utts: int, seed: int | None = None, prefix: str = "utt"):
    """Sample ``n_utts`` paired utterances and the matching text-only corpus.

    Utterance ``i`` draws from its own generator seeded by (seed, i), so any
    subset can be regenerated independently.
    """
    if n_utts < 1:
        raise ValueError("n_utts must be >= 1")
    seed = spec.seed if seed is None else seed
    utts = []
    for i in range(n_utts):
        rng = np.random.default_rng([seed, i])
        tokens = sample_sentence(spec, rng)
        feats = render_frames(spec, tokens, rng)
        utts.append(Utterance(f"{prefix}{i:06d}", feats, np.asarray(tokens, dtype=np.int64)))
    return utts, TextCorpus([u.transcript for u in utts], V=spec.V)


def generate_text(spec: DomainSpec, n_sents: int, seed: int) -> TextCorpus:
    out = []
    for i in range(n_sents):
        out.append(sample_sentence(spec, np.random.default_rng([seed, i])))
    return TextCorpus(out, V=spec.V)


def bigram_counts(corpus: Iterable[Sequence[int]], V: int) -> np.ndarray:
    C = np.zeros((V + 1, V + 1))
    for s in corpus:
        prev = V
        for tok in s:
            C[prev, tok] += 1
            prev = tok
        C[prev, V] += 1
    return C


def word_vocabulary(V: int) -> Vocabulary:
    return Vocabulary([UNK] + [f"w{i:02d}" for i in range(1, V)], level="word")


# --------------------------------------------------------------------------- batching


@dataclass
class Batch:
    ids: list[str]
    feats: np.ndarray  # [B, Tmax, F], zero padded
    targets: np.ndarray  # [B, Umax], padded with 0
    T_lens: np.ndarray
    U_lens: np.ndarray
    frame_mask: np.ndarray = field(repr=False)  # [B, Tmax] bool


def batchify(utts: Sequence[Utterance], max_frames: int, batch_size: int = 8) -> list[Batch]:
    for u in utts:
        if u.T > max_frames:
            raise ValueError(f"utterance {u.id} has {u.T} frames > max_frames={max_frames}")
    out = []
    for start in range(0, len(utts), batch_size):
        chunk = utts[start : start + batch_size]
        B = len(chunk)
        Tmax = max(u.T for u in chunk)
        Umax = max(u.transcript.size for u in chunk)
        F = chunk[0].feats.shape[1]
        feats = np.zeros((B, Tmax, F))
        targets = np.zeros((B, Umax), dtype=np.int64)
        mask = np.zeros((B, Tmax), dtype=bool)
        for i, u in enumerate(chunk):
            feats[i, : u.T] = u.feats
            targets[i, : u.transcript.size] = u.transcript
            mask[i, : u.T] = True
        out.append(Batch(
            [u.id for u in chunk], feats, targets,
            np.array([u.T for u in chunk]), np.array([u.transcript.size for u in chunk]), mask,
        ))
    return out


# --------------------------------------------------------------------------- files


def write_corpus(path, corpus: Iterable[Sequence[int]], vocab: Vocabulary) -> None:
    Path(path).write_text("".join(detokenize(s, vocab) + "\n" for s in corpus), encoding="utf-8")


def read_corpus(path, vocab: Vocabulary) -> TextCorpus:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return TextCorpus([tokenize(line, vocab) for line in lines if line.strip()], V=vocab.V)


def write_manifest(path, utts: Sequence[Utterance], vocab: Vocabulary, feats_path) -> None:
    """Manifest rows ``id<TAB>feats_file#tensor_name<TAB>transcript``; features go in one container."""
    feats_path = Path(feats_path)
    save_tensors(feats_path, {u.id: u.feats for u in utts}, {"kind": "features"})
    rel = feats_path.name
    lines = [f"{u.id}\t{rel}#{u.id}\t{detokenize(u.transcript, vocab)}\n" for u in utts]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_manifest(path, vocab: Vocabulary) -> list[Utterance]:
    path = Path(path)
    cache: dict[str, dict] = {}
    utts = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        uid, ref, text = line.split("\t")
        fname, _, name = ref.partition("#")
        fpath = (path.parent / fname).resolve()
        if str(fpath) not in cache:
            cache[str(fpath)] = load_tensors(fpath)[0]
        utts.append(Utterance(uid, cache[str(fpath)][name or uid], np.asarray(tokenize(text, vocab), dtype=np.int64)))
    return utts


def save_domain_spec(path, spec: DomainSpec) -> None:
    save_tensors(
        path,
        {"transitions": spec.transitions, "prototypes": spec.prototypes},
        {"seed": spec.seed, "frames_per_token": list(spec.frames_per_token),
         "noise": spec.noise, "max_len": spec.max_len},
    )


def load_domain_spec(path) -> DomainSpec:
    tensors, meta = load_tensors(path)
    return DomainSpec(int(meta["seed"]), tensors["transitions"], tensors["prototypes"],
                      tuple(meta["frames_per_token"]), float(meta["noise"]), int(meta["max_len"]))
