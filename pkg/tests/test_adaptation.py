import math
from collections import Counter

import numpy as np
import pytest

from fntlab.adaptation import (
    AdaptConfig,
    LMTrainConfig,
    adapt_text_only,
    corpus_nll,
    perplexity,
    split_params,
    train_external_lm,
)
from fntlab.data import TextCorpus, generate_text, make_shifted_domain, random_domain_spec
from fntlab.models import ArchitectureError, ModelConfig, init_model, lm_view


def model(arch="FNT", seed=0, V=7):
    return init_model(ModelConfig(arch=arch, V=V, D=6, feat_dim=3, enc_width=6, dec_width=12, embed_dim=6), seed)


def prefix_entropy_floor(corpus):
    """Per-token cross-entropy of the empirical full-history model (EOS included)."""
    counts = Counter()
    for s in corpus:
        seq = list(s) + ["</s>"]
        for i in range(len(seq)):
            counts[(tuple(seq[:i]), seq[i])] += 1
    ctx = Counter()
    for (c, _), n in counts.items():
        ctx[c] += n
    total = sum(counts.values())
    return -sum(n * math.log(n / ctx[c]) for (c, _), n in counts.items()) / total


class TestFreezing:
    def test_only_vocabulary_decoder_moves(self):
        for arch in ("FNT", "IFNT"):
            m = model(arch)
            before = m.copy()
            corpus = TextCorpus([[1, 2, 3], [4, 5], [6, 1, 1, 2]])
            adapted, losses = adapt_text_only(m, corpus, AdaptConfig(steps=20, batch_size=2))
            assert len(losses) == 20
            assert m.params.equals(before.params)  # input untouched
            changed = 0
            for name in m.params.names():
                delta = np.abs(adapted.params[name] - m.params[name]).max()
                if name.startswith("vocab_lm."):
                    changed += delta > 0
                else:
                    assert delta == 0.0, name
            assert changed > 0
            assert set(adapted.info["frozen"]) == {n for n in m.params.names() if not n.startswith("vocab_lm.")}
            assert adapted.info["trainable"] == ["vocab_lm.*"]

    def test_patterns_can_match_nothing(self):
        train, frozen = split_params(model(), ["nothing.*"])
        assert train == [] and len(frozen) == len(model().params.names())

    def test_nt_rejected_with_guidance(self):
        with pytest.raises(ArchitectureError, match="fusion"):
            adapt_text_only(model("NT"), TextCorpus([[1]]))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdaptConfig(steps=0)

    def test_deterministic(self):
        corpus = TextCorpus([[1, 2, 3], [4, 5], [6, 1]])
        a, la = adapt_text_only(model("IFNT"), corpus, AdaptConfig(steps=10, batch_size=2, seed=3))
        b, lb = adapt_text_only(model("IFNT"), corpus, AdaptConfig(steps=10, batch_size=2, seed=3))
        assert la == lb and a.to_bytes() == b.to_bytes()


def test_reaches_the_entropy_floor_of_a_tiny_corpus():
    corpus = TextCorpus([[1, 2, 3], [1, 2, 4], [1, 3, 3, 5], [2, 2, 3], [1, 2, 3]])
    floor = prefix_entropy_floor(corpus)
    adapted, _ = adapt_text_only(model("FNT", seed=1), corpus, AdaptConfig(steps=800, batch_size=5, lr=1e-2))
    nll, n = corpus_nll(lm_view(adapted), corpus)
    assert nll / n <= 1.05 * floor
    assert nll / n >= floor - 1e-9  # nothing can beat the empirical distribution on its own data


class TestPerplexity:
    def uniform_lm(self, V=7):
        lm = init_model(ModelConfig(arch="LM", V=V, dec_width=4, embed_dim=2), 0)
        for name in ("vocab_lm.out.W", "vocab_lm.out.b"):
            lm.params.set_value(name, np.zeros_like(lm.params[name]))
        return lm

    def test_uniform_lm(self):
        corpus = TextCorpus([[1, 2, 3], [4], [5, 6]])
        assert perplexity(self.uniform_lm(), corpus) == pytest.approx(8.0, rel=1e-13)

    def test_duplication_and_reordering(self):
        lm = model("IFNT", seed=2)
        corpus = TextCorpus([[1, 2, 3], [4], [5, 6, 6, 1]])
        p = perplexity(lm, corpus)
        assert perplexity(lm, TextCorpus(list(corpus) * 2)) == pytest.approx(p, rel=1e-12)
        assert perplexity(lm, TextCorpus(list(corpus)[::-1])) == pytest.approx(p, rel=1e-12)

    def test_counts_eos(self):
        total, count = corpus_nll(self.uniform_lm(), TextCorpus([[1, 2], [3]]))
        assert count == 5 and total == pytest.approx(5 * math.log(8))

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            perplexity(self.uniform_lm(), TextCorpus([]))
        with pytest.raises(ValueError):
            train_external_lm(TextCorpus([]), 7)


class TestExternalLM:
    def domains(self):
        a = random_domain_spec(5, V=11, feat_dim=2)
        b = make_shifted_domain(a, 1.0)
        return a, b

    def test_learns_and_is_deterministic(self):
        a, _ = self.domains()
        text = generate_text(a, 200, seed=1)
        cfg = LMTrainConfig(steps=150, dec_width=16, embed_dim=8, seed=4)
        lm, losses = train_external_lm(text, 11, cfg)
        assert perplexity(lm, text) < 12
        assert losses[-1] < losses[0]
        again, _ = train_external_lm(text, 11, cfg)
        assert lm.to_bytes() == again.to_bytes()

    def test_in_domain_lm_scores_its_domain_better(self):
        a, b = self.domains()
        cfg = LMTrainConfig(steps=200, dec_width=16, embed_dim=8)
        lm_a, _ = train_external_lm(generate_text(a, 300, seed=1), 11, cfg)
        lm_b, _ = train_external_lm(generate_text(b, 300, seed=2), 11, cfg)
        dev_b = generate_text(b, 100, seed=3)
        assert perplexity(lm_b, dev_b) < perplexity(lm_a, dev_b)

    def test_adaptation_lowers_target_perplexity(self):
        a, b = self.domains()
        m = model("IFNT", seed=5, V=11)
        dev_b = generate_text(b, 100, seed=3)
        adapted, _ = adapt_text_only(m, generate_text(b, 300, seed=2), AdaptConfig(steps=150))
        assert perplexity(lm_view(adapted), dev_b) < perplexity(lm_view(m), dev_b)
