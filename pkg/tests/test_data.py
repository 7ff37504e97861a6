import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fntlab import data
from fntlab.data import (
    DomainSpec,
    TextCorpus,
    Utterance,
    Vocabulary,
    batchify,
    bigram_counts,
    detokenize,
    generate_domain,
    generate_text,
    make_shifted_domain,
    random_domain_spec,
    tokenize,
)

CHARS = list("abcdefghij ")


def char_vocab():
    return Vocabulary(CHARS, level="char")


class TestTokenizer:
    def test_char_example(self):
        v = char_vocab()
        assert tokenize("ab", v) == [v.index["a"], v.index["b"]]

    def test_round_trip_random_strings(self):
        rng = np.random.default_rng(0)
        v = char_vocab()
        for _ in range(1000):
            s = "".join(rng.choice(CHARS, size=rng.integers(0, 30)))
            assert detokenize(tokenize(s, v), v) == s
        assert not v.oov

    @settings(max_examples=50)
    @given(st.lists(st.sampled_from(["w01", "w02", "w03", "w04"]), min_size=1, max_size=20))
    def test_word_round_trip(self, words):
        v = data.word_vocabulary(5)
        text = " ".join(words)
        assert detokenize(tokenize(text, v), v) == text

    def test_oov_maps_to_unk_and_is_counted(self):
        v = char_vocab()
        assert tokenize("aç", v) == [v.index["a"], v.unk_id]
        assert v.oov == {"ç": 1}

    def test_reserved_ids(self):
        v = char_vocab()
        assert v.symbols[0] == "<unk>"
        assert v.blank_id == v.eos_id == v.V == len(CHARS) + 1
        with pytest.raises(ValueError):
            Vocabulary(["a", "a"])

    def test_vocabulary_file(self, tmp_path):
        v = data.word_vocabulary(7)
        v.save(tmp_path / "vocab.txt")
        assert Vocabulary.load(tmp_path / "vocab.txt") == v
        assert (tmp_path / "vocab.txt").read_text().splitlines()[3] == "w03"


class TestGenerator:
    def spec(self, **kw):
        return random_domain_spec(3, V=11, feat_dim=4, **kw)

    def test_same_seed_is_bit_identical(self):
        a, ta = generate_domain(self.spec(), 20, seed=5)
        b, tb = generate_domain(self.spec(), 20, seed=5)
        for x, y in zip(a, b):
            assert x.id == y.id
            assert np.array_equal(x.feats, y.feats) and np.array_equal(x.transcript, y.transcript)
        assert all(np.array_equal(x, y) for x, y in zip(ta, tb))

    def test_per_utterance_seeding(self):
        # any prefix of a corpus regenerates identically on its own
        a, _ = generate_domain(self.spec(), 30, seed=5)
        b, _ = generate_domain(self.spec(), 7, seed=5)
        assert all(np.array_equal(x.feats, y.feats) for x, y in zip(a, b))

    def test_text_view_matches_transcripts(self):
        utts, text = generate_domain(self.spec(), 10, seed=1)
        assert [list(u.transcript) for u in utts] == [list(s) for s in text]
        assert all(u.T >= 1 and u.transcript.size >= 1 for u in utts)

    def test_bigram_frequencies_match_spec(self):
        spec = self.spec()
        utts, text = generate_domain(spec, 10_000, seed=11)
        C = bigram_counts(text, spec.V)
        seen = C.sum(1) > 0
        emp = C[seen] / C[seen].sum(1, keepdims=True)
        tv = 0.5 * np.abs(emp - spec.transitions[seen]).sum(1)
        weights = C[seen].sum(1) / C.sum()
        assert (weights * tv).sum() < 0.02
        assert tv.max() < 0.05
        # <unk> is never generated
        assert C[:, 0].sum() == 0

    def test_zero_noise_frames_are_prototypes(self):
        spec = self.spec(noise=0.0)
        for u in generate_domain(spec, 5, seed=2)[0]:
            rows = {tuple(r) for r in u.feats}
            assert rows <= {tuple(spec.prototypes[t]) for t in u.transcript}
            assert u.T >= 2 * u.transcript.size and u.T <= 4 * u.transcript.size

    def test_twins_share_a_base(self):
        spec = random_domain_spec(0, V=11, feat_dim=4, twin_gap=0.6)
        for i in range(1, 11, 2):
            assert np.linalg.norm(spec.prototypes[i] - spec.prototypes[i + 1]) == pytest.approx(0.6)
            assert data.partner(i) == i + 1 and data.partner(i + 1) == i

    def test_smoothing_reaches_every_word_outside_the_own_pair(self):
        V = 11
        sparse = random_domain_spec(4, V=V, feat_dim=2, successors=2).transitions
        P = random_domain_spec(4, V=V, feat_dim=2, successors=2, smoothing=0.2).transitions
        np.testing.assert_allclose(P.sum(1), 1.0, atol=1e-12)
        for i in range(1, V):
            own = {i, data.partner(i)}
            for j in range(1, V):
                assert (P[i, j] == 0.0) == (j in own), (i, j)
            assert P[i, V] == sparse[i, V]  # end probability untouched
        assert (P[V, 1:V] > 0).all()
        with pytest.raises(ValueError):
            random_domain_spec(4, V=V, smoothing=1.0)

    def test_invalid_specs_rejected(self):
        good = self.spec()
        with pytest.raises(ValueError):
            DomainSpec(0, good.transitions * 1.1, good.prototypes)
        with pytest.raises(ValueError):
            DomainSpec(0, good.transitions, good.prototypes, frames_per_token=(0, 2))
        with pytest.raises(ValueError):
            DomainSpec(0, good.transitions[:-1], good.prototypes)
        with pytest.raises(ValueError):
            generate_domain(good, 0)


class TestShift:
    def src(self):
        return random_domain_spec(4, V=11, feat_dim=4)

    def test_zero_shift_is_identity(self):
        s = self.src()
        t = make_shifted_domain(s, 0.0)
        assert np.array_equal(s.transitions, t.transitions) and np.array_equal(s.prototypes, t.prototypes)
        a, _ = generate_domain(s, 5, seed=1)
        b, _ = generate_domain(t, 5, seed=1)
        assert all(np.array_equal(x.feats, y.feats) for x, y in zip(a, b))

    def test_full_shift_is_the_alternative_matrix(self):
        s = self.src()
        t1 = make_shifted_domain(s, 1.0)
        half = make_shifted_domain(s, 0.5)
        np.testing.assert_allclose(half.transitions, 0.5 * s.transitions + 0.5 * t1.transitions, atol=1e-12)
        assert np.array_equal(t1.prototypes, s.prototypes)
        assert not np.allclose(t1.transitions, s.transitions)

    def test_kl_grows_with_shift(self):
        s = self.src()
        kls = []
        for shift in (0.0, 0.25, 0.5, 0.75, 1.0):
            Q = make_shifted_domain(s, shift).transitions
            P = s.transitions
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(P > 0, P * (np.log(P) - np.log(Q)), 0.0)
            kls.append(terms.sum(1))
        kls = np.array(kls)
        # row 0 (<unk>) is never visited and identical in both matrices
        assert np.all(np.abs(kls[:, 0]) < 1e-12)
        assert np.all(np.diff(kls[:, 1:], axis=0) > 0)

    def test_range_checked(self):
        with pytest.raises(ValueError):
            make_shifted_domain(self.src(), 1.5)


class TestBatching:
    def utts(self):
        rng = np.random.default_rng(0)
        return [Utterance(f"u{i}", rng.normal(size=(T, 3)), rng.integers(0, 5, size=U))
                for i, (T, U) in enumerate([(3, 2), (6, 1), (2, 3), (4, 4)])]

    def test_shapes_and_masks(self):
        batches = batchify(self.utts(), max_frames=6, batch_size=3)
        assert [len(b.ids) for b in batches] == [3, 1]
        b = batches[0]
        assert b.feats.shape == (3, 6, 3) and b.targets.shape == (3, 3)
        assert list(b.T_lens) == [3, 6, 2] and list(b.U_lens) == [2, 1, 3]
        assert b.frame_mask.sum() == 11
        assert np.all(b.feats[~b.frame_mask] == 0)

    def test_too_long_rejected_with_id(self):
        with pytest.raises(ValueError, match="u1"):
            batchify(self.utts(), max_frames=5)


class TestFiles:
    def test_manifest_round_trip(self, tmp_path):
        spec = random_domain_spec(1, V=7, feat_dim=3)
        v = data.word_vocabulary(7)
        utts, text = generate_domain(spec, 6, seed=3, prefix="x")
        data.write_manifest(tmp_path / "dev.tsv", utts, v, tmp_path / "dev.feats")
        back = data.read_manifest(tmp_path / "dev.tsv", v)
        for a, b in zip(utts, back):
            assert a.id == b.id
            assert np.array_equal(a.feats, b.feats) and np.array_equal(a.transcript, b.transcript)
        first = (tmp_path / "dev.tsv").read_text().splitlines()[0].split("\t")
        assert first[0] == "x000000" and first[1] == "dev.feats#x000000"

    def test_corpus_round_trip(self, tmp_path):
        v = data.word_vocabulary(7)
        text = generate_text(random_domain_spec(1, V=7, feat_dim=3), 20, seed=1)
        data.write_corpus(tmp_path / "t.txt", text, v)
        back = data.read_corpus(tmp_path / "t.txt", v)
        assert all(np.array_equal(a, b) for a, b in zip(text, back))

    def test_domain_spec_round_trip(self, tmp_path):
        spec = random_domain_spec(2, V=9, feat_dim=3)
        data.save_domain_spec(tmp_path / "s.spec", spec)
        back = data.load_domain_spec(tmp_path / "s.spec")
        assert np.array_equal(back.transitions, spec.transitions)
        assert back.frames_per_token == spec.frames_per_token and back.noise == spec.noise

    def test_corpus_validation(self):
        with pytest.raises(ValueError):
            TextCorpus([[1, 2], []])
        with pytest.raises(ValueError):
            TextCorpus([[1, 9]], V=5)
        assert TextCorpus([[1, 2], [3]]).num_tokens() == 5
