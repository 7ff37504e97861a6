import math

import numpy as np
import pytest

from fntlab import models
from fntlab.data import batchify, Utterance
from fntlab.decoding import greedy_decode
from fntlab.models import (
    ArchitectureError,
    ModelBundle,
    ModelConfig,
    compute_loss,
    encode,
    init_model,
    joint_fnt,
    joint_ifnt,
    joint_nt,
    lattice,
    vocab_lm_logprobs,
)
from fntlab.numerics import ShapeError, grad_check, log_softmax
from fntlab.rnnt_loss import rnnt_loss, uniform_loss

ARCHS = ("NT", "FNT", "IFNT")


def tiny(arch, **kw):
    base = dict(arch=arch, V=5, D=6, feat_dim=3, enc_width=5, enc_layers=2, dec_width=4, embed_dim=3,
                lambda_f=0.3)
    base.update(kw)
    return init_model(ModelConfig(**base), seed=1)


def small(arch, seed=0, **kw):
    base = dict(arch=arch, V=7, D=8, feat_dim=4, enc_width=8, dec_width=8, embed_dim=4)
    base.update(kw)
    return init_model(ModelConfig(**base), seed=seed)


@pytest.mark.parametrize("arch", ARCHS)
def test_every_cell_is_normalized(arch):
    rng = np.random.default_rng(0)
    m = small(arch)
    for _ in range(5):
        T, U = rng.integers(1, 7), rng.integers(1, 5)
        feats = rng.normal(size=(T, 4)) * 2
        target = rng.integers(0, 7, size=U)
        logp = lattice(m, feats, target).logp
        assert logp.shape == (T, U + 1, 8)
        np.testing.assert_allclose(np.exp(logp).sum(-1), 1.0, atol=1e-8)


@pytest.mark.parametrize("arch", ARCHS)
def test_finite_difference_gradient(arch):
    m = tiny(arch)
    feats = np.random.default_rng(0).normal(size=(4, 3))
    target = [1, 3, 2]

    def f(store):
        store.zero_grad()
        return compute_loss(m, feats, target).J_f

    assert grad_check(f, m.params) < 1e-4


class TestEncoder:
    def test_shape(self):
        m = small("NT")
        assert encode(m, np.zeros((4, 4))).shape == (4, 8)

    def test_zero_weights_give_constant_rows(self):
        m = small("FNT")
        for name in m.params.names():
            if name.startswith("encoder."):
                m.params.set_value(name, np.zeros_like(m.params[name]))
        out = encode(m, np.random.default_rng(1).normal(size=(5, 4)))
        np.testing.assert_array_equal(out, np.broadcast_to(out[0], out.shape))

    def test_rejects_empty_and_wrong_width(self):
        m = small("NT")
        with pytest.raises(ValueError):
            encode(m, np.zeros((0, 4)))
        with pytest.raises(ShapeError):
            encode(m, np.zeros((3, 5)))


class TestVocabularyDecoder:
    def test_rows_normalize(self):
        m = small("IFNT")
        lp, H = vocab_lm_logprobs(m, [1, 2, 3])
        assert lp.shape == (4, 7) and H.shape == (4, 8)
        np.testing.assert_allclose(np.exp(lp).sum(-1), 1.0, atol=1e-10)
        full, _ = vocab_lm_logprobs(m, [1, 2, 3], include_eos=True)
        np.testing.assert_allclose(np.exp(full).sum(-1), 1.0, atol=1e-10)
        assert np.all(full <= 0)

    def zero_lm(self, arch="FNT"):
        m = small(arch)
        for name in m.params.names():
            if name.startswith("vocab_lm.out"):
                m.params.set_value(name, np.zeros_like(m.params[name]))
        return m

    def test_zero_weight_lm_is_uniform(self):
        lp, _ = vocab_lm_logprobs(self.zero_lm(), [4, 4])
        np.testing.assert_allclose(lp, -math.log(7), atol=1e-12)

    def test_uniform_sequence_score(self):
        lp, _ = vocab_lm_logprobs(self.zero_lm(), [2, 5, 1])
        assert -sum(lp[u, y] for u, y in enumerate([2, 5, 1])) == pytest.approx(3 * math.log(7), abs=1e-12)
        # with EOS the uniform LM spreads over V+1 classes, and the sequence has 4 predictions
        assert models.lm_loss(self.zero_lm(), [2, 5, 1]) == pytest.approx(4 * math.log(8), abs=1e-12)

    def test_nt_has_no_vocabulary_decoder(self):
        with pytest.raises(ArchitectureError):
            vocab_lm_logprobs(small("NT"), [1])
        with pytest.raises(ArchitectureError):
            models.lm_view(small("NT"))


class TestJoints:
    def setup_method(self):
        rng = np.random.default_rng(2)
        self.f = rng.normal(size=(4, 8))
        self.g = rng.normal(size=(3, 8))
        self.lm = log_softmax(rng.normal(size=(3, 7)))

    def test_nt_zero_output_projection_gives_uniform_lattice(self):
        m = small("NT")
        for name in ("joint.out.W", "joint.out.b"):
            m.params.set_value(name, np.zeros_like(m.params[name]))
        logp = joint_nt(self.f, self.g, m.params)
        np.testing.assert_allclose(logp, -math.log(8), atol=1e-12)
        lat = lattice(m, np.random.default_rng(0).normal(size=(3, 4)), [1, 2])
        assert rnnt_loss(lat) == pytest.approx(uniform_loss(3, 2, 7), abs=1e-10)

    def test_nt_frame_permutation_permutes_time_axis(self):
        m = small("NT")
        perm = np.array([2, 0, 3, 1])
        np.testing.assert_allclose(joint_nt(self.f[perm], self.g, m.params),
                                   joint_nt(self.f, self.g, m.params)[perm], atol=1e-14)

    def test_shape_mismatch_rejected(self):
        m = small("FNT")
        with pytest.raises(ShapeError):
            joint_fnt(self.f, self.g, self.lm[:2], m.params)
        with pytest.raises(ShapeError):
            joint_nt(self.f[0], self.g, small("NT").params)

    def silence_acoustics(self, m):
        # vocabulary branch loses its acoustic term, blank logit becomes a constant
        names = ["blank_joint.out.W", "blank_joint.out.b"]
        names += ["vocab_joint.enc_proj.W", "vocab_joint.enc_proj.b"] if m.arch == "FNT" else \
            ["vocab_joint.out.W", "vocab_joint.out.b"]
        for name in names:
            m.params.set_value(name, np.zeros_like(m.params[name]))

    @pytest.mark.parametrize("arch", ["FNT", "IFNT"])
    def test_lm_posterior_passes_through(self, arch):
        m = small(arch)
        self.silence_acoustics(m)
        if arch == "FNT":
            logp = joint_fnt(self.f, self.g, self.lm, m.params)
        else:
            logp = joint_ifnt(self.f, self.g, self.g, self.lm, m.params)
        vocab = logp[..., :7]
        renorm = vocab - np.logaddexp.reduce(vocab, axis=-1, keepdims=True)
        np.testing.assert_allclose(renorm, np.broadcast_to(self.lm, renorm.shape), atol=1e-12)

    @pytest.mark.parametrize("arch", ["FNT", "IFNT"])
    def test_constant_lm_shift_keeps_vocab_ratios(self, arch):
        m = small(arch)

        def run(lm):
            if arch == "FNT":
                return joint_fnt(self.f, self.g, lm, m.params)
            return joint_ifnt(self.f, self.g, self.g, lm, m.params)

        a, b = run(self.lm), run(self.lm + 1.5)
        np.testing.assert_allclose(a[..., :7] - a[..., :1], b[..., :7] - b[..., :1], atol=1e-12)
        assert np.all(b[..., 7] < a[..., 7])  # blank loses mass

    def test_ifnt_lm_shift_changes_decoding_with_acoustics_frozen(self):
        m = small("IFNT", seed=3)
        m.params.set_value("blank_joint.out.b", np.array([-20.0]))  # force label emissions
        feats = np.random.default_rng(4).normal(size=(3, 4))
        before = greedy_decode(m, feats)
        bias = m.params["vocab_lm.out.b"].copy()
        bias[5] += 40.0
        shifted = m.copy()
        shifted.params.set_value("vocab_lm.out.b", bias)
        after = greedy_decode(shifted, feats)
        assert before != after
        assert set(after) == {5}
        for name in m.params.names():
            if not name.startswith("vocab_lm."):
                assert np.array_equal(m.params[name], shifted.params[name])


class TestObjective:
    @pytest.mark.parametrize("arch", ARCHS)
    def test_combined_loss_identity(self, arch):
        rng = np.random.default_rng(5)
        m = small(arch, lambda_f=0.1)
        for _ in range(5):
            feats = rng.normal(size=(rng.integers(2, 6), 4))
            target = rng.integers(0, 7, size=rng.integers(1, 4))
            lb = compute_loss(m, feats, target, backward=False)
            lam = 0.1 if arch != "NT" else 0.0
            assert abs(lb.J_f - (lb.J_t + lam * lb.lm_ce)) < 1e-12
            if arch == "NT":
                assert lb.lm_ce == 0.0 and lb.J_f == lb.J_t

    @pytest.mark.parametrize("arch", ["FNT", "IFNT"])
    def test_zero_lm_weight(self, arch):
        m = small(arch, lambda_f=0.0)
        lb = compute_loss(m, np.ones((3, 4)), [1, 2], backward=False)
        assert lb.lm_ce > 0
        assert lb.J_f == lb.J_t

    def test_empty_target_rejected(self):
        with pytest.raises(ValueError):
            compute_loss(small("NT"), np.ones((3, 4)), [])

    def test_batch_of_three_equals_sum(self):
        rng = np.random.default_rng(6)
        m = small("IFNT")
        utts = [Utterance(str(i), rng.normal(size=(T, 4)), rng.integers(0, 7, size=U))
                for i, (T, U) in enumerate([(3, 2), (5, 1), (2, 3)])]
        (batch,) = batchify(utts, max_frames=5, batch_size=3)
        total = models.batch_loss(m, batch, backward=False)
        singles = [compute_loss(m, u.feats, u.transcript, backward=False) for u in utts]
        assert abs(total.J_f - sum(s.J_f for s in singles)) < 1e-9
        (one,) = batchify(utts[:1], max_frames=5, batch_size=1)
        assert models.batch_loss(m, one, backward=False).J_f == singles[0].J_f


@pytest.mark.parametrize("arch", ARCHS)
def test_incremental_step_matches_lattice(arch):
    rng = np.random.default_rng(7)
    m = small(arch)
    feats = rng.normal(size=(4, 4))
    target = [3, 1, 6]
    logp = lattice(m, feats, target).logp
    ac = models.acoustic_projections(m, feats)
    st = models.initial_state(m)
    for u in range(len(target) + 1):
        for t in range(4):
            np.testing.assert_allclose(models.joint_step(m, ac, t, st), logp[t, u], atol=1e-12)
        if u < len(target):
            st = models.advance_state(m, st, target[u])


def test_parameter_counts_share_the_encoder():
    counts = {a: models.param_counts(small(a)) for a in ARCHS}
    assert counts["NT"]["encoder"] == counts["FNT"]["encoder"] == counts["IFNT"]["encoder"]
    assert "vocab_lm" not in counts["NT"]
    assert counts["FNT"]["vocab_lm"] == counts["IFNT"]["vocab_lm"]
    for c in counts.values():
        assert c["total"] == sum(v for k, v in c.items() if k != "total")


@pytest.mark.parametrize("arch", ARCHS + ("LM",))
def test_checkpoint_round_trip(arch, tmp_path):
    m = small(arch)
    m.save(tmp_path / "m.ckpt")
    back = ModelBundle.load(tmp_path / "m.ckpt")
    assert back.config == m.config
    assert back.params.equals(m.params)
    assert back.to_bytes() == m.to_bytes()


def test_lm_view_scores_like_the_parent():
    m = small("FNT")
    view = models.lm_view(m)
    assert view.arch == "LM"
    assert set(view.params.names()) == {n for n in m.params.names() if n.startswith("vocab_lm.")}
    assert models.lm_loss(view, [1, 2, 3]) == models.lm_loss(m, [1, 2, 3])


def test_config_validation():
    with pytest.raises(ArchitectureError):
        ModelConfig(arch="RNNT")
    with pytest.raises(ValueError):
        ModelConfig(V=1)
    with pytest.raises(ValueError):
        ModelConfig(lambda_f=-0.1)
