"""Policy model tests: masking, estimator API, persistence, gradients."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from samezero.board import BoardSeed, encode_board, generate_board
from samezero.nnet import PolicyNet
from samezero.policy import (
    ConvPolicyNet,
    UniformPolicy,
    color_permutation,
    cross_entropy,
    gradient_check,
    load_model,
    masked_renormalize,
    save_model,
    uniform_policy,
)


def one_hot_batch(n, h=5, w=5, c=4, seed=0):
    rng = np.random.default_rng(seed)
    x = np.zeros((n, h + 2, w + 2, c + 1), dtype=np.float32)
    for i in range(n):
        cells = rng.integers(1, c + 1, size=(h, w))
        rows, cols = np.indices((h, w))
        x[i, rows + 1, cols + 1, cells] = 1.0
    return x


class TestMaskedRenormalize:
    def test_restricts_and_renormalizes(self):
        raw = np.array([0.1, 0.2, 0.3, 0.4])
        priors, fell_back = masked_renormalize(raw, np.array([1, 3]))
        assert not fell_back
        assert np.allclose(priors, [0.2 / 0.6, 0.4 / 0.6])

    def test_nan_falls_back_uniform(self):
        raw = np.array([np.nan, 1.0, 2.0])
        priors, fell_back = masked_renormalize(raw, np.array([0, 2]))
        assert fell_back
        assert np.allclose(priors, 0.5)

    def test_zero_mass_falls_back(self):
        raw = np.zeros(9)
        priors, fell_back = masked_renormalize(raw, np.array([4, 7, 8]))
        assert fell_back
        assert np.allclose(priors, 1 / 3)

    def test_negative_mass_falls_back(self):
        raw = np.array([-1.0, -2.0, 1.0])
        priors, fell_back = masked_renormalize(raw, np.array([0, 1]))
        assert fell_back

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 48), st.integers(0, 10_000))
    def test_output_is_distribution(self, n_legal, seed):
        rng = np.random.default_rng(seed)
        raw = rng.random(49)
        legal = rng.choice(49, size=n_legal, replace=False)
        priors, fell_back = masked_renormalize(raw, legal)
        assert priors.shape == (n_legal,)
        assert abs(priors.sum() - 1.0) < 1e-9
        assert not fell_back


class TestUniformPolicy:
    def test_uniform_over_legal_actions(self):
        b = generate_board(BoardSeed(1, width=5, height=5, num_colors=4))
        probs = uniform_policy(b)
        legal = [a.row * b.width + a.col for a in b.legal_actions()]
        assert probs.shape == (25,)
        assert np.allclose(probs[legal], 1 / len(legal))
        assert probs.sum() == pytest.approx(1.0)
        assert np.count_nonzero(probs) == len(legal)

    def test_cross_entropy_of_uniform(self):
        probs = np.full((3, 49), 1 / 49)
        targets = np.array([0, 10, 48])
        assert cross_entropy(probs, targets) == pytest.approx(np.log(49))

    def test_marker(self):
        assert UniformPolicy(5, 5, 4).is_uniform
        assert not ConvPolicyNet().is_uniform


class TestColorPermutation:
    def test_channel_zero_fixed_and_mass_preserved(self):
        rng = np.random.default_rng(0)
        x = one_hot_batch(8)
        out = color_permutation(x, rng)
        assert np.array_equal(out[:, :, :, 0], x[:, :, :, 0])
        assert np.array_equal(out.sum(axis=3), x.sum(axis=3))

    def test_per_sample_permutations_differ(self):
        rng = np.random.default_rng(1)
        x = np.zeros((32, 3, 3, 6), dtype=np.float32)
        x[:, 1, 1, 1] = 1.0
        out = color_permutation(x, rng)
        dests = out[:, 1, 1, :].argmax(axis=1)
        assert len(set(dests.tolist())) > 1

    def test_deterministic_given_rng(self):
        x = one_hot_batch(4)
        a = color_permutation(x, np.random.default_rng(7))
        b = color_permutation(x, np.random.default_rng(7))
        assert np.array_equal(a, b)


class TestEstimatorApi:
    def test_get_set_params_clone(self):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny",
                            learning_rate=1e-3, seed=9)
        params = net.get_params()
        assert params["learning_rate"] == 1e-3
        twin = clone(net)
        assert twin.get_params() == params

    def test_predict_before_fit_raises(self):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny")
        with pytest.raises(NotFittedError):
            net.predict_proba(one_hot_batch(2))

    def test_fit_predict_shapes(self):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny",
                            max_epochs=2, patience=1, batch_size=8, seed=0)
        x = one_hot_batch(16)
        y = np.arange(16) % 25
        net.fit(x, y)
        proba = net.predict_proba(x)
        assert proba.shape == (16, 25)
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-5)
        assert net.predict(x).shape == (16,)

    def test_fresh_fit_each_call(self):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny",
                            max_epochs=1, patience=1, batch_size=8, seed=0)
        x, y = one_hot_batch(8), np.zeros(8, dtype=np.int64)
        net.fit(x, y)
        first = [p.copy() for p in net.net_.params()]
        net.fit(x, y)
        again = [p.copy() for p in net.net_.params()]
        for a, b in zip(first, again):
            assert np.array_equal(a, b)  # same seed, same data: same result

    def test_evaluate_matches_batch(self):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny", seed=4)
        x = one_hot_batch(3)
        batched = net.evaluate_batch(x)
        single = np.stack([net.evaluate(x[i]) for i in range(3)])
        assert np.allclose(batched, single, atol=1e-6)

    def test_input_validation(self):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny")
        with pytest.raises(ValueError):
            net.fit(np.zeros((4, 3, 3, 2), dtype=np.float32), np.zeros(4))
        with pytest.raises(ValueError):
            net.fit(one_hot_batch(4), np.array([0, 1, 2]))  # length mismatch
        with pytest.raises(ValueError):
            net.fit(one_hot_batch(4), np.array([0, 1, 2, 99]))  # action range


class TestPersistence:
    def test_round_trip_bit_identical(self, tmp_path):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny",
                            max_epochs=2, patience=1, batch_size=8, seed=3)
        net.fit(one_hot_batch(12), np.arange(12) % 25)
        p = tmp_path / "model.szpn"
        save_model(net, p)
        again = load_model(p)
        x = one_hot_batch(5, seed=9)
        assert np.array_equal(net.evaluate_batch(x), again.evaluate_batch(x))

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.szpn"
        p.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_model(p)

    def test_truncated_rejected(self, tmp_path):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny", seed=1)
        p = tmp_path / "model.szpn"
        save_model(net, p)
        blob = p.read_bytes()
        p.write_bytes(blob[:-16])
        with pytest.raises(ValueError, match="truncated"):
            load_model(p)

    def test_config_tamper_rejected(self, tmp_path):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny", seed=1)
        p = tmp_path / "model.szpn"
        save_model(net, p)
        blob = bytearray(p.read_bytes())
        blob[20] ^= 0xFF  # flip a config byte under the digest
        p.write_bytes(bytes(blob))
        with pytest.raises(ValueError):
            load_model(p)


class _CorruptedNet(PolicyNet):
    """Negative control: returns a slightly wrong gradient."""

    def loss_and_gradients(self, x, targets):
        loss, grads = super().loss_and_gradients(x, targets)
        bad = [g.copy() for g in grads]
        bad[0] = bad[0] * 1.01
        return loss, bad


class TestGradientCheck:
    def test_analytic_gradients_pass(self):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny", seed=0)
        x = one_hot_batch(6)
        y = np.arange(6) % 25
        report = gradient_check(net, x, y)
        assert report.passed, f"max rel error {report.max_rel_error}"

    def test_corrupted_gradients_fail(self):
        model = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny", seed=0)
        model.net_ = _CorruptedNet(model.input_shape, model.n_actions,
                                   model._plan(), seed=0)
        x = one_hot_batch(4)
        y = np.arange(4) % 25
        report = gradient_check(model, x, y)
        assert not report.passed

    def test_overfit_one_small_batch(self):
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny",
                            learning_rate=5e-4, seed=0)
        x = one_hot_batch(16, seed=5)
        y = np.random.default_rng(5).integers(0, 25, size=16)
        for _ in range(600):
            loss, grads = net.loss_and_gradients(x, y)
            net.apply_update(grads)
        final, _ = net.loss_and_gradients(x, y)
        assert final < 0.1
