from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate
from scipy.special import expit

from plauth import nn
from plauth.channels import BoxDomain, GaussianScenarioConfig, LabeledDataset, sample_artificial_uniform
from plauth.nn import MlpArchitecture, MlpParams, TrainConfig
from plauth.stattests import calibrate_threshold, decide


def _fd_grad(params: MlpParams, x, t, loss, h=1e-6):
    g = np.empty_like(params.w)
    for k in range(params.w.size):
        old = params.w[k]
        params.w[k] = old + h
        fp, _ = nn.loss_and_grad(params, x, t, loss)
        params.w[k] = old - h
        fm, _ = nn.loss_and_grad(params, x, t, loss)
        params.w[k] = old
        g[k] = (fp - fm) / (2 * h)
    return g


def _random_net(rng, depth, scheme="fan-in"):
    widths = (int(rng.integers(1, 5)),) + tuple(int(w) for w in rng.integers(1, 9, size=depth - 1)) + (1,)
    return MlpParams.init(MlpArchitecture(widths), int(rng.integers(1 << 30)), scheme)


class TestArchitecture:
    def test_default_widths(self):
        assert MlpArchitecture.default(4).widths == (4, 40, 32, 24, 16, 8, 4, 1)

    @pytest.mark.parametrize("widths", [(3,), (3, 2), (3, 0, 1)])
    def test_invalid(self, widths):
        with pytest.raises(ValueError):
            MlpArchitecture(widths)

    def test_param_count(self):
        assert MlpArchitecture((2, 3, 1)).n_params == 2 * 3 + 3 + 3 + 1


class TestForward:
    def test_zero_weights_give_half(self):
        p = MlpParams(MlpArchitecture.default(4))
        np.testing.assert_array_equal(nn.forward(p, np.random.default_rng(0).normal(size=(5, 4))), 0.5)

    def test_single_neuron(self):
        p = MlpParams(MlpArchitecture((1, 1)), [1.0, 0.0])
        assert nn.forward(p, [2.0]) == pytest.approx(0.8807970779778823)

    def test_output_in_open_interval(self):
        p = MlpParams.init(MlpArchitecture.default(4), seed=3)
        out = nn.forward(p, np.random.default_rng(1).uniform(-15, 15, size=(1000, 4)))
        assert np.all((out > 0) & (out < 1))

    def test_logit_is_inverse_sigmoid_of_forward(self):
        p = MlpParams.init(MlpArchitecture((3, 5, 1)), seed=0)
        X = np.random.default_rng(2).normal(size=(20, 3))
        np.testing.assert_allclose(expit(nn.logit(p, X)), nn.forward(p, X), rtol=1e-12)

    def test_input_normalization(self):
        dom = BoxDomain((0.0, -4.0), (10.0, 4.0))
        p = MlpParams.init(MlpArchitecture((2, 4, 1)), seed=0, domain=dom)
        q = MlpParams(p.arch, p.w)
        X = np.array([[0.0, -4.0], [10.0, 4.0], [5.0, 0.0]])
        np.testing.assert_allclose(nn.forward(p, X), nn.forward(q, (X - [5, 0]) / [5, 4]))

    def test_wrong_width_rejected(self):
        with pytest.raises(ValueError):
            nn.forward(MlpParams(MlpArchitecture((3, 1))), np.zeros(4))


class TestLossAndGrad:
    def test_square_error_zero_at_target(self):
        # output neuron saturated at exactly 1.0 in float64
        p = MlpParams(MlpArchitecture((1, 1)), [0.0, 1000.0])
        value, g = nn.loss_and_grad(p, [0.3], 1, nn.SQUARE_ERROR)
        assert value == 0.0
        np.testing.assert_array_equal(g, 0.0)

    def test_cross_entropy_sign(self):
        p = MlpParams(MlpArchitecture((2, 1)))
        value, _ = nn.loss_and_grad(p, [0.1, 0.2], 1, nn.CROSS_ENTROPY)
        assert value == pytest.approx(np.log(2.0))

    def test_cross_entropy_clamps(self):
        p = MlpParams(MlpArchitecture((1, 1)), [0.0, -1000.0])
        value, _ = nn.loss_and_grad(p, [0.0], 1, nn.CROSS_ENTROPY)
        assert value == pytest.approx(-np.log(1e-12))

    def test_rejects_bad_target(self):
        with pytest.raises(ValueError):
            nn.loss_and_grad(MlpParams(MlpArchitecture((1, 1))), [0.0], 0.5)

    @pytest.mark.parametrize("loss", nn.LOSSES)
    def test_matches_finite_differences(self, loss):
        rng = np.random.default_rng(11)
        for trial in range(10):
            p = _random_net(rng, depth=1 + trial % 3)
            x = rng.normal(size=p.arch.widths[0])
            t = int(rng.integers(0, 2))
            _, g = nn.loss_and_grad(p, x, t, loss)
            fd = _fd_grad(p, x, t, loss)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-9)

    def test_batch_gradient_is_mean(self):
        p = MlpParams.init(MlpArchitecture((2, 3, 1)), seed=1)
        X = np.random.default_rng(0).normal(size=(4, 2))
        T = np.array([0, 1, 1, 0])
        v, g = nn.loss_and_grad(p, X, T)
        parts = [nn.loss_and_grad(p, X[i], T[i]) for i in range(4)]
        assert v == pytest.approx(np.mean([a for a, _ in parts]))
        np.testing.assert_allclose(g, np.mean([b for _, b in parts], axis=0), rtol=1e-12)


class TestEstimateF:
    def test_zero_gradient_net(self):
        p = MlpParams(MlpArchitecture((2, 1)), [0.0, 0.0, 1000.0])
        F = nn.estimate_F(p, BoxDomain.cube(2, 3.0), 32, seed=0)
        np.testing.assert_array_equal(F, 0.0)

    def test_converges_to_quadrature(self):
        dom = BoxDomain((-2.0,), (3.0,))
        p = MlpParams.init(MlpArchitecture((1, 3, 1)), seed=4)

        def grad_at(x):
            return nn.loss_and_grad(p, [x], 1)[1]

        xs = np.linspace(-2.0, 3.0, 4001)
        G = np.array([grad_at(x) for x in xs])
        quad = integrate.trapezoid(G, xs, axis=0) / 5.0
        F = nn.estimate_F(p, dom, 400_000, seed=1)
        np.testing.assert_allclose(F, quad, atol=1e-3)

    def test_two_seeds_agree_within_clt_band(self):
        dom = BoxDomain.cube(2, 4.0)
        p = MlpParams.init(MlpArchitecture((2, 3, 1)), seed=2)
        n = 100_000
        a = nn.estimate_F(p, dom, n, seed=1)
        b = nn.estimate_F(p, dom, n, seed=2)
        V = np.random.default_rng(9).uniform(-4, 4, size=(5000, 2))
        per = np.array([nn.loss_and_grad(p, v, 1)[1] for v in V])
        sd = per.std(axis=0) / np.sqrt(n)
        # a - b has standard deviation sqrt(2) * sd
        assert np.all(np.abs(a - b) <= 3 * np.sqrt(2) * sd + 1e-15)

    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError):
            nn.estimate_F(MlpParams(MlpArchitecture((1, 1))), BoxDomain.cube(1, 1.0), 0, 0)


def _blobs(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-10, 1, size=(n, 2)), rng.normal(10, 1, size=(n, 2))])
    return LabeledDataset(X, np.r_[np.zeros(n), np.ones(n)], "measured")


class TestTraining:
    def test_zero_learning_rate_is_identity(self):
        arch = MlpArchitecture((2, 4, 1))
        init = MlpParams.init(arch, seed=0)
        p = nn.train_sgd(arch, _blobs(50), TrainConfig(lr=0.0, epochs=1), init)
        np.testing.assert_array_equal(p.w, init.w)

    def test_msgd_zero_rate_zero_F_is_identity(self):
        arch = MlpArchitecture((2, 4, 1))
        init = MlpParams.init(arch, seed=0)
        d0 = GaussianScenarioConfig(dim=2).sample(0, 30, seed=0)
        p = nn.train_msgd(arch, d0, BoxDomain.cube(2, 15), TrainConfig(lr=0.0, epochs=1), init,
                          F=lambda params, rng: np.zeros(params.arch.n_params))
        np.testing.assert_array_equal(p.w, init.w)

    def test_separable_blobs(self):
        arch = MlpArchitecture((2, 8, 1))
        data = _blobs()
        p = nn.train_sgd(arch, data, TrainConfig(lr=0.1, epochs=5, seed=1),
                         domain=BoxDomain.cube(2, 15))
        acc = np.mean((nn.forward(p, data.X) > 0.5) == data.labels)
        assert acc >= 0.99

    def test_needs_both_labels(self):
        d0 = GaussianScenarioConfig().sample(0, 10, seed=0)
        with pytest.raises(ValueError):
            nn.train_sgd(MlpArchitecture.default(4), d0, TrainConfig())

    def test_msgd_rejects_artificial_rows(self):
        with pytest.raises(ValueError):
            nn.train_msgd(MlpArchitecture((2, 1)), _blobs(5), BoxDomain.cube(2, 15), TrainConfig())

    def test_trained_params_frozen(self):
        arch = MlpArchitecture((2, 3, 1))
        p = nn.train_sgd(arch, _blobs(20), TrainConfig(epochs=1))
        with pytest.raises(ValueError):
            p.w[0] = 1.0

    def test_seeded_determinism(self):
        arch = MlpArchitecture((2, 4, 1))
        cfg = TrainConfig(lr=0.05, epochs=2, seed=3)
        a = nn.train_sgd(arch, _blobs(200), cfg)
        b = nn.train_sgd(arch, _blobs(200), cfg)
        np.testing.assert_array_equal(a.w, b.w)
        d0 = GaussianScenarioConfig(dim=2).sample(0, 200, seed=0)
        m1 = nn.train_msgd(arch, d0, BoxDomain.cube(2, 15), cfg)
        m2 = nn.train_msgd(arch, d0, BoxDomain.cube(2, 15), cfg)
        np.testing.assert_array_equal(m1.w, m2.w)

    def test_msgd_matches_sgd_on_toy_problem(self):
        scen = GaussianScenarioConfig(dim=1, mean0=0.0, mean1=3.0, zeta=5.0)
        arch = MlpArchitecture((1, 8, 1))
        cfg = TrainConfig(lr=0.1, epochs=5, seed=0)
        d0 = scen.sample(0, 4000, seed=0, stream="train")
        d1 = sample_artificial_uniform(scen.domain, 4000, seed=0, stream="artificial")
        p_sgd = nn.train_sgd(arch, LabeledDataset.concat(d0, d1), cfg, domain=scen.domain)
        p_msgd = nn.train_msgd(arch, d0, scen.domain, cfg)
        cal = scen.sample(0, 20_000, seed=0, stream="validation").X
        grid = np.linspace(-5, 5, 2001)[:, None]
        decisions = []
        for p in (p_sgd, p_msgd):
            thr = calibrate_threshold(-nn.logit(p, cal), 0.1)
            decisions.append(decide(-nn.logit(p, grid), thr))
        assert np.mean(decisions[0] == decisions[1]) >= 0.95


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        dom = BoxDomain.cube(4, 15)
        p = MlpParams.init(MlpArchitecture.default(4), seed=5, domain=dom)
        path = tmp_path / "m.txt"
        nn.save_mlp(path, p, comment="config abc")
        q = nn.load_mlp(path)
        np.testing.assert_array_equal(q.w, p.w)
        np.testing.assert_array_equal(q.input_scale, p.input_scale)
        X = np.random.default_rng(0).uniform(-15, 15, size=(10, 4))
        np.testing.assert_array_equal(nn.logit(q, X), nn.logit(p, X))
        assert path.read_text().startswith("plauth-checkpoint 1\ncomment config abc\n")

    def test_wrong_kind(self, tmp_path):
        path = tmp_path / "x.txt"
        nn.save_checkpoint(path, "ae", "linear", (4, 1, 4), [("a", np.zeros((1, 4)))])
        with pytest.raises(ValueError):
            nn.load_mlp(path)
