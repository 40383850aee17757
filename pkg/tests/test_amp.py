import csv
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pilot_ura.amp import AmpConfig, amp_step, row_denoiser, run_mmv_amp, select_support, support_f1
from pilot_ura.channel import draw_scene, emit_pilot_signal
from pilot_ura.errors import ConfigError
from pilot_ura.pilots import DensePilots, build_pilot_book

from conftest import crand


def scene_cfg(K_a, M, B, J, P, N0):
    return SimpleNamespace(K_a=K_a, B=B, J=J, M=M, P_pilot=P, P_data=P, N0=N0, lsfc=None)


def detect(N, n_p, K_a, M, P, N0, seed):
    rng = np.random.default_rng(seed)
    book = build_pilot_book(N, n_p, seed=seed)
    J = int(np.log2(N))
    scene = draw_scene(scene_cfg(K_a, M, J + 10, J, P, N0), rng)
    Y = emit_pilot_signal(scene, book, rng)
    truth = np.unique(scene.pilot_indices)
    cfg = AmpConfig(sparsity=K_a / N, prior_power=P, known_Ka=len(truth))
    return run_mmv_amp(Y, book, cfg, true_support=truth), truth, scene


class TestConfig:
    def test_exactly_one_rule(self):
        with pytest.raises(ConfigError):
            AmpConfig(sparsity=0.1, prior_power=1.0)
        with pytest.raises(ConfigError):
            AmpConfig(sparsity=0.1, prior_power=1.0, known_Ka=3, threshold=0.5)

    @pytest.mark.parametrize("kw", [dict(sparsity=0.0), dict(sparsity=1.0), dict(prior_power=0.0),
                                    dict(damping=0.0), dict(damping=1.5), dict(max_iters=0)])
    def test_bad_values(self, kw):
        base = dict(sparsity=0.1, prior_power=1.0, known_Ka=2)
        base.update(kw)
        with pytest.raises(ConfigError):
            AmpConfig(**base)


class TestDenoiser:
    def test_limits(self):
        R = np.array([[0.0, 0.0], [30.0, 30.0]], dtype=complex)
        phi, shrink = row_denoiser(R, tau2=1.0, prior_power=4.0, sparsity=0.01)
        assert phi[0] < 1e-3
        assert phi[1] > 1 - 1e-9
        assert shrink == pytest.approx(0.8)

    def test_matches_posterior_ratio(self, rng):
        # direct ratio of the two complex Gaussian likelihoods
        R = crand(rng, 5, 3)
        tau2, p, lam = 0.7, 2.0, 0.2
        phi, _ = row_denoiser(R, tau2, p, lam)
        e = np.sum(np.abs(R) ** 2, axis=1)
        on = lam * np.exp(-e / (p + tau2)) / (np.pi * (p + tau2)) ** 3
        off = (1 - lam) * np.exp(-e / tau2) / (np.pi * tau2) ** 3
        np.testing.assert_allclose(phi, on / (on + off), rtol=1e-10)

    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-4, 0.5))
    @settings(max_examples=50, deadline=None)
    def test_phi_monotone_in_energy(self, tau2, p, lam):
        R = np.linspace(0, 10, 40)[:, None] * np.sqrt(tau2) * np.ones((1, 4))
        phi, shrink = row_denoiser(R.astype(complex), tau2, p, lam)
        assert np.all(np.diff(phi) >= -1e-12)
        assert 0 < shrink < 1


class TestSupport:
    def test_ties_go_to_lower_index(self):
        assert select_support([1.0, 3.0, 3.0, 3.0, 0.5], known_Ka=2).tolist() == [1, 2]

    def test_threshold(self):
        assert select_support([0.1, 0.6, 0.4, 0.9], threshold=0.5).tolist() == [1, 3]

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=40), st.integers(0, 40))
    def test_rules_agree(self, g, k):
        # thresholding between the k-th and (k+1)-th distinct values gives the top-k set
        g = np.array(g)
        k = min(k, len(g))
        top = select_support(g, known_Ka=k)
        assert len(top) == k
        vals = np.sort(g)[::-1]
        if 0 < k < len(g) and vals[k - 1] > vals[k]:
            thr = 0.5 * (vals[k - 1] + vals[k])
            assert select_support(g, threshold=thr).tolist() == top.tolist()

    def test_f1(self):
        assert support_f1([1, 2], [2, 3]) == 0.5
        assert support_f1([], []) == 1.0


class TestRecovery:
    def test_noiseless_full_dft(self):
        N, K, M = 64, 4, 4
        rng = np.random.default_rng(0)
        book = build_pilot_book(N, N, seed=0)
        scene = draw_scene(scene_cfg(K, M, 16, 6, 1.0, 0.0), rng)
        Y = emit_pilot_signal(scene, book, rng)
        truth = np.unique(scene.pilot_indices)
        res = run_mmv_amp(Y, book, AmpConfig(sparsity=K / N, prior_power=1.0, known_Ka=len(truth)))
        assert res.support.tolist() == truth.tolist()
        X = np.zeros((N, M), dtype=complex)
        np.add.at(X, scene.pilot_indices, scene.H)
        np.testing.assert_allclose(res.X_hat, X, atol=1e-6)

    def test_zero_input(self):
        book = build_pilot_book(64, 16, seed=0)
        res = run_mmv_amp(np.zeros((16, 3)), book, AmpConfig(sparsity=0.05, prior_power=1.0, threshold=0.1))
        assert not res.diverged
        assert np.all(res.X_hat == 0)
        assert res.support.size == 0

    def test_moderate_size(self):
        # N=1024, n_p=256, K_a=25, M=8, per-antenna SNR 10 dB
        res, truth, _ = detect(1024, 256, 25, 8, 10.0, 1.0, seed=3)
        assert set(res.support.tolist()) == set(truth.tolist())
        assert not res.diverged

    def test_tau_tracks_noise_in_pilot_units(self):
        # at convergence the residual power approaches N0 (plus a small MSE term)
        res, truth, _ = detect(1024, 256, 25, 8, 10.0, 1.0, seed=4)
        assert res.converged
        assert 0.8 < res.tau_trace[-1] < 1.5

    def test_gamma_estimates_power(self):
        res, truth, scene = detect(1024, 256, 25, 8, 10.0, 1.0, seed=5)
        single = [i for i in truth if np.sum(scene.pilot_indices == i) == 1]
        true_gamma = {i: 10.0 * np.mean(np.abs(scene.H[scene.pilot_indices == i][0]) ** 2) for i in single}
        rel = [abs(res.gamma_hat[i] - true_gamma[i]) / true_gamma[i] for i in single]
        assert np.median(rel) < 0.15

    def test_fast_step_matches_dense_step(self, rng):
        N, n_p, M = 128, 32, 3
        book = build_pilot_book(N, n_p, seed=2)
        dense = DensePilots(book.dense())
        X, R, Y = crand(rng, N, M), crand(rng, n_p, M), crand(rng, n_p, M)
        s = np.sqrt(n_p)
        out_fast = amp_step(Y, X, R, 1.3, lambda v: book.forward(v) / s, lambda v: book.adjoint(v) / s,
                            n_p, N, 2.0, 0.05, 0.7)
        out_dense = amp_step(Y, X, R, 1.3, lambda v: dense.forward(v) / s, lambda v: dense.adjoint(v) / s,
                             n_p, N, 2.0, 0.05, 0.7)
        for a, b in zip(out_fast, out_dense):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)

    def test_run_with_dense_oracle_matches(self):
        rng = np.random.default_rng(9)
        book = build_pilot_book(256, 64, seed=9)
        scene = draw_scene(scene_cfg(6, 4, 18, 8, 5.0, 1.0), rng)
        Y = emit_pilot_signal(scene, book, rng)
        cfg = AmpConfig(sparsity=6 / 256, prior_power=5.0, known_Ka=6)
        a = run_mmv_amp(Y, book, cfg)
        b = run_mmv_amp(Y, DensePilots(book.dense()), cfg)
        np.testing.assert_allclose(a.X_hat, b.X_hat, atol=1e-8)
        assert a.support.tolist() == b.support.tolist()

    def test_shape_error(self):
        book = build_pilot_book(64, 16, seed=0)
        with pytest.raises(ValueError):
            run_mmv_amp(np.zeros((15, 2)), book, AmpConfig(sparsity=0.1, prior_power=1.0, known_Ka=1))

    def test_trace_csv(self, tmp_path):
        rng = np.random.default_rng(1)
        book = build_pilot_book(256, 64, seed=1)
        scene = draw_scene(scene_cfg(5, 4, 18, 8, 5.0, 1.0), rng)
        Y = emit_pilot_signal(scene, book, rng)
        truth = np.unique(scene.pilot_indices)
        path = tmp_path / "trace.csv"
        res = run_mmv_amp(Y, book, AmpConfig(sparsity=5 / 256, prior_power=5.0, known_Ka=len(truth)),
                          true_support=truth, trace_csv=path)
        rows = list(csv.DictReader(open(path)))
        assert len(rows) == res.iterations
        assert float(rows[-1]["support_f1"]) == support_f1(res.support, truth)
        np.testing.assert_allclose([float(r["tau2"]) for r in rows], res.tau_trace[1:])
