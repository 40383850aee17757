"""The nine acceptance criteria, each at its stated tolerance.

A one-line PASS/FAIL per criterion is printed in the terminal summary.
"""

import numpy as np
import pytest

from pilot_ura import analysis as an
from pilot_ura.amp import AmpConfig, run_mmv_amp
from pilot_ura.channel import draw_scene, emit_pilot_signal
from pilot_ura.config import default_design_snr, parse_items, preset
from pilot_ura.harness import run_campaign
from pilot_ura.mud import error_covariance, lmmse_estimate
from pilot_ura.pilots import build_pilot_book
from pilot_ura.polar import construct, design_z0

from conftest import crand, dft_rows


@pytest.fixture(scope="module")
def desk_campaign():
    return run_campaign(preset("desk"))


def test_1_collision_arithmetic(acceptance):
    with acceptance("1 collision arithmetic") as rec:
        c2 = an.expected_collisions(1000, 2**16, 2)
        loss = an.collision_loss(1000, 2**16)
        rec.detail = f"E[C2]={c2:.4f} loss={loss:.4f}"
        assert abs(c2 - 7.6218) <= 1e-3
        assert abs(loss - 0.0152) <= 1e-3


def test_2_lmmse_oracle(acceptance):
    with acceptance("2 LMMSE oracle equivalence") as rec:
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(100):
            N = int(2 ** rng.integers(3, 9))
            n_p = int(rng.integers(2, min(N, 64) + 1))
            K = int(rng.integers(1, N // 2 + 1))
            book = build_pilot_book(N, n_p, seed=int(rng.integers(2**31)))
            support = np.sort(rng.choice(N, K, replace=False))
            gamma = rng.uniform(0.01, 2.0, K)
            N0 = float(rng.uniform(0.1, 2.0))
            Y = crand(rng, n_p, int(rng.integers(1, 5)))
            B = book.columns(support) * np.sqrt(gamma)
            Cyy = B @ B.conj().T + N0 * np.eye(n_p)
            H_ref = B.conj().T @ np.linalg.solve(Cyy, Y)
            ce_ref = np.real(np.diag(np.eye(K) - B.conj().T @ np.linalg.solve(Cyy, B)))
            est = lmmse_estimate(Y, book, support, gamma, N0)
            worst = max(worst, np.linalg.norm(est.H_hat - H_ref) / np.linalg.norm(H_ref),
                        np.max(np.abs(est.mse_diag - ce_ref) / ce_ref))
            assert np.all(est.mse_diag >= an.ortho_mse(n_p, gamma, 1.0, N0) * (1 - 1e-12))
        # orthogonal pilots: distinct columns of the full DFT
        ortho_gap = 0.0
        for N in (16, 64):
            book = build_pilot_book(N, N, seed=0)
            support = np.array([0, 3, N - 1])
            gamma = np.array([0.1, 0.5, 1.0])
            ce = np.real(np.diag(error_covariance(book, support, gamma, 0.7)))
            ortho_gap = max(ortho_gap, np.max(np.abs(ce - an.ortho_mse(N, gamma, 1.0, 0.7))))
        rec.detail = f"max rel err {worst:.2e}, orthogonal-fixture gap {ortho_gap:.1e}"
        assert worst <= 1e-8
        assert ortho_gap <= 1e-12


def test_3_fast_operators(acceptance):
    with acceptance("3 fast-operator equivalence") as rec:
        rng = np.random.default_rng(3)
        worst = 0.0
        for N in (8, 16, 32, 64):
            for _ in range(50):
                n_p = int(rng.integers(1, N + 1))
                book = build_pilot_book(N, n_p, seed=int(rng.integers(2**31)))
                A = dft_rows(N, book.row_subset)
                X, Z = crand(rng, N, 3), crand(rng, n_p, 3)
                worst = max(worst,
                            np.linalg.norm(book.forward(X) - A @ X) / np.linalg.norm(A @ X),
                            np.linalg.norm(book.adjoint(Z) - A.conj().T @ Z) / np.linalg.norm(A.conj().T @ Z))
        rec.detail = f"max rel err {worst:.2e}"
        assert worst <= 1e-9


def test_4_amp_support_recovery(acceptance):
    with acceptance("4 AMP support recovery") as rec:
        N, n_p, K_a, M = 4096, 512, 50, 16
        P = float(an.db2lin(5.0))
        book = build_pilot_book(N, n_p, seed=4)
        exact = 0
        trials = 200
        for t in range(trials):
            rng = np.random.default_rng(40_000 + t)
            scene = draw_scene(type("C", (), dict(K_a=K_a, B=32, J=12, M=M, P_pilot=P, P_data=P,
                                                  N0=1.0, lsfc=None)), rng)
            Y = emit_pilot_signal(scene, book, rng)
            truth = np.unique(scene.pilot_indices)
            # pilots shared by colliding users count once
            res = run_mmv_amp(Y, book, AmpConfig(sparsity=K_a / N, prior_power=P, known_Ka=len(truth)))
            exact += np.array_equal(res.support, truth)
        rec.detail = f"exact support {exact}/{trials}"
        assert exact / trials >= 0.95


def test_5_normal_approximation(acceptance):
    with acceptance("5 normal-approximation self-consistency") as rec:
        worst = 0.0
        for R in np.linspace(0.005, 2.0, 100):
            s = an.required_sinr(float(R), 2048, 0.05)
            worst = max(worst, abs(an.normal_approx_rate(s, 2048, 0.05) - R))
        # exact up to floating-point rounding
        median = max(abs(an.normal_approx_rate(s, 512, 0.5) / (0.5 * np.log2(1 + s)) - 1)
                     for s in np.logspace(-3, 3, 50))
        rec.detail = f"round trip {worst:.1e}, median point {median:.1e}"
        assert worst <= 1e-8
        assert median <= 4 * np.finfo(float).eps


def test_6_collision_model(acceptance):
    with acceptance("6 collision-model reproduction") as rec:
        spec = construct(4096, 84, 16, design_z0(default_design_snr(84, 2048)), list_size=32)
        row = an.collision_sweep(50, -10.0, [-15.0], 2048, spec, trials=300, seed=6)[0]
        rec.detail = f"both={row['both']:.3f} at-least-one={row['both'] + row['one']:.3f} (300 trials)"
        assert abs(row["both"] - 0.75) <= 0.10
        assert row["both"] + row["one"] >= 0.95


def test_7_end_to_end_vs_analysis(acceptance, desk_campaign):
    with acceptance("7 end-to-end vs analysis") as rec:
        rep = desk_campaign
        predicted = an.required_ebn0(30, 16, 384, 1024, 60, 12)
        lo, hi = rep.interval("p_md")
        rec.detail = (f"P_e={rep.p_e:.4f} (p_md={rep.p_md:.4f} [{lo:.4f}, {hi:.4f}], p_fa={rep.p_fa:.4f}) "
                      f"at {predicted + 1.5:.2f} dB = analysis {predicted:.2f} dB + 1.5 dB")
        p_e = rep.p_e
        assert len(rep.trials) == 200
        assert p_e < 0.05


def test_8_metric_identities(acceptance, desk_campaign):
    with acceptance("8 metric identities") as rec:
        truncated = run_campaign(parse_items([("truncate", "true", None), ("trials", "50", None)],
                                             base=preset("desk")))
        checked = 0
        for rep in (desk_campaign, truncated):
            for t in rep.trials:
                assert t.list_size == t.n_fa + t.K_a - t.n_md
                checked += 1
        rec.detail = f"{checked} trials; truncated p_fa={truncated.p_fa:.4f} p_md={truncated.p_md:.4f}"
        assert truncated.p_fa == truncated.p_md


def test_9_curve_shape(acceptance):
    with acceptance("9 analysis curve shape") as rec:
        cfg = preset("curves")
        K_grid = list(range(100, 1101, 100))
        curves = {}
        for model in ("lmmse", "ortho"):
            for M in cfg.M_grid:
                curves[model, M] = np.array([an.required_ebn0(K, M, cfg.n_p, cfg.n_d, cfg.B, cfg.J,
                                                              mse_model=model) for K in K_grid])
        for model in ("lmmse", "ortho"):
            for M in cfg.M_grid:
                c = curves[model, M]
                assert np.all(c[1:] >= c[:-1]), (model, M)
            for a, b in zip(cfg.M_grid, cfg.M_grid[1:]):
                assert np.all(curves[model, b] <= curves[model, a]), (model, a, b)
        gaps = []
        for M in cfg.M_grid:
            lm, orth = curves["lmmse", M], curves["ortho", M]
            finite = np.isfinite(lm) & np.isfinite(orth)
            gap = lm[finite] - orth[finite]
            assert np.all(gap >= 0)
            assert np.all(np.diff(gap) > 0), M
            gaps.append(f"M={M}: {gap[0]:.2f}->{gap[-1]:.2f} dB")
        rec.detail = "; ".join(gaps)
