"""Fast oracle checks shipped with the package (``pilot-ura selftest``).

The full suites live in ``tests/``; these are the cheap independent checks
worth running on a fresh install.
"""


import numpy as np


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def check_fast_operators():
    from pilot_ura.pilots import build_pilot_book

    rng = np.random.default_rng(0)
    worst = 0.0
    for N in (8, 16, 32, 64):
        book = build_pilot_book(N, N // 2 + 1, seed=N)
        W = np.exp(-2j * np.pi * np.outer(np.arange(N), np.arange(N)) / N)
        A = W[book.row_subset]
        X = rng.standard_normal((N, 3)) + 1j * rng.standard_normal((N, 3))
        Z = rng.standard_normal((book.n_p, 3)) + 1j * rng.standard_normal((book.n_p, 3))
        worst = max(worst, _rel(book.forward(X), A @ X), _rel(book.adjoint(Z), A.conj().T @ Z))
    return worst <= 1e-9, f"max relative error {worst:.2e}"


def check_lmmse_oracle():
    from pilot_ura.mud import lmmse_estimate
    from pilot_ura.pilots import build_pilot_book

    rng = np.random.default_rng(1)
    book = build_pilot_book(64, 32, seed=3)
    support = np.sort(rng.choice(64, 8, replace=False))
    gamma = rng.uniform(0.5, 2.0, 8)
    N0 = 0.3
    Y = rng.standard_normal((32, 2)) + 1j * rng.standard_normal((32, 2))
    A = book.columns(support)
    # cross-covariance of (h, y) and covariance of y for h ~ CN(0, I)
    C_hy = np.sqrt(gamma)[:, None] * A.conj().T
    C_yy = A @ np.diag(gamma) @ A.conj().T + N0 * np.eye(32)
    oracle = C_hy @ np.linalg.solve(C_yy, Y)
    err = _rel(lmmse_estimate(Y, book, support, gamma, N0).H_hat, oracle)
    return err <= 1e-8, f"relative error {err:.2e}"


def check_collision_arithmetic():
    from pilot_ura.analysis import expected_collisions

    c = expected_collisions(1000, 2**16, 2)
    return abs(c - 7.6218) <= 1e-3, f"E[C2] = {c:.4f}"


def check_normal_approximation():
    from pilot_ura.analysis import normal_approx_rate, required_sinr

    worst = 0.0
    for r in (0.01, 0.1, 0.5):
        worst = max(worst, abs(normal_approx_rate(required_sinr(r, 2048, 0.05), 2048, 0.05) - r))
    median = abs(normal_approx_rate(3.0, 100, 0.5) - 1.0)
    return worst <= 1e-8 and median <= 1e-12, f"round trip {worst:.1e}, median point {median:.1e}"


def check_polar_roundtrip():
    from pilot_ura.polar import construct, encode, scl_decode

    spec = construct(256, 20, 16, 0.5, list_size=8)
    rng = np.random.default_rng(2)
    payload = rng.integers(0, 2, 20, dtype=np.uint8)
    out = scl_decode(spec, 10.0 * (1.0 - 2.0 * encode(spec, payload)))
    ok = len(out.candidates) >= 1 and np.array_equal(out.candidates[0], payload)
    return ok, f"{len(out.candidates)} CRC-valid candidate(s)"


CHECKS = {
    "fast pilot operators vs dense DFT": check_fast_operators,
    "LMMSE vs joint-Gaussian oracle": check_lmmse_oracle,
    "expected two-user collisions": check_collision_arithmetic,
    "normal approximation inverse": check_normal_approximation,
    "polar encode/decode round trip": check_polar_roundtrip,
}


def run_all(verbose=False):
    ok_all = True
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok_all


if __name__ == "__main__":
    raise SystemExit(0 if run_all(verbose=True) else 1)
