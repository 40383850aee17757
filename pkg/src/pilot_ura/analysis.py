"""Closed-form performance prediction for pilot + MRC unsourced random access.

Everything here assumes error-free activity detection and LSFC knowledge,
so the predicted energy efficiency is a lower bound on what the simulated
receiver needs.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, erfcinv, gammaln

LOG2E = math.log2(math.e)


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def qfunc(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def qinv(p):
    return math.sqrt(2.0) * float(erfcinv(2.0 * p))


def ortho_mse(n_p, P, g, N0):
    """Channel-estimation MSE with orthogonal pilots, a lower bound on the LMMSE MSE."""
    return N0 / (N0 + n_p * P * g)


def sinr_mrc(M, sigma_sq, g_k, P, N0, interference_sum):
    """Effective post-MRC SINR of one user with imperfect CSI.

    ``interference_sum`` is ``sum_{j != k} g_j P``.
    """
    denom = N0 + sigma_sq * g_k * P + interference_sum
    if denom == 0:
        return math.inf
    return M * (1.0 - sigma_sq) * g_k * P / denom


def dispersion(sinr):
    """Real-AWGN channel dispersion in bits^2."""
    return 0.5 * sinr * (sinr + 2.0) / (sinr + 1.0) ** 2 * LOG2E**2


def _raw_rate(sinr, n_d, p_e):
    return 0.5 * math.log2(1.0 + sinr) - math.sqrt(dispersion(sinr) / (2.0 * n_d)) * qinv(p_e)


def normal_approx_rate(sinr, n_d, p_e):
    """Normal-approximation rate (bits per real channel use) over ``2 n_d`` real uses.

    Clamped at 0 when the dispersion penalty exceeds capacity; use
    :func:`rate_clamped` to see whether that happened.
    """
    return max(_raw_rate(sinr, n_d, p_e), 0.0)


def rate_clamped(sinr, n_d, p_e):
    return _raw_rate(sinr, n_d, p_e) <= 0.0


def required_sinr(rate, n_d, p_e, lo=1e-9, hi=1e6):
    """Smallest SINR whose normal-approximation rate reaches ``rate``."""
    if rate <= 0:
        raise ValueError("target rate must be positive")
    if _raw_rate(hi, n_d, p_e) < rate:
        raise ValueError(f"rate {rate} unreachable below SINR {hi}")
    # the raw rate dips below zero near sinr=0 and is increasing wherever it is positive,
    # so the positive crossing is unique
    return brentq(lambda s: _raw_rate(s, n_d, p_e) - rate, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=500)


def expected_collisions(K_a, N, k=2):
    """Mean number of pilots chosen by exactly ``k`` users (``binom(K_a, k) / N**(k-1)``)."""
    if k < 2:
        raise ValueError("collision order must be at least 2")
    if K_a < k:
        return 0.0
    logc = gammaln(K_a + 1) - gammaln(k + 1) - gammaln(K_a - k + 1)
    return float(np.exp(logc - (k - 1) * math.log(N)))


def collision_loss(K_a, N):
    """Per-user error rate if every two-user collision loses both messages."""
    return 2.0 * expected_collisions(K_a, N, 2) / K_a


@lru_cache(maxsize=256)
def gram_spectra(K_a, n_p, N, draws=10, seed=0):
    """Eigenvalues of ``A_I^H A_I`` for random sub-sampled DFT pilots.

    One independent pilot book and ``K_a`` distinct active columns per draw.
    Returned as a read-only ``(draws, K_a)`` array.
    """
    from pilot_ura.pilots import build_pilot_book

    rng = np.random.default_rng(seed)
    out = np.empty((draws, K_a))
    for d in range(draws):
        book = build_pilot_book(N, n_p, seed=int(rng.integers(2**63)))
        cols = rng.choice(N, size=K_a, replace=False)
        out[d] = np.linalg.eigvalsh(book.gram(cols))
    out.setflags(write=False)
    return out


def lmmse_mse_from_spectra(spectra, P, N0):
    """Per-draw mean of ``diag(C_e)`` for equal received powers ``P``.

    With ``Gamma = P I`` the error covariance is ``(I + (P/N0) G)^{-1}``, so the
    mean diagonal is the mean of ``1 / (1 + P lambda_j / N0)``.
    """
    lam = np.clip(spectra, 0.0, None)
    return np.mean(1.0 / (1.0 + (P / N0) * lam), axis=-1)


@dataclass
class AnalysisPoint:
    K_a: int
    M: int
    n_p: int
    n_d: int
    B: int
    J: int
    N0: float
    g: float
    mse_model: str
    P: float
    sigma_sq: float
    sinr: float
    rate: float
    p_e: float
    ebn0_db: float
    sigma_sq_spread: float = 0.0

    @property
    def n(self):
        return self.n_p + self.n_d

    @property
    def feasible(self):
        return math.isfinite(self.ebn0_db)


def ebn0_from_power(P, n_p, n_d, B, N0, P_data=None):
    """Energy per information bit over N0, in linear scale."""
    P_data = P if P_data is None else P_data
    return (n_p * P + n_d * P_data) / (B * N0)


def power_from_ebn0_db(ebn0_db, n_p, n_d, B, N0=1.0):
    return float(db2lin(ebn0_db)) * B * N0 / (n_p + n_d)


def analysis_point(K_a, M, n_p, n_d, B, J, p_e=0.05, mse_model="lmmse",
                   collision_adjust=True, N0=1.0, g=1.0, draws=10, seed=0):
    """Minimum per-user power meeting the normal-approximation target.

    Target rate is ``(B - J) / (2 n_d)`` per real channel use. With
    ``collision_adjust`` the error budget is reduced by the pessimistic
    two-user collision loss. Infeasible points come back with
    ``ebn0_db = inf``.
    """
    if mse_model not in ("ortho", "lmmse"):
        raise ValueError(f"unknown mse_model {mse_model!r}")
    N = 2**J
    p_eff = p_e - (collision_loss(K_a, N) if collision_adjust else 0.0)
    if p_eff <= 0:
        raise ValueError(
            f"collision loss {collision_loss(K_a, N):.4f} exhausts the error budget {p_e}"
        )
    rate = (B - J) / (2.0 * n_d)
    target = required_sinr(rate, n_d, p_eff)

    if mse_model == "lmmse":
        spectra = gram_spectra(K_a, n_p, N, draws, seed)

        def mse(P):
            return float(np.mean(lmmse_mse_from_spectra(spectra, g * P, N0)))
    else:
        spectra = None

        def mse(P):
            return ortho_mse(n_p, P, g, N0)

    def sinr(P):
        return sinr_mrc(M, mse(P), g, P, N0, (K_a - 1) * g * P)

    # smallest crossing: coarse log scan then bisection inside the first bracket
    grid = N0 * np.logspace(-8, 6, 281)
    vals = np.array([sinr(P) for P in grid])
    hit = np.flatnonzero(vals >= target)
    if hit.size == 0:
        P = math.inf
        s2 = 0.0
        s = float(vals[-1])
    else:
        i = hit[0]
        if i == 0:
            P = float(grid[0])
        else:
            lo, hi = math.log(grid[i - 1]), math.log(grid[i])
            while hi - lo > 1e-12:
                mid = 0.5 * (lo + hi)
                if sinr(math.exp(mid)) >= target:
                    hi = mid
                else:
                    lo = mid
            P = math.exp(hi)
        s2 = mse(P)
        s = sinr(P)
    spread = 0.0
    if spectra is not None and math.isfinite(P):
        per_draw = lmmse_mse_from_spectra(spectra, g * P, N0)
        spread = float(per_draw.max() - per_draw.min())
    ebn0 = ebn0_from_power(P, n_p, n_d, B, N0) if math.isfinite(P) else math.inf
    return AnalysisPoint(
        K_a=K_a, M=M, n_p=n_p, n_d=n_d, B=B, J=J, N0=N0, g=g, mse_model=mse_model,
        P=P, sigma_sq=s2, sinr=s, rate=rate, p_e=p_eff,
        ebn0_db=float(lin2db(ebn0)) if math.isfinite(ebn0) else math.inf,
        sigma_sq_spread=spread,
    )


def required_ebn0(K_a, M, n_p, n_d, B, J, p_e=0.05, mse_model="lmmse",
                  collision_adjust=True, **kw):
    """Required Eb/N0 in dB (``inf`` if no power reaches the target SINR)."""
    return analysis_point(K_a, M, n_p, n_d, B, J, p_e, mse_model, collision_adjust, **kw).ebn0_db


def sweep(K_a_grid, M_grid, n_p, n_d, B, J, p_e=0.05, mse_models=("lmmse", "ortho"),
          collision_adjust=True, **kw):
    """Analysis points over a ``K_a x M x mse_model`` grid."""
    return [
        analysis_point(K_a, M, n_p, n_d, B, J, p_e, model, collision_adjust, **kw)
        for model in mse_models
        for M in M_grid
        for K_a in K_a_grid
    ]


CURVE_COLUMNS = ("K_a", "M", "mse_model", "P_lin", "P_db", "ebn0_db", "sinr", "sigma_sq", "rate_target")


def curve_rows(points):
    for pt in points:
        yield {
            "K_a": pt.K_a,
            "M": pt.M,
            "mse_model": pt.mse_model,
            "P_lin": pt.P,
            "P_db": float(lin2db(pt.P)) if math.isfinite(pt.P) else math.inf,
            "ebn0_db": pt.ebn0_db,
            "sinr": pt.sinr,
            "sigma_sq": pt.sigma_sq,
            "rate_target": pt.rate,
        }


# --- two-user collision model ------------------------------------------------

def collision_model_trial(M, snr, sigma_est_sq, n_d, spec, rng, payloads=None, demapper="pair"):
    """One draw of the two-user pilot-collision model with MRC and list decoding.

    Both users share the channel estimate ``h1 + h2 + e``; the combined
    sequence is demodulated once and the resulting SCL candidate list is
    checked for each payload. ``demapper="pair"`` computes the bit LLRs of
    the two-user superposition, ``"single"`` the plain Gaussian QPSK LLRs.
    Returns ``"both"``, ``"one"`` or ``"none"``.
    """
    # local imports: mud depends on this module
    from pilot_ura.channel import crandn, draw_messages
    from pilot_ura.mud import qpsk_llr, qpsk_llr_pair, qpsk_modulate
    from pilot_ura.polar import encode, scl_decode

    demap = {"pair": qpsk_llr_pair, "single": qpsk_llr}[demapper]

    if spec.block_length != 2 * n_d:
        raise ValueError("code length must equal 2 n_d")
    if payloads is None:
        payloads = draw_messages(2, spec.payload_bits, rng)
    s = np.array([qpsk_modulate(encode(spec, p)) for p in payloads])
    h = crandn(rng, 2, M)
    e = math.sqrt(sigma_est_sq) * crandn(rng, M) if sigma_est_sq > 0 else np.zeros(M)
    h_est = h[0] + h[1] + e
    Z = crandn(rng, M, n_d)
    rx = math.sqrt(snr) * (np.outer(h[0], s[0]) + np.outer(h[1], s[1])) + Z
    s_hat = (h_est.conj() @ rx) / M
    # residual variance around sqrt(snr)(s1 + s2), normalized by sqrt(snr)
    noise_var = (2.0 + sigma_est_sq) * (1.0 / snr + 2.0) / M
    out = scl_decode(spec, demap(s_hat / math.sqrt(snr), noise_var))
    found = {c.tobytes() for c in out.candidates}
    hits = sum(np.asarray(p, dtype=np.uint8).tobytes() in found for p in payloads)
    return ("none", "one", "both")[hits]


def collision_sweep(M, snr_db, sigma_est_db, n_d, spec, trials, seed=0, demapper="pair"):
    """Fractions of both/one/none recovered per estimation-error level."""
    rows = []
    snr = float(db2lin(snr_db))
    for i, s_db in enumerate(sigma_est_db):
        rng = np.random.default_rng([seed, i])
        counts = {"both": 0, "one": 0, "none": 0}
        for _ in range(trials):
            counts[collision_model_trial(M, snr, float(db2lin(s_db)), n_d, spec, rng, demapper=demapper)] += 1
        rows.append({"sigma_est_db": float(s_db), "trials": trials,
                     **{k: v / trials for k, v in counts.items()}})
    return rows
