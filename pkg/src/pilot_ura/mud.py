"""Multiuser detection: LMMSE channel estimation, MRC and QPSK soft demapping."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from pilot_ura.analysis import sinr_mrc

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


def qpsk_modulate(bits):
    """Gray QPSK, bit pair ``(b0, b1)`` -> ``((1-2 b0) + j (1-2 b1)) / sqrt 2``."""
    b = np.asarray(bits, dtype=np.float64)
    b = b.reshape(b.shape[:-1] + (-1, 2))
    return ((1.0 - 2.0 * b[..., 0]) + 1j * (1.0 - 2.0 * b[..., 1])) / SQRT2


def qpsk_llr(s_hat, noise_var):
    """Bit LLRs (positive favours 0) for unit-amplitude Gray QPSK in CN(0, noise_var)."""
    s_hat = np.asarray(s_hat)
    scale = 2.0 * SQRT2 / noise_var
    out = np.empty(s_hat.shape[:-1] + (2 * s_hat.shape[-1],))
    out[..., 0::2] = scale * s_hat.real
    out[..., 1::2] = scale * s_hat.imag
    return out


def qpsk_llr_pair(s_hat, noise_var):
    """Bit LLRs of one user when ``s_hat = s_1 + s_2 + noise``.

    The other user's Gray-QPSK symbol is marginalized as uniform and unknown,
    so positions where the two users disagree come out as near-erasures
    instead of leaning toward the stronger user.
    """
    s_hat = np.asarray(s_hat)
    a = 1.0 / SQRT2
    var = noise_var / 2.0
    y = np.empty(s_hat.shape[:-1] + (2 * s_hat.shape[-1],))
    y[..., 0::2] = s_hat.real
    y[..., 1::2] = s_hat.imag

    def loglik(d):
        return -(d * d) / (2.0 * var)

    return np.logaddexp(loglik(y - 2 * a), loglik(y)) - np.logaddexp(loglik(y + 2 * a), loglik(y))


@dataclass
class ChannelEstimate:
    H_hat: np.ndarray
    support: np.ndarray
    mse_diag: np.ndarray = field(default=None)


@dataclass
class SoftSequences:
    S_hat: np.ndarray
    llrs: np.ndarray
    sinr: np.ndarray
    excluded: np.ndarray


def _weighted_gram(book, support, gamma, N0):
    G = book.gram(support)
    sq = np.sqrt(gamma)
    return sq[:, None] * G * sq[None, :] + N0 * np.eye(len(support))


def lmmse_estimate(Y_p, book, support, gamma_hat, N0, with_mse=True):
    """LMMSE estimate of the channel rows on ``support``.

    ``gamma_hat`` holds the received pilot powers ``P_pilot * g`` of the
    detected pilots (aligned with ``support``). Solved in the equivalent
    ``|I| x |I|`` form ``(B^H B + N0 I)^{-1} B^H Y_p`` with
    ``B = A_I Gamma^{1/2}`` when ``|I| <= n_p``, otherwise over ``n_p x n_p``.
    """
    support = np.asarray(support, dtype=np.int64)
    gamma = np.asarray(gamma_hat, dtype=float)
    if gamma.shape != support.shape:
        raise ValueError("gamma_hat must align with support")
    if np.any(gamma <= 0):
        raise ValueError("gamma_hat must be positive on the support")
    K = support.size
    M = Y_p.shape[1]
    if K == 0:
        return ChannelEstimate(np.zeros((0, M), complex), support, np.zeros(0))
    if K > book.n_p:
        log.warning("support size %d exceeds pilot length %d", K, book.n_p)
        return _lmmse_np_form(Y_p, book, support, gamma, N0, with_mse)
    sq = np.sqrt(gamma)
    AhY = book.adjoint(Y_p)[support]
    c = cho_factor(_weighted_gram(book, support, gamma, N0))
    H_hat = cho_solve(c, sq[:, None] * AhY)
    mse = None
    if with_mse:
        mse = (N0 * np.diag(cho_solve(c, np.eye(K)))).real
    return ChannelEstimate(H_hat, support, mse)


def _lmmse_np_form(Y_p, book, support, gamma, N0, with_mse=True):
    A = book.columns(support)
    B = A * np.sqrt(gamma)[None, :]
    c = cho_factor(B @ B.conj().T + N0 * np.eye(book.n_p))
    H_hat = B.conj().T @ cho_solve(c, Y_p)
    mse = None
    if with_mse:
        mse = 1.0 - np.einsum("ij,ji->i", B.conj().T, cho_solve(c, B)).real
    return ChannelEstimate(H_hat, support, mse)


def error_covariance(book, support, gamma, N0):
    """Channel-estimation error covariance ``C_e`` of the LMMSE estimate on ``support``.

    Equals ``I - B^H (B B^H + N0 I)^{-1} B = N0 (B^H B + N0 I)^{-1}``.
    """
    support = np.asarray(support, dtype=np.int64)
    gamma = np.asarray(gamma, dtype=float)
    K = support.size
    if K > book.n_p or N0 <= 0:
        B = book.columns(support) * np.sqrt(gamma)[None, :]
        inner = B @ B.conj().T + N0 * np.eye(book.n_p)
        return np.eye(K) - B.conj().T @ np.linalg.solve(inner, B)
    c = cho_factor(_weighted_gram(book, support, gamma, N0))
    return N0 * cho_solve(c, np.eye(K))


def mrc_detect(Y_d, est, gamma_hat, *, P_pilot, P_data, N0, noise_model="analytic"):
    """MRC combining and QPSK demapping for every detected pilot.

    Row ``k`` of ``S_hat`` is ``conj(h_hat_k) Y_d^T`` scaled by
    ``1 / (M (1 - sigma_k^2) sqrt(P_data g_k))`` so its signal part has unit
    mean amplitude; ``g_k = gamma_hat_k / P_pilot``. LLRs use a noise
    variance of ``1 / SINR_k`` from the post-MRC SINR approximation
    (``noise_model="analytic"``) or the decision-directed residual of the
    row (``"empirical"``). Rows with ``gamma_hat <= 0`` are excluded and
    get zero LLRs.
    """
    n_d, M = Y_d.shape
    gamma = np.asarray(gamma_hat, dtype=float)
    K = est.H_hat.shape[0]
    sigma_sq = np.zeros(K) if est.mse_diag is None else np.clip(est.mse_diag, 0.0, 1.0)
    excluded = gamma <= 0
    g = np.where(excluded, 0.0, gamma / P_pilot)

    raw = est.H_hat.conj() @ Y_d.T
    norm = M * (1.0 - sigma_sq) * np.sqrt(P_data * g)
    ok = ~excluded & (norm > 0)
    S_hat = np.zeros_like(raw)
    S_hat[ok] = raw[ok] / norm[ok, None]

    total = np.sum(g) * P_data
    sinr = np.zeros(K)
    for k in np.flatnonzero(ok):
        sinr[k] = sinr_mrc(M, sigma_sq[k], g[k], P_data, N0, total - g[k] * P_data)
    if noise_model == "analytic":
        # floor keeps noiseless links at large finite LLRs
        noise_var = np.where(sinr > 0, np.maximum(1.0 / np.maximum(sinr, 1e-300), 1e-12), np.inf)
    elif noise_model == "empirical":
        hard = (np.sign(S_hat.real) + 1j * np.sign(S_hat.imag)) / SQRT2
        noise_var = np.mean(np.abs(S_hat - hard) ** 2, axis=1)
        noise_var = np.maximum(noise_var, 1e-12)
    else:
        raise ValueError(f"unknown noise model {noise_model!r}")
    llrs = np.zeros((K, 2 * n_d))
    for k in np.flatnonzero(ok & np.isfinite(noise_var)):
        llrs[k] = qpsk_llr(S_hat[k], noise_var[k])
    if excluded.any():
        log.debug("excluded %d rows with non-positive power", int(excluded.sum()))
    return SoftSequences(S_hat=S_hat, llrs=llrs, sinr=sinr, excluded=excluded)
