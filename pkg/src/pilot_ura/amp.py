"""MMV-AMP activity detection over the pilot pool.

Recovers the row-sparse ``X = Gamma^{1/2} H`` from ``Y_p = A X + Z_p``.
Iterations run on the unit-column normalization ``A / sqrt(n_p)`` (so the
usual state evolution applies) and every product with the pilot matrix goes
through the pool's ``forward``/``adjoint`` operators.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from pilot_ura.errors import ConfigError


@dataclass
class AmpConfig:
    """``sparsity`` is the prior activity fraction, ``prior_power`` the received
    per-antenna power ``P_pilot * g`` of an active row. Exactly one of
    ``known_Ka`` and ``threshold`` selects the support."""

    sparsity: float
    prior_power: float
    known_Ka: int = None
    threshold: float = None
    max_iters: int = 50
    damping: float = 0.7
    tol: float = 1e-6
    divergence_factor: float = 1e3

    def __post_init__(self):
        if (self.known_Ka is None) == (self.threshold is None):
            raise ConfigError("set exactly one of known_Ka / threshold")
        if not 0.0 < self.sparsity < 1.0:
            raise ConfigError(f"sparsity {self.sparsity} must lie in (0, 1)")
        if self.prior_power <= 0:
            raise ConfigError("prior_power must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping {self.damping} must lie in (0, 1]")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be positive")


@dataclass
class AmpResult:
    X_hat: np.ndarray
    gamma_hat: np.ndarray
    support: np.ndarray
    tau_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False


def row_denoiser(R, tau2, prior_power, sparsity):
    """Bayesian MMSE row denoiser for a Bernoulli-Gaussian row prior.

    Returns ``(phi, shrink)`` with the posterior activity ``phi`` per row and
    the scalar Wiener factor ``shrink``; the estimate is ``phi * shrink * r``.
    """
    M = R.shape[1]
    shrink = prior_power / (prior_power + tau2)
    energy = np.sum(np.abs(R) ** 2, axis=1)
    logit = (
        math.log(sparsity / (1.0 - sparsity))
        - M * math.log1p(prior_power / tau2)
        + energy * prior_power / (tau2 * (prior_power + tau2))
    )
    return expit(logit), shrink


def select_support(gamma_hat, known_Ka=None, threshold=None):
    """K_a largest powers (ties to the lower index) or thresholding."""
    gamma_hat = np.asarray(gamma_hat)
    if known_Ka is not None:
        idx = np.arange(gamma_hat.size)
        order = np.lexsort((idx, -gamma_hat))
        return np.sort(order[: int(known_Ka)])
    return np.flatnonzero(gamma_hat > threshold)


def support_f1(detected, truth):
    detected, truth = set(np.asarray(detected).tolist()), set(np.asarray(truth).tolist())
    if not detected and not truth:
        return 1.0
    hits = len(detected & truth)
    return 2.0 * hits / (len(detected) + len(truth))


def amp_step(Y, X, R, tau2, forward, adjoint, n_p, N, prior, sparsity, damping):
    """One damped MMV-AMP iteration on the unit-column scaling.

    ``forward``/``adjoint`` are the products with the unit-column matrix.
    Returns ``(X_new, R_new, tau2_new)``.
    """
    pseudo = X + adjoint(R)
    phi, shrink = row_denoiser(pseudo, tau2, prior, sparsity)
    X_new = (phi * shrink)[:, None] * pseudo
    # scalar derivative approximation: ignores how phi varies with the row energy
    onsager = (N / n_p) * float(np.mean(phi)) * shrink
    X_new = damping * X_new + (1.0 - damping) * X
    R_new = Y - forward(X_new) + onsager * R
    tau2_new = float(np.sum(np.abs(R_new) ** 2)) / R_new.size
    return X_new, R_new, tau2_new


def run_mmv_amp(Y_p, book, cfg, true_support=None, trace_csv=None):
    """Run MMV-AMP and pick the active pilots.

    ``book`` is anything with ``forward``, ``adjoint``, ``n_p`` and ``N``.
    ``gamma_hat`` estimates the received pilot power ``||x_k||^2 / M`` of each
    pool entry. Divergence (residual power beyond ``divergence_factor``
    times the initial one) stops the iterations and sets ``diverged``.
    When ``trace_csv`` is given a per-iteration diagnostic table is written
    there (support F1 needs ``true_support``).
    """
    Y = np.asarray(Y_p, dtype=complex)
    n_p, N = book.n_p, book.N
    if Y.ndim != 2 or Y.shape[0] != n_p:
        raise ValueError(f"Y_p must have shape ({n_p}, M), got {Y.shape}")
    M = Y.shape[1]
    scale = math.sqrt(n_p)

    def fwd(X):
        return book.forward(X) / scale

    def adj(R):
        return book.adjoint(R) / scale

    prior = n_p * cfg.prior_power
    X = np.zeros((N, M), dtype=complex)
    R = Y.copy()
    tau2 = float(np.sum(np.abs(R) ** 2)) / R.size
    tau0 = tau2
    trace = [tau2]
    rows = []
    converged = diverged = False
    it = 0
    floor = 1e-30 * max(prior, 1.0)
    while it < cfg.max_iters and tau2 > 0:
        it += 1
        X_new, R, tau2_new = amp_step(
            Y, X, R, max(tau2, floor), fwd, adj, n_p, N, prior, cfg.sparsity, cfg.damping
        )
        change = np.linalg.norm(X_new - X)
        base = np.linalg.norm(X)
        X, tau2 = X_new, tau2_new
        trace.append(tau2)
        if trace_csv is not None:
            g_it = np.sum(np.abs(X) ** 2, axis=1) / (n_p * M)
            f1 = ""
            if true_support is not None:
                f1 = support_f1(select_support(g_it, cfg.known_Ka, cfg.threshold), true_support)
            rows.append((it, tau2, f1))
        if tau2 > cfg.divergence_factor * tau0:
            diverged = True
            break
        if base > 0 and change / base < cfg.tol:
            converged = True
            break
    if tau2 == 0:
        converged = True

    X_hat = X / scale
    gamma_hat = np.sum(np.abs(X_hat) ** 2, axis=1) / M
    support = select_support(gamma_hat, cfg.known_Ka, cfg.threshold)
    if trace_csv is not None:
        with open(trace_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "tau2", "support_f1"])
            w.writerows(rows)
    return AmpResult(X_hat=X_hat, gamma_hat=gamma_hat, support=support, tau_trace=trace,
                     iterations=it, converged=converged, diverged=diverged)
