"""Sub-sampled DFT pilot pool with FFT-based forward and adjoint products.

The pool is ``n_p`` rows of the ``N x N`` DFT matrix ``W[i, j] = w**(i*j)``
with ``w = exp(-2j*pi/N)``. Every column therefore has squared norm ``n_p``.
"""

from dataclasses import dataclass, field

import numpy as np

from pilot_ura.errors import ConfigError


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PilotBook:
    """Pilot pool of size ``N`` with pilot length ``n_p``.

    Only ``(N, n_p, seed)`` define the book; ``row_subset`` is redrawn
    deterministically from the seed.
    """

    N: int
    n_p: int
    seed: int
    row_subset: np.ndarray = field(repr=False, compare=False)

    @property
    def J(self):
        return int(self.N).bit_length() - 1

    def forward(self, X):
        """Return ``A @ X`` for ``X`` of shape ``(N,)`` or ``(N, M)``."""
        X = np.asarray(X)
        if X.shape[0] != self.N:
            raise ValueError(f"forward expects {self.N} rows, got {X.shape[0]}")
        return np.fft.fft(X, axis=0)[self.row_subset]

    def adjoint(self, Z):
        """Return ``A^H @ Z`` for ``Z`` of shape ``(n_p,)`` or ``(n_p, M)``."""
        Z = np.asarray(Z)
        if Z.shape[0] != self.n_p:
            raise ValueError(f"adjoint expects {self.n_p} rows, got {Z.shape[0]}")
        full = np.zeros((self.N,) + Z.shape[1:], dtype=complex)
        full[self.row_subset] = Z
        # unscaled inverse DFT == N * ifft
        return self.N * np.fft.ifft(full, axis=0)

    def columns(self, idx):
        """Dense ``n_p x len(idx)`` sub-matrix ``A[:, idx]``."""
        idx = np.asarray(idx, dtype=np.int64)
        phase = np.outer(self.row_subset, idx) % self.N
        return np.exp(-2j * np.pi * phase / self.N)

    def dense(self):
        return self.columns(np.arange(self.N))

    def gram(self, idx):
        """``A_I^H A_I`` via the circulant structure of the sub-sampled DFT."""
        idx = np.asarray(idx, dtype=np.int64)
        mask = np.zeros(self.N)
        mask[self.row_subset] = 1.0
        # G[a, b] = sum_s w**(s*(b - a)) = c[(b - a) mod N]
        c = np.fft.fft(mask)
        return c[(idx[None, :] - idx[:, None]) % self.N]


def build_pilot_book(N, n_p, seed):
    """Draw ``n_p`` distinct DFT rows uniformly at random.

    >>> book = build_pilot_book(8, 8, seed=0)
    >>> sorted(book.row_subset.tolist())
    [0, 1, 2, 3, 4, 5, 6, 7]
    """
    N, n_p = int(N), int(n_p)
    if not _is_pow2(N):
        raise ConfigError(f"pilot pool size N={N} must be a power of two")
    if not 0 < n_p <= N:
        raise ConfigError(f"pilot length n_p={n_p} must be in [1, N={N}]")
    rng = np.random.default_rng(seed)
    rows = rng.permutation(N)[:n_p]
    rows.setflags(write=False)
    return PilotBook(N=N, n_p=n_p, seed=seed, row_subset=rows)


class DensePilots:
    """Explicit-matrix stand-in for :class:`PilotBook`.

    Used as a test oracle (e.g. Gaussian pilots, or the dense DFT sub-matrix)
    for anything that only needs ``forward``/``adjoint``/``columns``.
    """

    def __init__(self, A):
        self.A = np.asarray(A, dtype=complex)
        self.n_p, self.N = self.A.shape

    def forward(self, X):
        return self.A @ X

    def adjoint(self, Z):
        return self.A.conj().T @ Z

    def columns(self, idx):
        return self.A[:, np.asarray(idx, dtype=np.int64)]

    def dense(self):
        return self.A

    def gram(self, idx):
        B = self.columns(idx)
        return B.conj().T @ B
