"""Random-access realizations and the received pilot/data signals."""

from dataclasses import dataclass

import numpy as np


def crandn(rng, *shape):
    """iid CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def bits_to_int(bits):
    """MSB-first bit rows to integers (last axis)."""
    bits = np.asarray(bits, dtype=np.int64)
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def int_to_bits(value, width):
    return ((int(value) >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8)


@dataclass
class Scene:
    """One random-access realization.

    ``messages`` is a ``(K_a, B)`` uint8 array; the first ``J`` bits of each
    row select the pilot. ``H`` holds one channel row per active user.
    """

    messages: np.ndarray
    pilot_indices: np.ndarray
    H: np.ndarray
    lsfc: np.ndarray
    P_pilot: float
    P_data: float
    N0: float
    J: int

    @property
    def K_a(self):
        return self.messages.shape[0]

    @property
    def M(self):
        return self.H.shape[1]

    @property
    def B(self):
        return self.messages.shape[1]

    @property
    def payloads(self):
        return self.messages[:, self.J:]


def draw_messages(K_a, B, rng):
    """``K_a`` distinct uniformly random ``B``-bit messages."""
    msgs = rng.integers(0, 2, size=(K_a, B), dtype=np.uint8)
    while True:
        _, first = np.unique(msgs, axis=0, return_index=True)
        if first.size == K_a:
            return msgs
        dup = np.setdiff1d(np.arange(K_a), first)
        msgs[dup] = rng.integers(0, 2, size=(dup.size, B), dtype=np.uint8)


def draw_scene(cfg, rng, messages=None):
    """Draw active users, their messages and Rayleigh channels.

    ``cfg`` needs ``K_a, B, J, M, P_pilot, P_data, N0`` and ``lsfc``
    (``None`` for the constant-one model or a length-``K_a`` sequence).
    ``messages`` may be supplied to build collision fixtures.
    """
    if messages is None:
        messages = draw_messages(cfg.K_a, cfg.B, rng)
    messages = np.asarray(messages, dtype=np.uint8)
    K_a = messages.shape[0]
    if cfg.lsfc is None:
        lsfc = np.ones(K_a)
    else:
        lsfc = np.asarray(cfg.lsfc, dtype=float)
        if lsfc.shape != (K_a,) or np.any(lsfc <= 0):
            raise ValueError("lsfc must hold one positive value per active user")
    return Scene(
        messages=messages,
        pilot_indices=bits_to_int(messages[:, : cfg.J]),
        H=crandn(rng, K_a, cfg.M),
        lsfc=lsfc,
        P_pilot=float(cfg.P_pilot),
        P_data=float(cfg.P_data),
        N0=float(cfg.N0),
        J=int(cfg.J),
    )


def emit_pilot_signal(scene, book, rng):
    """``Y_p = A Gamma^{1/2} H + Z_p``; colliding users add on one column."""
    if scene.pilot_indices.size and scene.pilot_indices.max() >= book.N:
        raise ValueError("pilot index outside the pilot pool")
    A_act = book.columns(scene.pilot_indices)
    amp = np.sqrt(scene.P_pilot * scene.lsfc)
    Y = A_act @ (amp[:, None] * scene.H)
    if scene.N0 > 0:
        Y = Y + np.sqrt(scene.N0) * crandn(rng, book.n_p, scene.M)
    return Y


def emit_data_signal(scene, symbols, rng):
    """``Y_d = sum_k sqrt(P_data g_k) s_k h_k + Z_d`` with ``symbols`` ``(K_a, n_d)``."""
    symbols = np.asarray(symbols)
    if symbols.ndim != 2 or symbols.shape[0] != scene.K_a:
        raise ValueError(f"symbols must have shape ({scene.K_a}, n_d), got {symbols.shape}")
    n_d = symbols.shape[1]
    amp = np.sqrt(scene.P_data * scene.lsfc)
    Y = symbols.T @ (amp[:, None] * scene.H)
    if scene.N0 > 0:
        Y = Y + np.sqrt(scene.N0) * crandn(rng, n_d, scene.M)
    return Y
