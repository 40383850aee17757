"""CRC-aided polar codes with successive-cancellation list decoding.

Encoding is ``x = u F^{(x)n}`` in natural bit order with
``F = [[1, 0], [1, 1]]``. The frozen set comes from the Bhattacharyya
recursion; the decoder is LLR based and returns every CRC-valid path,
which is what lets two colliding users be recovered from one sequence.
LLR convention: positive means bit 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from pilot_ura.errors import ConfigError

CRC16_CCITT = 0x1021
LLR_CLIP = 1e6


def crc_bits(bits, poly=CRC16_CCITT, width=16):
    """Bit-serial CRC (zero initial state, MSB first, no final xor)."""
    reg = 0
    top = 1 << (width - 1)
    mask = (1 << width) - 1
    for b in np.asarray(bits, dtype=np.uint8):
        fb = ((reg & top) != 0) ^ int(b)
        reg = (reg << 1) & mask
        if fb:
            reg ^= poly
    return ((reg >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8)


def _crc_matrix(k, poly, width):
    # the CRC is linear with zero init: crc(b) = b @ G over GF(2)
    eye = np.eye(k, dtype=np.uint8)
    return np.array([crc_bits(row, poly, width) for row in eye], dtype=np.uint8).reshape(k, width)


def bhattacharyya(n_stages, z0):
    """log Bhattacharyya parameters of all ``2**n_stages`` synthetic channels.

    Index bits are read MSB first: bit 0 applies ``2Z - Z^2``, bit 1 ``Z^2``.
    """
    logz = np.array([math.log(z0)])
    for _ in range(n_stages):
        # log(2Z - Z^2) = log Z + log1p(1 - Z), with 1 - Z taken from expm1 for accuracy near Z = 1
        worse = np.minimum(logz + np.log1p(-np.expm1(logz)), 0.0)
        better = 2.0 * logz
        logz = np.stack([worse, better], axis=1).ravel()
    return logz


@dataclass(frozen=True)
class PolarCodeSpec:
    block_length: int
    payload_bits: int
    crc_bits: int
    list_size: int
    design_parameter: float
    frozen_set: np.ndarray = field(repr=False, compare=False)
    info_set: np.ndarray = field(repr=False, compare=False)
    frozen_mask: np.ndarray = field(repr=False, compare=False)
    crc_matrix: np.ndarray = field(repr=False, compare=False)
    crc_poly: int = CRC16_CCITT
    minsum: bool = False

    @property
    def n_stages(self):
        return self.block_length.bit_length() - 1

    @property
    def k_info(self):
        return self.payload_bits + self.crc_bits

    @property
    def rate(self):
        return self.payload_bits / self.block_length


def design_z0(design_snr):
    """Bhattacharyya parameter of BPSK on AWGN at per-bit ``Es/N0 = design_snr`` (linear)."""
    return math.exp(-design_snr)


def construct(block_length, payload_bits, crc_bits=16, design_parameter=0.5,
              list_size=32, crc_poly=CRC16_CCITT, minsum=False):
    """Build a polar code; ``design_parameter`` is the initial Bhattacharyya ``Z0``.

    The ``block_length - payload_bits - crc_bits`` channels with the largest
    Bhattacharyya parameter are frozen (ties freeze the lower index).
    """
    N = int(block_length)
    k = int(payload_bits) + int(crc_bits)
    if N < 2 or N & (N - 1):
        raise ConfigError(f"block length {N} must be a power of two >= 2")
    if payload_bits < 1 or crc_bits < 0 or k >= N:
        raise ConfigError(f"need 0 < payload + crc < block length, got {payload_bits}+{crc_bits}/{N}")
    if not 0.0 < design_parameter < 1.0:
        raise ConfigError(f"design parameter Z0={design_parameter} must lie in (0, 1)")
    if list_size < 1:
        raise ConfigError("list size must be positive")
    logz = bhattacharyya(N.bit_length() - 1, design_parameter)
    # descending Z; stable so equal Z keeps ascending index order
    order = np.argsort(-logz, kind="stable")
    frozen = np.sort(order[: N - k])
    info = np.sort(order[N - k:])
    mask = np.zeros(N, dtype=np.bool_)
    mask[frozen] = True
    for arr in (frozen, info, mask):
        arr.setflags(write=False)
    G = _crc_matrix(int(payload_bits), crc_poly, int(crc_bits)) if crc_bits else np.zeros((payload_bits, 0), np.uint8)
    G.setflags(write=False)
    return PolarCodeSpec(
        block_length=N, payload_bits=int(payload_bits), crc_bits=int(crc_bits),
        list_size=int(list_size), design_parameter=float(design_parameter),
        frozen_set=frozen, info_set=info, frozen_mask=mask, crc_matrix=G,
        crc_poly=crc_poly, minsum=minsum,
    )


def polar_transform(u):
    """``u F^{(x)n}`` over GF(2); the transform is its own inverse."""
    x = np.array(u, dtype=np.uint8)
    N = x.shape[-1]
    h = 1
    while h < N:
        v = x.reshape(x.shape[:-1] + (N // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def attach_crc(spec, payload):
    payload = np.asarray(payload, dtype=np.uint8)
    crc = (payload.astype(np.int64) @ spec.crc_matrix) % 2
    return np.concatenate([payload, crc.astype(np.uint8)], axis=-1)


def crc_ok(spec, info_bits):
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    k = spec.payload_bits
    crc = (info_bits[..., :k].astype(np.int64) @ spec.crc_matrix) % 2
    return np.all(crc == info_bits[..., k:], axis=-1)


def encode(spec, payload):
    """Payload bits (``payload_bits``) to a codeword of ``block_length`` bits."""
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.shape[-1] != spec.payload_bits:
        raise ValueError(f"payload must have {spec.payload_bits} bits, got {payload.shape[-1]}")
    u = np.zeros(payload.shape[:-1] + (spec.block_length,), dtype=np.uint8)
    u[..., spec.info_set] = attach_crc(spec, payload)
    return polar_transform(u)


# --- SCL kernel ----------------------------------------------------------------

@njit(cache=True, inline="always")
def _f(a, b, minsum):
    m = min(abs(a), abs(b))
    s = m if (a >= 0) == (b >= 0) else -m
    if minsum:
        return s
    return s + math.log1p(math.exp(-abs(a + b))) - math.log1p(math.exp(-abs(a - b)))


@njit(cache=True, inline="always")
def _penalty(llr, bit, minsum):
    # -log P(bit | llr); zero when bit agrees with the hard decision (min-sum)
    x = llr if bit == 0 else -llr
    if minsum:
        return -x if x < 0 else 0.0
    if x > 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


@njit(cache=True)
def _compute_llrs(P, C, l, ch, phi, n, start, minsum):
    N = 1 << n
    for lam in range(start, n + 1):
        half = N >> lam
        off = N - (N >> (lam - 1))
        poff = N - (N >> (lam - 2)) if lam >= 2 else 0
        right = lam == start and phi != 0
        for b in range(half):
            if lam == 1:
                a = ch[b]
                c = ch[b + half]
            else:
                a = P[l, poff + b]
                c = P[l, poff + b + half]
            if right:
                P[l, off + b] = c + a if C[l, off + b] == 0 else c - a
            else:
                P[l, off + b] = _f(a, c, minsum)


@njit(cache=True)
def _propagate(C, S, l, phi, n, bit):
    # push the decided leaf up through completed right children; store the first left child
    N = 1 << n
    S[l, 0] = bit
    size = 1
    lam = n
    while lam >= 1:
        off = N - (N >> (lam - 1))
        if (phi >> (n - lam)) & 1 == 0:
            for b in range(size):
                C[l, off + b] = S[l, b]
            return
        for b in range(size):
            r = S[l, b]
            S[l, size + b] = r
            S[l, b] = C[l, off + b] ^ r
        size *= 2
        lam -= 1


@njit(cache=True)
def _scl_kernel(ch, frozen, L, n, minsum):
    N = 1 << n
    P = np.zeros((L, N))
    C = np.zeros((L, N), dtype=np.uint8)
    S = np.zeros((L, N), dtype=np.uint8)
    U = np.zeros((L, N), dtype=np.uint8)
    PM = np.zeros(L)
    alive = np.zeros(L, dtype=np.bool_)
    alive[0] = True
    cand = np.empty(2 * L)
    cand_path = np.empty(2 * L, dtype=np.int64)
    cand_bit = np.empty(2 * L, dtype=np.uint8)
    keep = np.zeros((L, 2), dtype=np.bool_)

    for phi in range(N):
        if phi == 0:
            start = 1
        else:
            t = 0
            while (phi >> t) & 1 == 0:
                t += 1
            start = n - t
        for l in range(L):
            if alive[l]:
                _compute_llrs(P, C, l, ch, phi, n, start, minsum)
        leaf = N - 2
        if frozen[phi]:
            for l in range(L):
                if alive[l]:
                    PM[l] += _penalty(P[l, leaf], 0, minsum)
                    U[l, phi] = 0
                    _propagate(C, S, l, phi, n, 0)
            continue

        nc = 0
        for l in range(L):
            if alive[l]:
                for bit in range(2):
                    cand[nc] = PM[l] + _penalty(P[l, leaf], bit, minsum)
                    cand_path[nc] = l
                    cand_bit[nc] = bit
                    nc += 1
        order = np.argsort(cand[:nc], kind="mergesort")
        nkeep = min(L, nc)
        keep[:, :] = False
        for i in range(nkeep):
            j = order[i]
            keep[cand_path[j], cand_bit[j]] = True

        # paths with no surviving child free their slot
        for l in range(L):
            if alive[l] and not keep[l, 0] and not keep[l, 1]:
                alive[l] = False
        for l in range(L):
            if not alive[l] or not (keep[l, 0] and keep[l, 1]):
                continue
            # both children survive: clone into a free slot, that copy takes bit 1
            for f in range(L):
                if not alive[f] and not (keep[f, 0] or keep[f, 1]):
                    break
            P[f, :] = P[l, :]
            C[f, :] = C[l, :]
            U[f, :phi] = U[l, :phi]
            PM[f] = PM[l]
            alive[f] = True
            keep[f, 1] = True
            keep[l, 1] = False
        for l in range(L):
            if alive[l]:
                bit = 0 if keep[l, 0] else 1
                PM[l] += _penalty(P[l, leaf], bit, minsum)
                U[l, phi] = bit
                _propagate(C, S, l, phi, n, bit)
    return U, PM, alive


@dataclass
class DecodeOutput:
    """SCL result. ``candidates`` pass the CRC and are sorted by path metric
    (lower is more likely). ``best`` is the top path payload irrespective of
    the CRC and is only meant as a list filler."""

    candidates: list
    metrics: list
    best: np.ndarray
    best_metric: float


def scl_decode(spec, llrs, list_size=None):
    """Successive-cancellation list decoding returning all CRC-valid paths."""
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape != (spec.block_length,):
        raise ValueError(f"expected {spec.block_length} LLRs, got shape {llrs.shape}")
    L = spec.list_size if list_size is None else int(list_size)
    ch = np.clip(np.nan_to_num(llrs, nan=0.0, posinf=LLR_CLIP, neginf=-LLR_CLIP), -LLR_CLIP, LLR_CLIP)
    U, PM, alive = _scl_kernel(ch, spec.frozen_mask, L, spec.n_stages, spec.minsum)
    paths = np.flatnonzero(alive)
    paths = paths[np.argsort(PM[paths], kind="stable")]
    info = U[paths][:, spec.info_set]
    ok = crc_ok(spec, info) if spec.crc_bits else np.ones(len(paths), dtype=bool)
    k = spec.payload_bits
    return DecodeOutput(
        candidates=[info[i, :k].copy() for i in np.flatnonzero(ok)],
        metrics=[float(PM[paths[i]]) for i in np.flatnonzero(ok)],
        best=info[0, :k].copy(),
        best_metric=float(PM[paths[0]]),
    )
