"""Gray-mapped square QAM, Rayleigh block fading + AWGN, and likelihoods.

Channel model per token position i (K symbols per token):

    y_i = h * sqrt(p_tx) * s_i + n_i,   n_i ~ CN(0, sigma2 * I)

with h constant over one packet (block fading) and known at the receiver.
Symbol log-likelihoods are the log of the complex Gaussian density

    log P(y | s) = -log(pi * sigma2) - |y - h*sqrt(p_tx)*s|^2 / sigma2

and token-level rows are sums of K per-symbol terms, computed through a
K x 2^m lookup table rather than per-candidate density evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import Vocabulary, symbols_per_token, token_symbol_matrix

# Per-axis Gray label -> amplitude level, before unit-energy scaling.
# 1 bit per axis (QPSK) and 2 bits per axis (16-QAM). The 2-bit sequence
# walks the levels -3,-1,+1,+3 as 00,01,11,10: adjacent levels differ in
# exactly one bit.
_AXIS_LEVELS = {
    1: {0b0: 1.0, 0b1: -1.0},
    2: {0b00: -3.0, 0b01: -1.0, 0b11: 1.0, 0b10: 3.0},
}


@dataclass(frozen=True)
class Constellation:
    """2^m complex points indexed by their m-bit label value."""

    m: int
    points: np.ndarray

    def __post_init__(self):
        if self.points.shape != (2**self.m,):
            raise ValueError(f"expected {2 ** self.m} points, got {self.points.shape}")
        energy = np.mean(np.abs(self.points) ** 2)
        if abs(energy - 1.0) > 1e-12:
            raise ValueError(f"constellation mean energy {energy} != 1")
        _check_gray_adjacency(self.m, self.points)
        self.points.setflags(write=False)


def _check_gray_adjacency(m: int, points: np.ndarray):
    """Adjacent points along each axis must differ in exactly one label bit."""
    half = m // 2
    labels = np.arange(2**m)
    i_labels = labels >> half
    q_labels = labels & ((1 << half) - 1)
    for axis_vals, other_labels in ((points.real, q_labels), (points.imag, i_labels)):
        # Walk each row/column of the grid with the other axis held fixed.
        for fixed in np.unique(other_labels):
            sel = other_labels == fixed
            order = np.argsort(axis_vals[sel], kind="stable")
            lane = labels[sel][order]
            for a, b in zip(lane[:-1], lane[1:]):
                if bin(int(a) ^ int(b)).count("1") != 1:
                    raise ValueError(f"labeling is not Gray: {a:0{m}b} adjacent to {b:0{m}b}")


def square_qam(m: int) -> Constellation:
    """Gray-labeled square QAM with unit mean energy.

    The first m/2 label bits select the in-phase level, the rest the
    quadrature level, each through the per-axis Gray sequence above.
    """
    if m % 2 != 0 or m // 2 not in _AXIS_LEVELS:
        raise ValueError(f"unsupported bits per symbol: {m}")
    half = m // 2
    lut = _AXIS_LEVELS[half]
    labels = np.arange(2**m)
    i_levels = np.array([lut[int(v)] for v in labels >> half])
    q_levels = np.array([lut[int(v)] for v in labels & ((1 << half) - 1)])
    points = i_levels + 1j * q_levels
    scale = math.sqrt(np.mean(np.abs(points) ** 2))
    return Constellation(m=m, points=points / scale)


def modulate(groups: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Map (K, m) bit groups to K constellation points via their labels."""
    groups = np.asarray(groups)
    if groups.ndim != 2 or groups.shape[1] != constellation.m:
        raise ValueError(f"expected (K, {constellation.m}) bit groups, got {groups.shape}")
    powers = 1 << np.arange(constellation.m - 1, -1, -1)
    labels = (groups * powers).sum(axis=1)
    return constellation.points[labels]


def demodulate(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Hard nearest-point decisions back to (K, m) bit groups."""
    symbols = np.asarray(symbols)
    dist = np.abs(symbols[:, None] - constellation.points[None, :])
    labels = np.argmin(dist, axis=1)
    m = constellation.m
    shifts = np.arange(m - 1, -1, -1)
    return ((labels[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def sample_fading(rng: np.random.Generator, size=None) -> complex | np.ndarray:
    """Rayleigh block-fading coefficient(s) h ~ CN(0, 1), E[|h|^2] = 1."""
    re = rng.normal(size=size)
    im = rng.normal(size=size)
    h = (re + 1j * im) / math.sqrt(2.0)
    return complex(h) if size is None else h


def transmit(
    symbols: np.ndarray,
    h: complex | np.ndarray,
    p_tx: float,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """y = h * sqrt(p_tx) * s + n with n ~ CN(0, sigma2) per sample."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    symbols = np.asarray(symbols)
    noise_std = math.sqrt(sigma2 / 2.0)
    noise = noise_std * (
        rng.normal(size=symbols.shape) + 1j * rng.normal(size=symbols.shape)
    )
    return np.asarray(h) * math.sqrt(p_tx) * symbols + noise


def snr_db(p_tx: float, mean_h2: float, sigma2: float) -> float:
    """10 log10(p_tx * E[|h|^2] / sigma2)."""
    if p_tx <= 0 or mean_h2 <= 0 or sigma2 <= 0:
        raise ValueError("p_tx, mean_h2 and sigma2 must all be > 0")
    return 10.0 * math.log10(p_tx * mean_h2 / sigma2)


def noise_variance_for_snr_db(target_db: float, p_tx: float = 1.0, mean_h2: float = 1.0) -> float:
    """sigma2 that realizes a target average SNR in dB."""
    return p_tx * mean_h2 / (10.0 ** (target_db / 10.0))


def symbol_loglik(
    y: complex | np.ndarray,
    h: complex | np.ndarray,
    p_tx: float,
    sigma2: float,
    constellation: Constellation,
) -> np.ndarray:
    """Per-candidate log density: -log(pi*sigma2) - |y - h*sqrt(p_tx)*s|^2 / sigma2.

    Broadcasts over leading axes of y (and h); output gains a trailing
    axis of length 2^m.
    """
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    y = np.asarray(y)
    ref = np.asarray(h)[..., None] * math.sqrt(p_tx) * constellation.points
    resid = y[..., None] - ref
    return -math.log(math.pi * sigma2) - (resid.real**2 + resid.imag**2) / sigma2


@dataclass(frozen=True)
class ChannelBlock:
    """One packet's channel realization and received samples.

    received is (T, K) complex; rows at masked positions carry NaN (no
    samples were transmitted there). h is a scalar for block fading or a
    (T,) array when per-token fading is enabled.
    """

    h: complex | np.ndarray
    p_tx: float
    sigma2: float
    received: np.ndarray

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.p_tx <= 0:
            raise ValueError(f"p_tx must be > 0, got {self.p_tx}")
        if self.received.ndim != 2:
            raise ValueError(f"received must be (T, K), got {self.received.shape}")


def transmit_packet(
    ids: np.ndarray,
    masked_positions,
    vocab: Vocabulary,
    constellation: Constellation,
    h: complex | np.ndarray,
    p_tx: float,
    sigma2: float,
    rng: np.random.Generator,
) -> ChannelBlock:
    """Encode and transmit the unmasked tokens of one packet under one h."""
    ids = np.asarray(ids)
    t = ids.size
    k = symbols_per_token(vocab, constellation.m)
    sym = token_symbol_matrix(vocab, constellation.m)
    tx_mask = np.ones(t, dtype=bool)
    for pos in masked_positions:
        tx_mask[pos] = False
    received = np.full((t, k), np.nan + 1j * np.nan, dtype=complex)
    if tx_mask.any():
        symbols = constellation.points[sym[ids[tx_mask]]]
        h_arr = np.asarray(h)
        h_tx = h_arr[tx_mask][:, None] if h_arr.ndim == 1 else h_arr
        received[tx_mask] = transmit(symbols, h_tx, p_tx, sigma2, rng)
    return ChannelBlock(h=h, p_tx=p_tx, sigma2=sigma2, received=received)


@dataclass(frozen=True)
class LogLikTable:
    """T x V token-level log-likelihoods, max-normalized per row.

    values[i, v] = log P(y_i | v) - offsets[i], so each row's maximum is
    exactly 0 and nothing underflows at V = 30522. Masked rows are
    uniform: raw value log(1/V) everywhere, normalized to 0.
    """

    values: np.ndarray
    offsets: np.ndarray
    masked_positions: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.values.ndim != 2 or self.offsets.shape != (self.values.shape[0],):
            raise ValueError("values must be (T, V) with one offset per row")
        if not np.isfinite(self.values).all() or not np.isfinite(self.offsets).all():
            raise ValueError("log-likelihood table contains non-finite entries")
        self.values.setflags(write=False)
        self.offsets.setflags(write=False)

    @property
    def shape(self):
        return self.values.shape

    def raw(self) -> np.ndarray:
        """Un-normalized log P(y_i | v)."""
        return self.values + self.offsets[:, None]


def token_loglik_table(
    block: ChannelBlock,
    vocab: Vocabulary,
    constellation: Constellation,
    masked_positions=(),
) -> LogLikTable:
    """Token-level rows summed from a K x 2^m per-position symbol table.

    For unmasked i: row[v] = sum_k loglik(y_{i,k} | symbol k of token v).
    For masked i (no channel samples): row[v] = log(1/V) for every v.
    """
    t, k = block.received.shape
    v = vocab.size
    if symbols_per_token(vocab, constellation.m) != k:
        raise ValueError(
            f"received has {k} symbols per token, codec expects "
            f"{symbols_per_token(vocab, constellation.m)}"
        )
    masked = frozenset(int(p) for p in masked_positions)
    for pos in masked:
        if not 0 <= pos < t:
            raise ValueError(f"masked position {pos} not in [0, {t})")
    sym = token_symbol_matrix(vocab, constellation.m)
    k_idx = np.arange(k)
    values = np.zeros((t, v))
    offsets = np.full(t, -math.log(v))
    h_arr = np.asarray(block.h)
    for i in range(t):
        if i in masked:
            continue
        y_i = block.received[i]
        if not np.isfinite(y_i).all():
            raise ValueError(f"missing channel samples at unmasked position {i}")
        h_i = h_arr[i] if h_arr.ndim == 1 else h_arr
        table = symbol_loglik(y_i, h_i, block.p_tx, block.sigma2, constellation)
        rows = table[k_idx, sym].sum(axis=1)
        offsets[i] = rows.max()
        values[i] = rows - offsets[i]
    return LogLikTable(values=values, offsets=offsets, masked_positions=masked)
