"""Memoryless channel models (BSC, BPSK+AWGN) with exact transition
log-probabilities and Gaussian tail utilities.

Conventions, pinned for reproducibility:
  * BPSK maps bit b to the symbol 1 - 2b (bit 0 -> +1), unit symbol energy.
  * SNR is Es/N0 with unit symbol energy: snr_db = -20 log10(sigma).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ChannelModel:
    """Either a BSC with crossover p or a BPSK+AWGN channel with noise std sigma."""

    kind: str  # "bsc" | "awgn"
    p: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind == "bsc":
            if not 0.0 <= self.p <= 0.5:
                raise ValueError("BSC crossover must lie in [0, 0.5]")
        elif self.kind == "awgn":
            if not self.sigma > 0.0:
                raise ValueError("AWGN sigma must be positive")
        else:
            raise ValueError(f"unknown channel kind: {self.kind}")

    @property
    def snr_db(self) -> float:
        if self.kind != "awgn":
            raise ValueError("snr_db only defined for AWGN")
        return -20.0 * math.log10(self.sigma)

    @property
    def is_soft(self) -> bool:
        return self.kind == "awgn"

    @property
    def name(self) -> str:
        if self.kind == "bsc":
            return f"bsc:{self.p:g}"
        return f"awgn:snr_db={self.snr_db:g}"


def bsc(p: float) -> ChannelModel:
    return ChannelModel("bsc", p=p)


def awgn(snr_db: float) -> ChannelModel:
    return ChannelModel("awgn", sigma=10.0 ** (-snr_db / 20.0))


def awgn_sigma(sigma: float) -> ChannelModel:
    return ChannelModel("awgn", sigma=sigma)


def parse_channel(name: str) -> ChannelModel:
    """Resolve a config string: "bsc:0.2" or "awgn:snr_db=4.0"."""
    parts = name.strip().lower().split(":", 1)
    if len(parts) != 2:
        raise ValueError(f"channel spec needs kind:params, got {name!r}")
    if parts[0] == "bsc":
        return bsc(float(parts[1]))
    if parts[0] == "awgn":
        spec = parts[1]
        if spec.startswith("snr_db="):
            return awgn(float(spec[len("snr_db="):]))
        if spec.startswith("sigma="):
            return awgn_sigma(float(spec[len("sigma="):]))
        raise ValueError(f"unknown AWGN parameter: {spec}")
    raise ValueError(f"unknown channel: {name}")


def transmit(ch: ChannelModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Send codeword bits through the channel.

    Accepts (n,) or (count, n) bit arrays; returns hard bits (BSC, uint8) or
    real samples (AWGN, float32) of the same shape."""
    x = np.asarray(x, dtype=np.uint8)
    if ch.kind == "bsc":
        flips = (rng.random(x.shape) < ch.p).astype(np.uint8)
        return x ^ flips
    symbols = (1.0 - 2.0 * x.astype(np.float64))
    noise = rng.normal(0.0, ch.sigma, size=x.shape)
    return (symbols + noise).astype(np.float32)


def hard_decision(ch: ChannelModel, z: np.ndarray) -> np.ndarray:
    """Threshold channel output to bits (AWGN: negative sample -> bit 1)."""
    if ch.kind == "bsc":
        return np.asarray(z, dtype=np.uint8)
    return (np.asarray(z) < 0).astype(np.uint8)


def log_transition(ch: ChannelModel, z: np.ndarray, x: np.ndarray) -> float:
    """ln P(z | x) (BSC) or the log-density (AWGN) for one observation."""
    return float(log_transition_batch(ch, np.asarray(z)[None, :],
                                      np.asarray(x)[None, :])[0])


def log_transition_batch(ch: ChannelModel, z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Vectorized ln P(z|x); z is (count, n), x is (count, n) or (1, n)."""
    if z.shape[-1] != x.shape[-1]:
        raise ValueError("length mismatch between observation and codeword")
    n = z.shape[-1]
    if ch.kind == "bsc":
        z = np.asarray(z, dtype=np.uint8)
        x = np.asarray(x, dtype=np.uint8)
        d = (z ^ x).sum(axis=-1).astype(np.float64)
        if ch.p == 0.0:
            return np.where(d == 0, 0.0, NEG_INF)
        return d * math.log(ch.p) + (n - d) * math.log1p(-ch.p)
    z = np.asarray(z, dtype=np.float64)
    s = 1.0 - 2.0 * np.asarray(x, dtype=np.float64)
    resid = (z - s) ** 2
    return (-resid.sum(axis=-1) / (2.0 * ch.sigma ** 2)
            - n * math.log(ch.sigma * math.sqrt(2.0 * math.pi)))


def q_func(x) -> np.ndarray | float:
    """Upper Gaussian tail Q(x) = P[N(0,1) > x]."""
    return special.ndtr(-np.asarray(x, dtype=np.float64))[()]


def q_inv(p) -> np.ndarray | float:
    """Inverse of q_func; rejects arguments outside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("q_inv domain is (0, 1)")
    return (-special.ndtri(p))[()]
