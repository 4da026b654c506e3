"""Exact enumeration-based ground truth for small systems: posteriors, mutual
information, conditional entropy, support/max statistics, and a full-table
multivariate Bernoulli baseline with an EM-fitted mixture.

All entropies are in bits (log2), accumulated in float64. Enumeration is
limited to 2^q <= 2^24 encoder inputs; exhaustive output sweeps additionally
require a BSC and n <= 20. Budget violations raise, never approximate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ecc, gf2, pipeline
from .pipeline import SystemConfig

MAX_Q = 24
MAX_EXHAUSTIVE_N = 20
_LN2 = math.log(2.0)


class EnumerationBudgetError(ValueError):
    """Raised when an exact computation would exceed the enumeration budget."""


@dataclass(frozen=True)
class Pmf:
    """A finite pmf kept in linear and log2 form."""

    probs: np.ndarray
    log2_probs: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)
        if self.log2_probs is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log2_probs", np.log2(p))

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.probs))

    @property
    def max_prob(self) -> float:
        return float(self.probs.max())

    def entropy_bits(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log2(p)).sum())

    def min_entropy_bits(self) -> float:
        return float(-np.log2(self.max_prob))


@dataclass(frozen=True)
class ExactPosterior:
    """Posterior over the encoder input M and its secret marginal for one z."""

    pmf_m: Pmf
    pmf_ms: Pmf

    @property
    def v(self) -> int:
        return self.pmf_m.support_size

    @property
    def t(self) -> float:
        return self.pmf_m.max_prob


def _index_bits(count: int, width: int) -> np.ndarray:
    """Dense bits of 0..count-1, little-endian, shape (count, width)."""
    idx = np.arange(count, dtype=np.uint32)
    raw = idx.astype("<u4").view(np.uint8).reshape(count, 4)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    return bits[:, :width].astype(np.uint8)


@dataclass(frozen=True)
class Codebook:
    """Every encoder input w in 0..2^q-1 with its codeword and secret index."""

    cfg: SystemConfig
    cw_packed: np.ndarray       # (2^q, nw) uint64
    symbols: np.ndarray | None  # (2^q, n) float64 BPSK symbols, AWGN only
    secret_of_w: np.ndarray     # (2^q,) int64

    @property
    def size(self) -> int:
        return self.cw_packed.shape[0]


def build_codebook(cfg: SystemConfig) -> Codebook:
    if cfg.q > MAX_Q:
        raise EnumerationBudgetError(
            f"2^{cfg.q} encoder inputs exceed the 2^{MAX_Q} budget")
    if cfg.fresh_uhf_per_sample:
        raise ValueError("exact oracle assumes one fixed hash per system")
    size = 1 << cfg.q
    m_bits = _index_bits(size, cfg.q)
    cw = ecc.encode_batch(cfg.code, m_bits)
    cw_packed = gf2.pack_bits(cw)
    if cfg.uhf_enabled:
        sec_bits = gf2.uhf_hash_batch(cfg.uhf_pair(), m_bits)
    else:
        sec_bits = m_bits[:, : cfg.k]
    weights = (1 << np.arange(cfg.k, dtype=np.int64))
    secret_of_w = sec_bits.astype(np.int64) @ weights
    symbols = None
    if cfg.channel_eve.is_soft:
        symbols = 1.0 - 2.0 * cw.astype(np.float64)
    return Codebook(cfg=cfg, cw_packed=cw_packed, symbols=symbols,
                    secret_of_w=secret_of_w)


def _loglik_bsc(book: Codebook, z_packed: np.ndarray, n: int, p: float) -> np.ndarray:
    """ln P(z|x_w) for each (sample, w); -inf encodes impossible observations."""
    d = np.bitwise_count(z_packed[:, None, :] ^ book.cw_packed[None, :, :])
    d = d.sum(axis=2, dtype=np.int64).astype(np.float64)
    if p == 0.0:
        return np.where(d == 0, 0.0, -np.inf)
    if p == 0.5:
        return np.full(d.shape, n * math.log(0.5))
    return d * math.log(p) + (n - d) * math.log1p(-p)


def _loglik_batch(book: Codebook, z: np.ndarray) -> np.ndarray:
    """(count, 2^q) array of ln P(z_i | x_w) up to a per-sample constant."""
    cfg = book.cfg
    n = cfg.n
    ch = cfg.channel_eve
    if ch.kind == "bsc":
        z_packed = gf2.pack_bits(np.asarray(z, dtype=np.uint8))
        return _loglik_bsc(book, z_packed, n, ch.p)
    z = np.asarray(z, dtype=np.float64)
    # ||z - s||^2 = ||z||^2 - 2 z.s + n; per-sample constants cancel on
    # normalization but are kept so the value is a true log-density.
    cross = z @ book.symbols.T
    const = (-(z * z).sum(axis=1) - n) / (2.0 * ch.sigma ** 2) \
        - n * math.log(ch.sigma * math.sqrt(2.0 * math.pi))
    return cross / (ch.sigma ** 2) + const[:, None]


def _normalize_log(loglik: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise posterior from log-likelihood with a uniform prior.

    Returns (probs, ln_norm) where ln_norm = ln sum_w exp(loglik)."""
    mx = loglik.max(axis=1, keepdims=True)
    shifted = np.exp(loglik - mx)
    total = shifted.sum(axis=1, keepdims=True)
    probs = shifted / total
    ln_norm = (mx + np.log(total))[:, 0]
    return probs, ln_norm


def posterior(cfg: SystemConfig, z: np.ndarray,
              book: Codebook | None = None) -> ExactPosterior:
    """Exact posterior over M and M_s for a single observation z."""
    book = book or build_codebook(cfg)
    loglik = _loglik_batch(book, np.atleast_2d(z))
    probs, _ = _normalize_log(loglik)
    pm = probs[0]
    pms = np.bincount(book.secret_of_w, weights=pm, minlength=1 << cfg.k)
    pm = pm / pm.sum()
    pms = pms / pms.sum()
    return ExactPosterior(pmf_m=Pmf(pm), pmf_ms=Pmf(pms))


def posterior_stats_batch(cfg: SystemConfig, z: np.ndarray,
                          book: Codebook | None = None,
                          chunk: int = 4096) -> dict:
    """Vectorized (v_z, t_z, H(M|z) bits) for a batch of observations."""
    book = book or build_codebook(cfg)
    z = np.atleast_2d(z)
    vs, ts, hs = [], [], []
    for lo in range(0, z.shape[0], chunk):
        probs, _ = _normalize_log(_loglik_batch(book, z[lo:lo + chunk]))
        vs.append((probs > 0).sum(axis=1))
        ts.append(probs.max(axis=1))
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(probs > 0, probs * np.log2(probs), 0.0)
        hs.append(-plogp.sum(axis=1))
    return {"v": np.concatenate(vs), "t": np.concatenate(ts),
            "h_bits": np.concatenate(hs)}


def _check_exhaustive(cfg: SystemConfig):
    if cfg.channel_eve.kind != "bsc":
        raise EnumerationBudgetError("exhaustive sweep requires a BSC")
    if cfg.n > MAX_EXHAUSTIVE_N:
        raise EnumerationBudgetError(
            f"exhaustive sweep over 2^{cfg.n} outputs exceeds the budget")


def _exhaustive_tables(cfg: SystemConfig, book: Codebook,
                       chunk: int = 1 << 14):
    """Yield (p_z, post_m, post_ms) over all 2^n BSC outputs, chunked.

    p_z is the output probability; post_* are the exact posteriors."""
    _check_exhaustive(cfg)
    n, p = cfg.n, cfg.channel_eve.p
    total = 1 << n
    prior = 1.0 / book.size
    for lo in range(0, total, chunk):
        z_bits = _index_bits_range(lo, min(lo + chunk, total), n)
        z_packed = gf2.pack_bits(z_bits)
        d = np.bitwise_count(z_packed[:, None, :] ^ book.cw_packed[None, :, :])
        d = d.sum(axis=2, dtype=np.int64)
        if p == 0.0:
            lik = (d == 0).astype(np.float64)
        else:
            lik = (p ** d) * ((1.0 - p) ** (n - d))
        p_z = prior * lik.sum(axis=1)
        post_m = lik / np.maximum(lik.sum(axis=1, keepdims=True), 1e-300)
        post_ms = np.zeros((post_m.shape[0], 1 << cfg.k))
        np.add.at(post_ms.T, book.secret_of_w, post_m.T)
        yield p_z, post_m, post_ms


def _index_bits_range(lo: int, hi: int, width: int) -> np.ndarray:
    idx = np.arange(lo, hi, dtype=np.uint32)
    raw = idx.astype("<u4").view(np.uint8).reshape(hi - lo, 4)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    return bits[:, :width].astype(np.uint8)


def _entropy_rows(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(p > 0, p * np.log2(p), 0.0)
    return -term.sum(axis=1)


def exact_mi(cfg: SystemConfig, target: str = "secret",
             method: str = "exhaustive", mc_samples: int = 0,
             seed: int | None = None,
             book: Codebook | None = None) -> dict:
    """I(M_s; Z^n) or I(M; Z^n) in bits, via the exact posterior.

    Exhaustive mode sums over every BSC output; Monte-Carlo mode averages
    log2 P(m*|z)/P(m*) over sampled pairs and reports a standard error."""
    if target not in ("secret", "encoder"):
        raise ValueError("target must be 'secret' or 'encoder'")
    book = book or build_codebook(cfg)
    h_prior = cfg.k if target == "secret" else cfg.q
    if method == "exhaustive":
        h_cond = 0.0
        for p_z, post_m, post_ms in _exhaustive_tables(cfg, book):
            post = post_ms if target == "secret" else post_m
            h_cond += float((p_z * _entropy_rows(post)).sum())
        return {"value_bits": h_prior - h_cond, "stderr_bits": 0.0,
                "method": "exhaustive", "target": target}
    if method != "mc":
        raise ValueError("method must be 'exhaustive' or 'mc'")
    if mc_samples < 1:
        raise ValueError("mc mode needs mc_samples >= 1")
    seed = cfg.seed if seed is None else seed
    batch = pipeline.generate(cfg, mc_samples, seed=seed)
    weights_q = (1 << np.arange(cfg.q, dtype=np.int64))
    w_star = batch.m.astype(np.int64) @ weights_q
    weights_k = (1 << np.arange(cfg.k, dtype=np.int64))
    s_star = batch.m_s.astype(np.int64) @ weights_k
    vals = np.empty(mc_samples)
    chunk = max(1, (1 << 22) // book.size)
    for lo in range(0, mc_samples, chunk):
        probs, _ = _normalize_log(_loglik_batch(book, batch.z_eve[lo:lo + chunk]))
        rows = np.arange(probs.shape[0])
        if target == "encoder":
            p_star = probs[rows, w_star[lo:lo + chunk]]
        else:
            pms = np.zeros((probs.shape[0], 1 << cfg.k))
            np.add.at(pms.T, book.secret_of_w, probs.T)
            p_star = pms[rows, s_star[lo:lo + chunk]]
        vals[lo:lo + probs.shape[0]] = np.log2(np.maximum(p_star, 1e-300)) + h_prior
    return {"value_bits": float(vals.mean()),
            "stderr_bits": float(vals.std(ddof=1) / math.sqrt(mc_samples)),
            "method": "mc", "target": target}


def exact_cond_entropy(cfg: SystemConfig, target: str = "secret",
                       method: str = "exhaustive", mc_samples: int = 0,
                       seed: int | None = None,
                       book: Codebook | None = None) -> dict:
    """H(target | Z^n) in bits, both as H - I and as E_z[H(posterior)].

    The two paths must agree (an algebraic identity for the exhaustive case);
    both are returned so callers can assert it."""
    book = book or build_codebook(cfg)
    h_prior = cfg.k if target == "secret" else cfg.q
    mi = exact_mi(cfg, target, method, mc_samples, seed, book)
    via_mi = h_prior - mi["value_bits"]
    if method == "exhaustive":
        direct = 0.0
        for p_z, post_m, post_ms in _exhaustive_tables(cfg, book):
            post = post_ms if target == "secret" else post_m
            direct += float((p_z * _entropy_rows(post)).sum())
    else:
        batch = pipeline.generate(cfg, mc_samples, seed=(cfg.seed if seed is None else seed))
        stats = posterior_stats_batch(cfg, batch.z_eve, book) if target == "encoder" else None
        if target == "encoder":
            direct = float(stats["h_bits"].mean())
        else:
            hs = []
            chunk = max(1, (1 << 22) // book.size)
            for lo in range(0, mc_samples, chunk):
                probs, _ = _normalize_log(_loglik_batch(book, batch.z_eve[lo:lo + chunk]))
                pms = np.zeros((probs.shape[0], 1 << cfg.k))
                np.add.at(pms.T, book.secret_of_w, probs.T)
                hs.append(_entropy_rows(pms))
            direct = float(np.concatenate(hs).mean())
    return {"value_bits": via_mi, "direct_bits": direct,
            "stderr_bits": mi["stderr_bits"], "method": method, "target": target}


def club_with_oracle(cfg: SystemConfig, book: Codebook | None = None) -> dict:
    """vCLUB evaluated with the exact posterior as the variational model.

    The gap club - I(M_s;Z) equals KL(P_{M_s} x P_Z || P_{M_s Z}); the KL is
    computed independently so callers can check the identity."""
    book = book or build_codebook(cfg)
    k = cfg.k
    p_ms = np.full(1 << k, 2.0 ** -k)
    positive = 0.0
    negative = 0.0
    kl = 0.0
    h_cond = 0.0
    for p_z, _, post_ms in _exhaustive_tables(cfg, book):
        with np.errstate(divide="ignore", invalid="ignore"):
            log_post = np.where(post_ms > 0, np.log2(np.maximum(post_ms, 1e-300)), 0.0)
        positive += float((p_z[:, None] * post_ms * log_post).sum())
        # negative pairs: m_s independent of z, so weight by P(m_s) P(z); a
        # zero posterior with positive product weight makes the term -inf
        neg_rows = (p_ms[None, :] * np.where(post_ms > 0, log_post, -np.inf))
        negative += float((p_z[:, None] * neg_rows).sum())
        h_cond += float((p_z * _entropy_rows(post_ms)).sum())
        # KL(P_ms x P_z || P_ms,z) = sum p_ms p_z log2(p_ms p_z / p_msz)
        joint = p_z[:, None] * post_ms
        prod = p_z[:, None] * p_ms[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            kl_rows = np.where(prod > 0,
                               prod * (np.log2(np.maximum(prod, 1e-300))
                                       - np.log2(np.maximum(joint, 1e-300))),
                               0.0)
        kl += float(kl_rows.sum())
    club = positive - negative
    mi = k - h_cond
    return {"club_bits": club, "exact_mi_bits": mi, "gap_bits": club - mi,
            "kl_bits": kl}


def mvb_full_table(samples: np.ndarray) -> Pmf:
    """Empirical multivariate-Bernoulli lookup table over d <= 10 bits."""
    samples = np.asarray(samples, dtype=np.uint8)
    d = samples.shape[1]
    if d > 10:
        raise EnumerationBudgetError("full MVB table limited to d <= 10")
    weights = (1 << np.arange(d, dtype=np.int64))
    idx = samples.astype(np.int64) @ weights
    counts = np.bincount(idx, minlength=1 << d).astype(np.float64)
    return Pmf(counts / counts.sum())


def mvb_mixture_fit(samples: np.ndarray, n_components: int,
                    iters: int = 300, seed: int = 0) -> dict:
    """EM fit of an independent-Bernoulli mixture; returns parameters and the
    mean log2-likelihood for comparison against the full table."""
    samples = np.asarray(samples, dtype=np.float64)
    count, d = samples.shape
    rng = np.random.default_rng(seed)
    # init components on random samples with smoothing toward 0.5
    pick = rng.choice(count, size=n_components, replace=count < n_components)
    p = 0.7 * samples[pick] + 0.3 * 0.5
    w = np.full(n_components, 1.0 / n_components)
    eps = 1e-9
    for _ in range(iters):
        logp = (samples[:, None, :] * np.log(np.clip(p, eps, 1))[None]
                + (1 - samples[:, None, :]) * np.log(np.clip(1 - p, eps, 1))[None]).sum(axis=2)
        logp = logp + np.log(np.maximum(w, eps))[None, :]
        mx = logp.max(axis=1, keepdims=True)
        resp = np.exp(logp - mx)
        resp /= resp.sum(axis=1, keepdims=True)
        nk = resp.sum(axis=0)
        w = nk / count
        p = (resp.T @ samples) / np.maximum(nk[:, None], eps)
    logp = (samples[:, None, :] * np.log(np.clip(p, eps, 1))[None]
            + (1 - samples[:, None, :]) * np.log(np.clip(1 - p, eps, 1))[None]).sum(axis=2)
    logp = logp + np.log(np.maximum(w, eps))[None, :]
    mx = logp.max(axis=1, keepdims=True)
    ll = (mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))) / _LN2
    return {"weights": w, "probs": p, "mean_log2_lik": float(ll.mean())}


def mvb_table_log2_lik(table: Pmf, samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=np.uint8)
    d = samples.shape[1]
    weights = (1 << np.arange(d, dtype=np.int64))
    idx = samples.astype(np.int64) @ weights
    return float(table.log2_probs[idx].mean())
