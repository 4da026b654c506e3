"""Closed-form machinery linking smooth min-entropy to Shannon conditional
entropy: the per-observation gap cap psi_v(t), its Monte-Carlo expectation,
the tightening B(eps) and its minimizer, the hash-size correction g, and the
leftover-hash security bound.

v_max and (2r)^n style quantities are carried in log2 throughout; the linear
values overflow floats for n >= 50.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import oracle, pipeline
from .channel import q_inv
from .pipeline import SystemConfig


def binary_entropy(t: float) -> float:
    """H_b(t) in bits; continuous limits H_b(0) = H_b(1) = 0."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("binary entropy argument must lie in [0, 1]")
    if t in (0.0, 1.0):
        return 0.0
    return float(-t * math.log2(t) - (1.0 - t) * math.log2(1.0 - t))


def psi(v: int, t: float) -> float:
    """Cap on H(p) - H_min(p) over pmfs with support v and max probability t.

    psi_v(t) = H_b(t) + (1-t) log2(v-1) + log2 t, defined for v >= 2 and
    t in [1/v, 1]; v = 1 forces a point mass and returns 0."""
    if v < 1:
        raise ValueError("support size must be >= 1")
    if v == 1:
        if abs(t - 1.0) > 1e-12:
            raise ValueError("support 1 forces t = 1")
        return 0.0
    if not (1.0 / v) - 1e-12 <= t <= 1.0 + 1e-12:
        raise ValueError(f"t={t} outside [1/{v}, 1]")
    t = min(max(t, 1.0 / v), 1.0)
    return binary_entropy(t) + (1.0 - t) * math.log2(v - 1) + math.log2(t)


def psi_batch(v: np.ndarray, t: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    t = np.clip(t, 1.0 / np.maximum(v, 1), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        hb = np.where((t > 0) & (t < 1),
                      -t * np.log2(np.maximum(t, 1e-300))
                      - (1 - t) * np.log2(np.maximum(1 - t, 1e-300)), 0.0)
        tail = np.where(v > 1, (1 - t) * np.log2(np.maximum(v - 1, 1.0)), 0.0)
        out = hb + tail + np.log2(np.maximum(t, 1e-300))
    return np.where(v <= 1, 0.0, out)


def schur_gap_check(p: "oracle.Pmf") -> dict:
    """Verify the two entropy-gap inequalities behind psi on one pmf."""
    m = p.support_size
    t = p.max_prob
    if m < 2 or t >= 1.0:
        raise ValueError("need support >= 2 and max probability < 1")
    h = p.entropy_bits()
    hmin = p.min_entropy_bits()
    rhs_h = binary_entropy(t) + (1.0 - t) * math.log2(m - 1)
    rhs_hmin = -h + psi(m, t)
    return {
        "holds": (h <= rhs_h + 1e-9) and (-hmin <= rhs_hmin + 1e-9),
        "entropy_lhs": h, "entropy_rhs": rhs_h,
        "neg_min_entropy_lhs": -hmin, "neg_min_entropy_rhs": rhs_hmin,
    }


def r_of_eps(eps: float, n: int, sigma: float) -> float:
    """AWGN smoothing radius: 2n Q((r-1)/sigma) = eps."""
    if not 0.0 < eps < min(1.0, 2.0 * n):
        raise ValueError("eps must lie in (0, min(1, 2n))")
    return 1.0 + sigma * float(q_inv(eps / (2.0 * n)))


def region_caps(eps: float, n: int, sigma: float) -> dict:
    """log2 caps on support size and max probability inside the cube region.

    The paper's t cap mixes density and pmf scales and can exceed 1; it is
    reported for reference but never used in the correction term."""
    r = r_of_eps(eps, n, sigma)
    log2_v_max = n * math.log2(2.0 * r)
    log2_t_max = -n - (n / 2.0) * math.log2(2.0 * math.pi * sigma ** 2)
    return {"r": r, "log2_v_max": log2_v_max, "log2_t_max": log2_t_max}


def mc_expected_psi(cfg: SystemConfig, eps: float, n_samples: int,
                    seed: int | None = None,
                    book: "oracle.Codebook | None" = None,
                    z_batch: np.ndarray | None = None) -> dict:
    """Monte-Carlo estimate of E[psi_V(T) | Z in E] from exact posteriors.

    For AWGN the region E is the cube of radius r(eps); for a BSC the region
    is the whole output space. A precomputed z_batch enables common-random-
    number reuse across eps values during the B(eps) search."""
    book = book or oracle.build_codebook(cfg)
    if z_batch is None:
        seed = cfg.seed if seed is None else seed
        z_batch = pipeline.generate(cfg, n_samples, seed=seed).z_eve
    if cfg.channel_eve.kind == "awgn":
        r = r_of_eps(eps, cfg.n, cfg.channel_eve.sigma)
        accept = np.abs(z_batch).max(axis=1) <= r
    else:
        accept = np.ones(z_batch.shape[0], dtype=bool)
    n_acc = int(accept.sum())
    if n_acc == 0:
        raise ValueError(
            f"no samples inside the eps={eps} region; enlarge n_samples")
    stats = oracle.posterior_stats_batch(cfg, z_batch[accept], book)
    vals = psi_batch(stats["v"], stats["t"])
    stderr = float(vals.std(ddof=1) / math.sqrt(n_acc)) if n_acc > 1 else 0.0
    return {
        "mean_psi_bits": float(vals.mean()),
        "stderr_bits": stderr,
        "accept_fraction": n_acc / z_batch.shape[0],
        "n_accepted": n_acc,
    }


def exhaustive_expected_psi(cfg: SystemConfig,
                            book: "oracle.Codebook | None" = None) -> float:
    """Exact E[psi_V(T)] over all BSC outputs (region = full space)."""
    book = book or oracle.build_codebook(cfg)
    total = 0.0
    for p_z, post_m, _ in oracle._exhaustive_tables(cfg, book):
        v = (post_m > 0).sum(axis=1)
        t = post_m.max(axis=1)
        total += float((p_z * psi_batch(v, t)).sum())
    return total


def b_of_eps(eps: float, mean_psi_cond: float, h_max_bits: float) -> float:
    """B(eps) = (1-eps) psi_bar(eps) - log2(1-eps) + eps/(1-eps) H_max."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    return ((1.0 - eps) * mean_psi_cond - math.log2(1.0 - eps)
            + eps / (1.0 - eps) * h_max_bits)


@dataclass(frozen=True)
class GapReport:
    """Outcome of minimizing B(eps) for one system."""

    eps_star: float
    b_bits: float
    mean_psi_bits: float
    mean_psi_stderr_bits: float
    r_eps: float | None
    log2_v_max: float | None
    log2_t_max: float | None
    h_max_bits: float
    g_bits: float
    accept_fraction: float

    def as_dict(self) -> dict:
        return asdict(self)


def minimize_b(cfg: SystemConfig, n_samples: int = 20000,
               h_max_bits: float | None = None,
               seed: int | None = None,
               grid_points: int = 64,
               eps_lo: float = 1e-6, eps_hi: float = 1.0 - 1e-3,
               rel_tol: float = 1e-4,
               book: "oracle.Codebook | None" = None) -> GapReport:
    """Coarse log-spaced grid over eps followed by golden-section refinement.

    One fixed z sample set is reused for every eps (common random numbers),
    which makes B(.) a deterministic function during the search."""
    book = book or oracle.build_codebook(cfg)
    if h_max_bits is None:
        h_max_bits = float(cfg.q)  # log2 sup_z v_z <= q for these systems
    seed = cfg.seed if seed is None else seed
    z_batch = pipeline.generate(cfg, n_samples, seed=seed).z_eve

    def evaluate(eps: float) -> tuple[float, dict]:
        est = mc_expected_psi(cfg, eps, n_samples, book=book, z_batch=z_batch)
        return b_of_eps(eps, est["mean_psi_bits"], h_max_bits), est

    grid = np.exp(np.linspace(math.log(eps_lo), math.log(eps_hi), grid_points))
    values = [evaluate(float(e))[0] for e in grid]
    i_best = int(np.argmin(values))
    lo = float(grid[max(0, i_best - 1)])
    hi = float(grid[min(grid_points - 1, i_best + 1)])
    # golden-section on [lo, hi]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, _ = evaluate(c)
    fd, _ = evaluate(d)
    while (b - a) > rel_tol * max(abs(a), abs(b), 1e-12):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc, _ = evaluate(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd, _ = evaluate(d)
    eps_star = float((a + b) / 2.0)
    b_star, est = evaluate(eps_star)
    if not math.isfinite(b_star):
        raise ValueError("B(eps) non-finite at the refined minimizer")
    # g uses the unconditional expectation: (1-eps) x conditional mean, since
    # psi vanishes off the region through the indicator in (V, T)
    mean_uncond = (1.0 - eps_star) * est["mean_psi_bits"]
    g = (mean_uncond - math.log2(1.0 - eps_star)
         + eps_star / (1.0 - eps_star) * h_max_bits)
    caps = (region_caps(eps_star, cfg.n, cfg.channel_eve.sigma)
            if cfg.channel_eve.kind == "awgn" else None)
    return GapReport(
        eps_star=eps_star, b_bits=b_star,
        mean_psi_bits=est["mean_psi_bits"],
        mean_psi_stderr_bits=est["stderr_bits"],
        r_eps=caps["r"] if caps else None,
        log2_v_max=caps["log2_v_max"] if caps else None,
        log2_t_max=caps["log2_t_max"] if caps else None,
        h_max_bits=h_max_bits, g_bits=g,
        accept_fraction=est["accept_fraction"])


def b_grid_trace(cfg: SystemConfig, n_samples: int = 20000,
                 h_max_bits: float | None = None, seed: int | None = None,
                 grid_points: int = 64,
                 eps_lo: float = 1e-6, eps_hi: float = 1.0 - 1e-3,
                 book: "oracle.Codebook | None" = None) -> list[dict]:
    """The full eps grid used by minimize_b, for CSV emission."""
    book = book or oracle.build_codebook(cfg)
    if h_max_bits is None:
        h_max_bits = float(cfg.q)
    seed = cfg.seed if seed is None else seed
    z_batch = pipeline.generate(cfg, n_samples, seed=seed).z_eve
    rows = []
    for e in np.exp(np.linspace(math.log(eps_lo), math.log(eps_hi), grid_points)):
        est = mc_expected_psi(cfg, float(e), n_samples, book=book, z_batch=z_batch)
        rows.append({"epsilon": float(e),
                     "b_bits": b_of_eps(float(e), est["mean_psi_bits"], h_max_bits),
                     "mean_psi": est["mean_psi_bits"],
                     "accept_frac": est["accept_fraction"]})
    return rows


def k_init(h_cond_bits: float, g_bits: float, q: int,
           margin: float = 1e-6) -> tuple[int, bool]:
    """Initial hash size from the strict bound k < H(M|Z^n) - g.

    Returns (k0, low_entropy_warning); k0 is floored, clamped to [1, q-1]."""
    if not (math.isfinite(h_cond_bits) and math.isfinite(g_bits)):
        raise ValueError("inputs must be finite")
    raw = h_cond_bits - g_bits - margin
    if raw <= 1.0:
        return 1, True
    return min(int(math.floor(raw)), q - 1), False


def lhl_bound(eps: float, ell_bits: float, hmin_eps_bits: float) -> dict:
    """Leftover-hash variational-distance bound 2 eps + 2^{(l - Hmin)/2 - 1}.

    The output alphabet is specialized to bits (|V| = 2), so the l log|V|
    term is ell_bits; this assumption is flagged in every report."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    raw = 2.0 * eps + 2.0 ** ((ell_bits - hmin_eps_bits) / 2.0 - 1.0)
    return {"bound": min(raw, 1.0), "raw": raw, "vacuous": raw > 1.0,
            "binary_output_alphabet_assumed": True}
