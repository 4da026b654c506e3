"""Curriculum training of leakage estimators and the vCLUB evaluation loop.

The channel-difficulty curriculum regenerates data whenever the scheduled
difficulty changes; evaluation always runs on held-out data with the EMA
parameter shadow. All randomness is derived from the system seed, so runs are
bit-reproducible in single-thread mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from .. import channel as chanmod
from .. import pipeline
from ..pipeline import SystemConfig, substream
from . import autodiff as ad
from .cnbmm import CnbmmConfig, CnbmmModel, to_model_input

_LN2 = math.log(2.0)

# substream purposes (offset to stay clear of pipeline's tags)
_TAG_TRAIN_DATA, _TAG_EVAL_DATA, _TAG_SHUFFLE, _TAG_INIT, _TAG_NEG = range(10, 15)


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries diagnostics."""

    def __init__(self, epoch: int, step: int, last_finite_loss: float):
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {step}; "
            f"last finite loss {last_finite_loss:.6g}")
        self.epoch = epoch
        self.step = step
        self.last_finite_loss = last_finite_loss


@dataclass(frozen=True)
class TrainSchedule:
    """Epoch plan: per-epoch channel difficulty plus optimizer knobs."""

    difficulties: tuple[float, ...]  # P_e (BSC) or SNR dB (AWGN), one per epoch
    train_samples: int = 100_000
    eval_samples: int = 20_000
    batch_size: int = 512
    lr: float = 1e-3
    weight_decay: float = 1e-9
    ema_decay: float = 0.999
    clip_norm: float = 5.0

    def __post_init__(self):
        if not self.difficulties:
            raise ValueError("empty schedule")
        for v in (self.train_samples, self.eval_samples, self.batch_size):
            if v < 1:
                raise ValueError("sample counts and batch size must be positive")

    @property
    def epochs(self) -> int:
        return len(self.difficulties)


def bsc_curriculum(epochs: int = 110, start: float = 0.0, step: float = 0.05,
                   every: int = 10, **kw) -> TrainSchedule:
    """Crossover starts at ``start`` and rises by ``step`` every ``every`` epochs."""
    diffs = tuple(min(start + step * (e // every), 0.5) for e in range(epochs))
    return TrainSchedule(difficulties=diffs, **kw)


def awgn_curriculum(epochs: int = 110, start_db: float = 10.0,
                    step_db: float = -2.0, every: int = 10, **kw) -> TrainSchedule:
    diffs = tuple(start_db + step_db * (e // every) for e in range(epochs))
    return TrainSchedule(difficulties=diffs, **kw)


def fixed_schedule(difficulty: float, epochs: int, **kw) -> TrainSchedule:
    return TrainSchedule(difficulties=(difficulty,) * epochs, **kw)


def reduced(schedule: TrainSchedule, factor: int = 4) -> TrainSchedule:
    """Quarter-length fast mode for sweeps: keeps one epoch in ``factor``."""
    diffs = schedule.difficulties[::factor] or schedule.difficulties[:1]
    return replace(schedule, difficulties=diffs)


@dataclass
class LeakageReport:
    """An MI estimate with provenance."""

    estimator: str
    raw_bits: float
    projected_bits: float
    k: int
    eval_count: int
    trace: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.projected_bits = float(min(max(self.raw_bits, 0.0), self.k))

    def as_dict(self) -> dict:
        return {"estimator": self.estimator, "raw_bits": self.raw_bits,
                "projected_bits": self.projected_bits, "k": self.k,
                "eval_count": self.eval_count, "extras": self.extras}


def project(raw: float, k: int) -> float:
    return float(min(max(raw, 0.0), k))


def _with_difficulty(cfg: SystemConfig, difficulty: float) -> SystemConfig:
    if cfg.channel_eve.kind == "bsc":
        ch = chanmod.bsc(difficulty)
    else:
        ch = chanmod.awgn(difficulty)
    return replace(cfg, channel_eve=ch, channel_bob=ch)


def _derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation resampled until it has no fixed point."""
    if n < 2:
        raise ValueError("need at least two samples for negative pairing")
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def vclub_log2_terms(log2_fn, z_in: np.ndarray, m_bits: np.ndarray,
                     rng: np.random.Generator,
                     chunk: int = 4096) -> tuple[float, float]:
    """Positive and negative mean log2-likelihoods for the vCLUB difference.

    ``log2_fn(z, m) -> per-sample log2 q(m|z)``; negatives pair each z with a
    fixed-point-free uniform permutation of the messages."""
    n = z_in.shape[0]
    perm = _derangement(n, rng)
    pos, neg = 0.0, 0.0
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        pos += float(log2_fn(z_in[lo:hi], m_bits[lo:hi]).sum())
        neg += float(log2_fn(z_in[lo:hi], m_bits[perm[lo:hi]]).sum())
    return pos / n, neg / n


def vclub_estimate(model: CnbmmModel, z_eve: np.ndarray, m_s: np.ndarray,
                   soft: bool, rng: np.random.Generator) -> LeakageReport:
    """vCLUB leakage estimate from a held-out evaluation batch."""
    z_in = to_model_input(z_eve, soft)
    pos, neg = vclub_log2_terms(model.log_prob2, z_in, m_s, rng)
    raw = pos - neg
    return LeakageReport(estimator="cnbmm", raw_bits=raw, projected_bits=0.0,
                         k=model.cfg.k_out, eval_count=z_eve.shape[0],
                         extras={"positive": pos, "negative": neg})


def _epoch_batches(count: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(count)
    for lo in range(0, count, batch_size):
        yield order[lo:lo + batch_size]


def train_cnbmm(cfg: SystemConfig, model_cfg: CnbmmConfig,
                schedule: TrainSchedule,
                eval_each_epoch: bool = True) -> tuple[CnbmmModel, list[dict]]:
    """Run the curriculum; returns the trained model and per-epoch trace.

    The trace carries (epoch, difficulty, raw/projected estimate) computed on
    held-out data with EMA parameters; the last epoch at each difficulty is
    the headline number for that difficulty."""
    model = CnbmmModel(model_cfg, substream(cfg.seed, _TAG_INIT))
    params = model.parameters()
    opt = ad.Adam(params, lr=schedule.lr, weight_decay=schedule.weight_decay)
    ema = ad.Ema(params, schedule.ema_decay)
    shuffle_rng = substream(cfg.seed, _TAG_SHUFFLE)
    neg_rng = substream(cfg.seed, _TAG_NEG)
    trace: list[dict] = []
    current_difficulty = None
    train_z = train_m = eval_z = eval_m = None
    soft = cfg.channel_eve.is_soft
    last_finite = float("nan")
    for epoch, difficulty in enumerate(schedule.difficulties):
        if difficulty != current_difficulty:
            current_difficulty = difficulty
            stage_cfg = _with_difficulty(cfg, difficulty)
            tb = pipeline.generate(stage_cfg, schedule.train_samples,
                                   seed=_stage_seed(cfg.seed, _TAG_TRAIN_DATA, epoch))
            eb = pipeline.generate(stage_cfg, schedule.eval_samples,
                                   seed=_stage_seed(cfg.seed, _TAG_EVAL_DATA, epoch))
            train_z = to_model_input(tb.z_eve, soft)
            train_m = tb.m_s
            eval_z, eval_m = eb.z_eve, eb.m_s
        for step, idx in enumerate(_epoch_batches(train_z.shape[0],
                                                  schedule.batch_size, shuffle_rng)):
            loss = model.loss(train_z[idx], train_m[idx])
            if not np.isfinite(loss.value):
                raise TrainingDiverged(epoch, step, last_finite)
            last_finite = float(loss.value)
            opt.zero_grad()
            ad.backward(loss)
            ad.clip_global_norm(params, schedule.clip_norm)
            opt.step()
            ema.update()
        if eval_each_epoch or epoch == schedule.epochs - 1:
            ema.swap_in()
            rep = vclub_estimate(model, eval_z, eval_m, soft, neg_rng)
            ema.swap_out()
            trace.append({"epoch": epoch, "difficulty": difficulty,
                          "raw_bits": rep.raw_bits,
                          "projected_bits": rep.projected_bits,
                          "loss": last_finite})
    model._ema_shadow = ema.shadow  # kept for checkpointing/eval
    return model, trace


def _stage_seed(seed: int, tag: int, epoch: int) -> int:
    # distinct 64-bit seed per (purpose, epoch); pipeline re-derives substreams
    return (seed * 1_000_003 + tag * 7919 + epoch) & (2**64 - 1)


def final_reports_by_difficulty(trace: list[dict]) -> dict[float, dict]:
    """Last trace entry per difficulty (the headline number)."""
    out: dict[float, dict] = {}
    for row in trace:
        out[row["difficulty"]] = row
    return out


def ema_vclub(model: CnbmmModel, cfg: SystemConfig, difficulty: float,
              eval_samples: int, seed_tag: int = 99) -> LeakageReport:
    """Fresh-data vCLUB evaluation with the model's EMA shadow swapped in."""
    stage_cfg = _with_difficulty(cfg, difficulty)
    eb = pipeline.generate(stage_cfg, eval_samples,
                           seed=_stage_seed(cfg.seed, seed_tag, 0))
    shadow = getattr(model, "_ema_shadow", None)
    params = model.parameters()
    if shadow is not None:
        stash = [p.value for p in params]
        for p, s in zip(params, shadow):
            p.value = s
    try:
        return vclub_estimate(model, eb.z_eve, eb.m_s,
                              cfg.channel_eve.is_soft,
                              substream(cfg.seed, _TAG_NEG, seed_tag))
    finally:
        if shadow is not None:
            for p, s in zip(params, stash):
                p.value = s
