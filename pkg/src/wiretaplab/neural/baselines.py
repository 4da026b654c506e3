"""Baseline leakage estimators: a Donsker-Varadhan critic (MINE) with an
EMA-corrected gradient, and the Gaussian-conditional vCLUB.

Widths are scaled-down versions of the full-size critics; both consume the
same +-1-mapped inputs as the mixture model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import pipeline
from ..pipeline import SystemConfig, substream
from . import autodiff as ad
from .cnbmm import Mlp, _head, to_model_input
from .training import (LeakageReport, TrainSchedule, _derangement,
                       _epoch_batches, _stage_seed, _with_difficulty,
                       _TAG_TRAIN_DATA, _TAG_EVAL_DATA, _TAG_SHUFFLE,
                       _TAG_INIT, _TAG_NEG, TrainingDiverged)

_LN2 = math.log(2.0)
_T_CLAMP = 40.0  # critic outputs beyond this would overflow exp()


class MineCritic:
    """Scalar critic T(m_s, z) on the concatenated input."""

    def __init__(self, n_in: int, k: int, hidden: tuple[int, ...],
                 rng: np.random.Generator):
        self.trunk = Mlp("critic", n_in + k, hidden, rng)
        self.out = _head("critic/out", self.trunk.d_out, 1, rng)

    def parameters(self):
        return list(self.trunk.parameters()) + list(self.out)

    def forward(self, m_pm: np.ndarray, z_in: np.ndarray) -> ad.Tensor:
        x = ad.constant(np.concatenate([m_pm, z_in], axis=1).astype(np.float32))
        return ad.affine(self.trunk.forward(x), *self.out)


def mine_estimate(cfg: SystemConfig, schedule: TrainSchedule,
                  hidden: tuple[int, ...] = (128, 256, 128, 64)) -> LeakageReport:
    """Train a DV critic on the curriculum; the gradient uses an EMA-smoothed
    denominator (standard bias correction), the reported estimate the exact
    DV form. Overflowing critic outputs are clamped and counted."""
    rng_init = substream(cfg.seed, _TAG_INIT, 1)
    critic = MineCritic(cfg.n, cfg.k, hidden, rng_init)
    params = critic.parameters()
    opt = ad.Adam(params, lr=schedule.lr, weight_decay=schedule.weight_decay)
    shuffle_rng = substream(cfg.seed, _TAG_SHUFFLE, 1)
    neg_rng = substream(cfg.seed, _TAG_NEG, 1)
    soft = cfg.channel_eve.is_soft
    ema_denom = None
    overflow_count = 0
    trace = []
    current = None
    train_z = train_m = eval_z = eval_m = None
    for epoch, difficulty in enumerate(schedule.difficulties):
        if difficulty != current:
            current = difficulty
            stage = _with_difficulty(cfg, difficulty)
            tb = pipeline.generate(stage, schedule.train_samples,
                                   seed=_stage_seed(cfg.seed, _TAG_TRAIN_DATA, epoch))
            eb = pipeline.generate(stage, schedule.eval_samples,
                                   seed=_stage_seed(cfg.seed, _TAG_EVAL_DATA, epoch))
            train_z = to_model_input(tb.z_eve, soft)
            train_m = to_model_input(tb.m_s, False)
            eval_z = to_model_input(eb.z_eve, soft)
            eval_m = to_model_input(eb.m_s, False)
        for step, idx in enumerate(_epoch_batches(train_z.shape[0],
                                                  schedule.batch_size, shuffle_rng)):
            zb, mb = train_z[idx], train_m[idx]
            perm = _derangement(len(idx), neg_rng)
            t_joint = critic.forward(mb, zb)
            t_marg = critic.forward(mb[perm], zb)
            if (np.abs(t_joint.value).max() > _T_CLAMP
                    or np.abs(t_marg.value).max() > _T_CLAMP):
                overflow_count += 1
            t_joint = ad.clamp(t_joint, -_T_CLAMP, _T_CLAMP)
            t_marg = ad.clamp(t_marg, -_T_CLAMP, _T_CLAMP)
            exp_marg = ad.reduce_mean(ad.exp(t_marg))
            denom = float(exp_marg.value)
            ema_denom = denom if ema_denom is None else 0.99 * ema_denom + 0.01 * denom
            # d/dtheta log E[e^T] = E[e^T dT] / E[e^T]; the EMA denominator is
            # a constant w.r.t. theta
            loss = ad.add(ad.neg(ad.reduce_mean(t_joint)),
                          ad.scale(exp_marg, 1.0 / max(ema_denom, 1e-12)))
            if not np.isfinite(loss.value):
                raise TrainingDiverged(epoch, step, float("nan"))
            opt.zero_grad()
            ad.backward(loss)
            ad.clip_global_norm(params, schedule.clip_norm)
            opt.step()
        raw = _mine_dv_value(critic, eval_m, eval_z, neg_rng)
        trace.append({"epoch": epoch, "difficulty": difficulty, "raw_bits": raw})
    raw = trace[-1]["raw_bits"]
    return LeakageReport(estimator="mine", raw_bits=raw, projected_bits=0.0,
                         k=cfg.k, eval_count=eval_z.shape[0], trace=trace,
                         extras={"overflow_clamps": overflow_count})


def _mine_dv_value(critic: MineCritic, m_pm, z_in, rng) -> float:
    perm = _derangement(z_in.shape[0], rng)
    tj = np.clip(critic.forward(m_pm, z_in).value[:, 0], -_T_CLAMP, _T_CLAMP)
    tm = np.clip(critic.forward(m_pm[perm], z_in).value[:, 0], -_T_CLAMP, _T_CLAMP)
    mx = tm.max()
    log_mean_exp = mx + math.log(np.exp(tm - mx).mean())
    return float((tj.mean() - log_mean_exp) / _LN2)


class GaussianConditional:
    """Network predicting per-bit mean and diagonal log-variance of m_s."""

    def __init__(self, n_in: int, k: int, hidden: tuple[int, ...],
                 rng: np.random.Generator):
        self.trunk = Mlp("gauss", n_in, hidden, rng)
        self.mu = _head("gauss/mu", self.trunk.d_out, k, rng)
        self.logvar = _head("gauss/logvar", self.trunk.d_out, k, rng)

    def parameters(self):
        return list(self.trunk.parameters()) + list(self.mu) + list(self.logvar)

    def log_lik_nats(self, z_in: np.ndarray, m: np.ndarray) -> ad.Tensor:
        h = self.trunk.forward(ad.constant(z_in))
        mu = ad.affine(h, *self.mu)
        lv = ad.clamp(ad.affine(h, *self.logvar), -10.0, 10.0)
        resid = ad.square(ad.sub(ad.constant(m.astype(np.float32)), mu))
        per_bit = ad.add(ad.mul(resid, ad.exp(ad.neg(lv))), lv)
        ll = ad.scale(ad.reduce_sum(per_bit, axis=1), -0.5)
        return ad.add(ll, -0.5 * m.shape[1] * math.log(2.0 * math.pi))


def gauss_club_estimate(cfg: SystemConfig, schedule: TrainSchedule,
                        hidden: tuple[int, ...] = (128, 256, 128, 64)) -> LeakageReport:
    """Original vCLUB with a Gaussian variational conditional: fit by maximum
    likelihood, then positive-minus-shuffled log-likelihood difference."""
    rng_init = substream(cfg.seed, _TAG_INIT, 2)
    net = GaussianConditional(cfg.n, cfg.k, hidden, rng_init)
    params = net.parameters()
    opt = ad.Adam(params, lr=schedule.lr, weight_decay=schedule.weight_decay)
    shuffle_rng = substream(cfg.seed, _TAG_SHUFFLE, 2)
    neg_rng = substream(cfg.seed, _TAG_NEG, 2)
    soft = cfg.channel_eve.is_soft
    trace = []
    current = None
    train_z = train_m = eval_z = eval_m = None
    for epoch, difficulty in enumerate(schedule.difficulties):
        if difficulty != current:
            current = difficulty
            stage = _with_difficulty(cfg, difficulty)
            tb = pipeline.generate(stage, schedule.train_samples,
                                   seed=_stage_seed(cfg.seed, _TAG_TRAIN_DATA, epoch))
            eb = pipeline.generate(stage, schedule.eval_samples,
                                   seed=_stage_seed(cfg.seed, _TAG_EVAL_DATA, epoch))
            train_z = to_model_input(tb.z_eve, soft)
            train_m = tb.m_s.astype(np.float32)
            eval_z = to_model_input(eb.z_eve, soft)
            eval_m = eb.m_s.astype(np.float32)
        for step, idx in enumerate(_epoch_batches(train_z.shape[0],
                                                  schedule.batch_size, shuffle_rng)):
            loss = ad.neg(ad.reduce_mean(net.log_lik_nats(train_z[idx], train_m[idx])))
            if not np.isfinite(loss.value):
                raise TrainingDiverged(epoch, step, float("nan"))
            opt.zero_grad()
            ad.backward(loss)
            ad.clip_global_norm(params, schedule.clip_norm)
            opt.step()
        perm = _derangement(eval_z.shape[0], neg_rng)
        pos = float(net.log_lik_nats(eval_z, eval_m).value.mean())
        neg = float(net.log_lik_nats(eval_z, eval_m[perm]).value.mean())
        trace.append({"epoch": epoch, "difficulty": difficulty,
                      "raw_bits": (pos - neg) / _LN2})
    raw = trace[-1]["raw_bits"]
    return LeakageReport(estimator="gauss-club", raw_bits=raw, projected_bits=0.0,
                         k=cfg.k, eval_count=eval_z.shape[0], trace=trace)
