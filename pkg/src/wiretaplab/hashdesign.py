"""Closed-loop selection of the hash output size k.

Starting from the entropy-bound initial point, the loop walks k one bit at a
time, re-estimating leakage at each candidate, and stops on a sign change of
(estimate - budget). The returned k is the one of the last two candidates whose
estimate fits the budget, ties broken toward more secret bits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds, oracle
from .pipeline import SystemConfig

_ESTIMATORS = ("oracle", "cnbmm", "gaussian-club", "mine")
_TERMINATIONS = ("sign-change", "exact-hit", "iter-cap", "boundary")

# treats the measure-zero "estimate equals budget" branch as an interval
DEAD_BAND_BITS = 1e-3


@dataclass(frozen=True)
class DesignConfig:
    """Inputs of the k-design loop: leakage budget, base system, estimator."""

    max_leakage: float  # budget in bits
    base: SystemConfig  # k field is the starting point for substream reuse only
    estimator: str = "oracle"
    schedule: object = None  # TrainSchedule, required for neural estimators
    retrain: str = "fresh-per-k"
    max_iters: int = 32
    mc_samples: int = 200_000  # oracle fallback when enumeration is infeasible

    def __post_init__(self):
        if not self.max_leakage > 0:
            raise ValueError("leakage budget must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.estimator not in _ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; "
                             f"choose from {_ESTIMATORS}")
        if self.estimator in ("cnbmm", "gaussian-club", "mine") \
                and self.schedule is None:
            raise ValueError(f"estimator {self.estimator!r} needs a schedule")
        if self.retrain not in ("fresh-per-k", "reduced-epochs"):
            raise ValueError("retrain must be fresh-per-k or reduced-epochs")


@dataclass
class DesignTrace:
    """Per-iteration record of the design loop plus the final verdict."""

    records: list = field(default_factory=list)
    final_k: int = 0
    final_leakage: float = float("nan")
    termination: str = ""
    k_init: int = 0
    num_updates: int = 0  # count of k changes, bounded by |k_init - final_k| + 1
    budget_met: bool = False
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for prev, cur in zip(self.records, self.records[1:]):
            if abs(cur["k"] - prev["k"]) != 1:
                raise ValueError("consecutive k must differ by exactly 1")
        if self.termination and self.termination not in _TERMINATIONS:
            raise ValueError(f"bad termination {self.termination!r}")

    def as_dict(self) -> dict:
        return {"records": self.records, "final_k": self.final_k,
                "final_leakage": self.final_leakage,
                "termination": self.termination, "k_init": self.k_init,
                "num_updates": self.num_updates, "budget_met": self.budget_met,
                "extras": self.extras}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _oracle_leakage(cfg: SystemConfig, mc_samples: int) -> tuple[float, dict]:
    exhaustive = (cfg.channel_eve.kind == "bsc"
                  and cfg.n <= oracle.MAX_EXHAUSTIVE_N)
    if exhaustive:
        res = oracle.exact_mi(cfg, method="exhaustive")
    else:
        res = oracle.exact_mi(cfg, method="mc", mc_samples=mc_samples)
    return res["value_bits"], {"method": res["method"],
                               "stderr": res["stderr_bits"]}


def _neural_leakage(cfg: SystemConfig, dcfg: DesignConfig) -> tuple[float, dict]:
    from .neural import (CnbmmConfig, ema_vclub, gauss_club_estimate,
                        mine_estimate, reduced, train_cnbmm)

    schedule = dcfg.schedule
    if dcfg.retrain == "reduced-epochs":
        schedule = reduced(schedule)
    if dcfg.estimator == "cnbmm":
        mcfg = CnbmmConfig(n_in=cfg.n, k_out=cfg.k)
        model, trace = train_cnbmm(cfg, mcfg, schedule, eval_each_epoch=False)
        rep = ema_vclub(model, cfg, schedule.difficulties[-1],
                        schedule.eval_samples)
    elif dcfg.estimator == "gaussian-club":
        rep = gauss_club_estimate(cfg, schedule)
    else:
        rep = mine_estimate(cfg, schedule)
    return rep.raw_bits, {"estimator_report": rep.as_dict()}


def estimate_leakage(cfg: SystemConfig, dcfg: DesignConfig) -> tuple[float, dict]:
    """Projected leakage estimate (bits, clamped to [0, k]) for one system."""
    if dcfg.estimator == "oracle":
        raw, extras = _oracle_leakage(cfg, dcfg.mc_samples)
    else:
        raw, extras = _neural_leakage(cfg, dcfg)
    proj = float(min(max(raw, 0.0), cfg.k))
    extras["raw_bits"] = raw
    return proj, extras


def initial_k(dcfg: DesignConfig) -> tuple[int, dict]:
    """Entropy-bound starting point: floor(H(M | Z^n) - g), clamped to [1, q-1].

    H is the exact conditional entropy of the full encoder input given the
    eavesdropper output; g comes from minimizing the smoothing bound B.
    """
    cfg = dcfg.base
    ent = oracle.exact_cond_entropy(cfg, target="encoder")
    h_cond = ent["direct_bits"]
    gap = bounds.minimize_b(cfg)
    k0, warn = bounds.k_init(h_cond, gap.g_bits, cfg.q)
    k0 = min(max(k0, 1), cfg.q - 1)
    return k0, {"h_cond_bits": h_cond, "g_bits": gap.g_bits,
                "eps_star": gap.eps_star, "low_entropy_warning": warn}


def design(dcfg: DesignConfig) -> DesignTrace:
    """Walk k until the leakage estimate crosses the budget.

    Per iteration: rebuild the system at the current k (fresh hash pair and
    dataset via the deterministic substreams), estimate leakage, then move k
    toward the budget. Stops on sign change, dead-band hit, a boundary k that
    still wants to move outward, or the iteration cap.
    """
    base = dcfg.base
    eps = dcfg.max_leakage
    k0, init_extras = initial_k(dcfg)
    trace = DesignTrace(k_init=k0,
                        extras={"init": init_extras, "budget": eps})

    k = k0
    prev_sign = None
    prev_record = None
    for it in range(dcfg.max_iters):
        cfg_k = base.with_k(k)
        est, extras = estimate_leakage(cfg_k, dcfg)
        delta = est - eps
        record = {"iteration": it, "k": k, "leakage_bits": est, **extras}
        trace.records.append(record)

        if abs(delta) <= DEAD_BAND_BITS:
            record["decision"] = "stop"
            _finish(trace, record, "exact-hit")
            return trace
        sign = 1.0 if delta > 0 else -1.0
        if prev_sign is not None and sign * prev_sign <= 0:
            record["decision"] = "stop"
            # pick whichever of the last two candidates fits the budget;
            # both may fit after a dead-band-width crossing, prefer larger k
            fits = [r for r in (prev_record, record)
                    if r["leakage_bits"] <= eps]
            chosen = max(fits, key=lambda r: r["k"]) if fits else record
            _finish(trace, chosen, "sign-change")
            return trace

        move = 1 if delta < 0 else -1
        nxt = k + move
        if nxt < 1 or nxt > base.q - 1:
            record["decision"] = "stop"
            _finish(trace, record, "boundary")
            return trace
        record["decision"] = "increase-k" if move > 0 else "decrease-k"
        prev_sign, prev_record, k = sign, record, nxt

    _finish(trace, trace.records[-1], "iter-cap")
    return trace


def _finish(trace: DesignTrace, chosen: dict, termination: str) -> None:
    trace.final_k = chosen["k"]
    trace.final_leakage = chosen["leakage_bits"]
    trace.termination = termination
    trace.num_updates = sum(
        1 for a, b in zip(trace.records, trace.records[1:])
        if b["k"] != a["k"])
    budget = trace.extras.get("budget", float("inf"))
    trace.budget_met = bool(chosen["leakage_bits"] <= budget + DEAD_BAND_BITS)
