"""Leakage estimators: autodiff engine, Bernoulli-mixture model, baselines."""

from .cnbmm import CnbmmConfig, CnbmmModel, paper_scale_config  # noqa: F401
from .training import (LeakageReport, TrainSchedule, bsc_curriculum,  # noqa: F401
                       awgn_curriculum, fixed_schedule, reduced, train_cnbmm,
                       vclub_estimate, final_reports_by_difficulty, ema_vclub)
from .baselines import mine_estimate, gauss_club_estimate  # noqa: F401
