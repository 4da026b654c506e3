"""Closed-loop hash-size design: walk, termination reasons, trace invariants."""
import pytest

from wiretaplab import channel, ecc, hashdesign, oracle, pipeline
from wiretaplab.hashdesign import DEAD_BAND_BITS, DesignConfig, DesignTrace


def _base(pe=0.2, k=3, b=1, code="hamming74", seed=42):
    return pipeline.SystemConfig(k=k, b=b, code=ecc.parse_code(code),
                                 channel_eve=channel.bsc(pe),
                                 channel_bob=channel.bsc(pe),
                                 uhf_enabled=True, seed=seed)


class TestConfig:
    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            DesignConfig(max_leakage=0.0, base=_base())

    def test_unknown_estimator(self):
        with pytest.raises(ValueError):
            DesignConfig(max_leakage=1.0, base=_base(), estimator="svm")

    def test_neural_estimator_needs_schedule(self):
        with pytest.raises(ValueError):
            DesignConfig(max_leakage=1.0, base=_base(), estimator="cnbmm")

    def test_bad_retrain_mode(self):
        with pytest.raises(ValueError):
            DesignConfig(max_leakage=1.0, base=_base(), retrain="cached")

    def test_max_iters_at_least_one(self):
        with pytest.raises(ValueError):
            DesignConfig(max_leakage=1.0, base=_base(), max_iters=0)


class TestTrace:
    def test_consecutive_k_steps_of_one(self):
        with pytest.raises(ValueError):
            DesignTrace(records=[{"k": 1}, {"k": 3}])

    def test_bad_termination_rejected(self):
        with pytest.raises(ValueError):
            DesignTrace(termination="gave-up")

    def test_roundtrips_to_json(self):
        t = DesignTrace(records=[{"k": 2}], final_k=2, final_leakage=0.5,
                        termination="boundary", k_init=2, num_updates=0,
                        budget_met=True)
        assert '"final_k": 2' in t.to_json()


class TestEstimateLeakage:
    def test_half_channel_clamps_to_zero(self):
        dcfg = DesignConfig(max_leakage=1.0, base=_base(0.5))
        est, extras = hashdesign.estimate_leakage(_base(0.5), dcfg)
        assert est == 0.0
        assert "raw_bits" in extras

    def test_matches_oracle_directly(self):
        cfg = _base(0.2)
        dcfg = DesignConfig(max_leakage=1.0, base=cfg)
        est, _ = hashdesign.estimate_leakage(cfg, dcfg)
        assert est == pytest.approx(oracle.exact_mi(cfg)["value_bits"])


class TestInitialK:
    def test_in_valid_range_with_extras(self):
        dcfg = DesignConfig(max_leakage=1.0, base=_base(0.2))
        k0, extras = hashdesign.initial_k(dcfg)
        assert 1 <= k0 <= _base().q - 1
        for key in ("h_cond_bits", "g_bits", "eps_star"):
            assert key in extras


class TestDesign:
    def test_sign_change_selects_fitting_k(self):
        dcfg = DesignConfig(max_leakage=1.0, base=_base(0.2))
        trace = hashdesign.design(dcfg)
        assert trace.termination == "sign-change"
        assert trace.final_k == 2
        assert trace.budget_met
        assert trace.final_leakage <= 1.0 + DEAD_BAND_BITS
        assert trace.num_updates <= abs(trace.k_init - trace.final_k) + 1

    def test_clean_channel_hits_lower_boundary(self):
        # every k leaks all its bits, so the walk bottoms out at k=1 unmet
        dcfg = DesignConfig(max_leakage=0.5, base=_base(0.0))
        trace = hashdesign.design(dcfg)
        assert trace.termination == "boundary"
        assert trace.final_k == 1
        assert not trace.budget_met

    def test_half_channel_hits_upper_boundary(self):
        # zero leakage everywhere, so the walk tops out at k = q - 1 met
        dcfg = DesignConfig(max_leakage=0.5, base=_base(0.5))
        trace = hashdesign.design(dcfg)
        assert trace.termination == "boundary"
        assert trace.final_k == _base().q - 1
        assert trace.budget_met

    def test_exact_budget_stops_in_dead_band(self):
        cfg = _base(0.2)
        k0, _ = hashdesign.initial_k(DesignConfig(max_leakage=1.0, base=cfg))
        mi = oracle.exact_mi(cfg.with_k(k0))["value_bits"]
        trace = hashdesign.design(DesignConfig(max_leakage=mi, base=cfg))
        assert trace.termination == "exact-hit"
        assert trace.final_k == k0
        assert len(trace.records) == 1

    def test_iter_cap(self):
        dcfg = DesignConfig(max_leakage=1.0, base=_base(0.2), max_iters=1)
        trace = hashdesign.design(dcfg)
        assert trace.termination == "iter-cap"
        assert len(trace.records) == 1

    def test_walk_is_monotone_until_stop(self):
        dcfg = DesignConfig(max_leakage=1.0, base=_base(0.2))
        trace = hashdesign.design(dcfg)
        ks = [r["k"] for r in trace.records]
        steps = [b - a for a, b in zip(ks, ks[1:])]
        assert len(set(steps)) <= 1  # never reverses direction mid-walk

    def test_deterministic(self):
        dcfg = DesignConfig(max_leakage=1.0, base=_base(0.2))
        assert hashdesign.design(dcfg).as_dict() == \
            hashdesign.design(dcfg).as_dict()
