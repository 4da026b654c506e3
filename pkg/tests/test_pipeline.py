"""End-to-end link pipeline: generation, receive chain, persistence."""
import numpy as np
import pytest

from wiretaplab import channel, ecc, gf2, pipeline


def _cfg(pe=0.1, k=3, b=1, code="hamming74", uhf=True, seed=42,
         pe_bob=None):
    return pipeline.SystemConfig(
        k=k, b=b, code=ecc.parse_code(code),
        channel_eve=channel.bsc(pe),
        channel_bob=channel.bsc(pe if pe_bob is None else pe_bob),
        uhf_enabled=uhf, seed=seed)


class TestConfig:
    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            _cfg(k=3, b=3)  # hamming74 takes 4 input bits

    def test_with_k_preserves_q(self):
        cfg = _cfg(k=3, b=1)
        moved = cfg.with_k(1)
        assert (moved.k, moved.b, moved.q) == (1, 3, 4)

    def test_uhf_pair_is_cached_and_seeded(self):
        cfg = _cfg(seed=7)
        assert cfg.uhf_pair() is _cfg(seed=7).uhf_pair()
        assert cfg.uhf_pair().a != _cfg(seed=8).uhf_pair().a


class TestGenerate:
    def test_shapes_and_encoding_consistency(self):
        cfg = _cfg()
        batch = pipeline.generate(cfg, 500, with_bob=True)
        assert batch.m_s.shape == (500, 3)
        assert batch.x.shape == (500, 7)
        assert np.array_equal(batch.x, ecc.encode_batch(cfg.code, batch.m))
        pair = cfg.uhf_pair()
        assert np.array_equal(gf2.uhf_hash_batch(pair, batch.m), batch.m_s)

    def test_no_uhf_prefix_convention(self):
        cfg = _cfg(uhf=False)
        batch = pipeline.generate(cfg, 200)
        assert np.array_equal(batch.m[:, :3], batch.m_s)
        assert np.array_equal(batch.m[:, 3:], batch.b_pad)

    def test_deterministic_per_seed(self):
        a = pipeline.generate(_cfg(), 100, with_bob=True)
        b = pipeline.generate(_cfg(), 100, with_bob=True)
        c = pipeline.generate(_cfg(), 100, with_bob=True, seed=1)
        assert np.array_equal(a.z_eve, b.z_eve)
        assert np.array_equal(a.y_bob, b.y_bob)
        assert not np.array_equal(a.z_eve, c.z_eve)

    def test_eve_bob_noise_independent(self):
        cfg = _cfg(pe=0.5, pe_bob=0.5)
        batch = pipeline.generate(cfg, 2000, with_bob=True)
        agree = (batch.z_eve == batch.y_bob).mean()
        assert 0.45 < agree < 0.55

    def test_verify_batch_accepts_own_output(self):
        cfg = _cfg()
        batch = pipeline.generate(cfg, 300)
        pipeline.verify_batch(cfg, batch)


class TestReceive:
    def test_noiseless_roundtrip_recovers_secret(self):
        for uhf in (True, False):
            cfg = _cfg(pe=0.0, uhf=uhf)
            batch = pipeline.generate(cfg, 200, with_bob=True)
            m_hat, m_s_hat = pipeline.bob_receive(cfg, batch.y_bob)
            assert np.array_equal(m_hat, batch.m)
            assert np.array_equal(m_s_hat, batch.m_s)

    def test_correctable_noise_roundtrip(self):
        # single bit flips stay within hamming74's correction radius
        cfg = _cfg(pe=0.0)
        batch = pipeline.generate(cfg, 100, with_bob=True)
        y = batch.y_bob.copy()
        rng = np.random.default_rng(0)
        y[np.arange(100), rng.integers(0, 7, 100)] ^= 1
        m_hat, m_s_hat = pipeline.bob_receive(cfg, y)
        assert np.array_equal(m_s_hat, batch.m_s)

    def test_ber_zero_on_clean_channel(self):
        res = pipeline.measure_ber(_cfg(pe=0.0), 500)
        assert res["raw_ber"] == 0.0
        assert res["secret_ber"] == 0.0

    def test_ber_rises_with_noise(self):
        low = pipeline.measure_ber(_cfg(pe=0.02), 4000)
        high = pipeline.measure_ber(_cfg(pe=0.3), 4000)
        assert high["secret_ber"] > low["secret_ber"]


class TestPersistence:
    @pytest.mark.parametrize("uhf", [True, False])
    def test_dataset_roundtrip_bsc(self, uhf):
        cfg = _cfg(uhf=uhf)
        batch = pipeline.generate(cfg, 257, with_bob=True)
        blob = pipeline.save_dataset(cfg, batch)
        header, back = pipeline.load_dataset(blob)
        assert header["k"] == 3 and header["uhf_enabled"] == uhf
        assert np.array_equal(back.m_s, batch.m_s)
        assert np.array_equal(back.z_eve, batch.z_eve)
        assert np.array_equal(back.y_bob, batch.y_bob)
        assert pipeline.save_dataset(cfg, back) == blob

    def test_dataset_roundtrip_awgn(self):
        cfg = pipeline.SystemConfig(
            k=3, b=1, code=ecc.parse_code("hamming74"),
            channel_eve=channel.awgn(4.0), channel_bob=channel.awgn(4.0))
        batch = pipeline.generate(cfg, 100)
        header, back = pipeline.load_dataset(pipeline.save_dataset(cfg, batch))
        assert back.z_eve.dtype == np.float32
        assert np.array_equal(back.z_eve, batch.z_eve)

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError):
            pipeline.load_dataset(b"NOPE" + b"\x00" * 64)


class TestSubstreams:
    def test_distinct_tags_distinct_streams(self):
        a = pipeline.substream(42, 0).integers(0, 2**31, 8)
        b = pipeline.substream(42, 1).integers(0, 2**31, 8)
        a2 = pipeline.substream(42, 0).integers(0, 2**31, 8)
        assert np.array_equal(a, a2)
        assert not np.array_equal(a, b)
