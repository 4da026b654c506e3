"""End-to-end wiretap link: (M_s, B) -> inverse UHF -> ENC -> channel ->
{Eve observation, Bob decode -> UHF -> M_s estimate}.

Randomness is derived from the config seed through fixed-purpose substreams
(message bits, padding bits, Eve noise, Bob noise, UHF draw), so datasets are
bit-reproducible given (seed, count) and Eve/Bob noise is independent per the
same-marginal decomposition.
"""
from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as chanmod
from . import ecc, gf2

MAGIC_WTP = b"WTP1"
WTP_VERSION = 1

# substream purposes
_TAG_UHF, _TAG_MSG, _TAG_PAD, _TAG_EVE, _TAG_BOB = range(5)


def substream(seed: int, *tags: int) -> np.random.Generator:
    """Deterministic child RNG for a (seed, purpose...) tuple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *tags]))


@dataclass(frozen=True)
class SystemConfig:
    """One wiretap system instance, parameterized by (n, k, b) plus code,
    channels, UHF switch and seed."""

    k: int
    b: int
    code: ecc.CodeSpec
    channel_eve: chanmod.ChannelModel
    channel_bob: chanmod.ChannelModel
    uhf_enabled: bool = True
    seed: int = 42
    fresh_uhf_per_sample: bool = False  # LHL-style averaging experiments only

    def __post_init__(self):
        if self.k < 1 or self.b < 0:
            raise ValueError("need k >= 1 and b >= 0")
        if self.code.q_in != self.q:
            raise ValueError(
                f"code input size {self.code.q_in} != k + b = {self.q}")

    @property
    def q(self) -> int:
        return self.k + self.b

    @property
    def n(self) -> int:
        return self.code.n

    def with_k(self, k: int) -> "SystemConfig":
        """Same system with the secret/padding split moved to (k, q - k)."""
        return replace(self, k=k, b=self.q - k)

    def uhf_pair(self) -> gf2.UhfPair:
        return _derive_uhf(self.seed, self.q, self.k)

    def describe(self) -> dict:
        return {
            "n": self.n, "k": self.k, "b": self.b, "q": self.q,
            "code": self.code.name,
            "channel_eve": self.channel_eve.name,
            "channel_bob": self.channel_bob.name,
            "uhf_enabled": self.uhf_enabled,
            "seed": self.seed,
        }


@functools.lru_cache(maxsize=256)
def _derive_uhf(seed: int, q: int, k: int) -> gf2.UhfPair:
    return gf2.UhfPair.random(q, k, substream(seed, _TAG_UHF))


@dataclass
class SampleBatch:
    """Aligned per-record arrays produced by the pipeline."""

    count: int
    m_s: np.ndarray      # (count, k) uint8
    b_pad: np.ndarray    # (count, b) uint8
    m: np.ndarray        # (count, q) uint8
    x: np.ndarray        # (count, n) uint8
    z_eve: np.ndarray    # (count, n) uint8 or float32
    y_bob: np.ndarray | None = None
    eve_soft: bool = False

    def __post_init__(self):
        for arr in (self.m_s, self.b_pad, self.m, self.x, self.z_eve):
            if arr.shape[0] != self.count:
                raise ValueError("misaligned batch arrays")
        if self.y_bob is not None and self.y_bob.shape[0] != self.count:
            raise ValueError("misaligned y_bob")


def _apply_uhf_inverse(cfg: SystemConfig, m_s: np.ndarray, b_pad: np.ndarray) -> np.ndarray:
    if not cfg.uhf_enabled:
        return np.concatenate([m_s, b_pad], axis=1)
    if cfg.fresh_uhf_per_sample:
        out = np.empty((m_s.shape[0], cfg.q), dtype=np.uint8)
        for i in range(m_s.shape[0]):
            pair = gf2.UhfPair.random(cfg.q, cfg.k, substream(cfg.seed, _TAG_UHF, i))
            out[i] = gf2.uhf_inverse_batch(pair, m_s[i:i + 1], b_pad[i:i + 1])[0]
        return out
    return gf2.uhf_inverse_batch(cfg.uhf_pair(), m_s, b_pad)


def generate(cfg: SystemConfig, count: int, with_bob: bool = False,
             seed: int | None = None) -> SampleBatch:
    """Draw ``count`` uniform (m_s, b) records and run them through the link."""
    if count < 1:
        raise ValueError("count must be >= 1")
    seed = cfg.seed if seed is None else seed
    m_s = substream(seed, _TAG_MSG).integers(0, 2, (count, cfg.k), dtype=np.uint8)
    b_pad = substream(seed, _TAG_PAD).integers(0, 2, (count, cfg.b), dtype=np.uint8)
    m = _apply_uhf_inverse(cfg, m_s, b_pad)
    x = ecc.encode_batch(cfg.code, m)
    z_eve = chanmod.transmit(cfg.channel_eve, x, substream(seed, _TAG_EVE))
    y_bob = None
    if with_bob:
        y_bob = chanmod.transmit(cfg.channel_bob, x, substream(seed, _TAG_BOB))
    return SampleBatch(count=count, m_s=m_s, b_pad=b_pad, m=m, x=x,
                       z_eve=z_eve, y_bob=y_bob,
                       eve_soft=cfg.channel_eve.is_soft)


def bob_receive(cfg: SystemConfig, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decode Bob's observations and hash down to secret estimates.

    ``y`` is (count, n); returns (m_hat (count, q), m_s_hat (count, k))."""
    hard = chanmod.hard_decision(cfg.channel_bob, np.atleast_2d(y))
    m_hat, _, _ = ecc.decode_batch(cfg.code, hard)
    if not cfg.uhf_enabled:
        return m_hat, m_hat[:, : cfg.k]
    return m_hat, gf2.uhf_hash_batch(cfg.uhf_pair(), m_hat)


def measure_ber(cfg: SystemConfig, count: int, seed: int | None = None) -> dict:
    """Raw (M vs decoded M) and secret (M_s vs hashed estimate) bit error
    rates with binomial 95% half-widths."""
    batch = generate(cfg, count, with_bob=True, seed=seed)
    m_hat, m_s_hat = bob_receive(cfg, batch.y_bob)
    raw_err = int((m_hat != batch.m).sum())
    sec_err = int((m_s_hat != batch.m_s).sum())
    raw_n = count * cfg.q
    sec_n = count * cfg.k
    def _ci(errs, n):
        p = errs / n
        return 1.96 * float(np.sqrt(max(p * (1 - p), 1e-12) / n))
    return {
        "raw_ber": raw_err / raw_n,
        "raw_ber_halfwidth": _ci(raw_err, raw_n),
        "secret_ber": sec_err / sec_n,
        "secret_ber_halfwidth": _ci(sec_err, sec_n),
        "count": count,
    }


def verify_batch(cfg: SystemConfig, batch: SampleBatch, fraction: float = 0.01,
                 rng: np.random.Generator | None = None) -> bool:
    """Recompute the per-record consistency invariant on a sample of records."""
    if cfg.fresh_uhf_per_sample:
        raise ValueError("spot-check not defined for fresh-per-sample mode")
    rng = rng or np.random.default_rng(0)
    n_check = max(1, int(batch.count * fraction))
    idx = rng.choice(batch.count, size=min(n_check, batch.count), replace=False)
    m_ref = _apply_uhf_inverse(cfg, batch.m_s[idx], batch.b_pad[idx])
    if not np.array_equal(m_ref, batch.m[idx]):
        return False
    return bool(np.array_equal(ecc.encode_batch(cfg.code, m_ref), batch.x[idx]))


def _pack_field(bits: np.ndarray) -> bytes:
    return gf2.pack_bits(bits.reshape(-1)).astype("<u8").tobytes()


def _unpack_field(blob: bytes, offset: int, count: int, width: int) -> tuple[np.ndarray, int]:
    nbits = count * width
    nwords = (nbits + 63) // 64
    words = np.frombuffer(blob[offset:offset + nwords * 8], dtype="<u8")
    bits = gf2.unpack_bits(words, nbits).reshape(count, width)
    return bits, offset + nwords * 8


def save_dataset(cfg: SystemConfig, batch: SampleBatch) -> bytes:
    """Dataset blob: magic "WTP1", header, then packed bit fields and
    (for AWGN) float32-LE channel samples."""
    chan_desc = f"eve={cfg.channel_eve.name};bob={cfg.channel_bob.name}".encode()
    has_y = batch.y_bob is not None
    head = MAGIC_WTP + struct.pack(
        "<IIIIIH", WTP_VERSION, cfg.n, cfg.k, cfg.b, cfg.q, len(chan_desc))
    head += chan_desc
    head += struct.pack("<BBQQ", int(cfg.uhf_enabled), int(has_y),
                        cfg.seed & (2**64 - 1), batch.count)
    parts = [head,
             _pack_field(batch.m_s), _pack_field(batch.b_pad),
             _pack_field(batch.m), _pack_field(batch.x)]
    if batch.eve_soft:
        parts.append(batch.z_eve.astype("<f4").tobytes())
    else:
        parts.append(_pack_field(batch.z_eve))
    if has_y:
        if cfg.channel_bob.is_soft:
            parts.append(batch.y_bob.astype("<f4").tobytes())
        else:
            parts.append(_pack_field(batch.y_bob))
    return b"".join(parts)


def load_dataset(blob: bytes) -> tuple[dict, SampleBatch]:
    """Read a WTP1 blob; returns (header dict, batch)."""
    if blob[:4] != MAGIC_WTP:
        raise ValueError("bad magic; not a WTP1 dataset")
    version, n, k, b, q, desc_len = struct.unpack("<IIIIIH", blob[4:26])
    if version != WTP_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    off = 26
    chan_desc = blob[off:off + desc_len].decode()
    off += desc_len
    uhf_flag, has_y, seed, count = struct.unpack("<BBQQ", blob[off:off + 18])
    off += 18
    chans = dict(part.split("=", 1) for part in chan_desc.split(";"))
    eve = chanmod.parse_channel(chans["eve"])
    bob = chanmod.parse_channel(chans["bob"])
    m_s, off = _unpack_field(blob, off, count, k)
    b_pad, off = _unpack_field(blob, off, count, b)
    m, off = _unpack_field(blob, off, count, q)
    x, off = _unpack_field(blob, off, count, n)
    if eve.is_soft:
        z = np.frombuffer(blob[off:off + count * n * 4], dtype="<f4").reshape(count, n).copy()
        off += count * n * 4
    else:
        z, off = _unpack_field(blob, off, count, n)
    y = None
    if has_y:
        if bob.is_soft:
            y = np.frombuffer(blob[off:off + count * n * 4], dtype="<f4").reshape(count, n).copy()
        else:
            y, off = _unpack_field(blob, off, count, n)
    header = {"n": n, "k": k, "b": b, "q": q, "channel_eve": eve.name,
              "channel_bob": bob.name, "uhf_enabled": bool(uhf_flag),
              "seed": seed, "count": count}
    batch = SampleBatch(count=count, m_s=m_s, b_pad=b_pad, m=m, x=x,
                        z_eve=z, y_bob=y, eve_soft=eve.is_soft)
    return header, batch
