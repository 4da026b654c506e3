"""Bit-packed linear algebra over GF(2) and the universal hash / inverse-hash pair.

Vectors and matrices are stored as little-endian 64-bit words: bit ``i`` of a
row lives at bit position ``i % 64`` of word ``i // 64``. Products are computed
word-wise with AND + popcount parity.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

WORD_BITS = 64
MAGIC_UHF = b"UHF1"


class SingularError(ValueError):
    """Raised when a GF(2) matrix has no inverse."""


def _n_words(nbits: int) -> int:
    return (nbits + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a (..., nbits) array of 0/1 into (..., n_words) uint64, little-endian."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    nbits = bits.shape[-1]
    nw = _n_words(nbits)
    pad = nw * WORD_BITS - nbits
    if pad:
        bits = np.concatenate(
            [bits, np.zeros(bits.shape[:-1] + (pad,), dtype=np.uint8)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return packed.view(np.dtype("<u8")).reshape(bits.shape[:-1] + (nw,))


def unpack_bits(words: np.ndarray, nbits: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a (..., nbits) uint8 array."""
    words = np.ascontiguousarray(words, dtype=np.dtype("<u8"))
    raw = words.view(np.uint8)
    bits = np.unpackbits(raw, axis=-1, bitorder="little")
    return bits[..., :nbits]


@dataclass(frozen=True)
class BitVec:
    """Immutable binary vector; pad bits beyond ``len`` are kept at zero."""

    len: int
    words: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.len < 0:
            raise ValueError("negative length")
        w = np.ascontiguousarray(self.words, dtype=np.uint64)
        if w.shape != (_n_words(self.len),):
            raise ValueError("word count inconsistent with length")
        object.__setattr__(self, "words", w)
        w.flags.writeable = False

    @classmethod
    def from_bits(cls, bits) -> "BitVec":
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(int(bits.shape[0]), pack_bits(bits))

    @classmethod
    def zeros(cls, n: int) -> "BitVec":
        return cls(n, np.zeros(_n_words(n), dtype=np.uint64))

    @classmethod
    def from_int(cls, value: int, n: int) -> "BitVec":
        bits = np.array([(value >> i) & 1 for i in range(n)], dtype=np.uint8)
        return cls.from_bits(bits)

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.len)

    def to_int(self) -> int:
        return int(sum(int(b) << i for i, b in enumerate(self.to_bits())))

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.len:
            raise IndexError(i)
        return int((self.words[i // WORD_BITS] >> np.uint64(i % WORD_BITS)) & np.uint64(1))

    def __xor__(self, other: "BitVec") -> "BitVec":
        if self.len != other.len:
            raise ValueError("length mismatch in xor")
        return BitVec(self.len, self.words ^ other.words)

    def __and__(self, other: "BitVec") -> "BitVec":
        if self.len != other.len:
            raise ValueError("length mismatch in and")
        return BitVec(self.len, self.words & other.words)

    def concat(self, other: "BitVec") -> "BitVec":
        return BitVec.from_bits(np.concatenate([self.to_bits(), other.to_bits()]))

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def __eq__(self, other) -> bool:
        return (isinstance(other, BitVec) and self.len == other.len
                and bool(np.array_equal(self.words, other.words)))

    def __hash__(self):
        return hash((self.len, self.words.tobytes()))


@dataclass(frozen=True)
class Gf2Matrix:
    """Row-major bit-packed binary matrix."""

    rows: int
    cols: int
    data: np.ndarray = field(repr=False)  # (rows, n_words(cols)) uint64

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.uint64)
        if d.shape != (self.rows, _n_words(self.cols)):
            raise ValueError("packed storage inconsistent with dimensions")
        object.__setattr__(self, "data", d)
        d.flags.writeable = False

    @classmethod
    def from_dense(cls, dense) -> "Gf2Matrix":
        dense = np.asarray(dense, dtype=np.uint8) & 1
        if dense.ndim != 2:
            raise ValueError("expected a 2-d array")
        return cls(dense.shape[0], dense.shape[1], pack_bits(dense))

    @classmethod
    def identity(cls, n: int) -> "Gf2Matrix":
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    def to_dense(self) -> np.ndarray:
        return unpack_bits(self.data, self.cols)

    def transpose(self) -> "Gf2Matrix":
        return Gf2Matrix.from_dense(self.to_dense().T)

    def row(self, i: int) -> BitVec:
        return BitVec(self.cols, self.data[i])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Gf2Matrix) and self.rows == other.rows
                and self.cols == other.cols
                and bool(np.array_equal(self.data, other.data)))

    def __hash__(self):
        return hash((self.rows, self.cols, self.data.tobytes()))


def _matmul_packed(lhs_words: np.ndarray, rhs_t_words: np.ndarray) -> np.ndarray:
    """(r, w) x (c, w) packed rows -> (r, c) product bits as uint8."""
    acc = np.bitwise_count(lhs_words[:, None, :] & rhs_t_words[None, :, :])
    return (acc.sum(axis=2, dtype=np.uint64) & np.uint64(1)).astype(np.uint8)


def gf2_matmul(lhs: Gf2Matrix, rhs: Gf2Matrix) -> Gf2Matrix:
    """Matrix product over GF(2): entry (i, j) is the parity of AND overlaps."""
    if lhs.cols != rhs.rows:
        raise ValueError(
            f"dimension mismatch: ({lhs.rows}x{lhs.cols}) @ ({rhs.rows}x{rhs.cols})")
    rhs_t = rhs.transpose()
    out = _matmul_packed(lhs.data, rhs_t.data)
    return Gf2Matrix.from_dense(out)


def gf2_vecmat(v: BitVec, m: Gf2Matrix) -> BitVec:
    """Row-vector times matrix: v . M over GF(2)."""
    if v.len != m.rows:
        raise ValueError(f"length mismatch: vec[{v.len}] . ({m.rows}x{m.cols})")
    m_t = m.transpose()
    acc = np.bitwise_count(v.words[None, :] & m_t.data)
    bits = (acc.sum(axis=1, dtype=np.uint64) & np.uint64(1)).astype(np.uint8)
    return BitVec.from_bits(bits)


def gf2_vecmat_batch(batch_bits: np.ndarray, m: Gf2Matrix) -> np.ndarray:
    """Apply ``row . M`` to every row of a dense (count, m.rows) 0/1 array."""
    batch_bits = np.asarray(batch_bits, dtype=np.uint8)
    if batch_bits.shape[1] != m.rows:
        raise ValueError("batch width mismatch")
    packed = pack_bits(batch_bits)
    out = _matmul_packed(packed, m.transpose().data)
    return out


def gf2_invert(m: Gf2Matrix) -> Gf2Matrix:
    """Invert a square GF(2) matrix by Gauss-Jordan elimination."""
    if m.rows != m.cols:
        raise ValueError("only square matrices can be inverted")
    n = m.rows
    a = m.to_dense().copy()
    inv = np.eye(n, dtype=np.uint8)
    for col in range(n):
        pivot_rows = np.nonzero(a[col:, col])[0]
        if pivot_rows.size == 0:
            raise SingularError(f"matrix is singular (rank deficit at column {col})")
        piv = col + int(pivot_rows[0])
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            inv[[col, piv]] = inv[[piv, col]]
        mask = a[:, col].copy()
        mask[col] = 0
        rows = np.nonzero(mask)[0]
        a[rows] ^= a[col]
        inv[rows] ^= inv[col]
    return Gf2Matrix.from_dense(inv)


def random_invertible(q: int, rng: np.random.Generator,
                      max_rejections: int = 1000) -> tuple[Gf2Matrix, Gf2Matrix]:
    """Uniform draw from GL(q, F_2) by rejection; returns (A, A^{-1}).

    Acceptance probability tends to prod(1 - 2^-i) ~ 0.2888, so the retry
    guard is never hit in practice.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    for _ in range(max_rejections):
        dense = rng.integers(0, 2, size=(q, q), dtype=np.uint8)
        a = Gf2Matrix.from_dense(dense)
        try:
            return a, gf2_invert(a)
        except SingularError:
            continue
    raise RuntimeError(
        f"no invertible {q}x{q} matrix after {max_rejections} rejections; "
        "the RNG stream is suspect")


@dataclass(frozen=True)
class UhfPair:
    """A universal-hash instance: hash ``v -> first k bits of v.A`` and its inverse."""

    q: int
    k: int
    a: Gf2Matrix
    a_inv: Gf2Matrix

    def __post_init__(self):
        if not 0 < self.k <= self.q:
            raise ValueError("need 0 < k <= q")
        for mat in (self.a, self.a_inv):
            if mat.rows != self.q or mat.cols != self.q:
                raise ValueError("matrix dimensions must be q x q")
        if gf2_matmul(self.a, self.a_inv) != Gf2Matrix.identity(self.q):
            raise ValueError("a_inv is not the inverse of a")

    @classmethod
    def random(cls, q: int, k: int, rng: np.random.Generator) -> "UhfPair":
        a, a_inv = random_invertible(q, rng)
        return cls(q=q, k=k, a=a, a_inv=a_inv)

    @property
    def b(self) -> int:
        return self.q - self.k


def uhf_hash(u: UhfPair, v: BitVec) -> BitVec:
    """First k coordinates of v . A."""
    if v.len != u.q:
        raise ValueError(f"expected a length-{u.q} input, got {v.len}")
    full = gf2_vecmat(v, u.a)
    return BitVec.from_bits(full.to_bits()[: u.k])


def uhf_inverse(u: UhfPair, m_s: BitVec, b: BitVec) -> BitVec:
    """(m_s || b) . A^{-1}; hashing the result recovers m_s."""
    if m_s.len != u.k or b.len != u.b:
        raise ValueError(
            f"expected lengths ({u.k}, {u.b}), got ({m_s.len}, {b.len})")
    return gf2_vecmat(m_s.concat(b), u.a_inv)


def uhf_hash_batch(u: UhfPair, v_bits: np.ndarray) -> np.ndarray:
    """Batch hash: (count, q) 0/1 -> (count, k)."""
    return gf2_vecmat_batch(v_bits, u.a)[:, : u.k]


def uhf_inverse_batch(u: UhfPair, ms_bits: np.ndarray, b_bits: np.ndarray) -> np.ndarray:
    """Batch inverse hash: (count, k) and (count, b) -> (count, q)."""
    joined = np.concatenate([np.asarray(ms_bits, dtype=np.uint8),
                             np.asarray(b_bits, dtype=np.uint8)], axis=1)
    return gf2_vecmat_batch(joined, u.a_inv)


def _matrix_bytes(m: Gf2Matrix) -> bytes:
    return np.ascontiguousarray(m.data, dtype=np.dtype("<u8")).tobytes()


def save_uhf(u: UhfPair) -> bytes:
    """Serialize: magic 'UHF1', q and k as u32-LE, then A and A^{-1} packed rows."""
    return (MAGIC_UHF + struct.pack("<II", u.q, u.k)
            + _matrix_bytes(u.a) + _matrix_bytes(u.a_inv))


def load_uhf(blob: bytes) -> UhfPair:
    if blob[:4] != MAGIC_UHF:
        raise ValueError("bad magic; not a UHF1 blob")
    q, k = struct.unpack("<II", blob[4:12])
    nw = _n_words(q)
    size = q * nw * 8
    off = 12
    mats = []
    for _ in range(2):
        words = np.frombuffer(blob[off:off + size], dtype=np.dtype("<u8"))
        mats.append(Gf2Matrix(q, q, words.reshape(q, nw).astype(np.uint64)))
        off += size
    return UhfPair(q=q, k=k, a=mats[0], a_inv=mats[1])
