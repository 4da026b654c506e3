"""Block channel codes: BCH with hard-decision algebraic decoding plus toy
linear codes (identity, repetition, Hamming(7,4)) for oracle-checkable systems.

Field representations are pinned: GF(2^m) is built from a fixed primitive
polynomial per m (see PRIMITIVE_POLYS), so decoders are reproducible.
Codewords are coefficient vectors c_0..c_{n-1}; systematic BCH encoding places
the message at positions n-q_in .. n-1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import maybe_jit

# x^m + ... + 1, by m. Standard choices (e.g. x^4 + x + 1 for m=4).
PRIMITIVE_POLYS = {
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011101,
}


def gf2m_tables(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (exp, log) tables for GF(2^m). exp has length 2*(2^m - 1) so
    products of logs never need a modulo; log[0] is unused (-1)."""
    if m not in PRIMITIVE_POLYS:
        raise ValueError(f"no primitive polynomial pinned for m={m}")
    n = (1 << m) - 1
    exp = np.zeros(2 * n, dtype=np.int64)
    log = np.full(1 << m, -1, dtype=np.int64)
    x = 1
    for i in range(n):
        exp[i] = x
        exp[i + n] = x
        log[x] = i
        x <<= 1
        if x & (1 << m):
            x ^= PRIMITIVE_POLYS[m]
    return exp, log


def _poly_mul(a: list[int], b: list[int], exp, log, n: int) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            if bj == 0:
                continue
            out[i + j] ^= int(exp[log[ai] + log[bj]])
    return out


def _minimal_poly(coset: list[int], exp, log, n: int) -> list[int]:
    # prod over j in coset of (x + alpha^j), computed in GF(2^m); the result
    # has coefficients in {0, 1}.
    poly = [1]
    for j in coset:
        poly = _poly_mul(poly, [int(exp[j]), 1], exp, log, n)
    assert all(c in (0, 1) for c in poly)
    return poly


def _cyclotomic_coset(i: int, n: int) -> list[int]:
    coset = []
    j = i
    while j not in coset:
        coset.append(j)
        j = (2 * j) % n
    return sorted(coset)


@dataclass(frozen=True)
class CodeSpec:
    """A linear block code with its precomputed encoding/decoding data."""

    family: str  # identity | repetition | hamming74 | bch
    n: int
    q_in: int
    t: int
    gen_matrix: np.ndarray = field(repr=False)  # (q_in, n) uint8, systematic
    m: int = 0  # BCH field degree (0 for non-BCH)
    exp_table: np.ndarray | None = field(default=None, repr=False)
    log_table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.q_in > self.n or self.q_in < 1:
            raise ValueError("need 1 <= q_in <= n")
        g = np.ascontiguousarray(self.gen_matrix, dtype=np.uint8)
        object.__setattr__(self, "gen_matrix", g)
        g.flags.writeable = False

    @property
    def name(self) -> str:
        if self.family == "identity":
            return f"identity:{self.n}"
        if self.family == "repetition":
            return f"rep:{self.n}"
        if self.family == "hamming74":
            return "hamming74"
        return f"bch:{self.n}:{self.q_in}"


def identity_code(n: int) -> CodeSpec:
    return CodeSpec("identity", n, n, 0, np.eye(n, dtype=np.uint8))


def repetition_code(n: int) -> CodeSpec:
    if n < 1 or n % 2 == 0:
        raise ValueError("repetition length must be odd and >= 1")
    return CodeSpec("repetition", n, 1, (n - 1) // 2,
                    np.ones((1, n), dtype=np.uint8))


def _bch_generator_poly(m: int, t: int) -> int:
    """Generator polynomial (as a bitmask, bit i = coeff of x^i) for the
    narrow-sense BCH code with designed roots alpha^1..alpha^{2t}."""
    n = (1 << m) - 1
    exp, log = gf2m_tables(m)
    seen: set[int] = set()
    g = 1  # polynomial over GF(2) as bitmask
    for i in range(1, 2 * t + 1):
        rep = min(_cyclotomic_coset(i, n))
        if rep in seen:
            continue
        seen.add(rep)
        mp = _minimal_poly(_cyclotomic_coset(i, n), exp, log, n)
        acc = 0
        for d in range(g.bit_length()):
            if (g >> d) & 1:
                for e, c in enumerate(mp):
                    if c:
                        acc ^= 1 << (d + e)
        g = acc
    return g


def _poly_mod(num: int, den: int) -> int:
    dd = den.bit_length() - 1
    while num.bit_length() - 1 >= dd and num:
        num ^= den << (num.bit_length() - 1 - dd)
    return num


def bch_build(m: int, t: int) -> CodeSpec:
    """Construct the narrow-sense binary BCH code over GF(2^m) with design
    radius t. The achieved radius from the consecutive-root run is recorded
    (it can exceed the requested t when cosets overlap)."""
    if not 3 <= m <= 8:
        raise ValueError("need 3 <= m <= 8")
    n = (1 << m) - 1
    g = _bch_generator_poly(m, t)
    deg_g = g.bit_length() - 1
    q_in = n - deg_g
    if q_in <= 0:
        raise ValueError(f"infeasible t={t} for m={m}: generator degree {deg_g} >= n")
    exp, log = gf2m_tables(m)
    # achieved radius: longest run of consecutive roots alpha^1, alpha^2, ...
    d = 1
    while d < n:
        val = 0
        for e in range(deg_g + 1):
            if (g >> e) & 1:
                val ^= int(exp[(d * e) % n])
        if val != 0:
            break
        d += 1
    t_ach = (d - 1) // 2
    gen = np.zeros((q_in, n), dtype=np.uint8)
    for i in range(q_in):
        cw = _poly_mod(1 << (deg_g + i), g) | (1 << (deg_g + i))
        for j in range(n):
            gen[i, j] = (cw >> j) & 1
    family = "bch"
    return CodeSpec(family, n, q_in, t_ach, gen, m=m,
                    exp_table=exp, log_table=log)


def hamming74() -> CodeSpec:
    spec = bch_build(3, 1)  # (7,4) single-error-correcting, Hamming-equivalent
    return CodeSpec("hamming74", spec.n, spec.q_in, spec.t, spec.gen_matrix,
                    m=spec.m, exp_table=spec.exp_table, log_table=spec.log_table)


def parse_code(name: str) -> CodeSpec:
    """Resolve a config string: "bch:15:5", "hamming74", "rep:3", "identity:8"."""
    parts = name.strip().lower().split(":")
    try:
        return _parse_code_parts(parts)
    except (IndexError, ValueError) as e:
        raise ValueError(f"cannot parse code {name!r}: {e}")


def _parse_code_parts(parts: list[str]) -> CodeSpec:
    if parts[0] == "identity":
        return identity_code(int(parts[1]))
    if parts[0] == "rep":
        return repetition_code(int(parts[1]))
    if parts[0] == "hamming74":
        return hamming74()
    if parts[0] == "bch":
        n, q_in = int(parts[1]), int(parts[2])
        m = n.bit_length()
        if (1 << m) - 1 != n:
            raise ValueError(f"BCH length must be 2^m - 1, got {n}")
        for t in range(1, n // 2 + 1):
            spec = bch_build(m, t)
            if spec.q_in == q_in:
                return spec
            if spec.q_in < q_in:
                break
        raise ValueError(f"no BCH code with n={n}, q_in={q_in} from this construction")
    raise ValueError(f"unknown code family: {parts[0]}")


def encode(spec: CodeSpec, m: "np.ndarray | object") -> object:
    """Encode one message. Accepts/returns BitVec or a dense 0/1 array."""
    from .gf2 import BitVec
    if isinstance(m, BitVec):
        if m.len != spec.q_in:
            raise ValueError(f"expected {spec.q_in} message bits, got {m.len}")
        return BitVec.from_bits(encode_batch(spec, m.to_bits()[None, :])[0])
    m = np.asarray(m, dtype=np.uint8)
    return encode_batch(spec, m[None, :])[0]


def encode_batch(spec: CodeSpec, msgs: np.ndarray) -> np.ndarray:
    """(count, q_in) messages -> (count, n) codewords via the generator matrix."""
    msgs = np.asarray(msgs, dtype=np.uint8)
    if msgs.shape[1] != spec.q_in:
        raise ValueError(f"expected {spec.q_in} message bits, got {msgs.shape[1]}")
    return (msgs.astype(np.int64) @ spec.gen_matrix.astype(np.int64) % 2).astype(np.uint8)


def _bch_decode_batch_impl(recv, exp, log, n, q_in, t, out_msg, out_ncorr, out_ok):
    count = recv.shape[0]
    deg_g = n - q_in
    two_t = 2 * t
    lam = np.zeros(two_t + 2, dtype=np.int64)
    bpoly = np.zeros(two_t + 2, dtype=np.int64)
    tpoly = np.zeros(two_t + 2, dtype=np.int64)
    synd = np.zeros(two_t + 1, dtype=np.int64)
    corrected = np.zeros(n, dtype=np.uint8)
    for s in range(count):
        for i in range(n):
            corrected[i] = recv[s, i]
        # syndromes S_j = r(alpha^j)
        all_zero = True
        for j in range(1, two_t + 1):
            acc = 0
            for i in range(n):
                if recv[s, i]:
                    acc ^= exp[(j * i) % n]
            synd[j] = acc
            if acc != 0:
                all_zero = False
        ok = True
        ncorr = 0
        if not all_zero:
            # Berlekamp-Massey for the error locator
            for i in range(two_t + 2):
                lam[i] = 0
                bpoly[i] = 0
            lam[0] = 1
            bpoly[0] = 1
            big_l = 0
            shift = 1
            bcoef = 1
            for step in range(two_t):
                d = synd[step + 1]
                for j in range(1, big_l + 1):
                    if lam[j] != 0 and synd[step + 1 - j] != 0:
                        d ^= exp[log[lam[j]] + log[synd[step + 1 - j]]]
                if d == 0:
                    shift += 1
                elif 2 * big_l <= step:
                    for i in range(two_t + 2):
                        tpoly[i] = lam[i]
                    coef = exp[log[d] + n - log[bcoef]]
                    for j in range(two_t + 2 - shift):
                        if bpoly[j] != 0:
                            lam[j + shift] ^= exp[log[coef] + log[bpoly[j]]]
                    big_l = step + 1 - big_l
                    for i in range(two_t + 2):
                        bpoly[i] = tpoly[i]
                    bcoef = d
                    shift = 1
                else:
                    coef = exp[log[d] + n - log[bcoef]]
                    for j in range(two_t + 2 - shift):
                        if bpoly[j] != 0:
                            lam[j + shift] ^= exp[log[coef] + log[bpoly[j]]]
                    shift += 1
            # Chien search: roots alpha^j correspond to error position (n - j) % n
            nroots = 0
            if big_l <= t:
                for j in range(n):
                    val = 0
                    for e in range(big_l + 1):
                        if lam[e] != 0:
                            val ^= exp[(log[lam[e]] + j * e) % n]
                    if val == 0:
                        pos = (n - j) % n
                        if pos < n:
                            corrected[pos] ^= 1
                            nroots += 1
            ok = (nroots == big_l) and (big_l <= t)
            ncorr = nroots
        for i in range(q_in):
            out_msg[s, i] = corrected[deg_g + i]
        out_ncorr[s] = ncorr
        out_ok[s] = 1 if ok else 0


_bch_decode_batch_kernel = maybe_jit(_bch_decode_batch_impl)


def decode_batch(spec: CodeSpec, recv: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hard-decision decode of a (count, n) 0/1 array.

    Returns (messages (count, q_in), correction counts, success flags). Success
    is False when the locator degree disagrees with the Chien root count
    (weight-> t patterns decoded best-effort)."""
    recv = np.ascontiguousarray(recv, dtype=np.uint8)
    if recv.ndim != 2 or recv.shape[1] != spec.n:
        raise ValueError(f"expected (count, {spec.n}) received bits")
    count = recv.shape[0]
    if spec.family == "identity":
        return recv.copy(), np.zeros(count, np.int64), np.ones(count, bool)
    if spec.family == "repetition":
        ones = recv.sum(axis=1)
        bit = (ones * 2 > spec.n).astype(np.uint8)
        ncorr = np.minimum(ones, spec.n - ones).astype(np.int64)
        return bit[:, None], ncorr, np.ones(count, bool)
    out_msg = np.zeros((count, spec.q_in), dtype=np.uint8)
    out_ncorr = np.zeros(count, dtype=np.int64)
    out_ok = np.zeros(count, dtype=np.uint8)
    _bch_decode_batch_kernel(recv, spec.exp_table, spec.log_table,
                             spec.n, spec.q_in, spec.t,
                             out_msg, out_ncorr, out_ok)
    return out_msg, out_ncorr, out_ok.astype(bool)


def decode_hard(spec: CodeSpec, r) -> tuple[object, int, bool]:
    """Decode a single word; returns (message, corrections, success flag)."""
    from .gf2 import BitVec
    if isinstance(r, BitVec):
        if r.len != spec.n:
            raise ValueError(f"expected {spec.n} bits, got {r.len}")
        msg, ncorr, ok = decode_batch(spec, r.to_bits()[None, :])
        return BitVec.from_bits(msg[0]), int(ncorr[0]), bool(ok[0])
    r = np.asarray(r, dtype=np.uint8)
    msg, ncorr, ok = decode_batch(spec, r[None, :])
    return msg[0], int(ncorr[0]), bool(ok[0])
