"""Error-correcting codes: field tables, generator polynomials, decoding."""
import numpy as np
import pytest

from wiretaplab import ecc

# generator polynomials frozen from an independent polynomial-arithmetic
# computation over GF(2^m) (lcm of minimal polynomials of alpha..alpha^{2t})
KNOWN_GENERATORS = {
    (3, 1): 0b1011,                 # Hamming(7,4): x^3 + x + 1
    (4, 1): 0b10011,                # BCH(15,11)
    (4, 2): 0b111010001,            # BCH(15,7)
    (4, 3): 0b10100110111,          # BCH(15,5)
    (5, 1): 0b100101,               # BCH(31,26)
}


def _all_messages(q):
    w = np.arange(1 << q, dtype=np.uint32)
    return ((w[:, None] >> np.arange(q)) & 1).astype(np.uint8)


class TestFieldTables:
    @pytest.mark.parametrize("m", [3, 4, 5, 6, 7, 8])
    def test_exp_log_are_inverse(self, m):
        exp, log = ecc.gf2m_tables(m)
        n = (1 << m) - 1
        for i in range(n):
            assert log[exp[i]] == i
        assert exp[n] == exp[0]  # doubled table wraps

    @pytest.mark.parametrize("m", [3, 4, 5])
    def test_multiplication_via_logs(self, m):
        exp, log = ecc.gf2m_tables(m)
        n = (1 << m) - 1
        # alpha^a * alpha^b == alpha^{a+b mod n}, checked against carry-less mul
        for a in range(1, n):
            for b in range(1, n):
                prod = _clmul_mod(int(exp[a]), int(exp[b]),
                                  ecc.PRIMITIVE_POLYS[m])
                assert prod == exp[(a + b) % n]


def _clmul_mod(x, y, poly):
    acc = 0
    while y:
        if y & 1:
            acc ^= x
        y >>= 1
        x <<= 1
    deg = poly.bit_length() - 1
    while acc.bit_length() > deg:
        acc ^= poly << (acc.bit_length() - 1 - deg)
    return acc


class TestBchConstruction:
    @pytest.mark.parametrize("m,t", sorted(KNOWN_GENERATORS))
    def test_generator_polynomials(self, m, t):
        assert ecc._bch_generator_poly(m, t) == KNOWN_GENERATORS[(m, t)]

    def test_bch_15_5_shape(self):
        spec = ecc.parse_code("bch:15:5")
        assert (spec.n, spec.q_in, spec.t) == (15, 5, 3)

    def test_codewords_divisible_by_generator(self):
        spec = ecc.parse_code("bch:15:5")
        g = KNOWN_GENERATORS[(4, 3)]
        for msg in _all_messages(5):
            cw = ecc.encode_batch(spec, msg[None])[0]
            word = int(sum(int(b) << i for i, b in enumerate(cw)))
            assert ecc._poly_mod(word, g) == 0

    def test_systematic_encoding(self):
        spec = ecc.parse_code("bch:15:5")
        msgs = _all_messages(5)
        cws = ecc.encode_batch(spec, msgs)
        assert np.array_equal(cws[:, spec.n - spec.q_in:], msgs)

    def test_linearity(self):
        spec = ecc.parse_code("bch:15:7")
        rng = np.random.default_rng(0)
        a = rng.integers(0, 2, (20, 7), dtype=np.uint8)
        b = rng.integers(0, 2, (20, 7), dtype=np.uint8)
        lhs = ecc.encode_batch(spec, a ^ b)
        rhs = ecc.encode_batch(spec, a) ^ ecc.encode_batch(spec, b)
        assert np.array_equal(lhs, rhs)

    def test_minimum_distance_15_7(self):
        spec = ecc.parse_code("bch:15:7")
        cws = ecc.encode_batch(spec, _all_messages(7))
        weights = cws.sum(axis=1)
        assert weights[1:].min() == 5  # designed distance 2t+1 with t=2

    def test_hamming74_equals_bch_3_1(self):
        h = ecc.hamming74()
        assert (h.n, h.q_in, h.t) == (7, 4, 1)
        cws = ecc.encode_batch(h, _all_messages(4))
        assert cws.sum(axis=1)[1:].min() == 3


class TestDecoding:
    @pytest.mark.parametrize("name,t", [("bch:15:5", 3), ("bch:15:7", 2),
                                        ("hamming74", 1)])
    def test_corrects_up_to_t_random_errors(self, name, t):
        spec = ecc.parse_code(name)
        rng = np.random.default_rng(1)
        msgs = rng.integers(0, 2, (300, spec.q_in), dtype=np.uint8)
        cws = ecc.encode_batch(spec, msgs)
        recv = cws.copy()
        for i in range(len(recv)):
            nerr = rng.integers(0, t + 1)
            pos = rng.choice(spec.n, size=nerr, replace=False)
            recv[i, pos] ^= 1
        dec, ncorr, ok = ecc.decode_batch(spec, recv)
        assert ok.all()
        assert np.array_equal(dec, msgs)

    def test_decode_hard_single(self):
        spec = ecc.parse_code("bch:15:5")
        msg = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
        cw = ecc.encode_batch(spec, msg[None])[0]
        cw[3] ^= 1
        cw[9] ^= 1
        dec, ncorr, ok = ecc.decode_hard(spec, cw)
        assert ok and ncorr == 2
        assert np.array_equal(np.asarray(dec), msg)

    def test_beyond_capacity_flagged_or_wrong(self):
        # >t errors can decode to a different codeword or fail; never both
        # succeed and return the original with ncorr <= t unless distances allow
        spec = ecc.parse_code("bch:15:5")
        rng = np.random.default_rng(2)
        msgs = rng.integers(0, 2, (200, 5), dtype=np.uint8)
        cws = ecc.encode_batch(spec, msgs)
        recv = cws.copy()
        for i in range(len(recv)):
            pos = rng.choice(15, size=5, replace=False)
            recv[i, pos] ^= 1
        dec, ncorr, ok = ecc.decode_batch(spec, recv)
        wrong = ~np.all(dec == msgs, axis=1)
        assert np.all(wrong | ~ok | (ncorr <= spec.t))

    def test_repetition_majority(self):
        spec = ecc.parse_code("rep:5")
        recv = np.array([[1, 1, 0, 0, 1], [0, 0, 1, 0, 0]], dtype=np.uint8)
        dec, ncorr, ok = ecc.decode_batch(spec, recv)
        assert list(dec[:, 0]) == [1, 0]
        assert ok.all()

    def test_identity_passthrough(self):
        spec = ecc.parse_code("identity:6")
        recv = np.random.default_rng(3).integers(0, 2, (10, 6), dtype=np.uint8)
        dec, _, ok = ecc.decode_batch(spec, recv)
        assert np.array_equal(dec, recv)
        assert ok.all()


class TestParsing:
    def test_parse_variants(self):
        assert ecc.parse_code("bch:15:5").name == "bch:15:5"
        assert ecc.parse_code("hamming74").n == 7
        assert ecc.parse_code("rep:3").n == 3
        assert ecc.parse_code("identity:8").q_in == 8

    @pytest.mark.parametrize("bad", ["bch:14:5", "bch:15:6", "rep:4",
                                     "identity:0", "nope", "bch:15"])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValueError):
            ecc.parse_code(bad)
