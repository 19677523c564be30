# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Montgomery arithmetic for odd moduli up to 256 bits.

CIOS multiplication over 4x64-bit limbs, 4-bit windowed exponentiation,
and 8-bit-window fixed-base tables for the group generators.  Results are
bit-identical to the pure-Python backend; only speed differs.
"""

from libc.stdint cimport uint64_t
from libc.string cimport memset, memcpy

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"


cdef inline void _int_to_limbs(object x, uint64_t *out):
    cdef bytes raw = int(x).to_bytes(32, "little")
    memcpy(out, <const char *> raw, 32)


cdef inline object _limbs_to_int(const uint64_t *v):
    cdef bytes raw = (<const char *> v)[:32]
    return int.from_bytes(raw, "little")


cdef inline bint _geq(const uint64_t *a, const uint64_t *n):
    cdef int i
    for i in range(3, -1, -1):
        if a[i] > n[i]:
            return True
        if a[i] < n[i]:
            return False
    return True


cdef inline void _sub_mod(uint64_t *a, const uint64_t *n):
    cdef u128 diff
    cdef uint64_t borrow = 0
    cdef int i
    for i in range(4):
        diff = <u128> a[i] - n[i] - borrow
        a[i] = <uint64_t> diff
        borrow = 1 if (diff >> 64) else 0


cdef void _mont_mul(uint64_t *out, const uint64_t *a, const uint64_t *b,
                    const uint64_t *n, uint64_t ninv):
    """CIOS: out = a * b * R^-1 mod n, R = 2^256."""
    cdef uint64_t t[6]
    cdef u128 acc
    cdef uint64_t carry, m
    cdef int i, j
    memset(t, 0, sizeof(t))
    for i in range(4):
        carry = 0
        for j in range(4):
            acc = <u128> a[j] * b[i] + t[j] + carry
            t[j] = <uint64_t> acc
            carry = <uint64_t> (acc >> 64)
        acc = <u128> t[4] + carry
        t[4] = <uint64_t> acc
        t[5] = <uint64_t> (acc >> 64)

        m = t[0] * ninv
        acc = <u128> m * n[0] + t[0]
        carry = <uint64_t> (acc >> 64)
        for j in range(1, 4):
            acc = <u128> m * n[j] + t[j] + carry
            t[j - 1] = <uint64_t> acc
            carry = <uint64_t> (acc >> 64)
        acc = <u128> t[4] + carry
        t[3] = <uint64_t> acc
        t[4] = t[5] + <uint64_t> (acc >> 64)
        t[5] = 0
    if t[4] or _geq(t, n):
        _sub_mod(t, n)
    memcpy(out, t, 32)


cdef uint64_t _mont_ninv(uint64_t n0):
    # Newton iteration for n0^-1 mod 2^64, then negate.
    cdef uint64_t x = n0
    cdef int i
    for i in range(6):
        x = x * (2 - n0 * x)
    return (~x) + 1  # == -x mod 2^64


cdef class MontContext:
    cdef uint64_t n[4]
    cdef uint64_t rr[4]
    cdef uint64_t one[4]
    cdef uint64_t ninv
    cdef readonly object p

    property name:
        def __get__(self):
            return "native"

    def __init__(self, p):
        p = int(p)
        if p <= 2 or p % 2 == 0 or p.bit_length() > 256:
            raise ValueError("modulus must be odd and at most 256 bits")
        self.p = p
        _int_to_limbs(p, self.n)
        self.ninv = _mont_ninv(self.n[0])
        _int_to_limbs((1 << 512) % p, self.rr)
        _int_to_limbs((1 << 256) % p, self.one)

    cdef void _to_mont(self, const uint64_t *x, uint64_t *out):
        _mont_mul(out, x, self.rr, self.n, self.ninv)

    cdef void _from_mont(self, const uint64_t *x, uint64_t *out):
        cdef uint64_t unit[4]
        memset(unit, 0, sizeof(unit))
        unit[0] = 1
        _mont_mul(out, x, unit, self.n, self.ninv)

    def mul(self, a, b):
        return int(a) * int(b) % self.p

    def inv(self, a):
        return pow(int(a), -1, self.p)

    def powmod(self, base, exp):
        base = int(base) % self.p
        exp = int(exp)
        if exp < 0:
            base = pow(base, -1, self.p)
            exp = -exp
        if exp == 0:
            return 1
        if base == 0:
            return 0
        cdef bytes ebytes = exp.to_bytes((exp.bit_length() + 7) // 8, "big")
        cdef uint64_t raw[4]
        cdef uint64_t acc[4]
        cdef uint64_t table[16][4]
        cdef int started = 0
        cdef int i, k, hi, lo
        cdef unsigned char byte
        _int_to_limbs(base, raw)
        self._to_mont(raw, table[1])
        for i in range(2, 16):
            _mont_mul(table[i], table[i - 1], table[1], self.n, self.ninv)
        memcpy(acc, self.one, 32)
        for i in range(len(ebytes)):
            byte = ebytes[i]
            hi = byte >> 4
            lo = byte & 0xF
            if started:
                for k in range(4):
                    _mont_mul(acc, acc, acc, self.n, self.ninv)
            if hi:
                if started:
                    _mont_mul(acc, acc, table[hi], self.n, self.ninv)
                else:
                    memcpy(acc, table[hi], 32)
                    started = 1
            elif started:
                pass
            if started:
                for k in range(4):
                    _mont_mul(acc, acc, acc, self.n, self.ninv)
            if lo:
                if started:
                    _mont_mul(acc, acc, table[lo], self.n, self.ninv)
                else:
                    memcpy(acc, table[lo], 32)
                    started = 1
            elif not started:
                continue
        if not started:
            return 1
        cdef uint64_t out[4]
        self._from_mont(acc, out)
        return _limbs_to_int(out)

    def pow2_chain(self, points):
        """Product of points[i]^(2^i) mod p."""
        cdef Py_ssize_t m = len(points)
        if m == 0:
            return 1
        cdef uint64_t acc[4]
        cdef uint64_t pt[4]
        cdef uint64_t raw[4]
        cdef Py_ssize_t i
        _int_to_limbs(int(points[m - 1]) % self.p, raw)
        self._to_mont(raw, acc)
        for i in range(m - 2, -1, -1):
            _mont_mul(acc, acc, acc, self.n, self.ninv)
            _int_to_limbs(int(points[i]) % self.p, raw)
            self._to_mont(raw, pt)
            _mont_mul(acc, acc, pt, self.n, self.ninv)
        cdef uint64_t out[4]
        self._from_mont(acc, out)
        return _limbs_to_int(out)

    def fixed_base(self, base):
        return FixedBase(self, base)


cdef class FixedBase:
    """8-bit-window table: pow(e) costs ~31 Montgomery multiplications."""

    cdef MontContext ctx
    cdef uint64_t table[32][255][4]
    cdef readonly object base

    def __init__(self, MontContext ctx, base):
        self.ctx = ctx
        self.base = int(base) % ctx.p
        cdef uint64_t window_base[4]
        cdef uint64_t raw[4]
        cdef int w, d, k
        _int_to_limbs(self.base, raw)
        ctx._to_mont(raw, window_base)
        for w in range(32):
            memcpy(self.table[w][0], window_base, 32)
            for d in range(1, 255):
                _mont_mul(self.table[w][d], self.table[w][d - 1], window_base,
                          ctx.n, ctx.ninv)
            if w < 31:
                # next window base = current^(2^8)
                memcpy(raw, self.table[w][254], 32)
                _mont_mul(window_base, raw, self.table[w][0], ctx.n, ctx.ninv)

    def pow(self, exp):
        exp = int(exp)
        if exp < 0 or exp.bit_length() > 256:
            return self.ctx.powmod(self.base, exp)
        if exp == 0:
            return 1
        cdef bytes ebytes = exp.to_bytes(32, "little")
        cdef uint64_t acc[4]
        cdef int started = 0
        cdef int w
        cdef unsigned char d
        for w in range(32):
            d = ebytes[w]
            if d == 0:
                continue
            if started:
                _mont_mul(acc, acc, self.table[w][d - 1], self.ctx.n, self.ctx.ninv)
            else:
                memcpy(acc, self.table[w][d - 1], 32)
                started = 1
        if not started:
            return 1
        cdef uint64_t out[4]
        self.ctx._from_mont(acc, out)
        return _limbs_to_int(out)
