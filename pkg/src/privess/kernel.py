"""Hot modular-arithmetic kernels with backend selection.

Two interchangeable backends provide the same operations:

* ``native``  -- Cython extension (``privess._fastkernel``) implementing
  Montgomery arithmetic for odd moduli up to 256 bits, with precomputed
  fixed-base tables for the group generators.
* ``python``  -- plain ``pow``/``%`` built-ins.

The backend is chosen at import time; ``PRIVESS_KERNEL=python|native``
forces a choice (``native`` raises if the extension is unavailable or the
modulus is unsupported).  Results are identical across backends; only
speed differs, which `privess.bench` measures.
"""

from __future__ import annotations

import os

try:  # pragma: no cover - exercised indirectly via backend tests
    from . import _fastkernel
except ImportError:  # pragma: no cover
    _fastkernel = None

_MODE = os.environ.get("PRIVESS_KERNEL", "auto")
if _MODE not in ("auto", "python", "native"):
    raise RuntimeError(f"PRIVESS_KERNEL must be auto|python|native, got {_MODE!r}")


class PyModContext:
    """Pure-Python modular arithmetic for an arbitrary modulus."""

    name = "python"

    def __init__(self, p: int):
        self.p = p

    def powmod(self, base: int, exp: int) -> int:
        return pow(base, exp, self.p)

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def inv(self, a: int) -> int:
        return pow(a, -1, self.p)

    def fixed_base(self, base: int) -> "PyFixedBase":
        return PyFixedBase(self, base)

    def dual_pow(self, base1: int, e1: int, base2: int, e2: int) -> int:
        return pow(base1, e1, self.p) * pow(base2, e2, self.p) % self.p

    def pow2_chain(self, points: list[int]) -> int:
        """Product of points[i]^(2^i)."""
        acc = 1
        for pt in reversed(points):
            acc = acc * acc % self.p
            acc = acc * pt % self.p
        return acc


class PyFixedBase:
    def __init__(self, ctx: PyModContext, base: int):
        self._ctx = ctx
        self.base = base

    def pow(self, exp: int) -> int:
        return pow(self.base, exp, self._ctx.p)


def _native_supported(p: int) -> bool:
    return _fastkernel is not None and p % 2 == 1 and p.bit_length() <= 256 and p > 2


def get_context(p: int):
    """Return the arithmetic context for modulus ``p`` per backend policy."""
    if _MODE == "python":
        return PyModContext(p)
    if _MODE == "native":
        if not _native_supported(p):
            raise RuntimeError(
                "native kernel unavailable or modulus unsupported "
                f"(extension={'present' if _fastkernel else 'missing'}, bits={p.bit_length()})"
            )
        return _fastkernel.MontContext(p)
    if _native_supported(p):
        return _fastkernel.MontContext(p)
    return PyModContext(p)


def get_context_named(p: int, backend: str):
    """Explicit-backend variant used by the kernel benchmark."""
    if backend == "python":
        return PyModContext(p)
    if backend == "native":
        if not _native_supported(p):
            raise RuntimeError("native kernel unavailable for this modulus")
        return _fastkernel.MontContext(p)
    raise ValueError(f"unknown backend {backend!r}")


def backend_name() -> str:
    if _MODE == "python":
        return "python"
    if _fastkernel is not None:
        return "native"
    return "python"


def native_available() -> bool:
    return _fastkernel is not None


class GroupOps:
    """Per-group facade over a kernel context with fixed bases g and h."""

    def __init__(self, p: int, q: int, g: int, h: int):
        self.p = p
        self.q = q
        self._ctx = get_context(p)
        self._fg = self._ctx.fixed_base(g)
        self._fh = self._ctx.fixed_base(h)
        self._inv_g = self._ctx.inv(g)

    @property
    def backend(self) -> str:
        return self._ctx.name

    def pow_g(self, exp: int) -> int:
        return self._fg.pow(exp)

    def pow_h(self, exp: int) -> int:
        return self._fh.pow(exp)

    def commit(self, value: int, randomness: int) -> int:
        """g^value * h^randomness mod p."""
        return self._ctx.mul(self._fg.pow(value), self._fh.pow(randomness))

    def pow(self, base: int, exp: int) -> int:
        return self._ctx.powmod(base, exp)

    def mul(self, a: int, b: int) -> int:
        return self._ctx.mul(a, b)

    def div(self, a: int, b: int) -> int:
        return self._ctx.mul(a, self._ctx.inv(b))

    def inv(self, a: int) -> int:
        return self._ctx.inv(a)

    def inv_g_pow(self, exp: int) -> int:
        return self._ctx.powmod(self._inv_g, exp)

    def pow2_chain(self, points: list[int]) -> int:
        return self._ctx.pow2_chain(points)

    def product(self, items) -> int:
        acc = 1
        for x in items:
            acc = self._ctx.mul(acc, x)
        return acc
