"""Exact linear programming: bounded-variable simplex over rationals.

Solves  min c.x  s.t.  A x = b,  0 <= x <= u  (u entries may be None for
unbounded) with Fraction arithmetic and Bland's anti-cycling rule, so the
reported optimum is exact and deterministic.

For larger instances a float simplex first hunts for an optimal basis; the
basis is then re-solved and certified exactly (primal feasibility plus
sign conditions on every reduced cost).  If certification fails the exact
simplex runs from scratch, so answers never depend on float behaviour.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

Frac = Fraction
_ZERO = Fraction(0)


class LPError(Exception):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: list[Fraction]
    objective: Fraction


@dataclass
class Program:
    """min c.x, A x = b, 0 <= x <= u."""

    c: list[Fraction]
    rows: list[list[Fraction]]
    b: list[Fraction]
    upper: list[Optional[Fraction]]

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return len(self.rows)


def _exact(value) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


def make_program(c, rows, b, upper) -> Program:
    c = [_exact(v) for v in c]
    rows = [[_exact(v) for v in row] for row in rows]
    b = [_exact(v) for v in b]
    upper = [None if u is None else _exact(u) for u in upper]
    n = len(c)
    for row in rows:
        if len(row) != n:
            raise LPError("row length mismatch")
    if len(b) != len(rows) or len(upper) != n:
        raise LPError("dimension mismatch")
    for u in upper:
        if u is not None and u < 0:
            raise LPError("negative upper bound")
    return Program(c, rows, b, upper)


# ---------------------------------------------------------------------------
# exact bounded-variable tableau simplex

_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2


class _ExactSimplex:
    def __init__(
        self,
        prog: Program,
        basis: Sequence[int],
        banned: frozenset[int] = frozenset(),
        at_upper: Sequence[int] = (),
    ):
        self.prog = prog
        self.n = prog.n
        self.m = prog.m
        self.banned = banned  # columns never eligible to enter
        self.basis = list(basis)
        self.state = [_AT_LOWER] * self.n
        for j in self.basis:
            self.state[j] = _BASIC
        # Reduced tableau: basis columns become the identity.
        self.rows = [list(row) for row in prog.rows]
        self.rhs = list(prog.b)
        self._reduce_to_basis()
        self.beta = list(self.rhs)  # basic values while all nonbasic sit at 0
        for j in at_upper:
            if self.state[j] == _BASIC:
                continue
            self.state[j] = _AT_UPPER
            u = prog.upper[j]
            for i in range(self.m):
                if self.rows[i][j]:
                    self.beta[i] -= u * self.rows[i][j]

    def _reduce_to_basis(self) -> None:
        for r, j in enumerate(self.basis):
            # Find a pivot row at or below r with a nonzero in column j.
            pivot = None
            for i in range(r, self.m):
                if self.rows[i][j] != 0:
                    pivot = i
                    break
            if pivot is None:
                raise LPError("initial basis is singular")
            if pivot != r:
                self.rows[r], self.rows[pivot] = self.rows[pivot], self.rows[r]
                self.rhs[r], self.rhs[pivot] = self.rhs[pivot], self.rhs[r]
            self._normalize(r, j)
            self._eliminate(r, j)

    def _normalize(self, r: int, j: int) -> None:
        piv = self.rows[r][j]
        if piv != 1:
            inv = 1 / piv
            self.rows[r] = [v * inv if v else v for v in self.rows[r]]
            self.rhs[r] *= inv

    def _eliminate(self, r: int, j: int) -> None:
        row_r = self.rows[r]
        for i in range(self.m):
            if i == r:
                continue
            factor = self.rows[i][j]
            if factor == 0:
                continue
            row_i = self.rows[i]
            self.rows[i] = [
                a - factor * b if b else a for a, b in zip(row_i, row_r)
            ]
            self.rhs[i] -= factor * self.rhs[r]

    def _nonbasic_value(self, j: int) -> Fraction:
        if self.state[j] == _AT_UPPER:
            return self.prog.upper[j]
        return _ZERO

    def _reduced_costs(self) -> list[Fraction]:
        # y = c_B applied to the reduced tableau: rc_j = c_j - sum_i c_B[i] * T[i][j]
        c = self.prog.c
        rc = list(c)
        for i, bi in enumerate(self.basis):
            cb = c[bi]
            if cb == 0:
                continue
            row = self.rows[i]
            for j in range(self.n):
                if row[j]:
                    rc[j] -= cb * row[j]
        return rc

    def solve(self, max_iters: int = 200_000) -> LPResult:
        for _ in range(max_iters):
            rc = self._reduced_costs()
            entering = -1
            direction = 0
            for j in range(self.n):  # Bland: lowest eligible index
                if self.state[j] == _BASIC or j in self.banned:
                    continue
                if self.state[j] == _AT_LOWER and rc[j] < 0:
                    entering, direction = j, 1
                    break
                if self.state[j] == _AT_UPPER and rc[j] > 0:
                    entering, direction = j, -1
                    break
            if entering < 0:
                return self._result()
            if not self._step(entering, direction):
                return LPResult("unbounded", [], _ZERO)
        raise LPError("simplex iteration limit exceeded")

    def _entering_column(self, j: int) -> list[Fraction]:
        return [self.rows[i][j] for i in range(self.m)]

    def _step(self, entering: int, direction: int) -> bool:
        col = self._entering_column(entering)
        upper = self.prog.upper
        # Largest movement delta >= 0 of the entering variable toward its
        # opposite bound, limited by each basic variable's own bounds.
        limit = upper[entering]  # None means an unbounded flip range
        leaving = -1
        leaving_to = _AT_LOWER
        for i in range(self.m):
            coef = col[i] * direction
            if coef > 0:
                cap = self.beta[i] / coef
                hit = _AT_LOWER
            elif coef < 0:
                ub = upper[self.basis[i]]
                if ub is None:
                    continue
                cap = (ub - self.beta[i]) / (-coef)
                hit = _AT_UPPER
            else:
                continue
            take = False
            if limit is None or cap < limit:
                take = True
            elif cap == limit:
                # Prefer a pivot over a bound flip, then Bland's index rule.
                take = leaving < 0 or self.basis[i] < self.basis[leaving]
            if take:
                limit = cap
                leaving = i
                leaving_to = hit
        if limit is None:
            return False
        delta = limit
        if leaving < 0:
            # Bound flip: the entering variable runs to its other bound.
            for i in range(self.m):
                if col[i]:
                    self.beta[i] -= direction * delta * col[i]
            self.state[entering] = _AT_UPPER if direction > 0 else _AT_LOWER
            return True
        # Pivot: entering becomes basic, leaving goes to the bound it hit.
        for i in range(self.m):
            if col[i]:
                self.beta[i] -= direction * delta * col[i]
        entering_value = self._nonbasic_value(entering) + direction * delta
        old_var = self.basis[leaving]
        self.state[old_var] = leaving_to
        self.state[entering] = _BASIC
        self.basis[leaving] = entering
        self._normalize(leaving, entering)
        self._eliminate(leaving, entering)
        self.beta[leaving] = entering_value
        return True

    def _result(self) -> LPResult:
        x = [self._nonbasic_value(j) for j in range(self.n)]
        for i, j in enumerate(self.basis):
            x[j] = self.beta[i]
        for i, j in enumerate(self.basis):
            u = self.prog.upper[j]
            if self.beta[i] < 0 or (u is not None and self.beta[i] > u):
                raise LPError("basic variable out of bounds (numerical bug)")
        obj = sum((cj * xj for cj, xj in zip(self.prog.c, x)), _ZERO)
        return LPResult("optimal", x, obj)


def solve_with_basis(prog: Program, basis: Sequence[int]) -> LPResult:
    return _ExactSimplex(prog, basis).solve()


def solve_two_phase(prog: Program) -> LPResult:
    """Exact solve without a starting basis (phase-1 artificials)."""
    m, n = prog.m, prog.n
    rows = [list(r) for r in prog.rows]
    b = list(prog.b)
    for i in range(m):
        if b[i] < 0:
            rows[i] = [-v for v in rows[i]]
            b[i] = -b[i]
    art_cols = list(range(n, n + m))
    aug_rows = [row + [Fraction(1 if k == i else 0) for k in range(m)] for i, row in enumerate(rows)]
    phase1 = Program(
        c=[_ZERO] * n + [Fraction(1)] * m,
        rows=aug_rows,
        b=b,
        upper=list(prog.upper) + [None] * m,
    )
    sim1 = _ExactSimplex(phase1, art_cols)
    res1 = sim1.solve()
    if res1.status != "optimal" or res1.objective != 0:
        return LPResult("infeasible", [], _ZERO)
    # Phase 2 keeps the artificial columns but pins them to zero and bans
    # them from re-entering the basis.
    phase2 = Program(
        c=list(prog.c) + [_ZERO] * m,
        rows=aug_rows,
        b=b,
        upper=list(prog.upper) + [_ZERO] * m,
    )
    carried_upper = [j for j in range(n) if sim1.state[j] == _AT_UPPER]
    res2 = _ExactSimplex(
        phase2, sim1.basis, banned=frozenset(art_cols), at_upper=carried_upper
    ).solve()
    return LPResult(res2.status, res2.x[:n], res2.objective)


# ---------------------------------------------------------------------------
# float basis hunt + exact certification


def _float_simplex(prog: Program, basis: Sequence[int], max_iters: int = 20_000):
    """Run the same bounded simplex in floats; return (basis, at_upper set).

    Only used to hunt for a candidate optimal basis; every answer is
    certified exactly afterwards, so tolerances here affect speed only.
    """
    n, m = prog.n, prog.m
    eps = 1e-9
    c = [float(v) for v in prog.c]
    upper = [None if u is None else float(u) for u in prog.upper]
    rows = [[float(v) for v in row] for row in prog.rows]
    rhs = [float(v) for v in prog.b]
    basis = list(basis)
    state = [_AT_LOWER] * n
    for j in basis:
        state[j] = _BASIC

    for r, j in enumerate(basis):
        pivot = max(range(r, m), key=lambda i: abs(rows[i][j]))
        if abs(rows[pivot][j]) < 1e-12:
            raise LPError("initial basis is singular (float)")
        rows[r], rows[pivot] = rows[pivot], rows[r]
        rhs[r], rhs[pivot] = rhs[pivot], rhs[r]
        piv = rows[r][j]
        rows[r] = [v / piv for v in rows[r]]
        rhs[r] /= piv
        for i in range(m):
            if i != r and rows[i][j]:
                f = rows[i][j]
                rows[i] = [a - f * bv for a, bv in zip(rows[i], rows[r])]
                rhs[i] -= f * rhs[r]
    beta = list(rhs)

    for it in range(max_iters):
        rc = list(c)
        for i, bi in enumerate(basis):
            cb = c[bi]
            if cb:
                row = rows[i]
                for j in range(n):
                    if row[j]:
                        rc[j] -= cb * row[j]
        bland = it > max_iters // 2
        entering, direction, best = -1, 0, -eps
        for j in range(n):
            if state[j] == _BASIC:
                continue
            score = None
            if state[j] == _AT_LOWER and rc[j] < -eps:
                score, d = rc[j], 1
            elif state[j] == _AT_UPPER and rc[j] > eps:
                score, d = -rc[j], -1
            if score is not None and score < best:
                entering, direction, best = j, d, score
                if bland:
                    break
        if entering < 0:
            return basis, {j for j in range(n) if state[j] == _AT_UPPER}

        col = [rows[i][entering] for i in range(m)]
        limit = upper[entering]
        leaving, leaving_to = -1, _AT_LOWER
        for i in range(m):
            coef = col[i] * direction
            if coef > eps:
                cap, hit = max(beta[i], 0.0) / coef, _AT_LOWER
            elif coef < -eps:
                ub = upper[basis[i]]
                if ub is None:
                    continue
                cap, hit = max(ub - beta[i], 0.0) / (-coef), _AT_UPPER
            else:
                continue
            if limit is None or cap < limit - 1e-12:
                limit, leaving, leaving_to = cap, i, hit
        if limit is None:
            raise LPError("unbounded (float)")
        for i in range(m):
            if col[i]:
                beta[i] -= direction * limit * col[i]
        if leaving < 0:
            state[entering] = _AT_UPPER if direction > 0 else _AT_LOWER
            continue
        entering_value = (
            upper[entering] if state[entering] == _AT_UPPER else 0.0
        ) + direction * limit
        state[basis[leaving]] = leaving_to
        state[entering] = _BASIC
        basis[leaving] = entering
        piv = rows[leaving][entering]
        rows[leaving] = [v / piv for v in rows[leaving]]
        for i in range(m):
            if i != leaving and rows[i][entering]:
                f = rows[i][entering]
                rows[i] = [a - f * bv for a, bv in zip(rows[i], rows[leaving])]
        beta[leaving] = entering_value
    raise LPError("float simplex iteration limit exceeded")


def _exact_solve_dense(mat: list[list[Fraction]], b: list[Fraction]) -> Optional[list[Fraction]]:
    m = len(mat)
    a = [row[:] + [b[i]] for i, row in enumerate(mat)]
    for k in range(m):
        pivot = None
        for i in range(k, m):
            if a[i][k] != 0:
                pivot = i
                break
        if pivot is None:
            return None
        a[k], a[pivot] = a[pivot], a[k]
        pk = a[k][k]
        if pk != 1:
            inv = 1 / pk
            a[k] = [v * inv if v else v for v in a[k]]
        for i in range(m):
            if i != k and a[i][k] != 0:
                f = a[i][k]
                a[i] = [v - f * w if w else v for v, w in zip(a[i], a[k])]
    return [a[i][m] for i in range(m)]


def certify_basis(
    prog: Program, basis: Sequence[int], at_upper: set[int]
) -> Optional[LPResult]:
    """Exactly re-solve a candidate basis and verify optimality conditions."""
    m, n = prog.m, prog.n
    basis = list(basis)
    if len(basis) != m or len(set(basis)) != m:
        return None
    bvec = list(prog.b)
    for j in at_upper:
        u = prog.upper[j]
        if u is None:
            return None
        for i in range(m):
            a = prog.rows[i][j]
            if a:
                bvec[i] -= a * u
    mat = [[prog.rows[i][j] for j in basis] for i in range(m)]
    xb = _exact_solve_dense(mat, bvec)
    if xb is None:
        return None
    for i, j in enumerate(basis):
        u = prog.upper[j]
        if xb[i] < 0 or (u is not None and xb[i] > u):
            return None
    # Duals: B^T y = c_B, then sign-check every nonbasic reduced cost.
    mat_t = [[prog.rows[i][j] for i in range(m)] for j in basis]
    y = _exact_solve_dense(mat_t, [prog.c[j] for j in basis])
    if y is None:
        return None
    basic_set = set(basis)
    for j in range(n):
        if j in basic_set:
            continue
        rc = prog.c[j] - sum(
            (y[i] * prog.rows[i][j] for i in range(m) if prog.rows[i][j]), _ZERO
        )
        if j in at_upper:
            if rc > 0:
                return None
        elif rc < 0:
            return None
    x = [_ZERO] * n
    for j in at_upper:
        x[j] = prog.upper[j]
    for i, j in enumerate(basis):
        x[j] = xb[i]
    obj = sum((prog.c[j] * x[j] for j in range(n)), _ZERO)
    return LPResult("optimal", x, obj)


def solve_bounded(
    prog: Program,
    basis0: Sequence[int],
    force_exact: bool = False,
    exact_threshold: int = 24,
) -> LPResult:
    """Solve with a known feasible starting basis (nonbasics at lower)."""
    if force_exact or prog.m <= exact_threshold:
        return solve_with_basis(prog, basis0)
    try:
        basis, at_upper = _float_simplex(prog, basis0)
        certified = certify_basis(prog, basis, at_upper)
        if certified is not None:
            return certified
    except LPError:
        pass
    return solve_with_basis(prog, basis0)
