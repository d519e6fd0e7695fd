"""Linear constant-coefficient ODEs and ODE systems over exact rationals.

Operator polynomials P(D) = sum p[i] D^i are lists of Fractions.  Systems of
coupled linear ODEs with rational constant coefficients are reduced to
upper-triangular form by Euclidean row operations over the operator ring
(which handles overdetermined blocks through operator gcds), then solved by
back substitution.  Solutions are exponential-polynomial expressions with
fresh integration constants.

Characteristic roots are located numerically (companion-matrix eigenvalues)
and then certified and deflated exactly whenever they are rational; roots
that resist exact recognition are kept as close rational approximations and
flagged, so callers always know whether a solution is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    Expr,
    ONE,
    Rat,
    Sym,
    ZERO,
    add,
    differentiate,
    exp_of,
    format_expr,
    is_zero,
    mul,
    power,
    symbol,
)

DPoly = list  # list[Fraction], index = power of D


class LinOdeError(Exception):
    pass


# ---------------------------------------------------------------------------
# operator-polynomial arithmetic


def dp(*coeffs) -> DPoly:
    return dp_trim([Fraction(c) for c in coeffs])


def dp_trim(p: Sequence) -> DPoly:
    out = [Fraction(c) for c in p]
    while out and out[-1] == 0:
        out.pop()
    return out


def dp_degree(p: DPoly) -> int:
    return len(p) - 1  # -1 for the zero polynomial


def dp_add(a: DPoly, b: DPoly) -> DPoly:
    n = max(len(a), len(b))
    return dp_trim(
        [
            (a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0)
            for i in range(n)
        ]
    )


def dp_neg(a: DPoly) -> DPoly:
    return [-c for c in a]


def dp_sub(a: DPoly, b: DPoly) -> DPoly:
    return dp_add(a, dp_neg(b))


def dp_scale(a: DPoly, k: Fraction) -> DPoly:
    return dp_trim([c * k for c in a])


def dp_mul(a: DPoly, b: DPoly) -> DPoly:
    if not a or not b:
        return []
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        if ca == 0:
            continue
        for j, cb in enumerate(b):
            out[i + j] += ca * cb
    return dp_trim(out)


def dp_divmod(a: DPoly, b: DPoly):
    if not b:
        raise ZeroDivisionError("operator polynomial division by zero")
    rem = list(a)
    quot = [Fraction(0)] * max(0, len(a) - len(b) + 1)
    lead = b[-1]
    while len(rem) >= len(b):
        k = len(rem) - len(b)
        c = rem[-1] / lead
        quot[k] = c
        for j in range(len(b)):
            rem[k + j] -= c * b[j]
        rem = dp_trim(rem[:-1])  # top coefficient is now exactly zero
        if not rem:
            break
    return dp_trim(quot), dp_trim(rem)


def dp_gcd(a: DPoly, b: DPoly) -> DPoly:
    while b:
        _, r = dp_divmod(a, b)
        a, b = b, r
    if a:
        a = dp_scale(a, 1 / a[-1])  # monic
    return a


def dp_derivative(p: DPoly) -> DPoly:
    return dp_trim([i * p[i] for i in range(1, len(p))])


def dp_eval(p: DPoly, x: Fraction) -> Fraction:
    out = Fraction(0)
    for c in reversed(p):
        out = out * x + c
    return out


def dp_from_roots(roots: Sequence) -> DPoly:
    out = dp(1)
    for r in roots:
        out = dp_mul(out, dp(-Fraction(r), 1))
    return out


def dp_apply(p: DPoly, e: Expr, var) -> Expr:
    """Apply the operator P(D) to an expression in `var`."""
    out = ZERO
    cur = e
    for i, c in enumerate(p):
        if i > 0:
            cur = differentiate(cur, var)
        if c != 0:
            out = add(out, mul(Rat(c), cur))
    return out


# ---------------------------------------------------------------------------
# characteristic roots


@dataclass(frozen=True)
class Root:
    value: Fraction
    multiplicity: int
    exact: bool


_RECOGNIZE_DEN = 64
_RECOGNIZE_TOL = 1e-5


def char_roots(p: DPoly) -> list:
    """All roots of P with multiplicities.

    Rational roots (denominator <= 64) are certified by exact division and
    carry exact=True; remaining real roots are close rational surrogates
    flagged exact=False.  Complex roots are not supported and raise.
    """
    p = dp_trim(p)
    if dp_degree(p) <= 0:
        return []
    approx = np.roots([float(c) for c in reversed(p)])
    # candidate generation is deliberately permissive (multiple roots perturb
    # eigenvalues by ~1e-8, often into conjugate pairs); exact division below
    # certifies or rejects every candidate, so false positives are free
    candidates = set()
    for z in approx:
        r = Fraction(float(z.real)).limit_denominator(_RECOGNIZE_DEN)
        if abs(float(r) - z.real) < _RECOGNIZE_TOL:
            candidates.add(r)
    roots = []
    rem = p
    for r in sorted(candidates):
        m = 0
        while dp_degree(rem) >= 1:
            q, residue = dp_divmod(rem, dp(-r, 1))
            if residue:
                break
            rem = q
            m += 1
        if m:
            roots.append(Root(r, m, True))
    if dp_degree(rem) >= 1:
        left = np.roots([float(c) for c in reversed(rem)])
        for z in left:
            if abs(z.imag) > 1e-7 * (1.0 + abs(z)):
                raise LinOdeError(
                    "complex characteristic roots are not supported: "
                    f"{z:.6g} from operator {rem}"
                )
            roots.append(
                Root(Fraction(float(z.real)).limit_denominator(10 ** 12), 1, False)
            )
    roots.sort(key=lambda r: r.value)
    total = sum(r.multiplicity for r in roots)
    if total != dp_degree(p):
        raise LinOdeError(
            f"root multiplicities {total} do not sum to degree {dp_degree(p)}"
        )
    return roots


# ---------------------------------------------------------------------------
# scalar solve


class FreshConstants:
    """Deterministic supply of integration-constant symbols c1, c2, ..."""

    def __init__(self, prefix: str = "c"):
        self.prefix = prefix
        self.made = []

    def next(self) -> Sym:
        s = symbol(f"{self.prefix}{len(self.made) + 1}")
        self.made.append(s.name)
        return s


def homogeneous_basis(p: DPoly, var) -> list:
    """Basis t^j exp(lam t) of the kernel of P(D), lam ascending, j ascending."""
    t = symbol(var) if isinstance(var, str) else var
    basis = []
    inexact = False
    for root in char_roots(p):
        inexact = inexact or not root.exact
        for j in range(root.multiplicity):
            basis.append(
                mul(power(t, Rat(Fraction(j))), exp_of(mul(Rat(root.value), t)))
            )
    return basis, inexact


def particular_solution(p: DPoly, forcing_terms, var) -> Expr:
    """Particular solution of P(D) y = forcing, by undetermined coefficients.

    `forcing_terms` is a list of (lam: Fraction, k: int, coeff: Expr) as
    produced by exp_poly_terms.  Resonance (lam a root of P with multiplicity
    m) is handled by the t^m shift; the triangular coefficient system is
    solved exactly, so symbolic constants in `coeff` pass straight through.

    Uses P(D)[t^s e^(lam t)] = e^(lam t) * sum_i C(s,i) P_i(lam) t^(s-i)
    with P_i the i-th derivative of P.
    """
    t = symbol(var) if isinstance(var, str) else var
    p = dp_trim(p)
    if not p:
        raise LinOdeError("zero operator has no particular solution")
    derivs = [p]
    while dp_trim(derivs[-1]):
        derivs.append(dp_derivative(derivs[-1]))
    pieces = []
    for lam, k, coeff in forcing_terms:
        if coeff == ZERO:
            continue
        m = 0
        while m < len(derivs) and dp_eval(derivs[m], lam) == 0:
            m += 1
        if m >= len(derivs):  # pragma: no cover - p nonzero rules this out
            raise LinOdeError("degenerate operator in particular solve")

        def pcoef(i):
            return dp_eval(derivs[i], lam) if i < len(derivs) else Fraction(0)

        b = [ZERO] * (k + 1)
        for prow in range(k, -1, -1):
            acc = coeff if prow == k else ZERO
            for j in range(prow + 1, k + 1):
                i = m + j - prow
                c = Fraction(math.comb(m + j, i)) * pcoef(i)
                if c != 0:
                    acc = add(acc, mul(Rat(-c), b[j]))
            diag = Fraction(math.comb(m + prow, m)) * pcoef(m)
            b[prow] = mul(Rat(1 / diag), acc)
        for j, bj in enumerate(b):
            if bj != ZERO:
                pieces.append(
                    mul(
                        bj,
                        power(t, Rat(Fraction(m + j))),
                        exp_of(mul(Rat(lam), t)),
                    )
                )
    return add(*pieces) if pieces else ZERO


@dataclass
class ScalarSolution:
    expr: Expr
    constants: list
    exact: bool


def solve_linear_ode(p: DPoly, forcing_terms, var, consts: FreshConstants) -> ScalarSolution:
    """General solution of P(D) y = forcing (homogeneous part + particular)."""
    t = symbol(var) if isinstance(var, str) else var
    p = dp_trim(p)
    if dp_degree(p) < 1:
        if not p:
            raise LinOdeError("zero operator equation")
        # algebraic equation c*y = forcing
        inv = 1 / p[0]
        y = add(
            *(
                mul(
                    Rat(inv),
                    coeff,
                    power(t, Rat(Fraction(k))),
                    exp_of(mul(Rat(lam), t)),
                )
                for lam, k, coeff in forcing_terms
            )
        )
        return ScalarSolution(y, [], True)
    basis, inexact = homogeneous_basis(p, t)
    used = []
    y = ZERO
    for b in basis:
        c = consts.next()
        used.append(c.name)
        y = add(y, mul(c, b))
    y = add(y, particular_solution(p, forcing_terms, t))
    return ScalarSolution(y, used, not inexact)


# ---------------------------------------------------------------------------
# coupled systems


@dataclass
class SystemSolution:
    solutions: dict
    constants: list
    unconstrained: list
    exact: bool

    def verify(self, rows, unknowns, var) -> bool:
        for row in rows:
            residual = ZERO
            for name, poly in row.items():
                residual = add(residual, dp_apply(poly, self.solutions[name], var))
            if not is_zero(residual):
                return False
        return True


def _exp_poly_of(e: Expr, var):
    from .expr import exp_poly_terms

    return exp_poly_terms(e, var)


def solve_ode_system(
    rows: Sequence[Mapping], unknowns: Sequence[str], var, const_prefix: str = "c"
) -> SystemSolution:
    """Solve a homogeneous linear constant-coefficient system for the named
    unknown functions of `var`.

    `rows` are equations sum_name P_name(D) unknown_name = 0 given as maps
    name -> DPoly.  The system may be overdetermined; Euclidean elimination
    over the operator ring reduces compatible blocks to their gcd operator
    and incompatible ones to algebraic constraints (typically forcing the
    unknown to zero).  Unknowns never pinned by any pivot are returned as a
    single free constant each and listed in `unconstrained`.
    """
    t = symbol(var) if isinstance(var, str) else var
    pool = []
    for row in rows:
        cleaned = {n: dp_trim(p) for n, p in row.items()}
        cleaned = {n: p for n, p in cleaned.items() if p}
        unknown_names = set(unknowns)
        alien = set(cleaned) - unknown_names
        if alien:
            raise LinOdeError(f"row references unknown names {sorted(alien)}")
        if cleaned:
            pool.append(cleaned)

    def row_sub(a, q, b):
        # a := a - q*b
        out = dict(a)
        for name, pb in b.items():
            out[name] = dp_sub(out.get(name, []), dp_mul(q, pb))
            if not out[name]:
                del out[name]
        return out

    pivots = {}
    for col in unknowns:
        while True:
            active = [r for r in pool if col in r]
            if len(active) <= 1:
                break
            active.sort(key=lambda r: dp_degree(r[col]))
            low = active[0]
            changed = False
            for r in active[1:]:
                q, _rem = dp_divmod(r[col], low[col])
                new_r = row_sub(r, q, low)
                pool[pool.index(r)] = new_r
                changed = True
            pool = [r for r in pool if r]
            if not changed:  # pragma: no cover - defensive
                break
        active = [r for r in pool if col in r]
        if active:
            pivots[col] = active[0]
            pool.remove(active[0])
    leftover = [r for r in pool if r]
    if leftover:  # pragma: no cover - defensive
        raise LinOdeError(f"elimination left unresolved rows: {leftover}")

    consts = FreshConstants(const_prefix)
    solutions = {}
    unconstrained = []
    exact = True
    for col in reversed(list(unknowns)):
        row = pivots.get(col)
        if row is None:
            c = consts.next()
            solutions[col] = c
            unconstrained.append(col)
            continue
        forcing = ZERO
        for name, poly in row.items():
            if name == col:
                continue
            if name not in solutions:  # pragma: no cover - triangularity
                raise LinOdeError(f"pivot row for {col} references unsolved {name}")
            forcing = add(forcing, mul(Rat(Fraction(-1)), dp_apply(poly, solutions[name], t)))
        sol = solve_linear_ode(row[col], _exp_poly_of(forcing, t), t, consts)
        solutions[col] = sol.expr
        exact = exact and sol.exact
    out = SystemSolution(solutions, list(consts.made), unconstrained, exact)
    # every returned solution must satisfy every original equation
    for row in rows:
        residual = ZERO
        for name, poly in row.items():
            residual = add(residual, dp_apply(dp_trim(poly), solutions[name], t))
        if not is_zero(residual):
            raise LinOdeError(
                f"internal check failed: residual {format_expr(residual)}"
            )
    return out
