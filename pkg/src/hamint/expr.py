"""Exact-arithmetic symbolic expressions over the polynomial-exponential-power fragment.

Expressions are immutable trees built from rationals, symbols, sums, products,
rational-exponent powers, exp and log.  Every constructor returns a canonical
normal form: sums and products are flattened and sorted, like terms are merged,
rational arithmetic is folded exactly, x^0 -> 1, x^1 -> x, 0*e -> 0, 1*e -> e,
and exp(a)*exp(b) -> exp(a+b).  Two mathematically equal expressions from this
fragment normalize to structurally identical trees, so equality is `==`.

No floating point ever enters a symbolic result; numeric evaluation is a
separate, explicitly double-precision operation.
"""

from __future__ import annotations

import math
import random
import threading
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence


class ExprError(Exception):
    """Base class for expression-engine errors."""


class DomainError(ExprError):
    """Raised for operations outside the real domain (0^negative, log of a
    non-positive constant, negative base under a fractional power)."""


class NonSeparableError(ExprError):
    """Raised when an expression is not a finite power series in the
    collection variable; carries the offending subterm in args[1]."""


class CyclicSubstitutionError(ExprError):
    """Raised when substitution bindings form a dependency cycle."""


class ParseError(ExprError):
    """Raised on malformed expression text; `position` is a 0-based offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


_MAX_FOLD_ROOT = 10 ** 12  # below this, integer roots are extracted exactly


class Expr:
    __slots__ = ("_hash", "_key", "_free")

    def sort_key(self):
        k = self._key
        if k is None:
            k = self._key = self._make_key()
            return k
        return k

    def _make_key(self):  # pragma: no cover - overridden
        raise NotImplementedError

    def free_symbols(self) -> frozenset:
        f = self._free
        if f is None:
            f = self._free = self._make_free()
        return f

    def _make_free(self) -> frozenset:  # pragma: no cover - overridden
        raise NotImplementedError

    def __hash__(self):
        return self._hash

    # Arithmetic sugar; every operation routes through the canonical
    # constructors, so results of `+`, `*`, `**` are always normalized.
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, mul(MINUS_ONE, as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), mul(MINUS_ONE, self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return mul(self, power(as_expr(other), MINUS_ONE))

    def __rtruediv__(self, other):
        return mul(as_expr(other), power(self, MINUS_ONE))

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __neg__(self):
        return mul(MINUS_ONE, self)

    def __repr__(self):
        return f"<{type(self).__name__} {format_expr(self)}>"


class Rat(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Fraction):
        self.value = value
        self._hash = hash(("Rat", value))
        self._key = None
        self._free = frozenset()

    def _make_key(self):
        return (0, self.value)

    def _make_free(self):
        return frozenset()

    def __eq__(self, other):
        return type(other) is Rat and other.value == self.value

    __hash__ = Expr.__hash__


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name
        self._hash = hash(("Sym", name))
        self._key = None
        self._free = frozenset((name,))

    def _make_key(self):
        return (1, self.name)

    def _make_free(self):
        return self._free

    def __eq__(self, other):
        return type(other) is Sym and other.name == self.name

    __hash__ = Expr.__hash__


class Exp(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg
        self._hash = hash(("Exp", arg))
        self._key = None
        self._free = None

    def _make_key(self):
        return (2, self.arg.sort_key())

    def _make_free(self):
        return self.arg.free_symbols()

    def __eq__(self, other):
        return type(other) is Exp and other.arg == self.arg

    __hash__ = Expr.__hash__


class Log(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg
        self._hash = hash(("Log", arg))
        self._key = None
        self._free = None

    def _make_key(self):
        return (3, self.arg.sort_key())

    def _make_free(self):
        return self.arg.free_symbols()

    def __eq__(self, other):
        return type(other) is Log and other.arg == self.arg

    __hash__ = Expr.__hash__


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: Expr):
        self.base = base
        self.exponent = exponent
        self._hash = hash(("Pow", base, exponent))
        self._key = None
        self._free = None

    def _make_key(self):
        return (4, self.base.sort_key(), self.exponent.sort_key())

    def _make_free(self):
        return self.base.free_symbols() | self.exponent.free_symbols()

    def __eq__(self, other):
        return (
            type(other) is Pow
            and other.base == self.base
            and other.exponent == self.exponent
        )

    __hash__ = Expr.__hash__


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: tuple):
        self.factors = factors
        self._hash = hash(("Mul", factors))
        self._key = None
        self._free = None

    def _make_key(self):
        return (5,) + tuple(f.sort_key() for f in self.factors)

    def _make_free(self):
        out = frozenset()
        for f in self.factors:
            out |= f.free_symbols()
        return out

    def __eq__(self, other):
        return type(other) is Mul and other.factors == self.factors

    __hash__ = Expr.__hash__


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: tuple):
        self.terms = terms
        self._hash = hash(("Add", terms))
        self._key = None
        self._free = None

    def _make_key(self):
        return (6,) + tuple(t.sort_key() for t in self.terms)

    def _make_free(self):
        out = frozenset()
        for t in self.terms:
            out |= t.free_symbols()
        return out

    def __eq__(self, other):
        return type(other) is Add and other.terms == self.terms

    __hash__ = Expr.__hash__


_sym_lock = threading.Lock()
_sym_cache: dict = {}


def symbol(name: str) -> Sym:
    """Interned symbol; safe for concurrent use."""
    s = _sym_cache.get(name)
    if s is None:
        with _sym_lock:
            s = _sym_cache.setdefault(name, Sym(name))
    return s


def rational(num, den=1) -> Rat:
    return Rat(Fraction(num, den))


ZERO = rational(0)
ONE = rational(1)
MINUS_ONE = rational(-1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Rat(Fraction(x))
    if isinstance(x, str):
        return symbol(x)
    raise TypeError(f"cannot coerce {x!r} to Expr")


def _coeff_split(term: Expr):
    """Split a canonical non-Add term into (rational coefficient, monomial key)."""
    if type(term) is Rat:
        return term.value, ONE
    if type(term) is Mul and type(term.factors[0]) is Rat:
        rest = term.factors[1:]
        mono = rest[0] if len(rest) == 1 else Mul(rest)
        return term.factors[0].value, mono
    return Fraction(1), term


def _scaled(coeff: Fraction, mono: Expr) -> Expr:
    if mono is ONE or mono == ONE:
        return Rat(coeff)
    if coeff == 0:
        return ZERO
    if coeff == 1:
        return mono
    if type(mono) is Mul:
        return Mul((Rat(coeff),) + mono.factors)
    return Mul((Rat(coeff), mono))


def add(*terms) -> Expr:
    flat = []
    stack = list(reversed([as_expr(t) for t in terms]))
    while stack:
        t = stack.pop()
        if type(t) is Add:
            stack.extend(reversed(t.terms))
            continue
        if (
            type(t) is Pow
            and type(t.base) is Mul
            and type(t.exponent) is Rat
            and t.exponent.value.denominator != 1
            and not 0 < t.exponent.value < 1
        ):
            # align a bare product-base power with the split form its
            # in-product occurrences take, so like terms actually meet
            t = mul(t)
            if type(t) is Add:
                stack.extend(reversed(t.terms))
                continue
        flat.append(t)
    const = Fraction(0)
    bykey: dict = {}
    order: list = []
    for t in flat:
        if type(t) is Rat:
            const += t.value
            continue
        coeff, mono = _coeff_split(t)
        if mono in bykey:
            bykey[mono] += coeff
        else:
            bykey[mono] = coeff
            order.append(mono)
    rebuilt = []
    for mono in order:
        c = bykey[mono]
        if c != 0:
            rebuilt.append(_scaled(c, mono))
    if const != 0:
        rebuilt.append(Rat(const))
    if not rebuilt:
        return ZERO
    if len(rebuilt) == 1:
        return rebuilt[0]
    rebuilt.sort(key=lambda e: e.sort_key())
    return Add(tuple(rebuilt))


def mul(*factors) -> Expr:
    """Canonical product.

    All factors sharing a base (sums count as base^1) have their exponents
    summed *before* any sum is distributed, so inverse pairs such as
    (1-s)*(1-s)^(-1) cancel exactly.  Each merged base is then emitted as
    integer part x fractional part (exponent in (0,1)); integer powers of
    products distribute, integer powers of sums expand, and remaining sum
    factors are distributed over the rest.
    """
    pending = [as_expr(f) for f in factors]
    for _round in range(64):
        flat = []
        stack = list(reversed(pending))
        while stack:
            f = stack.pop()
            if type(f) is Mul:
                stack.extend(reversed(f.factors))
            else:
                flat.append(f)
        coeff = Fraction(1)
        exp_args: list = []
        bases: dict = {}
        border: list = []
        for f in flat:
            if type(f) is Rat:
                coeff *= f.value
                if coeff == 0:
                    return ZERO
            elif type(f) is Exp:
                exp_args.append(f.arg)
            elif type(f) is Pow:
                if f.base in bases:
                    bases[f.base].append(f.exponent)
                else:
                    bases[f.base] = [f.exponent]
                    border.append(f.base)
            else:  # Sym, Log, Add
                if f in bases:
                    bases[f].append(ONE)
                else:
                    bases[f] = [ONE]
                    border.append(f)
        simple: list = []
        sums: list = []
        muls: list = []
        for b in border:
            for piece in _emit_power(b, add(*bases[b])):
                t = type(piece)
                if t is Rat:
                    coeff *= piece.value
                    if coeff == 0:
                        return ZERO
                elif t is Exp:
                    exp_args.append(piece.arg)
                elif t is Add:
                    sums.append(piece)
                elif t is Mul:
                    muls.append(piece)
                else:
                    simple.append(piece)
        if exp_args:
            xp = exp_of(add(*exp_args))
            if type(xp) is Exp:
                simple.append(xp)
        if sums:
            rest = simple + sums[1:] + muls
            if coeff != 1:
                rest.append(Rat(coeff))
            return add(*(mul(term, *rest) for term in sums[0].terms))
        if muls:
            pending = ([Rat(coeff)] if coeff != 1 else []) + simple + muls
            continue
        if not simple:
            return Rat(coeff)
        simple.sort(key=lambda e: e.sort_key())
        if coeff != 1:
            simple.insert(0, Rat(coeff))
        if len(simple) == 1:
            return simple[0]
        return Mul(tuple(simple))
    raise ExprError("product normalization did not stabilize")


def _emit_power(b: Expr, total: Expr) -> list:
    """Factors representing b**total inside a product.

    A product base (whose integer powers distribute exactly) is emitted as
    integer part x fractional part with the fractional exponent in (0,1), so
    that e.g. w^(-23/20) and w^(-3/20) in different terms reach a shared
    w^(17/20) and can cancel.  Every other base keeps a whole exponent --
    splitting a sum or symbol base would break exact exponent merging on the
    nodes themselves."""
    if total == ZERO:
        return []
    if total == ONE:
        return [b]
    if (
        type(b) is Mul
        and type(total) is Rat
        and total.value.denominator != 1
    ):
        n = math.floor(total.value)
        f = total.value - n
        out = []
        if n != 0:
            out.append(power(b, Rat(Fraction(n))))
        out.append(_frac_pow(b, f))
        return out
    return [power(b, total)]


def _int_nth_root(n: int, k: int):
    """Exact integer k-th root of n >= 0, or None."""
    if n in (0, 1):
        return n
    if n > _MAX_FOLD_ROOT:
        return None
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** k == n:
            return cand
    return None


def _rat_pow(b: Fraction, e: Fraction):
    """Exact rational power, or None if the result is irrational / kept symbolic."""
    if e.denominator == 1:
        n = e.numerator
        if b == 0:
            if n < 0:
                raise DomainError("zero base raised to a negative power")
            return Fraction(0) if n > 0 else Fraction(1)
        return b ** n
    if b < 0:
        return None
    if b == 0:
        if e < 0:
            raise DomainError("zero base raised to a negative power")
        return Fraction(0)
    rn = _int_nth_root(b.numerator, e.denominator)
    rd = _int_nth_root(b.denominator, e.denominator)
    if rn is None or rd is None:
        return None
    root = Fraction(rn, rd)
    return root ** e.numerator


def _exp_part(term: Expr):
    """(exp argument, remaining factor) of a canonical term; arg 0 if none."""
    if type(term) is Exp:
        return term.arg, ONE
    if type(term) is Mul:
        for i, f in enumerate(term.factors):
            if type(f) is Exp:
                rest = term.factors[:i] + term.factors[i + 1 :]
                return f.arg, (rest[0] if len(rest) == 1 else Mul(rest))
    return ZERO, term


def _rational_ratio(u: Expr, w: Expr):
    """Rational r with u == r*w, verified exactly, else None."""
    if u == ZERO:
        return Fraction(0)
    cu, mu = _coeff_split(u if type(u) is not Add else u.terms[0])
    cw, mw = _coeff_split(w if type(w) is not Add else w.terms[0])
    if mu != mw:
        return None
    r = cu / cw
    if add(u, _scaled(-r, ONE) * w) == ZERO:
        return r
    return None


def _common_exp_of_sum(b: Add):
    """Common exp factor of a sum's terms: (u_common, reduced sum) or None.

    Extraction is sound for any real exponent since exp factors are positive.
    """
    parts = [_exp_part(t) for t in b.terms]
    if all(u == ZERO for u, _ in parts):
        return None
    w = next(u for u, _ in parts if u != ZERO)
    ratios = []
    for u, _ in parts:
        r = _rational_ratio(u, w) if u != ZERO else Fraction(0)
        if r is None:
            return None
        ratios.append(r)
    m = min(ratios)
    if m == 0:
        return None
    u_common = mul(Rat(m), w)
    reduced = add(
        *(
            mul(rest, exp_of(mul(Rat(r - m), w)))
            for (u, rest), r in zip(parts, ratios)
        )
    )
    return u_common, reduced


def power(base, exponent) -> Expr:
    b = as_expr(base)
    e = as_expr(exponent)
    if type(e) is Rat:
        if e.value == 0:
            return ONE
        if e.value == 1:
            return b
    if type(b) is Rat:
        if type(e) is Rat:
            v = _rat_pow(b.value, e.value)
            if v is not None:
                return Rat(v)
            return Pow(b, e)
        if b.value == 1:
            return ONE
        return Pow(b, e)
    if type(b) is Exp:
        return exp_of(mul(e, b.arg))
    if type(b) is Pow:
        inner = b.exponent
        e_is_int = type(e) is Rat and e.value.denominator == 1
        inner_frac = type(inner) is Rat and inner.value.denominator != 1
        inner_symbolic = type(inner) is not Rat
        # (x^a)^q folds to x^(a*q) when q is an integer, or when a is
        # fractional/symbolic (which already forces x > 0); (x^2)^(1/2) must
        # stay nested because it is |x|, not x.
        if e_is_int or inner_frac or inner_symbolic:
            return power(b.base, mul(inner, e))
        return Pow(b, e)
    if type(b) is Mul:
        if type(e) is Rat and e.value.denominator == 1:
            return mul(*(power(f, e) for f in b.factors))
        # fractional or symbolic exponent: only provably-positive exp factors
        # may be pulled out of the base; the power itself stays a whole node
        # so a later power of it can still merge exponents exactly
        exps = [f for f in b.factors if type(f) is Exp]
        if exps:
            rest = [f for f in b.factors if type(f) is not Exp]
            u = add(*(f.arg for f in exps))
            return mul(exp_of(mul(e, u)), power(mul(*rest) if rest else ONE, e))
        return Pow(b, e)
    if type(b) is Add:
        if type(e) is Rat and e.value.denominator == 1:
            n = e.value.numerator
            if n >= 2:
                return _expand_add_power(b, n)
            return Pow(b, e)  # negative integer powers of sums stay opaque
        ce = _common_exp_of_sum(b)
        if ce is not None:
            u_common, reduced = ce
            return mul(exp_of(mul(e, u_common)), power(reduced, e))
        return Pow(b, e)
    return Pow(b, e)  # Sym, Log


def _frac_pow(b: Expr, f: Fraction) -> Expr:
    """b**f for a Fraction f in (0,1), applying the same base reductions as
    power() (exact roots, exp extraction, nested-power merging)."""
    if type(b) is Rat:
        v = _rat_pow(b.value, f)
        return Rat(v) if v is not None else Pow(b, Rat(f))
    if type(b) is Exp:
        return exp_of(mul(Rat(f), b.arg))
    if type(b) is Pow:
        inner = b.exponent
        if type(inner) is not Rat or inner.value.denominator != 1:
            return power(b.base, mul(inner, Rat(f)))
        return Pow(b, Rat(f))
    if type(b) is Mul:
        exps = [x for x in b.factors if type(x) is Exp]
        if exps:
            rest = [x for x in b.factors if type(x) is not Exp]
            u = add(*(x.arg for x in exps))
            tail = _frac_pow(mul(*rest), f) if rest else ONE
            return mul(exp_of(mul(Rat(f), u)), tail)
        return Pow(b, Rat(f))
    if type(b) is Add:
        ce = _common_exp_of_sum(b)
        if ce is not None:
            u_common, reduced = ce
            return mul(exp_of(mul(Rat(f), u_common)), _frac_pow(reduced, f))
        return Pow(b, Rat(f))
    return Pow(b, Rat(f))  # Sym, Log


def _expand_add_power(b: Add, n: int) -> Expr:
    """(sum)**n for integer n >= 2, expanded term by term.  Terms of a
    canonical sum are never sums themselves, so the inner products cannot
    re-merge into the power being expanded."""
    terms = list(b.terms)
    for _ in range(n - 1):
        terms = [mul(x, y) for x in terms for y in b.terms]
    return add(*terms)


def exp_of(arg) -> Expr:
    u = as_expr(arg)
    if u == ZERO:
        return ONE
    return Exp(u)


def log_of(arg) -> Expr:
    u = as_expr(arg)
    if type(u) is Rat:
        if u.value == 1:
            return ZERO
        if u.value <= 0:
            raise DomainError("log of a non-positive constant")
    return Log(u)


def normalize(e: Expr) -> Expr:
    """Rebuild through the canonical constructors (idempotent)."""
    t = type(e)
    if t in (Rat, Sym):
        return e
    if t is Add:
        return add(*(normalize(x) for x in e.terms))
    if t is Mul:
        return mul(*(normalize(x) for x in e.factors))
    if t is Pow:
        return power(normalize(e.base), normalize(e.exponent))
    if t is Exp:
        return exp_of(normalize(e.arg))
    if t is Log:
        return log_of(normalize(e.arg))
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# calculus


def _depends(e: Expr, name: str, partials) -> bool:
    free = e.free_symbols()
    if name in free:
        return True
    if partials:
        return any(fn in free for (fn, v) in partials if v == name)
    return False


def differentiate(e: Expr, var, partials: Mapping | None = None) -> Expr:
    """Exact partial derivative d(e)/d(var).

    `partials` optionally maps (symbol_name, var_name) -> Expr, declaring
    derivatives of opaque function symbols (e.g. unknown coefficient
    functions of t, or total-derivative slots).
    """
    x = as_expr(var)
    if not isinstance(x, Sym):
        raise TypeError("differentiation variable must be a symbol")
    return _diff(e, x.name, partials or {})


def _diff(e: Expr, name: str, partials) -> Expr:
    t = type(e)
    if t is Rat:
        return ZERO
    if t is Sym:
        if e.name == name:
            return ONE
        p = partials.get((e.name, name))
        return p if p is not None else ZERO
    if not _depends(e, name, partials):
        return ZERO
    if t is Add:
        return add(*(_diff(term, name, partials) for term in e.terms))
    if t is Mul:
        parts = []
        fs = e.factors
        for i, f in enumerate(fs):
            df = _diff(f, name, partials)
            if df != ZERO:
                parts.append(mul(df, *(fs[:i] + fs[i + 1 :])))
        return add(*parts)
    if t is Pow:
        db = _diff(e.base, name, partials)
        if not _depends(e.exponent, name, partials):
            return mul(e.exponent, power(e.base, add(e.exponent, MINUS_ONE)), db)
        de = _diff(e.exponent, name, partials)
        pieces = [mul(de, log_of(e.base))]
        if db != ZERO:
            pieces.append(mul(e.exponent, db, power(e.base, MINUS_ONE)))
        return mul(e, add(*pieces))
    if t is Exp:
        return mul(_diff(e.arg, name, partials), e)
    if t is Log:
        return mul(_diff(e.arg, name, partials), power(e.arg, MINUS_ONE))
    raise TypeError(f"not an Expr: {e!r}")


def substitute(e: Expr, bindings: Mapping) -> Expr:
    """Simultaneous substitution of symbols by expressions.

    Bindings must be acyclic as a dependency graph (a binding value may not
    reference a bound symbol, directly or transitively).
    """
    norm: dict = {}
    for k, v in bindings.items():
        key = k.name if isinstance(k, Sym) else str(k)
        norm[key] = as_expr(v)
    color: dict = {}

    def visit(n, trail):
        if color.get(n) == 2:
            return
        if color.get(n) == 1:
            cycle = trail[trail.index(n) :] + [n]
            raise CyclicSubstitutionError(
                "cyclic substitution: " + " -> ".join(cycle)
            )
        color[n] = 1
        for m in norm[n].free_symbols():
            if m in norm:
                visit(m, trail + [n])
        color[n] = 2

    for n in norm:
        visit(n, [])
    return _subst(e, norm)


def _subst(e: Expr, bindings) -> Expr:
    t = type(e)
    if t is Rat:
        return e
    if t is Sym:
        return bindings.get(e.name, e)
    if not (e.free_symbols() & bindings.keys()):
        return e
    if t is Add:
        return add(*(_subst(x, bindings) for x in e.terms))
    if t is Mul:
        return mul(*(_subst(x, bindings) for x in e.factors))
    if t is Pow:
        return power(_subst(e.base, bindings), _subst(e.exponent, bindings))
    if t is Exp:
        return exp_of(_subst(e.arg, bindings))
    if t is Log:
        return log_of(_subst(e.arg, bindings))
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# monomial collection


class MonomialMap:
    """Coefficients of an expression grouped by exponent of one variable.

    Keys are canonical exponent expressions; two keys merge exactly when
    their canonical difference is zero, so symbolic parameter exponents such
    as 1-sigma and -sigma stay distinct (generic-parameter assumption).
    """

    def __init__(self, var: Sym, coeffs: dict):
        self.var = var
        self.coeffs = coeffs

    def items(self):
        return sorted(self.coeffs.items(), key=lambda kv: kv[0].sort_key())

    def __getitem__(self, key) -> Expr:
        return self.coeffs.get(as_expr(key), ZERO)

    def __len__(self):
        return len(self.coeffs)

    def keys(self):
        return [k for k, _ in self.items()]

    def reassemble(self) -> Expr:
        return add(*(mul(c, power(self.var, k)) for k, c in self.coeffs.items()))


def collect_powers(e: Expr, var) -> MonomialMap:
    """Group a normalized expression by powers of `var`.

    Raises NonSeparableError if `var` occurs anywhere but as a plain power
    factor (e.g. inside exp, log, a compound power base, or an exponent).
    """
    x = as_expr(var)
    if not isinstance(x, Sym):
        raise TypeError("collection variable must be a symbol")
    terms = e.terms if type(e) is Add else (e,)
    out: dict = {}
    for term in terms:
        factors = term.factors if type(term) is Mul else (term,)
        key_parts = []
        coeff_factors = []
        for f in factors:
            if f == x:
                key_parts.append(ONE)
                continue
            if type(f) is Pow and f.base == x:
                if x.name in f.exponent.free_symbols():
                    raise NonSeparableError(
                        f"variable {x.name} occurs in its own exponent: "
                        f"{format_expr(f)}",
                        f,
                    )
                key_parts.append(f.exponent)
                continue
            if x.name in f.free_symbols():
                raise NonSeparableError(
                    f"variable {x.name} occurs non-polynomially in subterm "
                    f"{format_expr(f)}",
                    f,
                )
            coeff_factors.append(f)
        key = add(*key_parts) if key_parts else ZERO
        coeff = mul(*coeff_factors) if coeff_factors else ONE
        out[key] = add(out.get(key, ZERO), coeff)
    return MonomialMap(x, {k: v for k, v in out.items() if v != ZERO})


# ---------------------------------------------------------------------------
# numeric evaluation


def eval_expr(e: Expr, env: Mapping[str, float]) -> float:
    """Double-precision evaluation; raises DomainError outside the real domain."""
    t = type(e)
    if t is Rat:
        return float(e.value)
    if t is Sym:
        try:
            return float(env[e.name])
        except KeyError:
            raise ExprError(f"no value supplied for symbol {e.name}") from None
    if t is Add:
        return sum(eval_expr(x, env) for x in e.terms)
    if t is Mul:
        out = 1.0
        for x in e.factors:
            out *= eval_expr(x, env)
        return out
    if t is Pow:
        return _num_pow(eval_expr(e.base, env), eval_expr(e.exponent, env))
    if t is Exp:
        try:
            return math.exp(eval_expr(e.arg, env))
        except OverflowError:
            return math.inf
    if t is Log:
        v = eval_expr(e.arg, env)
        if v <= 0.0:
            raise DomainError(f"log of non-positive value {v}")
        return math.log(v)
    raise TypeError(f"not an Expr: {e!r}")


def _num_pow(b: float, e: float) -> float:
    if float(e).is_integer():
        n = int(e)
        if b == 0.0 and n < 0:
            raise DomainError("0.0 raised to a negative power")
        try:
            return b ** n
        except OverflowError:
            return math.inf
    if b < 0.0:
        raise DomainError(f"negative base {b} under fractional power {e}")
    if b == 0.0 and e < 0:
        raise DomainError("0.0 raised to a negative power")
    try:
        return b ** e
    except OverflowError:
        return math.inf


def compile_fn(e: Expr, names: Sequence[str]) -> Callable:
    """Compile to a fast positional function of float arguments."""
    order = {n: i for i, n in enumerate(names)}
    missing = e.free_symbols() - set(names)
    if missing:
        raise ExprError(f"unbound symbols in compiled expression: {sorted(missing)}")

    def emit(x: Expr) -> str:
        t = type(x)
        if t is Rat:
            if x.value.denominator == 1:
                return f"({x.value.numerator}.0)"
            return f"({float(x.value)!r})"
        if t is Sym:
            return f"_a[{order[x.name]}]"
        if t is Add:
            return "(" + " + ".join(emit(c) for c in x.terms) + ")"
        if t is Mul:
            return "(" + " * ".join(emit(c) for c in x.factors) + ")"
        if t is Pow:
            if type(x.exponent) is Rat and x.exponent.value.denominator == 1:
                return f"_ip({emit(x.base)}, {x.exponent.value.numerator})"
            return f"_pw({emit(x.base)}, {emit(x.exponent)})"
        if t is Exp:
            return f"_xp({emit(x.arg)})"
        if t is Log:
            return f"_lg({emit(x.arg)})"
        raise TypeError(f"not an Expr: {x!r}")

    def _ip(b, n):
        if b == 0.0 and n < 0:
            raise DomainError("0.0 raised to a negative power")
        try:
            return b ** n
        except OverflowError:
            return math.inf

    def _xp(u):
        try:
            return math.exp(u)
        except OverflowError:
            return math.inf

    def _lg(u):
        if u <= 0.0:
            raise DomainError(f"log of non-positive value {u}")
        return math.log(u)

    src = "lambda *_a: " + emit(e)
    fn = eval(src, {"_pw": _num_pow, "_ip": _ip, "_xp": _xp, "_lg": _lg})
    fn.__doc__ = src
    return fn


def _cleared_of_sum_powers(e: Expr):
    """e multiplied by enough positive powers of its sum bases to lift every
    rational sum-base exponent to >= 0 (and fractional minima to zero).

    Sums hidden in denominators or under shared fractional powers cannot be
    refactored by term merging alone; after clearing, 1/(1-s)-style and
    p^(10/7)-vs-p^(3/7)-style identities become canonical cancellations.
    Returns None when there is nothing to clear.  Sound as a zero test
    because the multiplier is nonzero a.e. on the expression's domain.
    """
    terms = e.terms if type(e) is Add else (e,)
    mins: dict = {}
    order: list = []
    for ti, term in enumerate(terms):
        factors = term.factors if type(term) is Mul else (term,)
        here: dict = {}
        for f in factors:
            if (
                type(f) is Pow
                and type(f.base) is Add
                and type(f.exponent) is Rat
            ):
                here[f.base] = f.exponent.value
        for b, q in here.items():
            if b not in mins:
                # a base absent from any earlier term counts as power 0 there
                mins[b] = q if ti == 0 else min(q, Fraction(0))
                order.append(b)
        for b in order:
            got = here.get(b, Fraction(0))
            if got < mins[b]:
                mins[b] = got
    shifts = []
    for b in order:
        m = mins[b]
        if m == 0 or (m > 0 and m.denominator == 1):
            continue
        if abs(m) > 8:
            return None  # clearing would blow the expression up
        shifts.append(Pow(b, Rat(-m)))
    if not shifts:
        return None
    return mul(e, *shifts)


def is_zero(e: Expr, samples: int = 10, seed: int = 2024) -> bool:
    """True iff the canonical form of `e` is the zero constant.

    Expressions with sum bases in denominators or under fractional powers
    get a denominator-clearing pass before the verdict.  The symbolic
    verdict is cross-checked by random numeric evaluation at `samples` >= 8
    points as a guard against normalization bugs: a symbolic zero must
    evaluate below 1e-10 everywhere, and a symbolic nonzero that evaluates
    to exactly 0.0 everywhere raises (a normalization gap).
    """
    samples = max(8, samples)
    symbolically_zero = e == ZERO
    if not symbolically_zero:
        probe = e
        for _ in range(3):
            probe = _cleared_of_sum_powers(probe)
            if probe is None:
                break
            if probe == ZERO:
                symbolically_zero = True
                break
    names = sorted(e.free_symbols())
    rng = random.Random(seed)
    if not names:
        if symbolically_zero:
            return True
        v = abs(eval_expr(e, {}))
        if v == 0.0:
            raise ExprError(
                f"normalization gap: nonzero canonical form {format_expr(e)} "
                "evaluates to zero"
            )
        return False
    done = 0
    attempts = 0
    all_exact_zero = True
    while done < samples:
        attempts += 1
        if attempts > 40 * samples:
            raise ExprError("could not find enough in-domain sample points")
        env = {n: rng.uniform(0.3, 2.4) for n in names}
        if attempts > 24 * samples:
            # domain may require some variables negative (e.g. a costate
            # that is negative on solutions); retry with mixed signs
            env = {n: (v if rng.random() < 0.5 else -v) for n, v in env.items()}
        try:
            v = abs(eval_expr(e, env))
        except DomainError:
            continue
        if math.isnan(v) or math.isinf(v):
            continue
        if symbolically_zero:
            if v >= 1e-6:
                raise ExprError(
                    f"unsound normalization: canonical zero evaluates to {v}"
                )
            if v >= 1e-10:
                continue  # ill-conditioned point; try another
        else:
            if v != 0.0:
                all_exact_zero = False
        done += 1
    if not symbolically_zero and all_exact_zero:
        raise ExprError(
            f"normalization gap: {format_expr(e)} is nonzero canonically but "
            "evaluates to exactly zero at all sample points"
        )
    return symbolically_zero


# ---------------------------------------------------------------------------
# exponential-polynomial decomposition


def exp_poly_terms(e: Expr, var) -> list:
    """Decompose into [(lam, k, coeff)] with e == sum coeff * var^k * exp(lam*var).

    `lam` is a Fraction, `k` a non-negative int, `coeff` an Expr free of
    `var`.  Raises NonSeparableError when `e` is outside this family.
    """
    x = as_expr(var)
    terms = e.terms if type(e) is Add else (e,)
    out: dict = {}
    for term in terms:
        factors = term.factors if type(term) is Mul else (term,)
        lam = Fraction(0)
        k = 0
        coeff_factors = []
        extra_exp = []
        for f in factors:
            if f == x:
                k += 1
                continue
            if type(f) is Pow and f.base == x:
                if (
                    type(f.exponent) is not Rat
                    or f.exponent.value.denominator != 1
                    or f.exponent.value < 0
                ):
                    raise NonSeparableError(
                        f"non-polynomial power of {x.name}: {format_expr(f)}", f
                    )
                k += f.exponent.value.numerator
                continue
            if type(f) is Exp and x.name in f.arg.free_symbols():
                parts = collect_powers(f.arg, x)
                for key, c in parts.items():
                    if key == ZERO:
                        extra_exp.append(c)
                    elif key == ONE:
                        if type(c) is not Rat:
                            raise NonSeparableError(
                                f"non-rational exponential rate in {format_expr(f)}",
                                f,
                            )
                        lam += c.value
                    else:
                        raise NonSeparableError(
                            f"exponential of a nonlinear term: {format_expr(f)}", f
                        )
                continue
            if x.name in f.free_symbols():
                raise NonSeparableError(
                    f"variable {x.name} occurs non-polynomially in "
                    f"{format_expr(f)}",
                    f,
                )
            coeff_factors.append(f)
        coeff = mul(*coeff_factors) if coeff_factors else ONE
        if extra_exp:
            coeff = mul(coeff, exp_of(add(*extra_exp)))
        key = (lam, k)
        out[key] = add(out.get(key, ZERO), coeff)
    return sorted(
        ((lam, k, c) for (lam, k), c in out.items() if c != ZERO),
        key=lambda item: (item[0], item[1]),
    )


# ---------------------------------------------------------------------------
# parsing and printing


_FUNCTIONS = ("exp", "log")


def parse_expr(text: str) -> Expr:
    """Parse infix expression text into a canonical expression."""
    tokens = _tokenize(text)
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def advance():
        tok = tokens[pos[0]]
        pos[0] += 1
        return tok

    def expect(kind):
        tok = peek()
        if tok is None or tok[0] != kind:
            at = tok[2] if tok else len(text)
            raise ParseError(f"expected '{kind}'", at)
        return advance()

    def parse_sum():
        negate = False
        tok = peek()
        if tok and tok[0] == "-":
            advance()
            negate = True
        left = parse_term()
        if negate:
            left = mul(MINUS_ONE, left)
        while True:
            tok = peek()
            if tok and tok[0] in ("+", "-"):
                advance()
                right = parse_term()
                left = add(left, right if tok[0] == "+" else mul(MINUS_ONE, right))
            else:
                return left

    def parse_term():
        left = parse_factor()
        while True:
            tok = peek()
            if tok and tok[0] in ("*", "/"):
                advance()
                right = parse_factor()
                left = (
                    mul(left, right)
                    if tok[0] == "*"
                    else mul(left, power(right, MINUS_ONE))
                )
            else:
                return left

    def parse_factor():
        base = parse_base()
        tok = peek()
        if tok and tok[0] == "^":
            advance()
            return power(base, parse_factor())
        return base

    def parse_base():
        tok = peek()
        if tok is None:
            raise ParseError("unexpected end of input", len(text))
        kind, value, at = tok
        if kind == "num":
            advance()
            return rational(value)
        if kind == "ident":
            advance()
            if value in _FUNCTIONS and peek() and peek()[0] == "(":
                advance()
                arg = parse_sum()
                expect(")")
                return exp_of(arg) if value == "exp" else log_of(arg)
            return symbol(value)
        if kind == "(":
            advance()
            inner = parse_sum()
            expect(")")
            return inner
        raise ParseError(f"unexpected token {value!r}", at)

    result = parse_sum()
    tok = peek()
    if tok is not None:
        raise ParseError(f"trailing input {tok[1]!r}", tok[2])
    return result


def _tokenize(text: str):
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(("num", int(text[i:j]), i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        if ch in "+-*/^()":
            tokens.append((ch, ch, i))
            i += 1
            continue
        raise ParseError(f"illegal character {ch!r}", i)
    return tokens


_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def format_expr(e: Expr) -> str:
    """Canonical text form; parse_expr(format_expr(e)) == e."""
    return _fmt(e, 0)


def _self_prec(e: Expr) -> int:
    t = type(e)
    if t is Rat:
        if e.value < 0:
            return _PREC_ADD
        return _PREC_ATOM if e.value.denominator == 1 else _PREC_MUL
    if t in (Sym, Exp, Log):
        return _PREC_ATOM
    if t is Pow:
        return _PREC_POW
    if t is Mul:
        coeff = e.factors[0]
        if type(coeff) is Rat and coeff.value < 0:
            return _PREC_ADD
        return _PREC_MUL
    return _PREC_ADD  # Add


def _fmt(e: Expr, ctx: int) -> str:
    s = _fmt_raw(e)
    if _self_prec(e) < ctx:
        return "(" + s + ")"
    return s


def _fmt_raw(e: Expr) -> str:
    t = type(e)
    if t is Rat:
        v = e.value
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if t is Sym:
        return e.name
    if t is Exp:
        return f"exp({_fmt(e.arg, 0)})"
    if t is Log:
        return f"log({_fmt(e.arg, 0)})"
    if t is Pow:
        base = _fmt(e.base, _PREC_ATOM)
        exp = e.exponent
        if type(exp) is Rat and exp.value.denominator == 1 and exp.value > 0:
            return f"{base}^{exp.value.numerator}"
        return f"{base}^({_fmt(exp, 0)})"
    if t is Mul:
        factors = list(e.factors)
        prefix = ""
        if type(factors[0]) is Rat:
            c = factors[0].value
            factors = factors[1:]
            if c < 0:
                prefix = "-"
                c = -c
            if c != 1 or not factors:
                prefix += str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
                if factors:
                    prefix += "*"
        return prefix + "*".join(_fmt(f, _PREC_POW) for f in factors)
    if t is Add:
        parts = [_fmt(e.terms[0], _PREC_ADD)]
        for term in e.terms[1:]:
            coeff, _ = _coeff_split(term)
            if coeff < 0:
                parts.append(" - " + _fmt(mul(MINUS_ONE, term), _PREC_MUL))
            else:
                parts.append(" + " + _fmt(term, _PREC_MUL))
        return "".join(parts)
    raise TypeError(f"not an Expr: {e!r}")
