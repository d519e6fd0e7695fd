"""Optimal-control models in current-value Hamiltonian form.

A ControlModel bundles the Hamiltonian H(t, q, p, u), the per-costate
drift terms Gamma_i (r*p_i for a constant discount rate r), exact parameter
bindings, and nonzero-parameter guards.  Controls are eliminated through the
first-order conditions dH/du = 0, producing the state-costate system

    dq_i/dt = dH/dp_i,        dp_i/dt = -dH/dq_i + Gamma_i,

with the control laws substituted in.  The same first-order conditions can
be solved the other way (for the costates in terms of the controls), which
downstream code uses to express residuals and integrals control-side.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .expr import (
    Expr,
    MINUS_ONE,
    ONE,
    Rat,
    Sym,
    ZERO,
    add,
    as_expr,
    differentiate,
    format_expr,
    is_zero,
    mul,
    power,
    substitute,
)


class ModelError(Exception):
    pass


class GuardViolation(ModelError):
    pass


class ControlModel:
    def __init__(
        self,
        name: str,
        time,
        states: Sequence,
        costates: Sequence,
        controls: Sequence,
        hamiltonian: Expr,
        discount: Expr,
        params: Optional[Mapping] = None,
        guards: Sequence = (),
        gammas: Optional[Sequence] = None,
    ):
        self.name = name
        self.time = as_expr(time)
        self.states = tuple(as_expr(s) for s in states)
        self.costates = tuple(as_expr(s) for s in costates)
        self.controls = tuple(as_expr(s) for s in controls)
        self.hamiltonian = hamiltonian
        self.discount = discount
        self.params = {
            str(k): (None if v is None else Fraction(v))
            for k, v in (params or {}).items()
        }
        self.guards = tuple(guards)
        if gammas is None:
            gammas = tuple(mul(discount, p) for p in self.costates)
        self.gammas = tuple(gammas)
        self._validate()

    def _validate(self):
        if len(self.states) != len(self.costates):
            raise ModelError("each state needs exactly one costate")
        if not self.states:
            raise ModelError("at least one state variable is required")
        groups = (
            [self.time.name],
            [s.name for s in self.states],
            [s.name for s in self.costates],
            [s.name for s in self.controls],
        )
        flat = [n for g in groups for n in g]
        if len(set(flat)) != len(flat):
            raise ModelError("time/state/costate/control symbols must be distinct")
        overlap = set(flat) & set(self.params)
        if overlap:
            raise ModelError(f"parameters shadow model variables: {sorted(overlap)}")
        allowed = set(flat) | set(self.params)
        stray = self.hamiltonian.free_symbols() - allowed
        if stray:
            raise ModelError(
                f"hamiltonian references undeclared symbols: {sorted(stray)}"
            )
        stray_d = self.discount.free_symbols() - set(self.params)
        if stray_d:
            raise ModelError(
                f"discount must depend on parameters only, found: {sorted(stray_d)}"
            )
        if len(self.gammas) != len(self.costates):
            raise ModelError("need one drift term per costate")

    # -- parameter handling -------------------------------------------------

    def unbound_params(self) -> list:
        return sorted(n for n, v in self.params.items() if v is None)

    def binding(self) -> dict:
        return {n: Rat(v) for n, v in self.params.items() if v is not None}

    def resolve(self, e: Expr) -> Expr:
        return substitute(e, self.binding())

    @property
    def hamiltonian_bound(self) -> Expr:
        return self.resolve(self.hamiltonian)

    @property
    def discount_bound(self) -> Expr:
        return self.resolve(self.discount)

    @property
    def gammas_bound(self) -> tuple:
        return tuple(self.resolve(g) for g in self.gammas)

    def with_params(self, **values) -> "ControlModel":
        params = dict(self.params)
        for k, v in values.items():
            if k not in params:
                raise ModelError(f"unknown parameter {k}")
            params[k] = Fraction(v)
        return ControlModel(
            self.name,
            self.time,
            self.states,
            self.costates,
            self.controls,
            self.hamiltonian,
            self.discount,
            params,
            self.guards,
            self.gammas,
        )

    def guard_violations(self) -> list:
        out = []
        for g in self.guards:
            bound = self.resolve(g)
            if is_zero(bound):
                out.append(
                    f"guard violated: {format_expr(g)} = 0 under the current "
                    "parameter values"
                )
        return out

    def check_guards(self):
        bad = self.guard_violations()
        if bad:
            raise GuardViolation("; ".join(bad))


@dataclass(frozen=True)
class StateCostateSystem:
    model: ControlModel
    qdot: tuple
    pdot: tuple
    control_laws: dict
    hamiltonian_reduced: Expr  # H with control laws substituted


@dataclass(frozen=True)
class SymmetryCandidate:
    xi: Expr
    etas: tuple
    zetas: Optional[tuple] = None


@dataclass(frozen=True)
class PointSymmetryReport:
    zetas: tuple
    residuals: tuple  # first-condition residuals, then second-condition ones
    holds: bool


def isolate(eq: Expr, var) -> Expr:
    """Solve eq == 0 for var: linear solve, or isolation of a single power."""
    x = as_expr(var)
    from .expr import collect_powers

    m = collect_powers(eq, x)
    keys = [k for k in m.keys() if k != ZERO]
    if not keys:
        raise ModelError(f"{x.name} does not occur in {format_expr(eq)}")
    c0 = m[ZERO]
    if len(keys) > 1:
        raise ModelError(
            "manual control law required: cannot isolate "
            f"{x.name} in {format_expr(eq)}"
        )
    a = keys[0]
    rhs = mul(MINUS_ONE, c0, power(m[a], MINUS_ONE))
    if a == ONE:
        return rhs
    inv = Rat(1 / a.value) if type(a) is Rat else power(a, MINUS_ONE)
    return power(rhs, inv)


def foc_eliminate(model: ControlModel, manual_laws: Optional[Mapping] = None) -> StateCostateSystem:
    """Eliminate controls via dH/du = 0 and assemble the state-costate system.

    `manual_laws` maps control name -> Expr(t, q, p) for first-order
    conditions outside the supported fragment (linear, or a single isolable
    power); supplied laws are still verified to annihilate dH/du.
    """
    h = model.hamiltonian_bound
    laws = {}
    for u in model.controls:
        if manual_laws and u.name in manual_laws:
            laws[u.name] = as_expr(manual_laws[u.name])
            continue
        laws[u.name] = isolate(differentiate(h, u), u)
    # close the laws over one another (sequentially solvable FOCs)
    control_names = {u.name for u in model.controls}
    for _ in range(len(laws) + 1):
        dirty = False
        for name, law in list(laws.items()):
            if law.free_symbols() & control_names:
                others = {k: v for k, v in laws.items() if k != name}
                new = substitute(law, others)
                if new != law:
                    laws[name] = new
                    dirty = True
        if not dirty:
            break
    for name, law in laws.items():
        if law.free_symbols() & control_names:
            raise ModelError(
                "manual control law required: coupled first-order conditions "
                f"leave {name} implicit"
            )
    if model.controls:
        # the Hessian in the controls must not vanish identically
        hess_nonzero = False
        for ua in model.controls:
            for ub in model.controls:
                if not is_zero(differentiate(differentiate(h, ua), ub)):
                    hess_nonzero = True
                    break
            if hess_nonzero:
                break
        if not hess_nonzero:
            raise ModelError(
                "degenerate problem: d2H/du2 vanishes identically; controls "
                "cannot be eliminated"
            )
    for u in model.controls:
        residual = substitute(differentiate(h, u), laws)
        if not is_zero(residual):
            raise ModelError(
                f"control law for {u.name} does not satisfy dH/d{u.name} = 0: "
                f"residual {format_expr(residual)}"
            )
    h_red = substitute(h, laws)
    qdot = tuple(substitute(differentiate(h, p), laws) for p in model.costates)
    pdot = tuple(
        substitute(add(mul(MINUS_ONE, differentiate(h, q)), g), laws)
        for q, g in zip(model.states, model.gammas_bound)
    )
    return StateCostateSystem(model, qdot, pdot, laws, h_red)


def costates_from_foc(model: ControlModel) -> dict:
    """Solve the first-order conditions for the costates instead: each
    dH/du = 0 is linear in the costates, giving p_i = P_i(t, q, u)."""
    h = model.hamiltonian_bound
    eqs = [differentiate(h, u) for u in model.controls]
    unsolved = list(model.costates)
    laws = {}
    from .expr import collect_powers

    for eq in eqs:
        eq = substitute(eq, laws)
        hit = None
        for p in unsolved:
            if p.name not in eq.free_symbols():
                continue
            m = collect_powers(eq, p)
            keys = [k for k in m.keys() if k != ZERO]
            if keys != [ONE]:
                continue
            coeff = m[ONE]
            if any(s.name in coeff.free_symbols() for s in unsolved):
                continue
            hit = (p, mul(MINUS_ONE, m[ZERO], power(coeff, MINUS_ONE)))
            break
        if hit is None:
            continue
        laws[hit[0].name] = hit[1]
        unsolved.remove(hit[0])
    if model.controls and unsolved:
        raise ModelError(
            "cannot express costates through the first-order conditions: "
            f"{[p.name for p in unsolved]} remain implicit"
        )
    return laws


def total_derivative_on_solutions(e: Expr, sys: StateCostateSystem) -> Expr:
    """d e / d t along solutions: e_t + sum qdot_i e_{q_i} + sum pdot_i e_{p_i}."""
    m = sys.model
    out = differentiate(e, m.time)
    for q, rhs in zip(m.states, sys.qdot):
        out = add(out, mul(rhs, differentiate(e, q)))
    for p, rhs in zip(m.costates, sys.pdot):
        out = add(out, mul(rhs, differentiate(e, p)))
    return out


def hamiltonian_drift_residual(sys: StateCostateSystem) -> Expr:
    """D(H) on solutions minus (H_t + sum Gamma_i dH/dp_i); zero for every
    current-value Hamiltonian system by construction."""
    m = sys.model
    h = sys.hamiltonian_reduced
    out = total_derivative_on_solutions(h, sys)
    out = add(out, mul(MINUS_ONE, differentiate(h, m.time)))
    for p, g in zip(m.costates, m.gammas_bound):
        out = add(out, mul(MINUS_ONE, g, differentiate(h, p)))
    return out


def point_symmetry_check(X: SymmetryCandidate, sys: StateCostateSystem) -> PointSymmetryReport:
    """Check the two point-symmetry conditions of a candidate generator on
    the state-costate system; derives zeta from the first condition when it
    is not supplied (single-state case with dH/dp actually depending on p)."""
    m = sys.model
    allowed = (
        {m.time.name}
        | {s.name for s in m.states}
        | {s.name for s in m.costates}
        | set(m.params)
    )
    pieces = [X.xi, *X.etas] + (list(X.zetas) if X.zetas is not None else [])
    for e in pieces:
        stray = as_expr(e).free_symbols() - allowed
        if stray:
            raise ModelError(
                f"candidate coefficients may depend only on (t, q, p): "
                f"found {sorted(stray)}"
            )
    if len(X.etas) != len(m.states):
        raise ModelError("need one eta per state")

    def dsol(e):
        return total_derivative_on_solutions(e, sys)

    def xact(g, zetas):
        out = mul(X.xi, differentiate(g, m.time))
        for q, eta in zip(m.states, X.etas):
            out = add(out, mul(eta, differentiate(g, q)))
        for p, z in zip(m.costates, zetas):
            out = add(out, mul(z, differentiate(g, p)))
        return out

    zetas = X.zetas
    if zetas is None:
        if len(m.states) != 1:
            raise ModelError("zeta must be supplied when there is more than one state")
        qd = sys.qdot[0]
        slope = differentiate(qd, m.costates[0])
        if is_zero(slope):
            raise ModelError(
                "zeta is underdetermined: dH/dp does not depend on p; "
                "supply zeta explicitly"
            )
        known = add(
            dsol(X.etas[0]),
            mul(MINUS_ONE, qd, dsol(X.xi)),
            mul(MINUS_ONE, X.xi, differentiate(qd, m.time)),
            mul(MINUS_ONE, X.etas[0], differentiate(qd, m.states[0])),
        )
        zetas = (mul(known, power(slope, MINUS_ONE)),)
    cond1 = tuple(
        add(dsol(eta), mul(MINUS_ONE, qd, dsol(X.xi)), mul(MINUS_ONE, xact(qd, zetas)))
        for eta, qd in zip(X.etas, sys.qdot)
    )
    cond2 = tuple(
        add(dsol(z), mul(MINUS_ONE, pd, dsol(X.xi)), mul(MINUS_ONE, xact(pd, zetas)))
        for z, pd in zip(zetas, sys.pdot)
    )
    residuals = cond1 + cond2
    holds = all(is_zero(r) for r in residuals)
    return PointSymmetryReport(tuple(zetas), residuals, holds)
