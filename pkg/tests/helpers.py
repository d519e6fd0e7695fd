"""Inline builders for the three bundled models, used across test modules."""

from fractions import Fraction

from hamint.expr import parse_expr
from hamint.model import ControlModel


def illustrative(alpha=1, beta=2, gamma=1, r=1):
    return ControlModel(
        name="illustrative",
        time="t",
        states=["q"],
        costates=["p"],
        controls=["u"],
        hamiltonian=parse_expr("alpha*q - beta*q^2 - alpha*u^2 - gamma*u + p*u"),
        discount=parse_expr("r"),
        params={"alpha": alpha, "beta": beta, "gamma": gamma, "r": r},
    )


def ramsey(sigma=Fraction(20, 3)):
    return ControlModel(
        name="ramsey",
        time="t",
        states=["k"],
        costates=["lam"],
        controls=["c"],
        hamiltonian=parse_expr("c^(1 - sigma) + lam*(k^beta - delta*k - c)"),
        discount=parse_expr("r"),
        params={
            "beta": Fraction(3, 10),
            "delta": Fraction(1, 20),
            "r": Fraction(1, 20),
            "sigma": sigma,
        },
        guards=[
            parse_expr("sigma"),
            parse_expr("sigma - 1"),
            parse_expr("beta*sigma - 1"),
        ],
    )


def ak(theta=2):
    return ControlModel(
        name="ak",
        time="t",
        states=["k"],
        costates=["lam"],
        controls=["c"],
        hamiltonian=parse_expr(
            "(c^(1 - theta) - 1)/(1 - theta) + lam*((A - delta - n)*k - c)"
        ),
        discount=parse_expr("rho - n"),
        params={
            "theta": theta,
            "rho": Fraction(3, 50),
            "n": Fraction(1, 100),
            "A": Fraction(3, 25),
            "delta": Fraction(1, 20),
        },
        guards=[parse_expr("theta"), parse_expr("theta - 1")],
    )
