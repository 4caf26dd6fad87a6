import sys

import numpy as np
import pytest

from rwtn.fol import (And, Apply, Atom, Constant, Exists, ForAll, Implies, Not, Or, Signature,
                      Variable)

TOY_SIG = Signature(("a", "b", "c"), (("f", 1), ("g", 2)), (("P", 1), ("Q", 1), ("R", 2)))
VARS = ("x", "y", "z")


def random_term(rng, depth):
    r = rng.random()
    if depth <= 0 or r < 0.6:
        if rng.random() < 0.5:
            return Variable(VARS[rng.integers(3)])
        return Constant(TOY_SIG.constants[rng.integers(3)])
    if rng.random() < 0.5:
        return Apply("f", (random_term(rng, depth - 1),))
    return Apply("g", (random_term(rng, depth - 1), random_term(rng, depth - 1)))


def random_formula(rng, depth):
    """Random AST over TOY_SIG; free variables are drawn from VARS."""
    if depth <= 1 or rng.random() < 0.25:
        if rng.random() < 0.5:
            return Atom("R", (random_term(rng, 1), random_term(rng, 1)))
        return Atom("PQ"[rng.integers(2)], (random_term(rng, 1),))
    kind = rng.integers(6)
    if kind == 0:
        return Not(random_formula(rng, depth - 1))
    if kind in (1, 2, 3):
        cls = (And, Or, Implies)[kind - 1]
        return cls(random_formula(rng, depth - 1), random_formula(rng, depth - 1))
    n = int(rng.integers(1, 3))
    names = tuple(rng.choice(VARS, size=n, replace=False).tolist())
    cls = ForAll if kind == 4 else Exists
    return cls(names, random_formula(rng, depth - 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
