"""Shared fixtures and small hand-built cases for the test suite."""

import numpy as np
import pytest

from sesopf.casemodel import Aggregator, Bus, CaseData, Generator, Line, builtin_case
from sesopf.formulation import build_problem
from sesopf.solver import SolverOptions, solve


@pytest.fixture(scope="session")
def five_bus():
    return builtin_case("five_bus")


@pytest.fixture(scope="session")
def rts24():
    return builtin_case("rts24")


@pytest.fixture(scope="session")
def five_bus_problem(five_bus):
    return build_problem(five_bus)


@pytest.fixture(scope="session")
def five_bus_solution(five_bus_problem):
    """One converged five-bus solve shared by the read-only checks."""
    solution = solve(five_bus_problem, SolverOptions())
    assert solution.status == "converged"
    return solution


def single_bus_case(gen, agg, name="single_bus"):
    """One slack bus, no lines: balance reduces to P_g = P_a, Q_g = Q_a."""
    return CaseData(name, 100.0, (Bus(1, is_slack=True),), (), (gen,), (agg,))


def toy_case():
    """Analytic one-bus exchange: a=1, b=0, c=0 against sigma=1, gamma=10,
    mu=1. Stationarity 2p = 10 - p gives p = 10/3 on both sides."""
    gen = Generator(1, 1.0, 0.0, 0.0, 0.0, 8.0, 0.0, 0.0)
    agg = Aggregator(1, 1.0, 10.0, 1.0, 8.0, 0.0, 0.0, 0.0)
    return single_bus_case(gen, agg, "toy")


def two_bus_copper_case():
    """Lossless stiff tie with an interior exchange optimum."""
    buses = (Bus(1, is_slack=True), Bus(2))
    lines = (Line(1, 2, 0.0, 0.01, 1e6),)
    gens = (Generator(1, 1.0, 5.0, 0.0, 0.0, 500.0, -500.0, 500.0),)
    aggs = (Aggregator(2, 2.0, 50.0, 0.1, 400.0, 10.0, 10.0, 0.0),)
    return CaseData("two_bus_copper", 100.0, buses, lines, gens, aggs)


def three_bus_copper_case():
    """Lossless triangle, two generators against two aggregators."""
    buses = (Bus(1, is_slack=True), Bus(2), Bus(3))
    lines = (Line(1, 2, 0.0, 0.01, 1e6), Line(2, 3, 0.0, 0.01, 1e6),
             Line(1, 3, 0.0, 0.01, 1e6))
    gens = (Generator(1, 0.5, 2.0, 10.0, 0.0, 300.0, -300.0, 300.0),
            Generator(2, 1.0, 4.0, 5.0, 0.0, 200.0, -300.0, 300.0))
    aggs = (Aggregator(3, 3.0, 40.0, 0.05, 300.0, 20.0, 20.0, 0.0),
            Aggregator(3, 1.5, 30.0, 0.08, 200.0, 10.0, 15.0, 0.0))
    return CaseData("three_bus_copper", 100.0, buses, lines, gens, aggs)


def copperize(case):
    """Strip resistances and lift line limits so the network is transparent."""
    lines = tuple(Line(ln.from_bus, ln.to_bus, 0.0, ln.x, 1e6)
                  for ln in case.lines)
    from dataclasses import replace
    return replace(case, name=case.name + "_copper", lines=lines)


def random_interior_state(problem, rng):
    """A strictly interior decision vector for derivative sampling."""
    lb, ub = problem.lb, problem.ub
    t = rng.uniform(0.2, 0.8, size=problem.n_var)
    x = np.zeros(problem.n_var)
    boxed = np.isfinite(lb) & np.isfinite(ub)
    x[boxed] = lb[boxed] + t[boxed] * (ub[boxed] - lb[boxed])
    x[problem.layout.th] = rng.uniform(-0.2, 0.2, size=problem.layout.n_bus - 1)
    return x
