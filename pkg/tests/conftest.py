import numpy as np
import pytest
from hypothesis import settings

from lqg_pbe import make_game, solve_equilibrium
from lqg_pbe.verification import canonical_game

settings.register_profile("ci", max_examples=25, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def canonical():
    return canonical_game()


@pytest.fixture(scope="session")
def canonical_solution(canonical):
    res = solve_equilibrium(canonical)
    assert res.converged
    return res


@pytest.fixture
def scalar_pair():
    """N=2, T=2, unit prior and noise, mild coupling."""
    b = np.array([[0.2, 0.7, 0.1], [0.7, -1.0, 0.05], [0.1, 0.05, -0.3]])
    b2 = np.array([[-0.1, 0.1, -0.6], [0.1, -0.2, 0.05], [-0.6, 0.05, -1.2]])
    return make_game(2, 2, 1, 1, [[1.0]], [[[1.0]], [[1.0]]], [b, b2])


def random_profile(spec, seed, scale=0.8):
    from lqg_pbe import StrategyProfile
    rng = np.random.default_rng(seed)
    z = StrategyProfile.zeros(spec)
    return StrategyProfile(scale * rng.standard_normal(z.L.shape), 0.3 * rng.standard_normal(z.M.shape),
                           0.3 * rng.standard_normal(z.c.shape))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if rep.when == "call" and "criterion" in props:
                lines.append((props["criterion"], outcome, rep.duration))
    if lines:
        terminalreporter.section("acceptance criteria")
        for label, outcome, secs in sorted(lines, key=lambda x: int(x[0].split()[0])):
            terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {label}  [{secs:.1f} s]")
