import numpy as np
import pytest

from cage.properties import synthetic_setup

# hand-derived coalition values for the Markovian SCM with the true model
# f = X1 + 2 X2 + X3 under squared error and infinitely many inner samples;
# keys are bitmasks over (X1, X2, X3)
MARKOVIAN_CAGE_VALUES = {0b000: -50.0, 0b001: -41.0, 0b010: -6.0, 0b100: -14.0,
                         0b011: -5.0, 0b101: -5.0, 0b110: -2.0, 0b111: -1.0}
MARKOVIAN_SAGE_VALUES = {0b000: -50.0, 0b001: -45.0, 0b010: -6.0, 0b100: -30.0,
                         0b011: -5.0, 0b101: -25.0, 0b110: -2.0, 0b111: -1.0}
# variance of f over the completions for each coalition; the inner average over M
# completions adds Var/M to the expected loss
MARKOVIAN_CAGE_COMPLETION_VAR = {0b001: 40.0, 0b010: 5.0, 0b100: 13.0,
                                 0b011: 4.0, 0b101: 4.0, 0b110: 1.0}
MARKOVIAN_SAGE_COMPLETION_VAR = {0b001: 28.0, 0b010: 5.0, 0b100: 25.0,
                                 0b011: 4.0, 0b101: 24.0, 0b110: 1.0}


@pytest.fixture(scope="session")
def direct_setup():
    return synthetic_setup("direct_cause", n=10_000, seed=11)


@pytest.fixture(scope="session")
def markov_setup():
    return synthetic_setup("markovian", n=10_000, seed=12)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, passed, detail, seconds)``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, passed, detail, seconds):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        line = f"criterion {number:>2} [{status}] {detail} ({seconds:.1f}s)"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
