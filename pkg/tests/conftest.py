import numpy as np
import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome, then assert it."""

    def report(number, title, ok, detail=""):
        _CRITERIA[number] = (title, bool(ok), detail)
        assert ok, f"criterion {number} ({title}) failed: {detail}"

    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        mark = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{mark}  {number:>2}  {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def example_two_runs():
    """ALS and RALS on the rank-2 Example II start (the ALS run is ~27k sweeps)."""
    import time

    from cpswamp.problems import example_two
    from cpswamp.solvers import SolverConfig, run

    prob = example_two(2)
    out = {"problem": prob}
    for method in ("als", "rals"):
        t0 = time.perf_counter()
        rep = run(prob.tensor, SolverConfig(method=method, rank=2, max_iters=50000), prob.init)
        out[method] = rep
        out[method + "_seconds"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def example_three_runs():
    import time

    from cpswamp.problems import example_three
    from cpswamp.solvers import SolverConfig, run

    prob = example_three()
    out = {"problem": prob}
    for method in ("als", "rals"):
        t0 = time.perf_counter()
        rep = run(prob.tensor, SolverConfig(method=method, rank=prob.rank, max_iters=50000), prob.init)
        out[method] = rep
        out[method + "_seconds"] = time.perf_counter() - t0
    return out
