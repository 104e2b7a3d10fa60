import pytest

from multiplex_consensus import experiment as ex

# fixed before any result was seen; never tuned
MASTER_SEED = 20240601
RUNS = 300

K_VALUES = (1, 2, 3, 4, 5, 10, 20, 30, 40, 50)
D_VALUES = (1, 2, 3, 4, 5)
LAYER_COUNTS = (1, 2, 3, 4, 5)


def _family(spec):
    return ex.run_sweep(spec), ex.network_property_sweep(spec)[0]


@pytest.fixture(scope="session")
def kregular_family():
    spec = ex.SweepSpec(topology=ex.K_REGULAR, layer_counts=LAYER_COUNTS, k_values=K_VALUES,
                        runs_per_cell=RUNS, instances=100, master_seed=MASTER_SEED)
    return _family(spec)


@pytest.fixture(scope="session")
def scalefree_family():
    spec = ex.SweepSpec(topology=ex.SCALE_FREE, layer_counts=LAYER_COUNTS, d_values=D_VALUES,
                        runs_per_cell=RUNS, instances=100, master_seed=MASTER_SEED)
    return _family(spec)


def ratio(sweep, **match):
    cells = [c for c in sweep.stats if all(getattr(c, k) == v for k, v in match.items())]
    assert len(cells) == 1, match
    return sweep.stats[cells[0]].convergence_ratio


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


def record(number, ok, detail):
    ACCEPTANCE[number] = (ok, detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
