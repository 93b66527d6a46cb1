import numpy as np
import pytest
from hypothesis import settings

from expweights.harness import Context
from expweights.weights import WeightSpec

settings.register_profile("pkg", max_examples=25, deadline=None)
settings.load_profile("pkg")


@pytest.fixture(scope="session")
def ctx():
    return shared_context()


@pytest.fixture(scope="session")
def freud2():
    return WeightSpec.freud(2.0)


@pytest.fixture(scope="session")
def freud4():
    return WeightSpec.freud(4.0)


@pytest.fixture(scope="session")
def erdos():
    return WeightSpec.erdos(0.0, 2.0, 1)


@pytest.fixture(scope="session")
def rec2(ctx, freud2):
    return ctx.rec(freud2)


@pytest.fixture(scope="session")
def rec_erdos(ctx, erdos):
    return ctx.rec(erdos)


@pytest.fixture(scope="session")
def table2(ctx, freud2):
    return ctx.table(freud2)


@pytest.fixture(scope="session")
def table_erdos(ctx, erdos):
    return ctx.table(erdos)


@pytest.fixture
def dt():
    return np.longdouble


_CTX = Context(40)


def shared_context():
    """Module-level context for hypothesis tests, which cannot take fixtures."""
    return _CTX


# -- acceptance summary -----------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in rep.user_properties if k == "detail")
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    if status != "PASS" and not detail:
        detail = rep.longreprtext.strip().splitlines()[-1] if rep.longreprtext else ""
    _ACCEPTANCE[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}"
                                    + (f"  [{detail}]" if detail else ""))
