import numpy as np
import pytest

from tumorsim.config import preset, rescale


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def necrotic16():
    """necrotic_core on the h = 1/16 mesh."""
    return rescale(preset("necrotic_core"), 1 / 16)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record ``(number, title, ok, detail)`` for the acceptance summary; ``case`` splits one criterion."""
    table = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number: int, title: str, ok: bool, detail: str = "", case: str = "") -> bool:
        table[(number, case)] = (title, bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_ACCEPTANCE, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number, case in sorted(table):
        title, ok, detail = table[number, case]
        label = f"{title} [{case}]" if case else title
        terminalreporter.write_line(f"{number:2d} {'PASS' if ok else 'FAIL'}  {label}: {detail}")
