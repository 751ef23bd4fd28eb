import pytest

from mixmeta.effect_size import escalc_dataset
from mixmeta.io import BUNDLED, bundled_path, load_csv

# (criterion, passed, detail) lines appended by test_acceptance.py
ACCEPTANCE_LINES = []


def load_bundled(name):
    tables = load_csv(bundled_path(name))
    data = escalc_dataset(tables)
    source, target = BUNDLED[name]
    return tables, data, data.subset(source), data.subset(target)


@pytest.fixture(scope="session")
def migraine():
    return load_bundled("migraine")


@pytest.fixture(scope="session")
def transplant():
    return load_bundled("transplant")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
