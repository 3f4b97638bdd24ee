from __future__ import annotations

import json

import pytest

import savqe
from savqe import build_csf, build_uccsd_pool, read_fcidump

H4_LABELS = ["0.90", "1.10", "1.30", "1.50", "1.70"]
H4_REFERENCES = ["2200", "2ud0", "u2d0"]


@pytest.fixture(scope="session")
def h2():
    return read_fcidump(savqe.data_path("h2.fcidump"))


@pytest.fixture(scope="session")
def h4_scan():
    return {label: read_fcidump(savqe.data_path(f"h4_{label}.fcidump")) for label in H4_LABELS}


@pytest.fixture(scope="session")
def h4(h4_scan):
    return h4_scan["1.10"]


@pytest.fixture(scope="session")
def h4_pool():
    return build_uccsd_pool(4, [0, 1], [2, 3])


@pytest.fixture(scope="session")
def h4_refs():
    return [build_csf(label) for label in H4_REFERENCES]


@pytest.fixture(scope="session")
def reference_energies():
    return json.loads(savqe.data_path("reference_energies.json").read_text())


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
