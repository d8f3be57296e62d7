from pathlib import Path

import numpy as np
import pytest

from codemix_hate.corpus import ClassLabel, LabeledCorpus, MessageRecord

DATA = Path(__file__).parent / "data"


def make_corpus(counts, prefix="m"):
    recs = []
    for label, n in zip(ClassLabel, counts):
        recs.extend(MessageRecord(f"{prefix}{label.value}_{i}", f"text {label.value} {i}", label)
                    for i in range(n))
    return LabeledCorpus(recs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA


# ---- acceptance reporting: one PASS/FAIL line per criterion

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}")
