import pathlib

import numpy as np
import pytest

from nnlft import _backend
from nnlft.metrics import synth_tensor
from nnlft.model import FactorState
from nnlft.tensor_store import split

DATA_DIR = pathlib.Path(__file__).parent / "data"
ORACLE_DIR = pathlib.Path(__file__).parent / "oracles"


@pytest.fixture(params=_backend.available())
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def small_synth():
    tensor, truth = synth_tensor((30, 25, 6), 3, 2500, 0.0, 7)
    return tensor, truth


@pytest.fixture(scope="session")
def small_split(small_synth):
    return split(small_synth[0], (0.7, 0.1, 0.2), 3)


def random_state(rng, shape=(5, 4, 3), rank=4, scale=2.0):
    return FactorState(*(rng.uniform(-scale, scale, (d, rank)) for d in shape))


# -- acceptance summary ----------------------------------------------------

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if "test_acceptance" in item.nodeid and (rep.when == "call" or (rep.when == "setup" and rep.skipped)):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        _ACCEPTANCE.append((status, doc))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, doc in _ACCEPTANCE:
        terminalreporter.write_line(f"[{status}] {doc}")
