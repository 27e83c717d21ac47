import json
import sys
from pathlib import Path

import numpy as np
import pytest

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))

from approxai.io import read_matrix  # noqa: E402
from approxai.tinymodel import load_model  # noqa: E402

FIXTURE_CASES = {
    "mlp_4_8_2": ("mlp_4_8_2.json", "x.csv"),
    "mlp_tanh_4_8_2": ("mlp_tanh_4_8_2.json", "x_tanh.csv"),
    "conv_1_4_4": ("conv_1_4_4.json", "x_conv.csv"),
}


def load_case(name):
    model_file, x_file = FIXTURE_CASES[name]
    m = load_model(FIXTURES / model_file)
    return m, read_matrix(FIXTURES / x_file).reshape(m.input_shape)


@pytest.fixture(scope="session")
def golden():
    return json.loads((FIXTURES / "golden.json").read_text())


@pytest.fixture(params=sorted(FIXTURE_CASES))
def case(request):
    return (request.param,) + load_case(request.param)


@pytest.fixture(params=["numba", "numpy"])
def kernel_path(request, monkeypatch):
    """Run a test once per kernel implementation."""
    monkeypatch.setenv("APPROXAI_DISABLE_NUMBA", "1" if request.param == "numpy" else "0")
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[k])
