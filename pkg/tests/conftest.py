import numpy as np
import pytest
import torch
from hypothesis import settings

from puckloc.synth import GeneratorConfig, generate_dataset

settings.register_profile("ci", max_examples=50, deadline=None)
settings.load_profile("ci")


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """20 clips at 64 px in packed raw format: 16/2/2 split."""
    root = tmp_path_factory.mktemp("tiny")
    generate_dataset(20, root, seed=11, config=GeneratorConfig.preset("test", frame_format="rawvid"))
    return root


_CRITERIA = []


@pytest.fixture
def criterion():
    """``criterion(id, ok, detail)`` records one acceptance line."""

    def record(cid, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {cid}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
