import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from geomrazor.network import Layer, Mlp  # noqa: E402
from oracles import random_mlp_params  # noqa: E402


def build_net(widths, activation="tanh", seed=0, scale=1.0, output_activation="identity"):
    """Random net with nonzero biases (``init_mlp`` zeroes them, which hides bias bugs)."""
    rng = np.random.default_rng(seed)
    ws, bs = random_mlp_params(rng, widths, scale)
    acts = [activation] * (len(ws) - 1) + [output_activation]
    return Mlp([Layer(w, b, a) for w, b, a in zip(ws, bs, acts)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def report(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
