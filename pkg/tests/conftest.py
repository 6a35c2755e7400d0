import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "genma" / "fixtures"


def random_hermitian(rng, n, batch=(), positive=False, shift=0.1):
    a = rng.standard_normal(batch + (n, n)) + 1j * rng.standard_normal(batch + (n, n))
    if positive:
        return a @ np.conj(np.swapaxes(a, -1, -2)) + shift * np.eye(n)
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def load_fixture(name):
    return json.loads((FIXTURES / f"{name}.json").read_text())


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        ok, detail = results[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}")
