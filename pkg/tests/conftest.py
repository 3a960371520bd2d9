import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tswatermark.book import build_book
from tswatermark.encoder import make_synthetic_protected_model
from tswatermark.experiment import build_fixture, bundled_manifest, run_experiment
from tswatermark.series import generate_synthetic_dataset, normalize


@pytest.fixture(scope="session")
def small():
    """A small encoder, normalized windows and a book built on them."""
    fx = make_synthetic_protected_model(3, vocab_size=128, d=16, P=8, warm_fraction=0.5)
    windows, stats = generate_synthetic_dataset(3, 80, 32, 32)
    windows = [normalize(w, stats) for w in windows]
    book = build_book(fx.model, windows[:40], windows[40:], M=8)
    return fx, windows, book


@pytest.fixture(scope="session")
def manifest():
    return bundled_manifest()


@pytest.fixture(scope="session")
def fixture(manifest):
    return build_fixture(manifest)


@pytest.fixture(scope="session")
def experiment(manifest, fixture):
    return run_experiment(manifest, fixture)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
