import numpy as np
import pytest

from saecrypt.image_io import Image


@pytest.fixture(scope="session")
def astronaut():
    """512x512 RGB standard test image bundled with scikit-image."""
    skdata = pytest.importorskip("skimage.data")
    return Image(skdata.astronaut())


@pytest.fixture(scope="session")
def cameraman():
    skdata = pytest.importorskip("skimage.data")
    return Image(skdata.camera())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    reports = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            if "test_acceptance.py" in rep.nodeid and rep.when == "call":
                reports.append(rep)
    if not reports:
        return
    terminalreporter.section("acceptance criteria")
    for rep in sorted(reports, key=lambda r: r.nodeid):
        name = rep.nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if rep.passed else 'FAIL'}  {name}")
