import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # shared helpers such as gradcases

from percept import synthetic  # noqa: E402


@pytest.fixture(scope="session")
def speaker_small(tmp_path_factory):
    """Five tones, 20 clips each: enough for quick pipeline and CLI runs."""
    root = tmp_path_factory.mktemp("speaker_small")
    return synthetic.make_speaker_dataset(root, clips_per_class=20, seed=1)


@pytest.fixture(scope="session")
def speaker_full(tmp_path_factory):
    """The acceptance speaker set: 200 one-second clips per tone."""
    root = tmp_path_factory.mktemp("speaker_full")
    return synthetic.make_speaker_dataset(root, clips_per_class=200, seed=7)


@pytest.fixture(scope="session")
def eye_small(tmp_path_factory):
    root = tmp_path_factory.mktemp("eye_small")
    return synthetic.make_eye_dataset(root, n_images=40, size=16, seed=2)


@pytest.fixture(scope="session")
def fer_small(tmp_path_factory):
    path = tmp_path_factory.mktemp("fer_small") / "fer.csv"
    return synthetic.make_fer_csv(path, per_class=6, seed=3)


def pytest_terminal_summary(terminalreporter):
    gate = sys.modules.get("test_acceptance")
    if gate is not None and gate.RESULTS:
        terminalreporter.section("acceptance gate")
        for line in gate.RESULTS:
            terminalreporter.write_line(line)
