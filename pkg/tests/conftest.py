import re

import pytest
from hypothesis import settings

from acceptance_log import RESULTS
from duo.cli import main
from duo.synth import synth_corpus

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40)
settings.load_profile("repo")


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: int(re.sub(r"\D", "", k))):
        terminalreporter.write_line(RESULTS[key])


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Two short synthetic pieces in two collaborations, already extracted."""
    root = tmp_path_factory.mktemp("small")
    manifest = synth_corpus(root / "corpus", {"duo1": 1, "duo2": 1}, seed=3, n_beats=40)
    out = root / "out"
    assert main(["extract", str(manifest), "--out", str(out)]) == 0
    return manifest, out
