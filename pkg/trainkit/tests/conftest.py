"""Shared fixtures for the training-kit suite."""

import pytest

from tk_helpers import ACCEPTANCE_LINES, pipeline_cli, synth_corpus


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria (training kit)")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 12-image corpus with fragment variants, for fast unit tests."""
    root = tmp_path_factory.mktemp("tkcorpus")
    corpus = root / "corpus"
    synth_corpus(corpus, n=12, seed=41)
    frags = root / "frags"
    pipeline_cli("fragment", "--config", str(root / "synth_41.json"),
                 "--corpus", str(corpus), "--out", str(frags))
    return {"corpus": corpus, "frags": frags}
