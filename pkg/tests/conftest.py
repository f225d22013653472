import numpy as np
import pytest

from ovaner.corpus import Corpus, Sentence
from ovaner.synthetic import make_lexicon, generate_corpus


@pytest.fixture(scope="session")
def tiny_corpus() -> Corpus:
    return Corpus((
        Sentence(("EU", "rejects", "German", "call"), ("B-ORG", "O", "B-MISC", "O")),
        Sentence(("Peter", "Blackburn"), ("B-PER", "I-PER")),
        Sentence(("BRUSSELS", "1996-08-22"), ("B-LOC", "O")),
        Sentence(("The", "cat", "sat"), ("O", "O", "O")),
    ), name="tiny")


@pytest.fixture(scope="session")
def synthetic_pool() -> Corpus:
    return generate_corpus(600, seed=11, lexicon=make_lexicon(3), name="pool")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion; echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(criterion: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
