import numpy as np
import pytest

from tdvir.datasets import TOY_CORPUS, make_random_corpus
from tdvir.index import build_index


@pytest.fixture
def toy():
    return build_index(TOY_CORPUS)


@pytest.fixture
def toy_index(toy):
    return toy[1]


@pytest.fixture(params=[0, 1, 2])
def random_corpus(request):
    docs = make_random_corpus(100, 50, seed=request.param)
    vocab, index = build_index(docs)
    return docs, vocab, index


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
