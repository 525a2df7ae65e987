from pathlib import Path

import numpy as np
import pytest

from morphtag import corpus as C
from morphtag import synthetic

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def table1():
    return C.load_corpus(DATA / "table1.tsv")


@pytest.fixture
def tiny_corpus():
    lines = [
        ["i[NPrePre10]-zin[BPre10]-hlobo[NStem]", "a[RelConc6]-li[BPre5]-qela[NStem]"],
        ["i[NPrePre10]-zin[BPre10]-como[NStem]", "ku[LocPre]-i[NPrePre5]-(li)[BPre5]-bhunga[NStem]"],
        ["a[RelConc6]-li[BPre5]-hlobo[NStem]"],
    ]
    return C.Corpus(tuple(C.Sentence(tuple(C.parse_analysis(a) for a in s)) for s in lines))


@pytest.fixture(scope="session")
def synthetic_corpus():
    return synthetic.generate(n_words=200, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
