from __future__ import annotations

import pytest

from assistfuzz.corpus import ChallengeProgram, load_corpus, load_program


@pytest.fixture(scope="session")
def corpus() -> dict[str, ChallengeProgram]:
    return {p.manifest.name: p for p in load_corpus()}


@pytest.fixture(scope="session")
def greet(corpus):
    return corpus["greet"].image


@pytest.fixture(scope="session")
def magic4(corpus):
    return corpus["magic4"].image


@pytest.fixture(scope="session")
def cmdnum(corpus):
    return corpus["cmdnum"].image


@pytest.fixture(scope="session")
def pizza(corpus):
    return corpus["pizza"].image


@pytest.fixture(scope="session")
def pipesplit(corpus):
    return corpus["pipesplit"].image


@pytest.fixture(scope="session")
def lyrics(corpus):
    return corpus["lyrics"].image
