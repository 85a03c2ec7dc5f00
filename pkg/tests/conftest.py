from __future__ import annotations

import pytest

from tailkbc import build_name_index, load_snapshot, load_corpus, mock_ed_backend, mock_qa_backend

from fixture_builders import entity_line, planted_fixture


@pytest.fixture(scope="session")
def planted():
    return planted_fixture()


@pytest.fixture(scope="session")
def planted_snapshot(planted):
    return load_snapshot(planted.snapshot_lines, source="planted-snapshot")


@pytest.fixture(scope="session")
def planted_corpus(planted):
    return load_corpus(planted.corpus_lines, source="planted-corpus")


@pytest.fixture(scope="session")
def planted_index(planted_snapshot):
    return build_name_index(planted_snapshot)


@pytest.fixture
def planted_backends(planted, planted_snapshot):
    return (
        mock_qa_backend(planted.gazetteer),
        mock_ed_backend(planted_snapshot, planted.planted),
    )


@pytest.fixture
def birmingham_snapshot():
    lines = [
        entity_line("Q2256", "Birmingham", aliases=["Brum"], statement_count=40),
        entity_line("Q79867", "Birmingham", aliases=["Birmingham, Alabama"], statement_count=25),
        entity_line("Q303", "Lhasa de Sela", aliases=["Lhasa"], statement_count=9),
        entity_line("Q304", "Bratsch (band)", aliases=["Bratsch"], statement_count=4),
        entity_line("Q305", "Anyone and Everyone", statement_count=2),
    ]
    return load_snapshot(lines, source="birmingham")


@pytest.fixture
def birmingham_index(birmingham_snapshot):
    return build_name_index(birmingham_snapshot)
