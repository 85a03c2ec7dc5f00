from __future__ import annotations

import random

import pytest

from tailkbc import (
    DataError,
    EntityRecord,
    build_name_index,
    is_ambiguous,
    is_long_tail,
    load_snapshot,
    normalize,
)

from fixture_builders import entity_line, random_kb


def normalized_names(raw: dict) -> set[str]:
    names = {raw["label"], *raw["aliases"]}
    return {normalize(n) for n in names} - {""}


def oracle_ambiguous(raw: dict, raws: list[dict]) -> bool:
    # Quadratic scan, independent of the index structure under test.
    mine = normalized_names(raw)
    return any(other["id"] != raw["id"] and mine & normalized_names(other) for other in raws)


class TestLoadSnapshot:
    def test_two_entity_fixture(self):
        lines = [
            entity_line("Q1", "Alpha", aliases=["A"], statement_count=3),
            entity_line("Q2", "Beta", statement_count=1, facts=[{"pid": "P19", "object": "Q1"}]),
        ]
        snapshot = load_snapshot(lines)
        assert len(snapshot.entities) == 2
        assert snapshot.entities["Q1"].statement_count == 3
        assert snapshot.objects("Q2", "P19") == frozenset({"Q1"})

    def test_alias_equal_to_label_excluded(self):
        snapshot = load_snapshot([entity_line("Q1", "Alpha", aliases=["Alpha", "A"])])
        assert snapshot.entities["Q1"].aliases == frozenset({"A"})

    def test_duplicate_id_last_wins_with_warning(self, caplog):
        lines = [
            entity_line("Q1", "First", statement_count=1),
            entity_line("Q1", "Second", statement_count=2),
        ]
        with caplog.at_level("WARNING"):
            snapshot = load_snapshot(lines)
        assert snapshot.entities["Q1"].label == "Second"
        assert any("duplicate entity id Q1" in message for message in caplog.messages)

    def test_malformed_line_reports_line_number(self):
        with pytest.raises(DataError, match="line 2"):
            load_snapshot([entity_line("Q1", "A"), "{not json"])

    def test_missing_field_named(self):
        with pytest.raises(DataError, match="statement_count"):
            load_snapshot(['{"id": "Q1", "label": "A", "aliases": [], "types": [], "facts": []}'])

    def test_dangling_fact_object_rejected(self):
        with pytest.raises(DataError, match="Q9"):
            load_snapshot([entity_line("Q1", "A", statement_count=1, facts=[{"pid": "P19", "object": "Q9"}])])

    def test_statement_count_below_fact_count_rejected(self):
        lines = [
            entity_line("Q1", "A", statement_count=0, facts=[{"pid": "P19", "object": "Q2"}]),
            entity_line("Q2", "B"),
        ]
        with pytest.raises(DataError, match="statement_count"):
            load_snapshot(lines)

    def test_generated_file_totals_match_bookkeeping(self):
        lines, raws = random_kb(seed=7, n_entities=10_000)
        snapshot = load_snapshot(lines)
        assert len(snapshot.entities) == len(raws)
        expected_triples = {
            (raw["id"], f["pid"], f["object"]) for raw in raws for f in raw["facts"]
        }
        assert snapshot.triples() == expected_triples
        for raw in raws:
            record = snapshot.entities[raw["id"]]
            assert record.label == raw["label"]
            assert record.statement_count == raw["statement_count"]

    def test_order_insensitive_for_distinct_ids(self):
        lines, _ = random_kb(seed=11, n_entities=60)
        shuffled = list(lines)
        random.Random(3).shuffle(shuffled)
        a = load_snapshot(lines)
        b = load_snapshot(shuffled)
        assert dict(a.entities) == dict(b.entities)
        assert dict(a.facts) == dict(b.facts)


class TestNameIndex:
    def test_birmingham_bucket(self, birmingham_snapshot):
        index = build_name_index(birmingham_snapshot)
        assert index.by_name[normalize("Birmingham")] == frozenset({"Q2256", "Q79867"})

    def test_unique_names_give_singletons(self):
        snapshot = load_snapshot([entity_line("Q1", "Solo", aliases=["Solitary"])])
        index = build_name_index(snapshot)
        assert all(len(bucket) == 1 for bucket in index.by_name.values())

    def test_lookup_normalizes(self, birmingham_snapshot):
        index = build_name_index(birmingham_snapshot)
        assert index.lookup("  BIRMINGHAM ") == frozenset({"Q2256", "Q79867"})
        assert index.lookup("") == frozenset()

    def test_no_empty_buckets(self):
        snapshot = load_snapshot([entity_line("Q1", "...", aliases=["???"])])
        index = build_name_index(snapshot)
        assert index.by_name == {}

    def test_matches_brute_force_construction(self):
        lines, raws = random_kb(seed=23, n_entities=500)
        snapshot = load_snapshot(lines)
        index = build_name_index(snapshot)
        expected: dict[str, set[str]] = {}
        for raw in raws:
            for name in normalized_names(raw):
                expected.setdefault(name, set()).add(raw["id"])
        assert {k: set(v) for k, v in index.by_name.items()} == expected

    def test_completeness(self):
        lines, raws = random_kb(seed=31, n_entities=200)
        snapshot = load_snapshot(lines)
        index = build_name_index(snapshot)
        for raw in raws:
            for name in normalized_names(raw):
                assert raw["id"] in index.by_name[name]


class TestLongTail:
    @pytest.mark.parametrize("count,expected", [(13, True), (14, False), (0, True)])
    def test_boundary(self, count, expected):
        assert is_long_tail(EntityRecord(id="Q1", label="X", statement_count=count)) is expected


class TestAmbiguity:
    def test_birmingham_is_ambiguous(self, birmingham_snapshot, birmingham_index):
        assert is_ambiguous(birmingham_snapshot.entities["Q2256"], birmingham_index)

    def test_unique_names_not_ambiguous(self, birmingham_snapshot, birmingham_index):
        assert not is_ambiguous(birmingham_snapshot.entities["Q305"], birmingham_index)

    def test_matches_brute_force_scan(self):
        lines, raws = random_kb(seed=43, n_entities=400)
        snapshot = load_snapshot(lines)
        index = build_name_index(snapshot)
        for raw in raws:
            assert is_ambiguous(snapshot.entities[raw["id"]], index) == oracle_ambiguous(raw, raws)

    def test_ambiguity_is_mutual(self):
        lines, raws = random_kb(seed=47, n_entities=300)
        snapshot = load_snapshot(lines)
        index = build_name_index(snapshot)
        for name, bucket in index.by_name.items():
            if len(bucket) >= 2:
                for entity_id in bucket:
                    assert is_ambiguous(snapshot.entities[entity_id], index)
