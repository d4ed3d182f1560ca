import math

import numpy as np
import pytest

from weakrank.label_model import AggregatedLabel
from weakrank.triplets import Triplet, generate_triplets, read_triplets, write_triplets


def agg(label, conf):
    return AggregatedLabel(label=label, confidence=conf)


class TestGenerateTriplets:
    def test_geometric_mean_confidence(self):
        aggregated = [
            (("q", "a"), agg(1, 0.9)),
            (("q", "b"), agg(-1, 0.4)),
        ]
        got = generate_triplets(aggregated, per_query_samples=4, seed=0)
        assert len(got) == 1
        assert (got[0].query_id, got[0].pos_id, got[0].neg_id) == ("q", "a", "b")
        assert got[0].confidence == pytest.approx(0.6)

    def test_positives_only_skipped(self, caplog):
        aggregated = [(("q", "a"), agg(1, 0.9)), (("q", "b"), agg(1, 0.8))]
        assert generate_triplets(aggregated, seed=0) == []

    def test_cross_product_cap(self):
        aggregated = (
            [((f"q", f"pos{i}"), agg(1, 0.9)) for i in range(2)]
            + [((f"q", f"neg{i}"), agg(-1, 0.5)) for i in range(3)]
        )
        got = generate_triplets(aggregated, per_query_samples=100, seed=1)
        assert len(got) == 6
        assert len({(t.pos_id, t.neg_id) for t in got}) == 6

    def test_abstained_pairs_invisible(self):
        aggregated = [
            (("q", "a"), agg(1, 0.9)),
            (("q", "b"), None),
            (("q", "c"), agg(-1, 0.5)),
        ]
        got = generate_triplets(aggregated, per_query_samples=10, seed=0)
        assert len(got) == 1
        assert got[0].neg_id == "c"

    def test_same_seed_identical(self):
        rng = np.random.default_rng(0)
        aggregated = []
        for qi in range(5):
            for pi in range(8):
                label = 1 if rng.random() < 0.4 else -1
                aggregated.append(
                    ((f"q{qi}", f"q{qi}_p{pi}"), agg(label, float(rng.uniform(0.5, 1)))))
        a = generate_triplets(aggregated, per_query_samples=3, seed=42)
        b = generate_triplets(aggregated, per_query_samples=3, seed=42)
        assert a == b
        c = generate_triplets(aggregated, per_query_samples=3, seed=43)
        assert a != c

    def test_per_query_sampling_independent_of_other_queries(self):
        # dropping one query must not change another query's draws
        full = [
            (("q1", "a"), agg(1, 0.9)), (("q1", "b"), agg(-1, 0.5)),
            (("q1", "c"), agg(-1, 0.6)), (("q2", "x"), agg(1, 0.7)),
            (("q2", "y"), agg(-1, 0.8)),
        ]
        only_q1 = [row for row in full if row[0][0] == "q1"]
        from_full = [t for t in generate_triplets(full, 1, seed=5) if t.query_id == "q1"]
        from_only = generate_triplets(only_q1, 1, seed=5)
        assert from_full == from_only

    def test_output_ordered_by_query(self):
        aggregated = [
            (("q2", "a"), agg(1, 0.9)), (("q2", "b"), agg(-1, 0.5)),
            (("q1", "c"), agg(1, 0.9)), (("q1", "d"), agg(-1, 0.5)),
        ]
        got = generate_triplets(aggregated, per_query_samples=2, seed=0)
        assert [t.query_id for t in got] == ["q2", "q1"]

    def test_pos_neg_sides_honored_and_confidence_bounds(self):
        rng = np.random.default_rng(3)
        aggregated = []
        label_of, conf_of = {}, {}
        for qi in range(10):
            for pi in range(6):
                pid = f"q{qi}_p{pi}"
                label = 1 if rng.random() < 0.3 else -1
                conf = float(rng.uniform(0.5, 1))
                label_of[pid], conf_of[pid] = label, conf
                aggregated.append(((f"q{qi}", pid), agg(label, conf)))
        got = generate_triplets(aggregated, per_query_samples=5, seed=1)
        assert got
        for t in got:
            assert label_of[t.pos_id] == 1
            assert label_of[t.neg_id] == -1
            lo = min(conf_of[t.pos_id], conf_of[t.neg_id])
            hi = max(conf_of[t.pos_id], conf_of[t.neg_id])
            assert lo - 1e-12 <= t.confidence <= hi + 1e-12
            assert t.confidence == pytest.approx(
                math.sqrt(conf_of[t.pos_id] * conf_of[t.neg_id]))

    def test_bad_samples_count(self):
        with pytest.raises(ValueError):
            generate_triplets([], per_query_samples=0)


class TestTripletIO:
    def test_round_trip(self, tmp_path):
        triplets = [Triplet("q1", "a", "b", 0.6), Triplet("q2", "x", "y", 1.0)]
        path = tmp_path / "t.tsv"
        write_triplets(triplets, path)
        assert read_triplets(path) == triplets

    def test_byte_determinism(self, tmp_path):
        triplets = [Triplet("q1", "a", "b", math.sqrt(0.9 * 0.4))]
        p1, p2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_triplets(triplets, p1)
        write_triplets(triplets, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_invalid_triplet(self):
        with pytest.raises(ValueError):
            Triplet("q", "same", "same", 0.5)
        with pytest.raises(ValueError):
            Triplet("q", "a", "b", 1.5)
