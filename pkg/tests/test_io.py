import json

import numpy as np
import pytest

from fairloop.io import (InteractionTable, RunManifest, filter_to_fixed_point, load_interactions,
                         load_score_matrix, preprocess, read_jsonl, read_summary_csv, write_jsonl,
                         write_manifest, write_summary_csv)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def table_from_rows(rows):
    users, items, ratings, stamps = zip(*rows)
    rating = np.array(ratings, dtype=float)
    return InteractionTable(np.array(users, dtype=object), np.array(items, dtype=object), rating,
                            np.array(stamps, dtype=float), (rating >= 4).astype(np.int8))


def dense_log(n_users=6, n_items=10, providers=2):
    """Every user rates every item once; item j belongs to provider j % providers."""
    rows, ts = [], 0
    for u in range(n_users):
        for i in range(n_items):
            rows.append((f"u{u}", f"i{i}", 1 + (u + i) % 5, ts))
            ts += 1
    owner = {f"i{i}": f"p{i % providers}" for i in range(n_items)}
    return table_from_rows(rows), owner


class TestLoadInteractions:
    def test_empty_file(self, tmp_path):
        with pytest.raises(ValueError, match="empty"):
            load_interactions(write(tmp_path, "a.csv", ""))

    def test_header_only(self, tmp_path):
        with pytest.raises(ValueError, match="no interactions"):
            load_interactions(write(tmp_path, "a.csv", "user_id,item_id,rating,timestamp\n"))

    def test_clicks_from_ratings(self, tmp_path):
        body = "user_id,item_id,rating,timestamp\n" + "".join(f"u,i{r},{r},{r}\n" for r in range(1, 6))
        t = load_interactions(write(tmp_path, "a.csv", body))
        np.testing.assert_array_equal(t.click, [0, 0, 0, 1, 1])

    def test_stable_ties(self, tmp_path):
        body = "user_id,item_id,rating,timestamp\nu1,a,5,2\nu2,b,5,1\nu3,c,5,1\nu4,d,5,1\n"
        t = load_interactions(write(tmp_path, "a.csv", body))
        assert list(t.user) == ["u2", "u3", "u4", "u1"]

    def test_malformed_lines_reported(self, tmp_path):
        body = "user_id,item_id,rating,timestamp\nu1,a,5,2\nu2,b,five,1\nu3,c,5\n"
        with pytest.raises(ValueError) as exc:
            load_interactions(write(tmp_path, "a.csv", body))
        assert "line 3" in str(exc.value) and "line 4" in str(exc.value)

    def test_bad_header(self, tmp_path):
        with pytest.raises(ValueError, match="header"):
            load_interactions(write(tmp_path, "a.csv", "user,item\n"))


class TestPreprocess:
    def test_sparse_user_removed(self):
        table, owner = dense_log()
        extra = table_from_rows([("lonely", f"i{i}", 5, 100 + i) for i in range(4)])
        merged = InteractionTable(*(np.concatenate([getattr(table, f), getattr(extra, f)])
                                    for f in ("user", "item", "rating", "timestamp", "click")))
        res = preprocess(merged, owner)
        assert "lonely" not in res.user_ids
        assert res.stats["n_users"] == 6

    def test_small_provider_removed(self):
        table, owner = dense_log(n_items=13)
        # move three items to a provider of their own
        for i in (10, 11, 12):
            owner[f"i{i}"] = "tiny"
        res = preprocess(table, owner)
        assert "tiny" not in res.provider_ids
        assert not any(i in res.item_ids for i in ("i10", "i11", "i12"))

    def test_fixed_point_idempotent(self):
        rng = np.random.default_rng(0)
        rows = [(f"u{rng.integers(30)}", f"i{rng.integers(40)}", int(rng.integers(1, 6)), t) for t in range(600)]
        owner = {f"i{i}": f"p{i % 6}" for i in range(40)}
        once, _ = filter_to_fixed_point(table_from_rows(rows), owner)
        twice, passes = filter_to_fixed_point(once, owner)
        assert len(twice) == len(once) and passes == 1

    def test_temporal_split(self):
        table, owner = dense_log()
        res = preprocess(table, owner)
        n = res.stats["kept_rows"]
        assert res.train.shape[0] == int(0.8 * n)
        assert res.train[:, 3].max() <= res.test[:, 3].min()

    def test_empty_after_filtering(self):
        table, owner = dense_log(n_users=3)
        with pytest.raises(ValueError, match="no interactions left"):
            preprocess(table, owner)

    def test_provider_map_tuple(self):
        table, owner = dense_log()
        items = sorted(owner)
        providers = sorted(set(owner.values()))
        provider_of = np.array([providers.index(owner[i]) for i in items])
        res = preprocess(table, (provider_of, items, providers))
        assert res.stats["n_providers"] == 2


class TestScoreMatrix:
    def test_uniform(self, tmp_path):
        m = load_score_matrix(write(tmp_path, "s.csv", "0.5,0.5,0.5\n0.5,0.5,0.5\n"), shape=(2, 3))
        np.testing.assert_array_equal(m.values, np.full((2, 3), 0.5))
        assert m.clamped == 0 and m.filled == 0

    def test_clamp(self, tmp_path):
        m = load_score_matrix(write(tmp_path, "s.csv", "1.2,0.3\n-0.1,0.4\n"))
        np.testing.assert_allclose(m.values, [[1.0, 0.3], [0.0, 0.4]])
        assert m.clamped == 2

    def test_triplets_fill(self, tmp_path):
        m = load_score_matrix(write(tmp_path, "s.csv", "user,item,score\n0,1,0.7\n1,0,0.2\n"), shape=(2, 2))
        np.testing.assert_allclose(m.values, [[0.0, 0.7], [0.2, 0.0]])
        assert m.filled == 2

    def test_shape_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="shape"):
            load_score_matrix(write(tmp_path, "s.csv", "0.1,0.2\n"), shape=(1, 3))

    def test_ragged(self, tmp_path):
        with pytest.raises(ValueError, match=":2:"):
            load_score_matrix(write(tmp_path, "s.csv", "0.1,0.2\n0.3\n"))

    def test_triplet_out_of_range(self, tmp_path):
        with pytest.raises(ValueError, match="outside"):
            load_score_matrix(write(tmp_path, "s.csv", "user,item,score\n5,0,0.1\n"), shape=(2, 2))

    def test_triplet_duplicate(self, tmp_path):
        with pytest.raises(ValueError, match="twice"):
            load_score_matrix(write(tmp_path, "s.csv", "user,item,score\n0,0,0.1\n0,0,0.2\n"), shape=(1, 1))


class TestPersistence:
    def test_jsonl_round_trip(self, tmp_path):
        rows = [{"episode": 0, "x": np.float64(0.25), "v": np.arange(2)}]
        write_jsonl(tmp_path / "a.jsonl", rows)
        assert read_jsonl(tmp_path / "a.jsonl") == [{"episode": 0, "x": 0.25, "v": [0, 1]}]

    def test_summary_exact_floats(self, tmp_path):
        row = dict(policy="topk", seed=1, K=3, T=4, ctr=0.1 + 0.2, mmf=1 / 3, r=0.5, regret="", wall_ms=1.0)
        row["lambda"] = 0.5
        write_summary_csv(tmp_path / "s.csv", [row])
        back = read_summary_csv(tmp_path / "s.csv")[0]
        assert float(back["ctr"]) == 0.1 + 0.2 and float(back["mmf"]) == 1 / 3

    def test_manifest(self, tmp_path):
        write_manifest(tmp_path / "m.json", RunManifest({"N": 4}, [1, 2], outputs={"a": "b"}))
        data = json.loads((tmp_path / "m.json").read_text())
        assert data["seeds"] == [1, 2] and data["version"]
