import json
import math

import pytest

import nqe


@pytest.fixture(scope="module")
def store(tmp_path_factory):
    d = tmp_path_factory.mktemp("kg")
    g = nqe.random_graph(entities=30, relations=4, facts=200, seed=3)
    g.save(str(d / "kg.bin"))
    return d


def test_graph_roundtrip(store):
    g = nqe.HyperGraph.load(str(store / "kg.bin"))
    assert g.num_entities <= 30
    assert g.num_facts == g.count("train,valid,test")
    assert len(g.entity_labels()) == g.num_entities


def test_answer_matches_brute_force(store):
    g = nqe.HyperGraph.load(str(store / "kg.bin"))
    for t in ["1p", "2i", "pni", "2cp"]:
        q = nqe.sample_query(g, t, "test", seed=1)
        assert q is not None
        fast = nqe.answer(g, q["text"])
        slow = nqe.answer(g, q["text"], brute_force=True)
        assert fast == slow
        assert sorted(fast) == sorted(q["easy"] + q["hard"])


def test_parse_errors():
    g = nqe.random_graph(seed=1)
    with pytest.raises(nqe.ParseError):
        nqe.answer(g, "(P 2 (f e1 r0 ?")
    with pytest.raises(nqe.LabelError):
        nqe.answer(g, "(P 2 (f nobody r0 ?))")


def test_fuzzy_ops():
    a, b = [0.5, 0.2], [0.4, 0.9]
    assert nqe.conj("product", [a, b]) == pytest.approx([0.2, 0.18])
    assert nqe.disj("godel", [a, b]) == pytest.approx([0.5, 0.9])
    assert nqe.neg(a) == pytest.approx([0.5, 0.8])
    with pytest.raises(ValueError):
        nqe.neg([1.5])


def test_rank_filtered():
    assert nqe.rank_filtered([0.9, 0.8, 0.7, 0.6], 3, [0, 2, 3]) == 2.0
    assert nqe.rank_filtered([0.5, 0.5, 0.5], 1, [1]) == 2.0


def test_train_eval_predict(store, tmp_path):
    g = nqe.HyperGraph.load(str(store / "kg.bin"))
    manifest = nqe.generate_dataset(g, "train/1p=30,1p=5,2i=5,2cp=3", seed=2, out=tmp_path / "data")
    assert manifest["graph_digest"]
    ck = tmp_path / "m.ck"
    run = nqe.train(store / "kg.bin", tmp_path / "data", ck,
                    config_toml="[model]\ndim = 8\nffn_dim = 16\n[train]\nepochs = 3\n")
    assert len(run["epoch_loss"]) == 3
    assert all(math.isfinite(x) for x in run["epoch_loss"])
    report = nqe.evaluate(store / "kg.bin", tmp_path / "data", ck)
    assert "avg_p" in report
    q = json.loads((tmp_path / "data" / "test-2cp.jsonl").read_text().splitlines()[0])
    pred = nqe.predict(ck, q["text"])
    assert set(pred) == {"V1", "V_tar", "entities"}
    assert sum(pred["V_tar"]) == pytest.approx(1.0)
