import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from kgstruct.checkpoint import (
    FORMAT_VERSION, MAGIC, load_kgem, load_twig, load_twigi, read_checkpoint, save_kgem, save_twig,
    save_twigi, write_checkpoint,
)
from kgstruct.exceptions import CheckpointError
from kgstruct.kgem import KGEModel
from kgstruct.results import ResultsWriter, config_hash, read_results, render_report, summarise
from kgstruct.synthetic import planted_kg
from kgstruct.twigi import TwigI
from test_twig import fake_records


@pytest.fixture(scope="module")
def kg():
    return planted_kg(n_entities=50, n_triples=400, seed=2)


class TestContainer:
    def test_roundtrip_and_header(self, tmp_path):
        a = np.arange(6.0).reshape(2, 3)
        path = write_checkpoint(tmp_path / "c.bin", "x", {"k": 1}, [("a", a), ("b", np.zeros(0))])
        raw = path.read_bytes()
        assert raw[:8] == MAGIC
        assert struct.unpack_from("<I", raw, 8)[0] == FORMAT_VERSION
        header, arrays = read_checkpoint(path, "x")
        assert header["meta"] == {"k": 1}
        assert_array_equal(arrays["a"], a)

    def test_wrong_kind(self, tmp_path):
        path = write_checkpoint(tmp_path / "c.bin", "x", {}, [])
        with pytest.raises(CheckpointError, match="expected a kgem"):
            read_checkpoint(path, "kgem")

    @pytest.mark.parametrize("mutate", [
        lambda b: b"NOTACKPT" + b[8:],
        lambda b: b[:8] + struct.pack("<I", 99) + b[12:],
        lambda b: b[:-4],
        lambda b: b + b"\0",
        lambda b: b[:10],
    ])
    def test_corruption_detected(self, tmp_path, mutate):
        path = write_checkpoint(tmp_path / "c.bin", "x", {}, [("a", np.ones(4))])
        path.write_bytes(mutate(path.read_bytes()))
        with pytest.raises(CheckpointError):
            read_checkpoint(path)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=0, max_size=30))
    def test_float_payload_exact(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("p") / "c.bin"
        write_checkpoint(path, "x", {}, [("v", np.array(values, dtype=float))])
        assert read_checkpoint(path)[1]["v"].tobytes() == np.array(values, dtype=float).tobytes()


def test_kgem_roundtrip(tmp_path, kg):
    model = KGEModel(scoring="ComplEx", dim=4, epochs=1, npp=2).fit(kg)
    back = load_kgem(save_kgem(model, tmp_path / "m.ckpt", kg))
    assert back.get_params() == model.get_params()
    assert_array_equal(back.decision_function(kg.test), model.decision_function(kg.test))
    assert back.labels_["entities"] == kg.entities.labels


def test_twigi_roundtrip_then_finetune_matches(tmp_path, kg):
    other = planted_kg(n_entities=40, n_triples=300, seed=9)
    model = TwigI(epochs=1, ablation=("so_cofreq",)).fit(kg)
    back = load_twigi(save_twigi(model, tmp_path / "t.ckpt"))
    with pytest.raises(Exception, match="attach"):
        back.decision_function(kg.test)
    back.attach(kg)
    assert_allclose(back.normalizer_.mean_, model.normalizer_.mean_)
    assert_array_equal(back.decision_function(kg.test), model.decision_function(kg.test))
    model.finetune(other, epochs=1)
    back.finetune(other, epochs=1)
    for a, b in zip(model.network_.params, back.network_.params):
        assert a.tobytes() == b.tobytes()


def test_twig_roundtrip(tmp_path, kg):
    records = fake_records(kg, n_combos=3)
    from kgstruct.twig import TwigModel
    model = TwigModel(phase1_epochs=1, phase2_epochs=1).fit(records)
    back = load_twig(save_twig(model, tmp_path / "s.ckpt"))
    assert_array_equal(back.predict(records), model.predict(records))


class TestResults:
    def test_hash_ignores_key_order(self):
        a = {"x": 1, "y": {"b": 2, "a": [1, 2]}}
        b = {"y": {"a": [1, 2], "b": 2}, "x": 1}
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash({"x": 2, "y": {"b": 2, "a": [1, 2]}})
        assert len(config_hash(a)) == 16

    @settings(max_examples=40, deadline=None)
    @given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers(), max_size=8), st.randoms())
    def test_hash_stable_under_any_reordering(self, d, rnd):
        items = list(d.items())
        rnd.shuffle(items)
        assert config_hash(dict(items)) == config_hash(d)

    def test_rows_and_report(self, tmp_path):
        w = ResultsWriter(tmp_path / "results.csv")
        h1 = w.write("evaluate", "umls", {"a": 1}, 0, {"mrr": 0.5, "hits@1": 0.25})
        w.write("evaluate", "nations", {"a": 2}, 0, {"mrr": 0.75})
        w.write("evaluate", "umls", {"a": 1}, 0, {"mrr": 0.6})
        rows = read_results(tmp_path / "results.csv")
        assert len(rows) == 4
        assert {"timestamp", "git_describe", "config_hash", "seed"} <= set(rows[0])
        tables = summarise(rows)
        assert list(tables) == ["nations", "umls"]
        assert tables["umls"][0]["config_hash"] == h1
        assert tables["umls"][0]["metrics"] == {"mrr": 0.6, "hits@1": 0.25}
        text = render_report(tables)
        assert "== umls ==" in text and "0.6000" in text

    def test_summary_independent_of_row_order(self, tmp_path):
        w = ResultsWriter(tmp_path / "r.csv")
        for cfg in ({"b": 1}, {"a": 1}, {"c": 1}):
            w.write("x", "d", cfg, 0, {"mrr": 0.1})
        rows = read_results(tmp_path / "r.csv")
        assert summarise(rows) == summarise(rows[::-1])

    def test_missing_file_is_empty(self, tmp_path):
        assert read_results(tmp_path / "none.csv") == []
