import itertools

import numpy as np
import pytest

import mld


def and_dataset():
    rows = np.array(list(itertools.product([0.0, 1.0], repeat=3)) * 5)
    labels = [int(r[0] == 1 and r[1] == 1) for r in rows]
    return mld.Dataset(rows, labels)


def test_dataset_roundtrip():
    data = and_dataset()
    assert len(data) == 40
    assert data.num_classes == 2
    assert data.features.shape == (40, 3)


def test_train_distill_explain(tmp_path):
    data = and_dataset()
    model, report = mld.train_mlp(data, [4], epochs=200, learning_rate=0.02, batch_size=8)
    assert report["final_train_acc"] == 1.0
    structure = mld.build_mld(model, data, max_height=10**6, max_size=10**6)
    ev = mld.evaluate(structure, model, data, "train")
    assert ev["fidelity"]["accuracy"] == 1.0

    x = np.array([1.0, 1.0, 0.0])
    assert structure.decide(x) == model.predict(x[None, :])[0] == 1
    lines = structure.explain(x)
    assert lines[0] == "(x_1=1) ∧ (x_2=1) ⇒ (y=1)"
    assert len(lines) == 3

    structure.save(tmp_path / "mld.json")
    again = mld.MLD.load(tmp_path / "mld.json")
    assert again.to_json() == structure.to_json()
    model.save(tmp_path / "model.json")
    assert mld.Model.load(tmp_path / "model.json").hash() == model.hash()


def test_importance_sums_to_one():
    data = and_dataset()
    model, _ = mld.train_mlp(data, [4], epochs=200, learning_rate=0.02, batch_size=8)
    structure = mld.build_mld(model, data)
    freq = mld.frequency_importance(structure, data.features)
    assert abs(sum(freq["scores"]) - 1.0) < 1e-9
    assert freq["scores"][2] == 0.0
    oob = mld.oob_importance(structure, model.predict(data.features), data.features, seed=3)
    assert oob["method"] == "oob"


def test_errors_carry_their_kind():
    with pytest.raises(mld.MldError) as info:
        mld.Dataset(np.zeros((2, 2)), [0])
    assert info.value.args[1] == "shape"
    with pytest.raises(mld.MldError):
        mld.Model.load("/nonexistent/model.json")
