import json
import math

import numpy as np
import pytest

import cbm_locality as cl


@pytest.fixture(scope="module")
def small():
    ds = cl.generate_dataset(num_objects=2, samples=32, image_side=16, background=0.5, seed=3)
    model = cl.train_cbm(ds, depth=3, epochs=2, seed=1)
    return ds, model


def test_dataset_shapes():
    ds = cl.generate_dataset(num_objects=4, samples=20, image_side=32, seed=1)
    assert len(ds) == 20
    assert ds.k == 8 and ds.m == 32 * 32
    assert ds.pixels.shape == (20, 1024)
    c = ds.concepts
    assert (c[:, 0::2] + c[:, 1::2] == 1).all()
    assert ds.labels == list(c[:, 0::2].sum(axis=1))


def test_regions_disjoint_across_locations():
    ds = cl.generate_dataset(num_objects=2, samples=4, image_side=16, seed=2)
    a, b = set(ds.region(0, 0)), set(ds.region(0, 2))
    assert a and b and not (a & b)
    assert ds.region(0, 0) == ds.region(0, 1)


def test_predictions_and_metrics(small):
    ds, model = small
    p = model.predict_concepts(ds.pixels.astype(np.float64))
    assert p.shape == (len(ds), ds.k)
    assert ((p >= 0) & (p <= 1)).all()
    leak = cl.locality_leakage(model, ds, steps=3, max_samples=2)
    assert 0.0 <= leak["mean"] <= 1.0
    assert len(leak["per_concept"]) == ds.k
    interv = cl.locality_intervention(model, ds)
    assert 0.0 <= interv["mean"] <= 1.0
    masks = cl.locality_masking(model, ds)
    assert set(masks) == {"relevant", "irrelevant"}


def test_checkpoint_round_trip(small, tmp_path):
    ds, model = small
    path = str(tmp_path / "m.cbm")
    model.save(path)
    again = cl.load_cbm(path)
    assert again.checksum == model.checksum
    x = ds.pixels.astype(np.float64)
    np.testing.assert_array_equal(again.predict_concepts(x), model.predict_concepts(x))


def test_lemmas():
    lhs, rhs = cl.lemma_prod_identity([0.5, 0.5])
    assert lhs == pytest.approx(0.75) and rhs == pytest.approx(0.75)
    value, holds = cl.lemma_sum_bound([1.0] * 5)
    assert value == 1.0 and holds


def test_theorem_trials_hold():
    records = [cl.theorem_trial(seed) for seed in range(200)]
    valid = [r for r in records if r is not None]
    assert valid
    assert all(r["satisfied"] for r in valid)
    assert all(math.isfinite(r["bound"]) for r in valid)


def test_config_validation():
    cfg = json.loads(cl.parse_experiment_config('{"schema_version": 1, "kind": "mlp_grid"}'))
    assert cfg["kind"] == "mlp_grid" and cfg["seeds"] == [0, 1, 2]
    with pytest.raises(cl.ConfigError):
        cl.parse_experiment_config('{"schema_version": 1, "kind": "mlp_grid", "bogus": 1}')
