import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from connectome_cnn.analysis import (
    emit_accuracy_plot,
    emit_report,
    filter_importance,
    importance_profile,
    recovery_score,
    roi_importance,
)
from connectome_cnn.nn import ModelSpec, TrainConfig, init_params, model_inputs, train
from connectome_cnn.simulate import GroundTruth, SimulationConfig, generate_dataset


def test_roi_importance_construction():
    w1 = np.zeros((4, 2, 8))
    w1[:, 0, 5] = 1.0
    imp = roi_importance(w1)
    assert imp.shape == (2, 8)
    assert imp[0, 5] == 4.0 and imp[0].sum() == 4.0 and imp[1].sum() == 0.0


def test_filter_importance_examples():
    w1 = np.ones((3, 1, 7))
    np.testing.assert_array_equal(filter_importance(w1), [[7, 7, 7]])
    w1[1] = 0.0
    assert filter_importance(w1)[0, 1] == 0.0


def test_full_sized_profile_shape():
    spec = ModelSpec("ccnn", 499)
    store = init_params(spec, np.random.default_rng(0))
    prof = importance_profile(store)
    assert prof.roi.shape == (1, 499) and prof.filters.shape == (1, 64)
    assert np.all(prof.roi >= 0)


@settings(max_examples=50, deadline=None)
@given(f=st.integers(1, 5), c=st.integers(1, 3), n=st.integers(2, 9), seed=st.integers(0, 1000))
def test_marginals_agree(f, c, n, seed):
    w1 = np.random.default_rng(seed).standard_normal((f, c, n))
    r, fi = roi_importance(w1), filter_importance(w1)
    assert np.all(r >= 0) and np.all(fi >= 0)
    np.testing.assert_allclose(r.sum(axis=1), fi.sum(axis=1), rtol=1e-12)


def test_recovery_examples():
    imp = np.zeros(10)
    imp[[2, 7]] = 5.0
    assert recovery_score(imp, GroundTruth([2, 7]), 2) == (2, [2, 7])
    assert recovery_score(imp, GroundTruth([0, 1]), 2)[0] == 0
    # ties go to the lower index
    assert recovery_score(np.ones(5), [4], 2) == (0, [0, 1])
    assert recovery_score(imp, [7], 4)[1] == [2, 7, 0, 1]


@given(st.lists(st.floats(0, 100), min_size=3, max_size=20), st.floats(1e-3, 1e3))
def test_recovery_scale_invariant(values, scale):
    imp = np.array(values)
    a = recovery_score(imp, [0, 1], 2)
    b = recovery_score(imp * scale, [0, 1], 2)
    if len(set(values)) == len(values):
        assert a == b


def test_report_roundtrip(tmp_path):
    w1 = np.random.default_rng(1).standard_normal((3, 2, 4))
    prof = importance_profile(w1, ["dtw_distance", "path_length"])
    emit_report(prof, tmp_path / "a.json")
    emit_report(prof, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert np.array_equal(np.array(doc["roi_importance"]), prof.roi)
    emit_report(prof, tmp_path / "imp.csv", "csv")
    rows = list(csv.reader(open(tmp_path / "imp.csv")))
    assert rows[0] == ["roi_index", "channel", "importance"]
    assert len(rows) == 2 * 4 + 1
    assert float(rows[1 + 4 + 2][2]) == prof.roi[1, 2]


def test_plot_is_wellformed(tmp_path):
    p = tmp_path / "fig.svg"
    emit_accuracy_plot({"ccnn": {1: 1.0, 2: 0.9}, "simple": {1: 0.7, 2: 0.6}}, 85 / 150, p)
    root = ET.parse(p).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 2
    base = [e for e in root.findall(f"{ns}line") if e.get("class") == "baseline"][0]
    assert base.get("stroke-dasharray") and base.get("data-value") == "0.5667"


def test_plot_single_point(tmp_path):
    p = tmp_path / "one.svg"
    emit_accuracy_plot({"deep": {5: 0.8}}, 0.5667, p)
    root = ET.parse(p).getroot()
    assert len(root.findall("{http://www.w3.org/2000/svg}circle")) == 1


def test_recovery_on_small_simulation():
    ds, truth = generate_dataset(SimulationConfig(30, 1, 2.0, replicas_per_class=40, seed=3))
    spec = ModelSpec("ccnn", 30, conv1_filters=16, conv2_filters=16, hidden=16)
    store, _ = train(spec, model_inputs(spec, ds), ds.labels, TrainConfig(learning_rate=1e-3, epochs=15))
    hits, top = recovery_score(roi_importance(store.params["W1"])[0], truth, 1)
    assert hits == 1, (top, truth)
