import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ineeg.data_model import FEATURE_KINDS, FeatureKind, Label
from ineeg.dataset import (
    Condition,
    FeatureMask,
    Sample,
    SkippedSubjectWarning,
    assemble,
    balance_classes,
    balance_indices,
    build_window,
    enumerate_feature_masks,
    masked_matrix,
    stack_windows,
)
from ineeg.features import FeaturizedRecording

BANDS = ("Delta", "Theta", "Alpha", "Beta", "Gamma")
FEATS = tuple(k.short_name for k in FEATURE_KINDS)


def fake_feats(subject="S01", n_trials=20, n_need=5, channels=3, seed=0, seg_counts=None):
    rng = np.random.default_rng(seed)
    seg_counts = seg_counts or [int(rng.integers(4, 17)) for _ in range(n_trials)]
    tensors = tuple(rng.normal(size=(n, channels, 5, 7)) for n in seg_counts)
    labels = np.zeros(n_trials, dtype=np.int64)
    labels[:n_need] = 1
    return FeaturizedRecording(subject, 500.0, tuple(f"E{c}" for c in range(channels)), BANDS, FEATS,
                               tuple(f"{subject}-T{i}" for i in range(n_trials)), labels, tensors)


def test_mask_names_and_bits():
    m = FeatureMask.from_name("Mean-SD-Curve")
    assert m.kinds == (FeatureKind.MEAN, FeatureKind.STD, FeatureKind.CURVE_LENGTH)
    assert m.name == "Mean-SD-Curve"
    assert FeatureMask.from_name("Curve-Mean-SD") == m  # canonical order regardless of input order
    assert m.indices.tolist() == [0, 1, 4]
    assert FeatureMask.all().name == "Mean-SD-Skew-Kur-Curve-Peaks-AvEn"
    with pytest.raises(ValueError):
        FeatureMask(0)
    with pytest.raises(ValueError):
        FeatureMask.from_name("Mean-Bogus")


def test_enumerate_127_masks_in_binary_order():
    masks = enumerate_feature_masks()
    assert len(masks) == 127
    assert len(set(masks)) == 127
    assert [m.bits for m in masks] == list(range(1, 128))
    singletons = [m for m in masks if len(m) == 1]
    assert {m.kinds[0] for m in singletons} == set(FEATURE_KINDS)


def test_enumerate_restricted_to_three_features():
    masks = enumerate_feature_masks([FeatureKind.MEAN, FeatureKind.STD, FeatureKind.CURVE_LENGTH])
    assert len(masks) == 7
    assert masks[-1].name == "Mean-SD-Curve"


def test_window_of_seven_segments_w2_is_last_two():
    t = np.arange(7)[:, None, None, None] * np.ones((7, 2, 5, 7))
    w = build_window(t, 2)
    assert w[:, 0, 0, 0].tolist() == [5, 6]


def test_window_of_four_segments_w4_has_no_padding():
    t = np.arange(1, 5)[:, None, None, None] * np.ones((4, 2, 5, 7))
    assert build_window(t, 4)[:, 0, 0, 0].tolist() == [1, 2, 3, 4]


def test_window_w16_pads_front_with_zeros():
    t = np.arange(1, 8)[:, None, None, None] * np.ones((7, 40, 5, 7))
    w = build_window(t, 16)
    assert w[:, 0, 0, 0].tolist() == [0] * 9 + list(range(1, 8))
    assert w[..., [0]].size == 16 * 40 * 5 * 1


def test_window_rejects_non_positive():
    with pytest.raises(ValueError):
        build_window(np.zeros((4, 1, 5, 7)), 0)


def test_balance_102_vs_18():
    labels = np.array([1] * 18 + [0] * 102)
    idx = balance_indices(labels, seed=3)
    assert Counter(labels[idx].tolist()) == {1: 18, 0: 18}
    assert set(np.flatnonzero(labels == 1)) <= set(idx.tolist())  # minority untouched
    assert len(set(idx.tolist())) == 36  # without replacement


def test_balance_already_balanced_keeps_multiset():
    samples = [Sample(np.array([float(i)]), Label.from_code(i % 2), "S", f"T{i}") for i in range(40)]
    out = balance_classes(samples, seed=1)
    assert sorted(s.trial_id for s in out) == sorted(s.trial_id for s in samples)


def test_balance_requires_both_classes():
    with pytest.raises(ValueError):
        balance_indices(np.zeros(50, dtype=int), 0)


def test_balance_is_seeded():
    labels = np.array([1] * 10 + [0] * 50)
    assert np.array_equal(balance_indices(labels, 4), balance_indices(labels, 4))
    assert not np.array_equal(balance_indices(labels, 4), balance_indices(labels, 5))


def test_generalised_pools_and_balances():
    feats = [fake_feats(f"S{i:02d}", n_trials=40, n_need=3 + i, seed=i) for i in range(1, 15)]
    ds = assemble(feats, "Generalised", 2, FeatureMask.from_name("Mean-SD-Curve"), seed=0)
    total_need = sum(int(f.labels.sum()) for f in feats)
    assert len(ds) == 2 * total_need
    assert ds.class_counts() == (total_need, total_need)
    assert ds.n_dims == 2 * 3 * 5 * 3
    assert set(ds.subject_ids) <= {f.subject_id for f in feats}


def test_personalised_returns_one_dataset_per_subject():
    feats = [fake_feats(f"S{i:02d}", seed=i) for i in range(1, 15)]
    out = assemble(feats, Condition.PERSONALISED, 4, FeatureMask.from_name("Mean"), seed=0)
    assert [d.subject for d in out] == [f.subject_id for f in feats]
    assert all(d.class_counts() == (5, 5) for d in out)
    assert all(set(d.subject_ids) == {d.subject} for d in out)


def test_personalised_skips_single_class_subject_with_warning():
    feats = [fake_feats("S01"), fake_feats("S02", n_need=0)]
    with pytest.warns(SkippedSubjectWarning, match="S02"):
        out = assemble(feats, "Personalised", 2, FeatureMask.from_name("Mean"), seed=0)
    assert [d.subject for d in out] == ["S01"]


def test_generalised_keeps_single_class_subject_samples():
    feats = [fake_feats("S01", n_need=5), fake_feats("S02", n_need=0, seed=2)]
    ds = assemble(feats, "Generalised", 2, FeatureMask.from_name("Mean"), seed=0)
    assert ds.class_counts() == (5, 5)


def test_vector_length_for_mean_w16_forty_channels():
    feats = [fake_feats(channels=40, n_trials=8, n_need=2)]
    ds = assemble(feats, "Generalised", 16, FeatureMask.from_name("Mean"), seed=0)
    assert ds.n_dims == 3200


def test_flatten_order_is_slot_channel_band_feature():
    f = fake_feats(n_trials=2, n_need=1, channels=2, seg_counts=[5, 6])
    win = stack_windows(f, 3)
    X = masked_matrix(win, FeatureMask.from_name("SD-Kur"))
    row = X[0].reshape(3, 2, 5, 2)
    np.testing.assert_array_equal(row[2, 1, 4], f.tensors[0][-1, 1, 4, [1, 3]])
    np.testing.assert_array_equal(row[0, 0, 0], f.tensors[0][-3, 0, 0, [1, 3]])


def test_assemble_is_deterministic():
    feats = [fake_feats(f"S{i}", seed=i) for i in range(3)]
    m = FeatureMask.from_name("Mean-Peaks")
    a = assemble(feats, "Generalised", 8, m, seed=11)
    b = assemble(feats, "Generalised", 8, m, seed=11)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.trial_ids, b.trial_ids)


def test_single_subject_generalised_equals_personalised():
    feats = [fake_feats("S01", seed=9)]
    m = FeatureMask.from_name("Skew-AvEn")
    g = assemble(feats, "Generalised", 4, m, seed=2)
    (p,) = assemble(feats, "Personalised", 4, m, seed=2)
    np.testing.assert_array_equal(g.X, p.X)
    np.testing.assert_array_equal(g.y, p.y)


def test_subject_balance_scope():
    feats = [fake_feats("S01", n_need=3), fake_feats("S02", n_need=6, seed=1)]
    ds = assemble(feats, "Generalised", 2, FeatureMask.from_name("Mean"), seed=0, balance_scope="subject")
    per_subject = Counter(zip(ds.subject_ids.tolist(), ds.y.tolist()))
    assert per_subject == {("S01", 1): 3, ("S01", 0): 3, ("S02", 1): 6, ("S02", 0): 6}
    with pytest.raises(ValueError):
        assemble(feats, "Generalised", 2, FeatureMask.from_name("Mean"), seed=0, balance_scope="trial")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 127), st.integers(1, 16), st.integers(4, 16))
def test_masking_commutes_with_windowing(bits, window, n_seg):
    rng = np.random.default_rng(bits * 31 + window)
    t = rng.normal(size=(n_seg, 2, 5, 7))
    m = FeatureMask(bits)
    a = build_window(t, window)[..., m.indices]
    b = build_window(t[..., m.indices], window)
    np.testing.assert_array_equal(a, b)


def test_export_csv(tmp_path):
    ds = assemble([fake_feats(n_trials=6, n_need=2)], "Generalised", 2, FeatureMask.from_name("Mean"), seed=0)
    path = ds.export_csv(tmp_path / "ds.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "subject_id,trial_id,label," + ",".join(f"v{i}" for i in range(ds.n_dims))
    assert len(lines) == 1 + len(ds)
    manifest = json.loads((tmp_path / "ds.manifest.json").read_text())
    assert manifest["window"] == 2 and manifest["mask"] == "Mean" and manifest["seed"] == 0
    assert manifest["condition"] == "Generalised"


def test_condition_parse():
    assert Condition.parse("generalised") is Condition.GENERALISED
    assert Condition.parse("PERSONALISED") is Condition.PERSONALISED
    with pytest.raises(ValueError):
        Condition.parse("pooled")
