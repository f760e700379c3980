import json

import numpy as np
import pytest

from ineeg.ablation import (
    TABLE_HEADER,
    AblationResult,
    best_per_model_window,
    build_grid,
    format_pct,
    read_results_jsonl,
    render_csv,
    render_subject_table,
    render_table,
    run_ablation,
    write_results_jsonl,
)
from ineeg.dataset import FeatureMask, enumerate_feature_masks
from ineeg.models import ModelSpec

FAST_MODELS = [ModelSpec("RandomForest", {"n_trees": 8}), ModelSpec("AdaBoost", {"n_rounds": 10}),
               ModelSpec("SVM", {"epochs": 5})]
FEW_MASKS = [FeatureMask.from_name(n) for n in ("Mean", "SD", "Mean-SD-Curve")]


def result(model="RandomForest", window=2, mask="Mean", acc=0.6, prec=0.6, rec=0.6, cond="Generalised"):
    return AblationResult(cond, model, window, FeatureMask.from_name(mask),
                          {"accuracy": acc, "precision": prec, "recall": rec},
                          {"accuracy": 0.01, "precision": 0.02, "recall": 0.03}, [], 0.001)


def test_full_grid_has_1524_cells_per_condition():
    models = [ModelSpec("RandomForest"), ModelSpec("AdaBoost"), ModelSpec("SVM")]
    assert len(build_grid(["Generalised"], models, [2, 4, 8, 16])) == 1524
    assert len(build_grid(["Generalised", "Personalised"], models, [2, 4, 8, 16])) == 3048
    assert len(enumerate_feature_masks()) == 127


@pytest.fixture(scope="module")
def small_results(small_feats):
    return run_ablation(small_feats, ["Generalised", "Personalised"], FAST_MODELS, windows=[2, 4], seed=3,
                        masks=FEW_MASKS, repeats=2)


def test_every_cell_evaluated(small_results):
    assert len(small_results) == 2 * 3 * 2 * 3
    assert not [r.error for r in small_results if r.failed]
    keys = {r.key for r in small_results}
    assert len(keys) == len(small_results)
    for r in small_results:
        assert set(r.mean) == {"accuracy", "precision", "recall"}
        assert 0 <= r.p_value <= 1


def test_canonical_order(small_results):
    assert [r.condition for r in small_results[:18]] == ["Generalised"] * 18
    gen = small_results[:18]
    assert [r.model for r in gen[:6]] == ["RandomForest"] * 6
    assert [(r.window, r.mask.bits) for r in gen[:6]] == sorted((r.window, r.mask.bits) for r in gen[:6])


def test_generalised_sd_is_across_folds(small_results):
    r = next(x for x in small_results if x.condition == "Generalised")
    accs = np.array([f["accuracy"] for f in r.fold_metrics])
    assert r.unit == "fold" and len(accs) == 5
    assert r.mean["accuracy"] == pytest.approx(accs.mean())
    assert r.sd["accuracy"] == pytest.approx(accs.std())


def test_personalised_sd_is_across_subjects(small_results):
    r = next(x for x in small_results if x.condition == "Personalised")
    accs = np.array([s["mean"]["accuracy"] for s in r.subjects])
    assert r.unit == "subject" and len(accs) == 3
    assert r.mean["accuracy"] == pytest.approx(accs.mean())
    assert r.sd["accuracy"] == pytest.approx(accs.std())


def test_deterministic_and_parallel_matches_serial(small_feats, small_results):
    kwargs = dict(windows=[2, 4], seed=3, masks=FEW_MASKS, repeats=2)
    again = run_ablation(small_feats, ["Generalised", "Personalised"], FAST_MODELS, jobs=2, **kwargs)
    assert [r.to_row() for r in again] == [r.to_row() for r in small_results]


def test_failed_cells_are_recorded_not_fatal(small_feats, caplog):
    with caplog.at_level("WARNING"):
        res = run_ablation(small_feats, "Personalised", FAST_MODELS[:1], windows=[2], masks=FEW_MASKS[:1], k=20,
                           repeats=1)
    assert len(res) == 1 and res[0].failed
    assert "enough samples" in res[0].error
    assert len(res[0].skipped) == 3
    assert "1 of 1 grid cells failed" in caplog.text
    assert best_per_model_window(res) == []


def test_best_selection_and_tie_breaks():
    rows = [result(mask="Mean", acc=0.7, prec=0.6), result(mask="SD", acc=0.7, prec=0.65),
            result(mask="Mean-SD", acc=0.7, prec=0.65), result(mask="Curve", acc=0.69, prec=0.9),
            result(window=4, mask="Skew", acc=0.55), result(model="SVM", mask="Peaks", acc=0.52)]
    best = best_per_model_window(rows)
    assert [(b.model, b.window, b.mask.name) for b in best] == [
        ("RandomForest", 2, "SD"), ("RandomForest", 4, "Skew"), ("SVM", 2, "Peaks")]
    assert best_per_model_window(list(reversed(rows)))[-1].mask.name == "SD"


def test_format_pct():
    assert format_pct(0.735, 0.026) == "73.5% (2.6%)"
    assert format_pct(0.901, 0.221) == "90.1% (22.1%)"
    assert format_pct(0.5) == "50.0%"


def test_table_layout():
    best = best_per_model_window([result(mask="Mean-SD-Curve", acc=0.735), result(window=4, mask="Mean"),
                                  result(model="SVM", mask="SD")])
    text = render_table(best, "Generalised").splitlines()
    assert text[0] == "Generalised"
    assert [c.strip() for c in text[1].split("|")] == list(TABLE_HEADER)
    cells = [[c.strip() for c in line.split("|")] for line in text[3:]]
    assert cells[0][0] == "Baseline (Random)" and cells[0][3] == "50%"
    assert cells[1][:4] == ["RandomForest", "2", "Mean-SD-Curve", "73.5% (1.0%)"]
    assert cells[2][0] == ""  # repeated model name is blanked
    assert cells[3][0] == "SVM"


def test_csv_has_condition_and_p_value():
    best = [result(), result(cond="Personalised")]
    lines = render_csv(best, ["Generalised", "Personalised"]).splitlines()
    assert lines[0].split(",")[0] == "Condition" and lines[0].endswith("p_value")
    assert [line.split(",")[0] for line in lines[1:]] == ["Generalised", "Personalised"]


def test_subject_table(small_results):
    best = best_per_model_window(small_results)
    text = render_subject_table(best)
    assert text.count("accuracy") == 3 * 3 * 2  # subjects x models x windows
    assert "Generalised" not in text


def test_jsonl_round_trip(tmp_path, small_results):
    path = tmp_path / "r.jsonl"
    write_results_jsonl(small_results, path)
    row = json.loads(path.read_text().splitlines()[0])
    assert {"condition", "model", "window", "mask", "fold_metrics", "mean", "sd", "p_value"} <= set(row)
    back = read_results_jsonl(path)
    assert [r.to_row() for r in back] == [r.to_row() for r in small_results]


def test_corrupt_line_is_named(tmp_path):
    path = tmp_path / "r.jsonl"
    write_results_jsonl([result(), result(window=4)], path)
    with open(path, "a") as fh:
        fh.write('{"condition": "Generalised"}\n')
    with pytest.raises(ValueError, match="line 3"):
        read_results_jsonl(path)
    path.write_text("not json\n")
    with pytest.raises(ValueError, match="line 1"):
        read_results_jsonl(path)
