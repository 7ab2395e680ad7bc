import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treewatt.baseline import TraceSample
from treewatt.evaluation import (
    ablate_features,
    ablate_regressors,
    ablation_table,
    error_cdf,
    error_pct,
    loo_splits,
    run_eval,
)
from treewatt.featurization import FeatureSubset
from treewatt.model_tree import tree_key
from treewatt.synthetic import generate_dataset, scenario_specs
from treewatt.tree_regressors import TrainingConfig

from helpers import leaf, model_root, tree_of


def _mini_dataset(kind="linear", n_models=2, seed=33):
    # with 2 models, pick the pair sharing a primitive vocabulary so LOO
    # never hits an unseen primitive
    specs = scenario_specs(kind, seed=seed)
    picks = [specs[0], specs[2]] if n_models == 2 else specs[:n_models]
    trees = []
    for spec in picks:
        small = replace(spec, batch_sizes=(8, 16), seq_lens=(32, 64, 96))
        t, _ = generate_dataset(small)
        trees.extend(t)
    return trees


def test_error_pct_examples():
    assert error_pct(110.0, 100.0) == 10.0
    assert error_pct(100.0, 100.0) == 0.0
    assert error_pct(50.0, 100.0) == 50.0
    with pytest.raises(ValueError):
        error_pct(1.0, 0.0)
    with pytest.raises(ValueError):
        error_pct(1.0, -2.0)


@given(p=st.floats(0, 1e6), g=st.floats(1e-6, 1e6), k=st.floats(1e-3, 1e3))
def test_error_pct_scale_invariance(p, g, k):
    # abs floor covers the p ~ g cancellation regime, where the error value
    # itself is within rounding of zero
    assert error_pct(k * p, k * g) == pytest.approx(error_pct(p, g), rel=1e-9, abs=1e-9)


def test_loo_splits_properties():
    dataset = _mini_dataset(n_models=4)
    folds = loo_splits(dataset)
    assert len(folds) == 4
    seen_test = []
    for fold in folds:
        train_names = {t.model_name for t in fold.train}
        test_names = {t.model_name for t in fold.test}
        assert test_names == {fold.model_name}
        assert fold.model_name not in train_names
        assert train_names | test_names == {t.model_name for t in dataset}
        seen_test.extend(fold.test)
    assert len(seen_test) == len(dataset)

    single = [t for t in dataset if t.model_name == dataset[0].model_name]
    with pytest.raises(ValueError, match=">= 2 distinct model names"):
        loo_splits(single)


def test_error_cdf():
    assert error_cdf([20.0, 10.0]) == [(10.0, 0.5), (20.0, 1.0)]
    assert error_cdf([5.0, 5.0, 5.0]) == [(5.0, 1.0)]
    pts = error_cdf(list(np.random.default_rng(0).uniform(0, 30, size=50)))
    fracs = [f for _, f in pts]
    errs = [e for e, _ in pts]
    assert fracs == sorted(fracs) and errs == sorted(errs)
    assert fracs[-1] == 1.0
    with pytest.raises(ValueError):
        error_cdf([])


def test_run_eval_is_bit_reproducible():
    dataset = _mini_dataset()
    cfg = TrainingConfig(epochs=60, seed=5)
    a = run_eval(dataset, "end2end", hyper=cfg)
    b = run_eval(dataset, "end2end", hyper=cfg)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_run_eval_rejects_bad_inputs():
    dataset = _mini_dataset()
    with pytest.raises(ValueError, match="unknown regressor"):
        run_eval(dataset, "boost")
    unlabeled = tree_of(model_root("X:0", [leaf("Linear:0", gt=1.0)]))
    with pytest.raises(ValueError, match="ground truth"):
        run_eval([unlabeled, dataset[0]], "predicted_sum")


def test_pooled_averages_match_brute_force():
    dataset = _mini_dataset()
    report = run_eval(dataset, "predicted_sum")
    for level in ("ml", "module", "model"):
        node_errs = [r.error_pct for r in report.records if r.level == level]
        assert report.pooled_by_node[level] == pytest.approx(np.mean(node_errs), rel=1e-12)
        per_model = {}
        for r in report.records:
            if r.level == level:
                per_model.setdefault(r.model_name, []).append(r.error_pct)
        model_means = [np.mean(v) for v in per_model.values()]
        assert report.pooled_by_model[level] == pytest.approx(np.mean(model_means), rel=1e-12)
        assert report.cdf[level][-1][1] == 1.0


def test_records_cover_every_node():
    dataset = _mini_dataset()
    report = run_eval(dataset, "predicted_sum")
    assert len(report.records) == sum(len(t.nodes()) for t in dataset)
    assert {r.level for r in report.records} == {"ml", "module", "model"}


def test_ablate_features_shape_and_determinism():
    dataset = _mini_dataset()
    cfg = TrainingConfig(epochs=40, seed=2)
    reports = ablate_features(dataset, cfg)
    assert set(reports) == {"all", "model_only", "resource_only"}
    table = ablation_table(reports)
    assert len(table) == 3
    assert all(set(row) == {"arm", "ml", "module", "model"} for row in table)

    direct = run_eval(dataset, "end2end", FeatureSubset.ALL, cfg)
    assert json.dumps(reports["all"].to_dict(), sort_keys=True) == \
        json.dumps(direct.to_dict(), sort_keys=True)


def test_ablate_regressors_arms():
    dataset = _mini_dataset()
    reports = ablate_regressors(dataset, TrainingConfig(epochs=40))
    assert set(reports) == {"end2end", "stepwise", "predicted_sum", "unstructured"}
    for r in reports.values():
        assert set(r.pooled_by_model) == {"ml", "module", "model"}


def test_baseline_kind_uses_traces():
    dataset = _mini_dataset()
    traces = {}
    for t in dataset:
        gt = t.root.ground_truth_energy
        # trace reproducing 90% of the true energy
        traces[tree_key(t)] = [TraceSample("py", 0.0, 0.0, 1.0, 0.0, 0.0, 0.9 * gt)]
    report = run_eval(dataset, "baseline", traces=traces)
    assert set(report.pooled_by_model) == {"model"}
    assert report.pooled_by_model["model"] == pytest.approx(10.0, rel=1e-9)
    assert all(r.level == "model" for r in report.records)

    with pytest.raises(ValueError, match="no resource trace"):
        run_eval(dataset, "baseline", traces={})
    with pytest.raises(ValueError, match="trace mapping"):
        run_eval(dataset, "baseline")


def test_fingerprint_contents():
    dataset = _mini_dataset()
    report = run_eval(dataset, "predicted_sum", hyper=TrainingConfig(seed=9))
    fp = report.fingerprint
    assert fp["regressor_kind"] == "predicted_sum"
    assert fp["backend"] in ("numba", "numpy")
    assert len(fp["fold_seeds"]) == 2
    assert fp["models"] == sorted({t.model_name for t in dataset})
