# tests/test_pipeline.py
from dataclasses import replace

import numpy as np
import pytest

from hvselect.errors import ConfigError, ImportanceError, PreprocessError
from hvselect.models import HierarchyTree, ModelFit, PanelDataset, ScoreColumn, ScoreLevel, SelectionResult, Stage
from hvselect.pipeline import (
    HvsConfig, augment_with_factors, category_importance, hvs_step1, hvs_step2, hvs_step3, response_diagnostic,
    run_hvs, run_segments, score_baselines, step1_union,
)
from hvselect.regress import CvPlan
from hvselect.synth import generate, replace_spec


def _fit(coefficients, standardized=True):
    return ModelFit(intercept=0.0, coefficients=coefficients, residuals=np.zeros(3), n=3, k=len(coefficients) + 1,
                    rss=1.0, tss=2.0, standardized=standardized)


def test_run_hvs_recovers_planted_variables(planted):
    data, tree, truth = planted
    result = run_hvs(data, tree)

    assert set(truth.support) <= set(result.selected)
    assert set(result.step2.selected) <= set(step1_union(result.step1))
    assert set(result.step3.selected) == set(result.step2.selected)
    assert list(result.step1) == list(tree.category_ids)
    assert result.lambda_star is not None and result.lambda_star > 0


def test_importance_sums_to_hundred(planted):
    data, tree, truth = planted
    report = run_hvs(data, tree).importance

    assert sum(v.pct for v in report.per_category.values()) == pytest.approx(100.0, abs=1e-9)
    assert sum(v.pct for v in report.per_pillar.values()) == pytest.approx(100.0, abs=1e-9)
    assert all(v.pct > 0 for v in report.per_category.values())

    top = max(report.per_category, key=lambda c: report.per_category[c].pct)
    assert top in truth.categories(tree)


def test_ridge_step_never_explains_more_than_step2(small_spec):
    for seed in range(5):
        data, tree, _ = generate(replace_spec(small_spec, seed=seed))
        result = run_hvs(data, tree)
        assert result.step3.fit.pct_dev <= result.step2.fit.pct_dev + 1e-9


def test_importance_ignores_category_labels(planted):
    data, tree, _ = planted
    fit = run_hvs(data, tree).step3.fit
    labels = {"E1": "E9", "E2": "E1", "S1": "S5", "G1": "G0"}

    relabelled = replace(
        tree,
        categories=tuple(replace(c, id=labels[c.id]) for c in tree.categories),
        variables=tuple(replace(v, category_id=labels[v.category_id]) for v in tree.variables),
    )

    base = category_importance(fit, tree)
    other = category_importance(fit, relabelled)

    assert set(other.per_category) == {labels[c] for c in base.per_category}
    for category, value in base.per_category.items():
        assert other.per_category[labels[category]].pct == pytest.approx(value.pct, abs=1e-12)
        assert other.member_indices[labels[category]] == base.member_indices[category]
    assert {p: v.pct for p, v in other.per_pillar.items()} == pytest.approx({p: v.pct for p, v in base.per_pillar.items()})


def test_step1_runs_every_category(planted):
    data, tree, _ = planted
    step1 = hvs_step1(data, tree)

    for category, result in step1.items():
        assert result.stage == Stage.STEP1
        assert result.category_id == category
        assert set(result.selected) <= set(tree.members(category))
        for entry in result.trace:
            assert entry.after < entry.before


def test_step1_threads_match_serial(planted):
    data, tree, _ = planted
    serial = hvs_step1(data, tree, HvsConfig(workers=1))
    threaded = hvs_step1(data, tree, HvsConfig(workers=4))
    assert {c: r.selected for c, r in serial.items()} == {c: r.selected for c, r in threaded.items()}


def test_step1_empty_category(small_tree):
    rng = np.random.default_rng(0)
    n = 40
    values = np.column_stack([rng.standard_normal(n), np.ones(n), rng.standard_normal(n), np.zeros(n),
                              rng.standard_normal(n)])
    data = PanelDataset(companies=[f"c{i}" for i in range(n)], years=[2020] * n,
                        columns=["e_num", "e_flag", "s_num", "s_count", "g_num"], values=values,
                        response=values[:, 0] + 0.1 * rng.standard_normal(n))

    step1 = hvs_step1(data.drop_columns(["e_num"]), small_tree)
    assert step1["E1"].selected == ()
    assert step1["E1"].fit.k == 1


def test_step2_with_empty_union(planted):
    data, tree, _ = planted
    step1 = {c: SelectionResult.empty(Stage.STEP1, c) for c in tree.category_ids}

    step2 = hvs_step2(step1, data, tree)
    outcome = hvs_step3(step2, data, tree)

    assert step2.selected == ()
    assert step2.fit.k == 1
    assert outcome.selection.selected == ()
    assert outcome.importance.is_empty


def test_hvs_needs_preprocessed_data(planted):
    data, tree, _ = planted
    values = np.array(data.values)
    values[0, 0] = np.nan
    with pytest.raises(PreprocessError):
        run_hvs(data.with_values(values), tree)


def test_category_importance_shares(small_tree):
    report = category_importance(_fit({"e_num": 1.0, "e_flag": 0.0, "s_num": -3.0}), small_tree)

    assert list(report.per_category) == ["E1", "S1"]
    assert report.per_category["E1"].pct == pytest.approx(25.0)
    assert report.per_category["S1"].pct == pytest.approx(75.0)
    assert report.member_indices["E1"] == ("e_num",)
    assert report.per_pillar["S"].pct == pytest.approx(75.0)


def test_category_importance_single_category(small_tree):
    report = category_importance(_fit({"g_num": 0.4}), small_tree)
    assert report.per_category["G1"].pct == 100.0


def test_category_importance_errors(small_tree):
    with pytest.raises(ImportanceError):
        category_importance(_fit({"e_num": 1.0}, standardized=False), small_tree)
    with pytest.raises(ImportanceError):
        category_importance(_fit({"e_num": 0.0}), small_tree)


def test_run_hvs_is_deterministic(planted):
    data, tree, _ = planted
    config = HvsConfig(plan=CvPlan(5, seed=3))
    assert run_hvs(data, tree, config).to_dict() == run_hvs(data, tree, config).to_dict()


def test_hvs_config_validation():
    with pytest.raises(ConfigError):
        HvsConfig(workers=0)
    with pytest.raises(ConfigError):
        HvsConfig(max_terms=0)


def test_factor_augmentation(planted):
    data, tree, _ = planted
    rng = np.random.default_rng(1)
    factor = data.require_response() + rng.standard_normal(data.n_rows)
    augmented = data.add_columns(["mkt"], factor, exogenous=True)

    result = run_hvs(augmented, tree)
    assert "mkt" not in result.selected

    table = augment_with_factors(result.selected, ["mkt"], augmented)
    rows = {r["model"]: r for r in table.rows()}

    assert rows["factors"]["n_variables"] == 1
    assert rows["combined"]["n_variables"] == 1 + len(result.selected)
    assert rows["combined"]["pct_dev"] >= rows["factors"]["pct_dev"] - 0.05

    with pytest.raises(ConfigError):
        augment_with_factors(result.selected, [], augmented)
    with pytest.raises(PreprocessError):
        augment_with_factors(result.selected, ["E1_N1"], augmented)


def test_score_baselines(planted):
    data, tree, _ = planted
    scored_tree = HierarchyTree(tree.pillars, tree.categories, tree.variables,
                                scores=(ScoreColumn("esg", ScoreLevel.OVERALL),
                                        ScoreColumn("env", ScoreLevel.PILLAR, "E")))
    rng = np.random.default_rng(2)
    scores = np.column_stack([rng.standard_normal(data.n_rows), data.require_response()])
    scored = data.add_columns(["esg", "env"], scores, exogenous=True)

    baselines = {b.level: b for b in score_baselines(scored, scored_tree)}

    assert set(baselines) == {ScoreLevel.OVERALL, ScoreLevel.PILLAR}
    assert baselines[ScoreLevel.PILLAR].adj_r2 == pytest.approx(1.0)
    assert baselines[ScoreLevel.OVERALL].adj_r2 < 0.2


def test_run_segments(planted):
    data, tree, _ = planted
    sectors = ["energy" if c < "C0011" else "tech" for c in data.companies]
    labelled = PanelDataset(data.companies, data.years, data.columns, data.values, data.response,
                            labels={"sector": sectors})

    outcomes = run_segments(labelled, tree, "sector")

    assert [o.segment for o in outcomes] == ["energy", "tech", "overall"]
    assert outcomes[-1].n_rows == data.n_rows
    assert sum(o.n_rows for o in outcomes[:-1]) == data.n_rows


def test_response_diagnostic(planted):
    data, tree, _ = planted
    diagnostic = response_diagnostic("log_volatility", data, tree)

    assert diagnostic.n_rows == data.n_rows
    assert 0 < diagnostic.r2 <= 1
    assert 0 <= diagnostic.jb_p_value <= 1
    assert diagnostic.box_cox_lambda is None
