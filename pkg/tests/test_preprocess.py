# tests/test_preprocess.py
import numpy as np
import pandas as pd
import pytest

from hvselect.errors import ConfigError, IngestError, PreprocessError, TreeError
from hvselect.models import HierarchyTree, PanelDataset
from hvselect.preprocess import (
    PreprocessConfig, ResponseForm, ReturnsSeries, attach_factors, attach_response, box_cox_scan,
    compute_annual_return, compute_log_volatility, compute_volatility, drop_incomplete_rows, filter_availability,
    impute_by_kind, load_hierarchy, load_panel, preprocess, save_hierarchy, save_panel, split_by_label,
)

from conftest import make_tree


def _returns(company, year, values):
    dates = pd.bdate_range(f"{year}-01-01", periods=len(values))
    return pd.DataFrame({"company_id": company, "date": dates, "daily_return": values})


def test_volatility_forms():
    values = np.tile([0.01, -0.01, 0.02, -0.02], 20)
    returns = ReturnsSeries(_returns("A", 2020, values))
    cfg = PreprocessConfig()

    sd = float(np.std(values, ddof=1))
    assert compute_volatility(returns, "A", 2020, cfg) == pytest.approx(sd)
    assert compute_log_volatility(returns, "A", 2020, cfg) == pytest.approx(np.log(sd))
    assert compute_annual_return(returns, "A", 2020, cfg) == pytest.approx(np.prod(1 + values) - 1)


def test_log_volatility_two_point_example():
    returns = ReturnsSeries(_returns("A", 2020, [0.01, 0.03]))
    cfg = PreprocessConfig(min_daily_obs=2)

    assert compute_volatility(returns, "A", 2020, cfg) == pytest.approx(0.02 / np.sqrt(2), abs=1e-15)
    assert compute_log_volatility(returns, "A", 2020, cfg) == pytest.approx(-4.2586, abs=5e-5)


def test_log_volatility_ignores_row_order(rng):
    frame = pd.concat([_returns("A", 2020, rng.normal(0.0, 0.02, 120)),
                       _returns("B", 2020, rng.normal(0.001, 0.01, 90)),
                       _returns("A", 2021, rng.normal(0.0, 0.03, 80))], ignore_index=True)
    shuffled = frame.iloc[rng.permutation(len(frame))]
    cfg = PreprocessConfig()

    for company, year in (("A", 2020), ("B", 2020), ("A", 2021)):
        expected = compute_log_volatility(ReturnsSeries(frame), company, year, cfg)
        assert compute_log_volatility(ReturnsSeries(shuffled), company, year, cfg) == pytest.approx(expected, abs=1e-12)


def test_volatility_undefined_cases():
    cfg = PreprocessConfig(min_daily_obs=60)
    short = ReturnsSeries(_returns("A", 2020, np.linspace(-0.01, 0.01, 59)))
    flat = ReturnsSeries(_returns("A", 2020, np.zeros(100)))

    assert compute_log_volatility(short, "A", 2020, cfg) is None
    assert compute_log_volatility(flat, "A", 2020, cfg) is None
    assert compute_log_volatility(short, "B", 2020, cfg) is None


def test_attach_response_marks_undefined_rows():
    frame = pd.concat([_returns("A", 2020, np.tile([0.01, -0.02], 40)),
                       _returns("B", 2020, np.tile([0.01, -0.02], 10))])
    data = PanelDataset(companies=["A", "B"], years=[2020, 2020], columns=["x"], values=[[1.0], [2.0]])

    out = attach_response(data, ReturnsSeries(frame), PreprocessConfig(), ResponseForm.LOG_VOLATILITY)

    assert out.response_name == "log_volatility"
    assert np.isfinite(out.response[0])
    assert np.isnan(out.response[1])


def test_returns_reject_duplicates():
    frame = _returns("A", 2020, [0.01, 0.02])
    with pytest.raises(IngestError):
        ReturnsSeries(pd.concat([frame, frame]))


def test_box_cox_prefers_log_for_lognormal():
    rng = np.random.default_rng(0)
    scan = box_cox_scan(np.exp(rng.standard_normal(500)))
    assert abs(scan.lambda_hat) <= 0.2
    assert len(scan.grid) == len(scan.loglik) == 41


@pytest.mark.slow
def test_box_cox_log_selection_rate():
    hits = 0
    for seed in range(40):
        y = np.exp(np.random.default_rng(seed).standard_normal(500))
        hits += abs(box_cox_scan(y).lambda_hat) <= 0.2
    assert hits >= 38


def test_box_cox_needs_positive_response():
    with pytest.raises(PreprocessError):
        box_cox_scan([1.0, 0.0, 2.0])


def test_impute_by_kind(small_tree):
    data = PanelDataset(
        companies=["a", "b"], years=[2020, 2020], columns=["e_num", "e_flag", "s_count"],
        values=[[np.nan, np.nan, np.nan], [1.0, 1.0, 3.0]],
    )
    out = impute_by_kind(data, small_tree, PreprocessConfig())

    assert np.isnan(out.values[0, 0])
    assert out.values[0, 1] == 0.0
    assert out.values[0, 2] == 0.0


def test_impute_rejects_unknown_column(small_tree):
    data = PanelDataset(companies=["a"], years=[2020], columns=["stray"], values=[[1.0]])
    with pytest.raises(PreprocessError):
        impute_by_kind(data, small_tree, PreprocessConfig())


def test_availability_boundary_is_kept(small_tree):
    n = 10
    exactly = np.arange(n, dtype=float)
    exactly[:2] = np.nan
    below = np.arange(n, dtype=float)
    below[:3] = np.nan

    data = PanelDataset(companies=[f"c{i}" for i in range(n)], years=[2020] * n, columns=["e_num", "s_num"],
                        values=np.column_stack([exactly, below]))
    out, dropped = filter_availability(data, small_tree, PreprocessConfig(availability_threshold=0.8))

    assert out.columns == ("e_num",)
    assert dropped == ["s_num"]


def test_availability_ignores_boolean_columns(small_tree):
    flags = np.full(10, np.nan)
    flags[0] = 1.0
    data = PanelDataset(companies=[f"c{i}" for i in range(10)], years=[2020] * 10, columns=["e_flag"],
                        values=flags.reshape(-1, 1))
    out, dropped = filter_availability(data, small_tree, PreprocessConfig())
    assert out.columns == ("e_flag",) and dropped == []


def test_drop_incomplete_rows_counts_missing_response():
    data = PanelDataset(companies=["a", "b", "c"], years=[2020] * 3, columns=["x"],
                        values=[[1.0], [np.nan], [3.0]], response=[1.0, 2.0, np.nan])
    out, dropped = drop_incomplete_rows(data)
    assert out.keys == [("a", 2020)]
    assert dropped == [("b", 2020), ("c", 2020)]


def test_drop_incomplete_rows_needs_a_row():
    data = PanelDataset(companies=["a"], years=[2020], columns=["x"], values=[[np.nan]], response=[1.0])
    with pytest.raises(PreprocessError):
        drop_incomplete_rows(data)


def test_energy_shape_conformance():
    """617 columns and 695 rows become 255 columns and 422 rows."""

    n_rows = 695
    layout = {
        "E1": ("E", [(f"b{i}", "boolean") for i in range(100)]),
        "S1": ("S", [(f"c{i}", "controversy") for i in range(20)]),
        "G1": ("G", [(f"k{i}", "numeric") for i in range(135)] + [(f"d{i}", "numeric") for i in range(362)]),
    }
    tree = make_tree(layout)
    columns = list(tree.variable_ids)
    assert len(columns) == 617

    rng = np.random.default_rng(0)
    values = rng.standard_normal((n_rows, len(columns)))
    index = {c: j for j, c in enumerate(columns)}

    for i in range(100):
        values[rng.choice(n_rows, 300, replace=False), index[f"b{i}"]] = np.nan
    for i in range(20):
        values[rng.choice(n_rows, 50, replace=False), index[f"c{i}"]] = np.nan

    # 273 rows each lose one cell in a kept numeric column; no kept column exceeds 139 gaps
    for row in range(273):
        values[row, index[f"k{row % 135}"]] = np.nan

    for i in range(362):
        values[rng.choice(n_rows, 140 + i % 50, replace=False), index[f"d{i}"]] = np.nan

    data = PanelDataset(companies=[f"C{i:03d}" for i in range(n_rows)], years=[2020] * n_rows,
                        columns=columns, values=values, response=rng.standard_normal(n_rows))

    outcome = preprocess(data, tree, PreprocessConfig())

    assert len(outcome.data.columns) == 255
    assert outcome.data.n_rows == 422
    assert len(outcome.dropped_columns) == 362
    assert len(outcome.dropped_rows) == 273
    assert not outcome.data.has_missing()


def test_preprocess_log_frame(small_tree):
    data = PanelDataset(companies=["a", "b", "c"], years=[2020] * 3, columns=["e_num", "e_flag"],
                        values=[[1.0, np.nan], [np.nan, 1.0], [2.0, 0.0]], response=[0.1, 0.2, 0.3])
    outcome = preprocess(data, small_tree, PreprocessConfig(availability_threshold=0.5))
    log = outcome.log_frame()

    assert set(log["rule"]) == {"impute_by_kind", "drop_incomplete_rows"}
    assert log.loc[log["rule"] == "drop_incomplete_rows", "id"].tolist() == ["b/2020"]


def test_preprocess_config_validation():
    with pytest.raises(ConfigError):
        PreprocessConfig(availability_threshold=0.0)
    with pytest.raises(ConfigError):
        PreprocessConfig(min_daily_obs=1)


def test_panel_file_round_trip(tmp_path, planted):
    data, tree, _ = planted
    save_panel(data, str(tmp_path / "panel.csv"))
    save_hierarchy(tree, str(tmp_path / "hierarchy.json"))

    tree_back = load_hierarchy(str(tmp_path / "hierarchy.json"))
    back = load_panel(str(tmp_path / "panel.csv"), tree_back, response_column="log_volatility")

    assert tree_back == tree
    assert back == data


def test_load_panel_drops_ignored_and_checks_keys(tmp_path, small_tree):
    tree = HierarchyTree(small_tree.pillars, small_tree.categories, small_tree.variables, ignored=("employees",))
    path = tmp_path / "panel.csv"
    path.write_text("company_id,year,e_num,employees,response\nA,2020,1.5,,0.1\nB,2020,,12,0.2\n")

    data = load_panel(str(path), tree, response_column="response")
    assert data.columns == ("e_num",)
    assert np.isnan(data.values[1, 0])

    (tmp_path / "bad.csv").write_text("year,company_id,e_num\n2020,A,1\n")
    with pytest.raises(IngestError):
        load_panel(str(tmp_path / "bad.csv"), tree)


def test_load_hierarchy_rejects_invalid_tree(tmp_path):
    path = tmp_path / "tree.json"
    path.write_text('{"pillars": [{"id": "E", "categories": []}]}')
    with pytest.raises(TreeError):
        load_hierarchy(str(path))


def test_attach_factors_by_year():
    data = PanelDataset(companies=["a", "b", "a"], years=[2020, 2020, 2021], columns=["x"],
                        values=[[1.0], [2.0], [3.0]])
    factors = pd.DataFrame({"year": [2020, 2021], "mkt": [0.1, 0.2]})

    out = attach_factors(data, factors)
    np.testing.assert_array_equal(out.column("mkt"), [0.1, 0.1, 0.2])
    assert out.exogenous == frozenset({"mkt"})
    assert out.esg_columns == ("x",)

    with pytest.raises(IngestError):
        attach_factors(data, pd.DataFrame({"year": [2020], "mkt": [0.1]}))


def test_split_by_label():
    data = PanelDataset(companies=["a", "b", "c"], years=[2020] * 3, columns=["x"], values=[[1.0], [2.0], [3.0]],
                        labels={"sector": ["tech", "energy", "tech"]})
    slices = split_by_label(data, "sector")
    assert [(s.name, s.rows) for s in slices] == [("energy", (1,)), ("tech", (0, 2))]
