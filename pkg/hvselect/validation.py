# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .errors import (
    ConfigError, InsufficientObservations, KeyMismatchError, PreprocessError, StageError,
)
from .models import HierarchyTree, ModelFit, PanelDataset
from .pipeline import HvsConfig, HvsResult, run_hvs
from .preprocess import PreprocessConfig, PreprocessOutcome, impute_by_kind, preprocess
from .regress import (
    FixedCount, VarianceTarget, drop_constant_columns, fit_lasso_cv, fit_ols, pca_components, stepwise_aic,
)

__all__ = ('Design', 'Observation', 'EvalRecord', 'ValidationConfig', 'temporal_splits', 'company_splits',
           'prepare_test_rows', 'evaluate_design', 'temporal_rolling_eval', 'cross_sectional_loco_eval',
           'mean_response_baseline', 'PairedTest', 'matched_pairs_test', 'BenchmarkRow', 'benchmark_suite',
           'pairwise_tests')
__log__ = logging.getLogger(__name__)

MODEL_LABELS = ("mean", "hvs_step2", "hvs_step3", "stepwise")


class Design(str, Enum):
    TEMPORAL = "temporal"
    CROSS_SECTIONAL = "cross_sectional"


class Observation(NamedTuple):
    company: str
    year: int
    prediction: float
    actual: float
    split: str

    @property
    def key(self) -> Tuple[str, int]:
        return self.company, self.year

    @property
    def squared_error(self) -> float:
        return (self.prediction - self.actual) ** 2


def _mse(observations: Sequence[Observation]) -> float:
    if not observations:
        return np.nan
    return float(np.mean([o.squared_error for o in observations]))


@dataclass(frozen=True, eq=False)
class EvalRecord:
    """Per-observation predictions of one model under one validation design."""

    design: Design
    model_label: str
    in_sample: Tuple[Observation, ...] = ()
    out_of_sample: Tuple[Observation, ...] = ()
    skipped: Tuple[str, ...] = ()

    @property
    def is_mse(self) -> float:
        return _mse(self.in_sample)

    @property
    def oos_mse(self) -> float:
        return _mse(self.out_of_sample)

    def observations(self, sample: str = "oos") -> Tuple[Observation, ...]:
        if sample not in ("oos", "is"):
            raise ConfigError(f"unknown sample: {sample}")
        return self.out_of_sample if sample == "oos" else self.in_sample

    def per_company(self) -> Dict[str, float]:
        """Out-of-sample MSE per company, in company order."""

        grouped: Dict[str, List[Observation]] = {}
        for o in self.out_of_sample:
            grouped.setdefault(o.company, []).append(o)
        return {c: _mse(grouped[c]) for c in sorted(grouped)}

    def detail_frame(self) -> pd.DataFrame:
        rows = [
            {"design": self.design.value, "model": self.model_label, "sample": sample, "split": o.split,
             "company_id": o.company, "year": o.year, "prediction": o.prediction, "actual": o.actual,
             "squared_error": o.squared_error}
            for sample, observations in (("is", self.in_sample), ("oos", self.out_of_sample))
            for o in observations
        ]
        return pd.DataFrame(rows, columns=["design", "model", "sample", "split", "company_id", "year",
                                           "prediction", "actual", "squared_error"])


@dataclass(frozen=True)
class ValidationConfig:
    preprocess: PreprocessConfig = PreprocessConfig()
    hvs: HvsConfig = HvsConfig()
    window_years: int = 5
    models: Tuple[str, ...] = MODEL_LABELS
    workers: int = 1

    def __post_init__(self):
        if self.window_years < 1:
            raise ConfigError(f"window_years must be positive, got {self.window_years}")
        if unknown := set(self.models) - set(MODEL_LABELS):
            raise ConfigError(f"unknown validation models: {', '.join(sorted(unknown))}")


class Split(NamedTuple):
    name: str
    train: np.ndarray
    test: np.ndarray


def temporal_splits(data: PanelDataset, window_years: int) -> List[Split]:
    """One split per target year T whose whole window [T - w, T - 1] is present in the panel."""

    years = np.asarray(data.years)
    distinct = sorted(set(data.years))

    if len(distinct) < window_years + 1:
        raise InsufficientObservations(f"temporal design needs {window_years + 1} distinct years, "
                                       f"got {len(distinct)}")

    present = set(distinct)
    targets = [t for t in distinct if all(t - k in present for k in range(1, window_years + 1))]

    if not targets:
        raise InsufficientObservations(f"no target year has all {window_years} preceding years present")

    if gaps := [t for t in distinct if t - window_years >= distinct[0] and t not in targets]:
        __log__.info(f"VALIDATION | Targets without a full window:: {', '.join(map(str, gaps))}")

    return [
        Split(str(target),
              np.flatnonzero((years >= target - window_years) & (years < target)),
              np.flatnonzero(years == target))
        for target in targets
    ]


def company_splits(data: PanelDataset) -> List[Split]:

    companies = np.asarray(data.companies)
    distinct = sorted(set(data.companies))

    if len(distinct) < 3:
        raise InsufficientObservations(f"leave-one-company-out needs at least 3 companies, got {len(distinct)}")

    return [Split(c, np.flatnonzero(companies != c), np.flatnonzero(companies == c)) for c in distinct]


def _splits(design: Design, data: PanelDataset, window_years: int) -> List[Split]:
    if design == Design.TEMPORAL:
        return temporal_splits(data, window_years)
    return company_splits(data)


def _defined(data: PanelDataset) -> PanelDataset:
    response = data.require_response()
    return data.take_rows(np.flatnonzero(~np.isnan(response)))


def prepare_test_rows(test_raw: PanelDataset, train: PreprocessOutcome, tree: HierarchyTree,
                      cfg: PreprocessConfig) -> PanelDataset:
    """Apply the training window's rules to held-out rows.

    Boolean and Controversy gaps are imputed by kind, the column set is the
    one that survived training, and any remaining gap takes the training mean.
    """

    test = impute_by_kind(_defined(test_raw), tree, cfg).select_columns(train.data.columns)
    values = np.array(test.values, copy=True)
    gaps = np.isnan(values)

    if gaps.any():
        means = train.data.values.mean(axis=0)
        values[gaps] = np.broadcast_to(means, values.shape)[gaps]

    return test.with_values(values)


def _baseline_predictions(design: Design, train_raw: PanelDataset, test: PanelDataset) -> np.ndarray:
    """Window mean per company (temporal) or the training mean (cross-sectional)."""

    train = _defined(train_raw)

    if not train.n_rows:
        raise InsufficientObservations("no training rows with a defined response")

    response = train.require_response()
    overall = float(response.mean())

    if design == Design.CROSS_SECTIONAL:
        return np.full(test.n_rows, overall)

    frame = pd.DataFrame({"company": list(train.companies), "y": response})
    company_means = frame.groupby("company")["y"].mean().to_dict()

    if fallback := sorted(set(test.companies) - set(company_means)):
        __log__.warning(f"BASELINE | Window-wide mean used:: {', '.join(fallback)} absent from the window")

    return np.array([company_means.get(c, overall) for c in test.companies], dtype=float)


def _observations(data: PanelDataset, predictions: np.ndarray, split: str) -> List[Observation]:
    actual = data.require_response()
    return [
        Observation(c, y, float(p), float(a), split)
        for (c, y), p, a in zip(data.keys, predictions, actual)
    ]


class _Trained(NamedTuple):
    outcome: PreprocessOutcome
    hvs: HvsResult
    stepwise: Optional[ModelFit]


def _stepwise_all(data: PanelDataset) -> ModelFit:
    columns = list(data.esg_columns)
    X, columns, _ = drop_constant_columns(data.matrix(columns), columns)
    return stepwise_aic(X, data.require_response(), columns).fit


def _train(raw: PanelDataset, tree: HierarchyTree, cfg: ValidationConfig) -> _Trained:
    outcome = preprocess(raw, tree, cfg.preprocess)
    hvs = run_hvs(outcome.data, tree, cfg.hvs)
    stepwise = _stepwise_all(outcome.data) if "stepwise" in cfg.models else None
    return _Trained(outcome, hvs, stepwise)


def _model_predictions(trained: _Trained, test: PanelDataset) -> Dict[str, np.ndarray]:
    predictions = {
        "hvs_step2": trained.hvs.step2.fit.predict_dataset(test),
        "hvs_step3": trained.hvs.step3.fit.predict_dataset(test),
    }
    if trained.stepwise is not None:
        predictions["stepwise"] = trained.stepwise.predict_dataset(test)
    return predictions


def _run_split(split: Split, design: Design, data: PanelDataset, tree: HierarchyTree,
               cfg: ValidationConfig) -> Optional[Dict[str, List[Observation]]]:

    train_raw = data.take_rows(split.train)
    test_raw = data.take_rows(split.test)

    try:
        trained = _train(train_raw, tree, cfg)
    except (PreprocessError, InsufficientObservations, StageError) as e:
        __log__.info(f"VALIDATION | Skipped {design.value} split {split.name}:: {e}")
        return None

    n_selected = len(trained.hvs.selected)

    if trained.outcome.data.n_rows < 3 * n_selected:
        __log__.info(f"VALIDATION | Skipped {design.value} split {split.name}:: "
                     f"{trained.outcome.data.n_rows} rows for {n_selected} selected variables")
        return None

    test = prepare_test_rows(test_raw, trained.outcome, tree, cfg.preprocess)
    predictions = _model_predictions(trained, test)

    if "mean" in cfg.models:
        predictions["mean"] = _baseline_predictions(design, train_raw, test)

    return {label: _observations(test, predictions[label], split.name) for label in cfg.models}


def _in_sample(data: PanelDataset, tree: HierarchyTree, cfg: ValidationConfig) -> Dict[str, List[Observation]]:
    trained = _train(data, tree, cfg)
    full = trained.outcome.data
    predictions = _model_predictions(trained, full)
    predictions["mean"] = np.full(full.n_rows, float(full.require_response().mean()))
    return {label: _observations(full, predictions[label], "full") for label in cfg.models}


def evaluate_design(design: Design, data: PanelDataset, tree: HierarchyTree,
                    cfg: ValidationConfig = ValidationConfig()) -> Dict[str, EvalRecord]:
    """Evaluate every configured model on the same splits; selection reruns inside each split.

    In-sample records come from models trained on the whole preprocessed panel.
    """

    design = Design(design)
    splits = _splits(design, data, cfg.window_years)

    def run(split: Split):
        return _run_split(split, design, data, tree, cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(run, splits))
    else:
        outcomes = [run(s) for s in splits]

    skipped = tuple(s.name for s, o in zip(splits, outcomes) if o is None)
    in_sample = _in_sample(data, tree, cfg)

    records = {}
    for label in cfg.models:
        oos = [obs for o in outcomes if o is not None for obs in o[label]]
        records[label] = EvalRecord(design, label, tuple(in_sample[label]), tuple(oos), skipped)

    __log__.info(f"VALIDATION | {design.value}:: {len(splits) - len(skipped)} of {len(splits)} splits, "
                 + ", ".join(f"{label} OOS MSE {records[label].oos_mse:.4g}" for label in cfg.models))

    return records


def temporal_rolling_eval(data: PanelDataset, tree: HierarchyTree, cfg: ValidationConfig = ValidationConfig(),
                          window_years: Optional[int] = None, model: str = "hvs_step3") -> EvalRecord:
    """Rolling window of ``window_years`` years predicting the following year."""

    if window_years is not None:
        cfg = ValidationConfig(cfg.preprocess, cfg.hvs, window_years, cfg.models, cfg.workers)

    return evaluate_design(Design.TEMPORAL, data, tree, _with_model(cfg, model))[model]


def cross_sectional_loco_eval(data: PanelDataset, tree: HierarchyTree, cfg: ValidationConfig = ValidationConfig(),
                              model: str = "hvs_step3") -> EvalRecord:
    """Leave one company out, predicting all of its rows."""

    return evaluate_design(Design.CROSS_SECTIONAL, data, tree, _with_model(cfg, model))[model]


def _with_model(cfg: ValidationConfig, model: str) -> ValidationConfig:
    if model not in MODEL_LABELS:
        raise ConfigError(f"unknown validation model: {model}")
    models = cfg.models if model in cfg.models else cfg.models + (model,)
    return ValidationConfig(cfg.preprocess, cfg.hvs, cfg.window_years, models, cfg.workers)


def mean_response_baseline(design: Design, data: PanelDataset, window_years: int = 5) -> EvalRecord:
    """Baseline forecasts over every split of the design, without any preprocessing."""

    design = Design(design)
    out_of_sample: List[Observation] = []

    for split in _splits(design, data, window_years):
        test = _defined(data.take_rows(split.test))
        predictions = _baseline_predictions(design, data.take_rows(split.train), test)
        out_of_sample.extend(_observations(test, predictions, split.name))

    full = _defined(data)
    in_sample = _observations(full, np.full(full.n_rows, float(full.require_response().mean())), "full")

    return EvalRecord(design, "mean", tuple(in_sample), tuple(out_of_sample))


class PairedTest(NamedTuple):
    statistic: float
    p_value: float
    n: int
    mean_difference: float
    method: str
    alternative: str


ALTERNATIVES = {"a_less_b": "less", "a_greater_b": "greater"}


def matched_pairs_test(a: EvalRecord, b: EvalRecord, alternative: str = "a_less_b", method: str = "t",
                       sample: str = "oos") -> PairedTest:
    """One-sided test on the paired squared-error differences ``err_a - err_b``.

    ``method`` is ``t`` (paired t-test) or ``wilcoxon`` (signed-rank). All-zero
    differences give p = 1. The p-value is kept inside (0, 1].
    """

    if alternative not in ALTERNATIVES:
        raise ConfigError(f"unknown alternative: {alternative}")

    if method not in ("t", "wilcoxon"):
        raise ConfigError(f"unknown matched-pairs method: {method}")

    errors_a = {o.key: o.squared_error for o in a.observations(sample)}
    errors_b = {o.key: o.squared_error for o in b.observations(sample)}

    if len(errors_a) != len(a.observations(sample)) or len(errors_b) != len(b.observations(sample)) \
            or set(errors_a) != set(errors_b):
        raise KeyMismatchError(f"{a.model_label} and {b.model_label} do not cover the same observations")

    keys = sorted(errors_a)

    if len(keys) < 2:
        raise InsufficientObservations("matched-pairs test needs at least 2 observations")

    d = np.array([errors_a[k] - errors_b[k] for k in keys])
    mean_d = float(d.mean())
    side = ALTERNATIVES[alternative]

    if not np.any(d):
        return PairedTest(0.0, 1.0, len(keys), 0.0, method, alternative)

    if np.ptp(d) == 0:
        # zero spread: the sign of the constant difference settles the test
        favoured = mean_d < 0 if side == "less" else mean_d > 0
        statistic = -np.inf if mean_d < 0 else np.inf
        p_value = 0.0 if favoured else 1.0
    elif method == "t":
        result = stats.ttest_rel([errors_a[k] for k in keys], [errors_b[k] for k in keys], alternative=side)
        statistic, p_value = float(result.statistic), float(result.pvalue)
    else:
        result = stats.wilcoxon(d, alternative=side)
        statistic, p_value = float(result.statistic), float(result.pvalue)

    p_value = min(max(p_value, np.finfo(float).tiny), 1.0)
    return PairedTest(statistic, p_value, len(keys), mean_d, method, alternative)


@dataclass(frozen=True)
class BenchmarkRow:
    label: str
    n_selected: int
    pct_dev: float
    aic: Optional[float]
    bic: Optional[float]
    is_mse: float
    truncated: bool = False
    selected: Tuple[str, ...] = field(default=(), compare=False)


def _row(label: str, fit: ModelFit, n_selected: int, truncated: bool = False,
         selected: Sequence[str] = ()) -> BenchmarkRow:
    return BenchmarkRow(label, n_selected, fit.pct_dev, fit.aic, fit.bic, fit.mse, truncated, tuple(selected))


def _pca_row(label: str, X: np.ndarray, y: np.ndarray, columns: Sequence[str], mode) -> BenchmarkRow:

    pca = pca_components(X, columns, mode)
    names = [f"pc{i + 1}" for i in range(pca.n_components)]
    fit = fit_ols(pca.scores, y, columns=names, min_norm=pca.n_components + 1 >= len(y))
    return _row(label, fit, pca.n_components, selected=names)


def benchmark_suite(data: PanelDataset, tree: HierarchyTree, hvs: HvsResult,
                    config: HvsConfig = HvsConfig()) -> List[BenchmarkRow]:
    """PCA (80% variance), PCA (HVS count), one-shot stepwise and lasso over every surviving variable, then HVS."""

    y = data.require_response()
    columns = list(data.esg_columns)
    X, columns, _ = drop_constant_columns(data.matrix(columns), columns)

    pca_rank = pca_components(X, columns, FixedCount(0)).rank
    count = len(hvs.selected)

    if count > pca_rank:
        __log__.warning(f"BENCH | PCA component count clipped:: {count} -> rank {pca_rank}")
        count = pca_rank

    stepwise = stepwise_aic(X, y, columns, max_terms=config.max_terms)
    lasso = fit_lasso_cv(X, y, columns, plan=config.plan)

    return [
        _pca_row("PCA1", X, y, columns, VarianceTarget(0.8)),
        _pca_row("PCA2", X, y, columns, FixedCount(count)),
        _row("Stepwise", stepwise.fit, len(stepwise.selected), stepwise.truncated, stepwise.selected),
        _row("Lasso", lasso.fit, len(lasso.selected), selected=lasso.selected),
        _row("HVS", hvs.final_fit, len(hvs.selected), selected=hvs.selected),
    ]


def pairwise_tests(records: Dict[str, EvalRecord], pairs: Sequence[Tuple[str, str]],
                   methods: Sequence[str] = ("t",)) -> List[dict]:
    """Matched-pairs p-values for each ``(a, b)`` pair, in sample and out of sample."""

    rows = []
    for a, b in pairs:
        for method in methods:
            for sample in ("is", "oos"):
                test = matched_pairs_test(records[a], records[b], "a_less_b", method, sample)
                rows.append({"design": records[a].design.value, "a": a, "b": b, "sample": sample,
                             "method": method, "n": test.n, "mean_difference": test.mean_difference,
                             "statistic": test.statistic, "p_value": test.p_value})
    return rows
