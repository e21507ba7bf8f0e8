# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConfigError, HvsException, ImportanceError, InsufficientObservations, PreprocessError, StageError,
)
from .models import (
    CategoryImportance, HierarchyTree, ImportanceReport, ModelFit, PanelDataset, ScoreLevel, SelectionResult,
    Stage,
)
from .preprocess import PreprocessConfig, box_cox_scan, preprocess, split_by_label
from .regress import (
    CvPlan, RidgeCvResult, drop_constant_columns, fit_ols, fit_ridge_cv, jarque_bera, stepwise_aic,
)

__all__ = ('HvsConfig', 'hvs_step1', 'step1_union', 'hvs_step2', 'category_importance', 'Step3Outcome', 'hvs_step3',
           'HvsResult', 'run_hvs', 'AugmentationResult', 'augment_with_factors', 'ScoreBaseline', 'score_baselines',
           'SegmentOutcome', 'run_segments', 'ResponseDiagnostic', 'response_diagnostic')
__log__ = logging.getLogger(__name__)


@dataclass(frozen=True)
class HvsConfig:
    plan: CvPlan = CvPlan()
    lambda_grid: Optional[Tuple[float, ...]] = None
    max_terms: Optional[int] = None
    workers: int = 1
    effective_df: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.max_terms is not None and self.max_terms < 1:
            raise ConfigError(f"max_terms must be positive, got {self.max_terms}")

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "lambda_grid": None if self.lambda_grid is None else [float(v) for v in self.lambda_grid],
            "max_terms": self.max_terms,
            "effective_df": self.effective_df,
        }


def _require_ready(data: PanelDataset):
    data.require_response()
    if data.has_missing():
        raise PreprocessError("HVS expects preprocessed data without missing cells")


def _intercept_only(data: PanelDataset) -> ModelFit:
    return fit_ols(np.empty((data.n_rows, 0)), data.require_response(), columns=[])


def _select(data: PanelDataset, candidates: Sequence[str], config: HvsConfig, stage: Stage,
            category_id: Optional[str] = None) -> SelectionResult:

    X, columns, _ = drop_constant_columns(data.matrix(candidates), candidates)

    if not columns:
        return SelectionResult.empty(stage, category_id, fit=_intercept_only(data))

    return stepwise_aic(X, data.require_response(), columns, max_terms=config.max_terms,
                        stage=stage, category_id=category_id)


def hvs_step1(data: PanelDataset, tree: HierarchyTree, config: HvsConfig = HvsConfig()) -> Dict[str, SelectionResult]:
    """Stepwise AIC inside every category, restricted to the category's surviving variables."""

    _require_ready(data)
    available = set(data.esg_columns)

    def run(category_id: str) -> SelectionResult:
        members = [v for v in tree.members(category_id) if v in available]
        try:
            return _select(data, members, config, Stage.STEP1, category_id)
        except HvsException as e:
            raise StageError(Stage.STEP1.value, e, category_id) from e

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, tree.category_ids))
    else:
        results = [run(c) for c in tree.category_ids]

    return dict(zip(tree.category_ids, results))


def step1_union(step1: Dict[str, SelectionResult]) -> List[str]:
    """Step 1 selections concatenated in category order, then trace order."""

    union: List[str] = []
    for result in step1.values():
        union.extend(v for v in result.selected if v not in union)
    return union


def hvs_step2(step1: Dict[str, SelectionResult], data: PanelDataset, tree: HierarchyTree,
              config: HvsConfig = HvsConfig()) -> SelectionResult:
    """Stepwise AIC across categories over the union of Step 1 selections."""

    candidates = step1_union(step1)

    if not candidates:
        __log__.warning("HVS | Step 1 selected nothing:: Step 2 and Step 3 fall back to the intercept-only model")
        return SelectionResult.empty(Stage.STEP2, fit=_intercept_only(data))

    try:
        return _select(data, candidates, config, Stage.STEP2)
    except HvsException as e:
        raise StageError(Stage.STEP2.value, e) from e


def category_importance(fit: ModelFit, tree: HierarchyTree) -> ImportanceReport:
    """Sum of absolute standardized coefficients per category, and its share of the total."""

    if not fit.standardized:
        raise ImportanceError("category importance needs coefficients on standardized predictors")

    scores: Dict[str, float] = {}
    members: Dict[str, List[str]] = {}

    for variable, beta in fit.coefficients.items():
        if not tree.has_variable(variable) or beta == 0:
            continue
        category = tree.category_of(variable)
        scores[category] = scores.get(category, 0.0) + abs(beta)
        members.setdefault(category, []).append(variable)

    total = sum(scores.values())

    if not total > 0:
        raise ImportanceError("all coefficients are zero; importance percentages are undefined")

    ordered = [c for c in tree.category_ids if c in scores]
    per_category = {c: CategoryImportance(scores[c], 100.0 * scores[c] / total) for c in ordered}

    pillar_scores: Dict[str, float] = {}
    for c in ordered:
        pillar = tree.get_category(c).pillar_id
        pillar_scores[pillar] = pillar_scores.get(pillar, 0.0) + scores[c]

    per_pillar = {p: CategoryImportance(s, 100.0 * s / total) for p, s in pillar_scores.items()}

    return ImportanceReport(per_category=per_category,
                            member_indices={c: tuple(members[c]) for c in ordered},
                            per_pillar=per_pillar)


class Step3Outcome(NamedTuple):
    selection: SelectionResult
    importance: ImportanceReport
    ridge: Optional[RidgeCvResult]


def hvs_step3(step2: SelectionResult, data: PanelDataset, tree: HierarchyTree,
              config: HvsConfig = HvsConfig()) -> Step3Outcome:
    """Cross-validated ridge on exactly the Step 2 selection, plus the importance report."""

    if not step2.selected:
        return Step3Outcome(SelectionResult.empty(Stage.STEP3, fit=step2.fit), ImportanceReport.empty(), None)

    try:
        ridge = fit_ridge_cv(data.matrix(step2.selected), data.require_response(), step2.selected,
                             lambda_grid=config.lambda_grid, plan=config.plan, effective_df=config.effective_df)
        importance = category_importance(ridge.fit, tree)
    except HvsException as e:
        raise StageError(Stage.STEP3.value, e) from e

    return Step3Outcome(SelectionResult(stage=Stage.STEP3, selected=step2.selected, fit=ridge.fit),
                        importance, ridge)


@dataclass(frozen=True, eq=False)
class HvsResult:
    step1: Dict[str, SelectionResult]
    step2: SelectionResult
    step3: SelectionResult
    importance: ImportanceReport
    ridge: Optional[RidgeCvResult] = None

    @property
    def selected(self) -> Tuple[str, ...]:
        return self.step3.selected

    @property
    def lambda_star(self) -> Optional[float]:
        return None if self.ridge is None else self.ridge.lambda_star

    @property
    def final_fit(self) -> ModelFit:
        return self.step3.fit

    def to_dict(self) -> dict:
        return {
            "step1": {c: r.to_dict() for c, r in self.step1.items()},
            "step2": self.step2.to_dict(),
            "step3": self.step3.to_dict(),
            "ridge": None if self.ridge is None else self.ridge.to_dict(),
            "importance": self.importance.to_dict(),
        }


def run_hvs(data: PanelDataset, tree: HierarchyTree, config: HvsConfig = HvsConfig()) -> HvsResult:
    """Steps 1 to 3 on preprocessed data. Deterministic given the CV seed."""

    _require_ready(data)

    step1 = hvs_step1(data, tree, config)
    step2 = hvs_step2(step1, data, tree, config)
    step3 = hvs_step3(step2, data, tree, config)

    __log__.info(f"HVS | Selection:: {len(step1_union(step1))} after Step 1, {len(step2.selected)} after Step 2"
                 + (f", lambda {step3.ridge.lambda_star:.6g}" if step3.ridge else ""))

    return HvsResult(step1=step1, step2=step2, step3=step3.selection, importance=step3.importance,
                     ridge=step3.ridge)


@dataclass(frozen=True, eq=False)
class AugmentationResult:
    factors_only: ModelFit
    esg_only: ModelFit
    combined: ModelFit

    def rows(self) -> List[dict]:
        return [
            {"model": name, "n_variables": len(fit.coefficients), "pct_dev": fit.pct_dev,
             "bic": fit.bic, "penalty": fit.penalty}
            for name, fit in (("factors", self.factors_only), ("esg", self.esg_only), ("combined", self.combined))
        ]


def augment_with_factors(selected: Sequence[str], factors: Sequence[str], data: PanelDataset,
                         config: HvsConfig = HvsConfig()) -> AugmentationResult:
    """Ridge fits on the factors alone, the selected ESG variables alone and both together."""

    selected, factors = list(selected), list(factors)

    if not factors:
        raise ConfigError("augmentation needs at least one factor column")

    if missing := [f for f in factors if f not in data.exogenous]:
        raise PreprocessError(f"factor columns must be exogenous panel columns: {', '.join(missing)}")

    if np.isnan(data.matrix(factors)).any():
        raise PreprocessError("factor columns must be fully observed")

    y = data.require_response()

    def ridge(columns: List[str]) -> ModelFit:
        return fit_ridge_cv(data.matrix(columns), y, columns, lambda_grid=config.lambda_grid,
                            plan=config.plan, effective_df=config.effective_df).fit

    factors_only = ridge(factors)
    esg_only = ridge(selected)
    combined = ridge(factors + selected) if selected else factors_only

    return AugmentationResult(factors_only=factors_only, esg_only=esg_only, combined=combined)


@dataclass(frozen=True)
class ScoreBaseline:
    level: ScoreLevel
    columns: Tuple[str, ...]
    adj_r2: float
    pct_dev: float


def score_baselines(data: PanelDataset, tree: HierarchyTree, config: HvsConfig = HvsConfig()) -> List[ScoreBaseline]:
    """Regress the response on each level of aggregated scores: OLS adjusted R2 and ridge %dev."""

    y = data.require_response()
    baselines = []

    for level in ScoreLevel:

        ids = [s.id for s in tree.scores if s.level == level and s.id in data.columns]
        X, ids, _ = drop_constant_columns(data.matrix(ids), ids)

        if not ids:
            continue

        try:
            ols = fit_ols(X, y, columns=ids)
            ridge = fit_ridge_cv(X, y, ids, lambda_grid=config.lambda_grid, plan=config.plan)
        except InsufficientObservations as e:
            __log__.warning(f"HVS | Score baseline skipped:: {level.value} ({e})")
            continue

        baselines.append(ScoreBaseline(level, tuple(ids), ols.adj_r2, ridge.fit.pct_dev))

    return baselines


@dataclass(frozen=True)
class SegmentOutcome:
    segment: str
    n_rows: int
    n_columns: int
    n_selected: int
    pct_dev: float
    error: Optional[str] = None


def _segment(name: str, raw: PanelDataset, tree: HierarchyTree, pre_cfg: PreprocessConfig,
             config: HvsConfig) -> SegmentOutcome:

    try:
        outcome = preprocess(raw, tree, pre_cfg)
        result = run_hvs(outcome.data, tree, config)
    except HvsException as e:
        __log__.warning(f"HVS | Segment failed:: {name} ({e})")
        return SegmentOutcome(name, raw.n_rows, 0, 0, np.nan, error=f"{type(e).__name__}: {e}")

    return SegmentOutcome(name, outcome.data.n_rows, len(outcome.data.esg_columns), len(result.selected),
                          result.final_fit.pct_dev)


def run_segments(raw: PanelDataset, tree: HierarchyTree, label: str, pre_cfg: PreprocessConfig = PreprocessConfig(),
                 config: HvsConfig = HvsConfig()) -> List[SegmentOutcome]:
    """Preprocess and run HVS per value of a label column, then once over all rows."""

    outcomes = [
        _segment(s.name, raw.take_rows(list(s.rows)), tree, pre_cfg, config)
        for s in split_by_label(raw, label)
    ]
    outcomes.append(_segment("overall", raw, tree, pre_cfg, config))
    return outcomes


@dataclass(frozen=True)
class ResponseDiagnostic:
    form: str
    n_rows: int
    n_selected: int
    r2: float
    jb_statistic: Optional[float]
    jb_p_value: Optional[float]
    box_cox_lambda: Optional[float]


def response_diagnostic(form: str, data: PanelDataset, tree: HierarchyTree,
                        config: HvsConfig = HvsConfig()) -> ResponseDiagnostic:
    """Fit Steps 1 and 2 for one response form and test the residuals for normality."""

    step1 = hvs_step1(data, tree, config)
    step2 = hvs_step2(step1, data, tree, config)
    y = data.require_response()

    try:
        jb = jarque_bera(step2.fit.residuals)
    except HvsException:
        jb = None

    box_cox = box_cox_scan(y).lambda_hat if np.all(y > 0) and np.ptp(y) > 0 else None

    return ResponseDiagnostic(form=form, n_rows=data.n_rows, n_selected=len(step2.selected), r2=step2.fit.r2,
                              jb_statistic=None if jb is None else jb.statistic,
                              jb_p_value=None if jb is None else jb.p_value, box_cox_lambda=box_cox)
