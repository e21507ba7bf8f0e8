# -*- coding: utf-8 -*-
from __future__ import annotations

import itertools
import logging
import os
import time
from typing import Dict, List, Optional

import humanize
import pandas as pd
import psutil

from hvselect.errors import HvsException
from hvselect.models import HierarchyTree, PanelDataset
from hvselect.pipeline import (
    HvsResult, ScoreBaseline, augment_with_factors, response_diagnostic, run_hvs, run_segments, score_baselines,
)
from hvselect.preprocess import (
    PreprocessOutcome, ResponseForm, ReturnsSeries, attach_factors, attach_response, load_factors, load_hierarchy,
    load_panel, load_returns, preprocess,
)
from hvselect.validation import MODEL_LABELS, EvalRecord, benchmark_suite, evaluate_design, pairwise_tests
from utils.report import (
    ReportStore, importance_table, pie_data, render_charts, selection_detail, step1_bars, step_comparison,
)
from utils.runconfig import ResponseMode, RunConfig

__log__ = logging.getLogger(__name__)

RESPONSE_FORMS = {
    ResponseMode.LOG_VOLATILITY: ResponseForm.LOG_VOLATILITY,
    ResponseMode.RETURNS: ResponseForm.ANNUAL_RETURN,
}

# the un-logged and logged volatility forms compared by the response diagnostic
DIAGNOSTIC_FORMS = (ResponseForm.VOLATILITY, ResponseForm.LOG_VOLATILITY)


class RunSession:
    """Loads the inputs of one run and writes each report artifact on request.

    Commands call ``load`` first, then whichever ``write_*`` steps they own.
    Every artifact goes through one ``ReportStore`` so all of them carry the
    same config hash and seed.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.store = ReportStore(config.output_dir, config.config_hash(), config.seed)
        self.tree: Optional[HierarchyTree] = None
        self.panel: Optional[PanelDataset] = None
        self.raw: Optional[PanelDataset] = None
        self.returns: Optional[ReturnsSeries] = None
        self.factor_names: List[str] = []
        self.outcome: Optional[PreprocessOutcome] = None
        self.result: Optional[HvsResult] = None
        self.baselines: List[ScoreBaseline] = []
        self.started = time.perf_counter()

    def load(self) -> RunSession:

        cfg = self.config

        self.tree = load_hierarchy(cfg.hierarchy)

        response_column = cfg.response_column if cfg.response_mode == ResponseMode.PRECOMPUTED else None
        panel = load_panel(cfg.panel, self.tree, response_column=response_column, label_columns=cfg.label_columns)

        if response_column is None and cfg.response_column in panel.columns:
            __log__.info(f"RUN | Precomputed response ignored:: {cfg.response_column} "
                         f"(response built from {cfg.returns})")
            panel = panel.drop_columns([cfg.response_column])

        if cfg.factors:
            factors = load_factors(cfg.factors)
            self.factor_names = [c for c in factors.columns if c not in ("company_id", "year")]
            panel = attach_factors(panel, factors)

        if cfg.returns:
            self.returns = load_returns(cfg.returns)

        self.panel = panel

        if cfg.response_mode == ResponseMode.PRECOMPUTED:
            self.raw = panel
        else:
            self.raw = attach_response(panel, self.returns, cfg.preprocess, RESPONSE_FORMS[cfg.response_mode])

        __log__.info(f"RUN | Loaded:: {humanize.intcomma(self.raw.n_rows)} rows, "
                     f"{humanize.intcomma(len(self.raw.esg_columns))} ESG columns, "
                     f"{len(self.tree.category_ids)} categories, response {self.raw.response_name}")

        self.store.write_json("run_config.json", cfg.to_dict())
        return self

    def fit(self) -> HvsResult:

        if self.result is None:
            self.outcome = preprocess(self.raw, self.tree, self.config.preprocess)
            self.result = run_hvs(self.outcome.data, self.tree, self.config.hvs)

        return self.result

    @property
    def data(self) -> PanelDataset:
        return self.outcome.data

    def write_selection(self):

        result = self.fit()

        self.store.write_table("preprocess_log.csv", self.outcome.log_frame())
        self.store.write_json("hvs_result.json", result.to_dict())
        self.store.write_table("selection_detail.csv", selection_detail(result, self.tree))
        self.store.write_table("importance.csv", importance_table(result.importance, self.tree))

        if self.tree.scores:
            self.baselines = score_baselines(self.data, self.tree, self.config.hvs)
            self.store.write_table("score_baselines.csv", pd.DataFrame(
                [{"level": b.level.value, "n_columns": len(b.columns), "adj_r2": b.adj_r2, "pct_dev": b.pct_dev}
                 for b in self.baselines],
                columns=["level", "n_columns", "adj_r2", "pct_dev"],
            ))

        self.emit_plot_data()

    def emit_plot_data(self):

        result = self.fit()

        bars = step1_bars(result, self.baselines)
        comparison = step_comparison(result, self.data)
        pie = pie_data(result.importance, self.tree)

        self.store.write_table("step1_bars.csv", bars)
        self.store.write_table("step_comparison.csv", comparison)
        self.store.write_json("importance_pie.json", pie)

        if self.config.render:
            for name in render_charts(self.store, bars, pie, comparison):
                __log__.debug(f"REPORT | Rendered:: {name}")

    def write_benchmarks(self):

        rows = benchmark_suite(self.data, self.tree, self.fit(), self.config.hvs)

        self.store.write_table("benchmarks.csv", pd.DataFrame(
            [{"model": r.label, "n_selected": r.n_selected, "pct_dev": r.pct_dev, "aic": r.aic, "bic": r.bic,
              "is_mse": r.is_mse, "truncated": r.truncated, "selected": " ".join(r.selected)} for r in rows],
            columns=["model", "n_selected", "pct_dev", "aic", "bic", "is_mse", "truncated", "selected"],
        ))

    def write_validation(self):

        cfg = self.config
        records: Dict[str, Dict[str, EvalRecord]] = {}

        for design in cfg.validation:
            records[design.value] = evaluate_design(design, self.raw, self.tree, cfg.validation_config)

        mse_rows, test_rows, details = [], [], []
        methods = ("t", "wilcoxon") if cfg.wilcoxon else ("t",)
        pairs = list(itertools.permutations(MODEL_LABELS, 2))

        for design, by_model in records.items():
            for label, record in by_model.items():
                mse_rows.append({"design": design, "model": label, "is_mse": record.is_mse,
                                 "oos_mse": record.oos_mse, "n_is": len(record.in_sample),
                                 "n_oos": len(record.out_of_sample), "skipped_splits": " ".join(record.skipped)})
                details.append(record.detail_frame())
            test_rows.extend(pairwise_tests(by_model, pairs, methods))

        self.store.write_table("validation_mse.csv", pd.DataFrame(mse_rows, columns=[
            "design", "model", "is_mse", "oos_mse", "n_is", "n_oos", "skipped_splits"]))
        self.store.write_table("validation_tests.csv", pd.DataFrame(test_rows, columns=[
            "design", "a", "b", "sample", "method", "n", "mean_difference", "statistic", "p_value"]))
        self.store.write_table("validation_detail.csv", pd.concat(details, ignore_index=True))

        return records

    def write_diagnostics(self):
        """Step 2 residual normality and the Box-Cox scan for each available response form."""

        cfg = self.config

        if self.returns is not None:
            forms = [(f.value, attach_response(self.panel, self.returns, cfg.preprocess, f)) for f in DIAGNOSTIC_FORMS]
        else:
            forms = [(self.raw.response_name, self.raw)]

        rows = []
        for name, raw in forms:
            try:
                data = preprocess(raw, self.tree, cfg.preprocess).data
                d = response_diagnostic(name, data, self.tree, cfg.hvs)
            except HvsException as e:
                __log__.warning(f"RUN | Response diagnostic skipped:: {name} ({e})")
                continue
            rows.append({"form": d.form, "n_rows": d.n_rows, "n_selected": d.n_selected, "r2": d.r2,
                         "jb_statistic": d.jb_statistic, "jb_p_value": d.jb_p_value,
                         "box_cox_lambda": d.box_cox_lambda})

        self.store.write_table("response_diagnostics.csv", pd.DataFrame(rows, columns=[
            "form", "n_rows", "n_selected", "r2", "jb_statistic", "jb_p_value", "box_cox_lambda"]))

    def write_augmentation(self):

        result = augment_with_factors(self.fit().selected, self.factor_names, self.data, self.config.hvs)
        self.store.write_table("augmentation.csv", pd.DataFrame(
            result.rows(), columns=["model", "n_variables", "pct_dev", "bic", "penalty"]))

    def write_segments(self):

        outcomes = run_segments(self.raw, self.tree, self.config.segment_column, self.config.preprocess,
                                self.config.hvs)
        self.store.write_table("segments.csv", pd.DataFrame(
            [{"segment": o.segment, "n_rows": o.n_rows, "n_columns": o.n_columns, "n_selected": o.n_selected,
              "pct_dev": o.pct_dev, "error": o.error or ""} for o in outcomes],
            columns=["segment", "n_rows", "n_columns", "n_selected", "pct_dev", "error"],
        ))

    def summary(self):

        elapsed = time.perf_counter() - self.started
        memory = psutil.Process(os.getpid()).memory_info().rss

        __log__.info(f"RUN | Finished:: {len(self.store.written)} files in {self.store.output_dir}, "
                     f"took {humanize.precisedelta(elapsed, minimum_unit='milliseconds')}, "
                     f"memory {humanize.naturalsize(memory)}")
