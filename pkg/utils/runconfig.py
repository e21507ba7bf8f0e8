# -*- coding: utf-8 -*-
from __future__ import annotations

import argparse
import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import psutil

from hvselect.errors import ConfigError
from hvselect.pipeline import HvsConfig
from hvselect.preprocess import PreprocessConfig
from hvselect.regress import CvPlan
from hvselect.validation import Design, ValidationConfig
from utils.others import CommandArgparse, optional_int, sort_dict_recursively


# output location and execution resources never change results
UNHASHED_FIELDS = ("output_dir", "threads", "render")


class ResponseMode(str, Enum):
    PRECOMPUTED = "precomputed"
    LOG_VOLATILITY = "log_volatility"
    RETURNS = "returns"


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on. Frozen once CLI flags are merged over the loaded config."""

    panel: str
    hierarchy: str
    returns: Optional[str] = None
    factors: Optional[str] = None
    response_mode: ResponseMode = ResponseMode.PRECOMPUTED
    response_column: str = "response"
    label_columns: Tuple[str, ...] = ()
    segment_column: Optional[str] = None
    preprocess: PreprocessConfig = PreprocessConfig()
    cv: CvPlan = CvPlan()
    seed: int = 0
    max_terms: Optional[int] = None
    benchmarks: bool = True
    diagnostics: bool = True
    validation: Tuple[Design, ...] = ()
    window_years: int = 5
    wilcoxon: bool = False
    output_dir: str = "./hvs_output"
    threads: int = 1
    render: bool = False

    def __post_init__(self):

        object.__setattr__(self, "response_mode", ResponseMode(self.response_mode))
        object.__setattr__(self, "validation", tuple(Design(d) for d in self.validation))

        if self.response_mode != ResponseMode.PRECOMPUTED and not self.returns:
            raise ConfigError(f"response mode {self.response_mode.value} needs a returns file")

        if self.response_mode == ResponseMode.PRECOMPUTED and not self.response_column:
            raise ConfigError("precomputed response mode needs a response column")

        if self.segment_column and self.segment_column not in self.label_columns:
            object.__setattr__(self, "label_columns", self.label_columns + (self.segment_column,))

        if self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")

    @property
    def hvs(self) -> HvsConfig:
        return HvsConfig(plan=self.cv, max_terms=self.max_terms, workers=self.threads)

    @property
    def validation_config(self) -> ValidationConfig:
        # splits run in parallel, selection inside each split stays serial
        return ValidationConfig(preprocess=self.preprocess, hvs=replace(self.hvs, workers=1),
                                window_years=self.window_years, workers=self.threads)

    def to_dict(self) -> dict:
        return {
            "panel": self.panel,
            "hierarchy": self.hierarchy,
            "returns": self.returns,
            "factors": self.factors,
            "response_mode": self.response_mode.value,
            "response_column": self.response_column,
            "label_columns": list(self.label_columns),
            "segment_column": self.segment_column,
            "preprocess": self.preprocess.to_dict(),
            "cv": self.cv.to_dict(),
            "seed": self.seed,
            "max_terms": self.max_terms,
            "benchmarks": self.benchmarks,
            "diagnostics": self.diagnostics,
            "validation": [d.value for d in self.validation],
            "window_years": self.window_years,
            "wilcoxon": self.wilcoxon,
            "output_dir": self.output_dir,
            "threads": self.threads,
            "render": self.render,
        }

    def config_hash(self) -> str:
        data = {k: v for k, v in self.to_dict().items() if k not in UNHASHED_FIELDS}
        canonical = json.dumps(sort_dict_recursively(data), separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_threads(value: int) -> int:
    return value if value > 0 else (psutil.cpu_count(logical=True) or 1)


def add_run_arguments(parser: CommandArgparse, config: dict):
    """Flags shared by run, validate and bench. Defaults come from the loaded config."""

    parser.add_argument("--panel", required=True)
    parser.add_argument("--hierarchy", required=True)
    parser.add_argument("--returns")
    parser.add_argument("--factors")
    parser.add_argument("--response-mode", choices=[m.value for m in ResponseMode], default=None)
    parser.add_argument("--response-column", default="response")
    parser.add_argument("--label-column", action="append", default=[], dest="label_columns")
    parser.add_argument("--segment-column")
    parser.add_argument("--availability-threshold", type=float, default=config["AVAILABILITY_THRESHOLD"])
    parser.add_argument("--min-daily-obs", type=int, default=config["MIN_DAILY_OBS"])
    parser.add_argument("--cv-folds", type=int, default=config["CV_FOLDS"])
    parser.add_argument("--seed", type=int, default=config["SEED"])
    parser.add_argument("--max-terms", type=optional_int, default=None)
    parser.add_argument("--window-years", type=int, default=config["WINDOW_YEARS"])
    parser.add_argument("--wilcoxon", action="store_true")
    parser.add_argument("--output-dir", default=config["OUTPUT_DIR"])
    parser.add_argument("--threads", type=int, default=config["THREADS"])
    parser.add_argument("--render", action="store_true", default=config["RENDER_CHARTS"])


def run_config_from_args(args: argparse.Namespace, benchmarks: bool = True, diagnostics: bool = True,
                         validation: Tuple[str, ...] = ()) -> RunConfig:

    if args.response_mode:
        mode = ResponseMode(args.response_mode)
    else:
        mode = ResponseMode.LOG_VOLATILITY if args.returns else ResponseMode.PRECOMPUTED

    try:
        return RunConfig(
            panel=args.panel,
            hierarchy=args.hierarchy,
            returns=args.returns,
            factors=args.factors,
            response_mode=mode,
            response_column=args.response_column,
            label_columns=tuple(args.label_columns),
            segment_column=args.segment_column,
            preprocess=PreprocessConfig(availability_threshold=args.availability_threshold,
                                        min_daily_obs=args.min_daily_obs),
            cv=CvPlan(n_folds=args.cv_folds, seed=args.seed),
            seed=args.seed,
            max_terms=args.max_terms,
            benchmarks=benchmarks,
            diagnostics=diagnostics,
            validation=tuple(validation),
            window_years=args.window_years,
            wilcoxon=args.wilcoxon,
            output_dir=args.output_dir,
            threads=default_threads(args.threads),
            render=args.render,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
