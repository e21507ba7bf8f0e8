# -*- coding: utf-8 -*-
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ConfigError, DegenerateDataError, IngestError, PreprocessError, TreeError
from .models import HierarchyTree, PanelDataset, VariableKind, validate_tree

__all__ = ('PreprocessConfig', 'ResponseForm', 'ReturnsSeries', 'compute_volatility', 'compute_log_volatility',
           'compute_annual_return', 'attach_response', 'BoxCoxScan', 'box_cox_scan', 'impute_by_kind',
           'filter_availability', 'drop_incomplete_rows', 'PreprocessOutcome', 'preprocess', 'load_hierarchy',
           'save_hierarchy', 'panel_from_frame', 'load_panel', 'save_panel', 'load_returns', 'save_returns',
           'load_factors', 'attach_factors', 'split_by_label')
__log__ = logging.getLogger(__name__)

KEY_COLUMNS = ("company_id", "year")
DEFAULT_BOX_COX_GRID = tuple(round(i / 10, 1) for i in range(-20, 21))


@dataclass(frozen=True)
class PreprocessConfig:
    availability_threshold: float = 0.8
    min_daily_obs: int = 60
    boolean_impute: float = 0.0
    controversy_impute: float = 0.0

    def __post_init__(self):
        if not 0 < self.availability_threshold <= 1:
            raise ConfigError(f"availability_threshold must be in (0, 1], got {self.availability_threshold}")
        if int(self.min_daily_obs) < 2:
            raise ConfigError(f"min_daily_obs must be at least 2, got {self.min_daily_obs}")

    def to_dict(self) -> dict:
        return {
            "availability_threshold": self.availability_threshold,
            "min_daily_obs": self.min_daily_obs,
            "boolean_impute": self.boolean_impute,
            "controversy_impute": self.controversy_impute,
        }


class ResponseForm(str, Enum):
    LOG_VOLATILITY = "log_volatility"
    VOLATILITY = "volatility"
    ANNUAL_RETURN = "annual_return"


@dataclass(frozen=True, eq=False)
class ReturnsSeries:
    """Daily simple returns, one row per (company_id, date)."""

    frame: pd.DataFrame

    def __post_init__(self):

        missing = {"company_id", "date", "daily_return"} - set(self.frame.columns)
        if missing:
            raise IngestError(f"returns are missing columns: {', '.join(sorted(missing))}")

        frame = self.frame[["company_id", "date", "daily_return"]].copy()
        frame["company_id"] = frame["company_id"].astype(str)

        try:
            frame["date"] = pd.to_datetime(frame["date"])
            frame["daily_return"] = pd.to_numeric(frame["daily_return"]).astype(float)
        except (ValueError, TypeError) as e:
            raise IngestError(f"unreadable returns: {e}") from e

        if frame.duplicated(["company_id", "date"]).any():
            raise IngestError("duplicate (company_id, date) rows in returns")

        if not np.isfinite(frame["daily_return"].to_numpy()).all():
            raise IngestError("returns must be finite")

        object.__setattr__(self, "frame", frame.reset_index(drop=True))

    @classmethod
    def from_rows(cls, rows: Iterable[Tuple[str, str, float]]) -> ReturnsSeries:
        return cls(pd.DataFrame(list(rows), columns=["company_id", "date", "daily_return"]))

    @cached_property
    def _by_company_year(self) -> Dict[Tuple[str, int], np.ndarray]:
        years = self.frame["date"].dt.year
        return {
            (str(company), int(year)): group["daily_return"].to_numpy()
            for (company, year), group in self.frame.groupby([self.frame["company_id"], years], sort=True)
        }

    def year_returns(self, company: str, year: int) -> np.ndarray:
        return self._by_company_year.get((str(company), int(year)), np.zeros(0))


def _year_sample(returns: ReturnsSeries, company: str, year: int, cfg: PreprocessConfig) -> Optional[np.ndarray]:
    sample = returns.year_returns(company, year)
    if sample.size < max(cfg.min_daily_obs, 2):
        return None
    return sample


def compute_volatility(returns: ReturnsSeries, company: str, year: int, cfg: PreprocessConfig) -> Optional[float]:
    """Sample standard deviation (divisor N-1) of one company-year's daily returns, or None."""

    if (sample := _year_sample(returns, company, year, cfg)) is None:
        return None
    sd = float(np.std(sample, ddof=1))
    return sd if sd > 0 else None


def compute_log_volatility(returns: ReturnsSeries, company: str, year: int, cfg: PreprocessConfig) -> Optional[float]:
    """Natural log of the company-year volatility; None when fewer than ``min_daily_obs`` rows or zero spread."""

    sd = compute_volatility(returns, company, year, cfg)
    return None if sd is None else float(np.log(sd))


def compute_annual_return(returns: ReturnsSeries, company: str, year: int, cfg: PreprocessConfig) -> Optional[float]:
    """Compounded simple return over the year's daily rows."""

    if (sample := _year_sample(returns, company, year, cfg)) is None:
        return None
    return float(np.prod(1.0 + sample) - 1.0)


RESPONSE_FUNCTIONS = {
    ResponseForm.LOG_VOLATILITY: compute_log_volatility,
    ResponseForm.VOLATILITY: compute_volatility,
    ResponseForm.ANNUAL_RETURN: compute_annual_return,
}


def attach_response(data: PanelDataset, returns: ReturnsSeries, cfg: PreprocessConfig,
                    form: ResponseForm = ResponseForm.LOG_VOLATILITY) -> PanelDataset:
    """Compute the response for every panel row from daily returns; undefined values become NaN."""

    form = ResponseForm(form)
    func = RESPONSE_FUNCTIONS[form]
    values = [func(returns, c, y, cfg) for c, y in data.keys]
    undefined = sum(v is None for v in values)

    if undefined:
        __log__.info(f"PREPROCESS | Undefined {form.value}:: {undefined} of {data.n_rows} company-years")

    return data.with_response([np.nan if v is None else v for v in values], name=form.value)


class BoxCoxScan(NamedTuple):
    lambda_hat: float
    grid: Tuple[float, ...]
    loglik: Tuple[float, ...]


def box_cox_scan(y, lambda_grid: Optional[Sequence[float]] = None) -> BoxCoxScan:
    """Profile log-likelihood of the Box-Cox transform over a grid of lambdas.

    The maximizer is returned; equal maxima resolve to the grid value nearest 0.
    """

    y = np.asarray(y, dtype=float).reshape(-1)
    grid = np.asarray(DEFAULT_BOX_COX_GRID if lambda_grid is None else lambda_grid, dtype=float).reshape(-1)

    if not grid.size:
        raise ConfigError("Box-Cox grid must not be empty")

    if not y.size or np.any(y <= 0) or not np.isfinite(y).all():
        raise PreprocessError("Box-Cox requires a finite, strictly positive response")

    if np.ptp(y) == 0:
        raise DegenerateDataError("Box-Cox is undefined for a response with zero spread")

    loglik = np.array([stats.boxcox_llf(lmb, y) for lmb in grid], dtype=float)
    best = np.flatnonzero(loglik == np.nanmax(loglik))
    lambda_hat = float(grid[best[np.argmin(np.abs(grid[best]))]])

    return BoxCoxScan(lambda_hat, tuple(float(g) for g in grid), tuple(float(v) for v in loglik))


def impute_by_kind(data: PanelDataset, tree: HierarchyTree, cfg: PreprocessConfig) -> PanelDataset:
    """Fill missing Boolean and Controversy cells with the configured constants; Numeric cells stay as they are."""

    fill = {VariableKind.BOOLEAN: cfg.boolean_impute, VariableKind.CONTROVERSY: cfg.controversy_impute}
    values = np.array(data.values, copy=True)

    for j, column in enumerate(data.columns):

        if column in data.exogenous:
            continue

        if not tree.has_variable(column):
            raise PreprocessError(f"column is neither in the hierarchy nor exogenous: {column}")

        kind = tree.kind_of(column)

        if kind in fill:
            gaps = np.isnan(values[:, j])
            values[gaps, j] = fill[kind]

    return data.with_values(values)


def filter_availability(data: PanelDataset, tree: HierarchyTree,
                        cfg: PreprocessConfig) -> Tuple[PanelDataset, List[str]]:
    """Drop Numeric columns whose non-missing share is below the threshold (the threshold itself is kept)."""

    n = data.n_rows
    dropped = []

    for j, column in enumerate(data.columns):

        if column in data.exogenous or tree.kind_of(column) != VariableKind.NUMERIC:
            continue

        available = int(np.count_nonzero(~np.isnan(data.values[:, j])))

        if available + 1e-9 < cfg.availability_threshold * n:
            dropped.append(column)
            __log__.debug(f"PREPROCESS | Dropped column:: {column} "
                          f"(availability {available / max(n, 1):.2f} < {cfg.availability_threshold:.2f})")

    return data.drop_columns(dropped), dropped


def drop_incomplete_rows(data: PanelDataset) -> Tuple[PanelDataset, List[Tuple[str, int]]]:
    """Remove every row with a missing cell or an undefined response."""

    incomplete = np.isnan(data.values).any(axis=1)

    if data.response is not None:
        incomplete |= np.isnan(data.response)

    if incomplete.all():
        raise PreprocessError(f"no complete rows remain out of {data.n_rows}")

    dropped = [k for k, flag in zip(data.keys, incomplete) if flag]
    return data.take_rows(np.flatnonzero(~incomplete)), dropped


@dataclass(frozen=True, eq=False)
class PreprocessOutcome:
    data: PanelDataset
    imputed: Dict[str, int]
    dropped_columns: Tuple[str, ...]
    dropped_rows: Tuple[Tuple[str, int], ...]
    threshold: float = 0.8

    def log_frame(self) -> pd.DataFrame:
        """One row per imputed column, dropped column and dropped row, with the rule that applied."""

        rows = [
            {"kind": "column", "id": column, "rule": "impute_by_kind", "detail": f"{count} cells filled"}
            for column, count in self.imputed.items()
        ]
        rows.extend(
            {"kind": "column", "id": column, "rule": "filter_availability",
             "detail": f"availability below {self.threshold}"}
            for column in self.dropped_columns
        )
        rows.extend(
            {"kind": "row", "id": f"{company}/{year}", "rule": "drop_incomplete_rows",
             "detail": "missing cell or undefined response"}
            for company, year in self.dropped_rows
        )
        return pd.DataFrame(rows, columns=["kind", "id", "rule", "detail"])


def preprocess(data: PanelDataset, tree: HierarchyTree, cfg: PreprocessConfig = PreprocessConfig()) -> PreprocessOutcome:
    """Impute, then filter by availability, then drop incomplete rows. The order is fixed."""

    before = np.isnan(data.values).sum(axis=0)
    imputed = impute_by_kind(data, tree, cfg)
    after = np.isnan(imputed.values).sum(axis=0)

    filtered, dropped_columns = filter_availability(imputed, tree, cfg)
    complete, dropped_rows = drop_incomplete_rows(filtered)

    __log__.info(f"PREPROCESS | {data.n_rows} rows x {len(data.columns)} columns -> "
                 f"{complete.n_rows} rows x {len(complete.columns)} columns:: "
                 f"{len(dropped_columns)} columns and {len(dropped_rows)} rows dropped")

    return PreprocessOutcome(
        data=complete,
        imputed={c: int(b - a) for c, b, a in zip(data.columns, before, after) if b > a},
        dropped_columns=tuple(dropped_columns),
        dropped_rows=tuple(dropped_rows),
        threshold=cfg.availability_threshold,
    )


def load_hierarchy(path: str) -> HierarchyTree:

    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise TreeError(f"unreadable hierarchy file {path}: {e}") from e

    tree = HierarchyTree.from_dict(data)

    if violations := validate_tree(tree):
        raise TreeError("; ".join(violations))

    return tree


def save_hierarchy(tree: HierarchyTree, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(tree.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def _read_table(path: str, sep: str, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, sep=sep, **kwargs)
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise IngestError(f"unreadable file {path}: {e}") from e


def panel_from_frame(frame: pd.DataFrame, tree: HierarchyTree, response_column: Optional[str] = None,
                     label_columns: Sequence[str] = ()) -> PanelDataset:
    """Build a panel from a frame whose first two columns are company_id and year."""

    if tuple(frame.columns[:2]) != KEY_COLUMNS:
        raise IngestError(f"panel must start with columns {KEY_COLUMNS}, got {tuple(frame.columns[:2])}")

    ignored = set(tree.ignored)
    label_columns = [c for c in label_columns if c in frame.columns]
    reserved = set(KEY_COLUMNS) | set(label_columns) | ({response_column} if response_column else set())

    if response_column and response_column not in frame.columns:
        raise IngestError(f"response column not found in panel: {response_column}")

    columns = [c for c in frame.columns if c not in reserved and c not in ignored]

    try:
        values = frame[columns].apply(pd.to_numeric).to_numpy(dtype=float)
        years = pd.to_numeric(frame["year"]).astype(int).tolist()
        response = None if not response_column else pd.to_numeric(frame[response_column]).to_numpy(dtype=float)
    except (ValueError, TypeError) as e:
        raise IngestError(f"non-numeric panel cell: {e}") from e

    if ignored & set(frame.columns):
        __log__.debug(f"INGEST | Ignored columns:: {', '.join(sorted(ignored & set(frame.columns)))}")

    return PanelDataset(
        companies=frame["company_id"].astype(str).tolist(),
        years=years,
        columns=columns,
        values=values,
        response=response,
        response_name=response_column or "response",
        exogenous=frozenset(tree.score_ids),
        labels={c: frame[c].astype(str).tolist() for c in label_columns},
    )


def load_panel(path: str, tree: HierarchyTree, response_column: Optional[str] = None,
               label_columns: Sequence[str] = (), sep: str = ",") -> PanelDataset:
    """Read a delimited panel file; empty fields are missing cells."""
    frame = _read_table(path, sep, dtype={"company_id": str}, keep_default_na=False, na_values=[""])
    return panel_from_frame(frame, tree, response_column, label_columns)


def save_panel(data: PanelDataset, path: str, sep: str = ","):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    data.to_frame().to_csv(path, sep=sep, index=False, na_rep="", float_format="%.17g", lineterminator="\n")


def load_returns(path: str, sep: str = ",") -> ReturnsSeries:
    return ReturnsSeries(_read_table(path, sep, dtype={"company_id": str}))


def save_returns(returns: ReturnsSeries, path: str, sep: str = ","):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame = returns.frame.copy()
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame.to_csv(path, sep=sep, index=False, float_format="%.17g", lineterminator="\n")


def load_factors(path: str, sep: str = ",") -> pd.DataFrame:
    frame = _read_table(path, sep, dtype={"company_id": str})
    if "year" not in frame.columns:
        raise IngestError("factor file needs a year column")
    return frame


def attach_factors(data: PanelDataset, factors: pd.DataFrame) -> PanelDataset:
    """Join factor columns on (company_id, year), or on year alone, as exogenous columns."""

    on = list(KEY_COLUMNS) if "company_id" in factors.columns else ["year"]
    names = [c for c in factors.columns if c not in KEY_COLUMNS]

    if clash := set(names) & set(data.columns):
        raise IngestError(f"factor columns clash with panel columns: {', '.join(sorted(clash))}")

    if factors.duplicated(on).any():
        raise IngestError(f"duplicate factor rows for key {on}")

    keys = pd.DataFrame({"company_id": list(data.companies), "year": list(data.years)})
    factors = factors.assign(year=factors["year"].astype(int))
    joined = keys.merge(factors, on=on, how="left")

    try:
        values = joined[names].apply(pd.to_numeric).to_numpy(dtype=float)
    except (ValueError, TypeError) as e:
        raise IngestError(f"non-numeric factor cell: {e}") from e

    if np.isnan(values).any():
        raise IngestError("factor columns must be fully observed for every panel row")

    return data.add_columns(names, values, exogenous=True)


@dataclass(frozen=True)
class SectorSlice:
    name: str
    rows: Tuple[int, ...] = field(default_factory=tuple)


def split_by_label(data: PanelDataset, label: str) -> List[SectorSlice]:
    """Row positions per value of a label column, in sorted value order."""

    if label not in data.labels:
        raise IngestError(f"unknown segment column: {label}")

    groups: Dict[str, List[int]] = {}
    for i, value in enumerate(data.labels[label]):
        groups.setdefault(value, []).append(i)

    return [SectorSlice(name, tuple(rows)) for name, rows in sorted(groups.items())]
