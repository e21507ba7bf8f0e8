# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import IngestError, TreeError

__all__ = ('MISSING', 'PILLAR_IDS', 'VariableKind', 'ScoreLevel', 'Stage', 'PillarNode', 'CategoryNode', 'VariableDescriptor',
           'ScoreColumn', 'HierarchyTree', 'validate_tree', 'PanelDataset', 'ModelFit', 'TraceEntry', 'SelectionResult',
           'CategoryImportance', 'ImportanceReport')
__log__ = logging.getLogger(__name__)

MISSING = np.nan
PILLAR_IDS = ("E", "S", "G")
TREE_VERSION = 1.0


class VariableKind(str, Enum):
    BOOLEAN = "boolean"
    NUMERIC = "numeric"
    CONTROVERSY = "controversy"


class ScoreLevel(str, Enum):
    OVERALL = "overall"
    PILLAR = "pillar"
    CATEGORY = "category"


class Stage(str, Enum):
    STEP1 = "step1"
    STEP2 = "step2"
    STEP3 = "step3"


def _num(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return None if np.isnan(value) else value


def _from_num(value) -> float:
    return np.nan if value is None else float(value)


@dataclass(frozen=True)
class PillarNode:
    id: str
    name: str


@dataclass(frozen=True)
class CategoryNode:
    id: str
    name: str
    pillar_id: str


@dataclass(frozen=True)
class VariableDescriptor:
    id: str
    display_name: str
    kind: VariableKind
    category_id: str
    pillar_id: str


@dataclass(frozen=True)
class ScoreColumn:
    """An aggregated vendor score column (overall, pillar or category level)."""
    id: str
    level: ScoreLevel
    node_id: Optional[str] = None


@dataclass(frozen=True)
class HierarchyTree:
    """The pillar -> category -> raw variable taxonomy.

    Attributes
    ------------
    pillars: Tuple[PillarNode]
        The three pillars (E, S, G).
    categories: Tuple[CategoryNode]
        Category nodes in display order; each owns a pillar id.
    variables: Tuple[VariableDescriptor]
        Raw variables with their kind and owning category.
    ignored: Tuple[str]
        Column ids excluded at ingestion (demographic fields and similar).
    scores: Tuple[ScoreColumn]
        Aggregated score columns, loaded as exogenous columns.
    """

    pillars: Tuple[PillarNode, ...]
    categories: Tuple[CategoryNode, ...]
    variables: Tuple[VariableDescriptor, ...]
    ignored: Tuple[str, ...] = ()
    scores: Tuple[ScoreColumn, ...] = ()

    @cached_property
    def _variable_map(self) -> Dict[str, VariableDescriptor]:
        return {v.id: v for v in self.variables}

    @cached_property
    def _members(self) -> Dict[str, Tuple[str, ...]]:
        members = {c.id: [] for c in self.categories}
        for v in self.variables:
            members.setdefault(v.category_id, []).append(v.id)
        return {k: tuple(v) for k, v in members.items()}

    @property
    def variable_ids(self) -> Tuple[str, ...]:
        return tuple(v.id for v in self.variables)

    @property
    def category_ids(self) -> Tuple[str, ...]:
        return tuple(c.id for c in self.categories)

    @property
    def score_ids(self) -> Tuple[str, ...]:
        return tuple(s.id for s in self.scores)

    def has_variable(self, variable_id: str) -> bool:
        return variable_id in self._variable_map

    def get_variable(self, variable_id: str) -> VariableDescriptor:
        try:
            return self._variable_map[variable_id]
        except KeyError:
            raise TreeError(f"unknown variable id: {variable_id}") from None

    def kind_of(self, variable_id: str) -> VariableKind:
        return self.get_variable(variable_id).kind

    def category_of(self, variable_id: str) -> str:
        return self.get_variable(variable_id).category_id

    def members(self, category_id: str) -> Tuple[str, ...]:
        return self._members.get(category_id, ())

    def get_category(self, category_id: str) -> CategoryNode:
        for c in self.categories:
            if c.id == category_id:
                return c
        raise TreeError(f"unknown category id: {category_id}")

    def to_dict(self) -> dict:

        pillars = []

        for p in self.pillars:
            categories = []
            for c in self.categories:
                if c.pillar_id != p.id:
                    continue
                categories.append({
                    "id": c.id,
                    "name": c.name,
                    "variables": [
                        {"id": v.id, "name": v.display_name, "kind": v.kind.value}
                        for v in self.variables if v.category_id == c.id
                    ]
                })
            pillars.append({"id": p.id, "name": p.name, "categories": categories})

        return {
            "ver": TREE_VERSION,
            "pillars": pillars,
            "ignored": list(self.ignored),
            "scores": [
                {"id": s.id, "level": s.level.value, "node": s.node_id} for s in self.scores
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> HierarchyTree:

        try:
            pillars, categories, variables = [], [], []

            for p in data["pillars"]:
                pillars.append(PillarNode(id=str(p["id"]), name=str(p.get("name", p["id"]))))
                for c in p.get("categories", []):
                    categories.append(CategoryNode(id=str(c["id"]), name=str(c.get("name", c["id"])),
                                                   pillar_id=str(p["id"])))
                    for v in c.get("variables", []):
                        variables.append(VariableDescriptor(
                            id=str(v["id"]),
                            display_name=str(v.get("name", v["id"])),
                            kind=VariableKind(v["kind"]),
                            category_id=str(c["id"]),
                            pillar_id=str(p["id"]),
                        ))

            scores = tuple(
                ScoreColumn(id=str(s["id"]), level=ScoreLevel(s["level"]), node_id=s.get("node"))
                for s in data.get("scores", [])
            )

        except (KeyError, TypeError, ValueError) as e:
            raise TreeError(f"malformed hierarchy document: {e!r}") from e

        return cls(
            pillars=tuple(pillars),
            categories=tuple(categories),
            variables=tuple(variables),
            ignored=tuple(str(i) for i in data.get("ignored", [])),
            scores=scores,
        )


def validate_tree(tree: HierarchyTree) -> List[str]:
    """Return the list of invariant violations of ``tree`` (empty when well formed)."""

    violations = []

    pillar_ids = [p.id for p in tree.pillars]

    if len(pillar_ids) != 3:
        violations.append(f"expected 3 pillars, found {len(pillar_ids)}")

    seen = set()
    for pid in pillar_ids:
        if pid in seen:
            violations.append(f"duplicate pillar id: {pid}")
        elif pid not in PILLAR_IDS:
            violations.append(f"pillar id not in {PILLAR_IDS}: {pid}")
        seen.add(pid)

    categories = {}
    for c in tree.categories:
        if c.id in categories:
            violations.append(f"duplicate category id: {c.id}")
            continue
        categories[c.id] = c
        if c.pillar_id not in seen:
            violations.append(f"category {c.id} references unknown pillar: {c.pillar_id}")

    variable_ids = set()
    for v in tree.variables:
        if v.id in variable_ids:
            violations.append(f"duplicate variable id: {v.id}")
            continue
        variable_ids.add(v.id)

        if (category := categories.get(v.category_id)) is None:
            violations.append(f"variable {v.id} references unknown category: {v.category_id}")
        elif category.pillar_id != v.pillar_id:
            violations.append(f"variable {v.id} pillar {v.pillar_id} does not match "
                              f"category {category.id} pillar {category.pillar_id}")

    for i in tree.ignored:
        if i in variable_ids:
            violations.append(f"ignored column is also a variable: {i}")

    for s in tree.scores:
        if s.id in variable_ids:
            violations.append(f"score column is also a variable: {s.id}")

    return violations


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Company-year observations with an optional response column.

    Missing cells hold ``MISSING`` (NaN). ``exogenous`` names the non-ESG
    columns (factors, aggregated scores) that selection never considers.
    ``labels`` carries string-valued row metadata such as a sector column.
    """

    companies: Tuple[str, ...]
    years: Tuple[int, ...]
    columns: Tuple[str, ...]
    values: np.ndarray
    response: Optional[np.ndarray] = None
    response_name: str = "response"
    exogenous: FrozenSet[str] = frozenset()
    labels: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):

        companies = tuple(str(c) for c in self.companies)
        years = tuple(int(y) for y in self.years)
        columns = tuple(str(c) for c in self.columns)
        values = np.array(self.values, dtype=float, copy=True).reshape(len(companies), len(columns))

        if len(companies) != len(years):
            raise IngestError("companies and years differ in length")

        if len(set(columns)) != len(columns):
            raise IngestError("duplicate column ids in panel")

        if np.isinf(values).any():
            raise IngestError("infinite values are not valid panel cells")

        if len(set(zip(companies, years))) != len(companies):
            raise IngestError("duplicate (company_id, year) keys in panel")

        values.setflags(write=False)

        response = self.response
        if response is not None:
            response = np.array(response, dtype=float, copy=True).reshape(-1)
            if response.shape[0] != len(companies):
                raise IngestError("response length differs from row count")
            response.setflags(write=False)

        labels = {}
        for name, col in dict(self.labels).items():
            col = tuple(str(i) for i in col)
            if len(col) != len(companies):
                raise IngestError(f"label column {name} length differs from row count")
            labels[name] = col

        object.__setattr__(self, "companies", companies)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "exogenous", frozenset(self.exogenous) & frozenset(columns))
        object.__setattr__(self, "labels", labels)

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        if (self.companies, self.years, self.columns, self.response_name, self.exogenous, self.labels) != \
                (other.companies, other.years, other.columns, other.response_name, other.exogenous, other.labels):
            return False
        if not np.array_equal(self.values, other.values, equal_nan=True):
            return False
        if (self.response is None) != (other.response is None):
            return False
        return self.response is None or np.array_equal(self.response, other.response, equal_nan=True)

    __hash__ = None

    @property
    def n_rows(self) -> int:
        return len(self.companies)

    @property
    def keys(self) -> List[Tuple[str, int]]:
        return list(zip(self.companies, self.years))

    @cached_property
    def _column_index(self) -> Dict[str, int]:
        return {c: i for i, c in enumerate(self.columns)}

    @property
    def esg_columns(self) -> Tuple[str, ...]:
        return tuple(c for c in self.columns if c not in self.exogenous)

    def column(self, column_id: str) -> np.ndarray:
        try:
            return self.values[:, self._column_index[column_id]]
        except KeyError:
            raise IngestError(f"unknown panel column: {column_id}") from None

    def matrix(self, column_ids: Sequence[str]) -> np.ndarray:
        try:
            idx = [self._column_index[c] for c in column_ids]
        except KeyError as e:
            raise IngestError(f"unknown panel column: {e.args[0]}") from None
        return self.values[:, idx].reshape(self.n_rows, len(idx))

    def has_missing(self) -> bool:
        if np.isnan(self.values).any():
            return True
        return self.response is not None and bool(np.isnan(self.response).any())

    def require_response(self) -> np.ndarray:
        if self.response is None:
            raise IngestError("panel has no response column")
        return self.response

    def _rebuild(self, **kwargs) -> PanelDataset:
        data = dict(
            companies=self.companies, years=self.years, columns=self.columns, values=self.values,
            response=self.response, response_name=self.response_name, exogenous=self.exogenous,
            labels=self.labels,
        )
        data.update(kwargs)
        return PanelDataset(**data)

    def take_rows(self, index) -> PanelDataset:
        index = np.arange(self.n_rows)[index]
        return self._rebuild(
            companies=[self.companies[i] for i in index],
            years=[self.years[i] for i in index],
            values=self.values[index, :],
            response=None if self.response is None else self.response[index],
            labels={k: [v[i] for i in index] for k, v in self.labels.items()},
        )

    def select_columns(self, column_ids: Sequence[str]) -> PanelDataset:
        column_ids = list(column_ids)
        return self._rebuild(columns=column_ids, values=self.matrix(column_ids))

    def drop_columns(self, column_ids) -> PanelDataset:
        drop = set(column_ids)
        return self.select_columns([c for c in self.columns if c not in drop])

    def with_values(self, values: np.ndarray) -> PanelDataset:
        return self._rebuild(values=values)

    def with_response(self, response, name: Optional[str] = None) -> PanelDataset:
        return self._rebuild(response=response, response_name=name or self.response_name)

    def add_columns(self, column_ids: Sequence[str], values: np.ndarray, exogenous: bool = False) -> PanelDataset:
        values = np.asarray(values, dtype=float).reshape(self.n_rows, len(column_ids))
        exo = set(self.exogenous) | (set(column_ids) if exogenous else set())
        return self._rebuild(columns=list(self.columns) + list(column_ids),
                             values=np.hstack([self.values, values]), exogenous=exo)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.columns))
        frame.insert(0, "year", list(self.years))
        frame.insert(0, "company_id", list(self.companies))
        for name, col in self.labels.items():
            frame[name] = list(col)
        if self.response is not None:
            frame[self.response_name] = self.response
        return frame

    def to_dict(self) -> dict:
        return {
            "companies": list(self.companies),
            "years": list(self.years),
            "columns": list(self.columns),
            "values": [[_num(v) for v in row] for row in self.values],
            "response": None if self.response is None else [_num(v) for v in self.response],
            "response_name": self.response_name,
            "exogenous": sorted(self.exogenous),
            "labels": {k: list(v) for k, v in self.labels.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> PanelDataset:
        n_cols = len(data["columns"])
        values = np.array([[_from_num(v) for v in row] for row in data["values"]], dtype=float)
        return cls(
            companies=data["companies"],
            years=data["years"],
            columns=data["columns"],
            values=values.reshape(len(data["companies"]), n_cols),
            response=None if data.get("response") is None else [_from_num(v) for v in data["response"]],
            response_name=data.get("response_name", "response"),
            exogenous=frozenset(data.get("exogenous", [])),
            labels=data.get("labels", {}),
        )


@dataclass(frozen=True, eq=False)
class ModelFit:
    """One fitted linear model.

    ``coefficients`` are in the units the model was fitted in. When
    ``standardized`` is set they are per standard deviation of each predictor
    and ``raw_intercept``/``raw_coefficients`` hold the de-standardized model.
    ``aic``/``bic`` are None when undefined (a perfect fit, rss = 0).
    """

    intercept: float
    coefficients: Dict[str, float]
    residuals: np.ndarray
    n: int
    k: int
    rss: float
    tss: float
    r2: float = np.nan
    adj_r2: float = np.nan
    aic: Optional[float] = None
    bic: Optional[float] = None
    pct_dev: float = np.nan
    standardized: bool = False
    penalized: bool = False
    null_rss: Optional[float] = None
    penalty: float = 0.0
    deficient: Tuple[str, ...] = ()
    raw_intercept: Optional[float] = None
    raw_coefficients: Optional[Dict[str, float]] = None

    @property
    def columns(self) -> Tuple[str, ...]:
        return tuple(self.coefficients)

    @property
    def mse(self) -> float:
        return self.rss / self.n if self.n else np.nan

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Predict from a matrix in original units, columns ordered like ``coefficients``."""

        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if len(self.coefficients) == 1 else X.reshape(1, -1)

        if self.standardized:
            intercept, coefs = self.raw_intercept, self.raw_coefficients
        else:
            intercept, coefs = self.intercept, self.coefficients

        beta = np.array([coefs[c] for c in self.coefficients], dtype=float)
        return intercept + X @ beta

    def predict_dataset(self, data: PanelDataset) -> np.ndarray:
        return self.predict(data.matrix(list(self.coefficients)))

    def to_dict(self) -> dict:
        return {
            "intercept": _num(self.intercept),
            "coefficients": {k: _num(v) for k, v in self.coefficients.items()},
            "residuals": [_num(v) for v in self.residuals],
            "n": int(self.n),
            "k": int(self.k),
            "rss": _num(self.rss),
            "tss": _num(self.tss),
            "r2": _num(self.r2),
            "adj_r2": _num(self.adj_r2),
            "aic": _num(self.aic),
            "bic": _num(self.bic),
            "pct_dev": _num(self.pct_dev),
            "standardized": self.standardized,
            "penalized": self.penalized,
            "null_rss": _num(self.null_rss),
            "penalty": _num(self.penalty),
            "deficient": list(self.deficient),
            "raw_intercept": _num(self.raw_intercept),
            "raw_coefficients": None if self.raw_coefficients is None else
            {k: _num(v) for k, v in self.raw_coefficients.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> ModelFit:
        return cls(
            intercept=_from_num(data["intercept"]),
            coefficients={k: _from_num(v) for k, v in data["coefficients"].items()},
            residuals=np.array([_from_num(v) for v in data["residuals"]], dtype=float),
            n=data["n"],
            k=data["k"],
            rss=_from_num(data["rss"]),
            tss=_from_num(data["tss"]),
            r2=_from_num(data["r2"]),
            adj_r2=_from_num(data["adj_r2"]),
            aic=data["aic"],
            bic=data["bic"],
            pct_dev=_from_num(data["pct_dev"]),
            standardized=data["standardized"],
            penalized=data["penalized"],
            null_rss=data.get("null_rss"),
            penalty=_from_num(data.get("penalty")),
            deficient=tuple(data.get("deficient", ())),
            raw_intercept=data.get("raw_intercept"),
            raw_coefficients=None if data.get("raw_coefficients") is None else
            {k: _from_num(v) for k, v in data["raw_coefficients"].items()},
        )


@dataclass(frozen=True)
class TraceEntry:
    action: str
    variable: str
    before: float
    after: float

    def to_dict(self) -> dict:
        return {"action": self.action, "variable": self.variable,
                "before": _num(self.before), "after": _num(self.after)}


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Variables selected at one HVS stage, the model that produced them and the move log."""

    stage: Stage
    selected: Tuple[str, ...]
    fit: Optional[ModelFit]
    trace: Tuple[TraceEntry, ...] = ()
    category_id: Optional[str] = None
    truncated: bool = False

    @classmethod
    def empty(cls, stage: Stage, category_id: Optional[str] = None, fit: Optional[ModelFit] = None):
        return cls(stage=stage, selected=(), fit=fit, category_id=category_id)

    @property
    def label(self) -> str:
        if self.category_id:
            return f"{self.stage.value}({self.category_id})"
        return self.stage.value

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "category_id": self.category_id,
            "selected": list(self.selected),
            "truncated": self.truncated,
            "trace": [t.to_dict() for t in self.trace],
            "fit": None if self.fit is None else self.fit.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> SelectionResult:
        return cls(
            stage=Stage(data["stage"]),
            selected=tuple(data["selected"]),
            fit=None if data.get("fit") is None else ModelFit.from_dict(data["fit"]),
            trace=tuple(TraceEntry(t["action"], t["variable"], _from_num(t["before"]), _from_num(t["after"]))
                        for t in data.get("trace", [])),
            category_id=data.get("category_id"),
            truncated=data.get("truncated", False),
        )


@dataclass(frozen=True)
class CategoryImportance:
    score: float
    pct: float


@dataclass(frozen=True)
class ImportanceReport:
    per_category: Dict[str, CategoryImportance]
    member_indices: Dict[str, Tuple[str, ...]]
    per_pillar: Dict[str, CategoryImportance] = field(default_factory=dict)

    @classmethod
    def empty(cls) -> ImportanceReport:
        return cls(per_category={}, member_indices={}, per_pillar={})

    @property
    def is_empty(self) -> bool:
        return not self.per_category

    def to_dict(self) -> dict:
        return {
            "per_category": {k: {"score": v.score, "pct": v.pct} for k, v in self.per_category.items()},
            "member_indices": {k: list(v) for k, v in self.member_indices.items()},
            "per_pillar": {k: {"score": v.score, "pct": v.pct} for k, v in self.per_pillar.items()},
        }
