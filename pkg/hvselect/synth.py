# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize, stats

from .errors import SpecError
from .models import (
    PILLAR_IDS, CategoryNode, HierarchyTree, PanelDataset, PillarNode, VariableDescriptor, VariableKind,
)
from .preprocess import ReturnsSeries

__all__ = ('PlantSpec', 'standard_spec', 'full_scale_spec', 'replace_spec', 'GroundTruth', 'generate', 'daily_returns',
           'Recovery', 'recovery_metrics', 'importance_mass', 'truth_frame')
__log__ = logging.getLogger(__name__)

PILLAR_NAMES = {"E": "Environmental", "S": "Social", "G": "Governance"}
KIND_CODES = {VariableKind.NUMERIC: "N", VariableKind.BOOLEAN: "B", VariableKind.CONTROVERSY: "C"}
CONTROVERSY_ZERO_SHARE = 0.6


@dataclass(frozen=True)
class PlantSpec:
    """Shape and ground truth of a synthetic panel.

    Variable ids are ``<category>_<kind code><index>``, for example ``E1_N3``
    or ``S2_B1``, with categories numbered per pillar (``E1``, ``E2``...).
    ``true_support`` pairs a variable id with its coefficient on the
    standardized column; ``collinearity`` rebuilds ``target`` as a numeric
    column whose sample correlation with ``source`` is exactly ``rho``.
    """

    n_companies: int = 60
    n_years: int = 10
    start_year: int = 2010
    categories_per_pillar: Tuple[int, int, int] = (5, 5, 5)
    numeric_per_category: int = 14
    boolean_per_category: int = 4
    controversy_per_category: int = 2
    true_support: Tuple[Tuple[str, float], ...] = ()
    noise_sd: float = 1.0
    intercept: float = -4.0
    company_effect_sd: float = 0.0
    missing_numeric: float = 0.0
    missing_boolean: float = 0.0
    missing_controversy: float = 0.0
    collinearity: Tuple[Tuple[str, str, float], ...] = ()
    latent_weight: float = 0.3
    seed: int = 0

    def __post_init__(self):

        object.__setattr__(self, "categories_per_pillar", tuple(int(c) for c in self.categories_per_pillar))
        object.__setattr__(self, "true_support", tuple((str(v), float(b)) for v, b in self.true_support))
        object.__setattr__(self, "collinearity",
                           tuple((str(t), str(s), float(r)) for t, s, r in self.collinearity))

        if self.n_companies < 1 or self.n_years < 1:
            raise SpecError("n_companies and n_years must be positive")

        if len(self.categories_per_pillar) != len(PILLAR_IDS) or min(self.categories_per_pillar) < 1:
            raise SpecError("categories_per_pillar needs one positive count per pillar")

        if min(self.numeric_per_category, self.boolean_per_category, self.controversy_per_category) < 0 or \
                self.numeric_per_category + self.boolean_per_category + self.controversy_per_category < 1:
            raise SpecError("every category needs at least one variable and counts cannot be negative")

        if not (np.isfinite(self.noise_sd) and self.noise_sd > 0):
            raise SpecError(f"noise_sd must be positive, got {self.noise_sd}")

        if self.company_effect_sd < 0:
            raise SpecError(f"company_effect_sd cannot be negative, got {self.company_effect_sd}")

        for name in ("missing_numeric", "missing_boolean", "missing_controversy"):
            if not 0 <= getattr(self, name) < 1:
                raise SpecError(f"{name} must be in [0, 1), got {getattr(self, name)}")

        if not 0 <= self.latent_weight <= 1:
            raise SpecError(f"latent_weight must be in [0, 1], got {self.latent_weight}")

        kinds = {d.id: d.kind for d in self.descriptors()}

        if unknown := [v for v, _ in self.true_support if v not in kinds]:
            raise SpecError(f"true support names unknown variables: {', '.join(unknown)}")

        if len({v for v, _ in self.true_support}) != len(self.true_support):
            raise SpecError("true support lists a variable twice")

        for target, source, rho in self.collinearity:
            if kinds.get(target) != VariableKind.NUMERIC or source not in kinds or target == source:
                raise SpecError(f"collinearity needs a numeric target and a different source: {target} <- {source}")
            if not -1 < rho < 1:
                raise SpecError(f"collinearity correlation must be in (-1, 1), got {rho}")

    @property
    def n_rows(self) -> int:
        return self.n_companies * self.n_years

    def category_ids(self) -> List[Tuple[str, str]]:
        return [(f"{p}{i + 1}", p) for p, count in zip(PILLAR_IDS, self.categories_per_pillar) for i in range(count)]

    def descriptors(self) -> List[VariableDescriptor]:
        counts = ((VariableKind.NUMERIC, self.numeric_per_category),
                  (VariableKind.BOOLEAN, self.boolean_per_category),
                  (VariableKind.CONTROVERSY, self.controversy_per_category))
        return [
            VariableDescriptor(f"{cid}_{KIND_CODES[kind]}{j + 1}", f"{cid} {kind.value} {j + 1}", kind, cid, pillar)
            for cid, pillar in self.category_ids()
            for kind, count in counts
            for j in range(count)
        ]

    def tree(self) -> HierarchyTree:
        return HierarchyTree(
            pillars=tuple(PillarNode(p, PILLAR_NAMES[p]) for p in PILLAR_IDS),
            categories=tuple(CategoryNode(cid, f"Category {cid}", p) for cid, p in self.category_ids()),
            variables=tuple(self.descriptors()),
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        data["categories_per_pillar"] = list(self.categories_per_pillar)
        data["true_support"] = [{"id": v, "beta": b} for v, b in self.true_support]
        data["collinearity"] = [{"target": t, "source": s, "rho": r} for t, s, r in self.collinearity]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> PlantSpec:

        if not isinstance(data, dict):
            raise SpecError("a plant spec must be a mapping")

        known = {f.name for f in fields(cls)}

        if unknown := set(data) - known:
            raise SpecError(f"unknown spec fields: {', '.join(sorted(unknown))}")

        data = dict(data)

        try:
            if "true_support" in data:
                data["true_support"] = tuple((s["id"], s["beta"]) for s in data["true_support"])
            if "collinearity" in data:
                data["collinearity"] = tuple((c["target"], c["source"], c["rho"]) for c in data["collinearity"])
            return cls(**data)
        except (KeyError, TypeError, ValueError) as e:
            raise SpecError(f"malformed plant spec: {e!r}") from e


def standard_spec(seed: int = 0, signal: bool = True) -> PlantSpec:
    """15 categories, 300 variables, 600 rows, 12 true variables in 5 categories, signal-to-noise 2."""

    support = ()
    noise_sd = 0.5

    if signal:
        chosen = [("E1", 3), ("E3", 2), ("S2", 3), ("S4", 2), ("G1", 2)]
        support = tuple(
            (f"{cid}_N{j + 1}", 0.2 if (i + j) % 2 == 0 else -0.2)
            for i, (cid, count) in enumerate(chosen) for j in range(count)
        )
        noise_sd = float(np.sqrt(sum(b * b for _, b in support) / 2.0))

    return PlantSpec(true_support=support, noise_sd=noise_sd, seed=seed)


def full_scale_spec(seed: int = 0) -> PlantSpec:
    """A 695-row panel with 615 raw variables over 15 categories."""
    return replace_spec(standard_spec(seed), n_companies=139, n_years=5, numeric_per_category=33,
                        boolean_per_category=6, controversy_per_category=2)


def replace_spec(spec: PlantSpec, **changes) -> PlantSpec:
    return replace(spec, **changes)


class GroundTruth(NamedTuple):
    support: Dict[str, float]
    intercept: float
    noise_sd: float

    def categories(self, tree: HierarchyTree) -> Tuple[str, ...]:
        owners = {tree.category_of(v) for v in self.support}
        return tuple(c for c in tree.category_ids if c in owners)


def _standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    return (x - x.mean()) / sd if sd > 0 else np.zeros_like(x)


def _exact_correlate(source: np.ndarray, noise: np.ndarray, rho: float) -> np.ndarray:
    z = _standardize(source)
    e = noise - noise.mean()
    e = e - (e @ z) / (z @ z) * z if z.any() else e
    return rho * z + np.sqrt(1.0 - rho ** 2) * _standardize(e)


def generate(spec: PlantSpec) -> Tuple[PanelDataset, HierarchyTree, GroundTruth]:
    """Draw a panel from the spec. The same spec always yields the same panel."""

    rng = np.random.default_rng(spec.seed)
    tree = spec.tree()
    n = spec.n_rows

    companies = [f"C{i + 1:04d}" for i in range(spec.n_companies) for _ in range(spec.n_years)]
    years = [spec.start_year + t for _ in range(spec.n_companies) for t in range(spec.n_years)]

    loading = np.sqrt(spec.latent_weight)
    own = np.sqrt(1.0 - spec.latent_weight)
    columns: Dict[str, np.ndarray] = {}

    for cid in tree.category_ids:

        latent = rng.standard_normal(n)

        for vid in tree.members(cid):
            kind = tree.kind_of(vid)
            base = loading * latent + own * rng.standard_normal(n)

            if kind == VariableKind.NUMERIC:
                columns[vid] = base
            elif kind == VariableKind.BOOLEAN:
                share = rng.uniform(0.2, 0.8)
                columns[vid] = (base > stats.norm.ppf(1.0 - share)).astype(float)
            else:
                counts = rng.poisson(np.exp(0.5 * base))
                columns[vid] = np.where(rng.random(n) < CONTROVERSY_ZERO_SHARE, 0.0, counts).astype(float)

    for target, source, rho in spec.collinearity:
        columns[target] = _exact_correlate(columns[source], rng.standard_normal(n), rho)

    response = np.full(n, spec.intercept)
    for vid, beta in spec.true_support:
        response += beta * _standardize(columns[vid])

    if spec.company_effect_sd > 0:
        effects = rng.normal(0.0, spec.company_effect_sd, spec.n_companies)
        response += np.repeat(effects, spec.n_years)

    response += rng.normal(0.0, spec.noise_sd, n)

    missing = {VariableKind.NUMERIC: spec.missing_numeric, VariableKind.BOOLEAN: spec.missing_boolean,
               VariableKind.CONTROVERSY: spec.missing_controversy}
    ids = list(tree.variable_ids)
    values = np.column_stack([columns[v] for v in ids]) if ids else np.empty((n, 0))

    for j, vid in enumerate(ids):
        if rate := missing[tree.kind_of(vid)]:
            values[rng.random(n) < rate, j] = np.nan

    data = PanelDataset(companies=companies, years=years, columns=ids, values=values,
                        response=response, response_name="log_volatility")

    __log__.debug(f"SYNTH | Generated panel:: {n} rows x {len(ids)} columns, "
                  f"{len(spec.true_support)} true variables, seed {spec.seed}")

    return data, tree, GroundTruth(dict(spec.true_support), spec.intercept, spec.noise_sd)


def _compounding_shift(spread: np.ndarray, log_growth: float) -> float:
    """Constant ``c`` with ``sum(log(1 + c + spread)) == log_growth`` and every factor positive."""

    def gap(c: float) -> float:
        return float(np.sum(np.log1p(c + spread))) - log_growth

    # gap is increasing in c and diverges to -inf at the floor
    floor = -1.0 - float(spread.min())
    width = 1.0
    while gap(floor + width) < 0:
        width *= 2.0
    high = floor + width

    while gap(floor + width) > 0:
        width /= 2.0
    low = floor + width

    if low == high:
        return high
    return float(optimize.brentq(gap, low, high, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def daily_returns(data: PanelDataset, seed: int = 0, n_days: int = 252, mean_return: float = 0.0,
                  return_sd: float = 0.2) -> ReturnsSeries:
    """Daily returns whose company-year sample standard deviation is ``exp(response)``.

    Each row's log growth ``log(1 + annual return)`` is drawn independently
    around ``log(1 + mean_return)`` with spread ``return_sd``, and the row's
    draws are shifted to compound to it exactly. A shift leaves the standard
    deviation alone, so the annual return carries no signal from the panel's
    variables. ``return_sd=0`` gives every row the annual return ``mean_return``.
    """

    if not mean_return > -1:
        raise SpecError(f"mean_return must exceed -1, got {mean_return}")
    if return_sd < 0:
        raise SpecError(f"return_sd must be non-negative, got {return_sd}")

    response = data.require_response()
    rng = np.random.default_rng(seed)
    frames = []

    for (company, year), value in zip(data.keys, response):

        if np.isnan(value):
            continue

        spread = np.exp(value) * _standardize(rng.standard_normal(n_days))
        log_growth = np.log1p(mean_return) + return_sd * rng.standard_normal()
        dates = pd.bdate_range(f"{year}-01-01", periods=n_days)

        if dates[-1].year != year:
            raise SpecError(f"{n_days} business days do not fit in one calendar year")

        frames.append(pd.DataFrame({
            "company_id": company,
            "date": dates,
            "daily_return": _compounding_shift(spread, log_growth) + spread,
        }))

    columns = ["company_id", "date", "daily_return"]
    return ReturnsSeries(pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns))


class Recovery(NamedTuple):
    precision: float
    recall: float
    f1: float
    precision_only: bool = False


def recovery_metrics(truth: Sequence[str], found: Sequence[str]) -> Recovery:
    """Set-overlap precision, recall and F1 of ``found`` against ``truth``."""

    truth, found = set(truth), set(found)

    if not truth:
        if not found:
            return Recovery(1.0, 1.0, 1.0)
        return Recovery(0.0, np.nan, np.nan, precision_only=True)

    hits = len(truth & found)
    precision = hits / len(found) if found else 0.0
    recall = hits / len(truth)
    f1 = 2 * precision * recall / (precision + recall) if hits else 0.0

    return Recovery(precision, recall, f1)


def importance_mass(report_pct: Dict[str, float], categories: Sequence[str]) -> float:
    """Share (0 to 1) of importance percentage held by the given categories."""
    categories = set(categories)
    return sum(pct for c, pct in report_pct.items() if c in categories) / 100.0


def truth_frame(truth: GroundTruth, tree: Optional[HierarchyTree] = None) -> pd.DataFrame:
    rows = [
        {"variable": v, "beta": b, "category": tree.category_of(v) if tree else None}
        for v, b in truth.support.items()
    ]
    return pd.DataFrame(rows, columns=["variable", "beta", "category"])
