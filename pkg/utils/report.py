# -*- coding: utf-8 -*-
from __future__ import annotations

import io
import json
import logging
import os
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from packaging.version import InvalidVersion, Version

from hvselect.errors import SchemaVersionError
from hvselect.models import HierarchyTree, ImportanceReport, PanelDataset
from hvselect.pipeline import HvsResult, ScoreBaseline
from hvselect.regress import fit_ols
from utils.others import sort_dict_recursively

__log__ = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
TABLE_HEADER_PREFIX = "# schema="

# pie slices take shades from one family per pillar
PILLAR_COLOR_FAMILIES = {"E": "green", "S": "red", "G": "blue"}
PILLAR_COLORMAPS = {"green": "Greens", "red": "Reds", "blue": "Blues"}


def _check_schema(value, source: str):
    try:
        version = Version(str(value))
    except InvalidVersion:
        raise SchemaVersionError(f"{source}: unreadable schema version {value!r}") from None
    if version.major != Version(SCHEMA_VERSION).major:
        raise SchemaVersionError(f"{source}: unsupported schema version {version} (expected {SCHEMA_VERSION})")
    return version


def _clean(value):
    """JSON-safe copy: numpy scalars become Python numbers and NaN becomes null."""

    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if not np.isfinite(value) else float(value)
    return value


class ReportStore:
    """Writes report artifacts stamped with the schema version, config hash and seed."""

    def __init__(self, output_dir: str, config_hash: str, seed: int):
        self.output_dir = output_dir
        self.config_hash = config_hash
        self.seed = seed
        self.written: List[str] = []
        os.makedirs(output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def write_json(self, name: str, payload: dict) -> str:

        document = {"schema": SCHEMA_VERSION, "config_hash": self.config_hash, "seed": self.seed,
                    "data": _clean(payload)}

        with open(self.path(name), "w", encoding="utf-8", newline="\n") as f:
            json.dump(sort_dict_recursively(document), f, indent=2, allow_nan=False)
            f.write("\n")

        return self._record(name)

    def write_table(self, name: str, frame: pd.DataFrame) -> str:

        buffer = io.StringIO()
        buffer.write(f"{TABLE_HEADER_PREFIX}{SCHEMA_VERSION} config={self.config_hash} seed={self.seed}\n")
        frame.to_csv(buffer, index=False, float_format="%.17g", na_rep="", lineterminator="\n")

        with open(self.path(name), "w", encoding="utf-8", newline="\n") as f:
            f.write(buffer.getvalue())

        return self._record(name)

    def _record(self, name: str) -> str:
        self.written.append(name)
        __log__.debug(f"REPORT | Written:: {name}")
        return self.path(name)

    @staticmethod
    def read_json(path: str) -> dict:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
        if not isinstance(document, dict) or "schema" not in document:
            raise SchemaVersionError(f"{path}: no schema version")
        _check_schema(document["schema"], path)
        return document

    @staticmethod
    def read_table(path: str) -> pd.DataFrame:
        with open(path, encoding="utf-8") as f:
            header = f.readline()
            if not header.startswith(TABLE_HEADER_PREFIX):
                raise SchemaVersionError(f"{path}: no schema header")
            _check_schema(header[len(TABLE_HEADER_PREFIX):].split()[0], path)
            return pd.read_csv(f, keep_default_na=False, na_values=[""])


def importance_table(report: ImportanceReport, tree: HierarchyTree) -> pd.DataFrame:
    rows = [
        {"category": c, "pillar": tree.get_category(c).pillar_id, "score": v.score, "pct": v.pct,
         "members": " ".join(report.member_indices[c])}
        for c, v in report.per_category.items()
    ]
    return pd.DataFrame(rows, columns=["category", "pillar", "score", "pct", "members"])


def pie_data(report: ImportanceReport, tree: HierarchyTree) -> dict:
    """Importance slices in category order, each tagged with its pillar's colour family and shade."""

    slices = []
    shade_counter: Dict[str, int] = {}

    for c, v in report.per_category.items():
        pillar = tree.get_category(c).pillar_id
        shade = shade_counter.get(pillar, 0)
        shade_counter[pillar] = shade + 1
        slices.append({"category": c, "name": tree.get_category(c).name, "pillar": pillar, "pct": v.pct,
                       "color_family": PILLAR_COLOR_FAMILIES.get(pillar), "shade": shade})

    return {
        "color_families": PILLAR_COLOR_FAMILIES,
        "slices": slices,
        "pillars": [{"pillar": p, "pct": v.pct, "color_family": PILLAR_COLOR_FAMILIES.get(p)}
                    for p, v in report.per_pillar.items()],
    }


def step1_bars(result: HvsResult, baselines: Sequence[ScoreBaseline]) -> pd.DataFrame:
    """Per-category adjusted R2 of the Step 1 fits plus one baseline line per aggregated-score level."""

    rows = [
        {"kind": "category", "id": c, "n_selected": len(r.selected),
         "adj_r2": r.fit.adj_r2 if r.fit is not None and r.selected else np.nan}
        for c, r in result.step1.items()
    ]
    rows.extend(
        {"kind": "baseline", "id": b.level.value, "n_selected": len(b.columns), "adj_r2": b.adj_r2}
        for b in baselines
    )
    return pd.DataFrame(rows, columns=["kind", "id", "n_selected", "adj_r2"])


def step_comparison(result: HvsResult, data: PanelDataset) -> pd.DataFrame:
    """Step 1 against Step 2 adjusted R2 per category; the Step 2 value refits the category's Step 2 survivors."""

    step2 = set(result.step2.selected)
    y = data.require_response()
    rows = []

    for c, r in result.step1.items():
        if not r.selected:
            continue
        survivors = [v for v in r.selected if v in step2]
        step2_adj_r2 = fit_ols(data.matrix(survivors), y, columns=survivors).adj_r2 if survivors else np.nan
        rows.append({"category": c, "step1_selected": len(r.selected), "step2_selected": len(survivors),
                     "step1_adj_r2": r.fit.adj_r2, "step2_adj_r2": step2_adj_r2})

    return pd.DataFrame(rows, columns=["category", "step1_selected", "step2_selected", "step1_adj_r2",
                                       "step2_adj_r2"])


def selection_detail(result: HvsResult, tree: HierarchyTree) -> pd.DataFrame:
    """One row per variable and stage, with the coefficient each stage fitted."""

    rows = []

    for c, r in result.step1.items():
        for v in r.selected:
            rows.append({"stage": "step1", "variable": v, "category": c,
                         "coefficient": r.fit.coefficients[v], "raw_coefficient": r.fit.coefficients[v]})

    for r in (result.step2, result.step3):
        fit = r.fit
        for v in r.selected:
            raw = fit.raw_coefficients[v] if fit.standardized else fit.coefficients[v]
            rows.append({"stage": r.stage.value, "variable": v, "category": tree.category_of(v),
                         "coefficient": fit.coefficients[v], "raw_coefficient": raw})

    return pd.DataFrame(rows, columns=["stage", "variable", "category", "coefficient", "raw_coefficient"])


def render_charts(store: ReportStore, bars: pd.DataFrame, pie: dict, comparison: pd.DataFrame) -> List[str]:
    """Static PNG renderings of the plot data."""

    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    written = []

    categories = bars[bars["kind"] == "category"]
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.bar(categories["id"], categories["adj_r2"].fillna(0.0), color="#4c72b0")
    for _, line in bars[bars["kind"] == "baseline"].iterrows():
        ax.axhline(line["adj_r2"], linestyle="--", linewidth=1, label=f"{line['id']} score")
    ax.set_ylabel("Adjusted R²")
    if (bars["kind"] == "baseline").any():
        ax.legend()
    fig.tight_layout()
    fig.savefig(store.path("step1_bars.png"))
    plt.close(fig)
    written.append("step1_bars.png")

    if pie["slices"]:
        fig, ax = plt.subplots(figsize=(6, 6))
        colors = []
        for s in pie["slices"]:
            cmap = plt.get_cmap(PILLAR_COLORMAPS.get(s["color_family"], "Greys"))
            colors.append(cmap(0.8 - 0.1 * (s["shade"] % 6)))
        ax.pie([s["pct"] for s in pie["slices"]], labels=[s["category"] for s in pie["slices"]], colors=colors)
        fig.savefig(store.path("importance_pie.png"))
        plt.close(fig)
        written.append("importance_pie.png")

    if not comparison.empty:
        fig, ax = plt.subplots(figsize=(10, 4))
        x = np.arange(len(comparison))
        ax.bar(x - 0.2, comparison["step1_adj_r2"], width=0.4, label="Step 1")
        ax.bar(x + 0.2, comparison["step2_adj_r2"], width=0.4, label="Step 2")
        ax.set_xticks(x, comparison["category"])
        ax.legend()
        fig.tight_layout()
        fig.savefig(store.path("step_comparison.png"))
        plt.close(fig)
        written.append("step_comparison.png")

    return written
