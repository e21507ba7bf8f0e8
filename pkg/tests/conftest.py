# -*- coding: utf-8 -*-
from __future__ import annotations

import numpy as np
import pytest

from hvselect.models import CategoryNode, HierarchyTree, PillarNode, VariableDescriptor, VariableKind
from hvselect.preprocess import save_hierarchy, save_panel
from hvselect.synth import PlantSpec, generate


def make_tree(layout) -> HierarchyTree:
    """``layout`` maps category id -> (pillar id, [(variable id, kind), ...])."""

    pillars = (PillarNode("E", "Environmental"), PillarNode("S", "Social"), PillarNode("G", "Governance"))
    categories, variables = [], []

    for cid, (pillar, members) in layout.items():
        categories.append(CategoryNode(cid, f"Category {cid}", pillar))
        for vid, kind in members:
            variables.append(VariableDescriptor(vid, vid, VariableKind(kind), cid, pillar))

    return HierarchyTree(pillars=pillars, categories=tuple(categories), variables=tuple(variables))


@pytest.fixture
def small_tree() -> HierarchyTree:
    return make_tree({
        "E1": ("E", [("e_num", "numeric"), ("e_flag", "boolean")]),
        "S1": ("S", [("s_num", "numeric"), ("s_count", "controversy")]),
        "G1": ("G", [("g_num", "numeric")]),
    })


@pytest.fixture
def small_spec() -> PlantSpec:
    return PlantSpec(
        n_companies=20,
        n_years=6,
        categories_per_pillar=(2, 1, 1),
        numeric_per_category=5,
        boolean_per_category=2,
        controversy_per_category=1,
        true_support=(("E1_N1", 0.8), ("S1_N2", -0.6)),
        noise_sd=0.3,
        seed=7,
    )


@pytest.fixture
def planted(small_spec):
    return generate(small_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def input_files(tmp_path, planted):
    """Panel (response column ``response``) and hierarchy files on disk."""

    data, tree, _ = planted
    panel = tmp_path / "inputs" / "panel.csv"
    hierarchy = tmp_path / "inputs" / "hierarchy.json"
    save_panel(data.with_response(data.response, name="response"), str(panel))
    save_hierarchy(tree, str(hierarchy))
    return panel, hierarchy
