# -*- coding: utf-8 -*-
from __future__ import annotations

import json
import logging
import os
from typing import TYPE_CHECKING

import humanize

from hvselect.errors import SpecError
from hvselect.preprocess import save_hierarchy, save_panel, save_returns
from hvselect.synth import PlantSpec, daily_returns, full_scale_spec, generate, replace_spec, standard_spec, truth_frame
from utils.others import Command, CommandArgparse

if TYPE_CHECKING:
    from utils.app import HvsApp

__log__ = logging.getLogger(__name__)

# column name ``run`` reads by default in precomputed mode
RESPONSE_COLUMN = "response"


def load_spec(path: str) -> PlantSpec:

    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise SpecError(f"unreadable spec file {path}: {e}") from e

    return PlantSpec.from_dict(data)


class SynthCommand(Command):

    name = "synth"
    description = "Generate a planted-truth panel, its hierarchy and optionally daily returns."

    def build_parser(self) -> CommandArgparse:
        parser = super().build_parser()
        source = parser.add_mutually_exclusive_group()
        source.add_argument("--spec", help="JSON plant spec")
        source.add_argument("--full-scale", action="store_true")
        parser.add_argument("--null", action="store_true", help="standard shape without planted signal")
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--output-dir", default=self.app.config["OUTPUT_DIR"])
        parser.add_argument("--with-returns", action="store_true")
        parser.add_argument("--days", type=int, default=252)
        return parser

    def invoke(self, args) -> int:

        if args.spec:
            spec = load_spec(args.spec)
        elif args.full_scale:
            spec = full_scale_spec(self.app.config["SEED"])
        else:
            spec = standard_spec(self.app.config["SEED"], signal=not args.null)

        if args.seed is not None:
            spec = replace_spec(spec, seed=args.seed)

        data, tree, truth = generate(spec)
        data = data.with_response(data.response, name=RESPONSE_COLUMN)

        os.makedirs(args.output_dir, exist_ok=True)

        save_panel(data, os.path.join(args.output_dir, "panel.csv"))
        save_hierarchy(tree, os.path.join(args.output_dir, "hierarchy.json"))
        truth_frame(truth, tree).to_csv(os.path.join(args.output_dir, "truth.csv"), index=False,
                                        float_format="%.17g", lineterminator="\n")

        with open(os.path.join(args.output_dir, "spec.json"), "w", encoding="utf-8", newline="\n") as f:
            json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

        if args.with_returns:
            save_returns(daily_returns(data, seed=spec.seed, n_days=args.days),
                         os.path.join(args.output_dir, "returns.csv"))

        __log__.info(f"SYNTH | Generated:: {humanize.intcomma(data.n_rows)} rows x "
                     f"{humanize.intcomma(len(data.columns))} columns, {len(truth.support)} true variables "
                     f"-> {args.output_dir}")
        return 0


def setup(app: HvsApp):
    app.add_command(SynthCommand(app))
