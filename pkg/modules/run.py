# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from hvselect.validation import Design
from utils.others import Command, CommandArgparse
from utils.runconfig import add_run_arguments, run_config_from_args
from utils.runner import RunSession

if TYPE_CHECKING:
    from utils.app import HvsApp

__log__ = logging.getLogger(__name__)


class RunCommand(Command):

    name = "run"
    description = "Preprocess a panel, run the three HVS stages and write every report."

    def build_parser(self) -> CommandArgparse:
        parser = super().build_parser()
        add_run_arguments(parser, self.app.config)
        parser.add_argument("--validate", action="append", default=[], choices=[d.value for d in Design],
                            help="validation design to run (repeatable)")
        parser.add_argument("--no-benchmarks", action="store_true")
        parser.add_argument("--no-diagnostics", action="store_true")
        return parser

    def invoke(self, args) -> int:

        config = run_config_from_args(args, benchmarks=not args.no_benchmarks,
                                      diagnostics=not args.no_diagnostics,
                                      validation=tuple(dict.fromkeys(args.validate)))

        session = RunSession(config).load()
        session.write_selection()

        if config.benchmarks:
            session.write_benchmarks()

        if config.validation:
            session.write_validation()

        if config.diagnostics:
            session.write_diagnostics()

        if session.factor_names:
            session.write_augmentation()

        if config.segment_column:
            session.write_segments()

        session.summary()
        return 0


def setup(app: HvsApp):
    app.add_command(RunCommand(app))
