# -*- coding: utf-8 -*-
from __future__ import annotations

from typing import TYPE_CHECKING

from hvselect.validation import Design
from utils.others import Command, CommandArgparse
from utils.runconfig import add_run_arguments, run_config_from_args
from utils.runner import RunSession

if TYPE_CHECKING:
    from utils.app import HvsApp


class ValidateCommand(Command):

    name = "validate"
    description = "Out-of-sample validation of the mean baseline, HVS Steps 2 and 3 and one-shot stepwise."

    def build_parser(self) -> CommandArgparse:
        parser = super().build_parser()
        add_run_arguments(parser, self.app.config)
        parser.add_argument("--design", action="append", default=[], choices=[d.value for d in Design],
                            help="defaults to both designs")
        return parser

    def invoke(self, args) -> int:

        designs = tuple(dict.fromkeys(args.design)) or tuple(d.value for d in Design)
        config = run_config_from_args(args, benchmarks=False, diagnostics=False, validation=designs)

        session = RunSession(config).load()
        session.write_validation()
        session.summary()
        return 0


def setup(app: HvsApp):
    app.add_command(ValidateCommand(app))
