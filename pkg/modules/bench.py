# -*- coding: utf-8 -*-
from __future__ import annotations

from typing import TYPE_CHECKING

from utils.others import Command, CommandArgparse
from utils.runconfig import add_run_arguments, run_config_from_args
from utils.runner import RunSession

if TYPE_CHECKING:
    from utils.app import HvsApp


class BenchCommand(Command):

    name = "bench"
    description = "Compare HVS with PCA, one-shot stepwise and lasso on the same preprocessed panel."

    def build_parser(self) -> CommandArgparse:
        parser = super().build_parser()
        add_run_arguments(parser, self.app.config)
        return parser

    def invoke(self, args) -> int:

        config = run_config_from_args(args, benchmarks=True, diagnostics=False)

        session = RunSession(config).load()
        session.fit()
        session.store.write_table("preprocess_log.csv", session.outcome.log_frame())
        session.write_benchmarks()
        session.summary()
        return 0


def setup(app: HvsApp):
    app.add_command(BenchCommand(app))
