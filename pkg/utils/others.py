# -*- coding: utf-8 -*-
from __future__ import annotations

import argparse
from typing import TYPE_CHECKING, List, Optional

from utils.errors import ArgumentParsingError

if TYPE_CHECKING:
    from utils.app import HvsApp


class CommandArgparse(argparse.ArgumentParser):

    def __init__(self, *args, **kwargs):

        kwargs.pop('exit_on_error', None)
        kwargs.pop('allow_abbrev', None)

        try:
            super().__init__(*args, exit_on_error=False, allow_abbrev=False, **kwargs)
        except TypeError:
            super().__init__(*args, allow_abbrev=False, **kwargs)

    def parse_known_args(self, args=None, namespace=None):
        try:
            return super().parse_known_args(args, namespace)
        except argparse.ArgumentError as e:
            raise ArgumentParsingError(str(e)) from e

    def parse_args(self, args=None, namespace=None):
        args, extra = self.parse_known_args(args, namespace)
        if extra:
            self.error(f"unrecognized arguments: {' '.join(extra)}")
        return args

    def exit(self, status=0, message=None):
        # --help prints and then lands here
        raise SystemExit(status)

    def error(self, message: str):
        raise ArgumentParsingError(message)


class Command:
    """One CLI subcommand. Command modules register instances through ``setup(app)``."""

    name: str = ""
    description: str = ""

    def __init__(self, app: HvsApp):
        self.app = app

    def build_parser(self) -> CommandArgparse:
        return CommandArgparse(prog=f"hvs {self.name}", description=self.description)

    def invoke(self, args: argparse.Namespace) -> int:
        raise NotImplementedError

    def __call__(self, argv: List[str]) -> int:
        return self.invoke(self.build_parser().parse_args(argv))


def sort_dict_recursively(d):
    """Sort mapping keys at every depth; list order is kept."""
    if isinstance(d, dict):
        return {key: sort_dict_recursively(d[key]) for key in sorted(d)}
    elif isinstance(d, (list, tuple)):
        return [sort_dict_recursively(e) for e in d]
    else:
        return d


def optional_int(value: Optional[str]) -> Optional[int]:
    if value in (None, "", "none"):
        return None
    return int(value)
