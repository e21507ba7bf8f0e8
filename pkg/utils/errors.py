# -*- coding: utf-8 -*-
from __future__ import annotations

import traceback
from typing import Tuple

from hvselect.errors import (
    ConfigError, HvsException, SchemaVersionError, SpecError, StageError, TreeError,
)


class ArgumentParsingError(HvsException):
    def __init__(self, message):
        super().__init__(message.strip())


USAGE_ERRORS = (ConfigError, SpecError, ArgumentParsingError, TreeError, SchemaVersionError)


def parse_error(error: Exception) -> Tuple[int, str]:
    """Exit code and a one-line, machine-parsable description of ``error``."""

    original = getattr(error, 'original', error) if isinstance(error, StageError) else error

    if isinstance(original, USAGE_ERRORS):
        code = 2
    else:
        code = 1

    if isinstance(error, HvsException):
        text = str(error)
    elif isinstance(error, (FileNotFoundError, PermissionError, IsADirectoryError)):
        text = f"{error.strerror}: {error.filename}"
    else:
        text = repr(error)

    text = " ".join(text.split()).replace('"', "'")

    return code, f'error code={code} type={type(error).__name__} message="{text}"'


def format_traceback(error: Exception) -> str:
    return "".join(traceback.format_exception(type(error), error, error.__traceback__))
