# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
import os
import sys
from importlib import import_module
from typing import Dict, List, Optional

from config_loader import load_config
from utils.errors import ArgumentParsingError, format_traceback, parse_error
from utils.others import Command

__log__ = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s %(message)s'


class HvsApp:

    def __init__(self, env_file: str = "./.env", environ: Optional[dict] = None):
        self.env_file = env_file
        self.environ = environ
        self.config: dict = {}
        self.commands: Dict[str, Command] = {}
        self._handlers: List[logging.Handler] = []

    def load_cfg(self):
        self.config = load_config(self.env_file, self.environ)

    def close_logging(self):

        logger = logging.getLogger()

        for handler in self._handlers:
            logger.removeHandler(handler)
            handler.close()

        self._handlers.clear()

    def setup_logging(self):

        self.close_logging()
        logger = logging.getLogger()

        level = getattr(logging, str(self.config["LOG_LEVEL"]).upper(), logging.INFO)

        console = logging.StreamHandler(sys.stderr)
        console.setLevel(level)
        console.setFormatter(logging.Formatter('%(levelname)s %(message)s'))
        self._handlers.append(console)

        if self.config['ENABLE_LOGGER']:

            if not os.path.isdir(self.config["LOG_DIR"]):
                os.makedirs(self.config["LOG_DIR"])

            handler = logging.FileHandler(filename=os.path.join(self.config["LOG_DIR"], 'hvs.log'),
                                          encoding='utf-8', mode='w')
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            self._handlers.append(handler)

        logger.setLevel(logging.DEBUG if self.config['ENABLE_LOGGER'] else level)

        for handler in self._handlers:
            logger.addHandler(handler)

    def load_modules(self, module_dir: str = "modules"):

        base = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

        for root, _, files in os.walk(os.path.join(base, module_dir)):

            for file in sorted(f for f in files if f.endswith('.py') and not f.startswith('_')):

                filename, _ = os.path.splitext(file)
                relative = os.path.relpath(os.path.join(root, filename), base)
                module = import_module(relative.replace('\\', '.').replace('/', '.'))

                if not hasattr(module, "setup"):
                    __log__.warning(f"APP | Module without setup:: {relative}")
                    continue

                module.setup(self)

    def add_command(self, command: Command):
        if command.name in self.commands:
            raise ValueError(f"duplicate command: {command.name}")
        self.commands[command.name] = command

    def setup(self):
        self.load_cfg()
        self.setup_logging()
        self.load_modules()

    def usage(self) -> str:
        names = ", ".join(sorted(self.commands))
        return f"usage: hvs <command> [options]\ncommands: {names}"

    def run(self, argv: List[str]) -> int:
        """Dispatch ``argv`` to a command. Returns the process exit code; never raises."""

        try:
            if not self.commands:
                self.setup()

            if not argv or argv[0] in ("-h", "--help"):
                print(self.usage())
                return 0 if argv else 2

            try:
                command = self.commands[argv[0]]
            except KeyError:
                raise ArgumentParsingError(f"unknown command: {argv[0]}") from None

            return command(argv[1:])

        except SystemExit as e:
            return e.code if isinstance(e.code, int) else 0

        except Exception as e:
            code, line = parse_error(e)
            __log__.debug(f"APP | Command failed::\n{format_traceback(e)}")
            print(line, file=sys.stderr)
            return code
