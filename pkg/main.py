# -*- coding: utf-8 -*-
import sys

from utils.app import HvsApp

app = HvsApp()

app.setup()

sys.exit(app.run(sys.argv[1:]))
