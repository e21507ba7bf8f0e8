__title__ = 'hvselect'
__license__ = 'MIT'
__version__ = '1.0.0'

from .errors import *
from .models import *
from .preprocess import *
from .regress import *
from .pipeline import *
from .validation import *
from .synth import *
