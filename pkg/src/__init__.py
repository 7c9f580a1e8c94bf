from .errors import *
from .data import *
from .objectives import *
from .models import *
from .pipelines import *
from .synth import *
from .configs import *
