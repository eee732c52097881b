"""Penalized generalized space-time autoregressive (GSTAR) models.

Location-specific GSTAR coefficients are estimated by least squares or by
FISTA under a LASSO, hierarchical group LASSO or directed hierarchical group
LASSO penalty, with lambda chosen by rolling-origin validation. An
unrestricted VAR serves as the baseline.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .weights import *  # noqa: E402,F401,F403
from .series import *  # noqa: E402,F401,F403
from .penalty import *  # noqa: E402,F401,F403
from .solver import *  # noqa: E402,F401,F403
from .models import *  # noqa: E402,F401,F403
from .simulate import *  # noqa: E402,F401,F403
from .evaluation import *  # noqa: E402,F401,F403
