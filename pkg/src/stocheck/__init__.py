"""Detectability, observability and mean-square stability checks for linear
discrete-time time-varying systems with multiplicative noise."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .system import *  # noqa: E402,F401,F403
from .gramians import *  # noqa: E402,F401,F403
from .stability import *  # noqa: E402,F401,F403
from .detectability import *  # noqa: E402,F401,F403
from .lyapunov import *  # noqa: E402,F401,F403
