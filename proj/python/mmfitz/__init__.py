"""Maximal monotone operators, Fitzpatrick gaps, Skorohod problems and variational inequalities."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
