"""Experiment-data analysis: time tags, estimators, fits and synthetic data."""

from .datasets import *  # noqa: F401,F403
from .fitting import *  # noqa: F401,F403
from .synth import *  # noqa: F401,F403
from .timetags import *  # noqa: F401,F403
from . import datasets, fitting, synth, timetags

__all__ = datasets.__all__ + fitting.__all__ + synth.__all__ + timetags.__all__
