"""junglescope: synthetic laser-probing simulator and profiled key-extraction pipeline."""

__version__ = "0.1.0"

from . import nnengine, registration, simcore

__all__ = ["nnengine", "registration", "simcore", "__version__"]
