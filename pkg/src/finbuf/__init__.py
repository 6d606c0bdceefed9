"""Exact finite-buffer queueing characteristics from the convolution recurrence."""

from . import asymptotics, convrec, dam, dist, errors, gim, messages, mg1, priority

__version__ = "0.1.0"

__all__ = ["asymptotics", "convrec", "dam", "dist", "errors", "gim", "messages", "mg1", "priority",
           "__version__"]
