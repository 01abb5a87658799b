"""Marginal regression for clustered data with informative cluster size.

Weighted generalized estimating equations (WGEE) remove the bias that an
outcome-dependent cluster size induces in ordinary GEE, and the penalized
variant (PWGEE) adds folded-concave variable selection for high-dimensional
covariates.  Submodules are imported lazily so that the command line entry
point can configure the process before any numerical library loads.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "dataset",
    "family",
    "correlation",
    "weighting",
    "penalty",
    "equations",
    "solver",
    "tuning",
    "simgen",
    "metrics",
    "bench",
    "plots",
    "cli",
)

__all__ = list(_SUBMODULES)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
