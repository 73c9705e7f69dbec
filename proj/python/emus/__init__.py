"""Stratified MCMC estimation of expectations, tail probabilities and marginals.

The compiled core lives in ``emus._emus`` (installed layout) or a top-level
``_emus`` module (in-tree builds); this package re-exports its surface.
"""

try:
    from ._emus import *  # noqa: F401,F403
    from . import _emus as _core  # noqa: F401
except ImportError:
    from _emus import *  # noqa: F401,F403
    import _emus as _core  # noqa: F401

__all__ = [name for name in dir(_core) if not name.startswith("_")]
