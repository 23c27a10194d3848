"""Stable continuous-time linear predictors for nonlinear dynamics.

A coupling-flow diffeomorphism, an unconstrained Hurwitz latent matrix and a
linear reconstruction map are trained jointly; the latent linear system is
lifted through a monomial basis into a higher-dimensional linear predictor
that is asymptotically stable by construction.
"""

__version__ = "0.1.0"

from . import autodiff, data, flow, hurwitz, metrics, monomial, predictor, training

__all__ = [
    "autodiff",
    "data",
    "flow",
    "hurwitz",
    "metrics",
    "monomial",
    "predictor",
    "training",
    "__version__",
]
