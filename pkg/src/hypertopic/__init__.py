"""Hyperbolic embedded topic models.

Word and topic embeddings live in a constant-negative-curvature space
(Poincaré ball or Lorentz model, with a euclidean baseline mode), topic
hierarchies are decoded from embedding distances, inference runs through a
Weibull-reparameterized ladder encoder, and an optional concept taxonomy is
injected via a hyperbolic contrastive regularizer.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    corpus,
    evaluation,
    geometry,
    gradengine,
    knowledge,
    model,
    synthetic,
    taxonomy,
    trainer,
)
