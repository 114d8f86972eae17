"""Taxonomy-guided contrastive regularizer over embedding points.

Every taxonomy node (concept or attached word) acts as an anchor.  Its
positives are its one-hop tree neighbors; its negatives are the m
highest-scoring non-neighbor nodes under the current embedding, so the
penalty concentrates on the pairs the geometry currently gets wrong.  The
per-anchor term is the softmax cross-entropy of picking the positive among
{positive} + negatives by similarity score at temperature tau.

Negative mining runs on detached point values; gradients flow only through
the gathered score entries.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, constant, gather_cols, gather_rows
from .errors import ContractViolationError
from .geometry import tensor_pairwise_scores
from .model import EmbeddingSet, ModelConfig, node_points_tensor
from .taxonomy import ConceptTaxonomy, rank_negatives

MASK_SCORE = -1e30   # stands in for missing negatives; exp() underflows to 0
CHUNK = 256

__all__ = ["contrastive_loss_tensor", "contrastive_loss", "total_loss"]


def _sample_positives(taxonomy: ConceptTaxonomy, anchors: np.ndarray, rng) -> np.ndarray:
    """One uniformly drawn positive per anchor (anchors all have >= 1)."""
    out = np.empty(len(anchors), dtype=np.int64)
    for i, a in enumerate(anchors):
        pos = sorted(taxonomy.positives_of(int(a)))
        out[i] = pos[rng.integers(len(pos))]
    return out


def contrastive_loss_tensor(
    node_pts: Tensor,
    taxonomy: ConceptTaxonomy,
    config: ModelConfig,
    rng_seed: int,
) -> Tensor:
    """Mean per-anchor contrastive term over all anchors with positives.

    ``node_pts`` rows align with taxonomy handles.  Deterministic given
    ``rng_seed``: positive sampling and negative mining depend only on the
    seed and the current point values.
    """
    n = taxonomy.node_count()
    if node_pts.shape[0] != n:
        raise ContractViolationError(
            f"node point rows {node_pts.shape[0]} != taxonomy handles {n}"
        )
    anchors = np.array(
        [h for h in taxonomy.anchor_handles() if taxonomy.positives_of(int(h))],
        dtype=np.int64,
    )
    if anchors.size == 0:
        return constant(np.array(0.0))

    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    positives = _sample_positives(taxonomy, anchors, rng)
    negatives = rank_negatives(
        taxonomy, node_pts.data, config.geometry, config.curvature,
        m=config.neg_samples, anchors=anchors,
    )

    cols = np.concatenate([positives[:, None], negatives], axis=1)
    valid = cols >= 0
    cols = np.where(valid, cols, 0)

    inv_tau = 1.0 / config.tau
    losses = []
    for lo in range(0, len(anchors), CHUNK):
        hi = min(lo + CHUNK, len(anchors))
        scores = tensor_pairwise_scores(
            gather_rows(node_pts, anchors[lo:hi]), node_pts,
            config.geometry, config.curvature,
        )
        picked = gather_cols(scores, cols[lo:hi]) * inv_tau
        mask = valid[lo:hi].astype(np.float64)
        masked = picked * constant(mask) + constant((1.0 - mask) * MASK_SCORE)
        # constant max-shift keeps exp in range without touching gradients
        shift = constant(masked.data.max(axis=1, keepdims=True))
        lse = (masked - shift).exp().sum(axis=1).log() + constant(shift.data[:, 0])
        losses.append((lse - picked[:, 0]).sum())
    total = losses[0]
    for part in losses[1:]:
        total = total + part
    return total * (1.0 / len(anchors))


def contrastive_loss(
    embeddings: EmbeddingSet,
    taxonomy: ConceptTaxonomy,
    config: ModelConfig,
    rng_seed: int,
) -> float:
    """Numeric evaluation on the current embedding points."""
    pts = constant(embeddings.node_points(taxonomy))
    return float(contrastive_loss_tensor(pts, taxonomy, config, rng_seed).data)


def contrastive_loss_from_params(
    tensors: dict,
    taxonomy: ConceptTaxonomy,
    config: ModelConfig,
    rng_seed: int,
) -> Tensor:
    """Differentiable route used in training: tangents -> points -> loss."""
    return contrastive_loss_tensor(
        node_points_tensor(tensors, config, taxonomy), taxonomy, config, rng_seed
    )


def total_loss(elbo: Tensor, contrastive: Tensor | None, lam: float) -> Tensor:
    """Training objective: negative ELBO plus the weighted contrastive term."""
    if lam < 0:
        raise ContractViolationError(f"lambda must be >= 0, got {lam}")
    if contrastive is None or lam == 0.0:
        return -elbo
    return -elbo + contrastive * lam
