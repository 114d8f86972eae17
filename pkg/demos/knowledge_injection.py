"""
Steering embeddings with a concept taxonomy
===========================================

Attach a known parent/child concept tree to the planted corpus and train with
the contrastive regularizer switched on.  Taxonomy neighbors should end up
closer to each other than to random non-neighbors, without giving up topic
quality.
"""

import tempfile
from pathlib import Path

import numpy as np

from hypertopic.geometry import Geometry, pairwise_distances
from hypertopic.model import EmbeddingSet, ModelConfig
from hypertopic.synthetic import generate_planted_corpus, write_hypernym_paths
from hypertopic.taxonomy import build_from_hypernym_paths
from hypertopic.trainer import TrainSettings, train

planted = generate_planted_corpus(n_docs=2000, vocab_size=300, n_parents=3,
                                  children_per_parent=3, seed=100)
corpus = planted.corpus

# export the ground-truth tree as hypernym paths and build the taxonomy
with tempfile.TemporaryDirectory() as tmp:
    paths = Path(tmp) / "paths.tsv"
    write_hypernym_paths(planted, paths)
    taxonomy = build_from_hypernym_paths(paths, corpus.vocabulary, depth=2)
print(f"taxonomy: layer sizes {taxonomy.layer_sizes()}, "
      f"{taxonomy.node_count()} embedded nodes")


def anchor_fraction(run):
    # for each node with neighbors: is the mean distance to its taxonomy
    # neighbors smaller than to an equal-size random non-neighbor sample?
    emb = EmbeddingSet.from_params(run.params, run.config)
    points = emb.node_points(taxonomy)
    dists = pairwise_distances(points, points, emb.geometry, emb.curvature)
    rng = np.random.default_rng(0)
    n = taxonomy.node_count()
    closer = total = 0
    for anchor in range(n):
        positives = sorted(taxonomy.positives_of(anchor))
        if not positives:
            continue
        pool = np.setdiff1d(np.arange(n), np.array(positives + [anchor]))
        sample = rng.choice(pool, size=min(len(positives), pool.size), replace=False)
        total += 1
        closer += dists[anchor, positives].mean() < dists[anchor, sample].mean()
    return closer / total


settings = TrainSettings(epochs=60, batch_size=50, lr=0.01, seed=1)
for lam in (0.0, 5.0):
    config = ModelConfig(mode="hierarchical", topics=(9, 3), dim=8, hidden=64,
                         geometry=Geometry.POINCARE, curvature=-1.0,
                         prior_scale=(30.0, 3.0), lam=lam, neg_samples=64)
    print(f"\ntraining with lambda = {lam} ...")
    run = train(corpus, config, taxonomy=taxonomy if lam else None,
                settings=settings)
    frac = anchor_fraction(run)
    print(f"  neighbors closer than random for {frac:.1%} of nodes")
    if lam:
        print(f"  contrastive component at the last step: "
              f"{run.history[-1]['contrastive']:.4f}")
