"""
Scoring a trained model: coherence, diversity, clustering, classification
==========================================================================

Train a small hierarchical model on the planted corpus, then walk through
every evaluation the package ships: NPMI coherence against the corpus,
topic diversity, k-means purity and NMI over inferred document features,
and a linear classifier on the train/test split.
"""

import json

import numpy as np

from hypertopic.evaluation import (
    TopicSet,
    evaluate_model,
    npmi,
    select_top_half,
    topic_diversity,
)
from hypertopic.model import EmbeddingSet, ModelConfig, compute_phi
from hypertopic.synthetic import generate_planted_corpus
from hypertopic.trainer import TrainSettings, train

planted = generate_planted_corpus(n_docs=2000, vocab_size=300, n_parents=3,
                                  children_per_parent=3, seed=100)
corpus = planted.corpus
config = ModelConfig(mode="hierarchical", topics=(9, 3), dim=8, hidden=64,
                     prior_scale=(30.0, 3.0))
print("training ...")
run = train(corpus, config, settings=TrainSettings(epochs=60, batch_size=50, seed=1))

# coherence is judged per layer against document co-occurrence in the corpus
emb = EmbeddingSet.from_params(run.params, run.config)
for level, label in ((1, "children"), (2, "parents")):
    phi = compute_phi(level, emb)
    dist = phi if level == 1 else compute_phi(1, emb) @ phi
    topics = TopicSet.from_distribution(dist, top_n=10)
    scores = npmi(topics, corpus, top_n=10)
    kept, _ = select_top_half(topics, scores)
    print(f"layer of {label}: mean NPMI {scores.mean():+.3f}, "
          f"top-half mean {npmi(kept, corpus).mean():+.3f}, "
          f"diversity {topic_diversity(topics, top_n=10):.2f}")

# the one-call report bundles clustering and classification on top
report = evaluate_model(corpus, run.params, run.buffers, run.config, seed=0)
print("\nfull report:")
print(json.dumps(report.to_dict(), indent=2))

# planted labels are the three parents, so chance purity is about a third
purity = report.to_dict()["clustering"]["purity"]
print(f"\nk-means purity {purity:.2f} against 3 planted parent labels "
      f"(chance is {1 / 3:.2f})")
