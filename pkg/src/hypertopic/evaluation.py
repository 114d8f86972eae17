"""Topic-quality and document-representation metrics.

Coherence (NPMI) counts whole-document co-occurrence against a reference
corpus; diversity counts unique words across topics' top lists; document
features are evaluated with seeded k-means (purity, NMI) and a one-vs-rest
linear hinge classifier.  Everything is pure and deterministic given seeds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import BowCorpus, Vocabulary
from .errors import ContractViolationError, DataValidationError
from .geometry import Geometry
from .model import EmbeddingSet, ModelConfig, build_topic_hierarchy, infer_document_features

NPMI_TINY = 1e-12

__all__ = [
    "TopicSet",
    "MetricReport",
    "npmi",
    "topic_diversity",
    "select_top_half",
    "kmeans_cluster",
    "KMeansResult",
    "purity",
    "nmi",
    "classify_linear",
    "export_embedding_coords",
    "write_top_words_tsv",
    "evaluate_model",
    "config_digest",
]


@dataclass
class TopicSet:
    """Ranked word-index lists, one per topic, with matching weights."""

    word_indices: list[np.ndarray]
    weights: list[np.ndarray]

    def __post_init__(self):
        if len(self.word_indices) != len(self.weights):
            raise ContractViolationError("indices and weights must align per topic")
        self.word_indices = [np.asarray(w, dtype=np.int64) for w in self.word_indices]
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        for idx, wts in zip(self.word_indices, self.weights):
            if idx.shape != wts.shape:
                raise ContractViolationError("ranked list and weights differ in length")
            if idx.size != np.unique(idx).size:
                raise ContractViolationError("topic word indices must be unique")

    def __len__(self) -> int:
        return len(self.word_indices)

    def validate_against_vocab(self, vocab_size: int) -> None:
        for i, idx in enumerate(self.word_indices):
            if idx.size and (idx.min() < 0 or idx.max() >= vocab_size):
                raise ContractViolationError(f"topic {i} has out-of-range word indices")

    @classmethod
    def from_distribution(cls, dist_vk: np.ndarray, top_n: int) -> "TopicSet":
        """Top-n columns of a vocabulary-by-topics distribution matrix."""
        indices, weights = [], []
        for j in range(dist_vk.shape[1]):
            order = np.argsort(-dist_vk[:, j], kind="stable")[:top_n]
            indices.append(order)
            weights.append(dist_vk[order, j])
        return cls(indices, weights)


def _presence_matrix(corpus: BowCorpus) -> np.ndarray:
    out = np.zeros((len(corpus.documents), len(corpus.vocabulary)), dtype=bool)
    for i, doc in enumerate(corpus.documents):
        out[i, doc.term_indices] = True
    return out


def npmi(topics: TopicSet, ref_corpus: BowCorpus, top_n: int = 10) -> np.ndarray:
    """Per-topic mean pairwise NPMI from document-frequency counts.

    A pair that never co-occurs (including any word absent from the corpus)
    scores -1; a pair with joint document frequency 1 has a vanishing
    normalizer and scores 0 by convention.
    """
    presence = _presence_matrix(ref_corpus)
    n_docs = presence.shape[0]
    if n_docs == 0:
        raise DataValidationError("reference corpus has no documents")
    scores = np.empty(len(topics))
    for t, idx in enumerate(topics.word_indices):
        words = idx[:top_n]
        if words.size < 2:
            raise ContractViolationError(f"topic {t} has fewer than two words")
        cols = presence[:, words]
        df = cols.sum(axis=0) / n_docs
        joint = (cols[:, :, None] & cols[:, None, :]).sum(axis=0) / n_docs
        pair_scores = []
        for i in range(words.size):
            for j in range(i + 1, words.size):
                pij = joint[i, j]
                if pij == 0.0:
                    pair_scores.append(-1.0)
                elif pij >= 1.0:
                    pair_scores.append(0.0)
                else:
                    pmi = np.log(pij / (df[i] * df[j]))
                    pair_scores.append(pmi / max(-np.log(pij), NPMI_TINY))
        scores[t] = np.mean(pair_scores)
    return scores


def topic_diversity(topics: TopicSet, top_n: int = 25) -> float:
    """Fraction of unique words among all topics' top-n lists."""
    tops = []
    for t, idx in enumerate(topics.word_indices):
        if idx.size < top_n:
            raise ContractViolationError(f"topic {t} has fewer than {top_n} words")
        tops.append(idx[:top_n])
    stacked = np.concatenate(tops)
    return float(np.unique(stacked).size / stacked.size)


def select_top_half(topics: TopicSet, scores) -> tuple[TopicSet, np.ndarray]:
    """The ceil(T/2) highest-scoring topics; ties break to the lower index.

    Returns the subset (in original topic order) and the selected indices.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(topics),):
        raise ContractViolationError("scores must align with topics")
    take = -(-len(topics) // 2)
    ranked = np.lexsort((np.arange(len(topics)), -scores))[:take]
    chosen = np.sort(ranked)
    subset = TopicSet(
        [topics.word_indices[i] for i in chosen],
        [topics.weights[i] for i in chosen],
    )
    return subset, chosen


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    wcss: float
    iterations: int


def _wcss(x: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    return float(((x - centers[labels]) ** 2).sum())


def _plus_plus_init(x: np.ndarray, k: int, rng) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i:] = x[rng.integers(n, size=k - i)]
            break
        centers[i] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans_cluster(features: np.ndarray, k: int, seed: int, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when assignments stabilize.  An emptied cluster is reseeded at the
    point farthest from its assigned center.  The within-cluster sum of
    squares is asserted non-increasing across iterations (1e-9 slack).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ContractViolationError("features must be a nonempty 2-d matrix")
    if k < 1 or k > x.shape[0]:
        raise ContractViolationError(f"k must be in 1..{x.shape[0]}, got {k}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    centers = _plus_plus_init(x, k, rng)

    labels = None
    prev_wcss = np.inf
    for iteration in range(1, max_iter + 1):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        current = _wcss(x, centers, new_labels)
        if current > prev_wcss + 1e-9:
            raise ContractViolationError(
                f"k-means objective increased: {prev_wcss} -> {current}"
            )
        prev_wcss = current
        if labels is not None and np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        for c in range(k):
            members = x[labels == c]
            if members.shape[0] == 0:
                residual = ((x - centers[labels]) ** 2).sum(axis=1)
                centers[c] = x[residual.argmax()]
            else:
                centers[c] = members.mean(axis=0)
    return KMeansResult(
        labels=labels, centers=centers,
        wcss=_wcss(x, centers, labels), iterations=iteration,
    )


def purity(assignments, labels) -> float:
    """Fraction of points whose cluster's majority label matches theirs."""
    a = np.asarray(assignments)
    y = np.asarray(labels)
    if a.shape != y.shape or a.ndim != 1 or a.size == 0:
        raise ContractViolationError("assignments and labels must be aligned nonempty vectors")
    total = 0
    for c in np.unique(a):
        _, counts = np.unique(y[a == c], return_counts=True)
        total += counts.max()
    return float(total / a.size)


def nmi(assignments, labels) -> float:
    """Mutual information normalized by sqrt(H(A) * H(L)), natural logs.

    Either marginal entropy being zero (a single cluster or a single label
    class) yields 0 by convention.
    """
    a = np.asarray(assignments)
    y = np.asarray(labels)
    if a.shape != y.shape or a.ndim != 1 or a.size == 0:
        raise ContractViolationError("assignments and labels must be aligned nonempty vectors")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, yi.max() + 1))
    np.add.at(contingency, (ai, yi), 1.0)
    pij = contingency / n
    pa = pij.sum(axis=1)
    py = pij.sum(axis=0)
    ha = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    hy = -np.sum(py[py > 0] * np.log(py[py > 0]))
    if ha == 0.0 or hy == 0.0:
        return 0.0
    mask = pij > 0
    mi = np.sum(pij[mask] * np.log(pij[mask] / np.outer(pa, py)[mask]))
    return float(mi / np.sqrt(ha * hy))


# ---------------------------------------------------------------------------
# Linear classification
# ---------------------------------------------------------------------------

def classify_linear(
    train_feats,
    train_labels,
    test_feats,
    test_labels,
    lam_reg: float = 1e-4,
    epochs: int = 100,
    seed: int = 0,
) -> float:
    """One-vs-rest max-margin classifier trained by subgradient descent.

    Per class: hinge loss plus L2 penalty, per-sample updates in a seeded
    shuffle order with a 1/(1 + 0.1 epoch) step decay.  Returns test accuracy.
    """
    xtr = np.asarray(train_feats, dtype=np.float64)
    ytr = np.asarray(train_labels)
    xte = np.asarray(test_feats, dtype=np.float64)
    yte = np.asarray(test_labels)
    if xtr.shape[0] == 0 or xte.shape[0] == 0:
        raise DataValidationError("train and test splits must be nonempty")
    if xtr.shape[0] != ytr.size or xte.shape[0] != yte.size:
        raise ContractViolationError("features and labels must align")
    classes = np.unique(ytr)
    if classes.size < 2:
        raise DataValidationError(
            f"training labels contain a single class ({classes.tolist()}): "
            "the margin problem is degenerate"
        )

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n, d = xtr.shape
    weights = np.zeros((classes.size, d))
    biases = np.zeros(classes.size)
    for ci, cls in enumerate(classes):
        sign = np.where(ytr == cls, 1.0, -1.0)
        w = np.zeros(d)
        b = 0.0
        for epoch in range(epochs):
            lr = 0.5 / (1.0 + 0.1 * epoch)
            for i in rng.permutation(n):
                margin = sign[i] * (xtr[i] @ w + b)
                if margin < 1.0:
                    w += lr * (sign[i] * xtr[i] - lam_reg * w)
                    b += lr * sign[i]
                else:
                    w -= lr * lam_reg * w
        weights[ci] = w
        biases[ci] = b

    scores = xte @ weights.T + biases
    predicted = classes[scores.argmax(axis=1)]
    return float((predicted == yte).mean())


# ---------------------------------------------------------------------------
# Exports and reports
# ---------------------------------------------------------------------------

def _header_lines(header: dict | None) -> list[str]:
    if not header:
        return []
    return ["# " + json.dumps(header, sort_keys=True)]


def export_embedding_coords(
    embeddings: EmbeddingSet,
    vocabulary: Vocabulary,
    path,
    header: dict | None = None,
) -> int:
    """TSV of every word and topic point: name, layer, coordinates, norm.

    Lorentz points are converted to the ball model first so the coordinates
    are directly plottable.  Returns the number of data rows
    (V plus all topic counts).
    """
    def to_ball(points):
        if embeddings.geometry is Geometry.LORENTZ:
            return points[:, 1:] / (1.0 + np.sqrt(-embeddings.curvature) * points[:, :1])
        return points

    lines = _header_lines(header)
    dim = embeddings.word_tangents.shape[1]
    coord_cols = "\t".join(f"c{i}" for i in range(dim))
    lines.append(f"name\tlayer\t{coord_cols}\tnorm")
    rows = 0

    def emit(name, layer, row):
        nonlocal rows
        coords = "\t".join(f"{v:.8f}" for v in row)
        lines.append(f"{name}\t{layer}\t{coords}\t{np.linalg.norm(row):.8f}")
        rows += 1

    ball_words = to_ball(embeddings.word_points())
    for i in range(ball_words.shape[0]):
        emit(vocabulary.tokens()[i], 0, ball_words[i])
    for l in range(1, embeddings.n_layers + 1):
        ball = to_ball(embeddings.topic_points(l))
        for j in range(ball.shape[0]):
            emit(f"layer{l}:topic{j}", l, ball[j])

    Path(path).write_text("\n".join(lines) + "\n")
    return rows


def write_top_words_tsv(
    topic_sets: list[TopicSet],
    vocabulary: Vocabulary,
    path,
    header: dict | None = None,
) -> None:
    """One row per (layer, topic, rank): the ranked word and its weight."""
    lines = _header_lines(header)
    lines.append("layer\ttopic\trank\tword\tweight")
    tokens = vocabulary.tokens()
    for layer, topics in enumerate(topic_sets, start=1):
        for j, (idx, wts) in enumerate(zip(topics.word_indices, topics.weights)):
            for rank, (w, weight) in enumerate(zip(idx, wts), start=1):
                lines.append(f"{layer}\t{j}\t{rank}\t{tokens[int(w)]}\t{weight:.8f}")
    Path(path).write_text("\n".join(lines) + "\n")


def config_digest(config: ModelConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


@dataclass
class MetricReport:
    """Per-layer coherence/diversity plus clustering and classification."""

    layers: list[dict]
    clustering: dict | None
    classification: dict | None
    seed: int
    config_digest: str

    def __post_init__(self):
        for entry in self.layers:
            if not -1.0 - 1e-9 <= entry["npmi_mean"] <= 1.0 + 1e-9:
                raise ContractViolationError("NPMI out of [-1, 1]")
            if not 0.0 <= entry["topic_diversity"] <= 1.0:
                raise ContractViolationError("topic diversity out of [0, 1]")
        for group, keys in ((self.clustering, ("purity", "nmi")),
                            (self.classification, ("accuracy",))):
            if group is not None:
                for key in keys:
                    if not 0.0 - 1e-9 <= group[key] <= 1.0 + 1e-9:
                        raise ContractViolationError(f"{key} out of [0, 1]")

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "clustering": self.clustering,
            "classification": self.classification,
            "seed": self.seed,
            "config_digest": self.config_digest,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def evaluate_model(
    corpus: BowCorpus,
    params,
    buffers: dict,
    config: ModelConfig,
    seed: int = 0,
    top_n_coherence: int = 10,
    top_n_diversity: int = 25,
    k_clusters: int | None = None,
) -> MetricReport:
    """Full metric pass over a trained model.

    Topic lists come from the layerwise word distributions; document features
    are the deterministic bottom-layer posteriors.  Clustering and
    classification run only when the corpus carries labels (clustering on the
    test split when present, otherwise all documents).
    """
    emb = EmbeddingSet.from_params(params, config)
    vocab_size = len(corpus.vocabulary)
    hierarchy = build_topic_hierarchy(emb, top_n=vocab_size)

    layers = []
    for l, dist in enumerate(hierarchy.word_distributions, start=1):
        topics = TopicSet.from_distribution(dist, top_n=vocab_size)
        scores = npmi(topics, corpus, top_n=min(top_n_coherence, vocab_size))
        _, chosen = select_top_half(topics, scores)
        layers.append({
            "layer": l,
            "n_topics": len(topics),
            "npmi_mean": float(scores.mean()),
            "npmi_top_half_mean": float(scores[chosen].mean()),
            "topic_diversity": topic_diversity(topics, top_n=min(top_n_diversity, vocab_size)),
        })

    clustering = None
    classification = None
    if corpus.has_labels():
        test_idx = corpus.test_indices()
        cluster_idx = test_idx if test_idx.size else np.arange(len(corpus.documents))
        feats = infer_document_features(corpus.dense_matrix(cluster_idx), params, buffers, config)
        y = corpus.labels()[cluster_idx]
        k = k_clusters if k_clusters is not None else int(np.unique(corpus.labels()).size)
        result = kmeans_cluster(feats, k=k, seed=seed)
        clustering = {
            "k": k,
            "purity": purity(result.labels, y),
            "nmi": nmi(result.labels, y),
        }
        train_idx = corpus.train_indices()
        if test_idx.size and np.unique(corpus.labels()[train_idx]).size >= 2:
            train_feats = infer_document_features(
                corpus.dense_matrix(train_idx), params, buffers, config
            )
            test_feats = infer_document_features(
                corpus.dense_matrix(test_idx), params, buffers, config
            )
            accuracy = classify_linear(
                train_feats, corpus.labels()[train_idx],
                test_feats, corpus.labels()[test_idx], seed=seed,
            )
            classification = {"accuracy": accuracy}

    return MetricReport(
        layers=layers,
        clustering=clustering,
        classification=classification,
        seed=seed,
        config_digest=config_digest(config),
    )
