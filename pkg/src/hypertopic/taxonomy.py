"""Prior concept taxonomy: construction, validation, and contrastive sampling.

A taxonomy is a forest of concept nodes arranged in layers 1..L (layer 1 is
the root side) plus leaf attachments mapping vocabulary word indices to a
parent concept at layer L.  Construction reads hypernym-path files (one line
per word, concepts listed leaf-to-root) and keeps the L layers closest to the
roots; words with deeper paths attach directly to their layer-L ancestor,
words with shallower paths are left unattached.

Node handles: concepts occupy handles ``0..n_concepts-1`` (their ids); the
attached words follow in ascending word-index order.  Embedding matrices
passed to the negative sampler must align with this handle order.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, DataValidationError
from .geometry import Geometry, pairwise_scores

__all__ = [
    "ConceptNode",
    "ConceptTaxonomy",
    "build_from_hypernym_paths",
    "validate",
    "negatives_of",
    "rank_negatives",
    "save_taxonomy",
    "load_taxonomy",
]


@dataclass(frozen=True)
class ConceptNode:
    """One concept: id is also its handle; parent is None for layer-1 roots."""

    id: int
    name: str
    layer: int
    parent: int | None


class ConceptTaxonomy:
    """Immutable concept forest with word-leaf attachments at layer ``depth``."""

    def __init__(self, depth: int, nodes: list[ConceptNode], leaf_parent: dict[int, int]):
        if depth < 1:
            raise DataValidationError(f"depth must be >= 1, got {depth}")
        self.depth = depth
        self.nodes = list(nodes)
        self.leaf_parent = dict(leaf_parent)
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise DataValidationError(f"node id {node.id} does not match position {i}")
        self._children: list[list[int]] = [[] for _ in self.nodes]
        for node in self.nodes:
            # out-of-range parents are tolerated here so validate() can name them
            if node.parent is not None and 0 <= node.parent < len(self.nodes):
                self._children[node.parent].append(node.id)
        self._attached_words = np.array(sorted(self.leaf_parent), dtype=np.int64)
        self._word_handle = {
            int(w): len(self.nodes) + i for i, w in enumerate(self._attached_words)
        }
        self._leaf_children: dict[int, list[int]] = {}
        for w in self._attached_words:
            self._leaf_children.setdefault(self.leaf_parent[int(w)], []).append(int(w))

    # -- structure --------------------------------------------------------

    @property
    def n_concepts(self) -> int:
        return len(self.nodes)

    def node_count(self) -> int:
        """Concepts plus attached word leaves; the embedding-row count."""
        return len(self.nodes) + self._attached_words.size

    def attached_word_indices(self) -> np.ndarray:
        return self._attached_words.copy()

    def concepts_in_layer(self, layer: int) -> list[ConceptNode]:
        return [n for n in self.nodes if n.layer == layer]

    def layer_sizes(self) -> list[int]:
        sizes = [0] * self.depth
        for n in self.nodes:
            sizes[n.layer - 1] += 1
        return sizes

    def children_of(self, concept_id: int) -> list[int]:
        return list(self._children[concept_id])

    def find_concept(self, name: str, layer: int | None = None) -> ConceptNode:
        for n in self.nodes:
            if n.name == name and (layer is None or n.layer == layer):
                return n
        raise KeyError(name)

    # -- handles ------------------------------------------------------------

    def word_handle(self, word_index: int) -> int | None:
        """Handle of an attached word leaf, or None when uncovered."""
        return self._word_handle.get(int(word_index))

    def handle_name(self, handle: int, vocabulary=None) -> str:
        if handle < len(self.nodes):
            return self.nodes[handle].name
        w = int(self._attached_words[handle - len(self.nodes)])
        return vocabulary[w] if vocabulary is not None else f"word_{w}"

    def positives_of(self, handle: int) -> set[int]:
        """One-hop neighbors: parent plus children (word leaves included)."""
        n = self.node_count()
        if handle < 0 or handle >= n:
            raise ContractViolationError(f"handle {handle} out of range 0..{n - 1}")
        if handle >= len(self.nodes):
            w = int(self._attached_words[handle - len(self.nodes)])
            return {self.leaf_parent[w]}
        node = self.nodes[handle]
        out = set(self._children[handle])
        for w in self._leaf_children.get(handle, ()):
            out.add(self._word_handle[w])
        if node.parent is not None:
            out.add(node.parent)
        return out

    def word_positives(self, word_index: int) -> set[int]:
        """Positive set for a vocabulary word; empty when unattached."""
        h = self.word_handle(word_index)
        return set() if h is None else self.positives_of(h)

    def anchor_handles(self) -> np.ndarray:
        """All handles usable as contrastive anchors (every node)."""
        return np.arange(self.node_count(), dtype=np.int64)


def build_from_hypernym_paths(paths_file, vocabulary, depth: int) -> ConceptTaxonomy:
    """Build a taxonomy from a hypernym-paths file.

    Line format: ``<word>\\t<concept1>><concept2>>...><root>`` (leaf-to-root).
    Only the L=``depth`` concept layers closest to the roots are kept; a word
    with a deeper path attaches to its layer-L ancestor, and a word whose
    path is shallower than L gets no attachment.  The first line mentioning a
    word wins; later lines for it are ignored.  Concepts are deduplicated by
    their full root-ward prefix, which forces a tree even when the source
    relation is a DAG.
    """
    if depth < 1:
        raise DataValidationError(f"depth must be >= 1, got {depth}")
    nodes: list[ConceptNode] = []
    by_prefix: dict[tuple[str, ...], int] = {}
    leaf_parent: dict[int, int] = {}
    seen_words: set[str] = set()

    with open(paths_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            word, _, path_text = line.partition("\t")
            if not path_text:
                raise DataValidationError(f"paths line {lineno}: expected '<word>\\t<path>'")
            if word in seen_words:
                continue
            seen_words.add(word)
            concepts = [c for c in path_text.split(">") if c]
            if len(set(concepts)) != len(concepts):
                raise DataValidationError(
                    f"paths line {lineno}: cyclic path for {word!r}"
                )
            if word not in vocabulary:
                warnings.warn(f"paths line {lineno}: word {word!r} not in vocabulary; skipped")
                continue
            rootward = concepts[::-1][:depth]
            parent: int | None = None
            prefix: tuple[str, ...] = ()
            for layer, name in enumerate(rootward, start=1):
                prefix = prefix + (name,)
                node_id = by_prefix.get(prefix)
                if node_id is None:
                    node_id = len(nodes)
                    nodes.append(ConceptNode(node_id, name, layer, parent))
                    by_prefix[prefix] = node_id
                parent = node_id
            if len(concepts) >= depth:
                leaf_parent[vocabulary.index_of(word)] = parent
    return ConceptTaxonomy(depth, nodes, leaf_parent)


def validate(taxonomy: ConceptTaxonomy, vocabulary) -> dict:
    """Structural check plus coverage/orphan report.

    Violations of the layer/parent invariants raise; orphans (concepts with
    nothing below them) and uncovered vocabulary are reported, not errors.
    """
    violations: list[str] = []
    n = len(taxonomy.nodes)
    for node in taxonomy.nodes:
        if node.parent is None:
            if node.layer != 1:
                violations.append(f"node {node.id}: root at layer {node.layer}")
        else:
            if node.parent < 0 or node.parent >= n:
                violations.append(f"node {node.id}: missing parent {node.parent}")
            elif taxonomy.nodes[node.parent].layer != node.layer - 1:
                violations.append(
                    f"node {node.id}: layer {node.layer} under parent at layer "
                    f"{taxonomy.nodes[node.parent].layer}"
                )
    for word, parent in taxonomy.leaf_parent.items():
        if parent < 0 or parent >= n:
            violations.append(f"word {word}: missing parent {parent}")
        elif taxonomy.nodes[parent].layer != taxonomy.depth:
            violations.append(
                f"word {word}: parent {parent} at layer {taxonomy.nodes[parent].layer}, "
                f"expected {taxonomy.depth}"
            )
        if word < 0 or word >= len(vocabulary):
            violations.append(f"word {word}: outside vocabulary")
    if violations:
        raise DataValidationError("taxonomy structure invalid: " + "; ".join(violations))

    orphans = [
        node.id
        for node in taxonomy.nodes
        if not taxonomy.children_of(node.id)
        and not taxonomy._leaf_children.get(node.id)
    ]
    covered = taxonomy.attached_word_indices().size
    return {
        "violations": [],
        "orphans": orphans,
        "coverage": covered / len(vocabulary) if len(vocabulary) else 0.0,
        "layer_sizes": taxonomy.layer_sizes(),
        "attached_words": int(covered),
    }


def rank_negatives(
    taxonomy: ConceptTaxonomy,
    points: np.ndarray,
    geometry: Geometry,
    c: float | None,
    m: int = 256,
    anchors: np.ndarray | None = None,
    chunk: int = 512,
) -> np.ndarray:
    """Top-m hard negatives for each anchor, ranked by similarity score.

    ``points`` rows align with taxonomy handles.  The anchor itself and its
    one-hop neighbors are excluded.  Rows of the result hold handles in
    non-increasing score order, padded with -1 when fewer than m candidates
    exist.  Score ties break toward the lower handle.
    """
    if m < 1:
        raise ContractViolationError(f"m must be >= 1, got {m}")
    n = taxonomy.node_count()
    if points.shape[0] != n:
        raise ContractViolationError(
            f"points rows ({points.shape[0]}) must match node count ({n})"
        )
    if anchors is None:
        anchors = taxonomy.anchor_handles()
    out = np.full((anchors.size, min(m, n - 1)), -1, dtype=np.int64)
    for start in range(0, anchors.size, chunk):
        part = anchors[start : start + chunk]
        scores = pairwise_scores(points[part], points, geometry, c)
        for row, a in enumerate(part):
            banned = taxonomy.positives_of(int(a))
            banned.add(int(a))
            s = scores[row].copy()
            s[list(banned)] = -np.inf
            live = n - len(banned)
            take = min(m, live)
            if take <= 0:
                continue
            if take < live:
                cand = np.argpartition(-s, take - 1)[:take]
            else:
                cand = np.flatnonzero(s > -np.inf)
            order = np.lexsort((cand, -s[cand]))
            out[start + row, :take] = cand[order]
    return out


def negatives_of(
    taxonomy: ConceptTaxonomy,
    anchor: int,
    points: np.ndarray,
    geometry: Geometry,
    c: float | None,
    m: int = 256,
) -> np.ndarray:
    """Single-anchor negative list; reference form of :func:`rank_negatives`."""
    row = rank_negatives(taxonomy, points, geometry, c, m=m, anchors=np.array([anchor]))[0]
    return row[row >= 0]


def save_taxonomy(taxonomy: ConceptTaxonomy, path) -> None:
    payload = {
        "depth": taxonomy.depth,
        "nodes": [
            {"id": n.id, "name": n.name, "layer": n.layer, "parent": n.parent}
            for n in taxonomy.nodes
        ],
        "leaves": [
            {"word_index": int(w), "parent": int(p)}
            for w, p in sorted(taxonomy.leaf_parent.items())
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_taxonomy(path) -> ConceptTaxonomy:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"taxonomy file {path}: {exc}") from None
    try:
        nodes = [
            ConceptNode(int(n["id"]), str(n["name"]), int(n["layer"]),
                        None if n["parent"] is None else int(n["parent"]))
            for n in payload["nodes"]
        ]
        leaf_parent = {int(e["word_index"]): int(e["parent"]) for e in payload["leaves"]}
        return ConceptTaxonomy(int(payload["depth"]), nodes, leaf_parent)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataValidationError(f"taxonomy file {path}: malformed ({exc})") from None
