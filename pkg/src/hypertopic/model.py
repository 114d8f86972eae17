"""Embedded topic models over hyperbolic or Euclidean embedding spaces.

Two decoders share one embedding scheme:

* hierarchical - gamma-Weibull ladder: per document, top-layer weights are
  drawn from a Gamma prior, every lower layer from a Gamma whose shape is the
  connection matrix applied to the layer above, and word counts from a
  Poisson whose rate is the bottom connection matrix applied to the
  bottom-layer weights.  Connection matrices are column-stochastic softmaxes
  of pairwise embedding similarity scores between adjacent layers.
* flat - logistic-normal mixture with per-topic word distributions given by
  a softmax over vocabulary similarity scores.

Embeddings are parameterized as unconstrained tangent vectors at the origin
and pushed onto the manifold with the exponential map, so plain Adam updates
keep every point on-manifold.  All training-path computations are built from
autodiff tensors; numeric wrappers for evaluation reuse the same code with
constant tensors.

Layer indexing: model layer 1 sits next to the words and layer L is the top;
``topics[0]`` is therefore K_1.  A taxonomy of depth L maps its layer j
(1 = root side) onto model layer L + 1 - j.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .autodiff import Tensor, concatenate, constant, gather_rows
from .errors import ContractViolationError, TrainingStepError
from .geometry import (
    Geometry,
    exp_map_origin_arrays,
    tensor_exp_map_origin,
    tensor_pairwise_scores,
)
from .gradengine import ParamStore

EULER_GAMMA = np.euler_gamma
UNIFORM_EPS = 1e-7          # uniform draws clamped into [eps, 1-eps]
RATE_FLOOR = 1e-10          # Poisson rates and Gamma shapes clamped below
# Weibull shape floor: the KL cross term exponentiates lgamma(1 + 1/k), so k
# much below 0.1 overflows exp; 0.1 keeps that term <= e^15 while leaving the
# softplus codomain above the floor untouched in normal operation.
K_FLOOR = 0.1
T_FLOOR = 1e-5
WEIBULL_EXP_BOUND = 80.0    # |ln(E)/k| cap keeps the power finite

__all__ = [
    "ModelConfig",
    "EmbeddingSet",
    "LatentState",
    "FlatLatentState",
    "TopicHierarchy",
    "init_params",
    "compute_phi",
    "compute_phi_tensors",
    "encode",
    "sample_weibull",
    "weibull_mean",
    "kl_weibull_gamma",
    "elbo_hierarchical",
    "elbo_flat_etm",
    "infer_document_features",
    "topic_word_distribution",
    "build_topic_hierarchy",
]


@dataclass(frozen=True)
class ModelConfig:
    """Static model hyperparameters; validated once at construction."""

    mode: str
    topics: tuple[int, ...]
    dim: int = 50
    geometry: Geometry = Geometry.POINCARE
    curvature: float = -1.0
    hidden: int = 300
    gamma: tuple[float, ...] | float = 1.0
    prior_scale: tuple[float, ...] | float = 1.0
    gamma_param: str = "scale"
    tau: float = 1.0
    lam: float = 5.0
    neg_samples: int = 256

    def __post_init__(self):
        object.__setattr__(self, "geometry", Geometry(self.geometry))
        object.__setattr__(self, "topics", tuple(int(k) for k in self.topics))
        if self.mode not in ("flat", "hierarchical"):
            raise ContractViolationError(f"unknown mode {self.mode!r}")
        if self.mode == "flat" and len(self.topics) != 1:
            raise ContractViolationError("flat mode uses exactly one topic layer")
        if not self.topics or any(k < 1 for k in self.topics):
            raise ContractViolationError("all topic counts must be >= 1")
        if self.dim < 1 or self.hidden < 1:
            raise ContractViolationError("dim and hidden must be >= 1")
        if self.tau <= 0:
            raise ContractViolationError("tau must be > 0")
        if self.lam < 0:
            raise ContractViolationError("lambda must be >= 0")
        if self.gamma_param not in ("scale", "rate"):
            raise ContractViolationError(f"gamma_param must be scale or rate")
        if self.geometry is not Geometry.EUCLIDEAN and not self.curvature < 0:
            raise ContractViolationError("hyperbolic geometry needs curvature < 0")

    @property
    def n_layers(self) -> int:
        return len(self.topics)

    def gamma_vector(self) -> np.ndarray:
        """Top-layer prior shape as a length-K_L vector."""
        top = self.topics[-1]
        if isinstance(self.gamma, (int, float)):
            return np.full(top, float(self.gamma))
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.shape != (top,):
            raise ContractViolationError(f"gamma vector must have length {top}")
        return g

    def prior_scale_at(self, layer: int) -> float:
        """Second Gamma slot for the prior of ``layer`` (e^{(layer+1)})."""
        if isinstance(self.prior_scale, (int, float)):
            return float(self.prior_scale)
        scales = tuple(self.prior_scale)
        if len(scales) != self.n_layers:
            raise ContractViolationError(f"prior_scale needs {self.n_layers} entries")
        return float(scales[layer - 1])

    def prior_rate_at(self, layer: int) -> float:
        e = self.prior_scale_at(layer)
        if e <= 0:
            raise ContractViolationError("prior scale/rate values must be > 0")
        return 1.0 / e if self.gamma_param == "scale" else e

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "topics": list(self.topics),
            "dim": self.dim,
            "geometry": self.geometry.value,
            "curvature": self.curvature,
            "hidden": self.hidden,
            "gamma": list(self.gamma) if isinstance(self.gamma, tuple) else self.gamma,
            "prior_scale": list(self.prior_scale)
            if isinstance(self.prior_scale, tuple)
            else self.prior_scale,
            "gamma_param": self.gamma_param,
            "tau": self.tau,
            "lam": self.lam,
            "neg_samples": self.neg_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["topics"] = tuple(d["topics"])
        if isinstance(d.get("gamma"), list):
            d["gamma"] = tuple(d["gamma"])
        if isinstance(d.get("prior_scale"), list):
            d["prior_scale"] = tuple(d["prior_scale"])
        return cls(**d)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), (fan_in, fan_out))


def init_params(config: ModelConfig, vocab_size: int, seed: int):
    """Fresh parameters and batch-norm buffers; deterministic in the seed.

    Embedding tangents start at Normal(0, 0.01^2) so all points begin near
    the origin, where the distance functions are best conditioned.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    params = ParamStore()
    buffers: dict[str, np.ndarray] = {}
    V, H, D = vocab_size, config.hidden, config.dim

    params.add("emb/word", rng.normal(0.0, 0.01, (V, D)))
    for l, k in enumerate(config.topics, start=1):
        params.add(f"emb/topic{l}", rng.normal(0.0, 0.01, (k, D)))

    n_blocks = config.n_layers if config.mode == "hierarchical" else 1
    for l in range(1, n_blocks + 1):
        fan_in = V if l == 1 else H
        params.add(f"enc/up{l}/w1", _glorot(rng, fan_in, H))
        params.add(f"enc/up{l}/b1", np.zeros(H))
        params.add(f"enc/up{l}/bn_gamma", np.ones(H))
        params.add(f"enc/up{l}/bn_beta", np.zeros(H))
        params.add(f"enc/up{l}/w2", _glorot(rng, H, H))
        params.add(f"enc/up{l}/b2", np.zeros(H))
        buffers[f"enc/up{l}/bn_mean"] = np.zeros(H)
        buffers[f"enc/up{l}/bn_var"] = np.ones(H)

    if config.mode == "hierarchical":
        for l, k in enumerate(config.topics, start=1):
            # head input: prior mix (length K_l) concatenated with h^(l)
            params.add(f"enc/k{l}/w", _glorot(rng, k + H, k))
            params.add(f"enc/k{l}/b", np.zeros(k))
            params.add(f"enc/t{l}/w", _glorot(rng, k + H, k))
            params.add(f"enc/t{l}/b", np.zeros(k))
    else:
        k = config.topics[0]
        params.add("enc/mu/w", _glorot(rng, H, k))
        params.add("enc/mu/b", np.zeros(k))
        params.add("enc/logvar/w", _glorot(rng, H, k))
        params.add("enc/logvar/b", np.zeros(k))
    return params, buffers


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingSet:
    """Tangent-space embedding parameters for words and every topic layer."""

    geometry: Geometry
    curvature: float
    word_tangents: np.ndarray
    topic_tangents: list[np.ndarray]

    @classmethod
    def from_params(cls, params: ParamStore, config: ModelConfig) -> "EmbeddingSet":
        return cls(
            geometry=config.geometry,
            curvature=config.curvature,
            word_tangents=params["emb/word"].copy(),
            topic_tangents=[
                params[f"emb/topic{l}"].copy() for l in range(1, config.n_layers + 1)
            ],
        )

    @property
    def n_layers(self) -> int:
        return len(self.topic_tangents)

    def word_points(self) -> np.ndarray:
        return exp_map_origin_arrays(self.word_tangents, self.geometry, self.curvature)

    def topic_points(self, layer: int) -> np.ndarray:
        return exp_map_origin_arrays(
            self.topic_tangents[layer - 1], self.geometry, self.curvature
        )

    def node_points(self, taxonomy) -> np.ndarray:
        """Point matrix aligned with taxonomy handles (concepts then words)."""
        perm, groups = _node_assembly(taxonomy, self.n_layers)
        pieces = [self.topic_points(l)[: len(ids)] for l, ids in groups]
        pieces.append(self.word_points()[taxonomy.attached_word_indices()])
        return np.concatenate(pieces, axis=0)[perm]


def _node_assembly(taxonomy, n_layers: int):
    """Row permutation taking layer-grouped points into handle order.

    Model layer l serves taxonomy layer n_layers + 1 - l; within a layer the
    concept's position follows its insertion order.
    """
    if taxonomy.depth != n_layers:
        raise ContractViolationError(
            f"taxonomy depth {taxonomy.depth} does not match {n_layers} topic layers"
        )
    groups = []
    pos_of_handle = np.empty(taxonomy.node_count(), dtype=np.intp)
    offset = 0
    for j in range(1, taxonomy.depth + 1):
        ids = [n.id for n in taxonomy.concepts_in_layer(j)]
        model_layer = n_layers + 1 - j
        groups.append((model_layer, ids))
        for i, node_id in enumerate(ids):
            pos_of_handle[node_id] = offset + i
        offset += len(ids)
    for i, _w in enumerate(taxonomy.attached_word_indices()):
        pos_of_handle[taxonomy.n_concepts + i] = offset + i
    return pos_of_handle, groups


def node_points_tensor(tensors: dict, config: ModelConfig, taxonomy) -> Tensor:
    """Differentiable version of :meth:`EmbeddingSet.node_points`."""
    perm, groups = _node_assembly(taxonomy, config.n_layers)
    for model_layer, ids in groups:
        if len(ids) != config.topics[model_layer - 1]:
            raise ContractViolationError(
                f"taxonomy layer has {len(ids)} concepts but model layer "
                f"{model_layer} has {config.topics[model_layer - 1]} topics"
            )
    pieces = [
        tensor_exp_map_origin(tensors[f"emb/topic{l}"], config.geometry, config.curvature)
        for l, _ids in groups
    ]
    word_pts = tensor_exp_map_origin(tensors["emb/word"], config.geometry, config.curvature)
    pieces.append(gather_rows(word_pts, taxonomy.attached_word_indices()))
    return gather_rows(concatenate(pieces, axis=0), perm)


# ---------------------------------------------------------------------------
# Connection matrices
# ---------------------------------------------------------------------------

def compute_phi_tensors(tensors: dict, config: ModelConfig) -> list[Tensor]:
    """All connection matrices; entry l-1 holds the (K_{l-1} x K_l) matrix
    linking layer l to the units below it (K_0 = V).  Softmax is taken over
    the lower-layer axis, so every column is a probability distribution."""
    geo, c = config.geometry, config.curvature
    lower = tensor_exp_map_origin(tensors["emb/word"], geo, c)
    phis: list[Tensor] = []
    for l in range(1, config.n_layers + 1):
        upper = tensor_exp_map_origin(tensors[f"emb/topic{l}"], geo, c)
        scores = tensor_pairwise_scores(lower, upper, geo, c)
        if not np.all(np.isfinite(scores.data)):
            raise TrainingStepError(f"non-finite similarity scores at layer {l}")
        phis.append(scores.softmax(axis=0))
        lower = upper
    return phis


def compute_phi(level: int, embeddings: EmbeddingSet) -> np.ndarray:
    """Numeric connection matrix for one level (1-based, K_0 = V)."""
    if level < 1 or level > embeddings.n_layers:
        raise ContractViolationError(f"level {level} out of range 1..{embeddings.n_layers}")
    geo, c = embeddings.geometry, embeddings.curvature
    lower = (
        embeddings.word_points() if level == 1 else embeddings.topic_points(level - 1)
    )
    scores = tensor_pairwise_scores(
        constant(lower), constant(embeddings.topic_points(level)), geo, c
    )
    return scores.softmax(axis=0).data


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------

def _batch_norm(t: Tensor, gamma: Tensor, beta: Tensor, buffers, key, training, momentum=0.9):
    eps = 1e-5
    if training:
        mu = t.mean(axis=0, keepdims=True)
        var = ((t - mu) ** 2.0).mean(axis=0, keepdims=True)
        buffers[key + "_mean"] = momentum * buffers[key + "_mean"] + (1 - momentum) * mu.data[0]
        buffers[key + "_var"] = momentum * buffers[key + "_var"] + (1 - momentum) * var.data[0]
    else:
        mu = constant(buffers[key + "_mean"][None, :])
        var = constant(buffers[key + "_var"][None, :])
    return (t - mu) / (var + eps).sqrt() * gamma + beta


def _mlp_block(t: Tensor, tensors: dict, buffers: dict, block: str, training: bool) -> Tensor:
    h = t @ tensors[f"{block}/w1"] + tensors[f"{block}/b1"]
    h = _batch_norm(
        h, tensors[f"{block}/bn_gamma"], tensors[f"{block}/bn_beta"],
        buffers, f"{block}/bn", training,
    )
    h = h.relu()
    return (h @ tensors[f"{block}/w2"] + tensors[f"{block}/b2"]).relu()


def _upward_features(x: np.ndarray, tensors, buffers, n_blocks: int, training: bool):
    h = constant(np.log1p(x))
    hs = []
    for l in range(1, n_blocks + 1):
        if l == 1:
            h = _mlp_block(h, tensors, buffers, "enc/up1", training)
        else:
            h = h + _mlp_block(h, tensors, buffers, f"enc/up{l}", training)
        hs.append(h)
    return hs


@dataclass
class LatentState:
    """Per-layer Weibull posteriors and their draws (index 0 = layer 1)."""

    ks: list[Tensor]
    ts: list[Tensor]
    thetas: list[Tensor]
    hs: list[Tensor] = field(default_factory=list)


@dataclass
class FlatLatentState:
    mu: Tensor
    logvar: Tensor
    theta: Tensor


def sample_weibull(k: Tensor, t: Tensor, u: np.ndarray) -> Tensor:
    """Reparameterized draw: theta = t * (-ln(1 - u))^(1/k).

    Uniform input is clamped into [1e-7, 1 - 1e-7]; the exponent is capped at
    +-80 so extreme shapes saturate instead of overflowing.
    """
    u = np.clip(np.asarray(u, dtype=np.float64), UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    log_e = np.log(-np.log1p(-u))
    expo = (constant(log_e) * k**-1.0).clamp_min(-WEIBULL_EXP_BOUND).clamp_max(WEIBULL_EXP_BOUND)
    return t * expo.exp()


def weibull_mean(k: Tensor, t: Tensor) -> Tensor:
    """Posterior mean t * Gamma(1 + 1/k), computed through log-gamma."""
    return (t.log() + (k**-1.0 + 1.0).lgamma()).exp()


def kl_weibull_gamma(k, t, alpha, beta) -> Tensor:
    """KL(Weibull(k, t) || Gamma(alpha, rate beta)), elementwise.

    The Gamma second slot here is always a rate; callers converting from a
    scale parameterization divide first.  The cross term beta*t*Gamma(1+1/k)
    runs through log-gamma to dodge overflow at small shapes.
    """
    k = k if isinstance(k, Tensor) else Tensor(k)
    t = t if isinstance(t, Tensor) else Tensor(t)
    alpha = alpha if isinstance(alpha, Tensor) else Tensor(alpha)
    beta = beta if isinstance(beta, Tensor) else Tensor(beta)
    inv_k = k**-1.0
    cross = (t.log() + (inv_k + 1.0).lgamma() + beta.log()).exp()
    # grouped so coinciding distributions cancel exactly in floats, not
    # merely to rounding: each parenthesized term is 0.0 at k=t=alpha=beta=1
    return (
        (alpha * inv_k - 1.0) * EULER_GAMMA
        - alpha * t.log()
        + k.log()
        + (cross - 1.0)
        + alpha.lgamma()
        - alpha * beta.log()
    )


def _check_finite(t: Tensor, what: str):
    if not np.all(np.isfinite(t.data)):
        raise TrainingStepError(f"non-finite {what}")


def encode(
    x: np.ndarray,
    tensors: dict,
    buffers: dict,
    config: ModelConfig,
    phis: list[Tensor],
    uniforms: list[np.ndarray] | None,
    training: bool = True,
) -> LatentState:
    """Ladder encoder: upward deterministic path, then a top-down pass that
    mixes the prior signal into each layer's Weibull parameters.

    ``uniforms`` supplies one (B, K_l) array per layer ordered top-down;
    passing None propagates posterior means instead of samples (inference).
    """
    if config.mode != "hierarchical":
        raise ContractViolationError("encode() is the hierarchical-mode encoder")
    L = config.n_layers
    B = x.shape[0]
    hs = _upward_features(x, tensors, buffers, L, training)
    ks: list[Tensor | None] = [None] * L
    ts: list[Tensor | None] = [None] * L
    thetas: list[Tensor | None] = [None] * L
    for i, l in enumerate(range(L, 0, -1)):
        if l == L:
            prior_feat = constant(np.tile(config.gamma_vector(), (B, 1)))
        else:
            prior_feat = thetas[l] @ phis[l].T
        inp = concatenate([prior_feat, hs[l - 1]], axis=1)
        k = (inp @ tensors[f"enc/k{l}/w"] + tensors[f"enc/k{l}/b"]).softplus().clamp_min(K_FLOOR)
        t = (inp @ tensors[f"enc/t{l}/w"] + tensors[f"enc/t{l}/b"]).softplus().clamp_min(T_FLOOR)
        _check_finite(k, f"posterior shape at layer {l}")
        _check_finite(t, f"posterior scale at layer {l}")
        theta = weibull_mean(k, t) if uniforms is None else sample_weibull(k, t, uniforms[i])
        ks[l - 1], ts[l - 1], thetas[l - 1] = k, t, theta
    return LatentState(ks=ks, ts=ts, thetas=thetas, hs=hs)


def encode_flat(
    x: np.ndarray,
    tensors: dict,
    buffers: dict,
    config: ModelConfig,
    eps: np.ndarray | None,
    training: bool = True,
) -> FlatLatentState:
    """Logistic-normal encoder; ``eps=None`` uses the posterior mode."""
    h = _upward_features(x, tensors, buffers, 1, training)[0]
    mu = h @ tensors["enc/mu/w"] + tensors["enc/mu/b"]
    logvar = (h @ tensors["enc/logvar/w"] + tensors["enc/logvar/b"]).clamp_min(-15.0).clamp_max(15.0)
    _check_finite(mu, "posterior mean")
    z = mu if eps is None else mu + (logvar * 0.5).exp() * constant(eps)
    return FlatLatentState(mu=mu, logvar=logvar, theta=z.softmax(axis=1))


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def _poisson_log_likelihood(x: np.ndarray, rate: Tensor) -> Tensor:
    rate = rate.clamp_min(RATE_FLOOR)
    const_term = gammaln(x + 1.0).sum(axis=1)
    return (constant(x) * rate.log() - rate).sum(axis=1) - constant(const_term)


def elbo_hierarchical(
    x: np.ndarray,
    tensors: dict,
    buffers: dict,
    config: ModelConfig,
    rng_seed: int,
    training: bool = True,
):
    """Single-sample ELBO estimate, averaged over the batch.

    Returns ``(elbo, latent, phis)`` so the trainer can reuse the forward
    products.  The uniform draws come from a generator seeded only by
    ``rng_seed``, making the estimate a pure function of its arguments.
    """
    L = config.n_layers
    B = x.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    uniforms = [rng.random((B, config.topics[l - 1])) for l in range(L, 0, -1)]
    phis = compute_phi_tensors(tensors, config)
    latent = encode(x, tensors, buffers, config, phis, uniforms, training)

    rate = latent.thetas[0] @ phis[0].T
    elbo_docs = _poisson_log_likelihood(x, rate)
    for l in range(1, L + 1):
        if l == L:
            alpha = constant(np.tile(config.gamma_vector(), (B, 1)))
        else:
            alpha = (latent.thetas[l] @ phis[l].T).clamp_min(RATE_FLOOR)
        beta = config.prior_rate_at(l)
        kl = kl_weibull_gamma(latent.ks[l - 1], latent.ts[l - 1], alpha, beta)
        elbo_docs = elbo_docs - kl.sum(axis=1)
    return elbo_docs.mean(), latent, phis


def elbo_flat_etm(
    x: np.ndarray,
    tensors: dict,
    buffers: dict,
    config: ModelConfig,
    rng_seed: int,
    training: bool = True,
):
    """Flat-mode ELBO: multinomial word likelihood minus the Gaussian KL."""
    B = x.shape[0]
    K = config.topics[0]
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    latent = encode_flat(x, tensors, buffers, config, rng.normal(size=(B, K)), training)

    geo, c = config.geometry, config.curvature
    word_pts = tensor_exp_map_origin(tensors["emb/word"], geo, c)
    topic_pts = tensor_exp_map_origin(tensors["emb/topic1"], geo, c)
    beta = tensor_pairwise_scores(topic_pts, word_pts, geo, c).softmax(axis=1)
    mix = (latent.theta @ beta).clamp_min(RATE_FLOOR)
    log_lik = (constant(x) * mix.log()).sum(axis=1)
    kl = ((latent.mu**2.0 + latent.logvar.exp() - latent.logvar - 1.0) * 0.5).sum(axis=1)
    return (log_lik - kl).mean(), latent, [beta]


def infer_document_features(
    x: np.ndarray,
    params: ParamStore,
    buffers: dict,
    config: ModelConfig,
) -> np.ndarray:
    """Deterministic bottom-layer document features for clustering/classification.

    Hierarchical mode propagates posterior means top-down under the running
    batch-norm statistics; flat mode returns softmax(mu).
    """
    tensors = {name: constant(arr) for name, arr in params.items()}
    if config.mode == "flat":
        latent = encode_flat(x, tensors, buffers, config, eps=None, training=False)
        return latent.theta.data
    phis = compute_phi_tensors(tensors, config)
    latent = encode(x, tensors, buffers, config, phis, uniforms=None, training=False)
    return latent.thetas[0].data


# ---------------------------------------------------------------------------
# Topic rendering
# ---------------------------------------------------------------------------

@dataclass
class TopicHierarchy:
    """Rendered topics: per-layer word distributions and ranked word lists."""

    phis: list[np.ndarray]
    word_distributions: list[np.ndarray]   # entry l-1: V x K_l
    top_words: list[list[list[int]]]       # [layer][topic] -> ranked word indices

    def n_layers(self) -> int:
        return len(self.phis)


def topic_word_distribution(phis: list[np.ndarray], level: int, topic: int) -> np.ndarray:
    """Column ``topic`` of the product phi^(1) ... phi^(level)."""
    if level < 1 or level > len(phis):
        raise ContractViolationError(f"level {level} out of range 1..{len(phis)}")
    if topic < 0 or topic >= phis[level - 1].shape[1]:
        raise ContractViolationError(f"topic {topic} out of range")
    product = phis[0]
    for l in range(1, level):
        product = product @ phis[l]
    return product[:, topic]


def build_topic_hierarchy(embeddings: EmbeddingSet, top_n: int = 10) -> TopicHierarchy:
    phis = [compute_phi(l, embeddings) for l in range(1, embeddings.n_layers + 1)]
    dists = []
    product = None
    for phi in phis:
        product = phi if product is None else product @ phi
        dists.append(product.copy())
    top = [
        [np.argsort(-dist[:, j], kind="stable")[:top_n].tolist() for j in range(dist.shape[1])]
        for dist in dists
    ]
    return TopicHierarchy(phis=phis, word_distributions=dists, top_words=top)
