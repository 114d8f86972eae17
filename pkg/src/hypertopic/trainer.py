"""Training loop with bitwise-reproducible checkpointing.

Reproducibility scheme: every source of randomness is derived from the master
seed and an absolute coordinate (init, epoch index, or global step), never
from mutable generator state.  After each optimizer step all persistent state
(parameters, Adam moments, batch-norm buffers) is rounded to float32, which
is exactly what the checkpoint files store; a resumed run therefore continues
from bit-identical state and replays the identical seed schedule, making
interrupt + resume indistinguishable from an uninterrupted run.

Checkpoints are directories: ``meta.json`` holds shapes, CRCs and the config;
each array lives in its own little-endian float32 ``.bin`` file.  Writes go
to a temporary sibling directory first and are swapped in at the end, so a
crash mid-save never destroys the previous checkpoint.
"""

from __future__ import annotations

import json
import os
import shutil
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import BowCorpus, batches
from .errors import CheckpointError, ContractViolationError, TrainingStepError
from .gradengine import AdamState, ParamStore, adam_step, clip_by_global_norm, evaluate_and_backward
from .knowledge import contrastive_loss_from_params, total_loss
from .model import ModelConfig, elbo_flat_etm, elbo_hierarchical, init_params
from .taxonomy import ConceptTaxonomy

CHECKPOINT_FORMAT_VERSION = 1
TANGENT_CAP = 18.0   # divided by sqrt(-c); keeps exp-map arguments in range

# spawn-key stream ids for deriving child seeds from the master seed
_STREAM_INIT = 0
_STREAM_BATCHES = 1
_STREAM_ELBO = 2
_STREAM_CONTRASTIVE = 3

__all__ = [
    "TrainSettings",
    "TrainRun",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 200
    batch_size: int = 200
    lr: float = 0.01
    seed: int = 0
    clip_norm: float = 10.0
    checkpoint_dir: str | None = None
    checkpoint_every: int = 0      # steps between snapshots; 0 = end only
    log_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractViolationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ContractViolationError("batch_size must be >= 1")
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ContractViolationError("lr and clip_norm must be > 0")


@dataclass
class TrainRun:
    params: ParamStore
    buffers: dict
    adam: AdamState
    config: ModelConfig
    settings: TrainSettings
    step: int
    epoch: int
    history: list = field(default_factory=list)


def _derive_seed(master: int, stream: int, index: int = 0) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(stream, index))
    return int(ss.generate_state(1, np.uint64)[0])


def _quantize_state(params: ParamStore, adam: AdamState, buffers: dict) -> None:
    """Round all persistent state to float32 values held in float64 arrays."""
    for name in params.names():
        params[name] = params[name].astype(np.float32).astype(np.float64)
    for store in (adam.m, adam.v):
        for name in store:
            store[name] = store[name].astype(np.float32).astype(np.float64)
    for name in buffers:
        buffers[name] = buffers[name].astype(np.float32).astype(np.float64)


def _cap_tangent_norms(params: ParamStore, config: ModelConfig) -> None:
    """Rescale embedding rows whose tangent norm would push the exponential
    map into the numerically saturated boundary region."""
    from .geometry import Geometry

    if config.geometry is Geometry.EUCLIDEAN:
        return
    cap = TANGENT_CAP / np.sqrt(-config.curvature)
    for name in params.names():
        if not name.startswith("emb/"):
            continue
        arr = params[name]
        norms = np.linalg.norm(arr, axis=1, keepdims=True)
        scale = np.where(norms > cap, cap / np.maximum(norms, 1e-300), 1.0)
        if np.any(scale < 1.0):
            params[name] = arr * scale


def _check_taxonomy_compatible(config: ModelConfig, taxonomy: ConceptTaxonomy | None):
    if taxonomy is None:
        return
    expected = tuple(reversed(taxonomy.layer_sizes()))
    if expected != config.topics:
        raise ContractViolationError(
            f"taxonomy layer sizes {taxonomy.layer_sizes()} require topics "
            f"{expected} (word-adjacent first); config has {config.topics}"
        )


def train(
    corpus: BowCorpus,
    config: ModelConfig,
    taxonomy: ConceptTaxonomy | None = None,
    settings: TrainSettings = TrainSettings(),
    resume_from: str | None = None,
) -> TrainRun:
    """Run (or resume) optimization and return the final state.

    A step that produces a non-finite loss or gradient raises a training-step
    error without writing anything, so the newest checkpoint on disk always
    holds the last healthy state.
    """
    _check_taxonomy_compatible(config, taxonomy)
    vocab_size = len(corpus.vocabulary)
    master = settings.seed

    if resume_from is not None:
        state = load_checkpoint(resume_from)
        if state["config"] != config:
            raise CheckpointError(
                "checkpoint was written for a different model configuration"
            )
        if state["vocab_size"] != vocab_size:
            raise CheckpointError(
                f"checkpoint vocabulary size {state['vocab_size']} != corpus {vocab_size}"
            )
        if state["master_seed"] != master:
            raise CheckpointError(
                f"checkpoint master seed {state['master_seed']} != settings seed {master}"
            )
        params, adam, buffers = state["params"], state["adam"], state["buffers"]
        start_step = state["step"]
    else:
        params, buffers = init_params(config, vocab_size, _derive_seed(master, _STREAM_INIT))
        adam = AdamState.for_params(params)
        _quantize_state(params, adam, buffers)
        start_step = 0

    use_contrastive = taxonomy is not None and config.lam > 0.0
    n_train = corpus.train_indices().size
    steps_per_epoch = -(-n_train // settings.batch_size)
    total_steps = steps_per_epoch * settings.epochs
    if start_step > total_steps:
        raise CheckpointError(
            f"checkpoint step {start_step} exceeds requested schedule of {total_steps} steps"
        )

    log_fh = open(settings.log_path, "a") if settings.log_path else None
    history: list[dict] = []
    step = start_step
    try:
        batch_iter = batches(
            corpus, settings.batch_size,
            seed=_derive_seed(master, _STREAM_BATCHES), epochs=settings.epochs,
        )
        for _ in range(start_step):
            next(batch_iter)

        for batch_indices in batch_iter:
            t0 = time.perf_counter()
            x = corpus.dense_matrix(batch_indices)
            elbo_seed = _derive_seed(master, _STREAM_ELBO, step)
            contr_seed = _derive_seed(master, _STREAM_CONTRASTIVE, step)
            aux: dict[str, float] = {}

            def loss_program(tensors, batch, rng):
                if config.mode == "hierarchical":
                    elbo, _, _ = elbo_hierarchical(x, tensors, buffers, config, elbo_seed)
                else:
                    elbo, _, _ = elbo_flat_etm(x, tensors, buffers, config, elbo_seed)
                contr = (
                    contrastive_loss_from_params(tensors, taxonomy, config, contr_seed)
                    if use_contrastive
                    else None
                )
                aux["neg_elbo"] = -float(elbo.data)
                aux["contrastive"] = float(contr.data) if contr is not None else 0.0
                return total_loss(elbo, contr, config.lam if use_contrastive else 0.0)

            try:
                loss_value, grads = evaluate_and_backward(loss_program, params)
            except TrainingStepError as err:
                raise TrainingStepError(
                    f"aborting at step {step}: {err}", param=err.param
                ) from err

            grads = clip_by_global_norm(grads, settings.clip_norm)
            adam_step(params, grads, adam, lr=settings.lr)
            _cap_tangent_norms(params, config)
            _quantize_state(params, adam, buffers)
            step += 1

            record = {
                "step": step,
                "epoch": (step - 1) // steps_per_epoch,
                "neg_elbo": aux["neg_elbo"],
                "contrastive": aux["contrastive"],
                "total": float(loss_value),
                "wallclock_ms": (time.perf_counter() - t0) * 1000.0,
            }
            history.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()

            if (
                settings.checkpoint_dir is not None
                and settings.checkpoint_every > 0
                and step % settings.checkpoint_every == 0
            ):
                save_checkpoint(
                    Path(settings.checkpoint_dir) / "latest",
                    params, adam, buffers, config, master, vocab_size, step,
                )
    finally:
        if log_fh is not None:
            log_fh.close()

    if settings.checkpoint_dir is not None:
        save_checkpoint(
            Path(settings.checkpoint_dir) / "latest",
            params, adam, buffers, config, master, vocab_size, step,
        )
    epoch = (step - 1) // steps_per_epoch if step > 0 else 0
    return TrainRun(
        params=params, buffers=buffers, adam=adam, config=config,
        settings=settings, step=step, epoch=epoch, history=history,
    )


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

def _sanitize(name: str) -> str:
    return name.replace("/", "__")


def _write_array(directory: Path, name: str, arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    fname = _sanitize(name) + ".bin"
    (directory / fname).write_bytes(data)
    return {
        "name": name,
        "file": fname,
        "shape": list(arr.shape),
        "crc32": zlib.crc32(data),
    }


def _read_array(directory: Path, entry: dict) -> np.ndarray:
    path = directory / entry["file"]
    if not path.exists():
        raise CheckpointError(f"checkpoint array file missing: {path}")
    data = path.read_bytes()
    expected = int(np.prod(entry["shape"], dtype=np.int64)) * 4
    if len(data) != expected:
        raise CheckpointError(
            f"checkpoint array file corrupted (size): {path}"
        )
    if zlib.crc32(data) != entry["crc32"]:
        raise CheckpointError(
            f"checkpoint array file corrupted (checksum): {path}"
        )
    return (
        np.frombuffer(data, dtype="<f4")
        .reshape(entry["shape"])
        .astype(np.float64)
    )


def save_checkpoint(
    path: str | Path,
    params: ParamStore,
    adam: AdamState,
    buffers: dict,
    config: ModelConfig,
    master_seed: int,
    vocab_size: int,
    step: int,
) -> None:
    """Atomically write the full training state under ``path``."""
    final = Path(path)
    tmp = final.with_name(final.name + f".tmp-{os.getpid()}")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    arrays = []
    for name in params.names():
        arrays.append({"group": "params", **_write_array(tmp, "params/" + name, params[name])})
    for name in sorted(adam.m):
        arrays.append({"group": "adam_m", **_write_array(tmp, "adam_m/" + name, adam.m[name])})
        arrays.append({"group": "adam_v", **_write_array(tmp, "adam_v/" + name, adam.v[name])})
    for name in sorted(buffers):
        arrays.append({"group": "buffers", **_write_array(tmp, "buffers/" + name, buffers[name])})

    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": step,
        "adam_t": adam.t,
        "master_seed": master_seed,
        "vocab_size": vocab_size,
        "config": config.to_dict(),
        "arrays": arrays,
    }
    (tmp / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))

    if final.exists():
        shutil.rmtree(final)
    os.rename(tmp, final)


def load_checkpoint(path: str | Path) -> dict:
    """Read a checkpoint directory back into live training state."""
    directory = Path(path)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise CheckpointError(f"checkpoint metadata missing: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as err:
        raise CheckpointError(f"checkpoint metadata unreadable: {meta_path}: {err}")
    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is incompatible with "
            f"supported version {CHECKPOINT_FORMAT_VERSION}"
        )

    params = ParamStore()
    m: dict[str, np.ndarray] = {}
    v: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for entry in meta["arrays"]:
        arr = _read_array(directory, entry)
        group, name = entry["group"], entry["name"].split("/", 1)[1]
        if group == "params":
            params.add(name, arr)
        elif group == "adam_m":
            m[name] = arr
        elif group == "adam_v":
            v[name] = arr
        elif group == "buffers":
            buffers[name] = arr
        else:
            raise CheckpointError(f"unknown array group {group!r} in {meta_path}")

    if set(m) != set(params.names()) or set(v) != set(params.names()):
        raise CheckpointError(f"checkpoint optimizer state incomplete in {directory}")
    return {
        "params": params,
        "adam": AdamState(m=m, v=v, t=meta["adam_t"]),
        "buffers": buffers,
        "config": ModelConfig.from_dict(meta["config"]),
        "master_seed": meta["master_seed"],
        "vocab_size": meta["vocab_size"],
        "step": meta["step"],
    }
