"""Command-line interface: ingestion, taxonomy building, training, evaluation.

One binary ties the library together so a full run is a short shell recipe:

    hypertopic ingest --vocab vocab.txt --docs docs.txt
    hypertopic build-taxonomy --hypernyms paths.tsv --vocab vocab.txt --out tax.json
    hypertopic train --vocab vocab.txt --docs docs.txt --taxonomy tax.json \\
        --layers-from-taxonomy --out run/
    hypertopic eval --checkpoint run/checkpoint --vocab vocab.txt --docs docs.txt

Flag resolution is three layers deep: explicit flags beat values from an
optional ``--config`` key=value file, which beat built-in defaults.  Every
output file starts with a reproducibility header (seed, config digest,
version).  Relative input paths are also looked up under $HYPERTOPIC_DATA_DIR
when they do not exist locally.

Exit codes: 0 success, 2 usage error, 3 data/validation error, 4 numerical
abort during training.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .corpus import Vocabulary, corpus_stats, load_corpus
from .errors import (
    ContractViolationError,
    DataValidationError,
    TrainingStepError,
)
from .evaluation import (
    TopicSet,
    config_digest,
    evaluate_model,
    export_embedding_coords,
    write_top_words_tsv,
)
from .model import EmbeddingSet, ModelConfig, build_topic_hierarchy
from .taxonomy import build_from_hypernym_paths, load_taxonomy, save_taxonomy
from .taxonomy import validate as validate_taxonomy
from .trainer import TrainSettings, load_checkpoint, train

__all__ = ["CommandConfig", "resolve_command_config", "run", "main"]

DATA_DIR_ENV = "HYPERTOPIC_DATA_DIR"

MODES = ("flat", "hierarchical")
GEOMETRIES = ("poincare", "lorentz", "euclidean")

# Built-in defaults, the bottom layer of flag resolution.  Help text quotes
# these so --help stays the single authoritative listing.
DEFAULTS = {
    "mode": "hierarchical",
    "geometry": "poincare",
    "curvature": -1.0,
    "dim": 50,
    "hidden": 300,
    "lr": 0.01,
    "batch_size": 200,
    "epochs": 200,
    "lam": 5.0,
    "tau": 1.0,
    "neg_samples": 256,
    "seed": 0,
    "threads": 1,
    "depth": 2,
    "top_n": 10,
    "checkpoint_every": 0,
    "out": "run",
    "lambdas": "0,1,5",
}

# --out only defaults for the subcommands that write a run directory; the
# others either require it or are stdout-only unless asked to write
SUBCOMMAND_DEFAULTS: dict = {
    "ingest": {"out": None},
    "build-taxonomy": {"out": None},
    "eval": {"out": None},
    "topics": {"out": None},
    "export-embeddings": {"out": None},
}


class _UsageError(Exception):
    """Bad flag combination or config-file content; maps to exit code 2."""


@dataclass(frozen=True)
class CommandConfig:
    """A subcommand plus its fully resolved and validated options."""

    subcommand: str
    options: dict


# -- path and config-file plumbing -----------------------------------------


def _resolve_input(path: str | None) -> str | None:
    """Look up a relative input path under the data-directory env var.

    An absolute path, an existing relative path, or an unset env var all pass
    through unchanged; only a missing relative path with $HYPERTOPIC_DATA_DIR
    set and matching is redirected.  Output paths never go through this.
    """
    if path is None:
        return None
    p = Path(path)
    if p.is_absolute() or p.exists():
        return path
    root = os.environ.get(DATA_DIR_ENV)
    if root:
        candidate = Path(root) / p
        if candidate.exists():
            return str(candidate)
    return path


def _parse_scalar(text: str):
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def _parse_kv_config(path: str) -> dict:
    """Parse a key = value overlay file (comments with #, quoted strings ok)."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq or not key.strip():
                raise _UsageError(f"{path} line {lineno}: expected key = value")
            key = key.strip().replace("-", "_")
            if key == "lambda":
                key = "lam"
            values[key] = _parse_scalar(value.strip())
    return values


def _option_dests(subparser: argparse.ArgumentParser) -> set[str]:
    skip = {"help", "config", "subcommand"}
    return {
        a.dest
        for a in subparser._actions
        if a.dest not in skip and a.dest != argparse.SUPPRESS
    }


def _coerce(dest: str, value):
    """Cast config-file scalars to the type the flag would have produced."""
    if value is None:
        return None
    casts = {
        "curvature": float, "dim": int, "hidden": int, "lr": float,
        "batch_size": int, "epochs": int, "lam": float, "tau": float,
        "neg_samples": int, "seed": int, "threads": int, "depth": int,
        "top_n": int, "checkpoint_every": int,
    }
    bools = {"no_taxonomy", "layers_from_taxonomy"}
    if dest in casts:
        try:
            return casts[dest](value)
        except (TypeError, ValueError):
            raise _UsageError(f"option {dest}: expected a number, got {value!r}") from None
    if dest in bools:
        if isinstance(value, bool):
            return value
        raise _UsageError(f"option {dest}: expected true or false, got {value!r}")
    return str(value)


# -- reproducibility headers ------------------------------------------------


def _options_digest(options: dict) -> str:
    payload = json.dumps({k: str(v) for k, v in sorted(options.items())}).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def _header(seed: int, digest: str) -> dict:
    return {"seed": int(seed), "config_digest": digest, "version": __version__}


def _stamp_json(path, header: dict) -> None:
    """Insert the reproducibility header into an existing JSON file."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    payload["reproducibility"] = header
    Path(path).write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypertopic",
        description=__doc__.split("\n\n")[0],
        epilog=(
            f"Relative input paths missing locally are retried under "
            f"${DATA_DIR_ENV}.  A --config file holds key = value lines "
            "(flag names with - or _); explicit flags win over it."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")

    def common(p):
        p.add_argument("--config", default=None, metavar="FILE",
                       help="key = value overlay file merged under explicit flags")
        p.add_argument("--threads", type=int, default=None, metavar="N",
                       help="worker threads for intra-batch math; never changes "
                            "results (this build always runs deterministic "
                            f"single-threaded kernels) (default: {DEFAULTS['threads']})")

    def corpus_flags(p, splits=True):
        p.add_argument("--vocab", default=None, metavar="FILE",
                       help="vocabulary file, one token per line (required)")
        p.add_argument("--docs", default=None, metavar="FILE",
                       help="documents file: label TAB idx:count ... (required)")
        if splits:
            p.add_argument("--splits", default=None, metavar="FILE",
                           help="split file, one of train/test per document "
                                "(default: all train)")

    p = sub.add_parser("ingest", help="validate corpus files and print stats")
    corpus_flags(p)
    p.add_argument("--label-names", default=None, metavar="FILE",
                   help="optional label-name file, one name per line")
    p.add_argument("--out", default=None, metavar="FILE",
                   help="also write the stats as JSON (default: stdout only)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"seed recorded in the output header (default: {DEFAULTS['seed']})")
    common(p)

    p = sub.add_parser("build-taxonomy", help="hypernym paths -> taxonomy JSON")
    p.add_argument("--hypernyms", default=None, metavar="FILE",
                   help="hypernym-paths file: word TAB c1>c2>...>root (required)")
    p.add_argument("--vocab", default=None, metavar="FILE",
                   help="vocabulary file the words attach to (required)")
    p.add_argument("--depth", type=int, default=None,
                   help=f"concept layers kept below the roots (default: {DEFAULTS['depth']})")
    p.add_argument("--out", default=None, metavar="FILE",
                   help="taxonomy JSON to write (required)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"seed recorded in the output header (default: {DEFAULTS['seed']})")
    common(p)

    def model_flags(p):
        p.add_argument("--mode", default=None, choices=MODES,
                       help=f"decoder family (default: {DEFAULTS['mode']})")
        p.add_argument("--geometry", default=None, choices=GEOMETRIES,
                       help=f"embedding space (default: {DEFAULTS['geometry']})")
        p.add_argument("--curvature", type=float, default=None,
                       help=f"curvature c < 0 of the hyperbolic space "
                            f"(default: {DEFAULTS['curvature']})")
        p.add_argument("--dim", type=int, default=None,
                       help=f"embedding dimension (default: {DEFAULTS['dim']})")
        p.add_argument("--hidden", type=int, default=None,
                       help=f"encoder hidden width (default: {DEFAULTS['hidden']})")
        p.add_argument("--lr", type=float, default=None,
                       help=f"Adam learning rate (default: {DEFAULTS['lr']})")
        p.add_argument("--batch-size", type=int, default=None,
                       help=f"documents per step (default: {DEFAULTS['batch_size']})")
        p.add_argument("--epochs", type=int, default=None,
                       help=f"training epochs (default: {DEFAULTS['epochs']})")
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help=f"taxonomy-guidance weight; 0 disables "
                            f"(default: {DEFAULTS['lam']})")
        p.add_argument("--tau", type=float, default=None,
                       help=f"contrastive temperature (default: {DEFAULTS['tau']})")
        p.add_argument("--neg-samples", type=int, default=None,
                       help=f"negatives per anchor (default: {DEFAULTS['neg_samples']})")
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed for init and batches (default: {DEFAULTS['seed']})")
        p.add_argument("--topics", "--layers", dest="topics", default=None,
                       metavar="K1,K2,...",
                       help="topic-layer widths, root layer first, e.g. 3,9 "
                            "(required unless --layers-from-taxonomy)")
        p.add_argument("--taxonomy", default=None, metavar="FILE",
                       help="taxonomy JSON produced by build-taxonomy")
        p.add_argument("--no-taxonomy", action="store_const", const=True, default=None,
                       help="train knowledge-free even if a taxonomy is configured")
        p.add_argument("--layers-from-taxonomy", action="store_const", const=True,
                       default=None,
                       help="take the layer widths from the taxonomy file")

    def train_flags(p):
        corpus_flags(p)
        model_flags(p)
        p.add_argument("--out", default=None, metavar="DIR",
                       help=f"run directory for checkpoint and log "
                            f"(default: {DEFAULTS['out']})")
        p.add_argument("--checkpoint-every", type=int, default=None, metavar="STEPS",
                       help="also snapshot every N steps (default: "
                            f"{DEFAULTS['checkpoint_every']} = final only)")
        p.add_argument("--resume", default=None, metavar="DIR",
                       help="resume from this checkpoint directory")

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    train_flags(p)
    common(p)

    p = sub.add_parser("eval", help="checkpoint + corpus -> metric report JSON")
    p.add_argument("--checkpoint", default=None, metavar="DIR",
                   help="checkpoint directory to evaluate (required)")
    corpus_flags(p)
    p.add_argument("--label-names", default=None, metavar="FILE",
                   help="optional label-name file, one name per line")
    p.add_argument("--seed", type=int, default=None,
                   help=f"seed for clustering and the classifier "
                        f"(default: {DEFAULTS['seed']})")
    p.add_argument("--out", default=None, metavar="FILE",
                   help="metric report JSON path (default: stdout only)")
    common(p)

    p = sub.add_parser("topics", help="checkpoint -> ranked top-words TSV")
    p.add_argument("--checkpoint", default=None, metavar="DIR",
                   help="checkpoint directory (required)")
    p.add_argument("--vocab", default=None, metavar="FILE",
                   help="vocabulary file for word names (required)")
    p.add_argument("--top-n", type=int, default=None,
                   help=f"words listed per topic (default: {DEFAULTS['top_n']})")
    p.add_argument("--out", default=None, metavar="FILE",
                   help="TSV path to write (required)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"seed recorded in the output header (default: {DEFAULTS['seed']})")
    common(p)

    p = sub.add_parser("export-embeddings", help="checkpoint -> coordinate TSV")
    p.add_argument("--checkpoint", default=None, metavar="DIR",
                   help="checkpoint directory (required)")
    p.add_argument("--vocab", default=None, metavar="FILE",
                   help="vocabulary file for word names (required)")
    p.add_argument("--out", default=None, metavar="FILE",
                   help="TSV path to write (required)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"seed recorded in the output header (default: {DEFAULTS['seed']})")
    common(p)

    p = sub.add_parser("sweep-lambda",
                       help="train/eval once per lambda and tabulate the metrics")
    train_flags(p)
    p.add_argument("--lambdas", default=None, metavar="L1,L2,...",
                   help=f"guidance weights to sweep (default: {DEFAULTS['lambdas']})")
    common(p)

    return parser


# -- resolution and validation ----------------------------------------------


def _positive(options: dict, key: str, strict: bool = True) -> None:
    value = options.get(key)
    if value is None:
        return
    bad = value <= 0 if strict else value < 0
    if bad:
        bound = ">" if strict else ">="
        raise _UsageError(f"option {key} must be {bound} 0, got {value}")


def _require(options: dict, subcommand: str, *keys: str) -> None:
    for key in keys:
        if options.get(key) is None:
            raise _UsageError(f"{subcommand}: --{key.replace('_', '-')} is required")


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        values = [int(piece) for piece in str(text).split(",") if piece.strip()]
    except ValueError:
        raise _UsageError(f"{what}: expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise _UsageError(f"{what}: widths must all be >= 1, got {text!r}")
    return values


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        values = [float(piece) for piece in str(text).split(",") if piece.strip()]
    except ValueError:
        raise _UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise _UsageError(f"{what}: values must all be >= 0, got {text!r}")
    return values


def _validate_options(subcommand: str, options: dict) -> None:
    _positive(options, "lr")
    _positive(options, "tau")
    for key in ("dim", "hidden", "batch_size", "epochs", "neg_samples",
                "threads", "depth", "top_n"):
        _positive(options, key)
    _positive(options, "lam", strict=False)
    _positive(options, "checkpoint_every", strict=False)
    mode = options.get("mode")
    if mode is not None and mode not in MODES:
        raise _UsageError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    geometry = options.get("geometry")
    if geometry is not None and geometry not in GEOMETRIES:
        raise _UsageError(
            f"geometry must be one of {', '.join(GEOMETRIES)}, got {geometry!r}")

    if subcommand == "ingest":
        _require(options, subcommand, "vocab", "docs")
    elif subcommand == "build-taxonomy":
        _require(options, subcommand, "hypernyms", "vocab", "out")
    elif subcommand in ("train", "sweep-lambda"):
        _require(options, subcommand, "vocab", "docs")
        if options["no_taxonomy"] and options.get("taxonomy"):
            raise _UsageError("--no-taxonomy conflicts with --taxonomy")
        if options["layers_from_taxonomy"]:
            if options["no_taxonomy"] or not options.get("taxonomy"):
                raise _UsageError("--layers-from-taxonomy needs --taxonomy")
        elif options.get("topics") is None:
            raise _UsageError(f"{subcommand}: --topics or --layers-from-taxonomy is required")
        if options.get("topics") is not None:
            widths = _parse_int_list(options["topics"], "topics")
            if options["mode"] == "flat" and len(widths) != 1:
                raise _UsageError("flat mode takes exactly one topic width")
        if subcommand == "sweep-lambda":
            lams = _parse_float_list(options["lambdas"], "lambdas")
            if any(l > 0 for l in lams) and (
                    options["no_taxonomy"] or not options.get("taxonomy")):
                raise _UsageError("sweeping a positive lambda needs --taxonomy")
    elif subcommand == "eval":
        _require(options, subcommand, "checkpoint", "vocab", "docs")
    elif subcommand in ("topics", "export-embeddings"):
        _require(options, subcommand, "checkpoint", "vocab", "out")


def resolve_command_config(argv=None) -> CommandConfig:
    """Parse argv, merge the optional config file in, validate everything.

    Resolution order per option: explicit flag, then config-file value, then
    the built-in default.  Raises ``_UsageError`` (exit 2) before any work
    happens when a flag, combination, or config-file key is invalid.
    """
    parser = build_parser()
    ns = parser.parse_args(argv)
    sub_actions = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_actions.choices[ns.subcommand]
    dests = _option_dests(subparser)

    file_values: dict = {}
    if ns.config is not None:
        config_path = _resolve_input(ns.config)
        try:
            file_values = _parse_kv_config(config_path)
        except OSError as exc:
            raise _UsageError(f"cannot read config file: {exc}") from None
        unknown = sorted(set(file_values) - dests)
        if unknown:
            raise _UsageError(
                f"config file sets unknown option(s): {', '.join(unknown)}")

    options: dict = {}
    overrides = SUBCOMMAND_DEFAULTS.get(ns.subcommand, {})
    for dest in dests:
        flag_value = getattr(ns, dest)
        if flag_value is not None:
            options[dest] = flag_value
        elif dest in file_values:
            options[dest] = _coerce(dest, file_values[dest])
        elif dest in overrides:
            options[dest] = overrides[dest]
        else:
            options[dest] = DEFAULTS.get(dest)
    for dest in ("no_taxonomy", "layers_from_taxonomy"):
        if dest in options and options[dest] is None:
            options[dest] = False

    _validate_options(ns.subcommand, options)
    return CommandConfig(subcommand=ns.subcommand, options=options)


# -- subcommand bodies -------------------------------------------------------


def _load_corpus_from(options: dict):
    label_names = None
    if options.get("label_names"):
        with open(_resolve_input(options["label_names"]), encoding="utf-8") as fh:
            label_names = [line.rstrip("\n") for line in fh if line.strip()]
    return load_corpus(
        _resolve_input(options["vocab"]),
        _resolve_input(options["docs"]),
        split_path=_resolve_input(options.get("splits")),
        label_names=label_names,
    )


def cmd_ingest(options: dict) -> int:
    corpus = _load_corpus_from(options)
    stats = corpus_stats(corpus)
    payload = {
        "reproducibility": _header(options["seed"], _options_digest(options)),
        **stats,
    }
    text = json.dumps(payload, indent=1, sort_keys=True)
    print(text)
    if options.get("out"):
        Path(options["out"]).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_build_taxonomy(options: dict) -> int:
    with open(_resolve_input(options["vocab"]), encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    vocabulary = Vocabulary(tokens)
    taxonomy = build_from_hypernym_paths(
        _resolve_input(options["hypernyms"]), vocabulary, depth=options["depth"])
    report = validate_taxonomy(taxonomy, vocabulary)
    save_taxonomy(taxonomy, options["out"])
    _stamp_json(options["out"], _header(options["seed"], _options_digest(options)))
    print(json.dumps(report, indent=1, sort_keys=True, default=str))
    return 0


def _build_model_config(options: dict, taxonomy) -> ModelConfig:
    if options["layers_from_taxonomy"]:
        widths_root_first = list(taxonomy.layer_sizes())
        if options.get("topics") is not None:
            stated = _parse_int_list(options["topics"], "topics")
            if stated != widths_root_first:
                raise _UsageError(
                    f"--topics {stated} disagrees with taxonomy layers "
                    f"{widths_root_first}")
    else:
        widths_root_first = _parse_int_list(options["topics"], "topics")
    return ModelConfig(
        mode=options["mode"],
        topics=tuple(reversed(widths_root_first)),
        dim=options["dim"],
        geometry=options["geometry"],
        curvature=options["curvature"],
        hidden=options["hidden"],
        tau=options["tau"],
        lam=options["lam"],
        neg_samples=options["neg_samples"],
    )


def _train_once(options: dict, corpus, taxonomy, out_dir: Path,
                lam: float | None = None) -> tuple:
    opts = dict(options)
    if lam is not None:
        opts["lam"] = lam
    config = _build_model_config(opts, taxonomy)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"
    header = _header(opts["seed"], config_digest(config))
    log_path.write_text(json.dumps({"reproducibility": header}) + "\n", encoding="utf-8")
    settings = TrainSettings(
        epochs=opts["epochs"],
        batch_size=opts["batch_size"],
        lr=opts["lr"],
        seed=opts["seed"],
        checkpoint_dir=str(out_dir),
        checkpoint_every=opts["checkpoint_every"],
        log_path=str(log_path),
    )
    run_state = train(
        corpus, config,
        taxonomy=None if opts["no_taxonomy"] else taxonomy,
        settings=settings,
        resume_from=_resolve_input(opts.get("resume")),
    )
    return run_state, config, header


def cmd_train(options: dict) -> int:
    corpus = _load_corpus_from(options)
    taxonomy = None
    if not options["no_taxonomy"] and options.get("taxonomy"):
        taxonomy = load_taxonomy(_resolve_input(options["taxonomy"]))
    out_dir = Path(options["out"])
    run_state, config, header = _train_once(options, corpus, taxonomy, out_dir)
    final = run_state.history[-1] if run_state.history else {}
    print(json.dumps({
        "reproducibility": header,
        "steps": run_state.step,
        "epochs_completed": run_state.epoch + 1 if run_state.step else 0,
        "final_total_loss": final.get("total"),
        "checkpoint": str(out_dir / "latest"),
    }, indent=1, sort_keys=True))
    return 0


def _load_checkpoint_for(options: dict) -> dict:
    return load_checkpoint(_resolve_input(options["checkpoint"]))


def _check_vocab_match(state: dict, vocab_size: int) -> None:
    if state["vocab_size"] != vocab_size:
        raise DataValidationError(
            f"checkpoint was trained with vocab size {state['vocab_size']}, "
            f"corpus has {vocab_size}")


def cmd_eval(options: dict) -> int:
    state = _load_checkpoint_for(options)
    corpus = _load_corpus_from(options)
    _check_vocab_match(state, len(corpus.vocabulary))
    report = evaluate_model(
        corpus, state["params"], state["buffers"], state["config"],
        seed=options["seed"])
    payload = {
        "reproducibility": _header(options["seed"], config_digest(state["config"])),
        **report.to_dict(),
    }
    text = json.dumps(payload, indent=1, sort_keys=True)
    print(text)
    if options.get("out"):
        Path(options["out"]).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_topics(options: dict) -> int:
    state = _load_checkpoint_for(options)
    with open(_resolve_input(options["vocab"]), encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    vocabulary = Vocabulary(tokens)
    _check_vocab_match(state, len(vocabulary))
    embeddings = EmbeddingSet.from_params(state["params"], state["config"])
    hierarchy = build_topic_hierarchy(embeddings, top_n=options["top_n"])
    topic_sets = [
        TopicSet.from_distribution(dist, top_n=options["top_n"])
        for dist in hierarchy.word_distributions
    ]
    header = _header(options["seed"], config_digest(state["config"]))
    write_top_words_tsv(topic_sets, vocabulary, options["out"], header=header)
    n_topics = sum(len(ts) for ts in topic_sets)
    print(f"wrote {n_topics} topics x {options['top_n']} words to {options['out']}")
    return 0


def cmd_export_embeddings(options: dict) -> int:
    state = _load_checkpoint_for(options)
    with open(_resolve_input(options["vocab"]), encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    vocabulary = Vocabulary(tokens)
    _check_vocab_match(state, len(vocabulary))
    embeddings = EmbeddingSet.from_params(state["params"], state["config"])
    header = _header(options["seed"], config_digest(state["config"]))
    rows = export_embedding_coords(embeddings, vocabulary, options["out"], header=header)
    print(f"wrote {rows} embedding rows to {options['out']}")
    return 0


def cmd_sweep_lambda(options: dict) -> int:
    corpus = _load_corpus_from(options)
    taxonomy = None
    if not options["no_taxonomy"] and options.get("taxonomy"):
        taxonomy = load_taxonomy(_resolve_input(options["taxonomy"]))
    lams = _parse_float_list(options["lambdas"], "lambdas")
    out_dir = Path(options["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for lam in lams:
        run_dir = out_dir / f"lambda_{lam:g}"
        run_state, config, _ = _train_once(options, corpus, taxonomy, run_dir, lam=lam)
        report = evaluate_model(
            corpus, run_state.params, run_state.buffers, config,
            seed=options["seed"])
        first = report.layers[0]
        row = {
            "lambda": lam,
            "npmi_mean": round(first["npmi_mean"], 4),
            "npmi_top_half": round(first["npmi_top_half_mean"], 4),
            "topic_diversity": round(first["topic_diversity"], 4),
            "purity": None if report.clustering is None
            else round(report.clustering["purity"], 4),
            "nmi": None if report.clustering is None
            else round(report.clustering["nmi"], 4),
            "accuracy": None if report.classification is None
            else round(report.classification["accuracy"], 4),
        }
        rows.append(row)

    header = _header(options["seed"], _options_digest(options))
    columns = list(rows[0].keys())
    lines = ["# " + json.dumps(header, sort_keys=True), "\t".join(columns)]
    for row in rows:
        lines.append("\t".join("" if row[c] is None else str(row[c]) for c in columns))
    table_path = out_dir / "sweep.tsv"
    table_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    print(f"wrote {table_path}")
    return 0


# -- entry points -------------------------------------------------------------


_DISPATCH = {
    "ingest": cmd_ingest,
    "build-taxonomy": cmd_build_taxonomy,
    "train": cmd_train,
    "eval": cmd_eval,
    "topics": cmd_topics,
    "export-embeddings": cmd_export_embeddings,
    "sweep-lambda": cmd_sweep_lambda,
}


def run(argv=None) -> int:
    """Execute one CLI invocation and return its exit code."""
    try:
        command = resolve_command_config(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _DISPATCH[command.subcommand](command.options)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataValidationError, ContractViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TrainingStepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
