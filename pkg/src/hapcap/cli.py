"""Command-line surface binding the pipeline end to end.

Subcommands: augment, filter, features, stats, train, grid, eval,
zeroshot, plus `synth` for generating a demo corpus. Every command is
deterministic given its inputs, flags, and seed, and writes a
reproducibility stamp (config, seed, and content hashes of inputs) next
to its outputs. The seed falls back to the HAPCAP_SEED environment
variable when --seed is not given.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset as ds
from . import signal_io
from .encoders import (
    EncoderDims, build_vocab, init_encoder_state, load_state, save_state,
    text_embedding_fn,
)
from .errors import InvalidInputError
from .features import export_feature_table
from .retrieval import evaluate_run, zero_shot_matrix
from .signals import augment_suite, normalize_duration
from .synth import make_corpus
from .training import TrainConfig, grid_search, train

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = TrainConfig()


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    return int(os.environ.get("HAPCAP_SEED", "0"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_hashes(paths) -> dict[str, str]:
    hashes: dict[str, str] = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file():
                    hashes[str(f)] = _sha256(f)
        elif p.is_file():
            hashes[str(p)] = _sha256(p)
    return hashes


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_stamp(out_dir: Path, command: str, config: dict, seed: int, inputs) -> Path:
    """Reproducibility stamp: flags, seed, and a content hash per input file."""
    body = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": _input_hashes(inputs),
    }
    body["stamp_hash"] = hashlib.sha256(
        json.dumps(body, sort_keys=True).encode()
    ).hexdigest()
    stamp_path = out_dir / "stamp.json"
    _write_json(stamp_path, body)
    return stamp_path


def _load_corpus(captions_path, signals_dir):
    captions = ds.load_captions(captions_path)
    signals = signal_io.load_signal_dir(signals_dir)
    signals = [normalize_duration(s) for s in signals]
    pairs = ds.build_pairs(captions, signals)
    return captions, {s.id: s for s in signals}, pairs


def _train_config_from_args(args, seed) -> TrainConfig:
    return TrainConfig(
        alpha=args.alpha, tau=args.tau, n=args.n, m=args.m,
        batch_size=args.batch_size, epochs=args.epochs, seed=seed,
        kappa=args.kappa, k=args.k, category_scope=args.category,
    )


def _dims_from_args(args) -> EncoderDims:
    return EncoderDims(d1=args.d, d2=args.d, d=args.d)


def _config_dict(config: TrainConfig, **extra) -> dict:
    body = {
        "alpha": config.alpha, "tau": config.tau, "n": config.n, "m": config.m,
        "batch_size": config.batch_size, "epochs": config.epochs,
        "kappa": config.kappa, "k": config.k, "category": config.category_scope,
    }
    body.update(extra)
    return body


def cmd_augment(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    signals_dir = Path(args.signals_dir)
    files = sorted(
        p for p in signals_dir.iterdir() if p.suffix.lower() in (".wav", ".csv")
    ) if signals_dir.is_dir() else []

    manifest: dict = {"seed": seed, "signals": [], "errors": []}
    if not files:
        logger.warning("no signal files found in %s", signals_dir)
    for path in files:
        try:
            original = normalize_duration(signal_io.read_signal(path))
            variants = augment_suite(original, seed)
        except Exception as exc:  # noqa: BLE001 - per-file failures must not stop the run
            logger.error("failed on %s: %s", path.name, exc)
            manifest["errors"].append({"file": path.name, "error": str(exc)})
            continue
        for sig in [original] + variants:
            fname = f"{sig.id}.wav"
            signal_io.write_wav(out_dir / fname, sig)
            manifest["signals"].append({
                "id": sig.id,
                "file": fname,
                "sample_rate": sig.sample_rate,
                "num_samples": int(sig.samples.size),
                "provenance": {
                    "origin": sig.provenance.origin.value,
                    "parent_ids": list(sig.provenance.parent_ids),
                    "op_tag": sig.provenance.op_tag,
                },
            })
    _write_json(out_dir / "manifest.json", manifest)
    write_stamp(out_dir, "augment", {"out_dir": str(args.out_dir)}, seed, [signals_dir])
    print(f"augment: {len(manifest['signals'])} signals written, "
          f"{len(manifest['errors'])} failures")
    return 1 if manifest["errors"] else 0


def cmd_filter(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    captions = ds.load_captions(args.captions)
    if args.checkpoint:
        state = load_state(args.checkpoint)
    else:
        vocab = build_vocab(captions)
        state = init_encoder_state(vocab, EncoderDims(), seed=seed)
    scores = ds.agreement_scores(captions, text_embedding_fn(state))
    kept, removed = ds.filter_low_agreement(captions, scores, args.threshold)

    ds.write_captions(out_dir / "kept.jsonl", kept)
    ds.write_captions(out_dir / "removed.jsonl", removed)
    per_category = {}
    for cat in ds.CATEGORIES:
        per_category[cat.value] = {
            "kept": sum(1 for c in kept if c.category == cat),
            "removed": sum(1 for c in removed if c.category == cat),
        }
    report = {
        "threshold": args.threshold,
        "total": {"kept": len(kept), "removed": len(removed)},
        "per_category": per_category,
        "signals_remaining": len(ds.surviving_signal_ids(kept)),
        "unscored_kept": sum(1 for c in kept if scores.get(c) is None),
    }
    _write_json(out_dir / "filter_report.json", report)
    inputs = [Path(args.captions)] + ([Path(args.checkpoint)] if args.checkpoint else [])
    write_stamp(out_dir, "filter", {"threshold": args.threshold}, seed, inputs)
    print(f"filter: kept {len(kept)}, removed {len(removed)} "
          f"(threshold {args.threshold})")
    return 0


def cmd_features(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    signals = [normalize_duration(s) for s in signal_io.load_signal_dir(args.signals_dir)]
    rows = export_feature_table(signals, out_dir / "features.csv")
    write_stamp(out_dir, "features", {}, seed, [Path(args.signals_dir)])
    print(f"features: {len(rows)} signals -> {out_dir / 'features.csv'}")
    return 0


def cmd_stats(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    captions = ds.load_captions(args.captions)
    stats = {n: ds.diversity_stats(captions, n) for n in (1, 2, 3)}
    out_path = out_dir / "diversity.csv"
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category",
                         "distinct_1", "ngram_1",
                         "distinct_2", "ngram_2",
                         "distinct_3", "ngram_3"])
        for cat in ds.CATEGORIES:
            row = [cat.value]
            for n in (1, 2, 3):
                distinct, mean_ngrams = stats[n].get(cat, (0.0, 0.0))
                row.extend([repr(round(distinct, 6)), repr(round(mean_ngrams, 6))])
            writer.writerow(row)
    write_stamp(out_dir, "stats", {}, seed, [Path(args.captions)])
    print(f"stats: wrote {out_path}")
    return 0


def _write_history_csv(path: Path, history) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "val_p_at_k"])
        for epoch, loss, val in history.rows():
            writer.writerow([epoch, repr(loss), repr(val)])


def cmd_train(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _train_config_from_args(args, seed)
    _, signals, pairs = _load_corpus(args.captions, args.signals_dir)
    split = ds.split_dataset(pairs, seed=seed)
    vocab = build_vocab([p.caption for p in split.train], min_count=args.min_count)
    state = init_encoder_state(vocab, _dims_from_args(args), seed=seed,
                               n_trainable_text=config.n, m_trainable_haptic=config.m)
    trained, history = train(state, split, signals, config)
    save_state(trained, out_dir / "checkpoint.hck")
    _write_history_csv(out_dir / "history.csv", history)
    write_stamp(out_dir, "train", _config_dict(config, d=args.d, min_count=args.min_count),
                seed, [Path(args.captions), Path(args.signals_dir)])
    print(f"train: best epoch {history.best_epoch} "
          f"(val P@{config.k} {history.best_val_p_at_k:.4f}) -> checkpoint.hck")
    return 0


def _parse_list(raw: str, cast):
    return tuple(cast(v) for v in raw.split(",") if v.strip())


def cmd_grid(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = _train_config_from_args(args, seed)
    _, signals, pairs = _load_corpus(args.captions, args.signals_dir)
    split = ds.split_dataset(pairs, seed=seed)
    vocab = build_vocab([p.caption for p in split.train], min_count=args.min_count)
    dims = _dims_from_args(args)

    def factory(cfg: TrainConfig):
        return init_encoder_state(vocab, dims, seed=cfg.seed,
                                  n_trainable_text=cfg.n, m_trainable_haptic=cfg.m)

    alphas = _parse_list(args.alphas, float)
    taus = _parse_list(args.taus, float)
    ns = _parse_list(args.ns, int)
    ms = _parse_list(args.ms, int)
    best, cells = grid_search(split, signals, base, factory, alphas, taus, ns, ms)

    with (out_dir / "grid.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "tau", "n", "m", "status", "val_p_at_k", "best_epoch"])
        for cell in cells:
            a, t, n, m, status, val, epoch = cell.to_row()
            writer.writerow([repr(a), repr(t), n, m, status, repr(val), epoch])
    _write_json(out_dir / "best_config.json", _config_dict(best))
    write_stamp(out_dir, "grid",
                {"alphas": list(alphas), "taus": list(taus),
                 "ns": list(ns), "ms": list(ms)},
                seed, [Path(args.captions), Path(args.signals_dir)])
    print(f"grid: {len(cells)} cells, best alpha={best.alpha:g} tau={best.tau:g} "
          f"n={best.n} m={best.m}")
    return 0


def cmd_eval(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = replace(DEFAULT_CONFIG, k=args.k, kappa=args.kappa, seed=seed,
                     category_scope=args.category)
    state = load_state(args.checkpoint)
    _, signals, pairs = _load_corpus(args.captions, args.signals_dir)
    split = ds.split_dataset(pairs, seed=seed)
    report = evaluate_run(state, split.test, signals, config,
                          collect_per_query=args.per_query)
    _write_json(out_dir / "metrics.json", report.to_dict())
    (out_dir / "metrics.txt").write_text(report.format_table() + "\n")
    if args.per_query:
        with (out_dir / "per_query.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scope", "signal_id", "p_at_k", "r_at_k",
                             "ap_at_k", "ndcg_at_k"])
            for row in report.per_query:
                writer.writerow([row["scope"], row["signal_id"],
                                 repr(row["p_at_k"]), repr(row["r_at_k"]),
                                 repr(row["ap_at_k"]), repr(row["ndcg_at_k"])])
    write_stamp(out_dir, "eval",
                {"k": args.k, "kappa": args.kappa, "category": args.category},
                seed, [Path(args.captions), Path(args.signals_dir), Path(args.checkpoint)])
    print(report.format_table())
    return 0


def cmd_zeroshot(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = replace(DEFAULT_CONFIG, k=args.k, kappa=args.kappa, seed=seed)
    states = {
        "sensory": load_state(args.checkpoint_sensory),
        "emotional": load_state(args.checkpoint_emotional),
        "associative": load_state(args.checkpoint_associative),
    }
    _, signals, pairs = _load_corpus(args.captions, args.signals_dir)
    split = ds.split_dataset(pairs, seed=seed)
    grid = zero_shot_matrix(states, split.test, signals, config)
    _write_json(out_dir / "zeroshot.json", grid.to_dict())
    (out_dir / "zeroshot.txt").write_text(grid.format_table() + "\n")
    write_stamp(out_dir, "zeroshot", {"k": args.k, "kappa": args.kappa}, seed,
                [Path(args.captions), Path(args.signals_dir),
                 Path(args.checkpoint_sensory), Path(args.checkpoint_emotional),
                 Path(args.checkpoint_associative)])
    print(grid.format_table())
    return 0


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out_dir)
    signals_dir = out_dir / "signals"
    signals_dir.mkdir(parents=True, exist_ok=True)
    corpus = make_corpus(
        n_classes=args.classes,
        signals_per_class=args.signals_per_class,
        captions_per_signal=args.captions_per_signal,
        sample_rate=args.sample_rate,
        seed=seed,
    )
    for sig in corpus.signals:
        signal_io.write_wav(signals_dir / f"{sig.id}.wav", sig)
    ds.write_captions(out_dir / "captions.jsonl", corpus.captions)
    write_stamp(out_dir, "synth",
                {"classes": args.classes, "signals_per_class": args.signals_per_class,
                 "captions_per_signal": args.captions_per_signal,
                 "sample_rate": args.sample_rate},
                seed, [])
    print(f"synth: {len(corpus.signals)} signals, {len(corpus.captions)} captions "
          f"-> {out_dir}")
    return 0


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=DEFAULT_CONFIG.alpha)
    parser.add_argument("--tau", type=float, default=DEFAULT_CONFIG.tau)
    parser.add_argument("--n", type=int, default=DEFAULT_CONFIG.n)
    parser.add_argument("--m", type=int, default=DEFAULT_CONFIG.m)
    parser.add_argument("--batch-size", type=int, default=DEFAULT_CONFIG.batch_size)
    parser.add_argument("--epochs", type=int, default=DEFAULT_CONFIG.epochs)
    parser.add_argument("--k", type=int, default=DEFAULT_CONFIG.k)
    parser.add_argument("--kappa", type=float, default=DEFAULT_CONFIG.kappa)
    parser.add_argument("--category", default="all",
                        choices=["all", "sensory", "emotional", "associative"])
    parser.add_argument("--d", type=int, default=64, help="shared embedding dimension")
    parser.add_argument("--min-count", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hapcap",
        description="Vibration-caption retrieval pipeline: augmentation, "
                    "curation, contrastive training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="falls back to HAPCAP_SEED, then 0")
        p.add_argument("--out-dir", required=True)

    p = sub.add_parser("augment", help="write the 8-variant suite per input signal")
    common(p)
    p.add_argument("--signals-dir", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("filter", help="drop low-agreement captions")
    common(p)
    p.add_argument("--captions", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--checkpoint", default=None,
                   help="encoder checkpoint for embeddings (default: fresh seeded encoder)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("features", help="export the waveform feature table")
    common(p)
    p.add_argument("--signals-dir", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("stats", help="caption diversity statistics (distinct-n / n-grams)")
    common(p)
    p.add_argument("--captions", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="contrastive training with early stopping")
    common(p)
    p.add_argument("--captions", required=True)
    p.add_argument("--signals-dir", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    common(p)
    p.add_argument("--captions", required=True)
    p.add_argument("--signals-dir", required=True)
    _add_train_flags(p)
    p.add_argument("--alphas", default="1e-3,1e-4,1e-5")
    p.add_argument("--taus", default="0.07,0.1")
    p.add_argument("--ns", default="1,2,3,4,5")
    p.add_argument("--ms", default="1,2,3,4,5")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="retrieval metrics on the test split")
    common(p)
    p.add_argument("--captions", required=True)
    p.add_argument("--signals-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_CONFIG.k)
    p.add_argument("--kappa", type=float, default=DEFAULT_CONFIG.kappa)
    p.add_argument("--category", default="all",
                   choices=["all", "sensory", "emotional", "associative"])
    p.add_argument("--per-query", action="store_true",
                   help="also dump per-query metric rows as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("zeroshot", help="3x3 cross-category evaluation grid")
    common(p)
    p.add_argument("--captions", required=True)
    p.add_argument("--signals-dir", required=True)
    p.add_argument("--checkpoint-sensory", required=True)
    p.add_argument("--checkpoint-emotional", required=True)
    p.add_argument("--checkpoint-associative", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_CONFIG.k)
    p.add_argument("--kappa", type=float, default=DEFAULT_CONFIG.kappa)
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("synth", help="generate a synthetic demo corpus")
    common(p)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--signals-per-class", type=int, default=12)
    p.add_argument("--captions-per-signal", type=int, default=4)
    p.add_argument("--sample-rate", type=int, default=2000)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
