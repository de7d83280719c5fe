"""Command-line entry point.

Every command resolves its configuration (defaults <- ``--config`` file <-
``--set`` / ``--seed`` flags) before doing any work and writes the resolved
configuration as ``config.json`` into ``--out-dir`` next to its artifacts.

Exit codes: 0 success, 2 input/data error, 3 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .augmenter import (
    ChatClient,
    GenerationCache,
    LLMRequestError,
    MissingAugmentation,
    OfflineClient,
    ParseError,
    augment_posts,
    generate_label_descriptions,
    load_label_descriptions,
    read_augmentations,
    run_llm_baseline,
    sample_shots,
    save_label_descriptions,
    write_augmentations,
)
from .config import RunConfig, parse_override
from .corpus import (
    CorpusError,
    DatasetSplit,
    class_stats,
    format_stats,
    parse_dataset,
    preprocess_record,
    read_jsonl,
    split_dataset,
    write_jsonl,
)
from .evaluation import evaluate, predict
from .trainer import CheckpointError, NonFiniteLossError, fit, load_checkpoint, save_checkpoint

logger = logging.getLogger("traitdistill")

EXIT_OK, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3
SPLITS = ("train", "validation", "test")
SWEEP_LAMBDAS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)


class InputError(Exception):
    """Bad or missing user input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# helpers


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set or []:
        key, value = parse_override(item)
        cfg.set(key, value)
    if args.seed is not None:
        cfg.train.seed = args.seed
        cfg.encoder.seed = args.seed
    cfg.train.validate()
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    return out


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise InputError(f"input not found: {path}")
    return path


def _load_split(data_dir) -> DatasetSplit:
    data_dir = _require(data_dir)
    parts = {}
    for name in SPLITS:
        f = data_dir / f"{name}.jsonl"
        parts[name] = read_jsonl(f) if f.exists() else []
    if not parts["train"]:
        raise InputError(f"{data_dir} has no train.jsonl (run `ingest` first)")
    return DatasetSplit(parts["train"], parts["validation"], parts["test"], seed=-1)


def _augmentation_files(args) -> list[Path]:
    if args.augmentations:
        return [_require(p) for p in args.augmentations]
    found = sorted(Path(args.data_dir).glob("augmentations-*.jsonl"))
    if not found:
        logger.warning("no augmentation files given or found; training without contrastive positives")
    return found


def _label_descs(path):
    return load_label_descriptions(_require(path) if path else None)


def make_client(cfg: RunConfig, offline: bool):
    if offline:
        return OfflineClient(cfg.llm.model_id)
    return ChatClient(
        model_id=cfg.llm.model_id,
        base_url=cfg.llm.base_url,
        api_key_env=cfg.llm.api_key_env,
        temperature=cfg.llm.temperature,
        max_retries=cfg.llm.max_retries,
        rate_per_sec=cfg.llm.rate_per_sec,
    )


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", "utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, cfg, client=None) -> int:
    records = parse_dataset(_require(args.input), args.format)
    tc = cfg.train
    records = [preprocess_record(r, tc.max_posts, tc.max_words) for r in records]
    split = split_dataset(records, seed=tc.seed)
    out = _out_dir(args, cfg)
    stats = {}
    for name, part in split.items():
        write_jsonl(part, out / f"{name}.jsonl")
        stats[name] = class_stats(part)
    _write_json(out / "stats.json", {"n_users": {n: len(p) for n, p in split.items()}, "classes": stats})
    table = format_stats(stats)
    (out / "stats.txt").write_text(table, "utf-8")
    print(table, end="")
    logger.info("wrote %d/%d/%d users to %s", len(split.train), len(split.validation), len(split.test), out)
    return EXIT_OK


def cmd_augment(args, cfg, client=None) -> int:
    out = _out_dir(args, cfg)
    client = client or make_client(cfg, args.offline)
    cache = GenerationCache(args.cache or out / "cache.jsonl")
    missing_all = []
    for path in args.split_files:
        path = _require(path)
        posts = [p for rec in read_jsonl(path) for p in rec.posts]
        augs, missing = augment_posts(posts, client, cache, workers=cfg.llm.workers)
        write_augmentations(augs, out / f"augmentations-{path.stem}.jsonl")
        for m in missing:
            m["split_file"] = str(path)
        missing_all.extend(missing)
        logger.info("%s: %d posts augmented, %d missing", path.name, len(augs), len(missing))

    labels_path = out / "label_descriptions.json"
    if labels_path.exists():
        logger.info("%s exists; label descriptions not regenerated", labels_path)
    else:
        try:
            descs = generate_label_descriptions(client, cache)
        except (MissingAugmentation, ParseError) as exc:
            logger.warning("label descriptions unavailable (%s); writing the bundled defaults", exc)
            missing_all.append({"label_descriptions": "bundled default used", "reason": str(exc)})
            descs = load_label_descriptions()
        save_label_descriptions(descs, labels_path)

    with open(out / "missing.jsonl", "w", encoding="utf-8") as fh:
        for m in missing_all:
            fh.write(json.dumps(m) + "\n")
    usage = getattr(client, "usage", {})
    logger.info("LLM usage: %s", usage)
    _write_json(out / "usage.json", usage)
    return EXIT_OK


def cmd_train(args, cfg, client=None) -> int:
    split = _load_split(args.data_dir)
    augs = read_augmentations(_augmentation_files(args)) or None
    descs = _label_descs(args.label_descriptions)
    out = _out_dir(args, cfg)
    ckpt = fit(split, augs, descs, cfg, log_path=out / "train_log.jsonl", dump_dir=out)
    save_checkpoint(ckpt, out / "model.pt")
    summary = {"best_epoch": ckpt.epoch, "val_macro_f1": ckpt.val_metric}
    _write_json(out / "train_summary.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args, cfg, client=None) -> int:
    ckpt = load_checkpoint(_require(args.checkpoint))
    records = read_jsonl(_require(args.data))
    report = evaluate(ckpt, records)
    out = _out_dir(args, ckpt.config)
    _write_json(out / "report.json", report.to_dict())
    print(report.to_table(args.name))
    return EXIT_OK


def _read_posts(path: Path) -> list[str]:
    text = path.read_text("utf-8")
    if path.suffix == ".json":
        posts = json.loads(text)
        if not isinstance(posts, list) or not all(isinstance(p, str) for p in posts):
            raise InputError(f"{path} must hold a JSON list of strings")
        return posts
    return [line for line in text.splitlines() if line.strip()]


def cmd_predict(args, cfg, client=None) -> int:
    ckpt = load_checkpoint(_require(args.checkpoint))
    posts = _read_posts(_require(args.posts_file))
    if not posts:
        raise InputError(f"{args.posts_file} contains no posts")
    result = predict(ckpt, posts).to_dict()
    out = _out_dir(args, ckpt.config)
    _write_json(out / "prediction.json", result)
    print(json.dumps(result))
    return EXIT_OK


def cmd_llm_baseline(args, cfg, client=None) -> int:
    records = read_jsonl(_require(args.data))
    shots = ()
    if args.mode == "few_shot":
        if not args.shots_from:
            raise InputError("--shots-from is required for few_shot mode")
        shots = sample_shots(read_jsonl(_require(args.shots_from)), seed=cfg.train.seed)
    out = _out_dir(args, cfg)
    client = client or make_client(cfg, args.offline)
    cache = GenerationCache(args.cache or out / "cache.jsonl")
    report, failures = run_llm_baseline(records, client, args.mode, shots, cache)
    _write_json(out / "report.json", {**report.to_dict(), "mode": args.mode, "failures": failures})
    print(report.to_table(f"llm-{args.mode}"))
    if failures:
        logger.warning("%d users had unparseable or failed responses (scored as wrong)", len(failures))
    return EXIT_OK


def cmd_sweep_lambda(args, cfg, client=None) -> int:
    split = _load_split(args.data_dir)
    augs = read_augmentations(_augmentation_files(args)) or None
    descs = _label_descs(args.label_descriptions)
    out = _out_dir(args, cfg)
    rows = []
    for lam in args.lambdas:
        run_cfg = cfg.copy()
        run_cfg.train.lam = lam
        ckpt = fit(split, augs, descs, run_cfg, log_path=out / f"train_log-lambda{lam:g}.jsonl")
        row = {"lambda": lam, "best_epoch": ckpt.epoch, "val_macro_f1": ckpt.val_metric}
        if split.test:
            row["test_macro_f1"] = evaluate(ckpt, split.test).average
        rows.append(row)
        logger.info("lambda=%g: val=%.4f", lam, ckpt.val_metric)
    _write_json(out / "sweep.json", rows)
    lines = ["lambda\tval_macro_f1\ttest_macro_f1"]
    for r in rows:
        test = f"{100 * r['test_macro_f1']:.2f}" if "test_macro_f1" in r else "-"
        lines.append(f"{r['lambda']:g}\t{100 * r['val_macro_f1']:.2f}\t{test}")
    table = "\n".join(lines) + "\n"
    (out / "sweep.tsv").write_text(table, "utf-8")
    print(table, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults are used for absent keys)")
    common.add_argument("--seed", type=int, help="seed for splitting, encoder init and training")
    common.add_argument("--offline", action="store_true", help="never touch the network; rely on the cache")
    common.add_argument("--out-dir", default=".", help="directory for artifacts and the config snapshot")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. train.lam=0.5")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="traitdistill", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse, preprocess and split a raw dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="kaggle_csv", choices=["kaggle_csv", "pandora_dir", "jsonl"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("augment", parents=[common], help="generate post analyses and label descriptions")
    p.add_argument("split_files", nargs="+", help="split JSONL files written by ingest")
    p.add_argument("--cache", help="generation cache file (default: OUT_DIR/cache.jsonl)")
    p.set_defaults(func=cmd_augment)

    def training_inputs(p):
        p.add_argument("--data-dir", required=True, help="directory holding train/validation/test.jsonl")
        p.add_argument("--augmentations", nargs="*", help="augmentation JSONL files (default: DATA_DIR/augmentations-*.jsonl)")
        p.add_argument("--label-descriptions", help="label description JSON (default: bundled file)")

    p = sub.add_parser("train", parents=[common], help="train a detector")
    training_inputs(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on a split file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--name", default="TAE", help="row label in the printed table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="predict one user's type from a posts file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--posts-file", required=True, help="one post per line, or a .json list of strings")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("llm-baseline", parents=[common], help="direct LLM detection baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", default="zero_shot", choices=["zero_shot", "cot", "few_shot"])
    p.add_argument("--shots-from", help="split file to sample the 3 few-shot examples from")
    p.add_argument("--cache")
    p.set_defaults(func=cmd_llm_baseline)

    p = sub.add_parser("sweep-lambda", parents=[common], help="train once per lambda and tabulate")
    training_inputs(p)
    p.add_argument("--lambdas", type=float, nargs="+", default=list(SWEEP_LAMBDAS))
    p.set_defaults(func=cmd_sweep_lambda)
    return parser


def main(argv=None, client=None) -> int:
    """Run a command.  ``client`` replaces the chat client (for tests)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg, client)
    except (InputError, CorpusError, FileNotFoundError, CheckpointError, json.JSONDecodeError, KeyError, ValueError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA
    except (NonFiniteLossError, LLMRequestError, RuntimeError, FloatingPointError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
