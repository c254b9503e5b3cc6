"""Command-line entry point: gen | train | eval | verify.

Exit codes: 0 success, 1 runtime failure (e.g. divergence), 2 usage or
config error. The training config file is line-oriented `key=value` with
`#` comments; unknown keys are rejected. SEPCLR_SEED serves as the seed
fallback when neither the config nor the flags provide one.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import (CADataset, gen_attr_sprites, gen_colored_shapes,
                      gen_vector_ca)
from .encoders import EncoderPair, load_checkpoint, save_checkpoint
from .evaluate import evaluate, mig_score
from .losses import MMD_DEFAULT_WEIGHT, LossWeights
from .train import DivergenceError, TrainConfig, history_to_csv, train
from .verify import SUITES, run_suite


class UsageError(Exception):
    pass


CONFIG_KEYS = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "seed": int,
    "mode": str,
    "lambda_c": float,
    "lambda_s": float,
    "beta": float,
    "lambda_ind": float,
    "tau": float,
    "sigma_attr": float,
    "independence": str,
    "attr_keep_unsupervised": bool,
    "common_dim": int,
    "salient_dim": int,
    "eval_every": int,
}


def _parse_bool(text):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path):
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        caster = CONFIG_KEYS[key]
        try:
            values[key] = _parse_bool(text) if caster is bool else caster(text)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return values


def build_train_config(values):
    seed = values.get("seed")
    if seed is None:
        seed = int(os.environ.get("SEPCLR_SEED", "0"))
    mode = values.get("mode", "unsupervised")
    weight_kw = {
        "lambda_c": values.get("lambda_c", 1.0),
        "lambda_s": values.get("lambda_s", 1000.0),
        "beta": values.get("beta", 1000.0),
        "tau": values.get("tau", 0.5),
        "sigma_attr": values.get("sigma_attr", 0.2),
        "independence_mode": values.get("independence", "kjem"),
        "attr_keep_unsupervised": values.get("attr_keep_unsupervised", False),
    }
    if "lambda_ind" in values:
        weight_kw["lambda_ind"] = values["lambda_ind"]
    elif weight_kw["independence_mode"] == "mmd":
        weight_kw["lambda_ind"] = MMD_DEFAULT_WEIGHT
    return TrainConfig(
        epochs=values.get("epochs", 50),
        batch_size=values.get("batch_size", 256),
        learning_rate=values.get("learning_rate", 5e-4),
        weights=LossWeights(**weight_kw),
        mode=mode,
        seed=seed,
        eval_every=values.get("eval_every", 0),
    )


def _require_new(path, force, what):
    if Path(path).exists() and not force:
        raise UsageError(f"{what} {path} exists; pass --force to overwrite")


def cmd_gen(args):
    out = Path(args.out)
    _require_new(out / "manifest.csv", args.force, "dataset manifest")
    seed = args.seed if args.seed is not None else int(os.environ.get("SEPCLR_SEED", "0"))
    if args.kind == "vector-ca":
        ds = gen_vector_ca(args.n_bg, args.n_tg, noise_std=args.noise_std, seed=seed)
    elif args.kind == "colored-shapes":
        ds = gen_colored_shapes(args.n_bg, args.n_tg, seed=seed)
    else:
        ds = gen_attr_sprites(args.n_bg, args.n_tg, seed=seed)
    ds.save(out, force=args.force)
    print(f"wrote {ds.n} samples ({args.kind}, seed {seed}) to {out}")
    return 0


def cmd_train(args):
    out = Path(args.out)
    _require_new(out / "checkpoint.bin", args.force, "checkpoint")
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text())
        values = dict(manifest["config"])
    else:
        values = read_config(args.config) if args.config else {}
    for key in ("independence", "mode"):
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    for key in ("epochs", "seed"):
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    try:
        cfg = build_train_config(values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    dataset = CADataset.load(args.data)
    salient_dim = values.get("salient_dim", 32)
    if cfg.mode == "attribute_supervised":
        if dataset.attributes is None:
            raise UsageError("attribute_supervised mode needs a dataset with attributes")
        salient_dim = dataset.attributes.shape[1]
    enc = EncoderPair.build(
        input_dim=dataset.input_dim,
        common_dim=values.get("common_dim", 32),
        salient_dim=salient_dim,
        init_seed=cfg.seed,
    )
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    enc, history = train(dataset, enc, cfg)
    wall = time.time() - started
    ckpt = out / "checkpoint.bin"
    save_checkpoint(enc, ckpt)
    history_to_csv(history, out / "history.csv")
    manifest = {
        "config": values,
        "resolved_seed": cfg.seed,
        "version": f"sepclr-{__version__}",
        "wall_clock_s": wall,
        "data_dir": str(args.data),
        "checkpoint": str(ckpt),
        "history": str(out / "history.csv"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(f"trained {cfg.epochs} epochs in {wall:.1f}s; checkpoint at {ckpt}")
    return 0


def cmd_eval(args):
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise UsageError(f"checkpoint {ckpt} not found")
    enc = load_checkpoint(ckpt)
    dataset = CADataset.load(args.data)
    report = evaluate(enc, dataset, space=args.space, seed=args.seed)
    if args.mig and dataset.attributes is not None:
        target = dataset.indices(1)
        embeds = enc.embed(dataset.inputs[target])
        per_dim, avg = mig_score(embeds["s_proj"], dataset.attributes[target])
        report.mig_per_attribute = dict(zip(dataset.attribute_names, per_dim))
        report.mig_average = avg
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "report.csv")
        report.to_json(out / "report.json")
    print(report.format_table())
    return 0


def cmd_verify(args):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failures = 0
    for name in names:
        for check, passed, detail in run_suite(name):
            status = "PASS" if passed else "FAIL"
            print(f"[{status}] {name}: {check}" + (f" ({detail})" if detail else ""))
            failures += 0 if passed else 1
    print(f"verify: {'all checks passed' if failures == 0 else f'{failures} failures'}")
    return 0 if failures == 0 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sepclr",
        description="Contrastive-analysis training, evaluation and self-checks",
    )
    parser.add_argument("--version", action="version", version=f"sepclr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("kind", choices=["vector-ca", "colored-shapes", "attr-sprites"])
    p.add_argument("--n-bg", type=int, required=True)
    p.add_argument("--n-tg", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the encoder pair")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--manifest", default=None,
                   help="re-launch from a previous run's manifest.json")
    p.add_argument("--out", required=True)
    p.add_argument("--independence", choices=["kjem", "kmi", "mmd", "none"], default=None)
    p.add_argument("--mode", choices=["unsupervised", "attribute_supervised"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="probe a checkpoint and print the gap table")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--space", choices=["repr", "proj"], default="repr")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mig", action="store_true",
                   help="also compute the mutual information gap (attribute datasets)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the property self-check suites")
    p.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
