"""Command-line entry point.

Subcommands: train, eval, ablate, predict, synth, gradcheck.
Exit codes: 0 success, 2 usage/config error, 3 data or checkpoint error,
4 numerical divergence.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import time
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import CheckpointError, load_checkpoint
from .config import (ConfigError, RunConfig, load_run_config,
                     parse_synth_spec, with_num_classes, write_resolved)
from .data import (DataError, Manifest, decode_image, load_manifest,
                   make_synth_manifest, preprocess, save_image_tree)
from .figures import (ablation_png, confusion_png, dca_png, roc_png,
                      training_curves_png)
from .metrics import compute_report, export_report
from .model import Bottleneck, ModelConfig, build_model, param_count
from .trainer import DivergenceError, TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

GRADCHECK_THRESHOLD = 1e-4

# Step schedule for finite differences through deep compositions.  Sharp
# inits push early-layer slopes past 1e4, where truncation error only dies
# at steps near 1e-10 (rounding stays harmless there because the noise
# floor scales inversely with the slope); the large steps at the other end
# rescue elements whose analytic gradient is tiny next to the loss, where
# central differences cancel catastrophically in float64.  grad_check
# keeps the best agreement across the schedule and stops early once a
# step agrees, so tame probes never walk the whole ladder.
_DEEP_EPS = (1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-4, 1e-3)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# argument plumbing

# argparse dest -> (section, key) for the run-config override merge
_ARG_MAP = {
    "depth": ("model", "depth"),
    "width": ("model", "width_mult"),
    "cbam": ("model", "cbam"),
    "cbam_ratio": ("model", "cbam_ratio"),
    "cbam_kernel": ("model", "cbam_kernel"),
    "sco": ("model", "sco"),
    "sco_literal": ("model", "sco_literal"),
    "replace_stem": ("model", "replace_stem"),
    "replace_maxpool": ("model", "replace_maxpool"),
    "modify_shortcut": ("model", "modify_shortcut"),
    "shortcut_relu": ("model", "shortcut_relu"),
    "dropout": ("model", "dropout_rate"),
    "model_seed": ("model", "seed"),
    "lr0": ("train", "lr0"),
    "t_max": ("train", "t_max"),
    "eta_min": ("train", "eta_min"),
    "momentum": ("train", "momentum"),
    "batch_size": ("train", "batch_size"),
    "epochs": ("train", "epochs"),
    "ema_decay": ("train", "ema_decay"),
    "seed": ("train", "seed"),
    "eval_with_ema": ("train", "eval_with_ema"),
    "no_restart": ("train", "no_restart"),
    "workers": ("train", "workers"),
    "manifest": ("data", "manifest"),
    "synthetic": ("data", "synthetic"),
    "size": ("data", "size"),
    "out": ("run", "out_dir"),
}

_BOOL = argparse.BooleanOptionalAction


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config file (INI)")
    data = p.add_argument_group("data")
    data.add_argument("--manifest", help="dataset directory or manifest file")
    data.add_argument("--synthetic", metavar="KxN",
                      help="synthetic data: K classes, N train samples "
                           "(val/test get N/2 each)")
    data.add_argument("--size", type=int, help="synthetic image size (px)")
    p.add_argument("--out", help="output directory")
    model = p.add_argument_group("model")
    model.add_argument("--depth", type=int, choices=(50, 101))
    model.add_argument("--width", type=float, help="channel width multiplier")
    model.add_argument("--cbam", action=_BOOL, default=None)
    model.add_argument("--cbam-ratio", type=int, default=None)
    model.add_argument("--cbam-kernel", type=int, default=None)
    model.add_argument("--sco", action=_BOOL, default=None,
                       help="stride on the 3x3 conv instead of the 1x1")
    model.add_argument("--sco-literal", action=_BOOL, default=None)
    model.add_argument("--replace-stem", action=_BOOL, default=None)
    model.add_argument("--replace-maxpool", action=_BOOL, default=None)
    model.add_argument("--modify-shortcut", action=_BOOL, default=None)
    model.add_argument("--shortcut-relu", action=_BOOL, default=None)
    model.add_argument("--dropout", type=float, default=None)
    model.add_argument("--model-seed", type=int, default=None)
    tr = p.add_argument_group("training")
    tr.add_argument("--epochs", type=int, default=None)
    tr.add_argument("--batch-size", type=int, default=None)
    tr.add_argument("--lr0", type=float, default=None)
    tr.add_argument("--t-max", type=int, default=None)
    tr.add_argument("--eta-min", type=float, default=None)
    tr.add_argument("--momentum", type=float, default=None)
    tr.add_argument("--ema-decay", type=float, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--eval-with-ema", action=_BOOL, default=None)
    tr.add_argument("--no-restart", action=_BOOL, default=None)
    tr.add_argument("--workers", type=int, default=None)
    p.add_argument("--early-stop-acc", type=float, default=None,
                   help="stop once train accuracy reaches this value")
    p.add_argument("--quiet", action="store_true")


def _run_config(args, parser) -> RunConfig:
    overrides = {}
    ns = vars(args)
    for dest, key in _ARG_MAP.items():
        if dest in ns and ns[dest] is not None:
            overrides[key] = ns[dest]
    try:
        return load_run_config(getattr(args, "config", None), overrides)
    except ConfigError as exc:
        parser.error(str(exc))


def _build_manifest(cfg: RunConfig, parser) -> Manifest:
    if cfg.synthetic and cfg.manifest:
        parser.error("pass either --manifest or --synthetic, not both")
    if cfg.synthetic:
        k, n = parse_synth_spec(cfg.synthetic)
        return make_synth_manifest(k, n, size=cfg.size, seed=cfg.train.seed)
    if cfg.manifest:
        return load_manifest(cfg.manifest)
    parser.error("a dataset is required: pass --manifest or --synthetic "
                 "(or set them in the config file)")


# ---------------------------------------------------------------------------
# train


def cmd_train(args, parser) -> int:
    cfg = _run_config(args, parser)
    try:
        manifest = _build_manifest(cfg, parser)
    except DataError as exc:
        _err(str(exc))
        return EXIT_DATA
    cfg = with_num_classes(cfg, len(manifest.class_names))
    out_dir = Path(cfg.out_dir)
    write_resolved(cfg, out_dir)
    model = build_model(cfg.model)
    total, _ = param_count(model)
    if not args.quiet:
        print(f"model: depth {cfg.model.depth}, width {cfg.model.width_mult}, "
              f"{len(manifest.class_names)} classes, {total} parameters")
    progress = None if args.quiet else print
    try:
        report = train(model, manifest, cfg.train, out_dir,
                       early_stop_acc=args.early_stop_acc, progress=progress)
    except DivergenceError as exc:
        _err(str(exc))
        return EXIT_DIVERGED
    except DataError as exc:
        _err(str(exc))
        return EXIT_DATA
    training_curves_png(report.rows, out_dir / "curves.png")
    print(f"best val acc {report.best_val_acc:.4f} at epoch "
          f"{report.best_epoch}; final train acc {report.final_train_acc:.4f}")
    if report.checkpoint_path:
        print(f"checkpoint: {report.checkpoint_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _load_for_inference(path, weights: str):
    model, ema, meta = load_checkpoint(path)
    if weights == "ema":
        if not ema:
            raise CheckpointError(f"{path} holds no EMA shadows")
        named = dict(model.named_parameters())
        for name, shadow in ema.items():
            named[name].value = shadow
    if "data" not in meta:
        raise CheckpointError(f"{path} lacks the data block needed to "
                              f"preprocess inputs")
    return model, meta


def cmd_eval(args, parser) -> int:
    try:
        model, meta = _load_for_inference(args.checkpoint, args.weights)
    except CheckpointError as exc:
        _err(str(exc))
        return EXIT_DATA
    data_meta = meta["data"]
    class_names = data_meta["class_names"]
    try:
        if args.manifest:
            manifest = load_manifest(args.manifest)
        elif args.synthetic:
            k, n = parse_synth_spec(args.synthetic)
            seed = int(meta.get("train_config", {}).get("seed", 0))
            manifest = make_synth_manifest(k, n, size=data_meta["input_size"],
                                           seed=seed)
        else:
            parser.error("a dataset is required: pass --manifest or --synthetic")
        dataset = manifest.split(args.split)
    except (DataError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_DATA
    if len(manifest.class_names) != len(class_names):
        _err(f"class count mismatch: checkpoint was trained on "
             f"{len(class_names)} classes, dataset has "
             f"{len(manifest.class_names)}")
        return EXIT_DATA
    result = evaluate(model, dataset, input_size=data_meta["input_size"],
                      mean=data_meta["mean"], std=data_meta["std"],
                      batch_size=args.batch_size)
    report = compute_report(result.probs, result.labels, class_names,
                            latency_mean=result.latency_mean,
                            latency_std=result.latency_std)
    out_dir = Path(args.out) if args.out else (
        Path(args.checkpoint).parent / f"eval_{args.weights}")
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    try:
        export_report(report, out_dir, formats)
    except ValueError as exc:
        parser.error(str(exc))
    roc_png(report, out_dir / "roc.png")
    dca_png(report, out_dir / "dca.png")
    confusion_png(report, out_dir / "confusion.png")
    total, _ = param_count(model)
    print(report.headline())
    print(f"parameters: {total}")
    print(f"latency per sample: {result.latency_mean * 1e3:.2f} "
          f"± {result.latency_std * 1e3:.2f} ms")
    print(f"report written to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ablate

_GRID_FLAGS = ("cbam", "sco", "replace_stem", "modify_shortcut")


def _combo_label(combo: dict) -> str:
    short = {"cbam": "cbam", "sco": "sco", "replace_stem": "rc",
             "modify_shortcut": "ms"}
    return " ".join(f"{short[k]}{'+' if combo[k] else '-'}"
                    for k in _GRID_FLAGS)


def _combo_model_config(base: ModelConfig, combo: dict) -> ModelConfig:
    from dataclasses import replace
    # the stem swap and the maxpool swap travel together as one table column
    return replace(base, cbam=combo["cbam"], sco=combo["sco"],
                   replace_stem=combo["replace_stem"],
                   replace_maxpool=combo["replace_stem"],
                   modify_shortcut=combo["modify_shortcut"])


def cmd_ablate(args, parser) -> int:
    cfg = _run_config(args, parser)
    try:
        manifest = _build_manifest(cfg, parser)
    except DataError as exc:
        _err(str(exc))
        return EXIT_DATA
    cfg = with_num_classes(cfg, len(manifest.class_names))
    combos = [dict(zip(_GRID_FLAGS, values))
              for values in itertools.product((False, True), repeat=4)]

    if args.dry_run:
        from .config import resolved_text
        from dataclasses import replace as dc_replace
        for i, combo in enumerate(combos):
            run_cfg = dc_replace(cfg, model=_combo_model_config(cfg.model, combo))
            print(f"# combo {i + 1}/16: {_combo_label(combo)}")
            print(resolved_text(run_cfg))
        return EXIT_OK

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out_dir)
    rows = []
    for combo in combos:
        model_cfg = _combo_model_config(cfg.model, combo)
        tag = "_".join(f"{k}{int(v)}" for k, v in combo.items())
        sub_out = out_dir / tag
        from dataclasses import replace as dc_replace
        write_resolved(dc_replace(cfg, model=model_cfg, out_dir=str(sub_out)),
                       sub_out)
        model = build_model(model_cfg)
        total, _ = param_count(model)
        try:
            report = train(model, manifest, cfg.train, sub_out,
                           early_stop_acc=args.early_stop_acc)
        except DivergenceError as exc:
            _err(f"{_combo_label(combo)}: {exc}")
            return EXIT_DIVERGED
        rows.append((combo, total, report.best_val_acc))
        if not args.quiet:
            print(f"{_combo_label(combo)}  params {total:>9}  "
                  f"best val acc {report.best_val_acc:.4f}")

    lines = ["cbam,sco,replace_stem,modify_shortcut,params,best_val_acc"]
    for combo, total, acc in rows:
        flags = ",".join(str(combo[k]).lower() for k in _GRID_FLAGS)
        lines.append(f"{flags},{total},{acc!r}")
    (out_dir / "ablation.csv").write_text("\n".join(lines) + "\n")
    ablation_png([(_combo_label(c), acc) for c, _, acc in rows],
                 out_dir / "ablation.png")
    print(f"ablation table written to {out_dir / 'ablation.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict


def cmd_predict(args, parser) -> int:
    try:
        model, meta = _load_for_inference(args.checkpoint, args.weights)
    except CheckpointError as exc:
        _err(str(exc))
        return EXIT_DATA
    data_meta = meta["data"]
    class_names = data_meta["class_names"]
    ok = 0
    times = []
    for path in args.images:
        try:
            img = decode_image(path)
            x = preprocess(img, "eval", data_meta["input_size"],
                           mean=data_meta["mean"], std=data_meta["std"],
                           name=str(path))
        except DataError as exc:
            print(f"ERROR {path}: {exc}")
            continue
        with ad.no_grad():
            t0 = time.perf_counter()
            logits = model.forward(ad.as_variable(x[None]), training=False)
            times.append(time.perf_counter() - t0)
        z = logits.value[0].astype(np.float64)
        z -= z.max()
        probs = np.exp(z)
        probs /= probs.sum()
        pred = int(np.argmax(probs))
        detail = " ".join(f"{c}={p:.4f}" for c, p in zip(class_names, probs))
        print(f"{path}  {class_names[pred]}  {detail}")
        ok += 1
    if times:
        arr = np.array(times)
        print(f"latency per sample: {arr.mean() * 1e3:.2f} "
              f"± {arr.std() * 1e3:.2f} ms over {len(arr)} images")
    if ok == 0:
        _err("no image could be processed")
        return EXIT_DATA
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args, parser) -> int:
    try:
        k, n = parse_synth_spec(args.spec)
    except ConfigError as exc:
        parser.error(str(exc))
    try:
        manifest = make_synth_manifest(k, n, size=args.size, seed=args.seed)
        save_image_tree(manifest, args.out_dir)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    for name, ds in manifest.splits.items():
        print(f"{name}: {len(ds)} images "
              f"({', '.join(manifest.class_names)})")
    print(f"written to {args.out_dir} (manifest.cfg included)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def _weighted_sum(v: ad.Variable, seed: int = 0) -> ad.Variable:
    w = np.random.default_rng(seed).random(v.value.shape)
    return ad.sum_all(ad.mul(v, ad.as_variable(w)))


def _primitive_checks():
    """(name, fn, variable) triples covering every differentiable primitive."""
    rng = np.random.default_rng(42)

    def var(*shape, lo=-1.0, hi=1.0):
        return ad.Variable(rng.uniform(lo, hi, shape), requires_grad=True)

    x_conv = var(2, 3, 6, 6)
    k_conv = var(4, 3, 3, 3)
    x_pool = var(2, 3, 6, 6, lo=0.1, hi=2.0)   # distinct values avoid max ties
    a_mm = var(3, 4)
    b_mm = var(4, 5)
    x_bn = var(3, 4, 5, 5)
    gamma = var(4, lo=0.5, hi=1.5)
    beta = var(4)
    logits = var(4, 3, lo=-2.0, hi=2.0)
    labels = np.array([0, 2, 1, 1])
    x_act = var(2, 3, 4, 4, lo=0.05, hi=1.0)   # kept off the relu kink

    checks = [
        ("conv2d/input", lambda v: _weighted_sum(
            ad.conv2d(v, ad.as_variable(k_conv.value), stride=1, padding=1)), x_conv),
        ("conv2d/kernel", lambda v: _weighted_sum(
            ad.conv2d(ad.as_variable(x_conv.value), v, stride=2, padding=1)), k_conv),
        ("pool2d/avg", lambda v: _weighted_sum(
            ad.pool2d(v, "avg", 3, stride=2, padding=1)), x_pool),
        ("pool2d/max", lambda v: _weighted_sum(
            ad.pool2d(v, "max", 3, stride=2, padding=1)), x_pool),
        ("global_pool/avg", lambda v: _weighted_sum(
            ad.global_pool(v, "avg")), x_pool),
        ("global_pool/max", lambda v: _weighted_sum(
            ad.global_pool(v, "max")), x_pool),
        ("matmul/a", lambda v: _weighted_sum(
            ad.matmul(v, ad.as_variable(b_mm.value))), a_mm),
        ("matmul/b", lambda v: _weighted_sum(
            ad.matmul(ad.as_variable(a_mm.value), v)), b_mm),
        ("linear/weight", lambda v: _weighted_sum(
            ad.linear(ad.as_variable(a_mm.value), v,
                      ad.as_variable(np.zeros(4)))), var(4, 4)),
        ("add", lambda v: _weighted_sum(
            ad.add(v, ad.as_variable(x_act.value))), var(2, 3, 4, 4)),
        ("sub", lambda v: _weighted_sum(
            ad.sub(ad.as_variable(x_act.value), v)), var(2, 3, 4, 4)),
        ("mul", lambda v: _weighted_sum(
            ad.mul(v, ad.as_variable(x_act.value))), var(2, 3, 4, 4)),
        ("scale", lambda v: _weighted_sum(ad.scale(v, 0.25)), var(3, 3)),
        ("relu", lambda v: _weighted_sum(ad.relu(v)), x_act),
        ("sigmoid", lambda v: _weighted_sum(ad.sigmoid(v)), var(3, 4)),
        ("softmax", lambda v: _weighted_sum(ad.softmax(v)), logits),
        ("batchnorm_train/x", lambda v: _weighted_sum(ad.batchnorm_train(
            v, ad.as_variable(gamma.value), ad.as_variable(beta.value))[0]), x_bn),
        ("batchnorm_train/gamma", lambda v: _weighted_sum(ad.batchnorm_train(
            ad.as_variable(x_bn.value), v, ad.as_variable(beta.value))[0]), gamma),
        ("batchnorm_eval/x", lambda v: _weighted_sum(ad.batchnorm_eval(
            v, ad.as_variable(gamma.value), ad.as_variable(beta.value),
            np.zeros(4), np.ones(4))), x_bn),
        ("cross_entropy", lambda v: ad.cross_entropy(v, labels), logits),
        ("channel_mean", lambda v: _weighted_sum(ad.channel_mean(v)), x_pool),
        ("channel_max", lambda v: _weighted_sum(ad.channel_max(v)), x_pool),
        ("concat", lambda v: _weighted_sum(ad.concat(
            [v, ad.as_variable(x_act.value)], axis=1)), var(2, 3, 4, 4)),
        ("reshape", lambda v: _weighted_sum(
            ad.reshape(v, (2, 48))), var(2, 3, 4, 4)),
        ("sigmoid_gate", lambda v: _weighted_sum(
            ad.mul(v, ad.sigmoid(v))), var(2, 3, 4, 4)),
    ]
    return checks


def _check_primitives() -> dict[str, float]:
    results = {}
    for name, fn, v in _primitive_checks():
        results[name] = ad.grad_check(fn, v, eps=(1e-5, 1e-6))
    return results


def _check_blocks(seed: int) -> dict[str, float]:
    # in_ch 16 with width 4 hits the identity shortcut (16 == 4 * expansion)
    variants = {
        "identity_stride1": dict(in_ch=16, stride=1, cbam=False,
                                 modify_shortcut=False),
        "projection_stride2": dict(in_ch=8, stride=2, cbam=False,
                                   modify_shortcut=False),
        "pooled_shortcut_stride2": dict(in_ch=8, stride=2, cbam=False,
                                        modify_shortcut=True),
        "cbam_stride1": dict(in_ch=8, stride=1, cbam=True,
                             modify_shortcut=False),
    }
    rng_x = np.random.default_rng(seed)
    results = {}
    for name, spec in variants.items():
        cfg = ModelConfig(num_classes=3, width_mult=1.0, cbam=spec["cbam"],
                          cbam_ratio=4, modify_shortcut=spec["modify_shortcut"],
                          dropout_rate=0.0, seed=seed)
        block = Bottleneck(spec["in_ch"], 4, spec["stride"], cfg,
                           np.random.default_rng(seed), dtype=np.float64)
        x = rng_x.uniform(-1.0, 1.0, (2, spec["in_ch"], 8, 8))
        worst = 0.0
        for pname, p in block.named_parameters():
            def loss_fn(v, p=p):
                return _weighted_sum(
                    block.forward(ad.as_variable(x), training=True), seed=1)
            err = ad.grad_check(loss_fn, p, eps=_DEEP_EPS, sample=2,
                                rng=np.random.default_rng(seed))
            worst = max(worst, err)
        results[name] = worst
    return results


def _check_full(width: float, seed: int) -> dict[str, float]:
    cfg = ModelConfig(depth=50, num_classes=3, width_mult=width,
                      dropout_rate=0.0, seed=seed)
    model = build_model(cfg, dtype=np.float64)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (2, 3, 32, 32))
    labels = np.array([0, 2])

    results = {}
    for name, p in model.named_parameters():
        def loss_fn(v, p=p):
            return ad.cross_entropy(
                model.forward(ad.as_variable(x), training=True), labels)
        # probe each tensor's dominant element: differences there are well
        # conditioned, and a systematic backward error cannot hide from it
        p.grad = None
        ad.backward(loss_fn(p))
        probe = int(np.argmax(np.abs(p.grad)))
        p.grad = None
        err = ad.grad_check(loss_fn, p, eps=_DEEP_EPS, indices=[probe])
        group = name.split(".")[0]
        results[group] = max(results.get(group, 0.0), err)
    return results


def cmd_gradcheck(args, parser) -> int:
    if args.scope == "primitives":
        results = _check_primitives()
    elif args.scope == "blocks":
        results = _check_blocks(args.seed)
    else:
        results = _check_full(args.width, args.seed)
    failed = False
    for name in sorted(results):
        err = results[name]
        status = "ok" if err <= GRADCHECK_THRESHOLD else "FAIL"
        if err > GRADCHECK_THRESHOLD:
            failed = True
        print(f"{name:<28} {err:.3e}  {status}")
    worst = max(results.values())
    print(f"worst relative error: {worst:.3e} "
          f"(threshold {GRADCHECK_THRESHOLD:.0e})")
    return 1 if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resnetplus",
        description="Train and evaluate an attention-augmented residual "
                    "classifier built on a from-scratch autodiff engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_run_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--manifest", help="dataset directory or manifest")
    p_eval.add_argument("--synthetic", metavar="KxN")
    p_eval.add_argument("--split", default="test",
                        choices=("train", "val", "test"))
    p_eval.add_argument("--weights", default="ema", choices=("raw", "ema"))
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--batch-size", type=int, default=16)
    p_eval.add_argument("--formats", default="json,csv,svg")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser(
        "ablate", help="run the 2^4 flag grid (cbam x sco x stem x shortcut)")
    _add_run_flags(p_ablate)
    p_ablate.add_argument("--dry-run", action="store_true",
                          help="print the 16 resolved configs, train nothing")
    p_ablate.set_defaults(func=cmd_ablate)

    p_pred = sub.add_parser("predict", help="classify image files")
    p_pred.add_argument("checkpoint")
    p_pred.add_argument("images", nargs="+")
    p_pred.add_argument("--weights", default="ema", choices=("raw", "ema"))
    p_pred.set_defaults(func=cmd_predict)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset tree")
    p_synth.add_argument("out_dir")
    p_synth.add_argument("--spec", default="3x60", metavar="KxN")
    p_synth.add_argument("--size", type=int, default=32)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_gc.add_argument("--scope", default="primitives",
                      choices=("primitives", "blocks", "full"))
    p_gc.add_argument("--width", type=float, default=0.25)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
