"""Command line entry points.

Subcommands: gen (synthesize datasets), train (fit a model), eval (metric
reports), gradcheck (finite-difference audit), ablate (block variants
across seeds and symmetry levels), export (meshes, token sets, attention
maps). Every command is a pure function of its config, seed, and input
files; run directories always receive the exact resolved configuration.

Exit codes: 0 success, 1 validation failure, 2 numeric failure, 3 IO or
format failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .data import (
    TRAIN_SPLIT,
    VAL_SPLIT,
    GenConfig,
    generate_samples,
    read_samples,
    write_samples,
)
from .errors import ConfigError, FormatError, NumericError, ShapeError
from .hand import default_template, skin_mesh, write_obj
from .metrics import (
    check_primitives,
    end_to_end_gradcheck,
    evaluate,
    write_metrics_csv,
    write_metrics_json,
)
from .network import BLOCK_KINDS, CA_VARIANTS, EANet, ModelConfig, load_checkpoint
from .train import TrainConfig, resume, train
from .validation import check_geometry

SWEEP_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
GRADCHECK_THRESHOLD = 1e-5


# -- small shared helpers -----------------------------------------------------


def _load_json(path, what="config"):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {what} {path}: {exc}") from exc


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_resolved(out_dir, payload):
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "resolved.json"), payload)


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_matrix_csv(path, arr):
    arr = np.asarray(arr)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rows", arr.shape[0], "cols", arr.shape[1]])
        for row in arr:
            writer.writerow([repr(float(v)) for v in row])


def _thread_cap():
    raw = os.environ.get("EANET_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"EANET_THREADS wants an integer, got {raw!r}") from None
    return max(1, cap)


def _apply_variant(model_dict, variant):
    """Map a --variant string onto model config fields."""
    if variant in BLOCK_KINDS:
        model_dict["block_kind"] = variant
    elif variant in CA_VARIANTS:
        model_dict["block_kind"] = "fuseformer"
        model_dict["ca_variant"] = variant
    else:
        raise ConfigError(
            f"unknown variant {variant!r}; expected one of {BLOCK_KINDS + CA_VARIANTS}"
        )
    return model_dict


def _val_name(s):
    return f"val_s{int(round(s * 100)):03d}.bin"


# -- gen ----------------------------------------------------------------------


def cmd_gen(args):
    data = _load_json(args.config, "generation config") if args.config else {}
    cfg = GenConfig.from_dict(data)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)

    train_path = os.path.join(args.out, "train.bin")
    write_samples(train_path, generate_samples(cfg, TRAIN_SPLIT, cfg.train_samples))
    manifest = {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "train": {"file": "train.bin", "count": cfg.train_samples},
        "val": [],
    }
    levels = SWEEP_LEVELS if args.sweep else (cfg.symmetry,)
    for s in levels:
        cfg_s = dataclasses.replace(cfg, symmetry=s)
        name = _val_name(s) if args.sweep else "val.bin"
        write_samples(os.path.join(args.out, name),
                      generate_samples(cfg_s, VAL_SPLIT, cfg_s.val_samples))
        manifest["val"].append({"file": name, "symmetry": s, "count": cfg.val_samples})
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    _write_resolved(args.out, {"command": "gen", "sweep": bool(args.sweep), **manifest})
    print(f"wrote {cfg.train_samples} train and {len(levels)}x{cfg.val_samples} "
          f"val samples to {args.out}")
    return 0


# -- train --------------------------------------------------------------------


def _split_train_config(path):
    data = _load_json(path, "training config") if path else {}
    unknown = set(data) - {"model", "train"}
    if unknown:
        raise ConfigError(f"unknown training config sections: {sorted(unknown)}")
    return dict(data.get("model", {})), dict(data.get("train", {}))


def cmd_train(args):
    model_dict, train_dict = _split_train_config(args.config)
    if args.variant:
        _apply_variant(model_dict, args.variant)
    if args.seed is not None:
        train_dict["seed"] = args.seed
    if args.overfit:
        train_dict["steps"] = 500
        train_dict["batch_size"] = 8
        # memorization probe: hot constant-ish schedule, not the general default
        train_dict.setdefault("lr", 5e-3)
        train_dict.setdefault("anneal_factor", 0.3)
    tcfg = TrainConfig.from_dict(train_dict)

    samples = read_samples(args.dataset)
    if args.overfit:
        samples = samples[:8]

    if args.checkpoint:
        start_config, _, _, start_step = load_checkpoint(args.checkpoint)
        check_geometry(start_config, samples)
        model, result = resume(args.checkpoint, samples, tcfg, out_dir=args.out,
                               stop_after=args.stop_after)
        mcfg = model.config
    else:
        start_step = 0
        mcfg = ModelConfig.from_dict(model_dict)
        check_geometry(mcfg, samples)
        model = EANet(mcfg, seed=tcfg.seed)
        result = train(model, samples, tcfg, out_dir=args.out,
                       stop_after=args.stop_after)

    _write_resolved(args.out, {
        "command": "train",
        "model": mcfg.to_dict(),
        "train": tcfg.to_dict(),
        "dataset": args.dataset,
        "resumed_from": args.checkpoint,
        "overfit": bool(args.overfit),
        "stop_after": args.stop_after,
        "samples": len(samples),
    })
    if result.losses:
        end_step = (start_step or 0) + len(result.losses)
        print(f"ran steps [{start_step or 0}, {end_step}): "
              f"first loss {result.losses[0]:.6f}, last {result.losses[-1]:.6f}, "
              f"best {result.best_loss:.6f} at step {result.best_step}")
    print(f"final checkpoint: {result.final_path}")
    if result.best_path:
        print(f"best checkpoint: {result.best_path}")
    return 0


# -- eval ---------------------------------------------------------------------


def _report_lines(report):
    return [
        f"mpjpe  single {report.mpjpe_single:.3f}  two {report.mpjpe_two:.3f}  "
        f"all {report.mpjpe_all:.3f}  (mm)",
        f"mpvpe  single {report.mpvpe_single:.3f}  two {report.mpvpe_two:.3f}  "
        f"all {report.mpvpe_all:.3f}  (mm)",
        f"mrrpe  {report.mrrpe:.3f}  (mm)",
        f"samples  single {report.n_single}  two {report.n_two}",
    ]


def cmd_eval(args):
    config, params, _, _ = load_checkpoint(args.checkpoint)
    model = EANet(config, params=params)
    samples = read_samples(args.dataset)
    check_geometry(model.config, samples)
    report = evaluate(model, samples, default_template())

    os.makedirs(args.out, exist_ok=True)
    write_metrics_csv(os.path.join(args.out, "metrics.csv"), report)
    write_metrics_json(os.path.join(args.out, "metrics.json"), report)
    _write_resolved(args.out, {
        "command": "eval",
        "checkpoint": args.checkpoint,
        "dataset": args.dataset,
        "model": config.to_dict(),
        "samples": len(samples),
    })
    for line in _report_lines(report):
        print(line)
    return 0


# -- gradcheck ----------------------------------------------------------------


def cmd_gradcheck(args):
    t0 = time.monotonic()
    seed = args.seed if args.seed is not None else 0
    reports = check_primitives(seed=seed)
    reports["end_to_end"] = end_to_end_gradcheck(seed=seed)

    rows = []
    all_ok = True
    for name, report in reports.items():
        ok = report.passed(GRADCHECK_THRESHOLD) and not report.skipped
        all_ok = all_ok and ok
        rows.append((name, report.max_rel_err, len(report.probes), len(report.skipped), ok))

    print(f"{'op':22s} {'max_rel_err':>12s} {'probes':>7s} {'skipped':>8s}  status")
    for name, err, probes, skipped, ok in rows:
        print(f"{name:22s} {err:12.3e} {probes:7d} {skipped:8d}  {'ok' if ok else 'FAIL'}")
    elapsed = time.monotonic() - t0
    print(f"{len(rows)} checks in {elapsed:.2f}s, threshold {GRADCHECK_THRESHOLD:g}")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "gradcheck.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["op", "max_rel_err", "probes", "skipped", "passed"])
            for name, err, probes, skipped, ok in rows:
                writer.writerow([name, repr(err), probes, skipped, ok])
        _write_resolved(args.out, {
            "command": "gradcheck",
            "seed": seed,
            "threshold": GRADCHECK_THRESHOLD,
            "elapsed_seconds": elapsed,
        })
    if not all_ok:
        raise NumericError("gradient check failed; see the table above")
    return 0


# -- ablate -------------------------------------------------------------------


def _ablate_config(path):
    data = _load_json(path, "ablation config") if path else {}
    unknown = set(data) - {"seeds", "variants", "sweep", "gen", "model", "train"}
    if unknown:
        raise ConfigError(f"unknown ablation config keys: {sorted(unknown)}")
    seeds = int(data.get("seeds", 5))
    if seeds <= 0:
        raise ConfigError("seeds wants a positive count")
    variants = list(data.get("variants", ["sa_only", "ca_only", "fuseformer"]))
    sweep = [float(s) for s in data.get("sweep", SWEEP_LEVELS)]
    gen_dict = {"train_samples": 96, "val_samples": 32, **data.get("gen", {})}
    return seeds, variants, sweep, gen_dict, dict(data.get("model", {})), dict(data.get("train", {}))


REPORT_FIELDS = ("mpjpe_single", "mpjpe_two", "mpjpe_all",
                 "mpvpe_single", "mpvpe_two", "mpvpe_all",
                 "mrrpe", "n_single", "n_two")


def cmd_ablate(args):
    seeds, variants, sweep, gen_dict, model_dict, train_dict = _ablate_config(args.config)
    for variant in variants:
        _apply_variant(dict(model_dict), variant)  # fail fast on bad names
    base_seed = args.seed if args.seed is not None else int(train_dict.get("seed", 0))
    gen_cfg = GenConfig.from_dict(gen_dict)

    data_dir = os.path.join(args.out, "data")
    os.makedirs(data_dir, exist_ok=True)
    train_path = os.path.join(data_dir, "train.bin")
    train_samples = generate_samples(gen_cfg, TRAIN_SPLIT, gen_cfg.train_samples)
    write_samples(train_path, train_samples)
    train_hash = _sha256(train_path)
    val_sets = {}
    val_hashes = {}
    for s in sweep:
        cfg_s = dataclasses.replace(gen_cfg, symmetry=s)
        val_sets[s] = generate_samples(cfg_s, VAL_SPLIT, cfg_s.val_samples)
        path = os.path.join(data_dir, _val_name(s))
        write_samples(path, val_sets[s])
        val_hashes[s] = _sha256(path)

    def job(variant, k):
        # every run sees the same training file; each worker owns its model
        # and template so runs can proceed in parallel
        mcfg = ModelConfig.from_dict(_apply_variant(dict(model_dict), variant))
        tcfg = TrainConfig.from_dict({**train_dict, "seed": base_seed + k})
        check_geometry(mcfg, train_samples)
        template = default_template()
        model = EANet(mcfg, seed=tcfg.seed)
        run_dir = os.path.join(args.out, "runs", variant, f"seed{k}")
        result = train(model, train_samples, tcfg, out_dir=run_dir, template=template)
        _write_resolved(run_dir, {
            "command": "ablate/run",
            "variant": variant,
            "seed": tcfg.seed,
            "model": mcfg.to_dict(),
            "train": tcfg.to_dict(),
            "train_data": {"file": train_path, "sha256": train_hash},
        })
        rows = []
        for s in sweep:
            report = evaluate(model, val_sets[s], template)
            row = {"variant": variant, "seed": tcfg.seed, "symmetry": s}
            row.update({k2: getattr(report, k2) for k2 in REPORT_FIELDS})
            rows.append(row)
        return rows

    jobs = [(variant, k) for variant in variants for k in range(seeds)]
    cap = _thread_cap()
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            per_job = list(pool.map(lambda vk: job(*vk), jobs))
    else:
        per_job = [job(*vk) for vk in jobs]
    rows = [row for chunk in per_job for row in chunk]

    results_path = os.path.join(args.out, "results.csv")
    with open(results_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["variant", "seed", "symmetry", *REPORT_FIELDS]
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in (row[h] for h in header)])

    summary_path = os.path.join(args.out, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "symmetry", "mpjpe_all", "mpvpe_all", "mrrpe"])
        for variant in variants:
            for s in sweep:
                bucket = [r for r in rows if r["variant"] == variant and r["symmetry"] == s]
                writer.writerow([
                    variant, repr(s),
                    repr(float(np.mean([r["mpjpe_all"] for r in bucket]))),
                    repr(float(np.mean([r["mpvpe_all"] for r in bucket]))),
                    repr(float(np.mean([r["mrrpe"] for r in bucket]))),
                ])

    _write_resolved(args.out, {
        "command": "ablate",
        "seeds": seeds,
        "base_seed": base_seed,
        "variants": variants,
        "sweep": sweep,
        "gen": gen_cfg.to_dict(),
        "model": model_dict,
        "train": train_dict,
        "train_data_sha256": train_hash,
        "val_data_sha256": {repr(s): h for s, h in val_hashes.items()},
        "threads": cap,
    })
    for variant in variants:
        vals = [r["mpjpe_all"] for r in rows if r["variant"] == variant]
        print(f"{variant:12s} mean mpjpe_all over seeds and levels: {np.mean(vals):.3f} mm")
    print(f"results: {results_path}")
    return 0


# -- export -------------------------------------------------------------------


def cmd_export(args):
    config, params, _, _ = load_checkpoint(args.checkpoint)
    config = dataclasses.replace(config, diagnostics=True)
    model = EANet(config, params=params)
    samples = read_samples(args.dataset)
    if not 0 <= args.index < len(samples):
        raise ConfigError(f"sample index {args.index} outside dataset of {len(samples)}")
    sample = samples[args.index]
    check_geometry(model.config, [sample])

    os.makedirs(args.out, exist_ok=True)
    outputs = model.forward(sample.image)
    template = default_template()
    written = []
    for hand in ("left", "right"):
        branch = getattr(outputs, hand)
        mesh = skin_mesh(template, branch.theta.data, branch.beta.data, hand)
        path = os.path.join(args.out, f"{hand}.obj")
        write_obj(path, mesh, template)
        written.append(path)

    diag = outputs.tokens
    token_keys = [k for k in ("sequence", "fused", "raw_left", "raw_right") if diag.get(k) is not None]
    for key in token_keys:
        path = os.path.join(args.out, f"tokens_{key}.csv")
        _write_matrix_csv(path, diag[key].data)
        written.append(path)
    if diag.get("sa_attn") is not None:
        path = os.path.join(args.out, "attention_self.csv")
        _write_matrix_csv(path, diag["sa_attn"].data)
        written.append(path)
    ca = diag.get("ca_attn")
    if ca is not None:
        mats = ca if isinstance(ca, tuple) else (ca,)
        names = ("attention_cross_left.csv", "attention_cross_right.csv") if len(mats) == 2 \
            else ("attention_cross.csv",)
        for name, mat in zip(names, mats):
            path = os.path.join(args.out, name)
            _write_matrix_csv(path, mat.data)
            written.append(path)

    _write_resolved(args.out, {
        "command": "export",
        "checkpoint": args.checkpoint,
        "dataset": args.dataset,
        "index": args.index,
        "model": config.to_dict(),
        "files": [os.path.basename(p) for p in written],
    })
    for path in written:
        print(f"wrote {path}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eanet",
        description="Two-hand mesh recovery: data synthesis, training, evaluation, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="synthesize a dataset (train + val record files)")
    gen.add_argument("--config", help="generation config JSON")
    gen.add_argument("--seed", type=int, help="override the master seed")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--sweep", action="store_true",
                     help="emit one val file per symmetry level 0, .25, .5, .75, 1")
    gen.set_defaults(func=cmd_gen)

    tr = sub.add_parser("train", help="train a model on a dataset file")
    tr.add_argument("--config", help='JSON with "model" and "train" sections')
    tr.add_argument("--seed", type=int, help="override the training seed")
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--dataset", required=True, help="training record file")
    tr.add_argument("--checkpoint", help="resume from this checkpoint")
    tr.add_argument("--variant", help="block kind or cross-attention variant")
    tr.add_argument("--overfit", action="store_true",
                    help="fit the first 8 samples for 500 steps")
    tr.add_argument("--stop-after", type=int,
                    help="pause after this many optimizer steps; resume later "
                         "with --checkpoint")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--out", required=True, help="report directory")
    ev.set_defaults(func=cmd_eval)

    gc = sub.add_parser("gradcheck", help="finite-difference audit of every op")
    gc.add_argument("--seed", type=int, help="fixture seed")
    gc.add_argument("--out", help="optional report directory")
    gc.set_defaults(func=cmd_gradcheck)

    ab = sub.add_parser("ablate", help="compare block variants across seeds")
    ab.add_argument("--config", help="ablation config JSON")
    ab.add_argument("--seed", type=int, help="base seed for the run series")
    ab.add_argument("--out", required=True, help="sweep directory")
    ab.set_defaults(func=cmd_ablate)

    ex = sub.add_parser("export", help="export meshes, token sets, attention maps")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--dataset", required=True)
    ex.add_argument("--index", type=int, default=0, help="sample index to export")
    ex.add_argument("--out", required=True, help="export directory")
    ex.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse has already printed usage or help
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    try:
        return int(args.func(args) or 0)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ShapeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
