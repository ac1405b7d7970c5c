"""Command-line entry point.

    distillkit <subcommand> [--config run.json] [--out DIR] [--seed N]

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.
Progress goes to stderr; results are written as files under ``--out``.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config, to_dict
from .data_io import (generate_smooth_covers, generate_synthetic, load_manifest, save_image, split,
                      split_indices, write_manifest)
from .distillation import (build_network, student_layers, sweep_to_csv, sweep_to_json,
                           teacher_layers, temperature_sweep, train)
from .errors import ConfigError, DistillkitError
from .metrics import compare, compare_to_markdown, evaluate, reports_to_csv, reports_to_json
from .residuals import QuantizerParams, detect, embed, extract_features

log = logging.getLogger("distillkit")

COMMANDS = ("train", "distill", "sweep", "embed", "extract", "detect", "eval", "synth")


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_jsonl(path, entries):
    _write(path, "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries))


def _write_json(path, obj):
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- shared steps -----------------------------------------------------------


def _datasets(cfg):
    """Train/test datasets from manifests, or a seeded synthetic split."""
    d = cfg.data
    if d.manifest:
        ds, report = load_manifest(d.manifest, size=d.size)
        if report.excluded_disagreement:
            log.info("excluded %d item(s) with annotator disagreement", report.excluded_disagreement)
        if d.test_manifest:
            test, _ = load_manifest(d.test_manifest, size=d.size, split="test")
            return ds, test
        return split(ds, d.test_fraction, cfg.seed)
    ds = generate_synthetic(cfg.synthetic_spec(), d.count_per_class)
    return split(ds, d.test_fraction, cfg.seed)


def _network(model_cfg, default_layers, size, seed):
    if model_cfg.checkpoint:
        net, _, _, _ = load_checkpoint(model_cfg.checkpoint)
        return net
    if model_cfg.layers is not None:
        layers = model_cfg.layers
    else:
        layers = default_layers(size, model_cfg.width) if model_cfg.width else default_layers(size)
    return build_network(layers, size, seed)


def _teacher(cfg, train_set, out):
    """Load the teacher checkpoint if configured, else train one and save it."""
    t = cfg.teacher
    if t.checkpoint:
        net, _, _, _ = load_checkpoint(t.checkpoint)
        return net
    net = _network(t, teacher_layers, cfg.data.size, cfg.seed)
    dcfg = replace(cfg.distill, epochs=t.epochs if t.epochs is not None else cfg.distill.epochs)
    log.info("training teacher (%d parameters)", net.num_parameters())
    net, history = train(net, train_set, dcfg, lr=t.lr or dcfg.teacher_lr, name="teacher")
    save_checkpoint(os.path.join(out, "teacher.ckpt.json"), net, seed=cfg.seed)
    _write_jsonl(os.path.join(out, "teacher_log.jsonl"), history)
    return net


def _student_cfg(cfg):
    s = cfg.student
    return replace(cfg.distill, epochs=s.epochs if s.epochs is not None else cfg.distill.epochs)


# -- subcommands ------------------------------------------------------------


def cmd_synth(cfg, out):
    ds = generate_synthetic(cfg.synthetic_spec(), cfg.data.count_per_class)
    img_dir = os.path.join(out, "images")
    os.makedirs(img_dir, exist_ok=True)
    items = []
    for i, (img, label) in enumerate(zip(ds.images, ds.labels)):
        rel = os.path.join("images", f"{i:05d}_{label}.pgm")
        save_image(os.path.join(out, rel), img)
        items.append((rel, label))
    write_manifest(os.path.join(out, "manifest.csv"), items)
    log.info("wrote %d images", len(items))


def cmd_train(cfg, out):
    train_set, test_set = _datasets(cfg)
    teacher = _teacher(replace(cfg, teacher=replace(cfg.teacher, checkpoint=None)), train_set, out)
    rep = evaluate(teacher, test_set, "teacher")
    _write(os.path.join(out, "eval.csv"), reports_to_csv([rep]))
    _write(os.path.join(out, "eval.json"), reports_to_json([rep]))


def cmd_distill(cfg, out):
    train_set, test_set = _datasets(cfg)
    teacher = _teacher(cfg, train_set, out)
    template = _network(cfg.student, student_layers, cfg.data.size, cfg.seed)
    scfg = _student_cfg(cfg)
    lr = cfg.student.lr or scfg.student_lr
    baseline, base_log = train(template, train_set, scfg, lr=lr, name="student")
    student, dist_log = train(template, train_set, scfg, teacher=teacher, lr=lr, name="student_distilled")
    save_checkpoint(os.path.join(out, "student.ckpt.json"), baseline, seed=cfg.seed)
    save_checkpoint(os.path.join(out, "student_distilled.ckpt.json"), student, seed=cfg.seed)
    _write_jsonl(os.path.join(out, "student_log.jsonl"), base_log)
    _write_jsonl(os.path.join(out, "distill_log.jsonl"), dist_log)
    reports = [evaluate(teacher, test_set, "teacher"), evaluate(baseline, test_set, "student"),
               evaluate(student, test_set, "student_distilled")]
    _write(os.path.join(out, "eval.csv"), reports_to_csv(reports))
    _write(os.path.join(out, "eval.json"), reports_to_json(reports))
    _write(os.path.join(out, "compare.md"), compare_to_markdown(compare(reports, "student")))


def cmd_sweep(cfg, out):
    train_set, test_set = _datasets(cfg)
    teacher = _teacher(cfg, train_set, out)
    template = _network(cfg.student, student_layers, cfg.data.size, cfg.seed)
    scfg = _student_cfg(cfg)
    if cfg.student.lr:
        scfg = replace(scfg, student_lr=cfg.student.lr)
    rows, best = temperature_sweep(teacher, template, train_set, cfg.sweep.temperatures, scfg, test_set)
    _write(os.path.join(out, "sweep.csv"), sweep_to_csv(rows, best))
    _write(os.path.join(out, "sweep.json"), sweep_to_json(rows, best))


def cmd_embed(cfg, out):
    e = cfg.embed
    if e.format not in ("pgm", "png"):
        raise ConfigError(f"embed.format must be 'pgm' or 'png', got {e.format!r}")
    if e.manifest:
        ds, _ = load_manifest(e.manifest)
        covers = list(ds.images)
    else:
        covers = list(generate_smooth_covers(e.count, e.size, cfg.seed, e.cover_noise))
    img_dir = os.path.join(out, "images")
    os.makedirs(img_dir, exist_ok=True)
    items, summary = [], []
    for i, cover in enumerate(covers):
        stego, signal = embed(cover, e.change_rate, seed=cfg.seed * 100003 + i, mode=e.mode)
        for tag, img, label in (("cover", cover, 0), ("stego", stego, 1)):
            rel = os.path.join("images", f"{i:05d}_{tag}.{e.format}")
            save_image(os.path.join(out, rel), img)
            items.append((rel, label))
        summary.append({"index": i, "changes": signal.sigma,
                        "plus": int(np.sum(signal.changes == 1)), "minus": int(np.sum(signal.changes == -1))})
    write_manifest(os.path.join(out, "manifest.csv"), items)
    _write_json(os.path.join(out, "embed.json"), {"change_rate": e.change_rate, "mode": e.mode, "images": summary})


def cmd_extract(cfg, out):
    x = cfg.extract
    if not x.manifest:
        raise ConfigError("extract.manifest is required")
    ds, _ = load_manifest(x.manifest)
    q = QuantizerParams(x.step, x.t_trunc).validate()
    rows = []
    for img, label in zip(ds.images, ds.labels):
        f = extract_features(img, tuple(x.kinds), q, x.order, tuple(x.directions))
        rows.append([int(label)] + [repr(float(v)) for v in f])
    with open(os.path.join(out, "features.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i}" for i in range(len(rows[0]) - 1)])
        w.writerows(rows)


def read_features(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except OSError as exc:
        raise ConfigError(f"cannot read features {path}: {exc}") from None
    if not header or header[0] != "label" or not rows:
        raise ConfigError(f"{path}: expected a 'label,f0,...' CSV with at least one row")
    data = np.array([[float(v) for v in r] for r in rows])
    return data[:, 0].astype(np.int64), data[:, 1:]


def cmd_detect(cfg, out):
    d = cfg.detect
    if not d.features:
        raise ConfigError("detect.features is required")
    labels, feats = read_features(d.features)
    train_idx, test_idx = split_indices(labels, d.test_fraction, cfg.seed)
    tr_l, tr_f = labels[train_idx], feats[train_idx]
    res = detect(tr_f[tr_l == 0], tr_f[tr_l == 1], feats[test_idx], labels[test_idx], l2=d.l2)
    _write_json(os.path.join(out, "detect.json"),
                {"accuracy": res.accuracy, "n_train": int(len(train_idx)), "n_test": int(len(test_idx))})
    with open(os.path.join(out, "predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label", "predicted"])
        for i, lab, pred in zip(test_idx, labels[test_idx], res.labels):
            w.writerow([int(i), int(lab), int(pred)])


def cmd_eval(cfg, out):
    ev = cfg.eval
    if not ev.checkpoints:
        raise ConfigError("eval.checkpoints must list at least one checkpoint")
    if cfg.data.manifest:
        test_set, _ = load_manifest(cfg.data.manifest, size=cfg.data.size, split="test")
    else:
        _, test_set = _datasets(cfg)
    names = ev.names or [os.path.splitext(os.path.basename(p))[0].replace(".ckpt", "") for p in ev.checkpoints]
    if len(names) != len(ev.checkpoints):
        raise ConfigError("eval.names must match eval.checkpoints in length")
    reports = []
    for name, path in zip(names, ev.checkpoints):
        net, _, _, _ = load_checkpoint(path)
        reports.append(evaluate(net, test_set, name))
    _write(os.path.join(out, "eval.csv"), reports_to_csv(reports))
    _write(os.path.join(out, "eval.json"), reports_to_json(reports))
    if ev.baseline:
        _write(os.path.join(out, "compare.md"), compare_to_markdown(compare(reports, ev.baseline)))


HANDLERS = {"train": cmd_train, "distill": cmd_distill, "sweep": cmd_sweep, "embed": cmd_embed,
            "extract": cmd_extract, "detect": cmd_detect, "eval": cmd_eval, "synth": cmd_synth}


def build_parser():
    p = argparse.ArgumentParser(prog="distillkit", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides config 'out')")
        sp.add_argument("--seed", type=int, help="global seed (overrides config 'seed')")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.distill.seed = args.seed
        if args.out:
            cfg.out = args.out
        if not cfg.out:
            raise ConfigError("an output directory is required (--out or config 'out')")
        os.makedirs(cfg.out, exist_ok=True)
        run = {"command": args.command, "version": __version__, "seed": cfg.seed, "config": to_dict(cfg),
               "started": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
        _write_json(os.path.join(cfg.out, "run.json"), run)
        HANDLERS[args.command](cfg, cfg.out)
    except ConfigError as exc:
        print(f"distillkit {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except DistillkitError as exc:
        print(f"distillkit {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("unhandled", exc_info=True)
        print(f"distillkit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
