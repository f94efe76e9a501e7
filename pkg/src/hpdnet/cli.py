"""Command-line pipeline: synth, train, classify, eval, render.

Exit codes: 0 success, 2 usage or configuration error, 3 data or file
format error, 4 numerical failure.
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import errors
from .config import load_config, parse_scene_spec
from .evaluation import evaluate, format_keyvalue, format_table
from .modelio import load_model, save_model
from .pipeline import classify_pipeline, train_pipeline
from .polsar import (
    FIELD_MAGIC, _atomic_write, generate_synthetic_scene, load_field, parse_field,
    pauli_rgb, read_pgm, save_field, write_pgm, write_ppm,
)

log = logging.getLogger("hpdnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# class-map colours, indexed by class id (0 = unlabelled, black)
PALETTE = np.array([
    [0, 0, 0], [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
    [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230], [210, 245, 60],
    [250, 190, 212], [0, 128, 128], [220, 190, 255], [170, 110, 40], [255, 250, 200],
    [128, 0, 0], [170, 255, 195],
], dtype=np.uint8)


def class_map_rgb(labels):
    labels = np.asarray(labels, dtype=np.intp)
    return PALETTE[np.where(labels < len(PALETTE), labels, labels % (len(PALETTE) - 1) + 1)]


def read_label_map(path):
    """Label grid from a binary PGM or the label section of an ``HPD3`` file."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head[:2] == b"P5":
        return read_pgm(path)
    if head == FIELD_MAGIC:
        with open(path, "rb") as fh:
            _, labels = parse_field(fh.read())
        if labels is None:
            raise errors.FormatError(f"{path}: field file carries no labels")
        return labels
    raise errors.FormatError(f"{path}: not a PGM label map or HPD3 field", 0)


def _color_path(map_out):
    root, ext = os.path.splitext(map_out)
    return (root if ext.lower() == ".pgm" else map_out) + ".ppm"


def cmd_synth(args):
    with open(args.spec, encoding="utf-8") as fh:
        spec = parse_scene_spec(fh.read(), args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    field, labels = generate_synthetic_scene(spec)
    save_field(args.out, field, labels)
    log.info("wrote %dx%d scene with %d classes to %s",
             field.height, field.width, len(spec.centers), args.out)


def _overrides(args):
    return {
        "seed": args.seed, "patch_size": args.patch_size, "rcm_layers": args.rcm_layers,
        "sample_fraction": args.sample_fraction, "iterations": args.iterations, "lr": args.lr,
    }


def cmd_train(args):
    cfg = load_config(args.config, _overrides(args))
    field, labels = load_field(args.data)
    if labels is None:
        raise errors.NoLabels(f"{args.data}: training data carries no label map")
    model, report = train_pipeline(field, labels, cfg)
    lines = [f"num_train={report.num_train}", f"train_accuracy={report.train_accuracy!r}",
             f"wall_time={report.wall_time:.3f}"]
    lines += [f"epoch_loss[{i}]={v!r}" for i, v in enumerate(report.epoch_loss)]
    save_model(args.model_out, model)
    _atomic_write(args.model_out + ".report", ("\n".join(lines) + "\n").encode())
    log.info("train accuracy %.4f over %d samples, %.1fs",
             report.train_accuracy, report.num_train, report.wall_time)


def cmd_classify(args):
    model = load_model(args.model)
    field, _ = load_field(args.data)
    pred = classify_pipeline(model, field)
    write_pgm(args.map_out, pred)
    write_ppm(_color_path(args.map_out), class_map_rgb(pred))


def cmd_eval(args):
    pred = read_label_map(args.pred)
    truth = read_label_map(args.truth)
    cm, report = evaluate(pred, truth)
    table = format_table(cm, report)
    _atomic_write(args.report_out, format_keyvalue(cm, report).encode())
    sys.stdout.write(table)


def cmd_render(args):
    field, _ = load_field(args.data)
    write_ppm(args.image_out, pauli_rgb(field.pixels))


def build_parser():
    p = argparse.ArgumentParser(prog="hpdnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic Wishart scene")
    s.add_argument("spec")
    s.add_argument("out")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="learn kernels and train the classifier")
    t.add_argument("data")
    t.add_argument("model_out")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--patch-size", type=int)
    t.add_argument("--rcm-layers", type=int)
    t.add_argument("--sample-fraction", type=float)
    t.add_argument("--iterations", type=int)
    t.add_argument("--lr", type=float)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("classify", help="predict a label map")
    c.add_argument("data")
    c.add_argument("model")
    c.add_argument("map_out")
    c.set_defaults(func=cmd_classify)

    e = sub.add_parser("eval", help="score a label map against ground truth")
    e.add_argument("pred")
    e.add_argument("truth")
    e.add_argument("report_out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="write a PauliRGB image")
    r.add_argument("data")
    r.add_argument("image_out")
    r.set_defaults(func=cmd_render)
    return p


_EXIT_CODES = (
    (errors.ConfigError, EXIT_USAGE),
    ((errors.FormatError, errors.ShapeError, errors.NoLabels, errors.InsufficientSamples,
      errors.EmptyInput, OSError), EXIT_DATA),
    ((errors.NotPositiveDefinite, errors.InvalidMatrix, errors.DegenerateKernel,
      errors.DivergedLoss), EXIT_NUMERIC),
)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        for kinds, code in _EXIT_CODES:
            if isinstance(exc, kinds):
                print(f"hpdnet {args.command}: error: {exc}", file=sys.stderr)
                return code
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
