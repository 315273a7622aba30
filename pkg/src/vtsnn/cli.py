"""Command-line entry point: ``vtsnn <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, _accel, annotate, data, evaluate, models
from .config import (
    TrainConfig, load_weights, parse_architecture, read_train_config, render_architecture,
    save_weights,
)
from .errors import (
    ConfigError, DivergenceError, LayoutError, ParseError, ShapeError, StratificationError,
    ValidationError,
)
from .events import Geometry, Modality, read_csv_events, write_stream
from .snn import SrmConfig
from .training import LossSpec, OptimizerState, make_target_counts, train

log = logging.getLogger("vtsnn")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_SHAPE = 4
EXIT_PARSE = 5
EXIT_CONFIG = 6
EXIT_DIVERGED = 7
EXIT_STRATIFY = 8

EXIT_CODES_HELP = """\
exit codes:
  0  success
  1  internal error
  2  usage error (unknown flag, bad value)
  3  missing file or directory
  4  shape mismatch (network vs. data or weights)
  5  malformed input file or failed validation
  6  invalid configuration
  7  training diverged (non-finite loss)
  8  stratified split impossible (class with fewer than k samples)

environment: VTSNN_OUTPUT_DIR (default output dir), VTSNN_THREADS (worker count),
VTSNN_DISABLE_NUMBA=1 (use the pure-numpy kernels)
"""

_ERRORS = [
    (FileNotFoundError, EXIT_MISSING_FILE, "missing-file"),
    (ShapeError, EXIT_SHAPE, "shape-mismatch"),
    (LayoutError, EXIT_SHAPE, "shape-mismatch"),
    (ParseError, EXIT_PARSE, "parse-error"),
    (ValidationError, EXIT_PARSE, "validation-error"),
    (StratificationError, EXIT_STRATIFY, "stratification-error"),
    (ConfigError, EXIT_CONFIG, "config-error"),
    (DivergenceError, EXIT_DIVERGED, "diverged"),
]

TASKS = {
    "slip": (data.Preprocessing.slip, 2),
    "container": (data.Preprocessing.container, 20),
}
MODALITIES = {"tact": ("tactile",), "vis": ("vision",), "mm": ("tactile", "vision")}


class CliError(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


def _fail_line(code, kind, message):
    return f"vtsnn: error code={code} kind={kind}: {' '.join(str(message).split())}"


def _default_out(args, fallback):
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("VTSNN_OUTPUT_DIR", fallback))


def _threads(args):
    if args.threads:
        return args.threads
    return int(os.environ.get("VTSNN_THREADS", os.cpu_count() or 1))


def _require(path, what):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _versions():
    nb = _accel.numba
    return {"vtsnn": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "numba": nb.__version__ if nb else None,
            "backend": _accel.BACKEND}


def _write_manifest(out: Path, args, extra):
    record = {"command": args.command, "argv": args.argv,
              "versions": _versions(), **extra}
    (out / "manifest.json").write_text(json.dumps(record, indent=2, sort_keys=True, default=str))


def _prep_from(args):
    maker, n_classes = TASKS[args.task]
    prep = maker()
    overrides = {}
    if getattr(args, "bin_width", None):
        overrides["bin_width"] = args.bin_width
    if getattr(args, "n_bins", None):
        overrides["n_bins"] = args.n_bins
    if getattr(args, "t_start", None) is not None:
        overrides["t_start"] = args.t_start
    if getattr(args, "merge_polarity", False):
        overrides["merge_vision_polarity"] = True
    if overrides:
        prep = data.Preprocessing(**{**prep.__dict__, **overrides})
    return prep, n_classes


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args):
    out = _default_out(args, "vtsnn-data")
    spec = data.preset(args.preset)
    samples = data.generate_synthetic(spec, args.n, args.seed)
    data.write_dataset(samples, out)
    print(f"wrote {len(samples)} samples to {out}")


def cmd_convert(args):
    src = _require(args.input, "CSV file")
    if args.geometry:
        g = Geometry(*map(int, args.geometry.lower().split("x")))
        stream = read_csv_events(src, g.size, Modality.VISION, g)
    else:
        stream = read_csv_events(src, args.channels, Modality.TACTILE)
    write_stream(stream, args.output)
    print(f"wrote {len(stream)} events to {args.output}")


def _load_train_config(args):
    cfg = read_train_config(_require(args.config, "config")) if args.config else TrainConfig()
    return cfg.update(epochs=args.epochs, lr=args.lr, batch=args.batch, l2=args.l2,
                      loss=args.loss, beta=args.beta, gamma=args.gamma,
                      true_count=args.true_count, false_count=args.false_count, seed=args.seed)


def _loss_spec(cfg: TrainConfig, task, prep):
    if cfg.true_count is not None:
        true_count = cfg.true_count
        false_count = cfg.false_count if cfg.false_count is not None else 0
    elif task == "slip":
        true_count, false_count = 80, 5
        if cfg.false_count is not None:
            false_count = cfg.false_count
    else:
        true_count, false_count = make_target_counts(prep.n_bins)
        if cfg.false_count is not None:
            false_count = cfg.false_count
    weighting = "quadratic" if cfg.loss == "weighted" else "uniform"
    return LossSpec(true_count, false_count, weighting, cfg.beta, cfg.gamma)


def _network_for(args, n_classes, prep):
    srm = SrmConfig.for_step(prep.bin_width)
    if getattr(args, "arch", None):
        return parse_architecture(_require(args.arch, "architecture file").read_text())
    g = Geometry(200, 250, 1 if prep.merge_vision_polarity else 2)
    spec = models.ArchitectureSpec(n_classes=n_classes, srm=srm, vision_geometry=g)
    return models.build(args.model, n_classes, spec)


def cmd_train(args):
    root = _require(args.data, "dataset directory")
    cfg = _load_train_config(args)
    prep, n_classes = _prep_from(args)
    if args.classes:
        n_classes = args.classes
    samples = data.load_dataset(root)
    labels = [s.label for s in samples]
    if max(labels) >= n_classes:
        raise ShapeError(f"dataset has label {max(labels)} but the model has {n_classes} classes")
    prepared = data.prepare(samples, prep, MODALITIES[args.model])
    plan = data.stratified_kfold(labels, args.folds, cfg.seed)
    spec = _loss_spec(cfg, args.task, prep)
    folds = range(args.folds) if args.all_folds else [args.fold]
    out = _default_out(args, "vtsnn-run")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "split.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("index", "label", "fold"))
        for i, (lab, f) in enumerate(zip(labels, plan.folds)):
            w.writerow((i, lab, int(f)))
    (out / "train.conf").write_text(cfg.to_text())
    arch_written = False
    summary = {}
    for fold in folds:
        tr, te = plan.train_test(fold)
        network = _network_for(args, n_classes, prep)
        if not arch_written:
            (out / "arch.txt").write_text(render_architecture(network))
            arch_written = True
        metrics_path = out / f"metrics_fold{fold}.csv"
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("epoch", "train_loss", "train_acc", "test_acc"))

            def on_epoch(row):
                writer.writerow((row["epoch"], f"{row['train_loss']:.6f}",
                                 f"{row['train_acc']:.6f}", f"{row['test_acc']:.6f}"))
                fh.flush()

            result = train(network, [prepared[i] for i in tr], spec,
                           OptimizerState(cfg.lr, cfg.l2), cfg.epochs, cfg.seed + fold,
                           cfg.batch, test_set=[prepared[i] for i in te], on_epoch=on_epoch)
        save_weights(network, out / f"fold{fold}.snnw")
        final = result.final or {}
        summary[fold] = {k: final.get(k) for k in ("train_acc", "test_acc")}
        print(f"fold {fold}: train_acc={final.get('train_acc', float('nan')):.4f} "
              f"test_acc={final.get('test_acc', float('nan')):.4f}")
    _write_manifest(out, args, {
        "seed": cfg.seed, "config": cfg.__dict__, "model": args.model, "task": args.task,
        "classes": n_classes, "preprocessing": prep.__dict__, "folds": args.folds,
        "trained_folds": list(folds), "loss_spec": spec.__dict__, "results": summary,
        "data": str(root),
    })


def _load_run(run_dir):
    run = _require(run_dir, "run directory")
    manifest = json.loads(_require(run / "manifest.json", "run manifest").read_text())
    network_text = _require(run / "arch.txt", "architecture file").read_text()
    prep = data.Preprocessing(**manifest["preprocessing"])
    return run, manifest, network_text, prep


def _fold_networks(run, manifest, network_text, only=None):
    for fold in manifest["trained_folds"]:
        if only is not None and fold != only:
            continue
        net = parse_architecture(network_text)
        yield fold, load_weights(net, _require(run / f"fold{fold}.snnw", "weights file"))


def _test_sets(args, manifest, prep):
    samples = data.load_dataset(_require(args.data, "dataset directory"))
    prepared = data.prepare(samples, prep, MODALITIES[manifest["model"]])
    plan = data.stratified_kfold([s.label for s in samples], manifest["folds"],
                                 manifest["seed"])
    return prepared, plan


def cmd_eval(args):
    run, manifest, text, prep = _load_run(args.run)
    prepared, plan = _test_sets(args, manifest, prep)
    out = _default_out(args, "vtsnn-eval")
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for fold, net in _fold_networks(run, manifest, text):
        _, te = plan.train_test(fold)
        acc = evaluate.accuracy_at_cutoffs(net, [prepared[i] for i in te], [prep.n_bins],
                                           _threads(args))[0]
        rows.append((fold, len(te), acc))
        print(f"fold {fold}: accuracy {acc:.4f} on {len(te)} samples")
    accs = np.array([r[2] for r in rows])
    print(f"mean accuracy {accs.mean():.4f} +/- {accs.std():.4f}")
    with open(out / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("fold", "n_test", "accuracy"))
        w.writerows((f, n, f"{a:.6f}") for f, n, a in rows)
    _write_manifest(out, args, {"seed": manifest["seed"], "run": str(run), "results": rows})


def cmd_curve(args):
    run, manifest, text, prep = _load_run(args.run)
    prepared, plan = _test_sets(args, manifest, prep)
    out = _default_out(args, "vtsnn-curve")
    out.mkdir(parents=True, exist_ok=True)
    folds = []
    for fold, net in _fold_networks(run, manifest, text):
        _, te = plan.train_test(fold)
        folds.append((net, [prepared[i] for i in te]))
    cutoffs = evaluate.default_cutoffs(prep.n_bins, args.every)
    curve = evaluate.early_accuracy_curve(folds, prep.bin_width, cutoffs, _threads(args))
    curve.write_csv(out / "curve.csv")
    if args.plot:
        curve.plot(out / "curve.png", label=manifest["model"])
    print(f"wrote {len(cutoffs)} points to {out / 'curve.csv'}; "
          f"final accuracy {curve.mean[-1]:.4f}")
    _write_manifest(out, args, {"seed": manifest["seed"], "run": str(run)})


def cmd_predict(args):
    run, manifest, text, prep = _load_run(args.run)
    fold = args.fold if args.fold is not None else manifest["trained_folds"][0]
    _, net = next(_fold_networks(run, manifest, text, only=fold), (None, None))
    if net is None:
        raise ConfigError(f"fold {fold} was not trained in {run}")
    sample = data.load_sample(_require(args.sample, "sample directory"))
    x = data.sample_inputs(sample, prep, MODALITIES[manifest["model"]])
    from .snn import network_forward

    print(evaluate.predict(network_forward(net, x)[-1].spikes, args.upto))


def cmd_annotate(args):
    out = _default_out(args, "vtsnn-annotations")
    out.mkdir(parents=True, exist_ok=True)
    rows = [annotate.annotate_file(_require(p, "pose file"), args.frame_rate,
                                   persistence=args.persistence) for p in args.poses]
    annotate.write_annotations(rows, out / "annotations.csv")
    for rec, f_lift, f_slip, lag in rows:
        print(f"{rec}: lift={f_lift} slip={f_slip} lag={'' if lag is None else f'{lag:.4f}'}")
    _write_manifest(out, args, {"seed": None, "inputs": [str(p) for p in args.poses]})


def cmd_bench(args):
    run, manifest, text, prep = _load_run(args.run)
    prepared, plan = _test_sets(args, manifest, prep)
    fold, net = next(_fold_networks(run, manifest, text))
    _, te = plan.train_test(fold)
    inputs = evaluate.repeat_to([prepared[i][0] for i in te], args.samples)
    report = evaluate.bench(net, inputs, args.mode, n_samples=args.samples,
                            n_steps=prep.n_bins, delay=args.delay, power_w=args.power)
    out = _default_out(args, "vtsnn-bench")
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.csv").write_text(evaluate.BENCH_HEADER + "\n" + report.csv_line() + "\n")
    print(report.summary())
    _write_manifest(out, args, {"seed": manifest["seed"], "run": str(run),
                                "latency_us": report.latency_us})


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="vtsnn", description="Event-driven visual-tactile spiking networks.",
                epilog=EXIT_CODES_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--threads", type=int, default=None, help="worker threads for evaluation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--preset", default="slip-toy",
                   choices=["two-class", "slip-toy", "container-toy", "early-toy"])
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("convert", help="convert a timestamp_us,channel,polarity CSV to .evst")
    c.add_argument("input")
    c.add_argument("output")
    c.add_argument("--channels", type=int, default=data.TACTILE_CHANNELS)
    c.add_argument("--geometry", help="vision layout WxHxP, e.g. 200x250x2")
    c.set_defaults(func=cmd_convert)

    def data_flags(sp):
        sp.add_argument("--data", required=True, help="dataset directory")
        sp.add_argument("--out")

    t = sub.add_parser("train", help="train a network with k-fold splits")
    data_flags(t)
    t.add_argument("--model", choices=sorted(MODALITIES), default="mm")
    t.add_argument("--task", choices=sorted(TASKS), default="slip")
    t.add_argument("--classes", type=int, choices=[2, 20])
    t.add_argument("--arch", help="architecture file overriding --model layout")
    t.add_argument("--config", help="training config file (key = value)")
    t.add_argument("--loss", choices=["count", "weighted"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch", type=int)
    t.add_argument("--l2", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--gamma", type=float)
    t.add_argument("--true-count", type=int)
    t.add_argument("--false-count", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--folds", type=int, default=5)
    t.add_argument("--fold", type=int, default=0)
    t.add_argument("--all-folds", action="store_true")
    t.add_argument("--bin-width", type=float)
    t.add_argument("--n-bins", type=int)
    t.add_argument("--t-start", type=float)
    t.add_argument("--merge-polarity", action="store_true",
                   help="fold vision polarity planes together before binning")
    t.set_defaults(func=cmd_train)

    for name, func, hlp in (("eval", cmd_eval, "test accuracy per trained fold"),
                            ("curve", cmd_curve, "early-classification accuracy curve")):
        e = sub.add_parser(name, help=hlp)
        data_flags(e)
        e.add_argument("--run", required=True, help="output directory of a train run")
        if name == "curve":
            e.add_argument("--every", type=int, default=10, help="bins between curve points")
            e.add_argument("--plot", action="store_true", help="also write curve.png")
        e.set_defaults(func=func)

    pr = sub.add_parser("predict", help="print the predicted class of one sample")
    pr.add_argument("--run", required=True)
    pr.add_argument("--sample", required=True, help="sample directory")
    pr.add_argument("--fold", type=int)
    pr.add_argument("--upto", type=int, help="only count output spikes in the first N bins")
    pr.set_defaults(func=cmd_predict)

    a = sub.add_parser("annotate", help="lift/slip onsets from pose CSV files")
    a.add_argument("poses", nargs="+")
    a.add_argument("--frame-rate", type=float, default=120.0)
    a.add_argument("--persistence", type=int, default=annotate.PERSISTENCE)
    a.add_argument("--out")
    a.set_defaults(func=cmd_annotate)

    b = sub.add_parser("bench", help="latency per timestep over repeated forward passes")
    data_flags(b)
    b.add_argument("--run", required=True)
    b.add_argument("--mode", choices=["offline", "realtime"], default="offline")
    b.add_argument("--samples", type=int, default=evaluate.BENCH_SAMPLES)
    b.add_argument("--delay", type=float, default=evaluate.REALTIME_DELAY)
    b.add_argument("--power", type=float, help="average power draw (W) for the EDP figure")
    b.set_defaults(func=cmd_bench)
    return p


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        args.func(args)
        return EXIT_OK
    except CliError as e:
        print(_fail_line(e.code, e.kind, e), file=sys.stderr)
        return e.code
    except Exception as e:  # noqa: BLE001 - mapped to exit codes below
        for cls, code, kind in _ERRORS:
            if isinstance(e, cls):
                print(_fail_line(code, kind, e), file=sys.stderr)
                return code
        print(_fail_line(EXIT_INTERNAL, "internal", f"{type(e).__name__}: {e}"),
              file=sys.stderr)
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
