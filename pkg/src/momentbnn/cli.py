"""Command line interface: ``momentbnn {generate,train,eval,sweep,gradcheck,replay}``.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure, 3 I/O error.
Every command that writes files also writes ``manifest.json`` next to them;
``momentbnn replay manifest.json --out DIR`` re-runs it into ``DIR``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import __version__
from . import config as cfgmod
from .data import GENERATE, generate_batch, stream
from .errors import CheckpointError, ConfigError, NumericalError
from .experiment import evaluate_on_grid, evaluation_grid, run_sweep
from .gradcheck import grad_check
from .network import Architecture, HeadMode, count_parameters
from .trainer import Checkpoint, fit

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

logger = logging.getLogger("momentbnn")

PRED_HEADER = ["x", "pred_mean", "pred_var_total", "pred_var_aleatoric", "pred_var_epistemic"]
SWEEP_HEADER = ["width", "mode", "param_count", "best_val_nll", "in_dist_nll", "out_dist_nll"]
FAILED = "FAILED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v):
    """Round-trip-exact float text; empty for None."""
    if v is None:
        return ""
    return repr(float(v))


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _mode_list(text):
    try:
        return [HeadMode.parse(t.strip()).value for t in text.split(",") if t.strip()]
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _grid(text):
    try:
        lo, hi, n = text.split(":")
        return (float(lo), float(hi), int(n))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be LOW:HIGH:COUNT, got {text!r}")


# --- output helpers ----------------------------------------------------


def _write_manifest(out_dir, command, run_cfg, outputs, extra=None):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": run_cfg.train.seed,
        "config": run_cfg.to_dict(),
        "outputs": sorted(outputs),
    }
    manifest.update(extra or {})
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def write_predictions(path, evaluation):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(PRED_HEADER)
        va, ve = evaluation.var_aleatoric, evaluation.var_epistemic
        for i, x in enumerate(evaluation.x):
            w.writerow([
                _fmt(x), _fmt(evaluation.mean[i]), _fmt(evaluation.var_total[i]),
                _fmt(None if va is None else va[i]), _fmt(None if ve is None else ve[i]),
            ])


# --- commands ----------------------------------------------------------


def run_generate(run_cfg, n, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    x, y = generate_batch(run_cfg.data, n, stream(run_cfg.train.seed, GENERATE))
    path = os.path.join(out_dir, "data.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "y"])
        for xi, yi in zip(x, y):
            w.writerow([_fmt(xi), _fmt(yi)])
    _write_manifest(out_dir, "generate", run_cfg, ["data.csv"], {"n": n})
    return EXIT_OK


def run_train(run_cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    arch = run_cfg.architecture
    result = fit(arch, run_cfg.train, data_config=run_cfg.data)
    ckpt = result.checkpoint
    ckpt.save(os.path.join(out_dir, "checkpoint.json"))
    with open(os.path.join(out_dir, "metrics.jsonl"), "w") as f:
        for rec in result.history:
            f.write(json.dumps(rec) + "\n")
    summary = {
        "best_epoch": ckpt.epoch,
        "best_val_nll": ckpt.best_val_nll,
        "initial_val_nll": result.initial_val_nll,
        "param_count": count_parameters(arch),
        "epochs": run_cfg.train.epochs,
        "head_mode": arch.head_mode.value,
        "hidden_sizes": list(arch.hidden_sizes),
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(out_dir, "train", run_cfg,
                    ["checkpoint.json", "metrics.jsonl", "summary.json"])
    print(f"best epoch {ckpt.epoch}: val_nll {ckpt.best_val_nll:.6f}")
    return EXIT_OK


def run_eval(checkpoint_path, grid, out_dir, run_cfg=None):
    ckpt = Checkpoint.load(checkpoint_path)
    run_cfg = run_cfg or cfgmod.RunConfig(
        data=ckpt.data, architecture=ckpt.architecture, train=ckpt.config
    )
    run_cfg = cfgmod.with_overrides(run_cfg, grid=grid)
    os.makedirs(out_dir, exist_ok=True)
    ev = evaluate_on_grid(ckpt.to_network(), evaluation_grid(run_cfg.grid), ckpt.data,
                          ckpt.config.seed)
    write_predictions(os.path.join(out_dir, "predictions.csv"), ev)
    _write_manifest(out_dir, "eval", run_cfg, ["predictions.csv"],
                    {"checkpoint": os.path.abspath(checkpoint_path)})
    return EXIT_OK


def run_sweep_cmd(run_cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    report = run_sweep(
        run_cfg.sweep.widths, run_cfg.sweep.modes, run_cfg.train, run_cfg.data,
        grid=run_cfg.grid, slope=run_cfg.architecture.slope, workers=run_cfg.sweep.workers,
    )
    outputs = ["sweep.csv", "summary.json"]
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for c in report.cells:
            if c.ok:
                row = [c.width, c.mode, c.param_count, _fmt(c.best_val_nll),
                       _fmt(c.in_dist_nll), _fmt(c.out_dist_nll)]
                name = f"predictions_w{c.width}_{c.mode}.csv"
                write_predictions(os.path.join(out_dir, name), c.evaluation)
                ck_name = f"checkpoint_w{c.width}_{c.mode}.json"
                c.checkpoint.save(os.path.join(out_dir, ck_name))
                outputs += [name, ck_name]
            else:
                row = [c.width, c.mode, c.param_count, FAILED, FAILED, FAILED]
            w.writerow(row)
    wins = report.embedded_wins()
    summary = {
        "embedded_beats_split": {str(k): v for k, v in wins.items()},
        "failures": [
            {"width": c.width, "mode": c.mode, "error": c.error} for c in report.cells if not c.ok
        ],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(out_dir, "sweep", run_cfg, outputs)
    for width in sorted({c.width for c in report.cells}):
        won = wins.get(width)
        verdict = "n/a" if won is None else ("yes" if won else "no")
        print(f"width {width}: embedded beats split (in-distribution nll): {verdict}")
    if all(not c.ok for c in report.cells):
        return EXIT_NUMERICAL
    return EXIT_OK


def run_gradcheck(widths, modes, tolerance, seed, out_dir=None, corrupt=False, slope=0.01):
    ok = True
    results = []
    for mode in modes:
        for width in widths:
            arch = Architecture((width,), slope=slope, head_mode=mode)
            rep = grad_check(arch, tolerance=tolerance, seed=seed, corrupt=corrupt)
            ok &= rep.passed
            print(f"{mode} H={width}: {rep}")
            results.append({
                "mode": mode, "width": width, "max_rel_error": rep.max_rel_error,
                "failing": rep.failing, "passed": rep.passed,
            })
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "gradcheck.json"), "w") as f:
            json.dump({"tolerance": tolerance, "results": results}, f, indent=2)
            f.write("\n")
        run_cfg = cfgmod.with_overrides(cfgmod.RunConfig(), seed=seed)
        settings = {"widths": list(widths), "modes": list(modes), "tolerance": tolerance,
                    "corrupt": corrupt, "slope": slope}
        _write_manifest(out_dir, "gradcheck", run_cfg, ["gradcheck.json"],
                        {"gradcheck": settings})
    return EXIT_OK if ok else EXIT_NUMERICAL


def run_replay(manifest_path, out_dir):
    with open(manifest_path) as f:
        manifest = json.load(f)
    run_cfg = cfgmod.from_dict(manifest["config"])
    command = manifest["command"]
    if command == "generate":
        return run_generate(run_cfg, manifest["n"], out_dir)
    if command == "train":
        return run_train(run_cfg, out_dir)
    if command == "eval":
        return run_eval(manifest["checkpoint"], run_cfg.grid, out_dir, run_cfg)
    if command == "sweep":
        return run_sweep_cmd(run_cfg, out_dir)
    if command == "gradcheck":
        g = manifest["gradcheck"]
        return run_gradcheck(g["widths"], g["modes"], g["tolerance"], run_cfg.train.seed,
                             out_dir, corrupt=g["corrupt"], slope=g["slope"])
    raise ConfigError(f"manifest has unknown command {command!r}")


# --- argument parsing --------------------------------------------------


def _resolve(args):
    run_cfg = cfgmod.load(args.config) if getattr(args, "config", None) else cfgmod.RunConfig()
    return cfgmod.with_overrides(
        run_cfg,
        seed=getattr(args, "seed", None),
        epochs=getattr(args, "epochs", None),
        widths=getattr(args, "widths", None),
        modes=getattr(args, "modes", None),
        workers=getattr(args, "workers", None),
        grid=getattr(args, "grid", None),
    )


def build_parser():
    p = _Parser(prog="momentbnn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a CSV of noisy polynomial data")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("-n", "--n", type=int, default=64)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train one network, keep the best checkpoint")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="predict on an evenly spaced grid")
    e.add_argument("checkpoint")
    e.add_argument("--grid", type=_grid, help="LOW:HIGH:COUNT (default -1.5:1.5:201)")
    e.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="train every (width, head) pair and tabulate losses")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--widths", type=_int_list)
    s.add_argument("--modes", type=_mode_list)
    s.add_argument("--grid", type=_grid)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True)

    c = sub.add_parser("gradcheck", help="compare gradients with finite differences")
    c.add_argument("--widths", type=_int_list, default=[4])
    c.add_argument("--modes", type=_mode_list, default=["embedded", "split"])
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.add_argument("--corrupt-adjoint", action="store_true", help=argparse.SUPPRESS)

    r = sub.add_parser("replay", help="re-run a command from its manifest.json")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "generate":
            if args.n < 0:
                raise ConfigError("-n must be non-negative")
            return run_generate(_resolve(args), args.n, args.out)
        if args.command == "train":
            return run_train(_resolve(args), args.out)
        if args.command == "eval":
            return run_eval(args.checkpoint, args.grid, args.out)
        if args.command == "sweep":
            return run_sweep_cmd(_resolve(args), args.out)
        if args.command == "gradcheck":
            return run_gradcheck(args.widths, args.modes, args.tolerance, args.seed,
                                 args.out, corrupt=args.corrupt_adjoint)
        if args.command == "replay":
            return run_replay(args.manifest, args.out)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
