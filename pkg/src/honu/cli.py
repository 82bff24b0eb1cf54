"""Command-line experiment runner.

Subcommands::

    honu generate  -> dataset.csv
    honu identify  -> model.txt, training.csv, evaluation.csv
    honu control   -> controller.txt, tuning.csv, closed_loop.csv
                      (+ closed_loop_plant.csv with --plant)
    honu bench     -> one-line latency report on stdout

``identify`` generates its dataset when ``--dataset`` is not given and
``control`` identifies its model when ``--model`` is not given, writing the
intermediate files alongside.

Exit codes: 0 success, 1 configuration error, 2 divergence, 3 budget failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import records
from .config import PRESETS, ExperimentConfig
from .controller import build_xi, controller_output, model_regressor, run_closed_loop, tune_controller
from .core import make_unit, predict
from .errors import ConfigurationError, DivergenceError
from .identification import IdentifiedModel, evaluate, identify
from .plant import generate_dataset
from .series import TimeSeries

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_DIVERGED", "EXIT_BUDGET"]

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_BUDGET = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI experiment configuration")
    common.add_argument("--preset", metavar="NAME", choices=sorted(PRESETS),
                        help="named parameter set: " + ", ".join(sorted(PRESETS)))
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] directory)")
    common.add_argument("--seed", metavar="N", type=int,
                        help="seed for the excitation and the plant noise")
    common.add_argument("--timing", action="store_true",
                        help="write wall-clock per-step cost into the report CSVs")

    p = _Parser(prog="honu", description="HONU identification and control experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate", parents=[common], help="simulate the surrogate plant")
    ident = sub.add_parser("identify", parents=[common], help="train a DLNU/DQNU plant model")
    ident.add_argument("--dataset", metavar="PATH", help="dataset CSV (generated if omitted)")
    ctl = sub.add_parser("control", parents=[common], help="tune a controller against a model")
    ctl.add_argument("--model", metavar="PATH", help="model weight file (identified if omitted)")
    ctl.add_argument("--plant", action="store_true",
                     help="also evaluate the tuned controller against the surrogate plant")
    bench = sub.add_parser("bench", parents=[common], help="time the controller+model step")
    bench.add_argument("--budget-ms", metavar="X", type=float, help="mean step budget in ms")
    return p


def _config(args) -> ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides = {"plant": {"seed": args.seed}, "excitation": {"seed": args.seed}}
    if args.out is not None:
        overrides.setdefault("output", {})["directory"] = args.out
    if args.timing:
        overrides.setdefault("output", {})["timing"] = True
    if getattr(args, "budget_ms", None) is not None:
        overrides["bench"] = {"budget_ms": args.budget_ms}
    return ExperimentConfig.build(args.preset, args.config, overrides)


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _timing(cfg: ExperimentConfig, seconds: float) -> Optional[float]:
    return seconds if cfg["output"]["timing"] else None


def _generate(cfg: ExperimentConfig, out: Path) -> TimeSeries:
    series = generate_dataset(cfg.simulator(), cfg.excitation_spec())
    records.write_timeseries(out / "dataset.csv", series)
    print(f"generate: {len(series)} samples, dt={series.dt:g} s -> {out / 'dataset.csv'}")
    return series


def _identify(cfg: ExperimentConfig, out: Path, series: TimeSeries) -> IdentifiedModel:
    ic = cfg["identify"]
    try:
        model = identify(series, ic["architecture"], cfg.identify_config(), ic["method"],
                         standardize=ic["standardize"])
    except DivergenceError as exc:
        records.write_report(out / "training.csv", exc.history)
        (out / "training.diverged").write_text(f"{exc}\n")
        raise
    rep = model.report
    records.write_model(out / "model.txt", model)
    records.write_report(out / "training.csv", rep.sse_per_epoch, _timing(cfg, rep.per_step_seconds))
    ev = evaluate(model, series, ic["evaluation"])
    records.write_timeseries(out / "evaluation.csv", ev)
    sse = rep.sse_per_epoch
    print(f"identify: {model.architecture.upper()} {rep.method.upper()}, {len(sse)} epochs, "
          f"SSE {sse[0]:.6g} -> {sse[-1]:.6g} (ratio {sse[-1] / sse[0]:.3g}), "
          f"{rep.per_step_seconds * 1e6:.3g} us/step")
    return model


def cmd_generate(cfg: ExperimentConfig) -> int:
    _generate(cfg, _outdir(cfg))
    return EXIT_OK


def cmd_identify(cfg: ExperimentConfig, dataset: Optional[str] = None) -> int:
    out = _outdir(cfg)
    series = records.read_timeseries(dataset) if dataset else _generate(cfg, out)
    _identify(cfg, out, series)
    return EXIT_OK


def cmd_control(cfg: ExperimentConfig, model_path: Optional[str] = None, plant: bool = False) -> int:
    out = _outdir(cfg)
    if model_path:
        model = records.read_model(model_path)
    else:
        model = _identify(cfg, out, _generate(cfg, out))
    cc = cfg["control"]
    n = cfg.excitation_spec().n_samples
    desired = cfg.desired(n, model.dt)
    try:
        state, result, rep = tune_controller(model, desired, cfg.controller_state(),
                                             cfg.control_config(), cc["method"],
                                             disturbance=cc["disturbance"], y_init=cc["y_init"])
    except DivergenceError as exc:
        records.write_report(out / "tuning.csv", exc.history)
        (out / "tuning.diverged").write_text(f"{exc}\n")
        raise
    records.write_controller(out / "controller.txt", state)
    records.write_report(out / "tuning.csv", rep.sse_per_epoch, _timing(cfg, rep.per_step_seconds))
    records.write_closed_loop(out / "closed_loop.csv", result)
    print(f"control: {state.unit.kind.upper()} {rep.method.upper()}, {len(rep.sse_per_epoch)} epochs, "
          f"sum e_reg^2 {rep.sse_per_epoch[0]:.6g} -> {rep.final_sse:.6g}")
    if plant:
        res = run_closed_loop(model, state, desired, plant=cfg.simulator(),
                              disturbance=cc["disturbance"], y_init=cc["y_init"])
        records.write_closed_loop(out / "closed_loop_plant.csv", res)
        print(f"control: surrogate plant in loop, sum e_reg^2 {res.sse:.6g}, "
              f"max|y| {np.max(np.abs(res.y)):.6g}")
    return EXIT_OK


def bench_step_times(cfg: ExperimentConfig) -> np.ndarray:
    """Wall-clock seconds of each combined controller+model step.

    One step builds ``xi``, evaluates the controller, builds the model
    regressor with ``q`` as the newest input and evaluates the model. Weights
    are small seeded random values; the cost does not depend on them.
    """
    ic, cc, bc = cfg["identify"], cfg["control"], cfg["bench"]
    n_y, n_u, n_qy, n_qe = ic["n_y"], ic["n_u"], cc["n_qy"], cc["n_qe"]
    rng = np.random.default_rng(cfg["plant"]["seed"])
    m0 = make_unit(ic["architecture"], 1 + n_y + n_u)
    c0 = cfg.controller_state()
    model = m0.with_weights(1e-3 * rng.standard_normal(m0.weights.size))
    state = c0.with_unit(c0.unit.with_weights(1e-3 * rng.standard_normal(c0.unit.weights.size)))
    total = bc["warmup"] + bc["steps"]
    start = max(n_y, n_u, n_qy, n_qe)
    y = np.zeros(total + start)
    d = np.zeros_like(y)
    m = np.zeros_like(y)
    times = np.empty(total)
    clock = time.perf_counter_ns
    for s in range(total):
        k = start + s
        t0 = clock()
        xi = build_xi(y, d, k, n_qy, n_qe)
        m[k] = controller_output(state, xi)
        y[k] = predict(model, model_regressor(y, m, k, n_y, n_u))
        times[s] = clock() - t0
    return times[bc["warmup"]:] * 1e-9


def cmd_bench(cfg: ExperimentConfig) -> int:
    times = bench_step_times(cfg)
    budget = cfg["bench"]["budget_ms"]
    mean_ms = float(np.mean(times)) * 1e3
    p99_ms = float(np.percentile(times, 99)) * 1e3
    ok = mean_ms <= budget and budget > 0
    ic, cc = cfg["identify"], cfg["control"]
    print(f"bench: model={ic['architecture']}(n_y={ic['n_y']},n_u={ic['n_u']}) "
          f"controller={cc['architecture']}(n_qy={cc['n_qy']},n_qe={cc['n_qe']}) "
          f"steps={times.size} mean_ms={mean_ms:.6f} p99_ms={p99_ms:.6f} budget_ms={budget:g} "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_BUDGET


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "identify":
            return cmd_identify(cfg, args.dataset)
        if args.command == "control":
            return cmd_control(cfg, args.model, args.plant)
        return cmd_bench(cfg)
    except ConfigurationError as exc:
        print(f"honu: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"honu: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"honu: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
