"""``mixemu`` command line: simulate, campaign, train, evaluate, gridsearch, benchmark.

Exit codes: 0 success, 1 usage or input error, 2 solver divergence (partial
output is kept).  ``MIXEMU_LOG`` sets the log level (error, warn, info, debug).
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .campaign import (CAMPAIGN_CSV, CLASS_TARGET, TARGETS, assemble,
                       enumerate_grid, expand_grid, fmt, grid_search, partition_sims, qoi_rows,
                       read_campaign_csv, rows_to_csv, run_campaign)
from .config import (emulator_params, grid_from_config, load_config, partition_from_config,
                     save_every_from_config, search_grid, simulation_from_config)
from .emulators import CLASSIFICATION, NAMES, REGRESSION, fit_emulator, get_family
from .errors import MixemuError
from .metrics import (EvalEntry, EvalReport, accuracy, benchmark, confusion_matrix, median_time,
                      r2_score)
from .pde import solve, write_trajectory
from .qoi import normalized_qois
from .serialize import load_model, save_model

log = logging.getLogger("mixemu")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2
DEFAULT_SEED = 0
DEFAULT_EVAL_SIMS = 6
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; 2 is reserved for divergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging():
    level = os.environ.get("MIXEMU_LOG", "warn").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"MIXEMU_LOG={level!r}; use one of error, warn, info, debug")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s",
                        force=True)


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _seed(args, cfg):
    if args.seed is not None:
        return int(args.seed)
    return int(cfg.get("run", {}).get("seed", DEFAULT_SEED))


def _list(v):
    if v is None:
        return []
    return [str(x) for x in (v if isinstance(v, (list, tuple)) else [v])]


def _emulators(args, cfg):
    if args.emulator:
        names = [n.strip() for n in args.emulator.split(",") if n.strip()]
    else:
        names = _list(cfg.get("train", {}).get("emulators"))
    if not names:
        raise UsageError("no emulator given; use --emulator NAME or [train] emulators")
    for n in names:
        get_family(n)
    return names


def _targets(args, cfg, name):
    fam = get_family(name)
    if args.target:
        raw = args.target.split(",")
    else:
        raw = _list(cfg.get("train", {}).get("targets")) or ["all"]
    out = []
    for t in raw:
        t = t.strip()
        if t == "all":
            out += list(TARGETS)
        elif t not in TARGETS:
            raise UsageError(f"unknown target {t!r}; valid targets: {', '.join(TARGETS)}, all")
        else:
            out.append(t)
    return [t for t in dict.fromkeys(out)
            if (CLASSIFICATION if t == CLASS_TARGET else REGRESSION) in fam.tasks]


def _plan(args, cfg):
    """(emulator, targets) pairs, validated before any data is read."""
    return [(name, _targets(args, cfg, name)) for name in _emulators(args, cfg)]


def _data_path(args, cfg):
    if args.data:
        path = Path(args.data)
    elif "data" in cfg.get("train", {}):
        path = Path(str(cfg["train"]["data"]))
    else:
        path = Path(args.out) / CAMPAIGN_CSV
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path} "
                                "(run `mixemu campaign` first or pass --data)")
    return path


def _model_path(out, name, target):
    return Path(out) / "models" / f"{name}_{target}.mxm"


def _splits(table, cfg, seed):
    spec = partition_from_config(cfg, seed)
    parts = partition_sims(table["sim_id"], spec)
    # the validation share is reserved for grid search; final fits use train + validation
    fit_sims = np.sort(np.concatenate([parts["train"], parts["validation"]]))
    return parts, fit_sims


def _score(task, y, yhat):
    return accuracy(y, yhat) if task == CLASSIFICATION else r2_score(y, yhat)


def _partition_summary(table, parts):
    sid = table["sim_id"]
    return {k: {"sims": int(v.size), "rows": int(np.isin(sid, v).sum())} for k, v in parts.items()}


def _report_paths(out, stem):
    return Path(out) / "reports" / f"{stem}.json", Path(out) / "reports" / f"{stem}.txt"


def _write_report(out, stem, report):
    js, txt = _report_paths(out, stem)
    _write(js, report.to_json() + "\n")
    _write(txt, report.to_table())
    sys.stdout.write(report.to_table())


def _stem(command, args, cfg):
    return f"{command}_{'-'.join(_emulators(args, cfg))}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, cfg):
    sim = simulation_from_config(cfg)
    save_every = save_every_from_config(cfg, "simulation")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    traj = solve(sim, save_every)
    log.info("solve took %.3f s", time.perf_counter() - t0)
    write_trajectory(out / "trajectory.bin", traj)
    if not traj.complete:
        log.error("solver diverged after %d of %d steps; partial trajectory kept in %s",
                  int(round(traj.times[-1] / sim.dt)), sim.n_steps, out)
        return EXIT_DIVERGED
    q = normalized_qois(traj)
    _write(out / "qoi.csv", rows_to_csv(qoi_rows(0, sim, q)))
    print(f"simulation complete: {traj.n_frames} frames, config {sim.config_hash()}")
    return EXIT_OK


def cmd_campaign(args, cfg):
    grid = grid_from_config(cfg)
    configs = enumerate_grid(grid)
    res = run_campaign(configs, parallelism=args.jobs, output_dir=args.out,
                       save_every=save_every_from_config(cfg, "grid"))
    print(f"campaign: {len(res.completed)} complete, {len(res.incomplete)} incomplete, "
          f"{res.new_solves} solved this run; table at {Path(args.out) / CAMPAIGN_CSV}")
    if res.incomplete:
        log.error("simulations did not complete: %s", ", ".join(map(str, res.incomplete)))
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_train(args, cfg):
    seed = _seed(args, cfg)
    plan = _plan(args, cfg)
    table = read_campaign_csv(_data_path(args, cfg))
    parts, fit_sims = _splits(table, cfg, seed)
    report = EvalReport(seed, _partition_summary(table, {"train": fit_sims, "test": parts["test"]}))
    for name, targets in plan:
        params = emulator_params(cfg, name)
        for target in targets:
            ds = assemble(table, target)
            tr, te = ds.subset(fit_sims), ds.subset(parts["test"])
            t0 = time.perf_counter()
            model = fit_emulator(name, tr, params=params, seed=seed, n_jobs=args.jobs)
            fit_s = time.perf_counter() - t0
            t_pred, yhat = median_time(lambda: model.predict(te.X), 1)
            entry = EvalEntry(name, target, _score(ds.task, tr.y, model.predict(tr.X)),
                              _score(ds.task, te.y, yhat), fit_s, t_pred, tr.n_rows, te.n_rows)
            if ds.task == CLASSIFICATION:
                entry.confusion = confusion_matrix(te.y, yhat).tolist()
            report.add(entry)
            save_model(_model_path(args.out, name, target), model)
    _write_report(args.out, _stem("train", args, cfg), report)
    return EXIT_OK


def _load(out, name, target):
    path = _model_path(out, name, target)
    if not path.is_file():
        raise FileNotFoundError(f"model not found: {path} (run `mixemu train` first)")
    return load_model(path)


def _series_csv(table, ds, model, sims):
    lines = ["sim_id,time,true,predicted"]
    for s in sims:
        sub = ds.subset([s])
        yhat = model.predict(sub.X)
        for t, y, p in zip(sub.X[:, -1], sub.y, yhat):
            lines.append(f"{int(s)},{fmt(float(t))},{fmt(y.item())},{fmt(p.item())}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args, cfg):
    seed = _seed(args, cfg)
    plan = _plan(args, cfg)
    table = read_campaign_csv(_data_path(args, cfg))
    parts, fit_sims = _splits(table, cfg, seed)
    n_eval = int(cfg.get("train", {}).get("eval_sims", DEFAULT_EVAL_SIMS))
    rng = np.random.default_rng(seed)
    shown = np.sort(rng.choice(parts["test"], min(n_eval, parts["test"].size), replace=False))
    report = EvalReport(seed, _partition_summary(table, {"train": fit_sims, "test": parts["test"]}))
    for name, targets in plan:
        for target in targets:
            model = _load(args.out, name, target)
            ds = assemble(table, target)
            tr, te = ds.subset(fit_sims), ds.subset(parts["test"])
            t_pred, yhat = median_time(lambda: model.predict(te.X), 1)
            entry = EvalEntry(name, target, _score(ds.task, tr.y, model.predict(tr.X)),
                              _score(ds.task, te.y, yhat), 0.0, t_pred, tr.n_rows, te.n_rows)
            if ds.task == CLASSIFICATION:
                entry.confusion = confusion_matrix(te.y, yhat).tolist()
            report.add(entry)
            _write(Path(args.out) / "eval" / f"{name}_{target}_series.csv",
                   _series_csv(table, ds, model, shown))
    _write_report(args.out, _stem("evaluate", args, cfg), report)
    return EXIT_OK


def cmd_gridsearch(args, cfg):
    seed = _seed(args, cfg)
    plan = _plan(args, cfg)
    table = read_campaign_csv(_data_path(args, cfg))
    _, fit_sims = _splits(table, cfg, seed)
    k = int(cfg.get("gridsearch", {}).get("k", 10))
    for name, targets in plan:
        grid = search_grid(cfg, name) or get_family(name).search_grid
        base = emulator_params(cfg, name)
        for target in targets:
            ds = assemble(table, target).subset(fit_sims)
            settings = [dict(base, **s) for s in expand_grid(grid)]
            res = grid_search(name, settings, ds, k=min(k, ds.sims.size), seed=seed,
                              n_jobs=args.jobs)
            _write(Path(args.out) / "gridsearch" / f"{name}_{target}.csv", res.to_csv())
            print(f"{name} {target}: best {json.dumps(res.best_params, sort_keys=True)} "
                  f"(mean score {res.table[res.best_index]['mean']:.4f})")
    return EXIT_OK


def cmd_benchmark(args, cfg):
    seed = _seed(args, cfg)
    sim = simulation_from_config(cfg)
    n_rep = int(cfg.get("benchmark", {}).get("n_repeats", 3))
    report = EvalReport(seed)
    for name, targets in _plan(args, cfg):
        for target in targets:
            report.benchmarks.append(benchmark(sim, _load(args.out, name, target), n_rep))
    _write_report(args.out, _stem("benchmark", args, cfg), report)
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "run one simulation from [simulation]; writes trajectory and QoIs"),
    "campaign": (cmd_campaign, "solve every point of [grid]; resumable"),
    "train": (cmd_train, "fit emulators on the campaign table; writes models and a report"),
    "evaluate": (cmd_evaluate, "score saved models on held-out sims; writes true-vs-predicted CSVs"),
    "gridsearch": (cmd_gridsearch, "k-fold search over hyperparameter grids"),
    "benchmark": (cmd_benchmark, "time one solve against emulator prediction of the full series"),
}


def build_parser():
    parser = _Parser(prog="mixemu", description="Reactive-mixing simulations and their emulators.",
                     epilog="Exit codes: 0 ok, 1 usage/input error, 2 solver divergence. "
                            "Log level from MIXEMU_LOG (error, warn, info, debug).")
    parser.add_argument("--version", action="version", version=f"mixemu {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH", help="INI or JSON run configuration")
        p.add_argument("--out", metavar="DIR", default="mixemu-out",
                       help="output directory (default: %(default)s)")
        p.add_argument("--seed", type=int, help=f"master seed (default: [run] seed or {DEFAULT_SEED})")
        p.add_argument("--jobs", type=int, default=1, metavar="N",
                       help="worker count for the campaign and averaging ensembles (default: 1)")
        p.add_argument("--emulator", metavar="NAME",
                       help="emulator family, comma-separated for several: " + ", ".join(NAMES))
        p.add_argument("--target", metavar="NAME",
                       help="QoI target(s): " + ", ".join(TARGETS) + ", or all")
        p.add_argument("--data", metavar="PATH", help="campaign CSV (default: OUT/campaign.csv)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. grid.v0=0.1,1 (repeatable)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging()
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command][0](args, cfg)
    except (UsageError, MixemuError, FileNotFoundError, OSError) as exc:
        print(f"mixemu {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
