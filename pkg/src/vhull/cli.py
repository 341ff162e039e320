"""Command-line front end: ``vhull run | verify | plotdata``.

A run directory holds ``trace.csv`` (one row per step and agent),
``events.jsonl`` (one update event per line), ``summary.json``,
``slices.json`` and ``manifest.json``.  Monte Carlo runs put one such
directory per trial under ``trial_NNN/`` and an aggregate ``summary.json``
at the top.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, ltv
from .agent import UpdateEvent
from .motion import NoiseConfig
from .sim import ConfigError, SimConfig, Trial, preset, run_monte_carlo, run_trial

TRACE_COLUMNS = ("k", "agent_id", "x_true", "y_true", "x_est", "y_est", "err")
DYNAMICS_TOL = 1e-10
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class InputError(Exception):
    """Unreadable or inconsistent run directory."""


# -- files ----------------------------------------------------------------


def _g(x: float) -> str:
    return format(float(x), ".17g")


def write_trace(path: Path, trial: Trial) -> None:
    tr = trial.trace
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for k in range(len(tr.errors)):
            err = _g(tr.errors[k])
            for i in range(tr.truths.shape[1]):
                t, e = tr.truths[k, i], tr.estimates[k, i]
                fh.write(f"{k},{i},{_g(t[0])},{_g(t[1])},{_g(e[0])},{_g(e[1])},{err}\n")


def read_trace(path: Path):
    """Return ``(truths, estimates, errors)`` with shapes (K+1, N, 2) and (K+1,)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != TRACE_COLUMNS:
                raise InputError(f"{path}: expected header {','.join(TRACE_COLUMNS)}")
            rows = [[float(x) for x in row] for row in reader if row]
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None
    if not rows:
        return np.empty((0, 0, 2)), np.empty((0, 0, 2)), np.empty(0)
    data = np.array(rows)
    ks = data[:, 0].astype(int)
    n = int(data[:, 1].max()) + 1
    steps = int(ks.max()) + 1
    if len(data) != steps * n:
        raise InputError(f"{path}: {len(data)} rows do not form {steps} steps x {n} agents")
    data = data[np.lexsort((data[:, 1], ks))].reshape(steps, n, len(TRACE_COLUMNS))
    return data[:, :, 2:4], data[:, :, 4:6], data[:, 0, 6]


def write_events(path: Path, events) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(asdict(ev)) + "\n")


def read_events(path: Path) -> list[UpdateEvent]:
    out = []
    try:
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                for key in ("nodes", "is_anchor", "contact_k", "weights"):
                    d[key] = tuple(d[key])
                d["estimates"] = tuple(tuple(e) for e in d["estimates"])
                out.append(UpdateEvent(**d))
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return out


def _dump(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(path: Path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def write_run(out: Path, trial: Trial, started: float) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    cfg = trial.config
    write_trace(out / "trace.csv", trial)
    write_events(out / "events.jsonl", trial.trace.events)
    _dump(out / "summary.json", trial.summary.to_dict())
    report = ltv.decompose_slices(ltv.event_stream(trial.trace.events, cfg.n_agents, cfg.n_anchors), cfg.n_agents)
    _dump(out / "slices.json", report.to_dict())
    files = ["trace.csv", "events.jsonl", "summary.json", "slices.json", "manifest.json"]
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "outputs": files,
        "duration_s": time.perf_counter() - started,
    }
    _dump(out / "manifest.json", manifest)
    return files


def load_config(path: str) -> SimConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return SimConfig.from_dict(data)


# -- run ------------------------------------------------------------------


def _config_from_args(args) -> SimConfig:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both")
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset or "fig7_n3")
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    if args.max_steps is not None:
        over["max_steps"] = args.max_steps
    if args.noise_range is not None or args.noise_motion is not None:
        noise = cfg.noise
        try:
            over["noise"] = NoiseConfig(
                args.noise_motion if args.noise_motion is not None else noise.motion_noise_frac,
                args.noise_range if args.noise_range is not None else noise.range_noise_frac,
                noise.distribution,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        cfg = replace(cfg, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.modifications is not None:
        cfg = cfg.with_modifications(args.modifications == "on")
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out)
    started = time.perf_counter()
    if cfg.trials == 1:
        trial = run_trial(cfg)
        write_run(out, trial, started)
        print(f"wrote {out}: {trial.summary.steps} steps, final error {trial.summary.final_error:.6g}")
        dirs = [out]
    else:
        dirs = []

        def save(t, trial):
            d = out / f"trial_{t:03d}"
            write_run(d, trial, time.perf_counter())
            dirs.append(d)

        mc = run_monte_carlo(cfg, on_trial=save)
        agg = dict(mc.aggregate)
        agg.pop("median_curve")
        _dump(out / "summary.json", {"aggregate": agg, "trials": [s.to_dict() for s in mc.summaries]})
        np.savetxt(out / "median_error.csv", np.median(mc.curves, axis=0), fmt="%.17g", header="err", comments="")
        _dump(
            out / "manifest.json",
            {
                "version": __version__,
                "seed": cfg.seed,
                "config": cfg.to_dict(),
                "outputs": ["summary.json", "median_error.csv", "manifest.json"] + [d.name for d in dirs],
                "duration_s": time.perf_counter() - started,
            },
        )
        print(
            f"wrote {out}: {cfg.trials} trials, median final error {agg['final_error_median']:.6g}, "
            f"{agg['converged']} reached tolerance"
        )
    if args.verify:
        status = EXIT_OK
        for d in dirs:
            status = max(status, verify_dir(d, args.gamma1, args.gamma2))
        return status
    return EXIT_OK


# -- verify ---------------------------------------------------------------


def verify_dir(run_dir: Path, gamma1: float = 0.0, gamma2: float | None = None, stream=None) -> int:
    """Check one run directory; prints a report and returns an exit code."""
    stream = stream or sys.stdout
    manifest = _load(run_dir / "manifest.json")
    try:
        cfg = SimConfig.from_dict(manifest["config"])
    except KeyError:
        raise InputError(f"{run_dir}: manifest has no config") from None
    truths, ests, _ = read_trace(run_dir / "trace.csv")
    events = read_events(run_dir / "events.jsonl")
    n, m = cfg.n_agents, cfg.n_anchors
    w = cfg.weights()
    checks: list[tuple[str, bool, str]] = []

    def emit(name, ok, detail):
        checks.append((name, ok, detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", file=stream)

    if truths.shape[1:2] not in ((n,), (0,)):
        raise InputError(f"{run_dir}: trace has {truths.shape[1]} agents, config says {n}")
    try:
        steps = list(
            ltv.event_stream(
                events, n, m, anchor_min=w.anchor_min, agent_min=w.agent_min or None, self_floor=w.self_floor
            )
        )
        emit("events", True, f"{len(steps)} updates within the weight floors")
    except ltv.MalformedEvent as exc:
        emit("events", False, str(exc))
        return EXIT_FAIL

    if cfg.noise.noiseless:
        dev = ltv.verify_error_dynamics(steps, ests, truths)
        emit("error dynamics", dev <= DYNAMICS_TOL, f"max deviation {dev:.3g} (limit {DYNAMICS_TOL:g})")
    else:
        print("[SKIP] error dynamics: noisy run, the recursion holds only without noise", file=stream)

    report = ltv.decompose_slices(steps, n)
    norms = [s.norm for s in report.slices]
    emit(
        "slice norms",
        all(x < 1.0 for x in norms),
        f"{len(norms)} completed slices, max norm {max(norms):.6g}" if norms else "no completed slices",
    )
    product = report.full_product()
    pnorm = float(np.abs(product).sum(axis=1).max()) if product.size else 1.0
    warn = False
    if m == 0:
        emit("product norm", abs(pnorm - 1.0) <= ltv.ROW_SUM_TOL, f"{pnorm:.17g}")
        print("[WARN] product norm = 1, no convergence certificate (no anchors)", file=stream)
        warn = True
    else:
        print(f"[INFO] product norm {pnorm:.6g} after {len(steps)} updates", file=stream)

    if report.slices:
        g2 = gamma2 if gamma2 is not None else _default_gamma2(w)
        try:
            params = ltv.GrowthBoundParams.from_weights(w.self_floor, w.anchor_min, gamma1, g2)
            gc = ltv.check_growth_bound(report, params)
            print(
                f"[INFO] growth bound (gamma1={gamma1:g}, gamma2={g2:.6g}): "
                f"{sum(gc.ok)}/{len(gc.ok)} slices within bound",
                file=stream,
            )
        except ltv.InvalidParams as exc:
            emit("growth bound", False, str(exc))
    ok = all(c[1] for c in checks)
    print(f"{'PASS' if ok else 'FAIL'}{' (with warnings)' if warn and ok else ''}: {run_dir}", file=stream)
    return EXIT_OK if ok else EXIT_FAIL


def _default_gamma2(w) -> float:
    # the bound is defined for all i iff it is at i = 1; stay just inside
    return 0.99 * -math.log(1.0 - w.anchor_min)


def _run_dirs(paths) -> list[Path]:
    dirs = []
    for p in map(Path, paths):
        if (p / "trace.csv").exists():
            dirs.append(p)
        else:
            found = sorted(q.parent for q in p.glob("trial_*/trace.csv"))
            if not found:
                raise InputError(f"{p}: no trace.csv found")
            dirs.extend(found)
    return dirs


def cmd_verify(args) -> int:
    status = EXIT_OK
    for d in _run_dirs(args.paths):
        status = max(status, verify_dir(d, args.gamma1, args.gamma2))
    return status


# -- plotdata -------------------------------------------------------------


def plot_rows(run_dir: Path, prefix: str = ""):
    """Tidy rows (k, series, value) for one run directory."""
    truths, ests, errors = read_trace(run_dir / "trace.csv")
    rows = [(k, prefix + "error", e) for k, e in enumerate(errors)]
    for i in range(truths.shape[1]):
        for name, arr, c in (("x_true", truths, 0), ("y_true", truths, 1), ("x_est", ests, 0), ("y_est", ests, 1)):
            rows.extend((k, f"{prefix}agent{i}.{name}", v) for k, v in enumerate(arr[:, i, c]))
    slices_path = run_dir / "slices.json"
    if slices_path.exists():
        for s in _load(slices_path).get("slices", []):
            rows.append((s["start"], prefix + "slice_length", s["length"]))
    return rows


def cmd_plotdata(args) -> int:
    dirs = _run_dirs(args.paths)
    rows = []
    if len(dirs) == 1:
        rows = plot_rows(dirs[0])
    else:
        curves = []
        for t, d in enumerate(dirs):
            rows.extend(plot_rows(d, f"trial{t}."))
            curves.append(read_trace(d / "trace.csv")[2])
        curves = [c for c in curves if len(c)]
        if curves:
            length = max(len(c) for c in curves)
            padded = np.array([np.concatenate([c, np.full(length - len(c), c[-1])]) for c in curves])
            rows.extend((k, "median.error", v) for k, v in enumerate(np.median(padded, axis=0)))
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        fh.write("k,series,value\n")
        for k, series, value in rows:
            fh.write(f"{int(k)},{series},{_g(value)}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


# -- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vhull", description="Localization of mobile agents via virtual convex hulls.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a preset or config file")
    run.add_argument("--preset", help="named configuration (default fig7_n3)")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--max-steps", type=int)
    run.add_argument("--noise-range", type=float, help="range noise as a fraction of the true distance")
    run.add_argument("--noise-motion", type=float, help="motion noise as a fraction of the step length")
    run.add_argument("--modifications", choices=("on", "off"), help="switch the three noise modifications together")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--verify", action="store_true", help="verify the written run")
    run.add_argument("--gamma1", type=float, default=0.0, help="growth-bound exponent for --verify")
    run.add_argument("--gamma2", type=float, default=None, help="growth-bound scale for --verify")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="check error dynamics and slices of written runs")
    ver.add_argument("paths", nargs="+", help="run directories (or Monte Carlo parents)")
    ver.add_argument("--gamma1", type=float, default=0.0, help="growth-bound exponent in [0, 1]")
    ver.add_argument("--gamma2", type=float, default=None, help="growth-bound scale (default: largest valid)")
    ver.set_defaults(func=cmd_verify)

    pd = sub.add_parser("plotdata", help="emit tidy CSV (k, series, value)")
    pd.add_argument("paths", nargs="+")
    pd.add_argument("--out", default="-", help="output file, '-' for stdout")
    pd.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
