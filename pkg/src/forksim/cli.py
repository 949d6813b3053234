"""Command-line front end.

Verbs::

    forksim run      --scenario S.ini --out DIR [--seed N] [--reps N] [--mult X]
    forksim compare  --scenario A.ini --scenario B.ini [...] --out DIR
    forksim sweep    --scenario S.ini --mult 1.0,1.1,1.5,2.0 --out DIR
    forksim validate --scenario S.ini --observed tau.csv --out DIR
    forksim report   --out DIR

Exit codes: 0 success, 2 input error, 3 runtime or numeric fault.
All CSV output is UTF-8 with LF line endings and a header row.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import OverlapFault
from .engine import SimulationFault, records_csv, run_experiment
from .metrics import to_kmh
from .scenario import ScenarioError, load_scenario, serialize_scenario, with_overrides
from .stats import DegenerateFit, anova_rcbd, dmrt, format_p, linear_regression

log = logging.getLogger("forksim")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
ALPHA = 0.05

SUMMARY_COLUMNS = ("rep", "seed", "completed", "censored", "warmup_discarded",
                   "tau_s", "delta_s", "sigma_m_s", "sigma_km_h")


class InputError(Exception):
    """Bad command-line input; maps to exit code 2."""


class RuntimeFault(Exception):
    """Simulation or numeric failure; maps to exit code 3."""


# -- small IO helpers ---------------------------------------------------------

def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x, digits=4):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.{digits}f}"


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".forksim-write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise InputError(f"output directory {out} is not writable: {exc}") from None
    return out


def _load(path, args=None, mult=None):
    try:
        scenario, _ = load_scenario(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such scenario file") from None
    except IsADirectoryError:
        raise InputError(f"{path}: is a directory") from None
    except ScenarioError as exc:
        raise InputError(f"{path}: {exc}") from None
    if args is not None:
        try:
            scenario = with_overrides(scenario, seed=args.seed, replications=args.reps,
                                      volume_multiplier=mult)
        except ScenarioError as exc:
            raise InputError(f"{path}: {exc}") from None
    return scenario


def _manifest(out, command, scenarios, extra=None):
    data = {
        "command": command,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "scenarios": [
            {"label": label, "sha256": s.digest(), "seed": s.seed, "replications": s.replications,
             "variant": s.variant.value, "volume_multiplier": s.volume_multiplier}
            for label, s in scenarios
        ],
    }
    if extra:
        data.update(extra)
    _write(out / "manifest.json", json.dumps(data, indent=2, sort_keys=True) + "\n")


def _experiment(scenario, workers):
    try:
        return run_experiment(scenario, workers=workers)
    except (SimulationFault, OverlapFault) as exc:
        raise RuntimeFault(str(exc)) from None


def _summary_rows(results):
    rows = []
    for r in results:
        s = r.summary
        rows.append((r.rep_index, r.seed, s.n, r.censored, r.discarded_warmup,
                     _fmt(s.mean_tau), _fmt(s.mean_delta), _fmt(s.mean_sigma), _fmt(s.mean_sigma_kmh)))
    return rows


def _write_run(out, scenario, results):
    """Per-replication trajectories, a summary CSV and a text summary."""
    for r in results:
        _write(out / f"rep_{r.rep_index:02d}.csv", records_csv(r.records))
    _write(out / "summary.csv", _csv_text(SUMMARY_COLUMNS, _summary_rows(results)))
    _write(out / "scenario.ini", serialize_scenario(scenario))
    tau = _nanmean([r.summary.mean_tau for r in results])
    delta = _nanmean([r.summary.mean_delta for r in results])
    sigma = _nanmean([r.summary.mean_sigma for r in results])
    lines = [
        f"scenario {scenario.variant.value}  multiplier {scenario.volume_multiplier:g}  "
        f"replications {len(results)}  seed {scenario.seed}",
        f"{'rep':>3}  {'completed':>9}  {'censored':>8}  {'tau (s)':>9}  {'delta (s)':>9}  {'sigma (km/h)':>12}",
    ]
    for r in results:
        s = r.summary
        flag = "  (no completed vehicles)" if s.empty else ""
        lines.append(f"{r.rep_index:>3}  {s.n:>9}  {r.censored:>8}  {_fmt(s.mean_tau, 2):>9}  "
                     f"{_fmt(s.mean_delta, 2):>9}  {_fmt(to_kmh(s.mean_sigma), 2):>12}{flag}")
    lines.append(f"mean {'':>23}  {_fmt(tau, 2):>9}  {_fmt(delta, 2):>9}  {_fmt(to_kmh(sigma), 2):>12}")
    _write(out / "summary.txt", "\n".join(lines) + "\n")
    return tau, delta, sigma


def _nanmean(values):
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.mean()) if arr.size else math.nan


# -- verbs --------------------------------------------------------------------

def cmd_run(args):
    if len(args.scenario) != 1:
        raise InputError("run takes exactly one --scenario")
    mult = _single_mult(args.mult)
    scenario = _load(args.scenario[0], args, mult)
    out = _out_dir(args.out)
    results = _experiment(scenario, args.workers)
    tau, delta, sigma = _write_run(out, scenario, results)
    _manifest(out, "run", [(Path(args.scenario[0]).stem, scenario)])
    print(f"tau = {tau:.2f} s  delta = {delta:.2f} s  sigma = {to_kmh(sigma):.2f} km/h "
          f"over {len(results)} replications -> {out}")
    return EXIT_OK


def _labels(paths, scenarios):
    labels = [s.variant.value for s in scenarios]
    if len(set(labels)) != len(labels):
        labels = [Path(p).stem for p in paths]
    if len(set(labels)) != len(labels):
        labels = [f"{lab}_{k}" for k, lab in enumerate(labels)]
    return labels


def _matrix(per_treatment, metric):
    cols = []
    for results in per_treatment:
        cols.append([getattr(r.summary, metric) for r in results])
    m = np.array(cols, dtype=float).T
    if not np.all(np.isfinite(m)):
        raise RuntimeFault(f"some replications completed no vehicles; cannot analyse {metric}")
    return m


def cmd_compare(args):
    if len(args.scenario) < 2:
        raise InputError("compare needs at least two --scenario files")
    mult = _single_mult(args.mult)
    scenarios = [_load(p, args, mult) for p in args.scenario]
    reps = {s.replications for s in scenarios}
    if len(reps) != 1:
        raise InputError(f"scenarios disagree on the replication count: {sorted(reps)}")
    if scenarios[0].replications < 2:
        raise InputError("compare needs at least 2 replications per scenario")
    out = _out_dir(args.out)
    labels = _labels(args.scenario, scenarios)
    per = []
    for label, s in zip(labels, scenarios):
        log.info("running %s", label)
        results = _experiment(s, args.workers)
        _write_run(out / label, s, results)
        per.append(results)
    delta = _matrix(per, "mean_delta")
    sigma = to_kmh(_matrix(per, "mean_sigma"))
    text = []
    for key, name, unit, mat in (("delta", "mean delay Δ", "s", delta), ("sigma", "mean speed Σ", "km/h", sigma)):
        table = anova_rcbd(mat)
        tlabels = {"Treatment": "ID"}
        _write(out / f"anova_{key}.csv", table.to_csv(tlabels))
        ms_err = table.error.ms
        groups = dmrt(dict(zip(labels, mat.mean(axis=0))), ms_err, table.error.df, mat.shape[0], ALPHA,
                      anova_p=table.treatment.p)
        _write(out / f"dmrt_{key}.csv", groups.to_csv(unit))
        text += [f"ANOVA of {name} ({unit})", table.to_text(tlabels),
                 f"DMRT groups at alpha = {ALPHA}, run when the ANOVA rejects equal means "
                 "(same letter: not significantly different)",
                 groups.to_text(unit)]
    _write(out / "compare.txt", "\n".join(text))
    _manifest(out, "compare", list(zip(labels, scenarios)))
    sys.stdout.write("\n".join(text))
    return EXIT_OK


def _parse_mults(values):
    mults = []
    for v in values or []:
        for part in str(v).split(","):
            part = part.strip()
            if not part:
                continue
            try:
                m = float(part)
            except ValueError:
                raise InputError(f"--mult: {part!r} is not a number") from None
            if not math.isfinite(m) or m < 0:
                raise InputError("volume multiplier must be ≥ 0")
            mults.append(m)
    return mults


def _single_mult(values):
    mults = _parse_mults(values)
    if len(mults) > 1:
        raise InputError("this verb takes a single --mult value")
    return mults[0] if mults else None


def cmd_sweep(args):
    if len(args.scenario) != 1:
        raise InputError("sweep takes exactly one --scenario")
    mults = _parse_mults(args.mult)
    if len(mults) < 2:
        raise InputError("sweep needs at least two --mult values")
    base = _load(args.scenario[0], args)
    out = _out_dir(args.out)
    rows, xs, d_means, s_means = [], [], [], []
    for m in mults:
        try:
            s = with_overrides(base, volume_multiplier=m)
        except ScenarioError as exc:
            raise InputError(str(exc)) from None
        log.info("running multiplier %g", m)
        results = _experiment(s, args.workers)
        _write_run(out / f"mult_{m:g}", s, results)
        d = _nanmean([r.summary.mean_delta for r in results])
        sg = to_kmh(_nanmean([r.summary.mean_sigma for r in results]))
        t = _nanmean([r.summary.mean_tau for r in results])
        x = 100.0 * (m - 1.0)
        xs.append(x), d_means.append(d), s_means.append(sg)
        rows.append((f"{m:g}", _fmt(x, 2), _fmt(t), _fmt(d), _fmt(sg), sum(r.summary.n for r in results)))
    _write(out / "sweep.csv", _csv_text(
        ("multiplier", "volume_increase_pct", "tau_s", "delta_s", "sigma_km_h", "completed"), rows))
    _write(out / "sweep_delta.csv", _csv_text(("volume_increase_pct", "delta_s"),
                                              [(_fmt(x, 2), _fmt(y)) for x, y in zip(xs, d_means)]))
    _write(out / "sweep_sigma.csv", _csv_text(("volume_increase_pct", "sigma_km_h"),
                                              [(_fmt(x, 2), _fmt(y)) for x, y in zip(xs, s_means)]))
    try:
        fd = linear_regression(xs, d_means)
        fs = linear_regression(xs, s_means)
    except DegenerateFit as exc:
        raise RuntimeFault(f"degenerate regression: {exc}") from None
    _write(out / "fits.csv", _csv_text(
        ("metric", "unit", "slope", "intercept", "r_squared"),
        [("delta", "s", _fmt(fd.slope, 6), _fmt(fd.intercept, 6), _fmt(fd.r_squared, 6)),
         ("sigma", "km/h", _fmt(fs.slope, 6), _fmt(fs.intercept, 6), _fmt(fs.r_squared, 6))]))
    text = (f"{fd.equation('Δ', '𝒱')}\n{fs.equation('Σ', '𝒱')}\n"
            f"(𝒱 = volume increase in percent; Δ in s, Σ in km/h)\n")
    _write(out / "sweep.txt", text)
    _manifest(out, "sweep", [(Path(args.scenario[0]).stem, base)], {"multipliers": mults})
    sys.stdout.write(text)
    return EXIT_OK


def read_observed(path):
    """Observed per-vehicle travel times from a CSV with a ``tau_s`` (or ``zone_s``) column."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            col = "tau_s" if "tau_s" in fields else ("zone_s" if "zone_s" in fields else None)
            if col is None:
                raise InputError(f"{path}: needs a 'tau_s' or 'zone_s' column")
            values = []
            for n, row in enumerate(reader, start=2):
                try:
                    v = float(row[col])
                except (TypeError, ValueError):
                    raise InputError(f"{path}: line {n}: {row[col]!r} is not a number") from None
                if not math.isfinite(v) or v <= 0:
                    raise InputError(f"{path}: line {n}: travel time must be a positive number")
                values.append(v)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except UnicodeDecodeError:
        raise InputError(f"{path}: not UTF-8 text") from None
    except csv.Error as exc:
        raise InputError(f"{path}: {exc}") from None
    return np.array(values)


def cmd_validate(args):
    if len(args.scenario) != 1:
        raise InputError("validate takes exactly one --scenario")
    if not args.observed:
        raise InputError("validate needs --observed")
    scenario = _load(args.scenario[0], args, _single_mult(args.mult))
    observed = read_observed(args.observed)
    reps = scenario.replications
    if reps < 2:
        raise InputError("validate needs at least 2 replications")
    if observed.size < reps:
        raise InputError(f"need at least {reps} observed travel times, got {observed.size}")
    out = _out_dir(args.out)
    results = _experiment(scenario, args.workers)
    _write_run(out / "simulated", scenario, results)
    # contiguous blocks of the observed sample pair with the replications
    obs_means = np.array([b.mean() for b in np.array_split(observed, reps)])
    sim_means = np.array([r.summary.mean_tau for r in results], dtype=float)
    if not np.all(np.isfinite(sim_means)):
        raise RuntimeFault("some replications completed no vehicles")
    table = anova_rcbd(np.column_stack([obs_means, sim_means]))
    labels = {"Treatment": "tau_o vs tau_s"}
    p = table.treatment.p
    accept = p is not None and p >= ALPHA
    verdict = (f"H0 {'accepted' if accept else 'rejected'}: alpha_F = {format_p(p)} "
               f"{'>=' if accept else '<'} alpha = {ALPHA}\n")
    _write(out / "validate.csv", table.to_csv(labels))
    blocks = [(k, _fmt(o), _fmt(s)) for k, (o, s) in enumerate(zip(obs_means, sim_means))]
    _write(out / "validate_blocks.csv", _csv_text(("block", "tau_o_s", "tau_s_s"), blocks))
    text = table.to_text(labels) + verdict
    _write(out / "validate.txt", text)
    _manifest(out, "validate", [(Path(args.scenario[0]).stem, scenario)],
              {"observed": str(args.observed), "observed_n": int(observed.size), "h0_accepted": accept})
    sys.stdout.write(text)
    return EXIT_OK


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args):
    """Render PNG figures next to the CSVs of a compare or sweep output directory."""
    from . import report
    from .stats.dmrt import DmrtGrouping
    from .stats.regression import RegressionFit

    out = Path(args.out)
    if not out.is_dir():
        raise InputError(f"{out}: no such output directory")
    made = []
    units = {"delta": ("mean delay Δ (s)", "s"), "sigma": ("mean speed Σ (km/h)", "km/h")}
    for key, (ylabel, unit) in units.items():
        path = out / f"dmrt_{key}.csv"
        if path.exists():
            rows = _read_csv(path)
            mean_col = [c for c in rows[0] if c.startswith("mean")][0]
            grouping = DmrtGrouping({r["treatment"]: r["group"] for r in rows},
                                    tuple((r["treatment"], float(r[mean_col])) for r in rows), {})
            order = sorted(grouping.letters)
            made.append(report.dmrt_bar_chart(grouping, out / f"dmrt_{key}.png", ylabel, order=order))
    if (out / "fits.csv").exists():
        fits = {r["metric"]: r for r in _read_csv(out / "fits.csv")}
        sym = {"delta": "Δ", "sigma": "Σ"}
        for key, (ylabel, _) in units.items():
            path = out / f"sweep_{key}.csv"
            if key in fits and path.exists():
                rows = _read_csv(path)
                ycol = [c for c in rows[0] if c != "volume_increase_pct"][0]
                xs = [float(r["volume_increase_pct"]) for r in rows]
                ys = [float(r[ycol]) for r in rows]
                f = fits[key]
                fit = RegressionFit(float(f["slope"]), float(f["intercept"]), float(f["r_squared"]), len(xs))
                made.append(report.regression_plot(xs, ys, fit, out / f"sweep_{key}.png",
                                                   r"volume increase $\mathcal{V}$ (%)", ylabel, sym[key],
                                                   r"$\mathcal{V}$"))
    if not made:
        raise InputError(f"{out}: no dmrt_*.csv or sweep fits to report on")
    for p in made:
        print(p)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep,
            "validate": cmd_validate, "report": cmd_report}


def build_parser():
    ap = argparse.ArgumentParser(prog="forksim", description="Roundabout fork microsimulation experiments.")
    ap.add_argument("--version", action="version", version=f"forksim {__version__}")
    ap.add_argument("verb", choices=sorted(COMMANDS))
    ap.add_argument("--scenario", action="append", default=[], metavar="PATH",
                    help="scenario file (repeat for compare)")
    ap.add_argument("--out", required=True, metavar="DIR", help="output directory")
    ap.add_argument("--seed", type=int, help="override the scenario seed (u64)")
    ap.add_argument("--reps", type=int, help="override the replication count")
    ap.add_argument("--mult", action="append", metavar="LIST",
                    help="volume multiplier(s), comma separated or repeated")
    ap.add_argument("--observed", metavar="CSV", help="observed per-vehicle travel times (validate)")
    ap.add_argument("--workers", type=int, default=1, help="replications run in parallel processes")
    ap.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.verb != "report" and not args.scenario:
        ap.error(f"{args.verb} needs --scenario")
    if args.workers < 1:
        ap.error("--workers must be >= 1")
    try:
        return COMMANDS[args.verb](args)
    except InputError as exc:
        print(f"forksim: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeFault, FloatingPointError, OverlapFault) as exc:
        print(f"forksim: fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
