"""Command-line entry point: ``gstab <command> --config FILE``.

Exit codes: 0 success or Certified, 1 configuration/validation error,
2 ViolatedBeyondTolerance, 3 Inconclusive.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .ambiguity import sample_paths
from .bihari import printed_loglipschitz_psi, psi
from .config import ConfigError, ExperimentConfig, floats_from, load_config, u_grid_from
from .kernel import DomainError, LogLipschitz
from .msde import (CoefficientValidationError, SimulationBlowUp, initial_gap, simulate_pair,
                   validate_coefficients)
from .stability import (SaturatingFamily, Verdict, amplification, asymptotics_probe, certify,
                        propagate_partition, saturating_drift, saturation_endpoint)

SCHEMA_VERSION = 1
LOG_ENV = "GSTAB_LOG_LEVEL"
EXIT_OK, EXIT_CONFIG, EXIT_VIOLATED, EXIT_INCONCLUSIVE = 0, 1, 2, 3
VERDICT_EXIT = {Verdict.CERTIFIED: EXIT_OK, Verdict.VIOLATED: EXIT_VIOLATED,
                Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE}

log = logging.getLogger("gstab")


# -- serialisation ------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps_json(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def dumps_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


class Bundle:
    """A JSON report plus named CSV tables, written in one output phase."""

    def __init__(self, command: str, cfg: ExperimentConfig | None):
        self.command = command
        self.report: dict = {"schema_version": SCHEMA_VERSION, "command": command}
        if cfg is not None:
            self.report["config"] = cfg.echo()
        self.tables: dict[str, tuple[tuple, list]] = {}

    def table(self, name: str, columns, rows):
        self.tables[name] = (tuple(columns), list(rows))

    def write(self, out: str | None, fmt: str | None) -> None:
        if out is None:
            if (fmt or "json") == "json":
                sys.stdout.write(dumps_json(self.report))
            else:
                for name, (cols, rows) in self.tables.items():
                    sys.stdout.write(dumps_csv(cols, rows))
            return
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        if fmt in (None, "json"):
            (d / f"{self.command}.json").write_text(dumps_json(self.report))
        if fmt in (None, "csv"):
            for name, (cols, rows) in self.tables.items():
                (d / f"{name}.csv").write_text(dumps_csv(cols, rows))


# -- commands --------------------------------------------------------------------------


def cmd_modulus(cfg: ExperimentConfig, bundle: Bundle):
    sec = cfg.section("modulus")
    us = u_grid_from(sec, "modulus", 1e-6, 10.0, 30)
    m = cfg.modulus()
    if "C0" in sec:
        m = m.with_shift(float(sec["C0"]))
    closed_ok = m.transform.uses_closed_form
    k = cfg.kernel
    rows = []
    for u in us:
        main = psi(m, u)
        closed = psi(m, u, backend="closed") if closed_ok else math.nan
        numeric = psi(m, u, backend="numeric")
        ref = closed if closed_ok else main
        rel = abs(numeric - ref) / abs(ref) if ref not in (0.0,) and math.isfinite(ref) else math.nan
        printed = printed_loglipschitz_psi(u, m.C1, m.C0, k.L) if isinstance(k, LogLipschitz) else math.nan
        rows.append((u, main, closed, numeric, rel, printed))
    bundle.table("modulus", ("u", "psi", "closed_form", "numeric", "rel_diff", "printed_form"), rows)
    bundle.report.update({"C1": m.C1, "C0": m.C0, "closed_form_available": closed_ok,
                          "max_rel_diff": max((r[4] for r in rows if math.isfinite(r[4])), default=math.nan)})
    return EXIT_OK


def cmd_bound(cfg: ExperimentConfig, bundle: Bundle):
    gap = initial_gap(cfg.xi, cfg.eta, seed=cfg.seed)
    m = cfg.modulus()
    gamma = m.gamma
    rows = []
    for s in cfg.grid:
        c0 = m.C1 * gamma.integral(cfg.t, float(s))
        rows.append((s, c0, psi(m.with_shift(c0), gap.value)))
    bundle.table("bound", ("s", "C0", "bound"), rows)
    bundle.report.update({"initial_gap": gap.value, "initial_gap_stderr": gap.stderr,
                          "bound_T": rows[-1][2], "C0": m.C0, "C1": m.C1})
    return EXIT_OK


def _simulate(cfg: ExperimentConfig, bundle: Bundle):
    if cfg.coefficients is None:
        raise ConfigError("coefficients", "section is required for simulation commands")
    if cfg.validate:
        validate_coefficients(cfg.coefficients, cfg.rho1, cfg.rho2, cfg.weights, cfg.t, cfg.T, seed=cfg.seed)
    fam = cfg.scenarios()
    ens = sample_paths(fam, cfg.paths_per_scenario, cfg.seed, cfg.grid)
    out = cfg.section("output")
    export = out.get("export_ensemble")
    if export:
        d = Path(out.get("dir", "."))
        d.mkdir(parents=True, exist_ok=True)
        if export == "csv":
            ens.to_csv(d / "ensemble.csv")
        elif export == "binary":
            ens.to_binary(d / "ensemble.bin")
        else:
            raise ConfigError("output.export_ensemble", "must be 'csv' or 'binary'")
    log.info("simulating %d scenarios x %d paths x %d steps", len(fam), cfg.paths_per_scenario, cfg.steps)
    run = simulate_pair(cfg.coefficients, cfg.xi, cfg.eta, ens, cfg.t, cfg.T)
    bundle.report.update({"n_scenarios": run.n_scenarios, "paths_per_scenario": run.n_paths,
                          "initial_gap": run.initial_gap, "u_T": float(run.u[-1]),
                          "pointwise_T": float(run.pointwise[-1]),
                          "sensitivity_u_T": run.sensitivity(-1)})
    return run


def cmd_simulate(cfg: ExperimentConfig, bundle: Bundle):
    run = _simulate(cfg, bundle)
    bundle.table("deviation", ("s", "u", "stderr", "pointwise", "pointwise_stderr", "argmax_scenario"),
                 zip(run.grid, run.u, run.u_stderr, run.pointwise, run.pointwise_stderr, run.argmax_scenario))
    return EXIT_OK


def cmd_stability(cfg: ExperimentConfig, bundle: Bundle):
    run = _simulate(cfg, bundle)
    part = None if cfg.partition_steps is None else np.linspace(cfg.t, cfg.T, cfg.partition_steps + 1)
    cert = certify(run, cfg.modulus(), k=cfg.tolerance_k, partition=part)
    bundle.table("certificate", cert.CSV_COLUMNS, cert.csv_rows())
    bundle.report["certificate"] = cert.to_dict()
    return VERDICT_EXIT[cert.verdict]


def cmd_contraction(cfg: ExperimentConfig, bundle: Bundle):
    sec = cfg.section("contraction")
    H = cfg.T - cfg.t
    deltas = floats_from(sec, "deltas", "contraction", list(np.linspace(H / 10, H, 10)))
    us = u_grid_from(sec.get("u_grid", {}), "contraction.u_grid", 1e-8, 1e4, 121)
    tau = floats_from(sec, "tau_grid", "contraction", [0.0]) if "tau_grid" in sec else None
    m = cfg.modulus()
    prof = amplification(m, deltas, us, tau)
    bundle.table("amplification", ("delta", "lambda", "tau_star", "C0_star"),
                 zip(prof.deltas, prof.lambdas, prof.tau_star, prof.C0_star))
    bundle.report["amplification"] = prof.to_dict()
    n = int(sec.get("partition_steps", cfg.partition_steps or 4))
    gap = initial_gap(cfg.xi, cfg.eta, seed=cfg.seed).value
    pb = propagate_partition(m, np.linspace(cfg.t, cfg.T, n + 1), gap, us, tau)
    bundle.report["partition"] = pb.to_dict()
    return EXIT_OK


def cmd_saturate(cfg: ExperimentConfig, bundle: Bundle):
    sec = cfg.section("saturate")
    c_b = float(sec.get("c_b", cfg.bounds.c_b or 2.0))
    form = sec.get("form", "exact")
    u0s = floats_from(sec, "u0", "saturate", [1e-4, 1e-2, 1.0])
    try:
        fam = SaturatingFamily(cfg.kernel, c_b, cfg.weights, cfg.t, cfg.T)
        sd = saturating_drift(fam, form=form, y_star=cfg.y_star)
    except DomainError as exc:
        raise ConfigError("saturate", str(exc)) from None
    rows = []
    for u0 in u0s:
        pred = sd.predict(u0)
        end = saturation_endpoint(fam, u0, form=form)
        rel = abs(end - pred) / pred if pred > 0 else abs(end)
        rows.append((u0, pred, end, rel))
    bundle.table("saturation", ("u0", "predicted", "endpoint", "rel_err"), rows)
    bundle.report.update({"c_b": c_b, "form": form, "shift": sd.shift,
                          "max_rel_err": max(r[3] for r in rows)})
    return EXIT_OK


def cmd_asymptotics(cfg: ExperimentConfig, bundle: Bundle):
    sec = cfg.section("asymptotics")
    us = u_grid_from(sec, "asymptotics", 1e-8, 1e-1, 8, decreasing=True)
    m = cfg.modulus()
    if "C0" in sec:
        m = m.with_shift(float(sec["C0"]))
    tab = asymptotics_probe(m, us)
    bundle.table("asymptotics", tab.CSV_COLUMNS, tab.csv_rows())
    bundle.report.update({"regime": tab.regime, "liminf_proxy": tab.liminf_proxy, "C1": m.C1, "C0": m.C0,
                          "underflow_points": int(np.sum(tab.underflow)),
                          "printed_form": None if tab.printed is None else tab.printed})
    return EXIT_OK


HELP = {
    "modulus": "tabulate Psi(u) with closed-form and numeric routes",
    "bound": "bound curve Psi_s(initial gap) over the time grid",
    "simulate": "paired Monte Carlo run, deviation curve only",
    "stability": "paired run plus certificate against the bound curve",
    "contraction": "amplification factors and partition propagation",
    "saturate": "saturating drift: predicted vs integrated endpoint",
    "asymptotics": "small-argument ratio table",
}

COMMANDS = {
    "modulus": cmd_modulus,
    "bound": cmd_bound,
    "simulate": cmd_simulate,
    "stability": cmd_stability,
    "contraction": cmd_contraction,
    "saturate": cmd_saturate,
    "asymptotics": cmd_asymptotics,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gstab", description="Stability moduli and Monte Carlo certificates.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", required=True, help="TOML experiment file")
        sp.add_argument("--seed", type=int, help="override simulation.seed")
        sp.add_argument("--out", help="output directory (default: report to stdout)")
        sp.add_argument("--format", choices=("csv", "json"),
                        help="write only this format (default: both when --out is given, json otherwise)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        bundle = Bundle(args.command, cfg)
        code = COMMANDS[args.command](cfg, bundle)
    except (ConfigError, CoefficientValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationBlowUp as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    bundle.write(args.out, args.format)
    return code


if __name__ == "__main__":
    sys.exit(main())
