"""Command-line entry point: ``crgraph <command> --config FILE``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import legendre as lg
from . import measures as ms
from . import montecarlo as mc
from . import oracle as orc
from . import process as pr
from .config import ConfigError, ExperimentConfig, load_config, parse_config

RATE_COLUMNS = ["n", "method", "log_prob", "rate", "ci_low", "ci_high", "runtime_seconds"]
PLOT_COLUMNS = ["x", "y", "yref", "method"]
REPORT_COLUMNS = ["quantity", "parameter", "value"]
MCMILLAN_COLUMNS = ["n", "log_card", "entropy_term", "gap", "configs"]
MCMILLAN_NOTE = ("gap = log Card - n * McMillan entropy of the centre. The counting statement "
                 "it probes is reported, not asserted: the gap is printed for inspection.")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _json_value(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _emit(rows: list[dict], columns: list[str], fmt: str, out, extra: dict | None = None) -> None:
    if fmt == "json":
        payload = [{c: _json_value(r.get(c)) for c in columns} for r in rows]
        if extra:
            payload = {"rows": payload, **extra}
        out.write(json.dumps(payload, indent=2) + "\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


# ---------------------------------------------------------------------------
# commands


def cmd_sample(cfg: ExperimentConfig, args) -> int:
    if cfg.sample is None:
        raise ConfigError("the sample command needs a [sample] section (n, count, conditional)")
    sample_cfg = cfg.sample
    rng = mc.worker_rng(cfg.seed, 0)
    counts = pr.counts_from_law(sample_cfg.n, cfg.mu) if sample_cfg.conditional else None
    outdir = Path(args.out) if args.out else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
    labels = cfg.alphabet.labels
    cells = pr.class_pairs(cfg.k)
    columns = (["graph", "n", "edges", "normalized_mass", "mass_identity"]
               + [f"L1_{a}" for a in labels]
               + [f"L2_{labels[a]}_{labels[b]}" for a, b in cells])
    rows = []
    for i in range(sample_cfg.count):
        if counts is not None:
            graph = pr.sample_graph_conditional(counts, cfg.lam, cfg.schedule, rng)
        else:
            graph = pr.sample_graph(sample_cfg.n, cfg.mu, cfg.lam, cfg.schedule, rng)
        name = f"graph_{i:04d}.txt"
        if outdir is not None:
            pr.write_graph(graph, outdir / name)
        L1 = pr.empirical_type_measure(graph).weights
        L2 = pr.empirical_pair_measure(graph, cfg.schedule).values
        mass = cfg.schedule.normalizer(graph.n) * float(L2.sum())
        row = {"graph": name, "n": graph.n, "edges": graph.num_edges, "normalized_mass": mass,
               "mass_identity": round(mass) == 2 * graph.num_edges and abs(mass - 2 * graph.num_edges) < 1e-6}
        row.update({f"L1_{a}": float(L1[i_]) for i_, a in enumerate(labels)})
        row.update({f"L2_{labels[a]}_{labels[b]}": float(L2[a, b]) for a, b in cells})
        rows.append(row)
    target = None if outdir is None else outdir / f"summary.{args.format}"
    with _output(target) as out:
        _emit(rows, columns, args.format, out)
    return 0 if all(r["mass_identity"] for r in rows) else 2


def cmd_measure(cfg: ExperimentConfig, args) -> int:
    if not args.graph:
        raise ConfigError("the measure command needs --graph PATH")
    try:
        graph = pr.read_graph(args.graph)
    except OSError as exc:
        raise ConfigError(f"cannot read graph {args.graph}: {exc.strerror}") from exc
    if graph.k != cfg.k:
        raise ConfigError(f"graph has {graph.k} types but the config has {cfg.k}")
    labels = cfg.alphabet.labels
    L1 = pr.empirical_type_measure(graph)
    L2 = pr.empirical_pair_measure(graph, cfg.schedule)
    rows = [{"quantity": "n", "value": graph.n}, {"quantity": "edges", "value": graph.num_edges}]
    rows += [{"quantity": "L1", "parameter": a, "value": float(L1.weights[i])} for i, a in enumerate(labels)]
    rows += [{"quantity": "L2", "parameter": f"{labels[a]} {labels[b]}", "value": float(L2.values[a, b])}
             for a in range(cfg.k) for b in range(cfg.k)]
    rows += [
        {"quantity": "normalized_mass", "value": cfg.schedule.normalizer(graph.n) * L2.total_mass},
        {"quantity": "kullback_action", "parameter": "mu=config", "value": ms.kullback_action(L2, cfg.lam, cfg.mu)},
        {"quantity": "kullback_action", "parameter": "mu=L1", "value": ms.kullback_action(L2, cfg.lam, L1)},
        {"quantity": "mcmillan_entropy", "parameter": "mu=config", "value": ms.mcmillan_entropy(L2, cfg.lam, cfg.mu)},
    ]
    with _output(args.out) as out:
        _emit(rows, REPORT_COLUMNS, args.format, out)
    return 0


def _require_event(cfg: ExperimentConfig, what: str):
    if cfg.event is None:
        raise ConfigError(f"the {what} command needs an [event] section")
    if not cfg.n_list:
        raise ConfigError(f"the {what} command needs [run] n_list")
    return cfg.event


def _rate_row(n, method, log_prob, ci=None, runtime=None) -> dict:
    row = {"n": n, "method": method, "log_prob": log_prob, "runtime_seconds": runtime}
    if log_prob is not None and math.isfinite(log_prob):
        rate = -log_prob / n + 0.0
        row["rate"] = rate
        row["ci_low"], row["ci_high"] = ci if ci is not None else (rate, rate)
    return row


def _exact_rows(cfg: ExperimentConfig, event) -> tuple[list[dict], bool]:
    rows, failed = [], False
    for n in cfg.n_list:
        t0 = time.perf_counter()
        try:
            res = orc.event_enumeration(n, event, cfg.lam, cfg.mu, cfg.schedule, cfg.conditional,
                                        tail_cutoff=cfg.tail_cutoff, budget=cfg.budget)
        except orc.EnumerationBudgetExceeded as exc:
            print(f"n={n}: exact enumeration skipped: {exc}", file=sys.stderr)
            rows.append({"n": n, "method": "exact"})
            failed = True
            continue
        dt = time.perf_counter() - t0
        if res.neglected_bound:
            print(f"n={n}: tail cutoff neglects at most {res.neglected_bound!r} probability", file=sys.stderr)
        rows.append(_rate_row(n, "exact", res.log_value, runtime=dt))
    return rows, failed


def _mc_rows(cfg: ExperimentConfig, event, method: str) -> tuple[list[dict], bool]:
    rows, failed = [], False
    est_cfg = mc.EstimatorConfig(method, cfg.mu, cfg.lam, cfg.schedule, cfg.samples, cfg.seed,
                                 cfg.conditional, cfg.workers, cfg.tilt)
    for n in cfg.n_list:
        t0 = time.perf_counter()
        try:
            (res,) = mc.rate_estimate([n], lambda _n: event, est_cfg)
        except (mc.TiltError, ValueError) as exc:
            print(f"n={n}: {method} estimator failed: {exc}", file=sys.stderr)
            rows.append({"n": n, "method": method})
            failed = True
            continue
        dt = time.perf_counter() - t0
        est = res.estimate
        if res.flagged:
            print(f"n={n}: {method} estimator saw no hits in {est.samples} samples "
                  f"(probability below about {est.upper_bound!r})", file=sys.stderr)
            rows.append({"n": n, "method": method, "log_prob": -math.inf, "runtime_seconds": dt})
            continue
        rows.append(_rate_row(n, method, math.log(est.value), (res.ci_low, res.ci_high), dt))
    return rows, failed


def _reference(cfg: ExperimentConfig, event) -> float | None:
    try:
        return orc.rate_infimum(event, cfg.lam, cfg.mu)
    except ValueError:
        return None


def _plot_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".plot.csv")


def cmd_rate(cfg: ExperimentConfig, args, methods: list[str]) -> int:
    event = _require_event(cfg, args.command)
    rows, failed = [], False
    for method in methods:
        part, bad = _exact_rows(cfg, event) if method == "exact" else _mc_rows(cfg, event, method)
        rows += part
        failed |= bad
    ref = _reference(cfg, event)
    body = rows + [{"method": "reference", "rate": ref}]
    with _output(args.out) as out:
        _emit(body, RATE_COLUMNS, args.format, out)
    if args.out:
        with open(_plot_path(args.out), "w", encoding="utf-8", newline="") as fh:
            plot = [{"x": 1.0 / r["n"], "y": r.get("rate"), "yref": ref, "method": r["method"]} for r in rows]
            _emit(plot, PLOT_COLUMNS, "csv", fh)
    return 2 if failed else 0


def cmd_legendre(cfg: ExperimentConfig, args) -> int:
    leg = cfg.legendre
    if leg is None or leg.target is None:
        raise ConfigError("the legendre command needs [legendre] target (table) or target_scale")
    pi, m = leg.target, cfg.m
    rows: list[dict] = []
    witness = lg.witness_set(pi, m)
    if witness:
        rows.append({"quantity": "status", "value": "diverging"})
        rows.append({"quantity": "kullback_action", "value": math.inf})
        rows += [{"quantity": "witness_cell", "parameter": f"{a} {b}"} for a, b in witness]
        for eta in leg.etas:
            g = lg.divergence_witness(pi, m, eta)
            rows.append({"quantity": "witness_dual_value", "parameter": f"eta={eta!r}",
                         "value": lg.dual_value(g, pi, cfg.lam, cfg.mu)})
    else:
        h = ms.kullback_action(pi, cfg.lam, cfg.mu)
        rep = lg.legendre_sup(pi, cfg.lam, cfg.mu)
        closed = lg.optimal_tilt(pi, m).values
        supp = pi.values > 0
        dev = float(np.max(np.abs(rep.maximizer.values[supp] - closed[supp]))) if supp.any() else 0.0
        rows += [
            {"quantity": "status", "value": "converged" if rep.converged else "not_converged"},
            {"quantity": "kullback_action", "value": h},
            {"quantity": "legendre_sup", "value": rep.value},
            {"quantity": "gap", "value": abs(rep.value - h)},
            {"quantity": "iterations", "value": rep.iterations},
            {"quantity": "maximizer_deviation", "value": dev},
        ]
        rows += [{"quantity": "truncation_gap", "parameter": f"t={t!r}",
                  "value": lg.truncation_gap(pi, cfg.lam, cfg.mu, t)} for t in leg.t_values]
    with _output(args.out) as out:
        _emit(rows, REPORT_COLUMNS, args.format, out)
    return 0


def cmd_mcmillan(cfg: ExperimentConfig, args) -> int:
    event = _require_event(cfg, args.command)
    if event.kind not in ("ball", "entire"):
        raise ConfigError("mcmillan-count needs a ball (or entire) event")
    rows, status = [], 0
    for n in cfg.n_list:
        try:
            row = orc.mcmillan_count_report(n, event, cfg.lam, cfg.mu, cfg.schedule, budget=cfg.budget)
        except orc.EnumerationBudgetExceeded as exc:
            print(f"n={n}: stopped, {exc}; rows so far are complete", file=sys.stderr)
            status = 2
            break
        rows.append(vars(row))
    extra = None
    if args.format == "json":
        extra = {"note": MCMILLAN_NOTE}
    else:
        print(MCMILLAN_NOTE, file=sys.stderr)
    with _output(args.out) as out:
        _emit(rows, MCMILLAN_COLUMNS, args.format, out, extra)
    return status


def cmd_verify(args) -> int:
    from .verify import run_all

    t0 = time.perf_counter()
    results = run_all(print)
    dt = time.perf_counter() - t0
    passed = sum(r.passed for r in results)
    print(f"\n{passed}/{len(results)} checks passed in {dt:.1f}s")
    return 0 if passed == len(results) else 2


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crgraph", description="Coloured random graph large-deviation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("sample", "draw graphs and print a summary row per graph"),
        ("measure", "empirical measures and rate functionals of a stored graph"),
        ("rate-exact", "exact event probabilities and rates by lattice enumeration"),
        ("rate-mc", "Monte Carlo (mc and/or is) rate estimates"),
        ("legendre", "duality and truncation report for a target measure"),
        ("mcmillan-count", "exact log counts of graphs near a measure"),
        ("verify", "run the acceptance criteria and invariant suite"),
    ]:
        p = sub.add_parser(name, help=text)
        if name != "verify":
            p.add_argument("--config", required=True, help="experiment config file, or - for stdin")
            p.add_argument("--seed", type=int, help="override [run] seed")
            p.add_argument("--workers", type=int, help="override [run] workers")
            p.add_argument("--out", help="output file (directory for sample)")
            p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "measure":
            p.add_argument("--graph", help="graph file written by the sample command")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    from dataclasses import replace

    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = replace(cfg, workers=args.workers)
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"crgraph: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = parse_config(sys.stdin.read()) if args.config == "-" else load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        if args.command == "sample":
            return cmd_sample(cfg, args)
        if args.command == "measure":
            return cmd_measure(cfg, args)
        if args.command == "rate-exact":
            return cmd_rate(cfg, args, ["exact"])
        if args.command == "rate-mc":
            methods = [e for e in cfg.estimators if e != "exact"] or ["mc"]
            return cmd_rate(cfg, args, methods)
        if args.command == "legendre":
            return cmd_legendre(cfg, args)
        return cmd_mcmillan(cfg, args)
    except (ConfigError, ms.MeasureError) as exc:
        print(f"crgraph: invalid input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"crgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def run_to_string(argv, stdin: str | None = None) -> str:
    """Run the CLI in-process and return what it wrote to stdout."""
    buf = io.StringIO()
    old_in = sys.stdin
    try:
        if stdin is not None:
            sys.stdin = io.StringIO(stdin)
        with contextlib.redirect_stdout(buf), contextlib.redirect_stderr(io.StringIO()):
            code = main(argv)
    finally:
        sys.stdin = old_in
    if code != 0:
        raise RuntimeError(f"crgraph {' '.join(argv)} exited with {code}")
    return buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
