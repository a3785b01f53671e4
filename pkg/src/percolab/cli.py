"""
Command-line runner: ``percolab {simulate,oracle-check,certify,fit}``.

Exit codes: 0 success, 1 inequality or verification failure, 2 config
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import subprocess
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, bounds, oracle
from .config import ConfigError, ExperimentConfig, load_config
from .model import SplitPoint, l1_norm
from .sampler import (Estimate, bernoulli_estimate, estimate_tau_graph, sample_clusters,
                      sample_mean_estimate, tilted_sup)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

SIMULATE_LABEL = 10
ORACLE_LABEL = 30
FIT_LABEL = 20

CSV_COLUMNS = ["quantity", "x", "y", "k", "d", "epsilon", "beta", "m", "L", "mean", "stderr",
               "n_samples", "seed", "stream", "argmax", "touched_fraction"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def estimate_row(cfg: ExperimentConfig, quantity: str, est: Estimate, x=None, y=None,
                 m=None, L=None) -> dict:
    p = cfg.params
    return {"quantity": quantity, "x": x, "y": y, "k": p.k, "d": p.d, "epsilon": p.epsilon,
            "beta": p.beta, "m": m, "L": L, "mean": est.mean, "stderr": est.stderr,
            "n_samples": est.n_samples, "seed": cfg.seed.seed, "stream": cfg.seed.stream,
            "argmax": est.site, "touched_fraction": est.touched_fraction}


def render_csv(rows: list[dict], columns: list[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def manifest(cfg: ExperimentConfig, command: str, started: float, outputs: list[str]) -> dict:
    return {
        "payload": {"command": command, "version": __version__, "params": cfg.params.as_record(),
                    "box": {k: list(v) for k, v in cfg.box.as_record().items()},
                    "seed": cfg.seed.seed, "stream": cfg.seed.stream,
                    "n_samples": cfg.n_samples, "outputs": outputs},
        "meta": {"git": _git_describe(), "wall_time_s": round(time.time() - started, 3),
                 "timestamp": datetime.now(timezone.utc).isoformat(),
                 "host": platform.node()},
    }


def simulate_rows(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    """tau (and tilted tau) to each point, chi, and tilted sups from one origin."""
    p = cfg.params
    origin_raw = cfg.option("simulate", "origin")
    origin = p.origin() if origin_raw is None else cfg.site(origin_raw)
    points = cfg.sites("simulate")
    if points is None:
        points = list(cfg.box.sites())
    m = cfg.option("simulate", "tilt_m")
    cs = sample_clusters(origin, cfg.box, p, cfg.n_samples, cfg.seed.offset(SIMULATE_LABEL),
                         workers)
    rows = []
    for y in points:
        est = Estimate(1.0, 0.0, cs.n) if y == origin else cs.tau(y)
        rows.append(estimate_row(cfg, "tau", est, origin, y))
        if m:
            dist = l1_norm(a - b for a, b in zip(origin.u0, y.u0))
            rows.append(estimate_row(cfg, "tilted_tau", est.scaled(math.exp(m * dist)),
                                     origin, y, m=m))
    if cfg.option("simulate", "chi"):
        chi = sample_mean_estimate(cs.sizes)
        chi = Estimate(chi.mean, chi.stderr, cs.n, touched_fraction=float(cs.touched.mean()))
        rows.append(estimate_row(cfg, "chi", chi, origin))
    for L in cfg.option("simulate", "sup_L"):
        rows.append(estimate_row(cfg, "tilted_sup", tilted_sup(cs, L, m), origin, m=m, L=L))
    return rows


def _write(out: Path, name: str, text: str) -> str:
    (out / name).write_text(text)
    return name


def cmd_simulate(cfg: ExperimentConfig, out: Path, workers: int = 1) -> int:
    started = time.time()
    rows = simulate_rows(cfg, workers)
    files = [_write(out, "simulate.csv", render_csv(rows))]
    _finish(cfg, "simulate", started, out, files)
    return EXIT_OK


def oracle_reports(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[dict], bool]:
    """Run the fixture, HSL, FKG and Monte Carlo suites; return (lines, all_ok)."""
    opt = lambda key: cfg.option("oracle", key)  # noqa: E731
    cap = opt("cap")
    lines = []
    ok = True
    for name, g, x, y, expected in oracle.series_parallel_fixtures(opt("fixture_p"), opt("fixture_q")):
        tau = oracle.exact_tau(g, x, y)
        good = oracle.isclose(tau, expected)
        ok &= good
        lines.append({"suite": "fixture", "instance": name, "exact": tau, "closed_form": expected,
                      "holds": good})
    rng = np.random.default_rng(cfg.seed.seed)
    instances = []
    for i in range(opt("instances")):
        g = oracle.random_graph(rng, opt("max_sites"), opt("max_edges"))
        g.cap = cap
        instances.append((f"random-{i}", g, *oracle.random_hsl_instance(rng, g)))
    for i, (p, box, g, x, y, S) in enumerate(oracle.hsl_model_instances(cfg.seed.seed, opt("model_instances"))):
        g.cap = cap
        instances.append((f"model-{i}-k{p.k}d{p.d}-b{p.beta}-e{p.epsilon}", g, x, y, S))
    for name, g, x, y, S in instances:
        base = {"instance": name, "graph": g.descriptor(), "x": str(x), "y": str(y)}
        try:
            hsl = oracle.check_hsl(g, x, y, S)
            fkg = oracle.check_fkg_lower(g, x, y)
        except oracle.EnumerationCapError as exc:
            lines.append({"suite": "hsl", **base, "error": str(exc)})
            continue
        ok &= hsl.holds and fkg.holds
        lines.append({"suite": "hsl", **base, "S": sorted(map(str, S)), **hsl.__dict__})
        lines.append({"suite": "fkg", **base, **fkg.__dict__})
    mc_rng = np.random.default_rng([cfg.seed.seed, ORACLE_LABEL])
    agree = 0
    n_mc = opt("mc_instances")
    for i in range(n_mc):
        g = oracle.random_graph(mc_rng, 6, 10)
        x, y = 0, len(g.sites) - 1
        exact = oracle.exact_tau(g, x, y)
        est = estimate_tau_graph(len(g.sites), g.edges, x, y, opt("mc_samples"),
                                 cfg.seed.offset(ORACLE_LABEL + i), workers)
        good = abs(est.mean - exact) <= 4.0 * est.stderr or est.mean == exact
        agree += good
        floor_ok = est.mean + 4.0 * est.stderr >= g.probability(x, y)
        ok &= floor_ok
        lines.append({"suite": "mc", "instance": f"mc-{i}", "graph": g.descriptor(), "exact": exact,
                      "mean": est.mean, "stderr": est.stderr, "n_samples": est.n_samples,
                      "agrees": good, "fkg_floor": floor_ok})
    mc_ok = agree >= math.ceil(0.95 * n_mc)
    ok &= mc_ok
    lines.append({"suite": "summary", "mc_agreements": agree, "mc_instances": n_mc,
                  "holds": ok})
    return lines, ok


def cmd_oracle_check(cfg: ExperimentConfig, out: Path, workers: int = 1) -> int:
    started = time.time()
    lines, ok = oracle_reports(cfg, workers)
    text = "".join(json.dumps(line, sort_keys=True, default=str) + "\n" for line in lines)
    files = [_write(out, "oracle.jsonl", text)]
    _finish(cfg, "oracle-check", started, out, files)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_certify(cfg: ExperimentConfig, out: Path, workers: int = 1) -> int:
    started = time.time()
    opt = lambda key: cfg.option("certify", key)  # noqa: E731
    try:
        res = bounds.certify(cfg.params, cfg.box, cfg.n_samples, cfg.seed, lam=opt("lambda"),
                             delta=opt("delta"), alpha=opt("alpha"), Ls=opt("L_grid"),
                             points=cfg.sites("certify"), workers=workers)
    except bounds.StageError as exc:
        print(f"certify failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rep = res.verification
    cert = res.certificate.to_dict()
    cert["verification"] = {"n_points": rep.n_points, "n_pass": rep.n_pass,
                            "worst_slack": rep.worst_slack, "worst_site": rep.worst_site,
                            "passed": rep.passed}
    files = [
        _write(out, "certificate.json", json.dumps(cert, sort_keys=True, indent=2) + "\n"),
        _write(out, "verification.csv",
               render_csv(rep.rows, ["site", "mean", "stderr", "bound", "slack", "pass"])),
        _write(out, "shells.csv", render_csv(res.shells.rows(),
                                             ["shell", "mean", "stderr", "n_samples"])),
        _write(out, "gamma.csv", render_csv(
            [{"L": L, "mean": g.mean, "stderr": g.stderr, "n_samples": g.n_samples}
             for L, g in res.gamma], ["L", "mean", "stderr", "n_samples"])),
    ]
    print(json.dumps(cert["verification"], sort_keys=True))
    _finish(cfg, "certify", started, out, files)
    return EXIT_OK if rep.passed else EXIT_FAIL


def read_tau_table(path: Path, k: int) -> list[tuple[SplitPoint, Estimate]]:
    """Rows with quantity == tau from a simulate CSV, as displacements y - x."""
    table = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["quantity"] != "tau":
                continue
            x = [int(c) for c in row["x"].split(",")]
            y = [int(c) for c in row["y"].split(",")]
            disp = [b - a for a, b in zip(x, y)]
            table.append((SplitPoint.from_coords(disp, k),
                          Estimate(float(row["mean"]), float(row["stderr"]),
                                   int(row["n_samples"]))))
    return table


def fit_table(cfg: ExperimentConfig, workers: int = 1) -> list[tuple[SplitPoint, Estimate]]:
    src = cfg.option("fit", "table")
    if src is not None:
        return read_tau_table(Path(src), cfg.params.k)
    p = cfg.params
    points = cfg.sites("fit") or []
    cs = sample_clusters(p.origin(), cfg.box, p, cfg.n_samples, cfg.seed.offset(FIT_LABEL), workers)
    return [(y, cs.tau(y)) for y in points if y != p.origin()]


def cmd_fit(cfg: ExperimentConfig, out: Path, workers: int = 1) -> int:
    started = time.time()
    table = fit_table(cfg, workers)
    try:
        fit = bounds.fit_decay(table, cfg.params, q_fixed=cfg.option("fit", "q_fixed"))
    except bounds.InsufficientSignal as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    files = [_write(out, "fit.json", fit.to_json() + "\n")]
    print(fit.summary())
    _finish(cfg, "fit", started, out, files)
    return EXIT_OK


def _finish(cfg, command, started, out: Path, files):
    man = manifest(cfg, command, started, files)
    (out / "manifest.json").write_text(json.dumps(man, sort_keys=True, indent=2) + "\n")
    print(json.dumps(man, sort_keys=True))


COMMANDS = {"simulate": cmd_simulate, "oracle-check": cmd_oracle_check,
            "certify": cmd_certify, "fit": cmd_fit}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="percolab", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("."))
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=_u64, default=None, help="override [run] seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.workers < 1:
        print("config error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
