"""Exit criteria; each test records one PASS/FAIL line shown in the terminal summary."""

import itertools
import json
import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from percolab.bounds import final_constant, fit_decay, iterate_bound, mass_from_lambda, default_delta
from percolab.cli import main
from percolab.model import Box, ModelParams, SplitPoint, bond_probability
from percolab.oracle import (check_fkg_lower, check_hsl, exact_tau,
                             hsl_model_instances, random_graph, random_hsl_instance,
                             series_parallel_fixtures, tau_deletion_contraction)
from percolab.rng import RngSeed
from percolab.sampler import components, estimate_tau_graph, sample_clusters, sample_configuration


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def mc_instances():
    rng = np.random.default_rng(20260)
    out = []
    while len(out) < 20:
        g = random_graph(rng, max_sites=6, max_edges=10)
        if len(g.sites) >= 3 and g.edges:
            out.append(g)
    return out


def hsl_instances():
    rng = np.random.default_rng(4242)
    out = []
    for i in range(200):
        g = random_graph(rng, max_sites=8, max_edges=16)
        out.append((f"random-{i}", g, *random_hsl_instance(rng, g)))
    for i, (p, box, g, x, y, S) in enumerate(hsl_model_instances(4343, 50)):
        out.append((f"model-{i}", g, x, y, S))
    return out


def test_criterion_1_oracle_correctness():
    t0 = time.time()
    worst = 0.0
    for name, g, x, y, expected in series_parallel_fixtures(0.3, 0.6):
        worst = max(worst, abs(exact_tau(g, x, y) - expected))
    rng = np.random.default_rng(1)
    dc_worst = 0.0
    for _ in range(100):
        g = random_graph(rng, max_sites=7, max_edges=12)
        assert len(g.edges) <= 12
        for x, y in itertools.combinations(g.sites, 2):
            dc_worst = max(dc_worst, abs(exact_tau(g, x, y) - tau_deletion_contraction(g, x, y)))
    elapsed = time.time() - t0
    ok = worst <= 1e-12 and dc_worst <= 1e-12 and elapsed < 10
    record(1, ok, f"closed-form err {worst:.1e}, deletion-contraction err {dc_worst:.1e}, "
                  f"{elapsed:.1f}s (limits 1e-12, 10s)")
    assert ok


def test_criterion_2_mc_oracle_agreement():
    t0 = time.time()
    agree = 0
    for i, g in enumerate(mc_instances()):
        x, y = 0, len(g.sites) - 1
        exact = exact_tau(g, x, y)
        est = estimate_tau_graph(len(g.sites), g.edges, x, y, 100_000, RngSeed(5000 + i))
        agree += abs(est.mean - exact) <= 4 * est.stderr or est.mean == exact
    elapsed = time.time() - t0
    ok = agree >= 19 and elapsed < 60
    record(2, ok, f"{agree}/20 instances within 4 stderr at n=1e5, {elapsed:.1f}s (need 19, < 60s)")
    assert ok


def test_criterion_3_hsl_suite():
    t0 = time.time()
    violations, worst = 0, math.inf
    for name, g, x, y, S in hsl_instances():
        r = check_hsl(g, x, y, S)
        violations += not r.holds
        worst = min(worst, r.slack)
    elapsed = time.time() - t0
    ok = violations == 0 and elapsed < 300
    record(3, ok, f"{violations} violations over 250 instances, min slack {worst:.3e}, "
                  f"{elapsed:.1f}s (< 300s)")
    assert ok


def test_criterion_4_fkg_suite():
    violations = 0
    for name, g, x, y, S in hsl_instances():
        violations += not check_fkg_lower(g, x, y).holds
    floor_fail = 0
    for i, g in enumerate(mc_instances()):
        for a, b, q in g.edges:
            est = estimate_tau_graph(len(g.sites), g.edges, a, b, 20_000, RngSeed(7000 + i))
            floor_fail += est.mean + 4 * est.stderr < q
    p = ModelParams(1, 1, 1.0, 0.1)
    box = Box.centered([4], [16])
    origin = p.origin()
    cs = sample_clusters(origin, box, p, 100_000, RngSeed(7100))
    n_pairs = 0
    for y in box.sites():
        q = bond_probability(origin, y, p)
        if q > 0:
            n_pairs += 1
            est = cs.tau(y)
            floor_fail += est.mean + 4 * est.stderr < q
    ok = violations == 0 and floor_fail == 0
    record(4, ok, f"{violations} exact FKG violations over 250 instances; {floor_fail} simulated "
                  f"floor failures over {n_pairs} model pairs and all random-graph edges")
    assert ok


def test_criterion_5_beta_monotonicity():
    box = Box.centered([3], [6])
    lo_p, hi_p = ModelParams(1, 1, 1.0, 0.1), ModelParams(1, 1, 1.0, 0.2)
    violations = 0
    for s in range(10):
        seed = RngSeed(900 + s, s)
        lo, hi = sample_configuration(box, lo_p, seed), sample_configuration(box, hi_p, seed)
        violations += not lo.open_edges <= hi.open_edges
        hi_label = {site: i for i, part in enumerate(components(hi)) for site in part}
        for part in components(lo):
            violations += len({hi_label[site] for site in part}) != 1
    ok = violations == 0
    record(5, ok, f"{violations} violations over 10 seeded configurations")
    assert ok


def test_criterion_6_multiscale_machinery():
    rng = np.random.default_rng(66)
    worst = -math.inf
    for _ in range(20):
        d = int(rng.integers(1, 4))
        eps = float(rng.uniform(0.1, 2.0))
        q = d + eps
        alpha = float(rng.uniform(0.01, 0.99)) * 2.0 ** -q
        L0 = float(rng.uniform(1.0, 20.0))
        beta = float(rng.uniform(0.0, 1.0))
        chi = float(rng.uniform(1.0, 10.0))
        C = final_constant(alpha, L0, d, eps, beta, chi)
        for L in np.geomspace(L0 * (1 + 1e-6), 1e6 * L0, 200):
            ratio = iterate_bound(alpha, L0, d, eps, beta, chi, L) * (1 + L ** q) / C
            worst = max(worst, ratio)
    round_trip = 0.0
    for lam in np.linspace(0.01, 0.99, 50):
        for n0 in (1, 2, 5, 17):
            delta = default_delta(lam, n0)
            m = mass_from_lambda(lam, n0, delta)
            round_trip = max(round_trip, abs(math.exp(-(m + delta)) - lam ** (1 / n0)))
    ok = worst <= 1 + 1e-9 and round_trip <= 1e-12
    record(6, ok, f"max iterate*(1+L^q)/C = {worst:.6f} (<= 1+1e-9), "
                  f"mass round-trip err {round_trip:.1e} (<= 1e-12)")
    assert ok


CERTIFY_INI = """
[model]
k = 1
d = 1
epsilon = 1.0
beta = 0.05

[box]
lo0 = -16
hi0 = 16
lo1 = -64
hi1 = 64

[run]
seed = 2024
n_samples = 200000
"""


def test_criterion_7_theorem_form(tmp_path):
    cfg = tmp_path / "certify.ini"
    cfg.write_text(CERTIFY_INI)
    t0 = time.time()
    code = main(["certify", "--config", str(cfg), "--out", str(tmp_path)])
    elapsed = time.time() - t0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    v = cert["verification"]
    ok = code == 0 and v["passed"] and elapsed < 900
    record(7, ok, f"C={cert['C']:.4g} m={cert['m']:.4g} L0={cert['L0']:g} n0={cert['n0']}; "
                  f"{v['n_pass']}/{v['n_points']} points under the bound, {elapsed:.1f}s (< 900s)")
    assert ok


def test_criterion_8_long_exponent():
    p = ModelParams(0, 1, 0.5, 0.1)
    box = Box((), (), (-128,), (192,))
    t0 = time.time()
    cs = sample_clusters(p.origin(), box, p, 1_000_000, RngSeed(8))
    table = [(SplitPoint((), (x,)), cs.tau(SplitPoint((), (x,)))) for x in range(8, 65)]
    fit = fit_decay(table, p)
    elapsed = time.time() - t0
    ok = 1.3 <= fit.q_hat <= 1.7 and elapsed < 600
    record(8, ok, f"q_hat={fit.q_hat:.3f} (need [1.3, 1.7]), {elapsed:.1f}s (< 600s)")
    assert ok


SIMULATE_INI = """
[model]
k = 1
d = 1
epsilon = 1.0
beta = 0.1

[box]
lo0 = -4
hi0 = 4
lo1 = -16
hi1 = 16

[run]
seed = 9
n_samples = 60000

[simulate]
tilt_m = 0.5
sup_L = 1, 4, 8
"""


def test_criterion_9_determinism(tmp_path):
    cfg = tmp_path / "sim.ini"
    cfg.write_text(SIMULATE_INI)
    bodies = []
    for workers in ("1", "8"):
        out = tmp_path / f"w{workers}"
        assert main(["simulate", "--config", str(cfg), "--out", str(out), "--workers", workers]) == 0
        bodies.append((out / "simulate.csv").read_bytes())
    ok = bodies[0] == bodies[1]
    record(9, ok, f"--workers 1 vs 8 CSV payloads identical ({len(bodies[0])} bytes)")
    assert ok
