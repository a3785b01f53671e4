"""
Explicit constants for the exponential-times-power-law decay bound.

Pipeline: short-shell sums of the connectivity give (lambda, n0), hence a
mass m; the tilted susceptibility chi_m and the crossing sums gamma_L give
the multi-scale inputs (alpha, L0); the halving recursion then yields C with

    tau_xy <= C exp(-m |x0 - y0|) / (1 + |x1 - y1|^(d + eps)).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .model import Box, ModelParams, SplitPoint, l1_norm, shell_sizes
from .rng import RngSeed
from .sampler import (ClusterSamples, Estimate, bernoulli_estimate, gamma_scan, sample_clusters,
                      sample_mean_estimate)

SHELL_LABEL = 1
VERIFY_LABEL = 2


class BoundError(ValueError):
    pass


class InsufficientSignal(BoundError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ShellTable:
    """Per short-shell n: estimate of sum over |x0| = n, all x1, of tau_0x."""

    shells: list[int]
    estimates: list[Estimate]

    def upper(self, z: float = 2.0) -> np.ndarray:
        return np.array([e.mean + z * e.stderr for e in self.estimates])

    def rows(self):
        return [{"shell": n, "mean": e.mean, "stderr": e.stderr, "n_samples": e.n_samples}
                for n, e in zip(self.shells, self.estimates)]


def shell_table_from(cs: ClusterSamples) -> ShellTable:
    geo = cs.geometry
    norms = np.abs(geo.coords[:, : geo.k] - geo.coords[cs.origin, : geo.k]).sum(axis=1)
    n_shells = int(norms.max()) + 1
    flat = cs.sample_of_member * n_shells + norms[cs.members]
    counts = np.bincount(flat, minlength=cs.n * n_shells).reshape(cs.n, n_shells)
    return ShellTable(list(range(n_shells)),
                      [sample_mean_estimate(counts[:, s]) for s in range(n_shells)])


def fiber_sums(p: ModelParams, box: Box, n_samples: int, seed: RngSeed,
               workers: int = 1) -> ShellTable:
    """Shell sums from cluster growth at the origin, truncated to ``box``."""
    cs = sample_clusters(p.origin(), box, p, n_samples, seed, workers)
    return shell_table_from(cs)


def find_n0(table: ShellTable, lam: float, z: float = 2.0) -> int:
    """Smallest n0 >= 1 with every shell n >= n0 below ``lam`` (estimate + z stderr)."""
    if not 0.0 < lam < 1.0:
        raise BoundError("lambda must lie in (0, 1)")
    upper = table.upper(z)
    n0 = len(upper)
    for n in range(len(upper) - 1, 0, -1):
        if upper[n] >= lam:
            break
        n0 = n
    if n0 == len(upper) and len(upper) > 1:
        raise BoundError(
            f"no n0: the outermost shell sum {upper[-1]:.4g} is not below lambda={lam}")
    return max(n0, 1)


def default_delta(lam: float, n0: int) -> float:
    return -math.log(lam) / n0 / 2.0


def mass_from_lambda(lam: float, n0: int, delta: float) -> float:
    """Solve exp(-(m + delta)) = lam^(1/n0) for m."""
    if not 0.0 < lam < 1.0:
        raise BoundError("lambda must lie in (0, 1)")
    if n0 < 1:
        raise BoundError("n0 must be a positive integer")
    if delta <= 0:
        raise BoundError("delta must be positive")
    m = -math.log(lam) / n0 - delta
    if m <= 0:
        raise BoundError(f"nonpositive mass {m:.4g}: delta={delta} too large for lambda={lam}, n0={n0}")
    return m


def shell_tail(k: int, start: int, m: float, lam: float, n0: int, rtol: float = 1e-15,
               max_terms: int = 1_000_000) -> float:
    """sum_{n >= start} |{x0 in Z^k : |x0| = n}| e^{m n} lam^floor(n / n0)."""
    if k == 0 or lam == 0.0:
        return 0.0
    delta = -math.log(lam) / n0 - m
    if delta <= 0:
        raise BoundError("tail diverges: m leaves no decay margin")
    total = 0.0
    n = start
    sizes = shell_sizes(k, start + 64)
    while n - start < max_terms:
        if n >= len(sizes):
            sizes = shell_sizes(k, 2 * n)
        term = sizes[n] * math.exp(m * n + (n // n0) * math.log(lam))
        total += term
        if n > start + 10 and term < rtol * total:
            break
        n += 1
    return total


@dataclass
class TiltedSusceptibility:
    partial: Estimate
    tail: float
    covered_radius: int

    @property
    def value(self) -> float:
        return self.partial.mean + self.tail

    @property
    def upper(self) -> float:
        return self.partial.mean + 2.0 * self.partial.stderr + self.tail


def chi_m_partial(p: ModelParams, m: float, box: Box, n_samples: int, seed: RngSeed, *,
                  lam: float, n0: int, lam_observed: Optional[float] = None, workers: int = 1,
                  clusters: Optional[ClusterSamples] = None) -> TiltedSusceptibility:
    """Truncated sum of e^{m |x0|} tau_0x plus an analytic tail for shells past the box.

    Each x0 beyond the fully covered short radius contributes at most
    e^{m |x0|} lam^floor(|x0| / n0); ``lam_observed`` (<= lam) may replace lam
    in that bound when the measured shell sums are smaller.
    """
    delta = -math.log(lam) / n0 - m
    if delta <= 0:
        raise BoundError(f"margin delta={delta:.4g} is not positive")
    cs = clusters or sample_clusters(p.origin(), box, p, n_samples, seed, workers)
    geo = cs.geometry
    o0 = geo.coords[cs.origin, : geo.k]
    weights = np.exp(m * np.abs(geo.coords[:, : geo.k] - o0).sum(axis=1))
    partial = sample_mean_estimate(cs.per_sample_sum(weights))
    covered = min((min(int(o - a), int(b - o)) for o, a, b in zip(o0, box.lo0, box.hi0)),
                  default=0)
    lam_tail = lam if lam_observed is None else min(lam, lam_observed)
    tail = shell_tail(p.k, covered + 1, m, lam_tail, n0)
    return TiltedSusceptibility(partial, tail, covered)


def _check_alpha(alpha: float, d: int, epsilon: float) -> None:
    if not 0.0 < alpha < 2.0 ** (-(d + epsilon)):
        raise BoundError(f"alpha={alpha} outside (0, 2^-(d+eps))")


def halvings(L: float, L0: float) -> int:
    """Smallest n with L / 2^n <= L0."""
    n = 0
    while L / 2.0 ** n > L0:
        n += 1
    return n


def volume_prefactor(d: int, epsilon: float, beta: float, chi_m: float) -> float:
    return 2.0 ** (d + epsilon) * 2.0 * beta * chi_m ** 2


def iterate_bound(alpha: float, L0: float, d: int, epsilon: float, beta: float, chi_m: float,
                  L: float) -> float:
    """Upper bound on the tilted sup at scale L from n halvings down to L0.

    A * sum_{j<n} (alpha 2^q)^j / (1 + L^q) + alpha^n, using sup <= 1 below L0.
    """
    _check_alpha(alpha, d, epsilon)
    if L0 <= 0:
        raise BoundError("L0 must be positive")
    if L <= L0:
        return 1.0
    q = d + epsilon
    n = halvings(L, L0)
    ratio = alpha * 2.0 ** q
    series = (1.0 - ratio ** n) / (1.0 - ratio)
    return volume_prefactor(d, epsilon, beta, chi_m) * series / (1.0 + L ** q) + alpha ** n


def final_constant(alpha: float, L0: float, d: int, epsilon: float, beta: float,
                   chi_m: float) -> float:
    """C = A / (1 - alpha 2^q) + 2 (2 L0)^q.

    Dominates iterate_bound * (1 + L^q) for every L > L0 provided L0 >= 1.
    """
    _check_alpha(alpha, d, epsilon)
    if L0 < 1:
        raise BoundError("L0 must be at least 1 for the tail term to dominate")
    q = d + epsilon
    ratio = alpha * 2.0 ** q
    return volume_prefactor(d, epsilon, beta, chi_m) / (1.0 - ratio) + 2.0 * (2.0 * L0) ** q


@dataclass
class DecayFit:
    m_hat: Optional[float]
    q_hat: float
    c_hat: float
    residual_rms: float
    window: dict
    long_only: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def summary(self) -> str:
        m = "n/a (long-only fit)" if self.m_hat is None else f"{self.m_hat:.6g}"
        return (f"m_hat = {m}\nq_hat = {self.q_hat:.6g}\nc_hat = {self.c_hat:.6g}\n"
                f"residual_rms = {self.residual_rms:.3g}\nwindow = {self.window}")


def fit_decay(tau_table: Sequence[tuple[SplitPoint, Estimate]], p: ModelParams,
              q_fixed: Optional[float] = None, rel_floor: float = 1e-6) -> DecayFit:
    """Weighted least squares of ln tau against ln c - m|x0| - ln(1 + |x1|^q).

    Residuals live in log space and are weighted by (mean / stderr)^2, the
    inverse delta-method variance of ln(mean); relative errors are floored
    at ``rel_floor`` so noiseless data fits unweighted.
    """
    pts = [(x, e) for x, e in tau_table if e.mean > 0 and e.mean > 4.0 * e.stderr]
    n0s = np.array([l1_norm(x.u0) for x, _ in pts], dtype=float)
    n1s = np.array([l1_norm(x.u1) for x, _ in pts], dtype=float)
    if len(pts) < 3 or len(set(n1s)) < 3 and q_fixed is None:
        raise InsufficientSignal(
            f"need at least 3 points above 4 stderr with distinct |x1|, got {len(pts)}")
    y = np.log([e.mean for _, e in pts])
    rel = np.maximum([e.stderr / e.mean for _, e in pts], rel_floor)
    sw = 1.0 / rel
    long_only = len(set(n0s)) < 2
    q0 = p.exponent if q_fixed is None else q_fixed

    def unpack(theta):
        lnc = theta[0]
        m = 0.0 if long_only else theta[1]
        q = q_fixed if q_fixed is not None else theta[-1]
        return lnc, m, q

    def resid(theta):
        lnc, m, q = unpack(theta)
        return sw * (y - (lnc - m * n0s - np.log1p(n1s ** q)))

    theta0 = [float(np.max(y + np.log1p(n1s ** q0)))]
    if not long_only:
        theta0.append(0.5)
    if q_fixed is None:
        theta0.append(q0)
    sol = least_squares(resid, theta0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=20000)
    lnc, m, q = unpack(sol.x)
    raw = y - (lnc - m * n0s - np.log1p(n1s ** q))
    window = {"n_points": len(pts), "short_range": [float(n0s.min()), float(n0s.max())],
              "long_range": [float(n1s.min()), float(n1s.max())]}
    return DecayFit(None if long_only else float(m), float(q), float(math.exp(lnc)),
                    float(np.sqrt(np.mean(raw ** 2))), window, long_only)


@dataclass
class VerificationReport:
    n_points: int
    n_pass: int
    worst_slack: float
    worst_site: Optional[str]
    violations: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.n_pass == self.n_points


def theorem_bound(C: float, m: float, p: ModelParams, x: SplitPoint) -> float:
    return C * math.exp(-m * l1_norm(x.u0)) / (1.0 + l1_norm(x.u1) ** p.exponent)


def verify_theorem_bound(tau_table: Sequence[tuple[SplitPoint, Estimate]], C: float, m: float,
                         p: ModelParams) -> VerificationReport:
    """Check mean - 2 stderr <= C e^{-m|x0|} / (1 + |x1|^q) at every table point.

    Sites are displacements from the reference point of the table.
    """
    rows, violations = [], []
    worst, worst_site = math.inf, None
    for x, e in tau_table:
        bound = theorem_bound(C, m, p, x)
        slack = bound - (e.mean - 2.0 * e.stderr)
        ok = slack >= 0
        row = {"site": str(x), "mean": e.mean, "stderr": e.stderr, "bound": bound,
               "slack": slack, "pass": ok}
        rows.append(row)
        if not ok:
            violations.append(row)
        if slack < worst:
            worst, worst_site = slack, str(x)
    return VerificationReport(len(rows), len(rows) - len(violations),
                              worst if rows else 0.0, worst_site, violations, rows)


@dataclass
class BoundCertificate:
    lam: float
    n0: int
    delta: float
    m: float
    chi_m: float
    L0: float
    alpha: float
    C: float
    params: dict
    provenance: dict

    def check(self, p: ModelParams) -> None:
        q = p.exponent
        if abs(math.exp(-(self.m + self.delta)) - self.lam ** (1.0 / self.n0)) > 1e-12:
            raise BoundError("mass relation violated")
        if not 0 < self.alpha < 2.0 ** -q:
            raise BoundError("alpha outside the admissible interval")
        if self.C < 2.0 * (2.0 * self.L0) ** q:
            raise BoundError("C below its tail contribution")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@dataclass
class CertifyResult:
    certificate: BoundCertificate
    verification: VerificationReport
    shells: ShellTable
    chi_m: TiltedSusceptibility
    gamma: list
    tau_table: list


def tau_table_from(cs: ClusterSamples, sites: Optional[Sequence[SplitPoint]] = None):
    """(displacement from origin, tau estimate) for the chosen box sites (default: all)."""
    geo = cs.geometry
    o = np.array(geo.coords[cs.origin])
    k = geo.k
    idx = range(geo.n_sites) if sites is None else [geo.index(s) for s in sites]
    out = []
    for i in idx:
        c = geo.coords[i] - o
        out.append((SplitPoint(c[:k], c[k:]), bernoulli_estimate(int(cs.hits[i]), cs.n)))
    return out


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (BoundError, ValueError) as exc:
        raise StageError(name, exc) from exc


def certify(p: ModelParams, box: Box, n_samples: int, seed: RngSeed, *, lam: float = 0.5,
            delta: Optional[float] = None, alpha: Optional[float] = None,
            Ls: Optional[Sequence[float]] = None, points: Optional[Sequence[SplitPoint]] = None,
            workers: int = 1) -> CertifyResult:
    """Run shells -> n0 -> m -> chi_m -> gamma_L -> (alpha, L0) -> C -> verification."""
    origin = p.origin()
    if not box.contains(origin):
        raise StageError("setup", ValueError("origin must lie in the box"))
    provenance = {}
    cs = _stage("fiber_sums", sample_clusters, origin, box, p, n_samples,
                seed.offset(SHELL_LABEL), workers)
    shells = shell_table_from(cs)
    n0 = _stage("find_n0", find_n0, shells, lam)
    provenance.update(lam="defaulted" if lam == 0.5 else "configured", n0="measured")
    if delta is None:
        delta = default_delta(lam, n0)
        provenance["delta"] = "defaulted"
    else:
        provenance["delta"] = "configured"
    m = _stage("mass_from_lambda", mass_from_lambda, lam, n0, delta)
    provenance["m"] = "derived"
    tail_shells = shells.upper()[n0:]
    lam_obs = float(tail_shells.max()) if len(tail_shells) else 0.0
    chi = _stage("chi_m_partial", chi_m_partial, p, m, box, n_samples, seed, lam=lam, n0=n0,
                 lam_observed=lam_obs, clusters=cs)
    chi_m = chi.upper
    provenance["chi_m"] = "measured"
    q = p.exponent
    if alpha is None:
        alpha = 2.0 ** -q / 2.0
        provenance["alpha"] = "defaulted"
    else:
        provenance["alpha"] = "configured"
    _stage("alpha", _check_alpha, alpha, p.d, p.epsilon)
    if Ls is None:
        rmax = max(h - lo for lo, h in zip(box.lo1, box.hi1)) if p.d else 1
        Ls = [float(L) for L in range(1, max(rmax, 1) + 1)]
    gamma = _stage("gamma_scan", gamma_scan, origin, Ls, m, box, p, n_samples, seed, clusters=cs)
    L0 = _stage("select_L0", select_L0, Ls, gamma, alpha)
    provenance["L0"] = "measured"
    C = _stage("final_constant", final_constant, alpha, L0, p.d, p.epsilon, p.beta, chi_m)
    provenance["C"] = "derived"
    cert = BoundCertificate(lam, n0, delta, m, chi_m, L0, alpha, C, p.as_record(), provenance)
    cert.check(p)
    vcs = _stage("verify", sample_clusters, origin, box, p, n_samples, seed.offset(VERIFY_LABEL),
                 workers)
    table = tau_table_from(vcs, points)
    report = verify_theorem_bound(table, C, m, p)
    return CertifyResult(cert, report, shells, chi, list(zip(Ls, gamma)), table)


def select_L0(Ls: Sequence[float], gamma: Sequence[Estimate], alpha: float) -> float:
    """Smallest tabulated L from which every tabulated gamma_L + 2 stderr is below alpha."""
    upper = [g.mean + 2.0 * g.stderr for g in gamma]
    order = np.argsort(Ls)
    L0 = None
    for i in reversed(order):
        if upper[i] < alpha:
            L0 = Ls[i]
        else:
            break
    if L0 is None:
        raise BoundError(f"no tabulated L has gamma_L below alpha={alpha:.4g}")
    return float(L0)
