"""Randomized conformal deformations: splitting searches and simplicity statistics.

Degenerate eigenvalues of the flat operator come from lattice symmetry;
generic conformal deformations are expected to break every positive cluster
into quaternionically simple pieces.  This module makes that executable:

* ``split_search`` sweeps a deterministic candidate list of deformation
  profiles until one produces distinct quaternionic first-order rates, then
  verifies on a real deformed solve that the cluster actually falls apart;
* ``genericity_scan`` samples random factors and tabulates the multiplicity
  patterns of the lowest positive clusters;
* ``simplicity_certificate`` checks that the first k eigenvalues on each side
  of zero (counted with quaternionic multiplicity) are pairwise distinct and
  that the kernel is empty.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import eigensolver
from .conformal import ConformalFactor, deformed_spectrum
from .errors import ClusterNotIsolatedError, PositiveDefiniteError, SplitSearchError
from .perturbation import flat_cluster_window, group_distinct, perturbation_matrix
from .torus_dirac import SpinStructure, build_mode_set

#: Generalized eigenvalues below this absolute size count as kernel elements.
KERNEL_TOL = 1e-8


def random_factor(seed, degree, amplitude, label=None):
    """Seeded random real trigonometric polynomial with sup norm ~ amplitude.

    Coefficients are i.i.d. complex Gaussians on a half-space of modes (the
    other half fixed by conjugation, the zero mode real), then the whole
    polynomial is rescaled so its sup norm over a sampling grid equals the
    requested amplitude.  Identical seeds give identical factors.
    """
    degree = int(degree)
    if degree < 1:
        raise ValueError("degree must be >= 1")
    amplitude = float(amplitude)
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if amplitude == 0.0:
        return ConformalFactor.zero()
    rng = np.random.default_rng(seed)
    side = 2 * degree + 1
    vals = np.zeros((side, side, side), dtype=np.complex128)
    for m1 in range(-degree, degree + 1):
        for m2 in range(-degree, degree + 1):
            for m3 in range(-degree, degree + 1):
                m = (m1, m2, m3)
                if m == (0, 0, 0):
                    vals[degree, degree, degree] = rng.standard_normal()
                elif m > (0, 0, 0):
                    re, im = rng.standard_normal(2)
                    vals[m1 + degree, m2 + degree, m3 + degree] = (re + 1j * im) / 2.0
                    vals[degree - m1, degree - m2, degree - m3] = (re - 1j * im) / 2.0
    factor = ConformalFactor(degree, vals, label=label)
    sup = factor.sup_abs()
    if sup == 0.0:
        return ConformalFactor.zero()
    return ConformalFactor(degree, vals * (amplitude / sup), label=label)


def _half_space_modes(max_degree):
    """Representatives of {m, -m} pairs with 0 < |m|_inf <= max_degree,
    ordered by Euclidean length then lexicographically."""
    out = []
    d = max_degree
    for m1 in range(-d, d + 1):
        for m2 in range(-d, d + 1):
            for m3 in range(-d, d + 1):
                m = (m1, m2, m3)
                if m > (0, 0, 0):
                    out.append(m)
    out.sort(key=lambda m: (m[0] ** 2 + m[1] ** 2 + m[2] ** 2, m))
    return out


def candidate_factors(max_degree, n_random=32, seed=2024):
    """Deterministic splitting candidates: single frequencies, then random mixes."""
    for m in _half_space_modes(max_degree):
        yield ConformalFactor.cosine(m)
        yield ConformalFactor.sine(m)
    root = np.random.SeedSequence(seed)
    for j, child in enumerate(root.spawn(n_random)):
        yield random_factor(child, max_degree, 1.0, label=f"mix:{seed}:{j}")


@dataclass
class SplitCertificate:
    """Witness that one deformation profile splits a degenerate cluster."""

    lam: float
    p_c_before: int
    p_h_before: int
    factor_label: str
    factor: dict
    rates: list[float]
    quaternionic_rates: list[float]
    rate_gap: float
    t_verify: float
    post_clusters: list[tuple[float, int, int]]
    max_p_h_after: int
    max_position_error: float
    candidates_tried: int

    def to_json_dict(self):
        return {
            "lambda": float(self.lam),
            "p_c_before": self.p_c_before,
            "p_h_before": self.p_h_before,
            "factor_label": self.factor_label,
            "factor": self.factor,
            "rates": [float(r) for r in self.rates],
            "quaternionic_rates": [float(r) for r in self.quaternionic_rates],
            "rate_gap": float(self.rate_gap),
            "t_verify": float(self.t_verify),
            "post_clusters": [
                {"lambda": float(l), "mult_c": int(c), "mult_h": int(h)}
                for (l, c, h) in self.post_clusters
            ],
            "max_p_h_after": self.max_p_h_after,
            "max_position_error": float(self.max_position_error),
            "candidates_tried": self.candidates_tried,
        }

    @classmethod
    def from_json_dict(cls, doc):
        return cls(
            lam=float(doc["lambda"]),
            p_c_before=int(doc["p_c_before"]),
            p_h_before=int(doc["p_h_before"]),
            factor_label=doc["factor_label"],
            factor=doc["factor"],
            rates=[float(r) for r in doc["rates"]],
            quaternionic_rates=[float(r) for r in doc["quaternionic_rates"]],
            rate_gap=float(doc["rate_gap"]),
            t_verify=float(doc["t_verify"]),
            post_clusters=[
                (float(c["lambda"]), int(c["mult_c"]), int(c["mult_h"]))
                for c in doc["post_clusters"]
            ],
            max_p_h_after=int(doc["max_p_h_after"]),
            max_position_error=float(doc["max_position_error"]),
            candidates_tried=int(doc["candidates_tried"]),
        )


def _verify_split(cluster, factor, report, t, position_tol):
    """Solve at the verification t and match sub-clusters to predictions."""
    ms = cluster.mode_set
    res = deformed_spectrum(
        factor, t, ms, tau_rel=eigensolver.TAU_REL_SPLIT, keep_vectors=False, keep_B=False
    )
    lo, hi = flat_cluster_window(ms, cluster.lam)
    sub = [c for c in res.clusters if lo < c.lam < hi]
    if sum(c.mult_c for c in sub) != cluster.p_c:
        raise ClusterNotIsolatedError(
            f"deformed cluster at {cluster.lam} is not isolated at t={t}"
        )
    q = np.asarray(report.quaternionic_rates, dtype=float)
    tol_group = 1e-8 * max(1.0, abs(cluster.lam), float(np.max(np.abs(q))))
    reps, _sizes = group_distinct(np.sort(q), tol_group)
    predicted = [cluster.lam + t * r for r in reps]
    max_err = 0.0
    for c in sub:
        err = min(abs(c.lam - p) for p in predicted)
        max_err = max(max_err, err)
    covered = all(any(abs(c.lam - p) <= position_tol for c in sub) for p in predicted)
    max_ph = max(c.mult_h for c in sub)
    ok = covered and max_err <= position_tol and max_ph < cluster.p_h
    post = [(c.lam, c.mult_c, c.mult_h) for c in sub]
    return ok, post, max_ph, max_err


def split_search(
    cluster,
    max_degree,
    t_verify=0.05,
    gap_threshold=1e-3,
    n_random=32,
    seed=2024,
    position_tol=None,
):
    """Find a deformation profile that splits a degenerate cluster.

    Sweeps single cosine/sine frequencies up to ``max_degree`` (sorted by
    frequency length) and then seeded random combinations, keeping the first
    candidate whose quaternionic rates separate by more than
    ``gap_threshold`` AND whose verification solve at ``t_verify`` shows
    every descendant cluster with strictly smaller quaternionic multiplicity.

    Raises SplitSearchError, carrying the full rate table, if every candidate
    fails (the guarantee of splittability is only over all possible profiles;
    a bounded sweep can come up empty).
    """
    if cluster.p_h < 2:
        raise ValueError("cluster is already quaternionically simple")
    if position_tol is None:
        position_tol = 5.0 * t_verify**2
    table = []
    tried = 0
    for factor in candidate_factors(max_degree, n_random=n_random, seed=seed):
        tried += 1
        report = perturbation_matrix(cluster, factor)
        table.append((factor.describe(), report.min_gap))
        if report.quaternionic_rates is None or report.min_gap <= gap_threshold:
            continue
        try:
            ok, post, max_ph, max_err = _verify_split(
                cluster, factor, report, t_verify, position_tol
            )
        except (ClusterNotIsolatedError, PositiveDefiniteError):
            continue
        if not ok:
            continue
        return SplitCertificate(
            lam=cluster.lam,
            p_c_before=cluster.p_c,
            p_h_before=cluster.p_h,
            factor_label=factor.describe(),
            factor=factor.to_json_dict(),
            rates=[float(r) for r in report.rates],
            quaternionic_rates=[float(r) for r in report.quaternionic_rates],
            rate_gap=report.min_gap,
            t_verify=float(t_verify),
            post_clusters=post,
            max_p_h_after=max_ph,
            max_position_error=max_err,
            candidates_tried=tried,
        )
    raise SplitSearchError(
        f"no candidate up to degree {max_degree} split the cluster at {cluster.lam}; "
        f"try a larger degree",
        rate_table=table,
    )


@dataclass
class GenericityTrial:
    index: int
    f_ref: str
    lambdas: list[float]
    mult_c: list[int]
    mult_h: list[int]
    all_simple: bool
    error: str | None = None

    def to_json_dict(self):
        return {
            "index": self.index,
            "f_ref": self.f_ref,
            "lambdas": [float(v) for v in self.lambdas],
            "mult_c": [int(v) for v in self.mult_c],
            "mult_h": [int(v) for v in self.mult_h],
            "all_simple": bool(self.all_simple),
            "error": self.error,
        }


@dataclass
class GenericityReport:
    """Multiplicity statistics of the lowest positive clusters over random trials."""

    delta: tuple[int, int, int]
    N: int
    t: float
    degree: int
    amplitude: float
    seed: int
    trials: int
    m_clusters: int
    trial_rows: list[GenericityTrial] = field(default_factory=list)
    pattern_counts: dict = field(default_factory=dict)
    fraction_all_simple: float | None = None
    n_failures: int = 0

    def to_json_dict(self):
        return {
            "delta": list(self.delta),
            "N": self.N,
            "t": float(self.t),
            "degree": self.degree,
            "amplitude": float(self.amplitude),
            "seed": self.seed,
            "trials": self.trials,
            "m_clusters": self.m_clusters,
            "trial_rows": [row.to_json_dict() for row in self.trial_rows],
            "pattern_counts": dict(sorted(self.pattern_counts.items())),
            "fraction_all_simple": self.fraction_all_simple,
            "n_failures": self.n_failures,
        }

    @classmethod
    def from_json_dict(cls, doc):
        rows = [
            GenericityTrial(
                index=r["index"],
                f_ref=r["f_ref"],
                lambdas=[float(v) for v in r["lambdas"]],
                mult_c=[int(v) for v in r["mult_c"]],
                mult_h=[int(v) for v in r["mult_h"]],
                all_simple=bool(r["all_simple"]),
                error=r["error"],
            )
            for r in doc["trial_rows"]
        ]
        return cls(
            delta=tuple(doc["delta"]),
            N=int(doc["N"]),
            t=float(doc["t"]),
            degree=int(doc["degree"]),
            amplitude=float(doc["amplitude"]),
            seed=int(doc["seed"]),
            trials=int(doc["trials"]),
            m_clusters=int(doc["m_clusters"]),
            trial_rows=rows,
            pattern_counts=dict(doc["pattern_counts"]),
            fraction_all_simple=doc["fraction_all_simple"],
            n_failures=int(doc["n_failures"]),
        )

    def csv_rows(self):
        rows = [("trial", "f_ref", "all_simple", "mult_h_pattern", "error")]
        for r in self.trial_rows:
            rows.append(
                (
                    str(r.index),
                    r.f_ref,
                    "1" if r.all_simple else "0",
                    ",".join(str(h) for h in r.mult_h),
                    r.error or "",
                )
            )
        return rows


def _positive_clusters(result, m_clusters, kernel_tol=KERNEL_TOL):
    out = [c for c in result.clusters if c.lam > kernel_tol]
    return out[:m_clusters]


def genericity_scan(
    delta,
    trials,
    t,
    N,
    degree,
    amplitude,
    seed,
    m_clusters=3,
    workers=1,
):
    """Monte Carlo over random factors: how often do the first ``m_clusters``
    positive clusters come out quaternionically simple?

    Deterministic given the seed (trial factors come from spawned seed
    sequences, aggregation is ordered by trial index regardless of worker
    scheduling).  Per-trial solver failures are recorded, not fatal.
    """
    trials = int(trials)
    if trials < 0:
        raise ValueError("trials must be >= 0")
    spin = delta if isinstance(delta, SpinStructure) else SpinStructure(tuple(delta))
    report = GenericityReport(
        delta=spin.delta,
        N=int(N),
        t=float(t),
        degree=int(degree),
        amplitude=float(amplitude),
        seed=int(seed),
        trials=trials,
        m_clusters=int(m_clusters),
    )
    if trials == 0:
        return report
    ms = build_mode_set(N, spin)
    children = np.random.SeedSequence(int(seed)).spawn(trials)

    def run_trial(i):
        label = f"random:{int(seed)}:{i}"
        factor = random_factor(children[i], degree, amplitude, label=label)
        try:
            res = deformed_spectrum(
                factor, t, ms, keep_vectors=False, keep_B=False
            )
        except (PositiveDefiniteError, RuntimeError) as exc:
            return GenericityTrial(i, label, [], [], [], False, error=str(exc))
        top = _positive_clusters(res, m_clusters)
        mult_h = [c.mult_h for c in top]
        return GenericityTrial(
            i,
            label,
            [c.lam for c in top],
            [c.mult_c for c in top],
            mult_h,
            all_simple=len(top) >= m_clusters and all(h == 1 for h in mult_h),
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_trial, range(trials)))
    else:
        rows = [run_trial(i) for i in range(trials)]
    rows.sort(key=lambda r: r.index)
    report.trial_rows = rows
    ok_rows = [r for r in rows if r.error is None]
    report.n_failures = trials - len(ok_rows)
    for r in ok_rows:
        key = ",".join(str(h) for h in r.mult_h)
        report.pattern_counts[key] = report.pattern_counts.get(key, 0) + 1
    report.fraction_all_simple = (
        sum(1 for r in ok_rows if r.all_simple) / trials if trials else None
    )
    return report


@dataclass
class SimplicityReport:
    """Outcome of the distinctness check on the first k eigenvalues per side."""

    delta: tuple[int, int, int]
    N: int
    t: float
    k: int
    f_ref: str
    passed: bool
    reason: str | None
    offending: list[float] | None
    kernel_dim: int
    positive: list[float]
    negative: list[float]

    def to_json_dict(self):
        return {
            "delta": list(self.delta),
            "N": self.N,
            "t": float(self.t),
            "k": self.k,
            "f_ref": self.f_ref,
            "passed": bool(self.passed),
            "reason": self.reason,
            "offending": None
            if self.offending is None
            else [float(v) for v in self.offending],
            "kernel_dim": self.kernel_dim,
            "positive": [float(v) for v in self.positive],
            "negative": [float(v) for v in self.negative],
        }

    @classmethod
    def from_json_dict(cls, doc):
        return cls(
            delta=tuple(doc["delta"]),
            N=int(doc["N"]),
            t=float(doc["t"]),
            k=int(doc["k"]),
            f_ref=doc["f_ref"],
            passed=bool(doc["passed"]),
            reason=doc["reason"],
            offending=None
            if doc["offending"] is None
            else [float(v) for v in doc["offending"]],
            kernel_dim=int(doc["kernel_dim"]),
            positive=[float(v) for v in doc["positive"]],
            negative=[float(v) for v in doc["negative"]],
        )


def _enumerate_side(clusters, k):
    """First k eigenvalues with quaternionic repetition, plus a per-slot map of
    the cluster quaternionic multiplicity."""
    values, mults = [], []
    for c in clusters:
        for _ in range(c.mult_h):
            values.append(c.lam)
            mults.append(c.mult_h)
            if len(values) == k:
                return values, mults
    return values, mults


def simplicity_certificate(delta, factor, t, k, N, tau_rel=None):
    """Check that the lowest k eigenvalues on each side of zero are simple.

    Enumerates eigenvalues with quaternionic multiplicity; the certificate
    passes when the first k entries on each side are pairwise distinct (their
    clusters all simple) and the kernel is empty.  The trivial spin structure
    always fails the kernel condition: its harmonic spinors persist under
    every conformal deformation.

    Raises ValueError when k reaches beyond the trustworthy part of the
    truncated spectrum.
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    spin = delta if isinstance(delta, SpinStructure) else SpinStructure(tuple(delta))
    ms = build_mode_set(N, spin)
    res = deformed_spectrum(factor, t, ms, tau_rel=tau_rel, keep_vectors=False, keep_B=False)
    kernel_dim = int(np.sum(np.abs(res.eigenvalues) <= KERNEL_TOL))
    pos = [c for c in res.clusters if c.lam > KERNEL_TOL]
    neg = [c for c in reversed(res.clusters) if c.lam < -KERNEL_TOL]
    pos_vals, pos_mults = _enumerate_side(pos, k)
    neg_vals, neg_mults = _enumerate_side(neg, k)
    if len(pos_vals) < k or len(neg_vals) < k:
        raise ValueError(f"fewer than k={k} eigenvalues available per side")
    trust = (N - 0.5) * float(np.exp(-abs(t) * factor.sup_abs()))
    if pos_vals[-1] >= trust or abs(neg_vals[-1]) >= trust:
        raise ValueError(
            f"k={k} reaches past the trustworthy truncation radius {trust:.3f}"
        )

    def result(passed, reason=None, offending=None):
        return SimplicityReport(
            delta=spin.delta,
            N=int(N),
            t=float(t),
            k=k,
            f_ref=factor.describe(),
            passed=passed,
            reason=reason,
            offending=offending,
            kernel_dim=kernel_dim,
            positive=pos_vals,
            negative=neg_vals,
        )

    if kernel_dim > 0:
        return result(False, reason="kernel")
    for vals, mults in ((pos_vals, pos_mults), (neg_vals, neg_mults)):
        for i in range(k):
            if mults[i] != 1:
                return result(
                    False, reason="pair", offending=[vals[i], vals[i]]
                )
    return result(True)
