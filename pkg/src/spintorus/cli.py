"""Command line interface: spectra, rates, splitting searches, validation.

Exit codes: 0 success, 1 internal failure or failed validation suite,
2 positive-definiteness failure of the deformation weight, 3 invalid input
(bad config, malformed factor file, out-of-range cluster index, violated
precondition).

Configuration can come from flags or a single JSON config file
(``--config``); explicit flags override file entries.  JSON artifacts are
written with sorted keys so identical configurations produce byte-identical
output.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import eigensolver
from .conformal import ConformalFactor, deformed_spectrum, flat_spectrum
from .errors import PositiveDefiniteError, SplitSearchError
from .experiments import genericity_scan, random_factor, simplicity_certificate, split_search
from .perturbation import extract_cluster, fd_check, perturbation_matrix
from .torus_dirac import SpinStructure, build_mode_set, closed_form_spectrum, spectrum_csv_rows

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NOT_PD = 2
EXIT_BAD_INPUT = 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated run parameters shared by the subcommands."""

    delta: tuple[int, int, int] = (0, 0, 0)
    N: int = 3
    t: float = 0.0
    t_grid: list[float] | None = None
    factor_kind: str = "zero"  # zero|const|cos|file|json|random
    factor_arg: object = None
    seed: int = 2024
    trials: int = 50
    degree: int = 2
    amplitude: float = 0.3
    m_clusters: int = 3
    k: int = 3
    cluster_index: int | None = None
    cluster_lambda: float | None = None
    max_degree: int = 2
    tau_degenerate: float = eigensolver.TAU_REL_DEGENERATE
    tau_split: float = eigensolver.TAU_REL_SPLIT
    workers: int = 1
    out: str | None = None
    format: str = "json"
    extra: dict = field(default_factory=dict)

    def validate(self):
        if not (1 <= self.N <= 8):
            raise ConfigError(f"N must lie in [1, 8], got {self.N}")
        if any(d not in (0, 1) for d in self.delta) or len(self.delta) != 3:
            raise ConfigError(f"delta must lie in {{0,1}}^3, got {self.delta}")
        if self.tau_degenerate <= 0 or self.tau_split <= 0:
            raise ConfigError("cluster tolerances must be positive")
        if not np.isfinite(self.t):
            raise ConfigError("t must be finite")
        if self.t_grid is not None and (
            len(self.t_grid) < 1 or any(not np.isfinite(t) for t in self.t_grid)
        ):
            raise ConfigError("t grid entries must be finite")
        if self.trials < 0:
            raise ConfigError("trials must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"unknown format {self.format!r}")
        return self

    def spin_structure(self):
        return SpinStructure(tuple(self.delta))

    def build_factor(self):
        kind, arg = self.factor_kind, self.factor_arg
        if kind == "zero":
            return ConformalFactor.zero()
        if kind == "const":
            return ConformalFactor.constant(float(arg))
        if kind == "cos":
            parts = [p for p in str(arg).split(",") if p]
            if len(parts) not in (3, 4):
                raise ConfigError("--f-cos expects m1,m2,m3[,amplitude]")
            m = tuple(int(p) for p in parts[:3])
            amp = float(parts[3]) if len(parts) == 4 else 1.0
            return ConformalFactor.cosine(m, amp)
        if kind == "json":
            try:
                doc = json.loads(arg)
                return ConformalFactor.from_json_dict(doc, label="inline")
            except json.JSONDecodeError as exc:
                raise ConfigError(f"inline factor is not valid JSON: {exc}") from exc
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"inline factor has a malformed schema: {exc}") from exc
        if kind == "file":
            try:
                with open(arg) as fh:
                    doc = json.load(fh)
                return ConformalFactor.from_json_dict(doc, label=f"file:{arg}")
            except FileNotFoundError as exc:
                raise ConfigError(f"factor file not found: {arg}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"factor file is not valid JSON: {exc}") from exc
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"factor file has a malformed schema: {exc}") from exc
        if kind == "random":
            parts = [p for p in str(arg).split(",") if p]
            if len(parts) != 3:
                raise ConfigError("--f-random expects seed,degree,amplitude")
            seed, degree, amp = int(parts[0]), int(parts[1]), float(parts[2])
            return random_factor(seed, degree, amp, label=f"random:{seed}:d={degree},a={amp!r}")
        raise ConfigError(f"unknown factor kind {kind!r}")


def dump_json(doc, path=None):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def dump_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)


def _write_artifact(cfg, json_doc, csv_rows=None):
    if cfg.out is None:
        return
    if cfg.format == "json" or csv_rows is None:
        dump_json(json_doc, cfg.out)
    else:
        dump_csv(csv_rows, cfg.out)


# ----------------------------------------------------------------- parsing


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--delta", help="spin structure as a,b,c (entries 0 or 1)")
    parser.add_argument("--N", type=int, help="truncation order (1..8)")
    parser.add_argument("--t", type=float, help="deformation parameter")
    parser.add_argument("--t-grid", dest="t_grid", help="comma separated t values")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--tau-degenerate", dest="tau_degenerate", type=float)
    parser.add_argument("--tau-split", dest="tau_split", type=float)
    parser.add_argument("--workers", type=int, help="parallel trial workers")
    parser.add_argument("--out", help="artifact output path")
    parser.add_argument("--format", choices=("json", "csv"), help="artifact format")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--f-const", dest="f_const", type=float, help="constant factor")
    group.add_argument("--f-cos", dest="f_cos", help="cosine factor m1,m2,m3[,amp]")
    group.add_argument("--f-file", dest="f_file", help="factor JSON file")
    group.add_argument("--f-json", dest="f_json", help="inline factor JSON")
    group.add_argument("--f-random", dest="f_random", help="random factor seed,degree,amp")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spintorus",
        description="Dirac spectra of flat spin 3-tori under conformal deformation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="deformed (or flat) spectrum")
    _add_common(p)

    p = sub.add_parser("oracle", help="closed-form flat spectrum table")
    _add_common(p)
    p.add_argument("--lambda-max", dest="lambda_max", type=float, default=2.5)

    p = sub.add_parser("perturb", help="first-order cluster rates + fd check")
    _add_common(p)
    p.add_argument("--cluster-index", dest="cluster_index", type=int)
    p.add_argument("--cluster-lambda", dest="cluster_lambda", type=float)

    p = sub.add_parser("split-search", help="search for a splitting factor")
    _add_common(p)
    p.add_argument("--cluster-index", dest="cluster_index", type=int)
    p.add_argument("--cluster-lambda", dest="cluster_lambda", type=float)
    p.add_argument("--max-degree", dest="max_degree", type=int)

    p = sub.add_parser("genericity", help="random-deformation multiplicity scan")
    _add_common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--m-clusters", dest="m_clusters", type=int)

    p = sub.add_parser("simplicity", help="first-k distinctness certificate")
    _add_common(p)
    p.add_argument("--k", type=int)

    p = sub.add_parser("validate", help="run the cross-module invariant suite")
    _add_common(p)

    return parser


def load_config(args):
    base = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = RunConfig()
    known = set(cfg.__dataclass_fields__)
    for key, val in base.items():
        if key == "delta":
            cfg.delta = tuple(int(x) for x in val)
        elif key in ("factor_kind", "factor_arg"):
            setattr(cfg, key, val)
        elif key in known:
            setattr(cfg, key, val)
        else:
            cfg.extra[key] = val

    def take(name, cast=None):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, cast(val) if cast else val)

    if getattr(args, "delta", None) is not None:
        cfg.delta = SpinStructure.parse(args.delta).delta
    take("N", int)
    take("t", float)
    if getattr(args, "t_grid", None) is not None:
        cfg.t_grid = [float(p) for p in str(args.t_grid).split(",") if p]
    take("seed", int)
    take("trials", int)
    take("degree", int)
    take("amplitude", float)
    take("m_clusters", int)
    take("k", int)
    take("cluster_index", int)
    take("cluster_lambda", float)
    take("max_degree", int)
    take("tau_degenerate", float)
    take("tau_split", float)
    take("workers", int)
    take("out")
    take("format")
    for kind in ("const", "cos", "file", "json", "random"):
        val = getattr(args, f"f_{kind}", None)
        if val is not None:
            cfg.factor_kind = kind
            cfg.factor_arg = val
    cfg.delta = tuple(int(x) for x in cfg.delta)
    return cfg.validate()


# ------------------------------------------------------------- subcommands


def cmd_spectrum(cfg):
    ms = build_mode_set(cfg.N, cfg.spin_structure())
    factor = cfg.build_factor()
    if cfg.t_grid is not None:
        snapshots = [
            deformed_spectrum(factor, t, ms, tau_rel=None if t else cfg.tau_degenerate)
            for t in cfg.t_grid
        ]
        family = eigensolver.match_curves(snapshots, rate_bound=factor.sup_abs())
        doc = family.to_json_dict()
        _write_artifact(cfg, doc, family.csv_rows())
        print(
            f"tracked {family.trajectories.shape[0]} trajectories over "
            f"{len(cfg.t_grid)} deformation steps"
            + (" (ambiguous matches present)" if family.ambiguous else "")
        )
        return EXIT_OK
    tau = cfg.tau_degenerate if cfg.t == 0 or factor.is_zero else cfg.tau_split
    res = deformed_spectrum(factor, cfg.t, ms, tau_rel=tau, keep_vectors=False)
    doc = res.to_json_dict()
    _write_artifact(cfg, doc, res.csv_rows())
    print(f"delta={cfg.spin_structure()} N={cfg.N} t={cfg.t} f={factor.describe()}")
    print(f"{'lambda':>14}  {'mult_C':>6}  {'mult_H':>6}")
    for c in res.clusters:
        print(f"{c.lam:>14.8f}  {c.mult_c:>6}  {c.mult_h:>6}")
    return EXIT_OK


def cmd_oracle(cfg, lambda_max):
    lines = closed_form_spectrum(cfg.spin_structure(), lambda_max)
    doc = {
        "delta": list(cfg.delta),
        "lambda_max": float(lambda_max),
        "lines": [
            {"lambda": line.lam, "mult_c": line.mult_c, "mult_h": line.mult_h}
            for line in lines
        ],
    }
    _write_artifact(cfg, doc, spectrum_csv_rows(lines))
    print(f"{'lambda':>14}  {'mult_C':>6}  {'mult_H':>6}")
    for line in lines:
        print(f"{line.lam:>14.8f}  {line.mult_c:>6}  {line.mult_h:>6}")
    return EXIT_OK


def _select_cluster(cfg, ms):
    res = flat_spectrum(ms)
    cluster = extract_cluster(
        res, ms, lam=cfg.cluster_lambda, index=cfg.cluster_index
    )
    return cluster


def cmd_perturb(cfg):
    ms = build_mode_set(cfg.N, cfg.spin_structure())
    factor = cfg.build_factor()
    if cfg.cluster_index is None and cfg.cluster_lambda is None:
        raise ConfigError("perturb needs --cluster-index or --cluster-lambda")
    cluster = _select_cluster(cfg, ms)
    report = perturbation_matrix(cluster, factor)
    t_grid = cfg.t_grid or [1e-2, 1e-3]
    fd = fd_check(cluster, factor, sorted(t_grid, reverse=True))
    doc = report.to_json_dict()
    doc["fd"] = fd.to_json_dict()
    _write_artifact(cfg, doc)
    print(f"cluster lambda={cluster.lam} p_C={cluster.p_c} p_H={cluster.p_h}")
    print("rates:", " ".join(f"{r:.6e}" for r in report.rates))
    if report.quaternionic_rates is not None:
        print("quaternionic rates:", " ".join(f"{r:.6e}" for r in report.quaternionic_rates))
    print(f"min gap: {report.min_gap:.6e}")
    print(f"{'t':>10}  {'max mismatch':>14}")
    for t, m in zip(fd.t_values, fd.mismatches):
        print(f"{t:>10.2e}  {m:>14.6e}")
    print(f"observed order: {fd.order:.3f}")
    return EXIT_OK


def cmd_split_search(cfg):
    ms = build_mode_set(cfg.N, cfg.spin_structure())
    if cfg.cluster_index is None and cfg.cluster_lambda is None:
        raise ConfigError("split-search needs --cluster-index or --cluster-lambda")
    cluster = _select_cluster(cfg, ms)
    cert = split_search(
        cluster,
        cfg.max_degree,
        t_verify=cfg.t if cfg.t else 0.05,
        seed=cfg.seed,
    )
    _write_artifact(cfg, cert.to_json_dict())
    print(
        f"split lambda={cert.lam} (p_H {cert.p_h_before} -> max {cert.max_p_h_after}) "
        f"with f = {cert.factor_label}; rate gap {cert.rate_gap:.4e}"
    )
    for lam, mc, mh in cert.post_clusters:
        print(f"  sub-cluster at {lam:.8f}: mult_C={mc} mult_H={mh}")
    return EXIT_OK


def cmd_genericity(cfg):
    report = genericity_scan(
        cfg.spin_structure(),
        cfg.trials,
        cfg.t,
        cfg.N,
        cfg.degree,
        cfg.amplitude,
        cfg.seed,
        m_clusters=cfg.m_clusters,
        workers=cfg.workers,
    )
    _write_artifact(cfg, report.to_json_dict(), report.csv_rows())
    frac = report.fraction_all_simple
    print(
        f"delta={cfg.spin_structure()} trials={report.trials} t={report.t} "
        f"degree={report.degree} amplitude={report.amplitude}"
    )
    if frac is not None:
        print(f"fraction with first {report.m_clusters} positive clusters simple: {frac:.3f}")
    for pattern, count in sorted(report.pattern_counts.items()):
        print(f"  mult_H pattern [{pattern}]: {count}")
    if report.n_failures:
        print(f"  failed trials: {report.n_failures}")
    return EXIT_OK


def cmd_simplicity(cfg):
    factor = cfg.build_factor()
    report = simplicity_certificate(
        cfg.spin_structure(), factor, cfg.t, cfg.k, cfg.N
    )
    _write_artifact(cfg, report.to_json_dict())
    verdict = "passes" if report.passed else f"fails ({report.reason})"
    print(f"simplicity certificate k={report.k}: {verdict}")
    return EXIT_OK


# ------------------------------------------------------------- validation


def run_validation_suite(seed=2024):
    """Cross-module invariant suite used by the ``validate`` subcommand."""
    from . import validate as _validate

    return _validate.run_all(seed=seed)


def cmd_validate(cfg):
    checks = run_validation_suite(seed=cfg.seed)
    all_passed = all(c["passed"] for c in checks)
    doc = {"checks": checks, "all_passed": all_passed}
    text = dump_json(doc, cfg.out)
    print(text, end="")
    return EXIT_OK if all_passed else EXIT_FAILURE


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "spectrum":
            return cmd_spectrum(cfg)
        if args.command == "oracle":
            return cmd_oracle(cfg, args.lambda_max)
        if args.command == "perturb":
            return cmd_perturb(cfg)
        if args.command == "split-search":
            return cmd_split_search(cfg)
        if args.command == "genericity":
            return cmd_genericity(cfg)
        if args.command == "simplicity":
            return cmd_simplicity(cfg)
        if args.command == "validate":
            return cmd_validate(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except PositiveDefiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_PD
    except SplitSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for label, gap in exc.rate_table:
            print(f"  {label}: min rate gap {gap:.3e}", file=sys.stderr)
        return EXIT_FAILURE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
