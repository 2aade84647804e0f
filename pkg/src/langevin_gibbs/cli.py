"""Command line experiment runner.

Subcommands: ``analyze``, ``covariance``, ``simulate``, ``typicality``,
``growth``.  Exit codes: 0 success, 2 input error, 3 mode mismatch (wrong
sign of alpha for the subcommand), 4 statistical inconsistency, 5 numerical
instability.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import gauss
from .config import ConfigError, ExperimentConfig, load_config
from .model import Hamiltonian, ModelError, random_spd
from .sde import (
    IntegratorConfig,
    NumericalInstability,
    empirical_vs_exact,
    simulate_ensemble,
)
from .structure import (
    DET_TOL,
    analyze,
    hadamard_flagged,
    is_degenerate,
    krylov_subspace,
    sigma_det_ratio,
)

EXIT_OK, EXIT_INPUT, EXIT_MODE, EXIT_STATS, EXIT_UNSTABLE = 0, 2, 3, 4, 5
Z_LIMIT = 5.0

log = logging.getLogger("langevin_gibbs")


class ModeMismatch(Exception):
    pass


class Output:
    """Routes a named artifact to ``out_dir`` (atomically) or to stdout."""

    def __init__(self, out_dir: str | None, stream=None):
        self.out_dir = out_dir
        self.stream = stream or sys.stdout

    def emit(self, name: str, text: str) -> None:
        if self.out_dir is None:
            self.stream.write(text)
            return
        os.makedirs(self.out_dir, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            os.replace(tmp, os.path.join(self.out_dir, name))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.stream.write(f"wrote {os.path.join(self.out_dir, name)}\n")


def _csv(header: list[str], columns: list[str], rows, footer: list[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(f"{x:.17g}" if isinstance(x, float) else str(x) for x in row) + "\n")
    for line in footer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def _record_line(record: dict) -> str:
    clean = {k: (v.item() if isinstance(v, np.generic) else v) for k, v in record.items()}
    return "RECORD " + json.dumps(clean, sort_keys=True) + "\n"


def _t_end(cfg: ExperimentConfig, decay: float | None) -> float:
    if cfg.run.t_end == "auto":
        if decay is None:
            raise ConfigError("t_end: auto needs alpha > 0; give an explicit t_end")
        return gauss.DECAY_TIMES * decay
    return float(cfg.run.t_end)


def cmd_analyze(cfg: ExperimentConfig, out: Output) -> int:
    an = analyze(cfg.spec)
    rec = an.record()
    text = [
        f"N                      {rec['N']}",
        f"distinguished n        {rec['n']}",
        f"Krylov dimension d     {rec['d']}",
        f"dim L_minus            {rec['dim_L_minus']}",
        f"dim L_zero             {rec['dim_L_zero']}",
        f"det Sigma(V) ratio     {rec['det_sigma_ratio']:.6e}"
        f"  ({'degenerate' if rec['det_sigma_degenerate'] else 'non-degenerate'})",
        f"spectral abscissa A'   {rec['spectral_abscissa']:.6e}",
        f"min retained residual  {rec['min_retained_residual']:.3e}",
        "first discarded resid  " + ("none" if rec["discarded_residual"] is None
                                     else f"{rec['discarded_residual']:.3e}"),
    ]
    out.stream.write("\n".join(text) + "\n" + _record_line(rec))
    if out.out_dir is not None:
        out.emit("analyze.json", json.dumps(rec, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_covariance(cfg: ExperimentConfig, out: Output) -> int:
    spec = cfg.spec
    if spec.alpha <= 0:
        raise ModeMismatch("covariance needs alpha > 0; use the 'growth' subcommand for alpha = 0")
    an = analyze(spec)
    r = an.restricted
    decay = gauss.decay_time(r)
    t_end = _t_end(cfg, decay)
    limit_cov = gauss.stationary_state(spec, r).covariance
    limit_e = gauss.stationary_energy(spec, r)
    rows = []
    for t in cfg.checkpoint_times(t_end):
        C = gauss.covariance_at(spec, r, t).covariance
        dist = float(np.linalg.norm(C - limit_cov))
        rows.append((t, dist, gauss.mean_energy_at(spec, r, cfg.psi0, t), limit_e))
    header = [f"langevin-gibbs covariance N={spec.N} n={spec.n} alpha={spec.alpha} sigma={spec.sigma}",
              f"dim_L_minus={r.dim} decay_time={decay:.17g} limit_frobenius_norm={np.linalg.norm(limit_cov):.17g}"]
    out.emit("covariance.csv", _csv(header, ["t", "frobenius_distance_to_limit", "mean_energy", "limit_energy"], rows))
    return EXIT_OK


def _fit(ts, ys):
    slope, intercept = np.polyfit(np.asarray(ts, float), np.asarray(ys, float), 1)
    return float(slope), float(intercept)


def _run_ensemble(cfg: ExperimentConfig, t_end: float, seed: int, scheme: str | None = None):
    run = cfg.run
    icfg = IntegratorConfig(float(run.dt), t_end, tuple(cfg.checkpoint_times(t_end)), scheme or run.scheme)
    return icfg, simulate_ensemble(cfg.spec, cfg.psi0, icfg, int(run.M), seed, workers=int(run.workers))


def cmd_simulate(cfg: ExperimentConfig, out: Output, seed: int) -> int:
    spec = cfg.spec
    an = analyze(spec)
    decay = gauss.decay_time(an.restricted) if spec.alpha > 0 else None
    t_end = _t_end(cfg, decay)
    icfg, stats = _run_ensemble(cfg, t_end, seed)
    report = empirical_vs_exact(stats, spec, an.restricted)
    rows = [(r.t, r.emp_mean_energy, r.stderr, r.exact_mean_energy, r.cov_frobenius_gap) for r in report]
    header = [f"seed={seed}",
              f"langevin-gibbs simulate N={spec.N} n={spec.n} alpha={spec.alpha} sigma={spec.sigma} "
              f"M={stats.M} dt={icfg.dt} scheme={icfg.scheme.value} backend={stats.backend} "
              f"max_checkpoint_snap={icfg.max_snap:.3g}"]
    zs = [r.z for r in report]
    footer = ["z_scores=" + " ".join(f"{z:.3f}" for z in zs),
              "l0_mean_gap_max={:.3e} l0_variance_max={:.3e}".format(
                  max(r.l0_mean_gap for r in report), max(r.l0_variance for r in report))]
    if spec.alpha == 0:
        sel = [r for r in report if r.t >= t_end / 4]
        if len(sel) >= 2:
            slope, icpt = _fit([r.t for r in sel], [r.emp_mean_energy for r in sel])
            want = spec.sigma**2 / 2
            footer.append(f"slope_check slope={slope:.6g} intercept={icpt:.6g} expected={want:.6g} "
                          f"relative_error={abs(slope - want) / want:.3g} window=[{sel[0].t:g},{sel[-1].t:g}]")
    out.emit("simulate.csv", _csv(header, ["t", "emp_mean_energy", "stderr", "exact_mean_energy",
                                           "cov_frobenius_gap"], rows, footer))
    worst = max(abs(z) for z in zs)
    if worst > Z_LIMIT:
        log.error("statistical inconsistency: max |z| = %.3g > %g", worst, Z_LIMIT)
        return EXIT_STATS
    return EXIT_OK


def cmd_growth(cfg: ExperimentConfig, out: Output, seed: int, empirical: bool) -> int:
    spec = cfg.spec
    if spec.alpha != 0:
        raise ModeMismatch("growth needs alpha = 0; use 'covariance' or 'simulate' for alpha > 0")
    t_end = _t_end(cfg, None)
    times = cfg.checkpoint_times(t_end)
    exact = [gauss.energy_growth_alpha0(spec, t, cfg.psi0) for t in times]
    columns = ["t", "exact_EH", "exact_ET", "exact_EU"]
    rows = [[t, EH, ET, EU] for t, (ET, EU, EH) in zip(times, exact)]
    slope, icpt = _fit(times, [e[2] for e in exact])
    footer = [f"exact_fit slope={slope:.17g} intercept={icpt:.17g} expected_slope={spec.sigma**2 / 2:.17g}"]
    header = [f"langevin-gibbs growth N={spec.N} n={spec.n} alpha=0 sigma={spec.sigma}"]
    if empirical:
        icfg, stats = _run_ensemble(cfg, t_end, seed, scheme="semi-implicit")
        columns.append("emp_EH")
        for row, e in zip(rows, stats.energy_mean):
            row.append(float(e))
        sel = [i for i, t in enumerate(stats.times) if t >= t_end / 4]
        if len(sel) >= 2:
            es, ei = _fit(stats.times[sel], stats.energy_mean[sel])
            footer.append(f"empirical_fit slope={es:.17g} intercept={ei:.17g} "
                          f"relative_error={abs(es - spec.sigma**2 / 2) / (spec.sigma**2 / 2):.3g}")
        header.insert(0, f"seed={seed}")
        header.append(f"M={stats.M} dt={icfg.dt} scheme={icfg.scheme.value} backend={stats.backend}")
    out.emit("growth.csv", _csv(header, columns, rows, footer))
    return EXIT_OK


def typicality(N: int, samples: int, seed: int, n: int = 1, conditioning: float = 0.1) -> dict:
    """Count random SPD couplings whose Sigma(V) is numerically singular."""
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    if not 1 <= n <= N:
        raise ConfigError(f"n must be in [1, {N}]")
    ratios, dims = [], []
    for i in range(samples):
        h = random_spd(N, [seed, i], conditioning)
        ratios.append(sigma_det_ratio(h, n))
        dims.append(krylov_subspace(h, n).d)
    ratios = np.array(ratios)
    degenerate = int(sum(d < N for d in dims))
    counter = {}
    for name, V in [("identity", np.eye(N)), ("diagonal", np.diag(np.arange(1.0, N + 1)))]:
        h = Hamiltonian(V)
        counter[name] = {"det_ratio": sigma_det_ratio(h, n), "d": krylov_subspace(h, n).d,
                         "degenerate": is_degenerate(h, n), "hadamard_flagged": hadamard_flagged(h, n)}
    return {
        "N": N,
        "n": n,
        "samples": samples,
        "seed": seed,
        "conditioning": conditioning,
        "degenerate": degenerate,
        "fraction": degenerate / samples,
        "hadamard_flagged": int(np.sum(ratios < DET_TOL)),
        "min_det_ratio": float(ratios.min()),
        "threshold": DET_TOL,
        "counterexamples": counter,
    }


def cmd_typicality(out: Output, N: int, samples: int, seed: int, n: int, conditioning: float) -> int:
    rec = typicality(N, samples, seed, n, conditioning)
    lines = [f"random SPD samples     {samples} (N={N}, n={n}, seed={seed})",
             f"degenerate det Sigma   {rec['degenerate']} (fraction {rec['fraction']:.3g})",
             f"min |det| ratio        {rec['min_det_ratio']:.3e}; "
             f"{rec['hadamard_flagged']} below {DET_TOL:g}"]
    for name, c in rec["counterexamples"].items():
        lines.append(f"counterexample {name:9s} d={c['d']} ratio {c['det_ratio']:.3e} -> "
                     f"{'degenerate' if c['degenerate'] else 'NOT degenerate'}")
    out.stream.write("\n".join(lines) + "\n" + _record_line({k: v for k, v in rec.items()
                                                             if k != "counterexamples"}))
    if out.out_dir is not None:
        out.emit("typicality.json", json.dumps(rec, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (YAML)")
    common.add_argument("--out", help="output directory (default: config output.dir, else stdout)")
    common.add_argument("--seed", type=int, help="root seed, overrides the config")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="langevin-gibbs", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("analyze", "invariant subspaces and the det Sigma(V) test"),
                        ("covariance", "exact convergence of C(t) to the Gibbs covariance"),
                        ("simulate", "Monte Carlo ensemble against the exact law")]:
        sub.add_parser(name, parents=[common], help=help_)
    g = sub.add_parser("growth", parents=[common], help="alpha = 0 energy growth")
    g.add_argument("--empirical", action="store_true", help="add a Monte Carlo column")
    t = sub.add_parser("typicality", parents=[common], help="sample random couplings for degeneracy")
    t.add_argument("--N", type=int, default=None)
    t.add_argument("--samples", type=int, default=None)
    t.add_argument("--n", type=int, default=None, help="distinguished index (1-based)")
    t.add_argument("--conditioning", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "typicality":
            opts, out_dir, seed = {}, args.out, 0
            if args.config:
                cfg = load_config(args.config)
                opts = dict(cfg.extra.get("typicality") or {})
                out_dir = args.out or cfg.out_dir
                seed = int(opts.get("seed", cfg.run.seed))
            if args.seed is not None:
                seed = args.seed
            return cmd_typicality(
                Output(out_dir),
                N=args.N or int(opts.get("N", 4)),
                samples=args.samples or int(opts.get("samples", 1000)),
                seed=seed,
                n=args.n or int(opts.get("n", 1)),
                conditioning=args.conditioning or float(opts.get("conditioning", 0.1)),
            )
        if not args.config:
            raise ConfigError(f"{args.command} needs --config")
        cfg = load_config(args.config)
        seed = int(cfg.run.seed) if args.seed is None else args.seed
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        out = Output(args.out or cfg.out_dir)
        if args.command == "analyze":
            return cmd_analyze(cfg, out)
        if args.command == "covariance":
            return cmd_covariance(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, seed)
        if args.command == "growth":
            emp = args.empirical or bool((cfg.extra.get("growth") or {}).get("empirical", False))
            return cmd_growth(cfg, out, seed, emp)
    except (ConfigError, ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModeMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODE
    except (NumericalInstability, gauss.ExpmOverflow) as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
