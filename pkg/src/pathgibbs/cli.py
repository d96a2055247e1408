"""Command line driver: ``pathgibbs <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import q_full, ursell_function, ursell_kernel
from .config import RunConfig
from .configurations import Configuration, read_configurations_csv, write_configurations_csv
from .constants import c_z, regularity_constant, threshold_curve, z_crit, z_ruelle
from .ks import CorrelationSequence, KSModel, as_points, ks_residual, neumann_eval
from .langevin import exp_moment_estimate, simulate_marks
from .potentials import ConfigError, shifted_lj_potential, unshifted_lj_potential
from .sampler import SamplerConfig, estimate_intensity, gnz_residual, mcmc_run

__all__ = ["main", "build_parser", "reproduce_figures", "run_manifest"]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run_manifest(cfg: RunConfig, out_dir: Path, files, command: str, extra: dict | None = None) -> Path:
    """Write manifest.json echoing the resolved config with checksums of the emitted files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": _version(),
        "seed": cfg["run", "seed"],
        "config": cfg.serialize(),
        "files": {Path(f).name: _sha256(Path(f)) for f in files},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def cmd_simulate_paths(cfg: RunConfig, out: Path, args) -> int:
    spec = cfg.langevin_spec()
    n = args.n if args.n is not None else cfg["run", "n_paths"]
    paths = simulate_marks(spec, n, np.random.default_rng(cfg["run", "seed"]))
    s = spec.times
    rows = [[i, s[k], *paths[i, k]] for i in range(n) for k in range(spec.n_steps + 1)]
    f1 = out / "paths.csv"
    write_csv(f1, ["path_id", "s"] + [f"m{j + 1}" for j in range(spec.d)], rows)
    files = [f1]
    if args.moments:
        est = exp_moment_estimate(spec, spec.d + 2 * spec.delta, max(n, 100), cfg["run", "seed"])
        f2 = out / "moments.csv"
        write_csv(f2, ["exponent", "estimate", "stderr", "n_overflow", "hypothesis_checked"],
                  [[spec.d + 2 * spec.delta, est.estimate, est.stderr, est.n_overflow, est.hypothesis_checked]])
        files.append(f2)
    run_manifest(cfg, out, files, "simulate-paths")
    return 0


def cmd_thresholds(cfg: RunConfig, out: Path, args) -> int:
    beta = args.beta if args.beta is not None else cfg["constants", "beta"]
    B = args.B if args.B is not None else cfg["constants", "B_Phi"]
    extra = {}
    if args.estimate_C:
        phi = cfg.pair_potential()
        est = regularity_constant(phi, cfg.self_potential(), beta, cfg.reference(box=False),
                                  n_anchor=cfg["run", "n_anchor"], n_mc=cfg["run", "n_mc"],
                                  seed=cfg["run", "seed"], force=args.force)
        C = est.conservative
        extra = {"C_empirical": est.estimate, "C_stderr": est.stderr, "C_analytic": est.analytic_bound}
    else:
        C = args.C if args.C is not None else cfg["constants", "C"]
    rep = z_crit(C, B, beta)
    f1 = out / "thresholds.csv"
    write_csv(f1, ["z", "c_z", "f"], rep.curve.tolist())
    f2 = out / "threshold_summary.csv"
    write_csv(f2, ["beta", "B_Phi", "C", "z_ru", "z_crit"], [[beta, B, C, rep.z_ru, rep.z_crit]])
    print(f"z_Ru = {rep.z_ru:.10g}")
    print(f"z_crit = {rep.z_crit:.10g}")
    print(f"C = {C:.10g}")
    run_manifest(cfg, out, [f1, f2], "thresholds", extra)
    return 0


def _read_points(path):
    configs = read_configurations_csv(path)
    if not configs:
        raise ConfigError(f"no configurations in {path}")
    return configs


def cmd_cluster_eval(cfg: RunConfig, out: Path, args) -> int:
    phi = cfg.pair_potential()
    beta = cfg["constants", "beta"]
    B = cfg["constants", "B_Phi"]
    rows = []
    for cid, gamma in enumerate(_read_points(args.points)):
        n = len(gamma)
        if n == 0:
            continue
        k = ursell_function(gamma, phi, beta) if n <= 6 else None
        head, rest = Configuration(gamma.points[:1]), Configuration(gamma.points[1:])
        kb = ursell_kernel(head, rest, phi, beta)
        q = q_full(head, rest, phi, beta, B)
        rows.append([cid, n, math.nan if k is None else k.value, 0 if k is None else k.terms_evaluated,
                     kb.value, kb.terms_evaluated, q.value, q.terms_evaluated])
    f1 = out / "cluster.csv"
    write_csv(f1, ["config_id", "n", "k", "k_terms", "kbar", "kbar_terms", "Q", "Q_terms"], rows)
    run_manifest(cfg, out, [f1], "cluster-eval")
    return 0


def cmd_ks_eval(cfg: RunConfig, out: Path, args) -> int:
    z = args.z if args.z is not None else cfg["ks", "z"]
    beta = args.beta if args.beta is not None else cfg["constants", "beta"]
    depth = args.depth if args.depth is not None else cfg["ks", "depth"]
    budget = args.budget if args.budget is not None else cfg["ks", "budget"]
    seed = cfg["run", "seed"]
    model = KSModel(z, beta, cfg.pair_potential(), cfg.reference(box=args.boxed), k_max=cfg["ks", "k_max"])
    rows = []
    for cid, gamma in enumerate(_read_points(args.points)):
        if len(gamma) == 0:
            continue
        pts = as_points(gamma)
        res = neumann_eval(pts, model, depth, budget, seed + cid)
        r = CorrelationSequence.neumann(model, depth, seed=seed + 7919 * (cid + 1))
        resid = ks_residual(r, pts, model, budget, seed + cid)
        rows.append([cid, len(gamma), res.estimate, res.stderr, resid.value, resid.stderr])
    f1 = out / "ks.csv"
    write_csv(f1, ["tuple_id", "N", "estimate", "stderr", "residual", "residual_stderr"], rows)
    run_manifest(cfg, out, [f1], "ks-eval")
    return 0


def cmd_sample(cfg: RunConfig, out: Path, args) -> int:
    sc = SamplerConfig(box=np.array(cfg["sampler", "box"]), z=cfg["sampler", "z"], beta=cfg["constants", "beta"],
                       p_birth=cfg["sampler", "p_birth"], p_death=cfg["sampler", "p_death"],
                       p_translate=cfg["sampler", "p_translate"], p_mark=cfg["sampler", "p_mark"],
                       n_sweeps=cfg["sampler", "n_sweeps"], burn_in=cfg["sampler", "burn_in"],
                       thinning=cfg["sampler", "thinning"], moves_per_sweep=cfg["sampler", "moves_per_sweep"],
                       seed=cfg["run", "seed"], keep_samples=True)
    phi = cfg.pair_potential()
    ref = cfg.reference()
    chain = mcmc_run(sc, phi, cfg.self_potential(), ref)
    d, T = sc.d, ref.n_nodes
    f1 = out / "configurations.csv"
    write_configurations_csv(f1, chain.configurations(), d, T)
    s = chain.summary
    f2 = out / "chain_summary.csv"
    write_csv(f2, ["n_kept", "mean_n", "tau_n"] + [f"acc_{m}" for m in s.acceptance],
              [[s.n_kept, s.mean_n, s.tau_n, *s.acceptance.values()]])
    rows = []
    failed = False
    if s.n_kept >= 100:
        rho = estimate_intensity(chain, ref, seed=cfg["run", "seed"])
        rows.append(["rho1_mean", rho.value, rho.stderr])
        for g in gnz_residual(chain, phi, ref, budget=cfg["sampler", "gnz_budget"], seed=cfg["run", "seed"]):
            rows.append([f"gnz_{g.name}", g.residual, g.stderr])
            if abs(g.residual) > 3 * g.stderr and g.stderr > 0:
                failed = True
    f3 = out / "estimators.csv"
    write_csv(f3, ["quantity", "value", "stderr"], rows)
    run_manifest(cfg, out, [f1, f2, f3], "sample")
    if failed:
        print("diagnostics: GNZ residual beyond 3 standard errors", file=sys.stderr)
        if args.strict:
            return 2
    return 0


def reproduce_figures(out_dir) -> list[Path]:
    """Curve data for the two Lennard-Jones profiles and the two threshold curves, plus a summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    u = np.union1d(np.linspace(0.5, 6.0, 2201), [2.5])
    for name, pot in (("lj_shifted_profile.csv", shifted_lj_potential()),
                      ("lj_unshifted_profile.csv", unshifted_lj_potential())):
        p = out / name
        write_csv(p, ["u", "phi"], zip(u.tolist(), pot(u).tolist()))
        files.append(p)
    summary = []
    for B in (0.0, 1.0):
        rep = z_crit(1.0, B, 1.0)
        curve = threshold_curve(1.0, B, 1.0, n=2048)
        p = out / f"threshold_curve_B{int(B)}.csv"
        write_csv(p, ["z", "c_z", "f"], curve.tolist())
        files.append(p)
        summary.append([1.0, B, 1.0, rep.z_ru, rep.z_crit, c_z(0.0, 1.0, B, 1.0), "diverges_at_z_ru"])
    p = out / "threshold_summary.csv"
    write_csv(p, ["beta", "B_Phi", "C", "z_ru", "z_crit", "c_0", "note"], summary)
    files.append(p)
    return files


def cmd_reproduce_figures(cfg: RunConfig, out: Path, args) -> int:
    files = reproduce_figures(out)
    run_manifest(cfg, out, files, "reproduce-figures")
    return 0


COMMANDS = {
    "simulate-paths": cmd_simulate_paths,
    "thresholds": cmd_thresholds,
    "cluster-eval": cmd_cluster_eval,
    "ks-eval": cmd_ks_eval,
    "sample": cmd_sample,
    "reproduce-figures": cmd_reproduce_figures,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key = value configuration file")
    common.add_argument("--seed", type=int, help="overrides [run] seed")
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument("--workers", type=int, help="recorded in the manifest; computations are sequential")
    common.add_argument("--strict", action="store_true", help="exit with status 2 when diagnostics fail")

    p = argparse.ArgumentParser(prog="pathgibbs", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("simulate-paths", parents=[common], help="simulate Langevin path marks")
    sp.add_argument("--n", type=int, help="number of paths")
    sp.add_argument("--moments", action="store_true", help="also estimate the exponential moment")
    sp = sub.add_parser("thresholds", parents=[common], help="z_Ru, z_crit and the f(z) curve")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--B", type=float)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--C", type=float)
    g.add_argument("--estimate-C", action="store_true", help="estimate C(beta) by Monte Carlo")
    sp.add_argument("--force", action="store_true", help="estimate C even for a non-regular potential")
    sp = sub.add_parser("cluster-eval", parents=[common], help="k, kbar and Q on small configurations")
    sp.add_argument("--points", required=True, help="configurations CSV")
    sp = sub.add_parser("ks-eval", parents=[common], help="Neumann estimates and KS residuals")
    sp.add_argument("--points", required=True, help="configurations CSV (one tuple per configuration)")
    sp.add_argument("--z", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--boxed", action="store_true", help="restrict integrals to the sampler box")
    sub.add_parser("sample", parents=[common], help="run the birth-death-move sampler")
    sub.add_parser("reproduce-figures", parents=[common], help="curve data for the potential and threshold plots")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig.parse("")
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        if args.out is not None:
            cfg.set("run", "out", args.out)
        if args.workers is not None:
            cfg.set("run", "workers", args.workers)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg["run", "out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
