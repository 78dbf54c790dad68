"""Command-line interface: simulate, fit, fit2, mode, kcross, diagnose.

Every run validates its configuration up front, derives all randomness from
the explicit seed, and serializes the full configuration into the output
directory so results are reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import (
    DiagnosticsReport,
    association_measure,
    cluster_size_posterior,
    comembership_matrix,
)
from .ingest import export_pattern_csv, ingest_and_clean, read_pattern_csv, read_records
from .intensity import kde_intensity, lscv_bandwidth, normalize_to_density
from .kcross import deviation_test
from .model import CenterDensity, Hyperparams, ModelParams
from .patterns import Matching, ObservationWindow, PointPattern, cluster_size_counts
from .sampler2 import P1, P2, P3, P4, ProposalKind, build_weight_table, hungarian_mode
from .samplerk import ChainStateK, SampleStore, SamplerKConfig, gibbs_sweep_k
from .synth import simulate_csri, simulate_model

__all__ = ["RunConfig", "run_command", "main"]

_KINDS = {"P1": None, "P2": P2, "P3": P3, "P4": P4}


@dataclass
class RunConfig:
    """Validated run settings; serialized into every output directory."""

    command: str
    input: str | None = None
    out: str = "out"
    seed: int = 0
    k: int = 2
    sigma: float = 1.0
    p_sizes: tuple = ()
    lam: float = 50.0
    sigma_max: float = 50.0
    lambda_shape: float = 300.0
    lambda_scale: float = 1.0
    kind: str = "P3"
    delta: float = 1e-3
    sweeps: int = 2000
    burn: int = 500
    thin: int = 1
    n_moves: int = 200
    chains: int = 2
    workers: int = 1
    r_max: float | None = None
    bandwidth: float | None = None
    uniform_g: bool = False
    window: tuple | None = None
    n_sims: int = 99
    alpha: float = 0.05
    kcross_rmax: float = 15.0
    merge_threshold: float = 3.0
    crop_threshold: float | None = None

    def proposal(self) -> ProposalKind:
        if self.kind == "P1":
            return P1(self.delta)
        return _KINDS[self.kind]

    def validate(self) -> None:
        if self.command in ("fit", "fit2", "mode", "kcross", "diagnose") and not self.input:
            raise ValueError(f"{self.command} requires --input")
        if self.sweeps <= 0 or self.thin <= 0 or self.chains <= 0:
            raise ValueError("sweeps, thin and chains must be positive")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown proposal kind {self.kind}")


def _window_from(cfg: RunConfig) -> ObservationWindow:
    if cfg.window is None:
        raise ValueError("window required (xmin,xmax,ymin,ymax)")
    return ObservationWindow.rectangle(*cfg.window)


def _load_pattern(cfg: RunConfig) -> PointPattern:
    path = Path(cfg.input)
    head = path.open().readline()
    if "gridref" in head.lower() or "place" in head.lower():
        result = ingest_and_clean(read_records(path),
                                  merge_threshold=cfg.merge_threshold)
        return result.pattern
    window = ObservationWindow.rectangle(*cfg.window) if cfg.window else None
    pattern, _ = read_pattern_csv(path, window=window)
    return pattern


def _center_density(cfg: RunConfig, pattern: PointPattern) -> CenterDensity:
    if cfg.uniform_g:
        return CenterDensity.uniform(pattern.window)
    if cfg.bandwidth is not None:
        h = cfg.bandwidth
    else:
        xmin, xmax, _, _ = pattern.window.bounds
        span = xmax - xmin
        grid = np.geomspace(span / 50, span / 5, 8)
        h, _ = lscv_bandwidth(pattern.xy, pattern.window, grid)
    field = kde_intensity(pattern.xy, pattern.window, h)
    return normalize_to_density(field)


def _run_one_chain(args):
    """One chain of the k-color Gibbs run; writes its sample CSV incrementally."""
    cfg_dict, chain_idx, seed, out_path = args
    cfg = RunConfig(**cfg_dict)
    pattern = _load_pattern(cfg)
    g = _center_density(cfg, pattern)
    hyper = Hyperparams.default(pattern.k, sigma_max=cfg.sigma_max,
                                lambda_shape=cfg.lambda_shape,
                                lambda_scale=cfg.lambda_scale)
    sampler_cfg = SamplerKConfig(n_moves=cfg.n_moves, kind=cfg.proposal(),
                                 r_max=cfg.r_max)
    rng = np.random.default_rng(seed)
    state = ChainStateK.initial(pattern, g, hyper, rng if chain_idx > 0 else None)
    k = pattern.k
    rows = []
    with open(out_path, "w") as fh:
        header = (["sweep", "sigma", "lambda"] + [f"p_{i+1}" for i in range(k)]
                  + ["N"] + [f"Y_{i+1}" for i in range(k)] + ["logpi", "partition"])
        fh.write(",".join(header) + "\n")
        for t in range(cfg.burn):
            state = gibbs_sweep_k(state, sampler_cfg, rng)
        for t in range(cfg.sweeps):
            state = gibbs_sweep_k(state, sampler_cfg, rng)
            if (t + 1) % cfg.thin == 0:
                N, Y = cluster_size_counts(state.matching, k)
                labels = state.matching.labels()
                logpi = state.log_posterior()
                row = ([t + 1, state.params.sigma, state.params.lam]
                       + list(state.params.p_sizes)
                       + [state.matching.n_clusters] + list(Y)
                       + [logpi, ".".join(str(l) for l in labels)])
                fh.write(",".join(_fmt(v) for v in row) + "\n")
                fh.flush()  # interrupted runs keep their recorded sweeps
                rows.append(row)
    return rows, k, pattern.n


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v!r}"
    return str(v)


def _store_from_rows(rows, k, n) -> SampleStore:
    ns = len(rows)
    sigma = np.array([r[1] for r in rows])
    lam = np.array([r[2] for r in rows])
    p = np.array([r[3:3 + k] for r in rows], dtype=float)
    N = np.array([r[3 + k] for r in rows], dtype=np.int64)
    Y = np.array([r[4 + k:4 + 2 * k] for r in rows], dtype=np.int64)
    logpi = np.array([r[4 + 2 * k] for r in rows], dtype=float)
    labels = np.array([[int(x) for x in r[5 + 2 * k].split(".")] for r in rows],
                      dtype=np.int64)
    return SampleStore(k=k, n=n, sigma=sigma, lam=lam, p=p, n_clusters=N, Y=Y,
                       labels=labels, logpi=logpi)


def load_store_csv(path) -> SampleStore:
    """Read a chain sample CSV back into a SampleStore."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        k = sum(1 for h in header if h.startswith("p_"))
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            row = [int(parts[0])] + [float(x) for x in parts[1:3 + k]] \
                + [int(float(parts[3 + k]))] \
                + [int(float(x)) for x in parts[4 + k:4 + 2 * k]] \
                + [float(parts[4 + 2 * k]), parts[5 + 2 * k]]
            rows.append(row)
    n = len(rows[0][-1].split(".")) if rows else 0
    return _store_from_rows(rows, k, n)


def _write_summaries(stores, outdir: Path, pattern: PointPattern, rng) -> dict:
    merged = stores[0]
    if len(stores) > 1:
        merged = SampleStore(
            k=merged.k, n=merged.n,
            sigma=np.concatenate([s.sigma for s in stores]),
            lam=np.concatenate([s.lam for s in stores]),
            p=np.vstack([s.p for s in stores]),
            n_clusters=np.concatenate([s.n_clusters for s in stores]),
            Y=np.vstack([s.Y for s in stores]),
            labels=np.vstack([s.labels for s in stores]),
            logpi=np.concatenate([s.logpi for s in stores]),
        )
    summ = cluster_size_posterior(merged)
    with open(outdir / "summaries.csv", "w") as fh:
        fh.write("parameter,mean,q025,median,q975,hpd_lo,hpd_hi\n")
        for name, s in summ.items():
            fh.write(f"{name},{s['mean']!r},{s['q025']!r},{s['median']!r},"
                     f"{s['q975']!r},{s['hpd_lo']!r},{s['hpd_hi']!r}\n")
    pm = comembership_matrix(merged.labels)
    with open(outdir / "comembership.csv", "w") as fh:
        fh.write("i,j,x_i,y_i,x_j,y_j,prob\n")
        for i in range(pattern.n):
            for j in range(i + 1, pattern.n):
                if pm[i, j] > 0.01:
                    fh.write(f"{i},{j},{pattern.xy[i,0]!r},{pattern.xy[i,1]!r},"
                             f"{pattern.xy[j,0]!r},{pattern.xy[j,1]!r},{pm[i,j]!r}\n")
    assoc = association_measure(merged.labels, pattern.marks, rng)
    with open(outdir / "association.csv", "w") as fh:
        fh.write("type_a,type_b,raw,null,relative\n")
        for a in range(merged.k):
            for b in range(a + 1, merged.k):
                fh.write(f"{a+1},{b+1},{assoc.raw[a,b]!r},{assoc.null[a,b]!r},"
                         f"{assoc.relative[a,b]!r}\n")
    return summ


def _cmd_fit(cfg: RunConfig) -> int:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    pattern = _load_pattern(cfg)
    seeds = [int(s) for s in
             np.random.SeedSequence(cfg.seed).generate_state(cfg.chains)]
    jobs = [(asdict(cfg), c, seeds[c], str(outdir / f"chain{c}_samples.csv"))
            for c in range(cfg.chains)]
    if cfg.workers > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one_chain, jobs))
    else:
        results = [_run_one_chain(j) for j in jobs]
    stores = [_store_from_rows(rows, k, n) for rows, k, n in results]
    rng = np.random.default_rng(cfg.seed + 1)
    summ = _write_summaries(stores, outdir, pattern, rng)
    report = {
        "config": asdict(cfg),
        "seeds": seeds,
        "runtime_s": time.time() - t0,
        "diagnostics": DiagnosticsReport.from_stores(stores).to_dict(),
        "summaries": summ,
    }
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    print(f"fit: {cfg.chains} chain(s), {cfg.sweeps} sweeps -> {outdir}")
    return 0


def _cmd_mode(cfg: RunConfig) -> int:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    pattern = _load_pattern(cfg)
    if pattern.k != 2:
        print("mode requires a 2-color pattern", file=sys.stderr)
        return 2
    g = _center_density(cfg, pattern)
    p = np.asarray(cfg.p_sizes if cfg.p_sizes else (0.5, 0.5), dtype=float)
    params = ModelParams(sigma=cfg.sigma, p_sizes=p, lam=cfg.lam)
    table = build_weight_table(pattern, params, g, r_max=cfg.r_max)
    mode = hungarian_mode(table)
    with open(outdir / "mode.csv", "w") as fh:
        fh.write("red_point,blue_point,weight\n")
        for i, j in mode.pairs:
            gi = int(table.red_points[i])
            gj = int(table.blue_points[j])
            fh.write(f"{gi},{gj},{table.w[i, j]!r}\n")
    print(f"mode: {len(mode.pairs)} pairs, log-weight {mode.log_weight:.4f}")
    print(sorted((int(table.red_points[i]), int(table.blue_points[j]))
                 for i, j in mode.pairs))
    return 0


def _cmd_kcross(cfg: RunConfig) -> int:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    pattern = _load_pattern(cfg)
    rng = np.random.default_rng(cfg.seed)
    fields = []
    for t in range(1, pattern.k + 1):
        pts = pattern.xy[pattern.marks == t]
        if cfg.bandwidth is not None:
            h = cfg.bandwidth
        else:
            xmin, xmax, _, _ = pattern.window.bounds
            grid = np.geomspace((xmax - xmin) / 50, (xmax - xmin) / 5, 6)
            h, _ = lscv_bandwidth(pts, pattern.window, grid)
        fields.append(kde_intensity(pts, pattern.window, h))
    est = deviation_test(pattern, fields, m=cfg.n_sims, alpha=cfg.alpha,
                         rng=rng, r_max=cfg.kcross_rmax)
    est.export_csv(outdir / "kcross_curves.csv")
    report = {
        "config": asdict(cfg),
        "d_obs": est.d_obs,
        "p_value": est.p_value,
        "reject": bool(est.reject),
    }
    with open(outdir / "kcross_report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    print(f"kcross: D={est.d_obs:.4f}, p={est.p_value:.4f}, "
          f"{'reject' if est.reject else 'retain'} at alpha={cfg.alpha}")
    return 0


def _cmd_simulate(cfg: RunConfig) -> int:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    window = _window_from(cfg)
    rng = np.random.default_rng(cfg.seed)
    p = np.asarray(cfg.p_sizes if cfg.p_sizes else [1.0 / cfg.k] * cfg.k, dtype=float)
    params = ModelParams(sigma=cfg.sigma, p_sizes=p, lam=cfg.lam)
    pattern, truth = simulate_model(params, cfg.k, window, rng)
    export_pattern_csv(pattern, outdir / "pattern.csv", matching=truth)
    with open(outdir / "config.json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=1)
    print(f"simulate: n={pattern.n} points, {truth.n_edges} true clusters -> {outdir}")
    return 0


def _cmd_diagnose(cfg: RunConfig) -> int:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = sorted(Path().glob(cfg.input))
    if not paths:
        print(f"no sample files match {cfg.input}", file=sys.stderr)
        return 2
    stores = [load_store_csv(p) for p in paths]
    report = DiagnosticsReport.from_stores(stores).to_dict()
    report["files"] = [str(p) for p in paths]
    with open(outdir / "diagnostics.json", "w") as fh:
        json.dump(report, fh, indent=1)
    print(json.dumps(report, indent=1))
    return 0


def run_command(cfg: RunConfig) -> int:
    """Dispatch a validated configuration; returns the exit status."""
    try:
        cfg.validate()
    except ValueError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return 2
    handler = {
        "simulate": _cmd_simulate,
        "fit": _cmd_fit,
        "fit2": _cmd_fit,  # the k = 2 case runs through the same Gibbs driver
        "mode": _cmd_mode,
        "kcross": _cmd_kcross,
        "diagnose": _cmd_diagnose,
    }[cfg.command]
    return handler(cfg)


def _parse_args(argv=None) -> RunConfig:
    parser = argparse.ArgumentParser(prog="compclust",
                                     description="Bayesian complementary clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="out")
        p.add_argument("--seed", type=int, default=0)

    p_sim = sub.add_parser("simulate", help="draw from the generative model")
    common(p_sim)
    p_sim.add_argument("--k", type=int, default=2)
    p_sim.add_argument("--sigma", type=float, default=1.0)
    p_sim.add_argument("--p", dest="p_sizes", default="")
    p_sim.add_argument("--lam", type=float, default=50.0)
    p_sim.add_argument("--window", default="0,10,0,10")

    for name, hlp in (("fit", "k-color Gibbs run"), ("fit2", "2-color Gibbs run")):
        p_fit = sub.add_parser(name, help=hlp)
        common(p_fit)
        p_fit.add_argument("--input", required=True)
        p_fit.add_argument("--sweeps", type=int, default=2000)
        p_fit.add_argument("--burn", type=int, default=500)
        p_fit.add_argument("--thin", type=int, default=1)
        p_fit.add_argument("--chains", type=int, default=2)
        p_fit.add_argument("--workers", type=int, default=1)
        p_fit.add_argument("--n-moves", dest="n_moves", type=int, default=200)
        p_fit.add_argument("--kind", default="P3", choices=list(_KINDS))
        p_fit.add_argument("--delta", type=float, default=1e-3)
        p_fit.add_argument("--r-max", dest="r_max", type=float, default=None)
        p_fit.add_argument("--sigma-max", dest="sigma_max", type=float, default=50.0)
        p_fit.add_argument("--lambda-shape", dest="lambda_shape", type=float, default=300.0)
        p_fit.add_argument("--lambda-scale", dest="lambda_scale", type=float, default=1.0)
        p_fit.add_argument("--bandwidth", type=float, default=None)
        p_fit.add_argument("--uniform-g", dest="uniform_g", action="store_true")
        p_fit.add_argument("--window", default=None)

    p_mode = sub.add_parser("mode", help="Hungarian posterior mode (2 colors)")
    common(p_mode)
    p_mode.add_argument("--input", required=True)
    p_mode.add_argument("--sigma", type=float, default=1.0)
    p_mode.add_argument("--p", dest="p_sizes", default="0.5,0.5")
    p_mode.add_argument("--lam", type=float, default=50.0)
    p_mode.add_argument("--r-max", dest="r_max", type=float, default=None)
    p_mode.add_argument("--bandwidth", type=float, default=None)
    p_mode.add_argument("--uniform-g", dest="uniform_g", action="store_true")
    p_mode.add_argument("--window", default=None)

    p_k = sub.add_parser("kcross", help="deviation test of the no-interaction null")
    common(p_k)
    p_k.add_argument("--input", required=True)
    p_k.add_argument("--n-sims", dest="n_sims", type=int, default=99)
    p_k.add_argument("--alpha", type=float, default=0.05)
    p_k.add_argument("--r-max", dest="kcross_rmax", type=float, default=15.0)
    p_k.add_argument("--bandwidth", type=float, default=None)
    p_k.add_argument("--window", default=None)

    p_d = sub.add_parser("diagnose", help="post-process stored sample CSVs")
    common(p_d)
    p_d.add_argument("--input", required=True, help="glob of chain sample CSVs")

    ns = parser.parse_args(argv)
    kw = {}
    for f in RunConfig.__dataclass_fields__:
        if hasattr(ns, f) and getattr(ns, f) is not None:
            kw[f] = getattr(ns, f)
    if getattr(ns, "p_sizes", ""):
        kw["p_sizes"] = tuple(float(x) for x in ns.p_sizes.split(","))
    else:
        kw.pop("p_sizes", None)
    if isinstance(kw.get("window"), str):
        kw["window"] = tuple(float(x) for x in kw["window"].split(","))
    return RunConfig(**kw)


def main(argv=None) -> int:
    cfg = _parse_args(argv)
    return run_command(cfg)


if __name__ == "__main__":
    sys.exit(main())
