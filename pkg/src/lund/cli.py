"""``lund`` command line: synth, cluster, sweep and diagnose subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import svg
from .baselines import eigengap_khat, fsfdpc, kmeans, spectral_ng, spectral_shi
from .diagnostics import Partition, default_t_grid, mesoscopic_report
from .diffusion import DiffusionOperator
from .errors import InvalidParameterError, LundError
from .evaluation import score
from .lund_core import LundConfig, lund_from_parts, prepare
from .markov_graph import build_chain, build_kernel
from .point_store import PointCloud, read_csv, write_csv
from .spectral import eig_sym_laplacian
from .synth_data import cloud_digest, default_specs, generate

log = logging.getLogger("lund")

METHODS = ("lund", "spectral_shi", "spectral_ng", "fsfdpc", "kmeans")
DEFAULT_SIGMAS = [round(0.05 * i, 2) for i in range(1, 11)]
DEFAULT_TIMES = [10**k for k in range(17)]


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    input: str | None = None
    n: int = 2000
    sigma: float | None = None
    t: int | None = None
    sigma_grid: list = field(default_factory=lambda: list(DEFAULT_SIGMAS))
    t_grid: list = field(default_factory=lambda: list(DEFAULT_TIMES))
    trials: int = 100
    seed: int = 0
    methods: list = field(default_factory=lambda: ["lund", "spectral_shi", "spectral_ng", "fsfdpc"])
    k_mode: str = "estimate"
    k: int | None = None
    knn: int | None = None
    eigs: int = 100
    kde_knn: int = 100
    kde_sigma: float | None = None
    tau: float | None = None
    out: str = "."

    def validate(self):
        if not self.sigma_grid or not self.t_grid:
            raise InvalidParameterError("sigma and t grids must be nonempty")
        if self.trials < 1:
            raise InvalidParameterError("trials must be at least 1")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise InvalidParameterError(f"unknown methods: {sorted(bad)}")
        if self.k_mode not in ("estimate", "fixed"):
            raise InvalidParameterError("k-mode must be 'estimate' or 'fixed'")
        if self.k_mode == "fixed" and not self.k:
            raise InvalidParameterError("--k-mode fixed needs --k")
        if any(not s > 0 for s in self.sigma_grid):
            raise InvalidParameterError("sigma values must be positive")
        return self


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(float(v)) for v in str(text).split(",") if v.strip()]


def build_config(args) -> ExperimentConfig:
    """Defaults, then the JSON file (``--config``), then explicit flags."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg.update(json.load(fh))
    overrides = {
        "dataset": args.dataset, "input": args.input, "n": args.n, "sigma": args.sigma, "t": args.t,
        "sigma_grid": None if args.sigma_grid is None else _floats(args.sigma_grid),
        "t_grid": None if args.t_grid is None else _ints(args.t_grid),
        "trials": args.trials, "seed": args.seed,
        "methods": None if args.method is None else [m for m in args.method.split(",") if m],
        "k_mode": args.k_mode, "k": args.k, "knn": args.knn, "eigs": args.eigs,
        "kde_knn": args.kde_knn, "kde_sigma": args.kde_sigma, "tau": args.tau, "out": args.out,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(cfg) - names
    if unknown:
        raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**cfg)


def _threads() -> int:
    env = os.environ.get("LUND_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _load_cloud(cfg: ExperimentConfig, seed: int) -> PointCloud:
    if cfg.input:
        return read_csv(cfg.input)
    if not cfg.dataset:
        raise InvalidParameterError("give --input or --dataset")
    specs = default_specs(cfg.n, seed)
    if cfg.dataset not in specs:
        raise InvalidParameterError(f"unknown dataset {cfg.dataset!r}; choose from {sorted(specs)}")
    return generate(specs[cfg.dataset])


def _lund_config(cfg: ExperimentConfig, t: int, n: int, k_true: int | None) -> LundConfig:
    if cfg.k_mode == "fixed":
        est = dict(k_estimator="fixed", k=cfg.k)
    elif cfg.tau is not None:
        est = dict(k_estimator="tau_threshold", tau=cfg.tau)
    else:
        est = dict(k_estimator="ratio_argmax")
    return LundConfig(
        t=int(t), M=min(cfg.eigs, n), kde_knn=min(cfg.kde_knn, n - 1), kde_sigma=cfg.kde_sigma,
        graph_mode="knn" if cfg.knn else "dense", graph_knn=cfg.knn, **est,
    )


def _baseline_k(cfg: ExperimentConfig, cloud: PointCloud) -> int:
    if cfg.k_mode == "fixed":
        return int(cfg.k)
    if cloud.n_classes is None:
        raise InvalidParameterError("baselines need --k when the data carry no labels")
    return cloud.n_classes


def _quantize(k_hat, k_true):
    if k_true is None or k_hat is None or not np.isfinite(k_hat):
        return math.nan
    return float(np.sign(k_hat - k_true))


# ---------------------------------------------------------------- sweep


def _trial(cfg: ExperimentConfig, trial: int):
    """All cells of one trial: ``[(method, sigma, t, overall, average, k_hat)]``."""
    seed = cfg.seed + trial
    cloud = _load_cloud(cfg, seed)
    truth = cloud.ground_truth
    k_true = cloud.n_classes
    rows = []

    def acc(labels):
        if truth is None:
            return math.nan, math.nan
        r = score(labels, truth)
        return r.overall, r.average

    for sigma in cfg.sigma_grid:
        need_lund = "lund" in cfg.methods or "fsfdpc" in cfg.methods
        dec = dens = None
        if need_lund:
            try:
                _, dec, dens = prepare(cloud, sigma, _lund_config(cfg, 1, cloud.n, k_true))
            except LundError as exc:
                log.warning("trial %d sigma %g: preparation failed: %s", trial, sigma, exc)
        if "lund" in cfg.methods:
            for t in cfg.t_grid:
                if dec is None:
                    rows.append(("lund", sigma, t, math.nan, math.nan, math.nan))
                    continue
                try:
                    res = lund_from_parts(DiffusionOperator(dec, int(t)), dens,
                                          _lund_config(cfg, t, cloud.n, k_true))
                    rows.append(("lund", sigma, t, *acc(res.labels), res.k_hat))
                except LundError as exc:
                    log.debug("lund cell (%g, %d) failed: %s", sigma, t, exc)
                    rows.append(("lund", sigma, t, math.nan, math.nan, math.nan))
        K = _baseline_k(cfg, cloud) if set(cfg.methods) - {"lund"} else None
        lap = None
        if {"spectral_shi", "spectral_ng"} & set(cfg.methods) or "lund" in cfg.methods:
            try:
                graph = build_kernel(cloud, sigma, "dense")
                lap = eig_sym_laplacian(graph, max(min(cfg.eigs, cloud.n), 2))
                degrees = np.asarray(graph.weights.sum(axis=1)).ravel()
                rows.append(("eigengap", sigma, None, math.nan, math.nan, eigengap_khat(lap)))
            except LundError as exc:
                log.warning("trial %d sigma %g: Laplacian failed: %s", trial, sigma, exc)
        for method in cfg.methods:
            if method == "lund":
                continue
            try:
                if method == "spectral_shi":
                    if lap is None:
                        raise LundError("no Laplacian spectrum")
                    res = spectral_shi(cloud, sigma, K, seed=seed, decomposition=lap, degrees=degrees)
                elif method == "spectral_ng":
                    if lap is None:
                        raise LundError("no Laplacian spectrum")
                    res = spectral_ng(cloud, sigma, K, seed=seed, decomposition=lap)
                elif method == "fsfdpc":
                    if dens is None:
                        raise LundError("no density estimate")
                    res = fsfdpc(cloud, dens, K)
                else:
                    res = kmeans(cloud.points, K, seed=seed)
                rows.append((method, sigma, None, *acc(res.labels), res.k_used))
            except LundError as exc:
                log.debug("%s at sigma %g failed: %s", method, sigma, exc)
                rows.append((method, sigma, None, math.nan, math.nan, math.nan))
    return k_true, rows


def run_sweep(cfg: ExperimentConfig, workers: int | None = None):
    """Run every trial and aggregate to one record per (method, sigma, t)."""
    cfg.validate()
    workers = min(workers or _threads(), cfg.trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        results = [_trial(cfg, i) for i in range(cfg.trials)]
    k_true = results[0][0]
    cells: dict = {}
    for _, rows in results:
        for method, sigma, t, ov, av, kh in rows:
            cells.setdefault((method, sigma, t), []).append((ov, av, kh))
    table = []
    for (method, sigma, t), vals in cells.items():
        ov = np.array([v[0] for v in vals], dtype=np.float64)
        av = np.array([v[1] for v in vals], dtype=np.float64)
        kh = [v[2] for v in vals if np.isfinite(v[2])]
        mode = Counter(int(k) for k in kh).most_common(1)[0][0] if kh else math.nan
        ok = np.isfinite(ov)
        table.append(dict(
            method=method, sigma=sigma, t=t,
            overall=float(ov[ok].mean()) if ok.any() else math.nan,
            average=float(av[ok].mean()) if ok.any() else math.nan,
            khat=mode, khat_quant=_quantize(mode, k_true),
            trials=len(vals), failed=int((~np.isfinite(np.array([v[2] for v in vals], dtype=float))).sum()),
        ))
    return k_true, table


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_sweep(cfg: ExperimentConfig, k_true, table, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    acc_rows = [r for r in table if r["method"] != "eigengap"]
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "sigma", "t", "overall_accuracy", "average_accuracy", "trials", "failed"])
        for r in acc_rows:
            w.writerow([r["method"], _fmt(r["sigma"]), _fmt(r["t"]), _fmt(r["overall"]),
                        _fmt(r["average"]), r["trials"], r["failed"]])
    with open(out / "khat.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "sigma", "t", "khat_mode", "khat_quantized", "k_true"])
        for r in table:
            if r["method"] in ("lund", "eigengap"):
                w.writerow([r["method"], _fmt(r["sigma"]), _fmt(r["t"]), _fmt(r["khat"]),
                            _fmt(r["khat_quant"]), _fmt(k_true)])
    sig = list(cfg.sigma_grid)
    ts = list(cfg.t_grid)
    lund_rows = {(r["sigma"], r["t"]): r for r in table if r["method"] == "lund"}
    if lund_rows:
        for key, name, lo, hi in (("overall", "lund_accuracy", 0.0, 1.0), ("khat", "lund_khat", None, None),
                                  ("khat_quant", "lund_khat_quantized", -1.0, 1.0)):
            M = np.array([[lund_rows[(s, t)][key] for t in ts] for s in sig], dtype=np.float64)
            (out / f"{name}.svg").write_text(svg.heatmap(
                M, [f"{s:g}" for s in sig], [svg.log_label(t) for t in ts],
                title=f"LUND {key} (rows: sigma, columns: t)", vmin=lo, vmax=hi))
    series = {}
    for m in cfg.methods:
        if m == "lund":
            best = [max((lund_rows[(s, t)]["overall"] for t in ts if np.isfinite(lund_rows[(s, t)]["overall"])),
                        default=math.nan) for s in sig]
            series["lund (best t)"] = best
        else:
            d = {r["sigma"]: r["overall"] for r in table if r["method"] == m}
            series[m] = [d.get(s, math.nan) for s in sig]
    (out / "accuracy_vs_sigma.svg").write_text(
        svg.curves(sig, series, title="overall accuracy vs sigma", logx=False, logy=False))
    eg = {r["sigma"]: r["khat"] for r in table if r["method"] == "eigengap"}
    if eg:
        (out / "eigengap_khat.svg").write_text(
            svg.curves(sig, {"eigengap K": [eg.get(s, math.nan) for s in sig]},
                       title="eigengap K estimate vs sigma", logx=False, logy=False))


# ---------------------------------------------------------------- diagnose


def run_diagnose(cfg: ExperimentConfig, out: Path):
    cloud = _load_cloud(cfg, cfg.seed)
    if cloud.ground_truth is None:
        raise InvalidParameterError("diagnostics need ground-truth labels")
    sigmas = [cfg.sigma] if cfg.sigma is not None else list(cfg.sigma_grid)
    t_grid = default_t_grid() if cfg.t_grid == DEFAULT_TIMES else np.asarray(cfg.t_grid)
    out.mkdir(parents=True, exist_ok=True)
    part = Partition.from_labels(cloud.ground_truth)
    reports = {}
    for sigma in sigmas:
        chain = build_chain(build_kernel(cloud, sigma, "dense"))
        rep = mesoscopic_report(chain, part, t_grid)
        reports[sigma] = rep
        tag = f"{sigma:g}"
        (out / f"diag_{tag}.json").write_text(rep.dumps())
        with open(out / f"diag_{tag}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "bound", "empirical", "lambda2_over_pimin", "gamma", "dt_in", "dt_btw", "ratio"])
            for i, t in enumerate(rep.t_grid):
                w.writerow([int(t), repr(float(rep.bound_curve[i])), repr(float(rep.empirical_curve[i])),
                            repr(float(rep.lambda2_curve[i])), repr(float(rep.gamma_curve[i])),
                            repr(float(rep.dtin_curve[i])), repr(float(rep.dtbtw_curve[i])),
                            repr(float(rep.dtin_curve[i] / rep.dtbtw_curve[i]))])
        (out / f"diag_{tag}_bounds.svg").write_text(svg.curves(
            rep.t_grid, {"t delta + kappa lambda^t": rep.bound_curve, "||P^t - S_inf||": rep.empirical_curve,
                         "lambda_2^t / pi_min": rep.lambda2_curve},
            title=f"sigma = {tag}"))
        (out / f"diag_{tag}_distances.svg").write_text(svg.curves(
            rep.t_grid, {"D_in": rep.dtin_curve, "D_btw": rep.dtbtw_curve}, title=f"sigma = {tag}"))
    return reports


# ---------------------------------------------------------------- cluster


def run_cluster(cfg: ExperimentConfig, method: str, out: Path) -> dict:
    if method not in METHODS:
        raise InvalidParameterError(f"unknown method {method!r}")
    cloud = _load_cloud(cfg, cfg.seed)
    sigma = cfg.sigma if cfg.sigma is not None else cfg.sigma_grid[0]
    t0 = time.perf_counter()
    report: dict = {"method": method, "sigma": sigma, "n": cloud.n}
    if method == "lund":
        t = cfg.t if cfg.t is not None else cfg.t_grid[0]
        lcfg = _lund_config(cfg, t, cloud.n, cloud.n_classes)
        _, dec, dens = prepare(cloud, sigma, lcfg)
        res = lund_from_parts(DiffusionOperator(dec, int(t)), dens, lcfg)
        labels = res.labels
        report.update(t=int(t), k_hat=res.k_hat, modes=[int(m) for m in res.modes])
    else:
        K = _baseline_k(cfg, cloud)
        if method == "fsfdpc":
            lcfg = _lund_config(cfg, 1, cloud.n, K)
            _, _, dens = prepare(cloud, sigma, lcfg)
            res = fsfdpc(cloud, dens, K)
            report["modes"] = [int(m) for m in res.extras["modes"]]
        elif method == "spectral_shi":
            res = spectral_shi(cloud, sigma, K, seed=cfg.seed)
        elif method == "spectral_ng":
            res = spectral_ng(cloud, sigma, K, seed=cfg.seed)
        else:
            res = kmeans(cloud.points, K, seed=cfg.seed)
        labels = res.labels
        report["k_hat"] = K
    report["seconds"] = time.perf_counter() - t0
    if cloud.ground_truth is not None:
        acc = score(labels, cloud.ground_truth)
        report.update(overall_accuracy=acc.overall, average_accuracy=acc.average)
    out.mkdir(parents=True, exist_ok=True)
    write_labels(out / "labels.csv", labels)
    (out / "report.json").write_text(json.dumps(report, indent=2))
    return report


def write_labels(path, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label"])
        for i, lab in enumerate(labels):
            w.writerow([i, int(lab)])


def read_labels(path) -> np.ndarray:
    with open(path) as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([int(r[1]) for r in rows], dtype=np.int64)


# ---------------------------------------------------------------- entry point


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lund", description="Diffusion-and-density clustering experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("synth", "cluster", "sweep", "diagnose"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file of ExperimentConfig fields; flags override it")
        s.add_argument("--input")
        s.add_argument("--dataset", choices=sorted(default_specs()))
        s.add_argument("--n", type=int)
        s.add_argument("--sigma", type=float)
        s.add_argument("--sigma-grid")
        s.add_argument("--t", type=int)
        s.add_argument("--t-grid")
        s.add_argument("--trials", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--method")
        s.add_argument("--k", type=int)
        s.add_argument("--k-mode", choices=("estimate", "fixed"))
        s.add_argument("--knn", type=int)
        s.add_argument("--eigs", type=int)
        s.add_argument("--kde-knn", type=int)
        s.add_argument("--kde-sigma", type=float)
        s.add_argument("--tau", type=float)
        s.add_argument("--out")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        out = Path(cfg.out)
        if args.command == "synth":
            cloud = _load_cloud(cfg, cfg.seed)
            out.mkdir(parents=True, exist_ok=True)
            stem = f"{cfg.dataset or 'input'}_seed{cfg.seed}"
            write_csv(cloud, out / f"{stem}.csv")
            meta = {"digest": cloud_digest(cloud), "n": cloud.n}
            if cfg.dataset:
                meta["spec"] = default_specs(cfg.n, cfg.seed)[cfg.dataset].to_json()
            (out / f"{stem}.json").write_text(json.dumps(meta, indent=2))
            print(out / f"{stem}.csv")
        elif args.command == "cluster":
            methods = cfg.methods if args.method else ["lund"]
            if len(methods) != 1:
                raise InvalidParameterError("cluster runs exactly one --method")
            rep = run_cluster(cfg, methods[0], out)
            print(json.dumps(rep))
        elif args.command == "sweep":
            k_true, table = run_sweep(cfg)
            write_sweep(cfg, k_true, table, out)
            print(out / "results.csv")
        else:
            reps = run_diagnose(cfg, out)
            for s, r in reps.items():
                print(f"sigma={s:g} delta={r.delta:.4g} 1-lambda_K1={1 - r.lambda_K1:.4g} kappa={r.kappa:.4g}")
    except (LundError, OSError) as exc:
        print(f"lund: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
