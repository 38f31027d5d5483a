"""Pipeline stages behind the command line, working inside one run directory.

Layout of ``RunConfig.workdir``::

    data.csv                site series (written by ``synth`` or supplied)
    synth.json              generator parameters, when the data is synthetic
    lags.csv                selected lag set
    graph.csv               edge list
    model_k<k>.json         one checkpoint per horizon
    forecast_k<k>/          ensembles.npy, persistence.npy, observations.npy,
                            origins.csv, quantiles.csv
    report_k<k>/            CGAE metric tables
    report_persistence_k<k>/  the same tables for the persistence baseline

Each stage returns a flat dict that the CLI prints as ``key=value`` pairs.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
from numpy.lib.format import open_memmap

from . import data as dataio
from .config import RunConfig
from .features import build_examples, read_lags, select_lags, write_lags
from .forecasting import empirical_quantiles, generate_ensemble, persistence_ensemble
from .graph import (
    build_graph_from_correlation, build_graph_from_distance, read_edge_list,
    renormalized_propagation, write_edge_list,
)
from .metrics import evaluate, write_report
from .model import CgaeModel, ModelConfig, fit_output_sigma, load_checkpoint, save_checkpoint, train
from .rng import Rng

__all__ = [
    "MissingArtifactError", "Workspace", "run_synth", "run_select_lags", "run_build_graph",
    "run_train", "run_forecast", "run_evaluate", "run_all",
]

logger = logging.getLogger(__name__)

# substream indices; each stochastic stage gets its own stream per horizon
_TRAIN, _SIGMA, _FORECAST = 1, 2, 3


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path: Path, producer: str):
        super().__init__(f"required file {path} not found; run `cgae {producer}` first")
        self.path = path


class Workspace:
    """Resolved paths and the aligned data for one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = cfg.workdir_path
        self._aligned = None

    @property
    def lags(self) -> Path:
        return self.root / "lags.csv"

    @property
    def graph(self) -> Path:
        return self.root / "graph.csv"

    def model(self, k: int) -> Path:
        return self.root / f"model_k{k}.json"

    def forecast_dir(self, k: int) -> Path:
        return self.root / f"forecast_k{k}"

    def report_dir(self, k: int, baseline: bool = False) -> Path:
        return self.root / (f"report_persistence_k{k}" if baseline else f"report_k{k}")

    def require(self, path: Path, producer: str) -> Path:
        if not path.is_file():
            raise MissingArtifactError(path, producer)
        return path

    def load(self):
        """(sites, grid, values (n, T), test_start index)."""
        if self._aligned is None:
            path = self.require(self.cfg.data_path, "synth")
            sites = dataio.ingest_csv(path)
            if len(sites) < 2:
                raise ValueError(f"{path}: need at least 2 sites, found {len(sites)}")
            grid, values = dataio.align(sites)
            self._aligned = (sites, grid, values, self._test_start(grid))
        return self._aligned

    def _test_start(self, grid: np.ndarray) -> int:
        if self.cfg.test_start:
            boundary = dataio.parse_timestamp(self.cfg.test_start)
            idx = int(np.searchsorted(grid, boundary))
        else:
            days = grid.size // 48
            idx = (days - int(round(days * self.cfg.test_fraction))) * 48
        if not 0 < idx < grid.size:
            raise ValueError(f"test split boundary leaves an empty train or test side (index {idx} of {grid.size})")
        return idx


def run_synth(cfg: RunConfig) -> dict:
    ws = Workspace(cfg)
    ws.root.mkdir(parents=True, exist_ok=True)
    scfg = dataio.SynthConfig(nodes=cfg.nodes, days=cfg.days, noise=cfg.noise, seed=cfg.seed)
    sites, desc = dataio.synth_generate(scfg)
    path = cfg.data_path
    path.parent.mkdir(parents=True, exist_ok=True)
    dataio.export_csv(sites, path)
    meta = {
        "model": desc["model"],
        "config": asdict(scfg),
        "positions": desc["positions"].tolist(),
        "spatial_covariance": desc["spatial_covariance"].tolist(),
    }
    (ws.root / "synth.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    return {"stage": "synth", "sites": len(sites), "steps": len(sites[0]), "data": str(path)}


def run_select_lags(cfg: RunConfig) -> dict:
    ws = Workspace(cfg)
    _, _, values, test_start = ws.load()
    t0 = time.perf_counter()
    lags = select_lags(values[:, :test_start], cfg.max_lag, cfg.tau, cfg.bins)
    write_lags(lags, ws.lags)
    return {"stage": "select-lags", "count": len(lags), "max_lag": max(lags.lags),
            "seconds": round(time.perf_counter() - t0, 3), "lags": str(ws.lags)}


def run_build_graph(cfg: RunConfig) -> dict:
    ws = Workspace(cfg)
    sites, _, values, test_start = ws.load()
    ids = [s.site_id for s in sites]
    if cfg.mode == "correlation":
        g = build_graph_from_correlation(values[:, :test_start], cfg.threshold, ids)
    else:
        coords = np.array([[s.latitude, s.longitude] for s in sites])
        g = build_graph_from_distance(coords, cfg.kernel_scale, cfg.threshold, ids)
    write_edge_list(g, ws.graph)
    edges = int(np.count_nonzero(np.triu(g.adjacency, 1)))
    return {"stage": "build-graph", "nodes": g.n, "edges": edges, "graph": str(ws.graph)}


def _model_config(cfg: RunConfig, n: int, F: int) -> ModelConfig:
    return ModelConfig(n=n, F=F, d=cfg.d, L_G=cfg.L_G, L_Q=cfg.L_Q, L_P=cfg.L_P,
                       gfenn_width=cfg.gfenn_width, hidden_width=cfg.hidden_width, eta=cfg.eta,
                       sigma_dec=cfg.sigma_dec, batch_size=cfg.batch_size, seed=cfg.seed)


def _ensure_lags_and_graph(cfg: RunConfig, ws: Workspace) -> None:
    if not ws.lags.is_file():
        logger.info("%s missing, selecting lags", ws.lags)
        run_select_lags(cfg)
    if not ws.graph.is_file():
        logger.info("%s missing, building graph", ws.graph)
        run_build_graph(cfg)


def run_train(cfg: RunConfig, horizons=None) -> dict:
    """Train one checkpoint per horizon; lags and graph are derived first if absent."""
    ws = Workspace(cfg)
    sites, _, values, test_start = ws.load()
    _ensure_lags_and_graph(cfg, ws)
    lags = read_lags(ws.lags, cfg.tau)
    graph = read_edge_list(ws.graph)
    ids = [s.site_id for s in sites]
    if list(graph.node_ids) != ids:
        raise ValueError(f"{ws.graph}: node ids {list(graph.node_ids)} do not match the data sites {ids}")
    prop = renormalized_propagation(graph)
    scale = float(np.nanmax(values[:, :test_start]))
    if not scale > 0:
        raise ValueError("training data has no positive GHI to scale by")
    root = Rng(cfg.seed)
    summary = {"stage": "train"}
    t0 = time.perf_counter()
    for k in horizons or cfg.horizons:
        train_ds, _ = build_examples(values, lags, k, test_start)
        if len(train_ds) == 0:
            raise ValueError(f"horizon {k}: no complete training windows")
        model = CgaeModel(_model_config(cfg, len(ids), len(lags)), prop, scale)
        result = train(model, train_ds, cfg.epochs, root.substream(_TRAIN * 1000 + k))
        if cfg.epochs > 0:
            fit_output_sigma(model, train_ds, root.substream(_SIGMA * 1000 + k))
        save_checkpoint(model, ws.model(k))
        summary[f"k{k}_examples"] = len(train_ds)
        summary[f"k{k}_loss"] = f"{result.loss[-1]:.6g}" if result.loss else "nan"
    summary["epochs"] = cfg.epochs
    summary["seconds"] = round(time.perf_counter() - t0, 3)
    return summary


def run_forecast(cfg: RunConfig, horizons=None) -> dict:
    """Ensembles for every test instance that also has a full persistence history."""
    ws = Workspace(cfg)
    sites, grid, values, test_start = ws.load()
    lags = read_lags(ws.require(ws.lags, "select-lags"), cfg.tau)
    ids = tuple(s.site_id for s in sites)
    levels = sorted({lv for c in cfg.coverages for lv in ((1 - c) / 2, (1 + c) / 2)})
    root = Rng(cfg.seed)
    summary = {"stage": "forecast", "rho": cfg.rho}
    t0 = time.perf_counter()
    for k in horizons or cfg.horizons:
        model = load_checkpoint(ws.require(ws.model(k), "train"))
        _, test_ds = build_examples(values, lags, k, test_start)
        need = cfg.member_days * 48
        keep = []
        for ex in test_ds:
            if ex.t + k - need < 0:
                continue
            pen = persistence_ensemble(values, ex.t, k, cfg.member_days)
            if np.all(np.isfinite(pen.samples)):
                keep.append((ex, pen))
        if not keep:
            raise ValueError(f"horizon {k}: no test instance has {cfg.member_days} days of history")
        out = ws.forecast_dir(k)
        out.mkdir(parents=True, exist_ok=True)
        n = len(ids)
        ens = open_memmap(out / "ensembles.npy", mode="w+", dtype=np.float64, shape=(len(keep), cfg.rho, n))
        pers = np.empty((len(keep), cfg.member_days, n))
        obs = np.empty((len(keep), n))
        rng = root.substream(_FORECAST * 1000 + k)
        with open(out / "quantiles.csv", "w", newline="", encoding="utf-8") as qf, \
                open(out / "origins.csv", "w", newline="", encoding="utf-8") as of:
            qw = csv.writer(qf, lineterminator="\n")
            qw.writerow(["instance", "timestamp", "node_id", "level", "value"])
            ow = csv.writer(of, lineterminator="\n")
            ow.writerow(["instance", "origin_index", "target_timestamp"])
            for i, (ex, pen) in enumerate(keep):
                stamp = str(grid[ex.t + k])
                fc = generate_ensemble(model, ex.pi, cfg.rho, rng, cfg.add_output_noise, k, stamp, ids)
                ens[i] = fc.samples
                pers[i] = pen.samples
                obs[i] = ex.target
                q = empirical_quantiles(fc, levels)
                for j, node in enumerate(ids):
                    for li, lv in enumerate(q.levels):
                        qw.writerow([i, stamp, node, repr(float(lv)), repr(float(q.values[li, j]))])
                ow.writerow([i, ex.t, stamp])
        ens.flush()
        del ens
        np.save(out / "persistence.npy", pers)
        np.save(out / "observations.npy", obs)
        summary[f"k{k}_instances"] = len(keep)
    summary["seconds"] = round(time.perf_counter() - t0, 3)
    return summary


def run_evaluate(cfg: RunConfig, horizons=None) -> dict:
    """Score CGAE and persistence ensembles with the same metrics and normalization."""
    ws = Workspace(cfg)
    summary = {"stage": "evaluate"}
    for k in horizons or cfg.horizons:
        d = ws.forecast_dir(k)
        ens = np.load(ws.require(d / "ensembles.npy", "forecast"), mmap_mode="r")
        pers = np.load(ws.require(d / "persistence.npy", "forecast"))
        obs = np.load(ws.require(d / "observations.npy", "forecast"))
        vmax = float(obs.max())
        rep = evaluate({k: ens}, {k: obs}, cfg.coverages, max_observed=vmax)
        base = evaluate({k: pers}, {k: obs}, cfg.coverages, max_observed=vmax)
        write_report(rep, ws.report_dir(k))
        write_report(base, ws.report_dir(k, baseline=True))
        top = max(cfg.coverages)
        summary[f"k{k}_instances"] = rep.count[k]
        summary[f"k{k}_crps"] = f"{rep.crps[k]:.6g}"
        summary[f"k{k}_crps_persistence"] = f"{base.crps[k]:.6g}"
        summary[f"k{k}_coverage_{round(top * 100)}"] = f"{rep.coverage_rate[k][top]:.4g}"
        summary[f"k{k}_mean_abs_reliability"] = f"{rep.mean_abs_reliability(k):.4g}"
    return summary


def run_all(cfg: RunConfig, synth: bool = True) -> list[dict]:
    stages = [run_synth] if synth else []
    stages += [run_select_lags, run_build_graph, run_train, run_forecast, run_evaluate]
    return [stage(cfg) for stage in stages]
