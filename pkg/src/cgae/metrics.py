"""Reliability, sharpness (PIAW), histogram entropy and CRPS for ensemble forecasts."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "DEFAULT_COVERAGES", "reliability_bias", "piaw", "crps_empirical", "crps_ensemble",
    "pdf_entropy", "EvaluationReport", "evaluate", "write_report",
]

DEFAULT_COVERAGES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_ENTROPY_BINS = 32


def reliability_bias(observations, intervals, alpha: float) -> float:
    """Observed minus nominal coverage of the central (1 - 2 alpha) interval, in percent.

    ``intervals`` is an (N, 2) array of (lower, upper); endpoints count as covered.
    """
    v = np.asarray(observations, dtype=np.float64).ravel()
    iv = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
    if v.size == 0:
        raise ValueError("reliability_bias needs at least one observation")
    if iv.shape[0] != v.size:
        raise ValueError(f"{v.size} observations but {iv.shape[0]} intervals")
    if np.any(iv[:, 0] > iv[:, 1]):
        raise ValueError("interval lower bound exceeds upper bound")
    covered = int(np.count_nonzero((iv[:, 0] <= v) & (v <= iv[:, 1])))
    # percent first: exact-decimal cases such as 85/100 vs 90% stay exact
    return 100.0 * covered / v.size - 100.0 * (1.0 - 2.0 * alpha)


def piaw(quantile_pairs) -> float:
    """Mean width |q_alpha - q_(1-alpha)| over test samples."""
    q = np.asarray(quantile_pairs, dtype=np.float64).reshape(-1, 2)
    if q.shape[0] == 0:
        raise ValueError("piaw needs at least one quantile pair")
    return math.fsum(np.abs(q[:, 0] - q[:, 1])) / q.shape[0]


def crps_empirical(samples, v: float) -> float:
    """CRPS of the empirical ensemble CDF against observation ``v``.

    Energy form mean|X - v| - mean|X - X'| / 2, evaluated in O(rho log rho)
    through the sorted-sample identity for the pairwise term.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    m = x.size
    if m == 0:
        raise ValueError("crps needs at least one sample")
    first = np.abs(x - v).mean()
    # sum_{s,s'} |x_s - x_s'| = 2 sum_i (2i - m + 1) x_(i), zero-based i
    pair = 2.0 * np.dot(2.0 * np.arange(m) - m + 1.0, x)
    return float(first - pair / (2.0 * m * m))


def crps_ensemble(samples, observations) -> np.ndarray:
    """Vectorized CRPS: samples (rho, N), observations (N,) -> (N,)."""
    x = np.sort(np.asarray(samples, dtype=np.float64), axis=0)
    v = np.asarray(observations, dtype=np.float64).ravel()
    m = x.shape[0]
    first = np.abs(x - v[None, :]).mean(axis=0)
    weights = 2.0 * np.arange(m) - m + 1.0
    pair = 2.0 * (weights @ x)
    return first - pair / (2.0 * m * m)


class DegenerateEnsembleWarning(UserWarning):
    pass


def pdf_entropy(samples, bins: int = DEFAULT_ENTROPY_BINS) -> float:
    """Shannon entropy (nats) of the equal-width histogram over the samples' [min, max]."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < bins:
        raise ValueError(f"need at least {bins} samples for {bins} bins")
    lo, hi = x.min(), x.max()
    if lo == hi:
        warnings.warn("constant ensemble: entropy is 0", DegenerateEnsembleWarning, stacklevel=2)
        return 0.0
    idx = np.clip(np.floor((x - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
    p = np.bincount(idx, minlength=bins) / x.size
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


@dataclass
class EvaluationReport:
    """Metric tables keyed by horizon.

    ``reliability[k][c]`` is the node-averaged bias (percent) of the nominal
    coverage ``c``; ``piaw`` and ``piaw_normalized`` likewise; ``crps[k]``
    is the mean CRPS; ``entropy_hist[k]`` holds (edges, counts) of the
    per-forecast entropies.
    """

    coverages: tuple[float, ...]
    reliability: dict[int, dict[float, float]] = field(default_factory=dict)
    coverage_rate: dict[int, dict[float, float]] = field(default_factory=dict)
    piaw: dict[int, dict[float, float]] = field(default_factory=dict)
    piaw_normalized: dict[int, dict[float, float]] = field(default_factory=dict)
    crps: dict[int, float] = field(default_factory=dict)
    entropy_mean: dict[int, float] = field(default_factory=dict)
    entropy_hist: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    count: dict[int, int] = field(default_factory=dict)

    def mean_abs_reliability(self, horizon: int) -> float:
        return float(np.mean([abs(b) for b in self.reliability[horizon].values()]))


def _coverage_alpha(c: float) -> float:
    return (1.0 - c) / 2.0


def evaluate(forecasts: Mapping[int, Sequence], observations: Mapping[int, np.ndarray],
             coverages: Sequence[float] = DEFAULT_COVERAGES,
             entropy_bins: int = DEFAULT_ENTROPY_BINS, hist_bins: int = 20,
             max_observed: float | None = None) -> EvaluationReport:
    """Score ensembles per horizon.

    ``forecasts[k]`` indexes N test instances, each a (rho, n) ensemble; an
    (N, rho, n) array or memmap works and is read one instance at a time.
    ``observations[k]`` is (N, n). Reliability and PIAW are computed per node
    over the N instances and then averaged over nodes; PIAW is also divided
    by the largest observed value (or ``max_observed``). Entropy uses
    ``min(entropy_bins, rho)`` bins. Sums are exactly rounded, so the report
    does not depend on instance order.
    """
    if set(forecasts) != set(observations):
        raise ValueError("forecasts and observations cover different horizons")
    report = EvaluationReport(tuple(float(c) for c in coverages))
    alphas = np.array([_coverage_alpha(c) for c in report.coverages])
    levels = np.concatenate([alphas, 1.0 - alphas])
    C = len(alphas)
    for k in sorted(forecasts):
        ens_all = forecasts[k]
        obs = np.asarray(observations[k], dtype=np.float64)
        N = len(ens_all)
        if obs.ndim != 2 or obs.shape[0] != N:
            raise ValueError(f"horizon {k}: {N} forecasts but observations shaped {obs.shape}")
        if N == 0:
            raise ValueError(f"horizon {k}: no test instances")
        n = obs.shape[1]
        lower = np.empty((C, N, n))
        upper = np.empty((C, N, n))
        crps = np.empty((N, n))
        ent = np.empty((N, n))
        eb = min(entropy_bins, len(ens_all[0]))
        for i in range(N):
            e = np.asarray(ens_all[i], dtype=np.float64)
            if e.ndim != 2 or e.shape[1] != n:
                raise ValueError(f"horizon {k}, instance {i}: ensemble {e.shape} does not match {n} nodes")
            srt = np.sort(e, axis=0)
            q = _interp_sorted(srt, levels)
            lower[:, i] = q[:C]
            upper[:, i] = q[C:]
            crps[i] = _crps_sorted(srt, obs[i])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateEnsembleWarning)
                ent[i] = [pdf_entropy(srt[:, j], eb) for j in range(n)]
        vmax = float(max_observed) if max_observed is not None else float(obs.max())
        rel, cov, width, width_n = {}, {}, {}, {}
        for ci, c in enumerate(report.coverages):
            biases, widths = [], []
            for j in range(n):
                iv = np.stack([lower[ci, :, j], upper[ci, :, j]], axis=1)
                biases.append(reliability_bias(obs[:, j], iv, alphas[ci]))
                widths.append(piaw(iv))
            rel[c] = math.fsum(biases) / n
            cov[c] = rel[c] + c * 100.0
            width[c] = math.fsum(widths) / n
            width_n[c] = width[c] / vmax if vmax > 0 else float("nan")
        report.reliability[k] = rel
        report.coverage_rate[k] = cov
        report.piaw[k] = width
        report.piaw_normalized[k] = width_n
        report.crps[k] = math.fsum(crps.ravel()) / crps.size
        report.entropy_mean[k] = math.fsum(ent.ravel()) / ent.size
        counts, edges = np.histogram(ent, bins=hist_bins, range=(0.0, float(np.log(entropy_bins))))
        report.entropy_hist[k] = (edges, counts)
        report.count[k] = N
    return report


def _interp_sorted(srt: np.ndarray, levels: np.ndarray) -> np.ndarray:
    rho = srt.shape[0]
    pos = levels * (rho - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, rho - 1)
    frac = (pos - lo)[:, None]
    return srt[lo] + frac * (srt[hi] - srt[lo])


def _crps_sorted(srt: np.ndarray, v: np.ndarray) -> np.ndarray:
    m = srt.shape[0]
    first = np.abs(srt - v[None, :]).mean(axis=0)
    pair = 2.0 * ((2.0 * np.arange(m) - m + 1.0) @ srt)
    return first - pair / (2.0 * m * m)


def write_report(report: EvaluationReport, out_dir) -> list[Path]:
    """Write report_<metric>_<horizon>.csv tables and summary.txt; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name: str, k: int, header: list[str], rows):
        path = out / f"report_{name}_{k}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    lines = []
    for k in sorted(report.crps):
        table("reliability", k, ["coverage", "bias_percent", "observed_coverage_percent"],
              [[repr(c), repr(report.reliability[k][c]), repr(report.coverage_rate[k][c])]
               for c in report.coverages])
        table("piaw", k, ["coverage", "piaw", "piaw_normalized"],
              [[repr(c), repr(report.piaw[k][c]), repr(report.piaw_normalized[k][c])]
               for c in report.coverages])
        table("crps", k, ["horizon", "mean_crps", "instances"], [[k, repr(report.crps[k]), report.count[k]]])
        edges, counts = report.entropy_hist[k]
        table("entropy", k, ["bin_lower", "bin_upper", "count"],
              [[repr(float(edges[i])), repr(float(edges[i + 1])), int(counts[i])] for i in range(len(counts))])
        lines.append(
            f"horizon={k} instances={report.count[k]} crps={report.crps[k]:.6g} "
            f"mean_abs_reliability={report.mean_abs_reliability(k):.4f} "
            f"entropy_mean={report.entropy_mean[k]:.4f}"
        )
    summary = out / "summary.txt"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(summary)
    return written
