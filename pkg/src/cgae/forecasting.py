"""Ensemble generation from a trained CGAE, quantiles, and the persistence ensemble baseline."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import CgaeModel, decode_batch, gfenn_forward
from .rng import Rng

__all__ = [
    "DEFAULT_RHO", "STEPS_PER_DAY", "ForecastEnsemble", "QuantileForecast", "generate_ensemble",
    "empirical_quantiles", "persistence_ensemble", "write_ensemble_csv", "write_quantiles_csv",
    "read_ensemble_csv",
]

DEFAULT_RHO = 10_000
STEPS_PER_DAY = 48  # 30-minute resolution
DEFAULT_MEMBER_DAYS = 20


@dataclass
class ForecastEnsemble:
    samples: np.ndarray  # (rho, n), physical units
    horizon: int
    timestamp: object = None
    node_ids: tuple = ()

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be (rho, n), got {self.samples.shape}")
        if not self.node_ids:
            self.node_ids = tuple(str(i) for i in range(self.samples.shape[1]))

    @property
    def rho(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]


@dataclass
class QuantileForecast:
    levels: np.ndarray  # (L,)
    values: np.ndarray  # (L, n)
    node_ids: tuple = ()


def generate_ensemble(model: CgaeModel, pi, rho: int = DEFAULT_RHO, rng: Rng | None = None,
                      add_output_noise: bool = False, horizon: int = 0, timestamp=None,
                      node_ids: Sequence[str] = ()) -> ForecastEnsemble:
    """Draw ``rho`` forecasts: z ~ N(0, I) through the decoder, R(G) computed once.

    ``pi`` is in physical units. Outputs are rescaled to physical units and
    clipped at 0. With ``add_output_noise`` each sample also gets Gaussian
    noise in scaled units before rescaling; its std is ``model.output_sigma``
    when fitted, otherwise ``sigma_dec``.
    """
    if rho < 2:
        raise ValueError("rho must be at least 2 for quantiles to be defined")
    rng = rng if rng is not None else Rng(model.config.seed)
    r_g = gfenn_forward(model, np.asarray(pi, dtype=np.float64) / model.scale).data
    z = rng.normal((rho, model.config.d))
    out = decode_batch(model, r_g, z)
    if add_output_noise:
        sigma = model.output_sigma if model.output_sigma is not None else model.config.sigma_dec
        out = out + sigma * rng.normal(out.shape)
    samples = np.maximum(out * model.scale, 0.0)
    return ForecastEnsemble(samples, horizon, timestamp, tuple(node_ids))


def _interp_quantiles(sorted_samples: np.ndarray, levels: np.ndarray) -> np.ndarray:
    rho = sorted_samples.shape[0]
    pos = levels * (rho - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, rho - 1)
    frac = (pos - lo)[:, None]
    return sorted_samples[lo] + frac * (sorted_samples[hi] - sorted_samples[lo])


def empirical_quantiles(ens: ForecastEnsemble | np.ndarray, levels: Sequence[float]) -> QuantileForecast:
    """Per-node quantiles by linear interpolation at zero-based rank p * (rho - 1)."""
    samples = ens.samples if isinstance(ens, ForecastEnsemble) else np.asarray(ens, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    lv = np.asarray(levels, dtype=np.float64)
    if np.any((lv <= 0) | (lv >= 1)) or np.any(np.diff(lv) < 0):
        raise ValueError("levels must be sorted and lie strictly inside (0, 1)")
    values = _interp_quantiles(np.sort(samples, axis=0), lv)
    ids = ens.node_ids if isinstance(ens, ForecastEnsemble) else ()
    return QuantileForecast(lv, values, ids)


def persistence_ensemble(history, t: int, horizon: int, member_days: int = DEFAULT_MEMBER_DAYS,
                         steps_per_day: int = STEPS_PER_DAY, node_ids: Sequence[str] = (),
                         timestamp=None) -> ForecastEnsemble:
    """Members are the observations at the target's clock time on each of the previous days.

    ``history`` is (n, T) on the shared time axis, ``t`` the forecast origin
    index. The target index is ``t + horizon``; member ``m`` is the value at
    ``t + horizon - m * steps_per_day`` for ``m = 1..member_days``.
    """
    x = np.asarray(history, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if member_days < 1:
        raise ValueError("member_days must be >= 1")
    target = t + horizon
    first = target - member_days * steps_per_day
    if first < 0:
        raise ValueError(
            f"persistence ensemble needs {member_days} days ({member_days * steps_per_day} steps) "
            f"of history before index {target}; only {target} available"
        )
    idx = target - steps_per_day * np.arange(1, member_days + 1)
    if np.any(idx > t):
        raise ValueError("horizon longer than a day: members would come from the future")
    return ForecastEnsemble(x[:, idx].T.copy(), horizon, timestamp, tuple(node_ids))


def write_ensemble_csv(ens: ForecastEnsemble, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "sample_index", "value"])
        for j, node in enumerate(ens.node_ids):
            for s in range(ens.rho):
                w.writerow([node, s, repr(float(ens.samples[s, j]))])


def read_ensemble_csv(path, horizon: int = 0) -> ForecastEnsemble:
    rows: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["node_id"], {})[int(rec["sample_index"])] = float(rec["value"])
    ids = tuple(rows)
    rho = max(len(v) for v in rows.values())
    samples = np.array([[rows[node][s] for node in ids] for s in range(rho)])
    return ForecastEnsemble(samples, horizon, None, ids)


def write_quantiles_csv(q: QuantileForecast, path) -> None:
    ids = q.node_ids or tuple(str(i) for i in range(q.values.shape[1]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "level", "value"])
        for j, node in enumerate(ids):
            for i, level in enumerate(q.levels):
                w.writerow([node, repr(float(level)), repr(float(q.values[i, j]))])
