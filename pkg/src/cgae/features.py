"""Lag selection by histogram mutual information and windowed example building."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DegenerateInputWarning", "LagSelectionError", "LagSet", "Example", "Dataset",
    "mutual_information", "histogram_entropy", "lagged_mi_curve", "select_lags",
    "build_examples", "write_lags", "read_lags",
]

DEFAULT_BINS = 16
DEFAULT_MAX_LAG = 300


class DegenerateInputWarning(UserWarning):
    pass


class LagSelectionError(ValueError):
    pass


def _digitize(x: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = x.min(), x.max()
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)  # max lands in the last bin


def _entropy_from_counts(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def histogram_entropy(x, bins: int = DEFAULT_BINS) -> float:
    """Plug-in entropy (nats) of an equal-width histogram over [min, max]."""
    x = np.asarray(x, dtype=np.float64)
    if x.max() == x.min():
        return 0.0
    return _entropy_from_counts(np.bincount(_digitize(x, bins), minlength=bins))


def mutual_information(x, y, bins: int = DEFAULT_BINS) -> float:
    """Plug-in mutual information (nats) of the equal-width joint histogram.

    Each axis gets ``bins`` cells spanning that variable's observed range.
    A constant input carries no information; the result is 0 and a
    DegenerateInputWarning is emitted.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if bins < 1:
        raise ValueError("bins must be positive")
    if x.size < 2 * bins:
        raise ValueError(f"need at least {2 * bins} samples for {bins} bins, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    if x.max() == x.min() or y.max() == y.min():
        warnings.warn("constant sequence: mutual information is 0", DegenerateInputWarning, stacklevel=2)
        return 0.0
    ix = _digitize(x, bins)
    iy = _digitize(y, bins)
    joint = np.bincount(ix * bins + iy, minlength=bins * bins).reshape(bins, bins)
    pxy = joint / x.size
    px = np.bincount(ix, minlength=bins) / x.size
    py = np.bincount(iy, minlength=bins) / x.size
    nz = pxy > 0
    # exactly rounded sum, so swapping x and y gives the identical float
    mi = math.fsum(pxy[nz] * np.log(pxy[nz] / np.outer(px, py)[nz]))
    return 0.0 if mi < 0.0 else mi


def _segments(series) -> list[np.ndarray]:
    if isinstance(series, np.ndarray) and series.ndim == 1:
        return [series.astype(np.float64)]
    if isinstance(series, np.ndarray) and series.ndim == 2:
        return [row.astype(np.float64) for row in series]
    return [np.asarray(s, dtype=np.float64) for s in series]


def _lagged_pairs(segments: list[np.ndarray], lag: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for seg in segments:
        if seg.size <= lag:
            continue
        cur, past = seg[lag:], seg[:-lag]
        ok = np.isfinite(cur) & np.isfinite(past)
        xs.append(cur[ok])
        ys.append(past[ok])
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ys)


def lagged_mi_curve(series, max_lag: int = DEFAULT_MAX_LAG, bins: int = DEFAULT_BINS) -> np.ndarray:
    """MI between x_t and x_{t-l} for l = 1..max_lag.

    ``series`` may be one 1-D array or several segments (one per node);
    pairs never cross a segment boundary and pairs touching NaN are skipped.
    """
    segments = _segments(series)
    longest = max(seg.size for seg in segments)
    if longest <= max_lag + 1:
        raise LagSelectionError(f"series length {longest} must exceed max_lag + 1 = {max_lag + 1}")
    curve = np.empty(max_lag)
    for lag in range(1, max_lag + 1):
        x, y = _lagged_pairs(segments, lag)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateInputWarning)
            curve[lag - 1] = mutual_information(x, y, bins)
    return curve


@dataclass(frozen=True)
class LagSet:
    lags: tuple[int, ...]
    tau: float
    max_lag: int
    mi: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        lags = tuple(int(l) for l in self.lags)
        if any(l <= 0 for l in lags) or any(b <= a for a, b in zip(lags, lags[1:])):
            raise ValueError(f"lags must be strictly increasing positive integers: {lags}")
        object.__setattr__(self, "lags", lags)

    def __len__(self):
        return len(self.lags)

    def __iter__(self):
        return iter(self.lags)

    def ranked(self) -> list[int]:
        """All candidate lags ordered by decreasing MI (ties by smaller lag)."""
        if not self.mi:
            raise ValueError("LagSet carries no MI curve")
        mi = np.asarray(self.mi)
        return [int(i) + 1 for i in np.lexsort((np.arange(mi.size), -mi))]


def select_lags(series, max_lag: int = DEFAULT_MAX_LAG, tau: float = 0.45,
                bins: int = DEFAULT_BINS) -> LagSet:
    """Keep every lag in 1..max_lag whose lagged MI is at least ``tau``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    curve = lagged_mi_curve(series, max_lag, bins)
    chosen = tuple(int(l) for l in np.flatnonzero(curve >= tau) + 1)
    if not chosen:
        raise LagSelectionError(
            f"no lag reaches MI >= {tau} (max MI {curve.max():.4f} at lag {int(curve.argmax()) + 1}); "
            "lower tau"
        )
    return LagSet(chosen, tau, max_lag, tuple(float(v) for v in curve))


def write_lags(lags: LagSet, path) -> None:
    Path(path).write_text(",".join(str(l) for l in lags.lags) + "\n", encoding="utf-8")


def read_lags(path, tau: float = float("nan")) -> LagSet:
    text = Path(path).read_text(encoding="utf-8").strip()
    lags = tuple(int(tok) for tok in text.split(",") if tok.strip())
    if not lags:
        raise ValueError(f"{path}: empty lag set")
    return LagSet(lags, tau, max(lags))


@dataclass(frozen=True)
class Example:
    pi: np.ndarray  # (n, F) history features
    target: np.ndarray  # (n,) value k steps ahead
    t: int  # index of the forecast origin on the shared time axis


@dataclass
class Dataset:
    examples: list[Example]
    lags: tuple[int, ...]
    horizon: int
    split: str = "all"

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    @property
    def pis(self) -> np.ndarray:
        return np.stack([ex.pi for ex in self.examples])

    @property
    def targets(self) -> np.ndarray:
        return np.stack([ex.target for ex in self.examples])

    @property
    def origins(self) -> np.ndarray:
        return np.array([ex.t for ex in self.examples], dtype=np.int64)


def build_examples(values, lags: LagSet | Sequence[int], horizon: int,
                   test_start: int | None = None) -> tuple[Dataset, Dataset]:
    """Window a (n, T) array of aligned node series into (pi, target) pairs.

    Lags count back from the step right after the forecast origin ``t`` (the
    last observed index): ``pi[i, f] = values[i, t + 1 - lags[f]]``, so lag 1
    is the latest observation, and ``target[i] = values[i, t + horizon]``.
    Windows that touch a NaN are dropped. Examples whose target index is at or
    after ``test_start`` form the test split, the rest the training split.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    lag_tuple = tuple(lags.lags if isinstance(lags, LagSet) else (int(l) for l in lags))
    if not lag_tuple:
        raise ValueError("empty lag set")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    max_lag = max(lag_tuple)
    T = x.shape[1]
    if T < max_lag + horizon:
        raise ValueError(f"series of length {T} too short: need at least max(lags) + k = {max_lag + horizon}")
    lag_arr = np.asarray(lag_tuple)
    finite = np.all(np.isfinite(x), axis=0)
    train, test = [], []
    for t in range(max_lag - 1, T - horizon):
        idx = t + 1 - lag_arr
        if not (finite[idx].all() and finite[t + horizon]):
            continue
        ex = Example(x[:, idx].copy(), x[:, t + horizon].copy(), t)
        if test_start is not None and t + horizon >= test_start:
            test.append(ex)
        else:
            train.append(ex)
    return (Dataset(train, lag_tuple, horizon, "train"), Dataset(test, lag_tuple, horizon, "test"))
