"""Site GHI series: CSV ingest/export, alignment, and a synthetic generator."""

from __future__ import annotations

import csv
import logging
import math
from datetime import datetime, timezone
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .rng import Rng

__all__ = [
    "STEP", "SiteSeries", "IngestError", "ingest_csv", "export_csv", "align",
    "SynthConfig", "synth_generate", "clear_sky", "parse_timestamp",
]

logger = logging.getLogger(__name__)

STEP = np.timedelta64(30, "m")
CSV_HEADER = ["site_id", "latitude", "longitude", "timestamp", "ghi"]


class IngestError(ValueError):
    pass


@dataclass
class SiteSeries:
    site_id: str
    latitude: float
    longitude: float
    timestamps: np.ndarray  # datetime64[m], uniform 30-min grid
    values: np.ndarray  # GHI W/m^2, NaN where missing

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[m]")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.timestamps.shape != self.values.shape:
            raise ValueError("timestamps and values differ in length")
        if self.timestamps.size > 1 and np.any(np.diff(self.timestamps) != STEP):
            raise ValueError(f"site {self.site_id}: timestamps are not a uniform 30-minute grid")
        if np.any(self.values[np.isfinite(self.values)] < 0):
            raise ValueError(f"site {self.site_id}: negative GHI")

    def __len__(self):
        return self.values.size

    @property
    def missing(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.values)))


def parse_timestamp(text: str) -> np.datetime64:
    """ISO-8601 timestamp to a naive UTC datetime64[m]; offsets and a trailing Z are resolved."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(timezone.utc).replace(tzinfo=None)
    if stamp.second or stamp.microsecond:
        raise IngestError(f"timestamp {text} is not on a whole minute")
    return np.datetime64(stamp, "m")


def ingest_csv(path) -> list[SiteSeries]:
    """Read ``site_id,latitude,longitude,timestamp,ghi`` rows into one series per site.

    Rows are grouped by site and sorted; gaps in the 30-minute grid become
    NaN. Negative GHI rows are dropped with a warning. Duplicate
    (site, timestamp) pairs and off-grid timestamps raise IngestError.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise IngestError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        sites: dict[str, dict] = {}
        rejected = 0
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            site, lat, lon, ts, ghi = (c.strip() for c in row)
            value = float(ghi) if ghi not in ("", "nan", "NaN") else math.nan
            if value < 0:
                logger.warning("%s:%d: negative GHI %s at site %s rejected", path, lineno, ghi, site)
                rejected += 1
                continue
            rec = sites.setdefault(site, {"lat": float(lat), "lon": float(lon), "rows": {}})
            t = parse_timestamp(ts)
            if t in rec["rows"]:
                raise IngestError(f"{path}:{lineno}: duplicate row for site {site!r} at {ts}")
            rec["rows"][t] = value
    if not sites:
        logger.warning("%s: no data rows", path)
        return []
    out = []
    for site, rec in sites.items():
        times = np.array(sorted(rec["rows"]), dtype="datetime64[m]")
        offsets = (times - times[0]) % STEP
        bad = times[offsets != np.timedelta64(0, "m")]
        if bad.size:
            raise IngestError(f"{path}: site {site!r} has off-grid timestamps: {', '.join(map(str, bad[:10]))}")
        steps = ((times - times[0]) // STEP).astype(np.int64)
        grid = times[0] + STEP * np.arange(steps[-1] + 1)
        values = np.full(grid.size, np.nan)
        values[steps] = [rec["rows"][t] for t in times]
        series = SiteSeries(site, rec["lat"], rec["lon"], grid, values)
        out.append(series)
    logger.info("%s: %d sites, %d rows rejected, %d missing steps", path, len(out), rejected,
                sum(s.missing for s in out))
    return out


def export_csv(sites: Sequence[SiteSeries], path) -> None:
    """Write sites in the ingest schema; missing steps are omitted."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in sites:
            for t, v in zip(s.timestamps, s.values):
                if np.isfinite(v):
                    w.writerow([s.site_id, repr(float(s.latitude)), repr(float(s.longitude)),
                                str(t.astype("datetime64[m]")), repr(float(v))])


def align(sites: Sequence[SiteSeries]) -> tuple[np.ndarray, np.ndarray]:
    """Stack sites on their union time axis: returns (timestamps, values (n, T)) with NaN gaps."""
    if not sites:
        raise ValueError("no sites to align")
    start = min(s.timestamps[0] for s in sites)
    stop = max(s.timestamps[-1] for s in sites)
    for s in sites:
        if (s.timestamps[0] - start) % STEP != np.timedelta64(0, "m"):
            raise ValueError(f"site {s.site_id} is not on the shared 30-minute grid")
    grid = start + STEP * np.arange(int((stop - start) // STEP) + 1)
    values = np.full((len(sites), grid.size), np.nan)
    for i, s in enumerate(sites):
        off = int((s.timestamps[0] - start) // STEP)
        values[i, off:off + s.values.size] = s.values
    return grid, values


@dataclass(frozen=True)
class SynthConfig:
    nodes: int = 5
    days: int = 60
    noise: float = 1.0
    seed: int = 0
    peak: float = 1000.0  # clear-sky noon GHI, W/m^2
    sunrise: float = 6.0  # hours
    sunset: float = 18.0
    cloud_persistence: float = 0.97  # AR(1) coefficient per 30-min step
    cloud_depth: float = 0.7  # max fractional attenuation at noise=1
    correlation_length: float = 1.0  # degrees
    jitter: float = 0.05  # heteroscedastic multiplicative noise at noise=1
    extent: float = 2.0  # degrees spanned by node positions
    start: str = "2016-01-01T00:00"
    colocated: tuple[int, ...] = field(default=())


def clear_sky(hours: np.ndarray, peak: float, sunrise: float, sunset: float) -> np.ndarray:
    """Half-sine daylight profile, exactly zero outside (sunrise, sunset)."""
    phase = (np.asarray(hours) - sunrise) / (sunset - sunrise)
    out = peak * np.sin(np.pi * phase)
    return np.where((phase > 0) & (phase < 1), out, 0.0)


def synth_generate(cfg: SynthConfig = SynthConfig()) -> tuple[list[SiteSeries], dict]:
    """Clear-sky diurnal profile attenuated by a spatially correlated cloud process.

    Per node i and step t:

        g_t = phi * g_{t-1} + sqrt(1 - phi^2) * L eta_t      (eta_t ~ N(0, I))
        kt  = 1 - noise * depth * Phi(g_{i,t})
        ghi = clear(t) * kt * (1 + noise * jitter * eps_{i,t})  clipped at 0

    with L the Cholesky factor of exp(-dist / correlation_length) and Phi the
    standard normal CDF. The returned description records every parameter,
    node position and the latent cloud path, so conditional distributions can
    be recomputed by simulation.
    """
    if cfg.nodes < 2 or cfg.days < 2:
        raise ValueError("synth needs at least 2 nodes and 2 days")
    rng = Rng(cfg.seed)
    pos = rng.uniform_range(0.0, cfg.extent, (cfg.nodes, 2))
    for i in cfg.colocated:
        pos[i] = pos[0]
    lat = 42.0 + pos[:, 0]
    lon = -87.0 + pos[:, 1]
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
    cov = np.exp(-dist / cfg.correlation_length)
    chol = np.linalg.cholesky(cov + 1e-12 * np.eye(cfg.nodes))
    T = cfg.days * 48
    phi = cfg.cloud_persistence
    eta = rng.normal((T, cfg.nodes)) @ chol.T
    g = np.empty((T, cfg.nodes))
    g[0] = eta[0]
    innov = math.sqrt(1.0 - phi * phi)
    for t in range(1, T):
        g[t] = phi * g[t - 1] + innov * eta[t]
    eps = rng.normal((T, cfg.nodes))
    hours = (np.arange(T) % 48) / 2.0
    clear = clear_sky(hours, cfg.peak, cfg.sunrise, cfg.sunset)
    kt = 1.0 - cfg.noise * cfg.cloud_depth * ndtr(g)
    ghi = np.maximum(clear[:, None] * kt * (1.0 + cfg.noise * cfg.jitter * eps), 0.0)
    times = np.datetime64(cfg.start, "m") + STEP * np.arange(T)
    sites = [
        SiteSeries(f"site{i:02d}", float(lat[i]), float(lon[i]), times, ghi[:, i].copy())
        for i in range(cfg.nodes)
    ]
    description = {
        "model": "clear-sky half-sine x (1 - noise*depth*Phi(g)) x (1 + noise*jitter*eps)",
        "config": cfg,
        "positions": pos,
        "spatial_covariance": cov,
        "cloud_state": g,
        "clear_sky": clear,
    }
    return sites, description
