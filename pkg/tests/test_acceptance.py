"""Acceptance checks 1-9, each reported as a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``. The verdict lines appear in
the terminal summary (and on stdout with ``-s``).
"""
import time

import numpy as np
import pytest

from cgae.autodiff import Tensor
from cgae.config import RunConfig
from cgae.data import clear_sky
from cgae.features import select_lags
from cgae.graph import chebyshev_filter, first_order_filter, jacobi_eigh, renormalized_propagation
from cgae.metrics import crps_empirical, evaluate, piaw, reliability_bias
from cgae.model import kl_loss
from cgae.pipeline import Workspace, run_all
from helpers import model_gradient_check, tiny_model
from test_graph import K2, random_graph, spectral_oracle
from test_metrics import covered_intervals, crps_by_integration
from test_model import mc_kl

VERDICTS: list[str] = []


class Criterion:
    """Times a block, records the verdict line, and re-raises failures."""

    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.detail = ""

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        ok = exc_type is None and elapsed < self.budget
        note = self.detail if exc is None else f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        line = (f"criterion {self.number} {'PASS' if ok else 'FAIL'}: {self.title} "
                f"[{elapsed:.1f}s / {self.budget:g}s] {note}").rstrip()
        VERDICTS.append(line)
        print(line)
        if exc_type is None and not ok:
            pytest.fail(f"over time budget: {line}")
        return False


def test_criterion_1_kl_closed_form():
    with Criterion(1, "KL closed form vs 1e6-draw Monte Carlo, 20 cases", 10) as c:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for case in range(20):
            mu = rng.normal(size=4)
            logvar = rng.uniform(-2.0, 1.5, size=4)
            exact = float(kl_loss(Tensor(mu), Tensor(logvar)).data)
            worst = max(worst, abs(mc_kl(mu, logvar, 1_000_000, seed=case) - exact) / exact)
        c.detail = f"worst relative error {worst:.2e}"
        assert worst < 0.01


def test_criterion_2_gradients():
    with Criterion(2, "tiny-model gradients vs central differences", 30) as c:
        model, pi, target = tiny_model(seed=0)
        check = model_gradient_check(model, pi, target, seed=0)
        c.detail = (f"worst relative error {check.worst:.2e} over {check.checked} entries, "
                    f"{len(check.excluded)} excluded at ReLU kinks {list(check.excluded)}")
        assert check.checked > 0 and check.worst < 1e-4


def test_criterion_3_spectral_identity():
    with Criterion(3, "first-order Chebyshev identity and J=3 spectral oracle, 10 graphs", 5) as c:
        worst_first, worst_cheb = 0.0, 0.0
        for seed in range(10):
            rng = np.random.default_rng(300 + seed)
            n = int(rng.integers(2, 11))
            g = random_graph(rng, n)
            x = rng.normal(size=(n, 3))
            delta = float(rng.uniform(0.1, 2.0))
            cheb = chebyshev_filter(g, x, [delta, -delta], gamma_max=2.0)
            worst_first = max(worst_first, float(np.abs(cheb - first_order_filter(g, x, delta)).max()))
            omega = rng.normal(size=4)
            worst_cheb = max(worst_cheb, float(np.abs(chebyshev_filter(g, x, omega)
                                                      - spectral_oracle(g, x, omega)).max()))
        c.detail = f"identity max err {worst_first:.1e}, J=3 max err {worst_cheb:.1e}"
        assert worst_first <= 1e-12 and worst_cheb <= 1e-9


def test_criterion_4_propagation_spectrum():
    with Criterion(4, "renormalized propagation spectrum in [-1, 1], 50 graphs; K2 all 0.5", 5) as c:
        lo, hi = np.inf, -np.inf
        for seed in range(50):
            rng = np.random.default_rng(400 + seed)
            n = int(rng.integers(1, 21))
            g = random_graph(rng, n, float(rng.uniform()), connected=bool(seed % 2))
            vals, _ = jacobi_eigh(renormalized_propagation(g))
            lo, hi = min(lo, vals.min()), max(hi, vals.max())
        k2 = renormalized_propagation(K2)
        c.detail = f"eigenvalues within [{lo:.6f}, {hi:.6f}]"
        assert lo >= -1.0 - 1e-12 and hi <= 1.0 + 1e-12
        assert np.array_equal(k2, np.full((2, 2), 0.5))


def test_criterion_5_crps_oracle():
    with Criterion(5, "energy-form CRPS vs numerical integration, 50 cases", 10) as c:
        worst = 0.0
        for seed in range(50):
            rng = np.random.default_rng(500 + seed)
            x = rng.normal(size=int(rng.integers(1, 201))) * rng.uniform(0.1, 5)
            v = float(rng.normal() * 2)
            worst = max(worst, abs(crps_empirical(x, v) - crps_by_integration(x, v)))
        c.detail = f"max abs error {worst:.1e}"
        assert worst <= 1e-6
        assert crps_empirical([2.5], 2.5) == 0.0 and crps_empirical(np.full(30, 2.5), 2.5) == 0.0


def test_criterion_6_metric_hand_cases():
    with Criterion(6, "reliability and width hand cases, bit-equal", 1):
        assert reliability_bias(*covered_intervals(90, 10), 0.05) == 0.0
        assert reliability_bias(*covered_intervals(85, 15), 0.05) == -5.0
        assert reliability_bias(*covered_intervals(100, 0), 0.25) == 50.0
        assert piaw([[0.0, 1.0], [0.0, 3.0]]) == 2.0
        assert piaw([[4.0, 4.0], [-1.0, -1.0]]) == 0.0


def test_criterion_8_lag_selection():
    with Criterion(8, "top-5 MI lags of a period-48 diurnal signal include 48 and 96", 30) as c:
        hours = (np.arange(48 * 30) % 48) / 2.0
        top = select_lags(clear_sky(hours, 1000.0, 6.0, 18.0), 300, tau=0.0).ranked()[:5]
        c.detail = f"top-5 lags {top}"
        assert 48 in top and 96 in top


# --- end-to-end runs shared by criteria 7 and 9 ----------------------------

@pytest.fixture(scope="module")
def twin_runs(tmp_path_factory):
    runs = []
    for name in ("a", "b"):
        cfg = RunConfig(workdir=str(tmp_path_factory.mktemp(f"run_{name}")))
        start = time.perf_counter()
        run_all(cfg)
        runs.append((cfg, time.perf_counter() - start))
    return runs


def _artifacts(root):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


@pytest.mark.slow
def test_criterion_7_synthetic_skill(twin_runs):
    cfg, elapsed = twin_runs[0]
    with Criterion(7, "synthetic end-to-end: CRPS <= persistence, 90% coverage within 10 pp", 300) as c:
        c.start -= elapsed  # the budget covers the pipeline run itself
        d = Workspace(cfg).forecast_dir(1)
        obs = np.load(d / "observations.npy")
        vmax = float(obs.max())
        rep = evaluate({1: np.load(d / "ensembles.npy", mmap_mode="r")}, {1: obs}, cfg.coverages,
                       max_observed=vmax)
        base = evaluate({1: np.load(d / "persistence.npy")}, {1: obs}, cfg.coverages, max_observed=vmax)
        coverage = rep.coverage_rate[1][0.9]
        c.detail = (f"CRPS {rep.crps[1]:.3f} vs persistence {base.crps[1]:.3f}, "
                    f"90% coverage {coverage:.2f}% over {rep.count[1]} instances")
        assert rep.count[1] >= 500
        assert rep.crps[1] <= base.crps[1]
        assert abs(coverage - 90.0) <= 10.0


@pytest.mark.slow
def test_criterion_9_determinism(twin_runs):
    (a, ta), (b, tb) = twin_runs
    with Criterion(9, "two full runs give byte-identical artifacts", 600) as c:
        c.start -= ta + tb
        ra, rb = a.workdir_path, b.workdir_path
        files = _artifacts(ra)
        assert files == _artifacts(rb)
        names = {p.name for p in files}
        assert {"model_k1.json", "ensembles.npy", "report_crps_1.csv"} <= names
        differing = [str(p) for p in files if (ra / p).read_bytes() != (rb / p).read_bytes()]
        c.detail = f"{len(files)} files compared, {len(differing)} differ"
        assert not differing, differing
