"""Finite-difference gradient oracle shared by the autodiff, model and acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass
from unittest import mock

import numpy as np

from cgae import autodiff as ad
from cgae.autodiff import Tape
from cgae.model import CgaeModel, ModelConfig, example_loss
from cgae.rng import Rng

STEP = 1e-5
FLOOR = 1e-6  # denominator floor for relative error on near-zero gradients


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), FLOOR)


@dataclass
class GradCheck:
    checked: int
    excluded: list  # (parameter name, flat index)
    worst: float  # largest relative error among checked entries
    worst_at: tuple


def _loss_with_masks(model, pi, target, seed):
    masks = []
    real_relu = ad.relu

    def spy(a):
        masks.append(a.data > 0)
        return real_relu(a)

    with mock.patch.object(ad, "relu", spy):
        with Tape():
            terms = example_loss(model, pi, target, Rng(seed))
    return float(terms.total.data), masks


def model_gradient_check(model: CgaeModel, pi, target, seed: int = 0) -> GradCheck:
    """Compare tape gradients of the full loss with central differences for every entry.

    An entry is excluded when its +/- perturbations change any ReLU on/off
    pattern, i.e. the difference quotient straddles a kink.
    """
    with Tape() as tape:
        terms = example_loss(model, pi, target, Rng(seed))
    grads = tape.backward(terms.total, model.parameters)
    excluded, worst, worst_at, checked = [], 0.0, None, 0
    for name, p in model.params.items():
        g = grads[id(p)].ravel()
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + STEP
            up, m_up = _loss_with_masks(model, pi, target, seed)
            flat[i] = orig - STEP
            down, m_down = _loss_with_masks(model, pi, target, seed)
            flat[i] = orig
            if any(not np.array_equal(a, b) for a, b in zip(m_up, m_down)):
                excluded.append((name, i))
                continue
            e = rel_err(g[i], (up - down) / (2 * STEP))
            checked += 1
            if e > worst:
                worst, worst_at = e, (name, i)
    return GradCheck(checked, excluded, worst, worst_at)


def tiny_model(seed: int = 0, **overrides) -> tuple[CgaeModel, np.ndarray, np.ndarray]:
    """n=3, F=2, d=2, one layer everywhere, widths <= 4, on a path graph."""
    kw = dict(n=3, F=2, d=2, L_G=1, L_Q=1, L_P=1, gfenn_width=2, hidden_width=4, seed=seed)
    kw.update(overrides)
    cfg = ModelConfig(**kw)
    a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    d = a.sum(1) + 1
    m = (a + np.eye(3)) / np.sqrt(np.outer(d, d))
    model = CgaeModel(cfg, m[: cfg.n, : cfg.n])
    rng = np.random.default_rng(seed + 100)
    return model, rng.uniform(0.1, 1.0, (cfg.n, cfg.F)), rng.uniform(0.0, 1.0, cfg.n)
