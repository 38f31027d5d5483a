"""Convolutional graph auto-encoder: graph feature extractor, encoder, decoder, training.

Shapes: ``pi`` is (n, F), the graph representation R(G) is (n, H), the
encoder outputs two (d,) vectors and the decoder returns an (n,) vector.
Inputs and targets are divided by ``model.scale`` before entering the
network; decoder outputs are in those scaled units.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .features import Dataset
from .rng import Rng

logger = logging.getLogger(__name__)

LOGVAR_CLAMP = 30.0
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n: int
    F: int
    d: int = 4
    L_G: int = 2
    L_Q: int = 3
    L_P: int = 4
    gfenn_width: int = 8
    hidden_width: int = 32
    encoder_widths: tuple[int, ...] | None = None
    decoder_widths: tuple[int, ...] | None = None
    eta: float = 5e-4
    sigma_dec: float = 0.1
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        errors = []
        for name in ("n", "F", "d", "L_G", "L_Q", "L_P", "gfenn_width", "hidden_width", "batch_size"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.eta > 0:
            errors.append(f"eta must be > 0, got {self.eta}")
        if not self.sigma_dec > 0:
            errors.append(f"sigma_dec must be > 0, got {self.sigma_dec}")
        for name, depth in (("encoder_widths", self.L_Q), ("decoder_widths", self.L_P)):
            widths = getattr(self, name)
            if widths is not None:
                widths = tuple(int(w) for w in widths)
                object.__setattr__(self, name, widths)
                if len(widths) != depth or min(widths) < 1:
                    errors.append(f"{name} must list {depth} positive widths, got {widths}")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def encoder_layout(self) -> tuple[int, ...]:
        return self.encoder_widths or (self.hidden_width,) * self.L_Q

    @property
    def decoder_layout(self) -> tuple[int, ...]:
        return self.decoder_widths or (self.hidden_width,) * self.L_P


def geometric_widths(n_in: int, n_out: int, layers: int) -> tuple[int, ...]:
    """Hidden widths spaced geometrically between the input and output sizes.

    Usable for ``encoder_widths``/``decoder_widths``; narrow tail layers tend
    to lose ReLU units under plain SGD, hence the constant default.
    """
    ratio = n_out / n_in
    return tuple(max(1, int(round(n_in * ratio ** (i / (layers + 1))))) for i in range(1, layers + 1))


def _glorot(rng: Rng, fan_in: int, fan_out: int, name: str) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform_range(-bound, bound, (fan_in, fan_out)), name)


class CgaeModel:
    """All learnable weights plus the fixed propagation matrix and GHI scale.

    ``output_sigma`` is the std of the additive output noise used when
    sampling with noise on; ``None`` means fall back to ``sigma_dec``.
    """

    def __init__(self, config: ModelConfig, propagation: np.ndarray, scale: float = 1.0,
                 params: dict[str, Tensor] | None = None, output_sigma: float | None = None):
        m = np.asarray(propagation, dtype=np.float64)
        if m.shape != (config.n, config.n):
            raise ValueError(f"propagation matrix {m.shape} does not match n={config.n}")
        if not scale > 0:
            raise ValueError("scale must be positive")
        self.config = config
        self.propagation = m
        self.scale = float(scale)
        self.params = params if params is not None else self._init_params(Rng(config.seed))
        self.output_sigma = output_sigma
        self._m = Tensor(m, "M")

    def _init_params(self, rng: Rng) -> dict[str, Tensor]:
        c = self.config
        p: dict[str, Tensor] = {}
        width = c.F
        for k in range(1, c.L_G + 1):
            p[f"gfenn.W{k}"] = _glorot(rng, width, c.gfenn_width, f"gfenn.W{k}")
            width = c.gfenn_width

        def dense(prefix: str, n_in: int, n_out: int):
            p[f"{prefix}.W"] = _glorot(rng, n_in, n_out, f"{prefix}.W")
            p[f"{prefix}.b"] = Tensor(np.zeros((1, n_out)), f"{prefix}.b")

        width = c.n * c.gfenn_width + c.n
        for i, w in enumerate(c.encoder_layout, 1):
            dense(f"enc.h{i}", width, w)
            width = w
        dense("enc.mu", width, c.d)
        dense("enc.logvar", width, c.d)

        width = c.n * c.gfenn_width + c.d
        for i, w in enumerate(c.decoder_layout, 1):
            dense(f"dec.h{i}", width, w)
            width = w
        dense("dec.out", width, c.n)
        return p

    @property
    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def copy(self) -> "CgaeModel":
        params = {k: Tensor(v.data.copy(), k) for k, v in self.params.items()}
        return CgaeModel(self.config, self.propagation.copy(), self.scale, params, self.output_sigma)

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())


def _dense_stack(model: CgaeModel, h: Tensor, prefix: str, depth: int) -> Tensor:
    for i in range(1, depth + 1):
        h = ad.relu(h @ model[f"{prefix}.h{i}.W"] + model[f"{prefix}.h{i}.b"])
    return h


def _linear(model: CgaeModel, h: Tensor, prefix: str) -> Tensor:
    return h @ model[f"{prefix}.W"] + model[f"{prefix}.b"]


def gfenn_forward(model: CgaeModel, pi) -> Tensor:
    """R(G) = O^{L_G} with O^k = ReLU(M O^{k-1} W^k) and O^0 = pi (already scaled)."""
    o = pi if isinstance(pi, Tensor) else Tensor(pi)
    c = model.config
    if o.shape != (c.n, c.F):
        raise ad.ShapeError(f"pi has shape {o.shape}, expected {(c.n, c.F)}")
    for k in range(1, c.L_G + 1):
        o = ad.relu(model._m @ o @ model[f"gfenn.W{k}"])
    return o


def encode(model: CgaeModel, r_g: Tensor, target) -> tuple[Tensor, Tensor]:
    """Encoder Q: (mu', log sigma'^2) of the latent posterior, each of shape (d,)."""
    c = model.config
    target = target if isinstance(target, Tensor) else Tensor(target)
    if target.shape != (c.n,):
        raise ad.ShapeError(f"target has shape {target.shape}, expected {(c.n,)}")
    h = ad.concat([ad.reshape(r_g, (1, r_g.size)), ad.reshape(target, (1, c.n))], axis=1)
    h = _dense_stack(model, h, "enc", c.L_Q)
    mu = ad.reshape(_linear(model, h, "enc.mu"), (c.d,))
    logvar = ad.reshape(_linear(model, h, "enc.logvar"), (c.d,))
    return mu, logvar


@dataclass
class LatentSample:
    z: Tensor
    alpha: np.ndarray


def reparameterize(mu: Tensor, logvar: Tensor, rng: Rng) -> LatentSample:
    """z = mu' + alpha * exp(logvar / 2) with alpha ~ N(0, I) held constant for gradients."""
    alpha = np.asarray(rng.normal(mu.shape), dtype=np.float64)
    sigma = ad.exp(ad.scale(ad.clip(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP), 0.5))
    return LatentSample(mu + Tensor(alpha) * sigma, alpha)


def decode(model: CgaeModel, r_g: Tensor, z) -> Tensor:
    """Decoder mean mu(pi, z), shape (n,), in scaled units."""
    c = model.config
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.size != c.d:
        raise ad.ShapeError(f"latent has {z.size} entries, expected d={c.d}")
    h = ad.concat([ad.reshape(r_g, (1, r_g.size)), ad.reshape(z, (1, c.d))], axis=1)
    h = _dense_stack(model, h, "dec", c.L_P)
    return ad.reshape(_linear(model, h, "dec.out"), (c.n,))


def decode_batch(model: CgaeModel, r_g: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorized decoder for many latents at once: z (S, d) -> (S, n). No gradients."""
    c = model.config
    z = np.asarray(z, dtype=np.float64).reshape(-1, c.d)
    flat = np.broadcast_to(np.asarray(r_g, dtype=np.float64).reshape(1, -1), (z.shape[0], r_g.size))
    h = np.concatenate([flat, z], axis=1)
    for i in range(1, c.L_P + 1):
        h = np.maximum(h @ model[f"dec.h{i}.W"].data + model[f"dec.h{i}.b"].data, 0.0)
    return h @ model["dec.out.W"].data + model["dec.out.b"].data


def kl_loss(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, diag exp(logvar)) || N(0, I)) = 1/2 sum(-logvar - 1 + exp(logvar) + mu^2)."""
    lv = ad.clip(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    terms = ad.exp(lv) - lv + ad.square(mu) - 1.0
    return ad.scale(ad.tsum(terms), 0.5)


def recon_loss(target, v_hat: Tensor) -> Tensor:
    """Squared error summed over nodes."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if target.shape != v_hat.shape:
        raise ad.ShapeError(f"recon_loss: shape mismatch {target.shape} vs {v_hat.shape}")
    return ad.tsum(ad.square(target - v_hat))


@dataclass
class LossTerms:
    total: Tensor
    kl: Tensor
    recon: Tensor


def example_loss(model: CgaeModel, pi: np.ndarray, target: np.ndarray, rng: Rng) -> LossTerms:
    """Forward pass for one (pi, target) pair in scaled units; records on the active tape."""
    r_g = gfenn_forward(model, pi)
    mu, logvar = encode(model, r_g, target)
    sample = reparameterize(mu, logvar, rng)
    v_hat = decode(model, r_g, sample.z)
    kl = kl_loss(mu, logvar)
    recon = recon_loss(target, v_hat)
    weight = 1.0 / (2.0 * model.config.sigma_dec ** 2)
    return LossTerms(kl + ad.scale(recon, weight), kl, recon)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    loss: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)
    recon: list[float] = field(default_factory=list)


def train(model: CgaeModel, dataset: Dataset, epochs: int, rng: Rng,
          log_every: int = 0) -> TrainResult:
    """Stochastic gradient descent on kl + recon / (2 sigma_dec^2), in place.

    Examples are visited in a fresh seeded permutation each epoch. The
    returned trace holds per-epoch means of the total loss and of each term.
    """
    result = TrainResult()
    if epochs <= 0:
        return result
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    c = model.config
    params = model.parameters
    pis = dataset.pis / model.scale
    targets = dataset.targets / model.scale
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        tot = kl_sum = rec_sum = 0.0
        for start in range(0, len(order), c.batch_size):
            batch = order[start:start + c.batch_size]
            acc = None
            for j in batch:
                with Tape() as tape:
                    terms = example_loss(model, pis[j], targets[j], rng)
                value = float(terms.total.data)
                if not math.isfinite(value):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, example {int(j)}")
                grads = tape.backward(terms.total, params)
                if acc is None:
                    acc = {id(p): grads[id(p)] for p in params}
                else:
                    for p in params:
                        acc[id(p)] = acc[id(p)] + grads[id(p)]
                tot += value
                kl_sum += float(terms.kl.data)
                rec_sum += float(terms.recon.data)
            if len(batch) > 1:
                acc = {k: v / len(batch) for k, v in acc.items()}
            try:
                ad.sgd_step(params, acc, c.eta, iteration=step)
            except ad.NonFiniteGradientError as err:
                raise TrainingError(f"epoch {epoch}: {err}") from err
            step += 1
        n = len(dataset)
        result.loss.append(tot / n)
        result.kl.append(kl_sum / n)
        result.recon.append(rec_sum / n)
        if log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d loss %.6f kl %.6f recon %.6f", epoch + 1, result.loss[-1],
                        result.kl[-1], result.recon[-1])
    return result


def fit_output_sigma(model: CgaeModel, dataset: Dataset, rng: Rng, draws: int = 1) -> float:
    """Maximum-likelihood std of the additive output noise, in scaled units.

    RMS over examples and nodes of target minus decoder output with
    z ~ N(0, I), i.e. the homoscedastic Gaussian fit of what the latent
    path leaves unexplained. Sets and returns ``model.output_sigma``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot fit output noise on an empty dataset")
    sq = 0.0
    count = 0
    for ex in dataset:
        r_g = gfenn_forward(model, ex.pi / model.scale).data
        out = decode_batch(model, r_g, rng.normal((draws, model.config.d)))
        resid = ex.target / model.scale - out
        sq += float((resid * resid).sum())
        count += resid.size
    model.output_sigma = math.sqrt(sq / count)
    return model.output_sigma


def save_checkpoint(model: CgaeModel, path) -> None:
    """Text checkpoint; floats are stored as hex so reloads are bit-exact."""
    doc = {
        "format": "cgae-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "scale": model.scale.hex(),
        "output_sigma": None if model.output_sigma is None else float(model.output_sigma).hex(),
        "propagation": _pack(model.propagation),
        "params": {name: _pack(t.data) for name, t in model.params.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> CgaeModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "cgae-checkpoint":
        raise ValueError(f"{path}: not a CGAE checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    cfg = dict(doc["config"])
    for key in ("encoder_widths", "decoder_widths"):
        if cfg.get(key) is not None:
            cfg[key] = tuple(cfg[key])
    config = ModelConfig(**cfg)
    params = {name: Tensor(_unpack(blob), name) for name, blob in doc["params"].items()}
    sigma = doc.get("output_sigma")
    model = CgaeModel(config, _unpack(doc["propagation"]), float.fromhex(doc["scale"]), params,
                      None if sigma is None else float.fromhex(sigma))
    fresh = CgaeModel(config, model.propagation, model.scale, None)
    for name, t in fresh.params.items():
        if name not in params or params[name].shape != t.shape:
            raise ValueError(f"{path}: parameter {name} missing or mis-shaped")
    return model


def _pack(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": [float(v).hex() for v in arr.ravel()]}


def _unpack(blob: dict) -> np.ndarray:
    return np.array([float.fromhex(v) for v in blob["data"]], dtype=np.float64).reshape(blob["shape"])
