"""
Fully connected autoencoder for normalized tracks, written against numpy.

Architecture (defaults)::

    encoder  60 -> 128 -> 64 -> 32 -> 16     affine, [batch norm], ReLU
    decoder  16 -> 32 -> 64 -> 128 -> 60     affine, [batch norm], ReLU; last layer linear

Batch normalization follows the affine map of layers 0 and 1 on each side.
Gradients are accumulated by hand in reverse order through every layer,
including batch normalization, and applied with Adam.

Synthetic tracks come from scaling a seed track's latent code by random
multipliers in (0, 1] and decoding the result.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from .cluster import SeedPlan
from .trackprep import N_FEATURES, NormalizedTrack

LOGGER = logging.getLogger(__name__)

BN_EPS = 1e-5
# smallest share of normal draws in (0, 1] accepted for rejection sampling
MIN_ACCEPTANCE = 1e-3
FORMAT_VERSION = 1


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite training loss {loss} at epoch {epoch}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 500
    input_noise_std: float = 0.01
    # noise on epochs 1, 1 + period, 1 + 2*period, ... (1-based)
    input_noise_period: int = 2
    bn_momentum: float = 0.9
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for batch normalization")


@dataclass(frozen=True)
class PerturbationConfig:
    mean: float = 0.9
    std: float = 0.1
    independent: bool = True

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be non-negative")
        if self.std == 0 and not 0 < self.mean <= 1:
            raise ValueError("a fixed multiplier must lie in (0, 1]")
        if self.acceptance() < MIN_ACCEPTANCE:
            raise ValueError(f"N({self.mean}, {self.std}^2) puts {self.acceptance():.2g} of its "
                             "mass on (0, 1]; rejection sampling would stall")

    def acceptance(self) -> float:
        """Probability that one normal draw lands in (0, 1]."""
        if self.std == 0:
            return 1.0
        from scipy.stats import norm
        return float(norm.cdf((1 - self.mean) / self.std) - norm.cdf(-self.mean / self.std))


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str  # "relu" or "linear"
    gamma: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None

    @property
    def has_bn(self) -> bool:
        return self.gamma is not None

    def trainable(self) -> dict:
        out = {"W": self.W, "b": self.b}
        if self.has_bn:
            out["gamma"] = self.gamma
            out["beta"] = self.beta
        return out


def _layer_plan(widths: Sequence[int], bn_layers: Sequence[int]):
    n = len(widths) - 1
    plan = []
    for i in range(n):
        plan.append(("enc", i, widths[i], widths[i + 1], i in bn_layers, "relu"))
    rev = list(widths)[::-1]
    for i in range(n):
        last = i == n - 1
        plan.append(("dec", i, rev[i], rev[i + 1], (i in bn_layers) and not last,
                     "linear" if last else "relu"))
    return plan


@dataclass
class Autoencoder:
    """Encoder/decoder stack. ``layers`` holds encoder layers then decoder layers."""

    widths: tuple
    bn_layers: tuple
    layers: list = field(repr=False)

    @classmethod
    def initialize(cls, widths: Sequence[int] = (60, 128, 64, 32, 16),
                   bn_layers: Sequence[int] = (0, 1),
                   rng: Union[int, np.random.Generator, None] = 0) -> "Autoencoder":
        """He-normal weights for ReLU layers, Glorot-normal for the linear output."""
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        if len(widths) < 2:
            raise ValueError("need at least an input and a latent width")
        layers = []
        for _, _, fan_in, fan_out, bn, act in _layer_plan(widths, bn_layers):
            scale = math.sqrt(2.0 / fan_in) if act == "relu" else math.sqrt(2.0 / (fan_in + fan_out))
            layer = Layer(rng.normal(0.0, scale, (fan_in, fan_out)), np.zeros(fan_out), act)
            if bn:
                layer.gamma = np.ones(fan_out)
                layer.beta = np.zeros(fan_out)
                layer.running_mean = np.zeros(fan_out)
                layer.running_var = np.ones(fan_out)
            layers.append(layer)
        return cls(tuple(widths), tuple(bn_layers), layers)

    @property
    def n_encoder(self) -> int:
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    def named_layers(self):
        for i, layer in enumerate(self.layers):
            side = "enc" if i < self.n_encoder else "dec"
            yield f"{side}{i % self.n_encoder}", layer

    def n_parameters(self) -> int:
        return sum(a.size for _, l in self.named_layers() for a in l.trainable().values())

    def copy(self) -> "Autoencoder":
        layers = []
        for l in self.layers:
            layers.append(Layer(l.W.copy(), l.b.copy(), l.activation,
                                *(None if a is None else a.copy()
                                  for a in (l.gamma, l.beta, l.running_mean, l.running_var))))
        return Autoencoder(self.widths, self.bn_layers, layers)

    # -- forward / backward -------------------------------------------------

    def _run(self, layers, x, training, caches, momentum):
        for layer in layers:
            h = x @ layer.W + layer.b
            cache = {"x": x}
            if layer.has_bn:
                if training:
                    mu = h.mean(axis=0)
                    var = h.var(axis=0)
                    if momentum is not None:
                        n = h.shape[0]
                        layer.running_mean[:] = momentum * layer.running_mean + (1 - momentum) * mu
                        layer.running_var[:] = (momentum * layer.running_var
                                                + (1 - momentum) * var * n / max(n - 1, 1))
                else:
                    mu, var = layer.running_mean, layer.running_var
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (h - mu) * inv_std
                cache.update(xhat=xhat, inv_std=inv_std)
                h = layer.gamma * xhat + layer.beta
            if layer.activation == "relu":
                cache["mask"] = h > 0
                h = np.where(cache["mask"], h, 0.0)
            caches.append(cache)
            x = h
        return x

    def encode(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        return self._run(self.layers[:self.n_encoder], self._check(x), training, [], None)

    def decode(self, z: np.ndarray, training: bool = False) -> np.ndarray:
        return self._run(self.layers[self.n_encoder:], np.atleast_2d(z), training, [], None)

    def forward(self, batch: np.ndarray, training: bool = False,
                momentum: Optional[float] = None, caches: Optional[list] = None
                ) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(latents, reconstructions)``.

        In training mode batch normalization uses batch statistics, and running
        statistics are updated only when ``momentum`` is given. Otherwise the
        running statistics are used and the map is a fixed affine function.
        """
        caches = [] if caches is None else caches
        z = self._run(self.layers[:self.n_encoder], self._check(batch), training, caches, momentum)
        out = self._run(self.layers[self.n_encoder:], z, training, caches, momentum)
        return z, out

    def _check(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected rows of length {self.input_dim}, got {x.shape[1]}")
        return x

    def loss_and_grads(self, batch: np.ndarray, target: np.ndarray,
                       momentum: Optional[float] = None) -> tuple[float, list]:
        """MSE loss (mean over all elements) and per-layer gradient dicts.

        Batch statistics are used for batch normalization (training mode).
        """
        caches: list = []
        _, out = self.forward(batch, training=True, momentum=momentum, caches=caches)
        diff = out - target
        loss = float(np.mean(diff * diff))
        grad = 2.0 * diff / diff.size
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer, cache = self.layers[i], caches[i]
            g = {}
            if layer.activation == "relu":
                grad = grad * cache["mask"]
            if layer.has_bn:
                xhat = cache["xhat"]
                g["gamma"] = (grad * xhat).sum(axis=0)
                g["beta"] = grad.sum(axis=0)
                dxhat = grad * layer.gamma
                n = grad.shape[0]
                grad = (cache["inv_std"] / n) * (
                    n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            g["W"] = cache["x"].T @ grad
            g["b"] = grad.sum(axis=0)
            grads[i] = g
            grad = grad @ layer.W.T
        return loss, grads

    # -- serialization ------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"# autoencoder tensors v{FORMAT_VERSION}",
                 "widths = " + ",".join(map(str, self.widths)),
                 "bn_layers = " + ",".join(map(str, self.bn_layers))]
        for name, layer in self.named_layers():
            lines.append(f"activation {name} {layer.activation}")
            tensors = dict(layer.trainable())
            if layer.has_bn:
                tensors["running_mean"] = layer.running_mean
                tensors["running_var"] = layer.running_var
            for key, arr in tensors.items():
                lines.append(f"tensor {name}.{key} " + ",".join(map(str, arr.shape)))
                lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Autoencoder":
        it = iter(text.splitlines())
        header = next(it)
        if not header.startswith("# autoencoder tensors v"):
            raise ValueError("not an autoencoder tensor dump")
        if int(header.rsplit("v", 1)[1]) != FORMAT_VERSION:
            raise ValueError(f"unsupported tensor dump version {header}")
        meta, tensors, acts = {}, {}, {}
        for line in it:
            if line.startswith("tensor "):
                _, name, shape = line.split()
                dims = tuple(int(s) for s in shape.split(","))
                values = np.array([float(v) for v in next(it).split()])
                tensors[name] = values.reshape(dims)
            elif line.startswith("activation "):
                _, name, act = line.split()
                acts[name] = act
            elif "=" in line:
                k, _, v = line.partition("=")
                meta[k.strip()] = tuple(int(s) for s in v.split(",") if s.strip())
        model = cls.initialize(meta["widths"], meta.get("bn_layers", ()), rng=0)
        for name, layer in model.named_layers():
            layer.activation = acts.get(name, layer.activation)
            layer.W = tensors[f"{name}.W"]
            layer.b = tensors[f"{name}.b"]
            if layer.has_bn:
                layer.gamma = tensors[f"{name}.gamma"]
                layer.beta = tensors[f"{name}.beta"]
                layer.running_mean = tensors[f"{name}.running_mean"]
                layer.running_var = tensors[f"{name}.running_var"]
        return model


class Adam:
    def __init__(self, model: Autoencoder, config: TrainConfig):
        self.cfg = config
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in l.trainable().items()} for l in model.layers]
        self.v = [{k: np.zeros_like(v) for k, v in l.trainable().items()} for l in model.layers]

    def step(self, model: Autoencoder, grads: list) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for layer, g, m, v in zip(model.layers, grads, self.m, self.v):
            for key, param in layer.trainable().items():
                m[key] = c.beta1 * m[key] + (1 - c.beta1) * g[key]
                v[key] = c.beta2 * v[key] + (1 - c.beta2) * g[key] ** 2
                param -= c.learning_rate * (m[key] / bc1) / (np.sqrt(v[key] / bc2) + c.adam_eps)


def as_matrix(tracks) -> np.ndarray:
    if isinstance(tracks, np.ndarray):
        return np.atleast_2d(tracks).astype(float)
    return np.stack([t.points.ravel() if isinstance(t, NormalizedTrack) else np.ravel(t)
                     for t in tracks]).astype(float)


def train(tracks, config: TrainConfig = TrainConfig(),
          widths: Sequence[int] = (60, 128, 64, 32, 16), bn_layers: Sequence[int] = (0, 1),
          model: Optional[Autoencoder] = None) -> tuple[Autoencoder, np.ndarray]:
    """Train on normalized tracks with Adam on the MSE reconstruction loss.

    On noise epochs the inputs get additive Gaussian noise while the targets
    stay clean. All randomness (initial weights, batch order, noise) comes
    from ``config.rng_seed``.

    Returns
    -------
    model : Autoencoder
    history : ndarray
        Mean training loss of each epoch.
    """
    X = as_matrix(tracks)
    n = len(X)
    if n < config.batch_size:
        raise ValueError(f"need at least batch_size={config.batch_size} tracks, got {n}")
    rng = np.random.default_rng(config.rng_seed)
    if model is None:
        model = Autoencoder.initialize(widths, bn_layers, rng)
    else:
        model = model.copy()
    opt = Adam(model, config)
    n_batches = -(-n // config.batch_size)
    history = np.empty(config.epochs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        noisy = config.input_noise_std > 0 and epoch % config.input_noise_period == 0
        total = 0.0
        for idx in np.array_split(order, n_batches):
            target = X[idx]
            inputs = target + rng.normal(0.0, config.input_noise_std, target.shape) if noisy else target
            loss, grads = model.loss_and_grads(inputs, target, momentum=config.bn_momentum)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch + 1, loss)
            opt.step(model, grads)
            total += loss * len(idx)
        history[epoch] = total / n
        if (epoch + 1) % 50 == 0 or epoch == 0:
            LOGGER.info("epoch %d loss %.6g", epoch + 1, history[epoch])
    return model, history


def reconstruction_mse(model: Autoencoder, tracks) -> float:
    X = as_matrix(tracks)
    _, out = model.forward(X, training=False)
    return float(np.mean((out - X) ** 2))


def sample_multipliers(config: PerturbationConfig, size: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Draws from N(mean, std^2) restricted to (0, 1] by rejection."""
    if config.std == 0:
        return np.full(size, float(config.mean))
    out = np.empty(size)
    filled = 0
    while filled < size:
        draw = rng.normal(config.mean, config.std, max(2 * (size - filled), 16))
        ok = draw[(draw > 0.0) & (draw <= 1.0)]
        take = min(len(ok), size - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


def truncated_normal_mean(mean: float, std: float, lo: float = 0.0, hi: float = 1.0) -> float:
    """Closed-form mean of N(mean, std^2) truncated to (lo, hi]."""
    from scipy.stats import norm
    a, b = (lo - mean) / std, (hi - mean) / std
    return mean + std * (norm.pdf(a) - norm.pdf(b)) / (norm.cdf(b) - norm.cdf(a))


def perturb_and_decode(model: Autoencoder, seed_track, perturbation: PerturbationConfig,
                       rng: np.random.Generator, storm_id: str = "") -> NormalizedTrack:
    """Encode, scale the latent by random multipliers in (0, 1], decode and clamp."""
    x = seed_track.points.ravel() if isinstance(seed_track, NormalizedTrack) else np.ravel(seed_track)
    z = model.encode(x)
    n = 1 if not perturbation.independent else z.shape[1]
    mult = sample_multipliers(perturbation, n, rng)
    out = model.decode(z * mult)
    out = np.clip(out[0], 0.0, 1.0)
    return NormalizedTrack(storm_id, out.reshape(-1, N_FEATURES))


def synthesize(model: Autoencoder, plan: SeedPlan, tracks: Sequence[NormalizedTrack],
               perturbation: PerturbationConfig, rng: np.random.Generator
               ) -> list[NormalizedTrack]:
    """One perturbed decode per planned seed replicate, in plan order."""
    out = []
    for cluster, idx, rep in plan.seeds:
        seed = tracks[idx]
        sid = f"SYN-c{cluster}-{seed.storm_id}-r{rep}"
        out.append(perturb_and_decode(model, seed, perturbation, rng, sid))
    return out


def write_loss_csv(history: Sequence[float], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["epoch", "loss"])
    for i, v in enumerate(history, start=1):
        w.writerow([i, repr(float(v))])
