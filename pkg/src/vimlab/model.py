"""Stochastic classifier X -> Z -> Y with a diagonal-Gaussian latent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


@dataclass
class LatentBatch:
    mu: Tensor
    logvar: Tensor
    eps: np.ndarray
    z: Tensor

    def recompute_z(self):
        return self.mu.data + np.exp(self.logvar.data / 2.0) * self.eps


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def sample_latent(mu, logvar, eps):
    """Reparameterised draw z = mu + exp(logvar / 2) * eps.

    ``eps`` is exogenous noise; gradients reach ``mu`` and ``logvar`` only.
    """
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != mu.shape:
        raise DimensionError(f"eps shape {eps.shape} does not match mu {mu.shape}")
    std = T.exp(T.scale(logvar, 0.5))
    return T.add(mu, T.mul(std, Tensor(eps)))


class StochasticClassifier:
    """MLP encoder emitting (mean, log-variance) and a linear softmax decoder.

    The encoder maps ``input_dim -> hidden[0] -> ... -> 2 * latent_dim`` with
    ReLU between layers; the decoder is ``z @ W + b`` over ``n_classes``.
    """

    def __init__(self, input_dim=784, hidden=(1024, 1024), latent_dim=256, n_classes=10, seed=0):
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.latent_dim = int(latent_dim)
        self.n_classes = int(n_classes)
        rng = np.random.default_rng(seed)
        widths = (self.input_dim, *self.hidden, 2 * self.latent_dim)
        self.encoder = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            W = Tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True, name=f"enc{i}.W")
            b = Tensor(np.zeros(fan_out), requires_grad=True, name=f"enc{i}.b")
            self.encoder.append((W, b))
        self.dec_W = Tensor(
            glorot_uniform(rng, self.latent_dim, self.n_classes), requires_grad=True, name="dec.W"
        )
        self.dec_b = Tensor(np.zeros(self.n_classes), requires_grad=True, name="dec.b")

    @property
    def params(self):
        """Parameters in declaration order as (name, tensor) pairs."""
        out = []
        for W, b in self.encoder:
            out.extend([(W.name, W), (b.name, b)])
        out.extend([("dec.W", self.dec_W), ("dec.b", self.dec_b)])
        return out

    def parameters(self):
        return [p for _, p in self.params]

    def architecture(self):
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "latent_dim": self.latent_dim,
            "n_classes": self.n_classes,
        }

    def set_trainable(self, flag):
        for p in self.parameters():
            p.requires_grad = flag

    def encode(self, x):
        x = T.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"expected input of shape (b, {self.input_dim}), got {x.shape}")
        h = x
        last = len(self.encoder) - 1
        for i, (W, b) in enumerate(self.encoder):
            h = T.add(T.matmul(h, W), b)
            if i < last:
                h = T.relu(h)
        k = self.latent_dim
        mu = T.slice_cols(h, 0, k)
        logvar = T.clamp(T.slice_cols(h, k, 2 * k), LOGVAR_MIN, LOGVAR_MAX)
        return mu, logvar

    def decode(self, z):
        z = T.as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise DimensionError(f"expected latent of shape (b, {self.latent_dim}), got {z.shape}")
        return T.add(T.matmul(z, self.dec_W), self.dec_b)

    def forward(self, x, eps):
        mu, logvar = self.encode(x)
        z = sample_latent(mu, logvar, eps)
        return LatentBatch(mu, logvar, np.asarray(eps, dtype=np.float64), z), self.decode(z)

    def deterministic_logits(self, x):
        """Logits through the sampling-free path z = mu."""
        mu, _ = self.encode(x)
        return self.decode(mu)

    def represent(self, x, batch_size=1000):
        """Latent means for a data matrix, computed in chunks."""
        x = np.asarray(x, dtype=np.float64)
        return np.concatenate(
            [self.encode(Tensor(x[i : i + batch_size]))[0].data for i in range(0, len(x), batch_size)]
            or [np.zeros((0, self.latent_dim))]
        )

    def predict(self, x, samples=0, rng=None, batch_size=1000):
        """Class predictions and probabilities.

        With ``samples == 0`` the latent is its mean and the result is
        deterministic.  Otherwise softmax outputs of ``samples`` latent draws
        are averaged.  Ties go to the lowest class index.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        probs = []
        for i in range(0, len(x), batch_size):
            mu, logvar = self.encode(Tensor(x[i : i + batch_size]))
            if samples <= 0:
                p = T.softmax_np(self.decode(mu).data)
            else:
                if rng is None:
                    raise ValueError("sampled prediction needs an rng")
                std = np.exp(logvar.data / 2.0)
                p = np.zeros((len(mu.data), self.n_classes))
                for _ in range(samples):
                    z = mu.data + std * rng.standard_normal(mu.shape)
                    p += T.softmax_np(self.decode(Tensor(z)).data)
                p /= samples
            probs.append(p)
        probs = np.concatenate(probs) if probs else np.zeros((0, self.n_classes))
        return np.argmax(probs, axis=1), probs
