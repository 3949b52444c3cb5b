"""Training objectives: plain cross-entropy, VIB and VIM.

All three share the stochastic forward pass; they differ only in the
penalty added to the negative log-likelihood:

* baseline -- none;
* VIB      -- beta * KL(q(z|x) || N(0, sigma^2 I)), per example, averaged;
* VIM      -- beta * MMD^2 between the minibatch's pooled latent samples and
              fresh draws from N(0, sigma^2 I).
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ContractError
from .model import LatentBatch
from .tensor import Tensor


class Variant(str, enum.Enum):
    BASELINE = "baseline"
    VIB = "vib"
    VIM = "vim"


@dataclass(frozen=True)
class ObjectiveSpec:
    variant: Variant = Variant.VIM
    beta: float = 1e-3
    sigma: float = 1.0
    mmd_prior_samples: Optional[int] = None  # None -> one prior draw per example

    def __post_init__(self):
        try:
            object.__setattr__(self, "variant", Variant(self.variant))
        except ValueError:
            raise ContractError(f"unknown objective variant {self.variant!r}") from None
        if not self.beta >= 0:
            raise ContractError(f"beta must be nonnegative, got {self.beta}")
        if not self.sigma > 0:
            raise ContractError(f"sigma must be positive, got {self.sigma}")
        if self.mmd_prior_samples is not None and self.mmd_prior_samples < 2:
            raise ContractError("mmd_prior_samples must be at least 2")

    def to_dict(self):
        d = asdict(self)
        d["variant"] = self.variant.value
        return d


@dataclass
class LossTerms:
    total: Tensor
    nll: Tensor
    penalty: Optional[Tensor]
    latent: LatentBatch
    logits: Tensor


def nll(logits, labels):
    return T.softmax_cross_entropy(logits, labels)


def gauss_kl(mu, logvar, sigma):
    """Batch mean of KL(N(mu, diag(exp(logvar))) || N(0, sigma^2 I))."""
    if not sigma > 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    mu, logvar = T.as_tensor(mu), T.as_tensor(logvar)
    b = mu.shape[0]
    inv_var = 1.0 / (sigma * sigma)
    quad = T.scale(T.add(T.exp(logvar), T.square(mu)), inv_var)
    per_elem = T.add(T.sub(quad, logvar), 2.0 * math.log(sigma) - 1.0)
    return T.scale(T.sum(per_elem), 0.5 / b)


def kernel(z1, z2, dim=None):
    """Inverse multiquadric kernel dim / (dim + |z1 - z2|^2)."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 1:
        raise ContractError(f"kernel expects two vectors of equal length, got {z1.shape}, {z2.shape}")
    k = float(z1.shape[0] if dim is None else dim)
    d = z1 - z2
    return k / (k + float(d @ d))


def _kernel_matrix(a, b, dim):
    return T.scale(T.reciprocal(T.add(T.pairwise_sqdist(a, b), dim)), dim)


def mmd(z_batch, prior_batch, dim=None):
    """Biased (V-statistic) squared MMD under the inverse multiquadric kernel.

    Differentiable in ``z_batch``; ``prior_batch`` is treated as a constant.
    """
    z = T.as_tensor(z_batch)
    p = Tensor(prior_batch.data if isinstance(prior_batch, Tensor) else prior_batch)
    if z.shape[0] < 2 or p.shape[0] < 2:
        raise ContractError("mmd needs at least two samples on each side")
    dim = float(z.shape[1] if dim is None else dim)
    kzz = T.mean(_kernel_matrix(z, z, dim))
    kzp = T.mean(_kernel_matrix(z, p, dim))
    kpp = float(T.mean(_kernel_matrix(p, p, dim)).data)
    return T.add(T.sub(kzz, T.scale(kzp, 2.0)), kpp)


def loss(spec, model, x, labels, rng, prior_rng=None):
    """Build the objective's graph for one minibatch.

    ``rng`` supplies the latent noise; ``prior_rng`` (defaulting to ``rng``)
    supplies the prior draws used by VIM.  Keeping them separate lets the
    three variants consume identical noise streams.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise ContractError("loss needs a nonempty batch")
    eps = rng.standard_normal((len(x), model.latent_dim))
    latent, logits = model.forward(Tensor(x), eps)
    data_term = nll(logits, labels)
    if spec.variant is Variant.BASELINE:
        penalty = None
        total = data_term
    elif spec.variant is Variant.VIB:
        penalty = gauss_kl(latent.mu, latent.logvar, spec.sigma)
        total = T.add(data_term, T.scale(penalty, spec.beta))
    elif spec.variant is Variant.VIM:
        prior_rng = rng if prior_rng is None else prior_rng
        m = spec.mmd_prior_samples or len(x)
        prior = spec.sigma * prior_rng.standard_normal((m, model.latent_dim))
        penalty = mmd(latent.z, prior, model.latent_dim)
        total = T.add(data_term, T.scale(penalty, spec.beta))
    else:  # pragma: no cover - Variant() already rejects unknown names
        raise ContractError(f"unknown objective variant {spec.variant!r}")
    return LossTerms(total, data_term, penalty, latent, logits)
