"""Adam and the seeded minibatch training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ContractError, NumericalAbort
from .metrics import test_error
from .objectives import ObjectiveSpec, loss

log = logging.getLogger(__name__)

CODE_VERSION = "vimlab-0.1.0"


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    scratch: dict = field(default_factory=dict, repr=False)


def adam_step(state, params, grads=None, where=""):
    """One bias-corrected Adam update, in place.

    ``params`` is a list of (name, Tensor); gradients are read from each
    tensor's ``.grad`` unless ``grads`` (name -> array) is supplied.  A
    missing gradient counts as zero.
    """
    named = []
    for name, p in params:
        g = grads[name] if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            worst = float(np.nanmax(np.abs(np.where(np.isfinite(g), g, np.inf))))
            raise NumericalAbort(f"non-finite gradient {where}param={name} max|grad|={worst}")
        named.append((name, p, g))

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    step = state.lr / (1.0 - b1**state.t)
    inv_sqrt_bc2 = 1.0 / np.sqrt(1.0 - b2**state.t)
    for name, p, g in named:
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        buf = state.scratch.get(name)
        if buf is None or buf.shape != m.shape:
            buf = state.scratch[name] = np.empty_like(m)
        np.multiply(g, 1.0 - b1, out=buf)
        m *= b1
        m += buf
        np.multiply(g, g, out=buf)
        buf *= 1.0 - b2
        v *= b2
        v += buf
        # p -= lr * m_hat / (sqrt(v_hat) + eps), without full-size temporaries
        np.sqrt(v, out=buf)
        buf *= inv_sqrt_bc2
        buf += state.eps
        np.divide(m, buf, out=buf)
        buf *= step
        p.data -= buf


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 100
    seed: int = 0
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    eval_every: int = 1
    lr: float = 1e-4
    latent_samples: int = 1

    def __post_init__(self):
        if isinstance(self.objective, dict):
            self.objective = ObjectiveSpec(**self.objective)
        if self.epochs < 1:
            raise ContractError("epochs must be at least 1")
        if self.batch_size < 2:
            raise ContractError("batch_size must be at least 2")
        if self.eval_every < 1:
            raise ContractError("eval_every must be at least 1")
        if self.latent_samples < 1:
            raise ContractError("latent_samples must be at least 1")

    def to_dict(self):
        d = asdict(self)
        d["objective"] = self.objective.to_dict()
        return d


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_nll: float
    train_penalty: Optional[float]
    test_error: Optional[float] = None


@dataclass
class ExperimentReport:
    config: dict
    seed: int
    history: list = field(default_factory=list)
    final_test_error: Optional[float] = None
    representation: Optional[dict] = None
    robustness: Optional[dict] = None
    checkpoint: Optional[str] = None
    steps: int = 0
    code_version: str = CODE_VERSION

    def to_dict(self):
        d = asdict(self)
        d["history"] = [asdict(h) if not isinstance(h, dict) else h for h in self.history]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["history"] = [EpochRecord(**h) for h in d.get("history", [])]
        return cls(**d)


def streams(seed):
    """Independent generators for shuffling, latent noise and prior draws."""
    shuffle, noise, prior = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(shuffle),
        np.random.default_rng(noise),
        np.random.default_rng(prior),
    )


def init_seed(seed):
    """Seed stream for parameter initialisation, disjoint from :func:`streams`."""
    return np.random.SeedSequence(seed, spawn_key=(3,))


def train(model, train_data, test_data, config, progress=None):
    """Fit ``model`` with Adam on ``config.objective``; returns the report.

    Each epoch visits a fresh seeded permutation of the training set in
    batches of ``config.batch_size`` (the last batch may be short, but never
    shorter than 2).  Test error is measured every ``eval_every`` epochs and
    after the last one.
    """
    spec = config.objective
    shuffle_rng, noise_rng, prior_rng = streams(config.seed)
    state = AdamState(lr=config.lr)
    params = model.params
    n = len(train_data)
    if n == 0:
        raise ContractError("empty training set")
    report = ExperimentReport(config=config.to_dict(), seed=config.seed)

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        batches = [order[i : i + config.batch_size] for i in range(0, n, config.batch_size)]
        if len(batches) > 1 and len(batches[-1]) < 2:
            tail = batches.pop()
            batches[-1] = np.concatenate([batches[-1], tail])
        sums = np.zeros(3)
        for bi, idx in enumerate(batches):
            x = train_data.images[idx]
            y = train_data.labels[idx]
            if config.latent_samples > 1:
                x = np.repeat(x, config.latent_samples, axis=0)
                y = np.repeat(y, config.latent_samples)
            T.zero_grad(model.parameters())
            terms = loss(spec, model, x, y, noise_rng, prior_rng)
            value = terms.total.item()
            if not math.isfinite(value):
                raise NumericalAbort(f"non-finite loss {value} at epoch {epoch} batch {bi}")
            terms.total.backward()
            adam_step(state, params, where=f"epoch={epoch} batch={bi} ")
            w = len(idx)
            sums += w * np.array([value, terms.nll.item(), terms.penalty.item() if terms.penalty is not None else 0.0])
        means = sums / n
        rec = EpochRecord(
            epoch=epoch,
            train_loss=float(means[0]),
            train_nll=float(means[1]),
            train_penalty=float(means[2]) if spec.variant.value != "baseline" else None,
        )
        if test_data is not None and (epoch % config.eval_every == 0 or epoch == config.epochs):
            rec.test_error = test_error(model, test_data)
        report.history.append(rec)
        if progress is not None:
            progress(rec)
        log.info("epoch %d loss %.5f nll %.5f test_error %s", epoch, rec.train_loss, rec.train_nll, rec.test_error)

    report.steps = state.t
    if test_data is not None:
        report.final_test_error = report.history[-1].test_error
    return report
