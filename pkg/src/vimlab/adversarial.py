"""Targeted Carlini-Wagner L2 attack against the deterministic logit path."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError
from .optim import AdamState, adam_step
from .tensor import Tensor

log = logging.getLogger(__name__)

_TANH_SHRINK = 0.999999


@dataclass(frozen=True)
class AttackConfig:
    confidence: float = 0.0
    binary_search_steps: int = 9
    max_iterations: int = 1000
    learning_rate: float = 1e-2
    initial_const: float = 1e-3
    clip_min: float = 0.0
    clip_max: float = 1.0

    def __post_init__(self):
        if self.confidence < 0:
            raise ContractError("confidence must be nonnegative")
        if self.binary_search_steps < 1 or self.max_iterations < 1:
            raise ContractError("search steps and iterations must be at least 1")
        if not self.clip_min < self.clip_max:
            raise ContractError("box bounds must satisfy clip_min < clip_max")


@dataclass
class AdversaryResult:
    original: np.ndarray
    adversary: np.ndarray
    target: int
    success: bool
    d1: float
    d2: float
    dinf: float
    const: float = float("nan")
    candidates: list = field(default_factory=list)

    def summary(self):
        return {
            "target": self.target,
            "success": self.success,
            "d1": self.d1,
            "d2": self.d2,
            "dinf": self.dinf,
            "const": self.const,
        }


def distances(x, x_adv):
    diff = np.asarray(x_adv, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    return float(np.abs(diff).sum()), float(np.sqrt((diff * diff).sum())), float(np.abs(diff).max(initial=0.0))


def _margin_ok(logits, target, kappa):
    """Row-wise success test on raw logits."""
    rows = np.arange(len(logits))
    # same rule as model.predict, so exact softmax ties resolve identically
    pred = np.argmax(T.softmax_np(logits), axis=1)
    if kappa == 0:
        return pred == target
    others = logits.copy()
    others[rows, target] = -np.inf
    return (pred == target) & (logits[rows, target] - others.max(axis=1) >= kappa)


def _attack_batch(model, X, targets, config):
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    b = len(X)
    lo, hi = config.clip_min, config.clip_max
    kappa = float(config.confidence)
    rows = np.arange(b)
    mask = np.zeros((b, model.n_classes))
    mask[rows, targets] = -1e30  # keeps the target out of the "best other" max

    w0 = np.arctanh(np.clip((X - lo) / (hi - lo) * 2.0 - 1.0, -1.0, 1.0) * _TANH_SHRINK)
    const = np.full(b, config.initial_const)
    lower = np.zeros(b)
    upper = np.full(b, 1e10)
    best_l2 = np.full(b, np.inf)
    best_adv = X.copy()
    best_const = np.full(b, np.nan)
    candidates = [[] for _ in range(b)]
    Xt = Tensor(X)

    was_trainable = [p.requires_grad for p in model.parameters()]
    for p in model.parameters():
        p.requires_grad = False
    try:
        for step in range(config.binary_search_steps):
            w = Tensor(w0.copy(), requires_grad=True, name="w")
            state = AdamState(lr=config.learning_rate)
            step_best = np.full(b, np.inf)
            step_adv = np.full_like(X, np.nan)
            alive = np.ones(b, dtype=bool)
            for _ in range(config.max_iterations):
                w.grad = None
                x_adv = T.add(T.scale(T.add(T.tanh(w), 1.0), (hi - lo) / 2.0), lo)
                logits = model.deterministic_logits(x_adv)
                l2sq = T.sum(T.square(T.sub(x_adv, Xt)), axis=1)
                target_logit = T.pick(logits, targets)
                other = T.max_rows(T.add(logits, Tensor(mask)))
                hinge = T.sub(T.relu(T.add(T.sub(other, target_logit), kappa)), kappa)
                per_row = T.add(l2sq, T.mul(Tensor(const), hinge))
                total = T.sum(per_row)
                if not np.all(np.isfinite(per_row.data)):
                    bad = ~np.isfinite(per_row.data)
                    alive &= ~bad
                    log.warning("attack: non-finite objective, abandoning %d branch(es) at c-step %d", bad.sum(), step)
                    if not alive.any():
                        break
                ok = _margin_ok(logits.data, targets, kappa) & alive
                improved = ok & (l2sq.data < step_best)
                step_best[improved] = l2sq.data[improved]
                step_adv[improved] = x_adv.data[improved]
                total.backward()
                g = np.where(alive[:, None], w.grad, 0.0)
                if not np.all(np.isfinite(g)):
                    bad = ~np.all(np.isfinite(g), axis=1)
                    alive &= ~bad
                    g = np.where(alive[:, None], g, 0.0)
                adam_step(state, [("w", w)], {"w": g})

            for i in range(b):
                found = np.isfinite(step_best[i])
                candidates[i].append(
                    {"const": float(const[i]), "success": bool(found),
                     "l2": float(np.sqrt(step_best[i])) if found else None}
                )
                if found and step_best[i] < best_l2[i]:
                    best_l2[i] = step_best[i]
                    best_adv[i] = step_adv[i]
                    best_const[i] = const[i]
                if found:
                    upper[i] = min(upper[i], const[i])
                    const[i] = (lower[i] + upper[i]) / 2.0
                else:
                    lower[i] = max(lower[i], const[i])
                    const[i] = (lower[i] + upper[i]) / 2.0 if upper[i] < 1e9 else const[i] * 10.0
    finally:
        for p, flag in zip(model.parameters(), was_trainable):
            p.requires_grad = flag

    results = []
    for i in range(b):
        adv = best_adv[i] if np.isfinite(best_l2[i]) else X[i].copy()
        success = bool(np.isfinite(best_l2[i]))
        if success:
            # confirm with the public prediction rule
            success = int(model.predict(adv[None, :])[0][0]) == int(targets[i])
        d1, d2, dinf = distances(X[i], adv) if success else (np.nan, np.nan, np.nan)
        results.append(
            AdversaryResult(X[i].copy(), adv, int(targets[i]), success, d1, d2, dinf,
                            float(best_const[i]), candidates[i])
        )
    return results


def _check_targets(model, X, targets):
    pred, _ = model.predict(X)
    clash = np.flatnonzero(pred == np.asarray(targets))
    if clash.size:
        raise ContractError(f"target equals the current prediction for input(s) {clash.tolist()}")


def cw_l2_attack(model, x, target, config=AttackConfig()):
    """Smallest-L2 input in the box that the model assigns to ``target``.

    Optimises ``|x' - x|^2 + c * max(max_{j != t} logit_j - logit_t, -kappa)``
    over ``x' = (tanh(w) + 1) / 2`` with Adam, binary-searching ``c``.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    _check_targets(model, x, [target])
    return _attack_batch(model, x, [target], config)[0]


def cw_l2_attack_batch(model, X, targets, config=AttackConfig()):
    """Independent attacks on each row of ``X``, sharing the matrix products."""
    X = np.asarray(X, dtype=np.float64)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (len(X),))
    _check_targets(model, X, targets)
    return _attack_batch(model, X, targets, config)


def robustness_report(model, dataset, config=AttackConfig(), source=0, target=1, count=10):
    """Attack the first ``count`` test images of class ``source`` towards ``target``.

    Images already predicted as ``target`` count as immediate successes at
    distance zero.
    """
    idx = np.flatnonzero(dataset.labels == source)[:count]
    if len(idx) < count:
        raise ContractError(f"need {count} examples of class {source}, found {len(idx)}")
    X = dataset.images[idx]
    pred, _ = model.predict(X)
    results = [None] * count
    todo = np.flatnonzero(pred != target)
    for i in np.flatnonzero(pred == target):
        results[i] = AdversaryResult(X[i].copy(), X[i].copy(), target, True, 0.0, 0.0, 0.0, 0.0, [])
    if todo.size:
        for i, r in zip(todo, _attack_batch(model, X[todo], np.full(todo.size, target), config)):
            results[i] = r
    wins = [r for r in results if r.success]
    report = {
        "source_class": source,
        "target_class": target,
        "indices": idx.tolist(),
        "successes": len(wins),
        "attempts": count,
        "valid": bool(wins),
        "config": asdict(config),
        "attacks": [r.summary() for r in results],
    }
    if wins:
        report.update(
            mean_l1=float(np.mean([r.d1 for r in wins])),
            mean_l2=float(np.mean([r.d2 for r in wins])),
            mean_linf=float(np.mean([r.dinf for r in wins])),
        )
    else:
        report.update(mean_l1=None, mean_l2=None, mean_linf=None)
    return report, results
