"""Pairwise neural mutual-information features.

A small critic ``T(x_i, x_j)`` (2 -> h -> h -> 1, ReLU) is fitted per channel
pair and block window. The reported estimate is the clipped
Donsker-Varadhan value (SMILE)::

    mean(T(joint)) - log(mean(clip(exp(T(product)), e^-tau, e^tau)))

Ascending that value directly is unbounded once every product score
saturates the clip, so the critic parameters are fitted with the
Jensen-Shannon surrogate ``E_P[-softplus(-T)] - E_Q[softplus(T)]``, whose
optimum is the log density ratio, and SMILE is evaluated on the result.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import math

import numpy as np

from . import autodiff as ad
from ._backend import kernels

__all__ = [
    "MiConfig",
    "CriticNet",
    "MiFeatureVector",
    "MiEstimate",
    "smile_objective",
    "dv_objective",
    "js_objective",
    "critic_objective",
    "train_critic",
    "estimate_all_pairs",
    "pair_indices",
    "feature_matrix",
    "clamp_features",
    "write_mi_csv",
]

FEATURE_FLOOR = -0.1


@dataclass
class MiConfig:
    tau: float = 0.9
    steps: int = 200
    batch: int = 256
    hidden: int = 64
    lr: float = 1e-3
    seed: int = 0
    # carry each pair's critic and optimizer state into the next block
    warm_start: bool = False
    warm_steps: int = 50

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.steps < 1 or self.warm_steps < 1:
            raise ValueError("steps must be >= 1")
        if self.hidden < 1 or self.batch < 1:
            raise ValueError("hidden width and batch must be >= 1")


@dataclass
class MiFeatureVector:
    values: np.ndarray
    block_time: int
    degenerate: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite MI feature")


@dataclass
class MiEstimate:
    critic: "CriticNet"
    mi: float
    degenerate: bool = False


@dataclass
class CriticNet:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    moments: list = field(default=None, repr=False)
    step: int = 0

    @classmethod
    def init(cls, hidden, rng):
        return cls(
            w1=ad.glorot_uniform(rng, (2, hidden), 2, hidden),
            b1=np.zeros(hidden),
            w2=ad.glorot_uniform(rng, (hidden, hidden), hidden, hidden),
            b2=np.zeros(hidden),
            w3=ad.glorot_uniform(rng, (hidden,), hidden, 1),
            b3=np.zeros(1),
        )

    @property
    def params(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    @property
    def hidden(self):
        return self.w1.shape[1]

    def copy(self):
        out = CriticNet(*(p.copy() for p in self.params), step=self.step)
        if self.moments is not None:
            out.moments = [[a.copy() for a in self.moments[0]], [a.copy() for a in self.moments[1]]]
        return out

    def scores(self, x, y):
        x = np.ascontiguousarray(x, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        return kernels.critic_forward(x, y, *self.params)

    def as_tensors(self):
        return [ad.parameter(p) for p in self.params]


def _as_tensor(v):
    return v if isinstance(v, ad.Tensor) else ad.Tensor(np.asarray(v, dtype=np.float64))


def _check(joint, marginal):
    if np.size(getattr(joint, "values", joint)) == 0 or np.size(getattr(marginal, "values", marginal)) == 0:
        raise ValueError("score lists must be non-empty")


def smile_objective(joint_scores, marginal_scores, tau):
    """Clipped DV value; returns a Tensor when given Tensors, else a float."""
    _check(joint_scores, marginal_scores)
    if isinstance(joint_scores, ad.Tensor) or isinstance(marginal_scores, ad.Tensor):
        j, m = _as_tensor(joint_scores), _as_tensor(marginal_scores)
        clipped = ad.clip(ad.exp(m), math.exp(-tau), math.exp(tau))
        return ad.sub(ad.mean(j), ad.log(ad.mean(clipped)))
    j = np.asarray(joint_scores, dtype=np.float64)
    m = np.asarray(marginal_scores, dtype=np.float64)
    # clip(exp(s)) == exp(clip(s)), which avoids overflow for huge scores
    return float(j.mean() - np.log(np.exp(np.clip(m, -tau, tau)).mean()))


def dv_objective(joint_scores, marginal_scores):
    """Unclipped Donsker-Varadhan value."""
    _check(joint_scores, marginal_scores)
    if isinstance(joint_scores, ad.Tensor) or isinstance(marginal_scores, ad.Tensor):
        j, m = _as_tensor(joint_scores), _as_tensor(marginal_scores)
        e = ad.exp(m)
        if not np.all(np.isfinite(e.values)):
            raise FloatingPointError("exp overflow in DV objective")
        return ad.sub(ad.mean(j), ad.log(ad.mean(e)))
    j = np.asarray(joint_scores, dtype=np.float64)
    m = np.asarray(marginal_scores, dtype=np.float64)
    with np.errstate(over="ignore"):
        e = np.exp(m)
    if not np.all(np.isfinite(e)):
        raise FloatingPointError("exp overflow in DV objective")
    return float(j.mean() - np.log(e.mean()))


def js_objective(joint_scores, marginal_scores):
    """Jensen-Shannon (f-GAN) critic objective used for fitting."""
    _check(joint_scores, marginal_scores)
    if isinstance(joint_scores, ad.Tensor) or isinstance(marginal_scores, ad.Tensor):
        j, m = _as_tensor(joint_scores), _as_tensor(marginal_scores)
        return ad.sub(ad.neg(ad.mean(ad.softplus(ad.neg(j)))), ad.mean(ad.softplus(m)))
    j = np.asarray(joint_scores, dtype=np.float64)
    m = np.asarray(marginal_scores, dtype=np.float64)
    return float(-np.logaddexp(0.0, -j).mean() - np.logaddexp(0.0, m).mean())


def _critic_graph(params, pairs):
    w1, b1, w2, b2, w3, b3 = params
    h = ad.relu(ad.add(ad.matmul(pairs, w1), b1))
    h = ad.relu(ad.add(ad.matmul(h, w2), b2))
    return ad.add(ad.matmul(h, ad.reshape(w3, (-1, 1))), b3)


def critic_objective(params, joint_pairs, marginal_pairs, tau=0.9, kind="smile"):
    """Objective of the critic as an autodiff graph over ``params`` (Tensors)."""
    j = ad.reshape(_critic_graph(params, np.asarray(joint_pairs)), (-1,))
    m = ad.reshape(_critic_graph(params, np.asarray(marginal_pairs)), (-1,))
    if kind == "smile":
        return smile_objective(j, m, tau)
    if kind == "dv":
        return dv_objective(j, m)
    if kind == "js":
        return js_objective(j, m)
    raise ValueError(f"unknown objective {kind!r}")


def _standardize(w):
    w = np.asarray(w, dtype=np.float64)
    sd = w.std()
    if not np.isfinite(sd) or sd <= 1e-12 * max(1.0, np.abs(w).max(initial=0.0)):
        return None
    return np.ascontiguousarray((w - w.mean()) / sd)


def train_critic(window_i, window_j, cfg, critic=None, rng=None, steps=None):
    """Fit a critic on one window pair and return the SMILE estimate in nats.

    ``critic`` (with its optimizer moments) is continued when given, otherwise
    a fresh one is initialized from ``rng``. A window with zero variance
    yields ``mi=0`` and ``degenerate=True``.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    x = _standardize(window_i)
    y = _standardize(window_j)
    n = np.size(window_i)
    if np.size(window_j) != n:
        raise ValueError("windows must have equal length")
    if n < cfg.batch:
        raise ValueError(f"window of {n} samples shorter than batch {cfg.batch}")
    if critic is None:
        critic = CriticNet.init(cfg.hidden, rng)
    if x is None or y is None:
        return MiEstimate(critic, 0.0, True)
    if critic.moments is None:
        critic.moments = [[np.zeros_like(p) for p in critic.params], [np.zeros_like(p) for p in critic.params]]

    steps = cfg.steps if steps is None else steps
    idx = rng.integers(0, n, size=(steps, cfg.batch))
    pidx = rng.permuted(idx, axis=1)
    critic.step = kernels.critic_train(
        x, y, idx, pidx, critic.params, critic.moments[0], critic.moments[1],
        critic.step, cfg.lr, 0.9, 0.999, 1e-8,
    )
    perm = rng.permutation(n)
    joint = critic.scores(x, y)
    marginal = critic.scores(x, y[perm])
    return MiEstimate(critic, smile_objective(joint, marginal, cfg.tau), False)


def pair_indices(n_channels):
    """``(i, j)`` pairs with ``j > i`` in lexicographic order."""
    return [(i, j) for i in range(n_channels) for j in range(i + 1, n_channels)]


def _pair_track(args):
    signal, starts, length, i, j, cfg, times = args
    out = np.empty(len(starts))
    flags = np.zeros(len(starts), dtype=bool)
    critic = None
    for k, (start, t) in enumerate(zip(starts, times)):
        rng = np.random.default_rng([cfg.seed, int(t), i, j])
        wi = signal[i, start:start + length]
        wj = signal[j, start:start + length]
        if cfg.warm_start and critic is not None:
            est = train_critic(wi, wj, cfg, critic=critic, rng=rng, steps=cfg.warm_steps)
        else:
            est = train_critic(wi, wj, cfg, rng=rng)
        critic = est.critic if cfg.warm_start else None
        out[k] = est.mi
        flags[k] = est.degenerate
    return out, flags


def estimate_all_pairs(window_set, cfg, jobs=1):
    """One :class:`MiFeatureVector` per block, entries ordered by ``(i, j)``, ``j > i``."""
    signal = window_set.signal
    pairs = pair_indices(signal.shape[0])
    starts = window_set.mi_starts
    length = window_set.mi_length
    times = window_set.block_times
    tasks = [(signal, starts, length, i, j, cfg, times) for i, j in pairs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_pair_track, tasks))
    else:
        results = [_pair_track(t) for t in tasks]
    values = np.column_stack([r[0] for r in results]) if results else np.empty((len(starts), 0))
    flags = np.column_stack([r[1] for r in results]) if results else np.empty((len(starts), 0), bool)
    return [
        MiFeatureVector(values[k], int(times[k]), tuple(pairs[p] for p in np.flatnonzero(flags[k])))
        for k in range(len(starts))
    ]


def feature_matrix(vectors):
    return np.vstack([v.values for v in vectors]) if vectors else np.empty((0, 0))


def clamp_features(values, floor=FEATURE_FLOOR):
    return np.maximum(np.asarray(values, dtype=np.float64), floor)


def write_mi_csv(path, vectors, n_channels):
    pairs = pair_indices(n_channels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_second", "i", "j", "mi_nats"])
        for v in vectors:
            for (i, j), val in zip(pairs, v.values):
                w.writerow([v.block_time, i, j, repr(float(val))])
