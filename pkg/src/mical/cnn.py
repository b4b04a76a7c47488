"""1D CNN block classifier with optional MI feature fusion.

Default layout for ``N`` channels of 4 s at 256 Hz::

    conv 32 x (N, 256) stride 32 -> ReLU -> conv 64 x (32, 4) stride 2 -> ReLU
    -> global average pool (64) -> concat MI features -> dense 64 -> ReLU -> dense 2

A 256-sample first kernel gives each first-layer unit a one second receptive field.
"""

from dataclasses import dataclass, field
import csv

import numpy as np

from . import autodiff as ad

__all__ = [
    "CnnConfig",
    "CnnModel",
    "SoftDecision",
    "build_model",
    "forward",
    "predict_proba",
    "train",
    "class_weights",
    "effective_prior",
    "save_model",
    "load_model",
    "write_decisions_csv",
]


@dataclass
class CnnConfig:
    n_channels: int
    input_length: int = 1024
    fs: int = 256
    conv: tuple = ((32, 256, 32), (64, 4, 2))
    dense: tuple = (64,)
    mi_dim: int = 0
    seed: int = 0
    input_scale: float = 1.0

    def __post_init__(self):
        self.conv = tuple(tuple(int(v) for v in layer) for layer in self.conv)
        self.dense = tuple(int(v) for v in self.dense)
        if not self.conv:
            raise ValueError("at least one convolution layer is required")
        if self.conv[0][1] < self.fs:
            raise ValueError(
                f"first kernel spans {self.conv[0][1]} samples, less than one second at {self.fs} Hz"
            )
        length = self.input_length
        for filters, kernel, stride in self.conv:
            if stride <= 0 or filters <= 0:
                raise ValueError("filters and stride must be positive")
            if kernel > length:
                raise ValueError(f"kernel {kernel} longer than its input ({length} samples)")
            length = (length - kernel) // stride + 1

    @property
    def conv_lengths(self):
        out = []
        length = self.input_length
        for _, kernel, stride in self.conv:
            length = (length - kernel) // stride + 1
            out.append(length)
        return out

    @property
    def receptive_field_s(self):
        return self.conv[0][1] / self.fs


@dataclass
class SoftDecision:
    p_seizure: float
    block_time: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_seizure <= 1.0:
            raise ValueError(f"p_seizure={self.p_seizure} outside [0, 1]")

    @property
    def p_background(self):
        return 1.0 - self.p_seizure


@dataclass
class CnnModel:
    config: CnnConfig
    params: dict = field(default_factory=dict)
    prior: float = 0.5  # class prior implied by the training loss

    def parameters(self):
        return list(self.params.values())


def build_model(cfg):
    rng = np.random.default_rng(cfg.seed)
    params = {}
    cin = cfg.n_channels
    for i, (filters, kernel, _) in enumerate(cfg.conv):
        params[f"conv{i}.w"] = ad.parameter(
            ad.glorot_uniform(rng, (filters, cin, kernel), cin * kernel, filters * kernel)
        )
        params[f"conv{i}.b"] = ad.parameter(np.zeros(filters))
        cin = filters
    width = cin + cfg.mi_dim
    for i, units in enumerate(cfg.dense):
        params[f"dense{i}.w"] = ad.parameter(ad.glorot_uniform(rng, (width, units), width, units))
        params[f"dense{i}.b"] = ad.parameter(np.zeros(units))
        width = units
    params["out.w"] = ad.parameter(ad.glorot_uniform(rng, (width, 2), width, 2))
    params["out.b"] = ad.parameter(np.zeros(2))
    return CnnModel(cfg, params)


def conv_features(model, blocks):
    """Pooled convolutional features, shape (batch, last_filters)."""
    cfg = model.config
    x = np.asarray(blocks, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != (cfg.n_channels, cfg.input_length):
        raise ValueError(f"expected blocks of shape (N={cfg.n_channels}, {cfg.input_length}), got {x.shape[1:]}")
    h = ad.Tensor(x * cfg.input_scale)
    for i, (_, _, stride) in enumerate(cfg.conv):
        h = ad.relu(ad.conv1d(h, model.params[f"conv{i}.w"], model.params[f"conv{i}.b"], stride))
    return ad.mean(h, axis=2)


def logits(model, blocks, mi=None):
    cfg = model.config
    h = conv_features(model, blocks)
    if cfg.mi_dim:
        if mi is None:
            raise ValueError("model expects MI features")
        mi = np.atleast_2d(np.asarray(mi, dtype=np.float64))
        if mi.shape != (h.shape[0], cfg.mi_dim):
            raise ValueError(f"MI features shape {mi.shape} != ({h.shape[0]}, {cfg.mi_dim})")
        h = ad.concat([h, ad.Tensor(mi)], axis=1)
    elif mi is not None and np.size(mi):
        raise ValueError("model was built without MI features")
    for i in range(len(cfg.dense)):
        h = ad.relu(ad.add(ad.matmul(h, model.params[f"dense{i}.w"]), model.params[f"dense{i}.b"]))
    return ad.add(ad.matmul(h, model.params["out.w"]), model.params["out.b"])


def predict_proba(model, blocks, mi=None, batch=256):
    """Seizure probability for each block in ``blocks`` (batch, N, L)."""
    blocks = np.asarray(blocks) if not hasattr(blocks, "shape") else blocks
    n = blocks.shape[0]
    out = np.empty(n)
    for s in range(0, n, batch):
        part_mi = None if mi is None else np.asarray(mi)[s:s + batch]
        out[s:s + batch] = ad.softmax(logits(model, np.asarray(blocks[s:s + batch]), part_mi).values)[:, 1]
    return out


def forward(model, block, mi=None, block_time=0):
    mi_row = None if mi is None else np.atleast_2d(getattr(mi, "values", mi))
    p = ad.softmax(logits(model, np.asarray(block)[None], mi_row).values)[0, 1]
    return SoftDecision(float(p), int(getattr(mi, "block_time", block_time)))


def class_weights(labels):
    """Per-sample weights inversely proportional to class frequency."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=2).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("training data must contain both classes")
    return (len(labels) / (2.0 * counts))[labels]


def effective_prior(labels, weights):
    """Seizure prior implied by a weighted cross-entropy."""
    labels = np.asarray(labels)
    w = np.asarray(weights, dtype=np.float64)
    return float(w[labels == 1].sum() / w.sum())


def train(model, blocks, labels, mi=None, epochs=20, lr=1e-3, batch=32, weighted=True, seed=None):
    """Minimize (class-weighted) softmax cross-entropy with Adam.

    Returns ``(model, loss_trace)`` where ``loss_trace[0]`` is the full-set
    loss before training and ``loss_trace[e]`` the loss after epoch ``e``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n == 0:
        raise ValueError("empty training set")
    if len(np.unique(labels)) < 2:
        raise ValueError("training data must contain both classes")
    weights = class_weights(labels) if weighted else np.ones(n)
    model.prior = effective_prior(labels, weights)
    mi = None if mi is None else np.asarray(mi, dtype=np.float64)
    params = model.parameters()
    opt = ad.Adam(params, lr=lr)
    rng = np.random.default_rng(model.config.seed if seed is None else seed)

    def full_loss():
        total = 0.0
        for s in range(0, n, 256):
            sl = slice(s, s + 256)
            out = logits(model, np.asarray(blocks[sl]), None if mi is None else mi[sl])
            total += ad.softmax_cross_entropy(out, labels[sl], weights[sl]).item() * weights[sl].sum()
        return total / weights.sum()

    trace = [full_loss()]
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch):
            idx = np.sort(order[s:s + batch])
            opt.zero_grad()
            out = logits(model, np.asarray(blocks[idx]), None if mi is None else mi[idx])
            loss = ad.softmax_cross_entropy(out, labels[idx], weights[idx])
            ad.backward(loss)
            if lr != 0.0:
                opt.step()
        trace.append(full_loss())
    return model, trace


def save_model(model, path):
    cfg = model.config
    tensors = {
        "cfg.shape": [cfg.n_channels, cfg.input_length, cfg.fs, cfg.mi_dim, cfg.seed],
        "cfg.conv": np.array(cfg.conv, dtype=np.float64),
        "cfg.dense": np.array(cfg.dense, dtype=np.float64),
        "cfg.scale_prior": [cfg.input_scale, model.prior],
    }
    tensors.update({k: p.values for k, p in model.params.items()})
    ad.checkpoint.save(path, tensors)


def load_model(path):
    t = ad.checkpoint.load(path)
    n_channels, input_length, fs, mi_dim, seed = (int(v) for v in t.pop("cfg.shape"))
    scale, prior = t.pop("cfg.scale_prior")
    cfg = CnnConfig(
        n_channels=n_channels,
        input_length=input_length,
        fs=fs,
        conv=tuple(tuple(int(v) for v in row) for row in t.pop("cfg.conv").reshape(-1, 3)),
        dense=tuple(int(v) for v in t.pop("cfg.dense").reshape(-1)),
        mi_dim=mi_dim,
        seed=seed,
        input_scale=float(scale),
    )
    return CnnModel(cfg, {k: ad.parameter(v) for k, v in t.items()}, prior=float(prior))


def write_decisions_csv(path, decisions):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_second", "p_seizure"])
        for d in decisions:
            w.writerow([d.block_time, repr(float(d.p_seizure))])
