"""Sum-product inference on the binary seizure-state chain.

Function node ``k`` is ``P(s_k | s_{k-1}) * g_k(s_k)`` where ``g_k`` is the
classifier's soft decision turned into a likelihood. Messages are kept in
the log domain and renormalized every step; the removed constants are
retained so unnormalized quantities can be rebuilt.
"""

from dataclasses import dataclass
import csv

import numpy as np

from ._backend import kernels

__all__ = [
    "REFERENCE_P11",
    "REFERENCE_P10",
    "TransitionModel",
    "NodePotentials",
    "MessageTrack",
    "build_function_nodes",
    "forward_messages",
    "backward_messages",
    "message_track",
    "marginals",
    "detect",
    "smooth",
    "estimate_transitions",
    "write_detections_csv",
]

# P(s_k = 1 | s_{k-1} = 1) and P(s_k = 1 | s_{k-1} = 0) tuned on CHB-MIT
REFERENCE_P11 = 0.8954
REFERENCE_P10 = 0.1790


@dataclass(frozen=True)
class TransitionModel:
    p11: float = REFERENCE_P11
    p10: float = REFERENCE_P10
    initial: tuple = (0.5, 0.5)

    def __post_init__(self):
        for name in ("p11", "p10"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if len(self.initial) != 2 or min(self.initial) < 0 or abs(sum(self.initial) - 1.0) > 1e-9:
            raise ValueError(f"initial distribution {self.initial} must be two non-negative entries summing to 1")

    @property
    def matrix(self):
        """``P[prev, next]``."""
        return np.array([[1.0 - self.p10, self.p10], [1.0 - self.p11, self.p11]])

    @property
    def stationary(self):
        denom = 1.0 - self.p11 + self.p10
        if denom == 0.0:
            return (0.5, 0.5)
        pi1 = self.p10 / denom
        return (1.0 - pi1, pi1)

    def with_initial(self, initial):
        return TransitionModel(self.p11, self.p10, tuple(float(v) for v in initial))


@dataclass
class NodePotentials:
    """Per-block likelihood weights ``(g_k(0), g_k(1))``, rows summing to one."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("potentials must be an (n, 2) array")
        if np.any(v < 0) or np.any(v.sum(axis=1) <= 0):
            raise ValueError("potentials must be non-negative and not both zero")
        self.values = v

    def __len__(self):
        return len(self.values)

    @property
    def log(self):
        with np.errstate(divide="ignore"):
            return np.ascontiguousarray(np.log(self.values))


@dataclass
class MessageTrack:
    log_forward: np.ndarray
    log_forward_scale: np.ndarray
    log_backward: np.ndarray = None
    log_backward_scale: np.ndarray = None

    @property
    def log_evidence(self):
        """``log sum_s prod_k f_k``, the log of the unnormalized chain total."""
        return float(self.log_forward_scale.sum())

    def forward(self):
        return np.exp(self.log_forward)

    def backward(self):
        return np.exp(self.log_backward)


def _p_seizure(decisions):
    return np.array([getattr(d, "p_seizure", d) for d in decisions], dtype=np.float64)


def build_function_nodes(decisions, prior=0.5):
    """Turn soft decisions ``P(s|y)`` into likelihood weights ``P(y|s)``.

    Dividing by the class prior the classifier was trained under removes the
    prior from the posterior; with ``prior=0.5`` the soft decision is used as is.
    """
    if not 0.0 < prior < 1.0:
        raise ValueError("prior must lie strictly between 0 and 1")
    p = _p_seizure(decisions)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("soft decisions must lie in [0, 1]")
    g = np.column_stack([(1.0 - p) / (1.0 - prior), p / prior])
    return NodePotentials(g / g.sum(axis=1, keepdims=True))


def _log_inputs(potentials, tm):
    with np.errstate(divide="ignore"):
        log_trans = np.ascontiguousarray(np.log(tm.matrix))
        log_init = np.ascontiguousarray(np.log(np.asarray(tm.initial, dtype=np.float64)))
    return potentials.log, log_trans, log_init


def forward_messages(potentials, tm):
    if len(potentials) < 1:
        raise ValueError("need at least one block")
    log_g, log_trans, log_init = _log_inputs(potentials, tm)
    log_fwd, log_z = kernels.chain_forward(log_g, log_trans, log_init)
    return MessageTrack(log_fwd, log_z)


def backward_messages(potentials, tm):
    if len(potentials) < 1:
        raise ValueError("need at least one block")
    log_g, log_trans, _ = _log_inputs(potentials, tm)
    return kernels.chain_backward(log_g, log_trans)


def message_track(potentials, tm):
    track = forward_messages(potentials, tm)
    track.log_backward, track.log_backward_scale = backward_messages(potentials, tm)
    return track


def marginals(track):
    """``P(s_k = 1 | y)`` for every block."""
    if track.log_backward is None:
        raise ValueError("backward messages have not been computed")
    s = track.log_forward + track.log_backward
    # two-state softmax evaluated at state 1
    return 1.0 / (1.0 + np.exp(s[:, 0] - s[:, 1]))


def detect(marginal_seq, threshold=0.5):
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(marginal_seq) > threshold).astype(np.int64)


def smooth(decisions, tm, prior=0.5):
    """Soft decisions -> posterior seizure marginals under the chain model."""
    return marginals(message_track(build_function_nodes(decisions, prior), tm))


def estimate_transitions(label_sequences, pseudocount=1.0):
    """Histogram estimate of ``(p11, p10)`` from labelled block sequences."""
    counts = np.full((2, 2), float(pseudocount))
    for labels in label_sequences:
        labels = np.asarray(labels, dtype=np.int64)
        np.add.at(counts, (labels[:-1], labels[1:]), 1.0)
    p11 = counts[1, 1] / counts[1].sum()
    p10 = counts[0, 1] / counts[0].sum()
    return float(p11), float(p10)


def write_detections_csv(path, block_times, p_raw, p_marginal, detected):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_second", "p_raw", "p_marginal", "detected"])
        for row in zip(block_times, p_raw, p_marginal, detected):
            w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3])])
