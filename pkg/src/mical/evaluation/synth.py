"""Synthetic multichannel EEG with a Markov seizure state.

Every channel carries its own band-limited rhythm plus white noise. The
rhythm is multiplied by a slow log-normal amplitude envelope with unit mean
square. In background every channel draws its own envelope; during seizure
seconds a fraction ``envelope_coupling`` of the log-envelope is common to all
channels, and a fraction ``shared_gain`` of the rhythm power is replaced by a
shared rhythm. Neither change alters the per-channel distribution, only the
dependence between channels. ``amplitude_boost`` optionally scales the ictal
rhythm as well.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfilt

from ..edf import EegRecord, SeizureAnnotation

__all__ = ["SynthSpec", "generate_synthetic", "latent_states", "runs"]


@dataclass(frozen=True)
class SynthSpec:
    num_channels: int = 3
    fs: int = 256
    duration_s: int = 900
    p11: float = 0.97
    p10: float = 0.003
    shared_gain: float = 0.3
    amplitude_boost: float = 0.0
    envelope_coupling: float = 1.0
    envelope_log_std: float = 1.0
    envelope_hz: float = 0.25
    rhythm_band: tuple = (1.0, 8.0)
    rhythm_std: float = 40.0
    noise_std: float = 10.0
    line_noise: float = 5.0
    line_hz: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.num_channels < 2:
            raise ValueError("need at least two channels")
        if not (0 <= self.p11 <= 1 and 0 <= self.p10 <= 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if not 0 <= self.shared_gain <= 1:
            raise ValueError("shared_gain must lie in [0, 1]")
        if not 0 <= self.envelope_coupling <= 1:
            raise ValueError("envelope_coupling must lie in [0, 1]")
        if self.envelope_log_std < 0 or self.envelope_hz <= 0:
            raise ValueError("envelope_log_std must be >= 0 and envelope_hz > 0")
        if self.duration_s < 1 or self.fs <= 0:
            raise ValueError("duration and fs must be positive")


def latent_states(spec, rng):
    """Per-second binary state path starting in background."""
    states = np.zeros(spec.duration_s, dtype=np.int64)
    u = rng.random(spec.duration_s)
    for t in range(1, spec.duration_s):
        p = spec.p11 if states[t - 1] else spec.p10
        states[t] = u[t] < p
    return states


def runs(states):
    """``[(start, end), ...]`` of consecutive ones."""
    padded = np.r_[0, np.asarray(states), 0]
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def _rhythm(rng, n, spec):
    lo, hi = spec.rhythm_band
    sos = butter(4, [lo, hi], btype="bandpass", fs=spec.fs, output="sos")
    r = sosfilt(sos, rng.standard_normal(n + 4 * spec.fs))[4 * spec.fs:]
    sd = r.std()
    return r / sd if sd > 0 else r


def _log_envelope(rng, n, spec):
    sos = butter(2, spec.envelope_hz, btype="lowpass", fs=spec.fs, output="sos")
    pad = int(4 * spec.fs / spec.envelope_hz)
    z = sosfilt(sos, rng.standard_normal(n + pad))[pad:]
    sd = z.std()
    return z / sd if sd > 0 else z


def generate_synthetic(spec):
    rng = np.random.default_rng(spec.seed)
    states = latent_states(spec, rng)
    fs, n = spec.fs, spec.duration_s * spec.fs
    seizure = np.repeat(states, fs).astype(bool)

    own = np.vstack([_rhythm(rng, n, spec) for _ in range(spec.num_channels)])
    shared = _rhythm(rng, n, spec)
    g = np.where(seizure, spec.shared_gain, 0.0)
    rhythm = np.sqrt(1.0 - g) * own + np.sqrt(g) * shared
    rhythm *= np.where(seizure, 1.0 + spec.amplitude_boost, 1.0)
    if spec.envelope_log_std > 0:
        own_env = np.vstack([_log_envelope(rng, n, spec) for _ in range(spec.num_channels)])
        shared_env = _log_envelope(rng, n, spec)
        c = np.where(seizure, spec.envelope_coupling, 0.0)
        z = np.sqrt(1.0 - c) * own_env + np.sqrt(c) * shared_env
        s = spec.envelope_log_std
        rhythm *= np.exp(s * z - s * s)
    x = spec.rhythm_std * rhythm + spec.noise_std * rng.standard_normal((spec.num_channels, n))
    if spec.line_noise:
        t = np.arange(n) / fs
        x += spec.line_noise * np.sin(2 * np.pi * spec.line_hz * t + rng.uniform(0, 2 * np.pi))

    anns = [SeizureAnnotation(int(a), int(b)) for a, b in runs(states)]
    return EegRecord(
        channels=[f"CH{i + 1}" for i in range(spec.num_channels)],
        samples=x,
        fs=float(fs),
        annotations=anns,
    )
