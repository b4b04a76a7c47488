"""Notch filtering, seizure-centred balancing and per-second windowing."""

from dataclasses import dataclass, replace
import csv
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from .edf import EdfError, EegRecord, SeizureAnnotation

__all__ = [
    "NotchSpec",
    "WindowSet",
    "notch_coefficients",
    "notch_filter",
    "balance_spans",
    "balance",
    "blockify",
    "write_labels_csv",
    "CNN_SECONDS",
    "MI_SECONDS",
    "BALANCE_FACTOR",
]

CNN_SECONDS = 4
MI_SECONDS = 32
BALANCE_FACTOR = 10


@dataclass(frozen=True)
class NotchSpec:
    center_hz: float = 60.0
    quality_q: float = 30.0
    fs: float = 256.0

    def __post_init__(self):
        if not 0 < self.center_hz < self.fs / 2:
            raise ValueError(f"notch centre {self.center_hz} Hz must lie in (0, {self.fs / 2}) Hz")
        if self.quality_q <= 0:
            raise ValueError("quality factor must be positive")


def notch_coefficients(spec):
    """Second-order notch ``(b, a)`` with unit gain at DC and Nyquist.

    Bandwidth is ``center / Q`` measured at the -3 dB points.
    """
    w0 = 2.0 * math.pi * spec.center_hz / spec.fs
    bw = w0 / spec.quality_q
    gain = 1.0 / (1.0 + math.tan(bw / 2.0))
    c = math.cos(w0)
    b = gain * np.array([1.0, -2.0 * c, 1.0])
    a = np.array([1.0, -2.0 * gain * c, 2.0 * gain - 1.0])
    return b, a


def notch_filter(rec, spec):
    if abs(spec.fs - rec.fs) > 1e-9:
        raise ValueError(f"notch designed for {spec.fs} Hz, record sampled at {rec.fs} Hz")
    b, a = notch_coefficients(spec)
    return replace(rec, samples=lfilter(b, a, rec.samples, axis=1))


def balance_spans(annotations, duration_s, factor=BALANCE_FACTOR):
    """Merged ``[start, end)`` spans kept around each seizure, clipped to the record."""
    spans = []
    for a in annotations:
        d = a.end_s - a.start_s
        spans.append((max(0, a.start_s - factor * d), min(duration_s, a.end_s + factor * d)))
    spans.sort()
    merged = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def balance(rec, factor=BALANCE_FACTOR):
    """Keep ``factor * d`` seconds before and after each seizure of length ``d``.

    Retained spans are concatenated in time order and annotations are
    re-indexed onto the shortened record.
    """
    if not rec.annotations:
        raise EdfError("cannot balance a record without seizure annotations")
    fs = rec.fs
    duration = int(math.floor(rec.duration_s + 1e-9))
    spans = balance_spans(rec.annotations, duration, factor)
    pieces = []
    offsets = []
    kept = 0
    for lo, hi in spans:
        pieces.append(rec.samples[:, int(round(lo * fs)):int(round(hi * fs))])
        offsets.append((lo, hi, kept))
        kept += hi - lo
    anns = []
    for a in sorted(rec.annotations, key=lambda a: a.start_s):
        for lo, hi, base in offsets:
            if lo <= a.start_s and a.end_s <= hi:
                anns.append(SeizureAnnotation(base + a.start_s - lo, base + a.end_s - lo))
                break
    return replace(rec, samples=np.hstack(pieces), annotations=anns)


@dataclass
class WindowSet:
    """Per-second blocks with causal CNN and MI windows over one record.

    Windows are views into ``signal``: block ``k`` ending at second
    ``block_times[k]`` sees ``signal[:, (t - 4) * fs:t * fs]`` for the CNN and
    ``signal[:, (t - 32) * fs:t * fs]`` for MI.
    """

    signal: np.ndarray
    fs: int
    block_times: np.ndarray
    labels: np.ndarray
    cnn_seconds: int = CNN_SECONDS
    mi_seconds: int = MI_SECONDS

    def __len__(self):
        return len(self.block_times)

    @property
    def n_channels(self):
        return self.signal.shape[0]

    @property
    def cnn_length(self):
        return self.cnn_seconds * self.fs

    @property
    def mi_length(self):
        return self.mi_seconds * self.fs

    @property
    def cnn_starts(self):
        return (self.block_times - self.cnn_seconds) * self.fs

    @property
    def mi_starts(self):
        return (self.block_times - self.mi_seconds) * self.fs

    def _windows(self, starts, length):
        view = sliding_window_view(self.signal, length, axis=1)  # (N, L - length + 1, length)
        return view[:, starts].transpose(1, 0, 2)

    @property
    def cnn_windows(self):
        """(n, N, 4 * fs) read-only view."""
        return self._windows(self.cnn_starts, self.cnn_length)

    @property
    def mi_windows(self):
        """(n, N, 32 * fs) read-only view."""
        return self._windows(self.mi_starts, self.mi_length)

    def cnn_window(self, k):
        s = self.cnn_starts[k]
        return self.signal[:, s:s + self.cnn_length]

    def mi_window(self, k):
        s = self.mi_starts[k]
        return self.signal[:, s:s + self.mi_length]


def blockify(rec, cnn_seconds=CNN_SECONDS, mi_seconds=MI_SECONDS):
    fs = rec.fs
    if abs(fs - round(fs)) > 1e-9:
        raise ValueError("blockify needs an integer sampling rate")
    fs = int(round(fs))
    duration = int(math.floor(rec.duration_s + 1e-9))
    if duration < mi_seconds:
        raise EdfError(f"record of {rec.duration_s:g} s is shorter than the {mi_seconds} s MI window")
    times = np.arange(mi_seconds, duration, dtype=np.int64)
    labels = np.zeros(len(times), dtype=np.int64)
    for a in rec.annotations:
        # block t covers second [t - 1, t)
        labels[(times - 1 < a.end_s) & (times > a.start_s)] = 1
    return WindowSet(
        signal=np.ascontiguousarray(rec.samples[:, :duration * fs]),
        fs=fs,
        block_times=times,
        labels=labels,
        cnn_seconds=cnn_seconds,
        mi_seconds=mi_seconds,
    )


def write_labels_csv(path, window_set):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["second", "label"])
        for t, lab in zip(window_set.block_times, window_set.labels):
            w.writerow([int(t), int(lab)])
