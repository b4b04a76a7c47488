"""Seizure detection from multichannel EEG.

A 1D CNN scores each one-second block, optionally fused with pairwise
neural mutual-information features between channels, and a two-state
chain factor graph smooths the per-block scores over time.

Submodules are imported on demand; ``mical.BACKEND`` reports whether the
compiled kernels or the numpy fallback are active.
"""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
