"""Hot reduction kernels with a numba path and a pure-numpy fallback.

Set ``FOW_DISABLE_NUMBA=1`` before import to force the numpy path. Both
paths are always importable through :data:`numpy_kernels` and
:data:`numba_kernels` (the latter is ``None`` without numba) so the
benchmark and the equivalence tests can compare them side by side.
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

DISABLE_ENV = "FOW_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() not in {"1", "true", "yes", "on"}


# ---------------------------------------------------------------- numpy path


def _segment_counts_np(segment, label, mask, num_segments):
    seg = segment[mask]
    pos = np.bincount(seg, weights=label[mask].astype(np.float64), minlength=num_segments)
    tot = np.bincount(seg, minlength=num_segments).astype(np.float64)
    return pos[:num_segments], tot[:num_segments]


def _log_loss_sum_np(pred, label):
    terms = np.where(label, -np.log(pred), -np.log1p(-pred))
    return math.fsum(terms.tolist())


def _matured_labels_np(day, converted, delay, t_window, snapshot):
    elapsed = snapshot - day
    censored = elapsed < t_window
    # NaN delays compare False, so non-converters never get a positive label
    with np.errstate(invalid="ignore"):
        label = converted & (delay <= t_window) & (delay <= elapsed)
    return label, censored


numpy_kernels = SimpleNamespace(
    name="numpy",
    segment_counts=_segment_counts_np,
    log_loss_sum=_log_loss_sum_np,
    matured_labels=_matured_labels_np,
)


# ---------------------------------------------------------------- numba path

numba_kernels = None

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

if njit is not None:

    @njit(cache=True, nogil=True)
    def _segment_counts_nb(segment, label, mask, num_segments):
        pos = np.zeros(num_segments, dtype=np.float64)
        tot = np.zeros(num_segments, dtype=np.float64)
        for i in range(segment.shape[0]):
            if mask[i]:
                s = segment[i]
                tot[s] += 1.0
                if label[i]:
                    pos[s] += 1.0
        return pos, tot

    @njit(cache=True, nogil=True)
    def _log_loss_sum_nb(pred, label):
        # Neumaier compensated summation
        total = 0.0
        comp = 0.0
        for i in range(pred.shape[0]):
            if label[i]:
                x = -math.log(pred[i])
            else:
                x = -math.log1p(-pred[i])
            t = total + x
            if abs(total) >= abs(x):
                comp += (total - t) + x
            else:
                comp += (x - t) + total
            total = t
        return total + comp

    @njit(cache=True, nogil=True)
    def _matured_labels_nb(day, converted, delay, t_window, snapshot):
        n = day.shape[0]
        label = np.zeros(n, dtype=np.bool_)
        censored = np.zeros(n, dtype=np.bool_)
        for i in range(n):
            elapsed = snapshot - day[i]
            censored[i] = elapsed < t_window
            if converted[i]:
                d = delay[i]
                label[i] = d <= t_window and d <= elapsed
        return label, censored

    numba_kernels = SimpleNamespace(
        name="numba",
        segment_counts=_segment_counts_nb,
        log_loss_sum=_log_loss_sum_nb,
        matured_labels=_matured_labels_nb,
    )


active = numba_kernels if (numba_kernels is not None and _numba_requested()) else numpy_kernels
BACKEND = active.name


def segment_counts(segment, label, mask, num_segments):
    """Per-segment (positives, totals) over the rows selected by ``mask``."""
    return active.segment_counts(
        np.ascontiguousarray(segment, dtype=np.int64),
        np.ascontiguousarray(label, dtype=np.bool_),
        np.ascontiguousarray(mask, dtype=np.bool_),
        int(num_segments),
    )


def log_loss_sum(pred, label):
    """Total binary cross-entropy in nats, summed with error compensation."""
    return float(
        active.log_loss_sum(
            np.ascontiguousarray(pred, dtype=np.float64),
            np.ascontiguousarray(label, dtype=np.bool_),
        )
    )


def matured_labels(day, converted, delay, t_window, snapshot):
    """Observed window labels and censoring flags at a snapshot time."""
    return active.matured_labels(
        np.ascontiguousarray(day, dtype=np.float64),
        np.ascontiguousarray(converted, dtype=np.bool_),
        np.ascontiguousarray(delay, dtype=np.float64),
        float(t_window),
        float(snapshot),
    )
