"""Small numeric kernels shared by the path, estimator and harness modules."""
from __future__ import annotations

import numpy as np
from scipy import stats

__all__ = ["compensated_cumsum", "compensated_sum", "ks_distance", "wasserstein1", "mad_rescale"]


def compensated_cumsum(x, axis: int = -1) -> np.ndarray:
    """Prefix sums along ``axis`` with Neumaier error compensation.

    The loop runs over the summation axis and is vectorized across every other
    axis, so each row's result is independent of how rows are batched.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.copy()
    xt = np.moveaxis(x, axis, 0)
    n = xt.shape[0]
    width = xt.size // n
    if width < 64 and n > 4096:
        # few long rows: run blocks side by side, then carry block offsets
        block = int(np.ceil(np.sqrt(n)))
        nblk = -(-n // block)
        pad = np.zeros((nblk * block,) + xt.shape[1:])
        pad[:n] = xt
        pad = pad.reshape((nblk, block) + xt.shape[1:])
        inner = _neumaier_scan(np.moveaxis(pad, 1, 0))  # (block, nblk, ...)
        offsets = _neumaier_scan(inner[-1])  # running totals of block sums
        offsets = np.concatenate([np.zeros((1,) + offsets.shape[1:]), offsets[:-1]])
        out = (inner + offsets[None]).swapaxes(0, 1).reshape((nblk * block,) + xt.shape[1:])[:n]
    else:
        out = _neumaier_scan(xt)
    return np.moveaxis(out, 0, axis)


def _neumaier_scan(xt: np.ndarray) -> np.ndarray:
    # summation axis first so every step touches one contiguous slab
    xt = np.ascontiguousarray(xt)
    out = np.empty_like(xt)
    s = np.zeros(xt.shape[1:])
    comp = np.zeros(xt.shape[1:])
    for k in range(xt.shape[0]):
        v = xt[k]
        t = s + v
        comp += np.where(np.abs(s) >= np.abs(v), (s - t) + v, (v - t) + s)
        s = t
        out[k] = s + comp
    return out


def compensated_sum(x, axis: int = -1) -> np.ndarray:
    return np.take(compensated_cumsum(x, axis=axis), -1, axis=axis)


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a, b = np.asarray(a, float).ravel(), np.asarray(b, float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    return float(stats.ks_2samp(a, b).statistic)


def wasserstein1(a, b) -> float:
    """Wasserstein-1 distance between the empirical laws of two samples."""
    a, b = np.asarray(a, float).ravel(), np.asarray(b, float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    return float(stats.wasserstein_distance(a, b))


def mad_rescale(x) -> np.ndarray:
    """Centre at the median and divide by the median absolute deviation."""
    x = np.asarray(x, float)
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    if mad == 0:
        return x - med
    return (x - med) / mad
