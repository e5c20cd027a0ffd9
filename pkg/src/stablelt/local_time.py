"""Local-time estimators for sampled paths.

Paths are treated as piecewise constant on ``[t_k, t_k + dt)`` (left-endpoint
rule), so every occupation integral up to time ``t`` is a sum over the grid
points with ``t_k < t``. All estimators accept 2-D replicate batches and then
return one value per row.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .path_engine import SamplePath

__all__ = [
    "LocalTimeEstimate",
    "UnreliableEstimate",
    "occupation_count",
    "window_estimate",
    "smoothed_estimate",
    "charrep_estimate",
    "charrep_with_diagnostics",
    "estimate_grid",
    "occupation_identity_check",
    "write_estimate_csv",
]

_TOL = 1e-12


class UnreliableEstimate(UserWarning):
    """Window narrower than the path's own value resolution."""


@dataclass(frozen=True)
class LocalTimeEstimate:
    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray  # (len(t_grid), len(x_grid)) or with a leading replicate axis
    estimator: str
    param: dict
    source: dict = field(default_factory=dict)

    def mass(self, t_index: int = -1) -> np.ndarray:
        """Trapezoid integral over x of L(t, .)."""
        return np.trapezoid(self.values[..., t_index, :], self.x_grid, axis=-1)


def _left_points(path: SamplePath, t: float) -> int:
    """Number of grid points with t_k < t (k from the first grid point)."""
    t0 = path.times[0]
    if t < t0 - _TOL:
        raise ValueError("t precedes the path's first time")
    horizon = path.times[-1] + path.dt
    if t > horizon + 1e-9:
        raise ValueError(f"t={t} beyond path horizon {horizon}")
    return int(min(path.n, max(0, math.ceil((t - t0) / path.dt - 1e-9))))


def _value_resolution(values: np.ndarray) -> float:
    v = np.atleast_2d(values)
    if v.shape[-1] < 2:
        return 0.0
    return float(np.median(np.abs(np.diff(v, axis=-1))))


def occupation_count(path: SamplePath, t: float, lo: float, hi: float, closed: bool = False) -> np.ndarray:
    """dt * #{k : t_k < t, lo <= path(t_k) < hi} (``closed`` uses <= hi)."""
    k = _left_points(path, t)
    v = path.values[..., :k]
    inside = (v >= lo) & ((v <= hi) if closed else (v < hi))
    return inside.sum(axis=-1) * path.dt


def window_estimate(path: SamplePath, t: float, x: float, eta: float):
    """(1/eta) * time spent in [x, x + eta) up to t."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    res = _value_resolution(path.values)
    if res > 0 and eta < res:
        warnings.warn(
            f"eta={eta:g} is below the path's typical step {res:g}; window estimate unreliable",
            UnreliableEstimate,
            stacklevel=2,
        )
    out = occupation_count(path, t, x, x + eta) / eta
    return float(out) if np.ndim(out) == 0 else out


def smoothed_estimate(path: SamplePath, t: float, x: float, eps: float):
    """int_0^t phi_eps(path(s) - x) ds with phi_eps the N(0, eps^2) density."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    k = _left_points(path, t)
    z = (path.values[..., :k] - x) / eps
    dens = np.exp(-0.5 * z * z) / (eps * math.sqrt(2 * math.pi))
    out = dens.sum(axis=-1) * path.dt
    return float(out) if np.ndim(out) == 0 else out


def _charrep(values: np.ndarray, dt: float, x: float, u_max: float, quad_n: int):
    # nested trapezoid on a symmetric u grid; the sine part cancels by symmetry
    if u_max == 0:
        zero = np.zeros(values.shape[:-1])
        return zero, zero
    u = np.linspace(-u_max, u_max, quad_n + 1)
    w = np.full(u.size, 2 * u_max / quad_n)
    w[0] = w[-1] = u_max / quad_n
    v = values - x
    re = np.zeros(values.shape[:-1])
    im = np.zeros(values.shape[:-1])
    for ui, wi in zip(u, w):
        ph = ui * v
        re += wi * np.cos(ph).sum(axis=-1) * dt
        im += wi * np.sin(ph).sum(axis=-1) * dt
    return re / (2 * math.pi), im / (2 * math.pi)


def charrep_with_diagnostics(path: SamplePath, t: float, x: float, u_max: float = 200.0, quad_n: int = 4096) -> dict:
    """Characteristic-function estimate plus the imaginary residue and the
    u_max-doubling change."""
    if u_max < 0:
        raise ValueError("u_max must be nonnegative")
    if quad_n < 16:
        raise ValueError("quad_n must be >= 16")
    k = _left_points(path, t)
    vals = path.values[..., :k]
    re, im = _charrep(vals, path.dt, x, u_max, quad_n)
    re2, _ = _charrep(vals, path.dt, x, 2 * u_max, 2 * quad_n) if u_max > 0 else (re, im)
    with np.errstate(divide="ignore", invalid="ignore"):
        change = np.where(re != 0, np.abs(re2 - re) / np.abs(re), np.where(re2 == 0, 0.0, np.inf))
    return {
        "value": re,
        "imag": im,
        "doubled": re2,
        "relative_change": change,
        "converged": bool(np.all(change <= 0.1)),
    }


def charrep_estimate(path: SamplePath, t: float, x: float, u_max: float = 200.0, quad_n: int = 4096, check: bool = False):
    """(1/2pi) int_{-u_max}^{u_max} int_0^t cos(u (path(s) - x)) ds du.

    With ``check=True`` the u_max-doubling diagnostic is evaluated and a
    warning is raised when the estimate moves by more than 10%.
    """
    if u_max < 0:
        raise ValueError("u_max must be nonnegative")
    if quad_n < 16:
        raise ValueError("quad_n must be >= 16")
    if check:
        diag = charrep_with_diagnostics(path, t, x, u_max, quad_n)
        if not diag["converged"]:
            warnings.warn("charrep estimate changed by >10% under u_max doubling", UnreliableEstimate, stacklevel=2)
        re = diag["value"]
    else:
        k = _left_points(path, t)
        re, _ = _charrep(path.values[..., :k], path.dt, x, u_max, quad_n)
    return float(re) if np.ndim(re) == 0 else re


_ESTIMATORS = {
    "window": ("eta", window_estimate),
    "smoothed": ("eps", smoothed_estimate),
}


def _window_counts(path: SamplePath, t: float, x_grid: np.ndarray, eta: float) -> np.ndarray:
    # #{lo <= v < hi} = #{v < hi} - #{v < lo} on each sorted row
    k = _left_points(path, t)
    rows = np.sort(np.atleast_2d(path.values)[:, :k], axis=-1)
    out = np.array([np.searchsorted(r, x_grid + eta) - np.searchsorted(r, x_grid) for r in rows], float) * path.dt
    return out[0] if path.values.ndim == 1 else out


def estimate_grid(path: SamplePath, t_grid, x_grid, estimator: str = "window", **param) -> LocalTimeEstimate:
    t_grid = np.atleast_1d(np.asarray(t_grid, float))
    x_grid = np.atleast_1d(np.asarray(x_grid, float))
    if estimator == "charrep":
        fn = lambda p, t, x: charrep_estimate(p, t, x, param.get("u_max", 200.0), param.get("quad_n", 4096))  # noqa: E731
    elif estimator == "window":
        eta = float(param["eta"])
        if not eta > 0:
            raise ValueError("eta must be positive")
        vals = np.stack([_window_counts(path, t, x_grid, eta) for t in t_grid], axis=-2) / eta
        return LocalTimeEstimate(t_grid, x_grid, vals, estimator, dict(param), dict(path.meta))
    else:
        name, est = _ESTIMATORS[estimator]
        value = param[name]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnreliableEstimate)
            fn = lambda p, t, x: est(p, t, x, value)  # noqa: E731
            vals = np.stack(
                [np.stack([np.asarray(fn(path, t, x)) for x in x_grid], axis=-1) for t in t_grid], axis=-2
            )
        return LocalTimeEstimate(t_grid, x_grid, vals, estimator, dict(param), dict(path.meta))
    vals = np.stack([np.stack([np.asarray(fn(path, t, x)) for x in x_grid], axis=-1) for t in t_grid], axis=-2)
    return LocalTimeEstimate(t_grid, x_grid, vals, estimator, dict(param), dict(path.meta))


def occupation_identity_check(path: SamplePath, estimate: LocalTimeEstimate, interval, t: float):
    """|time in [a, b] up to t - int_a^b L(t, x) dx|.

    The x integral uses the estimate's grid cells restricted to [a, b]: for a
    window estimate on a grid with step equal to eta, this is the exact
    partition of [a, b) into windows.
    """
    a, b = interval
    xg = estimate.x_grid
    if xg[0] > a + _TOL or xg[-1] < b - _TOL:
        raise ValueError("x_grid must cover the interval")
    ti = int(np.argmin(np.abs(estimate.t_grid - t)))
    L = estimate.values[..., ti, :]
    lhs = occupation_count(path, t, a, b)
    if estimate.estimator == "window":
        eta = estimate.param["eta"]
        sel = (xg >= a - _TOL) & (xg + eta <= b + _TOL)
        rhs = L[..., sel].sum(axis=-1) * eta
    else:
        sel = (xg >= a - _TOL) & (xg <= b + _TOL)
        rhs = np.trapezoid(L[..., sel], xg[sel], axis=-1)
    out = np.abs(lhs - rhs)
    return float(out) if np.ndim(out) == 0 else out


def write_estimate_csv(est: LocalTimeEstimate, dest) -> Path:
    dest = Path(dest)
    if est.values.ndim != 2:
        raise ValueError("CSV export takes a single-path estimate")
    (pname, pval), = [(k, v) for k, v in est.param.items()][:1] or [("", "")]
    with dest.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "value", "estimator", "param"])
        for i, t in enumerate(est.t_grid):
            for j, x in enumerate(est.x_grid):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(est.values[i, j])), est.estimator, f"{pname}={pval}"])
    return dest
