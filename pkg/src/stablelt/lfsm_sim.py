"""Simulation of the limit processes: FBM, stable Levy motion and LFSM.

Scale conventions: the driving Levy motion Z has increments with
characteristic function exp{-(t - s)|u|^alpha (...)}, so Z is Brownian motion
with variance 2 when alpha = 2. The kernel representation

    Lambda(t) = a * int [(t - u)_+^d - (-u)_+^d] Z(du),   d = H - 1/alpha,

is used for every kind; for alpha = 2 this gives Var Lambda(1) = 2 a^2 C_H with
C_H = Gamma(H + 1/2)^2 / (Gamma(2H + 1) sin(pi H)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .numerics import ks_distance
from .path_engine import SamplePath, fft_convolve
from .stable_rng import StableLaw, sample_stable

__all__ = [
    "LfsmSpec",
    "mvn_constant",
    "fgn_autocovariance",
    "fbm_covariance",
    "circulant_eigenvalues",
    "simulate_lfsm",
    "self_similarity_check",
    "refinement_sensitivity",
    "limit_spec",
]


@dataclass(frozen=True)
class LfsmSpec:
    alpha: float
    H: float
    a: float = 1.0
    beta: float = 0.0
    local_time: bool = True

    def __post_init__(self):
        if not (0 < self.alpha <= 2):
            raise ValueError("alpha must lie in (0, 2]")
        if not (0 < self.H < 1):
            raise ValueError("H must lie in (0, 1)")
        if self.a == 0:
            raise ValueError("a must be nonzero")
        if self.alpha == 2 and self.beta != 0:
            raise ValueError("beta is irrelevant for alpha = 2; use 0")
        if self.kind == "levy" and self.local_time and not (1 < self.alpha <= 2):
            raise ValueError("stable Levy motion has no local time for alpha <= 1")

    @property
    def d(self) -> float:
        return self.H - 1.0 / self.alpha

    @property
    def kind(self) -> str:
        if math.isclose(self.H, 1.0 / self.alpha, rel_tol=0, abs_tol=1e-12):
            return "levy"
        if self.alpha == 2:
            return "fbm"
        return "lfsm"


def mvn_constant(H: float) -> float:
    """int_{-inf}^{0} ((1-u)^d - (-u)^d)^2 du + 1/(2H), d = H - 1/2."""
    return float(gamma_fn(H + 0.5) ** 2 / (gamma_fn(2 * H + 1) * math.sin(math.pi * H)))


def fgn_autocovariance(H: float, k):
    k = np.abs(np.asarray(k, float))
    return 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def fbm_covariance(spec: LfsmSpec, s, t):
    """Cov(Lambda(s), Lambda(t)) for the alpha = 2 process."""
    s, t = np.asarray(s, float), np.asarray(t, float)
    var1 = 2.0 * spec.a**2 * mvn_constant(spec.H)
    h2 = 2 * spec.H
    return 0.5 * var1 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)


def circulant_eigenvalues(H: float, n: int) -> np.ndarray:
    """Eigenvalues of the 2n circulant embedding of the fGn covariance."""
    r = fgn_autocovariance(H, np.arange(n + 1))
    row = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.rfft(row).real
    lam = np.concatenate([lam, lam[-2:0:-1]])
    if lam.min() < -1e-10 * lam.max():
        raise ArithmeticError(f"circulant embedding not nonnegative definite (H={H}, n={n})")
    return np.clip(lam, 0.0, None)


def _fgn_rows(H: float, n: int, streams) -> np.ndarray:
    lam = circulant_eigenvalues(H, n)
    m = lam.size
    rows = []
    for s in streams:
        rng = s.generator() if hasattr(s, "generator") else s
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        rows.append(z)
    z = np.asarray(rows)
    w = np.fft.fft(np.sqrt(lam / m) * z, axis=-1)
    return w[:, :n].real


def _kernel_cells(d: float, count: int) -> np.ndarray:
    # kappa[i] = int_{i-1}^{i} v_+^d dv, so the cell average of (t-u)_+^d is h^d kappa
    i = np.arange(count, dtype=float)
    k = np.zeros(count)
    k[1:] = (i[1:] ** (d + 1) - i[:-1] ** (d + 1)) / (d + 1)
    return k


def simulate_lfsm(
    spec: LfsmSpec,
    grid_n: int,
    t_max: float,
    stream,
    refine: int = 8,
    t_past: float | None = None,
    method: str = "auto",
) -> SamplePath:
    """Lambda(k / grid_n) for k = 0..grid_n * t_max.

    ``stream`` is one RngStream (single path) or a list of them (one row each).
    ``method`` forces ``"kernel"`` discretization even when an exact method
    exists.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    steps = int(round(grid_n * t_max))
    if steps < 1 or not math.isclose(steps, grid_n * t_max, rel_tol=1e-9):
        raise ValueError("grid_n * t_max must be a positive integer")
    single = not isinstance(stream, (list, tuple))
    streams = [stream] if single else list(stream)
    kind = spec.kind if method == "auto" else method
    meta = {"kind": "lfsm", "process": kind, "alpha": spec.alpha, "H": spec.H, "a": spec.a, "grid_n": grid_n}

    if kind == "levy":
        law = StableLaw(spec.alpha, spec.beta, 1.0 / grid_n)
        inc = sample_stable(law, streams, steps)
        vals = spec.a * np.cumsum(inc, axis=-1)
    elif kind == "fbm":
        if spec.alpha != 2:
            raise ValueError("exact fbm simulation needs alpha = 2")
        fgn = _fgn_rows(spec.H, steps, streams)
        scale = spec.a * math.sqrt(2.0 * mvn_constant(spec.H)) * grid_n ** (-spec.H)
        vals = scale * np.cumsum(fgn, axis=-1)
    elif kind in ("lfsm", "kernel"):
        d = spec.d
        if d <= -1:
            raise ValueError("kernel exponent H - 1/alpha must exceed -1")
        t_past = 8.0 * t_max if t_past is None else t_past
        h = 1.0 / (grid_n * refine)
        past = int(round(t_past / h))
        cells = past + steps * refine
        law = StableLaw(spec.alpha, spec.beta, h)
        dz = sample_stable(law, streams, cells)
        conv = fft_convolve(dz, _kernel_cells(d, cells + 1))
        idx = past + refine * np.arange(1, steps + 1)
        vals = spec.a * h**d * (conv[:, idx] - conv[:, [past]])
        meta.update(refine=refine, t_past=t_past)
    else:
        raise ValueError(f"unknown method {method!r}")

    vals = np.concatenate([np.zeros((len(streams), 1)), vals], axis=-1)
    times = np.arange(steps + 1) / grid_n
    if hasattr(streams[0], "stream_id"):
        meta.update(seed=streams[0].master_seed, stream_ids=[s.stream_id for s in streams])
    return SamplePath(times, vals[0] if single else vals, meta)


def self_similarity_check(spec: LfsmSpec, c: float, n: int, replicates: int, streams=None, t0: float = 0.25, **kw) -> float:
    """KS distance between c^-H Lambda(c t0) and Lambda(t0) over replicates."""
    from .stable_rng import derive_stream

    if not c > 1:
        raise ValueError("scale c must exceed 1")
    if streams is None:
        streams = [derive_stream(0, i) for i in range(replicates)]
    t_max = math.ceil(c * t0 * n) / n
    path = simulate_lfsm(spec, n, t_max, list(streams), **kw)
    i0 = int(round(t0 * n))
    i1 = int(round(c * t0 * n))
    vals = np.atleast_2d(path.values)
    return ks_distance(vals[:, i1] * c ** (-spec.H), vals[:, i0])


def refinement_sensitivity(spec: LfsmSpec, grid_n: int, streams, refine: int = 8) -> dict:
    """Relative change of sd(Lambda(1)) when the refinement factor doubles."""
    sd = []
    for r in (refine, 2 * refine):
        p = simulate_lfsm(spec, grid_n, 1.0, list(streams), refine=r, method="kernel")
        sd.append(float(np.std(np.atleast_2d(p.values)[:, -1])))
    return {"sd": sd, "relative_change": abs(sd[1] - sd[0]) / sd[0]}


def limit_spec(model, beta: float = 0.0) -> LfsmSpec:
    """LFSM matching gamma_n^-1 S_[nt] for a coefficient model.

    With g(m) = sum_{i<=m} c_i ~ R m^d / d, the weights of S_n are
    asymptotically (1/d) times the LFSM kernel, so a = 1/d; for H = 1/alpha
    the limit is the Levy motion itself (a = 1).
    """
    d = model.d
    a = 1.0 if model.H == 1.0 / model.alpha or not model.is_c1 else 1.0 / d
    return LfsmSpec(model.alpha, model.H, a=a, beta=beta if model.alpha < 2 else 0.0, local_time=False)
