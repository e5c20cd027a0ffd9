"""Linear processes X_k = sum_j c_j xi_{k-j}, partial sums and S_j* draws."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .linear_model import CoefficientModel, SlowlyVarying, coefficients, cumulative_g, norming
from .numerics import compensated_cumsum
from .stable_rng import InnovationSpec, sample_innovations

__all__ = [
    "SamplePath",
    "TruncationPolicy",
    "MAX_FFT_SIZE",
    "default_truncation",
    "fft_convolve",
    "direct_convolve",
    "simulate_linear_process",
    "simulate_partial_sums",
    "partial_sums",
    "normalized_path",
    "s_star_weights",
    "s_star",
    "write_path_csv",
    "write_frame",
    "read_frame",
]

MAX_FFT_SIZE = 2**27
FRAME_MAGIC = b"SLTP"
FRAME_VERSION = 1
_DTYPES = {np.dtype("<f8"): 1, np.dtype("<f4"): 2}


@dataclass(frozen=True)
class SamplePath:
    """Values on a uniform time grid.

    ``values`` may be 2-D, in which case rows are independent replicates
    sharing ``times``.
    """

    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, float)
        v = np.asarray(self.values, float)
        if t.ndim != 1 or v.shape[-1] != t.size:
            raise ValueError("values must end with an axis of the same length as times")
        if t.size > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("times must be strictly increasing")
            if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
                raise ValueError("times must be uniformly spaced")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 1.0

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def replicates(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[0]

    def row(self, i: int) -> "SamplePath":
        return replace(self, values=self.values[i], meta={**self.meta, "replicate": i})

    def subsample(self, step: int) -> "SamplePath":
        """Keep every ``step``-th grid point, starting from the first."""
        return replace(
            self,
            times=self.times[::step],
            values=self.values[..., ::step],
            meta={**self.meta, "subsample": step},
        )


@dataclass(frozen=True)
class TruncationPolicy:
    mode: str = "truncate"  # "truncate" or "exact_finite"
    m: int = 0

    def __post_init__(self):
        if self.mode not in ("truncate", "exact_finite"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.m < 0:
            raise ValueError("m must be nonnegative")

    @classmethod
    def exact_finite(cls) -> "TruncationPolicy":
        return cls("exact_finite", 0)

    def presample(self) -> int:
        return 0 if self.mode == "exact_finite" else self.m


def default_truncation(model: CoefficientModel, n: int) -> TruncationPolicy:
    if model.finite_length is not None:
        return TruncationPolicy("truncate", model.finite_length - 1)
    return TruncationPolicy("truncate", max(2**14, 4 * n))


def _fft_size(n: int) -> int:
    size = 1 << max(0, (n - 1).bit_length())
    if size > MAX_FFT_SIZE:
        raise OverflowError(f"FFT length {size} exceeds the cap {MAX_FFT_SIZE}; reduce n or m")
    return size


def fft_convolve(signal: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Full linear convolution along the last axis via zero-padded real FFTs."""
    signal = np.asarray(signal, float)
    kernel = np.asarray(kernel, float)
    full = signal.shape[-1] + kernel.shape[-1] - 1
    size = _fft_size(full)
    spec = np.fft.rfft(signal, size, axis=-1) * np.fft.rfft(kernel, size, axis=-1)
    return np.fft.irfft(spec, size, axis=-1)[..., :full]


def direct_convolve(signal: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Naive O(n m) reference convolution (independent of the FFT route)."""
    signal = np.asarray(signal, float)
    kernel = np.asarray(kernel, float)
    n, m = signal.size, kernel.size
    out = np.zeros(n + m - 1)
    for j in range(m):
        out[j : j + n] += kernel[j] * signal
    return out


def _linear_from_innovations(c: np.ndarray, xi: np.ndarray, n: int, m: int) -> np.ndarray:
    # xi[..., i] is xi_{i + 1 - m}; X_k = sum_j c_j xi_{k-j} sits at index k - 1 + m
    conv = fft_convolve(xi, c)
    return conv[..., m : m + n]


def simulate_linear_process(
    model: CoefficientModel,
    spec: InnovationSpec,
    n: int,
    policy: TruncationPolicy | None,
    stream,
    replicates: int | None = None,
) -> SamplePath:
    """Sample X_1..X_n.

    A list of streams yields one replicate row per stream; a single stream
    with ``replicates`` set draws all rows from that stream.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    policy = policy or default_truncation(model, n)
    m = policy.presample()
    total = n + m
    _fft_size(2 * total - 1)
    shape = (total,) if replicates is None or isinstance(stream, (list, tuple)) else (replicates, total)
    xi = sample_innovations(spec, stream, shape)
    c = coefficients(model, total)
    fin = model.finite_length
    if fin is not None and fin < total:
        c = c[:fin]
    x = _linear_from_innovations(c, xi, n, m)
    meta = {
        "kind": "linear_process",
        "n": n,
        "model": model.ident,
        "truncation": {"mode": policy.mode, "m": m},
        "normalization": None,
    }
    meta.update(_stream_meta(stream))
    return SamplePath(np.arange(1, n + 1) / n, x, meta)


def _stream_meta(stream) -> dict:
    if isinstance(stream, (list, tuple)):
        if stream and hasattr(stream[0], "stream_id"):
            return {"seed": stream[0].master_seed, "stream_ids": [s.stream_id for s in stream]}
        return {}
    if hasattr(stream, "stream_id"):
        return {"seed": stream.master_seed, "stream_id": stream.stream_id, "counter": stream.counter}
    return {}


def partial_sums(path: SamplePath) -> SamplePath:
    """S_k = X_1 + ... + X_k with compensated accumulation."""
    s = compensated_cumsum(path.values, axis=-1)
    return replace(path, values=s, meta={**path.meta, "kind": "partial_sums"})


def normalized_path(sums: SamplePath, gamma_n: float) -> SamplePath:
    """gamma_n^{-1} S_[nt] on the grid t = k/n."""
    if not gamma_n > 0:
        raise ValueError("gamma_n must be positive")
    return replace(
        sums,
        values=sums.values / gamma_n,
        meta={**sums.meta, "normalization": float(gamma_n)},
    )


def simulate_partial_sums(
    model: CoefficientModel,
    spec: InnovationSpec,
    n: int,
    stream,
    replicates: int | None = None,
    policy: TruncationPolicy | None = None,
    normalize: bool = True,
) -> SamplePath:
    """Convenience pipeline: X -> S -> gamma_n^{-1} S."""
    x = simulate_linear_process(model, spec, n, policy, stream, replicates)
    s = partial_sums(x)
    if not normalize:
        return s
    _, gamma = norming(model, SlowlyVarying.constant(spec.gscale), n)
    return normalized_path(s, abs(gamma))


def s_star_weights(model: CoefficientModel, G: SlowlyVarying, j: int, form: str = "exact") -> np.ndarray:
    """Weights w_1..w_j of S_j* = sum_k w_k xi_k.

    ``exact``: w_k = g(j - k) / gamma_j.
    ``simplified``: w_k = (k/j)^(H - 1/alpha) / b_j.
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    b, gamma = norming(model, G, j)
    if form == "exact":
        g = cumulative_g(model, j)
        return g[::-1] / abs(gamma)
    if form == "simplified":
        k = np.arange(1, j + 1, dtype=float)
        return (k / j) ** model.d / b
    raise ValueError(f"unknown weight form {form!r}")


def s_star(model: CoefficientModel, spec: InnovationSpec, j: int, stream, form: str = "exact", size=None):
    """One draw (or ``size`` draws) of S_j*; returns (value, meta)."""
    w = s_star_weights(model, SlowlyVarying.constant(spec.gscale), j, form)
    shape = (j,) if size is None else (size, j)
    xi = sample_innovations(spec, stream, shape)
    val = xi @ w
    return val, {"form": form, "j": j}


# --------------------------------------------------------------------------
# export


def write_path_csv(path: SamplePath, dest) -> Path:
    dest = Path(dest)
    if path.values.ndim != 1:
        raise ValueError("CSV export takes a single path; use .row(i)")
    with dest.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "time", "value"])
        for i, (t, v) in enumerate(zip(path.times, path.values)):
            w.writerow([i, repr(float(t)), repr(float(v))])
    return dest


def write_frame(path: SamplePath, dest, dtype="<f8") -> Path:
    """Binary frame: magic 'SLTP', u16 version, u16 dtype code, u32 rows,
    u64 n, f64 t0, f64 dt, then rows*n little-endian values."""
    dest = Path(dest)
    dt = np.dtype(dtype)
    if dt not in _DTYPES:
        raise ValueError(f"unsupported frame dtype {dtype}")
    vals = np.atleast_2d(path.values).astype(dt)
    header = FRAME_MAGIC + struct.pack(
        "<HHIQdd", FRAME_VERSION, _DTYPES[dt], vals.shape[0], vals.shape[1], float(path.times[0]), path.dt
    )
    with dest.open("wb") as fh:
        fh.write(header)
        fh.write(vals.tobytes())
    return dest


def read_frame(src) -> SamplePath:
    raw = Path(src).read_bytes()
    if raw[:4] != FRAME_MAGIC:
        raise ValueError("not a path frame (bad magic)")
    version, code, rows, n, t0, dt = struct.unpack_from("<HHIQdd", raw, 4)
    if version != FRAME_VERSION:
        raise ValueError(f"unsupported frame version {version}")
    dtype = {v: k for k, v in _DTYPES.items()}[code]
    off = 4 + struct.calcsize("<HHIQdd")
    vals = np.frombuffer(raw, dtype=dtype, count=rows * n, offset=off).astype(float).reshape(rows, n)
    times = t0 + dt * np.arange(n)
    return SamplePath(times, vals[0] if rows == 1 else vals, {"source": str(src)})
