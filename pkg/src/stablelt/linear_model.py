"""Moving-average coefficients c_j, cumulative sums g(k) and norming sequences.

Two coefficient regimes are supported:

* ``C1`` -- regularly varying ``c_j = j**(H - 1 - 1/alpha) R(j)``; when
  ``H < 1/alpha`` the coefficients must also sum to zero, which is realised by
  fractional differencing ``(1 - B)**(-d)`` with ``d = H - 1/alpha``.
* ``C2`` -- an explicit absolutely ``tau``-summable sequence with nonzero sum.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

__all__ = [
    "SlowlyVarying",
    "C1",
    "C2",
    "FarimaNegative",
    "CoefficientModel",
    "NormSchedule",
    "NormingError",
    "farima_coefficients",
    "coefficients",
    "cumulative_g",
    "norming",
    "solve_bn",
    "beta_schedule",
    "norm_schedule",
    "write_coefficients_csv",
]

BISECTION_RTOL = 1e-10


class NormingError(RuntimeError):
    """Root bracketing for b_n failed."""


@dataclass(frozen=True)
class SlowlyVarying:
    """``Constant(c)`` or ``LogPower(p)``: x -> (ln(e + x))**p."""

    kind: str = "constant"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "logpower"):
            raise ValueError(f"unknown slowly varying kind {self.kind!r}")
        if self.kind == "constant" and not self.value > 0:
            raise ValueError("Constant slowly varying function must be positive")

    @classmethod
    def constant(cls, c: float = 1.0) -> "SlowlyVarying":
        return cls("constant", float(c))

    @classmethod
    def log_power(cls, p: float) -> "SlowlyVarying":
        return cls("logpower", float(p))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.value == 0.0

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.kind == "constant":
            return np.full_like(x, self.value) if x.ndim else self.value
        out = np.log(np.e + x) ** self.value
        return out if x.ndim else float(out)

    def at_zero(self, u):
        """G(u) for u -> 0, i.e. the function evaluated at 1/u."""
        u = np.asarray(u, float)
        with np.errstate(divide="ignore"):
            return self(1.0 / u)


@dataclass(frozen=True)
class FarimaNegative:
    d: float

    def __post_init__(self):
        if not self.d < 0:
            raise ValueError("FarimaNegative needs d < 0")


@dataclass(frozen=True)
class C1:
    H: float
    alpha: float
    R: SlowlyVarying = field(default_factory=SlowlyVarying)
    zero_sum: bool = False
    # "power" gives c_j = j^(d-1) R(j); "farima" uses (1-B)^(-d)
    generator: str = "power"


@dataclass(frozen=True)
class C2:
    coeffs: tuple | FarimaNegative
    tau: float = 1.0


@dataclass(frozen=True)
class CoefficientModel:
    regime: C1 | C2
    innovation_alpha: float

    def __post_init__(self):
        a = self.innovation_alpha
        if not (0 < a <= 2):
            raise ValueError("innovation_alpha must lie in (0, 2]")
        r = self.regime
        if isinstance(r, C1):
            if not (0 < r.H < 1):
                raise ValueError("H must lie in (0, 1)")
            if not math.isclose(r.alpha, a):
                raise ValueError("C1 alpha must equal the innovation alpha")
            if math.isclose(r.H, 1.0 / a, rel_tol=0, abs_tol=1e-12):
                raise ValueError("C1 requires H != 1/alpha")
            if r.generator not in ("power", "farima"):
                raise ValueError(f"unknown C1 generator {r.generator!r}")
            if r.H - 1.0 / a < 0:
                if not r.zero_sum:
                    raise ValueError("C1 with H < 1/alpha requires zero_sum=True")
                object.__setattr__(self, "regime", C1(r.H, r.alpha, r.R, True, "farima"))
            elif r.zero_sum:
                raise ValueError("zero_sum is only meaningful when H < 1/alpha")
        elif isinstance(r, C2):
            if isinstance(r.coeffs, FarimaNegative):
                raise ValueError(
                    "FarimaNegative coefficients sum to zero, which C2 forbids; "
                    "use C1 with zero_sum=True instead"
                )
            c = np.asarray(r.coeffs, float)
            if c.ndim != 1 or len(c) == 0 or c[0] != 1.0:
                raise ValueError("C2 coefficients must be a nonempty sequence with c_0 = 1")
            if not np.all(np.isfinite(c)):
                raise ValueError("C2 coefficients must be finite")
            if not (1 < a <= 2):
                raise ValueError("C2 requires innovation_alpha in (1, 2]")
            if not (0 < r.tau <= min(a, 1.0)) or r.tau >= a:
                raise ValueError("tau must satisfy 0 < tau < alpha and tau <= 1")
            if abs(math.fsum(c)) < 1e-12:
                raise ValueError("C2 requires sum(c_j) != 0")
            object.__setattr__(self, "regime", C2(tuple(map(float, c)), r.tau))
        else:
            raise TypeError("regime must be C1 or C2")

    @classmethod
    def iid(cls, alpha: float) -> "CoefficientModel":
        return cls(C2((1.0,)), alpha)

    @classmethod
    def farima(cls, d: float, alpha: float = 2.0) -> "CoefficientModel":
        """FARIMA(0, d, 0) coefficients with d = H - 1/alpha."""
        H = d + 1.0 / alpha
        return cls(C1(H, alpha, SlowlyVarying.constant(1.0), zero_sum=d < 0, generator="farima"), alpha)

    @property
    def alpha(self) -> float:
        return self.innovation_alpha

    @property
    def H(self) -> float:
        r = self.regime
        return r.H if isinstance(r, C1) else 1.0 / self.innovation_alpha

    @property
    def d(self) -> float:
        return self.H - 1.0 / self.innovation_alpha

    @property
    def is_c1(self) -> bool:
        return isinstance(self.regime, C1)

    @property
    def finite_length(self) -> int | None:
        r = self.regime
        return len(r.coeffs) if isinstance(r, C2) else None

    @property
    def coeff_sum(self) -> float:
        r = self.regime
        if isinstance(r, C2):
            return math.fsum(r.coeffs)
        return 0.0 if r.zero_sum else math.inf

    def r_of(self, n):
        """Slowly varying R(n) entering gamma_n (C1 only).

        For the FARIMA generator c_j ~ j^(d-1) / Gamma(d), so R is the constant
        |1/Gamma(d)|; the sign is absorbed into the limit scale.
        """
        r = self.regime
        if r.generator == "farima":
            return abs(1.0 / gamma_fn(self.d)) * np.ones_like(np.asarray(n, float))
        return r.R(n)

    @property
    def ident(self) -> str:
        r = self.regime
        if isinstance(r, C1):
            return f"C1[{r.generator}](H={r.H:g},alpha={r.alpha:g},zero_sum={r.zero_sum})"
        return f"C2(len={len(r.coeffs)},sum={self.coeff_sum:g})"


def farima_coefficients(d: float, count: int) -> np.ndarray:
    """Coefficients of (1 - B)^(-d): c_j = c_{j-1} (j - 1 + d) / j."""
    j = np.arange(1, count, dtype=float)
    return np.concatenate(([1.0], np.cumprod((j - 1.0 + d) / j)))


def coefficients(model: CoefficientModel, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be positive")
    r = model.regime
    if isinstance(r, C2):
        c = np.zeros(count)
        k = min(count, len(r.coeffs))
        c[:k] = r.coeffs[:k]
        return c
    d = model.d
    if r.generator == "farima":
        return farima_coefficients(d, count)
    j = np.arange(1, count, dtype=float)
    return np.concatenate(([1.0], j ** (d - 1.0) * r.R(j)))


def cumulative_g(model: CoefficientModel, count: int) -> np.ndarray:
    """g(k) = sum_{i<=k} c_i for k = 0..count-1 (compensated prefix sum)."""
    from .numerics import compensated_cumsum

    return compensated_cumsum(coefficients(model, count))


def solve_bn(alpha: float, G: SlowlyVarying, n: float, rtol: float = BISECTION_RTOL) -> float:
    """b_n with 1/b_n = inf{u > 0 : u^alpha G(u) = 1/n}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if G.is_constant:
        c = G.value if G.kind == "constant" else 1.0
        return float((c * n) ** (1.0 / alpha))
    target = 1.0 / n

    def h(logu):
        u = math.exp(logu)
        return u**alpha * float(G.at_zero(u)) - target

    # scan upward on a log grid for the first sign change -> infimum of the level set
    grid = np.linspace(-60.0, 10.0, 1401)
    vals = np.array([h(g) for g in grid])
    if vals[0] >= 0:
        raise NormingError(f"u^alpha G(u) - 1/n is nonnegative at u = e^-60 (n={n})")
    idx = np.flatnonzero(vals >= 0)
    if idx.size == 0:
        raise NormingError(f"no root of u^alpha G(u) = 1/n below u = e^10 (n={n})")
    lo, hi = grid[idx[0] - 1], grid[idx[0]]
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
    # hi - lo in log-space bounds the relative error of u
    return float(math.exp(-0.5 * (lo + hi)))


def norming(model: CoefficientModel, G: SlowlyVarying, n: int) -> tuple[float, float]:
    """Return ``(b_n, gamma_n)``."""
    bn = solve_bn(model.innovation_alpha, G, n)
    if model.is_c1 and G.is_constant:
        # n^d (c n)^(1/alpha) = c^(1/alpha) n^H, written so c = R = 1 gives n^H exactly
        c = G.value if G.kind == "constant" else 1.0
        scale = float(model.r_of(n)) * (c ** (1.0 / model.innovation_alpha) if c != 1 else 1.0)
        gamma = scale * n**model.H
    elif model.is_c1:
        gamma = n**model.d * float(model.r_of(n)) * bn
    else:
        gamma = model.coeff_sum * bn
    return bn, float(gamma)


def beta_schedule(n, kappa: float = 0.4):
    if not (0 < kappa < 1):
        raise ValueError("kappa must lie in (0, 1)")
    return np.asarray(n, float) ** kappa


@dataclass(frozen=True)
class NormSchedule:
    n: np.ndarray
    b_n: np.ndarray
    gamma_n: np.ndarray
    beta_n: np.ndarray
    beta_exponent: float

    def check(self) -> dict:
        n = self.n
        ratio = self.beta_n / n
        return {
            "beta_increasing": bool(np.all(np.diff(self.beta_n) > 0)),
            "beta_over_n_decreasing": bool(np.all(np.diff(ratio) < 0)),
            "b_increasing": bool(np.all(np.diff(self.b_n) > 0)),
            "gamma_increasing": bool(np.all(np.diff(np.abs(self.gamma_n)) > 0)),
        }


def norm_schedule(model: CoefficientModel, G: SlowlyVarying, n_list: Sequence[int], kappa: float = 0.4) -> NormSchedule:
    n = np.asarray(n_list, dtype=np.int64)
    pairs = [norming(model, G, int(k)) for k in n]
    return NormSchedule(
        n=n,
        b_n=np.array([p[0] for p in pairs]),
        gamma_n=np.array([p[1] for p in pairs]),
        beta_n=beta_schedule(n, kappa),
        beta_exponent=kappa,
    )


def write_coefficients_csv(model: CoefficientModel, count: int, path) -> Path:
    path = Path(path)
    c = coefficients(model, count)
    g = cumulative_g(model, count)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "c_j", "g_j"])
        for j in range(count):
            w.writerow([j, repr(float(c[j])), repr(float(g[j]))])
    return path
