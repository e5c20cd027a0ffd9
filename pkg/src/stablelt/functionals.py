"""Test functions, their sliding-window envelopes, condition checkers and the
occupation functionals built from sampled paths."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.ndimage import maximum_filter1d, minimum_filter1d
from scipy.special import ndtr

from .numerics import compensated_cumsum
from .path_engine import SamplePath

__all__ = [
    "TestFunction",
    "Indicator",
    "GaussBump",
    "Triangle",
    "SignedHat",
    "PowerCusp",
    "IntervalUnion",
    "Zero",
    "GridFunction",
    "Scaled",
    "fat_cantor",
    "EnvelopePair",
    "envelopes",
    "OscillationReport",
    "oscillation_condition",
    "DEFAULT_DELTAS",
    "remark4_conditions",
    "functional_statistic",
    "presum",
    "lfsm_functional",
    "write_statistic_table",
    "function_from_dict",
]

DEFAULT_DELTAS = tuple(2.0**-k for k in range(1, 11))
_SQRT2PI = math.sqrt(2 * math.pi)
_NUMERIC_STEPS = 1 << 16


class TestFunction:
    """Base class for catalog members.

    Subclasses provide ``__call__``, ``support`` (a finite interval outside of
    which f vanishes, or ``None``) and closed forms where available.
    """

    __test__ = False  # keep pytest from collecting subclasses
    bounded = True

    @property
    def compact(self) -> bool:
        return self.support is not None

    @property
    def support(self):
        return None

    @property
    def fid(self) -> str:
        return type(self).__name__

    def __call__(self, y):
        raise NotImplementedError

    # closed forms default to quadrature; subclasses override with exact values
    @property
    def integral(self) -> float:
        return _quad(self, self._quad_range(), self._breaks())

    @property
    def integral_sq(self) -> float:
        return _quad(lambda y: self(y) ** 2, self._quad_range(), self._breaks())

    @property
    def integral_abs(self) -> float:
        return _quad(lambda y: np.abs(self(y)), self._quad_range(), self._breaks())

    def antiderivative(self, z: float) -> float:
        """int_{-inf}^{z} f(y) dy."""
        lo, hi = self._quad_range()
        if z <= lo:
            return 0.0
        hi = min(hi, z)
        return _quad(self, (lo, hi), [b for b in self._breaks() if lo < b < hi])

    def envelope_functions(self, eta: float):
        return None  # no closed form; the numeric fallback is used

    def envelope_gap_integral(self, eta: float):
        return None

    def numeric_range(self):
        """Finite interval carrying all but a negligible part of f."""
        return self.support

    def _quad_range(self):
        s = self.support
        return s if s is not None else (-np.inf, np.inf)

    def _breaks(self) -> list:
        return []

    def to_dict(self) -> dict:
        raise NotImplementedError


def _quad(fn, rng, breaks=()) -> float:
    lo, hi = rng
    if lo >= hi:
        return 0.0
    g = lambda y: float(np.asarray(fn(np.asarray(y, float))))  # noqa: E731
    pts = sorted({lo, hi, *[b for b in breaks if lo <= b <= hi]})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            total += integrate.quad(g, a, b, limit=400, epsabs=1e-13, epsrel=1e-11)[0]
    return float(total)


# --------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class Indicator(TestFunction):
    """I_(c,d); ``closed=True`` gives I_[c,d] (differs on a null set)."""

    c: float = 0.0
    d: float = 1.0
    closed: bool = False

    def __post_init__(self):
        if not self.c < self.d:
            raise ValueError("Indicator needs c < d")

    @property
    def support(self):
        return (self.c, self.d)

    @property
    def fid(self) -> str:
        return f"Indicator({self.c:g},{self.d:g})"

    def __call__(self, y):
        y = np.asarray(y, float)
        if self.closed:
            return ((y >= self.c) & (y <= self.d)).astype(float)
        return ((y > self.c) & (y < self.d)).astype(float)

    @property
    def integral(self) -> float:
        return self.d - self.c

    integral_sq = integral
    integral_abs = integral

    def antiderivative(self, z: float) -> float:
        return float(np.clip(z, self.c, self.d) - self.c)

    def _breaks(self):
        return [self.c, self.d]

    def envelope_functions(self, eta):
        c, d = self.c, self.d
        M = lambda y: ((np.asarray(y) > c - eta) & (np.asarray(y) < d + eta)).astype(float)  # noqa: E731
        m = lambda y: ((np.asarray(y) > c + eta) & (np.asarray(y) < d - eta)).astype(float)  # noqa: E731
        return M, m

    def envelope_gap_integral(self, eta):
        L = self.d - self.c
        return (L + 2 * eta) - max(0.0, L - 2 * eta)

    def to_dict(self):
        return {"kind": "Indicator", "c": self.c, "d": self.d}


class _Radial(TestFunction):
    """f(y) = g(|y - center|) with g nonincreasing on [0, inf)."""

    center: float

    def _g(self, r):
        raise NotImplementedError

    def _tail(self, r0: float) -> float:
        """int_{r0}^{inf} g(r) dr."""
        raise NotImplementedError

    def __call__(self, y):
        return self._g(np.abs(np.asarray(y, float) - self.center))

    def _breaks(self):
        return [self.center]

    def envelope_functions(self, eta):
        M = lambda y: self._g(np.maximum(0.0, np.abs(np.asarray(y, float) - self.center) - eta))  # noqa: E731
        m = lambda y: self._g(np.abs(np.asarray(y, float) - self.center) + eta)  # noqa: E731
        return M, m

    def envelope_gap_integral(self, eta):
        # int M = 2 eta g(0) + int f ; int m = 2 int_eta^inf g
        return 2 * eta * float(self._g(0.0)) + self.integral - 2 * self._tail(eta)

    def antiderivative(self, z):
        r = z - self.center
        return self._tail(-r) if r < 0 else self.integral - self._tail(r)


@dataclass(frozen=True)
class GaussBump(_Radial):
    """Normal density with mean ``center`` and standard deviation ``width``."""

    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be positive")

    @property
    def fid(self):
        return f"GaussBump({self.center:g},{self.width:g})"

    def _g(self, r):
        r = np.asarray(r, float) / self.width
        return np.exp(-0.5 * r * r) / (_SQRT2PI * self.width)

    def _tail(self, r0):
        return float(1.0 - ndtr(r0 / self.width))

    def numeric_range(self):
        return (self.center - 12 * self.width, self.center + 12 * self.width)

    @property
    def integral(self):
        return 1.0

    integral_abs = integral

    @property
    def integral_sq(self):
        return 1.0 / (2 * self.width * math.sqrt(math.pi))

    def to_dict(self):
        return {"kind": "GaussBump", "center": self.center, "width": self.width}


@dataclass(frozen=True)
class Triangle(_Radial):
    """Tent of height 1 and half-width ``halfwidth``."""

    center: float = 0.0
    halfwidth: float = 1.0

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise ValueError("halfwidth must be positive")

    @property
    def support(self):
        return (self.center - self.halfwidth, self.center + self.halfwidth)

    @property
    def fid(self):
        return f"Triangle({self.center:g},{self.halfwidth:g})"

    def _g(self, r):
        return np.clip(1.0 - np.asarray(r, float) / self.halfwidth, 0.0, None)

    def _tail(self, r0):
        h = self.halfwidth
        r0 = max(r0, 0.0)
        return 0.0 if r0 >= h else (h - r0) ** 2 / (2 * h)

    @property
    def integral(self):
        return self.halfwidth

    integral_abs = integral

    @property
    def integral_sq(self):
        return 2 * self.halfwidth / 3

    def to_dict(self):
        return {"kind": "Triangle", "center": self.center, "halfwidth": self.halfwidth}


@dataclass(frozen=True)
class SignedHat(TestFunction):
    """Tent on the left of ``center`` minus its mirror on the right; int f = 0."""

    center: float = 0.0
    halfwidth: float = 1.0

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise ValueError("halfwidth must be positive")

    @property
    def support(self):
        return (self.center - 2 * self.halfwidth, self.center + 2 * self.halfwidth)

    @property
    def fid(self):
        return f"SignedHat({self.center:g},{self.halfwidth:g})"

    def __call__(self, y):
        h = self.halfwidth
        y = np.asarray(y, float) - self.center
        tent = lambda r: np.clip(1.0 - np.abs(r) / h, 0.0, None)  # noqa: E731
        return tent(y + h) - tent(y - h)

    def _breaks(self):
        h = self.halfwidth
        return [self.center + k * h for k in (-1, 0, 1)]

    @property
    def integral(self):
        return 0.0

    @property
    def integral_sq(self):
        return 4 * self.halfwidth / 3

    @property
    def integral_abs(self):
        return 2 * self.halfwidth

    def to_dict(self):
        return {"kind": "SignedHat", "center": self.center, "halfwidth": self.halfwidth}


@dataclass(frozen=True)
class PowerCusp(TestFunction):
    """|y|^tau on |y| <= radius, tau in (-1/2, 0); set to 0 at y = 0 (null set)."""

    tau: float = -0.4
    radius: float = 1.0
    bounded = False

    def __post_init__(self):
        if not (-0.5 < self.tau < 0):
            raise ValueError("tau must lie in (-1/2, 0)")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def support(self):
        return (-self.radius, self.radius)

    @property
    def fid(self):
        return f"PowerCusp({self.tau:g},{self.radius:g})"

    def __call__(self, y):
        a = np.abs(np.asarray(y, float))
        with np.errstate(divide="ignore"):
            v = np.where((a > 0) & (a <= self.radius), a**self.tau, 0.0)
        return v

    def _breaks(self):
        return [0.0]

    @property
    def integral(self):
        return 2 * self.radius ** (self.tau + 1) / (self.tau + 1)

    integral_abs = integral

    @property
    def integral_sq(self):
        return 2 * self.radius ** (2 * self.tau + 1) / (2 * self.tau + 1)

    def antiderivative(self, z):
        r, p = self.radius, self.tau + 1
        half = r**p / p
        if z <= -r:
            return 0.0
        if z >= r:
            return 2 * half
        return half - abs(z) ** p / p if z < 0 else half + z**p / p

    def envelope_functions(self, eta):
        r, tau = self.radius, self.tau

        def M(y):
            a = np.abs(np.asarray(y, float))
            with np.errstate(divide="ignore"):
                inner = np.where(a - eta <= r, np.maximum(a - eta, 0.0) ** tau, 0.0)
            return np.where(a <= eta, np.inf, inner)

        def m(y):
            a = np.abs(np.asarray(y, float))
            return np.where(a + eta <= r, (a + eta) ** tau, 0.0)

        return M, m

    def envelope_gap_integral(self, eta):
        return math.inf

    def to_dict(self):
        return {"kind": "PowerCusp", "tau": self.tau, "radius": self.radius}


def _merge(intervals):
    out = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return tuple(out)


@dataclass(frozen=True)
class IntervalUnion(TestFunction):
    """Indicator of a finite union of open intervals."""

    intervals: tuple = ((0.0, 1.0),)
    label: str = ""

    def __post_init__(self):
        merged = _merge(tuple((float(a), float(b)) for a, b in self.intervals))
        if not merged:
            raise ValueError("IntervalUnion needs at least one nonempty interval")
        object.__setattr__(self, "intervals", merged)
        object.__setattr__(self, "_lo", np.array([a for a, _ in merged]))
        object.__setattr__(self, "_hi", np.array([b for _, b in merged]))

    @property
    def support(self):
        return (self.intervals[0][0], self.intervals[-1][1])

    @property
    def fid(self):
        return self.label or f"IntervalUnion[{len(self.intervals)}]"

    @staticmethod
    def _member(y, lo, hi):
        y = np.asarray(y, float)
        if lo.size == 0:
            return np.zeros_like(y)
        i = np.searchsorted(lo, y, side="left") - 1
        ok = i >= 0
        ic = np.clip(i, 0, None)
        return (ok & (y > lo[ic]) & (y < hi[ic])).astype(float)

    def __call__(self, y):
        return self._member(y, self._lo, self._hi)

    @property
    def integral(self):
        return float(np.sum(self._hi - self._lo))

    integral_sq = integral
    integral_abs = integral

    def antiderivative(self, z):
        return float(np.sum(np.clip(z, self._lo, self._hi) - self._lo))

    def _breaks(self):
        return [v for iv in self.intervals for v in iv]

    def _env_sets(self, eta):
        wide = _merge([(a - eta, b + eta) for a, b in self.intervals])
        narrow = [(a + eta, b - eta) for a, b in self.intervals if b - a > 2 * eta]
        return wide, narrow

    def envelope_functions(self, eta):
        wide, narrow = self._env_sets(eta)
        wl, wh = np.array([a for a, _ in wide]), np.array([b for _, b in wide])
        nl, nh = np.array([a for a, _ in narrow]), np.array([b for _, b in narrow])
        return (lambda y: self._member(y, wl, wh)), (lambda y: self._member(y, nl, nh))

    def envelope_gap_integral(self, eta):
        wide, narrow = self._env_sets(eta)
        return sum(b - a for a, b in wide) - sum(b - a for a, b in narrow)

    def to_dict(self):
        out = {"kind": "IntervalUnion", "intervals": [list(iv) for iv in self.intervals]}
        if self.label:
            out["label"] = self.label
        return out


def fat_cantor(level: int = 12, lo: float = 0.0, hi: float = 1.0) -> IntervalUnion:
    """Finite-level Smith-Volterra-Cantor approximation (measure -> (hi-lo)/2).

    At step k a middle gap of relative length 4^-k is removed from every
    remaining interval. Its oscillation integral stays near the limit set's
    boundary mass for every window wider than the finest pieces.
    """
    width = hi - lo
    ivs = [(lo, hi)]
    for k in range(1, level + 1):
        gap = width * 4.0**-k
        nxt = []
        for a, b in ivs:
            mid = 0.5 * (a + b)
            nxt.extend([(a, mid - gap / 2), (mid + gap / 2, b)])
        ivs = nxt
    return IntervalUnion(tuple(ivs), label=f"FatCantor[{level}]")


@dataclass(frozen=True)
class Zero(TestFunction):
    @property
    def support(self):
        return (0.0, 0.0)

    def __call__(self, y):
        return np.zeros_like(np.asarray(y, float))

    @property
    def integral(self):
        return 0.0

    integral_sq = integral
    integral_abs = integral

    def antiderivative(self, z):
        return 0.0

    def envelope_functions(self, eta):
        return self.__call__, self.__call__

    def envelope_gap_integral(self, eta):
        return 0.0

    def to_dict(self):
        return {"kind": "Zero"}


@dataclass(frozen=True)
class GridFunction(TestFunction):
    """Piecewise-linear interpolant of samples on [x[0], x[-1]], zero outside."""

    x: tuple
    y: tuple
    label: str = "grid"

    def __post_init__(self):
        x = np.asarray(self.x, float)
        y = np.asarray(self.y, float)
        if x.ndim != 1 or x.size < 2 or x.shape != y.shape or np.any(np.diff(x) <= 0):
            raise ValueError("GridFunction needs increasing x and matching y")
        object.__setattr__(self, "x", tuple(x))
        object.__setattr__(self, "y", tuple(y))

    @property
    def support(self):
        return (self.x[0], self.x[-1])

    @property
    def fid(self):
        return self.label

    def __call__(self, v):
        v = np.asarray(v, float)
        return np.interp(v, self.x, self.y, left=0.0, right=0.0)

    def _breaks(self):
        return list(self.x)

    @property
    def integral(self):
        return float(np.trapezoid(self.y, self.x))

    def to_dict(self):
        return {"kind": "GridFunction", "x": list(self.x), "y": list(self.y)}


@dataclass(frozen=True)
class Scaled(TestFunction):
    """f_a(y) = f(a y)."""

    base: TestFunction
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("scale must be positive")

    bounded = property(lambda self: self.base.bounded)

    @property
    def support(self):
        s = self.base.support
        return None if s is None else (s[0] / self.a, s[1] / self.a)

    @property
    def fid(self):
        return f"{self.base.fid}@{self.a:g}"

    def __call__(self, y):
        return self.base(self.a * np.asarray(y, float))

    def _breaks(self):
        return [b / self.a for b in self.base._breaks()]

    def numeric_range(self):
        s = self.base.numeric_range()
        return None if s is None else (s[0] / self.a, s[1] / self.a)

    @property
    def integral(self):
        return self.base.integral / self.a

    @property
    def integral_abs(self):
        return _quad(lambda y: np.abs(self(y)), self.numeric_range(), self._breaks())

    def envelope_functions(self, eta):
        # sup_{|u-y|<=eta} f(au) = sup_{|v-ay|<=a eta} f(v)
        pair = self.base.envelope_functions(self.a * eta)
        if pair is None:
            return None
        M, m = pair
        return (lambda y: M(self.a * np.asarray(y, float))), (lambda y: m(self.a * np.asarray(y, float)))

    def to_dict(self):
        return {"kind": "Scaled", "a": self.a, "base": self.base.to_dict()}


_KINDS = {
    "Indicator": Indicator,
    "GaussBump": GaussBump,
    "Triangle": Triangle,
    "SignedHat": SignedHat,
    "PowerCusp": PowerCusp,
    "Zero": Zero,
}


def function_from_dict(d: dict) -> TestFunction:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "FatCantor":
        return fat_cantor(**d)
    if kind == "IntervalUnion":
        return IntervalUnion(tuple(tuple(iv) for iv in d["intervals"]), d.get("label", ""))
    if kind == "GridFunction":
        return GridFunction(tuple(d["x"]), tuple(d["y"]))
    if kind == "Scaled":
        return Scaled(function_from_dict(d["base"]), d["a"])
    if kind not in _KINDS:
        raise ValueError(f"unknown test function kind {kind!r}")
    return _KINDS[kind](**d)


# --------------------------------------------------------------------------
# envelopes


@dataclass(frozen=True)
class EnvelopePair:
    eta: float
    M: Callable
    m: Callable
    gap_integral: float
    method: str  # "closed_form" or "numeric"


def _numeric_envelopes(f: TestFunction, eta: float, steps: int = _NUMERIC_STEPS):
    s = f.numeric_range()
    if s is None:
        raise ValueError("numeric envelopes need a bounded numeric range")
    lo, hi = s[0] - 2 * eta, s[1] + 2 * eta
    h = (hi - lo) / steps
    grid = lo + h * np.arange(steps + 1)
    vals = np.asarray(f(grid), float)
    r = max(1, int(round(eta / h)))
    Mg = maximum_filter1d(vals, 2 * r + 1, mode="constant", cval=0.0)
    mg = minimum_filter1d(vals, 2 * r + 1, mode="constant", cval=0.0)
    gap = float(np.trapezoid(Mg - mg, grid))
    offsets = np.linspace(-eta, eta, 2 * r + 1)

    def M(y):
        y = np.asarray(y, float)
        return np.max(f(y[..., None] + offsets), axis=-1)

    def m(y):
        y = np.asarray(y, float)
        return np.min(f(y[..., None] + offsets), axis=-1)

    return M, m, gap


def envelopes(f: TestFunction, eta: float, numeric: bool = False) -> EnvelopePair:
    """M_{f,eta}(y) = sup_{|u-y|<=eta} f(u) and m_{f,eta} likewise with inf."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    pair = None if numeric else f.envelope_functions(eta)
    if pair is not None:
        gap = f.envelope_gap_integral(eta)
        if gap is None:
            M, m = pair
            s = f.support
            gap = _quad(lambda y: M(y) - m(y), (s[0] - eta, s[1] + eta)) if s else math.nan
        return EnvelopePair(eta, pair[0], pair[1], float(gap), "closed_form")
    M, m, gap = _numeric_envelopes(f, eta)
    return EnvelopePair(eta, M, m, gap, "numeric")


@dataclass(frozen=True)
class OscillationReport:
    deltas: tuple
    values: tuple
    verdict: bool
    reason: str


def oscillation_condition(f: TestFunction, delta_sequence: Sequence[float] = DEFAULT_DELTAS) -> OscillationReport:
    """int (M_{f,delta} - m_{f,delta}) for each delta, plus a heuristic verdict:
    last value below a tenth of the first and a nonincreasing sequence."""
    deltas = tuple(float(d) for d in delta_sequence)
    if len(deltas) < 2 or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta_sequence must be strictly decreasing with >= 2 entries")
    vals = tuple(envelopes(f, d).gap_integral for d in deltas)
    if any(not math.isfinite(v) for v in vals):
        return OscillationReport(deltas, vals, False, "divergent envelope integral")
    if all(v == 0 for v in vals):
        return OscillationReport(deltas, vals, True, "identically zero")
    mono = all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))
    small = vals[-1] < 0.1 * vals[0]
    reason = "ok" if mono and small else ("not monotone" if not mono else "plateau")
    return OscillationReport(deltas, vals, mono and small, reason)


# --------------------------------------------------------------------------
# sufficient conditions on f


def remark4_conditions(f: TestFunction, beta_schedule, n_list, kappas=(1.0, 10.0, 100.0), y_points=(-1.0, -0.1, 0.1, 1.0)) -> dict:
    """Check the four conditions for f_n(y) = beta_n f(beta_n y).

    ``beta_schedule`` is a callable n -> beta_n or a float exponent kappa with
    beta_n = n^kappa.
    """
    n_list = [int(n) for n in n_list]
    beta = (lambda n: float(n) ** beta_schedule) if not callable(beta_schedule) else beta_schedule
    betas = [beta(n) for n in n_list]
    int_abs = f.integral_abs
    int_sq = f.integral_sq
    total = f.integral

    # (i) int |f_n| by quadrature of the rescaled function
    l1 = [Scaled(f, b).integral_abs * b if f.integral_abs > 0 else 0.0 for b in betas]
    c1 = all(math.isclose(v, int_abs, rel_tol=1e-6, abs_tol=1e-12) for v in l1)

    # (ii) n^-1 int f_n^2 = (beta_n / n) int f^2
    l2 = [b / n * int_sq for b, n in zip(betas, n_list)]
    c2 = math.isfinite(int_sq) and all(b <= a * (1 + 1e-12) for a, b in zip(l2, l2[1:])) and l2[-1] < l2[0] or int_sq == 0

    # (iii) sup_n int_{|y|>=k} |f_n| = int_{|z| >= k min beta} |f|
    bmin = min(betas)

    def tail(k):
        cut = k * bmin
        lo, hi = f._quad_range()
        absf = lambda y: np.abs(f(y))  # noqa: E731
        left = _quad(absf, (lo, min(hi, -cut)), f._breaks()) if lo < -cut else 0.0
        right = _quad(absf, (max(lo, cut), hi), f._breaks()) if hi > cut else 0.0
        return left + right

    tails = [tail(k) for k in kappas]
    c3 = tails[-1] <= 1e-3 * max(int_abs, 1e-300) or int_abs == 0

    # (iv) F_n(y) = int_{-inf}^{beta_n y} f -> total * 1{y > 0}
    errs = []
    for y in y_points:
        target = total if y > 0 else 0.0
        errs.append([abs(f.antiderivative(b * y) - target) for b in betas])
    last = max(e[-1] for e in errs)
    first = max(e[0] for e in errs)
    c4 = last <= max(1e-3 * max(int_abs, 1e-300), 0.0) or last <= first * 0.5 or last == 0

    return {
        "n": n_list,
        "beta": betas,
        "i": {"pass": bool(c1), "values": l1, "int_abs_f": int_abs},
        "ii": {"pass": bool(c2), "values": l2, "int_f2": int_sq},
        "iii": {"pass": bool(c3), "kappa": list(kappas), "values": tails},
        "iv": {"pass": bool(c4), "y": list(y_points), "errors": errs},
        "pass": bool(c1 and c2 and c3 and c4),
    }


# --------------------------------------------------------------------------
# statistics


def _path_n(path: SamplePath) -> int:
    n = path.meta.get("n")
    return int(n) if n is not None else int(round(1.0 / path.dt))


def functional_statistic(path: SamplePath, f: TestFunction, beta_n: float, t, x, q: int = 1, n: int | None = None):
    """(beta_n / n) sum_{k=q}^{[nt]} f(beta_n (path_k + x)).

    ``path`` holds gamma_n^-1 S_k at index k - 1 (times k/n). ``t`` and ``x``
    may be arrays; the result then has trailing axes (len(t), len(x)), with
    one pass over the path per x.
    """
    if not beta_n > 0:
        raise ValueError("beta_n must be positive")
    if q < 1:
        raise ValueError("q must be >= 1")
    n = _path_n(path) if n is None else n
    ts = np.atleast_1d(np.asarray(t, float))
    xs = np.atleast_1d(np.asarray(x, float))
    horizon = path.values.shape[-1] / n
    if np.any(ts <= 0) or np.any(ts > horizon + 1e-12):
        raise ValueError("t outside (0, horizon]")
    idx = np.floor(ts * n + 1e-9).astype(int)  # [nt]
    vals = path.values
    out = np.zeros(vals.shape[:-1] + (ts.size, xs.size))
    for j, xv in enumerate(xs):
        fv = np.asarray(f(beta_n * (vals + xv)), float)
        fv[..., : q - 1] = 0.0
        cum = compensated_cumsum(fv, axis=-1)
        cum = np.concatenate([np.zeros(cum.shape[:-1] + (1,)), cum], axis=-1)
        out[..., :, j] = cum[..., idx]
    out *= beta_n / n
    if np.ndim(t) == 0 and np.ndim(x) == 0:
        out = out[..., 0, 0]
        return float(out) if out.ndim == 0 else out
    return out


def presum(path: SamplePath, f: TestFunction, beta_n: float, x: float, n0: int, n: int | None = None):
    """(beta_n / n) sum_{k<n0} f(beta_n (path_k + x)); should vanish as n grows."""
    n = _path_n(path) if n is None else n
    if n0 <= 1:
        return 0.0 if path.values.ndim == 1 else np.zeros(path.values.shape[0])
    fv = np.asarray(f(beta_n * (path.values[..., : n0 - 1] + x)), float)
    out = fv.sum(axis=-1) * beta_n / n
    return float(out) if np.ndim(out) == 0 else out


def lfsm_functional(path: SamplePath, f: TestFunction, beta_n: float, t: float, x: float, n: int | None = None, form: str = "sum", H: float | None = None):
    """Occupation functional of an LFSM path sampled at k / N, k = 0..

    ``form="sum"``: (beta_n / n) sum_{k=1}^{[nt]} f(beta_n (Lambda(k/n) - x)),
    with N a multiple of n (``n`` defaults to N).
    ``form="integral"``: beta_n is read as kappa and the continuous version
    kappa^{H-1} int_0^{kappa t} f(kappa^H (Lambda(s/kappa) - x)) ds is
    evaluated as kappa^H int_0^t f(kappa^H (Lambda(r) - x)) dr, left-endpoint
    rule on the path grid.
    """
    N = int(round(1.0 / path.dt))
    if form == "sum":
        n = N if n is None else int(n)
        if N % n:
            raise ValueError("path resolution must be a multiple of n")
        sub = path.values[..., :: N // n]
        k = int(math.floor(t * n + 1e-9))
        if k > sub.shape[-1] - 1:
            raise ValueError("t beyond path horizon")
        fv = np.asarray(f(beta_n * (sub[..., 1 : k + 1] - x)), float)
        out = compensated_cumsum(fv, axis=-1)[..., -1] * beta_n / n if k > 0 else np.zeros(sub.shape[:-1])
    elif form == "integral":
        if H is None:
            H = path.meta.get("H")
        if H is None:
            raise ValueError("integral form needs H")
        kh = beta_n**H
        k = int(math.ceil(t * N - 1e-9))
        fv = np.asarray(f(kh * (path.values[..., :k] - x)), float)
        out = compensated_cumsum(fv, axis=-1)[..., -1] * kh / N if k > 0 else np.zeros(path.values.shape[:-1])
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(out) if np.ndim(out) == 0 else out


def write_statistic_table(rows, dest) -> Path:
    """rows: iterable of (replicate, n, t, x, f_id, value)."""
    dest = Path(dest)
    with dest.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "n", "t", "x", "f_id", "value"])
        for r in rows:
            w.writerow([r[0], r[1], repr(float(r[2])), repr(float(r[3])), r[4], repr(float(r[5]))])
    return dest
