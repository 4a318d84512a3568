"""Distribution models, samplers and the modulo-p convergence machinery.

The wrapped-density representation stores cell averages: ``values[i]`` is the
probability mass of bin ``[i*h, (i+1)*h)`` divided by ``h = p / bins``.
Convolution of two such densities is the exact convolution of the piecewise
constant densities, projected back onto the bins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, special

TWO_PI = 2.0 * math.pi

DEFAULT_BINS = 4096
DEFAULT_TERMS = 10_000
TAIL_MASS = 1e-12
MAX_WRAPS = 10_000
DIRECT_CONV_MAX = 1024


# ---------------------------------------------------------------------------
# densities


class Density:
    """A continuous density with closed-form cdf and quantile.

    Subclasses set ``lo``/``hi`` (support, possibly infinite) and ``sup``
    (the supremum of the pdf, ``inf`` when unbounded).
    """

    lo: float = 0.0
    hi: float = math.inf
    sup: float = math.inf

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def cut(self, tail: float = TAIL_MASS) -> tuple[float, float]:
        """Finite interval holding all but ``tail`` of the mass."""
        lo = self.lo if math.isfinite(self.lo) else float(self.quantile(tail / 2))
        hi = self.hi if math.isfinite(self.hi) else float(self.quantile(1.0 - tail / 2))
        return lo, hi


@dataclass(frozen=True)
class Exponential(Density):
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be > 0, got {self.rate}")

    @property
    def sup(self) -> float:
        return self.rate

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    def quantile(self, q):
        return -np.log1p(-np.asarray(q, dtype=float)) / self.rate

    def cut(self, tail: float = TAIL_MASS) -> tuple[float, float]:
        return 0.0, -math.log(tail) / self.rate

    def mean(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class Uniform(Density):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform needs hi > lo")

    @property
    def sup(self) -> float:
        return 1.0 / (self.hi - self.lo)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), self.sup, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def quantile(self, q):
        return self.lo + np.asarray(q, dtype=float) * (self.hi - self.lo)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class Gaussian(Density):
    loc: float = 0.0
    scale: float = 1.0
    lo: float = field(default=-math.inf, init=False)
    hi: float = field(default=math.inf, init=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("gaussian scale must be > 0")

    @property
    def sup(self) -> float:
        return 1.0 / (self.scale * math.sqrt(TWO_PI))

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return np.exp(-0.5 * z * z) * self.sup

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.loc) / self.scale)

    def quantile(self, q):
        return self.loc + self.scale * special.ndtri(np.asarray(q, dtype=float))

    def mean(self) -> float:
        return self.loc


class Tabulated(Density):
    """Piecewise-linear density through ``(x, f)``, renormalised to unit mass.

    This is the carrier for "general" bounded inter-arrival laws.
    """

    def __init__(self, x, f):
        x = np.asarray(x, dtype=float)
        f = np.asarray(f, dtype=float)
        if x.ndim != 1 or x.shape != f.shape or len(x) < 2:
            raise ValueError("x and f must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("x must be strictly increasing")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("density values must be finite and nonnegative")
        seg = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
        total = seg.sum()
        if not total > 0:
            raise ValueError("density has zero mass")
        self.x = x
        self.f = f / total
        self._cum = np.concatenate(([0.0], np.cumsum(seg / total)))
        self._cum[-1] = 1.0
        self.lo = float(x[0])
        self.hi = float(x[-1])
        self.sup = float(self.f.max())

    @classmethod
    def from_pdf(cls, pdf: Callable, lo: float, hi: float, points: int = 20_001) -> "Tabulated":
        x = np.linspace(lo, hi, points)
        return cls(x, pdf(x))

    def pdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self.x, self.f, left=0.0, right=0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.lo, self.hi)
        k = np.clip(np.searchsorted(self.x, xc, side="right") - 1, 0, len(self.x) - 2)
        dx = xc - self.x[k]
        w = self.x[k + 1] - self.x[k]
        slope = (self.f[k + 1] - self.f[k]) / w
        return self._cum[k] + self.f[k] * dx + 0.5 * slope * dx * dx

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        k = np.clip(np.searchsorted(self._cum, q, side="right") - 1, 0, len(self.x) - 2)
        f0 = self.f[k]
        w = self.x[k + 1] - self.x[k]
        slope = (self.f[k + 1] - f0) / w
        r = q - self._cum[k]
        # solve f0*d + slope*d^2/2 = r on the segment
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.sqrt(np.maximum(f0 * f0 + 2.0 * slope * r, 0.0))
            d_quad = 2.0 * r / (f0 + disc)
            d_lin = np.where(f0 > 0, r / f0, 0.0)
        d = np.where(np.abs(slope) > 1e-300, d_quad, d_lin)
        d = np.where(np.isfinite(d), d, 0.0)
        return self.x[k] + np.clip(d, 0.0, w)

    def mean(self) -> float:
        x0, x1, f0, f1 = self.x[:-1], self.x[1:], self.f[:-1], self.f[1:]
        w = x1 - x0
        # exact integral of x * (linear f) on each segment
        return float(np.sum(w * (f0 * (2 * x0 + x1) + f1 * (x0 + 2 * x1)) / 6.0))


# ---------------------------------------------------------------------------
# inter-arrival and maintenance laws


@dataclass(frozen=True)
class InterArrivalModel:
    """Law of the up-time between repairs: exponential or a bounded density."""

    kind: str
    density: Density
    bound: float

    @classmethod
    def exponential(cls, rate: float) -> "InterArrivalModel":
        d = Exponential(rate)
        return cls("exponential", d, d.sup)

    @classmethod
    def general(cls, density: Density, bound: Optional[float] = None) -> "InterArrivalModel":
        if density.lo < 0:
            raise ValueError("inter-arrival density must live on [0, inf)")
        if not math.isfinite(density.sup):
            raise ValueError("inter-arrival density must be bounded")
        lo, hi = density.cut()
        grid = np.linspace(lo, hi, 200_001)
        f = density.pdf(grid)
        if np.any(f < 0):
            raise ValueError("density must be nonnegative")
        mass = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(grid)))
        tail = float(density.cdf(lo) + 1.0 - density.cdf(hi))
        if abs(mass + tail - 1.0) > 1e-6 or abs(float(density.cdf(hi) - density.cdf(lo)) + tail - 1.0) > 1e-9:
            raise ValueError(f"density does not integrate to one (grid mass {mass:.9f})")
        m = density.sup if bound is None else float(bound)
        if density.sup > m * (1 + 1e-12):
            raise ValueError("density exceeds its declared bound M")
        return cls("general", density, m)

    @property
    def rate(self) -> float:
        if self.kind != "exponential":
            raise AttributeError("rate is only defined for exponential inter-arrivals")
        return self.density.rate

    def mean(self) -> float:
        return self.density.mean()


@dataclass(frozen=True)
class MaintenanceModel:
    """Repair-duration law with finite first and second moments."""

    kind: str
    rate: float = math.nan
    samples: tuple = ()
    log_mu: float = math.nan
    log_sigma: float = math.nan

    @classmethod
    def exponential(cls, rate: float) -> "MaintenanceModel":
        if not rate > 0:
            raise ValueError("maintenance rate must be > 0")
        return cls("exponential", rate=float(rate))

    @classmethod
    def empirical(cls, samples) -> "MaintenanceModel":
        s = tuple(float(v) for v in samples)
        if not s:
            raise ValueError("empirical maintenance needs at least one sample")
        if any(v < 0 or not math.isfinite(v) for v in s):
            raise ValueError("maintenance durations must be finite and >= 0")
        if not any(v > 0 for v in s):
            raise ValueError("E[Y] must be > 0")
        return cls("empirical", samples=s)

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "MaintenanceModel":
        if sigma < 0:
            raise ValueError("lognormal sigma must be >= 0")
        return cls("lognormal", log_mu=float(mu), log_sigma=float(sigma))

    def mean(self) -> float:
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "empirical":
            return float(np.mean(self.samples))
        return math.exp(self.log_mu + 0.5 * self.log_sigma**2)

    def second_moment(self) -> float:
        if self.kind == "exponential":
            return 2.0 / self.rate**2
        if self.kind == "empirical":
            return float(np.mean(np.square(self.samples)))
        return math.exp(2 * self.log_mu + 2 * self.log_sigma**2)


def sample_interarrival(model: InterArrivalModel, rng: np.random.Generator, size=None):
    """Draw up-times (hours)."""
    if model.kind == "exponential":
        return rng.exponential(1.0 / model.rate, size)
    return model.density.quantile(rng.random(size))


def sample_maintenance(model: MaintenanceModel, rng: np.random.Generator, size=None):
    """Draw repair durations (hours); empirical laws resample uniformly."""
    if model.kind == "exponential":
        return rng.exponential(1.0 / model.rate, size)
    if model.kind == "empirical":
        return rng.choice(np.asarray(model.samples), size)
    return rng.lognormal(model.log_mu, model.log_sigma, size)


# ---------------------------------------------------------------------------
# Fourier bounds


@dataclass(frozen=True)
class FourierBound:
    alpha: float
    C: float
    N: int
    tail: float = 0.0

    def at(self, j: int, p: float) -> float:
        """sup-distance bound ``C * alpha**j / p``."""
        return self.C * self.alpha**j / p


def fourier_bound_exponential(lam: float, p: float, N: int = DEFAULT_TERMS) -> FourierBound:
    """Rate and constant of the uniform-convergence bound for Exp(lam) mod p.

    ``C`` is the partial sum over ``n <= N`` plus the integral of the summand
    over ``[N, inf)``, which over-estimates the remaining terms.
    """
    if not lam > 0 or not p > 0:
        raise ValueError("lambda and p must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    lp2 = (lam * p) ** 2
    a = lp2 + 4 * math.pi**2
    alpha = lam * p / math.sqrt(a)
    n = np.arange(1, N + 1, dtype=float)
    partial = float(np.sum(a / (lp2 + 4 * math.pi**2 * n * n)))
    # int_N^inf a / (lp2 + 4 pi^2 x^2) dx
    s = lam * p / TWO_PI
    tail = a / (4 * math.pi**2) * (math.pi / 2 - math.atan(N / s)) / s if s > 0 else 0.0
    return FourierBound(alpha, partial + tail, N, tail)


def _segment_weights(theta):
    """``A = int_0^1 e^{-i theta u} du`` and ``B = int_0^1 u e^{-i theta u} du``."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 0.5
    A = np.empty(theta.shape, dtype=complex)
    B = np.empty(theta.shape, dtype=complex)
    t = theta[small]
    if t.size:
        term = np.ones_like(t, dtype=complex)
        a_s = np.zeros_like(term)
        b_s = np.zeros_like(term)
        for k in range(18):
            a_s += term / (k + 1)
            b_s += term / (k + 2)
            term = term * (-1j * t) / (k + 1)
        A[small] = a_s
        B[small] = b_s
    t = theta[~small]
    if t.size:
        e = np.exp(-1j * t)
        A[~small] = (1 - e) / (1j * t)
        B[~small] = e * (1j / t + 1 / t**2) - 1 / t**2
    return A, B


def fourier_coefficients(density: Density, p: float, N: int, cells: Optional[int] = None):
    """``g(n) = int f(x) exp(-2 pi i n x / p) dx`` for ``n = 1..N``.

    Quadrature integrates the piecewise-linear interpolant of the pdf exactly
    against the complex exponential (Filon-type), so it stays accurate for
    large ``n`` and for densities with jumps at the support edges.
    """
    m = cells or max(1 << 16, 1 << int(math.ceil(math.log2(4 * N))))
    h = p / m
    lo, hi = density.cut()
    M = int(math.floor((hi - lo) / h * (1 + 1e-14)))
    if M > (1 << 26):
        raise ValueError("density support is too long relative to the period")
    x = lo + h * np.arange(M + 1)
    f = density.pdf(x)
    n = np.arange(1, N + 1)
    omega = TWO_PI * n / p
    theta = TWO_PI * n / m
    folded = np.bincount(np.arange(M + 1) % m, weights=f, minlength=m)
    S = np.fft.fft(folded)[n % m]
    A, B = _segment_weights(theta)
    bulk = (A - B) * (S - f[M] * np.exp(-1j * theta * M)) + B * np.exp(1j * theta) * (S - f[0])
    g = h * np.exp(-1j * omega * lo) * bulk
    rest = hi - x[M]
    if rest > 1e-12 * h:
        f_end = density.pdf(hi)
        Ar, Br = _segment_weights(omega * rest)
        g += rest * np.exp(-1j * omega * x[M]) * (f[M] * (Ar - Br) + f_end * Br)
    return g


def fourier_bound_general(density: Density, p: float, N: int = DEFAULT_TERMS) -> FourierBound:
    """Bound constants for a bounded inter-arrival density.

    ``alpha = max_n |g(n)|`` and ``C = sum |g(n)|^2 / alpha^2`` over ``n <= N``,
    plus a ``c / N`` tail where ``c`` is the largest ``n^2 |g(n)|^2`` seen in
    the upper half of the range.
    A uniform law on a whole period has ``g(n) = 0``; that case returns
    ``alpha = C = 0``.
    """
    if not p > 0:
        raise ValueError("p must be positive")
    if not math.isfinite(density.sup):
        raise ValueError("density must be bounded")
    g = np.abs(fourier_coefficients(density, p, N))
    alpha = float(g.max())
    if alpha >= 1 - 1e-9:
        raise ValueError(f"alpha = {alpha} >= 1: atomic density or unresolved quadrature")
    if alpha < 1e-12:
        return FourierBound(0.0, 0.0, N, 0.0)
    g2 = g * g
    n = np.arange(1, N + 1)
    upper = n >= max(1, N // 2)
    c_env = float(np.max(n[upper] ** 2 * g2[upper]))
    tail = c_env / N / alpha**2
    return FourierBound(alpha, float(g2.sum()) / alpha**2 + tail, N, tail)


# ---------------------------------------------------------------------------
# wrapped densities


@dataclass(frozen=True, eq=False)
class WrappedDensity:
    period: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 16:
            raise ValueError("wrapped density needs at least 16 bins")
        if not self.period > 0:
            raise ValueError("period must be > 0")
        if np.any(v < 0):
            raise ValueError("wrapped density values must be >= 0")
        mass = self.period / len(v) * v.sum()
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"wrapped density mass {mass} != 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def bins(self) -> int:
        return len(self.values)

    @property
    def width(self) -> float:
        return self.period / len(self.values)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.width

    @property
    def edges(self) -> np.ndarray:
        return self.width * np.arange(self.bins)

    @property
    def centers(self) -> np.ndarray:
        return self.width * (np.arange(self.bins) + 0.5)

    @classmethod
    def uniform(cls, p: float, bins: int = DEFAULT_BINS) -> "WrappedDensity":
        return cls(p, np.full(bins, 1.0 / p))

    @classmethod
    def from_masses(cls, p: float, masses) -> "WrappedDensity":
        masses = np.asarray(masses, dtype=float)
        masses = np.clip(masses, 0.0, None)
        masses = masses / masses.sum()
        return cls(p, masses * len(masses) / p)


def wrap_density(density: Density, p: float, bins: int = DEFAULT_BINS) -> WrappedDensity:
    """Fold ``density`` onto ``[0, p)`` by summing its translates by ``k p``.

    Bin masses come from cdf differences on a single grid covering every
    translate that carries more than ``TAIL_MASS`` of probability.
    """
    if not p > 0:
        raise ValueError("p must be positive")
    lo, hi = density.cut()
    k_lo = math.floor(lo / p)
    k_hi = math.floor(hi / p)
    n_wraps = k_hi - k_lo + 1
    if n_wraps > MAX_WRAPS:
        raise ValueError(f"tail too heavy: {n_wraps} periods needed to reach mass 1 - {TAIL_MASS}")
    h = p / bins
    grid = k_lo * p + h * np.arange(n_wraps * bins + 1)
    mass = np.diff(density.cdf(grid)).reshape(n_wraps, bins).sum(axis=0)
    return WrappedDensity.from_masses(p, mass)


def _cyclic(a: np.ndarray, b: np.ndarray, method: str) -> np.ndarray:
    if method == "direct":
        return linalg.circulant(b) @ a
    return np.fft.irfft(np.fft.rfft(a) * np.fft.rfft(b), n=len(a))


def convolve_mod_p(a: WrappedDensity, b: WrappedDensity, method: str = "auto") -> WrappedDensity:
    """Density of ``(A + B) mod p`` for independent ``A ~ a``, ``B ~ b``."""
    if a.bins != b.bins or not math.isclose(a.period, b.period, rel_tol=1e-12):
        raise ValueError("wrapped densities must share period and bins")
    if method == "auto":
        method = "direct" if a.bins <= DIRECT_CONV_MAX else "fft"
    if method not in ("direct", "fft"):
        raise ValueError(f"unknown convolution method {method!r}")
    c = _cyclic(a.masses, b.masses, method)
    # sum of two bin-uniform offsets is triangular over two bins
    c = 0.5 * (c + np.roll(c, 1))
    return WrappedDensity.from_masses(a.period, c)


def self_convolve(w: WrappedDensity, j: int) -> WrappedDensity:
    """Law of the j-term wrapped sum of i.i.d. draws from ``w``."""
    if j < 1:
        raise ValueError("j must be >= 1")
    out = w
    for _ in range(j - 1):
        out = convolve_mod_p(out, w)
    return out


def sup_distance_to_uniform(w: WrappedDensity) -> float:
    return float(np.max(np.abs(w.values - 1.0 / w.period)))


def grid_error(distance: Callable[[int], float], bins: int = DEFAULT_BINS) -> float:
    """Discretisation term ``|d(bins) - d(2 bins)|`` of a measured distance."""
    return abs(distance(bins) - distance(2 * bins))
