"""Periodic utility profiles and additive noise processes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True, eq=False)
class PeriodicProfile:
    """A nonnegative period-``p`` utility U(t), bounded by ``bound``.

    Use :meth:`sinusoid` or :meth:`sampled` rather than the constructor.
    """

    period: float
    form: str
    amplitude: float = 0.0
    offset: float = 0.0
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be > 0")
        if self.form == "sinusoid":
            if self.amplitude < 0 or self.offset < self.amplitude:
                raise ValueError("sinusoid needs 0 <= amplitude <= offset")
        elif self.form == "sampled":
            v = np.array(self.values, dtype=float)
            if v.ndim != 1 or len(v) < 2:
                raise ValueError("sampled profile needs at least two points")
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError("sampled utility must be finite and >= 0")
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
        else:
            raise ValueError(f"unknown profile form {self.form!r}")

    @classmethod
    def sinusoid(cls, amplitude: float, offset: float, period: float) -> "PeriodicProfile":
        return cls(float(period), "sinusoid", float(amplitude), float(offset))

    @classmethod
    def constant(cls, level: float, period: float = 24.0) -> "PeriodicProfile":
        return cls.sinusoid(0.0, level, period)

    @classmethod
    def sampled(cls, values, step: float = 1.0) -> "PeriodicProfile":
        """Profile through equally spaced points, one period long."""
        values = np.asarray(values, dtype=float)
        return cls(step * len(values), "sampled", values=values)

    @property
    def step(self) -> float:
        return self.period / len(self.values)

    @property
    def bound(self) -> float:
        """K with 0 <= U <= K."""
        if self.form == "sinusoid":
            return self.amplitude + self.offset
        return float(self.values.max())

    def __call__(self, t):
        return eval_utility(self, t)

    def fold(self, period: float) -> "PeriodicProfile":
        """Average a sampled profile down to a sub-period (e.g. 168 h -> 24 h)."""
        if self.form != "sampled":
            raise ValueError("only sampled profiles can be folded")
        reps = self.period / period
        if abs(reps - round(reps)) > 1e-9:
            raise ValueError("new period must divide the old one")
        return PeriodicProfile.sampled(self.values.reshape(int(round(reps)), -1).mean(axis=0), self.step)


def eval_utility(profile: PeriodicProfile, t):
    t = np.asarray(t, dtype=float)
    if profile.form == "sinusoid":
        return profile.amplitude * np.sin(2 * math.pi * t / profile.period) + profile.offset
    v = profile.values
    u = np.mod(t, profile.period) / profile.step
    k = np.floor(u).astype(np.int64)
    frac = u - k
    k %= len(v)
    return v[k] * (1.0 - frac) + v[(k + 1) % len(v)] * frac


def mean_utility(profile: PeriodicProfile) -> float:
    """Period average of U: the offset for a sinusoid, the periodic trapezoid rule otherwise."""
    if profile.form == "sinusoid":
        return profile.offset
    # trapezoid over one period of a periodic piecewise-linear curve
    return float(profile.values.mean())


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"
    sigma: float = 0.0
    theta: float = 1.0
    dt: float = 0.1

    def __post_init__(self):
        if self.kind not in ("none", "white", "ou"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.kind == "ou" and not self.theta > 0:
            raise ValueError("OU theta must be > 0")

    @property
    def stationary_variance(self) -> float:
        if self.kind == "ou":
            return self.sigma**2 / (2 * self.theta)
        if self.kind == "white":
            return self.sigma**2
        return 0.0


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Samples of B(t) on ``start + k*dt``, linear in between."""

    start: float
    dt: float
    values: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 1:
            raise ValueError("noise path needs at least one value")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        steps = 0.5 * (v[1:] + v[:-1]) * self.dt
        object.__setattr__(self, "_cum", np.concatenate(([0.0], np.cumsum(steps))))

    @property
    def end(self) -> float:
        return self.start + self.dt * (len(self.values) - 1)

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.start - 1e-9) or np.any(t > self.end + 1e-9):
            raise ValueError("time outside the noise path horizon")
        u = (t - self.start) / self.dt
        k = np.clip(np.floor(u).astype(np.int64), 0, max(len(self.values) - 2, 0))
        return k, (u - k) * self.dt

    def __call__(self, t):
        v = self.values
        if len(v) == 1:
            self._locate(t)
            return np.full(np.shape(t), v[0])
        k, s = self._locate(t)
        return v[k] + (v[k + 1] - v[k]) * s / self.dt

    def cumulative(self, t):
        """Exact integral of the piecewise-linear path from ``start`` to ``t``."""
        v = self.values
        if len(v) == 1:
            k, s = self._locate(t)
            return v[0] * s
        k, s = self._locate(t)
        return self._cum[k] + v[k] * s + (v[k + 1] - v[k]) * s * s / (2 * self.dt)

    def integral(self, t0, t1):
        return self.cumulative(t1) - self.cumulative(t0)


def _ou_matrix(model: NoiseModel, n_paths: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """OU paths by exact Gauss-Markov recursion, started from the stationary law."""
    phi = math.exp(-model.theta * model.dt)
    sd0 = math.sqrt(model.stationary_variance)
    sd = math.sqrt(model.sigma**2 * -math.expm1(-2 * model.theta * model.dt) / (2 * model.theta))
    b0 = rng.normal(0.0, sd0, n_paths)
    eps = rng.normal(0.0, sd, (n_paths, n - 1))
    out = np.empty((n_paths, n))
    out[:, 0] = b0
    if n > 1:
        out[:, 1:], _ = lfilter([1.0], [1.0, -phi], eps, axis=1, zi=(phi * b0)[:, None])
    return out


def sample_noise_paths(model: NoiseModel, horizon: float, rng: np.random.Generator,
                       n_paths: int, start: float = 0.0) -> list[NoisePath]:
    """``n_paths`` independent paths covering ``[start, start + horizon]``."""
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    n = int(math.ceil(horizon / model.dt - 1e-9)) + 1
    if model.kind == "none" or model.sigma == 0:
        mat = np.zeros((n_paths, n))
    elif model.kind == "white":
        mat = rng.normal(0.0, model.sigma, (n_paths, n))
    else:
        mat = _ou_matrix(model, n_paths, n, rng)
    return [NoisePath(start, model.dt, row) for row in mat]


def sample_noise_path(model: NoiseModel, horizon: float, rng: np.random.Generator,
                      start: float = 0.0) -> NoisePath:
    return sample_noise_paths(model, horizon, rng, 1, start)[0]


def corrupted_utility(profile: PeriodicProfile, path: NoisePath, t):
    """U'(t) + B(t); deliberately not clipped at zero."""
    return eval_utility(profile, t) + path(t)
