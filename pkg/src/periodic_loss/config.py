"""Flat, typed study configuration loaded from a JSON object."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from . import ConfigError
from .stochastic import InterArrivalModel, MaintenanceModel, Uniform
from .theory import LimitInputs
from .utility import NoiseModel, PeriodicProfile, mean_utility


@dataclass
class StudyConfig:
    scenario: str = "default"
    # anomaly inter-arrivals
    interarrival: str = "exponential"
    lam: float = 0.019
    interarrival_lo: float = 0.0
    interarrival_hi: float = 100.0
    # repairs
    maintenance: str = "exponential"
    mu: float = 0.47
    log_mu: float = 0.0
    log_sigma: float = 1.0
    repair_samples: list = field(default_factory=list)
    # explicit limit inputs, overriding the model means
    mean_x: Optional[float] = None
    mean_y: Optional[float] = None
    u_bar: Optional[float] = None
    # utility
    profile: str = "sinusoid"
    amplitude: float = 1.75
    offset: float = 3.0
    period: float = 24.0
    profile_values: list = field(default_factory=list)
    noise: str = "none"
    theta: float = 1.0
    sigma: float = 0.01
    noise_dt: float = 0.1
    compare_clean: bool = True
    # study
    study: str = "cell"
    n_cells: int = 1
    reps: int = 100
    seed: int = 1
    n_cycles: int = 2000
    horizon: float = 400.0
    grid_step: float = 1.0
    threshold: float = 0.10
    threads: int = 1
    out_dir: str = "out"
    # bounds
    fourier_terms: int = 10_000
    alpha_lambdas: list = field(default_factory=lambda: [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0])
    alpha_periods: list = field(default_factory=lambda: [1.0, 2.0, 6.0, 12.0, 24.0, 48.0])
    bound_js: int = 30
    variance_ns: list = field(default_factory=lambda: [10, 100, 1000])
    # fit
    tickets_path: str = ""
    kpi_path: str = ""
    fold: str = "weekly"
    merge_overlaps: bool = True
    delta_window: float = 168.0
    delta_step: float = 24.0
    # smoothing
    smoothing_lambda: float = 10.0
    smoothing_period: float = 1.0
    bins: int = 4096
    n_gaussians: list = field(default_factory=lambda: [0, 1, 10])

    def __post_init__(self):
        self.validate()

    # -- loading -----------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        errors = [f"{k}: unknown key" for k in data if k not in known]
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                continue
            expected = _TYPES[key]
            ok = _type_ok(value, expected)
            if not ok:
                errors.append(f"{key}: expected {expected}, got {type(value).__name__}")
                continue
            kwargs[key] = float(value) if expected in ("float", "float?") and value is not None else value
        if errors:
            raise ConfigError("; ".join(errors))
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "StudyConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """sha256 of the inputs that can change results (not ``out_dir``/``threads``)."""
        d = {k: v for k, v in self.to_dict().items() if k not in _NOT_HASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self) -> None:
        errs = []

        def need(cond, msg):
            if not cond:
                errs.append(msg)

        need(self.interarrival in ("exponential", "uniform"), "interarrival: 'exponential' or 'uniform'")
        need(self.maintenance in ("exponential", "lognormal", "empirical"),
             "maintenance: 'exponential', 'lognormal' or 'empirical'")
        need(self.profile in ("sinusoid", "sampled"), "profile: 'sinusoid' or 'sampled'")
        need(self.noise in ("none", "white", "ou"), "noise: 'none', 'white' or 'ou'")
        need(self.study in ("cell", "network"), "study: 'cell' or 'network'")
        need(self.fold in ("weekly", "daily"), "fold: 'weekly' or 'daily'")
        if self.interarrival == "exponential":
            need(self.lam > 0, "lam: must be > 0")
        else:
            need(0 <= self.interarrival_lo < self.interarrival_hi,
                 "interarrival_lo/hi: need 0 <= lo < hi")
        if self.maintenance == "exponential":
            need(self.mu > 0, "mu: must be > 0")
        if self.maintenance == "lognormal":
            need(self.log_sigma >= 0, "log_sigma: must be >= 0")
        if self.maintenance == "empirical":
            need(len(self.repair_samples) > 0 and all(_type_ok(v, "float") and v >= 0 for v in self.repair_samples),
                 "repair_samples: nonempty list of durations >= 0")
        if self.profile == "sinusoid":
            need(0 <= self.amplitude <= self.offset, "amplitude/offset: need 0 <= amplitude <= offset")
        else:
            need(len(self.profile_values) >= 2 and all(_type_ok(v, "float") and v >= 0 for v in self.profile_values),
                 "profile_values: at least two values >= 0")
        need(self.period > 0, "period: must be > 0")
        need(self.mean_x is None or self.mean_x > 0, "mean_x: must be > 0")
        need(self.mean_y is None or self.mean_y >= 0, "mean_y: must be >= 0")
        need(self.u_bar is None or self.u_bar >= 0, "u_bar: must be >= 0")
        need(self.sigma >= 0, "sigma: must be >= 0")
        need(self.theta > 0, "theta: must be > 0")
        need(self.noise_dt > 0, "noise_dt: must be > 0")
        need(self.n_cells >= 1, "n_cells: must be >= 1")
        need(self.reps >= 1, "reps: must be >= 1")
        need(0 <= self.seed < 2**64, "seed: must be an unsigned 64-bit integer")
        need(self.n_cycles >= 1, "n_cycles: must be >= 1")
        need(self.horizon > 0, "horizon: must be > 0")
        need(0 < self.grid_step <= self.horizon, "grid_step: must be in (0, horizon]")
        need(0 < self.threshold < 1, "threshold: must be in (0, 1)")
        need(self.threads >= 1, "threads: must be >= 1")
        need(self.fourier_terms >= 100, "fourier_terms: must be >= 100")
        need(self.bound_js >= 1, "bound_js: must be >= 1")
        need(all(_type_ok(v, "int") and v >= 1 for v in self.variance_ns), "variance_ns: positive integers")
        need(all(_type_ok(v, "float") and v > 0 for v in self.alpha_lambdas), "alpha_lambdas: positive numbers")
        need(all(_type_ok(v, "float") and v > 0 for v in self.alpha_periods), "alpha_periods: positive numbers")
        need(self.delta_window > 0 and self.delta_step > 0, "delta_window/delta_step: must be > 0")
        need(self.smoothing_lambda > 0 and self.smoothing_period > 0,
             "smoothing_lambda/smoothing_period: must be > 0")
        need(self.bins >= 16, "bins: must be >= 16")
        need(all(_type_ok(v, "int") and v >= 0 for v in self.n_gaussians), "n_gaussians: integers >= 0")
        if errs:
            raise ConfigError("; ".join(errs))

    # -- model objects -----------------------------------------------------

    def interarrival_model(self) -> InterArrivalModel:
        if self.interarrival == "exponential":
            return InterArrivalModel.exponential(self.lam)
        return InterArrivalModel.general(Uniform(self.interarrival_lo, self.interarrival_hi))

    def maintenance_model(self) -> MaintenanceModel:
        if self.maintenance == "exponential":
            return MaintenanceModel.exponential(self.mu)
        if self.maintenance == "lognormal":
            return MaintenanceModel.lognormal(self.log_mu, self.log_sigma)
        return MaintenanceModel.empirical(self.repair_samples)

    def utility_profile(self) -> PeriodicProfile:
        if self.profile == "sinusoid":
            return PeriodicProfile.sinusoid(self.amplitude, self.offset, self.period)
        return PeriodicProfile.sampled(self.profile_values, self.period / len(self.profile_values))

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise, self.sigma, self.theta, self.noise_dt)

    def limit_inputs(self, n_cells: Optional[int] = None) -> LimitInputs:
        mean_x = self.mean_x if self.mean_x is not None else self.interarrival_model().mean()
        mean_y = self.mean_y if self.mean_y is not None else self.maintenance_model().mean()
        u_bar = self.u_bar if self.u_bar is not None else mean_utility(self.utility_profile())
        return LimitInputs(mean_x, mean_y, u_bar, self.n_cells if n_cells is None else n_cells)


def _type_ok(value, expected: str) -> bool:
    if expected.endswith("?"):
        if value is None:
            return True
        expected = expected[:-1]
    if expected == "bool":
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if expected == "int":
        return isinstance(value, int)
    if expected == "float":
        return isinstance(value, (int, float)) and math.isfinite(value)
    if expected == "str":
        return isinstance(value, str)
    if expected == "list":
        return isinstance(value, list)
    return False


_NOT_HASHED = ("out_dir", "threads")

_TYPES = {
    f.name: {
        "str": "str", "float": "float", "int": "int", "bool": "bool", "list": "list",
        "Optional[float]": "float?",
    }[f.type]
    for f in fields(StudyConfig)
}
