"""Alternating-renewal simulation of cells and their running utility loss."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .stochastic import (
    InterArrivalModel,
    MaintenanceModel,
    sample_interarrival,
    sample_maintenance,
)
from .utility import NoisePath, PeriodicProfile, eval_utility

SIMPSON_STEP = 0.05
SIMPSON_MIN_INTERVALS = 16
_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class CellTrace:
    """Up/down history of one component.

    Cycle j is an up period ``x[j]`` followed by a down period ``y[j]``;
    ``d[j]`` is the clock at the end of the repair. When the trace was cut at
    a horizon, the last cycle is partial and ``d[-1] == horizon``.
    """

    x: np.ndarray
    y: np.ndarray
    horizon: float
    truncated: bool = False

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be 1-D arrays of equal length")
        if np.any(x <= 0) or np.any(y < 0):
            raise ValueError("need x > 0 and y >= 0")
        for arr in (x, y):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        d = np.cumsum(x + y)
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    def __len__(self):
        return len(self.x)

    @property
    def down_start(self) -> np.ndarray:
        return self.d - self.y

    def downtime(self, T: Optional[float] = None) -> float:
        """Total time spent under repair in ``[0, T]``."""
        if T is None:
            return float(self.y.sum())
        a = self.down_start
        return float(np.sum(np.clip(np.minimum(self.d, T) - a, 0.0, None)))


@dataclass(frozen=True, eq=False)
class LossSeries:
    per_cycle: np.ndarray
    running_by_cycle: np.ndarray
    time_grid: Optional[np.ndarray] = None
    running_by_time: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class NetworkRun:
    """Loss of ``n_cells`` independent components on a shared time grid.

    ``cumulative[i, g]`` is the loss of cell ``i`` over ``[0, grid[g]]`` and
    ``aggregate[g] = mean_i cumulative[i, g] / grid[g]``.
    """

    traces: tuple
    grid: np.ndarray
    cumulative: np.ndarray
    aggregate: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.traces)


def _as_sampler(model, fallback: Callable):
    if isinstance(model, (InterArrivalModel, MaintenanceModel)):
        return lambda rng, size: fallback(model, rng, size)
    if callable(model):
        return model
    raise TypeError(f"cannot sample from {model!r}")


def _mean_of(model, default: float) -> float:
    try:
        return float(model.mean())
    except AttributeError:
        return default


def simulate_cell(interarrival, maintenance, rng: np.random.Generator,
                  n_cycles: Optional[int] = None, horizon: Optional[float] = None) -> CellTrace:
    """Simulate alternating up/down periods until ``n_cycles`` or ``horizon``.

    ``interarrival`` and ``maintenance`` are model objects or callables
    ``(rng, size) -> array``. Up-times are drawn in chunks before repair
    times, so a trace is a pure function of the generator state.
    """
    if (n_cycles is None) == (horizon is None):
        raise ValueError("give exactly one of n_cycles or horizon")
    draw_x = _as_sampler(interarrival, sample_interarrival)
    draw_y = _as_sampler(maintenance, sample_maintenance)
    if n_cycles is not None:
        if n_cycles < 1:
            raise ValueError("n_cycles must be >= 1")
        x = np.asarray(draw_x(rng, n_cycles), dtype=float)
        y = np.asarray(draw_y(rng, n_cycles), dtype=float)
        return CellTrace(x, y, float(np.sum(x + y)))

    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    cycle = _mean_of(interarrival, 1.0) + _mean_of(maintenance, 0.0)
    chunk = int(math.ceil(1.2 * horizon / cycle)) + 16
    xs, ys, total = [], [], 0.0
    while total < horizon:
        x = np.asarray(draw_x(rng, chunk), dtype=float)
        y = np.asarray(draw_y(rng, chunk), dtype=float)
        xs.append(x)
        ys.append(y)
        total += float(np.sum(x + y))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    d = np.cumsum(x + y)
    j = int(np.searchsorted(d, horizon, side="left"))
    x, y = x[: j + 1].copy(), y[: j + 1].copy()
    start = d[j - 1] if j > 0 else 0.0
    truncated = bool(d[j] > horizon)
    if truncated:
        if start + x[j] >= horizon:
            x[j], y[j] = horizon - start, 0.0
        else:
            y[j] = horizon - start - x[j]
    if x[-1] <= 0:
        x, y = x[:-1], y[:-1]
    return CellTrace(x, y, float(horizon), truncated)


# ---------------------------------------------------------------------------
# quadrature


def _simpson_windows(profile: PeriodicProfile, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Composite Simpson integrals of U over each ``[a_i, b_i]``.

    Windows are bucketed by a power-of-two interval count so the step stays
    at most ``min(SIMPSON_STEP, length / 16)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(a.shape)
    length = b - a
    live = length > 0
    if not np.any(live):
        return out
    need = np.maximum(SIMPSON_MIN_INTERVALS, np.ceil(length[live] / SIMPSON_STEP))
    m_all = np.zeros(a.shape, dtype=np.int64)
    m_all[live] = 2 ** np.ceil(np.log2(need)).astype(np.int64)
    for m in np.unique(m_all[live]):
        idx = np.nonzero(m_all == m)[0]
        w = np.ones(m + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        u = np.arange(m + 1) / m
        per = max(1, _CHUNK // (m + 1))
        for s in range(0, len(idx), per):
            sel = idx[s : s + per]
            L = length[sel]
            t = a[sel, None] + L[:, None] * u
            out[sel] = (eval_utility(profile, t) @ w) * L / (3.0 * m)
    return out


def loss_integral(profile: PeriodicProfile, t0: float, t1: float,
                  noise: Optional[NoisePath] = None) -> float:
    """Utility lost while down over ``[t0, t1]``; noise is integrated exactly."""
    if t0 < 0 or t1 < t0:
        raise ValueError(f"need 0 <= t0 <= t1, got [{t0}, {t1}]")
    val = float(_simpson_windows(profile, np.array([t0]), np.array([t1]))[0])
    if noise is not None:
        val += float(noise.integral(t0, t1))
    return val


def window_losses(profile: PeriodicProfile, a, b, noise: Optional[NoisePath] = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = _simpson_windows(profile, a, b)
    if noise is not None:
        out = out + noise.integral(a, b)
    return out


def loss_series_by_cycle(trace: CellTrace, profile: PeriodicProfile,
                         noise: Optional[NoisePath] = None) -> LossSeries:
    """Per-cycle losses I_j and running L_n = sum_{j<=n} I_j / d_n."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    I = window_losses(profile, trace.down_start, trace.d, noise)
    return LossSeries(I, np.cumsum(I) / trace.d)


def loss_series_by_time(traces: Sequence[CellTrace], profiles, grid,
                        noise_paths: Optional[Sequence[NoisePath]] = None) -> NetworkRun:
    """Network running loss (1/(N T)) sum_i int_0^T U_i W_i on ``grid``.

    ``profiles`` is one profile shared by every cell or one per cell.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    n = len(traces)
    if n == 0:
        raise ValueError("need at least one trace")
    if isinstance(profiles, PeriodicProfile):
        profiles = [profiles] * n
    if len(profiles) != n or (noise_paths is not None and len(noise_paths) != n):
        raise ValueError("one profile (and noise path) per trace")
    for tr in traces:
        if tr.d[-1] < grid[-1] - 1e-9:
            raise ValueError("time grid extends beyond a trace horizon")

    G = len(grid)
    step = np.zeros((n, G + 1))
    partial = np.zeros((n, G))
    groups: dict[int, list[int]] = {}
    for i, prof in enumerate(profiles):
        groups.setdefault(id(prof), []).append(i)
    for members in groups.values():
        prof = profiles[members[0]]
        cells = np.concatenate([np.full(len(traces[i]), i) for i in members])
        a = np.concatenate([traces[i].down_start for i in members])
        b = np.concatenate([traces[i].d for i in members])
        keep = (b > a) & (a < grid[-1])
        cells, a, b = cells[keep], a[keep], b[keep]
        full = _simpson_windows(prof, a, b)
        ka = np.searchsorted(grid, a, side="right")
        kb = np.searchsorted(grid, b, side="left")
        np.add.at(step, (cells, kb), full)
        cnt = kb - ka
        w = np.repeat(np.arange(len(a)), cnt)
        g = ka[w] + (np.arange(len(w)) - np.repeat(np.cumsum(cnt) - cnt, cnt))
        part = _simpson_windows(prof, a[w], grid[g])
        np.add.at(partial, (cells[w], g), part)
        if noise_paths is not None:
            for i in members:
                sel = cells == i
                full_n = noise_paths[i].integral(a[sel], b[sel])
                np.add.at(step[i], kb[sel], full_n)
                sw = cells[w] == i
                part_n = noise_paths[i].integral(a[w][sw], grid[g][sw])
                np.add.at(partial[i], g[sw], part_n)
    cumulative = np.cumsum(step[:, :G], axis=1) + partial
    return NetworkRun(tuple(traces), grid, cumulative, cumulative.mean(axis=0) / grid)


# ---------------------------------------------------------------------------
# convergence


def relative_error(series, limit: float) -> np.ndarray:
    """``|L - limit| / L`` (infinite where ``L == 0``)."""
    s = np.asarray(series, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(s - limit) / s
    return np.where(s > 0, rel, np.inf)


def convergence_stage(series, limit: float, threshold: float = 0.10, times=None):
    """First stage after which the relative error stays below ``threshold``.

    Returns the 1-based cycle index, or ``times[i]`` when ``times`` is given;
    ``None`` when the last recorded point still violates the threshold.
    """
    if not limit > 0:
        raise ValueError("limit must be > 0")
    rel = relative_error(series, limit)
    if rel.size == 0:
        raise ValueError("empty series")
    bad = np.nonzero(~(rel < threshold))[0]
    first = 0 if bad.size == 0 else int(bad[-1]) + 1
    if first >= rel.size:
        return None
    if times is None:
        return first + 1
    return float(np.asarray(times)[first])


# ---------------------------------------------------------------------------
# studies and replication


def _children(seed: np.random.SeedSequence, n: int) -> list[np.random.SeedSequence]:
    # same children as seed.spawn(n) on a fresh sequence, without mutating it
    return [np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (i,),
                                   pool_size=seed.pool_size) for i in range(n)]


def cell_generators(seed: np.random.SeedSequence, n_cells: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in _children(seed, n_cells)]


def rep_streams(seed: np.random.SeedSequence) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Split a replication seed into (renewal, noise) children.

    Keeping the renewal stream separate lets clean and noisy runs share
    the same outage history.
    """
    renewal, noise = _children(seed, 2)
    return renewal, noise


@dataclass(frozen=True)
class Summary:
    values: tuple
    median: Optional[float]
    mean: Optional[float]
    q10: Optional[float]
    q90: Optional[float]
    not_reached: int

    def as_dict(self) -> dict:
        return {
            "median": self.median,
            "mean": self.mean,
            "q10": self.q10,
            "q90": self.q90,
            "not_reached": self.not_reached,
            "values": list(self.values),
        }


def summarize(values: Sequence[Optional[float]]) -> Summary:
    """Quantiles of stage values; unreached stages count as +inf."""
    v = np.array([math.inf if x is None else float(x) for x in values])
    method = "linear" if np.all(np.isfinite(v)) else "inverted_cdf"

    def q(p):
        r = float(np.quantile(v, p, method=method))
        return r if math.isfinite(r) else None

    finite = v[np.isfinite(v)]
    return Summary(
        tuple(values),
        q(0.5),
        float(finite.mean()) if finite.size else None,
        q(0.1),
        q(0.9),
        int(np.sum(~np.isfinite(v))),
    )


def replicate(study: Callable[[np.random.SeedSequence], Optional[float]], R: int,
              base_seed: int, threads: int = 1) -> Summary:
    """Run ``study`` on ``R`` replication seeds and summarise.

    Replication ``r`` gets ``SeedSequence(base_seed).spawn(R)[r]``; results
    are collected in replication order, so the summary does not depend on
    ``threads``.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    seeds = np.random.SeedSequence(base_seed).spawn(R)
    if threads > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(study, seeds))
    else:
        values = [study(s) for s in seeds]
    return summarize(values)


@dataclass(frozen=True)
class CellStudy:
    """Single-cell convergence in anomaly-repair cycles."""

    interarrival: InterArrivalModel
    maintenance: MaintenanceModel
    profile: PeriodicProfile
    n_cycles: int
    limit: float
    threshold: float = 0.10

    def series(self, seed: np.random.SeedSequence) -> LossSeries:
        renewal, _ = rep_streams(seed)
        rng = cell_generators(renewal, 1)[0]
        trace = simulate_cell(self.interarrival, self.maintenance, rng, n_cycles=self.n_cycles)
        return loss_series_by_cycle(trace, self.profile)

    def __call__(self, seed: np.random.SeedSequence) -> Optional[float]:
        return convergence_stage(self.series(seed).running_by_cycle, self.limit, self.threshold)


@dataclass(frozen=True)
class NetworkStudy:
    """Network convergence in hours over ``n_cells`` i.i.d. cells."""

    interarrival: InterArrivalModel
    maintenance: MaintenanceModel
    profile: PeriodicProfile
    n_cells: int
    horizon: float
    limit: float
    grid_step: float = 1.0
    threshold: float = 0.10
    noise: Optional[object] = None

    @property
    def grid(self) -> np.ndarray:
        k = int(math.floor(self.horizon / self.grid_step + 1e-9))
        return self.grid_step * np.arange(1, k + 1)

    def run(self, seed: np.random.SeedSequence) -> NetworkRun:
        from .utility import sample_noise_paths

        renewal, noise_seed = rep_streams(seed)
        traces = [
            simulate_cell(self.interarrival, self.maintenance, rng, horizon=self.horizon)
            for rng in cell_generators(renewal, self.n_cells)
        ]
        paths = None
        if self.noise is not None and self.noise.kind != "none":
            paths = sample_noise_paths(self.noise, self.horizon, np.random.default_rng(noise_seed),
                                       self.n_cells)
        return loss_series_by_time(traces, self.profile, self.grid, paths)

    def __call__(self, seed: np.random.SeedSequence) -> Optional[float]:
        run = self.run(seed)
        return convergence_stage(run.aggregate, self.limit, self.threshold, times=run.grid)
