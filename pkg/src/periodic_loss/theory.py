"""Closed-form limit, availability decomposition and convergence bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .stochastic import FourierBound, MaintenanceModel, fourier_bound_exponential
from .utility import PeriodicProfile, mean_utility


@dataclass(frozen=True)
class LimitInputs:
    mean_x: float
    mean_y: float
    u_bar: float
    n_cells: int = 1

    def __post_init__(self):
        if not self.mean_x > 0:
            raise ValueError("mean_x must be > 0")
        if self.mean_y < 0 or self.u_bar < 0:
            raise ValueError("mean_y and u_bar must be >= 0")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")


@dataclass(frozen=True)
class BoundInputs:
    alpha: float
    C: float
    C_prime: float
    p: float
    i_bar: float
    K: float
    e_y2: float

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if min(self.C, self.C_prime, self.p, self.K, self.e_y2) < 0 or self.i_bar < 0:
            raise ValueError("bound constants must be nonnegative")


def availability(mtbf: float, mttr: float) -> float:
    if not mtbf > 0 or mttr < 0:
        raise ValueError("need mtbf > 0 and mttr >= 0")
    return mtbf / (mtbf + mttr)


def delta(mean_x: float, mean_y: float) -> float:
    """Long-run downtime fraction E[Y] / (E[X] + E[Y])."""
    if not mean_x > 0 or mean_y < 0:
        raise ValueError("need mean_x > 0 and mean_y >= 0")
    return mean_y / (mean_x + mean_y)


def i_bar(mean_y: float, u_bar: float) -> float:
    """Limiting expected loss per cycle, E[Y] * U_bar."""
    if mean_y < 0 or u_bar < 0:
        raise ValueError("inputs must be nonnegative")
    return mean_y * u_bar


def expected_loss_limit(inp: LimitInputs) -> float:
    """n_cells * E[Y] U_bar / (E[X] + E[Y])."""
    return inp.n_cells * inp.mean_y * inp.u_bar / (inp.mean_x + inp.mean_y)


def wrapped_exponential_sup(lam: float, p: float) -> float:
    """Supremum of the Exp(lam) density folded mod p, used as M."""
    return lam / -math.expm1(-lam * p)


def bound_inputs(lam: float, p: float, maintenance: MaintenanceModel, profile: PeriodicProfile,
                 fb: FourierBound | None = None) -> BoundInputs:
    fb = fb or fourier_bound_exponential(lam, p)
    M = wrapped_exponential_sup(lam, p)
    return BoundInputs(
        alpha=fb.alpha,
        C=fb.C,
        C_prime=M + 1.0 / p,
        p=p,
        i_bar=i_bar(maintenance.mean(), mean_utility(profile)),
        K=profile.bound,
        e_y2=maintenance.second_moment(),
    )


def covariance_upper_bound(j: int, k: int, b: BoundInputs) -> float:
    """Upper bound on Cov[I_j, I_{j+k}]."""
    if j < 1 or k < 1:
        raise ValueError("j and k must be >= 1")
    a, C, p = b.alpha, b.C, b.p
    return b.i_bar**2 * (
        1.0
        + p * b.C_prime * C * (a**j + a**k)
        - (1.0 - C * a ** (j - 1) / p) * (1.0 - C * a ** (j + k - 1) / p)
    )


def covariance_bound_report(j: int, k: int, b: BoundInputs) -> dict:
    """Smaller of the covariance bound above and the trivial ``K^2 E[Y^2]``."""
    decay = covariance_upper_bound(j, k, b)
    trivial = b.K**2 * b.e_y2
    active = "decay" if decay <= trivial else "trivial"
    return {"j": j, "k": k, "bound": min(decay, trivial), "decay": decay,
            "trivial": trivial, "active": active}


def variance_upper_bound(n: int, b: BoundInputs) -> float:
    """Upper bound on Var[(1/n) sum_{j<=n} I_j]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, C, Cp, p = b.alpha, b.C, b.C_prime, b.p
    if a >= 1:
        raise ValueError("alpha must be < 1")
    first = (b.K**2 * b.e_y2 - b.i_bar**2 * (1.0 - C / p) ** 2) / n
    bracket = (
        n * Cp * p / (1 - a)
        + a**2 * Cp * p / (1 - a) ** 2
        + n / (p * (1 - a))
        + a**2 / (p * (1 - a) * (1 - a**2))
    )
    return first + 2.0 * b.i_bar**2 * C / n**2 * bracket


def theorem1_bound(j: int, fb: FourierBound, p: float) -> float:
    """sup-distance bound C alpha^j / p of the j-cycle wrapped clock."""
    if j < 1:
        raise ValueError("j must be >= 1")
    return fb.C * fb.alpha**j / p
