"""Model-independent machinery for heterogeneous-vs-homogeneous comparisons.

A heterogeneous model is described by a parameter vector (mu_1, ..., mu_k)
and an outcome F(mu_1, ..., mu_k); the matching homogeneous model evaluates
F on the diagonal, F_homog(mu) = F(mu, ..., mu).  When F is symmetric under
permutations of its arguments and twice differentiable near the diagonal,
the homogeneous outcome at the arithmetic mean approximates the
heterogeneous one to second order in the heterogeneity level, and the
leading error is

    F(mu) - F_homog(mu_bar)  ~  alpha * sum_i (mu_i - mu_bar)^2,

with alpha = (F_11 - F_12) / 2 evaluated on the diagonal.  This module
provides the generic pieces: heterogeneity level, the three classical
means, numeric estimation of alpha from single-coordinate and homogeneous
probes, the second-order-corrected approximation, and log-log power-law
fits used to verify the quadratic scaling empirically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "HeterogeneityProfile",
    "OutcomeProbe",
    "AlphaEstimate",
    "ScalingFit",
    "heterogeneity_level",
    "mean",
    "alpha_from_probes",
    "improved_approx",
    "fit_scaling",
    "sweep_errors",
    "default_probe_step",
]

MEAN_KINDS = ("arithmetic", "geometric", "harmonic")


@dataclass(frozen=True)
class HeterogeneityProfile:
    """A one-parameter family of parameter vectors mu_i = base + scale * h_i.

    ``base`` is the common (mean) value, ``direction`` the fixed deviation
    pattern h, and ``scale`` the heterogeneity amplitude swept in
    experiments.  Admissibility of the materialized vector (positivity,
    stability, ...) is the consuming model's contract and is checked by its
    parameter types at materialization time.
    """

    base: float
    direction: tuple[float, ...]
    scale: float = 0.0

    def __post_init__(self):
        if len(self.direction) < 2:
            raise ValueError("direction must have length k >= 2")
        if not np.isfinite(self.base):
            raise ValueError("base must be finite")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")
        object.__setattr__(self, "direction", tuple(float(h) for h in self.direction))

    @property
    def k(self) -> int:
        return len(self.direction)

    def materialize(self, scale: float | None = None) -> np.ndarray:
        """Return base + scale * h as an array (``scale`` overrides the field)."""
        s = self.scale if scale is None else float(scale)
        if s < 0:
            raise ValueError("scale must be nonnegative")
        return self.base + s * np.asarray(self.direction)


@dataclass(frozen=True)
class OutcomeProbe:
    """A deterministic outcome F on parameter vectors of fixed arity.

    ``evaluate`` must return the same value for identical inputs and be
    defined on an open set containing the diagonal.  ``reentrant`` declares
    whether a single probe instance may be called concurrently; the engine
    never does so unless this is True.
    """

    evaluate: Callable[[np.ndarray], float]
    arity: int
    reentrant: bool = True

    def __post_init__(self):
        if self.arity < 2:
            raise ValueError("probe arity must be >= 2")

    def __call__(self, mu: Sequence[float]) -> float:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.arity,):
            raise ValueError(f"expected parameter vector of length {self.arity}")
        return float(self.evaluate(mu))


@dataclass(frozen=True)
class AlphaEstimate:
    """Second-order error coefficient with finite-difference diagnostics.

    ``richardson_residual`` is the absolute difference between the plain
    central-difference estimates at steps h and h/2; it is always reported
    so callers can judge how converged the extrapolated value is.
    """

    alpha: float
    step: float
    richardson_residual: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.richardson_residual < 0:
            raise ValueError("richardson_residual must be nonnegative")


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line through (log eps, log error)."""

    slope: float
    intercept: float
    r_squared: float

    @property
    def coefficient(self) -> float:
        """The fitted prefactor C in error = C * eps**slope."""
        return float(np.exp(self.intercept))


def heterogeneity_level(mu: Sequence[float], mean: float) -> float:
    """Relative spread max_i |mu_i - mean| / |mean| of a parameter vector.

    The centering value is supplied by the caller so that arithmetic,
    geometric, or harmonic centering can be chosen consistently.
    """
    if mean == 0:
        raise ValueError("heterogeneity level is undefined for zero mean")
    mu = np.asarray(mu, dtype=float)
    return float(np.max(np.abs(mu - mean)) / abs(mean))


def mean(mu: Sequence[float], kind: str = "arithmetic") -> float:
    """Arithmetic, geometric, or harmonic mean of a parameter vector.

    Geometric and harmonic kinds require strictly positive entries.
    """
    mu = np.asarray(mu, dtype=float)
    if kind not in MEAN_KINDS:
        raise ValueError(f"kind must be one of {MEAN_KINDS}")
    if kind == "arithmetic":
        return float(np.mean(mu))
    if np.any(mu <= 0):
        raise ValueError(f"{kind} mean requires positive entries")
    if kind == "geometric":
        return float(np.exp(np.mean(np.log(mu))))
    return float(len(mu) / np.sum(1.0 / mu))


def default_probe_step(center: float) -> float:
    """Default finite-difference step: max(1e-3 * |center|, 1e-6)."""
    return max(1e-3 * abs(center), 1e-6)


def _central_second(f: Callable[[float], float], x: float, h: float) -> float:
    """3-point central second difference of f at x with step h."""
    if x + h == x:
        raise ValueError(f"probe step {h} underflows at {x}; increase step")
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / h**2


def alpha_from_probes(
    single_coord: Callable[[float, float], float],
    homog: Callable[[float], float],
    mean: float,
    k: int,
    step: float | None = None,
) -> AlphaEstimate:
    """Estimate the second-order error coefficient from two cheap probes.

    Only two restricted evaluations of the outcome are needed: the
    single-coordinate map (mu_1, mu_bar) -> F(mu_1, mu_bar, ..., mu_bar) and
    the homogeneous map mu -> F(mu, ..., mu).  The coefficient is

        alpha = k / (2 (k-1)) * ( d^2F/dmu_1^2 |_diag - F_homog''(mu_bar) / k^2 ).

    Second derivatives use 3-point central differences at steps h and h/2,
    combined with one Richardson extrapolation level (4 D(h/2) - D(h)) / 3.
    The difference between the two plain estimates is reported as
    ``richardson_residual``, never discarded.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    h = default_probe_step(mean) if step is None else float(step)
    if h <= 0:
        raise ValueError("step must be positive")
    if mean + h / 2 == mean:
        raise ValueError(f"probe step {h} underflows at mean {mean}")

    pref = k / (2.0 * (k - 1.0))

    def alpha_at(hh: float) -> float:
        d2_single = _central_second(lambda m1: single_coord(m1, mean), mean, hh)
        d2_homog = _central_second(homog, mean, hh)
        return pref * (d2_single - d2_homog / k**2)

    a_h = alpha_at(h)
    a_h2 = alpha_at(h / 2.0)
    alpha = (4.0 * a_h2 - a_h) / 3.0
    return AlphaEstimate(alpha=alpha, step=h, richardson_residual=abs(a_h - a_h2))


def improved_approx(
    homog_value: float, alpha: float, mu: Sequence[float], mean: float
) -> float:
    """Homogeneous outcome plus the quadratic correction alpha * sum (mu_i - mean)^2."""
    mu = np.asarray(mu, dtype=float)
    return float(homog_value + alpha * np.sum((mu - mean) ** 2))


def fit_scaling(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Fit error = C * eps**slope by ordinary least squares in log-log space.

    Requires at least 4 points with positive coordinates and at least two
    distinct abscissae.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
        raise ValueError("need at least 4 (eps, error) points")
    if np.any(pts <= 0):
        raise ValueError("all eps and error values must be positive")
    lx = np.log(pts[:, 0])
    ly = np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise np.linalg.LinAlgError("degenerate fit: all abscissae identical")
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), res, *_ = np.linalg.lstsq(design, ly, rcond=None)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum((design @ (slope, intercept) - ly) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return ScalingFit(slope=float(slope), intercept=float(intercept),
                      r_squared=float(min(max(r2, 0.0), 1.0)))


def sweep_errors(
    probe: Callable[[np.ndarray], float],
    homog_value: float,
    profile: HeterogeneityProfile,
    epsilons: Sequence[float],
) -> np.ndarray:
    """Absolute errors |F(base + eps h) - homog_value| over an epsilon sweep."""
    return np.array(
        [abs(float(probe(profile.materialize(e))) - homog_value) for e in epsilons]
    )
