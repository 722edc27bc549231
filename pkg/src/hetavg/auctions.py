"""First-price sealed-bid auctions: closed forms and the asymmetric BVP.

Valuations live on [0, 1] with analytic CDF families (uniform, power,
perturbed), so densities are exact rather than interpolated.  With k
symmetric bidders the inverse equilibrium bid has the classical closed
form b(v) = v - int_0^v F^(k-1) / F^(k-1)(v) and the seller's expected
revenue is R = 1 + (k-1) int F^k - k int F^(k-1).

With heterogeneous CDFs F_i the inverse bids v_i(b) solve the coupled
system

    v_i'(b) = F_i(v_i)/F_i'(v_i) * [ 1/(k-1) * sum_j 1/(v_j - b) - 1/(v_i - b) ],

with v_i(0) = 0 and a free right endpoint b_max where every v_i reaches 1.
The solver shoots backward from a guessed b_max and bisects: trajectories
that meet the diagonal v = b at positive b (or blow up there) mean the
guess is too large; trajectories that reach b ~ 0 with all v_i bounded away
from 0 mean it is too small.  Near b = 0 every shot trajectory leaves the
separatrix, so the solution is continued below a small crossover bid with
the local similarity solution v_i ~ gamma_i b, gamma_i = 1 + 1/(A - a_i),
where a_i is the CDF shape exponent at 0 and A their sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp

__all__ = [
    "Perturbation",
    "ValuationCDF",
    "uniform_cdf",
    "power_cdf",
    "perturbed_cdf",
    "mean_cdf",
    "EquilibriumSolution",
    "RevenueReport",
    "ShootingError",
    "symmetric_bid",
    "symmetric_revenue",
    "solve_asymmetric",
    "asymmetric_revenue",
    "first_order_check",
    "FirstOrderRow",
    "averaging_check",
    "AveragingGap",
    "first_order_coefficient",
    "PERTURBATIONS",
]

MAX_ASYM_BIDDERS = 5
B_STOP = 1e-8          # backward integration stops just above zero
DIAG_TOL = 1e-9        # "meets the diagonal" means v - b < this
AWAY_TOL = 1e-6        # "bounded away from zero" at b = B_STOP
BISECT_TOL = 1e-10
MAX_BISECT = 200
QUAD_EPS = 1e-12       # adaptive quadrature tolerance for closed forms
REVENUE_QUAD_TOL = 1e-5


class ShootingError(RuntimeError):
    """Boundary-value solve failed; message carries trajectory diagnostics."""


@dataclass(frozen=True)
class Perturbation:
    """A CDF perturbation direction H with H(0) = H(1) = 0."""

    h: Callable[[np.ndarray], np.ndarray]
    dh: Callable[[np.ndarray], np.ndarray]
    label: str

    def __post_init__(self):
        for v in (0.0, 1.0):
            if abs(float(self.h(v))) > 1e-12:
                raise ValueError(f"perturbation {self.label} must vanish at {v}")

    def scaled(self, c: float) -> "Perturbation":
        return Perturbation(
            h=lambda v, _h=self.h: c * _h(v),
            dh=lambda v, _dh=self.dh: c * _dh(v),
            label=f"{c:g}*{self.label}",
        )


PERTURBATIONS = {
    "bump": Perturbation(
        h=lambda v: v * (1.0 - v), dh=lambda v: 1.0 - 2.0 * v, label="bump"
    ),
    "skew": Perturbation(
        h=lambda v: v**2 * (1.0 - v), dh=lambda v: 2.0 * v - 3.0 * v**2, label="skew"
    ),
}


@dataclass(frozen=True)
class ValuationCDF:
    """Valuation distribution on [0, 1] given by analytic cdf and density.

    ``shape_exponent`` is lim_{v->0} v f(v) / F(v), the local power of the
    CDF at the origin (1 for uniform-like families, a for F = v^a); it
    drives the similarity solution of the equilibrium system near b = 0.
    """

    cdf: Callable[[np.ndarray], np.ndarray]
    density: Callable[[np.ndarray], np.ndarray]
    tag: str
    shape_exponent: float = 1.0

    def validate(self, grid_step: float = 1e-4, tol: float = 1e-3) -> None:
        """Check CDF axioms and cdf/density consistency on a finite grid.

        The density is compared against a central finite difference of the
        cdf with step ``grid_step`` on an interior grid, to ``tol``
        absolute.
        """
        if abs(float(self.cdf(0.0))) > 1e-9:
            raise ValueError(f"{self.tag}: cdf(0) must be 0")
        if abs(float(self.cdf(1.0)) - 1.0) > 1e-9:
            raise ValueError(f"{self.tag}: cdf(1) must be 1")
        vs = np.linspace(0.0, 1.0, 401)
        fv = np.asarray(self.cdf(vs), dtype=float)
        if np.any(np.diff(fv) < -1e-12):
            raise ValueError(f"{self.tag}: cdf must be nondecreasing")
        inner = np.linspace(0.05, 0.95, 19)
        fd = (np.asarray(self.cdf(inner + grid_step)) -
              np.asarray(self.cdf(inner - grid_step))) / (2.0 * grid_step)
        err = np.max(np.abs(fd - np.asarray(self.density(inner))))
        if err > tol:
            raise ValueError(
                f"{self.tag}: density disagrees with cdf derivative by {err:.2e}"
            )


def uniform_cdf() -> ValuationCDF:
    """The uniform distribution on [0, 1]."""
    return ValuationCDF(
        cdf=lambda v: np.asarray(v, dtype=float),
        density=lambda v: np.ones_like(np.asarray(v, dtype=float)),
        tag="uniform",
        shape_exponent=1.0,
    )


def power_cdf(a: float) -> ValuationCDF:
    """F(v) = v**a on [0, 1] for a > 0."""
    if a <= 0:
        raise ValueError("power exponent must be positive")
    return ValuationCDF(
        cdf=lambda v: np.asarray(v, dtype=float) ** a,
        density=lambda v: a * np.asarray(v, dtype=float) ** (a - 1.0),
        tag=f"power({a:g})",
        shape_exponent=float(a),
    )


def perturbed_cdf(base: ValuationCDF, H: Perturbation, eps: float) -> ValuationCDF:
    """F = base + eps * H, guarded so the perturbed density stays positive.

    Validity requires |eps| * max|H'| < min density of the base family
    (evaluated on a dense grid); outside that range the result would not be
    a CDF.
    """
    vs = np.linspace(0.0, 1.0, 1001)
    min_density = float(np.min(np.asarray(base.density(vs[1:]), dtype=float)))
    max_slope = float(np.max(np.abs(np.asarray(H.dh(vs), dtype=float))))
    if abs(eps) * max_slope >= min_density:
        raise ValueError(
            f"perturbation too strong: |eps| * max|H'| = {abs(eps) * max_slope:.4g} "
            f">= min base density {min_density:.4g}"
        )
    return ValuationCDF(
        cdf=lambda v: np.asarray(base.cdf(v), dtype=float) + eps * np.asarray(H.h(v)),
        density=lambda v: np.asarray(base.density(v), dtype=float)
        + eps * np.asarray(H.dh(v)),
        tag=f"perturbed({base.tag}, {H.label}, {eps:g})",
        shape_exponent=base.shape_exponent,
    )


def mean_cdf(cdfs: Sequence[ValuationCDF]) -> ValuationCDF:
    """Pointwise arithmetic mean of valuation CDFs (always a valid CDF)."""
    if not cdfs:
        raise ValueError("need at least one CDF")
    k = len(cdfs)
    return ValuationCDF(
        cdf=lambda v: sum(np.asarray(F.cdf(v), dtype=float) for F in cdfs) / k,
        density=lambda v: sum(np.asarray(F.density(v), dtype=float) for F in cdfs) / k,
        tag="mean(" + ", ".join(F.tag for F in cdfs) + ")",
        shape_exponent=min(F.shape_exponent for F in cdfs),
    )


@dataclass(frozen=True)
class RevenueReport:
    """A revenue value in [0, 1] tagged with how it was computed."""

    revenue: float
    method: str

    def __post_init__(self):
        if not -1e-9 <= self.revenue <= 1.0 + 1e-9:
            raise ValueError(f"revenue {self.revenue} outside [0, 1]")


@dataclass(frozen=True)
class EquilibriumSolution:
    """Inverse bids v_i on a common bid grid [0, b_max].

    ``v`` has shape (k, len(grid)); column j holds the valuations bidding
    grid[j].  All bidders share the right endpoint where v_i = 1.
    """

    b_max: float
    grid: np.ndarray
    v: np.ndarray

    @property
    def k(self) -> int:
        return self.v.shape[0]

    def validate(self, tol: float = 1e-4) -> None:
        if not (0.0 < self.b_max < 1.0):
            raise ValueError(f"b_max = {self.b_max} outside (0, 1)")
        if self.grid[0] != 0.0 or abs(self.grid[-1] - self.b_max) > 1e-12:
            raise ValueError("grid must run from 0 to b_max")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.max(np.abs(self.v[:, -1] - 1.0)) > tol:
            raise ValueError("right boundary condition v_i(b_max) = 1 violated")
        if np.max(np.abs(self.v[:, 0])) > tol:
            raise ValueError("left boundary condition v_i(0) = 0 violated")
        if np.any(self.v[:, 1:] <= self.grid[1:][None, :]):
            raise ValueError("inverse bids must satisfy v_i(b) > b on (0, b_max]")
        if np.any(np.diff(self.v, axis=1) < -1e-9):
            raise ValueError("inverse bids must be nondecreasing")


def symmetric_bid(F: ValuationCDF, k: int, v: float) -> float:
    """Equilibrium bid of a valuation v among k symmetric bidders."""
    if k < 2:
        raise ValueError("need at least 2 bidders")
    if not 0.0 <= v <= 1.0:
        raise ValueError("valuation must lie in [0, 1]")
    if v == 0.0:
        return 0.0
    Fk = float(F.cdf(v)) ** (k - 1)
    if Fk <= 0.0:
        raise ValueError(f"{F.tag}: cdf vanishes at v = {v}; bid undefined")
    integral, _ = quad(
        lambda s: float(F.cdf(s)) ** (k - 1), 0.0, v, epsabs=QUAD_EPS, epsrel=QUAD_EPS
    )
    return v - integral / Fk


def symmetric_revenue(F: ValuationCDF, k: int) -> RevenueReport:
    """Seller's expected revenue with k symmetric bidders drawing from F."""
    if k < 2:
        raise ValueError("need at least 2 bidders")
    int_k, _ = quad(lambda s: float(F.cdf(s)) ** k, 0.0, 1.0,
                    epsabs=QUAD_EPS, epsrel=QUAD_EPS)
    int_km1, _ = quad(lambda s: float(F.cdf(s)) ** (k - 1), 0.0, 1.0,
                      epsabs=QUAD_EPS, epsrel=QUAD_EPS)
    return RevenueReport(
        revenue=1.0 + (k - 1) * int_k - k * int_km1, method="symmetric-closed-form"
    )


def _shoot(F_list: Sequence[ValuationCDF], b_max: float):
    """Integrate the inverse-bid system backward from v_i(b_max) = 1."""
    k = len(F_list)

    def rhs(b, v):
        inv = 1.0 / (v - b)
        common = inv.sum() / (k - 1)
        out = np.empty(k)
        for i, F in enumerate(F_list):
            out[i] = float(F.cdf(v[i])) / float(F.density(v[i])) * (common - inv[i])
        return out

    def hits_diagonal(b, v):
        return float(np.min(v - b)) - DIAG_TOL

    hits_diagonal.terminal = True
    return solve_ivp(
        rhs,
        (b_max, B_STOP),
        np.ones(k),
        method="RK45",
        rtol=1e-10,
        atol=1e-12,
        events=hits_diagonal,
        dense_output=True,
    )


def _classify(sol) -> str:
    """'too_large' if the trajectory met the diagonal (or crashed into it),
    'too_small' if it reached b ~ 0 with every v_i bounded away from 0."""
    if sol.status != 0:
        return "too_large"
    return "too_small" if np.all(sol.y[:, -1] > AWAY_TOL) else "too_large"


def solve_asymmetric(
    F_list: Sequence[ValuationCDF], grid_size: int = 2001
) -> EquilibriumSolution:
    """Solve the asymmetric first-price equilibrium by backward shooting.

    Bisects the common maximum bid to 1e-10, integrates the converged
    trajectory with dense output, and resamples it onto a uniform grid of
    ``grid_size`` bids over [0, b_max].  Below a small crossover bid the
    trajectory is replaced by the origin similarity solution (see module
    docstring), which pins v_i(0) = 0.
    """
    k = len(F_list)
    if k < 2:
        raise ValueError("need at least 2 bidders")
    if k > MAX_ASYM_BIDDERS:
        raise ValueError(f"asymmetric solver limited to {MAX_ASYM_BIDDERS} bidders")
    if grid_size < 16:
        raise ValueError("grid_size too small")
    for F in F_list:
        F.validate()

    lo, hi = 1e-6, 1.0 - 1e-9
    if _classify(_shoot(F_list, lo)) != "too_small":
        raise ShootingError(
            f"lower bracket {lo} already classified too large; "
            "no equilibrium with positive bids?"
        )
    if _classify(_shoot(F_list, hi)) != "too_large":
        raise ShootingError(f"upper bracket {hi} classified too small")
    steps = 0
    while hi - lo > BISECT_TOL:
        if steps >= MAX_BISECT:
            raise ShootingError(
                f"bisection stalled after {steps} steps: bracket [{lo}, {hi}]"
            )
        mid = 0.5 * (lo + hi)
        if _classify(_shoot(F_list, mid)) == "too_small":
            lo = mid
        else:
            hi = mid
        steps += 1
    b_max = lo  # the largest guess whose trajectory survives to b ~ 0
    sol = _shoot(F_list, b_max)
    if sol.status != 0:
        raise ShootingError(
            f"converged b_max {b_max} did not integrate cleanly "
            f"(status {sol.status} at b = {sol.t[-1]:.3e})"
        )

    # Origin similarity solution: v_i ~ gamma_i * b with
    # gamma_i = 1 + 1/(A - a_i), A = sum of shape exponents.
    a = np.array([F.shape_exponent for F in F_list])
    gamma = 1.0 + 1.0 / (a.sum() - a)
    crossover = min(max(0.05 * b_max, 1e-3), 0.5 * b_max)

    grid = np.linspace(0.0, b_max, grid_size)
    v = np.empty((k, grid_size))
    outer = grid >= crossover
    v[:, outer] = sol.sol(np.clip(grid[outer], B_STOP, b_max))
    v_cross = sol.sol(crossover)
    inner = ~outer
    # quadratic blend: exact similarity slope at 0, matches the shot
    # trajectory at the crossover
    for i in range(k):
        v[i, inner] = gamma[i] * grid[inner] + (
            v_cross[i] - gamma[i] * crossover
        ) * (grid[inner] / crossover) ** 2
    v[:, 0] = 0.0
    v[:, -1] = 1.0
    solution = EquilibriumSolution(b_max=b_max, grid=grid, v=v)
    solution.validate()
    return solution


def asymmetric_revenue(
    sol: EquilibriumSolution, F_list: Sequence[ValuationCDF]
) -> RevenueReport:
    """Expected revenue from a solved equilibrium.

    Integration by parts turns int b d[prod F_i(v_i(b))] into
    b_max - int prod F_i(v_i(b)) db, which avoids differentiating the
    numeric solution; the integral uses the trapezoid rule on the solution
    grid, with the half-grid difference as the error estimate.
    """
    if len(F_list) != sol.k:
        raise ValueError("CDF list does not match solution")
    prod = np.ones_like(sol.grid)
    for i, F in enumerate(F_list):
        prod *= np.clip(np.asarray(F.cdf(np.clip(sol.v[i], 0.0, 1.0))), 0.0, 1.0)
    full = np.trapezoid(prod, sol.grid)
    half = np.trapezoid(prod[::2], sol.grid[::2])
    est_err = abs(full - half) / 3.0
    if est_err > REVENUE_QUAD_TOL:
        raise ValueError(
            f"solution grid too coarse: estimated quadrature error {est_err:.2e}"
        )
    return RevenueReport(revenue=float(sol.b_max - full), method="asymmetric-numeric")


def first_order_coefficient(
    F: ValuationCDF, H_list: Sequence[Perturbation], k: int
) -> float:
    """Linear-in-eps revenue coefficient -(k-1) int (1-F) F^(k-2) sum H_i dv."""
    if k < 2:
        raise ValueError("need at least 2 bidders")

    def integrand(s):
        Fs = float(F.cdf(s))
        return (1.0 - Fs) * Fs ** (k - 2) * sum(float(H.h(s)) for H in H_list)

    integral, _ = quad(integrand, 0.0, 1.0, epsabs=QUAD_EPS, epsrel=QUAD_EPS)
    return -(k - 1) * integral


@dataclass(frozen=True)
class FirstOrderRow:
    """One eps point of the first-order comparison (flagged if invalid)."""

    epsilon: float
    r_numeric: float | None
    r_first_order: float
    ok: bool
    note: str = ""


def first_order_check(
    F: ValuationCDF,
    H_list: Sequence[Perturbation],
    k: int,
    epsilons: Sequence[float],
    grid_size: int = 2001,
) -> list[FirstOrderRow]:
    """Compare numeric revenue against the linear expansion over an eps sweep.

    r_first_order(eps) = R_homog(F) + eps * first_order_coefficient(...);
    the residual r_numeric - r_first_order scales quadratically in eps.
    An eps whose perturbed CDF is invalid yields a flagged row rather than
    a silently dropped one.
    """
    if len(H_list) != k:
        raise ValueError("need one perturbation per bidder")
    r0 = symmetric_revenue(F, k).revenue
    coeff = first_order_coefficient(F, H_list, k)
    rows = []
    for eps in epsilons:
        r_first = r0 + eps * coeff
        try:
            perturbed = [perturbed_cdf(F, H, eps) for H in H_list]
            sol = solve_asymmetric(perturbed, grid_size=grid_size)
            r_num = asymmetric_revenue(sol, perturbed).revenue
        except (ValueError, ShootingError) as exc:
            rows.append(FirstOrderRow(float(eps), None, r_first, False, str(exc)))
            continue
        rows.append(FirstOrderRow(float(eps), r_num, r_first, True))
    return rows


@dataclass(frozen=True)
class AveragingGap:
    """Asymmetric revenue vs the symmetric revenue at the mean CDF."""

    r_asym: float
    r_homog_at_mean: float

    @property
    def gap(self) -> float:
        return self.r_asym - self.r_homog_at_mean


def averaging_check(
    F_list: Sequence[ValuationCDF], grid_size: int = 2001
) -> AveragingGap:
    """Gap between heterogeneous revenue and the homogeneous one at the mean."""
    k = len(F_list)
    sol = solve_asymmetric(F_list, grid_size=grid_size)
    r_asym = asymmetric_revenue(sol, F_list).revenue
    r_homog = symmetric_revenue(mean_cdf(F_list), k).revenue
    return AveragingGap(r_asym=r_asym, r_homog_at_mean=r_homog)
