"""Exact steady-state analysis of M/M/k queues with heterogeneous servers.

Arrivals are Poisson at rate lambda; server i serves at exponential rate
mu_i; an arriving customer is allocated uniformly at random among the free
servers, or joins an unbounded FIFO queue if all are busy.  States with
fewer than k customers are labelled by the subset of busy servers; once all
servers are busy the chain is a plain birth-death line, so probabilities of
n >= k customers form an exact geometric tail p_n = rho^(n-k) * p_k with
rho = lambda / sum(mu).  The solver therefore works with the 2^k - 1 subset
unknowns plus the seed p_k: set p_k = 1, solve the linear balance system by
dense LU, and rescale by the closed-form normalization.

Also provided: the two-server closed form, the classical homogeneous
(Erlang-C based) expected-customers formula, the reduced chain for a single
heterogeneous server among k-1 identical ones (2k - 1 unknowns instead of
2^k - 1), and the published rational formula for the second-order error
coefficient at k = 8.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg import lapack as _lapack

from .avgcore import AlphaEstimate, alpha_from_probes, default_probe_step

__all__ = [
    "MMkParams",
    "BusyStateSpace",
    "SteadyStateSummary",
    "build_balance_system",
    "solve_steady_state",
    "mm2_closed_form",
    "homog_closed_form",
    "single_coordinate_L",
    "alpha_k8_published",
    "alpha_via_reduced_system",
    "ALPHA_K8_NUM_COEFFS",
    "ALPHA_K8_DEN_COEFFS",
]

MAX_FULL_SOLVER_K = 14
CONDITION_WARN_THRESHOLD = 1e12

# Integer coefficients of the k = 8 rational formula for alpha as a
# function of x = mu_bar / lambda (numerator degree 12, denominator the
# square of a degree-7 polynomial).  Transcription is validated against the
# independent finite-difference path in the tests, not asserted locally.
ALPHA_K8_NUM_COEFFS = (
    1, 45, 999, 14280, 144720, 1088640, 6249600, 27941760,
    97977600, 263390400, 514382400, 653184000, 406425600,
)
ALPHA_K8_DEN_COEFFS = (1, 14, 126, 840, 4200, 15120, 35280, 40320)


@dataclass(frozen=True)
class MMkParams:
    """Arrival rate and per-server service rates of a stable M/M/k queue."""

    lam: float
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(m) for m in self.rates))
        if self.lam <= 0:
            raise ValueError("arrival rate must be positive")
        if len(self.rates) < 2:
            raise ValueError("need at least 2 servers")
        if any(m <= 0 for m in self.rates):
            raise ValueError(f"service rates must be positive, got {self.rates}")
        if self.lam >= sum(self.rates):
            raise ValueError(
                f"unstable queue: lambda = {self.lam} >= sum(mu) = {sum(self.rates)}"
            )

    @property
    def k(self) -> int:
        return len(self.rates)

    @property
    def rho(self) -> float:
        """Traffic intensity lambda / sum(mu); the geometric tail ratio."""
        return self.lam / sum(self.rates)


class BusyStateSpace:
    """Enumeration of busy-server subsets S with |S| <= k - 1.

    Subsets are encoded as bitmasks (bit i set means server i+1 busy) and
    ordered by (popcount, mask), so the empty state is first and states of
    equal occupancy are ordered numerically.  The all-busy state is not
    enumerated; it is the seed of the geometric tail.
    """

    def __init__(self, k: int):
        if k < 2:
            raise ValueError("k must be >= 2")
        self.k = k
        self.full_mask = (1 << k) - 1
        self.masks = sorted(range(self.full_mask), key=lambda m: (m.bit_count(), m))
        self._index = {m: i for i, m in enumerate(self.masks)}

    def __len__(self) -> int:
        return len(self.masks)

    def index_of(self, mask: int) -> int:
        return self._index[mask]

    def mask_of(self, index: int) -> int:
        return self.masks[index]


@dataclass(frozen=True)
class SteadyStateSummary:
    """Stationary distribution and expected number of customers L.

    ``p_subsets`` is aligned with ``BusyStateSpace(k).masks``;
    ``p_full_seed`` is the probability of exactly k customers, and the tail
    continues geometrically with ratio ``tail_ratio``.
    """

    p_subsets: np.ndarray
    p_full_seed: float
    tail_ratio: float
    expected_customers: float

    def total_probability(self) -> float:
        """Subset probabilities plus the closed-form geometric tail."""
        return float(self.p_subsets.sum() + self.p_full_seed / (1.0 - self.tail_ratio))

    def prob_n(self, n: int) -> float:
        """Stationary probability of exactly n customers in the system."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        k = int(round(np.log2(len(self.p_subsets) + 1)))
        if n < k:
            space = BusyStateSpace(k)
            return float(
                sum(p for m, p in zip(space.masks, self.p_subsets) if m.bit_count() == n)
            )
        return float(self.p_full_seed * self.tail_ratio ** (n - k))


def build_balance_system(params: MMkParams) -> tuple[np.ndarray, np.ndarray]:
    """Assemble the linear balance system over subset states, with p_k = 1.

    Row S balances outflow (lambda + sum of busy rates) * p_S against
    inflow: arrivals from S minus one server at rate lambda / (#free there),
    service completions from supersets, and - for |S| = k - 1 - the
    completion of the one missing server out of the all-busy state, which
    appears on the right-hand side because the seed is normalized to 1.
    """
    k = params.k
    space = BusyStateSpace(k)
    n = len(space)
    lam = params.lam
    mus = params.rates
    A = np.zeros((n, n))
    b = np.zeros(n)
    for m in space.masks:
        i = space.index_of(m)
        s = m.bit_count()
        A[i, i] = lam + sum(mus[j] for j in range(k) if m >> j & 1)
        for j in range(k):
            if m >> j & 1:
                # arrival into server j from state S \ {j}
                A[i, space.index_of(m & ~(1 << j))] -= lam / (k - s + 1)
        if s <= k - 2:
            for j in range(k):
                if not (m >> j & 1):
                    A[i, space.index_of(m | (1 << j))] -= mus[j]
        else:
            # inflow from the exactly-k-customers state via the free server
            j_free = (~m & space.full_mask).bit_length() - 1
            b[i] = mus[j_free]
    return A, b


def solve_steady_state(params: MMkParams) -> SteadyStateSummary:
    """Solve the full subset-state balance system and summarize it.

    Dense LU with partial pivoting; the reciprocal condition number is
    estimated from the factors and a warning is issued above the 1e12
    threshold (traffic intensity near 1 shows up as ill-conditioning).
    """
    if params.k > MAX_FULL_SOLVER_K:
        raise ValueError(
            f"full solver holds 2^k states; k = {params.k} exceeds {MAX_FULL_SOLVER_K}"
        )
    A, b = build_balance_system(params)
    anorm = np.linalg.norm(A, 1)
    lu, piv = lu_factor(A)
    diag = np.abs(np.diag(lu))
    if np.any(diag == 0):
        raise np.linalg.LinAlgError("singular balance system")
    rcond, info = _lapack.dgecon(lu, anorm)
    if info != 0 or (rcond > 0 and 1.0 / rcond > CONDITION_WARN_THRESHOLD):
        warnings.warn(
            f"balance system condition ~{1.0 / max(rcond, 1e-300):.2e} exceeds "
            f"{CONDITION_WARN_THRESHOLD:.0e}; results may lose accuracy",
            RuntimeWarning,
            stacklevel=2,
        )
    x = lu_solve((lu, piv), b)

    rho = params.rho
    k = params.k
    norm = x.sum() + 1.0 / (1.0 - rho)
    p_sub = x / norm
    p_full = 1.0 / norm
    space = BusyStateSpace(k)
    occupancy = np.array([m.bit_count() for m in space.masks], dtype=float)
    # sum_{n >= k} n rho^(n-k) = k/(1-rho) + rho/(1-rho)^2, summed in closed form
    tail_customers = k / (1.0 - rho) + rho / (1.0 - rho) ** 2
    L = float(occupancy @ p_sub + p_full * tail_customers)
    return SteadyStateSummary(
        p_subsets=p_sub, p_full_seed=p_full, tail_ratio=rho, expected_customers=L
    )


def mm2_closed_form(lam: float, mu1: float, mu2: float) -> float:
    """Expected number in system for two heterogeneous servers.

    L = 1/(1-rho)^2 * 1 / ( (1/rho) * 2 mu1 mu2 / (mu1+mu2)^2 + 1/(1-rho) )
    with rho = lambda / (mu1 + mu2).
    """
    if lam <= 0 or mu1 <= 0 or mu2 <= 0:
        raise ValueError("rates must be positive")
    if lam >= mu1 + mu2:
        raise ValueError(f"unstable queue: lambda = {lam} >= mu1 + mu2 = {mu1 + mu2}")
    rho = lam / (mu1 + mu2)
    balanced = 2.0 * mu1 * mu2 / (mu1 + mu2) ** 2
    return 1.0 / (1.0 - rho) ** 2 / (balanced / rho + 1.0 / (1.0 - rho))


def homog_closed_form(lam: float, mu: float, k: int) -> float:
    """Expected number in system for k identical servers (Erlang-C based).

    L = C(k, a) * rho / (1 - rho) + a with a = lambda/mu, rho = lambda/(k mu)
    and C the Erlang delay probability.
    """
    if lam <= 0 or mu <= 0:
        raise ValueError("rates must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    if lam >= k * mu:
        raise ValueError(f"unstable queue: lambda = {lam} >= k mu = {k * mu}")
    a = lam / mu
    rho = lam / (k * mu)
    block = a**k / factorial(k) / (1.0 - rho)
    erlang_c = block / (sum(a**n / factorial(n) for n in range(k)) + block)
    return erlang_c * rho / (1.0 - rho) + a


def single_coordinate_L(lam: float, mu1: float, mu: float, k: int) -> float:
    """Expected number in system when one server runs at mu1 and k-1 at mu.

    The chain only needs states (b, n): b flags the distinguished server
    busy, n counts busy identical servers, with b + n <= k - 1, plus the
    all-busy seed - 2k - 1 unknowns instead of 2^k - 1.  The tail is the
    same geometric line as in the full chain.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if lam <= 0 or mu1 <= 0 or mu <= 0:
        raise ValueError("rates must be positive")
    total_mu = mu1 + (k - 1) * mu
    if lam >= total_mu:
        raise ValueError(f"unstable queue: lambda = {lam} >= sum(mu) = {total_mu}")

    kk = k - 1  # number of identical servers
    states = [(bb, n) for bb in (0, 1) for n in range(kk + 1) if bb + n <= k - 1]
    index = {st: i for i, st in enumerate(states)}
    m = len(states)
    A = np.zeros((m, m))
    rhs = np.zeros(m)
    for bb, n in states:
        i = index[(bb, n)]
        A[i, i] = lam + bb * mu1 + n * mu
        if n >= 1:
            # arrival routed to an identical server from (bb, n-1)
            free_prev = k - bb - (n - 1)
            A[i, index[(bb, n - 1)]] -= lam * (kk - (n - 1)) / free_prev
        if bb == 1:
            # arrival routed to the distinguished server from (0, n)
            A[i, index[(0, n)]] -= lam / (k - n)
        if bb + n + 1 <= k - 1:
            A[i, index[(bb, n + 1)]] -= (n + 1) * mu
        if bb == 0 and n + 1 <= k - 1:
            A[i, index[(1, n)]] -= mu1
        # completions out of the exactly-k-customers state (seed = 1)
        if bb == 0 and n == kk:
            rhs[i] += mu1
        if bb == 1 and n == kk - 1:
            rhs[i] += kk * mu
    x = np.linalg.solve(A, rhs)

    rho = lam / total_mu
    norm = x.sum() + 1.0 / (1.0 - rho)
    busy = np.array([bb + n for bb, n in states], dtype=float)
    tail_customers = k / (1.0 - rho) + rho / (1.0 - rho) ** 2
    return float((busy @ x + tail_customers) / norm)


def alpha_k8_published(lam: float, mu_bar: float) -> float:
    """Second-order error coefficient for k = 8 from the rational formula.

    alpha = 1/(2 lambda mu_bar) * P12(x) / Q7(x)^2 with x = mu_bar/lambda
    and integer coefficient tables P12 = ALPHA_K8_NUM_COEFFS,
    Q7 = ALPHA_K8_DEN_COEFFS.
    """
    if lam <= 0 or mu_bar <= 0:
        raise ValueError("rates must be positive")
    x = mu_bar / lam
    num = 0.0
    for c in reversed(ALPHA_K8_NUM_COEFFS):
        num = num * x + c
    den = 0.0
    for c in reversed(ALPHA_K8_DEN_COEFFS):
        den = den * x + c
    return num / den**2 / (2.0 * lam * mu_bar)


def alpha_via_reduced_system(
    lam: float, mu_bar: float, k: int, step: float | None = None
) -> AlphaEstimate:
    """Numeric alpha for the M/M/k expected-customers outcome.

    Feeds the reduced single-coordinate chain and the homogeneous closed
    form into the generic finite-difference estimator.  Works for any k in
    the reduced solver's range, so it serves as an independent check of the
    published k = 8 formula.
    """
    if step is None:
        step = default_probe_step(mu_bar)
    return alpha_from_probes(
        single_coord=lambda m1, mb: single_coordinate_L(lam, m1, mb, k),
        homog=lambda m: homog_closed_form(lam, m, k),
        mean=mu_bar,
        k=k,
        step=step,
    )
