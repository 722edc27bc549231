"""Event-driven Monte Carlo simulation of the heterogeneous M/M/k queue.

Each replication simulates the continuous-time dynamics directly:
exponential interarrivals at rate lambda, an arrival takes a uniformly
random free server (one RNG draw) or joins an unbounded FIFO queue, service
at the holding server's exponential rate, and on a departure the
head-of-queue customer takes the freed server.  The output per replication
is the time-averaged number in system over (warmup, horizon]; the area
accumulator starts at the warmup cut.

Replication streams are counter-based (Philox) and keyed by
(seed, replication index), so replication r produces identical numbers no
matter in which order or on which worker it runs.  The inner loop is
compiled with numba and releases the GIL, so replications can be spread
over threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import avgcore
from .queue_exact import MMkParams, alpha_via_reduced_system, homog_closed_form

__all__ = [
    "SimConfig",
    "SimResult",
    "Fig1Row",
    "simulate",
    "fig1_sweep",
    "REFERENCE_H_VECTOR",
    "max_workers",
]

# Deviation pattern used by the reference 8-server experiment; sums to zero
# so the mean service rate is scale-invariant, and sum of squares is 71.
REFERENCE_H_VECTOR = (1.0, 1.5, 2.0, 3.0, 3.5, -2.5, -4.0, -4.5)


def max_workers() -> int:
    """Worker cap for parallel replications/sweeps (HETAVG_THREADS wins)."""
    n = os.cpu_count() or 1
    env = os.environ.get("HETAVG_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValueError(f"HETAVG_THREADS must be an integer, got {env!r}")
    return n


@dataclass(frozen=True)
class SimConfig:
    """One simulation experiment: queue parameters, budget, and seed."""

    params: MMkParams
    horizon: float
    warmup: float = 0.0
    replications: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 0 <= self.warmup < self.horizon:
            raise ValueError("need 0 <= warmup < horizon")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class SimResult:
    """Replication-averaged number in system with sampling error.

    ``per_replication`` holds one time-average per replication;
    ``std_error`` is their sample standard deviation over sqrt(R).
    ``sojourn_means`` and ``throughputs`` are per-replication diagnostics
    (mean time in system of departing customers, departures per unit time)
    used for flow-balance checks.
    """

    mean_customers: float
    std_error: float
    per_replication: np.ndarray
    sojourn_means: np.ndarray
    throughputs: np.ndarray


@dataclass(frozen=True)
class Fig1Row:
    """One sweep point: heterogeneity scale and relative approximation errors."""

    epsilon: float
    rel_error: float
    improved_rel_error: float
    mean_customers: float
    std_error: float


@njit(cache=True, nogil=True)
def _run_replication(lam, rates, horizon, warmup, gen):
    """Single replication; returns (time-average L, sojourn sum, departures)."""
    k = rates.shape[0]
    next_comp = np.full(k, np.inf)
    started_at = np.zeros(k)  # arrival time of the customer at each busy server
    qcap = 1024
    queue = np.empty(qcap)
    qhead = 0
    qtail = 0
    qlen = 0
    t = 0.0
    n = 0
    next_arr = gen.exponential(1.0 / lam)
    area = 0.0
    sojourn_sum = 0.0
    departures = 0
    while True:
        tmin = next_arr
        imin = -1
        for i in range(k):
            if next_comp[i] < tmin:
                tmin = next_comp[i]
                imin = i
        if tmin > horizon:
            break
        lo = t if t > warmup else warmup
        if tmin > lo:
            area += n * (tmin - lo)
        t = tmin
        if imin < 0:  # arrival
            n += 1
            nfree = 0
            for i in range(k):
                if next_comp[i] == np.inf:
                    nfree += 1
            if nfree > 0:
                pick = int(gen.random() * nfree)
                for i in range(k):
                    if next_comp[i] == np.inf:
                        if pick == 0:
                            next_comp[i] = t + gen.exponential(1.0 / rates[i])
                            started_at[i] = t
                            break
                        pick -= 1
            else:
                if qlen == qcap:
                    bigger = np.empty(qcap * 2)
                    for j in range(qlen):
                        bigger[j] = queue[(qhead + j) % qcap]
                    queue = bigger
                    qhead = 0
                    qtail = qlen
                    qcap *= 2
                queue[qtail] = t
                qtail = (qtail + 1) % qcap
                qlen += 1
            next_arr = t + gen.exponential(1.0 / lam)
        else:  # departure from server imin
            n -= 1
            if t > warmup:
                sojourn_sum += t - started_at[imin]
                departures += 1
            if qlen > 0:
                started_at[imin] = queue[qhead]
                qhead = (qhead + 1) % qcap
                qlen -= 1
                next_comp[imin] = t + gen.exponential(1.0 / rates[imin])
            else:
                next_comp[imin] = np.inf
    lo = t if t > warmup else warmup
    if horizon > lo:
        area += n * (horizon - lo)
    return area / (horizon - warmup), sojourn_sum, departures


def _replication_stream(seed: int, rep: int) -> np.random.Generator:
    """Counter-based stream for replication ``rep`` of experiment ``seed``."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(rep,)))
    )


def simulate(config: SimConfig) -> SimResult:
    """Run all replications of ``config`` and pool their time averages.

    Deterministic for a fixed config (including seed): the merged result
    does not depend on thread scheduling because replication r always
    consumes stream (seed, r) and lands in slot r.
    """
    rates = np.asarray(config.params.rates, dtype=float)
    reps = config.replications
    per_rep = np.empty(reps)
    soj = np.empty(reps)
    thr = np.empty(reps)
    window = config.horizon - config.warmup

    def run(r: int) -> None:
        gen = _replication_stream(config.seed, r)
        avg, sojourn_sum, departures = _run_replication(
            config.params.lam, rates, config.horizon, config.warmup, gen
        )
        per_rep[r] = avg
        soj[r] = sojourn_sum / departures if departures > 0 else 0.0
        thr[r] = departures / window

    workers = min(max_workers(), reps)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(reps)))
    else:
        for r in range(reps):
            run(r)

    mean = float(per_rep.mean())
    se = float(per_rep.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return SimResult(
        mean_customers=mean,
        std_error=se,
        per_replication=per_rep,
        sojourn_means=soj,
        throughputs=thr,
    )


def fig1_sweep(
    base: SimConfig,
    h: tuple[float, ...] | None = None,
    epsilons: tuple[float, ...] | None = None,
    alpha: float | None = None,
) -> list[Fig1Row]:
    """Relative approximation errors over a heterogeneity sweep.

    For each eps the service rates are mu_bar + eps * h (mu_bar is the mean
    of the base config's rates).  ``rel_error`` compares the simulated mean
    against the homogeneous closed form at mu_bar, and
    ``improved_rel_error`` against the second-order-corrected value using
    ``alpha`` (estimated from the reduced chain when not supplied).  Sweep
    points use independent substreams keyed by (seed, point index,
    replication), so the table is independent of evaluation order.
    """
    if h is None:
        h = REFERENCE_H_VECTOR
    if epsilons is None:
        epsilons = tuple(np.round(np.arange(0.0, 1.0001, 0.05), 10))
    h = np.asarray(h, dtype=float)
    k = base.params.k
    if h.shape != (k,):
        raise ValueError(f"h must have length k = {k}")
    mu_bar = float(np.mean(base.params.rates))
    lam = base.params.lam
    for eps in epsilons:
        mats = mu_bar + eps * h
        if np.any(mats <= 0):
            raise ValueError(f"eps = {eps} drives a service rate nonpositive: {mats}")
        if lam >= mats.sum():
            raise ValueError(f"eps = {eps} destabilizes the queue")
    L_hom = homog_closed_form(lam, mu_bar, k)
    if alpha is None:
        alpha = alpha_via_reduced_system(lam, mu_bar, k).alpha

    def run_point(item: tuple[int, float]) -> Fig1Row:
        idx, eps = item
        rates = tuple(mu_bar + eps * h)
        params = MMkParams(lam=lam, rates=rates)
        per_rep = np.empty(base.replications)
        for r in range(base.replications):
            gen = np.random.Generator(
                np.random.Philox(
                    np.random.SeedSequence(entropy=base.seed, spawn_key=(idx, r))
                )
            )
            per_rep[r], _, _ = _run_replication(
                lam, np.asarray(rates), base.horizon, base.warmup, gen
            )
        mean = float(per_rep.mean())
        se = (
            float(per_rep.std(ddof=1) / np.sqrt(base.replications))
            if base.replications > 1
            else 0.0
        )
        improved = avgcore.improved_approx(L_hom, alpha, rates, mu_bar)
        return Fig1Row(
            epsilon=float(eps),
            rel_error=(mean - L_hom) / mean,
            improved_rel_error=(mean - improved) / mean,
            mean_customers=mean,
            std_error=se,
        )

    items = list(enumerate(epsilons))
    workers = min(max_workers(), len(items))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_point, items))
    else:
        rows = [run_point(it) for it in items]
    return rows
