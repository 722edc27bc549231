"""Acceptance suite: every headline number the package must reproduce.

Each criterion is a standalone function returning a CriterionResult with
the measured values, the tolerance it was held to, and pass/fail.  The
suite is exposed both through ``hetavg verify`` and through
tests/test_acceptance.py, which asserts every criterion passes.

Simulation-based criteria take a seed (and budget knobs) so that
seed-robustness can be exercised; their tolerances are sized for the
default budgets.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import auctions, avgcore, diffusion, queue_exact, queue_sim

__all__ = ["CriterionResult", "run_all", "CRITERIA", "DEFAULT_SEED", "format_report"]

DEFAULT_SEED = 1729

# Shared queue fixtures: the 8-server reference experiment and a 4-server
# analogue at comparable load.
K8_LAMBDA, K8_MU_BAR = 28.0, 5.0
K8_H = np.array(queue_sim.REFERENCE_H_VECTOR)
K4_LAMBDA, K4_MU_BAR = 14.0, 5.0
K4_H = np.array([1.0, 2.0, -0.5, -2.5])
SWEEP_EPS = (0.0125, 0.025, 0.05, 0.1)


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    detail: str
    measured: dict = field(default_factory=dict)
    runtime: float = 0.0


def _result(cid, name, passed, detail, measured, t0):
    return CriterionResult(
        cid=cid,
        name=name,
        passed=bool(passed),
        detail=detail,
        measured={k: float(v) for k, v in measured.items()},
        runtime=time.perf_counter() - t0,
    )


def criterion_1() -> CriterionResult:
    """Homogeneous M/M/8 expected customers equals 6.2314 +- 5e-4."""
    t0 = time.perf_counter()
    L = queue_exact.homog_closed_form(K8_LAMBDA, K8_MU_BAR, 8)
    ok = abs(L - 6.2314) <= 5e-4
    return _result(
        1,
        "homogeneous M/M/8 closed form",
        ok,
        f"L = {L:.6f}, expected 6.2314 +- 5e-4",
        {"L": L},
        t0,
    )


def criterion_2() -> CriterionResult:
    """Both alpha paths give 0.00837 +- 1e-4 and agree to 1e-5 relative."""
    t0 = time.perf_counter()
    a_num = queue_exact.alpha_via_reduced_system(K8_LAMBDA, K8_MU_BAR, 8).alpha
    a_pub = queue_exact.alpha_k8_published(K8_LAMBDA, K8_MU_BAR)
    ok_val = abs(a_num - 0.00837) <= 1e-4 and abs(a_pub - 0.00837) <= 1e-4
    worst_rel = 0.0
    for mu_bar in (2.0, 3.5, 5.0, 6.5, 8.0):
        for load in (0.5, 0.8):
            lam = load * 8.0 * mu_bar
            an = queue_exact.alpha_via_reduced_system(lam, mu_bar, 8).alpha
            ap = queue_exact.alpha_k8_published(lam, mu_bar)
            worst_rel = max(worst_rel, abs(an - ap) / abs(ap))
    ok = ok_val and worst_rel <= 1e-5
    detail = (
        f"finite-difference path alpha = {a_num:.6f}, published rational form "
        f"alpha = {a_pub:.6f} (target 0.00837 +- 1e-4); worst grid disagreement "
        f"{worst_rel:.2e} (tol 1e-5 relative)"
    )
    return _result(
        2,
        "alpha(k=8) from both paths",
        ok,
        detail,
        {"alpha_numeric": a_num, "alpha_published": a_pub, "worst_grid_rel": worst_rel},
        t0,
    )


def criterion_3() -> CriterionResult:
    """Quadratic-law coefficient alpha * sum(h^2) equals 0.594 +- 0.01."""
    t0 = time.perf_counter()
    alpha = queue_exact.alpha_k8_published(K8_LAMBDA, K8_MU_BAR)
    coeff = alpha * float(np.sum(K8_H**2))
    ok = abs(coeff - 0.594) <= 0.01
    return _result(
        3,
        "quadratic-law coefficient 0.594",
        ok,
        f"alpha * sum(h^2) = {coeff:.5f} (sum(h^2) = {np.sum(K8_H**2):.0f}), "
        "expected 0.594 +- 0.01",
        {"coefficient": coeff, "alpha": alpha},
        t0,
    )


def criterion_4() -> CriterionResult:
    """Exact CTMC agrees with both closed forms to 1e-10 relative."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst_mm2 = 0.0
    for _ in range(50):
        mu1, mu2 = rng.uniform(0.5, 4.0, 2)
        lam = rng.uniform(0.2, 0.95) * (mu1 + mu2)
        L_ctmc = queue_exact.solve_steady_state(
            queue_exact.MMkParams(lam=lam, rates=(mu1, mu2))
        ).expected_customers
        L_form = queue_exact.mm2_closed_form(lam, mu1, mu2)
        worst_mm2 = max(worst_mm2, abs(L_ctmc - L_form) / L_form)
    worst_hom = 0.0
    for k in range(2, 11):
        lam = 0.7 * k
        L_ctmc = queue_exact.solve_steady_state(
            queue_exact.MMkParams(lam=lam, rates=(1.0,) * k)
        ).expected_customers
        L_form = queue_exact.homog_closed_form(lam, 1.0, k)
        worst_hom = max(worst_hom, abs(L_ctmc - L_form) / L_form)
    ok = worst_mm2 <= 1e-10 and worst_hom <= 1e-10
    return _result(
        4,
        "CTMC vs closed forms",
        ok,
        f"two-server worst rel diff {worst_mm2:.2e} over 50 configs; homogeneous "
        f"worst rel diff {worst_hom:.2e} for k = 2..10 (tol 1e-10)",
        {"worst_mm2_rel": worst_mm2, "worst_homog_rel": worst_hom},
        t0,
    )


def _queue_sweep(lam, mu_bar, k, h, alpha):
    """Exact-path absolute errors and corrected residuals over SWEEP_EPS."""
    L_hom = queue_exact.homog_closed_form(lam, mu_bar, k)
    errors, residuals = [], []
    for eps in SWEEP_EPS:
        rates = tuple(mu_bar + eps * h)
        L = queue_exact.solve_steady_state(
            queue_exact.MMkParams(lam=lam, rates=rates)
        ).expected_customers
        errors.append(abs(L - L_hom))
        improved = avgcore.improved_approx(L_hom, alpha, rates, mu_bar)
        residuals.append(abs(L - improved))
    err_fit = avgcore.fit_scaling(list(zip(SWEEP_EPS, errors)))
    res_fit = avgcore.fit_scaling(list(zip(SWEEP_EPS, residuals)))
    return err_fit, res_fit


def criterion_5() -> CriterionResult:
    """Exact queue sweeps scale quadratically; corrected residual cubically."""
    t0 = time.perf_counter()
    alpha8 = queue_exact.alpha_k8_published(K8_LAMBDA, K8_MU_BAR)
    err8, res8 = _queue_sweep(K8_LAMBDA, K8_MU_BAR, 8, K8_H, alpha8)
    alpha4 = queue_exact.alpha_via_reduced_system(K4_LAMBDA, K4_MU_BAR, 4).alpha
    err4, res4 = _queue_sweep(K4_LAMBDA, K4_MU_BAR, 4, K4_H, alpha4)
    ok_slopes = (
        abs(err8.slope - 2.0) <= 0.05
        and abs(err4.slope - 2.0) <= 0.05
        and abs(res8.slope - 3.0) <= 0.15
        and abs(res4.slope - 3.0) <= 0.15
    )
    # qualitative: corrected residual stays below 0.2 * eps^3 * L up to eps = 1
    L_hom8 = queue_exact.homog_closed_form(K8_LAMBDA, K8_MU_BAR, 8)
    qualitative = True
    worst_ratio = 0.0
    for eps in (0.25, 0.5, 0.75, 1.0):
        rates = tuple(K8_MU_BAR + eps * K8_H)
        L = queue_exact.solve_steady_state(
            queue_exact.MMkParams(lam=K8_LAMBDA, rates=rates)
        ).expected_customers
        resid = abs(L - avgcore.improved_approx(L_hom8, alpha8, rates, K8_MU_BAR))
        bound = 0.2 * eps**3 * L
        worst_ratio = max(worst_ratio, resid / bound)
        qualitative = qualitative and resid <= bound
    ok = ok_slopes and qualitative
    detail = (
        f"error slopes k=8: {err8.slope:.4f}, k=4: {err4.slope:.4f} (2.00 +- 0.05); "
        f"residual slopes k=8: {res8.slope:.4f}, k=4: {res4.slope:.4f} (3.0 +- 0.15); "
        f"qualitative bound worst ratio {worst_ratio:.3f} (<= 1)"
    )
    return _result(
        5,
        "queue averaging slopes (exact path)",
        ok,
        detail,
        {
            "err_slope_k8": err8.slope,
            "err_slope_k4": err4.slope,
            "resid_slope_k8": res8.slope,
            "resid_slope_k4": res4.slope,
            "qualitative_worst_ratio": worst_ratio,
        },
        t0,
    )


def criterion_6(
    seed: int = DEFAULT_SEED, replications: int = 32, horizon: float = 2e5
) -> CriterionResult:
    """Simulated relative errors: ~2% at eps = 0.5, below 10% at eps = 1."""
    t0 = time.perf_counter()
    base = queue_sim.SimConfig(
        params=queue_exact.MMkParams(lam=K8_LAMBDA, rates=(K8_MU_BAR,) * 8),
        horizon=horizon,
        warmup=horizon / 20.0,
        replications=replications,
        seed=seed,
    )
    rows = queue_sim.fig1_sweep(
        base,
        epsilons=(0.5, 1.0),
        alpha=queue_exact.alpha_k8_published(K8_LAMBDA, K8_MU_BAR),
    )
    rel_half = rows[0].rel_error
    rel_one = rows[1].rel_error
    ok = abs(rel_half - 0.02) <= 0.01 and rel_one < 0.10
    detail = (
        f"relative error {rel_half * 100:.2f}% at eps = 0.5 (2% +- 1pp), "
        f"{rel_one * 100:.2f}% at eps = 1.0 (< 10%); "
        f"std errors {rows[0].std_error:.4f}, {rows[1].std_error:.4f}"
    )
    return _result(
        6,
        "simulated error magnitudes",
        ok,
        detail,
        {"rel_error_eps_0.5": rel_half, "rel_error_eps_1.0": rel_one},
        t0,
    )


def criterion_7() -> CriterionResult:
    """Uniform-bidder closed forms: revenue (k-1)/(k+1) and linear bids."""
    t0 = time.perf_counter()
    worst_rev = 0.0
    for k in range(2, 7):
        r = auctions.symmetric_revenue(auctions.uniform_cdf(), k).revenue
        worst_rev = max(worst_rev, abs(r - (k - 1) / (k + 1)))
    worst_bid = 0.0
    for k in (2, 3):
        sol = auctions.solve_asymmetric([auctions.uniform_cdf()] * k)
        # b(v) = (k-1) v / k along every computed trajectory
        for i in range(k):
            worst_bid = max(
                worst_bid,
                float(np.max(np.abs((k - 1) / k * sol.v[i] - sol.grid))),
            )
    ok = worst_rev <= 1e-6 and worst_bid <= 1e-4
    return _result(
        7,
        "auction symmetric closed forms",
        ok,
        f"worst revenue deviation {worst_rev:.2e} (tol 1e-6) for k = 2..6; "
        f"worst bid-function deviation {worst_bid:.2e} (tol 1e-4 sup norm) "
        "for k = 2, 3",
        {"worst_revenue_dev": worst_rev, "worst_bid_dev": worst_bid},
        t0,
    )


def criterion_8() -> CriterionResult:
    """Revenue derivative in eps matches the linear-term integral; quadratic residual."""
    t0 = time.perf_counter()
    F = auctions.uniform_cdf()
    bump = auctions.PERTURBATIONS["bump"]
    skew = auctions.PERTURBATIONS["skew"]
    fixtures = {
        "common": [bump, bump],
        "mixed": [bump, skew.scaled(-1.0)],
    }
    eps0 = 0.02
    worst_rel = 0.0
    for name, hs in fixtures.items():
        coeff = auctions.first_order_coefficient(F, hs, 2)
        r_plus = auctions.averaging_check(
            [auctions.perturbed_cdf(F, H, eps0) for H in hs]
        ).r_asym
        r_minus = auctions.averaging_check(
            [auctions.perturbed_cdf(F, H, -eps0) for H in hs]
        ).r_asym
        fd = (r_plus - r_minus) / (2.0 * eps0)
        worst_rel = max(worst_rel, abs(fd - coeff) / abs(coeff))
    rows = auctions.first_order_check(F, fixtures["common"], 2, (0.05, 0.1, 0.2, 0.4))
    resid = [
        (row.epsilon, abs(row.r_numeric - row.r_first_order))
        for row in rows
        if row.ok
    ]
    fit = avgcore.fit_scaling(resid)
    ok = worst_rel <= 1e-3 and abs(fit.slope - 2.0) <= 0.1 and len(resid) == len(rows)
    return _result(
        8,
        "auction first-order term",
        ok,
        f"worst derivative mismatch {worst_rel:.2e} (tol 1e-3 relative) over two "
        f"fixtures; residual slope {fit.slope:.4f} (2 +- 0.1)",
        {"worst_derivative_rel": worst_rel, "residual_slope": fit.slope},
        t0,
    )


def criterion_9() -> CriterionResult:
    """Revenue gap to the mean-CDF auction: quadratic, below 1% at eps = 0.4."""
    t0 = time.perf_counter()
    F = auctions.uniform_cdf()
    bump = auctions.PERTURBATIONS["bump"]
    hs = [bump.scaled(0.5), bump.scaled(-0.5)]
    eps_grid = (0.05, 0.1, 0.2, 0.4)
    gaps, rel_at_04 = [], 0.0
    for eps in eps_grid:
        res = auctions.averaging_check(
            [auctions.perturbed_cdf(F, H, eps) for H in hs]
        )
        gaps.append((eps, abs(res.gap)))
        if eps == 0.4:
            rel_at_04 = abs(res.gap) / res.r_homog_at_mean
    fit = avgcore.fit_scaling(gaps)
    ok = abs(fit.slope - 2.0) <= 0.1 and rel_at_04 < 0.01
    return _result(
        9,
        "auction averaging gap",
        ok,
        f"gap slope {fit.slope:.4f} (2 +- 0.1) over eps in [0.05, 0.4]; relative "
        f"gap {rel_at_04 * 100:.4f}% at eps = 0.4 (< 1%)",
        {"gap_slope": fit.slope, "rel_gap_at_0.4": rel_at_04},
        t0,
    )


def criterion_10() -> CriterionResult:
    """Single-deviant placement does not move the exact adoption curve."""
    t0 = time.perf_counter()
    times = np.linspace(0.0, 20.0, 9)
    devs = {}
    for net in (
        diffusion.circle_deg2(8),
        diffusion.torus_4nbr(3),
        diffusion.complete_graph(8),
    ):
        devs[net.tag] = diffusion.weak_interchangeability_check(
            net, p=0.1, q=0.4, p_tilde=0.17, q_tilde=0.25, times=times
        )
    worst = max(devs.values())
    ok = worst <= 1e-10
    detail = "; ".join(f"{tag}: {d:.2e}" for tag, d in devs.items()) + " (tol 1e-10)"
    return _result(
        10,
        "diffusion weak interchangeability",
        ok,
        detail,
        {tag: d for tag, d in devs.items()},
        t0,
    )


def criterion_11(seed: int = DEFAULT_SEED, replications: int = 2000) -> CriterionResult:
    """Adoption averaging is quadratic; simulation matches the exact curve."""
    t0 = time.perf_counter()
    net8 = diffusion.circle_deg2(8)
    hp = (1.0, 1.5, 2.0, 3.0, 3.5, -2.5, -4.0, -4.5)
    hq = (-1.0, 2.0, -2.0, 1.0, 3.0, -3.0, 0.5, -0.5)
    prof_p = avgcore.HeterogeneityProfile(base=0.1, direction=tuple(h * 0.1 / 4.5 for h in hp))
    prof_q = avgcore.HeterogeneityProfile(base=0.4, direction=tuple(h * 0.4 / 3.0 for h in hq))
    times = np.linspace(0.0, 30.0, 13)
    fit = diffusion.averaging_check(net8, prof_p, prof_q, times, SWEEP_EPS)
    slope_ok = abs(fit.slope - 2.0) <= 0.1

    net12 = diffusion.circle_deg4(12)
    rng = np.random.default_rng(11)
    p = tuple(0.08 * (1.0 + 0.4 * rng.uniform(-1, 1, 12)))
    q = tuple(0.5 * (1.0 + 0.4 * rng.uniform(-1, 1, 12)))
    agents = diffusion.AgentParams(p=p, q=q)
    tgrid = np.linspace(0.0, 12.0, 9)
    exact = diffusion.exact_curve(net12, agents, tgrid)
    sim = diffusion.simulate_curve(net12, agents, tgrid, replications, seed)
    diffs = np.abs(sim.expected - exact.expected)[1:]
    bounds = 3.0 * sim.std_errors[1:]
    sim_ok = bool(np.all(diffs <= np.maximum(bounds, 1e-9)))
    worst_z = float(np.max(diffs / np.maximum(sim.std_errors[1:], 1e-12)))
    ok = slope_ok and sim_ok
    return _result(
        11,
        "diffusion averaging + simulation",
        ok,
        f"exact-path gap slope {fit.slope:.4f} (2 +- 0.1); simulation vs exact "
        f"worst |z| = {worst_z:.2f} over the grid (must be <= 3)",
        {"gap_slope": fit.slope, "worst_sim_z": worst_z},
        t0,
    )


def criterion_12(seed: int = DEFAULT_SEED) -> CriterionResult:
    """Cross-cutting properties: symmetry, normalization, means, determinism."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)

    worst_perm, worst_norm = 0.0, 0.0
    for _ in range(20):
        k = int(rng.integers(3, 6))
        rates = rng.uniform(0.5, 3.0, k)
        lam = rng.uniform(0.3, 0.9) * rates.sum()
        params = queue_exact.MMkParams(lam=lam, rates=tuple(rates))
        summary = queue_exact.solve_steady_state(params)
        shuffled = queue_exact.MMkParams(
            lam=lam, rates=tuple(rng.permutation(rates))
        )
        L2 = queue_exact.solve_steady_state(shuffled).expected_customers
        worst_perm = max(
            worst_perm,
            abs(summary.expected_customers - L2) / summary.expected_customers,
        )
        worst_norm = max(worst_norm, abs(summary.total_probability() - 1.0))

    curve = diffusion.exact_curve(
        diffusion.circle_deg2(8),
        diffusion.AgentParams.homogeneous(8, 0.1, 0.4),
        np.linspace(0.0, 30.0, 7),
    )
    diff_drift = curve.conservation_drift

    means_ok = True
    for _ in range(50):
        mu = rng.uniform(0.1, 5.0, int(rng.integers(2, 8)))
        h = avgcore.mean(mu, "harmonic")
        g = avgcore.mean(mu, "geometric")
        a = avgcore.mean(mu, "arithmetic")
        means_ok = means_ok and h <= g + 1e-12 and g <= a + 1e-12

    h_dir = (1.0, -0.3, -0.7, 0.5, -0.5)
    pairs = []
    for eps in SWEEP_EPS:
        mu = 2.0 + eps * np.asarray(h_dir)
        pairs.append(
            (eps, abs(avgcore.mean(mu, "geometric") - avgcore.mean(mu, "arithmetic")))
        )
    mean_fit = avgcore.fit_scaling(pairs)
    mean_gap_ok = abs(mean_fit.slope - 2.0) <= 0.1

    config = queue_sim.SimConfig(
        params=queue_exact.MMkParams(lam=1.0, rates=(0.8, 1.2)),
        horizon=2000.0,
        warmup=100.0,
        replications=4,
        seed=seed,
    )
    r1 = queue_sim.simulate(config)
    r2 = queue_sim.simulate(config)
    determinism_ok = bool(
        np.array_equal(r1.per_replication, r2.per_replication)
        and r1.mean_customers == r2.mean_customers
    )

    ok = (
        worst_perm <= 1e-10
        and worst_norm <= 1e-12
        and diff_drift <= 1e-9
        and means_ok
        and mean_gap_ok
        and determinism_ok
    )
    detail = (
        f"queue permutation worst rel {worst_perm:.2e} (tol 1e-10); queue "
        f"normalization worst |1 - total| {worst_norm:.2e} (tol 1e-12); diffusion "
        f"probability drift {diff_drift:.2e} (tol 1e-9); mean ordering "
        f"{'ok' if means_ok else 'VIOLATED'}; |geom - arith| slope "
        f"{mean_fit.slope:.4f} (2 +- 0.1); determinism "
        f"{'bit-identical' if determinism_ok else 'MISMATCH'}"
    )
    return _result(
        12,
        "property suites",
        ok,
        detail,
        {
            "worst_perm_rel": worst_perm,
            "worst_norm_dev": worst_norm,
            "diffusion_drift": diff_drift,
            "mean_gap_slope": mean_fit.slope,
        },
        t0,
    )


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
}

_SEEDED = {6, 11, 12}


def run_all(seed: int = DEFAULT_SEED, only: list[int] | None = None) -> list[CriterionResult]:
    """Run the acceptance criteria (all by default), collecting failures."""
    ids = sorted(only) if only else sorted(CRITERIA)
    results = []
    for cid in ids:
        func = CRITERIA[cid]
        results.append(func(seed=seed) if cid in _SEEDED else func())
    return results


def format_report(results: list[CriterionResult]) -> str:
    lines = []
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        lines.append(
            f"[{status}] criterion {res.cid:2d} ({res.name}, {res.runtime:.1f}s): "
            f"{res.detail}"
        )
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return "\n".join(lines)
