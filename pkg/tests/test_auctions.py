import numpy as np
import pytest

from hetavg.auctions import (
    PERTURBATIONS,
    Perturbation,
    ValuationCDF,
    asymmetric_revenue,
    averaging_check,
    first_order_check,
    first_order_coefficient,
    mean_cdf,
    perturbed_cdf,
    power_cdf,
    solve_asymmetric,
    symmetric_bid,
    symmetric_revenue,
    uniform_cdf,
)
from hetavg.avgcore import fit_scaling

BUMP = PERTURBATIONS["bump"]
SKEW = PERTURBATIONS["skew"]


class TestFamilies:
    def test_uniform_validates(self):
        uniform_cdf().validate()

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0, 50.0])
    def test_power_validates(self, a):
        power_cdf(a).validate()

    def test_inconsistent_density_rejected(self):
        broken = ValuationCDF(
            cdf=lambda v: np.asarray(v, dtype=float),
            density=lambda v: 2.0 * np.ones_like(np.asarray(v, dtype=float)),
            tag="broken",
        )
        with pytest.raises(ValueError, match="density"):
            broken.validate()

    def test_perturbation_must_vanish_at_endpoints(self):
        with pytest.raises(ValueError, match="vanish"):
            Perturbation(h=lambda v: v, dh=lambda v: 1.0, label="linear")

    def test_perturbed_validity_guard(self):
        # max|H'| = 1 for the bump, so |eps| >= 1 breaks monotonicity
        with pytest.raises(ValueError, match="too strong"):
            perturbed_cdf(uniform_cdf(), BUMP, 1.2)
        perturbed_cdf(uniform_cdf(), BUMP, 0.4).validate()

    def test_mean_of_opposite_perturbations_is_base(self):
        F = uniform_cdf()
        pair = [perturbed_cdf(F, BUMP, 0.3), perturbed_cdf(F, BUMP.scaled(-1), 0.3)]
        mixed = mean_cdf(pair)
        vs = np.linspace(0.0, 1.0, 21)
        np.testing.assert_allclose(mixed.cdf(vs), vs, atol=1e-14)


class TestSymmetricClosedForms:
    def test_uniform_two_bidders_bid_half(self):
        for v in (0.2, 0.6, 1.0):
            assert symmetric_bid(uniform_cdf(), 2, v) == pytest.approx(v / 2, abs=1e-10)

    @pytest.mark.parametrize("k", [2, 3, 4, 6])
    @pytest.mark.parametrize("v", [0.25, 0.5, 1.0])
    def test_uniform_k_bidders_linear_bid(self, k, v):
        assert symmetric_bid(uniform_cdf(), k, v) == pytest.approx(
            (k - 1) * v / k, abs=1e-10
        )

    def test_bid_at_zero_valuation(self):
        for F in (uniform_cdf(), power_cdf(2.0)):
            assert symmetric_bid(F, 3, 0.0) == 0.0

    def test_power_two_exponent_bid(self):
        # F = v^2, k = 3: int F^2 = v^5/5 so b(v) = 4v/5
        for v in (0.3, 0.7, 1.0):
            assert symmetric_bid(power_cdf(2.0), 3, v) == pytest.approx(
                0.8 * v, abs=1e-10
            )

    def test_fewer_than_two_bidders_rejected(self):
        with pytest.raises(ValueError):
            symmetric_bid(uniform_cdf(), 1, 0.5)

    @pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
    def test_uniform_revenue(self, k):
        assert symmetric_revenue(uniform_cdf(), k).revenue == pytest.approx(
            (k - 1) / (k + 1), abs=1e-6
        )

    def test_power_two_revenue(self):
        # 1 + (k-1)/(2k+1) - k/(2k-1) at k = 3
        assert symmetric_revenue(power_cdf(2.0), 3).revenue == pytest.approx(
            1.0 + 2.0 / 7.0 - 3.0 / 5.0, abs=1e-10
        )

    def test_steep_family_revenue_stays_in_unit_interval(self):
        r = symmetric_revenue(power_cdf(50.0), 3).revenue
        assert 0.0 <= r <= 1.0
        assert r > 0.9  # valuations concentrate near 1


class TestAsymmetricSolver:
    def test_uniform_two_bidders(self):
        sol = solve_asymmetric([uniform_cdf()] * 2)
        assert sol.b_max == pytest.approx(0.5, abs=1e-8)
        np.testing.assert_allclose(sol.v, np.tile(2.0 * sol.grid, (2, 1)), atol=1e-4)

    def test_uniform_three_bidders(self):
        sol = solve_asymmetric([uniform_cdf()] * 3)
        assert sol.b_max == pytest.approx(2.0 / 3.0, abs=1e-8)
        np.testing.assert_allclose(sol.v, np.tile(1.5 * sol.grid, (3, 1)), atol=1e-4)

    def test_power_family_matches_symmetric_inverse(self):
        # symmetric oracle: b(v) = 4v/5, so v(b) = 1.25 b and b_max = 0.8
        sol = solve_asymmetric([power_cdf(2.0)] * 3)
        assert sol.b_max == pytest.approx(
            symmetric_bid(power_cdf(2.0), 3, 1.0), abs=1e-8
        )
        np.testing.assert_allclose(sol.v, np.tile(1.25 * sol.grid, (3, 1)), atol=1e-4)

    def test_perturbed_pair_is_strictly_asymmetric(self):
        F = uniform_cdf()
        cdfs = [
            perturbed_cdf(F, BUMP, 0.1),
            perturbed_cdf(F, BUMP.scaled(-1.0), 0.1),
        ]
        sol = solve_asymmetric(cdfs)
        sol.validate()
        assert np.all(np.abs(sol.v[:, -1] - 1.0) < 1e-9)
        interior = (sol.grid > 0.05 * sol.b_max) & (sol.grid < sol.b_max)
        assert np.all(sol.v[0, interior] != sol.v[1, interior])
        assert float(np.max(np.abs(sol.v[0] - sol.v[1]))) > 1e-3

    def test_equilibrium_sanity_invariants(self):
        sol = solve_asymmetric(
            [perturbed_cdf(uniform_cdf(), BUMP, 0.2), uniform_cdf()]
        )
        assert 0.0 < sol.b_max < 1.0
        assert np.all(sol.v[:, 1:] > sol.grid[1:][None, :])
        assert np.all(np.diff(sol.v, axis=1) >= -1e-9)

    def test_too_many_bidders_rejected(self):
        with pytest.raises(ValueError, match="limited"):
            solve_asymmetric([uniform_cdf()] * 6)


class TestAsymmetricRevenue:
    def test_uniform_pair_revenue(self):
        F = [uniform_cdf()] * 2
        sol = solve_asymmetric(F)
        assert asymmetric_revenue(sol, F).revenue == pytest.approx(
            1.0 / 3.0, abs=1e-5
        )

    @pytest.mark.parametrize(
        "family,k", [(uniform_cdf(), 2), (power_cdf(2.0), 3)]
    )
    def test_diagonal_matches_symmetric_closed_form(self, family, k):
        cdfs = [family] * k
        sol = solve_asymmetric(cdfs)
        r_num = asymmetric_revenue(sol, cdfs).revenue
        assert r_num == pytest.approx(
            symmetric_revenue(family, k).revenue, abs=1e-4
        )

    def test_degenerate_perturbation_reduces_to_base(self):
        F = uniform_cdf()
        cdfs = [perturbed_cdf(F, BUMP, 0.0), perturbed_cdf(F, SKEW, 0.0)]
        sol = solve_asymmetric(cdfs)
        assert asymmetric_revenue(sol, cdfs).revenue == pytest.approx(
            symmetric_revenue(F, 2).revenue, abs=1e-5
        )

    def test_permutation_invariance(self):
        F = uniform_cdf()
        a = perturbed_cdf(F, BUMP, 0.25)
        b = perturbed_cdf(F, SKEW.scaled(-1.0), 0.25)
        r_ab = asymmetric_revenue(solve_asymmetric([a, b]), [a, b]).revenue
        r_ba = asymmetric_revenue(solve_asymmetric([b, a]), [b, a]).revenue
        assert abs(r_ab - r_ba) <= 1e-6


class TestFirstOrder:
    def test_common_bump_coefficient(self):
        # -(k-1) int (1-v) * 2 v (1-v) dv = -2/12 = -1/6 for k = 2
        coeff = first_order_coefficient(uniform_cdf(), [BUMP, BUMP], 2)
        assert coeff == pytest.approx(-1.0 / 6.0, abs=1e-10)

    def test_mixed_fixture_coefficient(self):
        # H1 = v(1-v), H2 = -v^2(1-v): integrand (1-v) v (1-v)^2 -> -1/20
        coeff = first_order_coefficient(
            uniform_cdf(), [BUMP, SKEW.scaled(-1.0)], 2
        )
        assert coeff == pytest.approx(-1.0 / 20.0, abs=1e-10)

    def test_zero_sum_pair_has_vanishing_first_order_term(self):
        rows = first_order_check(
            uniform_cdf(),
            [BUMP, BUMP.scaled(-1.0)],
            2,
            (0.025, 0.05, 0.1, 0.2),
        )
        r0 = symmetric_revenue(uniform_cdf(), 2).revenue
        for row in rows:
            assert row.ok
            assert row.r_first_order == pytest.approx(r0, abs=1e-12)
        resid = [(r.epsilon, abs(r.r_numeric - r.r_first_order)) for r in rows]
        fit = fit_scaling(resid)
        assert fit.slope == pytest.approx(2.0, abs=0.1)

    def test_common_bump_residual_is_quadratic(self):
        rows = first_order_check(
            uniform_cdf(), [BUMP, BUMP], 2, (0.05, 0.1, 0.2, 0.4)
        )
        resid = [(r.epsilon, abs(r.r_numeric - r.r_first_order)) for r in rows]
        fit = fit_scaling(resid)
        assert fit.slope == pytest.approx(2.0, abs=0.1)

    def test_zero_eps_row_closes_the_loop(self):
        rows = first_order_check(uniform_cdf(), [BUMP, BUMP], 2, (0.0,))
        r0 = symmetric_revenue(uniform_cdf(), 2).revenue
        assert rows[0].ok
        assert rows[0].r_numeric == pytest.approx(r0, abs=1e-5)
        assert rows[0].r_first_order == pytest.approx(r0, abs=1e-12)

    def test_invalid_eps_flagged_not_dropped(self):
        rows = first_order_check(
            uniform_cdf(), [BUMP, BUMP], 2, (0.1, 1.5)
        )
        assert rows[0].ok
        assert not rows[1].ok
        assert rows[1].epsilon == 1.5
        assert rows[1].r_numeric is None
        assert "too strong" in rows[1].note


class TestAveraging:
    def test_identical_cdfs_have_no_gap(self):
        res = averaging_check([uniform_cdf()] * 2)
        assert abs(res.gap) <= 1e-5

    def test_gap_is_quadratic_in_scale(self):
        F = uniform_cdf()
        hs = [BUMP.scaled(0.5), BUMP.scaled(-0.5)]
        eps_grid = (0.05, 0.1, 0.2, 0.4)
        gaps = []
        for eps in eps_grid:
            res = averaging_check([perturbed_cdf(F, H, eps) for H in hs])
            gaps.append((eps, abs(res.gap)))
        fit = fit_scaling(gaps)
        assert fit.slope == pytest.approx(2.0, abs=0.1)

    def test_moderate_asymmetry_gap_below_one_percent(self):
        F = uniform_cdf()
        hs = [BUMP.scaled(0.5), BUMP.scaled(-0.5)]
        res = averaging_check([perturbed_cdf(F, H, 0.4) for H in hs])
        assert abs(res.gap) / res.r_homog_at_mean < 0.01
