import numpy as np
import pytest

from hetavg.avgcore import HeterogeneityProfile, fit_scaling
from hetavg.diffusion import (
    AgentParams,
    NetworkTopology,
    averaging_check,
    averaging_gaps,
    circle_deg2,
    circle_deg4,
    complete_graph,
    exact_curve,
    simulate_curve,
    torus_4nbr,
    weak_interchangeability_check,
)

TIMES = np.linspace(0.0, 30.0, 13)


class TestTopologies:
    def test_generators_are_regular_and_symmetric(self):
        for net in (
            complete_graph(6),
            circle_deg2(8),
            circle_deg4(9),
            torus_4nbr(3),
        ):
            # NetworkTopology.__post_init__ already enforces regularity,
            # symmetry, and absence of self-loops; spot-check degree values
            assert net.degree == {
                "complete(6)": 5,
                "circle_deg2(8)": 2,
                "circle_deg4(9)": 4,
                "torus(3x3)": 4,
            }[net.tag]

    def test_torus_size_is_square(self):
        assert torus_4nbr(4).size == 16

    def test_small_networks_rejected(self):
        with pytest.raises(ValueError):
            circle_deg4(4)
        with pytest.raises(ValueError):
            torus_4nbr(2)

    def test_irregular_adjacency_rejected(self):
        with pytest.raises(ValueError, match="regular"):
            NetworkTopology(size=3, neighbors=((1,), (0, 2), (1,)), tag="path")


class TestAgentParams:
    def test_nonpositive_p_rejected(self):
        with pytest.raises(ValueError):
            AgentParams(p=(0.1, 0.0), q=(0.1, 0.1))

    def test_negative_q_rejected(self):
        with pytest.raises(ValueError):
            AgentParams(p=(0.1, 0.1), q=(0.1, -0.2))

    def test_zero_q_allowed(self):
        AgentParams(p=(0.1, 0.1), q=(0.0, 0.0))


class TestExactCurve:
    def test_single_agent_analytic(self):
        net = complete_graph(1)
        curve = exact_curve(net, AgentParams(p=(0.3,), q=(0.5,)),
                            np.array([0.0, 0.5, 1.0, 2.0]))
        expected = 1.0 - np.exp(-0.3 * curve.times)
        np.testing.assert_allclose(curve.expected, expected, atol=1e-9)

    def test_two_agent_complete_homogeneous_closed_form(self):
        # hand-solved 4-state chain: P_empty = e^(-2pt),
        # P_one = 2p (e^(-(p+q)t) - e^(-2pt)) / (p - q) for p != q,
        # E[N] = 2 - 2 P_empty - P_one
        p, q = 0.3, 0.7
        net = complete_graph(2)
        t = np.array([0.0, 0.4, 1.0, 2.5, 5.0])
        curve = exact_curve(net, AgentParams.homogeneous(2, p, q), t)
        p_empty = np.exp(-2 * p * t)
        p_one = 2 * p * (np.exp(-(p + q) * t) - np.exp(-2 * p * t)) / (p - q)
        expected = 2.0 - 2.0 * p_empty - p_one
        np.testing.assert_allclose(curve.expected, expected, atol=1e-9)

    def test_rotation_invariance_on_circle(self):
        # translation invariance: rotating a heterogeneous assignment around
        # the circle leaves the expected curve unchanged
        net = circle_deg2(8)
        rng = np.random.default_rng(1)
        p = 0.1 * (1.0 + 0.5 * rng.uniform(-1, 1, 8))
        q = 0.4 * (1.0 + 0.5 * rng.uniform(-1, 1, 8))
        base = exact_curve(net, AgentParams(p=tuple(p), q=tuple(q)), TIMES)
        for shift in (1, 3, 5):
            rolled = exact_curve(
                net,
                AgentParams(p=tuple(np.roll(p, shift)), q=tuple(np.roll(q, shift))),
                TIMES,
            )
            np.testing.assert_allclose(
                rolled.expected, base.expected, atol=1e-12
            )

    def test_curve_monotone_and_conserving(self):
        net = circle_deg4(10)
        curve = exact_curve(net, AgentParams.homogeneous(10, 0.1, 0.4), TIMES)
        assert np.all(np.diff(curve.expected) >= -1e-12)
        assert curve.conservation_drift <= 1e-9
        assert curve.expected[0] == pytest.approx(0.0, abs=1e-12)

    def test_absorption_to_full_adoption(self):
        net = circle_deg2(8)
        horizon = 50.0 / 0.1
        curve = exact_curve(
            net, AgentParams.homogeneous(8, 0.1, 0.4), np.array([0.0, horizon])
        )
        assert curve.expected[-1] == pytest.approx(8.0, abs=1e-3 * 8)

    def test_population_guard(self):
        net = circle_deg2(17)
        with pytest.raises(ValueError, match="exceeds"):
            exact_curve(net, AgentParams.homogeneous(17, 0.1, 0.4), TIMES)

    def test_grid_must_start_at_zero(self):
        net = complete_graph(2)
        with pytest.raises(ValueError):
            exact_curve(net, AgentParams.homogeneous(2, 0.1, 0.4),
                        np.array([1.0, 2.0]))


class TestSimulateCurve:
    def test_single_agent_within_three_standard_errors(self):
        net = complete_graph(1)
        t = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
        curve = simulate_curve(net, AgentParams(p=(0.4,), q=(0.3,)), t,
                               replications=3000, seed=2)
        expected = 1.0 - np.exp(-0.4 * t)
        for j in range(1, t.size):
            assert abs(curve.expected[j] - expected[j]) <= max(
                3.0 * curve.std_errors[j], 1e-9
            )

    def test_heterogeneous_against_master_equation(self):
        net = circle_deg4(12)
        rng = np.random.default_rng(3)
        p = tuple(0.08 * (1.0 + 0.4 * rng.uniform(-1, 1, 12)))
        q = tuple(0.5 * (1.0 + 0.4 * rng.uniform(-1, 1, 12)))
        agents = AgentParams(p=p, q=q)
        t = np.linspace(0.0, 12.0, 9)
        exact = exact_curve(net, agents, t)
        sim = simulate_curve(net, agents, t, replications=1500, seed=7)
        for j in range(1, t.size):
            assert abs(sim.expected[j] - exact.expected[j]) <= max(
                3.0 * sim.std_errors[j], 1e-9
            )

    def test_no_word_of_mouth_decouples_agents(self):
        net = circle_deg2(10)
        rng = np.random.default_rng(5)
        p = tuple(rng.uniform(0.05, 0.3, 10))
        agents = AgentParams(p=p, q=(0.0,) * 10)
        t = np.linspace(0.0, 10.0, 6)
        sim = simulate_curve(net, agents, t, replications=2000, seed=11)
        expected = np.sum(1.0 - np.exp(-np.outer(t, p)), axis=1)
        for j in range(1, t.size):
            assert abs(sim.expected[j] - expected[j]) <= max(
                3.0 * sim.std_errors[j], 1e-9
            )

    def test_deterministic_per_seed(self):
        net = complete_graph(4)
        agents = AgentParams.homogeneous(4, 0.2, 0.3)
        t = np.linspace(0.0, 5.0, 4)
        a = simulate_curve(net, agents, t, replications=50, seed=123)
        b = simulate_curve(net, agents, t, replications=50, seed=123)
        np.testing.assert_array_equal(a.expected, b.expected)


class TestWeakInterchangeability:
    @pytest.mark.parametrize(
        "net",
        [circle_deg2(8), torus_4nbr(3), complete_graph(8)],
        ids=["circle_deg2", "torus3x3", "complete8"],
    )
    def test_single_deviant_placement_is_immaterial(self, net):
        dev = weak_interchangeability_check(
            net, p=0.1, q=0.4, p_tilde=0.17, q_tilde=0.25,
            times=np.linspace(0.0, 20.0, 9),
        )
        assert dev <= 1e-10


class TestAveraging:
    def setup_method(self):
        self.net = circle_deg2(8)
        hp = np.array([1, 1.5, 2, 3, 3.5, -2.5, -4, -4.5])
        hq = np.array([-1, 2, -2, 1, 3, -3, 0.5, -0.5])
        self.prof_p = HeterogeneityProfile(
            base=0.1, direction=tuple(0.1 * hp / np.abs(hp).max())
        )
        self.prof_q = HeterogeneityProfile(
            base=0.4, direction=tuple(0.4 * hq / np.abs(hq).max())
        )

    def test_gap_scales_quadratically(self):
        fit = averaging_check(
            self.net, self.prof_p, self.prof_q, TIMES, (0.0125, 0.025, 0.05, 0.1)
        )
        assert fit.slope == pytest.approx(2.0, abs=0.1)

    def test_zero_scale_has_zero_gap(self):
        gaps = averaging_gaps(self.net, self.prof_p, self.prof_q, TIMES, (0.0,))
        assert gaps[0] <= 1e-10

    def test_twenty_percent_heterogeneity_nearly_indistinguishable(self):
        # +-20% parameter spread moves the curve by under 2% of its range
        gaps = averaging_gaps(self.net, self.prof_p, self.prof_q, TIMES, (0.2,))
        homog = exact_curve(
            self.net, AgentParams.homogeneous(8, 0.1, 0.4), TIMES
        ).expected
        assert gaps[0] / homog.max() < 0.02

    def test_nonzero_sum_direction_rejected(self):
        bad = HeterogeneityProfile(base=0.1, direction=(0.1,) * 8)
        with pytest.raises(ValueError, match="sum to zero"):
            averaging_gaps(self.net, bad, self.prof_q, TIMES, (0.05,))

    def test_nonpositive_rate_rejected_with_offending_scale(self):
        steep = HeterogeneityProfile(
            base=0.1, direction=(0.2, -0.2) + (0.0,) * 6
        )
        with pytest.raises(ValueError, match="eps = 1.0"):
            averaging_gaps(self.net, steep, self.prof_q, TIMES, (1.0,))
