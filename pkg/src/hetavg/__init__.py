"""hetavg: how far heterogeneous models sit from their homogeneous averages.

Subpackages by model family:

- ``avgcore``: means, heterogeneity levels, second-order error coefficients
  from probe functions, corrected approximations, power-law error fits.
- ``queue_exact``: exact steady state of M/M/k queues with heterogeneous
  servers (full subset chain, closed forms, reduced single-deviant chain,
  published k = 8 coefficient formula).
- ``queue_sim``: event-driven Monte Carlo of the same queue with
  reproducible counter-based replication streams.
- ``auctions``: first-price sealed-bid closed forms and the asymmetric
  equilibrium boundary-value solver, with revenue comparisons.
- ``diffusion``: adoption dynamics on translation-invariant networks, exact
  (master equation) and simulated.
- ``acceptance``: the numbered acceptance criteria run by ``hetavg verify``.
"""

__version__ = "0.1.0"

from .avgcore import (
    AlphaEstimate,
    HeterogeneityProfile,
    OutcomeProbe,
    ScalingFit,
    alpha_from_probes,
    fit_scaling,
    heterogeneity_level,
    improved_approx,
    mean,
)
from .queue_exact import (
    MMkParams,
    SteadyStateSummary,
    alpha_k8_published,
    alpha_via_reduced_system,
    homog_closed_form,
    mm2_closed_form,
    single_coordinate_L,
    solve_steady_state,
)
from .queue_sim import SimConfig, SimResult, fig1_sweep, simulate

__all__ = [
    "__version__",
    "AlphaEstimate",
    "HeterogeneityProfile",
    "OutcomeProbe",
    "ScalingFit",
    "alpha_from_probes",
    "fit_scaling",
    "heterogeneity_level",
    "improved_approx",
    "mean",
    "MMkParams",
    "SteadyStateSummary",
    "alpha_k8_published",
    "alpha_via_reduced_system",
    "homog_closed_form",
    "mm2_closed_form",
    "single_coordinate_L",
    "solve_steady_state",
    "SimConfig",
    "SimResult",
    "fig1_sweep",
    "simulate",
]
