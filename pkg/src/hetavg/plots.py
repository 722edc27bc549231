"""Figure rendering for CLI reports (written next to the CSV output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_error_sweep",
    "save_loglog_fit",
    "save_adoption_curves",
    "save_inverse_bids",
]

_RC = {
    "figure.figsize": (5.5, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def save_error_sweep(path, eps, rel_err, improved_rel_err=None,
                     coeff2=None, coeff3=None):
    """Relative approximation error vs heterogeneity scale.

    Optionally overlays the quadratic law coeff2 * eps^2 for the plain
    approximation and the cubic law coeff3 * eps^3 for the corrected one.
    """
    eps = np.asarray(eps)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(eps, rel_err, "o", ms=4, label="homogeneous approx")
        if improved_rel_err is not None:
            ax.plot(eps, improved_rel_err, "x", ms=5, label="with quadratic correction")
        dense = np.linspace(eps.min(), eps.max(), 200)
        if coeff2 is not None:
            ax.plot(dense, coeff2 * dense**2, "-", lw=1, label=f"{coeff2:.3g}" + r"$\epsilon^2$")
        if coeff3 is not None:
            ax.plot(dense, coeff3 * dense**3, ":", lw=1.2, label=f"{coeff3:.3g}" + r"$\epsilon^3$")
        ax.set_xlabel(r"heterogeneity scale $\epsilon$")
        ax.set_ylabel("relative error")
        ax.legend()
        fig.savefig(path)
        plt.close(fig)


def save_loglog_fit(path, eps, err, fit=None, label="error"):
    """Error-vs-scale sweep on log axes with the fitted power law."""
    eps = np.asarray(eps)
    err = np.asarray(err)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.loglog(eps, err, "o", ms=4, label=label)
        if fit is not None:
            dense = np.geomspace(eps.min(), eps.max(), 100)
            ax.loglog(dense, fit.coefficient * dense**fit.slope, "-", lw=1,
                      label=f"slope {fit.slope:.3f}")
        ax.set_xlabel(r"$\epsilon$")
        ax.set_ylabel(label)
        ax.legend()
        fig.savefig(path)
        plt.close(fig)


def save_adoption_curves(path, curves, labels):
    """Expected-adopters curves on a common time grid."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for curve, label in zip(curves, labels):
            ax.plot(curve.times, curve.expected, label=label)
            if curve.std_errors is not None:
                ax.fill_between(
                    curve.times,
                    curve.expected - 3 * curve.std_errors,
                    curve.expected + 3 * curve.std_errors,
                    alpha=0.2,
                )
        ax.set_xlabel("time")
        ax.set_ylabel("expected adopters")
        ax.legend()
        fig.savefig(path)
        plt.close(fig)


def save_inverse_bids(path, solution, labels=None):
    """Inverse bid functions v_i(b) with the diagonal for reference."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for i in range(solution.k):
            lab = labels[i] if labels else f"bidder {i + 1}"
            ax.plot(solution.grid, solution.v[i], label=lab)
        ax.plot([0, solution.b_max], [0, solution.b_max], "k--", lw=0.8, label="v = b")
        ax.set_xlabel("bid b")
        ax.set_ylabel("valuation v(b)")
        ax.legend()
        fig.savefig(path)
        plt.close(fig)
