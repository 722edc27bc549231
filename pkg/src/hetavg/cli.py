"""Command-line experiment runner.

Each subcommand configures one experiment, runs it, and persists a CSV
table (UTF-8, header row, '.' decimal separator, one row per sweep point)
plus a JSON sidecar with the echoed configuration, tool version, wall
clock, and headline numbers.  Output files are written atomically: an
invalid configuration or a failed run leaves nothing behind.  ``--plot``
additionally renders a figure next to the CSV.  Sweep-point workers are
capped by the HETAVG_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, acceptance, auctions, avgcore, diffusion, plots
from . import queue_exact, queue_sim

__all__ = ["main"]


# ----------------------------------------------------------------- parsing

def _floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}")


def _time_grid(text: str) -> np.ndarray:
    """Accept 'start:stop:count' or a comma-separated list (must start at 0)."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("time grid must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        return np.linspace(start, stop, count)
    return np.asarray(_floats(text))


def _perturbation(text: str) -> auctions.Perturbation:
    """Parse 'bump', '-skew', or '0.7*bump' against the named catalog."""
    scale = 1.0
    name = text.strip()
    if "*" in name:
        factor, name = name.split("*", 1)
        scale = float(factor)
    if name.startswith("-"):
        scale, name = -scale, name[1:]
    if name not in auctions.PERTURBATIONS:
        raise argparse.ArgumentTypeError(
            f"unknown perturbation {name!r}; choices: {sorted(auctions.PERTURBATIONS)}"
        )
    base = auctions.PERTURBATIONS[name]
    return base if scale == 1.0 else base.scaled(scale)


def _family(text: str) -> auctions.ValuationCDF:
    if text == "uniform":
        return auctions.uniform_cdf()
    if text.startswith("power:"):
        return auctions.power_cdf(float(text.split(":", 1)[1]))
    raise argparse.ArgumentTypeError(
        f"unknown family {text!r}; use 'uniform' or 'power:<a>'"
    )


def _network(text: str) -> diffusion.NetworkTopology:
    kind, _, arg = text.partition(":")
    builders = {
        "complete": diffusion.complete_graph,
        "circle2": diffusion.circle_deg2,
        "circle4": diffusion.circle_deg4,
        "torus": diffusion.torus_4nbr,
    }
    if kind not in builders:
        raise argparse.ArgumentTypeError(
            f"unknown network {kind!r}; choices: {sorted(builders)}"
        )
    if not arg:
        raise argparse.ArgumentTypeError("network needs a size, e.g. circle2:8")
    return builders[kind](int(arg))


# ------------------------------------------------------------------ output

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_outputs(args, header, rows, headline, started):
    """Persist CSV + JSON sidecar atomically; return their paths."""
    csv_path = args.output
    base, _ = os.path.splitext(csv_path)
    json_path = base + ".json"
    config_echo = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func", "config", "experiment") and not k.startswith("_")
    }
    for key, val in config_echo.items():
        if isinstance(val, np.ndarray):
            config_echo[key] = [float(x) for x in val]
        elif isinstance(val, auctions.Perturbation):
            config_echo[key] = val.label
        elif isinstance(val, list) and val and isinstance(val[0], auctions.Perturbation):
            config_echo[key] = [p.label for p in val]
        elif isinstance(val, auctions.ValuationCDF):
            config_echo[key] = val.tag
        elif isinstance(val, diffusion.NetworkTopology):
            config_echo[key] = val.tag
    payload = {
        "experiment": args.experiment,
        "config": config_echo,
        "version": __version__,
        "wall_clock_s": round(time.perf_counter() - started, 3),
        "headline": headline,
    }
    csv_text = ",".join(header) + "\n"
    for row in rows:
        csv_text += ",".join(_fmt(x) for x in row) + "\n"
    for path, text in (
        (csv_path, csv_text),
        (json_path, json.dumps(payload, indent=2, sort_keys=True) + "\n"),
    ):
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    return csv_path, json_path


def _plot_path(args) -> str:
    return os.path.splitext(args.output)[0] + ".png"


# ------------------------------------------------------------- experiments

def _run_queue_exact(args, started):
    if args.rates is not None:
        rates = tuple(args.rates)
    elif args.k is not None and args.mu_bar is not None:
        rates = (args.mu_bar,) * args.k
    else:
        raise ValueError("give either --rates or both --k and --mu-bar")
    params = queue_exact.MMkParams(lam=args.lam, rates=rates)
    summary = queue_exact.solve_steady_state(params)
    rows = []
    n, cum = 0, 0.0
    while cum < 1.0 - 1e-12 and n < params.k + 200:
        p_n = summary.prob_n(n)
        rows.append((n, p_n))
        cum += p_n
        n += 1
    headline = {
        "expected_customers": summary.expected_customers,
        "rho": summary.tail_ratio,
        "p_full_seed": summary.p_full_seed,
        "total_probability": summary.total_probability(),
    }
    paths = _write_outputs(args, ["n", "probability"], rows, headline, started)
    return headline, paths


def _run_queue_sim(args, started):
    if args.fig1:
        base = queue_sim.SimConfig(
            params=queue_exact.MMkParams(lam=args.lam, rates=(args.mu_bar,) * args.k),
            horizon=args.horizon,
            warmup=args.warmup,
            replications=args.replications,
            seed=args.seed,
        )
        eps = tuple(args.eps) if args.eps else None
        rows_data = queue_sim.fig1_sweep(base, epsilons=eps)
        rows = [(r.epsilon, r.rel_error, r.improved_rel_error) for r in rows_data]
        headline = {
            "L_homog": queue_exact.homog_closed_form(args.lam, args.mu_bar, args.k),
            "max_rel_error": max(r.rel_error for r in rows_data),
        }
        paths = _write_outputs(
            args, ["epsilon", "rel_error", "improved_rel_error"], rows, headline, started
        )
        if args.plot:
            alpha = queue_exact.alpha_via_reduced_system(args.lam, args.mu_bar, args.k).alpha
            ssq = float(np.sum(np.asarray(queue_sim.REFERENCE_H_VECTOR) ** 2))
            plots.save_error_sweep(
                _plot_path(args),
                [r.epsilon for r in rows_data],
                [r.rel_error for r in rows_data],
                improved_rel_err=[r.improved_rel_error for r in rows_data],
                coeff2=alpha * ssq / headline["L_homog"],
            )
        return headline, paths

    if args.rates is None:
        raise ValueError("give --rates (or use --fig1)")
    config = queue_sim.SimConfig(
        params=queue_exact.MMkParams(lam=args.lam, rates=tuple(args.rates)),
        horizon=args.horizon,
        warmup=args.warmup,
        replications=args.replications,
        seed=args.seed,
    )
    result = queue_sim.simulate(config)
    rows = [
        (r, result.per_replication[r], result.sojourn_means[r], result.throughputs[r])
        for r in range(config.replications)
    ]
    headline = {
        "mean_customers": result.mean_customers,
        "std_error": result.std_error,
    }
    paths = _write_outputs(
        args,
        ["replication", "time_avg_customers", "mean_sojourn", "throughput"],
        rows,
        headline,
        started,
    )
    return headline, paths


def _run_queue_alpha(args, started):
    est = queue_exact.alpha_via_reduced_system(args.lam, args.mu_bar, args.k, args.step)
    published = (
        queue_exact.alpha_k8_published(args.lam, args.mu_bar) if args.k == 8 else None
    )
    headline = {
        "alpha_numeric": est.alpha,
        "alpha_published": published,
        "richardson_residual": est.richardson_residual,
        "step": est.step,
    }
    rows = [
        (
            args.k,
            args.lam,
            args.mu_bar,
            est.alpha,
            est.richardson_residual,
            published if published is not None else float("nan"),
        )
    ]
    header = ["k", "lambda", "mu_bar", "alpha_numeric", "richardson_residual",
              "alpha_published"]
    paths = _write_outputs(args, header, rows, headline, started)
    return headline, paths


def _run_auction(args, started):
    F = args.family
    if args.check == "revenue":
        r_sym = auctions.symmetric_revenue(F, args.k).revenue
        sol = auctions.solve_asymmetric([F] * args.k, grid_size=args.grid_size)
        r_asym = auctions.asymmetric_revenue(sol, [F] * args.k).revenue
        rows = [(args.k, r_sym, r_asym, abs(r_sym - r_asym))]
        headline = {"r_symmetric": r_sym, "r_asymmetric": r_asym}
        paths = _write_outputs(
            args, ["k", "r_symmetric", "r_asymmetric", "abs_gap"], rows, headline, started
        )
        if args.plot:
            plots.save_inverse_bids(_plot_path(args), sol)
        return headline, paths

    if not args.perturbations or len(args.perturbations) != args.k:
        raise ValueError("--perturbations must list exactly k entries")
    epsilons = args.eps or [0.05, 0.1, 0.2, 0.4]

    if args.check == "first-order":
        rows_data = auctions.first_order_check(
            F, args.perturbations, args.k, epsilons, grid_size=args.grid_size
        )
        rows = [
            (
                r.epsilon,
                r.r_numeric if r.r_numeric is not None else float("nan"),
                r.r_first_order,
                abs(r.r_numeric - r.r_first_order) if r.ok else float("nan"),
                r.ok,
            )
            for r in rows_data
        ]
        valid = [(r.epsilon, abs(r.r_numeric - r.r_first_order))
                 for r in rows_data if r.ok and r.epsilon > 0]
        headline = {
            "first_order_coefficient": auctions.first_order_coefficient(
                F, args.perturbations, args.k
            ),
            "residual_slope": avgcore.fit_scaling(valid).slope if len(valid) >= 4 else None,
            "flagged_rows": sum(1 for r in rows_data if not r.ok),
        }
        paths = _write_outputs(
            args,
            ["epsilon", "r_numeric", "r_first_order", "residual", "ok"],
            rows,
            headline,
            started,
        )
        if args.plot and len(valid) >= 2:
            fit = avgcore.fit_scaling(valid) if len(valid) >= 4 else None
            plots.save_loglog_fit(
                _plot_path(args), [v[0] for v in valid], [v[1] for v in valid],
                fit, label="first-order residual",
            )
        return headline, paths

    if args.check == "averaging":
        rows = []
        gaps = []
        for eps in epsilons:
            cdfs = [auctions.perturbed_cdf(F, H, eps) for H in args.perturbations]
            res = auctions.averaging_check(cdfs, grid_size=args.grid_size)
            rows.append((eps, res.r_asym, res.r_homog_at_mean, res.gap))
            gaps.append((eps, abs(res.gap)))
        fit = avgcore.fit_scaling(gaps) if len(gaps) >= 4 else None
        headline = {
            "gap_slope": fit.slope if fit else None,
            "max_rel_gap": max(abs(g) / r for _, _, r, g in rows),
        }
        paths = _write_outputs(
            args, ["epsilon", "r_asym", "r_homog_mean", "gap"], rows, headline, started
        )
        if args.plot:
            plots.save_loglog_fit(
                _plot_path(args), [g[0] for g in gaps], [g[1] for g in gaps],
                fit, label="revenue gap",
            )
        return headline, paths

    raise ValueError(f"unknown auction check {args.check!r}")


def _run_diffusion(args, started):
    net = args.network
    times = args.times

    if args.check == "exact":
        agents = _diffusion_agents(args, net)
        curve = diffusion.exact_curve(net, agents, times)
        rows = list(zip(curve.times, curve.expected))
        headline = {
            "final_expected": float(curve.expected[-1]),
            "conservation_drift": curve.conservation_drift,
        }
        paths = _write_outputs(args, ["time", "expected_adopters"], rows, headline, started)
        if args.plot:
            plots.save_adoption_curves(_plot_path(args), [curve], [net.tag])
        return headline, paths

    if args.check == "compare":
        agents = _diffusion_agents(args, net)
        exact = diffusion.exact_curve(net, agents, times)
        sim = diffusion.simulate_curve(net, agents, times, args.replications, args.seed)
        rows = [
            (t, e, s, se, abs(s - e) / se if se > 0 else 0.0)
            for t, e, s, se in zip(
                exact.times, exact.expected, sim.expected, sim.std_errors
            )
        ]
        worst_z = max(row[4] for row in rows)
        headline = {"worst_z": worst_z, "replications": args.replications}
        paths = _write_outputs(
            args, ["time", "exact", "simulated", "std_error", "z"], rows, headline, started
        )
        if args.plot:
            plots.save_adoption_curves(_plot_path(args), [exact, sim], ["exact", "simulated"])
        return headline, paths

    if args.check == "weak":
        if None in (args.p_bar, args.q_bar, args.p_tilde, args.q_tilde):
            raise ValueError("weak check needs --p-bar, --q-bar, --p-tilde, --q-tilde")
        dev = diffusion.weak_interchangeability_check(
            net, args.p_bar, args.q_bar, args.p_tilde, args.q_tilde, times
        )
        headline = {"max_deviation": dev}
        paths = _write_outputs(args, ["max_deviation"], [(dev,)], headline, started)
        return headline, paths

    if args.check == "averaging":
        if args.hp is None or args.hq is None:
            raise ValueError("averaging check needs --hp and --hq direction vectors")
        prof_p = avgcore.HeterogeneityProfile(base=args.p_bar, direction=tuple(args.hp))
        prof_q = avgcore.HeterogeneityProfile(base=args.q_bar, direction=tuple(args.hq))
        epsilons = args.eps or [0.0125, 0.025, 0.05, 0.1]
        gaps = diffusion.averaging_gaps(net, prof_p, prof_q, times, epsilons)
        fit = avgcore.fit_scaling(list(zip(epsilons, gaps)))
        rows = list(zip(epsilons, gaps))
        headline = {"gap_slope": fit.slope, "r_squared": fit.r_squared}
        paths = _write_outputs(args, ["epsilon", "max_gap"], rows, headline, started)
        if args.plot:
            plots.save_loglog_fit(_plot_path(args), epsilons, gaps, fit, label="curve gap")
        return headline, paths

    raise ValueError(f"unknown diffusion check {args.check!r}")


def _diffusion_agents(args, net) -> diffusion.AgentParams:
    if args.p is not None and args.q is not None:
        return diffusion.AgentParams(p=tuple(args.p), q=tuple(args.q))
    if args.p_bar is not None and args.q_bar is not None:
        return diffusion.AgentParams.homogeneous(net.size, args.p_bar, args.q_bar)
    raise ValueError("give --p/--q vectors or --p-bar/--q-bar")


def _run_averaging_sweep(args, started):
    if args.model != "queue-exact":
        raise ValueError(f"unknown sweep model {args.model!r}")
    if args.h is None:
        raise ValueError("give the deviation pattern --h")
    h = np.asarray(args.h)
    if len(h) != args.k:
        raise ValueError("--h must have length k")
    if abs(h.sum()) > 1e-9 * max(1.0, np.abs(h).max()):
        raise ValueError("--h must sum to zero so the mean rate is scale-free")
    epsilons = args.eps or [0.0125, 0.025, 0.05, 0.1]
    L_hom = queue_exact.homog_closed_form(args.lam, args.mu_bar, args.k)
    alpha = queue_exact.alpha_via_reduced_system(args.lam, args.mu_bar, args.k).alpha
    rows = []
    for eps in epsilons:
        rates = tuple(args.mu_bar + eps * h)
        L = queue_exact.solve_steady_state(
            queue_exact.MMkParams(lam=args.lam, rates=rates)
        ).expected_customers
        improved = avgcore.improved_approx(L_hom, alpha, rates, args.mu_bar)
        rows.append((eps, abs(L - L_hom), abs(L - improved)))
    fit = avgcore.fit_scaling([(e, err) for e, err, _ in rows])
    improved_fit = avgcore.fit_scaling([(e, res) for e, _, res in rows])
    headline = {
        "slope": fit.slope,
        "improved_slope": improved_fit.slope,
        "alpha": alpha,
        "L_homog": L_hom,
    }
    paths = _write_outputs(
        args, ["epsilon", "abs_error", "improved_residual"], rows, headline, started
    )
    if args.plot:
        plots.save_loglog_fit(
            _plot_path(args), [r[0] for r in rows], [r[1] for r in rows], fit,
            label="absolute error",
        )
    return headline, paths


def _run_verify(args, started):
    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = acceptance.run_all(seed=args.seed, only=only)
    print(acceptance.format_report(results))
    if args.output:
        payload = {
            "seed": args.seed,
            "version": __version__,
            "wall_clock_s": round(time.perf_counter() - started, 3),
            "criteria": [
                {
                    "id": r.cid,
                    "name": r.name,
                    "passed": r.passed,
                    "detail": r.detail,
                    "measured": r.measured,
                    "runtime_s": round(r.runtime, 3),
                }
                for r in results
            ],
        }
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if all(r.passed for r in results) else 1


# --------------------------------------------------------------- arguments

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetavg",
        description="Heterogeneous-vs-homogeneous experiments: queues, auctions, "
        "adoption on networks, and second-order error coefficients.",
    )
    parser.add_argument("--config", help="JSON file with the experiment configuration")
    sub = parser.add_subparsers(dest="experiment")

    def common(p, default_output):
        p.add_argument("--output", default=default_output, help="CSV output path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--plot", action="store_true",
                       help="render a figure next to the CSV")

    p = sub.add_parser("queue-exact", help="exact steady state of a heterogeneous queue")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--rates", type=_floats, help="comma-separated service rates")
    p.add_argument("--k", type=int, help="server count (homogeneous shortcut)")
    p.add_argument("--mu-bar", type=float, help="common rate (homogeneous shortcut)")
    common(p, "queue-exact.csv")
    p.set_defaults(func=_run_queue_exact)

    p = sub.add_parser("queue-sim", help="Monte Carlo simulation of the queue")
    p.add_argument("--lambda", dest="lam", type=float, default=28.0)
    p.add_argument("--rates", type=_floats)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--mu-bar", type=float, default=5.0)
    p.add_argument("--horizon", type=float, default=5e4)
    p.add_argument("--warmup", type=float, default=2.5e3)
    p.add_argument("--replications", type=int, default=16)
    p.add_argument("--fig1", action="store_true",
                   help="relative-error sweep over the 8-server reference setup")
    p.add_argument("--eps", type=_floats, help="sweep grid for --fig1")
    common(p, "queue-sim.csv")
    p.set_defaults(func=_run_queue_sim)

    p = sub.add_parser("queue-alpha", help="second-order coefficient for the queue")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu-bar", type=float, required=True)
    p.add_argument("--step", type=float, default=None)
    common(p, "queue-alpha.csv")
    p.set_defaults(func=_run_queue_alpha)

    p = sub.add_parser("auction", help="first-price auction checks")
    p.add_argument("--check", choices=("revenue", "first-order", "averaging"),
                   required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--family", type=_family, default="uniform")
    p.add_argument("--perturbations", type=lambda s: [_perturbation(x) for x in s.split(",")],
                   help="comma-separated perturbation specs, e.g. 'bump,-0.5*bump'")
    p.add_argument("--eps", type=_floats)
    p.add_argument("--grid-size", type=int, default=2001)
    common(p, "auction.csv")
    p.set_defaults(func=_run_auction)

    p = sub.add_parser("diffusion", help="adoption curves on regular networks")
    p.add_argument("--check", choices=("exact", "compare", "weak", "averaging"),
                   required=True)
    p.add_argument("--network", type=_network, required=True,
                   help="complete:M | circle2:M | circle4:M | torus:m")
    p.add_argument("--times", type=_time_grid, default="0:30:13")
    p.add_argument("--p-bar", type=float, default=None)
    p.add_argument("--q-bar", type=float, default=None)
    p.add_argument("--p", type=_floats, help="per-agent external rates")
    p.add_argument("--q", type=_floats, help="per-agent internal rates")
    p.add_argument("--p-tilde", type=float, default=None,
                   help="deviant external rate for --check weak")
    p.add_argument("--q-tilde", type=float, default=None)
    p.add_argument("--hp", type=_floats, help="deviation pattern for p (sums to 0)")
    p.add_argument("--hq", type=_floats, help="deviation pattern for q (sums to 0)")
    p.add_argument("--eps", type=_floats)
    p.add_argument("--replications", type=int, default=2000)
    common(p, "diffusion.csv")
    p.set_defaults(func=_run_diffusion)

    p = sub.add_parser("averaging-sweep", help="error-scaling sweep for a model")
    p.add_argument("--model", default="queue-exact")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu-bar", type=float, required=True)
    p.add_argument("--h", type=_floats, help="deviation pattern (sums to 0)")
    p.add_argument("--eps", type=_floats)
    common(p, "averaging-sweep.csv")
    p.set_defaults(func=_run_averaging_sweep)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    p.add_argument("--only", help="comma-separated criterion ids")
    p.add_argument("--output", help="optional JSON report path")
    p.set_defaults(func=_run_verify)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args, remaining = parser.parse_known_args(argv)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            conf = json.load(fh)
        experiment = conf.pop("experiment", None)
        if not experiment:
            print("config file must name an 'experiment'", file=sys.stderr)
            return 2
        rebuilt = [experiment]
        for key, val in conf.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(val, bool):
                if val:
                    rebuilt.append(flag)
            elif isinstance(val, list):
                rebuilt.extend([flag, ",".join(str(x) for x in val)])
            else:
                rebuilt.extend([flag, str(val)])
        rebuilt.extend(remaining)
        args = parser.parse_args(rebuilt)
    elif remaining:
        parser.error(f"unrecognized arguments: {' '.join(remaining)}")
    if not getattr(args, "experiment", None):
        parser.print_help()
        return 2
    started = time.perf_counter()
    try:
        if args.experiment == "verify":
            return _run_verify(args, started)
        headline, (csv_path, json_path) = args.func(args, started)
        summary = ", ".join(
            f"{k}={v:.6g}" for k, v in headline.items() if isinstance(v, (int, float))
        )
        print(f"wrote {csv_path} and {json_path} ({summary})")
        return 0
    except (ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
