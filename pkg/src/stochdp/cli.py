"""Configuration-driven entry point.

Subcommands: ``solve``, ``check``, ``counterexample``, ``oracle``.  Every
run reads one INI config (see :mod:`stochdp.config`), writes its artifacts
into the output directory, and exits with

* ``0``  converged solve / all checks passed,
* ``1``  malformed configuration,
* ``2``  an admissibility condition failed,
* ``3``  a numerical failure (divergence, non-finite values, grid escapes).

Outputs carry no timestamps: identical config and seed give byte-identical
files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import counterexample as cx
from . import growth, lucas, oracles
from .bellman import (MaximizerOptions, apply_bellman, extract_policy, psi,
                      seminorm_family, seminorm_table)
from .config import RunConfig, load_config
from .contraction import iterate_fixed_point
from .errors import (ConditionError, ConfigError, DivergenceError, FeasibilityError,
                     GridError, NumericError, StochDPError)
from .kernels import LinearARKernel, LogLogARKernel, successor_closed_nodes
from .ledger import flat_bound_ledger, label_str, verify_B6_geometric
from .values import CompactSetSpec, ValueFunction, write_csv

__all__ = ["main", "run", "check"]


def _write_report(out_dir: str, payload: dict) -> None:
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _report_skeleton(cfg: RunConfig, command: str, overrides: dict) -> dict:
    return {
        "schema_version": cfg.get_int("run", "schema_version"),
        "model": cfg.model,
        "command": command,
        "seed": overrides.get(("run", "seed"), cfg.seed),
        "resolved_config": cfg.resolved_text(overrides),
    }


def _residual_summary(report) -> dict:
    return {
        "iterations": report.iterations,
        "converged": report.converged,
        "final_residuals": {label_str(k): v for k, v in report.final_residuals.items()},
        "max_residual_history": [float(max(r.values())) for r in report.residual_history],
        "geometric_tail_ratio": report.geometric_tail_ratio(),
        "r0_series_tail": (None if report.r0_series_tail is None else
                           {label_str(k): v for k, v in report.r0_series_tail.items()}),
    }


def _monitor_sets(cfg: RunConfig, x_grids) -> list[CompactSetSpec]:
    out = []
    for kind, key, lo, hi in cfg.monitored_sets(len(x_grids)):
        if kind == "hull":
            out.append(CompactSetSpec.hull(key, x_grids))
        else:
            out.append(CompactSetSpec.box(key, lo, hi))
    if not out:
        out.append(CompactSetSpec.hull("x_hull", x_grids))
    return out


# ---------------------------------------------------------------------------
# growth
# ---------------------------------------------------------------------------

def _growth_params(cfg: RunConfig) -> growth.GrowthParams:
    return growth.GrowthParams(
        A=cfg.get_float("params", "A", lo=0, lo_open=True),
        alpha=cfg.get_float("params", "alpha", lo=0, hi=1, lo_open=True, hi_open=True),
        sigma=cfg.get_float("params", "sigma", lo=0, hi=1, hi_open=True),
        psi_leisure=cfg.get_float("params", "psi_leisure", "0.0", lo=0),
        delta_k=cfg.get_float("params", "delta_k", lo=0, hi=1),
        delta_h=cfg.get_float("params", "delta_h", lo=0, hi=1),
        beta=cfg.get_float("params", "beta", lo=0, hi=1, lo_open=True, hi_open=True),
        rho=cfg.get_float("params", "rho", "0.0", lo=0, hi=1, hi_open=True),
        innovation=cfg.innovation_law(),
        quadrature=cfg.quadrature(),
    )


def _growth_grids(cfg: RunConfig):
    return (cfg.axis_grid("k"), cfg.axis_grid("h"))


def _maximizer(cfg: RunConfig) -> MaximizerOptions:
    return MaximizerOptions(
        n_coarse=cfg.get_int("tolerance", "action_candidates", "48", lo=2),
        candidates=cfg.get_str("tolerance", "action_mode", "scan",
                               choices={"scan", "grid"}),
        refine=cfg.get_str("tolerance", "refine", "true",
                           choices={"true", "false"}) == "true",
        refine_tol=cfg.get_float("tolerance", "action_tol", "1e-10", lo=0, lo_open=True),
    )


def _solve_growth(cfg: RunConfig, out_dir: str, report: dict, threads: int) -> int:
    p = _growth_params(cfg)
    holds, value = growth.check_growth_condition(p)
    report["checks"] = {"growth_condition_value": value, "growth_condition_holds": holds}
    if not holds:
        report["error"] = ("admissibility condition beta*gamma^(1-sigma)*Theta < 1 "
                           f"fails (value {value:.6g})")
        _write_report(out_dir, report)
        return 2
    x_grids = _growth_grids(cfg)
    z_seeds = cfg.get_matrix("grid", "z_seeds")
    Ks = _monitor_sets(cfg, x_grids)
    monitored = cfg.monitored_zs()
    sol = growth.solve_growth(
        p, x_grids, z_seeds, Ks=Ks, monitored_z=monitored,
        value_tol=cfg.get_float("tolerance", "value_tol", lo=0, lo_open=True),
        max_iter=cfg.get_int("tolerance", "max_iterations", lo=1),
        opts=_maximizer(cfg), threads=threads,
    )
    write_csv(os.path.join(out_dir, "value.csv"), sol.value)
    sol.policy.write_csv(os.path.join(out_dir, "policy.csv"))
    sol.ledger.write_json(os.path.join(out_dir, "ledger.json"))
    v_table = seminorm_table(sol.value, sol.model.kernel, Ks,
                             monitored if monitored is not None else sol.value.z_nodes)
    slack = float(np.max(v_table.values - sol.ledger.R0.values))
    report["solve"] = _residual_summary(sol.report)
    report["checks"].update({
        "alpha": sol.ledger.alpha,
        "alpha_beta": sol.ledger.alpha * sol.ledger.beta,
        "drift_worst_slack": sol.ledger.worst_slack,
        "ball_membership_slack": slack,
        "policy_feasibility_gap": sol.policy.feasibility_gap(sol.model),
    })
    _write_report(out_dir, report)
    return 0 if sol.report.converged else 3


def _check_growth(cfg: RunConfig, out_dir: str, report: dict, threads: int) -> int:
    p = _growth_params(cfg)
    holds, value = growth.check_growth_condition(p)
    checks = {"growth_condition_value": value, "growth_condition_holds": holds,
              "condition": "beta*gamma^(1-sigma)*Theta < 1"}
    report["checks"] = checks
    if not holds:
        _write_report(out_dir, report)
        return 2
    x_grids = _growth_grids(cfg)
    kernel = growth.build_kernel(p)
    z_nodes = successor_closed_nodes(kernel, cfg.get_matrix("grid", "z_seeds"))
    model = growth.build_model(p, kernel)
    Ks = _monitor_sets(cfg, x_grids)
    monitored = cfg.monitored_zs()
    alpha = growth.gamma_const(p) ** (1.0 - p.sigma) * growth.theta_const(p)
    try:
        ledger = verify_B6_geometric(growth.growth_l0(p), model, x_grids, z_nodes, Ks,
                                     monitored if monitored is not None else z_nodes,
                                     alpha, psi_opts=_maximizer(cfg))
    except ConditionError as exc:
        checks.update({"drift_verified": False, "drift_error": str(exc), "alpha": alpha})
        _write_report(out_dir, report)
        return 2
    checks.update({"drift_verified": True, "alpha": alpha,
                   "alpha_beta": alpha * p.beta,
                   "drift_worst_slack": ledger.worst_slack,
                   "psi_slack": ledger.psi_slack,
                   "audit_points": ledger.audit_points})
    ledger.write_json(os.path.join(out_dir, "ledger.json"))
    _write_report(out_dir, report)
    return 0


# ---------------------------------------------------------------------------
# single-capital oracle toy (model = custom, preset = single_capital)
# ---------------------------------------------------------------------------

def _single_capital(cfg: RunConfig, out_dir: str, report: dict, threads: int,
                    solve_it: bool) -> int:
    A = cfg.get_float("params", "A", lo=0, lo_open=True)
    alpha = cfg.get_float("params", "alpha", lo=0, hi=1, lo_open=True, hi_open=True)
    sigma = cfg.get_float("params", "sigma", lo=0, hi=1, hi_open=True)
    delta_k = cfg.get_float("params", "delta_k", lo=0, hi=1)
    beta = cfg.get_float("params", "beta", lo=0, hi=1, lo_open=True, hi_open=True)
    model = growth.single_capital_model(A, alpha, sigma, delta_k, beta,
                                        cfg.innovation_law(), cfg.quadrature(),
                                        rho=cfg.get_float("params", "rho", "0.0",
                                                          lo=0, hi=1, hi_open=True))
    k_grid = cfg.axis_grid("k")
    z_nodes = successor_closed_nodes(model.kernel, cfg.get_matrix("grid", "z_seeds"))
    Ks = _monitor_sets(cfg, (k_grid,))
    monitored = cfg.monitored_zs()
    monitored = monitored if monitored is not None else z_nodes
    opts = MaximizerOptions(candidates="grid", refine=False)
    psi_table = psi(model, (k_grid,), z_nodes, opts=opts, threads=threads)
    ledger = flat_bound_ledger(model, (k_grid,), z_nodes, Ks, monitored,
                               psi_table=psi_table)
    report["checks"] = {"alpha": ledger.alpha, "alpha_beta": ledger.alpha * beta,
                        "drift_worst_slack": ledger.worst_slack}
    if not solve_it:
        ledger.write_json(os.path.join(out_dir, "ledger.json"))
        _write_report(out_dir, report)
        return 0
    family = seminorm_family(model.kernel, Ks, monitored, include_sup=True)
    value_tol = cfg.get_float("tolerance", "value_tol", lo=0, lo_open=True)

    def T(f):
        return apply_bellman(f, model, opts=opts, threads=threads)

    from .bellman import BellmanCop
    cop = BellmanCop(model, (k_grid,), z_nodes, Ks, monitored)
    v0 = ValueFunction.constant((k_grid,), z_nodes, 0.0)
    v, rep = iterate_fixed_point(T, family, v0, stop=value_tol,
                                 max_iter=cfg.get_int("tolerance", "max_iterations", lo=1),
                                 cop=cop, cop_d0=cop.profile(psi_table), tail=ledger.R0)
    policy = extract_policy(v, model, opts=opts, threads=threads)

    # Independent exhaustive-action cross-check on the same grid.
    U = np.empty((k_grid.size, k_grid.size, z_nodes.shape[0]))
    feas = np.zeros_like(U, dtype=bool)
    for iz, z in enumerate(z_nodes):
        res = z[0] * A * k_grid ** alpha + (1.0 - delta_k) * k_grid
        for i in range(k_grid.size):
            c = res[i] - k_grid
            feas[i, :, iz] = c >= -1e-12
            U[i, :, iz] = np.where(feas[i, :, iz],
                                   np.maximum(c, 0.0) ** (1.0 - sigma) / (1.0 - sigma),
                                   -np.inf)
    P = np.zeros((z_nodes.shape[0], z_nodes.shape[0]))
    for iz, z in enumerate(z_nodes):
        nodes, w = model.kernel.successors(z)
        for node, wt in zip(nodes, w):
            j = int(np.flatnonzero(np.all(np.isclose(z_nodes, node), axis=1))[0])
            P[iz, j] += wt
    v_oracle, _ = oracles.value_iteration(U, P, beta, feas)
    sup_diff = float(np.max(np.abs(v.values - v_oracle)))

    write_csv(os.path.join(out_dir, "value.csv"), v)
    policy.write_csv(os.path.join(out_dir, "policy.csv"))
    ledger.write_json(os.path.join(out_dir, "ledger.json"))
    report["solve"] = _residual_summary(rep)
    report["checks"]["oracle_sup_diff"] = sup_diff
    _write_report(out_dir, report)
    return 0 if rep.converged else 3


# ---------------------------------------------------------------------------
# lucas
# ---------------------------------------------------------------------------

def _lucas_params(cfg: RunConfig) -> tuple[lucas.LucasParams, np.ndarray]:
    k = cfg.get_int("params", "assets", lo=1)
    utility = lucas.IsoelasticPlusLinearUtility(
        cfg.get_float("params", "sigma", lo=0, hi=1, hi_open=True))
    beta = cfg.get_float("params", "beta", lo=0, hi=1, lo_open=True, hi_open=True)
    regime = cfg.get_str("kernel", "regime", choices={"m1", "m2"})
    law = cfg.innovation_law()
    if regime == "m1":
        kernel = LinearARKernel(cfg.get_matrix("kernel", "B"), law, cfg.quadrature())
    else:
        kernel = LogLogARKernel(cfg.get_floats("kernel", "rho"), law, cfg.quadrature(),
                                beta=beta)
    params = lucas.LucasParams(
        k_assets=k, utility=utility, beta=beta, kernel=kernel,
        x_bar=cfg.get_float("params", "x_bar", lo=1, lo_open=True))
    z_seeds = cfg.get_matrix("grid", "z_seeds")
    return params, z_seeds


def _solve_lucas(cfg: RunConfig, out_dir: str, report: dict, threads: int) -> int:
    P, z_seeds = _lucas_params(cfg)
    z_nodes = successor_closed_nodes(P.kernel, z_seeds)
    audit = P.utility.audit(z_samples=z_nodes)
    phi_tol = cfg.get_float("tolerance", "phi_tol", "1e-10", lo=0, lo_open=True)
    phi = np.stack([lucas.solve_phi(i, P, z_nodes, tol=phi_tol)
                    for i in range(P.k_assets)], axis=1)
    price = lucas.price_from_phi(phi, P, z_nodes)
    constants = lucas.price_bound_constants(P)
    bound_gap = lucas.affine_bound_gap(price, constants)
    if bound_gap > 1e-9:
        report["error"] = f"affine price bound violated by {bound_gap:.3g}"
        report["checks"] = {"price_bound_gap": bound_gap}
        _write_report(out_dir, report)
        return 2
    x_points = cfg.get_int("grid", "x_points", lo=2)
    x_grid = np.linspace(0.0, P.x_bar, x_points)
    v, policy, rep, model = lucas.solve_household(
        P, price, (x_grid,),
        value_tol=cfg.get_float("tolerance", "value_tol", lo=0, lo_open=True),
        max_iter=cfg.get_int("tolerance", "max_iterations", lo=1),
        opts=_maximizer(cfg), threads=threads)
    monitored = cfg.monitored_zs()
    monitored = monitored if monitored is not None else z_nodes
    household_R0 = lucas.household_R0(P, constants, z_nodes, monitored)
    gap = lucas.equilibrium_gap(policy, P)

    price.write_csv(os.path.join(out_dir, "price.csv"), constants)
    write_csv(os.path.join(out_dir, "value.csv"), v)
    policy.write_csv(os.path.join(out_dir, "policy.csv"))
    ledger_payload = {
        "price_bound": {
            "constants": [{"a": [float(v_) for v_ in a], "b": float(b)}
                          for a, b in constants],
            "worst_gap": bound_gap,
        },
        "household_R0": {repr(k_): v_ for k_, v_ in household_R0.items()},
        "utility_audit": audit,
    }
    with open(os.path.join(out_dir, "ledger.json"), "w", encoding="utf-8") as fh:
        json.dump(ledger_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report["solve"] = _residual_summary(rep)
    report["checks"] = {"price_bound_gap": bound_gap, "equilibrium_gap": gap,
                        **{f"utility_{k_}": v_ for k_, v_ in audit.items()}}
    _write_report(out_dir, report)
    return 0 if rep.converged else 3


def _check_lucas(cfg: RunConfig, out_dir: str, report: dict, threads: int) -> int:
    try:
        P, z_seeds = _lucas_params(cfg)
        z_nodes = successor_closed_nodes(P.kernel, z_seeds)
        audit = P.utility.audit(z_samples=z_nodes)
        constants = lucas.price_bound_constants(P)
    except ConditionError as exc:
        report["checks"] = {"passed": False, "error": str(exc)}
        _write_report(out_dir, report)
        return 2
    report["checks"] = {"passed": True,
                        "constants": [{"a": [float(v) for v in a], "b": float(b)}
                                      for a, b in constants],
                        **{f"utility_{k}": v for k, v in audit.items()}}
    if isinstance(P.kernel, LinearARKernel):
        report["checks"]["beta_norm_B"] = P.beta * P.kernel.norm_B
    _write_report(out_dir, report)
    return 0


# ---------------------------------------------------------------------------
# counterexample and oracle
# ---------------------------------------------------------------------------

def _run_counterexample(cfg: RunConfig, out_dir: str, report: dict) -> int:
    n = cfg.get_int("grid", "z_points", "9", lo=1)
    zs = [0.0] + list(np.geomspace(1e-4, 0.1, n)) + [0.25, 0.5, 0.75, 0.99, 1.0, 2.0]
    lines = ["z,Mg"]
    for z in zs:
        image = cx.markov_image(lambda t: t, z)
        lines.append(f"{repr(float(z))},{repr(float(image))}")
    with open(os.path.join(out_dir, "counterexample.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    gap = cx.discontinuity_gap(lambda t: t, 0.01)
    norm_rows = {repr(z): cx.markov_image(lambda t: 1.0, z)
                 for z in (0.0, 0.25, 0.5, 0.99, 1.0, 7.0)}
    report["checks"] = {"jump_at_zero": gap, "normalization": norm_rows}
    _write_report(out_dir, report)
    return 0


def _run_oracle(cfg: RunConfig, out_dir: str, report: dict, threads: int) -> int:
    beta = cfg.get_float("params", "beta", "0.9", lo=0, hi=1, lo_open=True, hi_open=True)
    U, P, x_nodes, z_atoms, beta = oracles.two_state_tables(beta)
    v_exact = oracles.enumerate_policies_value(U, P, beta)

    from .bellman import FeasibleSet, ModelSpec
    from .kernels import AtomLaw, LinearARKernel

    law = AtomLaw(((z_atoms[0],), (z_atoms[1],)), (0.5, 0.5))
    kernel = LinearARKernel(np.zeros((1, 1)), law)
    z_nodes = successor_closed_nodes(kernel, z_atoms[:, None])

    def utility(X, Y, Z):
        X = np.atleast_2d(X); Y = np.atleast_2d(Y); Z = np.atleast_2d(Z)
        return (Z[:, 0] * (1.0 + X[:, 0]) - 0.25 * (Y[:, 0] - X[:, 0]) ** 2
                - 0.1 * Y[:, 0])

    model = ModelSpec(utility=utility,
                      gamma=FeasibleSet(lambda x, z: (np.array([0.0]), np.array([1.0]))),
                      beta=beta, kernel=kernel, x_lo=np.array([0.0]),
                      x_hi=np.array([1.0]), name="two-state")
    opts = MaximizerOptions(candidates="grid", refine=False)
    Ks = [CompactSetSpec.hull("X", (x_nodes,))]
    family = seminorm_family(kernel, Ks, z_nodes, include_sup=True)

    def T(f):
        return apply_bellman(f, model, opts=opts, threads=threads)

    v0 = ValueFunction.constant((x_nodes,), z_nodes, 0.0)
    v, rep = iterate_fixed_point(T, family, v0, stop=1e-12, max_iter=5000)
    # Oracle z ordering matches the lexicographically sorted node set.
    order = [int(np.flatnonzero(np.isclose(z_nodes[:, 0], z))[0]) for z in z_atoms]
    sup_diff = float(np.max(np.abs(v.values[:, order] - v_exact)))
    report["solve"] = _residual_summary(rep)
    report["checks"] = {"oracle_sup_diff": sup_diff}
    _write_report(out_dir, report)
    return 0 if rep.converged else 3


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _dispatch(command: str, args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides[("run", "seed")] = args.seed
    if args.threads is not None:
        overrides[("run", "threads")] = args.threads
    if args.out is not None:
        overrides[("run", "out_dir")] = args.out
    out_dir = args.out or cfg.get_str("run", "out_dir")
    os.makedirs(out_dir, exist_ok=True)
    threads = args.threads if args.threads is not None else cfg.threads
    report = _report_skeleton(cfg, command, overrides)
    model = cfg.model

    if command == "counterexample" or (command in ("solve", "check")
                                       and model == "counterexample"):
        return _run_counterexample(cfg, out_dir, report)
    if command == "oracle" or (command in ("solve", "check") and model == "oracle"):
        return _run_oracle(cfg, out_dir, report, threads)
    if model == "growth":
        if command == "check":
            return _check_growth(cfg, out_dir, report, threads)
        return _solve_growth(cfg, out_dir, report, threads)
    if model == "lucas":
        if command == "check":
            return _check_lucas(cfg, out_dir, report, threads)
        return _solve_lucas(cfg, out_dir, report, threads)
    if model == "custom":
        preset = cfg.get_str("params", "preset", choices={"single_capital"})
        return _single_capital(cfg, out_dir, report, threads, solve_it=(command == "solve"))
    raise ConfigError(f"model {model!r} has no {command!r} handler")


def run(config_path: str, seed: int | None = None, threads: int | None = None,
        out: str | None = None) -> int:
    """Programmatic equivalent of ``stochdp solve --config config_path``."""
    ns = argparse.Namespace(config=config_path, seed=seed, threads=threads, out=out)
    return _guarded(lambda: _dispatch("solve", ns))


def check(config_path: str, seed: int | None = None, threads: int | None = None,
          out: str | None = None) -> int:
    """Programmatic equivalent of ``stochdp check --config config_path``."""
    ns = argparse.Namespace(config=config_path, seed=seed, threads=threads, out=out)
    return _guarded(lambda: _dispatch("check", ns))


def _guarded(fn) -> int:
    try:
        return fn()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ConditionError as exc:
        print(f"condition failed: {exc}", file=sys.stderr)
        return 2
    except (NumericError, DivergenceError, GridError, FeasibilityError,
            StochDPError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stochdp",
                                     description="Stochastic dynamic-programming solver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "check", "counterexample", "oracle"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="path to the INI run config")
        sp.add_argument("--seed", type=int, default=None, help="override [run] seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="override [run] threads / STOCHDP_THREADS")
        sp.add_argument("--out", default=None, help="override [run] out_dir")
    args = parser.parse_args(argv)
    return _guarded(lambda: _dispatch(args.command, args))


if __name__ == "__main__":
    sys.exit(main())
