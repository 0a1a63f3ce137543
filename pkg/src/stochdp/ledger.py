"""Certification of the summable-bound assumption behind the solver.

The geometric certificate checks, for a user-supplied nonnegative function
``l0`` dominating the one-shot value ``|psi|``, the drift inequality

    E_z[ max_{y in Gamma(x, z)} l0(y, z') ] <= alpha * l0(x, z)

at every audited state, with ``alpha * beta < 1``.  It then produces the
certified radius table ``R0(K, z) = p_{K,z}(l0) / (1 - alpha beta)`` whose
partial-sum remainders bound the distance of Bellman iterates to the fixed
point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bellman import (BellmanCop, MaximizerOptions, ModelSpec, _box_candidates,
                      _feasible_candidates, monitor_labels, psi as compute_psi)
from .contraction import CopOperator, SeminormTable
from .errors import ConditionError, NumericError
from .values import ValueFunction

__all__ = ["BoundLedger", "verify_B6_geometric", "flat_bound_ledger", "lt_term",
           "residual_certificate", "label_str"]


def label_str(label) -> str:
    if label == "sup":
        return "sup"
    k_label, z = label
    return f"{k_label}|z=({', '.join(repr(float(v)) for v in z)})"


@dataclass
class BoundLedger:
    """Verified drift constants and the certified radius table.

    ``worst_slack`` is the largest audited value of
    ``lhs - alpha * l0`` (nonpositive up to tolerance when verified);
    ``psi_slack`` the largest value of ``|psi| - l0`` on the grid.
    """

    alpha: float
    beta: float
    l0_table: ValueFunction
    R0: SeminormTable
    verified: bool
    worst_slack: float
    psi_slack: float
    audit_points: int
    lt_rule: str = "geometric"

    def lt_term(self, t: int) -> ValueFunction:
        """The geometric bound sequence ``l_t = (alpha beta)^t l0``, tablewise."""
        if self.lt_rule != "geometric":
            raise ConditionError("explicit bound sequences carry no term rule")
        factor = (self.alpha * self.beta) ** t
        if not np.isfinite(factor):
            raise NumericError(f"(alpha*beta)^{t} is not representable")
        return self.l0_table * factor

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "alpha_beta": self.alpha * self.beta,
            "verified": self.verified,
            "worst_slack": self.worst_slack,
            "psi_slack": self.psi_slack,
            "audit_points": self.audit_points,
            "lt_rule": self.lt_rule,
            "R0": {label_str(lbl): float(v)
                   for lbl, v in zip(self.R0.labels, self.R0.values)},
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _audit_grid(x_grids, factor: int = 2):
    """Solver grid refined with midpoints (``factor`` times denser per axis)."""
    axes = []
    for g in x_grids:
        if g.size == 1 or factor <= 1:
            axes.append(g)
            continue
        extra = []
        for a, b in zip(g[:-1], g[1:]):
            extra.extend(a + (b - a) * np.arange(1, factor) / factor)
        axes.append(np.unique(np.concatenate([g, extra])))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def verify_B6_geometric(l0_fn, model: ModelSpec, x_grids, z_nodes, Ks, monitored_z,
                        alpha: float, psi_table: ValueFunction | None = None,
                        drift_tol: float = 1e-8, audit_factor: int = 2,
                        scan_candidates: int = 64,
                        psi_opts: MaximizerOptions | None = None) -> BoundLedger:
    """Audit the geometric drift certificate and build the radius table.

    Parameters
    ----------
    l0_fn : callable
        Exact bound function, vectorized as ``l0_fn(X (N, l), z (k,)) -> (N,)``.
    alpha : float
        Drift constant; requires ``alpha >= 0`` and ``alpha * beta < 1``.
    psi_table : ValueFunction, optional
        Precomputed one-shot value ``T0``; computed here when omitted.

    Raises
    ------
    ConditionError
        If ``alpha * beta >= 1``, ``l0`` fails to dominate ``|psi|``, or the
        drift inequality is violated beyond ``drift_tol`` (the worst state
        and slack are reported).
    """
    if alpha < 0:
        raise ConditionError("alpha must be nonnegative")
    ab = alpha * model.beta
    if ab >= 1.0:
        raise ConditionError(f"alpha*beta = {ab:.6g} >= 1; geometric certificate fails")

    probe = ValueFunction.constant(x_grids, z_nodes, 0.0)
    l0_table = ValueFunction.from_callable(probe.x_grids, probe.z_nodes,
                                           lambda X, z: l0_fn(X, z))
    if np.any(l0_table.values < -1e-12):
        raise ConditionError("l0 must be nonnegative")

    if psi_table is None:
        psi_table = compute_psi(model, probe.x_grids, probe.z_nodes, opts=psi_opts)
    psi_gap = np.abs(psi_table.values) - l0_table.values
    psi_slack = float(psi_gap.max())
    if psi_slack > drift_tol:
        flat = int(np.argmax(psi_gap))
        raise ConditionError(f"l0 fails to dominate |psi| (worst gap {psi_slack:.3g} "
                             f"at flat node {flat})")

    scan = MaximizerOptions(n_coarse=scan_candidates, candidates="scan", refine=False)
    audit_points = _audit_grid(probe.x_grids, audit_factor)
    worst = -np.inf
    worst_at = None
    for z in probe.z_nodes:
        nodes, weights = model.kernel.successors(z)
        for x in audit_points:
            lo, hi = model.gamma.bounds(x, z)
            lo = np.atleast_1d(np.asarray(lo, dtype=float))
            hi = np.atleast_1d(np.asarray(hi, dtype=float))
            if np.any(hi < lo - 1e-12):
                raise ConditionError(f"empty feasible set at x={x}, z={z}")
            hi = np.maximum(hi, lo)
            cands = _feasible_candidates(_box_candidates(lo, hi, probe.x_grids, scan),
                                         x, z, model.gamma)
            lhs = 0.0
            for node, w in zip(nodes, weights):
                lhs += w * float(np.max(l0_fn(cands, node)))
            slack = lhs - alpha * float(l0_fn(x[None, :], z)[0])
            if slack > worst:
                worst, worst_at = slack, (x.copy(), z.copy())
    if worst > drift_tol:
        x, z = worst_at
        raise ConditionError(f"drift inequality violated at x={x}, z={z} "
                             f"(slack {worst:.3g})")

    labels = monitor_labels(Ks, monitored_z)
    zs = np.atleast_2d(np.asarray(monitored_z, dtype=float))
    entries = []
    for K in Ks:
        k_cands = K.candidate_points(probe.x_grids)
        for z in zs:
            nodes, weights = model.kernel.successors(z)
            p = sum(w * float(np.max(np.abs(l0_fn(k_cands, node))))
                    for node, w in zip(nodes, weights))
            entries.append(p / (1.0 - ab))
    # Grid view of R0 composed with the feasible correspondence, for the
    # companion operator (boxes clipped to the hull, as in the solver).
    hull_lo = np.array([g[0] for g in probe.x_grids])
    hull_hi = np.array([g[-1] for g in probe.x_grids])
    points = probe.grid_points()
    gamma_flat = np.empty((points.shape[0], probe.n_z))
    for iz, z in enumerate(probe.z_nodes):
        nodes, weights = model.kernel.successors(z)
        for i, x in enumerate(points):
            lo, hi = model.gamma.bounds(x, z)
            lo = np.maximum(np.atleast_1d(np.asarray(lo, dtype=float)), hull_lo)
            hi = np.minimum(np.atleast_1d(np.asarray(hi, dtype=float)), hull_hi)
            hi = np.maximum(hi, lo)
            cands = _feasible_candidates(_box_candidates(lo, hi, probe.x_grids, scan),
                                         x, z, model.gamma)
            p = sum(w * float(np.max(np.abs(l0_fn(cands, node))))
                    for node, w in zip(nodes, weights))
            gamma_flat[i, iz] = p / (1.0 - ab)
    gamma = gamma_flat.reshape(probe.values.shape)
    R0 = SeminormTable(labels, np.asarray(entries), gamma)

    return BoundLedger(alpha=float(alpha), beta=float(model.beta), l0_table=l0_table,
                       R0=R0, verified=True, worst_slack=float(worst),
                       psi_slack=psi_slack, audit_points=int(audit_points.shape[0] * probe.n_z))


def flat_bound_ledger(model: ModelSpec, x_grids, z_nodes, Ks, monitored_z,
                      psi_table: ValueFunction | None = None, margin: float = 0.5,
                      psi_opts: MaximizerOptions | None = None) -> BoundLedger:
    """Constant-bound certificate: ``l0 = c`` with ``alpha = 1``.

    Valid on any bounded problem whose feasible sets stay in the state
    space: the conditional expectation of a constant is the constant, so the
    drift holds with equality and ``R0 = c / (1 - beta)``.  ``c`` is sized to
    dominate ``|psi|`` with the given margin.
    """
    probe = ValueFunction.constant(x_grids, z_nodes, 0.0)
    if psi_table is None:
        psi_table = compute_psi(model, probe.x_grids, probe.z_nodes, opts=psi_opts)
    c = (1.0 + margin) * float(np.max(np.abs(psi_table.values)))

    def l0(X, z):
        return np.full(np.atleast_2d(X).shape[0], c)

    return verify_B6_geometric(l0, model, probe.x_grids, probe.z_nodes, Ks,
                               monitored_z, alpha=1.0, psi_table=psi_table,
                               audit_factor=1, scan_candidates=3)


def lt_term(ledger: BoundLedger, t: int) -> ValueFunction:
    """Functional form of :meth:`BoundLedger.lt_term`."""
    return ledger.lt_term(t)


def residual_certificate(ledger: BoundLedger, cop: CopOperator, iterations: int) -> SeminormTable:
    """Remainder table ``L^t R0`` after ``iterations`` companion applications.

    Bounds the distance of the ``t``-th Bellman iterate to the fixed point
    at every monitored index.
    """
    if not ledger.verified:
        raise ConditionError("residual certificates require a verified ledger")
    return cop.power(ledger.R0, iterations)
