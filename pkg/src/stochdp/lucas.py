"""Exchange-economy asset pricing with unbounded dividends.

Equilibrium prices solve ``k`` decoupled affine functional equations

    phi_i(z) = h_i(z) + beta * E_z[phi_i(z')],
    h_i(z) = beta * E_z[z'_i u'(1'z')],
    p_i(z) = phi_i(z) / u'(1'z),

and are certified to lie below an affine function of the dividend vector.
The household side is an ordinary dynamic program over holdings in
``[0, x_bar]^k`` with the budget correspondence, solved by the generic
engine with the trivial monitored family (the whole holdings box).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bellman import (FeasibleSet, MaximizerOptions, ModelSpec, apply_bellman,
                      extract_policy, seminorm_family)
from .contraction import IterationReport, iterate_fixed_point
from .errors import ConditionError, DivergenceError, GridError, NumericError
from .kernels import LinearARKernel, LogLogARKernel, TransitionKernel
from .values import CompactSetSpec, ValueFunction

__all__ = [
    "IsoelasticPlusLinearUtility",
    "LucasParams",
    "h_function",
    "h_table",
    "solve_phi",
    "neumann_phi",
    "PriceFunction",
    "price_from_phi",
    "price_bound_constants",
    "affine_bound_gap",
    "phi_series_bound",
    "household_R0",
    "build_household_model",
    "solve_household",
    "equilibrium_gap",
]


@dataclass(frozen=True)
class IsoelasticPlusLinearUtility:
    """``u(c) = c^(1-sigma) / (1-sigma) + c`` with ``0 <= sigma < 1``.

    Satisfies ``u(0) = 0``, ``u' > 0``, concavity, the linear-growth bound
    ``c u'(c) <= gamma_bound * c + delta_bound`` (with 2 and 1), and the
    marginal-utility floor ``u' >= a_bound = 1``.
    """

    sigma: float
    gamma_bound: float = 2.0
    delta_bound: float = 1.0
    a_bound: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.sigma < 1.0:
            raise ConditionError("sigma must lie in [0, 1)")

    def u(self, c):
        c = np.asarray(c, dtype=float)
        return c ** (1.0 - self.sigma) / (1.0 - self.sigma) + c

    def u_prime(self, c):
        c = np.asarray(c, dtype=float)
        with np.errstate(divide="ignore"):
            return c ** (-self.sigma) + 1.0

    def audit(self, c_lo: float = 1e-6, c_hi: float = 1e6, n: int = 201,
              z_samples=None) -> dict:
        """Grid audit of the bound constants; raises on violation."""
        c = np.logspace(math.log10(c_lo), math.log10(c_hi), n)
        lhs = c * self.u_prime(c)
        rhs = self.gamma_bound * c + self.delta_bound
        worst = float(np.max(lhs - rhs))
        if worst > 1e-9:
            raise ConditionError(f"c*u'(c) exceeds gamma*c + delta by {worst:.3g}")
        floor_gap = 0.0
        if z_samples is not None:
            tot = np.asarray(z_samples, dtype=float).sum(axis=-1)
            floor_gap = float(np.max(self.a_bound - self.u_prime(tot)))
            if floor_gap > 1e-12:
                raise ConditionError(f"u'(1'z) falls below a by {floor_gap:.3g}")
        if abs(float(self.u(0.0))) > 0.0:
            raise ConditionError("u(0) must be 0")
        return {"growth_bound_slack": worst, "floor_slack": floor_gap}


@dataclass(frozen=True)
class LucasParams:
    """Assets, preferences, discounting, dividend kernel, and holdings cap."""

    k_assets: int
    utility: IsoelasticPlusLinearUtility
    beta: float
    kernel: TransitionKernel
    x_bar: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ConditionError("beta must lie in (0, 1)")
        if self.x_bar <= 1.0:
            raise ConditionError("x_bar must exceed 1 (unit holdings must be interior)")
        if self.kernel.dim != self.k_assets:
            raise ConditionError("kernel dimension must match the number of assets")
        if isinstance(self.kernel, LogLogARKernel):
            self.kernel.check_unit_root_condition(self.beta)


# ---------------------------------------------------------------------------
# Price-side solves
# ---------------------------------------------------------------------------

def h_function(i: int, z, P: LucasParams) -> float:
    """``h_i(z) = beta * E_z[z'_i u'(1'z')]`` by kernel quadrature."""
    nodes, weights = P.kernel.successors(z)
    vals = nodes[:, i] * P.utility.u_prime(nodes.sum(axis=1))
    if not np.all(np.isfinite(vals)):
        bad = nodes[~np.isfinite(vals)][0]
        raise NumericError(f"integrand not finite at successor node {bad}")
    return P.beta * float(weights @ vals)


def h_table(P: LucasParams, z_nodes: np.ndarray) -> np.ndarray:
    """``h_i`` at every stored node, shape ``(m, k)``."""
    z_nodes = np.atleast_2d(z_nodes)
    return np.array([[h_function(i, z, P) for i in range(P.k_assets)]
                     for z in z_nodes])


def _successor_matrix(P: LucasParams, z_nodes: np.ndarray) -> np.ndarray:
    """Row-stochastic matrix of the quadrature chain on the stored nodes."""
    z_nodes = np.atleast_2d(z_nodes)
    m = z_nodes.shape[0]
    mat = np.zeros((m, m))
    for r, z in enumerate(z_nodes):
        nodes, weights = P.kernel.successors(z)
        for node, w in zip(nodes, weights):
            hits = np.all(np.isclose(z_nodes, node, rtol=1e-9, atol=1e-12), axis=1)
            idx = np.flatnonzero(hits)
            if idx.size == 0:
                raise GridError(f"missing successor node {node} of shock {z}")
            mat[r, idx[0]] += w
    return mat


def solve_phi(i: int, P: LucasParams, z_nodes: np.ndarray, tol: float = 1e-10,
              max_sweeps: int = 100000) -> np.ndarray:
    """Fixed point of the affine operator ``f -> h_i + beta E[f]``, from zero.

    Per-node absolute residual below ``tol``; raises
    :class:`DivergenceError` when residuals grow over ten sweeps.
    """
    z_nodes = np.atleast_2d(z_nodes)
    h = np.array([h_function(i, z, P) for z in z_nodes])
    mat = _successor_matrix(P, z_nodes)
    f = np.zeros(z_nodes.shape[0])
    prev_res = np.inf
    growth_streak = 0
    for _ in range(max_sweeps):
        f_next = h + P.beta * (mat @ f)
        res = float(np.max(np.abs(f_next - f)))
        if not np.isfinite(res):
            raise NumericError("price iteration produced a non-finite value")
        growth_streak = growth_streak + 1 if res > prev_res else 0
        if growth_streak >= 10:
            raise DivergenceError("price-equation residuals grew for 10 sweeps")
        prev_res = res
        f = f_next
        if res <= tol:
            return f
    raise DivergenceError(f"price equation not converged within {max_sweeps} sweeps")


def neumann_phi(i: int, P: LucasParams, z_nodes: np.ndarray, terms: int) -> np.ndarray:
    """Truncated series ``sum_{t<=T} beta^t M^t h_i`` via the chain matrix.

    An accumulation route independent of the fixed-point sweep, for
    cross-checks.
    """
    z_nodes = np.atleast_2d(z_nodes)
    h = np.array([h_function(i, z, P) for z in z_nodes])
    mat = _successor_matrix(P, z_nodes)
    total = h.copy()
    term = h.copy()
    for _ in range(terms):
        term = P.beta * (mat @ term)
        total += term
    return total


@dataclass
class PriceFunction:
    """Per-asset price components on the stored dividend nodes."""

    z_nodes: np.ndarray
    phi: np.ndarray     # (m, k)
    prices: np.ndarray  # (m, k)

    def row(self, z) -> np.ndarray:
        hits = np.all(np.isclose(self.z_nodes, np.atleast_1d(z), rtol=1e-9, atol=1e-12),
                      axis=1)
        idx = np.flatnonzero(hits)
        if idx.size == 0:
            raise GridError(f"dividend node {z} is not stored")
        return self.prices[idx[0]]

    def rows(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        if Z.shape[0] == 1:
            return self.row(Z[0])[None, :]
        out = np.empty((Z.shape[0], self.prices.shape[1]))
        assigned = np.zeros(Z.shape[0], dtype=bool)
        for j, node in enumerate(self.z_nodes):
            mask = np.all(np.isclose(Z, node, rtol=1e-9, atol=1e-12), axis=1) & ~assigned
            if mask.any():
                out[mask] = self.prices[j]
                assigned |= mask
        if not assigned.all():
            raise GridError(f"dividend node {Z[~assigned][0]} is not stored")
        return out

    def write_csv(self, path, bound_constants=None) -> None:
        k = self.prices.shape[1]
        header = [f"z{j + 1}" for j in range(self.z_nodes.shape[1])]
        for i in range(k):
            header += [f"phi{i + 1}", f"p{i + 1}", f"bound{i + 1}"]
        lines = [",".join(header)]
        for r, z in enumerate(self.z_nodes):
            cells = [repr(float(v)) for v in z]
            for i in range(k):
                cells.append(repr(float(self.phi[r, i])))
                cells.append(repr(float(self.prices[r, i])))
                if bound_constants is not None:
                    a_vec, b = bound_constants[i]
                    cells.append(repr(float(a_vec @ z + b)))
                else:
                    cells.append(repr(float("nan")))
            lines.append(",".join(cells))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def price_from_phi(phi: np.ndarray, P: LucasParams, z_nodes: np.ndarray) -> PriceFunction:
    """``p_i(z) = phi_i(z) / u'(1'z)``; the floor ``u' >= a`` is enforced."""
    z_nodes = np.atleast_2d(z_nodes)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    marg = P.utility.u_prime(z_nodes.sum(axis=1))
    if np.any(marg < P.utility.a_bound - 1e-12):
        bad = z_nodes[np.argmin(marg)]
        raise ConditionError(f"u'(1'z) below the floor a at node {bad}")
    return PriceFunction(z_nodes=z_nodes, phi=phi, prices=phi / marg[:, None])


def price_bound_constants(P: LucasParams) -> list[tuple[np.ndarray, float]]:
    """Affine price-bound constants per asset: ``p_i(z) <= a_i'z + b_i``.

    Linear-AR dividends: ``a_i = gamma (I - beta B)^{-T} 1 / a`` and
    ``b_i = (gamma 1'E[w] + delta) / (a (1 - beta))``.  Log-log dividends
    (support in ``[1, inf)``): componentwise
    ``a_i[j] = gamma E[w_j]^{1/(1-rho_j)} / (a (1 - beta))`` for
    ``rho_j < 1`` and ``gamma / (a (1 - beta E[w_j]))`` at unit roots.
    """
    gam = P.utility.gamma_bound
    dlt = P.utility.delta_bound
    a = P.utility.a_bound
    k = P.k_assets
    if isinstance(P.kernel, LinearARKernel):
        if P.beta * P.kernel.norm_B >= 1.0:
            raise ConditionError("spectral condition beta*||B|| < 1 fails")
        ones = np.ones(k)
        a_vec = gam * np.linalg.solve((np.eye(k) - P.beta * P.kernel.B).T, ones) / a
        b = (gam * float(ones @ np.atleast_1d(P.kernel.law.mean())) + dlt) / (a * (1.0 - P.beta))
        return [(a_vec.copy(), b) for _ in range(k)]
    if isinstance(P.kernel, LogLogARKernel):
        mean_w = np.atleast_1d(P.kernel.law.mean())
        if np.any(~np.isfinite(mean_w)):
            raise ConditionError("innovation mean must be finite")
        a_vec = np.empty(k)
        for j, r in enumerate(P.kernel.rho):
            if r == 1.0:
                if P.beta * mean_w[j] >= 1.0:
                    raise ConditionError(
                        f"unit-root component {j} needs beta*E[w] < 1 "
                        f"(got {P.beta * mean_w[j]:.6g})")
                a_vec[j] = gam / (a * (1.0 - P.beta * mean_w[j]))
            else:
                a_vec[j] = gam * mean_w[j] ** (1.0 / (1.0 - r)) / (a * (1.0 - P.beta))
        b = dlt / (a * (1.0 - P.beta))
        return [(a_vec.copy(), b) for _ in range(k)]
    raise ConditionError(f"no affine bound for kernel {type(P.kernel).__name__}")


def affine_bound_gap(price: PriceFunction, constants) -> float:
    """Worst violation ``p_i(z) - (a_i'z + b_i)`` over nodes and assets."""
    worst = -np.inf
    for i, (a_vec, b) in enumerate(constants):
        bound = price.z_nodes @ a_vec + b
        worst = max(worst, float(np.max(price.prices[:, i] - bound)))
    return worst


def phi_series_bound(P: LucasParams, z) -> float:
    """Closed-form bound on the price-component series, ``a * (a_i'z + b_i)``."""
    a_vec, b = price_bound_constants(P)[0]
    return P.utility.a_bound * (float(a_vec @ np.atleast_1d(z)) + b)


def household_R0(P: LucasParams, constants, z_nodes: np.ndarray, monitored_z,
                 tol: float = 1e-12, max_terms: int = 100000) -> dict:
    """Certified radius of the household value over the full holdings box.

    Builds the bound sequence ``l_0(z) = u(xbar'b) + u'(xbar'b) xbar'(I + A')z``
    (prices replaced by their affine bound), iterates
    ``l_{t+1} = beta E_z[l_t]`` on the stored nodes, and accumulates
    ``R0(z) = sum_t E_z[l_t]``.
    """
    z_nodes = np.atleast_2d(z_nodes)
    k = P.k_assets
    A_cols = np.stack([a for a, _ in constants], axis=1)  # column i = a_i
    b = np.array([bb for _, bb in constants])
    xbar = np.full(k, P.x_bar)
    s0 = float(xbar @ b)
    if s0 <= 0:
        raise ConditionError("affine bound intercepts must be positive")
    slope = P.utility.u_prime(s0)
    coef = xbar @ (np.eye(k) + A_cols.T)

    def l0(nodes):
        return float(P.utility.u(s0)) + slope * (np.atleast_2d(nodes) @ coef)

    mat = _successor_matrix(P, z_nodes)
    lt = l0(z_nodes)
    total = np.zeros(z_nodes.shape[0])
    for _ in range(max_terms):
        expect = mat @ lt          # E_z[l_t]
        total += expect
        lt = P.beta * expect
        if float(np.max(lt)) <= tol:
            break
    else:
        raise DivergenceError("household bound series did not converge")
    out = {}
    for z in np.atleast_2d(np.asarray(monitored_z, dtype=float)):
        hits = np.all(np.isclose(z_nodes, z, rtol=1e-9, atol=1e-12), axis=1)
        idx = np.flatnonzero(hits)
        if idx.size == 0:
            raise GridError(f"monitored shock {z} is not a stored node")
        out[tuple(float(v) for v in z)] = float(total[idx[0]])
    return out


# ---------------------------------------------------------------------------
# Household problem
# ---------------------------------------------------------------------------

def build_household_model(P: LucasParams, price: PriceFunction) -> ModelSpec:
    """Holdings problem on ``X = [0, x_bar]^k`` with the budget correspondence."""

    def utility(X, Y, Z):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        p = price.rows(Z)
        wealth = np.sum(X * Z, axis=1) + np.sum(X * p, axis=1)
        c = np.maximum(wealth - np.sum(Y * p, axis=1), 0.0)
        return P.utility.u(c)

    def bounds(x, z):
        p = price.row(z)
        w = float(np.atleast_1d(x) @ (np.atleast_1d(z) + p))
        hi = np.minimum(np.full(P.k_assets, P.x_bar), w / np.maximum(p, 1e-300))
        return np.zeros(P.k_assets), hi

    predicate = None
    project = None
    if P.k_assets > 1:
        def predicate(Y, x, z):
            p = price.row(z)
            w = float(np.atleast_1d(x) @ (np.atleast_1d(z) + p))
            return Y @ p <= w + 1e-12

        def project(Y, x, z):
            p = price.row(z)
            w = float(np.atleast_1d(x) @ (np.atleast_1d(z) + p))
            spend = np.maximum(Y @ p, 1e-300)
            return Y * np.minimum(1.0, w / spend)[:, None]

    return ModelSpec(utility=utility, gamma=FeasibleSet(bounds, predicate, project),
                     beta=P.beta, kernel=P.kernel,
                     x_lo=np.zeros(P.k_assets), x_hi=np.full(P.k_assets, P.x_bar),
                     name="lucas-household")


def solve_household(P: LucasParams, price: PriceFunction, x_grids,
                    value_tol: float = 1e-9, max_iter: int = 100000,
                    opts: MaximizerOptions | None = None, threads: int = 1):
    """Solve the holdings problem with the trivial monitored family ``{X}``."""
    model = build_household_model(P, price)
    probe = ValueFunction.constant(x_grids, price.z_nodes, 0.0)
    Ks = [CompactSetSpec.hull("X", probe.x_grids)]
    family = seminorm_family(P.kernel, Ks, price.z_nodes, include_sup=True)
    opts = opts or MaximizerOptions()

    def T(f):
        return apply_bellman(f, model, opts=opts, threads=threads)

    v0 = ValueFunction.constant(probe.x_grids, price.z_nodes, 0.0)
    v, report = iterate_fixed_point(T, family, v0, stop=value_tol, max_iter=max_iter)
    policy = extract_policy(v, model, opts=opts, threads=threads)
    return v, policy, report, model


def equilibrium_gap(policy, P: LucasParams) -> float:
    """Largest deviation of the policy from unit holdings at ``x = 1``."""
    ones = np.ones(P.k_assets)
    worst = 0.0
    for z in policy.z_nodes:
        worst = max(worst, float(np.max(np.abs(policy(ones, z) - ones))))
    return worst
