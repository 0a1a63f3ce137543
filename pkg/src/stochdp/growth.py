"""Stochastic endogenous growth with physical and human capital.

The planner chooses consumption, leisure, and next-period capital stocks
subject to

    c + k' + h' <= z A k^a (n h)^(1-a) + (1 - d_k) k + (1 - d_h) h,
    l + n <= 1,

with period utility ``c^(1-s) * l^(psi (1-s)) / (1 - s)`` and a
multiplicative shock ``ln z' = rho ln z + ln w`` on ``Z = [1, inf)``.
Admissibility of the unbounded problem reduces to the scalar condition
``beta * gamma^(1-s) * Theta < 1`` with ``gamma = A a^a (1-a)^(1-a) + 1 - d``
and ``Theta`` the relevant innovation moment; the certificate and the
closed-form radius table are built from the potential function
``g(k, h) = A k^a h^(1-a) + (1 - d)(k + h)`` (hours at their upper bound).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bellman import (BellmanCop, FeasibleSet, MaximizerOptions, ModelSpec,
                      apply_bellman, extract_policy, golden_max, psi as compute_psi,
                      seminorm_family)
from .contraction import IterationReport, iterate_fixed_point
from .errors import ConditionError
from .kernels import (InnovationLaw, KernelQuadrature, LogLogARKernel, moment_theta,
                      successor_closed_nodes)
from .ledger import BoundLedger, verify_B6_geometric
from .values import CompactSetSpec, ValueFunction

__all__ = [
    "GrowthParams",
    "gamma_const",
    "theta_const",
    "check_growth_condition",
    "g_potential",
    "growth_l0",
    "growth_R0",
    "lagrange_relaxation_optimum",
    "build_kernel",
    "build_model",
    "single_capital_model",
    "GrowthSolution",
    "solve_growth",
]

_TINY = 1e-300


@dataclass(frozen=True)
class GrowthParams:
    """Primitives of the growth model; ranges checked at construction."""

    A: float
    alpha: float
    sigma: float
    psi_leisure: float
    delta_k: float
    delta_h: float
    beta: float
    rho: float
    innovation: InnovationLaw
    quadrature: KernelQuadrature = field(default_factory=KernelQuadrature)

    def __post_init__(self):
        checks = [
            (self.A > 0, "A must be positive"),
            (0.0 < self.alpha < 1.0, "alpha must lie in (0, 1)"),
            (0.0 <= self.sigma < 1.0, "sigma must lie in [0, 1)"),
            (self.psi_leisure >= 0.0, "psi_leisure must be nonnegative"),
            (0.0 <= self.delta_k <= 1.0, "delta_k must lie in [0, 1]"),
            (0.0 <= self.delta_h <= 1.0, "delta_h must lie in [0, 1]"),
            (0.0 < self.beta < 1.0, "beta must lie in (0, 1)"),
            (0.0 <= self.rho < 1.0, "rho must lie in [0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConditionError(msg)
        if np.any(self.innovation.support_min() < 1.0 - 1e-12):
            raise ConditionError("innovations must be supported on [1, inf)")

    @property
    def delta_min(self) -> float:
        return min(self.delta_k, self.delta_h)


def gamma_const(p: GrowthParams) -> float:
    """``gamma = A a^a (1-a)^(1-a) + 1 - min(d_k, d_h)``."""
    a = p.alpha
    return p.A * a ** a * (1.0 - a) ** (1.0 - a) + (1.0 - p.delta_min)


def theta_const(p: GrowthParams) -> float:
    """Innovation moment ``Theta = E[w^((1-sigma)/(1-rho))]``."""
    return moment_theta(p.sigma, p.rho, p.innovation)


def check_growth_condition(p: GrowthParams) -> tuple[bool, float]:
    """Admissibility gate ``beta * gamma^(1-sigma) * Theta < 1``."""
    value = p.beta * gamma_const(p) ** (1.0 - p.sigma) * theta_const(p)
    return value < 1.0, value


def g_potential(p: GrowthParams, k, h):
    """``g(k, h) = A k^a h^(1-a) + (1 - d)(k + h)`` with hours at 1."""
    k = np.asarray(k, dtype=float)
    h = np.asarray(h, dtype=float)
    return p.A * k ** p.alpha * h ** (1.0 - p.alpha) + (1.0 - p.delta_min) * (k + h)


def growth_l0(p: GrowthParams):
    """The certified bound ``l0(k, h, z) = z^((1-s)/(1-r)) g(k, h)^(1-s) / (1-s)``.

    Returned as a vectorized callable ``(X (N, 2), z) -> (N,)``; feeds the
    drift audit with ``alpha = gamma^(1-sigma) * Theta``.
    """
    expo = (1.0 - p.sigma) / (1.0 - p.rho)
    oms = 1.0 - p.sigma

    def l0(X, z):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        zv = float(np.atleast_1d(z)[0])
        return zv ** expo * g_potential(p, X[:, 0], X[:, 1]) ** oms / oms

    return l0


def growth_R0(p: GrowthParams, K: CompactSetSpec, z) -> float:
    """Closed-form radius ``Theta/(1 - beta gamma^(1-s) Theta) * z^(r(1-s)/(1-r)) * max_K g^(1-s)``."""
    holds, value = check_growth_condition(p)
    if not holds:
        raise ConditionError(f"growth condition fails (beta*gamma^(1-sigma)*Theta = {value:.6g})")
    theta = theta_const(p)
    if K.points is not None:
        pts = np.asarray(K.points, dtype=float)
        gmax = float(np.max(g_potential(p, pts[:, 0], pts[:, 1])))
    else:
        # g is increasing in both arguments, so the box maximum sits at the
        # upper corner.
        gmax = float(g_potential(p, K.hi[0], K.hi[1]))
    zv = float(np.atleast_1d(z)[0])
    expo = p.rho * (1.0 - p.sigma) / (1.0 - p.rho)
    return theta / (1.0 - value) * zv ** expo * gmax ** (1.0 - p.sigma)


def lagrange_relaxation_optimum(p: GrowthParams, k: float, h: float, z: float):
    """Optimum of ``max g(k', h')^(1-s)`` over ``k' + h' <= z g(k, h)``.

    The budget binds and splits Cobb-Douglas style: ``k' = a z g``,
    ``h' = (1 - a) z g``, with value ``(gamma z g(k, h))^(1-s)``.
    """
    if z < 1.0:
        raise ConditionError("the relaxed problem assumes z >= 1")
    S = float(z) * float(g_potential(p, k, h))
    k_next = p.alpha * S
    h_next = (1.0 - p.alpha) * S
    value = (gamma_const(p) * S) ** (1.0 - p.sigma)
    return k_next, h_next, value


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------

def build_kernel(p: GrowthParams) -> LogLogARKernel:
    return LogLogARKernel([p.rho], p.innovation, p.quadrature, beta=p.beta)


def _resources(p: GrowthParams, k, h, z):
    """Maximum attainable resources (hours at 1): output plus undepreciated stocks."""
    return (z * p.A * k ** p.alpha * h ** (1.0 - p.alpha)
            + (1.0 - p.delta_k) * k + (1.0 - p.delta_h) * h)


def _growth_utility(p: GrowthParams):
    oms = 1.0 - p.sigma
    leis = p.psi_leisure * oms

    def utility(X, Y, Z):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        k, h = X[:, 0], X[:, 1]
        z = Z[:, 0]
        prod = z * p.A * k ** p.alpha * h ** (1.0 - p.alpha)
        keep = (1.0 - p.delta_k) * k + (1.0 - p.delta_h) * h
        spend = Y[:, 0] + Y[:, 1]
        if p.psi_leisure == 0.0:
            c = np.maximum(prod + keep - spend, 0.0)
            return c ** oms / oms
        # Hours solve a one-dimensional concave problem per action row.
        need = spend - keep
        base = np.broadcast_to(prod, need.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            n_min = np.where(need <= 0.0, 0.0,
                             (need / np.maximum(base, _TINY)) ** (1.0 / (1.0 - p.alpha)))
        n_min = np.clip(n_min, 0.0, 1.0)

        def period_value(n):
            c = np.maximum(base * n ** (1.0 - p.alpha)
                           + np.broadcast_to(keep, need.shape) - spend, 0.0)
            return c ** oms * (1.0 - n) ** leis / oms

        _, vals = golden_max(period_value, n_min, np.ones_like(n_min), tol=1e-10)
        return vals

    return utility


def build_model(p: GrowthParams, kernel: LogLogARKernel | None = None) -> ModelSpec:
    """Two-stock planner problem as a generic dynamic program.

    Actions are next-period stocks ``(k', h')`` on the simplex
    ``k' + h' <= resources(k, h, z)``; the static consumption/hours choice is
    folded into the return function.
    """
    kernel = kernel or build_kernel(p)

    def bounds(x, z):
        f1 = float(_resources(p, x[0], x[1], np.atleast_1d(z)[0]))
        return np.array([0.0, 0.0]), np.array([f1, f1])

    def predicate(Y, x, z):
        f1 = _resources(p, x[0], x[1], np.atleast_1d(z)[0])
        return Y[:, 0] + Y[:, 1] <= f1 + 1e-12

    def project(Y, x, z):
        f1 = _resources(p, x[0], x[1], np.atleast_1d(z)[0])
        spend = np.maximum(Y[:, 0] + Y[:, 1], _TINY)
        scale = np.minimum(1.0, f1 / spend)
        return Y * scale[:, None]

    return ModelSpec(utility=_growth_utility(p),
                     gamma=FeasibleSet(bounds, predicate, project),
                     beta=p.beta, kernel=kernel,
                     x_lo=np.array([0.0, 0.0]), x_hi=np.array([np.inf, np.inf]),
                     name="growth")


def single_capital_model(A: float, alpha: float, sigma: float, delta_k: float,
                         beta: float, innovation: InnovationLaw,
                         quadrature: KernelQuadrature = KernelQuadrature(),
                         rho: float = 0.0) -> ModelSpec:
    """One-sector variant: a single stock, hours fixed at 1, no leisure.

    ``c + k' <= z A k^alpha + (1 - delta_k) k``; used by the discrete-oracle
    comparisons.
    """
    if not 0.0 <= sigma < 1.0:
        raise ConditionError("sigma must lie in [0, 1)")
    kernel = LogLogARKernel([rho], innovation, quadrature, beta=beta)
    oms = 1.0 - sigma

    def resources(k, z):
        return z * A * k ** alpha + (1.0 - delta_k) * k

    def utility(X, Y, Z):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        c = np.maximum(resources(X[:, 0], Z[:, 0]) - Y[:, 0], 0.0)
        return c ** oms / oms

    def bounds(x, z):
        top = float(resources(x[0], np.atleast_1d(z)[0]))
        return np.array([0.0]), np.array([top])

    return ModelSpec(utility=utility, gamma=FeasibleSet(bounds), beta=beta,
                     kernel=kernel, x_lo=np.array([0.0]), x_hi=np.array([np.inf]),
                     name="growth-single")


# ---------------------------------------------------------------------------
# End-to-end solve
# ---------------------------------------------------------------------------

@dataclass
class GrowthSolution:
    value: ValueFunction
    policy: object
    report: IterationReport
    ledger: BoundLedger
    model: ModelSpec
    cop: BellmanCop
    psi_table: ValueFunction
    condition_value: float


def solve_growth(p: GrowthParams, x_grids, z_seeds, Ks=None, monitored_z=None,
                 value_tol: float = 1e-8, max_iter: int = 2000,
                 opts: MaximizerOptions | None = None, threads: int = 1,
                 audit_factor: int = 2) -> GrowthSolution:
    """Full pipeline: admissibility gate, kernel and grid construction, drift
    certificate, certified value iteration from zero, policy extraction.

    Raises :class:`ConditionError` when the admissibility condition fails.
    """
    holds, value = check_growth_condition(p)
    if not holds:
        raise ConditionError(
            f"growth condition fails: beta*gamma^(1-sigma)*Theta = {value:.6g} >= 1")
    kernel = build_kernel(p)
    z_nodes = successor_closed_nodes(kernel, np.atleast_2d(np.asarray(z_seeds, dtype=float)))
    model = build_model(p, kernel)
    probe = ValueFunction.constant(x_grids, z_nodes, 0.0)
    if Ks is None:
        Ks = [CompactSetSpec.hull("X", probe.x_grids)]
    if monitored_z is None:
        monitored_z = z_nodes
    opts = opts or MaximizerOptions()
    model.validate_on_grid(probe.x_grids, z_nodes)

    psi_table = compute_psi(model, probe.x_grids, z_nodes, opts=opts, threads=threads)
    alpha = gamma_const(p) ** (1.0 - p.sigma) * theta_const(p)
    ledger = verify_B6_geometric(growth_l0(p), model, probe.x_grids, z_nodes, Ks,
                                 monitored_z, alpha, psi_table=psi_table,
                                 audit_factor=audit_factor)
    cop = BellmanCop(model, probe.x_grids, z_nodes, Ks, monitored_z)
    d0 = cop.profile(psi_table)
    family = seminorm_family(kernel, Ks, monitored_z, include_sup=True)

    def T(f):
        return apply_bellman(f, model, opts=opts, threads=threads)

    v0 = ValueFunction.constant(probe.x_grids, z_nodes, 0.0)
    v_star, report = iterate_fixed_point(T, family, v0, stop=value_tol,
                                         max_iter=max_iter, cop=cop, cop_d0=d0,
                                         tail=ledger.R0)
    policy = extract_policy(v_star, model, opts=opts, threads=threads)
    return GrowthSolution(value=v_star, policy=policy, report=report, ledger=ledger,
                          model=model, cop=cop, psi_table=psi_table,
                          condition_value=value)
