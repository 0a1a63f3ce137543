"""One-step Markov transition kernels for the shock process.

A kernel represents the conditional law of next-period shocks ``z'`` given
the current shock ``z``.  Conditional expectations are computed against a
fixed quadrature representation: every kernel owns a finite set of
innovation nodes and weights, drawn once at construction, so that the
Bellman operator built on top of it is a fixed deterministic map.

Variants
--------
LinearARKernel
    ``z' = B z + w`` with nonnegative ``B``, spectral norm below one, and
    i.i.d. nonnegative innovations (regime M1).
LogLogARKernel
    ``ln z'_i = rho_i ln z_i + ln w_i`` with innovations supported in
    ``[1, inf)`` (regime M2); ``rho = 0`` gives i.i.d. shocks.
DegenerateKernel
    Dirac mass at the current shock (deterministic models).
AppendixCKernel
    The piecewise kernel on ``[0, inf)`` used by the discontinuity example;
    see :mod:`stochdp.counterexample` for its closed-form Markov images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import ConditionError, GridError, NumericError

__all__ = [
    "InnovationLaw",
    "DegenerateLaw",
    "AtomLaw",
    "RectifiedLogNormalLaw",
    "FoldedLogNormalLaw",
    "ShiftedLogNormalLaw",
    "KernelQuadrature",
    "TransitionKernel",
    "LinearARKernel",
    "LogLogARKernel",
    "DegenerateKernel",
    "AppendixCKernel",
    "moment_theta",
    "moment_theta_mc",
    "spectral_norm",
    "successor_closed_nodes",
    "conditional_expectation",
    "sample_path",
]

_NODE_RTOL = 1e-9
_NODE_ATOL = 1e-12


# ---------------------------------------------------------------------------
# Innovation laws
# ---------------------------------------------------------------------------

class InnovationLaw:
    """Law of the i.i.d. innovation vector ``w``.

    Concrete laws provide quadrature nodes, sampling, the mean, and (when a
    closed form exists) a moment oracle ``q -> E[w^q]`` applied
    componentwise.
    """

    dim: int = 1

    def support_min(self) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def moment(self, q: float) -> np.ndarray | None:
        """Componentwise ``E[w^q]`` if a closed form exists, else ``None``."""
        return None

    def nodes(self, n: int, seed: int | None = None):
        """Quadrature nodes and weights, ``(values (N, dim), weights (N,))``."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class DegenerateLaw(InnovationLaw):
    """Point mass at a fixed innovation value."""

    value: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "value", tuple(float(v) for v in np.atleast_1d(self.value)))

    @property
    def dim(self) -> int:
        return len(self.value)

    def support_min(self):
        return np.array(self.value)

    def mean(self):
        return np.array(self.value)

    def moment(self, q):
        return np.array(self.value) ** q

    def nodes(self, n, seed=None):
        return np.array([self.value]), np.array([1.0])

    def sample(self, rng, size):
        return np.tile(self.value, (size, 1))


@dataclass(frozen=True)
class AtomLaw(InnovationLaw):
    """Finitely many weighted atoms; quadrature is exact enumeration."""

    values: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        wts = np.asarray(self.weights, dtype=float)
        if vals.shape[0] != wts.shape[0]:
            raise ConditionError("atom values and weights must have equal length")
        if np.any(wts < 0) or abs(wts.sum() - 1.0) > 1e-12:
            raise ConditionError("atom weights must be nonnegative and sum to 1")
        object.__setattr__(self, "values", tuple(map(tuple, vals)))
        object.__setattr__(self, "weights", tuple(wts))

    @property
    def dim(self) -> int:
        return len(self.values[0])

    def _arrays(self):
        return np.asarray(self.values), np.asarray(self.weights)

    def support_min(self):
        return self._arrays()[0].min(axis=0)

    def mean(self):
        v, w = self._arrays()
        return w @ v

    def moment(self, q):
        v, w = self._arrays()
        return w @ (v ** q)

    def nodes(self, n, seed=None):
        return self._arrays()

    def sample(self, rng, size):
        v, w = self._arrays()
        idx = rng.choice(len(w), size=size, p=w)
        return v[idx]


def _stratified_uniforms(n: int, seed: int | None) -> np.ndarray:
    """Stratified quantile levels ``(i + u_i) / n``; midpoints when unseeded."""
    if seed is None:
        jitter = np.full(n, 0.5)
    else:
        jitter = np.random.default_rng(seed).random(n)
    return (np.arange(n) + jitter) / n


@dataclass(frozen=True)
class RectifiedLogNormalLaw(InnovationLaw):
    """``w = exp(s * max(eps, 0))`` with standard normal ``eps``.

    Support is ``[1, inf)``, so the law is admissible for regime M2.  The
    moment oracle is ``E[w^q] = 1/2 + exp((qs)^2 / 2) * Phi(qs)``.
    """

    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ConditionError("scale must be positive")

    def support_min(self):
        return np.array([1.0])

    def mean(self):
        return self.moment(1.0)

    def moment(self, q):
        a = q * self.scale
        return np.array([0.5 + math.exp(a * a / 2.0) * norm.cdf(a)])

    def _quantile(self, u):
        # P(w <= 1) = 1/2; above that invert the normal tail.
        eps = np.where(u <= 0.5, 0.0, norm.ppf(u))
        return np.exp(self.scale * np.maximum(eps, 0.0))

    def nodes(self, n, seed=None):
        u = _stratified_uniforms(n, seed)
        return self._quantile(u)[:, None], np.full(n, 1.0 / n)

    def sample(self, rng, size):
        eps = rng.standard_normal(size)
        return np.exp(self.scale * np.maximum(eps, 0.0))[:, None]


@dataclass(frozen=True)
class FoldedLogNormalLaw(InnovationLaw):
    """``w = exp(s * |eps|)``, a truncated-density alternative on ``[1, inf)``.

    Moment oracle: ``E[w^q] = 2 exp((qs)^2 / 2) * Phi(qs)``.
    """

    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ConditionError("scale must be positive")

    def support_min(self):
        return np.array([1.0])

    def mean(self):
        return self.moment(1.0)

    def moment(self, q):
        a = q * self.scale
        return np.array([2.0 * math.exp(a * a / 2.0) * norm.cdf(a)])

    def nodes(self, n, seed=None):
        u = _stratified_uniforms(n, seed)
        # |eps| has cdf 2*Phi(x) - 1.
        eps = norm.ppf((u + 1.0) / 2.0)
        return np.exp(self.scale * eps)[:, None], np.full(n, 1.0 / n)

    def sample(self, rng, size):
        eps = np.abs(rng.standard_normal(size))
        return np.exp(self.scale * eps)[:, None]


@dataclass(frozen=True)
class ShiftedLogNormalLaw(InnovationLaw):
    """Mean-shifted lognormal ``w = exp(eps - s^2 / (2 (1 + rho)))``.

    ``eps`` is normal with standard deviation ``s``.  Support is ``(0, inf)``,
    so the law is admissible for regime M1 but not for M2.
    """

    sigma_eps: float
    rho: float = 0.0

    def __post_init__(self):
        if self.sigma_eps <= 0:
            raise ConditionError("sigma_eps must be positive")

    def _shift(self):
        return self.sigma_eps ** 2 / (2.0 * (1.0 + self.rho))

    def support_min(self):
        return np.array([0.0])

    def mean(self):
        return self.moment(1.0)

    def moment(self, q):
        s2 = self.sigma_eps ** 2
        return np.array([math.exp(-q * self._shift() + q * q * s2 / 2.0)])

    def nodes(self, n, seed=None):
        u = _stratified_uniforms(n, seed)
        eps = norm.ppf(u) * self.sigma_eps
        return np.exp(eps - self._shift())[:, None], np.full(n, 1.0 / n)

    def sample(self, rng, size):
        eps = rng.standard_normal(size) * self.sigma_eps
        return np.exp(eps - self._shift())[:, None]


# ---------------------------------------------------------------------------
# Moment helpers
# ---------------------------------------------------------------------------

def moment_theta(sigma: float, rho: float, law: InnovationLaw,
                 mc_draws: int = 10 ** 6, mc_seed: int = 0) -> float:
    """Innovation moment ``E[w^((1 - sigma) / (1 - rho))]`` for a scalar law.

    Uses the law's moment oracle when available, otherwise a seeded
    Monte-Carlo estimate (see :func:`moment_theta_mc`).  Raises
    :class:`NumericError` when the moment is not finite.
    """
    if not (0.0 <= sigma < 1.0 and 0.0 <= rho < 1.0):
        raise ConditionError("moment_theta requires 0 <= sigma < 1 and 0 <= rho < 1")
    q = (1.0 - sigma) / (1.0 - rho)
    exact = law.moment(q)
    if exact is not None:
        value = float(np.asarray(exact).ravel()[0])
    else:
        value, stderr = moment_theta_mc(sigma, rho, law, mc_draws, mc_seed)
        if value > 0 and stderr / value > 0.05:
            raise NumericError(
                f"Monte-Carlo moment estimate unstable (rel. stderr {stderr / value:.2g})")
    if not np.isfinite(value):
        raise NumericError(f"moment of order {q} is not finite")
    return value


def moment_theta_mc(sigma: float, rho: float, law: InnovationLaw,
                    draws: int = 10 ** 6, seed: int = 0) -> tuple[float, float]:
    """Seeded Monte-Carlo estimate of the same moment, with standard error."""
    q = (1.0 - sigma) / (1.0 - rho)
    rng = np.random.default_rng(seed)
    w = law.sample(rng, draws)[:, 0] ** q
    est = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(draws))
    if not np.isfinite(est):
        raise NumericError(f"Monte-Carlo moment of order {q} is not finite")
    return est, se


def spectral_norm(B: np.ndarray, iters: int = 200, tol: float = 1e-10) -> float:
    """Operator 2-norm of ``B`` by power iteration on ``B^T B``."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ConditionError("B must be a square matrix")
    v = np.full(B.shape[0], 1.0 / math.sqrt(B.shape[0]))
    M = B.T @ B
    prev = 0.0
    for _ in range(iters):
        v = M @ v
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            return 0.0
        v /= nrm
        if abs(nrm - prev) <= tol * max(1.0, nrm):
            break
        prev = nrm
    return math.sqrt(float(v @ (M @ v)))


# ---------------------------------------------------------------------------
# Transition kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelQuadrature:
    """Quadrature descriptor: node count, scheme label, and seed."""

    nodes: int = 256
    scheme: str = "stratified"
    seed: int | None = None


class TransitionKernel:
    """Base class; all variants expose the same quadrature interface."""

    dim: int = 1

    def _as_z(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (self.dim,):
            raise GridError(f"shock value of dimension {z.shape} does not match kernel dim {self.dim}")
        return z

    def successors(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature representation ``(nodes (N, dim), weights (N,))`` of ``Q(z, .)``."""
        raise NotImplementedError

    def conditional_expectation(self, f, z) -> float:
        """Quadrature approximation of ``E[f(z') | z]`` for scalar-valued ``f``."""
        nodes, weights = self.successors(z)
        total = 0.0
        for node, w in zip(nodes, weights):
            arg = node[0] if self.dim == 1 else node
            val = float(f(arg))
            if not np.isfinite(val):
                raise NumericError(f"integrand is not finite at successor node {node}")
            total += w * val
        return total

    def conditional_mean(self, z) -> np.ndarray:
        raise ConditionError(f"conditional_mean is not defined for {type(self).__name__}")

    def sample_many(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One step of the chain for a batch of current shocks ``z (N, dim)``."""
        raise NotImplementedError

    def sample(self, z, rng: np.random.Generator) -> np.ndarray:
        return self.sample_many(self._as_z(z)[None, :], rng)[0]


class DegenerateKernel(TransitionKernel):
    """Dirac mass at the current shock."""

    def __init__(self, dim: int = 1):
        self.dim = dim

    def successors(self, z):
        z = self._as_z(z)
        return z[None, :], np.array([1.0])

    def sample_many(self, z, rng):
        return np.array(z, dtype=float, copy=True)


class LinearARKernel(TransitionKernel):
    """Regime M1: ``z' = B z + w`` on the nonnegative orthant."""

    def __init__(self, B, law: InnovationLaw, quadrature: KernelQuadrature = KernelQuadrature()):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if np.any(B < 0):
            raise ConditionError("B must have nonnegative entries")
        self.norm_B = spectral_norm(B)
        if self.norm_B >= 1.0:
            raise ConditionError(f"spectral norm of B is {self.norm_B:.6g}, must be < 1")
        mean_w = law.mean()
        if np.any(~np.isfinite(mean_w)) or np.any(mean_w < 0):
            raise ConditionError("innovation mean must be finite and nonnegative")
        if np.any(law.support_min() < -1e-12):
            raise ConditionError("M1 innovations must be supported on [0, inf)")
        self.B = B
        self.law = law
        self.dim = B.shape[0]
        self.quadrature = quadrature
        self._w_nodes, self._w_weights = law.nodes(quadrature.nodes, quadrature.seed)

    def successors(self, z):
        z = self._as_z(z)
        return self._w_nodes + self.B @ z, self._w_weights

    def conditional_mean(self, z):
        return self.B @ self._as_z(z) + self.law.mean()

    def sample_many(self, z, rng):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return z @ self.B.T + self.law.sample(rng, z.shape[0])


class LogLogARKernel(TransitionKernel):
    """Regime M2: ``z'_i = z_i^rho_i * w_i`` with ``w`` supported in ``[1, inf)``."""

    def __init__(self, rho, law: InnovationLaw, quadrature: KernelQuadrature = KernelQuadrature(),
                 beta: float | None = None):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if np.any(rho < 0) or np.any(rho > 1):
            raise ConditionError("rho components must lie in [0, 1]")
        if np.any(law.support_min() < 1.0 - 1e-12):
            raise ConditionError("M2 innovations must be supported on [1, inf)")
        self.rho = rho
        self.law = law
        self.dim = rho.shape[0]
        self.quadrature = quadrature
        self._w_nodes, self._w_weights = law.nodes(quadrature.nodes, quadrature.seed)
        if beta is not None:
            self.check_unit_root_condition(beta)

    def check_unit_root_condition(self, beta: float) -> None:
        """Unit-root components need ``E[w_i] < 1 / beta``."""
        mean_w = np.atleast_1d(self.law.mean())
        for i, r in enumerate(self.rho):
            if r == 1.0 and not mean_w[i] < 1.0 / beta:
                raise ConditionError(
                    f"component {i} has rho=1 and E[w]={mean_w[i]:.6g} >= 1/beta={1.0 / beta:.6g}")

    def successors(self, z):
        z = self._as_z(z)
        if np.any(z <= 0):
            raise GridError("M2 kernel requires strictly positive shocks")
        return self._w_nodes * z ** self.rho, self._w_weights

    def conditional_mean(self, z):
        return self._as_z(z) ** self.rho * np.atleast_1d(self.law.mean())

    def sample_many(self, z, rng):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return z ** self.rho * self.law.sample(rng, z.shape[0])


class AppendixCKernel(TransitionKernel):
    """Piecewise kernel on ``[0, inf)``: Dirac at zero, a mixed atom-density
    law for ``0 < z < 1``, and Lebesgue measure on ``[0, 1]`` for ``z >= 1``.

    Conditional expectations use adaptive quadrature; see
    :func:`stochdp.counterexample.markov_image`.
    """

    dim = 1

    def successors(self, z):
        raise GridError("AppendixCKernel has no fixed quadrature nodes; "
                        "use conditional_expectation")

    def conditional_expectation(self, f, z):
        from .counterexample import markov_image
        return markov_image(f, float(self._as_z(z)[0]))

    def sample_many(self, z, rng):
        z = np.atleast_2d(np.asarray(z, dtype=float))[:, 0]
        u = rng.random(z.shape[0])
        out = np.zeros_like(z)
        mid = (z > 0) & (z < 1)
        # Atom of mass 1 - z at zero, density z^2 on (0, 1/z].
        take_density = mid & (u > 1.0 - z)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[take_density] = (u[take_density] - (1.0 - z[take_density])) / z[take_density] ** 2
        out[z >= 1] = u[z >= 1]
        return out[:, None]


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def conditional_expectation(f, z, kernel: TransitionKernel) -> float:
    """Functional form of :meth:`TransitionKernel.conditional_expectation`."""
    return kernel.conditional_expectation(f, z)


def sample_path(kernel: TransitionKernel, z0, horizon: int, seed: int) -> np.ndarray:
    """Simulate ``(z_0, ..., z_horizon)``; reproducible per seed."""
    if horizon < 0:
        raise ConditionError("horizon must be nonnegative")
    rng = np.random.default_rng(seed)
    z = np.atleast_1d(np.asarray(z0, dtype=float))
    path = np.empty((horizon + 1, kernel.dim))
    path[0] = z
    for t in range(horizon):
        z = kernel.sample(z, rng)
        path[t + 1] = z
    return path


def _dedupe_rows(rows: np.ndarray) -> np.ndarray:
    kept: list[np.ndarray] = []
    for r in rows:
        if not any(np.allclose(r, k, rtol=_NODE_RTOL, atol=_NODE_ATOL) for k in kept):
            kept.append(r)
    return np.asarray(kept)


def successor_closed_nodes(kernel: TransitionKernel, seeds) -> np.ndarray:
    """Seed shocks plus their quadrature successors, verified to be closed.

    The Markov operator on tabulated functions needs every successor of a
    stored node to be stored itself.  Depth-1 closure is complete exactly
    when the successor set does not depend on the current shock (i.i.d.
    regimes, degenerate kernels, or fixed points of the shock map); other
    kernels raise naming the first escaping node.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    rows = [seeds]
    for z in seeds:
        rows.append(kernel.successors(z)[0])
    nodes = _dedupe_rows(np.vstack(rows))
    order = np.lexsort(nodes.T[::-1])
    nodes = nodes[order]
    for z in nodes:
        succ, _ = kernel.successors(z)
        for s in succ:
            hit = np.all(np.isclose(nodes, s, rtol=_NODE_RTOL, atol=_NODE_ATOL), axis=1)
            if not hit.any():
                raise GridError(
                    f"shock node set is not successor-closed: successor {s} of {z} is missing; "
                    "use an i.i.d. or degenerate kernel, or supply a closed node set")
    return nodes
