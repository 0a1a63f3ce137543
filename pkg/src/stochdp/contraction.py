"""Fixed-point engine for locally contractive maps.

The contraction behavior of the iterated map ``T`` is encoded by a companion
operator ``L`` acting on tables of seminorm (pseudometric) values: for every
index ``a`` of the monitored family, ``d_a(Tx, Ty) <= (L d^{x,y})(a)``.  The
engine iterates ``T`` and, when the companion operator and a summable bound
table are supplied, certifies residual decay and distance-to-fixed-point
bounds from partial sums of ``sum_t L^t r_0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConditionError, DivergenceError, NumericError

__all__ = [
    "SeminormTable",
    "PseudometricFamily",
    "CopOperator",
    "ScaledCop",
    "IterationReport",
    "iterate_fixed_point",
    "cop_series_R0",
    "check_geometric_tail",
    "ball_membership",
    "check_pseudometric_axioms",
]


class SeminormTable:
    """Nonnegative values indexed by a finite family of seminorm labels.

    ``gamma`` optionally carries the grid view of the table composed with the
    feasible correspondence (the function ``(x, z) -> p(Gamma(x, z), z)``),
    which is what the Bellman companion operator acts on.
    """

    def __init__(self, labels, values, gamma: np.ndarray | None = None):
        self.labels = tuple(labels)
        self.values = np.asarray(values, dtype=float).ravel()
        if self.values.shape != (len(self.labels),):
            raise ConditionError("label/value length mismatch in seminorm table")
        self.gamma = None if gamma is None else np.asarray(gamma, dtype=float)

    @classmethod
    def constant(cls, labels, c: float, gamma_shape=None) -> "SeminormTable":
        gamma = None if gamma_shape is None else np.full(gamma_shape, float(c))
        return cls(labels, np.full(len(tuple(labels)), float(c)), gamma)

    def copy(self) -> "SeminormTable":
        return SeminormTable(self.labels, self.values.copy(),
                             None if self.gamma is None else self.gamma.copy())

    def _check_aligned(self, other: "SeminormTable") -> None:
        if self.labels != other.labels:
            raise ConditionError("seminorm tables are indexed by different families")

    def __add__(self, other: "SeminormTable") -> "SeminormTable":
        self._check_aligned(other)
        gamma = None
        if self.gamma is not None and other.gamma is not None:
            gamma = self.gamma + other.gamma
        return SeminormTable(self.labels, self.values + other.values, gamma)

    def __mul__(self, scalar) -> "SeminormTable":
        s = float(scalar)
        return SeminormTable(self.labels, self.values * s,
                             None if self.gamma is None else self.gamma * s)

    __rmul__ = __mul__

    def max(self) -> float:
        vals = [self.values.max() if self.values.size else 0.0]
        if self.gamma is not None:
            vals.append(self.gamma.max())
        return float(max(vals))

    def leq(self, other: "SeminormTable", rtol: float = 0.0, atol: float = 0.0) -> bool:
        """Pointwise ``self <= other`` within the given slack, gamma included."""
        self._check_aligned(other)
        tol = atol + rtol * np.maximum(np.abs(self.values), np.abs(other.values))
        ok = bool(np.all(self.values <= other.values + tol))
        if ok and self.gamma is not None and other.gamma is not None:
            gtol = atol + rtol * np.maximum(np.abs(self.gamma), np.abs(other.gamma))
            ok = bool(np.all(self.gamma <= other.gamma + gtol))
        return ok

    def as_dict(self) -> dict:
        return {label: float(v) for label, v in zip(self.labels, self.values)}

    def __repr__(self):
        return f"SeminormTable({self.as_dict()!r})"


class CopOperator:
    """Companion operator acting on seminorm tables.

    Required axioms: ``L 0 = 0``, monotone, subadditive.  Implementations
    provide :meth:`apply`; the Bellman instance lives in
    :mod:`stochdp.bellman`.
    """

    def apply(self, table: SeminormTable) -> SeminormTable:
        raise NotImplementedError

    def power(self, table: SeminormTable, t: int) -> SeminormTable:
        out = table
        for _ in range(t):
            out = self.apply(out)
        return out


@dataclass(frozen=True)
class ScaledCop(CopOperator):
    """``L p = theta p``; the companion operator of a Banach contraction."""

    theta: float

    def apply(self, table: SeminormTable) -> SeminormTable:
        return table * self.theta


@dataclass(frozen=True)
class PseudometricFamily:
    """Finite family of pseudometrics ``{d_a}`` with opaque index labels."""

    indices: tuple
    dist: Callable[[Any, Any, Any], float]

    def distances(self, x, y) -> dict:
        return {a: float(self.dist(a, x, y)) for a in self.indices}

    @classmethod
    def absolute(cls) -> "PseudometricFamily":
        """Single-index family given by the absolute value on scalars/arrays."""
        return cls(("abs",), lambda a, x, y: float(np.max(np.abs(np.asarray(x) - np.asarray(y)))))

    @classmethod
    def sup_norm(cls) -> "PseudometricFamily":
        return cls(("sup",), lambda a, x, y: float(np.max(np.abs(np.asarray(x) - np.asarray(y)))))


def check_pseudometric_axioms(family: PseudometricFamily, points, tol: float = 1e-10) -> float:
    """Worst violation of symmetry, identity, and the triangle inequality on sampled points."""
    worst = 0.0
    pts = list(points)
    for a in family.indices:
        for x in pts:
            worst = max(worst, abs(family.dist(a, x, x)))
        for x in pts:
            for y in pts:
                dxy = family.dist(a, x, y)
                if dxy < -tol:
                    raise ConditionError(f"negative pseudometric at index {a}")
                worst = max(worst, abs(dxy - family.dist(a, y, x)))
        for x in pts:
            for y in pts:
                for z in pts:
                    gap = family.dist(a, x, z) - family.dist(a, x, y) - family.dist(a, y, z)
                    worst = max(worst, gap)
    return worst


@dataclass
class IterationReport:
    """Outcome of a fixed-point run.

    ``residual_history[t][a]`` is ``d_a(x_t, x_{t+1})``; when a companion
    operator was supplied, ``cop_bound_history`` holds the certified bounds
    ``(L^t d0)(a)`` and ``r0_series_tail`` the final remainder table
    ``L^t R0`` (a certified distance to the fixed point).
    """

    iterations: int
    converged: bool
    final_residuals: dict
    residual_history: list = field(default_factory=list)
    cop_bound_history: list = field(default_factory=list)
    cop_bound_worst_slack: float | None = None
    r0_series_tail: dict | None = None

    def max_residuals(self) -> np.ndarray:
        return np.array([max(r.values()) for r in self.residual_history])

    def geometric_tail_ratio(self, start: int = 5) -> float:
        """Geometric-mean ratio of successive max residuals from ``start`` on."""
        seq = self.max_residuals()
        seq = seq[start:]
        seq = seq[seq > 0]
        if seq.size < 2:
            return 0.0
        return float((seq[-1] / seq[0]) ** (1.0 / (seq.size - 1)))


def _stop_map(stop, indices) -> dict:
    if np.isscalar(stop):
        if stop <= 0:
            raise ConditionError("stopping tolerances must be strictly positive")
        return {a: float(stop) for a in indices}
    out = {a: float(stop[a]) for a in indices}
    if any(v <= 0 for v in out.values()):
        raise ConditionError("stopping tolerances must be strictly positive")
    return out


def iterate_fixed_point(T, family: PseudometricFamily, x0, stop=1e-8, max_iter: int = 1000,
                        cop: CopOperator | None = None, cop_d0: SeminormTable | None = None,
                        cop_tol: float = 1e-8, tail: SeminormTable | None = None,
                        tail_stop: float | None = None):
    """Iterate ``x_{t+1} = T x_t`` until all monitored residuals pass ``stop``.

    Parameters
    ----------
    T : callable
        The map whose fixed point is sought; must be total on the iterates.
    family : PseudometricFamily
        Monitored pseudometrics; convergence requires
        ``d_a(x_t, T x_t) <= stop(a)`` for every index.
    stop : float or mapping
        Per-index absolute residual tolerance.
    cop, cop_d0 : optional
        Companion operator and the table dominating ``d(x0, Tx0)``.  When
        both are given, every residual is checked against the certified bound
        ``(L^t d0)(a) + cop_tol`` and the worst slack is reported; a
        violation raises :class:`ConditionError`.
    tail, tail_stop : optional
        A summable-radius table ``R0`` and a tolerance; the run also stops
        once the remainder ``L^t R0`` falls below ``tail_stop`` everywhere
        (a certified distance-to-fixed-point criterion).

    Returns
    -------
    (point, IterationReport)
        The first iterate whose own residual passed, or the last iterate
        with ``converged=False`` after ``max_iter`` steps (not an error).
    """
    stops = _stop_map(stop, family.indices)
    bound = cop_d0
    remainder = tail
    report = IterationReport(iterations=0, converged=False, final_residuals={})
    worst_slack = -np.inf
    x = x0
    for t in range(max_iter + 1):
        x_next = T(x)
        res = family.distances(x, x_next)
        for a, r in res.items():
            if not np.isfinite(r):
                raise NumericError(f"non-finite residual at iteration {t}, index {a!r}")
        report.residual_history.append(res)
        if cop is not None and bound is not None:
            bound_map = bound.as_dict()
            common = [a for a in family.indices if a in bound_map]
            if common:
                slack = max(res[a] - bound_map[a] for a in common)
                worst_slack = max(worst_slack, slack)
                if slack > cop_tol:
                    bad = max(common, key=lambda a: res[a] - bound_map[a])
                    raise ConditionError(
                        f"residual exceeded certified bound at iteration {t}, index {bad!r} "
                        f"(slack {slack:.3g})")
            report.cop_bound_history.append(bound_map)
        report.iterations = t
        report.final_residuals = res
        tail_ok = True
        if remainder is not None and tail_stop is not None:
            tail_ok = bool(np.all(remainder.values <= tail_stop))
        if all(res[a] <= stops[a] for a in family.indices) and tail_ok:
            report.converged = True
            break
        if t == max_iter:
            x = x_next
            break
        x = x_next
        if cop is not None and bound is not None:
            bound = cop.apply(bound)
        if cop is not None and remainder is not None:
            remainder = cop.apply(remainder)
    if cop is not None and cop_d0 is not None and np.isfinite(worst_slack):
        report.cop_bound_worst_slack = float(worst_slack)
    if remainder is not None:
        report.r0_series_tail = remainder.as_dict()
    return x, report


def cop_series_R0(L: CopOperator, r0: SeminormTable, tail_tol: float = 1e-12,
                  max_terms: int = 10000, probe_window: int = 5) -> SeminormTable:
    """Partial sum of ``sum_t L^t r0`` with the last term below ``tail_tol``.

    Divergence is flagged when some index's terms fail to decrease over
    ``probe_window`` consecutive steps.
    """
    if np.any(r0.values < 0) or not np.all(np.isfinite(r0.values)):
        raise ConditionError("r0 must be nonnegative and finite at every index")
    total = r0.copy()
    term = r0
    flat = np.zeros(len(r0.labels), dtype=int)
    for t in range(1, max_terms + 1):
        new_term = L.apply(term)
        if not np.all(np.isfinite(new_term.values)):
            raise NumericError(f"series term became non-finite at t={t}")
        flat = np.where(new_term.values >= term.values - 1e-300, flat + 1, 0)
        nonzero = new_term.values > tail_tol
        if np.any((flat >= probe_window) & nonzero):
            bad = int(np.argmax((flat >= probe_window) & nonzero))
            raise DivergenceError(
                f"series terms stopped decreasing at index {r0.labels[bad]!r} (t={t})")
        total = total + new_term
        term = new_term
        if np.all(term.values <= tail_tol):
            return total
    raise DivergenceError(f"series tail not below {tail_tol} within {max_terms} terms")


def check_geometric_tail(L: CopOperator, d0: SeminormTable, t0: int,
                         s: SeminormTable, theta: float, rtol: float = 1e-12) -> bool:
    """True iff ``L^{t0} d0 <= s`` and ``L s <= theta s`` hold pointwise."""
    if not 0.0 <= theta < 1.0:
        raise ConditionError("theta must lie in [0, 1)")
    if np.any(s.values < 0) or not np.all(np.isfinite(s.values)):
        raise ConditionError("s must be nonnegative and finite")
    lhs = L.power(d0, t0)
    if not lhs.leq(s, rtol=rtol):
        return False
    return L.apply(s).leq(s * theta, rtol=rtol)


def ball_membership(x, x0, m: SeminormTable, family: PseudometricFamily,
                    rtol: float = 1e-12) -> bool:
    """True iff ``d_a(x0, x) <= m(a)`` at every index of the family."""
    bound = m.as_dict()
    if any(v < 0 for v in bound.values()):
        raise ConditionError("radius table must be nonnegative")
    res = family.distances(x0, x)
    return all(res[a] <= bound[a] * (1 + rtol) + rtol for a in family.indices if a in bound)
