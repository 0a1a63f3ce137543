"""A Markov operator that breaks continuity on unbounded functions.

The kernel on ``Z = [0, inf)`` mixes a Dirac mass at zero, an atom-plus-
density law for ``0 < z < 1`` (atom of mass ``1 - z`` at zero, density
``z^2`` on ``(0, 1/z]``), and Lebesgue measure on ``[0, 1]`` for ``z >= 1``.
Its conditional-expectation operator maps bounded measurable functions to
continuous ones, yet the image of the unbounded identity jumps at zero:
``(Mg)(0) = 0`` while ``(Mg)(z) = 1/2`` for every ``z > 0``.

A linear-utility currency economy driven by this kernel then has a
discontinuous value function; the tabulated piecewise form and its Bellman
residual live here as well.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad

from .errors import ConditionError, NumericError

__all__ = [
    "markov_image",
    "discontinuity_gap",
    "currency_value",
    "currency_dp_residual",
    "currency_claim_gap",
]


def _adaptive(f, lo: float, hi: float, tol: float) -> float:
    val, err, *rest = quad(f, lo, hi, epsabs=tol / 10.0, epsrel=tol / 10.0,
                           limit=200, full_output=1)
    if len(rest) > 1:  # an explanation string signals non-convergence
        raise NumericError(f"adaptive quadrature failed on [{lo}, {hi}]: {rest[1]}")
    if not np.isfinite(val) or err > max(tol, tol * abs(val)):
        raise NumericError(f"adaptive quadrature error {err:.3g} above {tol:.3g} "
                           f"on [{lo}, {hi}]")
    return float(val)


def markov_image(f, z: float, tol: float = 1e-10) -> float:
    """``(Mf)(z)``, evaluated piecewise exactly.

    ``f(0)`` at ``z = 0``; ``f(0)(1 - z) + z^2 * int_0^{1/z} f`` for
    ``0 < z < 1``; ``int_0^1 f`` for ``z >= 1``.  Inner integrals use
    adaptive quadrature to ``tol``.
    """
    z = float(z)
    if z < 0:
        raise ConditionError("the kernel lives on z >= 0")
    if z == 0.0:
        return float(f(0.0))
    if z < 1.0:
        return float(f(0.0)) * (1.0 - z) + z * z * _adaptive(f, 0.0, 1.0 / z, tol)
    return _adaptive(f, 0.0, 1.0, tol)


def discontinuity_gap(f, z_small: float) -> float:
    """``|(Mf)(z_small) - (Mf)(0)|``; equals 1/2 for the identity, any small z."""
    if not 0.0 < z_small <= 0.1:
        raise ConditionError("z_small must lie in (0, 0.1]")
    return abs(markov_image(f, z_small) - markov_image(f, 0.0))


def currency_value(m: float, z: float, y: float, beta: float) -> float:
    """Tabulated solution of the linear-utility currency economy.

    ``v(m, z) = m + y + y beta/(1-beta)`` at ``z = 0`` and
    ``(1 + z)(m + y) + (3/2) y beta/(1-beta)`` for ``z > 0``; requires
    ``m >= 0``, ``y > 0``, and ``(3/2) beta < 1``.
    """
    if m < 0:
        raise ConditionError("money holdings must be nonnegative")
    if y <= 0:
        raise ConditionError("the endowment y must be positive")
    if not 0.0 < beta < 1.0 or 1.5 * beta >= 1.0:
        raise ConditionError("the discount factor must satisfy (3/2) beta < 1")
    if z < 0:
        raise ConditionError("the shock must be nonnegative")
    if z == 0.0:
        return m + y + y * beta / (1.0 - beta)
    return (1.0 + z) * (m + y) + 1.5 * y * beta / (1.0 - beta)


def currency_dp_residual(m: float, z: float, y: float, beta: float,
                         tol: float = 1e-10) -> float:
    """Bellman residual of :func:`currency_value` at one state.

    Computes ``v(m, z) - max_{m' in [0, m+y]} {(1+z)(m+y-m') + beta (Mv)(m', z)}``
    with the expectation taken by :func:`markov_image`.  The objective is
    affine in ``m'`` (the tabulated form is affine in money), so the maximum
    sits at an endpoint; an interior probe guards the claim.
    """
    def continuation(m_next: float) -> float:
        return markov_image(lambda zp: currency_value(m_next, zp, y, beta), z, tol)

    def objective(m_next: float) -> float:
        return (1.0 + z) * (m + y - m_next) + beta * continuation(m_next)

    best = max(objective(0.0), objective(m + y), objective((m + y) / 2.0))
    return currency_value(m, z, y, beta) - best


def currency_claim_gap(z: float, y: float, beta: float) -> float:
    """Exact Bellman residual of the tabulated form, by direct integration.

    Zero at ``z = 0`` and for ``z >= 1``; equals
    ``beta^2 y (1 - z) / (2 (1 - beta))`` on ``0 < z < 1``, where the
    kernel's atom at zero pulls the continuation below the tabulated level.
    """
    if z <= 0.0 or z >= 1.0:
        return 0.0
    return beta * beta * y * (1.0 - z) / (2.0 * (1.0 - beta))
