"""Brute-force finite dynamic programs used as independent cross-checks.

Everything here is deliberately plain: dense tables, exhaustive action
enumeration, linear solves for policy evaluation.  No code is shared with
the solver engine, so agreement between the two is evidence rather than
tautology.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "policy_value",
    "value_iteration",
    "enumerate_policies_value",
    "two_state_tables",
]


def policy_value(U: np.ndarray, P: np.ndarray, beta: float, policy: np.ndarray) -> np.ndarray:
    """Exact discounted value of a stationary policy by linear solve.

    ``U[i, a, iz]`` is the reward of moving the endogenous state from node
    ``i`` to node ``a`` at shock node ``iz``; ``P[iz, jz]`` the shock chain.
    ``policy[i, iz]`` selects the next endogenous node.  States are the
    pairs ``(i, iz)``.
    """
    nx, _, nz = U.shape
    n = nx * nz
    A = np.eye(n)
    r = np.empty(n)
    for i in range(nx):
        for iz in range(nz):
            s = i * nz + iz
            a = int(policy[i, iz])
            r[s] = U[i, a, iz]
            for jz in range(nz):
                A[s, a * nz + jz] -= beta * P[iz, jz]
    v = np.linalg.solve(A, r)
    return v.reshape(nx, nz)


def value_iteration(U: np.ndarray, P: np.ndarray, beta: float,
                    feasible: np.ndarray | None = None, tol: float = 1e-13,
                    max_iter: int = 10 ** 6):
    """Exhaustive-action value iteration, polished by exact policy evaluation.

    Returns ``(v, policy)`` with ``v`` the linear-solve value of the greedy
    policy at convergence.
    """
    nx, ny, nz = U.shape
    if feasible is None:
        feasible = np.ones((nx, ny, nz), dtype=bool)
    Uf = np.where(feasible, U, -np.inf)
    v = np.zeros((nx, nz))
    for _ in range(max_iter):
        cont = v @ P.T                      # cont[a, iz] = E[v(a, z') | z]
        q = Uf + beta * cont[None, :, :]
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) <= tol:
            v = v_new
            break
        v = v_new
    cont = v @ P.T
    q = Uf + beta * cont[None, :, :]
    policy = q.argmax(axis=1)
    return policy_value(U, P, beta, policy), policy


def enumerate_policies_value(U: np.ndarray, P: np.ndarray, beta: float,
                             feasible: np.ndarray | None = None) -> np.ndarray:
    """Pointwise maximum of exact policy values over all stationary policies."""
    nx, ny, nz = U.shape
    if feasible is None:
        feasible = np.ones((nx, ny, nz), dtype=bool)
    choices = [[a for a in range(ny) if feasible[i, :, iz][a]]
               for i in range(nx) for iz in range(nz)]
    best = np.full((nx, nz), -np.inf)
    for combo in itertools.product(*choices):
        policy = np.asarray(combo, dtype=int).reshape(nx, nz)
        best = np.maximum(best, policy_value(U, P, beta, policy))
    return best


def two_state_tables(beta: float = 0.9):
    """The two-node, two-action reference problem with two i.i.d. shock atoms.

    Endogenous nodes ``{0, 1}``, shock atoms ``{0.8, 1.2}`` with equal
    weights, reward ``z (1 + x) - 0.25 (y - x)^2 - 0.1 y``.  Returns
    ``(U, P, x_nodes, z_atoms, beta)``.
    """
    x_nodes = np.array([0.0, 1.0])
    z_atoms = np.array([0.8, 1.2])
    P = np.full((2, 2), 0.5)
    U = np.empty((2, 2, 2))
    for i, x in enumerate(x_nodes):
        for a, yv in enumerate(x_nodes):
            for iz, z in enumerate(z_atoms):
                U[i, a, iz] = z * (1.0 + x) - 0.25 * (yv - x) ** 2 - 0.1 * yv
    return U, P, x_nodes, z_atoms, beta
