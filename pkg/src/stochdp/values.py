"""Tabulated value functions and the sup-in-state / L1-in-shock seminorms.

A :class:`ValueFunction` stores ``f(x, z)`` on a product grid: piecewise
multilinear in the endogenous state ``x`` and tabulated at finitely many
shock nodes ``z`` (no interpolation in the shock, which is only measurable).
The seminorm of ``f`` at a compact state set ``K`` and shock ``z`` averages
``max_{x in K} |f(x, z')|`` over next-period shocks under the kernel.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import GridError, NumericError
from .kernels import TransitionKernel

__all__ = [
    "ValueFunction",
    "CompactSetSpec",
    "multilinear",
    "seminorm",
    "seminorm_distance",
    "evaluate",
    "write_csv",
]

_HULL_TOL = 1e-9


def _as_grids(x_grids) -> tuple[np.ndarray, ...]:
    grids = tuple(np.asarray(g, dtype=float).ravel() for g in x_grids)
    for g in grids:
        if g.size == 0 or np.any(np.diff(g) <= 0) and g.size > 1:
            raise GridError("each state grid must be nonempty and strictly increasing")
    return grids


def _as_nodes(z_nodes) -> np.ndarray:
    z = np.asarray(z_nodes, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    return z


def multilinear(x_grids, table: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``table`` (shaped like the grid) at ``points (N, l)``.

    Exact at grid nodes; raises :class:`GridError` outside the hull (no
    extrapolation).  Collapsed axes (single-node grids) require the matching
    coordinate.
    """
    grids = _as_grids(x_grids)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != len(grids):
        raise GridError(f"points have dimension {pts.shape[1]}, grid has {len(grids)}")
    idx = []
    frac = []
    for d, g in enumerate(grids):
        x = pts[:, d]
        span = max(abs(g[0]), abs(g[-1]), 1.0)
        if np.any(x < g[0] - _HULL_TOL * span) or np.any(x > g[-1] + _HULL_TOL * span):
            bad = x[(x < g[0] - _HULL_TOL * span) | (x > g[-1] + _HULL_TOL * span)][0]
            raise GridError(f"coordinate {bad!r} outside grid hull [{g[0]}, {g[-1]}] in dim {d}")
        if g.size == 1:
            idx.append(np.zeros(len(x), dtype=int))
            frac.append(np.zeros(len(x)))
            continue
        i = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
        idx.append(i)
        frac.append(np.clip((x - g[i]) / (g[i + 1] - g[i]), 0.0, 1.0))
    out = np.zeros(pts.shape[0])
    for corner in itertools.product((0, 1), repeat=len(grids)):
        weight = np.ones(pts.shape[0])
        loc = []
        for d, c in enumerate(corner):
            if grids[d].size == 1:
                loc.append(idx[d])
                if c == 1:
                    weight = None
                    break
                continue
            weight = weight * (frac[d] if c else 1.0 - frac[d])
            loc.append(idx[d] + c)
        if weight is None:
            continue
        out += weight * table[tuple(loc)]
    return out


class ValueFunction:
    """Tabulated Caratheodory function on a state grid times shock nodes.

    Parameters
    ----------
    x_grids : sequence of 1-D arrays
        Sorted grid nodes per endogenous dimension.
    z_nodes : array, shape (m,) or (m, k)
        Stored shock nodes.
    values : array, shape grid_shape + (m,)
        Table of function values; must be finite.
    """

    def __init__(self, x_grids, z_nodes, values):
        self.x_grids = _as_grids(x_grids)
        self.z_nodes = _as_nodes(z_nodes)
        shape = tuple(g.size for g in self.x_grids) + (self.z_nodes.shape[0],)
        values = np.asarray(values, dtype=float)
        if values.shape != shape:
            raise GridError(f"values shape {values.shape} does not match grid shape {shape}")
        if not np.all(np.isfinite(values)):
            raise NumericError("value table contains non-finite entries")
        self.values = values

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, x_grids, z_nodes, c: float = 0.0) -> "ValueFunction":
        grids = _as_grids(x_grids)
        nodes = _as_nodes(z_nodes)
        shape = tuple(g.size for g in grids) + (nodes.shape[0],)
        return cls(grids, nodes, np.full(shape, float(c)))

    @classmethod
    def from_callable(cls, x_grids, z_nodes, fn) -> "ValueFunction":
        """Tabulate ``fn(X (N, l), z (k,)) -> (N,)`` on the grid."""
        grids = _as_grids(x_grids)
        nodes = _as_nodes(z_nodes)
        mesh = np.stack([m.ravel() for m in np.meshgrid(*grids, indexing="ij")], axis=1)
        shape = tuple(g.size for g in grids)
        cols = [np.asarray(fn(mesh, z), dtype=float).reshape(shape) for z in nodes]
        return cls(grids, nodes, np.stack(cols, axis=-1))

    # -- basic structure ---------------------------------------------------

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(g.size for g in self.x_grids)

    @property
    def n_z(self) -> int:
        return self.z_nodes.shape[0]

    def grid_points(self) -> np.ndarray:
        """All grid nodes as rows, lexicographic by grid index."""
        mesh = np.meshgrid(*self.x_grids, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def same_grid(self, other: "ValueFunction") -> bool:
        return (len(self.x_grids) == len(other.x_grids)
                and all(a.size == b.size and np.allclose(a, b)
                        for a, b in zip(self.x_grids, other.x_grids))
                and self.z_nodes.shape == other.z_nodes.shape
                and np.allclose(self.z_nodes, other.z_nodes))

    def z_index(self, z) -> int:
        """Index of a stored shock node; tolerance-matched, error if absent."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        hits = np.all(np.isclose(self.z_nodes, z, rtol=1e-9, atol=1e-12), axis=1)
        idx = np.flatnonzero(hits)
        if idx.size == 0:
            raise GridError(f"shock node {z} is not stored")
        if idx.size == 1:
            return int(idx[0])
        dist = np.abs(self.z_nodes[idx] - z).sum(axis=1)
        return int(idx[np.argmin(dist)])

    # -- evaluation --------------------------------------------------------

    def eval_many(self, points: np.ndarray, z_index: int) -> np.ndarray:
        return multilinear(self.x_grids, self.values[..., z_index], points)

    def __call__(self, x, z) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(self.eval_many(x[None, :], self.z_index(z))[0])

    # -- algebra (immutable style: every operation builds a new table) ------

    def _binary(self, other, op):
        if isinstance(other, ValueFunction):
            if not self.same_grid(other):
                raise GridError("grid mismatch between value functions")
            return ValueFunction(self.x_grids, self.z_nodes, op(self.values, other.values))
        return ValueFunction(self.x_grids, self.z_nodes, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return ValueFunction(self.x_grids, self.z_nodes, self.values * float(scalar))

    __rmul__ = __mul__

    def abs(self) -> "ValueFunction":
        return ValueFunction(self.x_grids, self.z_nodes, np.abs(self.values))

    def sup_distance(self, other: "ValueFunction") -> float:
        if not self.same_grid(other):
            raise GridError("grid mismatch between value functions")
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class CompactSetSpec:
    """A monitored compact subset of the state space.

    Either an axis-aligned box (``lo``/``hi`` corners) or an explicit finite
    point list.  The inner maximum of a seminorm is taken over the grid nodes
    inside the set plus its boundary coordinates, which is exact for
    piecewise multilinear tables.
    """

    label: str
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None
    points: tuple[tuple[float, ...], ...] | None = None

    @classmethod
    def box(cls, label: str, lo, hi) -> "CompactSetSpec":
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise GridError(f"box corners for {label!r} must be ordered")
        return cls(label=label, lo=lo, hi=hi)

    @classmethod
    def nodes(cls, label: str, points) -> "CompactSetSpec":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size == 0:
            raise GridError(f"node list for {label!r} is empty")
        return cls(label=label, points=tuple(map(tuple, pts)))

    @classmethod
    def hull(cls, label: str, x_grids) -> "CompactSetSpec":
        grids = _as_grids(x_grids)
        return cls.box(label, [g[0] for g in grids], [g[-1] for g in grids])

    def candidate_points(self, x_grids) -> np.ndarray:
        """Maximizer candidates for this set on the given grid."""
        grids = _as_grids(x_grids)
        if self.points is not None:
            return np.atleast_2d(np.asarray(self.points, dtype=float))
        axes = []
        for d, g in enumerate(grids):
            lo, hi = self.lo[d], self.hi[d]
            inside = g[(g >= lo) & (g <= hi)]
            vals = np.unique(np.concatenate([inside, [lo, hi]]))
            span = max(abs(g[0]), abs(g[-1]), 1.0)
            vals = vals[(vals >= g[0] - _HULL_TOL * span) & (vals <= g[-1] + _HULL_TOL * span)]
            if vals.size == 0:
                raise GridError(f"compact set {self.label!r} is disjoint from the grid hull in dim {d}")
            axes.append(vals)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def seminorm(f: ValueFunction, K: CompactSetSpec, z, Q: TransitionKernel) -> float:
    """``p_{K,z}(f)``: quadrature over successors of the sup of ``|f|`` on ``K``."""
    cands = K.candidate_points(f.x_grids)
    nodes, weights = Q.successors(z)
    total = 0.0
    for node, w in zip(nodes, weights):
        zi = f.z_index(node)
        total += w * float(np.max(np.abs(f.eval_many(cands, zi))))
    return total


def seminorm_distance(f: ValueFunction, g: ValueFunction, K: CompactSetSpec, z,
                      Q: TransitionKernel) -> float:
    """Seminorm of the pointwise difference ``f - g`` (shared grids required)."""
    return seminorm(f - g, K, z, Q)


def evaluate(f: ValueFunction, x, z) -> float:
    """Interpolate ``f`` at state ``x`` and stored shock node ``z``."""
    return f(x, z)


def write_csv(path, f: ValueFunction, value_name: str = "value") -> None:
    """Export ``(x_1..x_l, z_1..z_k, value)`` rows, lexicographic by grid index."""
    l = len(f.x_grids)
    k = f.z_nodes.shape[1]
    header = [f"x{d + 1}" for d in range(l)] + [f"z{d + 1}" for d in range(k)] + [value_name]
    lines = [",".join(header)]
    points = f.grid_points()
    flat = f.values.reshape(-1, f.n_z)
    for i, xrow in enumerate(points):
        for j, zrow in enumerate(f.z_nodes):
            cells = [repr(float(v)) for v in xrow] + [repr(float(v)) for v in zrow]
            cells.append(repr(float(flat[i, j])))
            lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
