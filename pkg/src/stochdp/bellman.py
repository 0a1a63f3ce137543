"""Bellman operator, Markov operator, and the companion contraction operator.

The model is ``(X, Z, Gamma, Q, U, beta)``: per state ``(x, z)`` the operator
maximizes ``U(x, y, z) + beta * (M f)(y, z)`` over feasible actions
``y in Gamma(x, z)``, where ``M`` averages the next-period table over the
kernel's quadrature successors.  The companion operator encodes, per
monitored compact set ``K`` and shock ``z``,

    (L p)(K, z) = beta * E_z[ max_{x in K} p(Gamma(x, z'), z') ],

acting on seminorm tables through their grid view ``(x, z) -> p(Gamma(x,z), z)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .contraction import CopOperator, PseudometricFamily, SeminormTable
from .errors import ConditionError, FeasibilityError, GridError, NumericError
from .kernels import TransitionKernel
from .values import CompactSetSpec, ValueFunction, multilinear, seminorm_distance

__all__ = [
    "FeasibleSet",
    "ModelSpec",
    "MaximizerOptions",
    "PolicyFunction",
    "markov_operator",
    "apply_bellman",
    "psi",
    "BellmanCop",
    "cop_apply",
    "seminorm_profile",
    "seminorm_table",
    "seminorm_family",
    "extract_policy",
    "simulate_policy_value",
    "truncation_horizon",
    "truncation_bound",
    "golden_max",
    "monitor_labels",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(fn, lo, hi, tol: float = 1e-10, max_iter: int = 200):
    """Vectorized golden-section maximization of ``fn`` on ``[lo, hi]``.

    ``fn`` maps an array of abscissae to an array of values; ties shrink
    toward the lower end, so exact ties resolve to the smaller argument.
    Returns ``(argmax, value)``.
    """
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    span = float(np.max(b - a)) if a.size else 0.0
    if span <= tol:
        mid = (a + b) / 2.0
        return mid, fn(mid)
    n_iter = min(max_iter, int(math.ceil(math.log(tol / span) / math.log(_INVPHI))))
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(n_iter):
        keep_low = fc >= fd
        b = np.where(keep_low, d, b)
        a = np.where(keep_low, a, c)
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        fc, fd = fn(c), fn(d)
    mid = (a + b) / 2.0
    return mid, fn(mid)


def _golden_line(fn, a: float, b: float, tol: float, max_iter: int = 200):
    """Scalar golden-section maximization with both probes batched per call.

    ``fn`` maps an array of abscissae to an array of values (row-batched);
    ties shrink toward the lower end.
    """
    if b - a <= tol:
        mid = (a + b) / 2.0
        return mid, float(fn(np.array([mid]))[0])
    n_iter = min(max_iter, int(math.ceil(math.log(tol / (b - a)) / math.log(_INVPHI))))
    for _ in range(n_iter):
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        vc, vd = fn(np.array([c, d]))
        if vc >= vd:
            b = d
        else:
            a = c
    mid = (a + b) / 2.0
    return mid, float(fn(np.array([mid]))[0])


@dataclass(frozen=True)
class FeasibleSet:
    """Feasible-action correspondence ``Gamma(x, z)``.

    ``bounds`` returns the per-dimension box; an optional ``predicate``
    restricts it further (returning a mask over candidate rows), and
    ``project`` pushes infeasible candidates onto the constraint boundary so
    the scan sees boundary optima.
    """

    bounds: Callable
    predicate: Callable | None = None
    project: Callable | None = None


@dataclass
class ModelSpec:
    """A dynamic program ``(X, Z, Gamma, Q, U, beta)`` on tabulated functions.

    ``utility(x, Y, z)`` must be vectorized over action rows ``Y (N, d)`` and
    broadcast over row-matrices ``x`` and ``z``.
    """

    utility: Callable
    gamma: FeasibleSet
    beta: float
    kernel: TransitionKernel
    x_lo: np.ndarray
    x_hi: np.ndarray
    name: str = "model"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ConditionError(f"discount factor {self.beta} outside (0, 1)")
        self.x_lo = np.atleast_1d(np.asarray(self.x_lo, dtype=float))
        self.x_hi = np.atleast_1d(np.asarray(self.x_hi, dtype=float))

    @property
    def dim(self) -> int:
        return self.x_lo.shape[0]

    def validate_on_grid(self, x_grids, z_nodes, samples: int = 50, seed: int = 0) -> None:
        """Check feasibility is nonempty/bounded and returns are finite on the grid."""
        probe = ValueFunction.constant(x_grids, z_nodes, 0.0)
        rng = np.random.default_rng(seed)
        points = probe.grid_points()
        count = 0
        for z in probe.z_nodes:
            for x in points:
                lo, hi = self.gamma.bounds(x, z)
                lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
                if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
                    raise ConditionError(f"unbounded feasible set at x={x}, z={z}")
                if np.any(hi < lo - 1e-12):
                    raise FeasibilityError(f"empty feasible set at x={x}, z={z}")
                if count < samples:
                    y = lo + rng.random(lo.shape) * (hi - lo)
                    if self.gamma.predicate is not None:
                        if not self.gamma.predicate(y[None, :], x, z)[0]:
                            if self.gamma.project is not None:
                                y = self.gamma.project(y[None, :], x, z)[0]
                            else:
                                y = lo
                    u = float(np.asarray(self.utility(x[None, :], y[None, :], z[None, :]))[0])
                    if not np.isfinite(u):
                        raise NumericError(f"non-finite return at x={x}, y={y}, z={z}")
                    count += 1


@dataclass(frozen=True)
class MaximizerOptions:
    """Deterministic maximization: coarse scan plus local refinement.

    ``candidates='grid'`` restricts the scan to state-grid nodes inside the
    feasible box (used by discrete-oracle comparisons); ``'scan'`` lays
    ``n_coarse`` points per dimension.  Refinement runs coordinate
    golden-section passes inside the best cell to ``refine_tol``.
    """

    n_coarse: int = 64
    candidates: str = "scan"
    refine: bool = True
    refine_tol: float = 1e-10
    refine_cycles: int = 3


# ---------------------------------------------------------------------------
# Markov operator
# ---------------------------------------------------------------------------

def _successor_indices(f: ValueFunction, kernel: TransitionKernel, z):
    nodes, weights = kernel.successors(z)
    idx = []
    for n in nodes:
        try:
            idx.append(f.z_index(n))
        except GridError as exc:
            raise GridError(f"missing successor node {n} of shock {np.atleast_1d(z)}") from exc
    return np.asarray(idx, dtype=int), weights


def markov_operator(f: ValueFunction, kernel: TransitionKernel) -> ValueFunction:
    """Conditional-expectation table ``(Mf)(x, z) = E_z[f(x, z')]``.

    Requires the stored shock nodes to be successor-closed for the kernel.
    """
    out = np.empty_like(f.values)
    for iz, z in enumerate(f.z_nodes):
        idx, w = _successor_indices(f, kernel, z)
        out[..., iz] = f.values[..., idx] @ w
    return ValueFunction(f.x_grids, f.z_nodes, out)


# ---------------------------------------------------------------------------
# Maximization
# ---------------------------------------------------------------------------

def _lexsorted(Y: np.ndarray) -> np.ndarray:
    order = np.lexsort(Y.T[::-1])
    return Y[order]


def _box_candidates(lo, hi, x_grids, opts: MaximizerOptions) -> np.ndarray:
    axes = []
    for d in range(len(lo)):
        if opts.candidates == "grid":
            g = x_grids[d]
            vals = g[(g >= lo[d] - 1e-12) & (g <= hi[d] + 1e-12)]
            if vals.size == 0:
                vals = np.array([lo[d]])
        elif hi[d] > lo[d]:
            vals = np.linspace(lo[d], hi[d], opts.n_coarse)
        else:
            vals = np.array([lo[d]])
        axes.append(vals)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _feasible_candidates(Y, x, z, gamma: FeasibleSet) -> np.ndarray:
    if gamma.predicate is None:
        return Y
    mask = np.asarray(gamma.predicate(Y, x, z), dtype=bool)
    rows = [Y[mask]]
    if gamma.project is not None and np.any(~mask):
        proj = gamma.project(Y[~mask], x, z)
        pmask = np.asarray(gamma.predicate(proj, x, z), dtype=bool)
        rows.append(proj[pmask])
    return np.vstack(rows) if any(r.size for r in rows) else np.empty((0, Y.shape[1]))


def _maximize_node(x, z, model: ModelSpec, cont_table, x_grids, opts: MaximizerOptions):
    """Maximize ``U(x, ., z) + beta * cont(.)`` over the feasible set at one node."""
    lo, hi = model.gamma.bounds(x, z)
    lo = np.maximum(np.atleast_1d(np.asarray(lo, dtype=float)),
                    np.array([g[0] for g in x_grids]))
    hi = np.minimum(np.atleast_1d(np.asarray(hi, dtype=float)),
                    np.array([g[-1] for g in x_grids]))
    if np.any(hi < lo - 1e-12):
        raise FeasibilityError(f"empty feasible set at x={x}, z={z}")
    hi = np.maximum(hi, lo)

    def objective(Y: np.ndarray) -> np.ndarray:
        vals = (np.asarray(model.utility(x[None, :], Y, z[None, :]), dtype=float)
                + model.beta * multilinear(x_grids, cont_table, Y))
        return vals

    Y = _feasible_candidates(_box_candidates(lo, hi, x_grids, opts), x, z, model.gamma)
    # Projections may leave the representable box; such candidates cannot be
    # evaluated against the stored table and are dropped.
    inside = np.all((Y >= lo - 1e-12) & (Y <= hi + 1e-12), axis=1)
    Y = _lexsorted(np.clip(Y[inside], lo, hi))
    if Y.shape[0] == 0:
        raise FeasibilityError(f"empty feasible set at x={x}, z={z}")
    vals = objective(Y)
    if not np.all(np.isfinite(vals)):
        raise NumericError(f"non-finite objective at x={x}, z={z}")
    best = int(np.argmax(vals))
    y_best, v_best = Y[best].copy(), float(vals[best])

    if opts.refine and opts.candidates != "grid":
        step = (hi - lo) / max(opts.n_coarse - 1, 1)
        cycles = 1 if len(lo) == 1 else opts.refine_cycles
        for _ in range(cycles):
            for d in range(len(lo)):
                if step[d] <= 0:
                    continue
                a = max(lo[d], y_best[d] - step[d])
                b = min(hi[d], y_best[d] + step[d])

                def line(t, _d=d):
                    pts = np.repeat(y_best[None, :], t.shape[0], axis=0)
                    pts[:, _d] = t
                    if model.gamma.predicate is not None:
                        ok = np.asarray(model.gamma.predicate(pts, x, z), dtype=bool)
                        if model.gamma.project is not None and np.any(~ok):
                            pts[~ok] = np.clip(model.gamma.project(pts[~ok], x, z), lo, hi)
                            ok = np.asarray(model.gamma.predicate(pts, x, z), dtype=bool)
                        if np.any(~ok):
                            out = np.full(t.shape[0], -np.inf)
                            if np.any(ok):
                                out[ok] = objective(pts[ok])
                            return out
                    return objective(pts)

                t_star, v_line = _golden_line(line, a, b, tol=opts.refine_tol)
                if v_line > v_best:
                    cand = y_best.copy()
                    cand[d] = t_star
                    if model.gamma.predicate is not None:
                        if not model.gamma.predicate(cand[None, :], x, z)[0]:
                            if model.gamma.project is None:
                                continue
                            cand = np.clip(model.gamma.project(cand[None, :], x, z)[0],
                                           lo, hi)
                            if not model.gamma.predicate(cand[None, :], x, z)[0]:
                                continue
                    v_cand = float(objective(cand[None, :])[0])
                    if v_cand > v_best:
                        y_best, v_best = cand, v_cand
    if not np.isfinite(v_best):
        raise NumericError(f"non-finite objective at x={x}, z={z}")
    return v_best, y_best


def apply_bellman(f: ValueFunction, model: ModelSpec, opts: MaximizerOptions | None = None,
                  threads: int = 1, return_policy: bool = False):
    """One Bellman backup: per grid node, the maximized one-period value.

    ``(Tf)(x, z) = max_{y in Gamma(x, z)} U(x, y, z) + beta (Mf)(y, z)``.
    Parallelizes over grid nodes when ``threads > 1``; each node writes a
    disjoint output cell, so the sweep is deterministic either way.
    """
    opts = opts or MaximizerOptions()
    Mf = markov_operator(f, model.kernel)
    points = f.grid_points()
    n_nodes = points.shape[0]
    flat_vals = np.empty((n_nodes, f.n_z))
    flat_acts = np.empty((n_nodes, f.n_z, model.dim))

    def sweep(rows):
        for i in rows:
            x = points[i]
            for iz, z in enumerate(f.z_nodes):
                v, y = _maximize_node(x, z, model, Mf.values[..., iz], f.x_grids, opts)
                flat_vals[i, iz] = v
                flat_acts[i, iz] = y

    if threads > 1:
        chunks = np.array_split(np.arange(n_nodes), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(sweep, [c for c in chunks if c.size]))
    else:
        sweep(range(n_nodes))

    out = ValueFunction(f.x_grids, f.z_nodes, flat_vals.reshape(f.values.shape))
    if return_policy:
        shape = f.grid_shape + (f.n_z, model.dim)
        return out, PolicyFunction(f.x_grids, f.z_nodes, flat_acts.reshape(shape))
    return out


def psi(model: ModelSpec, x_grids, z_nodes, opts: MaximizerOptions | None = None,
        threads: int = 1) -> ValueFunction:
    """``psi = T0``: the maximized one-period return, node for node."""
    zero = ValueFunction.constant(x_grids, z_nodes, 0.0)
    return apply_bellman(zero, model, opts=opts, threads=threads)


# ---------------------------------------------------------------------------
# Companion operator
# ---------------------------------------------------------------------------

def monitor_labels(Ks, monitored_z) -> tuple:
    zs = np.atleast_2d(np.asarray(monitored_z, dtype=float))
    return tuple((K.label, tuple(float(v) for v in z)) for K in Ks for z in zs)


class BellmanCop(CopOperator):
    """Companion operator of the Bellman map on a fixed grid.

    Tables must carry their grid view (``gamma`` attribute); the output
    entries are the monitored ``(K, z)`` values and the output grid view is
    the table's own feasible-set composition, so the operator can be
    iterated.
    """

    def __init__(self, model: ModelSpec, x_grids, z_nodes, Ks, monitored_z,
                 inner_candidates: int = 16):
        self.model = model
        self.Ks = tuple(Ks)
        probe = ValueFunction.constant(x_grids, z_nodes, 0.0)
        self.x_grids = probe.x_grids
        self.z_nodes = probe.z_nodes
        self.monitored_z = np.atleast_2d(np.asarray(monitored_z, dtype=float))
        self.labels = monitor_labels(self.Ks, self.monitored_z)
        self._k_cands = [K.candidate_points(self.x_grids) for K in self.Ks]
        self._succ_nodes = [_successor_indices(probe, model.kernel, z) for z in self.z_nodes]
        self._succ_monitor = [_successor_indices(probe, model.kernel, z)
                              for z in self.monitored_z]
        # Feasible-set boxes are fixed per (x, z); precompute their candidate
        # points, concatenated per shock node for one segmented sweep.
        self._points = probe.grid_points()
        hull_lo = np.array([g[0] for g in self.x_grids])
        hull_hi = np.array([g[-1] for g in self.x_grids])
        self._gamma_cat = []
        self._gamma_seg = []
        for z in self.z_nodes:
            blocks = []
            starts = []
            total = 0
            for x in self._points:
                lo, hi = model.gamma.bounds(x, z)
                lo = np.maximum(np.atleast_1d(np.asarray(lo, dtype=float)), hull_lo)
                hi = np.minimum(np.atleast_1d(np.asarray(hi, dtype=float)), hull_hi)
                if np.any(hi < lo - 1e-12):
                    raise FeasibilityError(f"empty feasible set at x={x}, z={z}")
                hi = np.maximum(hi, lo)
                box = CompactSetSpec.box("gamma", lo, hi)
                cands = box.candidate_points(self.x_grids)
                starts.append(total)
                total += cands.shape[0]
                blocks.append(cands)
            self._gamma_cat.append(np.vstack(blocks))
            self._gamma_seg.append(np.asarray(starts, dtype=int))

    # -- helpers -----------------------------------------------------------

    def _sup_over(self, table: np.ndarray, cands: np.ndarray, iz: int,
                  absolute: bool) -> float:
        vals = multilinear(self.x_grids, table[..., iz], cands)
        return float(np.max(np.abs(vals) if absolute else vals))

    def _project(self, table: np.ndarray, absolute: bool) -> np.ndarray:
        """Monitored entries ``beta * E_z[ sup_K table(., z') ]``."""
        out = np.empty(len(self.labels))
        pos = 0
        for cands in self._k_cands:
            for idx, w in self._succ_monitor:
                total = 0.0
                for j, wt in zip(idx, w):
                    total += wt * self._sup_over(table, cands, int(j), absolute)
                out[pos] = self.model.beta * total
                pos += 1
        return out

    def _compose(self, table: np.ndarray, absolute: bool) -> np.ndarray:
        """Grid view ``beta * E_z[ sup_{Gamma(x, z)} table(., z') ]`` per node."""
        n_z = self.z_nodes.shape[0]
        flat = np.empty((self._points.shape[0], n_z))
        for iz in range(n_z):
            idx, w = self._succ_nodes[iz]
            acc = np.zeros(self._points.shape[0])
            for j, wt in zip(idx, w):
                vals = multilinear(self.x_grids, table[..., int(j)], self._gamma_cat[iz])
                if absolute:
                    vals = np.abs(vals)
                acc += wt * np.maximum.reduceat(vals, self._gamma_seg[iz])
            flat[:, iz] = self.model.beta * acc
        shape = tuple(g.size for g in self.x_grids) + (n_z,)
        return flat.reshape(shape)

    # -- public surface ------------------------------------------------------

    def apply(self, table: SeminormTable) -> SeminormTable:
        if table.gamma is None:
            raise ConditionError("Bellman companion operator needs the table's grid view")
        if table.labels != self.labels:
            raise ConditionError("table is indexed by a different monitored family")
        q = table.gamma
        return SeminormTable(self.labels, self._project(q, absolute=False),
                             self._compose(q, absolute=False))

    def profile(self, f: ValueFunction) -> SeminormTable:
        """Seminorm table of ``f``: entries ``p_{K,z}(f)`` plus its grid view."""
        entries = self._project(f.values, absolute=True) / self.model.beta
        gamma = self._compose(f.values, absolute=True) / self.model.beta
        return SeminormTable(self.labels, entries, gamma)

    def table_from_grid(self, gamma: np.ndarray) -> SeminormTable:
        """Wrap a nonnegative grid view into an aligned table (entries derived)."""
        gamma = np.asarray(gamma, dtype=float)
        return SeminormTable(self.labels, self._project(gamma, absolute=True) / self.model.beta,
                             gamma)


def cop_apply(p: SeminormTable, model: ModelSpec, Ks, monitored_z=None,
              cop: BellmanCop | None = None) -> SeminormTable:
    """Apply the Bellman companion operator once (see :class:`BellmanCop`)."""
    if cop is None:
        if p.gamma is None:
            raise ConditionError("table needs a grid view; build it with BellmanCop.profile")
        raise ConditionError("cop_apply needs a prepared BellmanCop (grids are not "
                             "recoverable from the table alone)")
    return cop.apply(p)


def seminorm_profile(f: ValueFunction, g: ValueFunction, cop: BellmanCop) -> SeminormTable:
    """Table of ``p_{K,z}(f - g)`` with grid view, aligned with ``cop``."""
    return cop.profile(f - g)


def seminorm_table(f: ValueFunction, kernel: TransitionKernel, Ks, monitored_z) -> SeminormTable:
    """Entries-only seminorm table ``p_{K,z}(f)`` over the monitored family."""
    from .values import seminorm as _p
    labels = monitor_labels(Ks, monitored_z)
    zs = np.atleast_2d(np.asarray(monitored_z, dtype=float))
    vals = [ _p(f, K, z, kernel) for K in Ks for z in zs ]
    return SeminormTable(labels, np.asarray(vals))


def seminorm_family(kernel: TransitionKernel, Ks, monitored_z,
                    include_sup: bool = True) -> PseudometricFamily:
    """Pseudometric family ``d_{K,z}(f, g) = p_{K,z}(f - g)`` (plus a sup index)."""
    zs = np.atleast_2d(np.asarray(monitored_z, dtype=float))
    by_label = {}
    for K in Ks:
        for z in zs:
            by_label[(K.label, tuple(float(v) for v in z))] = (K, z)
    indices = tuple(by_label) + (("sup",) if include_sup else ())

    def dist(a, f, g):
        if a == "sup":
            return f.sup_distance(g)
        K, z = by_label[a]
        return seminorm_distance(f, g, K, z, kernel)

    return PseudometricFamily(indices, dist)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

class PolicyFunction:
    """Tabulated policy ``(x, z) -> y``; interpolated in ``x`` like values."""

    def __init__(self, x_grids, z_nodes, actions):
        probe = ValueFunction.constant(x_grids, z_nodes, 0.0)
        self.x_grids = probe.x_grids
        self.z_nodes = probe.z_nodes
        actions = np.asarray(actions, dtype=float)
        expected = probe.grid_shape + (probe.n_z,)
        if actions.shape[:-1] != expected:
            raise GridError(f"action table shape {actions.shape} does not match grid")
        self.actions = actions

    @property
    def dim(self) -> int:
        return self.actions.shape[-1]

    def z_index(self, z) -> int:
        return ValueFunction.constant(self.x_grids, self.z_nodes, 0.0).z_index(z)

    def eval_many(self, points: np.ndarray, z_index: int) -> np.ndarray:
        cols = [multilinear(self.x_grids, self.actions[..., z_index, d], points)
                for d in range(self.dim)]
        return np.stack(cols, axis=1)

    def __call__(self, x, z) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        nodes = self.z_nodes
        hits = np.all(np.isclose(nodes, np.atleast_1d(z), rtol=1e-9, atol=1e-12), axis=1)
        idx = np.flatnonzero(hits)
        if idx.size == 0:
            raise GridError(f"shock node {z} is not stored")
        return self.eval_many(x[None, :], int(idx[0]))[0]

    def feasibility_gap(self, model: ModelSpec) -> float:
        """Worst constraint violation of stored actions (should be <= 1e-9)."""
        points = ValueFunction.constant(self.x_grids, self.z_nodes, 0.0).grid_points()
        flat = self.actions.reshape(-1, self.z_nodes.shape[0], self.dim)
        worst = 0.0
        for i, x in enumerate(points):
            for iz, z in enumerate(self.z_nodes):
                y = flat[i, iz]
                lo, hi = model.gamma.bounds(x, z)
                worst = max(worst, float(np.max(np.atleast_1d(lo) - y, initial=0.0)))
                worst = max(worst, float(np.max(y - np.atleast_1d(hi), initial=0.0)))
                if model.gamma.predicate is not None:
                    if not model.gamma.predicate(y[None, :], x, z)[0]:
                        worst = max(worst, 1.0)
        return worst

    def write_csv(self, path) -> None:
        l, k, d = len(self.x_grids), self.z_nodes.shape[1], self.dim
        header = ([f"x{i + 1}" for i in range(l)] + [f"z{i + 1}" for i in range(k)]
                  + [f"y{i + 1}" for i in range(d)])
        lines = [",".join(header)]
        points = ValueFunction.constant(self.x_grids, self.z_nodes, 0.0).grid_points()
        flat = self.actions.reshape(-1, self.z_nodes.shape[0], d)
        for i, xrow in enumerate(points):
            for j, zrow in enumerate(self.z_nodes):
                cells = ([repr(float(v)) for v in xrow] + [repr(float(v)) for v in zrow]
                         + [repr(float(v)) for v in flat[i, j]])
                lines.append(",".join(cells))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def extract_policy(f: ValueFunction, model: ModelSpec, opts: MaximizerOptions | None = None,
                   threads: int = 1) -> PolicyFunction:
    """Argmax table at a (near-)fixed point, same maximizer as the backup.

    Ties resolve to the lexicographically smallest action.
    """
    _, policy = apply_bellman(f, model, opts=opts, threads=threads, return_policy=True)
    return policy


# ---------------------------------------------------------------------------
# Policy-value simulation
# ---------------------------------------------------------------------------

def truncation_horizon(beta: float, payoff_bound: float, tol: float) -> int:
    """Smallest horizon whose discounted tail is below ``tol``."""
    if payoff_bound <= 0:
        return 0
    h = math.log(tol * (1.0 - beta) / payoff_bound) / math.log(beta) - 1.0
    return max(0, int(math.ceil(h)))


def truncation_bound(beta: float, payoff_bound: float, horizon: int) -> float:
    """Upper bound on the discounted return beyond ``horizon``."""
    return payoff_bound * beta ** (horizon + 1) / (1.0 - beta)


def simulate_policy_value(model: ModelSpec, policy: PolicyFunction, x0, z0,
                          horizon: int, paths: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of the truncated discounted return.

    Follows the stationary policy from ``(x0, z0)``; reproducible per seed.
    Raises :class:`GridError` naming the path and step if a state leaves the
    grid hull or a sampled shock is not a stored node.
    """
    rng = np.random.default_rng(seed)
    X = np.tile(np.atleast_1d(np.asarray(x0, dtype=float)), (paths, 1))
    Z = np.tile(np.atleast_1d(np.asarray(z0, dtype=float)), (paths, 1))
    total = np.zeros(paths)
    disc = 1.0
    nodes = policy.z_nodes
    for t in range(horizon + 1):
        zidx = np.empty(paths, dtype=int)
        for j, node in enumerate(nodes):
            zidx[np.all(np.isclose(Z, node, rtol=1e-9, atol=1e-12), axis=1)] = j
        matched = np.zeros(paths, dtype=bool)
        for j in range(nodes.shape[0]):
            matched |= np.all(np.isclose(Z, nodes[j], rtol=1e-9, atol=1e-12), axis=1)
        if not matched.all():
            p = int(np.flatnonzero(~matched)[0])
            raise GridError(f"path {p}, step {t}: sampled shock {Z[p]} is not a stored node")
        Y = np.empty((paths, policy.dim))
        for j in np.unique(zidx):
            mask = zidx == j
            try:
                Y[mask] = policy.eval_many(X[mask], int(j))
            except GridError as exc:
                p = int(np.flatnonzero(mask)[0])
                raise GridError(f"path {p}, step {t}: {exc}") from exc
        total += disc * np.asarray(model.utility(X, Y, Z), dtype=float)
        if t == horizon:
            break
        X = Y
        Z = model.kernel.sample_many(Z, rng)
        disc *= model.beta
    mean = float(total.mean())
    stderr = float(total.std(ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    return mean, stderr
