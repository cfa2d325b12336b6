"""Convex function catalog, prox/envelope/conjugates and splitting-tuple checks.

Catalog entries
---------------
``Quadratic(M)``             ``q_M(x) = 1/2 <x, M x>`` with ``M`` symmetric PSD.
``SubspaceQuadratic(B, M)``  ``iota_{range B} + q_M``, ``B`` with orthonormal columns.
``GridFn(grid, values)``     a function known only at the nodes of a uniform grid.
``CurveAntiderivative``      ``f_i(x) = int_0^x sum_{k != i} alpha_k(alpha_i^{-1}(t)) dt``
                             for tabulated increasing ``alpha_k`` (d = 1).

Throughout, ``q = 1/2 ||.||^2`` and ``c(x) = sum_{i<j} <x_i, x_j>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .core import ConfigError, GammaSet, Grid, SpaceConfig, cost_eval, effective_tol, sum_map
from .report import CheckReport, Verdict

__all__ = [
    "DomainError",
    "PreconditionFailed",
    "ConvexFn",
    "Quadratic",
    "SubspaceQuadratic",
    "GridFn",
    "AlphaTable",
    "CurveAntiderivative",
    "SplittingTuple",
    "RelaxResult",
    "convex_fn_from_dict",
    "q",
    "prox",
    "moreau_envelope",
    "fenchel_conjugate",
    "legendre_direct",
    "c_conjugate",
    "relax_to_c_conjugate",
    "check_splitting_inequality",
    "splitting_set_extract",
    "check_envelope_criterion",
    "check_prox_partition",
    "check_subdiff_identity",
    "three_marginal_smooth_check",
    "NODE_LIMIT",
]

# hard cap on evaluated grid combinations
NODE_LIMIT = 10**7
_SYM_TOL = 1e-12
_ORTHO_TOL = 1e-10


class DomainError(ValueError):
    """Evaluation outside the region where a function is known."""


class PreconditionFailed(ValueError):
    """An operation's precondition does not hold; ``report`` holds the witness."""

    def __init__(self, message, report: CheckReport):
        super().__init__(message)
        self.report = report


def q(s):
    """``1/2 ||s||^2`` along the last axis."""
    s = np.asarray(s, dtype=float)
    return 0.5 * np.sum(s * s, axis=-1)


def _vec(s, d):
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        s = s[None]
    if s.shape[-1] != d:
        raise ConfigError(f"expected vectors of dimension {d}, got shape {s.shape}")
    return s


class ConvexFn:
    """Interface shared by the catalog entries."""

    dim: int

    def value(self, x):
        raise NotImplementedError

    def prox(self, s):
        raise NotImplementedError

    def envelope(self, s):
        p = self.prox(s)
        return self.value(p) + q(_vec(s, self.dim) - p)

    def subgradient_residual(self, x, u):
        """How far ``u`` is from being a subgradient at ``x`` (0 means it is)."""
        raise NotImplementedError

    def values_on(self, grid: Grid):
        """Values at every node of ``grid`` (C order)."""
        if grid.dim != self.dim:
            raise ConfigError(f"grid dim {grid.dim} does not match function dim {self.dim}")
        return self.value(grid.nodes())

    def slope_bound(self, grid: Grid):
        """Largest gradient magnitude over the grid box (for tolerance scaling)."""
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)


def _check_psd(M, name="M"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"{name} must be square, got {M.shape}")
    if not np.allclose(M, M.T, rtol=0, atol=_SYM_TOL * (1 + np.abs(M).max())):
        raise ConfigError(f"{name} must be symmetric")
    M = 0.5 * (M + M.T)
    if np.linalg.eigvalsh(M)[0] < -_SYM_TOL * (1 + np.abs(M).max()):
        raise ConfigError(f"{name} must be positive semidefinite")
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class Quadratic(ConvexFn):
    M: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "M", _check_psd(self.M))

    @classmethod
    def scaled_identity(cls, a, d):
        return cls(a * np.eye(d))

    @property
    def dim(self):
        return self.M.shape[0]

    def value(self, x):
        x = _vec(x, self.dim)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.M, x)

    def gradient(self, x):
        return _vec(x, self.dim) @ self.M.T

    def prox(self, s):
        s = _vec(s, self.dim)
        A = np.eye(self.dim) + self.M
        return np.linalg.solve(A, s.T).T if s.ndim > 1 else np.linalg.solve(A, s)

    def subgradient_residual(self, x, u):
        return float(np.max(np.abs(self.gradient(x) - _vec(u, self.dim))))

    @property
    def is_positive_definite(self):
        return np.linalg.eigvalsh(self.M)[0] > _SYM_TOL * (1 + np.abs(self.M).max())

    def conjugate(self):
        if not self.is_positive_definite:
            raise DomainError("closed-form conjugate needs a positive definite matrix")
        return Quadratic(np.linalg.inv(self.M))

    def slope_bound(self, grid):
        r = np.max(np.linalg.norm(np.array([grid.lo, grid.hi]), axis=1))
        return float(np.linalg.norm(self.M, 2) * max(r, np.linalg.norm(np.maximum(np.abs(grid.lo), np.abs(grid.hi)))))

    def to_dict(self):
        return {"kind": "quadratic", "matrix": self.M.tolist()}


@dataclass(frozen=True, eq=False)
class SubspaceQuadratic(ConvexFn):
    """``iota_{range B} + q_M``; ``B`` is ``d x k`` with orthonormal columns (k may be 0)."""

    B: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        M = _check_psd(self.M)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.ndim != 2 or B.shape[0] != M.shape[0]:
            raise ConfigError(f"basis must be {M.shape[0]} x k, got {B.shape}")
        if B.shape[1] and not np.allclose(B.T @ B, np.eye(B.shape[1]), rtol=0, atol=_ORTHO_TOL):
            raise ConfigError("basis columns must be orthonormal")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "M", M)

    @property
    def dim(self):
        return self.M.shape[0]

    def _offset(self, x):
        return np.linalg.norm(x - (x @ self.B) @ self.B.T, axis=-1)

    def contains(self, x):
        x = _vec(x, self.dim)
        return self._offset(x) <= 1e-9 * (1 + np.linalg.norm(x, axis=-1))

    def value(self, x):
        x = _vec(x, self.dim)
        vals = 0.5 * np.einsum("...i,ij,...j->...", x, self.M, x)
        return np.where(self.contains(x), vals, np.inf)

    def prox(self, s):
        s = _vec(s, self.dim)
        if self.B.shape[1] == 0:
            return np.zeros_like(s)
        G = self.B.T @ (np.eye(self.dim) + self.M) @ self.B
        w = np.linalg.solve(G, (s @ self.B).T).T if s.ndim > 1 else np.linalg.solve(G, s @ self.B)
        return w @ self.B.T

    def subgradient_residual(self, x, u):
        x, u = _vec(x, self.dim), _vec(u, self.dim)
        if not np.all(self.contains(x)):
            return math.inf
        return float(np.max(np.abs((u - x @ self.M.T) @ self.B), initial=0.0))

    def slope_bound(self, grid):
        r = np.linalg.norm(np.maximum(np.abs(grid.lo), np.abs(grid.hi)))
        return float(np.linalg.norm(self.M, 2) * r)

    def to_dict(self):
        return {"kind": "subspace_quadratic", "basis": self.B.tolist(), "matrix": self.M.tolist()}


@dataclass(frozen=True, eq=False)
class GridFn(ConvexFn):
    """Values at grid nodes (``+inf`` allowed); nothing is assumed between nodes.

    ``boundary`` optionally flags nodes whose value came from a supremum
    attained on the boundary of a primal grid, where the true conjugate may
    be larger.
    """

    grid: Grid
    values: np.ndarray
    boundary: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise ConfigError(f"expected {self.grid.size} values, got {v.size}")
        if np.any(np.isnan(v)) or np.any(v == -np.inf):
            raise ConfigError("grid values must be real or +inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.grid.dim

    @property
    def warnings(self):
        if self.boundary is None or not np.any(self.boundary):
            return []
        return [f"supremum attained on the primal grid boundary at {int(self.boundary.sum())} node(s)"]

    def node_index(self, x):
        x = _vec(x, self.dim)
        h = self.grid.spacing
        lo = np.array(self.grid.lo)
        k = np.rint((x - lo) / h).astype(np.intp)
        if np.any(k < 0) or np.any(k >= np.array(self.grid.steps)):
            raise DomainError("point lies outside the grid box")
        if np.any(np.abs(lo + k * h - x) > 1e-9 * h):
            raise DomainError("GridFn is only known at grid nodes")
        return np.ravel_multi_index(tuple(np.moveaxis(k, -1, 0)), self.grid.steps)

    def value(self, x):
        return self.values[self.node_index(x)]

    def values_on(self, grid):
        if grid != self.grid:
            return super().values_on(grid)
        return np.asarray(self.values)

    def _scores(self, s):
        s = _vec(s, self.dim)
        nodes = self.grid.nodes()
        diff = s[..., None, :] - nodes
        return self.values + 0.5 * np.sum(diff * diff, axis=-1), nodes

    def prox(self, s):
        """Grid argmin of ``f(x) + q(s - x)``; ties go to the first node."""
        scores, nodes = self._scores(s)
        return nodes[np.argmin(scores, axis=-1)]

    def envelope(self, s):
        scores, _ = self._scores(s)
        return scores.min(axis=-1)

    def subgradient_residual(self, x, u):
        fx = self.value(x)
        nodes = self.grid.nodes()
        x, u = _vec(x, self.dim), _vec(u, self.dim)
        gap = fx + (nodes - x) @ u - self.values
        finite = np.isfinite(self.values)
        return float(max(0.0, np.max(gap[finite], initial=0.0)))

    def slope_bound(self, grid=None):
        F = self.values.reshape(self.grid.steps)
        best = 0.0
        for ax, h in enumerate(self.grid.spacing):
            dF = np.diff(F, axis=ax) / h
            dF = dF[np.isfinite(dF)]
            if dF.size:
                best = max(best, float(np.abs(dF).max()))
        return best

    def second_differences(self):
        """Per-axis discrete second differences (finite entries only)."""
        F = self.values.reshape(self.grid.steps)
        out = []
        for ax, h in enumerate(self.grid.spacing):
            d2 = np.diff(F, n=2, axis=ax) / h**2
            out.append(d2[np.isfinite(d2)])
        return out

    def to_dict(self):
        return {"kind": "grid", "grid": self.grid.to_dict(), "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class AlphaTable:
    """Strictly increasing piecewise-linear map ``t -> alpha(t)`` with ``alpha(0) = 0``."""

    ts: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        vals = np.asarray(self.vals, dtype=float)
        if ts.ndim != 1 or ts.shape != vals.shape or ts.size < 2:
            raise ConfigError("alpha table needs matching 1-D ts/vals with >= 2 entries")
        if np.any(np.diff(ts) <= 0) or np.any(np.diff(vals) <= 0):
            raise ConfigError("alpha table must be strictly increasing")
        if not ts[0] <= 0 <= ts[-1] or abs(np.interp(0.0, ts, vals)) > 1e-12:
            raise ConfigError("alpha table must pass through (0, 0)")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "vals", vals)

    @classmethod
    def from_callable(cls, fn, ts):
        ts = np.asarray(ts, dtype=float)
        return cls(ts, np.array([fn(t) for t in ts], dtype=float))

    def __call__(self, t):
        return np.interp(t, self.ts, self.vals)

    def inverse(self, y):
        return np.interp(y, self.vals, self.ts)

    def to_dict(self):
        return {"ts": self.ts.tolist(), "vals": self.vals.tolist()}


@dataclass(frozen=True, eq=False)
class CurveAntiderivative(ConvexFn):
    """Antiderivative attached to the curve ``t -> (alpha_1(t), ..., alpha_N(t))``.

    ``own_index`` is 1-based.  The integrand is piecewise linear between the
    images of the table breakpoints, so the trapezoid rule on that partition
    is exact.  Outside ``alpha_i`` of the common t-range the value is ``+inf``.
    """

    alphas: tuple
    own_index: int

    def __post_init__(self):
        alphas = tuple(a if isinstance(a, AlphaTable) else AlphaTable(**a) for a in self.alphas)
        if len(alphas) < 2 or not 1 <= self.own_index <= len(alphas):
            raise ConfigError("need >= 2 alpha tables and a valid own_index")
        object.__setattr__(self, "alphas", alphas)
        t_lo = max(a.ts[0] for a in alphas)
        t_hi = min(a.ts[-1] for a in alphas)
        own = alphas[self.own_index - 1]
        ts = np.unique(np.concatenate([a.ts for a in alphas] + [[0.0, t_lo, t_hi]]))
        ts = ts[(ts >= t_lo) & (ts <= t_hi)]
        xs = own(ts)
        g = self.derivative(xs, _check=False)
        F = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(xs))])
        F -= np.interp(0.0, xs, F)
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_F", F)
        object.__setattr__(self, "_gs", g)

    dim = 1

    @property
    def domain(self):
        return float(self._xs[0]), float(self._xs[-1])

    def derivative(self, x, _check=True):
        x = np.asarray(x, dtype=float)
        if _check:
            lo, hi = self.domain
            if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
                raise DomainError(f"x outside the tabulated domain [{lo}, {hi}]")
        t = self.alphas[self.own_index - 1].inverse(x)
        return sum(a(t) for k, a in enumerate(self.alphas) if k != self.own_index - 1)

    gradient = derivative

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim and x.shape[-1] == 1:
            x = x[..., 0]
        xs, F, g = self._xs, self._F, self._gs
        k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
        inside = (x >= xs[0]) & (x <= xs[-1])
        xc = np.clip(x, xs[0], xs[-1])
        gx = np.interp(xc, xs, g)
        val = F[k] + 0.5 * (g[k] + gx) * (xc - xs[k])
        return np.where(inside, val, np.inf)

    def prox(self, s):
        """Solve ``x + f'(x) = s`` by bisection on the tabulated domain."""
        s_arr = np.asarray(s, dtype=float)
        flat = s_arr.reshape(-1)
        lo, hi = self.domain
        out = np.empty_like(flat)
        for k, sk in enumerate(flat):
            fun = lambda x: x + self.derivative(x, _check=False) - sk  # noqa: E731
            a, b = fun(lo), fun(hi)
            if a > 0 or b < 0:
                raise DomainError(f"prox bracket [{lo}, {hi}] does not contain a root for s={sk}")
            if a == 0:
                out[k] = lo
            elif b == 0:
                out[k] = hi
            else:
                out[k] = optimize.bisect(fun, lo, hi, xtol=1e-14, rtol=8 * np.finfo(float).eps, maxiter=400)
        return out.reshape(s_arr.shape)

    def envelope(self, s):
        s = np.asarray(s, dtype=float)
        p = self.prox(s)
        return np.squeeze(self.value(p) + 0.5 * (s - p) ** 2, axis=-1) if s.ndim and s.shape[-1] == 1 else self.value(p) + 0.5 * (s - p) ** 2

    def subgradient_residual(self, x, u):
        return float(np.max(np.abs(self.derivative(np.ravel(x)) - np.ravel(u))))

    def slope_bound(self, grid=None):
        return float(np.max(np.abs(self._gs)))

    def to_dict(self):
        return {"kind": "curve", "alphas": [a.to_dict() for a in self.alphas], "own_index": self.own_index}


def convex_fn_from_dict(data) -> ConvexFn:
    kind = data.get("kind")
    if kind == "quadratic":
        return Quadratic(data["matrix"])
    if kind == "subspace_quadratic":
        M = np.asarray(data["matrix"], dtype=float)
        B = np.asarray(data["basis"], dtype=float).reshape(M.shape[0], -1)
        return SubspaceQuadratic(B, M)
    if kind == "grid":
        return GridFn(Grid.from_dict(data["grid"]), data["values"])
    if kind == "curve":
        return CurveAntiderivative(tuple(AlphaTable(**a) for a in data["alphas"]), int(data["own_index"]))
    raise ConfigError(f"unknown convex function kind {kind!r}")


@dataclass(frozen=True, eq=False)
class SplittingTuple:
    """N convex functions over a common marginal space."""

    funcs: tuple

    def __post_init__(self):
        funcs = tuple(self.funcs)
        if len(funcs) < 2:
            raise ConfigError("a splitting tuple needs at least two functions")
        dims = {f.dim for f in funcs}
        if len(dims) != 1:
            raise ConfigError(f"all functions must share one dimension, got {sorted(dims)}")
        for k, f in enumerate(funcs):
            if isinstance(f, GridFn) and not np.any(np.isfinite(f.values)):
                raise ConfigError(f"function {k + 1} is not proper")
        object.__setattr__(self, "funcs", funcs)

    @property
    def config(self):
        return SpaceConfig(len(self.funcs), self.funcs[0].dim)

    def __len__(self):
        return len(self.funcs)

    def __getitem__(self, k):
        return self.funcs[k]

    def __iter__(self):
        return iter(self.funcs)

    def to_dict(self):
        return {"config": self.config.to_dict(), "funcs": [f.to_dict() for f in self.funcs]}

    @classmethod
    def from_dict(cls, data):
        t = cls(tuple(convex_fn_from_dict(f) for f in data["funcs"]))
        if "config" in data and t.config != SpaceConfig(data["config"]["N"], data["config"]["d"]):
            raise ConfigError("declared config does not match the functions")
        return t


def _as_tuple(funcs):
    return funcs if isinstance(funcs, SplittingTuple) else SplittingTuple(tuple(funcs))


def prox(f: ConvexFn, s):
    """``argmin_y f(y) + q(y - s)``; grid functions give the grid argmin."""
    return f.prox(s)


def moreau_envelope(f: ConvexFn, s):
    """``inf_x f(x) + q(s - x)``, evaluated as ``f(p) + q(s - p)`` at ``p = prox(f, s)``."""
    return f.envelope(s)


# -- discrete Legendre transforms -------------------------------------------


def _lower_hull(x, y):
    """Indices of the lower convex hull of points sorted by ``x``."""
    hull = []
    for k in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies on or above segment a-k
            if (y[b] - y[a]) * (x[k] - x[a]) >= (y[k] - y[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(k)
    return np.array(hull, dtype=np.intp)


def _legendre_1d(x, fx, u):
    """``max_k u*x_k - fx_k`` for sorted distinct ``x``; returns values and argmax.

    Works on the lower convex hull, so the cost is linear after sorting of
    the slopes.  Ties resolve to the smallest maximizing ``x``.
    """
    finite = np.flatnonzero(np.isfinite(fx))
    if finite.size == 0:
        return np.full(u.shape, -np.inf), np.zeros(u.shape, dtype=np.intp)
    xf, yf = x[finite], fx[finite]
    hull = _lower_hull(xf, yf)
    hx, hy = xf[hull], yf[hull]
    slopes = np.diff(hy) / np.diff(hx)
    j = np.searchsorted(slopes, u, side="left")
    return u * hx[j] - hy[j], finite[hull[j]]


def _conj_along(h, axis, x, u):
    """1-D conjugate of ``h`` along ``axis`` (all other axes are batch)."""
    moved = np.moveaxis(h, axis, -1)
    rows = moved.reshape(-1, moved.shape[-1])
    vals = np.empty((rows.shape[0], u.size))
    args = np.empty((rows.shape[0], u.size), dtype=np.intp)
    for r, row in enumerate(rows):
        vals[r], args[r] = _legendre_1d(x, row, u)
    shape = moved.shape[:-1] + (u.size,)
    return np.moveaxis(vals.reshape(shape), -1, axis), np.moveaxis(args.reshape(shape), -1, axis)


def _legendre_axiswise(F, xaxes, uaxes):
    """Separable conjugate on a product grid plus the maximizing node per dual node."""
    D = F.ndim
    h = F
    stage_args = {}
    for ax in reversed(range(D)):
        g, a = _conj_along(h, ax, xaxes[ax], uaxes[ax])
        stage_args[ax] = a
        h = -g
    values = g
    # backtrack the maximizer: stage ax has shape (n_0..n_{ax-1}, m_ax..m_{D-1})
    uidx = np.indices(values.shape)
    chosen = []
    for ax in range(D):
        key = tuple(chosen) + tuple(uidx[ax:])
        chosen.append(stage_args[ax][key])
    return values, np.stack(chosen)


def legendre_direct(nodes, fvals, duals, chunk=4096):
    """Brute-force ``max_x <u, x> - f(x)`` over all nodes; ties go to the first node."""
    fvals = np.asarray(fvals, dtype=float)
    keep = np.isfinite(fvals)
    if not np.any(keep):
        return np.full(len(duals), -np.inf), np.zeros(len(duals), dtype=np.intp)
    idx = np.flatnonzero(keep)
    X, Fk = nodes[idx], fvals[idx]
    vals = np.empty(len(duals))
    args = np.empty(len(duals), dtype=np.intp)
    for start in range(0, len(duals), chunk):
        U = duals[start : start + chunk]
        scores = U @ X.T - Fk
        k = np.argmax(scores, axis=1)
        vals[start : start + chunk] = scores[np.arange(len(U)), k]
        args[start : start + chunk] = idx[k]
    return vals, args


def fenchel_conjugate(f: ConvexFn, dual_grid: Optional[Grid] = None, primal_grid=None, method="fast"):
    """Fenchel conjugate ``f*(u) = sup_x <u, x> - f(x)``.

    Positive definite quadratics return the closed form ``q_{M^-1}``.  All
    other functions are sampled on a primal grid (their own for ``GridFn``,
    else ``primal_grid`` or ``dual_grid``) and transformed onto ``dual_grid``
    (default: the primal lattice).  ``method="fast"`` runs the hull-based
    transform axis by axis, ``"direct"`` takes the brute-force maximum.  Dual
    nodes whose maximizer sits on the primal boundary are flagged in the
    result's ``boundary`` mask.
    """
    if isinstance(f, Quadratic) and f.is_positive_definite:
        return f.conjugate()
    if isinstance(f, GridFn):
        primal = f
    else:
        pg = primal_grid or dual_grid
        if pg is None:
            raise DomainError("no closed form: pass a grid for the discrete transform")
        primal = GridFn(pg, f.values_on(pg))
    dual_grid = dual_grid or primal.grid
    if dual_grid.dim != primal.dim:
        raise ConfigError("dual grid dimension mismatch")
    if primal.dim > 3:
        raise ConfigError("grid conjugation is limited to d <= 3")
    if method == "direct":
        if primal.grid.size * dual_grid.size > 100 * NODE_LIMIT:
            raise ConfigError("grid too large for the direct transform")
        vals, arg = legendre_direct(primal.grid.nodes(), primal.values, dual_grid.nodes())
    elif method == "fast":
        F = primal.values.reshape(primal.grid.steps)
        vals_nd, arg_nd = _legendre_axiswise(F, primal.grid.axes(), dual_grid.axes())
        vals = vals_nd.reshape(-1)
        arg = np.ravel_multi_index(tuple(a.reshape(-1) for a in arg_nd), primal.grid.steps)
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.any(vals == -np.inf):
        raise DomainError("function is +inf at every node")
    boundary = primal.grid.boundary_mask()[arg]
    return GridFn(dual_grid, vals, boundary)


# -- c-conjugation ------------------------------------------------------------


def _grid_values(f, grid):
    if f.dim != grid.dim:
        raise ConfigError("grid/function dimension mismatch")
    return np.asarray(f.values_on(grid), dtype=float)


def _combine_others(funcs, i0, grids):
    """All finite combos of the other marginals, reduced by their block sum.

    Returns ``(sums, phi)`` with ``phi = sum_{i<j, i,j != i0} <x_i, x_j> -
    sum_{i != i0} f_i(x_i)`` maximized over combos sharing the same sum.
    Only the sum of the blocks seen so far enters later terms, so keeping the
    best ``phi`` per distinct sum is exact.
    """
    d = grids[0].dim
    sums = np.zeros((1, d))
    phi = np.zeros(1)
    for i, (f, grid) in enumerate(zip(funcs, grids)):
        if i == i0:
            continue
        Y = grid.nodes()
        fy = _grid_values(f, grid)
        ok = np.isfinite(fy)
        Y, fy = Y[ok], fy[ok]
        if Y.shape[0] == 0:
            raise DomainError(f"function {i + 1} is +inf on its whole grid")
        if sums.shape[0] * Y.shape[0] > NODE_LIMIT:
            raise ConfigError("c-conjugate combination count exceeds the node limit")
        new_phi = (phi[:, None] + sums @ Y.T - fy[None, :]).reshape(-1)
        new_sums = (sums[:, None, :] + Y[None, :, :]).reshape(-1, d)
        uniq, inv = np.unique(new_sums, axis=0, return_inverse=True)
        best = np.full(uniq.shape[0], -np.inf)
        np.maximum.at(best, inv.reshape(-1), new_phi)
        sums, phi = uniq, best
    return sums, phi


def _c_conjugate_direct(funcs, i0, grids):
    """Maximize ``c(x) - sum_{i != i0} f_i(x_i)`` over the full product grid."""
    N = len(funcs)
    others = [i for i in range(N) if i != i0]
    node_sets = [grids[i].nodes() for i in others]
    fvals = [_grid_values(funcs[i], grids[i]) for i in others]
    count = int(np.prod([len(n) for n in node_sets]))
    target = grids[i0].nodes()
    if count * len(target) > 50 * NODE_LIMIT:
        raise ConfigError("direct c-conjugate exceeds the node limit")
    mesh = np.meshgrid(*[np.arange(len(n)) for n in node_sets], indexing="ij")
    combo = [m.reshape(-1) for m in mesh]
    penalty = sum(fv[c] for fv, c in zip(fvals, combo))
    out = np.empty(len(target))
    for t, x in enumerate(target):
        pts = np.empty((count, N, x.size))
        pts[:, i0] = x
        for i, ns, c in zip(others, node_sets, combo):
            pts[:, i] = ns[c]
        out[t] = np.max(cost_eval(pts) - penalty)
    return out


def c_conjugate(funcs, i0: int, grids: Sequence[Grid], method="fast") -> GridFn:
    """``x -> max over the other grids of c(x_1..x_N) - sum_{i != i0} f_i(x_i)``.

    ``i0`` is 1-based; the entry at ``i0`` is ignored and may be ``None``.
    ``method="direct"`` enumerates the product grid term by term and serves
    as the reference for the reduced ``"fast"`` path.
    """
    funcs = list(funcs)
    N = len(funcs)
    if not 1 <= i0 <= N:
        raise ConfigError(f"i0 must lie in 1..{N}")
    if len(grids) != N:
        raise ConfigError("need one grid per marginal")
    if any(g.size == 0 for g in grids):
        raise ConfigError("empty grid")
    k0 = i0 - 1
    grid = grids[k0]
    if grid.dim > 3:
        raise ConfigError("grid conjugation is limited to d <= 3")
    if method == "direct":
        vals = _c_conjugate_direct(funcs, k0, grids)
    elif method == "fast":
        sums, phi = _combine_others(funcs, k0, grids)
        keep = np.isfinite(phi)
        sums, phi = sums[keep], phi[keep]
        if grid.dim == 1:
            vals, _ = _legendre_1d(sums[:, 0], -phi, grid.axes()[0])
        else:
            vals, _ = legendre_direct(sums, -phi, grid.nodes())
    else:
        raise ValueError(f"unknown method {method!r}")
    return GridFn(grid, vals)


# -- splitting inequality and relaxation ------------------------------------


def _product_slack(funcs, grids):
    """``sum_i f_i(x_i) - c(x)`` on the product grid, shape ``(n_1, ..., n_N)``."""
    N = len(funcs)
    sizes = [g.size for g in grids]
    if int(np.prod(sizes)) > NODE_LIMIT:
        raise ConfigError("product grid exceeds the node limit")
    nodes = [g.nodes() for g in grids]
    vals = [_grid_values(f, g) for f, g in zip(funcs, grids)]

    def bcast(a, axis):
        shape = [1] * N
        shape[axis] = -1
        return a.reshape(shape)

    total = sum(bcast(v, i) for i, v in enumerate(vals))
    cost = np.zeros([1] * N)
    for i in range(N):
        for j in range(i + 1, N):
            G = nodes[i] @ nodes[j].T
            shape = [1] * N
            shape[i], shape[j] = sizes[i], sizes[j]
            cost = cost + G.reshape(shape)
    with np.errstate(invalid="ignore"):
        return total - cost


def _node_point(grids, flat_index):
    idx = np.unravel_index(flat_index, [g.size for g in grids])
    return np.stack([g.nodes()[k] for g, k in zip(grids, idx)])


def check_splitting_inequality(
    funcs, grids=None, points=None, gamma: Optional[GammaSet] = None, sample=None, tol=None, keep_values=False
) -> CheckReport:
    """Verify ``c <= f_1 (+) ... (+) f_N`` and equality on Gamma.

    The inequality is tested on the product of ``grids`` and/or on an explicit
    ``(m, N, d)`` point list; equality is tested on the materialized points of
    ``gamma``.  The report's margin is the smallest slack off Gamma; the
    largest absolute slack on Gamma is in ``details``.
    """
    tup = _as_tuple(funcs)
    scale = 0.0
    slack_parts = []
    details = {}
    witness = None
    margin = math.inf
    if grids is not None:
        grids = list(grids)
        S = _product_slack(tup.funcs, grids)
        flat = S.reshape(-1)
        scale = max(scale, max(float(np.max(np.abs(g.lo + g.hi))) for g in grids) ** 2)
        slack_parts.append(("grid", flat))
        if keep_values:
            details["grid_slack"] = flat
    if points is not None:
        P = np.asarray(points, dtype=float)
        vals = sum(f.value(P[:, i]) for i, f in enumerate(tup.funcs))
        ps = vals - cost_eval(P)
        scale = max(scale, float(np.max(np.abs(P))) ** 2)
        slack_parts.append(("points", ps))
        if keep_values:
            details["point_slack"] = ps
    tol = effective_tol(tol, scale * len(tup) ** 2)
    details["tol"] = tol
    for kind, sl in slack_parts:
        m = float(np.min(sl))
        margin = min(margin, m)
        details[f"min_slack_{kind}"] = m
        bad = np.flatnonzero(sl < -tol)
        if bad.size and witness is None:
            k = int(bad[0])
            pt = _node_point(grids, k) if kind == "grid" else np.asarray(points, dtype=float)[k]
            witness = {"where": kind, "index": k, "point": pt, "slack": float(sl[k])}
    if gamma is not None:
        G = gamma.materialize(sample)
        vals = sum(f.value(G[:, i]) for i, f in enumerate(tup.funcs))
        gs = vals - cost_eval(G)
        gtol = effective_tol(tol if tol is not None else None, float(np.max(np.abs(G))) ** 2 * len(tup) ** 2)
        gtol = max(gtol, details["tol"])
        worst = int(np.argmax(np.abs(gs)))
        details["max_abs_slack_on_gamma"] = float(np.abs(gs[worst]))
        details["gamma_tol"] = gtol
        if not abs(gs[worst]) <= gtol and witness is None:
            witness = {"where": "gamma", "index": worst, "point": G[worst], "slack": float(gs[worst])}
    if margin == math.inf:
        margin = -details.get("max_abs_slack_on_gamma", 0.0)
    return CheckReport(
        Verdict.FAIL if witness else Verdict.PASS,
        margin,
        witness,
        check="splitting_inequality",
        mode="exhaustive",
        details=details,
    )


def _default_lipschitz(tup, grids):
    return max(f.slope_bound(g) for f, g in zip(tup.funcs, grids))


def splitting_set_extract(funcs, grids, tol=None, lipschitz=None):
    """Product-grid nodes where ``|sum f_i - c| <= tol``, as an ``(k, N, d)`` array.

    The default tolerance is ``5 * h * L`` with ``h`` the largest grid step and
    ``L`` a slope scale (default: the largest gradient magnitude of the
    functions over their grid boxes).
    """
    tup = _as_tuple(funcs)
    grids = list(grids)
    if tol is None:
        L = _default_lipschitz(tup, grids) if lipschitz is None else float(lipschitz)
        tol = 5.0 * max(g.max_step for g in grids) * L
    S = _product_slack(tup.funcs, grids).reshape(-1)
    if np.min(S) < -tol:
        k = int(np.argmin(S))
        rep = CheckReport(
            Verdict.FAIL, float(S[k]), {"point": _node_point(grids, k), "slack": float(S[k])},
            check="splitting_inequality",
        )
        raise PreconditionFailed("c <= sum f_i fails on the grid", rep)
    hits = np.flatnonzero(np.abs(S) <= tol)
    d = grids[0].dim
    if hits.size == 0:
        return np.zeros((0, len(grids), d))
    return np.stack([_node_point(grids, k) for k in hits])


@dataclass
class RelaxResult:
    funcs: SplittingTuple
    max_change: float
    interior_change: float
    pass_changes: list


def _change(new, old, interior):
    both_inf = np.isinf(new) & np.isinf(old)
    with np.errstate(invalid="ignore"):
        diff = np.where(both_inf, 0.0, np.abs(new - old))
    return float(diff.max()), float(diff[interior].max()) if np.any(interior) else 0.0


def relax_to_c_conjugate(funcs, grids: Sequence[Grid], passes: int = 1, tol=None, method="fast") -> RelaxResult:
    """Replace each entry in turn by the c-conjugate of the others.

    Sweeps ``f_1 = (u_2 (+) ... (+) u_N)^c``, then ``f_{i0}`` from the already
    relaxed ``f_1..f_{i0-1}`` and the remaining ``u``'s, finishing with ``f_N``.
    The sweep is repeated ``passes`` times.  Raises
    :class:`PreconditionFailed` when ``c <= sum u_i`` fails on the grid.
    """
    tup = _as_tuple(funcs)
    grids = list(grids)
    pre = check_splitting_inequality(tup, grids=grids, tol=tol)
    if pre.failed:
        raise PreconditionFailed("c <= sum u_i fails on the product grid", pre)
    current = [_grid_values(f, g) for f, g in zip(tup.funcs, grids)]
    entries = [GridFn(g, v) for g, v in zip(grids, current)]
    pass_changes = []
    for _ in range(max(1, int(passes))):
        worst, worst_int = 0.0, 0.0
        for k in range(len(entries)):
            new = c_conjugate(entries, k + 1, grids, method=method)
            a, b = _change(np.asarray(new.values), np.asarray(entries[k].values), grids[k].interior_mask())
            worst, worst_int = max(worst, a), max(worst_int, b)
            entries[k] = new
        pass_changes.append({"max": worst, "interior": worst_int})
    return RelaxResult(SplittingTuple(tuple(entries)), pass_changes[-1]["max"], pass_changes[-1]["interior"], pass_changes)


# -- criteria -----------------------------------------------------------------


def _probes(probes, d):
    P = np.asarray(probes, dtype=float)
    if P.ndim == 1:
        P = P[:, None] if d == 1 else P[None]
    if P.shape[-1] != d:
        raise ConfigError(f"probe points must have dimension {d}")
    return P


def _in_sum_image(gamma, S, sample):
    """Mask of probes lying in ``S(Gamma)`` (range of the sum matrix, or the sampled sums)."""
    norms = 1.0 + np.linalg.norm(S, axis=1)
    if gamma.is_finite:
        sums = sum_map(gamma.data)
        dist = np.linalg.norm(S[:, None, :] - sums[None], axis=-1).min(axis=1)
        return dist <= 1e-9 * norms
    T = gamma.data.sum(axis=0)
    coef, *_ = np.linalg.lstsq(T, S.T, rcond=None)
    resid = np.linalg.norm(T @ coef - S.T, axis=0)
    return resid <= 1e-9 * norms


def check_envelope_criterion(funcs, probes, gamma: Optional[GammaSet] = None, sample=None, tol=None, keep_values=False):
    """``sum_i e_{f_i*}(s) <= q(s)`` at every probe, with equality exactly on ``S(Gamma)``.

    ``e_{f*}`` is obtained from the envelope of ``f`` through ``e_f + e_{f*} = q``.
    Tolerances are relative: ``tol * (1 + ||s||^2)`` with ``tol`` default 1e-9.
    """
    tup = _as_tuple(funcs)
    S = _probes(probes, tup.config.d)
    tol = 1e-9 if tol is None else float(tol)
    qs = q(S)
    env_star = np.stack([qs - np.asarray(f.envelope(S)).reshape(-1) for f in tup.funcs])
    total = env_star.sum(axis=0)
    slack = qs - total
    tols = tol * (1.0 + 2.0 * qs)
    details = {"tol": tol, "max_abs_slack": float(np.max(np.abs(slack)))}
    if keep_values:
        details["probes"] = S
        details["envelope_sum"] = total
        details["q"] = qs
    witness = None
    bad = np.flatnonzero(slack < -tols)
    if bad.size:
        k = bad[0]
        witness = {"reason": "inequality violated", "s": S[k], "slack": float(slack[k])}
    if gamma is not None and witness is None:
        on = _in_sum_image(gamma, S, sample)
        details["probes_on_sum_image"] = int(on.sum())
        miss_eq = np.flatnonzero(on & (np.abs(slack) > tols))
        miss_strict = np.flatnonzero(~on & (slack <= tols))
        if miss_eq.size:
            k = miss_eq[0]
            witness = {"reason": "no equality at a point of S(Gamma)", "s": S[k], "slack": float(slack[k])}
        elif miss_strict.size:
            k = miss_strict[0]
            witness = {"reason": "equality off S(Gamma)", "s": S[k], "slack": float(slack[k])}
    return CheckReport(
        Verdict.FAIL if witness else Verdict.PASS,
        float(slack.min()),
        witness,
        check="envelope_criterion",
        mode="probes",
        details=details,
    )


def check_prox_partition(funcs, probes, tol=None) -> CheckReport:
    """``prox_{f_1} + ... + prox_{f_N} = Id`` at every probe (relative tolerance)."""
    tup = _as_tuple(funcs)
    S = _probes(probes, tup.config.d)
    tol = 1e-9 if tol is None else float(tol)
    total = sum(np.asarray(f.prox(S)).reshape(S.shape) for f in tup.funcs)
    resid = np.linalg.norm(total - S, axis=1)
    bound = tol * (1.0 + np.linalg.norm(S, axis=1))
    bad = np.flatnonzero(resid > bound)
    witness = None
    if bad.size:
        k = bad[0]
        witness = {"s": S[k], "prox_sum": total[k], "residual": float(resid[k])}
    return CheckReport(
        Verdict.FAIL if bad.size else Verdict.PASS,
        float(np.min(bound - resid)),
        witness,
        check="prox_partition",
        mode="probes",
        details={"tol": tol, "max_residual": float(resid.max())},
    )


def check_subdiff_identity(funcs, gamma: GammaSet, sample=None, tol=None) -> CheckReport:
    """``sum_{i != i0} x_i`` is a subgradient of ``f_{i0}`` at ``x_{i0}`` for every sampled point.

    Smooth entries compare with the gradient, subspace quadratics use the
    exact normal-cone test, grid functions use the subgradient inequality over
    all grid nodes.
    """
    tup = _as_tuple(funcs)
    pts = gamma.materialize(sample)
    tol = effective_tol(tol, float(np.max(np.abs(pts))) * len(tup))
    worst, witness = 0.0, None
    s = pts.sum(axis=1)
    for k, x in enumerate(pts):
        for i, f in enumerate(tup.funcs):
            r = f.subgradient_residual(x[i], s[k] - x[i])
            if r > worst:
                worst = r
            if r > tol and witness is None:
                witness = {"point": x, "point_index": k, "i0": i + 1, "residual": r}
    return CheckReport(
        Verdict.FAIL if witness else Verdict.PASS,
        tol - worst,
        witness,
        check="subdiff_identity",
        mode="exhaustive",
        details={"tol": tol, "max_residual": worst},
    )


def three_marginal_smooth_check(g: ConvexFn, h: ConvexFn, grids: Sequence[Grid], probes=None, tol=None) -> CheckReport:
    """Check ``e_{f*} + e_{g*} + e_{h*} = q`` for ``f = (g (+) h)^c`` (N = 3).

    ``f`` is computed on ``grids[0]`` as a grid c-conjugate, ``f*`` by the grid
    Legendre transform on the same lattice and ``e_{f*}`` by grid
    inf-convolution.  ``e_{g*}``, ``e_{h*}`` come from ``q - e_g`` and ``q - e_h``.
    Default probes: nodes of ``grids[0]`` in the middle half of the box;
    default tolerance ``3 h``.  Essential smoothness of ``f`` is assumed, not
    verified.
    """
    grids = list(grids)
    if len(grids) != 3:
        raise ConfigError("three grids are needed")
    h_step = max(gr.max_step for gr in grids)
    details = {"hypothesis": "essential smoothness of f assumed by caller"}
    if any(min(gr.steps) < 3 for gr in grids):
        details["warning"] = "grid too coarse to resolve the identity"
        return CheckReport(Verdict.INCONCLUSIVE, math.nan, check="three_marginal_smooth", details=details)
    f = c_conjugate([None, g, h], 1, grids)
    fstar = fenchel_conjugate(f)
    if probes is None:
        nodes = grids[0].nodes()
        lo, hi = np.array(grids[0].lo), np.array(grids[0].hi)
        mid, half = 0.5 * (lo + hi), 0.25 * (hi - lo)
        probes = nodes[np.all(np.abs(nodes - mid) <= half + 1e-12, axis=1)]
    S = _probes(probes, grids[0].dim)
    tol = 3.0 * h_step if tol is None else float(tol)
    qs = q(S)
    total = fstar.envelope(S) + (qs - np.asarray(g.envelope(S)).reshape(-1)) + (qs - np.asarray(h.envelope(S)).reshape(-1))
    resid = np.abs(total - qs)
    k = int(np.argmax(resid))
    details.update({
        "tol": tol,
        "grid_constant": tol / h_step,
        "max_residual": float(resid[k]),
        "probes": int(len(S)),
        "conjugate_warnings": fstar.warnings,
    })
    witness = None
    if resid[k] > tol:
        witness = {"s": S[k], "residual": float(resid[k])}
    return CheckReport(
        Verdict.FAIL if witness else Verdict.PASS,
        tol - float(resid[k]),
        witness,
        check="three_marginal_smooth",
        mode="grid",
        details=details,
    )
