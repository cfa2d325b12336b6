"""Spaces, points, multi-marginal sets and the classical pairwise cost.

Everything here works on the product space ``X = (R^d)^N``.  A point of
``X`` is stored as an ``(N, d)`` array of blocks; batches of points are
``(..., N, d)`` arrays.  Indices exposed to callers (marginals, subsets)
are 1-based to match the usual mathematical notation; arrays stay 0-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DEFAULT_TOL",
    "ConfigError",
    "UnsupportedRepresentation",
    "SpaceConfig",
    "MultiPoint",
    "GammaSet",
    "IndexSubset",
    "Grid",
    "proper_subsets",
    "effective_tol",
    "cost_eval",
    "sum_map",
    "project_marginal",
    "project_pair",
    "delta_perp_project",
    "shift_gamma",
]

#: Base absolute/relative tolerance for closed-form identities.
DEFAULT_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when shapes, indices or configs do not fit together."""


class UnsupportedRepresentation(ValueError):
    """Raised when an operation is not defined for a Gamma representation."""


def effective_tol(tol, scale=0.0):
    """Return ``tol`` if given, else ``DEFAULT_TOL * (1 + scale)``."""
    if tol is not None:
        return float(tol)
    return DEFAULT_TOL * (1.0 + float(scale))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpaceConfig:
    """Marginal count ``N`` and common marginal dimension ``d``."""

    N: int
    d: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"N must be an integer >= 2, got {self.N!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"d must be an integer >= 1, got {self.d!r}")

    def to_dict(self):
        return {"N": int(self.N), "d": int(self.d)}


@dataclass(frozen=True, eq=False)
class MultiPoint:
    """One point ``(x_1, ..., x_N)`` of the product space."""

    coords: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.coords, dtype=float)
        if a.ndim != 2:
            raise ConfigError(f"MultiPoint needs an (N, d) array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ConfigError("MultiPoint entries must be finite")
        SpaceConfig(a.shape[0], a.shape[1])
        object.__setattr__(self, "coords", _readonly(a))

    @property
    def config(self):
        return SpaceConfig(*self.coords.shape)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, MultiPoint):
            return NotImplemented
        return self.coords.shape == other.coords.shape and np.array_equal(
            self.coords, other.coords
        )

    def __hash__(self):
        return hash((self.coords.shape, self.coords.tobytes()))

    def __repr__(self):
        return f"MultiPoint({self.coords.tolist()!r})"


def _blocks(x):
    """Coerce a MultiPoint or array-like to a float array of shape (..., N, d)."""
    a = np.asarray(x.coords if isinstance(x, MultiPoint) else x, dtype=float)
    if a.ndim < 2:
        raise ConfigError(f"expected blocks of shape (..., N, d), got {a.shape}")
    return a


@dataclass(frozen=True)
class IndexSubset:
    """A subset ``K`` of ``{1, ..., N}`` used to select ``A_K``."""

    members: frozenset
    N: int

    def __init__(self, members: Iterable[int], N: int):
        m = frozenset(int(k) for k in members)
        if not m or len(m) >= N:
            raise ConfigError(f"K must satisfy 0 < |K| < N={N}, got {sorted(m)}")
        if min(m) < 1 or max(m) > N:
            raise ConfigError(f"K members must lie in 1..{N}, got {sorted(m)}")
        object.__setattr__(self, "members", m)
        object.__setattr__(self, "N", int(N))

    @property
    def mask(self):
        out = np.zeros(self.N, dtype=bool)
        out[[k - 1 for k in self.members]] = True
        return out

    def complement(self):
        return IndexSubset(set(range(1, self.N + 1)) - self.members, self.N)

    def as_tuple(self):
        return tuple(sorted(self.members))


def proper_subsets(N, containing_first=True):
    """Enumerate proper nonempty subsets of ``{1..N}`` in a fixed order.

    With ``containing_first`` only subsets holding index 1 are produced;
    ``K`` and its complement give the same monotonicity test so this halves
    the work without losing anything.  Order: by size, then lexicographic.
    """
    out = []
    for r in range(1, N):
        for combo in itertools.combinations(range(1, N + 1), r):
            if containing_first and combo[0] != 1:
                continue
            out.append(IndexSubset(combo, N))
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform lattice on a box, endpoints included."""

    lo: tuple
    hi: tuple
    steps: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        steps = tuple(int(v) for v in np.atleast_1d(self.steps))
        if not (len(lo) == len(hi) == len(steps)) or not lo:
            raise ConfigError("grid lo/hi/steps must have one common, nonzero length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ConfigError("grid needs lo < hi on every axis")
        if any(s < 2 for s in steps):
            raise ConfigError("grid needs at least 2 points per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "steps", steps)

    @classmethod
    def cube(cls, lo, hi, steps, dim):
        return cls((lo,) * dim, (hi,) * dim, (steps,) * dim)

    @property
    def dim(self):
        return len(self.lo)

    @property
    def shape(self):
        return self.steps

    @property
    def size(self):
        return int(np.prod(self.steps))

    @property
    def spacing(self):
        return np.array([(b - a) / (s - 1) for a, b, s in zip(self.lo, self.hi, self.steps)])

    @property
    def max_step(self):
        return float(self.spacing.max())

    def axes(self):
        return [np.linspace(a, b, s) for a, b, s in zip(self.lo, self.hi, self.steps)]

    def nodes(self):
        """All nodes as a ``(size, dim)`` array in C (lexicographic) order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def boundary_mask(self):
        idx = np.indices(self.steps).reshape(self.dim, -1)
        last = np.array(self.steps)[:, None] - 1
        return np.any((idx == 0) | (idx == last), axis=0)

    def interior_mask(self, margin=1):
        idx = np.indices(self.steps).reshape(self.dim, -1)
        last = np.array(self.steps)[:, None] - 1
        return np.all((idx >= margin) & (idx <= last - margin), axis=0)

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "steps": list(self.steps)}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["lo"]), tuple(data["hi"]), tuple(data["steps"]))


def _default_param_grid(d):
    return Grid.cube(-2.0, 2.0, 5, d)


@dataclass(frozen=True, eq=False)
class GammaSet:
    """A multi-marginal relation, either a finite point list or a linear image.

    ``kind == "finite"``: ``data`` is an ``(m, N, d)`` array of distinct points
    (exact duplicates dropped, first occurrence kept).

    ``kind == "linear"``: ``data`` is an ``(N, d, d)`` stack of matrices and the
    set is ``{(T_1 v, ..., T_N v) : v in R^d}``.
    """

    config: SpaceConfig
    kind: str
    data: np.ndarray = field(repr=False)

    @classmethod
    def finite(cls, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 2:
            pts = pts[None]
        if pts.ndim != 3 or pts.shape[0] == 0:
            raise ConfigError(f"finite Gamma needs a nonempty (m, N, d) array, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ConfigError("Gamma points must be finite")
        config = SpaceConfig(pts.shape[1], pts.shape[2])
        seen, keep = set(), []
        for k, p in enumerate(pts):
            key = (p + 0.0).tobytes()  # -0.0 and 0.0 are the same point
            if key not in seen:
                seen.add(key)
                keep.append(k)
        return cls(config, "finite", _readonly(pts[keep]))

    @classmethod
    def linear(cls, matrices):
        T = np.asarray(matrices, dtype=float)
        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise ConfigError(f"linear Gamma needs an (N, d, d) stack, got {T.shape}")
        if not np.all(np.isfinite(T)):
            raise ConfigError("parameterization matrices must be finite")
        return cls(SpaceConfig(T.shape[0], T.shape[1]), "linear", _readonly(T))

    @property
    def N(self):
        return self.config.N

    @property
    def d(self):
        return self.config.d

    @property
    def is_finite(self):
        return self.kind == "finite"

    def parameters(self, sample=None):
        """Parameter vectors used to materialize a linear set."""
        if sample is None:
            sample = _default_param_grid(self.d)
        if isinstance(sample, Grid):
            if sample.dim != self.d:
                raise ConfigError(f"parameter grid has dim {sample.dim}, need {self.d}")
            return sample.nodes()
        v = np.asarray(sample, dtype=float)
        if v.ndim == 1:
            v = v[None]
        if v.ndim != 2 or v.shape[1] != self.d or v.shape[0] == 0:
            raise ConfigError(f"parameter sample must be a nonempty (k, {self.d}) array")
        return v

    def materialize(self, sample=None):
        """Return the (sampled) points as an ``(m, N, d)`` array.

        ``sample`` is ignored for finite sets; for linear sets it is a
        parameter :class:`Grid` or an explicit ``(k, d)`` array, defaulting to
        ``[-2, 2]^d`` with 5 nodes per axis.
        """
        if self.is_finite:
            return self.data
        v = self.parameters(sample)
        return np.einsum("nij,kj->kni", self.data, v)

    def to_dict(self):
        if self.is_finite:
            body = {"kind": "finite", "points": self.data.tolist()}
        else:
            body = {"kind": "linear", "matrices": self.data.tolist()}
        return {"config": self.config.to_dict(), "body": body}

    @classmethod
    def from_dict(cls, data):
        config = SpaceConfig(data["config"]["N"], data["config"]["d"])
        body = data["body"]
        if body["kind"] == "finite":
            g = cls.finite(body["points"])
        elif body["kind"] == "linear":
            g = cls.linear(body["matrices"])
        else:
            raise ConfigError(f"unknown Gamma body kind {body['kind']!r}")
        if g.config != config:
            raise ConfigError(f"declared config {config} does not match body {g.config}")
        return g


def cost_eval(x):
    """Classical cost ``sum_{i<j} <x_i, x_j>``.

    Accepts one point ``(N, d)`` or a batch ``(..., N, d)``; pairs are summed
    with ``i`` ascending, then ``j``.
    """
    a = _blocks(x)
    N = a.shape[-2]
    total = np.zeros(a.shape[:-2])
    for i in range(N):
        for j in range(i + 1, N):
            total = total + np.einsum("...k,...k->...", a[..., i, :], a[..., j, :])
    return float(total) if total.ndim == 0 else total


def sum_map(x):
    """Block sum ``S(x) = x_1 + ... + x_N``."""
    return _blocks(x).sum(axis=-2)


def _check_index(i, N):
    if int(i) != i or not 1 <= i <= N:
        raise ConfigError(f"marginal index must lie in 1..{N}, got {i!r}")
    return int(i) - 1


def project_marginal(gamma: GammaSet, i: int):
    """i-th marginal: the block list (finite) or the matrix ``T_i`` (linear)."""
    k = _check_index(i, gamma.N)
    return gamma.data[:, k, :] if gamma.is_finite else gamma.data[k]


def project_pair(gamma: GammaSet, i: int, j: int, sample=None):
    """Two-marginal projection as an ``(m, 2, d)`` array of ``(x_i, x_j)``."""
    a, b = _check_index(i, gamma.N), _check_index(j, gamma.N)
    if not a < b:
        raise ConfigError(f"project_pair needs i < j, got ({i}, {j})")
    pts = gamma.materialize(sample)
    return np.stack([pts[:, a, :], pts[:, b, :]], axis=1)


def delta_perp_project(x):
    """Remove the diagonal component: ``x - (m, ..., m)`` with ``m = S(x)/N``."""
    a = _blocks(x)
    out = a - a.mean(axis=-2, keepdims=True)
    return MultiPoint(out) if out.ndim == 2 else out


def shift_gamma(gamma: GammaSet, x) -> GammaSet:
    """Translate every point of a finite set by ``x``."""
    if not gamma.is_finite:
        raise UnsupportedRepresentation("shifting a linear Gamma is not supported")
    a = _blocks(x)
    if a.shape != (gamma.N, gamma.d):
        raise ConfigError(f"shift has shape {a.shape}, need {(gamma.N, gamma.d)}")
    return GammaSet.finite(gamma.data + a)


def as_points(x: Sequence) -> np.ndarray:
    """Coerce a list of MultiPoints or an array to ``(m, N, d)``."""
    if isinstance(x, np.ndarray):
        return x.astype(float)
    return np.stack([_blocks(p) for p in x])
