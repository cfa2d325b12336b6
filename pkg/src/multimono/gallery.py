"""Worked examples as golden fixtures with their expected verdicts.

Each :class:`GalleryCase` bundles a multi-marginal set, an optional
splitting tuple and a list of :class:`Expectation` entries.  ``run_case``
executes every expectation and reports whether the observed verdicts match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import convex as cx
from . import monotone as mo
from .core import ConfigError, GammaSet, Grid
from .report import CheckReport, Verdict, jsonable

__all__ = [
    "Expectation",
    "GalleryCase",
    "CaseResult",
    "rotation",
    "make_quadratic_family",
    "make_curve_family",
    "make_example_54",
    "make_identity_family",
    "make_trivial_embedding",
    "make_rotation_tripod",
    "make_partition_counterexample",
    "CASES",
    "case_ids",
    "get_case",
    "run_case",
    "CHECKS",
]


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Expectation:
    """One expected verdict; ``params`` go to the check, ``details`` must match the report."""

    check: str
    verdict: Verdict
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"check": self.check, "verdict": Verdict(self.verdict).value}
        if self.params:
            out["params"] = self.params
        if self.details:
            out["details"] = self.details
        return jsonable(out)


@dataclass(frozen=True, eq=False)
class GalleryCase:
    id: str
    gamma: GammaSet
    tuple: Optional[cx.SplittingTuple]
    expected: tuple
    sample: object = None
    probes: Optional[np.ndarray] = None
    grids: Optional[tuple] = None
    description: str = ""

    def to_dict(self):
        return jsonable(
            {
                "id": self.id,
                "description": self.description,
                "gamma": self.gamma.to_dict(),
                "tuple": self.tuple.to_dict() if self.tuple is not None else None,
                "expected": [e.to_dict() for e in self.expected],
            }
        )


# -- checks the runner knows about -------------------------------------------


def _need_tuple(case):
    if case.tuple is None:
        raise ConfigError(f"case {case.id} has no splitting tuple")
    return case.tuple


def _resolvent_match(case, K, matrix, tol=1e-12):
    """Compare sampled ``J_{A_K}`` with ``s -> matrix @ s``."""
    g = mo.resolvent_samples(case.gamma, K, case.sample)
    J = np.asarray(matrix, dtype=float)
    err = np.abs(g.v - g.u @ J.T)
    k = int(np.unravel_index(np.argmax(err), err.shape)[0]) if err.size else 0
    worst = float(err.max()) if err.size else 0.0
    witness = None
    if worst > tol:
        witness = {"s": g.u[k], "sampled": g.v[k], "expected": J @ g.u[k], "error": worst}
    return CheckReport(
        Verdict.FAIL if witness else Verdict.PASS,
        tol - worst,
        witness,
        check="resolvent_samples",
        mode="exhaustive",
        details={"K": list(np.atleast_1d(K)), "max_error": worst},
    )


def _fne(case, K):
    rep = mo.check_firmly_nonexpansive(mo.resolvent_samples(case.gamma, K, case.sample))
    rep.details["K"] = list(np.atleast_1d(K))
    return rep


def _relax(case, passes=1, max_interior_change=0.02):
    res = cx.relax_to_c_conjugate(_need_tuple(case), case.grids, passes=passes)
    ok = res.interior_change <= max_interior_change
    return CheckReport(
        Verdict.PASS if ok else Verdict.FAIL,
        max_interior_change - res.interior_change,
        None if ok else {"interior_change": res.interior_change},
        check="relax_to_c_conjugate",
        details={"max_change": res.max_change, "interior_change": res.interior_change},
    )


def _extract_near_diagonal(case, tol=None, cells=1.0):
    """Splitting set extracted on the grids lies within ``cells`` grid steps of the diagonal."""
    h = max(g.max_step for g in case.grids)
    tup = cx.relax_to_c_conjugate(_need_tuple(case), case.grids).funcs
    pts = cx.splitting_set_extract(tup, case.grids, tol=h * h if tol is None else tol)
    spread = np.max(pts.max(axis=1) - pts.min(axis=1), axis=-1) if len(pts) else np.zeros(0)
    worst = float(spread.max()) if spread.size else math.inf
    ok = bool(spread.size) and worst <= cells * h + 1e-12
    witness = None
    if not ok:
        witness = {"points": len(pts)} if not spread.size else {"point": pts[int(np.argmax(spread))], "spread": worst}
    return CheckReport(
        Verdict.PASS if ok else Verdict.FAIL,
        cells * h - worst,
        witness,
        check="splitting_set_extract",
        details={"points": int(len(pts)), "max_spread": worst, "cell": h},
    )


CHECKS: dict[str, Callable[..., CheckReport]] = {
    "check_pairwise_c_monotone": lambda c, **kw: mo.check_pairwise_c_monotone(c.gamma, c.sample, **kw),
    "check_n_c_cyclic": lambda c, **kw: mo.check_n_c_cyclic(c.gamma, sample=c.sample, **kw),
    "classify_maximality": lambda c, **kw: mo.classify_maximality(c.gamma, c.sample, **kw),
    "check_sum_surjective": lambda c, **kw: mo.check_sum_surjective(c.gamma, **kw),
    "check_partition_identity": lambda c, **kw: mo.check_partition_identity(c.gamma, c.sample, **kw),
    "check_two_marginal_projections": lambda c, **kw: mo.check_two_marginal_projections(c.gamma, c.sample, **kw),
    "check_firmly_nonexpansive": lambda c, K: _fne(c, K),
    "resolvent_samples": lambda c, **kw: _resolvent_match(c, **kw),
    "check_splitting_inequality": lambda c, **kw: cx.check_splitting_inequality(
        _need_tuple(c), grids=c.grids, gamma=c.gamma, sample=c.sample, **kw
    ),
    "check_subdiff_identity": lambda c, **kw: cx.check_subdiff_identity(_need_tuple(c), c.gamma, c.sample, **kw),
    "check_prox_partition": lambda c, **kw: cx.check_prox_partition(_need_tuple(c), c.probes, **kw),
    "check_envelope_criterion": lambda c, **kw: cx.check_envelope_criterion(
        _need_tuple(c), c.probes, gamma=c.gamma, sample=c.sample, **kw
    ),
    "relax_to_c_conjugate": lambda c, **kw: _relax(c, **kw),
    "splitting_set_extract": lambda c, **kw: _extract_near_diagonal(c, **kw),
}


def _details_match(expected, got):
    for key, want in expected.items():
        if jsonable(got.get(key)) != jsonable(want):
            return False
    return True


@dataclass
class CaseResult:
    case_id: str
    rows: list

    @property
    def passed(self):
        return all(r["match"] for r in self.rows)

    @property
    def verdict(self):
        return Verdict.PASS if self.passed else Verdict.FAIL

    def to_dict(self):
        return jsonable({"case": self.case_id, "verdict": self.verdict, "checks": self.rows})


def run_case(case: GalleryCase) -> CaseResult:
    rows = []
    for exp in case.expected:
        rep = CHECKS[exp.check](case, **exp.params)
        match = rep.verdict is Verdict(exp.verdict) and _details_match(exp.details, rep.details)
        rows.append(
            {
                "check": exp.check,
                "params": exp.params,
                "expected": Verdict(exp.verdict).value,
                "observed": rep.verdict.value,
                "match": bool(match),
                "report": rep.to_dict(),
            }
        )
    return CaseResult(case.id, rows)


# -- constructors --------------------------------------------------------------

P, F, I = Verdict.PASS, Verdict.FAIL, Verdict.INCONCLUSIVE


def _default_probes(d, count=100, seed=2019, radius=3.0):
    return np.random.default_rng(seed).uniform(-radius, radius, size=(count, d))


def make_quadratic_family(Q, probes=None, case_id="ex5.1") -> GalleryCase:
    """Commuting positive definite ``Q_i``; Gamma = ``{(Q_1 v, ..., Q_N v)}``.

    The tuple is ``q_{M_i}`` with ``M_i = (sum_{k != i} Q_k) Q_i^{-1}``.
    """
    Qs = [np.atleast_2d(np.asarray(m, dtype=float)) for m in Q]
    if len(Qs) < 2:
        raise ConfigError("need at least two matrices")
    for k, m in enumerate(Qs):
        if not np.allclose(m, m.T, rtol=0, atol=1e-12) or np.linalg.eigvalsh(0.5 * (m + m.T))[0] <= 0:
            raise ConfigError(f"Q_{k + 1} must be symmetric positive definite")
    for a in range(len(Qs)):
        for b in range(a + 1, len(Qs)):
            if np.abs(Qs[a] @ Qs[b] - Qs[b] @ Qs[a]).max() > 1e-10:
                raise ConfigError(f"Q_{a + 1} and Q_{b + 1} do not commute")
    total = sum(Qs)
    Ms = []
    for m in Qs:
        Mi = (total - m) @ np.linalg.inv(m)
        Ms.append(cx.Quadratic(0.5 * (Mi + Mi.T)))
    d = Qs[0].shape[0]
    expected = (
        Expectation("check_pairwise_c_monotone", P),
        Expectation("classify_maximality", P),
        Expectation("check_prox_partition", P),
        Expectation("check_envelope_criterion", P),
        Expectation("check_subdiff_identity", P),
        Expectation("check_splitting_inequality", P),
    )
    return GalleryCase(
        case_id,
        GammaSet.linear(np.stack(Qs)),
        cx.SplittingTuple(tuple(Ms)),
        expected,
        probes=_default_probes(d) if probes is None else np.asarray(probes, dtype=float),
        description="commuting quadratic family",
    )


def make_identity_family(N=3, grid=None) -> GalleryCase:
    """``Q_i = 1`` in d = 1: Gamma is the diagonal and the tuple is ``(N-1)(q, ..., q)``."""
    base = make_quadratic_family([[[1.0]]] * N, case_id="cor5.2")
    grid = grid or Grid((-3.0,), (3.0,), (61,))
    expected = base.expected + (
        Expectation("relax_to_c_conjugate", P, {"max_interior_change": 0.02}),
        Expectation("splitting_set_extract", P),
    )
    return GalleryCase(
        "cor5.2", base.gamma, base.tuple, expected, probes=base.probes, grids=(grid,) * N,
        description="identity family: diagonal with (N-1)(q, ..., q)",
    )


def make_curve_family(alpha_tables, t_samples=None, grids=None, case_id="ex5.3") -> GalleryCase:
    """Gamma sampled from ``t -> (alpha_1(t), ..., alpha_N(t))`` with antiderivative tuple."""
    tables = tuple(a if isinstance(a, cx.AlphaTable) else cx.AlphaTable(*a) for a in alpha_tables)
    N = len(tables)
    t_lo = max(a.ts[0] for a in tables)
    t_hi = min(a.ts[-1] for a in tables)
    if t_samples is None:
        t_samples = np.linspace(t_lo, t_hi, 21)
    t = np.asarray(t_samples, dtype=float)
    pts = np.stack([a(t) for a in tables], axis=1)[:, :, None]
    funcs = tuple(cx.CurveAntiderivative(tables, k + 1) for k in range(N))
    if grids is None:
        grids = tuple(Grid((f.domain[0],), (f.domain[1],), (41,)) for f in funcs)
    expected = (
        Expectation("check_splitting_inequality", P),
        Expectation("check_subdiff_identity", P, {"tol": 1e-6}),
        Expectation("check_pairwise_c_monotone", P),
    )
    return GalleryCase(
        case_id, GammaSet.finite(pts), cx.SplittingTuple(funcs), expected, grids=tuple(grids),
        description="monotone curve with antiderivative tuple",
    )


def _linear_table(slope, lo=-3.0, hi=3.0, n=61):
    ts = np.linspace(lo, hi, n)
    return cx.AlphaTable(ts, slope * ts)


def make_example_54() -> GalleryCase:
    """N = 3, d = 2 plane spanned by two points whose projections are all non-monotone."""
    v1 = np.array([[0.0, 0.0], [-1.0, -1.0], [1.0, -5.0]])
    v2 = np.array([[1.0, 0.0], [2.0, 2.0], [0.0, 7.0]])
    # parameter (s, t) -> s*v2 + t*v1
    T = np.stack([np.stack([v2[i], v1[i]], axis=1) for i in range(3)])
    f1 = cx.SubspaceQuadratic(np.array([[1.0], [0.0]]), np.diag([2.0, 0.0]))
    f2 = cx.SubspaceQuadratic(np.array([[1.0], [1.0]]) / math.sqrt(2.0), 2.0 * np.eye(2))
    f3 = cx.Quadratic(np.array([[8.0, 3.0], [3.0, 2.0]]) / 7.0)
    expected = (
        Expectation(
            "check_two_marginal_projections", F, details={"pairs": {"1,2": "fail", "1,3": "fail", "2,3": "fail"}}
        ),
        Expectation("check_pairwise_c_monotone", P),
        Expectation("classify_maximality", P, details={"routes": ["surjectivity", "continuity"]}),
        Expectation("check_splitting_inequality", P),
        Expectation("check_subdiff_identity", P),
    )
    # Gamma_{2,3} is non-monotone only for parameter differences with
    # t/s in (7/4, 2); the default grid has none, so one such point is added
    sample = np.vstack([Grid.cube(-2.0, 2.0, 5, 2).nodes(), [[1.0, 1.875]]])
    return GalleryCase(
        "ex5.4", GammaSet.linear(T), cx.SplittingTuple((f1, f2, f3)), expected, sample=sample,
        description="c-monotone plane with non-monotone two-marginal projections",
    )


def make_trivial_embedding(A_graph, N, shifts=None, extra_expected=(), case_id="ex5.5") -> GalleryCase:
    """Blocks ``(x, y, rho_3, ..., rho_N)`` for ``(x, y)`` in a monotone graph sample.

    Sampled graphs cannot certify maximality, so that expectation is inconclusive.
    """
    pairs = [(np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float))) for x, y in A_graph]
    if not pairs:
        raise ConfigError("empty graph")
    u = np.stack([p[0] for p in pairs])
    v = np.stack([p[1] for p in pairs])
    if mo.check_graph_monotone(mo.GraphPairs(u, v)).failed:
        raise ConfigError("the operator graph is not monotone")
    d = u.shape[1]
    if N < 2:
        raise ConfigError("N must be >= 2")
    rho = np.zeros((N - 2, d)) if shifts is None else np.asarray(shifts, dtype=float).reshape(N - 2, d)
    pts = np.stack([np.vstack([a, b, rho]) for a, b in zip(u, v)])
    expected = (
        Expectation("check_pairwise_c_monotone", P),
        Expectation("classify_maximality", I),
    ) + tuple(extra_expected)
    return GalleryCase(case_id, GammaSet.finite(pts), None, expected, description="monotone graph padded by constants")


def make_rotation_tripod() -> GalleryCase:
    """``(x, (sqrt3/2) R_{-pi/2} x, (sqrt3/2) R_{-pi/2} x)``: maximal c-monotone, not 3-c-cyclic."""
    R = (math.sqrt(3.0) / 2.0) * rotation(-math.pi / 2)
    T = np.stack([np.eye(2), R, R])
    J1 = 0.5 * rotation(math.pi / 3)
    J2 = (math.sqrt(3.0) / 4.0) * rotation(-math.pi / 6)
    expected = (
        Expectation("check_pairwise_c_monotone", P),
        Expectation("classify_maximality", P),
        Expectation("check_n_c_cyclic", F, {"n": 3}),
        Expectation("resolvent_samples", P, {"K": 1, "matrix": J1.tolist()}),
        Expectation("resolvent_samples", P, {"K": 2, "matrix": J2.tolist()}),
        Expectation("resolvent_samples", P, {"K": 3, "matrix": J2.tolist()}),
        Expectation("check_partition_identity", P),
        Expectation("check_two_marginal_projections", P),
    )
    return GalleryCase("ex5.6", GammaSet.linear(T), None, expected, description="rotation tripod")


def make_partition_counterexample(n=2, theta=math.pi / 3) -> GalleryCase:
    """``2n`` firmly nonexpansive rotations summing to the identity whose partial sum is not."""
    lo, hi = math.acos(1 / math.sqrt(2)), math.acos(1 / math.sqrt(2 * n))
    if not (lo < theta <= hi + 1e-12):
        raise ConfigError(f"theta must lie in ({lo}, {hi}]")
    alpha = 1.0 / (2 * n * math.cos(theta))
    T = np.stack([alpha * rotation(theta)] * n + [alpha * rotation(-theta)] * n)
    K = list(range(1, n + 1))
    expected = tuple(Expectation("check_firmly_nonexpansive", P, {"K": k}) for k in range(1, 2 * n + 1)) + (
        Expectation("check_partition_identity", F),
        Expectation("check_firmly_nonexpansive", F, {"K": K}),
        Expectation("check_pairwise_c_monotone", F),
    )
    return GalleryCase(
        "ex5.7", GammaSet.linear(T), None, expected, description=f"partition counterexample n={n}, theta={theta}"
    )


def _ex53():
    return make_curve_family((_linear_table(1.0), _linear_table(2.0)), t_samples=np.linspace(-1.5, 1.5, 25))


def _ex53_cubic():
    ts = np.linspace(-1.5, 1.5, 301)
    tables = (cx.AlphaTable(ts, ts), cx.AlphaTable(ts, ts**3))
    return make_curve_family(tables, t_samples=ts[::15], case_id="ex5.3-cubic")


def _ex55():
    angles = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
    R = rotation(math.pi / 2)
    graph = [(np.array([math.cos(a), math.sin(a)]), R @ np.array([math.cos(a), math.sin(a)])) for a in angles]
    return make_trivial_embedding(
        graph, 4, extra_expected=(Expectation("check_n_c_cyclic", F, {"n": 3}),), case_id="ex5.5"
    )


def _ex55_id():
    return make_trivial_embedding([(0.0, 0.0), (1.0, 1.0)], 4, case_id="ex5.5-id")


CASES: dict[str, Callable[[], GalleryCase]] = {
    "ex5.1": lambda: make_quadratic_family([[[1.0]], [[1.0]], [[2.0]]]),
    "cor5.2": make_identity_family,
    "ex5.3": _ex53,
    "ex5.3-cubic": _ex53_cubic,
    "ex5.4": make_example_54,
    "ex5.5": _ex55,
    "ex5.5-id": _ex55_id,
    "ex5.6": make_rotation_tripod,
    "ex5.7": make_partition_counterexample,
}


def case_ids():
    return list(CASES)


def get_case(case_id) -> GalleryCase:
    try:
        return CASES[case_id]()
    except KeyError:
        raise ConfigError(f"unknown gallery case {case_id!r}; known: {', '.join(CASES)}") from None
