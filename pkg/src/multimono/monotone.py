"""Monotonicity, firm nonexpansiveness, resolvents and maximality of Gamma.

For a set ``Gamma`` in ``(R^d)^N`` and a proper index set ``K`` the operator
``A_K`` has graph ``{(sum_{i in K} x_i, sum_{i not in K} x_i) : x in Gamma}``.
``Gamma`` is c-monotone exactly when every ``A_K`` is monotone, and the
resolvent ``J_{A_i}`` maps ``S(x)`` back to the block ``x_i``.  The checks
below operate on finite samples, so they can refute properties but only
certify those that are decidable from the data (or from the matrices of a
linear parameterization).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError,
    GammaSet,
    IndexSubset,
    cost_eval,
    effective_tol,
    proper_subsets,
    sum_map,
)
from .report import CheckReport, Verdict

__all__ = [
    "GraphPairs",
    "NotWellDefined",
    "extract_AK_graph",
    "check_graph_monotone",
    "check_pairwise_c_monotone",
    "check_linear_c_monotone",
    "check_n_c_cyclic",
    "cyclic_slack",
    "check_firmly_nonexpansive",
    "resolvent_samples",
    "check_partition_identity",
    "check_sum_surjective",
    "classify_maximality",
    "check_two_marginal_projections",
    "DEFAULT_BUDGET",
    "DEFAULT_SEED",
]

DEFAULT_BUDGET = 10**6
DEFAULT_SEED = 2019
# relative singular-value threshold for the rank decision
RANK_RTOL = 1e-9
# S(x) values closer than this (relative) are treated as the same input
SAME_INPUT_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class GraphPairs:
    """Sampled graph of a single-valued or set-valued map: rows ``(u_k, v_k)``."""

    u: np.ndarray
    v: np.ndarray
    label: str = ""

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        if u.shape != v.shape or u.shape[0] == 0:
            raise ConfigError(f"graph pairs need matching nonempty (m, d) arrays, got {u.shape}, {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_pairs(cls, pairs, label=""):
        pairs = list(pairs)
        u = np.array([np.atleast_1d(np.asarray(p[0], dtype=float)) for p in pairs])
        v = np.array([np.atleast_1d(np.asarray(p[1], dtype=float)) for p in pairs])
        return cls(u, v, label)

    def __len__(self):
        return self.u.shape[0]


class NotWellDefined(ValueError):
    """Two sampled points share ``S(x)`` but differ in the requested block."""

    def __init__(self, report: CheckReport):
        super().__init__("resolvent is not single-valued on the sample")
        self.report = report


def _as_subset(K, N):
    if isinstance(K, IndexSubset):
        if K.N != N:
            raise ConfigError(f"subset built for N={K.N}, Gamma has N={N}")
        return K
    if isinstance(K, (int, np.integer)):
        K = (int(K),)
    return IndexSubset(K, N)


def _scale(points):
    return float(np.max(np.abs(points))) ** 2 if points.size else 0.0


def extract_AK_graph(gamma: GammaSet, K, sample=None) -> GraphPairs:
    """Sampled graph of ``A_K``: one pair per materialized point."""
    K = _as_subset(K, gamma.N)
    pts = gamma.materialize(sample)
    mask = K.mask
    return GraphPairs(pts[:, mask].sum(axis=1), pts[:, ~mask].sum(axis=1), f"A_{K.as_tuple()}")


def _pair_gram(u, v):
    """Inner products <u_i - u_j, v_i - v_j> for i < j (row-major order)."""
    ii, jj = np.triu_indices(u.shape[0], 1)
    return ii, jj, np.einsum("kd,kd->k", u[ii] - u[jj], v[ii] - v[jj])


def check_graph_monotone(g: GraphPairs, tol=None) -> CheckReport:
    """Monotonicity of a sampled graph: ``<u - u', v - v'> >= -tol``."""
    tol = effective_tol(tol, max(_scale(g.u), _scale(g.v)))
    ii, jj, ip = _pair_gram(g.u, g.v)
    if ip.size == 0:
        return CheckReport(Verdict.PASS, 0.0, check="graph_monotone", mode="exhaustive")
    bad = np.flatnonzero(ip < -tol)
    witness = None
    if bad.size:
        k = bad[0]
        witness = {
            "label": g.label,
            "pair_indices": [int(ii[k]), int(jj[k])],
            "first": [g.u[ii[k]], g.v[ii[k]]],
            "second": [g.u[jj[k]], g.v[jj[k]]],
            "inner_product": float(ip[k]),
        }
    return CheckReport(
        Verdict.FAIL if bad.size else Verdict.PASS,
        float(ip.min()),
        witness,
        check="graph_monotone",
        mode="exhaustive",
        details={"tol": tol, "pairs_tested": int(ip.size)},
    )


def check_pairwise_c_monotone(gamma: GammaSet, sample=None, tol=None) -> CheckReport:
    """c-monotonicity (order 2) through the monotonicity of every ``A_K``.

    For each unordered point pair with difference ``z`` and each proper ``K``
    containing index 1, tests ``<sum_K z_i, sum_{not K} z_i> >= -tol``.  The
    witness is the first violation in (pair, K) order.
    """
    pts = gamma.materialize(sample)
    tol = effective_tol(tol, _scale(pts))
    subsets = proper_subsets(gamma.N)
    m = pts.shape[0]
    if m < 2:
        return CheckReport(Verdict.PASS, 0.0, check="pairwise_c_monotone", mode="exhaustive")
    ii, jj = np.triu_indices(m, 1)
    z = pts[ii] - pts[jj]
    masks = np.array([K.mask for K in subsets])
    zK = np.einsum("sn,pnd->psd", masks.astype(float), z)
    zC = z.sum(axis=1)[:, None, :] - zK
    ip = np.einsum("psd,psd->ps", zK, zC)
    bad = np.argwhere(ip < -tol)
    witness = None
    if bad.size:
        p, s = bad[0]
        witness = {
            "points": [pts[ii[p]], pts[jj[p]]],
            "point_indices": [int(ii[p]), int(jj[p])],
            "K": list(subsets[s].as_tuple()),
            "inner_product": float(ip[p, s]),
        }
    return CheckReport(
        Verdict.FAIL if bad.size else Verdict.PASS,
        float(ip.min()),
        witness,
        check="pairwise_c_monotone",
        mode="exhaustive",
        details={"tol": tol, "points": m, "subsets": len(subsets)},
    )


def check_linear_c_monotone(gamma: GammaSet, tol=None) -> CheckReport:
    """Exact c-monotonicity of a linear set from its matrices.

    ``A_K`` is monotone on the whole subspace iff the symmetric part of
    ``P^T Q`` is positive semidefinite, with ``P = sum_K T_i`` and
    ``Q = sum_{not K} T_i``.
    """
    if gamma.is_finite:
        raise ConfigError("exact linear test needs a linear Gamma")
    T = gamma.data
    scale = float(np.max(np.abs(T))) ** 2 * gamma.N**2
    tol = effective_tol(tol, scale)
    margin, witness = math.inf, None
    per_subset = {}
    for K in proper_subsets(gamma.N):
        P = T[K.mask].sum(axis=0)
        Q = T[~K.mask].sum(axis=0)
        H = 0.5 * (P.T @ Q + Q.T @ P)
        w, V = np.linalg.eigh(H)
        per_subset[str(K.as_tuple())] = float(w[0])
        if w[0] < margin:
            margin = float(w[0])
        if w[0] < -tol and witness is None:
            v = V[:, 0]
            witness = {
                "K": list(K.as_tuple()),
                "parameter": v,
                "points": [np.einsum("nij,j->ni", T, v), np.zeros_like(T[:, :, 0])],
                "inner_product": float(v @ H @ v),
            }
    return CheckReport(
        Verdict.FAIL if witness else Verdict.PASS,
        margin,
        witness,
        check="linear_c_monotone",
        mode="exact",
        details={"tol": tol, "min_eigenvalue_by_K": per_subset},
    )


def _perm_tuples(n, N, fix_first):
    perms = list(itertools.permutations(range(n)))
    ident = tuple(range(n))
    heads = [ident] if fix_first else perms
    out = [(h,) + rest for h in heads for rest in itertools.product(perms, repeat=N - 1)]
    return np.array(out, dtype=np.intp)  # (P, N, n)


def cyclic_slack(points, sigmas):
    """RHS minus LHS of the n-cyclic inequality for explicit data.

    ``points`` has shape ``(n, N, d)``; ``sigmas`` holds N permutations of
    ``0..n-1``.  Evaluated point by point with :func:`cost_eval`; used to
    re-check witnesses independently of the vectorized sweep.
    """
    X = np.asarray(points, dtype=float)
    n, N, _ = X.shape
    rhs = sum(cost_eval(X[j]) for j in range(n))
    lhs = 0.0
    for j in range(n):
        lhs += cost_eval(np.stack([X[sigmas[i][j], i] for i in range(N)]))
    return rhs - lhs


def _cyclic_batch(P, idx, S):
    """Slack for tuples ``idx`` (B, n) against permutation tuples ``S`` (Pn, N, n)."""
    X = P[idx]  # (B, n, N, d)
    N = P.shape[1]
    rhs = cost_eval(X).sum(axis=-1)  # (B,)
    perm_idx = np.transpose(S, (0, 2, 1))  # (Pn, n, N)
    Y = X[:, perm_idx, np.arange(N)]  # (B, Pn, n, N, d)
    lhs = cost_eval(Y).sum(axis=-1)  # (B, Pn)
    return rhs[:, None] - lhs


def check_n_c_cyclic(
    gamma: GammaSet,
    n: int,
    sample=None,
    tol=None,
    budget: int = DEFAULT_BUDGET,
    seed: int = DEFAULT_SEED,
    mode: str = "auto",
    fix_first: bool = True,
) -> CheckReport:
    """n-c-cyclic monotonicity over n-tuples drawn (with repetition) from Gamma.

    ``sigma_1`` is pinned to the identity unless ``fix_first`` is False;
    relabeling the summation index by ``sigma_1^{-1}`` shows nothing is lost.
    ``mode="auto"`` enumerates everything when ``m**n * (n!)**(N-1)`` fits
    into ``budget`` and otherwise samples tuples with a seeded generator; a
    sampled run that finds no violation is reported as inconclusive.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if n < 2:
        raise ValueError("cyclic order n must be >= 2")
    P = np.asarray(gamma.materialize(sample))
    m, N, d = P.shape
    tol = effective_tol(tol, n * N * N * _scale(P))
    S = _perm_tuples(n, N, fix_first)
    n_perm = S.shape[0]
    total = m**n * n_perm
    if mode == "auto":
        mode = "exhaustive" if total <= budget else "random"
    if mode not in ("exhaustive", "random"):
        raise ValueError(f"unknown mode {mode!r}")

    batch = max(1, 2_000_000 // (n_perm * n * N * d))
    rng = np.random.default_rng(seed) if mode == "random" else None
    n_tuples = m**n if mode == "exhaustive" else max(1, budget // n_perm)

    margin = math.inf
    witness = None
    done = 0
    while done < n_tuples:
        count = min(batch, n_tuples - done)
        if mode == "exhaustive":
            flat = np.arange(done, done + count)
            idx = np.stack(np.unravel_index(flat, (m,) * n), axis=-1)
        else:
            idx = rng.integers(0, m, size=(count, n))
        slack = _cyclic_batch(P, idx, S)
        margin = min(margin, float(slack.min()))
        if witness is None:
            bad = np.argwhere(slack < -tol)
            if bad.size:
                b, p = bad[0]
                witness = {
                    "tuple_indices": idx[b].tolist(),
                    "points": P[idx[b]],
                    "sigmas": (S[p] + 1).tolist(),
                    "slack": float(slack[b, p]),
                    "tuple_number": int(done + b),
                }
        done += count

    if witness:
        verdict = Verdict.FAIL
    else:
        verdict = Verdict.PASS if mode == "exhaustive" else Verdict.INCONCLUSIVE
    return CheckReport(
        verdict,
        margin,
        witness,
        check=f"{n}_c_cyclic",
        mode=mode,
        seed=seed if mode == "random" else None,
        details={
            "tol": tol,
            "points": m,
            "order": n,
            "tuples_evaluated": int(done),
            "inequalities_evaluated": int(done * n_perm),
            "sigma1_fixed": fix_first,
        },
    )


def check_firmly_nonexpansive(samples: GraphPairs, tol=None) -> CheckReport:
    """Firm nonexpansiveness of a sampled map ``x -> Tx`` (pairs are ``(x, Tx)``)."""
    x, Tx = samples.u, samples.v
    tol = effective_tol(tol, max(_scale(x), _scale(Tx)))
    ii, jj = np.triu_indices(x.shape[0], 1)
    if ii.size == 0:
        return CheckReport(Verdict.PASS, 0.0, check="firmly_nonexpansive", mode="exhaustive")
    dx = x[ii] - x[jj]
    dT = Tx[ii] - Tx[jj]
    lhs = np.sum(dT**2, axis=1) + np.sum((dx - dT) ** 2, axis=1)
    slack = np.sum(dx**2, axis=1) - lhs
    bad = np.flatnonzero(slack < -tol)
    witness = None
    if bad.size:
        k = bad[0]
        witness = {
            "label": samples.label,
            "pair_indices": [int(ii[k]), int(jj[k])],
            "x": x[ii[k]],
            "y": x[jj[k]],
            "Tx": Tx[ii[k]],
            "Ty": Tx[jj[k]],
            "slack": float(slack[k]),
        }
    return CheckReport(
        Verdict.FAIL if bad.size else Verdict.PASS,
        float(slack.min()),
        witness,
        check="firmly_nonexpansive",
        mode="exhaustive",
        details={"tol": tol, "pairs_tested": int(ii.size)},
    )


def _resolvent_pairs(pts, mask, label, tol):
    s = pts.sum(axis=1)
    out = pts[:, mask].sum(axis=1)
    same = SAME_INPUT_RTOL * (1.0 + float(np.max(np.abs(s))))
    ii, jj = np.triu_indices(pts.shape[0], 1)
    ds = np.max(np.abs(s[ii] - s[jj]), axis=1) if ii.size else np.zeros(0)
    dout = np.max(np.abs(out[ii] - out[jj]), axis=1) if ii.size else np.zeros(0)
    clash = np.flatnonzero((ds <= same) & (dout > tol))
    if clash.size:
        k = clash[0]
        rep = CheckReport(
            Verdict.FAIL,
            -float(dout[k]),
            {
                "label": label,
                "points": [pts[ii[k]], pts[jj[k]]],
                "point_indices": [int(ii[k]), int(jj[k])],
                "s": s[ii[k]],
                "values": [out[ii[k]], out[jj[k]]],
            },
            check="resolvent_well_defined",
            mode="exhaustive",
            details={"note": "equal S(x) with different blocks: Gamma is not c-monotone"},
        )
        raise NotWellDefined(rep)
    return GraphPairs(s, out, label)


def resolvent_samples(gamma: GammaSet, i, sample=None, tol=None) -> GraphPairs:
    """Sampled graph of ``J_{A_i}``: pairs ``(S(x), x_i)``.

    ``i`` may also be an index subset ``K``, giving ``(S(x), sum_K x_i)``,
    the samples of ``J_{A_K}``.  Raises :class:`NotWellDefined` when two
    sampled points have the same sum but different outputs.
    """
    K = _as_subset(i, gamma.N)
    pts = gamma.materialize(sample)
    tol = effective_tol(tol, _scale(pts))
    return _resolvent_pairs(pts, K.mask, f"J_A{K.as_tuple()}", tol)


def check_partition_identity(gamma: GammaSet, sample=None, tol=None) -> CheckReport:
    """Resolvents sum to the identity and every partial sum is firmly nonexpansive.

    Checks ``J_{A_1} + ... + J_{A_N} = Id`` on the sampled sums and runs
    :func:`check_firmly_nonexpansive` on ``J_{A_K} = sum_K J_{A_i}`` for each
    proper ``K`` containing 1 (complements give the same verdict).
    """
    pts = gamma.materialize(sample)
    tol = effective_tol(tol, _scale(pts) * gamma.N)
    try:
        singles = [resolvent_samples(gamma, k, sample, tol) for k in range(1, gamma.N + 1)]
    except NotWellDefined as exc:
        rep = exc.report
        rep.check = "partition_identity"
        return rep
    s = singles[0].u
    resid = np.max(np.abs(sum(g.v for g in singles) - s))
    details = {"tol": tol, "sum_residual": float(resid), "partial_sums": {}}
    if resid > tol:
        return CheckReport(
            Verdict.FAIL,
            -float(resid),
            {"reason": "resolvents do not sum to the identity", "residual": float(resid)},
            check="partition_identity",
            mode="exhaustive",
            details=details,
        )
    margin, witness = math.inf, None
    for K in proper_subsets(gamma.N):
        g = _resolvent_pairs(pts, K.mask, f"J_A{K.as_tuple()}", tol)
        rep = check_firmly_nonexpansive(g, tol)
        details["partial_sums"][str(K.as_tuple())] = rep.verdict.value
        margin = min(margin, rep.margin)
        if rep.failed and witness is None:
            witness = dict(rep.witness, K=list(K.as_tuple()))
    return CheckReport(
        Verdict.FAIL if witness else Verdict.PASS,
        margin,
        witness,
        check="partition_identity",
        mode="exhaustive",
        details=details,
    )


def check_sum_surjective(gamma: GammaSet, targets=None, tol=None) -> CheckReport:
    """Whether the sum map is onto ``R^d``.

    For a linear set ``S(Gamma)`` is the range of ``T = sum_i T_i``; the check
    passes iff its smallest singular value exceeds ``tol`` (default
    ``1e-9 * largest singular value``) and then returns a preimage point for
    every target.  A finite set is never onto; the report is inconclusive and
    lists how far each target is from the sampled sums.
    """
    targets = None if targets is None else np.atleast_2d(np.asarray(targets, dtype=float))
    if gamma.is_finite:
        sums = sum_map(gamma.data)
        details = {"distinct_sums": int(np.unique(sums, axis=0).shape[0])}
        if targets is not None:
            dist = np.linalg.norm(targets[:, None, :] - sums[None], axis=-1).min(axis=1)
            details["target_distance"] = dist
        details["note"] = "a finite set cannot cover R^d"
        return CheckReport(Verdict.INCONCLUSIVE, math.nan, check="sum_surjective", details=details)
    T = gamma.data.sum(axis=0)
    U, sv, Vt = np.linalg.svd(T)
    thresh = tol if tol is not None else RANK_RTOL * max(sv[0], np.finfo(float).tiny)
    ok = sv[-1] > thresh
    details = {"singular_values": sv, "threshold": thresh, "sum_matrix": T}
    witness = None
    if ok and targets is not None:
        v = np.linalg.solve(T, targets.T).T
        details["preimages"] = np.einsum("nij,kj->kni", gamma.data, v)
    if not ok:
        witness = {"missed_direction": U[:, -1], "null_parameter": Vt[-1], "smallest_singular_value": sv[-1]}
    return CheckReport(
        Verdict.PASS if ok else Verdict.FAIL,
        float(sv[-1] - thresh),
        witness,
        check="sum_surjective",
        mode="exact",
        details=details,
    )


def classify_maximality(gamma: GammaSet, sample=None, tol=None) -> CheckReport:
    """Certify maximal c-monotonicity where the data allow it.

    A c-monotone linear set is maximal when the sum map is onto (surjectivity
    route) or when it is the graph of a continuous map over one marginal,
    i.e. some ``T_i`` is invertible (continuity route).  Finite sets are
    always inconclusive.  A non-monotone set fails with its witness.
    """
    mono = check_pairwise_c_monotone(gamma, sample, tol)
    if mono.failed:
        return CheckReport(
            Verdict.FAIL, mono.margin, mono.witness, check="maximality", mode=mono.mode,
            details={"reason": "Gamma is not c-monotone on the sample"},
        )
    if gamma.is_finite:
        return CheckReport(
            Verdict.INCONCLUSIVE, mono.margin, check="maximality",
            details={"note": "maximality cannot be decided from finitely many points"},
        )
    exact = check_linear_c_monotone(gamma, tol)
    if exact.failed:
        return CheckReport(
            Verdict.FAIL, exact.margin, exact.witness, check="maximality", mode="exact",
            details={"reason": "Gamma is not c-monotone (exact quadratic-form test)"},
        )
    routes = []
    surj = check_sum_surjective(gamma)
    if surj.passed:
        routes.append("surjectivity")
    graph_over = []
    for i in range(gamma.N):
        sv = np.linalg.svd(gamma.data[i], compute_uv=False)
        if sv[-1] > RANK_RTOL * max(sv[0], np.finfo(float).tiny):
            graph_over.append(i + 1)
    if graph_over:
        routes.append("continuity")
    details = {
        "routes": routes,
        "graph_over_marginals": graph_over,
        "sum_singular_values": surj.details["singular_values"],
    }
    if routes:
        return CheckReport(Verdict.PASS, mono.margin, check="maximality", mode="exact", details=details)
    # monotone but neither sufficient criterion applies
    details["note"] = "no sufficient criterion applies"
    return CheckReport(Verdict.INCONCLUSIVE, mono.margin, check="maximality", mode="exact", details=details)


def check_two_marginal_projections(gamma: GammaSet, sample=None, tol=None) -> CheckReport:
    """Monotonicity of every two-marginal projection ``Gamma_{i,j}``.

    The verdict is pass when all projections are monotone.  In that case the
    set must be c-monotone as well; a disagreement raises ``AssertionError``
    because it can only come from a bug.
    """
    pts = gamma.materialize(sample)
    per_pair, margin, witness = {}, math.inf, None
    for i, j in itertools.combinations(range(gamma.N), 2):
        rep = check_graph_monotone(GraphPairs(pts[:, i], pts[:, j], f"Gamma_{i + 1},{j + 1}"), tol)
        per_pair[f"{i + 1},{j + 1}"] = rep.verdict.value
        margin = min(margin, rep.margin)
        if rep.failed and witness is None:
            witness = dict(rep.witness, pair=[i + 1, j + 1])
    cmono = check_pairwise_c_monotone(gamma, sample, tol)
    if witness is None and not cmono.passed:
        raise AssertionError("monotone two-marginal projections but Gamma is not c-monotone")
    return CheckReport(
        Verdict.FAIL if witness else Verdict.PASS,
        margin,
        witness,
        check="two_marginal_projections",
        mode="exhaustive",
        details={"pairs": per_pair, "c_monotone": cmono.verdict.value},
    )
