"""The nine acceptance criteria, each at its stated tolerance and time limit.

Every test prints one ``ACCEPTANCE <n> ... PASS|FAIL`` line (visible with
``pytest -v`` or ``-s``) before asserting.
"""

import math
import time

import numpy as np
import pytest

from multimono import convex as cx
from multimono import gallery as gl
from multimono import monotone as mo
from multimono.core import GammaSet, Grid, cost_eval

from conftest import random_commuting_family


@pytest.fixture
def verdict(capsys):
    def emit(n, title, checks, elapsed, limit):
        ok = all(v for _, v in checks) and elapsed < limit
        parts = ", ".join(f"{name}={'ok' if v else 'FAILED'}" for name, v in checks)
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {title}: {'PASS' if ok else 'FAIL'} ({parts}; {elapsed:.3f}s < {limit}s)")
        for name, v in checks:
            assert v, name
        assert elapsed < limit, f"runtime {elapsed:.3f}s exceeds {limit}s"

    return emit


def test_1_rotation_tripod(verdict):
    t0 = time.perf_counter()
    case = gl.make_rotation_tripod()
    grid = Grid.cube(-2.0, 2.0, 5, 2)
    J1 = 0.5 * gl.rotation(math.pi / 3)
    J2 = (math.sqrt(3) / 4) * gl.rotation(-math.pi / 6)
    samples = [mo.resolvent_samples(case.gamma, i, grid) for i in (1, 2, 3)]
    match = all(
        np.max(np.abs(g.v - g.u @ J.T)) <= 1e-12 for g, J in zip(samples, (J1, J2, J2))
    )
    identity = np.max(np.abs(sum(g.v for g in samples) - samples[0].u)) <= 1e-12
    n_perm = math.factorial(3) ** 2
    rep = mo.check_n_c_cyclic(case.gamma, 3, grid, budget=10**4 * n_perm, mode="random", seed=2019)
    found = rep.failed and rep.witness["tuple_number"] < 10**4
    if found:
        sig = [np.array(s) - 1 for s in rep.witness["sigmas"]]
        found = mo.cyclic_slack(rep.witness["points"], sig) < 0
    elapsed = time.perf_counter() - t0
    verdict(1, "rotation tripod resolvents and 3-cycle", [
        ("resolvents match 1e-12", match), ("sum of resolvents = Id", identity), ("3-cycle violation", found),
    ], elapsed, 1.0)


def test_2_partition_counterexample(verdict):
    t0 = time.perf_counter()
    case = gl.make_partition_counterexample(2, math.pi / 3)
    fne = all(mo.check_firmly_nonexpansive(mo.resolvent_samples(case.gamma, k)).passed for k in range(1, 5))
    total = np.max(np.abs(case.gamma.data.sum(axis=0) - np.eye(2))) <= 1e-12
    sample = np.array([[0.0, 0.0], [1.0, 0.0]])
    graph = mo.extract_AK_graph(case.gamma, [1, 2], sample)
    rep = mo.check_graph_monotone(graph)
    w = rep.witness or {}
    ip_ok = rep.failed and w["inner_product"] <= -0.5 + 1e-9
    at_10 = False
    if w:
        # graph pairs are (sum_K x_i, sum_notK x_i); their sum is S(x), the parameter here
        ds = np.sum(w["second"], axis=0) - np.sum(w["first"], axis=0)
        at_10 = np.allclose(np.abs(ds), [1.0, 0.0], atol=1e-12)
    elapsed = time.perf_counter() - t0
    verdict(2, "partition counterexample", [
        ("single resolvents firmly nonexpansive", fne), ("sum T_i = Id", total),
        ("A_{1,2} witness <= -0.5", ip_ok), ("witness at difference (1,0)", at_10),
    ], elapsed, 1.0)


def test_3_example_plane(verdict):
    t0 = time.perf_counter()
    case = gl.make_example_54()
    grid = Grid.cube(-2.0, 2.0, 5, 2)
    pts = case.gamma.materialize(grid)
    on = np.max(np.abs(sum(f.value(pts[:, i]) for i, f in enumerate(case.tuple)) - cost_eval(pts)))
    rng = np.random.default_rng(2019)
    a, b = rng.uniform(-2, 2, 100), rng.uniform(-2, 2, 100)
    off = np.stack([np.c_[a, 0 * a], np.c_[b, b], rng.uniform(-2, 2, (100, 2))], axis=1)
    off_slack = sum(f.value(off[:, i]) for i, f in enumerate(case.tuple)) - cost_eval(off)
    proj = mo.check_two_marginal_projections(case.gamma, case.sample)
    all_fail = proj.failed and set(proj.details["pairs"].values()) == {"fail"}
    maxi = mo.classify_maximality(case.gamma, grid)
    elapsed = time.perf_counter() - t0
    verdict(3, "plane with non-monotone projections", [
        ("equality on 25 points", len(pts) == 25 and on <= 1e-9),
        ("positive slack at 100 off points", bool(np.all(off_slack > 0))),
        ("three projections fail", all_fail),
        ("maximal via sum surjectivity", maxi.passed and "surjectivity" in maxi.details["routes"]),
    ], elapsed, 1.0)


def test_4_commuting_quadratic_families(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2019)
    prox_ok = env_ok = sub_ok = True
    for k in range(20):
        N, d = (3, 4)[k % 2], (1, 2, 3)[k % 3]
        case = gl.make_quadratic_family(random_commuting_family(rng, N, d), probes=rng.uniform(-5, 5, (100, d)))
        prox_ok &= cx.check_prox_partition(case.tuple, case.probes, tol=1e-9).passed
        env = cx.check_envelope_criterion(case.tuple, case.probes, gamma=case.gamma, tol=1e-9)
        env_ok &= env.passed and env.details["probes_on_sum_image"] == 100
        sub_ok &= cx.check_subdiff_identity(case.tuple, case.gamma, tol=1e-9).passed
    elapsed = time.perf_counter() - t0
    verdict(4, "20 commuting quadratic families", [
        ("prox partition", prox_ok), ("envelope equality", env_ok), ("subdifferential identity", sub_ok),
    ], elapsed, 5.0)


def test_5_order_two_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2019)
    agree, kinds = True, set()
    for k in range(100):
        N, d, m = int(rng.integers(3, 5)), int(rng.integers(1, 3)), int(rng.integers(1, 6))
        if k % 2:
            # c-monotone by construction, lightly perturbed on some draws
            Q = random_commuting_family(rng, N, d)
            v = rng.normal(size=(m, d))
            pts = np.einsum("nij,kj->kni", np.stack(Q), v) + (k % 4 == 1) * rng.normal(scale=0.3, size=(m, N, d))
        else:
            pts = rng.normal(size=(m, N, d))
        g = GammaSet.finite(pts)
        a = mo.check_n_c_cyclic(g, 2).verdict
        b = mo.check_pairwise_c_monotone(g).verdict
        agree &= a == b
        kinds.add(b.value)
    elapsed = time.perf_counter() - t0
    verdict(5, "order-2 cyclic equals pairwise check", [
        ("agreement on 100 sets", agree), ("both verdicts exercised", kinds == {"pass", "fail"}),
    ], elapsed, 10.0)


def _closed_form_pairs():
    """(f, f*) with independent closed forms for every class with closed-form prox."""
    rng = np.random.default_rng(6)
    A = rng.normal(size=(3, 3))
    pd = A @ A.T + 0.5 * np.eye(3)
    yield "quadratic PD", cx.Quadratic(pd), cx.Quadratic(np.linalg.inv(pd))
    # singular PSD: conjugate is the indicator of range(M) plus q of the pseudo-inverse
    U, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    M = U[:, :2] @ np.diag([2.0, 0.5]) @ U[:, :2].T
    yield "quadratic PSD", cx.Quadratic(M), cx.SubspaceQuadratic(U[:, :2], np.linalg.pinv(M))
    # subspace quadratic: conjugate is q of B (B^T M B)^{-1} B^T
    B = U[:, :2]
    Ms = rng.normal(size=(3, 3))
    Ms = Ms @ Ms.T + np.eye(3)
    G = B.T @ Ms @ B
    yield "subspace quadratic", cx.SubspaceQuadratic(B, Ms), cx.Quadratic(B @ np.linalg.inv(G) @ B.T)
    yield "empty subspace", cx.SubspaceQuadratic(np.zeros((3, 0)), np.eye(3)), cx.Quadratic(np.zeros((3, 3)))


def test_6_moreau_decomposition(verdict):
    t0 = time.perf_counter()
    probes = np.random.default_rng(2019).uniform(-4, 4, (100, 3))
    checks = []
    for name, f, fs in _closed_form_pairs():
        resid = np.abs(f.envelope(probes) + fs.envelope(probes) - cx.q(probes))
        checks.append((f"{name} decomposition", bool(np.all(resid <= 1e-9 * (1 + 2 * cx.q(probes))))))
        h = 1e-5
        grad = np.empty_like(probes)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            grad[:, k] = (f.envelope(probes + e) - f.envelope(probes - e)) / (2 * h)
        checks.append((f"{name} envelope gradient", bool(np.max(np.abs(grad - (probes - f.prox(probes)))) <= 1e-5)))
    elapsed = time.perf_counter() - t0
    verdict(6, "Moreau decomposition for closed-form classes", checks, elapsed, 5.0)


def test_7_identity_family_fixed_point(verdict):
    t0 = time.perf_counter()
    grid = Grid((-3.0,), (3.0,), (61,))
    f = cx.Quadratic([[2.0]])
    res = cx.relax_to_c_conjugate([f, f, f], [grid] * 3, passes=1)
    h = grid.max_step
    pts = cx.splitting_set_extract(res.funcs, [grid] * 3, tol=h * h)
    spread = np.ptp(pts[:, :, 0], axis=1)
    elapsed = time.perf_counter() - t0
    verdict(7, "identity family relaxation fixed point", [
        ("interior change <= 0.02", res.interior_change <= 0.02),
        ("diagonal nodes extracted", len(pts) >= grid.size),
        ("within one cell of the diagonal", bool(np.all(spread <= h + 1e-12))),
    ], elapsed, 5.0)


def test_8_linear_curve(verdict):
    t0 = time.perf_counter()
    ts = np.linspace(-3, 3, 61)
    case = gl.make_curve_family((cx.AlphaTable(ts, ts), cx.AlphaTable(ts, 2 * ts)), t_samples=np.linspace(-1.5, 1.5, 31))
    pts = case.gamma.materialize()
    eq = np.max(np.abs(sum(f.value(pts[:, i, 0]) for i, f in enumerate(case.tuple)) - cost_eval(pts)))
    sub = cx.check_subdiff_identity(case.tuple, case.gamma, tol=1e-6)
    elapsed = time.perf_counter() - t0
    verdict(8, "curve (t, 2t) antiderivatives", [
        ("splitting equality 1e-8", eq <= 1e-8), ("subdifferential identity 1e-6", sub.passed),
    ], elapsed, 1.0)


def test_9_three_marginal_identity(verdict):
    t0 = time.perf_counter()
    grid = Grid((-3.0,), (3.0,), (61,))
    f2 = cx.Quadratic([[2.0]])
    rep = cx.three_marginal_smooth_check(f2, f2, [grid] * 3)
    elapsed = time.perf_counter() - t0
    verdict(9, "three-marginal envelope identity", [
        ("residual within 3h", rep.passed and rep.details["max_residual"] <= 3 * grid.max_step),
        ("interior probes used", rep.details["probes"] > 0),
    ], elapsed, 5.0)
