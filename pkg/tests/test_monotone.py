import math

import numpy as np
import pytest

from multimono import monotone as mo
from multimono.core import GammaSet, Grid
from multimono.gallery import rotation
from multimono.report import Verdict


def tripod():
    R = (math.sqrt(3) / 2) * rotation(-math.pi / 2)
    return GammaSet.linear(np.stack([np.eye(2), R, R]))


def test_graph_monotone_rotation_fails():
    # quarter-turn beyond pi/2 gives negative inner products
    R = rotation(2 * math.pi / 3)
    u = np.array([[0.0, 0.0], [1.0, 0.0]])
    rep = mo.check_graph_monotone(mo.GraphPairs(u, u @ R.T))
    assert rep.failed
    assert rep.witness["inner_product"] == pytest.approx(-0.5, abs=1e-15)


def test_single_pair_graph_passes_with_zero_margin():
    rep = mo.check_graph_monotone(mo.GraphPairs([[1.0]], [[2.0]]))
    assert rep.passed and rep.margin == 0.0


def test_pairwise_c_monotone_witness_fields():
    # (x, -x, 0): A_1 pairs x with -x, not monotone
    g = GammaSet.finite([[[0.0], [0.0], [0.0]], [[1.0], [-1.0], [0.0]]])
    rep = mo.check_pairwise_c_monotone(g)
    assert rep.failed
    assert rep.witness["K"] == [1]
    assert rep.witness["inner_product"] == pytest.approx(-1.0)
    assert rep.witness["point_indices"] == [0, 1]


def test_linear_exact_matches_sampled():
    assert mo.check_linear_c_monotone(tripod()).passed
    bad = GammaSet.linear(np.stack([np.eye(2), -np.eye(2), np.zeros((2, 2))]))
    assert mo.check_linear_c_monotone(bad).failed
    assert mo.check_pairwise_c_monotone(bad).failed


def test_cyclic_exhaustive_tripod_fails_and_witness_reproduces():
    rep = mo.check_n_c_cyclic(tripod(), 3)
    assert rep.mode == "exhaustive" and rep.failed
    w = rep.witness
    sig = [np.array(s) - 1 for s in w["sigmas"]]
    assert mo.cyclic_slack(w["points"], sig) == pytest.approx(w["slack"], rel=1e-9, abs=1e-12)
    assert w["slack"] < 0
    assert rep.details["inequalities_evaluated"] == 25**3 * 36


def test_cyclic_random_mode_inconclusive_without_violation():
    g = GammaSet.linear(np.stack([np.eye(2)] * 3))
    rep = mo.check_n_c_cyclic(g, 3, budget=360)
    assert rep.mode == "random" and rep.verdict is Verdict.INCONCLUSIVE
    assert rep.seed == 2019 and rep.details["tuples_evaluated"] == 10


def test_cyclic_deterministic_for_seed():
    a = mo.check_n_c_cyclic(tripod(), 3, budget=3600, seed=5)
    b = mo.check_n_c_cyclic(tripod(), 3, budget=3600, seed=5)
    assert a.to_json() == b.to_json()


def test_cyclic_rejects_bad_args():
    with pytest.raises(ValueError):
        mo.check_n_c_cyclic(tripod(), 1)
    with pytest.raises(ValueError):
        mo.check_n_c_cyclic(tripod(), 2, budget=0)


def test_fne_boundary_equality_passes():
    J = 0.5 * rotation(math.pi / 3)
    x = Grid.cube(-2, 2, 5, 2).nodes()
    rep = mo.check_firmly_nonexpansive(mo.GraphPairs(x, x @ J.T))
    assert rep.passed
    assert abs(rep.margin) < 1e-12


def test_fne_slack_is_twice_monotone_inner_product(rng):
    A = rng.normal(size=(2, 2))
    x = rng.normal(size=(6, 2))
    T = x @ A.T
    fne = mo.check_firmly_nonexpansive(mo.GraphPairs(x, T))
    mono = mo.check_graph_monotone(mo.GraphPairs(T, x - T))
    assert fne.margin == pytest.approx(2 * mono.margin, rel=1e-9, abs=1e-12)


def test_resolvent_samples_tripod():
    g = mo.resolvent_samples(tripod(), 1)
    J1 = 0.5 * rotation(math.pi / 3)
    assert np.allclose(g.v, g.u @ J1.T, atol=1e-12, rtol=0)


def test_resolvent_not_well_defined():
    g = GammaSet.finite([[[1.0], [0.0]], [[0.0], [1.0]]])
    with pytest.raises(mo.NotWellDefined) as exc:
        mo.resolvent_samples(g, 1)
    assert exc.value.report.failed
    rep = mo.check_partition_identity(g)
    assert rep.failed and rep.check == "partition_identity"


def test_partition_identity_tripod():
    rep = mo.check_partition_identity(tripod())
    assert rep.passed
    assert rep.details["sum_residual"] < 1e-12


def test_sum_surjective():
    rep = mo.check_sum_surjective(tripod())
    assert rep.passed
    sing = GammaSet.linear(np.stack([np.eye(2), -np.eye(2)]))
    rep = mo.check_sum_surjective(sing)
    assert rep.failed and "missed_direction" in rep.witness
    fin = GammaSet.finite([[[0.0], [1.0]]])
    assert mo.check_sum_surjective(fin).verdict is Verdict.INCONCLUSIVE


def test_classify_maximality_routes():
    rep = mo.classify_maximality(tripod())
    assert rep.passed and set(rep.details["routes"]) == {"surjectivity", "continuity"}
    bad = GammaSet.linear(np.stack([np.eye(2), -np.eye(2)]))
    assert mo.classify_maximality(bad).failed
    fin = GammaSet.finite([[[0.0], [0.0]], [[1.0], [1.0]]])
    assert mo.classify_maximality(fin).verdict is Verdict.INCONCLUSIVE


def test_classify_continuity_only():
    # (v, 0, 0): graph of the zero map over marginal 1
    T = np.stack([np.eye(1), np.zeros((1, 1)), np.zeros((1, 1))])
    rep = mo.classify_maximality(GammaSet.linear(T))
    assert rep.passed and rep.details["graph_over_marginals"] == [1]


def test_classify_no_route_inconclusive():
    # Gamma = {0}: c-monotone, nothing invertible
    rep = mo.classify_maximality(GammaSet.linear(np.zeros((2, 1, 1))))
    assert rep.verdict is Verdict.INCONCLUSIVE


def test_two_marginal_projections_imply_c_monotone():
    rep = mo.check_two_marginal_projections(tripod())
    assert rep.passed and rep.details["c_monotone"] == "pass"
