import math

import numpy as np
import pytest

from multimono import gallery as gl
from multimono import monotone as mo
from multimono.core import ConfigError, project_pair
from multimono.report import Verdict


@pytest.mark.parametrize("case_id", gl.case_ids())
def test_golden_case_reproduces_expected_verdicts(case_id):
    result = gl.run_case(gl.get_case(case_id))
    mismatches = [(r["check"], r["expected"], r["observed"]) for r in result.rows if not r["match"]]
    assert not mismatches


def test_every_expectation_names_a_known_check():
    for cid in gl.case_ids():
        for exp in gl.get_case(cid).expected:
            assert exp.check in gl.CHECKS


def test_quadratic_family_scalar_example():
    case = gl.make_quadratic_family([[[1.0]], [[1.0]], [[2.0]]])
    assert [float(f.M[0, 0]) for f in case.tuple] == [3.0, 3.0, 1.0]


def test_quadratic_family_identity_gives_n_minus_one():
    case = gl.make_quadratic_family([np.eye(2)] * 4)
    for f in case.tuple:
        assert np.allclose(f.M, 3 * np.eye(2))


def test_quadratic_family_rejects_noncommuting():
    with pytest.raises(ConfigError):
        gl.make_quadratic_family([np.diag([1.0, 2.0]), np.array([[2.0, 1.0], [1.0, 2.0]])])


def test_plane_case_frozen_data():
    case = gl.make_example_54()
    M3 = case.tuple[2].M
    assert np.allclose(M3 @ [1.0, 2.0], [2.0, 1.0])
    pts = case.gamma.materialize([[1.0, 0.0]])
    assert pts[0].tolist() == [[1.0, 0.0], [2.0, 2.0], [0.0, 7.0]]
    assert np.all(case.gamma.materialize([[0.0, 0.0]]) == 0)


def test_rotation_tripod_matrices():
    A1 = math.sqrt(3) * gl.rotation(-math.pi / 2)
    J1 = np.linalg.inv(A1 + np.eye(2))
    assert np.allclose(J1, 0.5 * gl.rotation(math.pi / 3), atol=1e-15)
    A2 = math.sqrt(7 / 3) * gl.rotation(math.atan(2 / math.sqrt(3)))
    J2 = np.linalg.inv(A2 + np.eye(2))
    assert np.allclose(J2, (math.sqrt(3) / 4) * gl.rotation(-math.pi / 6), atol=1e-15)
    assert np.allclose(J1 + 2 * J2, np.eye(2), atol=1e-15)


def test_partition_counterexample_interval():
    with pytest.raises(ConfigError):
        gl.make_partition_counterexample(2, math.pi / 5)
    # just above the open lower endpoint: singles stay firmly nonexpansive
    case = gl.make_partition_counterexample(2, math.pi / 4 + 1e-6)
    for k in range(1, 5):
        rep = mo.check_firmly_nonexpansive(mo.resolvent_samples(case.gamma, k))
        assert rep.passed
    assert np.allclose(case.gamma.data.sum(axis=0), np.eye(2), atol=1e-12)


def test_trivial_embedding_singleton_projection_and_shifts():
    case = gl.make_trivial_embedding([(0.0, 0.0), (1.0, 1.0)], 4)
    proj = project_pair(case.gamma, 3, 4)
    assert np.unique(proj.reshape(len(proj), -1), axis=0).shape[0] == 1
    shifted = gl.make_trivial_embedding([(0.0, 0.0), (1.0, 1.0)], 4, shifts=[[2.0], [-5.0]])
    observed = [r["observed"] for r in gl.run_case(case).rows]
    assert observed == [r["observed"] for r in gl.run_case(shifted).rows]


def test_trivial_embedding_rejects_nonmonotone():
    with pytest.raises(ConfigError):
        gl.make_trivial_embedding([(0.0, 1.0), (1.0, 0.0)], 3)


def test_rotation_embedding_not_3_cyclic():
    case = gl.get_case("ex5.5")
    rep = mo.check_n_c_cyclic(case.gamma, 3)
    assert rep.failed
    assert rep.witness["slack"] < 0


def test_unknown_case():
    with pytest.raises(ConfigError):
        gl.get_case("nope")


def test_case_serializes():
    data = gl.get_case("ex5.6").to_dict()
    assert data["gamma"]["config"] == {"N": 3, "d": 2}
    assert data["expected"][0]["verdict"] == Verdict.PASS.value
