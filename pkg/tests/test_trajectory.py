import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linear_sum_assignment

from oracles import brute_force_alignment_rmse, trace_angle_deg
from receval.errors import ContractError, DegenerateGeometryError, TrajectoryParseError
from receval.trajectory import (Pose, Trajectory, align_trajectories, associate, parse_trajectory,
                                rms_ate, rotational_error, translational_error)
from receval.transform import RigidTransform, quat_from_axis_angle, quat_from_rotvec, quat_to_matrix


def _random_traj(seed, n=30, dt=1 / 30):
    rng = np.random.default_rng(seed)
    return Trajectory(Pose(i * dt, quat_from_rotvec(rng.normal(size=3)), rng.normal(size=3) * 300)
                      for i in range(n))


def test_parse_examples():
    t = parse_trajectory("0 0 0 0 0 0 0 1")
    assert t[0].timestamp == 0 and t[0].rotation.tolist() == [1, 0, 0, 0]
    assert len(parse_trajectory("# nothing\n\n# here\n")) == 0
    t = parse_trajectory("1.0 0.001 0 0 0 0 0 0.5")
    assert abs(np.linalg.norm(t[0].rotation) - 1) < 1e-9
    assert t[0].translation[0] == pytest.approx(1.0)  # metres -> mm
    t = parse_trajectory("1.0 0 0 0 0 0 0 -1")
    assert t[0].rotation[0] == 1.0


@pytest.mark.parametrize("text", ["1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1",
                                  "0 0 0 0 0 0 0 x", "0 0 0 0 0 0 1", "0 0 0 0 0 0 0 0"])
def test_parse_errors(text):
    with pytest.raises(TrajectoryParseError):
        parse_trajectory(text)


def test_text_round_trip():
    t = _random_traj(1)
    back = parse_trajectory(t.to_text("mm"), "mm")
    np.testing.assert_array_equal(back.positions, t.positions)
    np.testing.assert_allclose(back.quaternions, t.quaternions, atol=1e-15)


def test_associate_examples():
    gt = _random_traj(2, dt=0.1)
    assert len(associate(gt, gt)) == len(gt)
    shifted = Trajectory(Pose(p.timestamp + 0.15, p.rotation, p.translation) for p in gt)
    assert associate(shifted, gt, 0.02) == []
    with pytest.raises(ContractError):
        associate(gt, gt, 0)


@given(st.integers(0, 10_000))
def test_associate_matches_optimal_assignment(seed):
    rng = np.random.default_rng(seed)
    n = 50
    tg = np.arange(n) / 30
    te = np.sort(tg + rng.uniform(-0.005, 0.005, n))
    mk = lambda ts: Trajectory(Pose(t, np.array([1.0, 0, 0, 0]), np.zeros(3)) for t in ts)
    pairs = associate(mk(te), mk(tg), 0.02)
    cost = np.abs(te[:, None] - tg[None, :])
    cost[cost > 0.02] = 1e6
    r, c = linear_sum_assignment(cost)
    opt = {(te[i], tg[j]) for i, j in zip(r, c) if cost[i, j] < 1e6}
    assert {(e.timestamp, g.timestamp) for e, g in pairs} == opt


def test_rotational_error_examples():
    I = np.array([1.0, 0, 0, 0])
    assert rotational_error(I, I) == 0
    q = quat_from_axis_angle([0, 0, 1], math.pi / 2)
    assert rotational_error(q, I) == pytest.approx(90.0, abs=1e-12)
    assert rotational_error(q, -q) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_rotational_error_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = quat_from_rotvec(rng.normal(size=3) * 2), quat_from_rotvec(rng.normal(size=3) * 2)
    e = rotational_error(a, b)
    assert abs(e - rotational_error(b, a)) < 1e-12
    assert 0 <= e <= 180
    assert abs(e - trace_angle_deg(quat_to_matrix(a), quat_to_matrix(b))) < 1e-6


def test_translational_error_examples():
    p = Pose(0.0, np.array([1.0, 0, 0, 0]), np.zeros(3))
    g = Pose(0.0, np.array([1.0, 0, 0, 0]), np.array([3.0, 4.0, 0]))
    assert translational_error((p, p)) == 0
    assert translational_error((p, g)) == 5.0
    T = RigidTransform(quat_from_rotvec([0.3, 0.1, 0]), [1, 2, 3])
    assert translational_error((p, Pose(0.0, p.rotation, T.apply(p.translation))), T) < 1e-9


def test_alignment_recovers_and_is_locally_optimal():
    gt = _random_traj(3)
    T = RigidTransform(quat_from_rotvec([0.4, -0.2, 1.0]), [100, -50, 20])
    est = gt.transformed(T.inverse())
    A = align_trajectories(list(zip(est, gt)))
    np.testing.assert_allclose(A.matrix(), T.matrix(), atol=1e-9)
    rng = np.random.default_rng(0)
    noisy = Trajectory(Pose(p.timestamp, p.rotation, p.translation + rng.normal(size=3))
                       for p in est)
    pairs = list(zip(noisy, gt))
    A = align_trajectories(pairs)
    res = lambda X: sum(translational_error(p, X) ** 2 for p in pairs)
    best = res(A)
    for _ in range(1000):
        d = RigidTransform(quat_from_rotvec(rng.normal(size=3) * 1e-3), rng.normal(size=3) * 1e-2)
        assert res(d @ A) >= best - 1e-9
    with pytest.raises(DegenerateGeometryError):
        align_trajectories(pairs[:2])


def test_rms_ate_properties():
    gt = _random_traj(4)
    assert rms_ate(gt, gt).rms_ate < 1e-9
    T = RigidTransform(quat_from_rotvec([1.0, 2.0, -0.5]), [1000, 0, -300])
    assert rms_ate(gt.transformed(T), gt).rms_ate < 1e-9
    with pytest.raises(DegenerateGeometryError, match="no associations"):
        rms_ate(Trajectory(Pose(p.timestamp + 5, p.rotation, p.translation) for p in gt), gt)


def test_three_pose_hand_case():
    I = np.array([1.0, 0, 0, 0])
    gt = Trajectory([Pose(0.0, I, np.array([0.0, 0, 0])), Pose(1.0, I, np.array([100.0, 0, 0])),
                     Pose(2.0, I, np.array([0.0, 100, 0]))])
    est = Trajectory([Pose(0.0, I, np.array([1.0, 0, 0])), Pose(1.0, I, np.array([100.0, 0, 0])),
                      Pose(2.0, I, np.array([0.0, 100, 0]))])
    r = rms_ate(est, gt)
    ref = brute_force_alignment_rmse(est.positions, gt.positions)
    assert abs(r.rms_ate - ref) < 1e-6
    assert r.rms_ate > 0 and len(r.translational) == 3
    csv = r.to_csv().splitlines()
    assert csv[0] == "index,timestamp,translational_mm,rotational_deg" and len(csv) == 4
