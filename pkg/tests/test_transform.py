import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from receval.errors import DegenerateGeometryError
from receval.transform import (RigidTransform, fit_rigid, matrix_to_quat, quat_canonical, quat_from_rotvec,
                               quat_to_matrix, rotation_angle)

rotvec = arrays(np.float64, 3, elements=st.floats(-3, 3))
trans = arrays(np.float64, 3, elements=st.floats(-500, 500))
transforms = st.builds(lambda r, t: RigidTransform(quat_from_rotvec(r), t), rotvec, trans)


@given(transforms, transforms, transforms)
def test_composition_is_associative(a, b, c):
    np.testing.assert_allclose(((a @ b) @ c).matrix(), (a @ (b @ c)).matrix(), atol=1e-9)


@given(transforms)
def test_inverse_and_identity(a):
    I = RigidTransform.identity()
    np.testing.assert_allclose((a @ a.inverse()).matrix(), np.eye(4), atol=1e-9)
    np.testing.assert_allclose((I @ a).matrix(), a.matrix(), atol=1e-12)


@given(transforms)
def test_matrix_quaternion_round_trip(a):
    b = RigidTransform.from_matrix(a.matrix())
    np.testing.assert_allclose(b.matrix(), a.matrix(), atol=1e-12)
    assert b.rotation[0] >= 0


@given(transforms)
def test_json_round_trip_is_exact(a):
    b = RigidTransform.from_json(a.to_json())
    np.testing.assert_array_equal(b.rotation, quat_canonical(a.rotation))
    np.testing.assert_array_equal(b.translation, a.translation)


@given(transforms, st.integers(0, 1000))
def test_fit_rigid_recovers(a, seed):
    P = np.random.default_rng(seed).normal(size=(20, 3)) * 50
    b = fit_rigid(P, a.apply(P))
    np.testing.assert_allclose(b.matrix(), a.matrix(), atol=1e-8)


def test_fit_rigid_degenerate():
    with pytest.raises(DegenerateGeometryError):
        fit_rigid(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(DegenerateGeometryError):
        fit_rigid(line, line)


def test_rotation_angle_small_and_large():
    for ang in (1e-9, 0.3, math.pi - 1e-6):
        R = quat_to_matrix(quat_from_rotvec([0, ang, 0]))
        assert rotation_angle(R) == pytest.approx(ang, rel=1e-6, abs=1e-15)
    assert matrix_to_quat(np.eye(3)).tolist() == [1, 0, 0, 0]
