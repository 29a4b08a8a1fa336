"""Invariants of the symmetrizer, its spectrum and the frames, on random hyperbolic (a, b)."""
import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from triplesym.bezoutian import build_bezoutian, characteristic_cubic, eigen_decompose, eigenvalues, reduced_roots
from triplesym.reports import dumps, jsonable
from triplesym.weights import build_partition

a_s = st.floats(0.0, 2.0, allow_nan=False)
theta_s = st.floats(-1.0, 1.0, allow_nan=False)


def _ab(a, theta):
    return a, theta * np.sqrt(4 * a**3 / 27)


@given(a_s, theta_s)
def test_SA_symmetric(a, theta):
    bz = build_bezoutian(*_ab(a, theta))
    SA = bz.S @ bz.A
    assert np.max(np.abs(SA - SA.T)) <= 1e-13 * np.linalg.norm(bz.S) * np.linalg.norm(bz.A)


@given(a_s, theta_s)
def test_det_is_discriminant(a, theta):
    a, b = _ab(a, theta)
    d = 4 * a**3 - 27 * b**2
    assert abs(np.linalg.det(build_bezoutian(a, b).S) - d) <= 1e-10 * (1 + abs(d))


@given(a_s, theta_s)
def test_symmetrizer_nonnegative(a, theta):
    bz = build_bezoutian(*_ab(a, theta))
    assert eigenvalues(bz)[0] >= -1e-12 * (1 + np.linalg.norm(bz.S))


@given(a_s, theta_s)
def test_vieta(a, theta):
    bz = build_bezoutian(*_ab(a, theta))
    lam = eigenvalues(bz)
    c2, c1, c0 = characteristic_cubic(bz)
    assert abs(lam.sum() + c2) <= 1e-9 * (1 + abs(c2))
    assert abs(lam[0] * lam[1] + lam[0] * lam[2] + lam[1] * lam[2] - c1) <= 1e-9 * (1 + abs(c1))
    assert abs(lam.prod() + c0) <= 1e-9 * (1 + abs(c0))
    assert abs(lam.sum() - np.trace(bz.S)) <= 1e-9 * (1 + np.trace(bz.S))


@given(a_s, theta_s)
def test_roots_are_real_and_eigen_of_companion(a, theta):
    a, b = _ab(a, theta)
    r = reduced_roots(a, b)
    assert np.all(np.abs(np.imag(r)) <= 1e-9)
    tau = np.real(r)
    assert np.allclose(tau**3 - a * tau - b, 0, atol=1e-10)
    A = build_bezoutian(a, b).A
    for t in tau:
        v = np.array([t * t, t, 1.0])
        assert np.allclose(A @ v, t * v, atol=1e-10)


@given(st.floats(1e-4, 2.0), theta_s)
def test_frame_diagonalizes(a, theta):
    bz = build_bezoutian(*_ab(a, theta))
    fr = eigen_decompose(bz)
    T = fr.T
    assert np.allclose(T.T @ T, np.eye(3), atol=1e-10)
    assert np.allclose(T.T @ bz.S @ T, np.diag(fr.lam), atol=1e-9 * (1 + np.linalg.norm(bz.S)))
    LA = fr.LambdaA
    assert np.allclose(LA, LA.T, atol=1e-9 * (1 + np.linalg.norm(bz.S) * np.linalg.norm(bz.A)))


@given(st.floats(0.0, 0.4), st.floats(0.45, 1.0))
def test_partition_covers_interval(psi, delta):
    part = build_partition(psi, delta)
    bp = np.array(part.breakpoints)
    assert np.all(np.diff(bp) >= 0) and bp[0] == 0 and bp[-1] == delta
    t = np.linspace(0, delta, 301)
    assert np.all(part.region_index(t, np.zeros_like(t)) >= 0)


@given(st.lists(st.one_of(st.floats(allow_nan=True, allow_infinity=True), st.integers(), st.text(max_size=5)),
                max_size=6))
def test_json_always_valid(values):
    import json
    json.loads(dumps({"v": values}))
    assert jsonable(values) == jsonable(jsonable(values))
