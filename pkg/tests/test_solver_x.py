import numpy as np
import pytest

from triplesym.errors import AnalysisError, InputError
from triplesym.solver_x import (ConeDomain, companion_splits, energy_inequality_x, factored_double_energy,
                                field_tau_max, read_snapshot, solve_cone, solve_double, solve_for_partition,
                                solve_strip, solve_system_cone, source_bump, spacelike_check, strip_energy,
                                stokes_identity_residual, verify_boundary_positivity, write_snapshot)
from triplesym.symbols import double_family, make_family
from triplesym.weights import build_partition, extract_root_profile


@pytest.fixture(scope="module")
def tricomi():
    return make_family("tricomi")


def _strip_data(x):
    return np.stack([np.sin(2 * np.pi * x), np.cos(2 * np.pi * x), 0 * x + 0.3], -1)


def test_spacelike_examples(tricomi):
    assert spacelike_check(make_family("a=1,b=0"), ConeDomain(2.0, 0.5)) == (True, pytest.approx(0.5))
    assert spacelike_check(make_family("a=0,b=0"), ConeDomain(0.01, 0.5))[0]
    ok, m = spacelike_check(tricomi, ConeDomain(1.0, 0.25))
    assert ok and m == pytest.approx(0.5, abs=1e-9)
    assert not spacelike_check(tricomi, ConeDomain(0.4, 0.25))[0]


def test_tau_max_tricomi(tricomi):
    assert field_tau_max(tricomi, (0, 0.25), (-1, 1)) == pytest.approx(0.5)


def test_companion_splits_reassemble():
    a, b = np.array([1.0, 0.5]), np.array([0.1, -0.05])
    Ap, Am, fb = companion_splits(a, b, 2.0)
    from triplesym.bezoutian import build_bezoutian
    assert np.allclose(Ap + Am, build_bezoutian(a, b).A)
    assert not fb.any()
    assert np.all(np.linalg.eigvals(Ap).real >= -1e-12)
    assert np.all(np.linalg.eigvals(Am).real <= 1e-12)


def test_companion_splits_fallback_at_triple_point():
    _, _, fb = companion_splits(np.array([0.0]), np.array([0.0]), 1.0)
    assert fb.all()


def test_cfl_violation_rejected(tricomi):
    # spacelike (delta > tau_max = 0.5) but delta < tau_max / 0.9
    with pytest.raises(InputError, match="CFL"):
        solve_cone(tricomi, ConeDomain(0.54, 0.25), nx=51)


def test_timelike_cone_rejected(tricomi):
    with pytest.raises(InputError, match="space-like"):
        solve_cone(tricomi, ConeDomain(0.4, 0.25), nx=51)


def test_active_set_is_the_cone(tricomi):
    r = solve_cone(tricomi, ConeDomain(1.0, 0.25), nx=101)
    tt, xx = np.meshgrid(r.t, r.x, indexing="ij")
    assert np.array_equal(r.active, r.cone.contains(tt, xx, slack=1e-9))
    assert np.all(np.isnan(r.U[~r.active]))


def test_domain_of_dependence(tricomi):
    cone = ConeDomain(2.0, 0.25)
    base = lambda x: np.stack([np.exp(-40 * x**2)] * 3, -1).astype(complex)

    def perturbed(x):
        u = base(x)
        u[np.abs(x) > cone.delta * 0.125] += 1.0
        return u

    ra = solve_cone(tricomi, cone, base, nx=201)
    rb = solve_cone(tricomi, cone, perturbed, nx=201)
    k = ra.level(0.125)
    assert np.max(np.abs(ra.U[k, ra.x.size // 2] - rb.U[k, rb.x.size // 2])) == 0.0


def test_zero_speed_component_stays_put():
    # a = b = 0: the third component obeys d_t u3 = u2_x, with u1 = u2 = 0 it stays constant
    f = make_family("a=0,b=0")
    data = lambda x: np.stack([0 * x, 0 * x, np.exp(-40 * x**2)], -1)
    r = solve_cone(f, ConeDomain(1.0, 0.25), data, nx=201)
    k = r.level(0.125)
    act = r.active[k]
    assert np.allclose(r.U[k, act, 2], data(r.x[act])[:, 2], atol=1e-12)


def test_strip_midpoint_conserves():
    r = solve_strip(make_family("a=1,b=0"), 1.0, 1.0, _strip_data, nx=1024, scheme_spec={"scheme": "midpoint"})
    E0 = strip_energy(r, r.meta["U0"], 0.0)
    assert abs(strip_energy(r) - E0) <= 1e-6 * E0


def test_strip_upwind_never_gains():
    r = solve_strip(make_family("a=1,b=0"), 1.0, 0.25, _strip_data, nx=256, keep=True)
    E = np.array([strip_energy(r, r.U[n], r.t[n]) for n in range(r.t.size)])
    assert np.all(np.diff(E) <= 1e-12 * E[0])


def test_stokes_zero_field(tricomi):
    r = solve_cone(tricomi, ConeDomain(1.0, 0.25), nx=51)
    assert stokes_identity_residual(r) == 0.0


def test_stokes_unweighted_converges():
    f = make_family("a=1,b=0.2")
    cone = ConeDomain(2.0, 0.25)
    data = lambda x: np.stack([np.exp(-40 * x**2), np.exp(-40 * (x - .1)**2), np.cos(3 * x)], -1)
    res = [stokes_identity_residual(solve_cone(f, cone, data, nx=n)) for n in (101, 201, 401)]
    assert np.all(np.log2(np.array(res[:-1]) / np.array(res[1:])) >= 0.9)


def test_stokes_region_outside_grid_rejected(tricomi):
    r = solve_cone(tricomi, ConeDomain(1.0, 0.25), nx=51)
    part = build_partition(0.0, 2.0, T=0.25, geometry="cone")
    with pytest.raises(InputError):
        energy_inequality_x(r, part)


def test_boundary_positivity_random(tricomi, rng):
    cone = ConeDomain(1.0, 0.25)
    r = solve_cone(tricomi, cone, None, source_bump(0.0, 0.05), nx=101)
    for k in range(20):
        U = rng.normal(size=(64, 3)) + 1j * rng.normal(size=(64, 3))
        assert verify_boundary_positivity(r, ("left", "right")[k % 2], U=U)[0]
    assert verify_boundary_positivity(r, "left")[0] and verify_boundary_positivity(r, "right")[0]
    assert verify_boundary_positivity(r, "right", U=np.zeros((16, 3))) == (True, 0.0)


def test_boundary_positivity_refuses_timelike(tricomi):
    r = solve_cone(tricomi, ConeDomain(1.0, 0.25), nx=51)
    with pytest.raises(InputError):
        verify_boundary_positivity(r, (lambda x: 0.25 - 3 * x, lambda x: -3 + 0 * x, (0, 0.08)),
                                   U=np.ones((8, 3)))


def test_energy_verdicts_tricomi(tricomi):
    cone = ConeDomain(1.0, 0.25)
    part = build_partition(0.0, 1.0, T=0.25, geometry="cone")
    rs = solve_for_partition(tricomi, cone, part, nx=201, width=0.2)
    vs = energy_inequality_x(rs, part, (4,))
    assert len(vs) == 1 and vs[0].passed and vs[0].C > 0


def test_energy_verdicts_three_regions():
    f = make_family("complex_nu")
    prof = extract_root_profile(f, 0.0)
    T = 0.4
    d = 1.2 * field_tau_max(f, (0, T), (-1, 1)) / 0.9 + 0.01
    cone = ConeDomain(d, T)
    part = build_partition(prof.psi, d, T=T, geometry="cone")
    vs = energy_inequality_x(solve_for_partition(f, cone, part, nx=401, width=0.2), part, (4,))
    assert [v.name for v in vs] == ["Omega1", "Omega2", "Omega3"]
    assert all(v.passed for v in vs)


def test_energy_verdict_partition_mismatch(tricomi):
    r = solve_cone(tricomi, ConeDomain(1.0, 0.25), None, source_bump(0.0, 0.05), nx=51)
    with pytest.raises(InputError, match="does not match"):
        energy_inequality_x(r, build_partition(0.0, 1.5, T=0.25, geometry="cone"))


@pytest.mark.parametrize("a", ["t**2", "t"])
def test_double_root_energies(a):
    fd = double_family(a, "1", (0, 1, -1, 1))
    T = 0.25
    cone = ConeDomain(field_tau_max(fd, (0, T), (-1, 1)) / 0.9 * 1.05, T)
    vs = factored_double_energy(fd, solve_double(fd, cone, nx=201, width=0.2), N_list=(4,))
    assert {v.name for v in vs} == {"P2 on P1 u", "P1 on u", "combined"}
    assert all(v.passed for v in vs)


def test_double_wrong_regime():
    with pytest.raises(AnalysisError, match="wrong regime"):
        solve_double(double_family("t", "1e-12", (0, 1, -1, 1)), ConeDomain(2.0, 0.25))


def test_generic_system_transport():
    # scalar transport u_t = c u_x on the cone: u(t, x) = u0(x + c t)
    c = 0.5
    cone = ConeDomain(1.0, 0.5)
    r = solve_system_cone(lambda t, x: np.full(np.shape(x) + (1, 1), c), cone, c,
                          initial=lambda x: np.exp(-20 * x[:, None] ** 2), k=1, nx=801)
    k = r.level(0.25)
    act = r.active[k]
    exact = np.exp(-20 * (r.x[act] + c * 0.25) ** 2)
    assert np.max(np.abs(r.U[k, act, 0] - exact)) < 0.02


def test_snapshot_round_trip(tmp_path, tricomi):
    r = solve_cone(tricomi, ConeDomain(1.0, 0.25), None, source_bump(0.0, 0.05), nx=51)
    side = write_snapshot(r, tmp_path / "u.bin")
    U, meta = read_snapshot(tmp_path / "u.bin")
    assert side.exists() and meta["shape"] == list(r.U.shape)
    assert np.array_equal(np.isnan(U), np.isnan(r.U))
    assert np.array_equal(np.nan_to_num(U), np.nan_to_num(r.U))


def _level_values(r, t, stride):
    k = r.level(t)
    return r.x[::stride], r.U[k, ::stride]


def test_self_convergence_tricomi(tricomi):
    cone = ConeDomain(1.0, 0.5)
    data = lambda x: np.stack([np.exp(-10 * x**2)] * 3, -1)
    sols = [solve_cone(tricomi, cone, data, nx=n, keep=True) for n in (401, 801, 1601)]
    x0, u0 = _level_values(sols[0], 0.25, 1)
    _, u1 = _level_values(sols[1], 0.25, 2)
    _, u2 = _level_values(sols[2], 0.25, 4)
    m = np.all(np.isfinite(u0), axis=-1)
    dx = x0[1] - x0[0]
    e1 = np.sqrt(np.sum(np.abs(u0[m] - u1[m]) ** 2) * dx)
    e2 = np.sqrt(np.sum(np.abs(u1[m] - u2[m]) ** 2) * dx)
    assert np.log2(e1 / e2) >= 0.9


def test_front_speed_below_tau_max():
    # a narrow pulse in the fastest characteristic field of a = 1, b = 0.2 moves no faster than tau_max
    from triplesym.bezoutian import build_bezoutian, reduced_roots
    f = make_family("a=1,b=0.2")
    tau = np.sort(reduced_roots(1.0, 0.2).real)
    cone = ConeDomain(2.0, 0.25)
    v = np.array([tau[-1] ** 2, tau[-1], 1.0])
    r = solve_cone(f, cone, lambda x: np.exp(-400 * x[:, None] ** 2) * v, nx=801)
    k = r.level(0.125)
    w = np.nan_to_num(np.abs(r.U[k, :, 2]) ** 2)
    centroid = np.sum(w * r.x) / np.sum(w)
    speed = abs(centroid) / 0.125
    # one cell of travel is the resolution of a centroid measurement
    assert speed <= field_tau_max(f, (0, 0.25), (-0.5, 0.5)) + r.dx / 0.125
    assert speed == pytest.approx(abs(tau[-1]), rel=0.05)
