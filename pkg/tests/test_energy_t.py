import numpy as np
import pytest
from scipy.linalg import expm

from triplesym.bezoutian import build_bezoutian, eigen_decompose, reduced_roots
from triplesym.energy_t import (SAFETY, bump, gauge_phase, gauge_reduce, make_system, measure_derivative_loss,
                                measure_gamma0, monitor_weighted_energy, solve_frequency)
from triplesym.errors import InputError
from triplesym.symbols import make_family
from triplesym.weights import build_alpha_partition, build_partition, extract_root_profile

U0 = np.array([1.0, 0.3j, -0.2 + 0.1j])


@pytest.mark.parametrize("xi", [16.0, 256.0])
def test_frozen_conservation_and_expm_oracle(xi):
    f = make_family("a=1,b=0")
    s = make_system(f, xi, forcing=None)
    tr = solve_frequency(s, (0.0, 1.0), U0)
    E = tr.symmetrizer_energy(f)
    assert np.max(np.abs(E - E[0])) / E[0] <= 1e-8
    ref = expm(1j * xi * s.A_of_t(0.0)) @ U0
    assert np.linalg.norm(tr.U[-1] - ref) / np.linalg.norm(ref) < 1e-5


def test_diagonal_energy_constant_without_source():
    f = make_family("a=1,b=0")
    tr = solve_frequency(make_system(f, 64.0, forcing=None), (0.0, 1.0), U0)
    fr = eigen_decompose(build_bezoutian(1.0, 0.0))
    V = tr.U @ fr.T
    e = np.sum(fr.lam * np.abs(V) ** 2, axis=1)
    assert np.max(np.abs(e - e[0])) <= 1e-8 * e[0]


def test_speeds_of_frozen_system():
    A = make_system(make_family("a=1,b=0"), 16.0, forcing=None).A_of_t(0.3)
    assert np.allclose(np.sort(np.linalg.eigvals(A).real), [-1, 0, 1])


def test_tricomi_step_halving_agreement():
    s = make_system(make_family("tricomi"), 64.0, forcing=None)
    u0 = np.array([1.0, 0.0, 0.0], complex)
    a = solve_frequency(s, (0.0, 0.5), u0)
    b = solve_frequency(s, (0.0, 0.5), u0, {"safety": SAFETY / 2})
    assert b.h < a.h
    assert np.linalg.norm(a.U[-1] - b.U[-1]) <= 1e-6 * np.linalg.norm(b.U[-1])


def test_integrator_order():
    s = make_system(make_family("tricomi"), 64.0, forcing=None)
    u0 = np.array([1.0, 0.0, 0.0], complex)
    loose = {"rtol": 1e9, "atol": 1e9}
    ref = solve_frequency(s, (0.0, 0.5), u0, dict(loose, safety=0.01)).U[-1]
    errs = [np.linalg.norm(solve_frequency(s, (0.0, 0.5), u0, dict(loose, safety=h)).U[-1] - ref)
            for h in (0.4, 0.2, 0.1)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.8)


def test_frequency_below_one_rejected():
    with pytest.raises(InputError):
        make_system(make_family("tricomi"), 0.5)


def test_bump_is_flat_at_onset():
    t = np.array([-1.0, 0.0, 1e-3, 0.5])
    v = bump(t, 0.0, 0.02)
    assert v[0] == 0 and v[1] == 0 and 0 < v[2] < 1e-8 and v[3] == pytest.approx(np.exp(-0.04))


def test_gauge_identity_for_reduced_input():
    f = gauge_reduce({"c1": "-t", "c0": "0"})
    assert f.coefficients(0.3, 0.2) == pytest.approx((0.3, 0.0))
    assert np.all(gauge_phase(f, np.array([0.1, 0.5]), 64.0) == 1)


def test_gauge_completes_the_cube():
    f = gauge_reduce({"c2": "t"})
    a, b = f.coefficients(0.3, 0.0)
    assert (a, b) == pytest.approx((0.3**2 / 3, -2 * 0.3**3 / 27))
    assert np.allclose(np.abs(gauge_phase(f, np.linspace(0, 1, 7), 64.0)), 1.0)


def test_gauge_roots_shift():
    # tau (tau + 1) (tau + 2) = tau^3 + 3 tau^2 + 2 tau
    f = gauge_reduce({"c2": "3", "c1": "2", "c0": "0"})
    a, b = f.coefficients(0.2, 0.0)
    roots = np.sort(reduced_roots(a, b).real) - 1.0
    assert np.allclose(roots, [-2, -1, 0], atol=1e-12)


def test_monitoring_tricomi_single_region():
    f = make_family("tricomi")
    part = build_partition(extract_root_profile(f, 0.0), 0.5)
    Cs = []
    for xi in (16.0, 64.0, 256.0):
        tr = monitor_weighted_energy(make_system(f, xi), part, 8)
        assert tr.passed
        assert np.all(tr.components >= -1e-14)
        Cs.append(tr.verdicts[0].C)
    assert max(Cs) / min(Cs) < 2


def test_monitoring_three_regions():
    f = make_family("complex_nu")
    part = build_partition(extract_root_profile(f, 0.0), 0.5)
    tr = monitor_weighted_energy(make_system(f, 64.0), part, 8)
    assert [v.name for v in tr.verdicts] == ["Omega1", "Omega2", "Omega3"]
    assert tr.passed


def test_monitoring_rejects_partition_outside_domain():
    f = make_family("tricomi")
    with pytest.raises(InputError):
        monitor_weighted_energy(make_system(f, 16.0), build_partition(0.0, 1.5), 8)


def test_gamma_damping():
    g = make_family("general_triple")
    part = build_alpha_partition(g, 1.0, 0.05)
    s = make_system(g, 64.0, y=-0.02)
    g0 = measure_gamma0(s, part, 0)
    assert g0 > 0
    assert measure_gamma0(s, part, 2) <= g0
    assert monitor_weighted_energy(s, part, 0, gamma=g0 * 1.01).passed
    assert not monitor_weighted_energy(s, part, 0, gamma=0.5 * g0).passed


def test_loss_strictly_hyperbolic_short():
    r = measure_derivative_loss(make_family("a=1,b=0"), [16.0, 64.0, 256.0])
    assert r.N0 == 0 and r.verdict == "bounded"


def test_loss_needs_two_frequencies():
    with pytest.raises(InputError):
        measure_derivative_loss(make_family("a=1,b=0"), [16.0])
