import numpy as np
import pytest

from triplesym.errors import AnalysisError, InputError
from triplesym.grids import Grid
from triplesym.symbols import make_family
from triplesym.weights import (RootProfile, alpha_slice, build_alpha_partition, build_partition,
                               certify_alpha_nu_comparison, certify_general_triple_conditions,
                               certify_general_weight_conditions, certify_key_proposition, cone_grid,
                               default_delta, extract_root_profile)


def test_profile_tricomi():
    p = extract_root_profile(make_family("tricomi"), 0.0)
    assert p.e2 == 4.0 and p.psi == 0.0 and p.alpha == 0.0
    assert np.allclose(p.nu, 0.0)


def test_profile_round_trip_complex_nu():
    p = extract_root_profile(make_family("complex_nu"), 0.0)
    assert p.case_tag == "conjugate-pair"
    assert np.allclose(sorted(p.nu, key=lambda z: (z.real, z.imag)),
                       [-0.05, 0.1 - 0.05j, 0.1 + 0.05j], atol=1e-6)
    assert p.psi == pytest.approx(0.1, abs=1e-8)
    assert p.nu[0].real <= 1e-8
    assert p.backward_error() < 1e-8


def test_profile_three_real():
    p = extract_root_profile(make_family("three_real"), 0.0)
    assert p.case_tag == "three-real" and p.psi == 0.0
    assert np.allclose(np.sort(np.real(p.nu)), [-0.3, -0.2, -0.1], atol=1e-8)


def test_profile_fit_path_matches_exact():
    f = make_family("a=t+0.1,b=0")
    p = extract_root_profile(f, 0.0)
    # Delta = 4 (t + 0.1)^3: one triple root at -0.1
    assert p.e2 == pytest.approx(4.0, rel=1e-6)
    assert np.allclose(p.nu, -0.1, atol=1e-4)


def test_profile_rejects_non_effective():
    with pytest.raises(AnalysisError):
        extract_root_profile(make_family("tricomi(2,0)"), 0.0)


def _profile(alpha, nu):
    return RootProfile(0.0, 1.0, (0.0, 0.0, 0.0), tuple(nu), "conjugate-pair", 0.0, alpha, 1.0, 0.0)


def test_alpha_nu_comparison():
    assert certify_alpha_nu_comparison(_profile(0.0, [0, 0, 0]), 0.1)[0]
    ok, j = certify_alpha_nu_comparison(_profile(0.01, [-0.05, 0.1 + 0.05j, 0.1 - 0.05j]), 0.1)
    assert ok and j == 0
    assert certify_alpha_nu_comparison(_profile(1.0, [1e-6, 1e-6j, -1e-6j]), 0.1) == (False, None)


def test_partition_examples():
    single = build_partition(0.0, 0.5)
    assert len(single.regions) == 1 and single.regions[0].kind == "t"
    three = build_partition(0.1, 0.5)
    assert three.breakpoints == (0.0, 0.05, 0.1, 0.5)
    assert [r.kind for r in three.regions] == ["t", "psi-t", "t-psi"]
    double = build_partition(0.1, 0.5, kind="double")
    assert double.breakpoints == (0.0, 0.1, 0.5)
    assert [r.kind for r in double.regions] == ["psi-t", "t-psi"]
    with pytest.raises(InputError):
        build_partition(0.3, 0.2)


def test_partition_coverage_and_positivity():
    part = build_partition(0.1, 0.5)
    t = np.linspace(0, 0.5, 2001)
    idx = part.region_index(t, np.zeros_like(t))
    assert np.all(idx >= 0)
    phi = part.phi(t, np.zeros_like(t))
    interior = np.all(np.abs(t[:, None] - np.array(part.breakpoints)[None]) > 1e-9, axis=1)
    assert np.all(phi[interior] > 0)


def test_cone_partition_predicates():
    part = build_partition(0.1, 2.0, T=0.3, geometry="cone")
    assert part.inside(0.0, 0.59) and not part.inside(0.2, 0.3)
    assert part.region_index(0.02, 0.0) == 0 and part.region_index(0.07, 0.0) == 1
    assert part.region_index(0.2, 0.0) == 2


def test_key_proposition_tricomi_closed_form():
    f = make_family("tricomi")
    part = build_partition(extract_root_profile(f, 0.0), 0.5)
    rep = certify_key_proposition(f, part, Grid(0, 0.5, 100, -0.1, 0.1, 5, open_left=True))
    c1, c2, c3 = (m.value for m in rep.constants["Omega"])
    assert (c1, c2, c3) == pytest.approx((0.25, 3.0, 1.0), rel=1e-9)
    assert rep.passed


def test_key_proposition_complex_nu():
    f = make_family("complex_nu")
    p = extract_root_profile(f, 0.0)
    part = build_partition(p, default_delta(p.psi, f.domain[1]))
    rep = certify_key_proposition(f, part, Grid(0, part.breakpoints[-1], 100, -0.1, 0.1, 5, open_left=True))
    assert rep.passed and set(rep.constants) == {"Omega1", "Omega2", "Omega3"}
    for ms in list(rep.constants.values()) + list(rep.corollaries.values()):
        assert all(np.isfinite(m.value) and m.stable for m in ms)


@pytest.mark.parametrize("fam,cubic", [("theta_0", 0.25), ("theta_0.5", 1 / 3),
                                       ("general_triple(t**2+x**2)", 0.25)])
def test_general_triple_conditions(fam, cubic):
    f = make_family(fam)
    grid = Grid(0, 0.05, 100, -0.1, 0.1, 5, open_left=True)
    if fam.startswith("general"):
        grid = cone_grid(1.0, 0.05)
    rep = certify_general_triple_conditions(f, grid)
    assert rep.cubic.value == pytest.approx(cubic, rel=1e-9)
    assert rep.passed


def test_alpha_slices():
    s = alpha_slice(make_family("general_triple"), 0.02)
    assert s.sigma == pytest.approx((0.02,)) and s.tstar == pytest.approx(0.02)
    assert s.s == pytest.approx((-0.06, 0.06))
    s = alpha_slice(make_family("general_triple(t**2+x**2)"), 0.02)
    assert s.sigma == pytest.approx((0.0,), abs=1e-12)
    assert s.tstar == pytest.approx(np.sqrt(2) * 0.02)
    s = alpha_slice(make_family("general_triple(t)"), 0.02)
    assert s.tstar == 0.0


def test_general_weight_conditions():
    f = make_family("general_triple")
    part = build_alpha_partition(f, 1.0, 0.05)
    rep = certify_general_weight_conditions(f, part)
    assert rep.passed and rep.vanishing_ok
    assert rep.constants["omega1+"][0].value == pytest.approx(2.0, rel=1e-9)
    v = rep.vanishing
    assert v == pytest.approx([0.15, 0.075, 0.0375], rel=1e-9)
