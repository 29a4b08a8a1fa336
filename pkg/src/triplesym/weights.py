"""Root profiles of the normalized discriminant cubic and the scalar weight partitions built from them."""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bezoutian import build_bezoutian, eigenvalues
from .calculus import eigenvalue_gradients
from .errors import AnalysisError, InputError, QualityError
from .grids import Grid
from .measure import MeasuredConstant, refinement_ratio
from .symbols import CoefficientField, finite_difference

ROOT_TOL = 1e-8
IMAG_TOL = 1e-6
FIT_TOL = 1e-6
CLUSTER_TOL = 1e-4


def companion_roots(coeffs) -> np.ndarray:
    """Roots of a monic-normalizable polynomial (highest coefficient first) via its companion matrix."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "f")
    if c.size < 2:
        return np.zeros(0, complex)
    c = c / c[0]
    n = c.size - 1
    C = np.zeros((n, n), complex)
    C[0, :] = -c[1:]
    if n > 1:
        C[np.arange(1, n), np.arange(n - 1)] = 1.0
    r = np.linalg.eigvals(C)
    return np.where(np.abs(r.imag) <= 1e-300, r.real + 0j, r)


@dataclass(frozen=True)
class RootProfile:
    y: float
    e2: float
    coeffs: tuple          # (a1, a2, a3)
    nu: tuple              # three complex roots
    case_tag: str          # 'conjugate-pair' | 'three-real'
    psi: float
    alpha: float
    e1: float = float("nan")
    t_ref: float = 0.0

    def backward_error(self) -> float:
        a1, a2, a3 = self.coeffs
        return max(abs(((n + a1) * n + a2) * n + a3) / (1 + abs(n) ** 3) for n in self.nu)

    def to_dict(self) -> dict:
        return {
            "y": self.y, "e2": self.e2, "coeffs": list(self.coeffs),
            "nu": [[z.real, z.imag] for z in self.nu], "case": self.case_tag,
            "psi": self.psi, "alpha": self.alpha, "e1": self.e1,
        }


def _snap_multiple(nu, tol):
    """A multiple real root comes back from eigvals as a small cloud; replace each
    cloud (members within tol of each other, imaginary parts below tol) by its mean real part."""
    nu = list(nu)
    for i, z in enumerate(nu):
        cloud = [w for w in nu if abs(w - z) <= tol]
        if len(cloud) > 1 and all(abs(w.imag) <= tol for w in cloud):
            nu[i] = complex(np.mean([w.real for w in cloud]), 0.0)
    return nu


def classify_roots(nu: Sequence[complex]):
    """Order the roots and tag the case; returns (nu, tag, psi)."""
    nu = [complex(z) for z in nu]
    scale = 1.0 + max(abs(z) for z in nu)
    nu = _snap_multiple(nu, CLUSTER_TOL * scale)
    cplx = [z for z in nu if abs(z.imag) > IMAG_TOL * scale]
    if cplx:
        real = [z for z in nu if abs(z.imag) <= IMAG_TOL * scale]
        if len(real) != 1:
            raise AnalysisError(f"unexpected root configuration {nu}")
        upper = max((z for z in cplx if z.imag > 0), key=lambda z: (z.real, abs(z.imag)))
        nu_o = (complex(real[0].real, 0.0), upper, upper.conjugate())
        tag = "conjugate-pair"
    else:
        nu_o = tuple(complex(z.real, 0.0) for z in sorted(nu, key=lambda z: (z.real, abs(z.imag))))
        tag = "three-real"
    psi = max(0.0, nu_o[1].real)
    return nu_o, tag, psi


def _reference_t(field: CoefficientField) -> float:
    t_lo, t_hi = field.domain[0], field.domain[1]
    return 0.0 if t_lo <= 0.0 <= t_hi else t_lo


def extract_root_profile(field: CoefficientField, y: float, t_ref: Optional[float] = None,
                         window: Optional[float] = None, samples: int = 201) -> RootProfile:
    """Normalize Delta(., y) = e2 (t^3 + a1 t^2 + a2 t + a3) near the triple point and find its roots."""
    if t_ref is None:
        t_ref = _reference_t(field)
    poly = field.poly_t(y) if field.poly_t is not None else None
    if poly is not None and poly.get("delta") is not None:
        d = np.trim_zeros(np.asarray(poly["delta"], float), "f")
        scale = np.max(np.abs(d)) if d.size else 0.0
        d = d[np.argmax(np.abs(d) > 1e-14 * scale):] if scale > 0 else d
        if d.size != 4:
            raise AnalysisError(
                f"Delta(., {y}) has degree {d.size - 1}, not 3: third t-derivative vanishes "
                "(not an effectively hyperbolic triple point)")
        e2 = float(d[0])
        coeffs = tuple(float(v) for v in d[1:] / e2)
    else:
        t_lo, t_hi = field.domain[0], field.domain[1]
        w = window if window is not None else min(t_hi - t_ref, 0.5)
        h = max(np.finfo(float).eps ** 0.2 * w, 1e-4 * w)
        k = np.arange(5)
        f = field.delta(t_ref + k * h, np.full(5, y), check=False)
        # second-order forward stencil for the third derivative
        d3 = (-5 * f[0] + 18 * f[1] - 24 * f[2] + 14 * f[3] - 3 * f[4]) / (2 * h**3)
        if not np.isfinite(d3) or abs(d3) < 1e-8:
            raise AnalysisError(f"|d_t^3 Delta| = {abs(d3):.3g} below tolerance at (t={t_ref}, y={y})")
        e2 = float(d3 / 6.0)
        ts = np.linspace(t_ref, t_ref + w, samples)
        target = field.delta(ts, np.full_like(ts, y)) / e2 - (ts - t_ref) ** 3
        V = np.vander(ts - t_ref, 3)
        sol, *_ = np.linalg.lstsq(V, target, rcond=None)
        fitted = (ts - t_ref) ** 3 + V @ sol
        resid = np.max(np.abs(fitted - (target + (ts - t_ref) ** 3)))
        norm = np.max(np.abs(target + (ts - t_ref) ** 3))
        if resid > FIT_TOL * max(norm, 1e-300):
            raise QualityError(f"cubic fit residual {resid:.3g} exceeds {FIT_TOL:g} * |Delta/e2|")
        # shift back from s = t - t_ref to t
        shifted = np.polynomial.polynomial.Polynomial([sol[2], sol[1], sol[0], 1.0])
        shifted = shifted(np.polynomial.polynomial.Polynomial([-t_ref, 1.0]))
        c = shifted.coef
        coeffs = (float(c[2]), float(c[1]), float(c[0]))
    nu = companion_roots((1.0,) + coeffs)
    nu_o, tag, psi = classify_roots(nu)
    e1 = float(field.derivative("a", "t", t_ref, y))
    a0 = float(field.coefficients(t_ref, y)[0])
    alpha = a0 / e1 - t_ref if e1 != 0 else float("nan")
    return RootProfile(float(y), e2, coeffs, nu_o, tag, psi, alpha, e1, float(t_ref))


def certify_alpha_nu_comparison(profile: RootProfile, eps: float):
    """True iff some |nu_j| >= eps * alpha; returns (flag, witness index or None)."""
    if not profile.alpha > 0:
        return True, 0
    for j, z in enumerate(profile.nu):
        if abs(z) >= eps * profile.alpha:
            return True, j
    return False, None


def default_delta(psi: float, t_hi: float) -> float:
    return min(psi + 0.5 * (t_hi - psi), 0.5)


# ---------------------------------------------------------------------------
# partitions

def _const(v):
    return lambda y: np.full(np.shape(y), float(v))


@dataclass(frozen=True)
class Region:
    """A piece lower(y) <= t <= upper(y) with scalar weight phi and exponent sign.

    exponent_sign -1 gives g = phi^(-2N-1) (increasing weights), +1 gives
    g = phi^(2N-1) (weights decreasing in t).
    """

    name: str
    kind: str
    lower: Callable
    upper: Callable
    phi: Callable
    phi_t: Callable
    phi_y: Callable
    exponent_sign: int

    def contains(self, t, y) -> np.ndarray:
        lo, hi = self.lower(y), self.upper(y)
        return (t >= lo) & (t <= hi)

    def log_g(self, t, y, N: int) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return (2 * self.exponent_sign * N - 1) * np.log(np.abs(self.phi(t, y)))


@dataclass
class WeightPartition:
    regions: list
    geometry: str = "interval"
    kind: str = "triple"
    breakpoints: Optional[tuple] = None
    psi: Union[float, Callable, None] = None
    delta: float = 0.0
    T: Optional[float] = None
    meta: dict = dc_field(default_factory=dict)

    def inside(self, t, y) -> np.ndarray:
        t = np.asarray(t, float)
        if self.geometry == "cone":
            return (np.abs(y) <= self.delta * (self.T - t) + 1e-14) & (t <= self.T)
        return np.ones(np.shape(t), bool)

    def region_index(self, t, y) -> np.ndarray:
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        idx = np.full(t.shape, -1)
        for k, r in enumerate(self.regions):
            idx = np.where((idx < 0) & r.contains(t, y), k, idx)
        return np.where(self.inside(t, y), idx, -1)

    def phi(self, t, y) -> np.ndarray:
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        idx = self.region_index(t, y)
        out = np.full(t.shape, np.nan)
        for k, r in enumerate(self.regions):
            m = idx == k
            if np.any(m):
                out[m] = np.abs(r.phi(t[m], y[m]))
        return out

    def to_dict(self, ys: Optional[Sequence[float]] = None) -> dict:
        ys = [0.0] if ys is None else list(ys)
        slices = []
        for yv in ys:
            yv = float(yv)
            slices.append({
                "y": yv,
                "regions": [{"name": r.name, "weight": r.kind,
                             "lower": float(r.lower(np.array(yv))), "upper": float(r.upper(np.array(yv))),
                             "exponent_sign": r.exponent_sign} for r in self.regions],
            })
        psi = self.psi if not callable(self.psi) else None
        return {
            "geometry": self.geometry, "kind": self.kind,
            "breakpoints": None if self.breakpoints is None else list(self.breakpoints),
            "psi": psi, "delta": self.delta, "T": self.T, "slices": slices, **self.meta,
        }

    def to_json(self, ys=None) -> str:
        return json.dumps(self.to_dict(ys), indent=2, sort_keys=True)


def _weight_t(lower, upper, name="Omega"):
    return Region(name, "t", lower, upper, lambda t, y: np.asarray(t, float),
                  lambda t, y: np.ones(np.shape(t)), lambda t, y: np.zeros(np.shape(t)), -1)


def build_partition(profile, delta: float, T: Optional[float] = None, geometry: str = "interval",
                    kind: str = "triple", psi_slope: Optional[Callable] = None) -> WeightPartition:
    """Breakpoints 0, psi/2, psi, delta with weights t, psi - t, t - psi.

    ``profile`` is a RootProfile, a number (psi itself), or for cone geometry
    a callable x -> psi(x).  ``kind='double'`` gives the two-region variant
    (psi - t on [0, psi], t - psi after).  In cone geometry ``delta`` is the
    slope of |x| <= delta (T - t) and regions run up to T.
    """
    if geometry not in ("interval", "cone"):
        raise InputError(f"unknown geometry {geometry!r}")
    if isinstance(profile, RootProfile):
        psi_val = profile.psi
    else:
        psi_val = profile
    if callable(psi_val):
        psi_fn = lambda y, f=psi_val: np.maximum(np.asarray(f(np.asarray(y, float)), float), 0.0)
        if psi_slope is None:
            def psi_slope(y, f=psi_fn):
                return finite_difference(lambda tt, yy: f(yy), np.zeros_like(y), y, "y")
    else:
        c = max(0.0, float(psi_val))
        psi_fn = _const(c)
        psi_slope = lambda y: np.zeros(np.shape(y))
    if geometry == "cone":
        if T is None or T <= 0 or delta <= 0:
            raise InputError("cone geometry needs slope delta > 0 and height T > 0")
        top = float(T)
    else:
        top = float(delta)
        if not callable(psi_val) and delta <= float(psi_fn(0.0)):
            raise InputError(f"delta={delta} must exceed psi={float(psi_fn(0.0))}")
    top_fn = _const(top)
    zero = _const(0.0)

    def half(y):
        return np.minimum(0.5 * psi_fn(y), top)

    def full(y):
        return np.minimum(psi_fn(y), top)

    r_psi_minus_t = lambda name, lo, hi: Region(
        name, "psi-t", lo, hi, lambda t, y: psi_fn(y) - t, lambda t, y: -np.ones(np.shape(t)),
        lambda t, y: psi_slope(np.broadcast_to(y, np.shape(t))), +1)
    r_t_minus_psi = lambda name, lo, hi: Region(
        name, "t-psi", lo, hi, lambda t, y: t - psi_fn(y), lambda t, y: np.ones(np.shape(t)),
        lambda t, y: -psi_slope(np.broadcast_to(y, np.shape(t))), -1)

    positive = callable(psi_val) or float(psi_fn(0.0)) > 0
    if kind == "triple":
        if positive:
            regions = [
                _weight_t(zero, half, "Omega1"),
                r_psi_minus_t("Omega2", half, full),
                r_t_minus_psi("Omega3", full, top_fn),
            ]
        else:
            regions = [_weight_t(zero, top_fn, "Omega")]
    elif kind == "double":
        if positive:
            regions = [r_psi_minus_t("Omega1", zero, full), r_t_minus_psi("Omega2", full, top_fn)]
        else:
            regions = [_weight_t(zero, top_fn, "Omega")]
    else:
        raise InputError(f"unknown partition kind {kind!r}")
    bp = None
    if not callable(psi_val):
        p = float(psi_fn(0.0))
        bp = (0.0, 0.5 * p, p, top) if kind == "triple" else (0.0, p, top)
    return WeightPartition(regions, geometry, kind, bp, psi_val if not callable(psi_val) else psi_fn,
                           float(delta), None if T is None else float(T))


def psi_curve(field: CoefficientField, xs: Sequence[float]) -> Callable:
    """psi(x) from per-slice root profiles, linearly interpolated between slices."""
    xs = np.asarray(xs, float)
    vals = np.array([extract_root_profile(field, float(x)).psi for x in xs])
    return lambda y: np.interp(np.asarray(y, float), xs, vals)


# ---------------------------------------------------------------------------
# certification of the weight inequalities

@dataclass
class KeyPropositionReport:
    constants: dict       # region name -> [C1, C2, C3]
    corollaries: dict     # region name -> [phi^2/lambda1, phi|d lambda1|/lambda1, phi|d lambda2|/lambda2]
    witnesses: list
    passed: bool

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "constants": {k: [m.to_dict() for m in v] for k, v in self.constants.items()},
            "corollaries": {k: [m.to_dict() for m in v] for k, v in self.corollaries.items()},
            "witnesses": self.witnesses[:20],
        }


def _region_sup(num, den, mask, t, y, floor):
    ok = mask & (den > floor)
    if not np.any(ok):
        return 0.0, None
    r = np.where(ok, np.abs(num) / np.where(ok, den, 1.0), -np.inf)
    k = int(np.argmax(r))
    return float(r.flat[k]), (float(t.flat[k]), float(y.flat[k]))


def _key_quantities(field, partition, grid: Grid):
    t, y = grid.mesh()
    a, b = field.coefficients(t, y)
    d = 4 * a**3 - 27 * b**2
    dd = field.derivative("delta", "t", t, y)
    lam, grads = eigenvalue_gradients(field, t, y)
    idx = partition.region_index(t, y)
    return t, y, a, d, dd, lam, grads, idx


def certify_key_proposition(field: CoefficientField, partition: WeightPartition, grid: Grid,
                            band=(0.5, 1.5)) -> KeyPropositionReport:
    """Minimal C in phi^2 a <= C Delta, |phi| |d_t Delta| <= C Delta, |phi| <= C a per region."""
    names = ["phi^2 a / Delta", "|phi d_t Delta| / Delta", "|phi| / a"]
    cnames = ["phi^2 / lambda1", "|phi d_t lambda1| / lambda1", "|phi d_t lambda2| / lambda2"]
    res = [_key_quantities(field, partition, g) for g in (grid, grid.refined())]
    constants, corollaries, witnesses = {}, {}, []
    ok = True
    for k, reg in enumerate(partition.regions):
        vals = {n: [] for n in names + cnames}
        wit = {n: None for n in names + cnames}
        for level, (t, y, a, d, dd, lam, grads, idx) in enumerate(res):
            phi = np.where(idx == k, np.abs(reg.phi(t, y)), 0.0)
            m = (idx == k) & (phi > 0) & (t > 0)
            floor_d = 1e-12 * max(float(np.max(np.abs(d))), 1e-300)
            bad = m & (d <= floor_d)
            if level == 0 and np.any(bad):
                ok = False
                witnesses += [{"region": reg.name, "t": float(tt), "y": float(yy), "reason": "Delta=0 with phi>0"}
                              for tt, yy in zip(t[bad][:10], y[bad][:10])]
            floor_a = 1e-12 * max(float(np.max(np.abs(a))), 1e-300)
            l1, l2 = lam[..., 0], lam[..., 1]
            qs = [
                (phi**2 * a, d, floor_d), (phi * dd, d, floor_d), (phi, a, floor_a),
                (phi**2, l1, 1e-14), (phi * grads["t"][..., 0], l1, 1e-14), (phi * grads["t"][..., 1], l2, 1e-14),
            ]
            for n, (num, den, fl) in zip(names + cnames, qs):
                v, w = _region_sup(num, den, m, t, y, fl)
                vals[n].append(v)
                wit[n] = wit[n] or w
        mcs = []
        for n in names + cnames:
            v0, v1 = vals[n]
            mcs.append(MeasuredConstant(n, v0, grid.describe(), refinement_ratio(v0, v1, 1e-12),
                                        value_fine=v1, total=grid.size, band=band, witness=wit[n],
                                        extra={"region": reg.name}))
        constants[reg.name] = mcs[:3]
        corollaries[reg.name] = mcs[3:]
        ok &= all(m.stable for m in mcs)
    return KeyPropositionReport(constants, corollaries, witnesses, bool(ok))


@dataclass
class GeneralConditionsReport:
    cubic: MeasuredConstant     # a^3 <= C Delta
    slope: MeasuredConstant     # |d_t b| <= C sqrt(a) |d_t a|

    @property
    def passed(self) -> bool:
        return self.cubic.confirmed and self.slope.confirmed

    def summary(self) -> dict:
        return {"passed": self.passed, "cubic": self.cubic.to_dict(), "slope": self.slope.to_dict()}


def certify_general_triple_conditions(field: CoefficientField, grid: Grid) -> GeneralConditionsReport:
    """Minimal C in a^3 <= C Delta and |d_t b| <= C sqrt(a) |d_t a| on a two-sided grid."""
    def eval_(g: Grid):
        t, y = g.mesh()
        a, b = field.coefficients(t, y)
        d = 4 * a**3 - 27 * b**2
        den2 = np.sqrt(np.maximum(a, 0)) * np.abs(field.derivative("a", "t", t, y))
        num2 = field.derivative("b", "t", t, y)
        return t, y, a, d, den2, num2

    out = []
    for which in ("cubic", "slope"):
        vals, skips, wits = [], [], []
        for g in (grid, grid.refined()):
            t, y, a, d, den2, num2 = eval_(g)
            if which == "cubic":
                num, den = np.maximum(a, 0) ** 3, d
            else:
                num, den = num2, den2
            # 0/0 is not a violation; only count points where the numerator is visible
            relevant = np.abs(num) > 1e-12 * max(float(np.max(np.abs(num))), 1e-300)
            floor = 1e-12 * max(float(np.max(np.abs(den))), 1e-300)
            v, w = _region_sup(num, den, np.ones(t.shape, bool), t, y, floor)
            skipped = int(np.count_nonzero(relevant & (den <= floor)))
            vals.append(v)
            skips.append(skipped / g.size)
            wits.append(w)
        name = "a^3 / Delta" if which == "cubic" else "|d_t b| / (sqrt(a) |d_t a|)"
        out.append(MeasuredConstant(name, vals[0], grid.describe(), refinement_ratio(vals[0], vals[1], 1e-12),
                                    value_fine=vals[1], skipped=int(round(max(skips) * grid.size)),
                                    total=grid.size, witness=wits[1] or wits[0]))
    return GeneralConditionsReport(*out)


# ---------------------------------------------------------------------------
# partitions from the zeros of a = alpha^2

@dataclass(frozen=True)
class AlphaSlice:
    x: float
    roots: tuple      # distinct complex roots of a(., x)
    sigma: tuple      # sorted distinct real parts
    tstar: float
    s: tuple          # s_0 .. s_m
    n_positive: bool  # x divides alpha (n >= 1)


def _distinct(roots, tol):
    out = []
    for r in sorted(roots, key=lambda z: (z.real, z.imag)):
        for k, c in enumerate(out):
            if abs(r - c[0] / c[1]) <= tol:
                out[k] = (c[0] + r, c[1] + 1)
                break
        else:
            out.append((r, 1))
    return [c[0] / c[1] for c in out]


def alpha_slice(field: CoefficientField, x: float, max_degree: int = 8, samples: int = 401) -> AlphaSlice:
    """Roots of a(., x) = 0 with multiplicity collapsed, and the derived sigma, t*, s_j."""
    poly = field.poly_t(x) if field.poly_t is not None else None
    if poly is not None and poly.get("a") is not None:
        ca = np.asarray(poly["a"], float)
    else:
        t_lo, t_hi = field.domain[0], field.domain[1]
        ts = np.linspace(t_lo, t_hi, samples)
        av = field.coefficients(ts, np.full_like(ts, x))[0]
        best = None
        for deg in range(1, max_degree + 1):
            c = np.polyfit(ts, av, deg)
            res = np.max(np.abs(np.polyval(c, ts) - av))
            if res <= FIT_TOL * max(np.max(np.abs(av)), 1e-300):
                best = c
                break
        if best is None:
            raise QualityError(f"a(., {x}) is not polynomial to degree {max_degree} within tolerance")
        ca = best
    scale = np.max(np.abs(ca)) if ca.size else 0.0
    ca = np.where(np.abs(ca) > 1e-13 * scale, ca, 0.0)
    roots = companion_roots(ca)
    rs = 1.0 + (np.max(np.abs(roots)) if roots.size else 0.0)
    distinct = _distinct(list(roots), 1e-6 * rs)
    sig = []
    for r in sorted(z.real for z in distinct):
        if not sig or abs(r - sig[-1]) > 1e-6 * rs:
            sig.append(r)
    tstar = float(np.sqrt(sum(abs(z) ** 2 for z in distinct)))
    m = len(sig)
    s = [-3 * tstar] + [0.5 * (sig[j] + sig[j + 1]) for j in range(m - 1)] + ([3 * tstar] if m else [])
    if m == 0:
        s = [0.0]
    ts = np.linspace(field.domain[0], field.domain[1], 9)
    a0 = field.coefficients(ts, np.zeros_like(ts), check=False)[0]
    n_pos = bool(np.max(np.abs(a0)) <= 1e-14)
    return AlphaSlice(float(x), tuple(distinct), tuple(sig), tstar, tuple(s), n_pos)


def build_alpha_partition(field: CoefficientField, delta_bar: float, T: float,
                          xs: Optional[Sequence[float]] = None, max_slices: int = 201) -> WeightPartition:
    """Partition of the cone |x| <= delta_bar (T - t) by the real parts of the zeros of a.

    Regions omega_j^- = [s_{j-1}, sigma_j] and omega_j^+ = [sigma_j, s_j] carry
    weights sigma_j - t and t - sigma_j; omega(T) = [s_m, T] carries t - s_m
    when x divides alpha and alpha = sqrt(a) otherwise.
    """
    if xs is None:
        xs = np.linspace(-delta_bar * T, delta_bar * T, max_slices)
    xs = np.asarray(xs, float)

    @lru_cache(maxsize=None)
    def sl(x: float) -> AlphaSlice:
        return alpha_slice(field, x)

    slices = [sl(float(x)) for x in xs]
    ms = [len(s.sigma) for s in slices]
    m_max = max(ms)
    # ordering continuity between neighbouring slices
    for s0, s1 in zip(slices[:-1], slices[1:]):
        if len(s0.sigma) == len(s1.sigma) and len(s0.sigma) > 1:
            if np.any(np.diff(s0.sigma) < 0) or np.any(np.diff(s1.sigma) < 0):
                raise AnalysisError("sigma ordering lost between slices")
    crossings = sum(1 for m0, m1 in zip(ms[:-1], ms[1:]) if m0 != m1)

    def per_x(fn):
        def ev(y):
            y = np.asarray(y, float)
            flat = y.ravel()
            out = np.empty(flat.shape)
            for u in np.unique(flat):
                out[flat == u] = fn(sl(float(u)))
            return out.reshape(y.shape)
        return ev

    def sigma_j(j):
        return per_x(lambda s: s.sigma[j] if j < len(s.sigma) else np.nan)

    def s_j(j):
        return per_x(lambda s: s.s[j] if j < len(s.s) else np.nan)

    def slope(fn):
        def d(y):
            y = np.asarray(y, float)
            h = 1e-5 * max(1.0, delta_bar * T)
            return (fn(y + h) - fn(y - h)) / (2 * h)
        return d

    regions = []
    for j in range(m_max):
        sg, lo, hi = sigma_j(j), s_j(j), s_j(j + 1)
        dsg = slope(sg)
        regions.append(Region(
            f"omega{j + 1}-", "sigma-t", lo, sg, lambda t, y, sg=sg: sg(y) - t,
            lambda t, y: -np.ones(np.shape(t)), lambda t, y, d=dsg: d(np.broadcast_to(y, np.shape(t))), +1))
        regions.append(Region(
            f"omega{j + 1}+", "t-sigma", sg, hi, lambda t, y, sg=sg: t - sg(y),
            lambda t, y: np.ones(np.shape(t)), lambda t, y, d=dsg: -d(np.broadcast_to(y, np.shape(t))), -1))
    last = per_x(lambda s: s.s[-1])
    Tfn = _const(T)
    n_pos = slices[len(slices) // 2].n_positive
    if n_pos:
        dl = slope(last)
        regions.append(Region("omega(T)", "t-s_m", last, Tfn, lambda t, y: t - last(y),
                              lambda t, y: np.ones(np.shape(t)),
                              lambda t, y: -dl(np.broadcast_to(y, np.shape(t))), -1))
    else:
        def alpha(t, y):
            return np.sqrt(np.maximum(field.coefficients(t, y, check=False)[0], 0.0))

        def alpha_d(var):
            def f(t, y):
                a = field.coefficients(t, y, check=False)[0]
                da = field.derivative("a", var, t, y)
                with np.errstate(divide="ignore", invalid="ignore"):
                    return np.where(a > 0, da / (2 * np.sqrt(np.maximum(a, 1e-300))), np.inf)
            return f

        regions.append(Region("omega(T)", "alpha", last, Tfn, alpha, alpha_d("t"), alpha_d("y"), -1))
    meta = {
        "sigma": {f"{x:.6g}": [float(v) for v in s.sigma] for x, s in zip(xs[:: max(1, len(xs) // 9)],
                                                             slices[:: max(1, len(xs) // 9)])},
        "root_count_changes": crossings,
        "n_positive": n_pos,
    }
    return WeightPartition(regions, "cone", "alpha", None, None, float(delta_bar), float(T), meta)


@dataclass
class WeightConditionsReport:
    constants: dict     # region -> [C1 (phi|d_t a| <= C a d_t phi), C2 (phi <= C d_t phi)]
    vanishing: list     # sup sqrt(a)|d_x phi| / d_t phi for shrinking regions
    scales: list
    sign_ok: bool

    @property
    def vanishing_ok(self) -> bool:
        v = self.vanishing
        if max(v) <= 1e-12:
            return True
        mono = all(v[k + 1] <= 1.1 * v[k] for k in range(len(v) - 1))
        return mono and v[-1] < v[0]

    @property
    def passed(self) -> bool:
        return (all(m.stable for ms in self.constants.values() for m in ms)
                and self.vanishing_ok and self.sign_ok)

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "constants": {k: [m.to_dict() for m in v] for k, v in self.constants.items()},
            "vanishing": self.vanishing, "scales": self.scales,
            "vanishing_ok": self.vanishing_ok, "sign_ok": self.sign_ok,
        }


def cone_grid(delta_bar: float, T: float, n: int = 81, scale: float = 1.0) -> Grid:
    """Two-sided grid covering the cone |x| <= delta_bar (T - t), -T <= t <= T, shrunk by ``scale``."""
    Ts = T * scale
    w = delta_bar * 2 * Ts
    return Grid(-Ts, Ts, n, -w, w, n)


def certify_general_weight_conditions(field: CoefficientField, partition: WeightPartition,
                                      grid: Optional[Grid] = None,
                                      scales=(1.0, 0.5, 0.25)) -> WeightConditionsReport:
    """Measure phi |d_t a| / (a |d_t phi|) and phi / |d_t phi| per region, and
    sup sqrt(a) |d_x phi| / |d_t phi| over cones shrunk by the given scales."""
    db, T = partition.delta, partition.T
    if grid is None:
        grid = cone_grid(db, T)

    def inside(t, y, s):
        return (np.abs(y) <= db * (s * T - t) + 1e-14) & (t <= s * T) & (t >= -s * T)

    def evaluate(g: Grid, s: float):
        t, y = g.mesh()
        a = field.coefficients(t, y, check=False)[0]
        dat = field.derivative("a", "t", t, y)
        idx = partition.region_index(t, y)
        keep = inside(t, y, s)
        per = {}
        van = 0.0
        sign_ok = True
        for k, r in enumerate(partition.regions):
            m = keep & (idx == k)
            if not np.any(m):
                per[r.name] = (0.0, 0.0)
                continue
            tt, yy = t[m], y[m]
            phi = r.phi(tt, yy)
            pt = r.phi_t(tt, yy)
            py = r.phi_y(tt, yy)
            am, dm = a[m], dat[m]
            if r.kind == "alpha":
                ok_pts = (am > 1e-14) & np.isfinite(pt)
                sign_ok &= bool(np.all((phi[ok_pts] > 0) & (pt[ok_pts] > 0)))
            good = (phi > 0) & (am > 1e-12 * max(float(np.max(a)), 1e-300)) & np.isfinite(pt) & (np.abs(pt) > 0)
            if not np.any(good):
                per[r.name] = (0.0, 0.0)
                continue
            c1 = float(np.max(phi[good] * np.abs(dm[good]) / (am[good] * np.abs(pt[good]))))
            c2 = float(np.max(phi[good] / np.abs(pt[good])))
            v = np.sqrt(am[good]) * np.abs(py[good]) / np.abs(pt[good])
            van = max(van, float(np.max(v[np.isfinite(v)])) if np.any(np.isfinite(v)) else 0.0)
            per[r.name] = (c1, c2)
        return per, van, sign_ok

    coarse, _, sign0 = evaluate(grid, 1.0)
    fine, _, sign1 = evaluate(grid.refined(), 1.0)
    constants = {}
    for r in partition.regions:
        ms = []
        for k, nm in enumerate(("phi |d_t a| / (a |d_t phi|)", "phi / |d_t phi|")):
            v0, v1 = coarse[r.name][k], fine[r.name][k]
            ms.append(MeasuredConstant(nm, v0, grid.describe(), refinement_ratio(v0, v1, 1e-12),
                                       value_fine=v1, total=grid.size, extra={"region": r.name}))
        constants[r.name] = ms
    vanishing = []
    for s in scales:
        g = cone_grid(db, T, grid.nt, s)
        _, van, _ = evaluate(g, s)
        vanishing.append(van)
    return WeightConditionsReport(constants, vanishing, list(scales), bool(sign0 and sign1))
