"""Bezoutian symmetrizer S of p = tau^3 - a tau - b and its diagonalization.

Everything here is vectorized: a and b may be arrays of any (common) shape
and matrices carry two trailing axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError
from .grids import Grid
from .measure import MeasuredConstant, measure_on_grids, refinement_ratio, sup_ratio
from .symbols import CoefficientField, delta_tolerance, fd_step

DEGENERACY = 1e-7
ORTHO_TOL = 1e-10
PERMUTATION = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])


@dataclass
class Bezoutian:
    a: np.ndarray
    b: np.ndarray
    S: np.ndarray
    A: np.ndarray


def build_bezoutian(a, b) -> Bezoutian:
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    z, o = np.zeros_like(a), np.ones_like(a)
    S = np.stack([
        np.stack([3 * o, z, -a], -1),
        np.stack([z, 2 * a, 3 * b], -1),
        np.stack([-a, 3 * b, a * a], -1),
    ], -2)
    A = np.stack([
        np.stack([z, a, b], -1),
        np.stack([o, z, z], -1),
        np.stack([z, o, z], -1),
    ], -2)
    return Bezoutian(a, b, S, A)


def characteristic_cubic(bez: Bezoutian):
    """Coefficients (c2, c1, c0) of det(lambda I - S) = lambda^3 + c2 lambda^2 + c1 lambda + c0."""
    a, b = bez.a, bez.b
    c2 = -(3 + 2 * a + a * a)
    c1 = 6 * a + 2 * a**2 + 2 * a**3 - 9 * b**2
    c0 = -(4 * a**3 - 27 * b**2)
    return c2, c1, c0


def trig_cubic_roots(c2, c1, c0) -> np.ndarray:
    """Ascending roots of a real cubic known to have three real roots (Viete).

    The acos argument is clamped into [-1, 1]; a slightly positive depressed
    coefficient (rounding around a triple root) collapses to the triple root.
    """
    c2, c1, c0 = np.broadcast_arrays(*(np.asarray(c, float) for c in (c2, c1, c0)))
    m = -c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    r = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    neg = p < 0
    ps = np.where(neg, p, -1.0)
    rad = 2.0 * np.sqrt(-ps / 3.0)
    # acos argument -r / (2 q^3), q = sqrt(-p/3), formed after scaling p, r to O(1)
    # so that subnormal coefficients do not overflow to inf * 0
    sc = np.maximum(np.sqrt(-ps), np.cbrt(np.abs(r)))
    q = np.sqrt(-ps / sc**2 / 3.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(q > 0, -(r / sc**3) / (2.0 * q**3), 0.0)
    arg = np.clip(np.nan_to_num(arg), -1.0, 1.0)
    phi = np.arccos(arg) / 3.0
    k = np.arange(3)
    mu = rad[..., None] * np.cos(phi[..., None] - 2.0 * np.pi * k / 3.0)
    mu = np.where(neg[..., None], mu, 0.0)
    return np.sort(m[..., None] + mu, axis=-1)


def reduced_roots(a, b) -> np.ndarray:
    """Roots of tau^3 - a tau - b, complex dtype, sorted by real part."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    d = 4 * a**3 - 27 * b**2
    out = np.empty(a.shape + (3,), complex)
    real = d >= 0
    if np.any(real):
        out[real] = trig_cubic_roots(np.zeros(np.count_nonzero(real)), -a[real], -b[real])
    if np.any(~real):
        # one real root (Cardano) and a conjugate pair
        aa, bb = a[~real], b[~real]
        s = np.sqrt(bb**2 / 4 - aa**3 / 27)
        u = np.cbrt(bb / 2 + s)
        v = np.cbrt(bb / 2 - s)
        r = u + v
        re = -r / 2
        im = np.sqrt(3) / 2 * np.abs(u - v)
        z = np.stack([re - 1j * im, re + 1j * im, r + 0j], -1)
        idx = np.argsort(z.real, axis=-1, kind="stable")
        out[~real] = np.take_along_axis(z, idx, -1)
    return out


def tau_max(a, b) -> float:
    r = reduced_roots(a, b)
    return float(np.max(np.abs(r))) if r.size else 0.0


def jacobi_eigh(S: np.ndarray, sweeps: int = 12):
    """Cyclic Jacobi rotations for a batch of real symmetric 3x3 matrices.

    Returns ascending eigenvalues and the orthogonal matrix of eigenvectors.
    """
    M = np.array(S, float, copy=True)
    batch = M.shape[:-2]
    V = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
    for _ in range(sweeps):
        off = M[..., 0, 1] ** 2 + M[..., 0, 2] ** 2 + M[..., 1, 2] ** 2
        if np.all(off <= 1e-300 + 1e-34 * np.sum(M * M, axis=(-2, -1))):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = M[..., p, q]
            app, aqq = M[..., p, p], M[..., q, q]
            active = np.abs(apq) > 1e-300
            safe = np.where(active, apq, 1.0)
            with np.errstate(over="ignore"):
                theta = (aqq - app) / (2.0 * safe)
                tt = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            tt = np.where(theta == 0, 1.0, tt)
            c = 1.0 / np.sqrt(tt * tt + 1.0)
            s = tt * c
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            J = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
            J[..., p, p] = c
            J[..., q, q] = c
            J[..., p, q] = s
            J[..., q, p] = -s
            M = np.swapaxes(J, -1, -2) @ M @ J
            V = V @ J
    w = np.diagonal(M, axis1=-2, axis2=-1)
    idx = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, idx, -1)
    V = np.take_along_axis(V, idx[..., None, :], -1)
    return w, V


def _fix_signs(T: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive."""
    k = np.argmax(np.abs(T), axis=-2)
    piv = np.take_along_axis(T, k[..., None, :], -2)[..., 0, :]
    sgn = np.where(piv < 0, -1.0, 1.0)
    return T * sgn[..., None, :]


@dataclass
class SpectralFrame:
    lam: np.ndarray      # (..., 3) ascending
    T: np.ndarray        # (..., 3, 3) orthogonal
    Lambda: np.ndarray   # (..., 3, 3) diagonal T^t S T
    A_T: np.ndarray      # (..., 3, 3) T^t A T
    d: np.ndarray        # (..., 3) cofactor normalizers
    fallback: np.ndarray     # Jacobi path used
    degenerate: np.ndarray   # a = b = 0 exactly
    indefinite: np.ndarray   # Delta < -tol

    @property
    def LambdaA(self) -> np.ndarray:
        return self.lam[..., :, None] * self.A_T


def eigenvalues(bez: Bezoutian) -> np.ndarray:
    """Closed-form ascending eigenvalues of S, with the smallest recovered
    from det S = Delta where that is better conditioned."""
    c2, c1, c0 = characteristic_cubic(bez)
    lam = trig_cubic_roots(c2, c1, c0)
    # The trig formula resolves the two small roots only to absolute accuracy.
    # lambda_3 >= 3 is well separated, so deflate q by (lambda - lambda_3):
    # the remaining quadratic has product Delta/lambda_3 and sum
    # (c1 - Delta/lambda_3)/lambda_3, both relatively accurate.
    l3 = lam[..., 2]
    gamma = -c0 / l3
    s = (c1 - gamma) / l3
    disc = np.maximum(s * s - 4 * gamma, 0.0)
    l2 = 0.5 * (s + np.sqrt(disc))
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = np.where(l2 != 0, gamma / np.where(l2 != 0, l2, 1.0), 0.0)
    ok = l3 > 0.5 * np.abs(c2) / 3  # lambda_3 dominates the trace
    lam[..., 1] = np.where(ok, l2, lam[..., 1])
    lam[..., 0] = np.where(ok, np.minimum(l1, lam[..., 1]), lam[..., 0])
    return np.sort(lam, axis=-1)


def cofactor_vectors(a, b, lam) -> np.ndarray:
    """Unnormalized eigenvector columns l_1, l_2, l_3 from cofactors of lambda I - S."""
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    c1 = np.stack([a * (2 * a - l1), 3 * b * (l1 - 3), (l1 - 3) * (l1 - 2 * a)], -1)
    c2 = np.stack([-3 * a * b, (l2 - 3) * (l2 - a * a) - a * a, 3 * b * (l2 - 3)], -1)
    c3 = np.stack([(l3 - 2 * a) * (l3 - a * a) - 9 * b * b, -3 * a * b, -a * (l3 - 2 * a)], -1)
    return np.stack([c1, c2, c3], -1)


def eigen_decompose(bez: Bezoutian, force_jacobi: bool = False) -> SpectralFrame:
    a, b = bez.a, bez.b
    lam = eigenvalues(bez)
    L = cofactor_vectors(a, b, lam)
    d = np.linalg.norm(L, axis=-2)
    thresh = DEGENERACY * (1 + np.abs(a))
    ok = np.all(d > thresh[..., None], axis=-1) & (not force_jacobi)
    with np.errstate(divide="ignore", invalid="ignore"):
        T = L / np.where(ok[..., None], d, 1.0)[..., None, :]
    eye = np.eye(3)
    ortho = np.max(np.abs(np.swapaxes(T, -1, -2) @ T - eye), axis=(-2, -1))
    ok &= ortho <= ORTHO_TOL
    degenerate = (a == 0) & (b == 0)
    fb = ~ok & ~degenerate
    if np.any(fb):
        wj, Vj = jacobi_eigh(bez.S[fb])
        lam[fb] = wj
        T[fb] = Vj
    if np.any(degenerate):
        lam[degenerate] = (0.0, 0.0, 3.0)
        T[degenerate] = PERMUTATION
    T = _fix_signs(T)
    Tt = np.swapaxes(T, -1, -2)
    Lam = Tt @ bez.S @ T
    A_T = Tt @ bez.A @ T
    indefinite = 4 * a**3 - 27 * b**2 < -delta_tolerance(a)
    return SpectralFrame(lam, T, Lam, A_T, d, fb, degenerate, indefinite)


def frame_of(field: CoefficientField, t, y, check: bool = False) -> SpectralFrame:
    a, b = field.coefficients(t, y, check=check)
    return eigen_decompose(build_bezoutian(a, b))


def align_columns(T: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Flip columns of T to point the same way as the columns of ref."""
    s = np.sign(np.sum(T * ref, axis=-2))
    s = np.where(s == 0, 1.0, s)
    return T * s[..., None, :]


@dataclass
class FrameDerivatives:
    frame: SpectralFrame
    dT: dict       # var -> dT/dvar
    dlam: dict     # var -> dlambda/dvar
    dLambdaA: dict  # var -> d(Lambda A_T)/dvar

    def twisted(self, var: str) -> np.ndarray:
        """(d T^{-1}) T = (dT)^t T for orthogonal T."""
        return np.swapaxes(self.dT[var], -1, -2) @ self.frame.T


def frame_derivatives(field: CoefficientField, t, y, vars=("t", "y"), step=None) -> FrameDerivatives:
    """Frame at (t, y) and central-difference derivatives of T, lambda, Lambda A_T."""
    t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
    F0 = frame_of(field, t, y)
    dT, dl, dLA = {}, {}, {}
    for v in vars:
        base = t if v == "t" else y
        h = fd_step(base, step)
        if v == "t":
            Fp, Fm = frame_of(field, t + h, y), frame_of(field, t - h, y)
        else:
            Fp, Fm = frame_of(field, t, y + h), frame_of(field, t, y - h)
        Tp, Tm = align_columns(Fp.T, F0.T), align_columns(Fm.T, F0.T)
        LAp = Fp.lam[..., :, None] * (np.swapaxes(Tp, -1, -2) @ build_bezoutian(*field.coefficients(
            *((t + h, y) if v == "t" else (t, y + h)), check=False)).A @ Tp)
        LAm = Fm.lam[..., :, None] * (np.swapaxes(Tm, -1, -2) @ build_bezoutian(*field.coefficients(
            *((t - h, y) if v == "t" else (t, y - h)), check=False)).A @ Tm)
        hh = (2 * h)[..., None]
        dT[v] = (Tp - Tm) / hh[..., None]
        dl[v] = (Fp.lam - Fm.lam) / hh
        dLA[v] = (LAp - LAm) / hh[..., None]
    return FrameDerivatives(F0, dT, dl, dLA)


# ---------------------------------------------------------------------------
# certification of the eigenvalue bounds

@dataclass
class SkonReport:
    K: float
    points: dict          # column name -> flat array (per grid point)
    K_min: MeasuredConstant
    passed: bool
    failures: list

    def summary(self) -> dict:
        return {
            "K": self.K,
            "passed": self.passed,
            "K_min": self.K_min.to_dict(),
            "n_points": int(self.points["t"].size),
            "failures": self.failures[:20],
        }


SKON_NAMES = ("lam1_lower", "lam1_upper", "lam2_lower", "lam2_upper", "lam3_lower", "lam3_upper")


def _skon_eval(field, grid: Grid, K: float):
    t, y = grid.mesh()
    a, b = field.coefficients(t, y)
    if np.any(a <= 0):
        raise InputError("certification region contains points with a <= 0")
    lam = eigen_decompose(build_bezoutian(a, b)).lam
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    delta = 4 * a**3 - 27 * b**2
    slack = 1e-12 * (1 + np.abs(lam))
    checks = {
        "lam1_lower": delta / (6 * a + 2 * a**2 + 2 * a**3) <= l1 + slack[..., 0],
        "lam1_upper": l1 <= (2.0 / 3.0 + K * a) * a**2 + slack[..., 0],
        "lam2_lower": (2 - K * a) * a <= l2 + slack[..., 1],
        "lam2_upper": l2 <= (2 + K * a) * a + slack[..., 1],
        "lam3_lower": 3 <= l3 + slack[..., 2],
        "lam3_upper": l3 <= 3 + K * a**2 + slack[..., 2],
    }
    need = np.maximum.reduce([
        (l1 / a**2 - 2.0 / 3.0) / a,
        (2 - l2 / a) / a,
        (l2 / a - 2) / a,
        (l3 - 3) / a**2,
        np.zeros_like(a),
    ])
    return t, y, a, b, lam, checks, need


def certify_skon_bounds(field: CoefficientField, grid: Grid, K: float = 2.0) -> SkonReport:
    """Check the six two-sided eigenvalue bounds pointwise and measure the minimal K."""
    t, y, a, b, lam, checks, need = _skon_eval(field, grid, K)

    def kmin(g: Grid):
        tt, yy, *_, nd = _skon_eval(field, g, K)
        k = int(np.argmax(nd))
        return float(nd.flat[k]), 0, (float(tt.flat[k]), float(yy.flat[k]))

    K_min = measure_on_grids("K_min", kmin, grid)
    _, _, _, _, _, checks_fine, _ = _skon_eval(field, grid.refined(), K)
    ok_all = np.logical_and.reduce([checks[n] for n in SKON_NAMES])
    ok_fine = all(bool(np.all(checks_fine[n])) for n in SKON_NAMES)
    failures = [
        {"t": float(tt), "y": float(yy), "failed": [n for n in SKON_NAMES if not checks[n].flat[i]]}
        for i, (tt, yy) in enumerate(zip(t.flat, y.flat)) if not ok_all.flat[i]
    ]
    points = {"t": t.ravel(), "y": y.ravel(), "a": a.ravel(), "b": b.ravel(),
              "lambda1": lam[..., 0].ravel(), "lambda2": lam[..., 1].ravel(),
              "lambda3": lam[..., 2].ravel(), "K_needed": need.ravel()}
    for n in SKON_NAMES:
        points[n] = checks[n].ravel().astype(int)
    passed = bool(np.all(ok_all)) and ok_fine and K_min.value <= K and K_min.stable
    return SkonReport(K, points, K_min, passed, failures)


# ---------------------------------------------------------------------------
# O(a^p) estimates of matrix entries

def _pw(p):
    return lambda a, l1: a**p


def _lp(p):
    return lambda a, l1: np.abs(l1) * a**p


ZERO = None
ORDER_CLAIMS = {
    "T": [[_pw(1), _pw(1.5), _pw(0)],
          [_pw(0.5), _pw(0), _pw(2.5)],
          [_pw(0), _pw(0.5), _pw(1)]],
    "A_T": [[_pw(0.5), _pw(0), _pw(0.5)],
            [_pw(1), _pw(0.5), _pw(0)],
            [_pw(1.5), _pw(1), _pw(2.5)]],
    "dtTinvT": [[ZERO, _pw(-0.5), _pw(0)],
                [_pw(-0.5), ZERO, _pw(0.5)],
                [_pw(0), _pw(0.5), ZERO]],
    "dxTinvT": [[ZERO, _pw(0), _pw(0.5)],
                [_pw(0), ZERO, _pw(1)],
                [_pw(0.5), _pw(1), ZERO]],
    "LambdaA": [[_lp(0.5), _lp(0), _lp(0.5)],
                [_pw(2), _pw(1.5), _pw(1)],
                [_pw(1.5), _pw(1), _pw(2.5)]],
}
ORDER_LABELS = {
    "T": [["a", "a^1.5", "1"], ["a^0.5", "1", "a^2.5"], ["1", "a^0.5", "a"]],
    "A_T": [["a^0.5", "1", "a^0.5"], ["a", "a^0.5", "1"], ["a^1.5", "a", "a^2.5"]],
    "dtTinvT": [["0", "a^-0.5", "1"], ["a^-0.5", "0", "a^0.5"], ["1", "a^0.5", "0"]],
    "dxTinvT": [["0", "1", "a^0.5"], ["1", "0", "a"], ["a^0.5", "a", "0"]],
    "LambdaA": [["l1*a^0.5", "l1", "l1*a^0.5"], ["a^2", "a^1.5", "a"], ["a^1.5", "a", "a^2.5"]],
}


def _order_matrices(field, grid: Grid):
    t, y = grid.mesh()
    a, _ = field.coefficients(t, y)
    if np.any(a <= 0):
        raise InputError("grid touches a = 0")
    fd = frame_derivatives(field, t, y)
    fr = fd.frame
    mats = {
        "T": fr.T,
        "A_T": fr.A_T,
        "dtTinvT": fd.twisted("t"),
        "dxTinvT": fd.twisted("y"),
        "LambdaA": fr.LambdaA,
    }
    return t, y, a, fr.lam[..., 0], mats


@dataclass
class OrderReport:
    ratios: dict   # "name[i,j]" -> MeasuredConstant
    zero_residual: dict

    @property
    def passed(self) -> bool:
        return all(m.stable for m in self.ratios.values()) and all(
            v <= 1e-5 for v in self.zero_residual.values())

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "ratios": {k: v.to_dict() for k, v in self.ratios.items()},
            "zero_residual": self.zero_residual,
        }


def certify_matrix_orders(field: CoefficientField, grid: Grid, band=(0.75, 1.25)) -> OrderReport:
    """sup |M_ij| / a^p for every entry of T, A_T, (dT^{-1})T in t and y, and Lambda A_T."""
    coarse = _order_matrices(field, grid)
    fine = _order_matrices(field, grid.refined())
    ratios, zero_res = {}, {}
    for name, claims in ORDER_CLAIMS.items():
        for i in range(3):
            for j in range(3):
                key = f"{name}[{i + 1},{j + 1}]"
                vals, skips, wits = [], [], []
                for t, y, a, l1, mats in (coarse, fine):
                    entry = mats[name][..., i, j]
                    if claims[i][j] is None:
                        vals.append(float(np.max(np.abs(entry))))
                        continue
                    scale = float(np.max(np.abs(claims[i][j](a, l1))))
                    v, s, w = sup_ratio(entry, claims[i][j](a, l1), t, y, 1e-12 * max(scale, 1e-300))
                    vals.append(v)
                    skips.append(s)
                    wits.append(w)
                if claims[i][j] is None:
                    zero_res[key] = max(vals)
                    continue
                ratios[key] = MeasuredConstant(
                    name=f"|{key}| / {ORDER_LABELS[name][i][j]}", value=vals[0], value_fine=vals[1],
                    grid=grid.describe(), refinement_ratio=refinement_ratio(vals[0], vals[1], 1e-9),
                    skipped=max(skips), total=grid.size, band=band, witness=wits[1],
                )
    return OrderReport(ratios, zero_res)
