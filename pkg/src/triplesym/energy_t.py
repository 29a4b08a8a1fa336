"""Per-frequency ODE  dU/dt = i|xi| A U + B U + F  and weighted energies along its trajectories."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp

from .bezoutian import build_bezoutian, eigen_decompose, frame_derivatives, reduced_roots
from .errors import InputError, NumericalError
from .symbols import CoefficientField, depress_cubic, field_from_expressions, _parse, _t
from .weights import WeightPartition

log = logging.getLogger(__name__)

# two-stage Gauss-Legendre tableau
_S3 = math.sqrt(3.0)
GL_C = np.array([0.5 - _S3 / 6, 0.5 + _S3 / 6])
GL_A = np.array([[0.25, 0.25 - _S3 / 6], [0.25 + _S3 / 6, 0.25]])
GL_B = np.array([0.5, 0.5])

RTOL = 1e-9
ATOL = 1e-12
SAFETY = 0.5
MAX_STEPS = 4_000_000
CHUNK = 40_000
BLOWUP = 1e150
N_DEFAULT = 8
N_MAX = 40

_GX, _GW = np.polynomial.legendre.leggauss(24)


# ---------------------------------------------------------------------------
# gauge reduction

def gauge_reduce(raw_coeffs: dict, xi_direction: float = 1.0, domain=(0.0, 1.0, -1.0, 1.0),
                 name: str = "gauged") -> CoefficientField:
    """Remove the tau^2 term of tau^3 + c2 w tau^2 + c1 w^2 tau + c0 w^3, w = xi_direction.

    ``raw_coeffs`` maps 'c2', 'c1', 'c0' (and optionally 'lower') to
    expressions in t and y.  The returned field carries the phase exponent
    (i/3) int_0^t c2(s) w ds per unit |xi| in ``params['phase_rate']``; the
    reduced unknown is E u with E = exp(i |xi| phase_rate(t)).
    """
    w = sp.nsimplify(xi_direction)
    c2 = _parse(raw_coeffs.get("c2", 0)) * w
    c1 = _parse(raw_coeffs.get("c1", 0)) * w**2
    c0 = _parse(raw_coeffs.get("c0", 0)) * w**3
    a, b = depress_cubic(c2, c1, c0)
    a, b = sp.simplify(sp.nsimplify(a)), sp.simplify(sp.nsimplify(b))
    s = sp.Symbol("s")
    rate = sp.simplify(sp.integrate(c2.subs(_t, s), (s, 0, _t)) / 3)
    f = field_from_expressions(a, b, domain, name=name, lower=raw_coeffs.get("lower"),
                               params={"builder": "gauge", "shift": str(sp.simplify(c2 / 3)),
                                       "phase_rate": str(rate)})
    return f


def gauge_phase(field: CoefficientField, t, xi: float, y: float = 0.0) -> np.ndarray:
    """E(t, xi) for a field produced by gauge_reduce (1 when nothing was removed)."""
    rate = field.params.get("phase_rate")
    t = np.asarray(t, float)
    if rate is None:
        return np.ones(t.shape, complex)
    from .symbols import _lambdify
    r = _lambdify(_parse(rate))(t, np.full(t.shape, y))
    return np.exp(1j * xi * np.broadcast_to(r, t.shape))


# ---------------------------------------------------------------------------
# systems and forcing

def bump(t, t_on: float, width: float) -> np.ndarray:
    """exp(-width / (t - t_on)) for t > t_on, 0 otherwise; flat to all orders at t_on."""
    s = np.asarray(t, float) - t_on
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(s > 0, np.exp(-width / np.where(s > 0, s, 1.0)), 0.0)


def _root_speed(field, y, t):
    a, b = field.coefficients(t, np.full(np.shape(t), y), check=False)
    return np.max(reduced_roots(a, b).real, axis=-1)


def make_forcing(field: CoefficientField, xi: float, y: float = 0.0, t_on: float = 0.0,
                 width: Optional[float] = None, kind: str = "resonant", amplitude: float = 1.0,
                 span: float = 1.0, width_factor: float = 0.02) -> Callable:
    """Source F = (i f, 0, 0) with f = bump(t) exp(i xi Theta(t)).

    'resonant' locks Theta' to the largest real characteristic speed so the
    response neither cancels nor averages out as xi grows; 'smooth' uses
    Theta = 0.
    """
    if kind not in ("resonant", "smooth"):
        raise InputError(f"unknown forcing kind {kind!r}")
    w = width if width is not None else width_factor * span

    def theta(t):
        t = np.asarray(t, float)
        s = np.maximum(t - t_on, 0.0)
        nodes = t_on + s[..., None] * (0.5 * (_GX + 1))
        speed = _root_speed(field, y, nodes)
        return 0.5 * s * np.sum(_GW * speed, axis=-1)

    def F(t):
        t = np.asarray(t, float)
        f = amplitude * bump(t, t_on, w)
        if kind == "resonant":
            f = f * np.exp(1j * xi * theta(t))
        out = np.zeros(t.shape + (3,), complex)
        out[..., 0] = 1j * f
        return out

    F.kind = kind
    F.t_on = t_on
    F.width = w
    return F


@dataclass
class FrequencySystem:
    xi: float
    A_of_t: Callable
    B_of_t: Callable
    F_of_t: Callable
    field: Optional[CoefficientField] = None
    y: float = 0.0
    forcing: dict = dc_field(default_factory=dict)
    cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def matrix(self, t) -> np.ndarray:
        return 1j * self.xi * self.A_of_t(t) + self.B_of_t(t)

    def with_forcing(self, t_on: float, span: float, kind: Optional[str] = None) -> "FrequencySystem":
        if self.field is None:
            raise InputError("forcing rebuild needs the coefficient field")
        spec = dict(self.forcing)
        spec.update(t_on=t_on, span=span)
        if kind is not None:
            spec["kind"] = kind
        F = make_forcing(self.field, self.xi, self.y, **spec)
        return FrequencySystem(self.xi, self.A_of_t, self.B_of_t, F, self.field, self.y, spec)

    def homogeneous(self) -> "FrequencySystem":
        return FrequencySystem(self.xi, self.A_of_t, self.B_of_t,
                               lambda t: np.zeros(np.shape(t) + (3,), complex), self.field, self.y, {})


def make_system(field: CoefficientField, xi: float, y: float = 0.0, forcing: Optional[str] = "resonant",
                t_on: float = 0.0, span: Optional[float] = None, width: Optional[float] = None,
                amplitude: float = 1.0) -> FrequencySystem:
    """FrequencySystem for the t-dependent coefficients of ``field`` along x = y."""
    if xi < 1:
        raise InputError("frequency magnitude must be >= 1")

    def A_of_t(t):
        a, b = field.coefficients(t, np.full(np.shape(t), y), check=False)
        return build_bezoutian(a, b).A

    def B_of_t(t):
        t = np.asarray(t, float)
        low = field.lower(t, np.full(t.shape, y))
        B = np.zeros(t.shape + (3, 3), complex)
        B[..., 0, :] = 1j * low
        return B

    if span is None:
        span = field.domain[1] - t_on
    spec = {}
    if forcing is None:
        F = lambda t: np.zeros(np.shape(t) + (3,), complex)
    else:
        spec = dict(kind=forcing, width=width, amplitude=amplitude, t_on=t_on, span=span)
        F = make_forcing(field, xi, y, **spec)
    return FrequencySystem(float(xi), A_of_t, B_of_t, F, field, float(y), spec)


# ---------------------------------------------------------------------------
# integrator

@dataclass
class FrequencyTrace:
    times: np.ndarray
    U: np.ndarray            # (n, 3) complex
    h: float
    steps: int
    err_max: float           # largest local error estimate relative to tolerance
    blown_up: bool = False
    refinements: int = 0

    def symmetrizer_energy(self, field: CoefficientField, y: float = 0.0) -> np.ndarray:
        """<S U, U> along the trajectory."""
        a, b = field.coefficients(self.times, np.full(self.times.shape, y), check=False)
        S = build_bezoutian(a, b).S
        return np.real(np.einsum("ni,nij,nj->n", self.U.conj(), S, self.U))


def _propagators(system: FrequencySystem, t0: float, h: float, n: int):
    """Per-step affine maps y -> P y + q of the Gauss-Legendre scheme."""
    P = np.empty((n, 3, 3), complex)
    q = np.empty((n, 3), complex)
    I6 = np.eye(6)
    for s in range(0, n, CHUNK):
        e = min(n, s + CHUNK)
        tn = t0 + h * np.arange(s, e)
        t1, t2 = tn + GL_C[0] * h, tn + GL_C[1] * h
        M1, M2 = system.matrix(t1), system.matrix(t2)
        f1, f2 = system.F_of_t(t1), system.F_of_t(t2)
        m = e - s
        L = np.empty((m, 6, 6), complex)
        L[:, :3, :3] = GL_A[0, 0] * M1
        L[:, :3, 3:] = GL_A[0, 1] * M1
        L[:, 3:, :3] = GL_A[1, 0] * M2
        L[:, 3:, 3:] = GL_A[1, 1] * M2
        L = I6 - h * L
        R = np.empty((m, 6, 4), complex)
        R[:, :3, :3], R[:, 3:, :3] = M1, M2
        R[:, :3, 3], R[:, 3:, 3] = f1, f2
        K = np.linalg.solve(L, R)
        P[s:e] = np.eye(3) + h * (GL_B[0] * K[:, :3, :3] + GL_B[1] * K[:, 3:, :3])
        q[s:e] = h * (GL_B[0] * K[:, :3, 3] + GL_B[1] * K[:, 3:, 3])
    return P, q


def _march(P, q, y0):
    n = P.shape[0]
    Y = np.empty((n + 1, 3), complex)
    Y[0] = y0
    y = np.asarray(y0, complex)
    for k in range(n):
        y = P[k] @ y + q[k]
        Y[k + 1] = y
        if k % 1024 == 0 and not (np.all(np.isfinite(y)) and np.max(np.abs(y)) < BLOWUP):
            return Y[: k + 2], True
    if not (np.all(np.isfinite(y)) and np.max(np.abs(y)) < BLOWUP):
        return Y, True
    return Y, False


def _sup_norm_A(system: FrequencySystem, t0: float, t1: float) -> float:
    ts = np.linspace(t0, t1, 65)
    return float(np.max(np.linalg.norm(system.A_of_t(ts), 2, axis=(-2, -1))))


def solve_frequency(system: FrequencySystem, t_span, initial, integrator_spec: Optional[dict] = None
                    ) -> FrequencyTrace:
    """Integrate with the implicit 4th-order Gauss-Legendre scheme on a uniform grid.

    The step starts at safety / (|xi| (1 + sup|A|)) and is refined until a
    step-doubling estimate of every local error is within atol + rtol |U|.
    """
    spec = dict(rtol=RTOL, atol=ATOL, safety=SAFETY, max_steps=MAX_STEPS)
    spec.update(integrator_spec or {})
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise InputError(f"empty time span {t_span}")
    y0 = np.asarray(initial, complex).reshape(3)
    supA = _sup_norm_A(system, t0, t1)
    if not np.isfinite(supA):
        raise InputError("coefficients are not finite on the time span")
    h_max = spec["safety"] / (system.xi * (1 + supA))
    n = max(4, int(math.ceil((t1 - t0) / h_max)))
    refinements = 0
    while True:
        if n > spec["max_steps"]:
            raise NumericalError(
                f"step underflow: {n} steps needed on [{t0}, {t1}] at xi={system.xi} "
                f"(h={(t1 - t0) / n:.3g}); stiffness or unresolved coefficients")
        h = (t1 - t0) / n
        P, q = _propagators(system, t0, h, n)
        Y, blown = _march(P, q, y0)
        m = Y.shape[0] - 1
        # step doubling on the computed trajectory
        Ph, qh = _propagators(system, t0, h / 2, 2 * m)
        mid = np.einsum("nij,nj->ni", Ph[0::2], Y[:m]) + qh[0::2]
        two = np.einsum("nij,nj->ni", Ph[1::2], mid) + qh[1::2]
        with np.errstate(invalid="ignore", over="ignore"):
            err = np.max(np.abs(two - Y[1:]), axis=1) * (16.0 / 15.0)
            tol = spec["atol"] + spec["rtol"] * np.max(np.abs(Y[1:]), axis=1)
            ratio = err / tol
        ratio = ratio[np.isfinite(ratio)]
        worst = float(np.max(ratio)) if ratio.size else 0.0
        if worst <= 1.0 or blown:
            times = t0 + h * np.arange(Y.shape[0])
            return FrequencyTrace(times, Y, h, m, worst, blown, refinements)
        factor = min(max(1.25 * worst ** 0.2, 1.3), 8.0)
        n = int(math.ceil(n * factor))
        refinements += 1


# ---------------------------------------------------------------------------
# weighted energies

@dataclass
class SubintervalVerdict:
    name: str
    kind: str              # 'vanishing-data' or 'middle'
    span: tuple
    N: int
    C: float               # sup LHS / RHS
    dissipation: float     # 2N - (-1)^j
    c_dLambda: float
    c_twist: float
    c_B: float
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__, span=list(self.span))


@dataclass
class EnergyTrace:
    times: np.ndarray
    E: np.ndarray            # (n, m) per-subinterval energy, NaN outside, scaled by g at the midpoint
    log_E: np.ndarray
    components: np.ndarray   # (n, 3) lambda_k |V_k|^2
    gamma: float
    N: int
    diagnostics: dict
    verdicts: list
    region_names: list
    gamma0: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def summary(self) -> dict:
        return {
            "N": self.N, "gamma": self.gamma, "passed": self.passed,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "gamma0": self.gamma0, "diagnostics": self.diagnostics,
        }


def _log_cumtrapz(logf: np.ndarray, t: np.ndarray) -> np.ndarray:
    """log of int_{t0}^t exp(logf) computed with a common shift."""
    fin = np.isfinite(logf)
    if not np.any(fin):
        return np.full(t.shape, -np.inf)
    M = float(np.max(logf[fin]))
    f = np.where(fin, np.exp(np.where(fin, logf, -np.inf) - M), 0.0)
    c = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
    with np.errstate(divide="ignore"):
        return np.log(c) + M


def _frame_terms(field: CoefficientField, y: float, t: np.ndarray, U: np.ndarray, B: np.ndarray):
    fd = frame_derivatives(field, t, np.full(t.shape, y), vars=("t",))
    fr = fd.frame
    V = np.einsum("nji,nj->ni", fr.T, U)            # T^t U
    lam = fr.lam
    comp = lam * np.abs(V) ** 2
    quad = np.sum(comp, axis=1)
    dl = np.abs(np.sum(fd.dlam["t"] * np.abs(V) ** 2, axis=1))
    W = fd.twisted("t")                              # (d_t T)^t T
    LV = lam * V
    twist = np.abs(np.einsum("ni,nij,nj->n", LV.conj(), W, V))
    BT = np.einsum("nji,njk,nkl->nil", fr.T, B, fr.T)
    bt = np.abs(np.einsum("ni,nij,nj->n", LV.conj(), BT, V))
    return V, comp, quad, dl, twist, bt


def _run_pieces(system: FrequencySystem, partition: WeightPartition, integrator_spec=None):
    """Trajectories per region: zero data and fresh forcing on vanishing-data
    pieces, continuation of the previous piece on the middle ones."""
    y = system.y
    pieces = []
    prev = None
    for r in partition.regions:
        lo, hi = float(r.lower(np.array(y))), float(r.upper(np.array(y)))
        if not hi > lo:
            pieces.append(None)
            continue
        if r.exponent_sign < 0:
            sysj = system.with_forcing(lo, hi - lo) if system.field is not None and system.forcing else system
            tr = solve_frequency(sysj, (lo, hi), np.zeros(3), integrator_spec)
            U_start = None
        else:
            if prev is None or abs(prev[1].times[-1] - lo) > 1e-12 * max(1.0, abs(lo)):
                raise InputError(f"region {r.name} does not continue a computed trajectory")
            sysj = prev[0]
            U_start = prev[1].U[-1]
            tr = solve_frequency(sysj, (lo, hi), U_start, integrator_spec)
        pieces.append((sysj, tr, U_start))
        prev = (sysj, tr)
    return pieces


def monitor_weighted_energy(system: FrequencySystem, partition: WeightPartition, N: int = N_DEFAULT,
                            gamma: float = 0.0, integrator_spec: Optional[dict] = None,
                            pieces=None) -> EnergyTrace:
    """Weighted energies g_j <Lambda V, V> on each subinterval with the two
    energy inequalities evaluated along forced trajectories.

    On increasing-weight pieces: |U(t)|^2 + N int phi^-2N |U|^2 <= C int phi^-2N |F|^2.
    On decreasing-weight pieces: phi^(2N-1)|U(t)|^2 + N int phi^2N |U|^2
    <= C |U(t_1)|^2 + C int phi^2N |F|^2, with U(t_1) from the previous piece.
    ``pieces`` may carry trajectories from an earlier call (they do not depend on N).
    """
    if system.field is None:
        raise InputError("monitoring needs the coefficient field for the frames")
    if partition.geometry != "interval":
        return _gamma_monitor(system, partition, N, gamma, integrator_spec)
    field = system.field
    top = max(float(r.upper(np.array(system.y))) for r in partition.regions)
    if top > field.domain[1] + 1e-12 or min(float(r.lower(np.array(system.y))) for r in partition.regions) < field.domain[0] - 1e-12:
        raise InputError("partition extends outside the coefficient domain")
    if pieces is None:
        # trajectories do not depend on N; keep them for later calls
        key = (id(partition), repr(sorted((integrator_spec or {}).items())))
        if key not in system.cache:
            system.cache[key] = (partition, _run_pieces(system, partition, integrator_spec))
        pieces = system.cache[key][1]
    times, logE, comps, owners = [], [], [], []
    verdicts = []
    diag = {}
    N_used = N
    for k, (r, pc) in enumerate(zip(partition.regions, pieces)):
        if pc is None:
            continue
        sysj, tr, U_start = pc
        t, U = tr.times, tr.U
        y = system.y
        phi = np.abs(r.phi(t, np.full(t.shape, y)))
        B = sysj.B_of_t(t)
        V, comp, quad, dl, twist, bt = _frame_terms(field, y, t, U, B)
        sU = tr.symmetrizer_energy(field, y)
        scale = max(float(np.max(np.abs(sU))), 1e-300)
        sum_err = float(np.max(np.abs(quad - sU)) / scale)
        ok = (quad > 1e-14 * max(float(np.max(quad)), 1e-300)) & (phi > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            c_dl = float(np.max(phi[ok] * dl[ok] / quad[ok])) if np.any(ok) else 0.0
            c_tw = float(np.max(phi[ok] * twist[ok] / quad[ok])) if np.any(ok) else 0.0
            c_b = float(np.max(phi[ok] * bt[ok] / quad[ok])) if np.any(ok) else 0.0
        # weight exponent 2(-1)^j N - 1 with (-1)^j = exponent sign
        Nj = N
        while True:
            with np.errstate(divide="ignore"):
                lg = (2 * r.exponent_sign * Nj - 1) * np.log(phi)
            mid = (2 * r.exponent_sign * Nj - 1) * math.log(max(abs(float(r.phi(np.array(0.5 * (t[0] + t[-1])), np.array(y)))), 1e-300))
            rng = lg[ok] - mid if np.any(ok) else np.zeros(1)
            # only overflow matters; E underflowing to 0 near a breakpoint is harmless
            if Nj <= 1 or float(np.max(rng[np.isfinite(rng)], initial=0.0)) < 700:
                break
            Nj -= 1
        if Nj != N:
            warnings.warn(f"weight overflow on {r.name}: N reduced from {N} to {Nj}", RuntimeWarning)
            N_used = min(N_used, Nj)
        with np.errstate(divide="ignore", invalid="ignore"):
            lE = np.where(ok, lg + np.log(np.where(ok, quad, 1.0)), -np.inf)
        # inequality sides in log form
        nU = np.sum(np.abs(U) ** 2, axis=1)
        nF = np.sum(np.abs(sysj.F_of_t(t)) ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            lw = 2 * r.exponent_sign * Nj * np.log(phi)
            lnU, lnF = np.log(nU), np.log(nF)
            iU, iF = lw + lnU, lw + lnF
        # U = F = 0 where the weight is singular
        iU = np.where(np.isnan(iU), -np.inf, iU)
        iF = np.where(np.isnan(iF), -np.inf, iF)
        lIU = _log_cumtrapz(iU, t)
        lIF = _log_cumtrapz(iF, t)
        if r.exponent_sign < 0:
            kind = "vanishing-data"
            lhs = np.logaddexp(lnU, math.log(Nj) + lIU)
            rhs = lIF
        else:
            kind = "middle"
            with np.errstate(divide="ignore"):
                lhs = np.logaddexp((2 * Nj - 1) * np.log(phi) + lnU, math.log(Nj) + lIU)
            rhs = np.logaddexp(math.log(max(float(np.sum(np.abs(U_start) ** 2)), 1e-300)), lIF)
        valid = np.isfinite(rhs) & (rhs > np.max(rhs[np.isfinite(rhs)], initial=-np.inf) - 600)
        valid &= np.isfinite(lhs) | (lhs == -np.inf)
        logC = float(np.max(lhs[valid] - rhs[valid])) if np.any(valid) else float("nan")
        C = math.exp(logC) if np.isfinite(logC) else float("inf")
        dissipation = 2 * Nj - r.exponent_sign
        needed = c_dl + c_tw + 2 * c_b + 1
        passed = bool(np.isfinite(C) and not tr.blown_up and dissipation > needed)
        note = "" if sum_err < 1e-12 else f"component sum mismatch {sum_err:.2g}"
        verdicts.append(SubintervalVerdict(r.name, kind, (float(t[0]), float(t[-1])), Nj, C,
                                           float(dissipation), c_dl, c_tw, c_b, passed, note))
        diag[r.name] = {"steps": tr.steps, "h": tr.h, "err_max": tr.err_max,
                        "component_sum_error": sum_err, "needed_dissipation": needed}
        times.append(t)
        logE.append(lE - mid)
        comps.append(comp)
        owners.append(np.full(t.shape, k))
    t_all = np.concatenate(times)
    m = len(partition.regions)
    LE = np.full((t_all.size, m), np.nan)
    off = 0
    for t, le, ow in zip(times, logE, owners):
        LE[off:off + t.size, ow[0]] = le
        off += t.size
    with np.errstate(over="ignore"):
        E = np.exp(LE)
    return EnergyTrace(t_all, E, LE, np.concatenate(comps), gamma, N_used, diag, verdicts,
                       [r.name for r in partition.regions])


def _gamma_monitor(system, partition, N, gamma, integrator_spec):
    """phi^(-N) e^(-gamma t) <Lambda V, V> on cone-partition slices with B, F as given
    and unit initial data at each region's lower end; reports gamma0 per region."""
    field = system.field
    y = system.y
    g0 = {}
    verdicts = []
    times, comps = [], []
    hom = system.homogeneous() if not system.forcing else system
    for r in partition.regions:
        lo, hi = float(r.lower(np.array(y))), float(r.upper(np.array(y)))
        lo = max(lo, field.domain[0])
        cone_top = partition.T - abs(y) / partition.delta
        hi = min(hi, cone_top, field.domain[1])
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi - lo <= 1e-9:
            continue
        tr = solve_frequency(hom, (lo, hi), np.ones(3) / math.sqrt(3), integrator_spec)
        t, U = tr.times, tr.U
        a, b = field.coefficients(t, np.full(t.shape, y), check=False)
        da = field.derivative("a", "t", t, np.full(t.shape, y))
        db = field.derivative("b", "t", t, np.full(t.shape, y))
        S = build_bezoutian(a, b).S
        dS = np.zeros_like(S)
        dS[:, 0, 2] = dS[:, 2, 0] = -da
        dS[:, 1, 1] = 2 * da
        dS[:, 1, 2] = dS[:, 2, 1] = 3 * db
        dS[:, 2, 2] = 2 * a * da
        rhs = np.einsum("nij,nj->ni", hom.B_of_t(t), U) + hom.F_of_t(t)
        sU = np.real(np.einsum("ni,nij,nj->n", U.conj(), S, U))
        dsU = np.real(np.einsum("ni,nij,nj->n", U.conj(), dS, U)) + 2 * np.real(
            np.einsum("ni,nij,nj->n", U.conj(), S, rhs))
        phi = np.abs(r.phi(t, np.full(t.shape, y)))
        pt = r.phi_t(t, np.full(t.shape, y))
        ok = (phi > 1e-12) & (sU > 1e-14 * max(float(np.max(sU)), 1e-300)) & np.isfinite(pt)
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = dsU / sU + r.exponent_sign * N * pt / phi
        val = float(np.max(rate[ok])) if np.any(ok) else 0.0
        g0[r.name] = max(0.0, val)
        verdicts.append(SubintervalVerdict(r.name, "gamma-damped", (lo, hi), N, g0[r.name], 0.0, 0.0, 0.0, 0.0,
                                           bool(gamma >= g0[r.name]),
                                           f"d/dt(weight e^-gamma t <Lambda V,V>) <= 0 iff gamma >= {g0[r.name]:.4g}"))
        fr = eigen_decompose(build_bezoutian(a, b))
        V = np.einsum("nji,nj->ni", fr.T, U)
        times.append(t)
        comps.append(fr.lam * np.abs(V) ** 2)
    if not times:
        raise InputError(f"no region of the partition meets the slice x = {y}")
    t_all = np.concatenate(times)
    return EnergyTrace(t_all, np.full((t_all.size, 0), np.nan), np.full((t_all.size, 0), np.nan),
                       np.concatenate(comps), gamma, N, {}, verdicts, [r.name for r in partition.regions], g0)


def measure_gamma0(system: FrequencySystem, partition: WeightPartition, N: int,
                   integrator_spec: Optional[dict] = None) -> float:
    """Smallest damping making the weighted energy nonincreasing on every region of the slice."""
    tr = _gamma_monitor(system, partition, N, 0.0, integrator_spec)
    return max(tr.gamma0.values()) if tr.gamma0 else 0.0


# ---------------------------------------------------------------------------
# loss of derivatives

@dataclass
class LossResult:
    N0: Optional[int]
    verdict: str                 # 'bounded' or 'failure'
    xi: list
    log_ratio: list              # log(sup|U|^2 / int|f|^2) per xi (q = 0)
    windows: dict
    stable: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _least_N0(xi, lr, N_max):
    xi = np.asarray(xi, float)
    lr = np.asarray(lr, float)
    if not np.all(np.isfinite(lr)):
        return None
    lx = np.log(xi + 1.0)
    for N in range(N_max + 1):
        v = lr - 2 * N * lx
        if np.max(v) - v[0] <= math.log(2.0) + 1e-12:
            return N
    return None


def measure_derivative_loss(field: CoefficientField, xi_list: Sequence[float],
                            data_spec: Optional[dict] = None, N_max: int = N_MAX, y: float = 0.0,
                            t_span=None, integrator_spec: Optional[dict] = None) -> LossResult:
    """Least N0 such that sup_t |U|^2 <= C <xi>^(2 N0) int |f|^2 with C bounded
    within a factor 2 over ``xi_list`` (zero data, forcing flat at t = t_span[0])."""
    data_spec = dict(data_spec or {})
    kind = data_spec.pop("kind", "resonant")
    xi_list = sorted(float(x) for x in xi_list)
    if len(xi_list) < 2:
        raise InputError("need at least two frequencies")
    if t_span is None:
        t_span = (field.domain[0], field.domain[0] + 0.5 * (field.domain[1] - field.domain[0]))
    t0, t1 = map(float, t_span)
    lrs, reason = [], ""
    for xi in xi_list:
        sysx = make_system(field, xi, y, forcing=kind, t_on=t0, span=t1 - t0, **data_spec)
        try:
            tr = solve_frequency(sysx, (t0, t1), np.zeros(3), integrator_spec)
        except NumericalError as exc:
            lrs.append(float("inf"))
            reason = str(exc)
            continue
        if tr.blown_up:
            lrs.append(float("inf"))
            reason = f"solution exceeded {BLOWUP:g} at xi={xi:g}"
            continue
        nU = np.max(np.sum(np.abs(tr.U) ** 2, axis=1))
        f = sysx.F_of_t(tr.times)[:, 0]
        If = float(np.trapezoid(np.abs(f) ** 2, tr.times))
        lrs.append(math.log(nU) - math.log(If) if nU > 0 and If > 0 else float("nan"))
    N0 = _least_N0(xi_list, lrs, N_max)
    windows = {}
    xs = np.asarray(xi_list)
    if xs[-1] / xs[0] >= 100 * 1.0001:
        lo = xs <= xs[0] * 100 * 1.0001
        hi = xs >= xs[-1] / 100 / 1.0001
        windows = {
            "low": _least_N0(xs[lo], np.asarray(lrs)[lo], N_max),
            "high": _least_N0(xs[hi], np.asarray(lrs)[hi], N_max),
        }
    vals = [v for v in windows.values()]
    stable = N0 is not None and all(v is not None for v in vals) and (
        not vals or max(vals) - min(vals) <= 1)
    if N0 is None and not reason:
        reason = f"no N0 <= {N_max} bounds the ratio within a factor 2"
    return LossResult(N0, "bounded" if N0 is not None else "failure", xi_list, lrs, windows, bool(stable), reason)
