"""Coefficient families for the reduced symbol tau^3 - a tau - b.

A family is a pair of real maps a(t, y), b(t, y) on a rectangle, where y is
either the space variable x or a frequency direction.  Families are built
from sympy expressions so that analytic derivatives come for free; the
finite-difference path is kept for fields given as plain callables.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp

from .errors import ConfigurationError, ConstructionError, InputError
from .grids import Grid

DELTA_TOL = 1e-10
TRIPLE_TOL = 1e-8
EFFECTIVE_TOL = 1e-6
FD_EPS = np.finfo(float).eps

_t, _y = sp.symbols("t y", real=True)
_x = sp.Symbol("x", real=True)

Map = Callable[[np.ndarray, np.ndarray], np.ndarray]


def delta_tolerance(a):
    return DELTA_TOL * (1.0 + np.abs(a) ** 3)


@dataclass(frozen=True)
class CoefficientField:
    """Evaluators for a, b and optional lower-order terms on a (t, y) box."""

    a: Map
    b: Map
    domain: tuple  # (t_lo, t_hi, y_lo, y_hi)
    lower_terms: Optional[tuple] = None
    derivative_mode: str = "analytic"
    fd_step: Optional[float] = None
    derivatives: dict = dc_field(default_factory=dict)
    poly_t: Optional[Callable[[float], dict]] = None
    name: str = "field"
    params: dict = dc_field(default_factory=dict)
    region: Optional[tuple] = None  # certification box near the triple point

    def __post_init__(self):
        if self.derivative_mode not in ("analytic", "finite-difference"):
            raise ConfigurationError(f"unknown derivative mode {self.derivative_mode!r}")

    # evaluation ---------------------------------------------------------
    def contains(self, t, y) -> np.ndarray:
        t_lo, t_hi, y_lo, y_hi = self.domain
        t = np.asarray(t, float)
        y = np.asarray(y, float)
        slack = 1e-12 * (1 + max(abs(t_lo), abs(t_hi), abs(y_lo), abs(y_hi)))
        return (t >= t_lo - slack) & (t <= t_hi + slack) & (y >= y_lo - slack) & (y <= y_hi + slack)

    def _checked(self, t, y):
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        if not np.all(self.contains(t, y)):
            raise InputError(f"{self.name}: evaluation point outside domain {self.domain}")
        return t, y

    def coefficients(self, t, y, check: bool = True):
        """Return (a, b) broadcast to the common shape of t and y."""
        if check:
            t, y = self._checked(t, y)
        else:
            t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        return _full(self.a(t, y), t.shape), _full(self.b(t, y), t.shape)

    def lower(self, t, y) -> np.ndarray:
        """Lower-order entries (b1, b2, b3) stacked on the last axis (complex)."""
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        out = np.zeros(t.shape + (3,), complex)
        if self.lower_terms is not None:
            for k, fk in enumerate(self.lower_terms):
                out[..., k] = _full(fk(t, y), t.shape)
        return out

    def delta(self, t, y, check: bool = True) -> np.ndarray:
        a, b = self.coefficients(t, y, check=check)
        return 4.0 * a**3 - 27.0 * b**2

    # derivatives --------------------------------------------------------
    def derivative(self, which: str, var: str, t, y, order: int = 1) -> np.ndarray:
        """Partial derivative of 'a', 'b' or 'delta' in 't' or 'y'."""
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        if which == "delta" and order == 1:
            a, b = self.coefficients(t, y, check=False)
            da = self.derivative("a", var, t, y)
            db = self.derivative("b", var, t, y)
            return 12.0 * a**2 * da - 54.0 * b * db
        if self.derivative_mode == "analytic":
            key = (which, var, order)
            if key not in self.derivatives:
                raise ConfigurationError(
                    f"{self.name}: analytic derivative d^{order}{which}/d{var}^{order} unavailable")
            return _full(self.derivatives[key](t, y), t.shape)

        def f(tt, yy):
            if which == "delta":
                return self.delta(tt, yy, check=False)
            a, b = self.coefficients(tt, yy, check=False)
            return a if which == "a" else b

        return finite_difference(f, t, y, var, order, self.fd_step)

    def as_finite_difference(self, step: Optional[float] = None) -> "CoefficientField":
        """Same field with derivatives taken by central differences."""
        return _replace(self, derivative_mode="finite-difference", fd_step=step)


def _replace(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


def _full(v, shape):
    return np.broadcast_to(np.asarray(v, dtype=float if not np.iscomplexobj(v) else complex), shape).copy()


def fd_step(x, step: Optional[float], order: int = 1) -> np.ndarray:
    """Near-optimal central-difference step: eps^(1/3) for first, eps^(1/4) for second derivatives."""
    if step is not None:
        return np.full(np.shape(x), float(step))
    p = 1.0 / 3.0 if order == 1 else 0.25
    return FD_EPS**p * np.maximum(np.abs(x), 1e-2)


def finite_difference(f: Map, t, y, var: str, order: int = 1, step: Optional[float] = None):
    """Central difference in t or y, falling back to a one-sided stencil
    where the centered one leaves the region of finite values."""
    t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
    base = t if var == "t" else y
    h = fd_step(base, step, order)

    def ev(s):
        if var == "t":
            return np.asarray(f(t + s * h, y), float)
        return np.asarray(f(t, y + s * h), float)

    with np.errstate(invalid="ignore", divide="ignore"):
        if order == 1:
            fp, fm = ev(1), ev(-1)
            out = (fp - fm) / (2 * h)
            bad = ~np.isfinite(out)
            if np.any(bad):
                f0, f2 = ev(0), ev(2)
                fwd = (-3 * f0 + 4 * fp - f2) / (2 * h)
                out = np.where(bad, fwd, out)
            return out
        if order == 2:
            fp, f0, fm = ev(1), ev(0), ev(-1)
            out = (fp - 2 * f0 + fm) / h**2
            bad = ~np.isfinite(out)
            if np.any(bad):
                f2, f3 = ev(2), ev(3)
                fwd = (2 * f0 - 5 * fp + 4 * f2 - f3) / h**2
                out = np.where(bad, fwd, out)
            return out
    raise InputError("only first and second derivatives are supported")


# ---------------------------------------------------------------------------
# discriminant and hyperbolicity

def discriminant(field: CoefficientField, t, y):
    """Return 4a^3 - 27b^2 at (t, y); raises InputError outside the domain."""
    d = field.delta(t, y)
    return float(d) if np.ndim(d) == 0 else d


def discriminant_ab(a, b):
    return 4.0 * np.asarray(a) ** 3 - 27.0 * np.asarray(b) ** 2


@dataclass
class HyperbolicityReport:
    delta_min: float
    violation_points: list
    triple_points: list
    effective: list

    @property
    def hyperbolic(self) -> bool:
        return not self.violation_points

    def to_dict(self) -> dict:
        return {
            "delta_min": self.delta_min,
            "violation_points": [list(p) for p in self.violation_points],
            "triple_points": [list(p) for p in self.triple_points],
            "effective": self.effective,
        }


def check_hyperbolicity(field: CoefficientField, grid: Grid, max_points: int = 200) -> HyperbolicityReport:
    """Scan Delta on the grid; report violations, triple points and their effectiveness.

    Point lists are capped at ``max_points`` entries (the most negative
    Delta first for violations).
    """
    t, y = grid.mesh()
    a, b = field.coefficients(t, y)
    d = 4 * a**3 - 27 * b**2
    tol = delta_tolerance(a)
    bad = d < -tol
    order = np.argsort(d[bad], kind="stable")[:max_points]
    violations = [(float(tt), float(yy)) for tt, yy in zip(t[bad][order], y[bad][order])]
    triple = (np.abs(a) <= TRIPLE_TOL) & (np.abs(b) <= TRIPLE_TOL**1.5)
    triples = [(float(tt), float(yy)) for tt, yy in zip(t[triple], y[triple])][:max_points]
    effective = []
    for p in triples:
        try:
            effective.append(bool(check_effective_hyperbolicity(field, p)))
        except ConfigurationError:
            effective.append(None)
    return HyperbolicityReport(float(d.min()), violations, triples, effective)


def check_effective_hyperbolicity(field: CoefficientField, point, kind: str = "triple") -> bool:
    """Effective hyperbolicity at a multiple characteristic point.

    kind='triple': |d_t a| > tol.  kind='double': the double-root variant for
    p2 = tau^2 - a xi^2, where a non-critical point (|d_t a| > tol) passes
    directly and a critical one needs |d_t^2 a| > tol.
    """
    t0, y0 = point
    da = float(field.derivative("a", "t", t0, y0))
    if kind == "triple":
        return abs(da) > EFFECTIVE_TOL
    if kind == "double":
        if abs(da) > EFFECTIVE_TOL:
            return True
        return abs(float(field.derivative("a", "t", t0, y0, order=2))) > EFFECTIVE_TOL
    raise InputError(f"unknown kind {kind!r}")


def depress_cubic(c2, c1, c0):
    """Shift tau = s - c2/3 in tau^3 + c2 tau^2 + c1 tau + c0.

    Returns (a, b) with the result written as s^3 - a s - b.
    """
    a = c2**2 / 3.0 - c1
    b = -(2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0)
    return a, b


# ---------------------------------------------------------------------------
# construction from expressions

def _parse(expr) -> sp.Expr:
    if isinstance(expr, sp.Expr):
        e = expr
    else:
        try:
            e = sp.sympify(str(expr), locals={"t": _t, "y": _y, "x": _x})
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigurationError(f"cannot parse coefficient expression {expr!r}") from exc
    e = e.subs(_x, _y)
    extra = e.free_symbols - {_t, _y}
    if extra:
        raise ConfigurationError(f"expression {expr!r} uses unknown symbols {sorted(map(str, extra))}")
    return e


def _lambdify(e: sp.Expr) -> Map:
    f = sp.lambdify((_t, _y), e, modules="numpy")
    return lambda t, y: f(np.asarray(t, float), np.asarray(y, float))


def _poly_coeffs(e: sp.Expr, max_degree: int):
    """Coefficient maps y -> highest-first coefficients if e is polynomial in t."""
    try:
        p = sp.Poly(sp.expand(e), _t)
    except sp.PolynomialError:
        return None
    if p.degree() > max_degree or any(_t in c.free_symbols for c in p.all_coeffs()):
        return None
    fs = [sp.lambdify(_y, c, modules="numpy") for c in p.all_coeffs()]
    return lambda y: np.array([float(f(float(y))) for f in fs])


def field_from_expressions(a, b=0, domain=(0.0, 1.0, -1.0, 1.0), name="field", lower=None,
                           region=None, params=None, max_degree: int = 12,
                           delta_poly: Optional[Callable] = None) -> CoefficientField:
    """Build a CoefficientField from sympy-parsable expressions in t and y (or x)."""
    ea, eb = _parse(a), _parse(b)
    derivs = {}
    for nm, e in (("a", ea), ("b", eb)):
        derivs[(nm, "t", 1)] = _lambdify(sp.diff(e, _t))
        derivs[(nm, "y", 1)] = _lambdify(sp.diff(e, _y))
        derivs[(nm, "t", 2)] = _lambdify(sp.diff(e, _t, 2))
    lower_maps = None
    if lower is not None:
        if len(lower) != 3:
            raise ConfigurationError("lower_terms needs exactly three entries b1, b2, b3")
        lower_maps = tuple(_lambdify_complex(_parse_complex(v)) for v in lower)

    pa = _poly_coeffs(ea, max_degree)
    pb = _poly_coeffs(eb, max_degree)
    pd = delta_poly
    if pd is None:
        pd = _poly_coeffs(sp.expand(4 * ea**3 - 27 * eb**2), 3 * max_degree)
    poly_t = None
    if pd is not None:
        def poly_t(y, pa=pa, pb=pb, pd=pd):
            return {
                "a": None if pa is None else pa(y),
                "b": None if pb is None else pb(y),
                "delta": pd(y),
            }

    p = dict(params or {})
    p.setdefault("a", str(ea))
    p.setdefault("b", str(eb))
    return CoefficientField(
        a=_lambdify(ea), b=_lambdify(eb), domain=tuple(float(v) for v in domain),
        lower_terms=lower_maps, derivatives=derivs, poly_t=poly_t, name=name,
        params=p, region=region,
    )


def _parse_complex(v) -> sp.Expr:
    if isinstance(v, (list, tuple)):
        return _parse(v[0]) + sp.I * _parse(v[1])
    if isinstance(v, complex):
        return sp.Float(v.real) + sp.I * sp.Float(v.imag)
    return _parse(v)


def _lambdify_complex(e: sp.Expr) -> Map:
    f = sp.lambdify((_t, _y), e, modules="numpy")
    return lambda t, y: np.asarray(f(np.asarray(t, float), np.asarray(y, float)), complex)


# ---------------------------------------------------------------------------
# named builders

def tricomi(l: int = 1, c: float = 0.0, domain=(0.0, 1.0, -1.0, 1.0)) -> CoefficientField:
    """Symbol of (D_t^2 - t^l D_x^2)(D_t + c D_x) in the direction xi = +1.

    For c != 0 the tau^2 coefficient is removed by completing the cube; the
    shift c/3 is recorded in params.
    """
    if int(l) != l or l < 1:
        raise ConfigurationError("tricomi exponent l must be a positive integer")
    l = int(l)
    tl = _t**l
    if c == 0:
        a, b = tl, sp.Integer(0)
    else:
        c = sp.nsimplify(c)
        a, b = depress_cubic(c, -tl, -c * tl)
        a, b = sp.expand(a), sp.expand(b)
    return field_from_expressions(a, b, domain, name=f"tricomi(l={l},c={float(c):g})",
                                  region=(0.0, 0.05, -0.1, 0.1),
                                  params={"builder": "tricomi", "l": l, "c": float(c), "shift": float(c) / 3})


def prescribed_delta(a, roots: Sequence[complex], kappa: Optional[float] = None,
                     domain=(0.0, 1.0, -1.0, 1.0), name: Optional[str] = None,
                     margin: float = 0.5, region=None) -> CoefficientField:
    """Field with Delta = kappa * prod(t - nu_k) and b = +sqrt((4a^3 - Delta)/27).

    When kappa is omitted it is set to ``margin`` times the largest value
    keeping 0 <= Delta <= 4a^3 on a probe grid of the domain.
    """
    roots = [complex(r) for r in roots]
    if len(roots) != 3:
        raise ConstructionError("prescribed_delta needs exactly three roots")
    ea = _parse(a)
    coeffs = np.real_if_close(np.poly(roots), tol=1e6).astype(complex)
    if np.max(np.abs(coeffs.imag)) > 1e-12:
        raise ConstructionError("roots must be closed under conjugation")
    coeffs = coeffs.real
    dbar = sum(sp.Float(cf) * _t ** (3 - k) for k, cf in enumerate(coeffs))

    fa = _lambdify(ea)
    tt = np.linspace(domain[0], domain[1], 2001)
    yy = np.linspace(domain[2], domain[3], 21)
    T, Y = np.meshgrid(tt, yy, indexing="ij")
    av = np.broadcast_to(fa(T, Y), T.shape)
    dv = np.polyval(coeffs, T)
    if np.any(dv < -1e-14 * (1 + np.abs(dv).max())):
        raise ConstructionError("prescribed Delta is negative inside the domain (not hyperbolic)")
    pos = dv > 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pos, 4 * av**3 / np.where(pos, dv, 1.0), np.inf)
    kmax = float(np.min(ratio))
    if not kmax > 0:
        raise ConstructionError("Delta > 4a^3 somewhere for every admissible kappa")
    if kappa is None:
        kappa = margin * kmax
    elif kappa > kmax * (1 + 1e-12) or kappa <= 0:
        raise ConstructionError(f"kappa={kappa} outside admissible range (0, {kmax:.6g}]")
    kappa_s = sp.nsimplify(kappa) if float(kappa) == round(float(kappa), 12) else sp.Float(kappa)
    inner = sp.expand(4 * ea**3 - kappa_s * dbar)
    eb = sp.sqrt(inner / 27)
    kc = float(kappa) * coeffs
    return field_from_expressions(
        ea, eb, domain, name=name or "prescribed_delta", region=region,
        params={"builder": "prescribed_delta", "roots": [[r.real, r.imag] for r in roots],
                "kappa": float(kappa)},
        delta_poly=lambda y: kc.copy(),
    )


def theta_family(theta: float, domain=(0.0, 1.0, -1.0, 1.0)) -> CoefficientField:
    """a = t with Delta = 4(1 - theta^2) t^3, i.e. b = theta * 2/(3 sqrt 3) * t^(3/2)."""
    if not 0 <= theta < 1:
        raise ConstructionError("theta must lie in [0, 1)")
    th = sp.nsimplify(theta)
    f = prescribed_delta(_t, [0, 0, 0], kappa=4 * (1 - th), domain=domain,
                         name=f"theta({float(theta):g})", region=(0.0, 0.05, -0.1, 0.1))
    # same field, but with the closed form for b so that t near 0 stays exact
    eb = th * 2 / (3 * sp.sqrt(3)) * _t ** sp.Rational(3, 2)
    g = field_from_expressions(_t, eb, domain, name=f.name, region=f.region,
                               params={**f.params, "theta": float(theta), "kappa": float(4 * (1 - th**2))},
                               delta_poly=lambda y, k=float(4 * (1 - th**2)): np.array([k, 0.0, 0.0, 0.0]))
    return g


def general_triple(alpha="t-x", theta: float = 0.0, domain=(-0.5, 0.5, -0.5, 0.5)) -> CoefficientField:
    """a = alpha^2 with b = theta * 2/(3 sqrt 3) |alpha|^3, so Delta = 4(1-theta^2) a^3."""
    ea = _parse(alpha)
    a = sp.expand(ea**2)
    th = sp.nsimplify(theta)
    b = th * 2 / (3 * sp.sqrt(3)) * sp.Abs(ea) ** 3 if theta else sp.Integer(0)
    return field_from_expressions(a, b, domain, name=f"general_triple({ea})",
                                  region=(0.0, 0.05, -0.05, 0.05),
                                  params={"builder": "general_triple", "alpha": str(ea), "theta": float(theta)})


def constant(a: float = 1.0, b: float = 0.0, domain=(0.0, 1.0, -1.0, 1.0)) -> CoefficientField:
    return field_from_expressions(sp.nsimplify(a), sp.nsimplify(b), domain,
                                  name=f"constant(a={a:g},b={b:g})",
                                  params={"builder": "constant"})


COMPLEX_NU_ROOTS = (-0.05, 0.1 + 0.05j, 0.1 - 0.05j)
THREE_REAL_ROOTS = (-0.1, -0.2, -0.3)

BUILTIN_FAMILIES = {
    "tricomi": {"builder": "tricomi", "l": 1, "c": 0},
    "t_plus_y2": {"builder": "expression", "a": "t + y**2", "b": "0",
                  "region": [0.0, 0.05, -0.2, 0.2]},
    "theta_0": {"builder": "theta", "theta": 0.0},
    "theta_0.5": {"builder": "theta", "theta": 0.5},
    "theta_0.9": {"builder": "theta", "theta": 0.9},
    "complex_nu": {"builder": "prescribed_delta", "a": "t + 0.1",
                   "roots": [[-0.05, 0.0], [0.1, 0.05], [0.1, -0.05]],
                   "region": [0.0, 0.5, -0.1, 0.1]},
    "three_real": {"builder": "prescribed_delta", "a": "t + 0.2",
                   "roots": [[-0.1, 0.0], [-0.2, 0.0], [-0.3, 0.0]],
                   "region": [0.0, 0.5, -0.1, 0.1]},
    "general_triple": {"builder": "general_triple", "alpha": "t-x",
                       "region": [0.0, 0.05, -0.0503, 0.0497]},
}


def make_family(spec) -> CoefficientField:
    """Build a field from a spec dict, a builtin name, or a short string.

    Accepted strings: a builtin name (``"tricomi"``), ``"a=<expr>[,b=<expr>]"``,
    ``"tricomi(l,c)"`` and ``"general_triple(<alpha>)"``.
    """
    if isinstance(spec, str):
        spec = parse_family_string(spec)
    if not isinstance(spec, dict) or "builder" not in spec:
        raise ConfigurationError(f"family spec must name a builder: {spec!r}")
    s = dict(spec)
    kind = s.pop("builder")
    region = s.pop("region", None)
    domain = tuple(s.pop("domain")) if "domain" in s else None
    kw = {} if domain is None else {"domain": domain}
    lower = s.pop("lower_terms", None)
    mode = s.pop("derivative_mode", "analytic")
    try:
        if kind == "tricomi":
            f = tricomi(int(s.pop("l", 1)), float(s.pop("c", 0.0)), **kw)
        elif kind == "expression":
            f = field_from_expressions(s.pop("a"), s.pop("b", 0), name=s.pop("name", "expression"),
                                       **kw)
        elif kind == "prescribed_delta":
            roots = [complex(*r) if isinstance(r, (list, tuple)) else complex(r) for r in s.pop("roots")]
            f = prescribed_delta(s.pop("a"), roots, s.pop("kappa", None), **kw)
        elif kind == "theta":
            f = theta_family(float(s.pop("theta")), **kw)
        elif kind == "general_triple":
            f = general_triple(s.pop("alpha", "t-x"), float(s.pop("theta", 0.0)), **kw)
        elif kind == "constant":
            f = constant(float(s.pop("a", 1.0)), float(s.pop("b", 0.0)), **kw)
        else:
            raise ConfigurationError(f"unknown builder {kind!r}")
    except KeyError as exc:
        raise ConfigurationError(f"builder {kind!r} is missing parameter {exc}") from exc
    s.pop("name", None)
    if s:
        raise ConfigurationError(f"unused family parameters {sorted(s)}")
    changes = {}
    if region is not None:
        changes["region"] = tuple(float(v) for v in region)
    if lower is not None:
        changes["lower_terms"] = tuple(_lambdify_complex(_parse_complex(v)) for v in lower)
    if mode != "analytic":
        changes["derivative_mode"] = mode
    if changes:
        f = _replace(f, **changes)
    return f


def parse_family_string(text: str) -> dict:
    text = text.strip()
    if text in BUILTIN_FAMILIES:
        return dict(BUILTIN_FAMILIES[text])
    if text.startswith("a=") or text.startswith("b="):
        parts = {}
        for chunk in _split_top(text):
            k, _, v = chunk.partition("=")
            parts[k.strip()] = v.strip()
        return {"builder": "expression", "a": parts.get("a", "0"), "b": parts.get("b", "0"),
                "name": text}
    if text.startswith("tricomi(") and text.endswith(")"):
        args = [float(v) for v in text[8:-1].split(",") if v.strip()]
        return {"builder": "tricomi", "l": int(args[0]) if args else 1, "c": args[1] if len(args) > 1 else 0.0}
    if text.startswith("general_triple(") and text.endswith(")"):
        return {"builder": "general_triple", "alpha": text[len("general_triple("):-1]}
    raise ConfigurationError(f"unrecognized family {text!r}")


def _split_top(text: str):
    """Split on commas that are not inside parentheses."""
    depth, cur, out = 0, [], []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return out


def load_family_config(path) -> dict:
    """Read a YAML family/run configuration file."""
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    return data


# ---------------------------------------------------------------------------
# double-root fields  p = (tau - b xi)(tau^2 - a xi^2)

@dataclass(frozen=True)
class DoubleField:
    """Factored symbol p1 p2 with p1 = tau - b xi and p2 = tau^2 - a xi^2."""

    a: Map
    b: Map
    domain: tuple
    derivatives: dict = dc_field(default_factory=dict)
    name: str = "double"

    def coefficients(self, t, y):
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        return _full(self.a(t, y), t.shape), _full(self.b(t, y), t.shape)

    def derivative(self, which, var, t, y, order=1):
        key = (which, var, order)
        t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
        if key not in self.derivatives:
            raise ConfigurationError(f"{self.name}: derivative {key} unavailable")
        return _full(self.derivatives[key](t, y), t.shape)


def double_family(a="t**2", b="1", domain=(0.0, 1.0, -1.0, 1.0)) -> DoubleField:
    ea, eb = _parse(a), _parse(b)
    derivs = {}
    for nm, e in (("a", ea), ("b", eb)):
        derivs[(nm, "t", 1)] = _lambdify(sp.diff(e, _t))
        derivs[(nm, "y", 1)] = _lambdify(sp.diff(e, _y))
        derivs[(nm, "t", 2)] = _lambdify(sp.diff(e, _t, 2))
    return DoubleField(_lambdify(ea), _lambdify(eb), tuple(domain), derivs, name=f"double(a={ea},b={eb})")
