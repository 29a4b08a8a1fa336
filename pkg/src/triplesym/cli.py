"""Command-line front end: certify, solve-t, solve-x, sweep.

Exit codes: 0 pass, 1 certification failure, 2 configuration error,
3 numerical failure.  All numbers go to CSV/JSON under --out; nothing is plotted.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import AnalysisError, ConfigurationError, InputError, NumericalError, TripleSymError
from .reports import CONSTANT_HEADER, constants_rows, dumps, write_csv, write_energy_trace, write_json, write_verdicts

log = logging.getLogger("triplesym")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str
    family: object = "tricomi"
    options: dict = field(default_factory=dict)
    out: str = "triplesym-out"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def threads() -> int:
    try:
        n = int(os.environ.get("TRIPLESYM_THREADS", "1"))
    except ValueError as exc:
        raise ConfigurationError("TRIPLESYM_THREADS must be an integer") from exc
    return max(1, n)


# ---------------------------------------------------------------------------
# family resolution

def family_spec(cfg: RunConfig):
    fam = cfg.family
    opts = cfg.options
    if isinstance(fam, dict):
        return fam
    name = str(fam).strip().replace("general-triple", "general_triple")
    if name == "tricomi" and ("l" in opts or "c" in opts):
        return {"builder": "tricomi", "l": int(opts.get("l") or 1), "c": float(opts.get("c") or 0.0)}
    if name == "general_triple" and opts.get("alpha"):
        from .symbols import BUILTIN_FAMILIES
        spec = dict(BUILTIN_FAMILIES["general_triple"])
        spec["alpha"] = opts["alpha"]
        return spec
    return name


def resolve_field(cfg: RunConfig):
    from .symbols import make_family
    return make_family(family_spec(cfg))


def parse_xi_range(text) -> list:
    """'16..16384' gives the powers of two in range; '16,64' is a plain list."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text)
    if ".." in text:
        lo, hi = (float(v) for v in text.split(".."))
        if not (1 <= lo < hi):
            raise ConfigurationError(f"bad frequency range {text!r}")
        k0, k1 = int(np.ceil(np.log2(lo) - 1e-12)), int(np.floor(np.log2(hi) + 1e-12))
        return [float(2.0**k) for k in range(k0, k1 + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


# ---------------------------------------------------------------------------
# commands

def _cert_region(field):
    if field.region is not None:
        return field.region
    t0, t1, y0, y1 = field.domain
    return (max(t0, 0.0), min(t1, max(t0, 0.0) + 0.05), y0, y1)


def cmd_certify(cfg: RunConfig, out: Path) -> int:
    from .bezoutian import certify_matrix_orders, certify_skon_bounds
    from .calculus import certify_coefficient_derivatives, certify_eigenvalue_derivatives
    from .grids import Grid
    from .symbols import check_hyperbolicity
    from .weights import (build_partition, certify_general_triple_conditions, certify_key_proposition,
                          default_delta, extract_root_profile)

    field = resolve_field(cfg)
    n = int(cfg.options.get("n") or 100)
    t0, t1, y0, y1 = field.domain
    report = {"family": field.name, "steps": {}}
    steps = report["steps"]
    files = []

    hyp = check_hyperbolicity(field, Grid(t0, t1, 2 * n + 1, y0, y1, 41))
    steps["hyperbolicity"] = {"passed": hyp.hyperbolic, **hyp.to_dict()}
    not_eff = [p for p, e in zip(hyp.triple_points, hyp.effective) if e is False]
    general = field.name.startswith("general_triple")
    steps["effective_hyperbolicity"] = {
        # the general-triple family is non-effective by design; its own conditions are checked instead
        "passed": general or not not_eff,
        "required": not general,
        "witness": None if not not_eff else {"point": list(not_eff[0]), "message": "not effectively hyperbolic"},
    }
    if general and hyp.hyperbolic:
        from .weights import build_alpha_partition, certify_general_weight_conditions, cone_grid
        gc = certify_general_triple_conditions(field, cone_grid(1.0, 0.05))
        steps["general_conditions"] = gc.summary()
        part = build_alpha_partition(field, 1.0, 0.05)
        steps["weight_conditions"] = certify_general_weight_conditions(field, part).summary()
    elif hyp.hyperbolic and not not_eff:
        rt0, rt1, ry0, ry1 = _cert_region(field)
        grid = Grid(rt0, rt1, n, ry0, ry1, n, open_left=rt0 <= 0.0)
        runs = {
            "eigenvalue_bounds": lambda: certify_skon_bounds(field, grid),
            "matrix_orders": lambda: certify_matrix_orders(field, Grid(rt0, rt1, max(n // 2, 10), ry0, ry1,
                                                                       max(n // 4, 5), open_left=True)),
        }
        for name, fn in runs.items():
            try:
                r = fn()
                steps[name] = r.summary()
            except (AnalysisError, InputError) as exc:
                steps[name] = {"passed": False, "error": str(exc)}
        measured = []
        try:
            measured = certify_coefficient_derivatives(field, grid) + certify_eigenvalue_derivatives(field, grid)
            steps["derivative_bounds"] = {"passed": all(m.stable for m in measured),
                                          "constants": [m.to_dict() for m in measured]}
        except (AnalysisError, InputError) as exc:
            steps["derivative_bounds"] = {"passed": False, "error": str(exc)}
        try:
            prof = extract_root_profile(field, 0.5 * (ry0 + ry1))
            part = build_partition(prof, default_delta(prof.psi, rt1))
            kp = certify_key_proposition(field, part, Grid(rt0, part.breakpoints[-1], n, ry0, ry1, max(n // 4, 5),
                                                           open_left=True))
            steps["weight_proposition"] = {"profile": prof.to_dict(), **kp.summary()}
        except (AnalysisError, InputError) as exc:
            steps["weight_proposition"] = {"passed": False, "error": str(exc)}
        if measured:
            files.append(write_csv(out / "constants.csv", CONSTANT_HEADER, constants_rows(measured)))
    else:
        steps["skipped"] = "certifications need a hyperbolic, effectively hyperbolic field"
    passed = all(bool(s.get("passed", True)) for s in steps.values() if isinstance(s, dict))
    report["passed"] = passed
    files.append(write_json(out / "certify.json", report))
    for name, s in steps.items():
        if isinstance(s, dict) and not s.get("passed", True):
            log.warning("certification step %s failed", name)
    return (EXIT_PASS if passed else EXIT_FAIL), files


def cmd_solve_t(cfg: RunConfig, out: Path):
    from .energy_t import make_system, monitor_weighted_energy
    from .weights import build_partition, default_delta, extract_root_profile

    field = resolve_field(cfg)
    o = cfg.options
    xis = parse_xi_range(o.get("xi") or "64")
    N = int(o.get("N") or 8)
    y = float(o.get("y") or 0.0)
    prof = extract_root_profile(field, y)
    delta = float(o["delta"]) if o.get("delta") else default_delta(prof.psi, field.domain[1])
    part = build_partition(prof, delta)

    def one(xi):
        system = make_system(field, xi, y, forcing=o.get("forcing") or "resonant")
        return xi, monitor_weighted_energy(system, part, N)

    with ThreadPoolExecutor(max_workers=threads()) as pool:
        traces = list(pool.map(one, xis))
    files, summary = [], {"family": field.name, "N": N, "y": y, "partition": part.to_dict(),
                          "profile": prof.to_dict(), "runs": []}
    for xi, tr in traces:
        tag = f"xi{xi:g}"
        files.append(write_energy_trace(out / f"trace_{tag}.csv", tr))
        files.append(write_verdicts(out / f"verdicts_{tag}.csv", tr.verdicts))
        summary["runs"].append({"xi": xi, **tr.summary()})
    summary["passed"] = all(tr.passed for _, tr in traces)
    files.append(write_json(out / "solve_t.json", summary))
    return (EXIT_PASS if summary["passed"] else EXIT_FAIL), files


def cmd_solve_x(cfg: RunConfig, out: Path):
    from . import solver_x as sx
    from .weights import (build_alpha_partition, build_partition, certify_general_triple_conditions,
                          certify_general_weight_conditions, cone_grid, extract_root_profile)

    field = resolve_field(cfg)
    o = cfg.options
    nx = int(o.get("nx") or 401)
    Ns = [int(v) for v in str(o.get("N") or "4").split(",")]
    general = field.name.startswith("general_triple")
    T = float(o.get("T") or (0.05 if general else 0.25))
    x_half = 0.5 * (field.domain[3] - field.domain[2])
    tau = sx.field_tau_max(field, (0.0, T), (field.domain[2], field.domain[3]))
    delta = float(o["delta"]) if o.get("delta") else max(1.0, 1.1 * tau / sx.CFL)
    if delta * T > x_half + 1e-12:
        raise InputError(f"cone base {delta * T:g} leaves the coefficient domain; lower T or delta")
    cone = sx.ConeDomain(delta, T)
    summary = {"family": field.name, "cone": {"delta": delta, "T": T}, "tau_max": tau, "nx": nx}
    files = []
    if general:
        part = build_alpha_partition(field, delta, T)
        wc = certify_general_weight_conditions(field, part)
        gc = certify_general_triple_conditions(field, cone_grid(delta, T))
        summary["weight_conditions"] = wc.summary()
        summary["general_conditions"] = gc.summary()
        res = sx.solve_cone(field, cone, None, sx.source_bump(0.0, 0.2 * T, sx._default_profile(cone)), nx)
        summary["stokes_residual_unweighted"] = sx.stokes_identity_residual(res)
        passed = wc.passed and gc.passed
        results = [res]
    else:
        prof = extract_root_profile(field, 0.0)
        part = build_partition(prof.psi, delta, T=T, geometry="cone")
        results = sx.solve_for_partition(field, cone, part, nx, width=0.2)
        verdicts = sx.energy_inequality_x(results, part, Ns)
        files.append(write_verdicts(out / "energy_x.csv", verdicts))
        summary["profile"] = prof.to_dict()
        summary["verdicts"] = [v.to_dict() for v in verdicts]
        passed = all(v.passed for v in verdicts)
    ok_l, vl = sx.verify_boundary_positivity(results[0], "left")
    ok_r, vr = sx.verify_boundary_positivity(results[0], "right")
    summary["boundary_forms"] = {"left": vl, "right": vr, "passed": ok_l and ok_r}
    passed = passed and ok_l and ok_r
    seen = set()
    for k, res in enumerate(results):
        if id(res) in seen:
            continue
        seen.add(id(res))
        path = out / f"field_{k}.bin"
        files += [path, sx.write_snapshot(res, path)]
    summary["passed"] = bool(passed)
    files.append(write_json(out / "solve_x.json", summary))
    return (EXIT_PASS if passed else EXIT_FAIL), files


def cmd_sweep(cfg: RunConfig, out: Path):
    from .energy_t import measure_derivative_loss

    field = resolve_field(cfg)
    o = cfg.options
    xis = parse_xi_range(o.get("xi") or "16..16384")
    res = measure_derivative_loss(field, xis, N_max=int(o.get("N_max") or 40), y=float(o.get("y") or 0.0))
    files = [
        write_csv(out / "loss.csv", ["xi", "log_ratio"], zip(res.xi, res.log_ratio)),
        write_json(out / "sweep.json", {"family": field.name, **res.to_dict()}),
    ]
    ok = res.verdict == "bounded" and res.stable
    return (EXIT_PASS if ok else EXIT_FAIL), files


COMMANDS = {"certify": cmd_certify, "solve-t": cmd_solve_t, "solve-x": cmd_solve_x, "sweep": cmd_sweep}


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="triplesym", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory (default triplesym-out)")
    common.add_argument("--seed", type=int)
    common.add_argument("--family", help="builtin name, 'a=<expr>,b=<expr>', or tricomi(l,c)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("certify", parents=[common])
    c.add_argument("--l", type=int)
    c.add_argument("--c", type=float)
    c.add_argument("--n", type=int, help="grid points per axis on the certification region")
    s = sub.add_parser("solve-t", parents=[common])
    s.add_argument("--l", type=int)
    s.add_argument("--c", type=float)
    s.add_argument("--xi", help="frequency, list, or range lo..hi")
    s.add_argument("--N", type=int)
    s.add_argument("--y", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--forcing", choices=["resonant", "smooth"])
    x = sub.add_parser("solve-x", parents=[common])
    x.add_argument("--l", type=int)
    x.add_argument("--c", type=float)
    x.add_argument("--alpha")
    x.add_argument("--nx", type=int)
    x.add_argument("--T", type=float)
    x.add_argument("--delta", type=float)
    x.add_argument("--N", help="comma-separated weight exponents")
    w = sub.add_parser("sweep", parents=[common])
    w.add_argument("--l", type=int)
    w.add_argument("--c", type=float)
    w.add_argument("--xi", help="range lo..hi (powers of two) or list")
    w.add_argument("--N-max", dest="N_max", type=int)
    w.add_argument("--y", type=float)
    return p


def config_from_args(args) -> RunConfig:
    base = {}
    if args.config:
        from .symbols import load_family_config
        base = load_family_config(args.config)
    opts = dict(base.get("options", {}) or {})
    skip = {"config", "out", "seed", "family", "command", "verbose"}
    for k, v in vars(args).items():
        if k not in skip and v is not None:
            opts[k] = v
    family = args.family or base.get("family") or "tricomi"
    return RunConfig(args.command, family, opts, args.out or base.get("out", "triplesym-out"),
                     args.seed if args.seed is not None else int(base.get("seed", 0)))


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        np.random.seed(cfg.seed)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        code, files = COMMANDS[cfg.command](cfg, out)
    except (ConfigurationError, InputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except AnalysisError as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except TripleSymError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "exit_code": code,
        "files": {Path(f).name: _sha256(f) for f in sorted(files, key=lambda p: Path(p).name)},
    }
    write_json(out / "manifest.json", manifest)
    print(dumps({"command": cfg.command, "exit_code": code, "out": str(out)}), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
