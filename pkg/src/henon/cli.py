"""Command-line front end.

Every subcommand writes CSV/JSON files into ``--out`` and exits with

    0 success, 2 degenerate (forbidden) exponent, 3 no convergence,
    4 invalid configuration, 5 solver failure.

Options may also come from a key=value file given by ``--config``; flags
given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import logging
import math
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from . import emit
from .errors import ForbiddenExponentError, HenonError, InvalidConfigError

log = logging.getLogger("henon")

COMMANDS = ("radial", "nu", "pk", "check-degeneracy", "perturbed", "exterior", "pohozaev",
            "certify-nonexistence")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors; exit code 2 is reserved
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(InvalidConfigError.exit_code)


# option name -> (type, default, help); None default means "required by the subcommand"
OPTIONS = {
    "N": (int, None, "space dimension (>= 3)"),
    "alpha": (float, None, "weight exponent alpha"),
    "p": (float, None, "nonlinearity exponent p"),
    "tol": (float, 1e-10, "tolerance (integrator for radial; fixed-point increments for perturbed)"),
    "rnodes": (int, None, "radial grid nodes (radial: 2001; perturbed: 1024)"),
    "p_min": (float, None, "sweep start (default (N+2)/(N-2))"),
    "p_max": (float, None, "sweep end (default p_alpha(N) - 1e-3)"),
    "samples": (int, 400, "number of sweep samples"),
    "T_max": (float, 40.0, "log-radius truncation for nu(p)"),
    "nodes": (int, 4000, "intervals of the log-radius discretization"),
    "direct_nodes": (int, 2000, "elements of the direct discretization"),
    "kmax": (int, 32, "Legendre truncation degree"),
    "t": (float, None, "perturbation scale"),
    "map": (str, "bump(0,0,1)", "dilation | translation(e1,e2,e3) | bump(c0,...,c4)"),
    "maxiter": (int, 200, "maximum fixed-point iterations"),
    "s_max": (float, 1000.0, "outer radius of the exterior grid"),
    "shift": (float, None, "shift magnitude |x_m| (inf allowed)"),
    "workers": (int, None, "worker processes for sweeps (default $HENON_WORKERS or 1)"),
    "seed": (int, 0, "seed for randomized checks"),
    "out": (str, ".", "output directory"),
}

REQUIRED = {
    "radial": ("N", "alpha", "p"),
    "nu": ("N", "alpha"),
    "pk": ("N", "alpha"),
    "check-degeneracy": ("N", "alpha", "p"),
    "perturbed": ("N", "alpha", "p", "t"),
    "exterior": ("N", "p"),
    "pohozaev": ("N", "alpha", "p"),
    "certify-nonexistence": ("N", "alpha", "p", "shift"),
}

USED = {
    "radial": ("N", "alpha", "p", "tol", "rnodes"),
    "nu": ("N", "alpha", "p_min", "p_max", "samples", "T_max", "nodes", "direct_nodes", "workers"),
    "pk": ("N", "alpha", "p_min", "p_max", "samples", "T_max", "nodes", "direct_nodes", "kmax",
           "workers"),
    "check-degeneracy": ("N", "alpha", "p"),
    "perturbed": ("N", "alpha", "p", "t", "map", "kmax", "rnodes", "maxiter", "tol"),
    "exterior": ("N", "alpha", "p", "s_max", "t", "map", "kmax", "rnodes", "maxiter", "tol"),
    "pohozaev": ("N", "alpha", "p"),
    "certify-nonexistence": ("N", "alpha", "p", "shift", "t", "map"),
}

COMMON = ("out", "seed")


def _flag(name):
    return "--" + name.replace("_", "-")


def build_parser():
    parser = _Parser(prog="henon", description=__doc__.splitlines()[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, help=f"{cmd} pipeline")
        sp.add_argument("--config", help="key=value file; flags override its entries")
        for name in USED[cmd] + COMMON:
            typ, default, text = OPTIONS[name]
            extra = " (required)" if name in REQUIRED[cmd] else f" (default {default})" if default is not None else ""
            sp.add_argument(_flag(name), dest=name, type=str, default=None, help=text + extra)
    return parser


def read_config(path):
    """Parse a key=value file; blank lines and '#' comments are ignored."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None


def _convert(name, raw):
    typ = OPTIONS[name][0]
    try:
        if typ is int:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if typ is float:
            return float(raw)
    except (TypeError, ValueError):
        raise InvalidConfigError(f"{name}: cannot parse {raw!r} as {typ.__name__}") from None
    return raw


def resolve_config(args) -> RunConfig:
    cmd = args.command
    file_values = read_config(args.config) if args.config else {}
    allowed = set(USED[cmd] + COMMON)
    unknown = set(file_values) - allowed
    if unknown:
        raise InvalidConfigError(f"config keys not used by '{cmd}': {', '.join(sorted(unknown))}")
    values = {}
    for name in USED[cmd] + COMMON:
        raw = getattr(args, name)
        if raw is None:
            raw = file_values.get(name)
        if raw is None:
            if name in REQUIRED[cmd]:
                raise InvalidConfigError(f"'{cmd}' needs {_flag(name)}")
            values[name] = OPTIONS[name][1]
        else:
            values[name] = _convert(name, raw)
    if "workers" in values and values["workers"] is None:
        from .spectrum import default_workers

        values["workers"] = default_workers()
    return RunConfig(cmd, values)


_MAP_RE = re.compile(r"^\s*(dilation|translation|bump)\s*(?:\((.*)\))?\s*$")


def parse_map(text, t):
    from .domain_map import DomainMapSpec

    m = _MAP_RE.match(text)
    if not m:
        raise InvalidConfigError(f"cannot parse map {text!r}")
    family, body = m.group(1), m.group(2)
    nums = ()
    if body and body.strip():
        try:
            nums = tuple(float(s) for s in body.split(","))
        except ValueError:
            raise InvalidConfigError(f"bad map parameters in {text!r}") from None
    if family == "dilation":
        if nums:
            raise InvalidConfigError("dilation takes no parameters")
        return DomainMapSpec("dilation", t)
    if family == "translation":
        e = nums or (0.0, 0.0, 1.0)
        return DomainMapSpec("translation", t, direction=e)
    return DomainMapSpec("bump", t, coeffs=nums or (0.0, 0.0, 1.0))


def _params(cfg):
    from .problem import ProblemParams

    return ProblemParams(cfg.N, cfg.alpha, cfg.p)


def _validate(cfg):
    """Cheap precondition checks before any computation."""
    from .problem import ProblemParams

    if cfg.N is not None and cfg.alpha is not None:
        probe = ProblemParams(cfg.N, cfg.alpha, cfg.p if cfg.values.get("p") else 2.0)
        probe.require_pipeline_range()
    for name in ("samples", "nodes", "direct_nodes", "kmax", "maxiter", "rnodes"):
        val = cfg.values.get(name)
        if val is not None and val <= 0:
            raise InvalidConfigError(f"{name} must be positive")
    if cfg.values.get("tol") is not None and not cfg.tol > 0:
        raise InvalidConfigError("tol must be positive")
    if cfg.values.get("t") is not None and not cfg.t >= 0:
        raise InvalidConfigError("t must be >= 0")


# --------------------------------------------------------------------------
# subcommands


def cmd_radial(cfg):
    from .radial import ode_residual, solve_henon_radial

    params = _params(cfg)
    vp = solve_henon_radial(params, tol=cfg.tol, n_grid=cfg.rnodes or 2001)
    emit.write_csv(cfg.out, "radial.csv", ["r", "u", "du"], zip(vp.grid, vp.values, vp.dvalues))
    summary = {"N": params.N, "alpha": params.alpha, "p": params.p, "N_alpha": params.N_alpha,
               "R0": vp.first_zero_R0, "central_value": vp.central_value,
               "residual_sup": ode_residual(vp)}
    emit.write_json(cfg.out, "radial.json", summary)
    return summary


def _sweep(cfg):
    from .problem import ProblemParams, critical_exponent
    from .spectrum import SpectralOptions, sweep_nu

    probe = ProblemParams(cfg.N, cfg.alpha, 2.0)
    lo = cfg.p_min if cfg.p_min is not None else probe.sobolev_exponent
    hi = cfg.p_max if cfg.p_max is not None else critical_exponent(probe) - 1e-3
    if not 1 < lo < hi < critical_exponent(probe):
        raise InvalidConfigError(f"sweep range must satisfy 1 < p_min < p_max < p_alpha(N)")
    grid = np.linspace(lo, hi, cfg.samples)
    opts = SpectralOptions(T_max=cfg.T_max, schrodinger_nodes=cfg.nodes,
                           direct_elements=cfg.direct_nodes)
    return sweep_nu(cfg.N, cfg.alpha, grid, opts, workers=cfg.workers), opts


def cmd_nu(cfg):
    curve, _ = _sweep(cfg)
    rows = [(s.p, s.nu, s.nu_direct, s.gap) for s in curve.samples]
    emit.write_csv(cfg.out, "nu.csv", ["p", "nu", "nu_direct", "gap"], rows)
    ok = curve.ok
    summary = {"N": cfg.N, "alpha": cfg.alpha, "samples": len(curve.samples),
               "failed": len(curve.samples) - len(ok),
               "max_gap": max((s.gap for s in ok), default=math.nan),
               "max_nu": max((s.nu for s in ok), default=math.nan),
               "min_second_eigenvalue": min((s.second_direct for s in ok), default=math.nan)}
    emit.write_json(cfg.out, "nu.json", summary)
    return summary


def cmd_pk(cfg):
    from .problem import SphericalSpectrum
    from .spectrum import find_pk

    curve, opts = _sweep(cfg)
    table = find_pk(curve, SphericalSpectrum(cfg.N, cfg.kmax), cfg.kmax, opts=opts)
    rows = [(e.k, e.lambda_k, e.p_k, e.bracket[0], e.bracket[1], e.crosscheck_residual)
            for e in table.entries]
    emit.write_csv(cfg.out, "pk.csv",
                   ["k", "lambda_k", "p_k", "bracket_lo", "bracket_hi", "mode_shot_residual"], rows)
    summary = {"N": cfg.N, "alpha": cfg.alpha, "roots": len(table.entries),
               "p_k": [e.p_k for e in table.entries], "k": [e.k for e in table.entries]}
    emit.write_json(cfg.out, "pk.json", summary)
    return summary


def cmd_check_degeneracy(cfg):
    from .spectrum import nondegeneracy_certificate

    params = _params(cfg)
    cert = nondegeneracy_certificate(params)
    summary = {"N": params.N, "alpha": params.alpha, "p": params.p, "K": cert.K,
               "verdict": cert.verdict, "min_boundary": cert.min_boundary,
               "witness_mode": cert.witness_mode, "threshold": cert.threshold,
               "boundary_values": list(cert.boundary_values)}
    emit.write_json(cfg.out, "degeneracy.json", summary)
    if cert.degenerate:
        raise ForbiddenExponentError(
            f"p = {params.p} is degenerate in mode {cert.witness_mode}", mode=cert.witness_mode,
            value=cert.min_boundary)
    return summary


def _contraction_opts(cfg):
    from .perturbed import ContractionOptions

    return ContractionOptions(kmax=cfg.kmax, rnodes=cfg.rnodes or 1024, maxiter=cfg.maxiter,
                              tol=cfg.tol)


def cmd_perturbed(cfg):
    from .perturbed import contraction_solve

    params = _params(cfg)
    spec = parse_map(cfg.map, cfg.t)
    phi, report, problem = contraction_solve(params, spec, _contraction_opts(cfg))
    grid = problem.grid
    v = problem.vp_values + phi.values()
    theta = grid.theta
    rows = ((r, th, v[i, j]) for i, r in enumerate(grid.r) for j, th in enumerate(theta))
    emit.write_csv(cfg.out, "solution.csv", ["r", "theta", "v"], rows)
    emit.write_json(cfg.out, "report.json", report.summary())
    emit.write_csv(cfg.out, "convergence.csv", ["n", "increment_norm"],
                   enumerate(report.increments, 1))
    return report.summary()


def cmd_exterior(cfg):
    from .analysis import fast_decay_pipeline, kelvin_exterior
    from .problem import ProblemParams
    from .radial import solve_henon_radial

    if cfg.alpha is None:
        spec = parse_map(cfg.map, cfg.t) if cfg.t is not None else None
        opts = _contraction_opts(cfg) if spec is not None else None
        rep = fast_decay_pipeline(cfg.N, cfg.p, s_max=cfg.s_max, spec=spec, opts=opts)
        ext, summary = rep.exterior, rep.summary()
    else:
        params = ProblemParams(cfg.N, cfg.alpha, cfg.p)
        ext = kelvin_exterior(solve_henon_radial(params), params, s_max=cfg.s_max)
        summary = {"N": params.N, "alpha": params.alpha, "p": params.p, "beta": ext.beta,
                   "decay_exponent": ext.decay_exponent, "residual_sup": ext.residual_sup,
                   "boundary_value": ext.boundary_value}
    summary["fit_window"] = list(ext.fit_window)
    emit.write_csv(cfg.out, "exterior.csv", ["s", "w"], zip(ext.s, ext.values))
    emit.write_json(cfg.out, "exterior.json", summary)
    return summary


def cmd_pohozaev(cfg):
    from .analysis import pohozaev_residual
    from .radial import solve_henon_radial

    params = _params(cfg)
    rep = pohozaev_residual(solve_henon_radial(params), params)
    summary = {"N": params.N, "alpha": params.alpha, "p": params.p, "volume_term": rep.volume_term,
               "boundary_term": rep.boundary_term, "residual": rep.residual,
               "relative_residual": rep.relative_residual, "c_poh": rep.c_poh,
               "panels": rep.panels, "nodes_per_panel": rep.nodes_per_panel}
    emit.write_json(cfg.out, "pohozaev.json", summary)
    return summary


def cmd_certify(cfg):
    from .analysis import nonexistence_certificate

    spec = parse_map(cfg.map, cfg.t) if cfg.t is not None else None
    cert = nonexistence_certificate(cfg.N, cfg.alpha, cfg.p, cfg.shift, spec)
    summary = {"N": cfg.N, "alpha": cfg.alpha, "p": cfg.p, "shift": cfg.shift,
               "verdict": cert.verdict, "margin": cert.margin, "sup_eps": cert.sup_eps,
               "gamma": cert.gamma, "star_margin": cert.star_margin}
    emit.write_json(cfg.out, "certificate.json", summary)
    return summary


HANDLERS = {
    "radial": cmd_radial, "nu": cmd_nu, "pk": cmd_pk, "check-degeneracy": cmd_check_degeneracy,
    "perturbed": cmd_perturbed, "exterior": cmd_exterior, "pohozaev": cmd_pohozaev,
    "certify-nonexistence": cmd_certify,
}


def run(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        _validate(cfg)
        HANDLERS[cfg.command](cfg)
    except HenonError as exc:
        print(f"henon {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # anything unexpected is an internal solver failure
        log.debug("unhandled error", exc_info=True)
        print(f"henon {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 5
    return 0


def main():
    sys.exit(run())
