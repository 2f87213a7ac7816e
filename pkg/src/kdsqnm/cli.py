"""Command-line front end.

Every subcommand prints a table of flat records, as CSV (17 significant
digits) or as a JSON array of objects with the same keys.  Exit status is 0 on
success, 1 on a usage error and 2 when the computation itself reports a domain
error; in the last case the module diagnostic is echoed on stderr.

A ``--config`` file holds ``key = value`` lines whose keys are the long flag
names without the leading dashes (plus an optional ``command`` key).  Values
from the file are applied first, so explicit flags override them.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from . import __version__
from .errors import KdsError
from .inversion import NewtonOptions, RectangleSpec, newton_invert_three, newton_invert_two
from .inversion import p_matrix_rectangle_scan, unlabeled_invert
from .kds_core import SpacetimeParams, horizon_roots
from .photon_orbit import Branch, closed_form_coefficients, solve_circular_orbit
from .spectrum import pseudopole_pair, three_from_pair
from .verify import DEFAULT_NOISE_SEED, QUANTITIES, fit_series_coefficients, noise_propagation_study

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad input; route it to exit code 1 instead."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- value formatting -------------------------------------------------------


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return format_value(value)  # JSON has no inf/nan literals
    if isinstance(value, (tuple, list)):
        return format_value(value)
    return value


def render(rows: list[dict[str, Any]], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{k: _json_value(v) for k, v in r.items()} for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if rows:
        writer.writerow(rows[0].keys())
        for r in rows:
            writer.writerow(format_value(v) for v in r.values())
    return buf.getvalue()


# -- argument types ------------------------------------------------------------


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# -- commands ------------------------------------------------------------------


def _params(ns) -> SpacetimeParams:
    return SpacetimeParams(ns.M, ns.a, ns.Lambda)


def cmd_horizons(ns):
    h = horizon_roots(_params(ns))
    return [{
        "M": ns.M, "a": ns.a, "Lambda": ns.Lambda,
        "r0": h.r0, "r_minus": h.r_minus, "r_e": h.r_e, "r_c": h.r_c,
        "kappa_e": h.kappa_e, "kappa_c": h.kappa_c, "L_sep": h.L_sep,
        "residuals": h.residuals, "diagnostics": "; ".join(h.diagnostics),
    }]


def cmd_orbit(ns):
    params = _params(ns)
    branches = list(Branch) if ns.branch == "both" else [Branch.parse(ns.branch)]
    rows = []
    for br in branches:
        o = solve_circular_orbit(params, br)
        rows.append({
            "branch": br.value, "r_orbit": o.r_orbit, "Omega": o.Omega, "b": o.b,
            "lyapunov": o.lyapunov, "residual": o.residual, "iterations": o.iterations,
        })
    return rows


def cmd_coeffs(ns):
    return [{"M": ns.M, "Lambda": ns.Lambda, **closed_form_coefficients(ns.M, ns.Lambda).as_dict()}]


def cmd_forward(ns):
    pair = pseudopole_pair(_params(ns), ns.n, ns.ell)
    obs = three_from_pair(pair, ns.n, ns.ell)
    return [{
        "M": ns.M, "a": ns.a, "Lambda": ns.Lambda, "n": ns.n, "ell": ns.ell,
        "omega_plus_re": pair.plus.real, "omega_plus_im": pair.plus.imag,
        "omega_minus_re": pair.minus.real, "omega_minus_im": pair.minus.imag,
        "U": obs.U, "V": obs.V, "W_tilde": obs.W_tilde,
    }]


def _recon_row(res) -> dict[str, Any]:
    p = res.params
    return {
        "M": p.M, "a": p.a, "Lambda": p.Lambda, "iterations": res.iterations,
        "final_residual": res.final_residual, "jacobian_det": res.jacobian_det,
        "stability_constant": res.stability_constant, "sign_ambiguous": res.sign_ambiguous,
    }


def cmd_invert(ns):
    opts = NewtonOptions(tol=ns.tol, max_iter=ns.max_iter, jacobian=ns.jacobian)
    if ns.unlabeled:
        res = unlabeled_invert(ns.U, abs(ns.V), ns.Lambda, ns.ell, ns.n, opts)
    else:
        res = newton_invert_two((ns.U, ns.V), ns.Lambda, ns.ell, ns.n, opts)
    return [_recon_row(res)]


def cmd_invert3(ns):
    opts = NewtonOptions(tol=ns.tol, max_iter=ns.max_iter, a_min=ns.a_min_seed)
    return [_recon_row(newton_invert_three((ns.U, ns.V, ns.W), ns.ell, ns.n, opts))]


def cmd_scan_pmatrix(ns):
    rect = RectangleSpec(ns.M_min, ns.M_max, ns.a_min, ns.a_max, ns.n_M, ns.n_a)
    rep = p_matrix_rectangle_scan(rect, ns.Lambda, ns.ell, ns.n)
    if ns.summary:
        return [{
            "passed": rep.passed, "minors_ok": rep.minors_ok, "nodes": len(rep.nodes),
            "nodes_filtered": rep.nodes_filtered, "truncated": rep.truncated,
            "worst_minus_dU_dM": rep.worst_minus_dU_dM, "worst_dV_da": rep.worst_dV_da,
            "worst_minus_det": rep.worst_minus_det, "collisions": rep.collisions,
            "min_separation": rep.min_separation,
        }]
    return [node._asdict() for node in rep.nodes]


def cmd_verify_series(ns):
    quantities = QUANTITIES if ns.quantity == "all" else (ns.quantity,)
    rows = []
    for q in quantities:
        rep = fit_series_coefficients(q, ns.M, ns.Lambda, degree=ns.degree, parity=ns.parity)
        for k in sorted(rep.reference):
            rows.append({
                "quantity": q, "power": k, "parity": rep.parity,
                "fitted": rep.coefficient(k), "uncertainty": rep.uncertainty(k),
                "reference": rep.reference[k], "abs_discrepancy": rep.abs_discrepancy[k],
                "rel_discrepancy": rep.rel_discrepancy[k], "fit_residual": rep.fit_residual,
                "condition": rep.condition,
            })
    return rows


def cmd_noise_study(ns):
    rows = noise_propagation_study(ns.M, ns.a, ns.Lambda, ns.n, ns.ell, ns.eps, ns.trials, ns.seed)
    return [r._asdict() for r in rows]


# -- parser --------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
    p.add_argument("--out", default=None, help="write to this path instead of stdout")
    p.add_argument("--config", default=None, help="key = value file applied before the flags")


def _add_params(p, a=True):
    p.add_argument("--M", type=float, required=True, help="mass")
    if a:
        p.add_argument("--a", type=float, default=0.0, help="spin parameter (signed)")
    p.add_argument("--Lambda", type=float, required=True, help="cosmological constant")


def _add_mode(p, ell_default=100):
    p.add_argument("--ell", type=int, default=ell_default, help="angular index")
    p.add_argument("--n", type=int, default=0, help="overtone index")


COMMANDS: dict[str, tuple[Callable, str]] = {}


def build_parser() -> _Parser:
    parser = _Parser(prog="kdsqnm", description="Equatorial Kerr-de Sitter photon orbits and pseudopole inversion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_text, columns):
        p = sub.add_parser(name, help=help_text, description=f"{help_text}\n\nColumns: {columns}",
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        COMMANDS[name] = (func, help_text)
        p.set_defaults(func=func)
        return p

    p = add("horizons", cmd_horizons, "roots of the horizon quartic",
            "M, a, Lambda, r0, r_minus, r_e, r_c, kappa_e, kappa_c, L_sep, residuals, diagnostics")
    _add_params(p)
    _add_common(p)

    p = add("orbit", cmd_orbit, "equatorial circular photon orbits",
            "branch, r_orbit, Omega, b, lyapunov, residual, iterations")
    _add_params(p)
    p.add_argument("--branch", choices=("co", "counter", "both"), default="both")
    _add_common(p)

    p = add("coeffs", cmd_coeffs, "closed-form small-a coefficients",
            "M, Lambda, Omega_ph, Omega_ph_prime, c_Z, c_Omega2, c_lambda2, r1, r2, b0, b1, b2, beta2")
    _add_params(p, a=False)
    _add_common(p)

    p = add("forward", cmd_forward, "synthesize the equatorial pseudopole pair and observables",
            "M, a, Lambda, n, ell, omega_plus_re, omega_plus_im, omega_minus_re, omega_minus_im, U, V, W_tilde")
    _add_params(p)
    _add_mode(p)
    _add_common(p)

    recon_cols = "M, a, Lambda, iterations, final_residual, jacobian_det, stability_constant, sign_ambiguous"
    p = add("invert", cmd_invert, "recover (M, a) at fixed Lambda from (U, V)", recon_cols)
    p.add_argument("--U", type=float, required=True)
    p.add_argument("--V", type=float, required=True)
    p.add_argument("--Lambda", type=float, required=True)
    _add_mode(p)
    p.add_argument("--unlabeled", action="store_true", help="treat V as |V| and report |a|")
    p.add_argument("--jacobian", choices=("fd", "analytic"), default="fd")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=30)
    _add_common(p)

    p = add("invert3", cmd_invert3, "recover (M, a, Lambda) from (U, V, W_tilde)", recon_cols)
    p.add_argument("--U", type=float, required=True)
    p.add_argument("--V", type=float, required=True)
    p.add_argument("--W", type=float, required=True, help="normalised damping W_tilde")
    _add_mode(p, ell_default=200)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--a-min-seed", type=float, default=0.05, help="near-degeneracy threshold on the seed |a|")
    _add_common(p)

    p = add("scan-pmatrix", cmd_scan_pmatrix, "P-matrix sign conditions over a rectangle",
            "per node: M, a, U, V, minus_dU_dM, dV_da, minus_det, ok; with --summary: one row of totals")
    p.add_argument("--M-min", type=float, default=0.9)
    p.add_argument("--M-max", type=float, default=1.1)
    p.add_argument("--a-min", type=float, default=-0.1)
    p.add_argument("--a-max", type=float, default=0.1)
    p.add_argument("--n-M", type=int, default=21)
    p.add_argument("--n-a", type=int, default=21)
    p.add_argument("--Lambda", type=float, required=True)
    _add_mode(p)
    p.add_argument("--summary", action="store_true")
    _add_common(p)

    p = add("verify-series", cmd_verify_series, "fit small-a Taylor coefficients and compare with closed forms",
            "quantity, power, parity, fitted, uncertainty, reference, abs_discrepancy, rel_discrepancy, "
            "fit_residual, condition")
    _add_params(p, a=False)
    p.add_argument("--quantity", choices=QUANTITIES + ("all",), default="all")
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--parity", choices=("auto", "none", "even", "odd"), default="auto")
    _add_common(p)

    p = add("noise-study", cmd_noise_study, "worst-case inversion error under bounded noise",
            "ell, eps, trials, max_error, scaled_error, stability_constant, seed")
    _add_params(p)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--ell", type=_int_list, default=(100, 200), help="comma-separated list")
    p.add_argument("--eps", type=_float_list, default=(1e-4, 1e-3, 1e-2), help="comma-separated list")
    p.add_argument("--trials", type=int, default=32)
    p.add_argument("--seed", type=int, default=DEFAULT_NOISE_SEED)
    _add_common(p)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            if command not in action.choices:
                raise UsageError(f"unknown command {command!r}; choose from {', '.join(action.choices)}")
            return action.choices[command]
    raise AssertionError("parser has no subcommands")


def _option_actions(sub: argparse.ArgumentParser) -> dict[str, argparse.Action]:
    """Config key (long flag without dashes) -> action, excluding --config and --help."""
    out = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--") and opt not in ("--config", "--help"):
                out[opt[2:]] = action
    return out


# -- run configuration ---------------------------------------------------------


@dataclass
class RunConfig:
    """A fully resolved invocation: command name plus every option value.

    ``options`` is keyed by long flag name (e.g. ``"M"``, ``"max-iter"``).
    """

    command: str
    options: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, parser: argparse.ArgumentParser, ns: argparse.Namespace) -> "RunConfig":
        sub = _subparser(parser, ns.command)
        options = {key: getattr(ns, action.dest) for key, action in _option_actions(sub).items()}
        return cls(ns.command, options)

    @classmethod
    def from_argv(cls, argv: Sequence[str]) -> "RunConfig":
        parser = build_parser()
        return cls.from_namespace(parser, parse_args(parser, argv))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_argv(config_to_argv(build_parser(), parse_config_text(text)))

    @property
    def params(self) -> SpacetimeParams | None:
        o = self.options
        if "M" in o and "Lambda" in o:
            return SpacetimeParams(o["M"], o.get("a", 0.0), o["Lambda"])
        return None

    def to_text(self) -> str:
        lines = [f"command = {self.command}"]
        for key, value in self.options.items():
            if value is None:
                continue
            text = repr(value) if isinstance(value, float) else format_value(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("--"):
            key = key[2:]
        if key in entries:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def config_to_argv(parser: argparse.ArgumentParser, entries: dict[str, str], command: str | None = None) -> list[str]:
    entries = dict(entries)
    file_command = entries.pop("command", None)
    command = command or file_command
    if command is None:
        raise UsageError("no command given on the command line or in the config file")
    if file_command is not None and file_command != command:
        raise UsageError(f"config file is for command {file_command!r}, not {command!r}")
    actions = _option_actions(_subparser(parser, command))
    argv = [command]
    for key, value in entries.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r} for command {command!r}")
        action = actions[key]
        if action.nargs == 0:
            if value.lower() in ("true", "1", "yes"):
                argv.append(f"--{key}")
            elif value.lower() not in ("false", "0", "no"):
                raise UsageError(f"config key {key!r} expects true or false, got {value!r}")
        else:
            argv.append(f"--{key}={value}")
    return argv


def _split_config(argv: Sequence[str]) -> tuple[list[str], str | None]:
    rest, path = [], None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            path = next(it, None)
            if path is None:
                raise UsageError("--config requires a path")
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
        else:
            rest.append(tok)
    return rest, path


def parse_args(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    argv, config_path = _split_config(list(argv))
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                entries = parse_config_text(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        command = argv[0] if argv and not argv[0].startswith("-") else None
        # File values first, explicit flags after: argparse keeps the last one.
        argv = config_to_argv(parser, entries, command) + (argv[1:] if command else argv)
    ns = parser.parse_args(argv)
    if ns.command is None:
        raise UsageError("a command is required")
    return ns


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parse_args(parser, sys.argv[1:] if argv is None else argv)
        rows = ns.func(ns)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except KdsError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        # Precondition violations on the inputs (M <= 0, Lambda < 0, ...).
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = render(rows, ns.format)
    if ns.out:
        try:
            with open(ns.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"usage error: cannot write output: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    return EXIT_OK
