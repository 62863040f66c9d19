"""Command-line interface.

Subcommands: equilibrium, modes, asymptotic, sweep, finite, magic-g.
Exit codes: 0 success, 2 usage error, 3 convergence/precision failure,
4 unsupported parameter range.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import entropy as entropy_mod
from . import finiteg
from .crystal import SystemSpec, scale_positions, solve_equilibrium
from .errors import ConvergenceError, PrecisionError, UnsupportedError
from .rdm import asymptotic_sites
from .twobody import magic_g

EXIT_CONVERGENCE = 3
EXIT_UNSUPPORTED = 4


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _emit(payload: dict, rows: tuple[list[str], list[list]] | None, fmt: str, out: str | None):
    """Render one run. JSON embeds the config; CSV routes it to stderr."""
    if fmt == "json":
        _write(json.dumps(payload, indent=2), out)
    elif fmt == "csv":
        if rows is None:
            raise ValueError("this subcommand has no CSV representation")
        header, data = rows
        lines = [",".join(header)]
        for row in data:
            lines.append(",".join(_cell(v) for v in row))
        sys.stderr.write("config: " + json.dumps(payload["config"]) + "\n")
        _write("\n".join(lines), out)
    else:
        lines = ["config: " + json.dumps(payload["config"])]
        lines.extend(_text_lines(payload["result"]))
        _write("\n".join(lines), out)


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _text_lines(result: dict, indent: str = "") -> list[str]:
    lines = []
    for key, value in result.items():
        if isinstance(value, dict):
            lines.append(f"{indent}{key}:")
            lines.extend(_text_lines(value, indent + "  "))
        elif isinstance(value, (list, tuple)):
            lines.append(f"{indent}{key}: " + " ".join(_cell(v) for v in value))
        else:
            lines.append(f"{indent}{key}: {_cell(value)}")
    return lines


def _add_common(p: argparse.ArgumentParser, with_g: bool = False):
    p.add_argument("--n", type=int, required=True, help="particle count (>= 2)")
    p.add_argument("--d", type=float, default=1.0, help="interaction exponent (default 1)")
    if with_g:
        p.add_argument("--g", type=float, default=None, help="coupling strength")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text",
                   help="output format (default text)")
    p.add_argument("--out", default=None, help="write output to this path instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wigner1d",
                                     description="Entanglement of 1D trapped repulsive particles")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", help="classical equilibrium positions")
    _add_common(p, with_g=True)

    p = sub.add_parser("modes", help="normal-mode frequencies and eigenvectors")
    _add_common(p)

    p = sub.add_parser("asymptotic", help="strong-coupling occupancies and entropies")
    _add_common(p)
    p.add_argument("--levels", type=int, default=6, help="occupancy levels to print (default 6)")

    p = sub.add_parser("sweep", help="strong-coupling entropy versus N (CSV-friendly)")
    p.add_argument("--d", type=float, default=1.0, help="interaction exponent (default 1)")
    p.add_argument("--n-max", type=int, required=True, help="largest particle count (<= 20)")
    p.add_argument("--format", choices=("text", "json", "csv"), default="csv",
                   help="output format (default csv)")
    p.add_argument("--out", default=None)

    p = sub.add_parser("finite", help="finite-coupling occupancies and entropies (d=1)")
    _add_common(p, with_g=True)
    p.add_argument("--magic-n", type=int, default=None,
                   help="use the terminating-series coupling of this order")
    p.add_argument("--grid-k", type=int, default=None, help="grid point count K")
    p.add_argument("--grid-c", type=float, default=None, help="grid half extent c")
    p.add_argument("--dy", type=float, default=0.25, help="grid spacing (default 0.25)")
    p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed (default 0)")
    p.add_argument("--samples", type=int, default=None,
                   help="Monte Carlo samples (default 10^7)")
    p.add_argument("--alpha", type=float, default=None,
                   help="skip optimization and use this scale")
    p.add_argument("--levels", type=int, default=10, help="occupancies to print (default 10)")

    p = sub.add_parser("magic-g", help="terminating-series couplings and coefficients")
    p.add_argument("--n", type=int, required=True, help="series order (>= 1)")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--out", default=None)
    return parser


def _cmd_equilibrium(args) -> int:
    spec = SystemSpec(n=args.n, d=args.d, g=args.g)
    config = solve_equilibrium(spec)
    result = {
        "beta": [float(b) for b in config.beta],
        "gradient_norm": config.gradient_norm,
    }
    if args.g is not None:
        result["scaled_positions"] = [float(x) for x in scale_positions(config, spec)]
    payload = {
        "command": "equilibrium",
        "config": {"n": args.n, "d": args.d, "g": args.g},
        "result": result,
    }
    rows = (["i", "beta"], [[i + 1, b] for i, b in enumerate(config.beta)])
    _emit(payload, rows, args.format, args.out)
    return 0


def _cmd_modes(args) -> int:
    solution = asymptotic_sites(args.n, args.d)
    nm = solution.modes
    result = {
        "omega_sq": [float(v) for v in nm.omega_sq],
        "parity": list(nm.parity),
        "u_rows": [[float(v) for v in row] for row in nm.u],
    }
    payload = {"command": "modes", "config": {"n": args.n, "d": args.d}, "result": result}
    rows = (["mode", "omega_sq", "parity"],
            [[i + 1, v, p] for i, (v, p) in enumerate(zip(nm.omega_sq, nm.parity))])
    _emit(payload, rows, args.format, args.out)
    return 0


def _cmd_asymptotic(args) -> int:
    solution = asymptotic_sites(args.n, args.d)
    report = entropy_mod.total_entropy(list(solution.sites), args.n, args.d)
    per_site = []
    for kern, site in zip(solution.kernels, solution.sites):
        per_site.append({
            "site": site.site,
            "amplitude": kern.amplitude,
            "diag_coeff": kern.diag_coeff,
            "cross_coeff": kern.cross_coeff,
            "width": site.width,
            "ratio": site.ratio,
            "occupancies": [float(v) for v in site.occupancies(args.levels - 1)],
        })
    result = {
        "beta": [float(b) for b in solution.config.beta],
        "omega_sq": [float(v) for v in solution.modes.omega_sq],
        "sites": {f"site_{p['site']}": p for p in per_site},
        "s_total_bits": report.total_bits,
        "s_per_site": list(report.per_site_bits),
        "linear_entropy": report.linear,
        "lambda0_sum": report.lambda0_sum,
    }
    payload = {"command": "asymptotic", "config": {"n": args.n, "d": args.d}, "result": result}
    rows = (["site", "lambda0", "ratio", "s_bits"],
            [[s.site, s.lambda0, s.ratio, sb]
             for s, sb in zip(solution.sites, report.per_site_bits)])
    _emit(payload, rows, args.format, args.out)
    return 0


def _cmd_sweep(args) -> int:
    reports = [entropy_mod.asymptotic_report(n, args.d) for n in range(2, args.n_max + 1)]
    header = ["N", "S_total_bits", "L", "lambda0_sum"]
    data = [[r.n, r.total_bits, r.linear, r.lambda0_sum] for r in reports]
    payload = {
        "command": "sweep",
        "config": {"d": args.d, "n_max": args.n_max},
        "result": {"rows": {f"n_{r.n}": r.to_dict() for r in reports}},
    }
    _emit(payload, (header, data), args.format, args.out)
    return 0


def _cmd_finite(args) -> int:
    result = finiteg.run_finite(
        n=args.n,
        g=args.g,
        magic_n=args.magic_n,
        d=args.d,
        dy=args.dy,
        grid_c=args.grid_c,
        grid_k=args.grid_k,
        seed=args.seed,
        samples=args.samples,
        alpha=args.alpha,
    )
    full = result.to_dict()
    shown = dict(full)
    shown["occupancies"] = shown["occupancies"][: args.levels]
    payload = {
        "command": "finite",
        "config": {
            "n": args.n, "d": args.d, "g": result.g, "magic_n": args.magic_n,
            "dy": result.grid.spacing, "grid_c": result.grid.half_extent,
            "grid_k": result.grid.points, "integrator": result.integrator,
            "seed": result.seed, "samples": result.samples, "alpha_flag": args.alpha,
        },
        "result": shown,
    }
    rows = (["s", "occupancy"],
            [[i, v] for i, v in enumerate(full["occupancies"][: args.levels])])
    _emit(payload, rows, args.format, args.out)
    return 0


def _cmd_magic(args) -> int:
    series = magic_g(args.n)
    result = {
        "n": series.n,
        "g": series.g_magic,
        "e_rel": series.e_rel,
        "coefficients": [float(c) for c in series.coeffs],
    }
    payload = {"command": "magic-g", "config": {"n": args.n}, "result": result}
    rows = (["k", "a_k"], [[k, c] for k, c in enumerate(series.coeffs)])
    _emit(payload, rows, args.format, args.out)
    return 0


_DISPATCH = {
    "equilibrium": _cmd_equilibrium,
    "modes": _cmd_modes,
    "asymptotic": _cmd_asymptotic,
    "sweep": _cmd_sweep,
    "finite": _cmd_finite,
    "magic-g": _cmd_magic,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command in ("equilibrium", "modes", "asymptotic", "finite") and args.n < 2:
        parser.error(f"--n must be at least 2, got {args.n}")
    if args.command == "magic-g" and args.n < 1:
        parser.error(f"--n must be at least 1, got {args.n}")
    if args.command == "sweep" and not 2 <= args.n_max <= 20:
        parser.error(f"--n-max must lie in 2..20, got {args.n_max}")
    if getattr(args, "d", 1.0) <= 0:
        parser.error(f"--d must be positive, got {args.d}")
    if args.command == "finite":
        if args.g is None and args.magic_n is None:
            parser.error("finite requires --g or --magic-n")
        if args.g is not None and args.g < 0:
            parser.error(f"--g must be non-negative, got {args.g}")
        if args.magic_n is not None and args.magic_n < 1:
            parser.error(f"--magic-n must be at least 1, got {args.magic_n}")

    try:
        return _DISPATCH[args.command](args)
    except UnsupportedError as exc:
        sys.stderr.write(f"unsupported: {exc}\n")
        return EXIT_UNSUPPORTED
    except (ConvergenceError, PrecisionError) as exc:
        sys.stderr.write(f"did not converge: {exc}\n")
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
