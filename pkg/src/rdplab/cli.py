"""Command-line entry point: ``rdplab {curve,simulate,spectrum,oracle-check}``.

Every subcommand builds its full output in memory and writes it only after
all computations succeed, so a failing run never leaves a partial grid.

Exit codes: 0 success, 1 oracle mismatch, 2 usage / malformed spec,
3 infeasible channel or distortion configuration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .coding_engine import parse_sim_config, simulate_variable_length
from .core import Channel, DistortionSpec
from .errors import ConfigError, InfeasibleError, RDPError
from .nletter_oracle import grid_min_entropy
from .rdp_solvers import min_output_entropy, read_distortion_csv, rfa_evaluate
from .source_models import block_pmf, parse_source
from .spectrum import f_spectrum, f_spectrum_mc, spectrum_rows

SCHEMA_VERSION = 1
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


class UsageError(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` with an inclusive stop, or a single number."""
    try:
        parts = [float(t) for t in text.split(":")]
    except ValueError:
        raise ConfigError(f"bad grid {text!r}") from None
    if len(parts) == 1:
        return parts
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise ConfigError(f"grid must be start:stop:step with step > 0, got {text!r}")
    start, stop, step = parts
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def load_distortion(text: str, k: int) -> DistortionSpec:
    if text == "hamming":
        return DistortionSpec.hamming(k)
    spec = read_distortion_csv(text)
    if len(spec) != k:
        raise ConfigError(f"distortion matrix is {len(spec)}x{len(spec)}, alphabet has {k}")
    return spec


def _header(command: str, seed, config: dict) -> str:
    digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]
    return (f"# rdplab {command} schema={SCHEMA_VERSION} version={__version__} "
            f"seed={seed} config={digest}\n")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_curve(args) -> str:
    source = parse_source(args.source)
    delta = load_distortion(args.distortion, source.k)
    d_grid, s_grid = parse_grid(args.d), parse_grid(args.s)
    n = args.n
    base = args.k if args.k else args.base
    p_xn = block_pmf(source, n)
    delta_n = delta.additive(n)
    out = io.StringIO()
    out.write(_header("curve", args.seed, vars(args)))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["D", "S", "R_va_surrogate", "R_fa", "BA_component", "spectrum_floor",
                     "method", "bound_type"])
    for D in d_grid:
        for S in s_grid:
            va = min_output_entropy(p_xn, delta_n, n * D, S, method=args.method, base=base,
                                    seed=args.seed)
            fa = rfa_evaluate(source, delta, D, S, n, base=base) if delta.zero_diagonal else None
            writer.writerow([_fmt(D), _fmt(S), _fmt(va.H / n),
                             _fmt(fa and fa.R), _fmt(fa and fa.ba_component),
                             _fmt(fa and fa.spectrum_floor), va.method, va.bound_type])
    return out.getvalue()


SIM_DEFAULTS = {"channel_mode": "per-letter-product", "distortion": "hamming", "k": "2",
                "n": "1", "trials": "10000", "workers": "1"}


def _sim_settings(args) -> dict:
    cfg = dict(SIM_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            cfg.update(parse_sim_config(fh.read()))
    for key in ("source", "channel", "channel_mode", "distortion", "n", "trials", "k", "seed",
                "workers"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = str(val)
    missing = [k for k in ("source", "channel", "seed") if k not in cfg]
    if missing:
        raise ConfigError(f"missing required settings: {', '.join(missing)}")
    return cfg


def cmd_simulate(args) -> str:
    cfg = _sim_settings(args)
    source = parse_source(cfg["source"])
    try:
        n, trials, K = int(cfg["n"]), int(cfg["trials"]), int(cfg["k"])
        seed, workers = int(cfg["seed"]), int(cfg["workers"])
        matrix = np.array(json.loads(cfg["channel"]), dtype=float)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad simulation setting: {exc}") from exc
    delta = load_distortion(cfg["distortion"], source.k)
    support = source.block_support(n)
    try:
        if cfg["channel_mode"] == "per-letter-product":
            channel = Channel.from_rows(matrix, source.alphabet).power(n)
        elif cfg["channel_mode"] == "explicit":
            channel = Channel(support, support, matrix)
        else:
            raise ConfigError(f"unknown channel_mode {cfg['channel_mode']!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise InfeasibleError(f"channel is not a valid conditional law: {exc}") from exc
    report = simulate_variable_length(source, channel, delta, n, trials, K=K, seed=seed,
                                      workers=workers)
    flat = report.to_dict()
    flat["delta_len_per_symbol"] = report.avg_len_per_symbol - report.theory_len_per_symbol
    flat["delta_distortion"] = report.empirical_distortion - report.theory_distortion
    flat["delta_tv"] = report.empirical_tv - report.exact_tv
    slack = report.avg_len_radius + 1e-12
    lo = report.theory_entropy_per_symbol - slack
    hi = report.theory_entropy_per_symbol + 1.0 / n + slack
    flat["in_huffman_band"] = bool(lo <= report.avg_len_per_symbol <= hi)
    flat["version"] = __version__
    return json.dumps(flat, sort_keys=True) + "\n"


def cmd_spectrum(args) -> str:
    source = parse_source(args.source)
    if args.mode == "mc" and args.seed is None:
        raise ConfigError("--seed is required for Monte Carlo mode")
    out = io.StringIO()
    out.write(_header("spectrum", args.seed, vars(args)))
    writer = csv.writer(out, lineterminator="\n")
    if args.r is None and args.mode == "exact":
        writer.writerow(["R", "F_n"])
        for r, f in spectrum_rows(source, args.n, args.base):
            writer.writerow([repr(r), repr(f)])
        return out.getvalue()
    if args.r is None:
        raise ConfigError("--r grid is required in Monte Carlo mode")
    if args.mode == "mc":
        writer.writerow(["R", "F_n", "std_err"])
        for r in parse_grid(args.r):
            est, se = f_spectrum_mc(source, args.n, r, args.base, args.trials, args.seed)
            writer.writerow([repr(r), repr(est), repr(se)])
    else:
        writer.writerow(["R", "F_n"])
        for r in parse_grid(args.r):
            writer.writerow([repr(r), repr(f_spectrum(source, args.n, r, args.base))])
    return out.getvalue()


def cmd_oracle_check(args) -> tuple[str, bool]:
    source = parse_source(args.source)
    if source.kind != "iid":
        raise ConfigError("oracle-check works on i.i.d. sources")
    delta = load_distortion(args.distortion, source.k)
    p_x = source.symbol_pmf
    out = io.StringIO()
    out.write(_header("oracle-check", None, vars(args)))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["D", "S", "exact", "grid", "diff", "ok"])
    all_ok = True
    for D in parse_grid(args.d):
        for S in parse_grid(args.s):
            ex = min_output_entropy(p_x, delta, D, S, method="exact")
            gr = grid_min_entropy(p_x, delta, D, S, resolution=args.resolution)
            diff = gr.H - ex.H
            ok = -1e-9 <= diff <= args.tol
            all_ok &= ok
            writer.writerow([_fmt(D), _fmt(S), _fmt(ex.H), _fmt(gr.H), _fmt(diff), int(ok)])
    return out.getvalue(), all_ok


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdplab", description="Rate-distortion-perception laboratory.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("curve", help="tabulate R_va and R_fa over a (D, S) grid")
    p.add_argument("--source", required=True)
    p.add_argument("--distortion", default="hamming", help="'hamming' or a CSV matrix path")
    p.add_argument("--d", required=True, help="start:stop:step")
    p.add_argument("--s", required=True, help="start:stop:step")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--base", type=float, default=2.0)
    p.add_argument("--k", type=int, default=None, help="code alphabet size; sets the log base")
    p.add_argument("--method", default="auto", choices=["auto", "exact", "grid", "multistart"])
    p.add_argument("--seed", type=int, default=0, help="seed for the multistart method")

    p = sub.add_parser("simulate", help="run the stochastic variable-length codec")
    p.add_argument("--config")
    p.add_argument("--source")
    p.add_argument("--channel", help="JSON matrix")
    p.add_argument("--channel-mode", dest="channel_mode",
                   choices=["per-letter-product", "explicit"])
    p.add_argument("--distortion")
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("spectrum", help="tail F_n(R) of the normalised self-information")
    p.add_argument("--source", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--base", type=float, default=2.0)
    p.add_argument("--mode", choices=["exact", "mc"], default="exact")
    p.add_argument("--r", help="start:stop:step; default lists the exact breakpoints")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("oracle-check", help="compare exact solver with the lattice scan")
    p.add_argument("--source", required=True)
    p.add_argument("--distortion", default="hamming")
    p.add_argument("--d", default="0:0.5:0.05")
    p.add_argument("--s", default="0:1:0.1")
    p.add_argument("--resolution", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=2e-3)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "curve":
            text, code = cmd_curve(args), 0
        elif args.command == "simulate":
            text, code = cmd_simulate(args), 0
        elif args.command == "spectrum":
            text, code = cmd_spectrum(args), 0
        else:
            text, ok = cmd_oracle_check(args)
            code = 0 if ok else EXIT_MISMATCH
    except UsageError as exc:
        print(f"rdplab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"rdplab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, ValueError) as exc:
        print(f"rdplab: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RDPError as exc:
        print(f"rdplab: error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
