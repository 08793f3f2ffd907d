"""Command-line interface: ``mdeseries <command> [options]``.

Commands: ``trees``, ``operator``, ``coeffs``, ``solve``, ``simulate``,
``decay`` and ``compare``. Options can also come from an INI file given with
``--config``; its sections are named after commands and its keys after the
long options (``kernel-scale`` or ``kernel_scale``). Flags override the file.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 resource guard.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import MdeError, NumericalError, ResourceLimitError, SeriesDivergenceWarning, ValidationError
from .fixed_point import SolverConfig, mde_residual, solve_mde
from .formats import (
    dump_json,
    ensure_dir,
    fmt,
    read_coefficients,
    read_manifest_fingerprint,
    read_operator,
    write_coefficients,
    write_csv,
    write_operator,
)
from .laurent import compute_coefficients, verify_offdiagonal_decay
from .operators import filtered_gaussian_operator, wigner_operator
from .sampler import EnsembleConfig, moment_convergence_study
from .trees import MAX_ORDER, check_order, enumerate_trees

logger = logging.getLogger("mdeseries")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_RESOURCE = 0, 2, 3, 4
MISSING = "NA"


# --- option parsing --------------------------------------------------------


def parse_complex(text: str) -> complex:
    t = str(text).strip().replace(" ", "").replace("i", "j")
    try:
        return complex(t)
    except ValueError as exc:
        raise ValidationError(f"cannot parse complex number {text!r}") from exc


def _list_of(kind):
    def parse(text):
        if isinstance(text, (list, tuple)):
            return [kind(v) for v in text]
        return [kind(v) for v in str(text).split(",") if v.strip()]

    return parse


_SOLVER = {"tolerance": (float, 1e-12), "max-iterations": (int, 100_000), "damping": (float, 0.5)}
_SERIES = {"K": (int, MAX_ORDER), "l": (float, None), "eps": (float, 1.0)}
_ENSEMBLE = {
    "N": (_list_of(int), [64, 128, 256]),
    "kernel-scale": (float, 2.0),
    "amplitude": (float, 1.0),
    "samples": (int, 200),
    "k-max": (int, 6),
    "seed": (int, 0),
}

# option name -> (parser, default); the default "required" means the value must be given
OPTIONS = {
    "trees": {"k": (int, "required")},
    "operator": {
        "kind": (str, "filtered_gaussian"),
        "N": (int, "required"),
        "kernel-scale": (float, 2.0),
        "amplitude": (float, 1.0),
        "decay-scale": (float, None),
    },
    "coeffs": {"operator": (str, "required"), **_SERIES},
    "solve": {
        "operator": (str, "required"),
        "z": (_list_of(parse_complex), "required"),
        "method": (str, "both"),
        "coeffs": (str, None),
        **_SERIES,
        **_SOLVER,
    },
    "simulate": {**_ENSEMBLE, "z": (_list_of(parse_complex), [2j]), **_SOLVER},
    "decay": {
        "operator": (str, "required"),
        "z": (parse_complex, "required"),
        "method": (str, "fixedpoint"),
        **_SERIES,
        **_SOLVER,
    },
    "compare": {**_ENSEMBLE, "z": (_list_of(parse_complex), [2j]), **_SERIES, **_SOLVER},
}

DEFAULT_FILES = {
    "trees": "trees.txt",
    "operator": "operator.covop",
    "solve": "solve.csv",
    "decay": "decay.csv",
}

HELP = {
    "trees": "list ordered trees with k edges as Dyck words",
    "operator": "write a parametric covariance operator file",
    "coeffs": "compute Laurent coefficients C_0..C_K with norm certificates",
    "solve": "evaluate M(z) by truncated series, fixed point, or both",
    "simulate": "Monte Carlo moment and Stieltjes convergence study",
    "decay": "off-diagonal decay profile of M(z)",
    "compare": "coefficients, solves and Monte Carlo gap table in one run",
}


def _dest(name):
    return name.replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdeseries", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in OPTIONS.items():
        p = sub.add_parser(command, help=HELP[command])
        p.add_argument("--config", help="INI file with a section per command")
        p.add_argument("--out", help="output path (default: a fresh run directory)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        p.add_argument("-v", "--verbose", action="store_true")
        for name in opts:
            flag = f"--{name}"
            if name == "z" and command != "decay":
                p.add_argument(flag, dest="z", action="append", help="spectral parameter(s), e.g. 2j or 0+10i")
            else:
                p.add_argument(flag, dest=_dest(name))
    return parser


def _read_config_file(path, command):
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    for section in cp.sections():
        if section not in OPTIONS:
            raise ValidationError(f"unknown config section [{section}]")
        known = {_dest(k) for k in OPTIONS[section]}
        unknown = [k for k in cp[section] if _dest(k) not in known]
        if unknown:
            raise ValidationError(f"unknown keys in [{section}]: {unknown}")
    if not cp.has_section(command):
        return {}
    return {_dest(k): v for k, v in cp[command].items()}


def resolve_config(args) -> dict:
    """Merge defaults, config file and flags into the effective config."""
    opts = OPTIONS[args.command]
    from_file = _read_config_file(args.config, args.command) if args.config else {}
    config = {}
    for name, (parse, default) in opts.items():
        key = _dest(name)
        raw = getattr(args, key, None)
        if raw is not None and isinstance(raw, list) and key == "z":
            raw = ",".join(raw)
        if raw is None:
            raw = from_file.get(key)
        if raw is None:
            if default == "required":
                raise ValidationError(f"--{name} is required")
            config[key] = default
            continue
        try:
            config[key] = parse(raw)
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"bad value for {name}: {raw!r}") from exc
    for key in ("operator", "coeffs"):
        if config.get(key):
            config[key] = str(Path(config[key]).resolve())
    return config


def _solver(config) -> SolverConfig:
    return SolverConfig(config["tolerance"], config["max_iterations"], config["damping"])


def _config_echo(config) -> dict:
    def show(v):
        if isinstance(v, complex):
            return fmt(v)
        if isinstance(v, float):
            return fmt(v)
        if isinstance(v, list):
            return [show(x) for x in v]
        return v

    return {k: show(v) for k, v in sorted(config.items())}


def _run_dir(args, config) -> Path:
    if args.out:
        return Path(args.out).resolve()
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("runs", f"{stamp}-seed{config.get('seed', 0)}").resolve()


def _file_target(args, config) -> Path:
    """Output file for single-file commands; a run directory is created when ``--out`` is absent."""
    if args.out:
        path = Path(args.out).resolve()
        ensure_dir(path.parent)
        return path
    return ensure_dir(_run_dir(args, config)) / DEFAULT_FILES[args.command]


def _versions():
    return {"mdeseries": __version__, "numpy": np.__version__}


# --- commands -------------------------------------------------------------------


def cmd_trees(config, args) -> int:
    k = check_order(config["k"])
    words = [t.word for t in enumerate_trees(k)]
    text = "\n".join(words) + "\n"
    if args.out:
        _file_target(args, config).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"# {len(words)} trees with {k} edges", file=sys.stderr)
    return EXIT_OK


def cmd_operator(config, args) -> int:
    kind = config["kind"]
    if kind == "wigner":
        S = wigner_operator(config["N"])
    elif kind == "filtered_gaussian":
        S = filtered_gaussian_operator(config["N"], config["kernel_scale"], config["amplitude"],
                                       config["decay_scale"])
    else:
        raise ValidationError(f"unknown operator kind {kind!r} (wigner, filtered_gaussian)")
    path = _file_target(args, config)
    fp = write_operator(path, S)
    print(f"{path} {fp}")
    return EXIT_OK


def write_coefficient_dir(directory, S, fingerprint, config):
    """Compute and store coefficients; refuses a directory made for another operator."""
    directory = Path(directory)
    previous = read_manifest_fingerprint(directory)
    if previous is not None and previous != fingerprint:
        raise ValidationError(f"{directory} holds coefficients of a different operator (fingerprint mismatch)")
    lc = compute_coefficients(S, check_order(config["K"]), config["l"], config["eps"], fingerprint)
    write_coefficients(directory, lc)
    return lc


def cmd_coeffs(config, args) -> int:
    S, fp = read_operator(config["operator"])
    directory = _run_dir(args, config)
    lc = write_coefficient_dir(directory, S, fp, config)
    print(f"{directory} K={lc.K_max} R={fmt(lc.constants.R)}")
    return EXIT_OK


def _laurent_row(lc, S, z, K):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeriesDivergenceWarning)
        value = lc.evaluate(z, K)
    try:
        residual = mde_residual(S, value.M, z)
    except np.linalg.LinAlgError:
        residual = math.inf
    status = "diverging" if value.diverging else "ok"
    return value, residual, status


def solve_rows(S, fingerprint, config, lc=None, threads=1):
    """Solve at every ``z``; returns ``(header, rows, n_failed)``."""
    method = config["method"]
    if method not in ("laurent", "fixedpoint", "both"):
        raise ValidationError("method must be laurent, fixedpoint or both")
    zs = config["z"]
    for z in zs:
        if not z.imag > 0:
            raise ValidationError(f"Im z must be positive, got {fmt(z)}")
    use_l = method in ("laurent", "both")
    use_f = method in ("fixedpoint", "both")
    K = check_order(config["K"])
    if use_l and lc is None:
        lc = compute_coefficients(S, K, config["l"], config["eps"], fingerprint)
    if use_l and K > lc.K_max:
        raise ValidationError(f"K={K} exceeds stored coefficients (K_max={lc.K_max})")
    solver = _solver(config)

    header = ["z_re", "z_im"]
    if use_l:
        header += ["K", "laurent_trace_re", "laurent_trace_im", "laurent_residual", "tail_bound", "laurent_status"]
    if use_f:
        header += ["fixedpoint_trace_re", "fixedpoint_trace_im", "fixedpoint_residual", "iterations",
                   "fixedpoint_status"]
    if method == "both":
        header.append("discrepancy")

    def one(z):
        row, ok = [z.real, z.imag], False
        ML = MF = None
        if use_l:
            value, res, status = _laurent_row(lc, S, z, K)
            tr = complex(np.trace(value.M)) / S.n
            row += [K, tr.real, tr.imag, res, value.tail_bound, status]
            ML, ok = value.M, ok or status == "ok"
        if use_f:
            try:
                sol = solve_mde(S, z, solver)
                tr = sol.normalized_trace
                row += [tr.real, tr.imag, sol.residual, sol.iterations, "ok"]
                MF, ok = sol.M, True
            except NumericalError as exc:
                logger.warning("fixed point failed at z=%s: %s", fmt(z), exc)
                row += [MISSING, MISSING, MISSING, MISSING, "failed"]
        if method == "both":
            row.append(float(np.max(np.abs(ML - MF))) if MF is not None else MISSING)
        return row, ok

    # BLAS pinned to one thread so rows do not depend on --threads
    with warnings.catch_warnings(), threadpool_limits(limits=1):
        warnings.simplefilter("ignore", RuntimeWarning)
        if threads > 1 and len(zs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, zs))
        else:
            results = [one(z) for z in zs]
    rows = [r for r, _ in results]
    n_failed = sum(not ok for _, ok in results)
    return header, rows, n_failed


def cmd_solve(config, args) -> int:
    S, fp = read_operator(config["operator"])
    lc = None
    if config["coeffs"]:
        lc = read_coefficients(config["coeffs"])
        if lc.fingerprint != fp:
            raise ValidationError("coefficient directory was computed for a different operator")
    header, rows, n_failed = solve_rows(S, fp, config, lc, args.threads)
    path = _file_target(args, config)
    write_csv(path, header, rows, comments=[f"operator_fingerprint={fp}"])
    print(path)
    if n_failed == len(rows):
        logger.error("every spectral parameter failed")
        return EXIT_NUMERICAL
    return EXIT_OK


def study_tables(report):
    gap_header = ["N", "k", "moment", "moment_se", "reference", "gap", "gap_se"]
    na = lambda v: MISSING if not math.isfinite(v) else v  # noqa: E731
    gap_rows = [[r.n, r.k, r.moment, na(r.moment_se), r.reference, r.gap, na(r.gap_se)]
                for r in report.moment_rows]
    st_header = ["N", "z_re", "z_im", "empirical_re", "empirical_im", "empirical_se",
                 "reference_re", "reference_im", "gap", "gap_se"]
    st_rows = [[r.n, r.z.real, r.z.imag, r.empirical.real, r.empirical.imag, na(r.empirical_se),
                r.reference.real, r.reference.imag, r.gap, na(r.gap_se)] for r in report.stieltjes_rows]
    return (gap_header, gap_rows), (st_header, st_rows)


def _ensemble_configs(config):
    if config["samples"] < 1:
        raise ValidationError("samples must be at least 1")
    if not 1 <= config["k_max"] <= 2 * MAX_ORDER:
        raise ValidationError(f"k-max must lie in 1..{2 * MAX_ORDER}")
    return [EnsembleConfig(n, config["kernel_scale"], config["amplitude"], config["seed"]) for n in config["N"]]


def _run_study(config, out, threads):
    cfgs = _ensemble_configs(config)
    report = moment_convergence_study(cfgs, config["k_max"], config["samples"], config["z"], threads,
                                      _solver(config))
    (gh, gr), (sh, sr) = study_tables(report)
    write_csv(out / "gaps.csv", gh, gr)
    write_csv(out / "stieltjes.csv", sh, sr)
    seeds = {
        "base_seed": config["seed"],
        "derivation": "SeedSequence([base_seed, sample_index]).generate_state(1, uint64)[0]",
        "used": {str(n): len(s) for n, s in report.seeds.items()},
    }
    return report, seeds


def cmd_simulate(config, args) -> int:
    out = ensure_dir(_run_dir(args, config))
    report, seeds = _run_study(config, out, args.threads)
    dump_json(out / "manifest.json", {
        "command": "simulate",
        "config": _config_echo(config),
        "files": ["gaps.csv", "stieltjes.csv"],
        "seeds": seeds,
        "trends": report.trends,
        "versions": _versions(),
    })
    print(out)
    return EXIT_OK


def decay_table(S, config):
    z = config["z"]
    if not z.imag > 0:
        raise ValidationError(f"Im z must be positive, got {fmt(z)}")
    l = config["l"] if config["l"] is not None else S.decay_scale
    if l is None:
        raise ValidationError("a decay scale l is required")
    if config["method"] == "laurent":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SeriesDivergenceWarning)
            M = compute_coefficients(S, check_order(config["K"]), l, config["eps"]).evaluate(z).M
    elif config["method"] == "fixedpoint":
        M = solve_mde(S, z, _solver(config)).M
    else:
        raise ValidationError("method must be laurent or fixedpoint")
    return verify_offdiagonal_decay(M, l, config["eps"])


def cmd_decay(config, args) -> int:
    S, fp = read_operator(config["operator"])
    rep = decay_table(S, config)
    path = _file_target(args, config)
    write_csv(
        path,
        ["distance", "max_abs_M"],
        [[int(d), float(p)] for d, p in zip(rep.distances, rep.profile)],
        comments=[
            f"operator_fingerprint={fp}",
            f"z={fmt(config['z'])}",
            f"l={fmt(rep.l)}",
            f"eps={fmt(rep.eps)}",
            f"norm={fmt(rep.norm)}",
            f"fitted_slope={fmt(rep.fitted_slope)}",
            f"reference_slope={fmt(rep.reference_slope)}",
        ],
    )
    print(path)
    return EXIT_OK


def cmd_compare(config, args) -> int:
    out = ensure_dir(_run_dir(args, config))
    files = []
    n_failed = n_rows = 0
    for n in config["N"]:
        S = filtered_gaussian_operator(n, config["kernel_scale"], config["amplitude"], config["l"])
        op_path = out / f"operator_N{n}.covop"
        fp = write_operator(op_path, S)
        lc = write_coefficient_dir(out / f"coeffs_N{n}", S, fp, config)
        header, rows, failed = solve_rows(S, fp, {**config, "method": "both"}, lc, args.threads)
        write_csv(out / f"solve_N{n}.csv", header, rows, comments=[f"operator_fingerprint={fp}"])
        files += [op_path.name, f"coeffs_N{n}", f"solve_N{n}.csv"]
        n_failed += failed
        n_rows += len(rows)
    if n_rows and n_failed == n_rows:
        raise NumericalError("every solve failed")
    report, seeds = _run_study(config, out, args.threads)
    files += ["gaps.csv", "stieltjes.csv"]
    dump_json(out / "manifest.json", {
        "command": "compare",
        "config": _config_echo(config),
        "files": files,
        "seeds": seeds,
        "trends": report.trends,
        "versions": _versions(),
    })
    print(out)
    return EXIT_OK


COMMANDS = {
    "trees": cmd_trees,
    "operator": cmd_operator,
    "coeffs": cmd_coeffs,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "decay": cmd_decay,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is None:
            args.threads = os.cpu_count() or 1
        if args.threads < 1:
            raise ValidationError("--threads must be positive")
        config = resolve_config(args)
        return COMMANDS[args.command](config, args)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
