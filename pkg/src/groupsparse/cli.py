"""Command-line entry point.

Every subcommand reads its options from flags and, optionally, from a JSON
file given with ``--config``; flags take precedence over the file. Exit
codes: 0 success, 2 bad configuration, 3 numerical failure, 4 file problem.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import global_min_small, grec_estimate, global_recovery_bound, local_recovery_bound
from .errors import ConfigurationError, InputError, NumericalError, GroupSparseError
from .io import csv_text, dicts_csv_text, read_matrix, read_partition, read_vector, write_json, write_with_sidecar
from .model import GroupPartition, Problem, Regularizer, TWO_THIRDS, support
from .prox import prox_group
from .simlab import DEFAULT_KINDS, SimSpec, group_size_sweep, q_sweep, solution_path_scores, sparsity_sweep
from .solver import SolverConfig, pgm_solve

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# ---------------------------------------------------------------- value parsers


def parse_q(text) -> float:
    """``0.5``, ``1/2``, ``0.667`` and ``2/3`` style values; near-2/3 decimals snap to 2/3."""
    if isinstance(text, (int, float)):
        val = float(text)
    else:
        s = str(text).strip()
        if "/" in s:
            num, den = s.split("/", 1)
            val = float(num) / float(den)
        else:
            val = float(s)
    if abs(val - TWO_THIRDS) < 5e-4:
        return TWO_THIRDS
    return val


def parse_kinds(text) -> list:
    """``"2,1;2,0.5;1,2/3"`` -> ``[(2.0, 1.0), (2.0, 0.5), (1.0, 0.666...)]``."""
    if isinstance(text, list):
        return [(float(p), parse_q(q)) for p, q in text]
    kinds = []
    for item in str(text).split(";"):
        item = item.strip()
        if not item:
            continue
        p, q = item.split(",")
        kinds.append((float(p), parse_q(q)))
    if not kinds:
        raise ValueError("no kinds given")
    return kinds


def parse_float_list(text) -> list:
    if isinstance(text, list):
        return [parse_q(v) for v in text]
    return [parse_q(v) for v in str(text).split(",") if v.strip()]


def parse_int_list(text) -> list:
    if isinstance(text, list):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def parse_grid(text) -> np.ndarray:
    """``lo:hi:steps``, geometrically spaced (``steps`` points including both ends)."""
    lo, hi, steps = str(text).split(":")
    lo, hi, steps = float(lo), float(hi), int(steps)
    if not (0 < lo <= hi) or steps < 1:
        raise ValueError("lambda grid needs 0 < lo <= hi and steps >= 1")
    return np.geomspace(lo, hi, steps) if steps > 1 else np.array([lo])


def parse_vector_text(text) -> np.ndarray:
    if isinstance(text, list):
        return np.array(text, dtype=float)
    return np.array([float(v) for v in str(text).split(",")], dtype=float)


# ---------------------------------------------------------------- option tables

# name -> (type, default, help); default None with required=True means mandatory
Opt = tuple

COMMON = {
    "config": (str, None, "JSON file with option values (flags win)"),
    "threads": (int, 1, "worker processes for experiment drivers"),
}

REG = {
    "p": (float, None, "within-group norm order (1 or 2)"),
    "q": (parse_q, None, "across-group exponent in [0, 1]; 2/3 may be written 2/3 or 0.667"),
}

SOLVE_CTRL = {
    "max_iter": (int, 10_000, "iteration cap"),
    "tol": (float, 1e-8, "step tolerance on ||x_k+1 - x_k||"),
    "f_tol": (float, 1e-12, "objective change tolerance"),
    "stepsize": (float, None, "gradient stepsize (default 0.99 / (2 ||A||^2))"),
    "lambda_rule": (str, "next", "target-sparsity rule: next or midpoint"),
}

SIM = {
    "n": (int, 256, "number of unknowns"),
    "m": (int, 64, "number of measurements"),
    "sigma": (float, 0.001, "noise standard deviation"),
    "trials": (int, 50, "trials per setting"),
    "seed": (int, None, "master seed (required)"),
    "max_iter": (int, 1000, "iteration cap per trial"),
    "lambda_rule": (str, "next", "target-sparsity rule: next or midpoint"),
    "out": (str, None, "output CSV (default: stdout)"),
}

COMMANDS = {
    "prox-eval": dict(
        help="evaluate one group proximal operator",
        opts={**REG, "v": (float, None, "stepsize"), "lambda": (float, None, "regularization weight"),
              "z": (parse_vector_text, None, "comma-separated group vector")},
        required=("p", "q", "v", "lambda", "z"),
    ),
    "solve": dict(
        help="run the proximal gradient solver on a problem read from files",
        opts={"matrix": (str, None, "A as CSV or .mtx"), "rhs": (str, None, "b as CSV or .mtx"),
              "groups": (str, None, "JSON list of group sizes (default: singletons)"), **REG,
              "lambda": (float, None, "fixed regularization weight"),
              "sparsity": (int, None, "keep this many groups (lambda re-chosen each step)"),
              **SOLVE_CTRL, "out": (str, None, "write x as CSV here"),
              "summary": (str, None, "also write the JSON summary here"),
              "trace": (str, None, "write objective/support traces as CSV here")},
        required=("matrix", "rhs", "p", "q"),
    ),
    "bench-recovery": dict(
        help="recovery rates on simulated data",
        opts={**SIM, "groups_count": (int, 32, "number of equal groups"),
              "active": (parse_int_list, [1], "active group counts (comma list sweeps them)"),
              "kinds": (parse_kinds, list(DEFAULT_KINDS), "p,q pairs separated by ';'")},
        required=("seed",),
    ),
    "sweep-groupsize": dict(
        help="recovery rates across group sizes",
        opts={**SIM, "sizes": (parse_int_list, [4, 8, 16, 32], "group sizes"),
              "active": (int, 1, "active groups per instance (ignored with --active-entries)"),
              "active_entries": (int, None, "hold the number of nonzero entries fixed"),
              "kinds": (parse_kinds, list(DEFAULT_KINDS), "p,q pairs separated by ';'")},
        required=("seed",),
    ),
    "sweep-q": dict(
        help="recovery rates across q (Newton prox for non-closed-form q)",
        opts={**SIM, "groups_count": (int, 32, "number of equal groups"), "active": (int, 1, "active groups"),
              "p": (float, 2.0, "within-group norm order"),
              "q_grid": (parse_float_list, [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0], "comma list of q values")},
        required=("seed",),
    ),
    "grec-estimate": dict(
        help="sampled upper bound on the group restricted eigenvalue constant",
        opts={"matrix": (str, None, "A as CSV or .mtx"), "groups": (str, None, "JSON group sizes (default singletons)"),
              **REG, "S": (int, 1, "cone size"), "N": (int, None, "denominator size (default S)"),
              "samples": (int, 64, "draws per index set"), "refine_steps": (int, 50, "pattern-search sweeps"),
              "seed": (int, None, "master seed (required)"),
              "candidate": (parse_vector_text, None, "extra comma-separated direction to try")},
        required=("matrix", "p", "q", "seed"),
    ),
    "bounds": dict(
        help="evaluate a recovery bound",
        opts={"mode": (str, None, "global or local"), "lambda": (float, None, "regularization weight"),
              "q": (parse_q, None, "exponent"), "p": (float, 2.0, "within-group norm order (local)"),
              "S": (int, None, "group sparsity (global)"), "phi": (float, None, "restricted eigenvalue (global)"),
              "K": (int, None, "override K (global)"),
              "matrix": (str, None, "A (local)"), "xbar": (str, None, "true solution CSV (local)"),
              "groups": (str, None, "JSON group sizes (local, default singletons)")},
        required=("mode", "lambda", "q"),
    ),
    "figure1": dict(
        help="squared recovery error of the small worked example against 2 lambda^(4/3)",
        opts={"lambda_grid": (str, "1e-4:0.5:5", "lo:hi:steps, geometric"),
              "grid_step": (float, 0.01, "finest grid spacing"), "refine": (int, 200, "polishing steps"),
              "out": (str, None, "output CSV (default: stdout)")},
        required=(),
    ),
    "path-scores": dict(
        help="score groups by how early they enter the sparsity path",
        opts={"matrix": (str, None, "A as CSV or .mtx"), "rhs": (str, None, "b (vector or matrix, one column per target)"),
              "groups": (str, None, "JSON group sizes (default singletons)"), **REG,
              "k_max": (int, 10, "largest sparsity level"), "max_iter": (int, 1000, "iteration cap per solve"),
              "lambda_rule": (str, "next", "next or midpoint"),
              "out": (str, None, "output CSV (default: stdout)")},
        required=("matrix", "rhs", "p", "q"),
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupsparse", description="Group-sparse l_{p,q} regularized least squares.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, spec in COMMANDS.items():
        sp = sub.add_parser(name, help=spec["help"], description=spec["help"], argument_default=argparse.SUPPRESS)
        for key, (typ, default, hlp) in {**spec["opts"], **COMMON}.items():
            flag = "--" + key.replace("_", "-")
            shown = "" if default is None else f" [default: {default}]"
            sp.add_argument(flag, dest=key, type=typ, help=hlp + shown)
    return parser


def parse_config(argv: Sequence[str]) -> tuple[str, dict]:
    """Parse arguments into ``(command, options)``; flags override ``--config`` values.

    Raises ConfigurationError on malformed config files, unknown config
    keys, missing required options or conflicting flags.
    """
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        raise ConfigurationError("no subcommand given")
    cmd = ns.command
    spec = COMMANDS[cmd]
    table = {**spec["opts"], **COMMON}
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    merged = {k: d for k, (_, d, _) in table.items()}
    if "config" in flags:
        try:
            with open(flags["config"], encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {flags['config']}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"malformed config JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigurationError("config file must hold a JSON object")
        for key, val in cfg.items():
            k = key.replace("-", "_")
            if k not in table or k == "config":
                raise ConfigurationError(f"unknown config key {key!r} for {cmd}")
            try:
                merged[k] = table[k][0](val) if val is not None else None
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"bad value for {key}: {exc}") from exc
    merged.update(flags)
    missing = [k for k in spec["required"] if merged.get(k) is None]
    if missing:
        raise ConfigurationError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    if cmd == "solve":
        if (merged.get("lambda") is None) == (merged.get("sparsity") is None):
            raise ConfigurationError("solve needs exactly one of --lambda and --sparsity")
    return cmd, merged


# ---------------------------------------------------------------- commands


def _emit(text: str, out: Optional[str], meta: dict) -> None:
    if out:
        write_with_sidecar(out, text, meta)
    else:
        sys.stdout.write(text)


def _meta(cmd: str, opts: dict) -> dict:
    clean = {}
    for k, v in opts.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        clean[k] = v
    return {"tool": "groupsparse", "version": __version__, "command": cmd, "config": clean, "seed": opts.get("seed")}


def _partition(opts, n: int) -> GroupPartition:
    if opts.get("groups"):
        part = read_partition(opts["groups"])
        if part.n != n:
            raise ConfigurationError(f"partition covers {part.n} coordinates, matrix has {n} columns")
        return part
    return GroupPartition.singletons(n)


def _reg(opts, lam=0.0) -> Regularizer:
    return Regularizer(opts["p"], opts["q"], lam)


def cmd_prox_eval(opts) -> int:
    res = prox_group(opts["z"], opts["v"], opts["lambda"], float(opts["p"]), opts["q"])
    header = [f"x{i + 1}" for i in range(res.x.size)] + ["Q"]
    sys.stdout.write(csv_text(header, [list(res.x) + [res.value]]))
    return EXIT_OK


def cmd_solve(opts) -> int:
    A = read_matrix(opts["matrix"])
    b = read_vector(opts["rhs"])
    part = _partition(opts, A.shape[1])
    A_c = part.to_contiguous(A)
    contiguous = GroupPartition(part.sizes)
    lam = opts.get("lambda") or 0.0
    prob = Problem(A_c, b, contiguous, _reg(opts, lam))
    cfg = SolverConfig(
        stepsize=opts.get("stepsize"),
        max_iter=opts["max_iter"],
        x_tol=opts["tol"],
        f_tol=opts["f_tol"],
        target_sparsity=opts.get("sparsity"),
        lambda_rule=opts["lambda_rule"],
    )
    rep = pgm_solve(prob, cfg)
    x = part.from_contiguous(rep.x)
    summary = {
        "iterations": rep.iterations,
        "status": rep.status,
        "final_objective": rep.final_objective,
        "lambda_used": rep.lambda_used,
        "stepsize": rep.stepsize,
        "support": sorted(support(rep.x, contiguous)),
    }
    meta = _meta("solve", opts)
    if opts.get("out"):
        write_with_sidecar(opts["out"], csv_text(["x"], ([v] for v in x)), meta)
    else:
        summary["x"] = [float(v) for v in x]
    if opts.get("trace"):
        rows = ([k, f, " ".join(str(g) for g in sorted(s))] for k, (f, s) in enumerate(zip(rep.objective_trace, rep.support_trace)))
        write_with_sidecar(opts["trace"], csv_text(["iteration", "objective", "support"], rows), meta)
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if opts.get("summary"):
        write_json(opts["summary"], summary)
    sys.stdout.write(text)
    return EXIT_OK


def _sim_spec(opts, r: int, active: int) -> SimSpec:
    try:
        return SimSpec(n=opts["n"], m=opts["m"], r=r, active_groups=active, noise_sigma=opts["sigma"],
                       trials=opts["trials"], master_seed=opts["seed"])
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def _check_kinds(kinds):
    for p, q in kinds:
        Regularizer(p, q, 0.0)
        if p not in (1.0, 2.0):
            raise ConfigurationError(f"p={p}: only p = 1 and p = 2 are supported by the solver")


def _drive_kw(opts) -> dict:
    return dict(max_iter=opts["max_iter"], lambda_rule=opts["lambda_rule"], threads=opts["threads"])


def cmd_bench_recovery(opts) -> int:
    _check_kinds(opts["kinds"])
    spec = _sim_spec(opts, opts["groups_count"], max(opts["active"]))
    rows = sparsity_sweep(spec, opts["active"], opts["kinds"], **_drive_kw(opts))
    _emit(dicts_csv_text(rows), opts.get("out"), _meta("bench-recovery", opts))
    return EXIT_OK


def cmd_sweep_groupsize(opts) -> int:
    _check_kinds(opts["kinds"])
    sizes = opts["sizes"]
    for s in sizes:
        if s < 1 or opts["n"] % s:
            raise ConfigurationError(f"group size {s} does not divide n={opts['n']}")
    spec = _sim_spec(opts, opts["n"] // sizes[0] if sizes else opts["n"], opts["active"])
    try:
        rows = group_size_sweep(spec, sizes, opts["kinds"], active_entries=opts.get("active_entries"), **_drive_kw(opts))
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    _emit(dicts_csv_text(rows), opts.get("out"), _meta("sweep-groupsize", opts))
    return EXIT_OK


def cmd_sweep_q(opts) -> int:
    _check_kinds([(opts["p"], q) for q in opts["q_grid"]])
    spec = _sim_spec(opts, opts["groups_count"], opts["active"])
    rows = q_sweep(spec, opts["p"], opts["q_grid"], **_drive_kw(opts))
    _emit(dicts_csv_text(rows), opts.get("out"), _meta("sweep-q", opts))
    return EXIT_OK


def cmd_grec_estimate(opts) -> int:
    A = read_matrix(opts["matrix"])
    part = _partition(opts, A.shape[1])
    A = part.to_contiguous(A)
    _reg(opts)
    N = opts.get("N") or opts["S"]
    cands = [opts["candidate"]] if opts.get("candidate") is not None else None
    try:
        est = grec_estimate(A, GroupPartition(part.sizes), opts["p"], opts["q"], opts["S"], N,
                            samples=opts["samples"], refine_steps=opts["refine_steps"], seed=opts["seed"],
                            candidates=[part.to_contiguous(c) for c in cands] if cands else None)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    out = {
        "phi_upper": est.phi_upper,
        "witness": [float(v) for v in part.from_contiguous(est.witness)],
        "witness_index_set": sorted(est.witness_index_set),
    }
    sys.stdout.write(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_bounds(opts) -> int:
    mode = opts["mode"]
    lam, q = opts["lambda"], opts["q"]
    if mode == "global":
        if opts.get("S") is None or opts.get("phi") is None:
            raise ConfigurationError("global bound needs --S and --phi")
        try:
            val = global_recovery_bound(lam, opts["S"], q, opts["phi"], opts.get("K"))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
    elif mode == "local":
        if not opts.get("matrix") or not opts.get("xbar"):
            raise ConfigurationError("local bound needs --matrix and --xbar")
        A = read_matrix(opts["matrix"])
        xbar = read_vector(opts["xbar"])
        part = _partition(opts, A.shape[1])
        if xbar.size != A.shape[1]:
            raise ConfigurationError("xbar length does not match the matrix")
        Ac, xc = part.to_contiguous(A), part.to_contiguous(xbar)
        groups = [xc[a:b] for a, b in GroupPartition(part.sizes).bounds if np.any(xc[a:b])]
        active = np.flatnonzero(xc)
        try:
            val = local_recovery_bound(lam, q, opts["p"], Ac[:, active], groups)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
    else:
        raise ConfigurationError(f"unknown bound mode {mode!r}")
    sys.stdout.write(repr(float(val)) + "\n")
    return EXIT_OK


WORKED_A = np.array([[2.0, 3.0, 1.0], [2.0, 1.0, 3.0]])
WORKED_XBAR = np.array([1.0, 0.0, 0.0])


def cmd_figure1(opts) -> int:
    try:
        lams = parse_grid(opts["lambda_grid"])
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    b = WORKED_A @ WORKED_XBAR
    rows = []
    for lam in lams:
        prob = Problem(WORKED_A, b, GroupPartition.singletons(3), Regularizer(2.0, 0.5, float(lam)))
        x = global_min_small(prob, opts["grid_step"], opts["refine"], xbar=WORKED_XBAR)
        err = float(np.sum((x - WORKED_XBAR) ** 2))
        rows.append([float(lam), err, 2.0 * float(lam) ** (4.0 / 3.0)])
    _emit(csv_text(["lambda", "error_sq", "bound"], rows), opts.get("out"), _meta("figure1", opts))
    return EXIT_OK


def cmd_path_scores(opts) -> int:
    A = read_matrix(opts["matrix"])
    B = read_matrix(opts["rhs"])
    if B.shape[0] == 1 and B.shape[1] == A.shape[0]:
        B = B.T
    if B.shape[0] != A.shape[0]:
        raise ConfigurationError("rhs rows do not match the matrix")
    part = _partition(opts, A.shape[1])
    _reg(opts)
    scores = solution_path_scores(part.to_contiguous(A), B, GroupPartition(part.sizes), opts["p"], opts["q"],
                                  opts["k_max"], max_iter=opts["max_iter"], lambda_rule=opts["lambda_rule"])
    rows = [[g, j, scores[g, j]] for g in range(scores.shape[0]) for j in range(scores.shape[1])]
    _emit(csv_text(["group", "target", "score"], rows), opts.get("out"), _meta("path-scores", opts))
    return EXIT_OK


HANDLERS: dict[str, Callable[[dict], int]] = {
    "prox-eval": cmd_prox_eval,
    "solve": cmd_solve,
    "bench-recovery": cmd_bench_recovery,
    "sweep-groupsize": cmd_sweep_groupsize,
    "sweep-q": cmd_sweep_q,
    "grec-estimate": cmd_grec_estimate,
    "bounds": cmd_bounds,
    "figure1": cmd_figure1,
    "path-scores": cmd_path_scores,
}


def run(command: str, opts: dict) -> int:
    """Execute a parsed command and map failures to exit codes."""
    try:
        if opts.get("threads", 1) < 1:
            raise ConfigurationError("--threads must be at least 1")
        if "lambda_rule" in opts and opts["lambda_rule"] not in ("next", "midpoint"):
            raise ConfigurationError("--lambda-rule must be next or midpoint")
        return HANDLERS[command](opts)
    except InputError as exc:
        print(f"groupsparse: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"groupsparse: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, GroupSparseError, ValueError) as exc:
        print(f"groupsparse: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"groupsparse: error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        command, opts = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    except InputError as exc:
        print(f"groupsparse: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigurationError as exc:
        print(f"groupsparse: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(command, opts)


if __name__ == "__main__":
    sys.exit(main())
