"""Command-line entry point: ``densecsp <command> ...``.

Exit status is 0 on success, 2 for invalid input, 3 when an enumeration cap
is exceeded and 4 when an internal invariant fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from densecsp.additive import AdditiveBackend
from densecsp.bench import bench_ratio, bench_scaling, read_csv
from densecsp.core import CspInstance, TableCsp
from densecsp.encodings.gb import GbInstance, format_gb, gb_to_csp, parse_gb
from densecsp.encodings.hier import HierProblem, Trunk, format_hier, hier_to_rigid_csp, parse_hier
from densecsp.encodings.problems import (
    minksat_to_csp,
    multiway_cut_to_csp,
    ncp_to_csp,
    parse_ncp,
    problem_from_dict,
    ugp_to_csp,
)
from densecsp.errors import DenseCspError, InvalidInputError
from densecsp.fragile import DEFAULT_GUESS_CAP, FragilePtasParams, solve_fragile
from densecsp.generators import TEMPLATES, gen_planted_csp, gen_planted_gb, gen_planted_hier
from densecsp.oracle import CSP_CAP, GB_MAX_M, HIER_CAP, exact_csp, exact_gb, exact_hier
from densecsp.report import SolveReport, jsonable
from densecsp.rigid import RigidPtasParams, solve_hierarchical, solve_rigid

ENCODE_KINDS = ("gb", "ncp", "hier", "cc", "ugp", "ksat", "mwc")


# input / output helpers ----------------------------------------------------


def _read(path: str | None) -> str:
    if path in (None, "-"):
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise InvalidInputError(f"cannot write {path}: {exc.strerror}") from exc


def _json(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{what} is not valid JSON ({exc})") from exc


def _frac(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def _load_csp_or_gb(text: str) -> tuple[CspInstance, GbInstance | None]:
    """Accepts the instance JSON, or a GB board, which stays implicit."""
    if text.lstrip().startswith("{"):
        return TableCsp.from_dict(_json(text, "instance")), None
    gb = parse_gb(text)
    return gb_to_csp(gb), gb


def _load_cc(text: str, clusters: int | None) -> tuple[CspInstance, HierProblem | None]:
    if text.lstrip().startswith("{"):
        return TableCsp.from_dict(_json(text, "instance")), None
    hp = parse_hier(text, clusters)
    if hp.M != 1:
        raise InvalidInputError("correlation clustering input must have M = 1")
    return hier_to_rigid_csp(hp, Trunk(1, hp.d)), hp


def _load_hier(text: str, levels: int | None, clusters: int | None) -> HierProblem:
    hp = parse_hier(text, clusters)
    if levels is not None and levels != hp.M:
        raise InvalidInputError(f"--levels {levels} disagrees with the file header M={hp.M}")
    return hp


def _emit_report(args, rep: SolveReport) -> None:
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["solver", "cost", "problem_cost", "seed", "assignment"])
        pc = "" if rep.problem_cost is None else str(rep.problem_cost)
        w.writerow([rep.solver, str(rep.cost), pc, rep.seed, " ".join(map(str, rep.assignment.tolist()))])
        _write(args.output, buf.getvalue())
    else:
        _write(args.output, rep.to_json() + "\n")


def _backend(args) -> AdditiveBackend:
    return AdditiveBackend(args.additive, args.additive_cap, args.additive_sample, args.seed)


# commands ------------------------------------------------------------------


def cmd_encode(args) -> None:
    text = _read(args.input)
    kind = args.kind
    if kind == "gb":
        inst = gb_to_csp(parse_gb(text), explicit=True)
    elif kind == "ncp":
        ncp = parse_ncp(text)
        k = args.k or max((len(idx) for idx, _ in ncp.equations), default=1)
        inst = ncp_to_csp(ncp, k)
    elif kind == "hier":
        hp = parse_hier(text, args.clusters)
        if args.trunk is None:
            raise InvalidInputError("encode hier needs --trunk (JSON list of parent arrays)")
        inst = hier_to_rigid_csp(hp, Trunk(hp.M, hp.d, tuple(tuple(p) for p in _json(args.trunk, "--trunk"))))
    elif kind == "cc":
        inst, _ = _load_cc(text, args.clusters)
    else:
        problem = problem_from_dict(kind, _json(text, f"{kind} problem"))
        inst = {"ugp": ugp_to_csp, "ksat": minksat_to_csp, "mwc": multiway_cut_to_csp}[kind](problem)
    _write(args.output, json.dumps(inst.to_tables().to_dict()) + "\n")


def _sidecar(args, payload: dict) -> None:
    path = args.planted or (None if args.output in (None, "-") else args.output + ".planted.json")
    if path is None:
        sys.stderr.write(json.dumps(jsonable(payload), sort_keys=True) + "\n")
    else:
        _write(path, json.dumps(jsonable(payload), sort_keys=True) + "\n")


def cmd_gen(args) -> None:
    if args.kind == "gb":
        gb, x, y = gen_planted_gb(args.m, args.noise, args.seed)
        rows, cols = (x < 0).astype(int), (y < 0).astype(int)
        cost = int((gb.bits ^ rows[:, None] ^ cols[None, :]).sum())
        _write(args.output, format_gb(gb))
        _sidecar(args, {"kind": "gb", "seed": args.seed, "rows": rows, "cols": cols, "planted_cost": cost})
    elif args.kind == "csp":
        pc = gen_planted_csp(
            args.n, args.k, args.domain_size, args.density, args.template, args.noise, args.seed, args.delta
        )
        _write(args.output, json.dumps(pc.inst.to_dict()) + "\n")
        _sidecar(
            args,
            {"kind": "csp", "seed": args.seed, "planted": pc.planted, "planted_cost": pc.planted_cost},
        )
    else:
        ph = gen_planted_hier(args.n, args.levels, args.clusters, args.noise, args.seed)
        _write(args.output, format_hier(ph.problem))
        _sidecar(
            args,
            {
                "kind": "hier",
                "seed": args.seed,
                "labels": ph.labels,
                "trunk": ph.trunk.to_list(),
                "planted_cost": ph.planted_cost,
            },
        )


def cmd_solve(args) -> None:
    text = _read(args.input)
    if args.algo == "fragile":
        if args.delta is None:
            raise InvalidInputError("solve fragile needs --delta")
        inst, _ = _load_csp_or_gb(text)
        params = FragilePtasParams(args.eps, args.delta, args.samples, args.guess_cap, args.seed, _backend(args))
        rep = solve_fragile(inst, params)
    elif args.algo == "cc":
        inst, _ = _load_cc(text, args.clusters)
        params = RigidPtasParams(
            args.eps, args.delta or Fraction(1), args.samples, seed=args.seed, guess_cap=args.guess_cap,
            additive=_backend(args),
        )
        rep = solve_rigid(inst, params)
    else:
        hp = _load_hier(text, args.levels, args.clusters)
        params = RigidPtasParams(
            args.eps, Fraction(1, hp.M), args.samples, seed=args.seed, guess_cap=args.guess_cap,
            additive=_backend(args),
        )
        rep = solve_hierarchical(hp, params)
    _emit_report(args, rep)


def cmd_oracle(args) -> None:
    text = _read(args.input)
    if args.kind == "csp":
        inst, _ = _load_csp_or_gb(text)
        x, cost = exact_csp(inst, cap=args.cap or CSP_CAP)
        rep = SolveReport("oracle-csp", cost, x, {"cap": args.cap or CSP_CAP}, problem_cost=cost * inst.cost_unit)
    elif args.kind == "gb":
        gb = parse_gb(text)
        rows, cols, cost = exact_gb(gb, max_m=args.cap or GB_MAX_M)
        x = np.concatenate([rows, cols])
        rep = SolveReport("oracle-gb", cost, x, {"cap": args.cap or GB_MAX_M}, problem_cost=cost)
    else:
        hp = _load_hier(text, args.levels, args.clusters)
        trunk, labels, cost = exact_hier(hp, cap=args.cap or HIER_CAP)
        rep = SolveReport(
            "oracle-hier", cost, labels, {"cap": args.cap or HIER_CAP}, trace={"trunk": trunk.to_list()},
            problem_cost=cost,
        )
    _emit_report(args, rep)


def cmd_bench(args) -> None:
    config = {}
    if args.config:
        source = args.config
        text = source if source.lstrip().startswith("{") else _read(source)
        if text.lstrip().startswith("# config: "):
            text = text.splitlines()[0][len("# config: "):]
        config = _json(text, "bench config")
        if not isinstance(config, dict):
            raise InvalidInputError("bench config must be a JSON object")
    if args.seed is not None and "seed" not in config:
        config["seed"] = args.seed
    if args.bench == "ratio":
        out = bench_ratio(config, threads=args.threads)
    else:
        out = bench_scaling(config, threads=args.threads)
    if args.format == "json":  # default for bench is CSV
        cfg, rows = read_csv(out)
        out = json.dumps({"config": cfg, "rows": rows}, sort_keys=True) + "\n"
    _write(args.output, out)


# parser ----------------------------------------------------------------------


def _globals(defaults: bool) -> argparse.ArgumentParser:
    # shared by the top-level parser and every subcommand, so the flags may
    # appear on either side of the command name
    p = argparse.ArgumentParser(add_help=False)
    sup = {} if defaults else {"default": argparse.SUPPRESS}
    p.add_argument("--seed", type=int, **({"default": 0} if defaults else sup))
    p.add_argument("--threads", type=int, **({"default": 1} if defaults else sup))
    # None means the command's natural format: JSON reports, CSV bench tables
    p.add_argument("--format", choices=("json", "csv"), **({"default": None} if defaults else sup))
    return p


def _io(p: argparse.ArgumentParser) -> None:
    p.add_argument("-i", "--input", default="-", help="input file (default: stdin)")
    p.add_argument("-o", "--output", default="-", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    shared = _globals(defaults=False)
    parser = argparse.ArgumentParser(prog="densecsp", parents=[_globals(defaults=True)])
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", parents=[shared], help="translate a problem file into instance JSON")
    enc.add_argument("kind", choices=ENCODE_KINDS)
    _io(enc)
    enc.add_argument("--k", type=int, help="ncp: arity to pad equations to")
    enc.add_argument("--clusters", type=int, help="hier/cc: number of clusters d (overrides the header)")
    enc.add_argument("--trunk", help="hier: JSON list of parent arrays")
    enc.set_defaults(func=cmd_encode)

    gen = sub.add_parser("gen", parents=[shared], help="generate a planted instance")
    gsub = gen.add_subparsers(dest="kind", required=True)
    g = gsub.add_parser("gb", parents=[shared])
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--noise", type=float, default=0.05)
    g = gsub.add_parser("csp", parents=[shared])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--domain-size", type=int, default=2)
    g.add_argument("--density", type=float, default=1.0)
    g.add_argument("--template", choices=TEMPLATES, default="ncp")
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--delta", type=_frac)
    g = gsub.add_parser("hier", parents=[shared])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--levels", type=int, default=2)
    g.add_argument("--clusters", type=int, default=2)
    g.add_argument("--noise", type=float, default=0.05)
    for g in gsub.choices.values():
        g.add_argument("-o", "--output", default="-")
        g.add_argument("--planted", help="sidecar path (default: OUTPUT.planted.json)")
        g.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", parents=[shared], help="run an approximation scheme")
    ssub = solve.add_subparsers(dest="algo", required=True)
    for name in ("fragile", "cc", "hier"):
        s = ssub.add_parser(name, parents=[shared])
        _io(s)
        s.add_argument("--eps", type=_frac, default=Fraction(1, 5))
        if name != "hier":
            s.add_argument("--delta", type=_frac)
        s.add_argument("--samples", type=int)
        s.add_argument("--guess-cap", type=int, default=DEFAULT_GUESS_CAP)
        s.add_argument("--additive", choices=("exact", "sampled"), default="exact")
        s.add_argument("--additive-cap", type=int, default=2**20)
        s.add_argument("--additive-sample", type=int)
        if name != "fragile":
            s.add_argument("--clusters", type=int)
        if name == "hier":
            s.add_argument("--levels", type=int)
        s.set_defaults(func=cmd_solve)

    orc = sub.add_parser("oracle", parents=[shared], help="exact brute-force optimum")
    osub = orc.add_subparsers(dest="kind", required=True)
    for name in ("csp", "gb", "hier"):
        o = osub.add_parser(name, parents=[shared])
        _io(o)
        o.add_argument("--cap", type=int, help="enumeration budget (gb: largest m)")
        if name == "hier":
            o.add_argument("--levels", type=int)
            o.add_argument("--clusters", type=int)
        o.set_defaults(func=cmd_oracle)

    bench = sub.add_parser("bench", parents=[shared], help="seeded experiment grids")
    bsub = bench.add_subparsers(dest="bench", required=True)
    for name in ("ratio", "scaling"):
        b = bsub.add_parser(name, parents=[shared])
        b.add_argument("--config", help="JSON object, a JSON file, or a bench CSV to rerun")
        b.add_argument("-o", "--output", default="-")
        b.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except DenseCspError as exc:
        print(f"densecsp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
