"""Command-line front end: ``carnot-tangent <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli

from . import curves
from .errors import CarnotError
from .fixtures import load_structure
from .freecarnot import bch, build_hall_basis, lift_structure, projection_rank_at_zero
from .jets import as_rational, rational_str
from .nilpotent import approximate
from .verify import run_verification

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unreadable input; exits with status 2."""


@dataclass
class RunConfig:
    subcommand: str
    inputs: list[str] = field(default_factory=list)
    order: int | None = None
    step: int | None = None
    rk4_step: float = 1e-3
    tol: float = 1e-6
    out: str | None = None
    jobs: int = 1
    t0: float = 0.0
    etas: list[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    window: float = 1.0
    side: str = "both"

    def validate(self) -> None:
        if self.tol <= 0:
            raise UsageError("--tol must be positive")
        if self.rk4_step <= 0:
            raise UsageError("--rk4-step must be positive")
        if self.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        if self.order is not None and self.step is not None and self.order < self.step:
            raise UsageError("--order must be at least --step")
        if self.side not in ("both", "right", "left"):
            raise UsageError("--side must be both, right or left")


def _dump(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _emit(config: RunConfig, name: str, text: str) -> None:
    if config.out:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["%.17g" % x for x in row])


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise UsageError(f"{path}:{err.lineno}:{err.colno}: malformed JSON: {err.msg}") from err
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err.strerror}") from err


def _structure(source: str):
    if Path(source).suffix == ".json" or Path(source).exists():
        from .ccfields import CCStructure
        try:
            return CCStructure.from_json(_read_json(source))
        except (KeyError, TypeError, ValueError) as err:
            raise UsageError(f"{source}: invalid structure: {err}") from err
    try:
        return load_structure(source)
    except FileNotFoundError as err:
        raise UsageError(str(err)) from err


def _control(source: str) -> curves.Control:
    data = _read_json(source)
    try:
        return curves.Control.from_json(data)
    except (KeyError, TypeError, ValueError) as err:
        raise UsageError(f"{source}: invalid control: {err}") from err


# -- subcommands -------------------------------------------------------------------

def cmd_approximate(config: RunConfig) -> int:
    X = _structure(config.inputs[0])
    A = approximate(X, config.order, config.step)
    _emit(config, "approximation.json", _dump(A.to_json()))
    return EXIT_OK


_VECTOR = re.compile(r"^\[(.*)\]$")


def parse_bch_tokens(tokens: list[str]) -> tuple[int, int, list, list]:
    """Parse ``r=2 s=2 A=[1,0,0] B=[0,1,0]``."""
    values = {}
    for tok in tokens:
        if "=" not in tok:
            raise UsageError(f"expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        values[key.strip()] = val.strip()
    missing = {"r", "s", "A", "B"} - set(values)
    if missing:
        raise UsageError(f"missing {', '.join(sorted(missing))}")
    try:
        r, s = int(values["r"]), int(values["s"])
    except ValueError as err:
        raise UsageError(f"r and s must be integers: {err}") from err

    def vector(key):
        m = _VECTOR.match(values[key])
        if not m:
            raise UsageError(f"{key} must look like [p/q,...], got {values[key]!r}")
        try:
            return [as_rational(x) for x in m.group(1).split(",") if x.strip()]
        except (ValueError, TypeError) as err:
            raise UsageError(f"{key}: {err}") from err

    return r, s, vector("A"), vector("B")


def cmd_bch(config: RunConfig) -> int:
    r, s, a, b = parse_bch_tokens(config.inputs)
    basis = build_hall_basis(r, s)
    if len(a) != basis.dim or len(b) != basis.dim:
        raise UsageError(f"A and B need {basis.dim} coefficients for r={r}, s={s}")
    P = bch(basis.element(a), basis.element(b))
    text = "[" + ",".join(P.to_strings()) + "]\n"
    if config.out:
        _emit(config, "bch.json", _dump({
            "r": r, "s": s, "A": [rational_str(x) for x in a], "B": [rational_str(x) for x in b],
            "product": P.to_strings(), "basis": [basis.word(k) for k in range(basis.dim)]}))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_lift_info(config: RunConfig) -> int:
    X = _structure(config.inputs[0])
    A = approximate(X, config.order, config.step)
    L = lift_structure(A.nilpotent)
    info = {
        "n": L.n,
        "rank": L.basis.r,
        "step": L.basis.s,
        "dim_F": L.basis.dim,
        "layer_dims": list(L.basis.layer_dims),
        "basis": [L.basis.word(k) for k in range(L.basis.dim)],
        "pi_rank_at_zero": projection_rank_at_zero(L),
    }
    _emit(config, "lift_info.json", _dump(info))
    return EXIT_OK


def cmd_blowup(config: RunConfig) -> int:
    if len(config.inputs) < 2:
        raise UsageError("blowup needs a structure and a control")
    X = _structure(config.inputs[0])
    h = _control(config.inputs[1])
    A = approximate(X, config.order, config.step)
    system = curves.FieldSystem.from_fields(A.exponential.fields)
    etas = sorted(config.etas, reverse=True)
    family = curves.blowup_family(system, h, config.t0, etas, config.window, config.rk4_step, config.side,
                                  jobs=config.jobs)
    verdict = curves.detect_halfline(family, config.tol, r=system.r)
    out = Path(config.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    header = ["tau"] + [f"x{j + 1}" for j in range(system.n)]
    for k, (eta, c) in enumerate(zip(etas, family)):
        _write_csv(out / f"blowup_{k:02d}.csv", header, np.column_stack([c.times, c.states]))
    report = verdict.to_json()
    report["etas"] = etas
    report["files"] = [f"blowup_{k:02d}.csv" for k in range(len(etas))]
    (out / "blowup_verdict.json").write_text(_dump(report), encoding="utf-8")
    sys.stdout.write(_dump(report))
    return EXIT_OK


def cmd_lift(config: RunConfig) -> int:
    if len(config.inputs) < 2:
        raise UsageError("lift needs a structure and a control")
    X = _structure(config.inputs[0])
    h = _control(config.inputs[1])
    A = approximate(X, config.order, config.step)
    L = lift_structure(A.nilpotent)
    out = Path(config.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    try:
        rep = curves.lift_curve(h, L, config.rk4_step, tol=config.tol)
        status = EXIT_OK
        header = ["t"] + [f"a{k + 1}" for k in range(L.basis.dim)]
        _write_csv(out / "lift.csv", header, np.column_stack([rep.lift.times, rep.lift.states]))
        report = {"defect": rep.defect, "lift_length": rep.lift_length, "curve_length": rep.curve_length,
                  "basis": [L.basis.word(k) for k in range(L.basis.dim)], "ok": True}
    except CarnotError as err:
        status = EXIT_FAIL
        report = {"ok": False, "error": str(err)}
    (out / "lift_report.json").write_text(_dump(report), encoding="utf-8")
    sys.stdout.write(_dump(report))
    return status


def cmd_verify(config: RunConfig) -> int:
    source = config.inputs[0]
    X = _structure(source)
    report = run_verification(X, Path(source).stem, config.order, config.step, config.tol,
                              config.rk4_step, config.jobs)
    if config.out:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(_dump(report.to_json()), encoding="utf-8")
    sys.stdout.write(report.table() + "\n")
    return EXIT_OK if report.ok else EXIT_FAIL


COMMANDS = {
    "approximate": cmd_approximate,
    "bch": cmd_bch,
    "lift-info": cmd_lift_info,
    "blowup": cmd_blowup,
    "lift": cmd_lift,
    "verify": cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML file with default option values")
    common.add_argument("--order", type=int, help="truncation order N (default 2s)")
    common.add_argument("--step", type=int, help="maximal bracket length when selecting the frame")
    common.add_argument("--tol", type=float, help="tolerance for numeric checks")
    common.add_argument("--rk4-step", type=float, dest="rk4_step", help="RK4 step size")
    common.add_argument("--jobs", type=int, help="parallel workers")
    common.add_argument("--out", help="output directory")

    parser = _Parser(prog="carnot-tangent", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    p = sub.add_parser("approximate", parents=[common], help="nilpotent approximation of a structure")
    p.add_argument("structure")
    p = sub.add_parser("bch", parents=[common], help="BCH product: r=.. s=.. A=[..] B=[..]")
    p.add_argument("tokens", nargs="+")
    p = sub.add_parser("lift-info", parents=[common], help="free group dimensions and projection rank")
    p.add_argument("structure")
    p = sub.add_parser("blowup", parents=[common], help="blow-up family of a horizontal curve")
    p.add_argument("structure")
    p.add_argument("control")
    p.add_argument("--t0", type=float)
    p.add_argument("--eta", type=float, nargs="+", dest="etas")
    p.add_argument("--window", type=float)
    p.add_argument("--side", choices=["both", "right", "left"])
    p = sub.add_parser("lift", parents=[common], help="lift a control to the free group")
    p.add_argument("structure")
    p.add_argument("control")
    p = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p.add_argument("structure")
    return parser


def make_config(argv: list[str]) -> RunConfig:
    args = build_parser().parse_args(argv)
    config = RunConfig(args.subcommand)
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                table = tomli.load(fh)
        except OSError as err:
            raise UsageError(f"cannot read {args.config}: {err.strerror}") from err
        except tomli.TOMLDecodeError as err:
            raise UsageError(f"{args.config}: malformed TOML: {err}") from err
        known = {f.name for f in fields(RunConfig)} - {"subcommand", "inputs"}
        for key, value in table.items():
            key = key.replace("-", "_")
            if key not in known:
                raise UsageError(f"{args.config}: unknown option {key!r}")
            setattr(config, key, value)
    for key in ("order", "step", "tol", "rk4_step", "jobs", "out", "t0", "etas", "window", "side"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    if args.subcommand == "bch":
        config.inputs = list(args.tokens)
    elif args.subcommand in ("blowup", "lift"):
        config.inputs = [args.structure, args.control]
    else:
        config.inputs = [args.structure]
    config.validate()
    return config


def run(config: RunConfig) -> int:
    return COMMANDS[config.subcommand](config)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = make_config(argv)
        return run(config)
    except UsageError as err:
        sys.stderr.write(f"carnot-tangent: error: {err}\n")
        return EXIT_USAGE
    except CarnotError as err:
        sys.stderr.write(f"carnot-tangent: {type(err).__name__}: {err}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
