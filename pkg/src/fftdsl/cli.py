"""Command-line interface: ``fftdsl compile|run|gen|verify|bench``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import driver
from .errors import FFTDSLError
from .execution import Executable, ExecStats
from .fft_ir import dump_ir
from .frontend import dump_ast
from .loop_ir import dump_loop_ir
from .passes import PassLevel
from .plan import deserialize_plan, is_plan


def _level(text: str) -> PassLevel:
    try:
        return PassLevel.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not sizes or any(n < 1 for n in sizes):
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return sizes


def _radix(text: str):
    if text == "balanced":
        return None
    parts = _sizes(text)
    return parts[0] if len(parts) == 1 else tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fftdsl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a program and print an intermediate form")
    c.add_argument("file")
    c.add_argument("--emit", choices=("ast", "fft-ir", "loop-ir", "plan"), default="loop-ir")
    c.add_argument("--opt", type=_level, default=PassLevel.O3)
    c.add_argument("-o", "--output")

    r = sub.add_parser("run", help="execute a program or a compiled plan")
    r.add_argument("file")
    r.add_argument("--mode", choices=("jit", "aot"), default="jit")
    r.add_argument("--input", help="JSON object or path to a JSON file mapping input names "
                                   "to nested lists")
    r.add_argument("--opt", type=_level, default=PassLevel.O3)
    r.add_argument("--timing", action="store_true", help="print phase timings and counters")

    g = sub.add_parser("gen", help="generate a recursive Cooley-Tukey program")
    g.add_argument("--size", type=int, required=True)
    g.add_argument("--radix", type=_radix, default=2,
                   help="radix K, comma-separated radices per stage, or 'balanced'")
    g.add_argument("--base", type=int, default=2)
    g.add_argument("-o", "--output")

    v = sub.add_parser("verify", help="check a program against the reference DFT")
    v.add_argument("--size", type=int, required=True)
    v.add_argument("--trials", type=int, default=10)
    v.add_argument("--opt", type=_level, default=PassLevel.O3)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--file", help="program to verify instead of a generated one")

    b = sub.add_parser("bench", help="time direct and recursive variants")
    b.add_argument("--sizes", type=_sizes, default=[32, 64])
    b.add_argument("--opt", type=_level, default=PassLevel.O3)
    b.add_argument("--mode", choices=("jit", "aot"), default="aot")
    b.add_argument("--repeats", type=int, default=1000)
    b.add_argument("--rounds", type=int, default=30)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", help="write CSV here instead of stdout")
    return p


def _write(path, data) -> None:
    if path is None:
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
            sys.stdout.buffer.flush()
        else:
            sys.stdout.write(data)
        return
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode, **({} if mode == "wb" else {"encoding": "utf-8"})) as f:
        f.write(data)


def _read_inputs(arg):
    if arg is None:
        return None
    text = arg
    if os.path.exists(arg):
        with open(arg, encoding="utf-8") as f:
            text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FFTDSLError(f"--input is neither a JSON file nor valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise FFTDSLError("--input must be a JSON object mapping input names to values")
    return data


def _format_result(out: np.ndarray) -> str:
    return json.dumps({"shape": list(out.shape), "real": out.real.tolist(),
                       "imag": out.imag.tolist()})


def cmd_compile(args) -> int:
    comp = driver.compile_file(args.file, args.opt)
    if args.emit == "ast":
        _write(args.output, dump_ast(comp.ast))
    elif args.emit == "fft-ir":
        _write(args.output, dump_ir(comp.fft))
    elif args.emit == "loop-ir":
        _write(args.output, dump_loop_ir(comp.ir))
    else:
        _write(args.output, comp.plan_bytes())
    return 0


def cmd_run(args) -> int:
    inputs = _read_inputs(args.input)
    with open(args.file, "rb") as f:
        data = f.read()
    if is_plan(data):
        stats = ExecStats()
        exe = Executable(deserialize_plan(data).ir)
    else:
        comp = driver.compile_source(data.decode("utf-8"), args.opt)
        stats = comp.stats()
        ir = deserialize_plan(comp.plan_bytes()).ir if args.mode == "aot" else comp.ir
        exe = Executable(ir)
    out, run_stats = exe.run(inputs)
    print(_format_result(out))
    if args.timing:
        for key in ("execution_s", "loads", "stores", "muls", "adds"):
            setattr(stats, key, getattr(run_stats, key))
        print(stats.to_json())
    return 0


def cmd_gen(args) -> int:
    source = driver.gen_cooley_tukey(driver.GenSpec(args.size, args.radix, args.base))
    _write(args.output, source)
    return 0


def cmd_verify(args) -> int:
    source = None
    if args.file:
        with open(args.file, encoding="utf-8") as f:
            source = f.read()
    reports = driver.verify(args.size, args.trials, args.opt, args.seed, source=source)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        line = f"size={r.size} trial={r.trial} error={r.error:.3e} {status}"
        if r.diagnostics:
            line += f" ({r.diagnostics})"
        print(line)
    ok = all(r.passed for r in reports)
    print(f"{sum(r.passed for r in reports)}/{len(reports)} trials passed "
          f"(threshold {driver.ERROR_THRESHOLD:g})")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    rows = driver.bench(args.sizes, args.opt, args.mode, args.repeats, args.rounds, args.seed)
    _write(args.csv, driver.format_csv(rows))
    return 0


COMMANDS = {"compile": cmd_compile, "run": cmd_run, "gen": cmd_gen, "verify": cmd_verify,
            "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (FFTDSLError, OSError, UnicodeDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
