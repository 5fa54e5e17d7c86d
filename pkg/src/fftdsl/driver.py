"""Compilation entry points, the Cooley-Tukey program generator, and the
verification and benchmark harnesses used by the CLI."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import fft_ir as F
from .errors import BadFactorization, FFTDSLError
from .execution import Executable, ExecStats
from .frontend import parse
from .generators import reference_dft
from .loop_ir import LoopIr
from .passes import PassLevel, run_pipeline
from .plan import deserialize_plan, serialize_plan

ERROR_THRESHOLD = 1e-7

# -- compilation -------------------------------------------------------------


@dataclass
class Compilation:
    source: str
    ast: list
    fft: F.FftProgram
    ir: LoopIr
    level: PassLevel
    frontend_s: float
    pipeline_s: float
    pass_times: dict[str, float] = field(default_factory=dict)

    @property
    def source_hash(self) -> str:
        return hashlib.sha256(self.source.encode("utf-8")).hexdigest()

    def executable(self) -> Executable:
        return Executable(self.ir)

    def plan_bytes(self) -> bytes:
        meta = {"source_sha256": self.source_hash, "opt_level": self.level.name,
                "inputs": {k: list(v) for k, v in self.ir.inputs.items()}}
        return serialize_plan(self.ir, meta)

    def stats(self) -> ExecStats:
        """Stats skeleton holding the compile-time phase timings."""
        return ExecStats(frontend_s=self.frontend_s, pipeline_s=self.pipeline_s,
                         passes=dict(self.pass_times))


def compile_source(source: str, level="O3") -> Compilation:
    level = PassLevel.parse(level)
    t0 = time.perf_counter()
    decls = parse(source)
    program = F.infer_shapes(F.build_ir(decls))
    t1 = time.perf_counter()
    result = run_pipeline(program, level)
    t2 = time.perf_counter()
    return Compilation(source, decls, program, result.ir, level, t1 - t0, t2 - t1,
                       dict(result.timings))


def compile_file(path, level="O3") -> Compilation:
    with open(path, encoding="utf-8") as f:
        return compile_source(f.read(), level)


# -- program generation -----------------------------------------------------


@dataclass(frozen=True)
class GenSpec:
    """What to generate.

    ``radix`` selects the split policy: an int K splits every stage as
    ``K x (n/K)`` and needs ``n`` to be a power of K; a tuple of radices is
    consumed one per stage and must multiply to ``n``; ``None`` picks the most
    balanced split at every level.  Sizes ``<= base`` stay ``DFT(m)`` leaves.
    """

    n: int
    radix: int | tuple[int, ...] | None = 2
    base: int = 2

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise BadFactorization(f"transform size must be a positive integer, got {self.n!r}")
        if self.base < 1:
            raise BadFactorization(f"base case size must be positive, got {self.base}")

    def radices(self) -> tuple[int, ...] | None:
        if self.radix is None:
            return None
        if isinstance(self.radix, int):
            k = self.radix
            if k < 2:
                raise BadFactorization(f"radix must be at least 2, got {k}")
            e = round(math.log(self.n, k)) if self.n > 1 else 0
            if k ** e != self.n:
                raise BadFactorization(f"{self.n} is not a power of radix {k}")
            return (k,) * e if e else (1,)
        ks = tuple(self.radix)
        if not ks or any(k < 1 for k in ks) or math.prod(ks) != self.n:
            raise BadFactorization(f"radices {ks} do not multiply to {self.n}")
        return ks


def _split(n: int) -> int:
    """Largest divisor of ``n`` not exceeding its square root (1 for primes)."""
    for k in range(math.isqrt(n), 1, -1):
        if n % k == 0:
            return k
    return 1


def _stage(n: int, k: int, left: str, right: str) -> str:
    m = n // k
    return f"{left} · twiddle({n}, {m}) · {right} · Permute({n}, {k})"


def _wrap(expr: str) -> str:
    return expr if expr.startswith("DFT(") else f"({expr})"


def _expand_balanced(n: int, base: int) -> str:
    if n <= base:
        return f"DFT({n})"
    k = _split(n)
    if k == 1:
        return f"DFT({n})"
    m = n // k
    left = f"({_wrap(_expand_balanced(k, base))} ⊗ I({m}))"
    right = f"(I({k}) ⊗ {_wrap(_expand_balanced(m, base))})"
    return _stage(n, k, left, right)


def _expand_radices(n: int, radices: tuple[int, ...], base: int) -> str:
    if n <= base or len(radices) <= 1:
        return f"DFT({n})"
    k, m = radices[0], n // radices[0]
    left = f"(DFT({k}) ⊗ I({m}))"
    right = f"(I({k}) ⊗ {_wrap(_expand_radices(m, radices[1:], base))})"
    return _stage(n, k, left, right)


def cooley_tukey_expression(spec: GenSpec) -> str:
    radices = spec.radices()
    if radices is None:
        return _expand_balanced(spec.n, spec.base)
    return _expand_radices(spec.n, radices, spec.base)


def gen_cooley_tukey(spec: GenSpec) -> str:
    """DSL source computing ``DFT(n)`` on placeholder inputs via recursive splits."""
    n = spec.n
    ramp = ", ".join(f"[{i}]" for i in range(1, n + 1))
    expr = cooley_tukey_expression(spec)
    return (
        f"var InputReal <{n}, 1> = [{ramp}];\n"
        f"var InputImg <{n}, 1> = [{ramp}];\n"
        "var InputComplex = createComplex(InputReal, InputImg);\n"
        f"var result = {expr} · InputComplex;\n"
    )


def direct_dft_source(n: int) -> str:
    """The unfactored baseline ``DFT(n) · x``."""
    ramp = ", ".join(f"[{i}]" for i in range(1, n + 1))
    return (
        f"var InputReal <{n}, 1> = [{ramp}];\n"
        f"var InputImg <{n}, 1> = [{ramp}];\n"
        "var InputComplex = createComplex(InputReal, InputImg);\n"
        f"var result = DFT({n}) · InputComplex;\n"
    )


def default_spec(n: int) -> GenSpec:
    """Radix 2 for powers of two, otherwise balanced splits."""
    if n >= 2 and n & (n - 1) == 0:
        return GenSpec(n, 2, 2)
    return GenSpec(n, None, 2)


# -- verification ------------------------------------------------------------


@dataclass
class VerifyReport:
    size: int
    trial: int
    error: float
    passed: bool
    max_abs_diff: float
    diagnostics: str = ""


def random_input(rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    re = rng.uniform(-1.0, 1.0, size=(n, 1))
    im = rng.uniform(-1.0, 1.0, size=(n, 1))
    return {"InputReal": re, "InputImg": im}


def transform_error(result: np.ndarray, inputs: dict) -> tuple[float, float]:
    """(max |result - oracle| / n, max |result - oracle|)."""
    x = np.asarray(inputs["InputReal"]) + 1j * np.asarray(inputs["InputImg"])
    n = x.size
    expected = reference_dft(x.reshape(n, 1))
    diff = float(np.max(np.abs(np.asarray(result).reshape(n, 1) - expected))) if n else 0.0
    return diff / n, diff


def verify(size: int, trials: int = 10, level="O3", seed: int = 0, *, source: str | None = None,
           spec: GenSpec | None = None) -> list[VerifyReport]:
    """Compare a compiled program against the oracle on seeded random inputs.

    Compilation or execution failures become failed reports carrying the
    diagnostic instead of raising.
    """
    try:
        if source is None:
            source = gen_cooley_tukey(spec or default_spec(size))
        exe = compile_source(source, level).executable()
    except FFTDSLError as exc:
        return [VerifyReport(size, t, math.inf, False, math.inf, f"{type(exc).__name__}: {exc}")
                for t in range(trials)]
    rng = np.random.default_rng(seed)
    reports = []
    for t in range(trials):
        inputs = random_input(rng, size)
        try:
            out, _ = exe.run(inputs)
        except FFTDSLError as exc:
            reports.append(VerifyReport(size, t, math.inf, False, math.inf,
                                        f"{type(exc).__name__}: {exc}"))
            continue
        if out.shape != (size, 1):
            reports.append(VerifyReport(size, t, math.inf, False, math.inf,
                                        f"result has shape {out.shape}, expected ({size}, 1)"))
            continue
        error, diff = transform_error(out, inputs)
        reports.append(VerifyReport(size, t, error, error < ERROR_THRESHOLD, diff))
    return reports


# -- benchmarking -----------------------------------------------------------

CSV_COLUMNS = ("size", "variant", "level", "mode", "mean_s", "median_s", "stddev_s",
               "flops", "loads", "stores")


@dataclass
class BenchRow:
    size: int
    variant: str
    level: str
    mode: str
    mean_s: float
    median_s: float
    stddev_s: float
    flops: int
    loads: int
    stores: int

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


def _time_runs(run, repeats: int, rounds: int) -> tuple[float, float, float]:
    samples, round_means = [], []
    clock = time.perf_counter
    for _ in range(rounds):
        times = []
        for _ in range(repeats):
            t0 = clock()
            run()
            times.append(clock() - t0)
        samples.extend(times)
        round_means.append(statistics.fmean(times))
    stddev = statistics.stdev(round_means) if len(round_means) > 1 else 0.0
    return statistics.fmean(samples), statistics.median(samples), stddev


def bench_variants(n: int, level="O3") -> list[tuple[str, str, str]]:
    """(variant, level, source) for the direct baseline and each recursive level."""
    recursive = gen_cooley_tukey(default_spec(n))
    rows = [("direct", PassLevel.parse(level).name, direct_dft_source(n))]
    rows += [(f"recursive-{lv.name}", lv.name, recursive) for lv in PassLevel]
    return rows


def bench(sizes, level="O3", mode: str = "aot", repeats: int = 1000, rounds: int = 30,
          seed: int = 0) -> list[BenchRow]:
    """Time every variant per size; ``level`` applies to the direct baseline.

    ``aot`` times execution of a deserialized, prepared plan; ``jit`` times
    preparation plus execution of the optimized IR on every run.
    """
    if mode not in ("aot", "jit"):
        raise ValueError(f"mode must be 'aot' or 'jit', got {mode!r}")
    if repeats < 1 or rounds < 1:
        raise ValueError("repeats and rounds must be positive")
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        inputs = random_input(rng, n)
        for variant, lv, source in bench_variants(n, level):
            comp = compile_source(source, lv)
            if mode == "aot":
                exe = Executable(deserialize_plan(comp.plan_bytes()).ir)
                run = lambda exe=exe: exe.run(inputs)  # noqa: E731
            else:
                ir = comp.ir
                run = lambda ir=ir: Executable(ir).run(inputs)  # noqa: E731
            _, stats = run()
            mean, median, stddev = _time_runs(run, repeats, rounds)
            rows.append(BenchRow(n, variant, lv, mode, mean, median, stddev,
                                 stats.flops, stats.loads, stats.stores))
    return rows


def format_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in r.as_tuple()])
    return buf.getvalue()
