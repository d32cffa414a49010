"""Benchmark and verification command line interface.

Subcommands:

* ``bench``          time the backward strategies and report wall times,
                     throughput, and optionally instrumented access counts
* ``verify``         run a named verification suite, exit 0 only if it passes
* ``flops``          print the closed-form parameter and FLOP counts
* ``fit-activation`` fit a coefficient preset and write it to a file

Exit codes: 0 all assertions pass, 1 assertion failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import os
import struct
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .access import FlopsConfig, instrumented_backward
from .access import (
    flops_grkan,
    flops_kan,
    flops_mlp,
    params_grkan,
    params_kan,
    params_mlp,
)
from .backward import (
    DEFAULT_BLOCK_SIZE,
    STRATEGY_BLOCKED,
    STRATEGY_NAIVE,
    ExecutionPlan,
    backward_blocked,
    backward_naive,
)
from .errors import GrkanError
from .layer import fit_activation_coeffs, save_coeff_preset
from .rational import ActivationTensor, GroupLayout, GroupRationalParams, forward_tensor
from .verification import normal_ci95_half_width, run_suite

DUMP_MAGIC = b"GRKB"
DUMP_VERSION = 1
DUMP_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class UsageError(GrkanError):
    """Bad flag combination or invalid configuration; exits with code 2."""


@dataclass
class BenchConfig:
    batch: int = 1024
    seqlen: int = 197
    dim: int = 768
    groups: int = 8
    num_coeffs: int = 6
    den_coeffs: int = 4
    block_size: int = DEFAULT_BLOCK_SIZE
    strategy: str = "blocked"
    precision: str = "single"
    seed: int = 0
    repeats: int = 100
    warmup: int = 5
    output_format: str = "json"
    output_path: str | None = None
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    instrument: bool = False
    include_forward: bool = False
    dump_path: str | None = None

    def validate(self) -> None:
        if min(self.batch, self.seqlen, self.dim, self.groups) < 1:
            raise UsageError("dimensions must be positive")
        if self.dim % self.groups != 0:
            raise UsageError("layout mismatch: dim %d not divisible by groups %d"
                             % (self.dim, self.groups))
        if self.repeats < 1:
            raise UsageError("repeats must be >= 1")
        if self.warmup < 0:
            raise UsageError("warmup must be >= 0")
        if self.num_coeffs < 1 or self.den_coeffs < 0:
            raise UsageError("need at least one numerator coefficient and den_coeffs >= 0")
        if self.strategy not in ("naive", "blocked", "both"):
            raise UsageError("strategy must be naive, blocked, or both")
        if self.precision not in ("single", "double"):
            raise UsageError("precision must be single or double")
        if self.output_format not in ("json", "csv"):
            raise UsageError("output format must be json or csv")
        if self.block_size < 1 or self.workers < 1:
            raise UsageError("block_size and workers must be >= 1")


def write_tensor_dump(path: str, tensor: ActivationTensor) -> None:
    """Binary dump: magic, u32 version, u8 dtype code, three u64 dims, payload.

    The payload is the raw little-endian row-major element stream.
    """
    code = DUMP_DTYPE_CODES[tensor.data.dtype]
    header = struct.pack("<4sIB", DUMP_MAGIC, DUMP_VERSION, code)
    dims = struct.pack("<3Q", tensor.batch, tensor.seq, tensor.feature)
    little = tensor.data.astype("<f4" if code == 0 else "<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(little.tobytes(order="C"))


def read_tensor_dump(path: str) -> ActivationTensor:
    with open(path, "rb") as fh:
        magic, version, code = struct.unpack("<4sIB", fh.read(9))
        if magic != DUMP_MAGIC:
            raise ValueError("not a tensor dump (bad magic %r)" % (magic,))
        if version != DUMP_VERSION:
            raise ValueError("unsupported dump version %d" % version)
        batch, seq, feat = struct.unpack("<3Q", fh.read(24))
        dtype = "<f4" if code == 0 else "<f8"
        data = np.frombuffer(fh.read(), dtype=dtype).reshape(batch, seq, feat)
    return ActivationTensor(np.ascontiguousarray(data))


def _canonical_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def run_bench(config: BenchConfig) -> dict:
    """Run the configured benchmark and return the report payload.

    Data generation, validation, and instrumentation run outside the timed
    region; each timed repeat covers one backward pass (plus one forward pass
    with include_forward).
    """
    config.validate()
    dtype = np.float32 if config.precision == "single" else np.float64
    layout = GroupLayout(config.dim, config.groups)
    rng = np.random.default_rng(config.seed)
    x = ActivationTensor(
        rng.standard_normal((config.batch, config.seqlen, config.dim)).astype(dtype),
        validated=True,
    )
    upstream = ActivationTensor(
        rng.standard_normal((config.batch, config.seqlen, config.dim)).astype(dtype),
        validated=True,
    )
    params = GroupRationalParams(
        rng.standard_normal((config.groups, config.num_coeffs)),
        rng.standard_normal((config.groups, config.den_coeffs)),
    )

    strategies = {
        "naive": [STRATEGY_NAIVE],
        "blocked": [STRATEGY_BLOCKED],
        "both": [STRATEGY_NAIVE, STRATEGY_BLOCKED],
    }[config.strategy]

    elements = config.batch * config.seqlen * config.dim
    results: dict[str, dict] = {}
    last_bundle = None
    for strategy in strategies:
        if strategy == STRATEGY_NAIVE:
            plan = ExecutionPlan.naive(config.batch, config.seqlen, layout, config.block_size)

            def step():
                if config.include_forward:
                    forward_tensor(x, params, layout, validate=False)
                return backward_naive(x, upstream, params, plan, validate=False)
        else:
            plan = ExecutionPlan.blocked(config.batch, config.seqlen, layout, config.block_size)

            def step():
                if config.include_forward:
                    forward_tensor(x, params, layout, validate=False)
                return backward_blocked(
                    x, upstream, params, plan, workers=config.workers, validate=False
                )

        for _ in range(config.warmup):
            step()
        wall_times = []
        for _ in range(config.repeats):
            t0 = time.perf_counter()
            last_bundle = step()
            wall_times.append(time.perf_counter() - t0)
        times = np.asarray(wall_times)
        mean = float(times.mean())
        entry = {
            "wall_times_seconds": [float(t) for t in wall_times],
            "mean_seconds": mean,
            "ci95_half_width_seconds": _none_if_nan(normal_ci95_half_width(times)),
            "throughput_elements_per_second": elements / mean,
            "images_per_second_equivalent": config.batch / mean,
        }
        if config.instrument:
            _, report = instrumented_backward(
                x, upstream, params, plan, workers=config.workers, validate=False
            )
            entry["access_report"] = report.to_dict()
        results[strategy] = entry

    payload = {
        "config": asdict(config),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "elements_per_pass": elements,
        "throughput_definition": (
            "elements_per_second = batch * seqlen * dim / mean backward wall time; "
            "one image equivalent = one seqlen x dim slice, so "
            "images_per_second_equivalent = batch / mean backward wall time"
        ),
        "results": results,
    }
    if len(strategies) == 2:
        payload["speedup_vs"] = {
            "naive_over_blocked_wall_clock":
                results[STRATEGY_NAIVE]["mean_seconds"] / results[STRATEGY_BLOCKED]["mean_seconds"]
        }
    if config.dump_path is not None and last_bundle is not None:
        write_tensor_dump(config.dump_path, last_bundle.d_x)
    return payload


def _none_if_nan(value: float):
    return None if value != value else value


def _emit_bench(payload: dict, config: BenchConfig) -> str:
    if config.output_format == "json":
        text = _canonical_json(payload)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow([
            "strategy", "repeat", "wall_time_seconds",
            "batch", "seqlen", "dim", "groups", "num_coeffs", "den_coeffs",
            "block_size", "precision", "seed",
        ])
        for strategy, entry in payload["results"].items():
            for i, t in enumerate(entry["wall_times_seconds"]):
                writer.writerow([
                    strategy, i, repr(t),
                    config.batch, config.seqlen, config.dim, config.groups,
                    config.num_coeffs, config.den_coeffs,
                    config.block_size, config.precision, config.seed,
                ])
        text = buf.getvalue()
    if config.output_path:
        with open(config.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def cmd_bench(args: argparse.Namespace) -> int:
    config = BenchConfig(
        batch=args.batch, seqlen=args.seqlen, dim=args.dim, groups=args.groups,
        num_coeffs=args.num_coeffs, den_coeffs=args.den_coeffs,
        block_size=args.block_size, strategy=args.strategy, precision=args.precision,
        seed=args.seed, repeats=args.repeats, warmup=args.warmup,
        output_format=args.format, output_path=args.output,
        workers=args.workers, instrument=args.instrument,
        include_forward=args.include_forward, dump_path=args.dump,
    )
    payload = run_bench(config)
    _emit_bench(payload, config)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    result = run_suite(args.suite, scale=args.scale, seed=args.seed)
    for check in result.checks:
        status = "pass" if check["passed"] else "FAIL"
        extras = {k: v for k, v in check.items() if k not in ("name", "passed")}
        print("[%s] %s %s" % (status, check["name"], extras))
    print("suite %s (%s scale): %s" % (result.suite, result.scale,
                                       "PASS" if result.passed else "FAIL"))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(_canonical_json(result.to_dict()))
    return 0 if result.passed else 1


_ROW_REQUIRED = {
    "mlp": ("d_in", "d_out"),
    "kan": ("d_in", "d_out", "spline_order", "intervals"),
    "grkan": ("d_in", "d_out", "m", "n"),
}


def cmd_flops(args: argparse.Namespace) -> int:
    missing = [name for name in _ROW_REQUIRED[args.row] if getattr(args, name) is None]
    if missing:
        raise UsageError("row %s requires --%s" % (args.row, ", --".join(m.replace("_", "-") for m in missing)))
    cfg = FlopsConfig(
        d_in=args.d_in,
        d_out=args.d_out,
        func_flops=args.func_flops or 0,
        spline_order=args.spline_order or 0,
        intervals=args.intervals or 0,
        numerator_degree=args.m or 0,
        denominator_degree=args.n or 0,
        groups=args.groups or 1,
    )
    table = {
        "mlp": (params_mlp, flops_mlp),
        "kan": (params_kan, flops_kan),
        "grkan": (params_grkan, flops_grkan),
    }
    params_fn, flops_fn = table[args.row]
    print("row = %s" % args.row)
    print("parameters = %d" % params_fn(cfg))
    print("flops = %d" % flops_fn(cfg))
    return 0


def cmd_fit_activation(args: argparse.Namespace) -> int:
    fit = fit_activation_coeffs(args.target, (args.m, args.n))
    save_coeff_preset(args.output, fit)
    print("wrote %s (max fit error %.3e on [%g, %g])"
          % (args.output, fit.fit_error, fit.fit_domain[0], fit.fit_domain[1]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grkan",
        description="Group-wise rational layer benchmarks and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="time the backward strategies")
    bench.add_argument("--batch", type=int, default=1024)
    bench.add_argument("--seqlen", type=int, default=197)
    bench.add_argument("--dim", type=int, default=768)
    bench.add_argument("--groups", type=int, default=8)
    bench.add_argument("--num-coeffs", type=int, default=6,
                       help="numerator coefficients per group")
    bench.add_argument("--den-coeffs", type=int, default=4,
                       help="denominator coefficients per group")
    bench.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_SIZE)
    bench.add_argument("--strategy", choices=("naive", "blocked", "both"), default="blocked")
    bench.add_argument("--precision", choices=("single", "double"), default="single")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--repeats", type=int, default=100)
    bench.add_argument("--warmup", type=int, default=5)
    bench.add_argument("--format", choices=("json", "csv"), default="json")
    bench.add_argument("--output", default=None, help="report path (default stdout)")
    bench.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    bench.add_argument("--instrument", action="store_true",
                       help="attach modelled access counts (outside timing)")
    bench.add_argument("--include-forward", action="store_true")
    bench.add_argument("--dump", default=None, help="write the final d_x tensor dump here")
    bench.set_defaults(func=cmd_bench)

    verify = sub.add_parser("verify", help="run a verification suite")
    verify.add_argument("suite", choices=("grad", "oracle", "access", "rounding"))
    verify.add_argument("--scale", choices=("desk", "paper"), default="desk")
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--output", default=None, help="write machine-readable results here")
    verify.set_defaults(func=cmd_verify)

    flops = sub.add_parser("flops", help="closed-form parameter and FLOP counts")
    flops.add_argument("row", choices=("mlp", "kan", "grkan"))
    flops.add_argument("--d-in", dest="d_in", type=int, default=None)
    flops.add_argument("--d-out", dest="d_out", type=int, default=None)
    flops.add_argument("--func-flops", dest="func_flops", type=int, default=None)
    flops.add_argument("--spline-order", dest="spline_order", type=int, default=None)
    flops.add_argument("--intervals", dest="intervals", type=int, default=None)
    flops.add_argument("--m", type=int, default=None, help="numerator degree")
    flops.add_argument("--n", type=int, default=None, help="denominator degree")
    flops.add_argument("--groups", type=int, default=None)
    flops.set_defaults(func=cmd_flops)

    fit = sub.add_parser("fit-activation", help="fit and save a coefficient preset")
    fit.add_argument("--target", choices=("identity", "swish", "gelu"), required=True)
    fit.add_argument("--m", type=int, default=5)
    fit.add_argument("--n", type=int, default=4)
    fit.add_argument("--output", required=True)
    fit.set_defaults(func=cmd_fit_activation)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except GrkanError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
