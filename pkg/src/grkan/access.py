"""Global-memory access counting and layer cost estimators.

One access is one element-sized load or store of a modelled global array; an
atomic add counts as one read plus one write plus a read-modify-write tag.
Element math happens "on chip" and is never counted.

Closed forms, with E = batch * seq * feature and m_c coefficients per group:

* naive strategy: every element loads x and the upstream gradient, stores its
  input gradient, loads all m_c coefficients and performs m_c atomic
  read-modify-writes, giving 3 * (m_c + 1) * E accesses.
* blocked strategy: each of the grid_rows * num_groups blocks loads its
  coefficients once and does one m_c-wide read-modify-write after reducing
  privately, giving 3 * E + 3 * m_c * grid_rows * num_groups accesses, i.e.
  3 * (m_c / (block_size * group_width) + 1) * E under exact tiling.

The coefficient-related traffic therefore shrinks by exactly
block_size * group_width.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .backward import (
    COMBINE_ORDERED,
    STRATEGY_NAIVE,
    ExecutionPlan,
    GradBundle,
    run_backward,
)
from .errors import PartialCoverageError, TailNotCoveredError
from .rational import ActivationTensor, GroupRationalParams


@dataclass
class AccessCounter:
    """Mutable tally of modelled accesses; workers report disjoint increments."""

    reads: int = 0
    writes: int = 0
    rmw_atomic: int = 0

    def add(self, reads: int = 0, writes: int = 0, rmw: int = 0) -> None:
        self.reads += reads
        self.writes += writes
        self.rmw_atomic += rmw

    @property
    def total(self) -> int:
        return self.reads + self.writes


@dataclass(frozen=True)
class AccessReport:
    """Instrumented access counts next to the closed-form prediction."""

    reads: int
    writes: int
    rmw_atomic: int
    total: int
    predicted_total: int
    strategy: str

    @property
    def matches_prediction(self) -> bool:
        return self.total == self.predicted_total

    def to_dict(self) -> dict:
        return {
            "reads": self.reads,
            "writes": self.writes,
            "rmw_atomic": self.rmw_atomic,
            "total": self.total,
            "predicted_total": self.predicted_total,
            "strategy": self.strategy,
        }


def _require_positive(**kwargs: int) -> None:
    for name, value in kwargs.items():
        if int(value) != value or value < 1:
            raise ValueError("%s must be a positive integer, got %r" % (name, value))


def predict_accesses_naive(batch: int, seq: int, feature: int, m_coeffs: int) -> int:
    """3 * (m_coeffs + 1) * batch * seq * feature."""
    _require_positive(batch=batch, seq=seq, feature=feature)
    if m_coeffs < 0:
        raise ValueError("m_coeffs must be non-negative")
    return 3 * (m_coeffs + 1) * batch * seq * feature


def predict_accesses_blocked(
    batch: int, seq: int, feature: int, block_size: int, group_width: int, m_coeffs: int
) -> int:
    """3 * (m_coeffs / (block_size * group_width) + 1) * batch * seq * feature.

    Requires exact tiling (group_width divides feature, block_size divides
    batch * seq); the fractional closed form is evaluated in exact rational
    arithmetic and cross-checked against the integer form before returning.
    """
    _require_positive(batch=batch, seq=seq, feature=feature,
                      block_size=block_size, group_width=group_width)
    if m_coeffs < 0:
        raise ValueError("m_coeffs must be non-negative")
    if feature % group_width != 0 or (batch * seq) % block_size != 0:
        raise TailNotCoveredError("tail not covered by closed form")
    elements = batch * seq * feature
    exact = 3 * elements + 3 * m_coeffs * ((batch * seq) // block_size) * (feature // group_width)
    fractional = 3 * (Fraction(m_coeffs, block_size * group_width) + 1) * elements
    assert fractional == exact
    return exact


def predicted_total_for_plan(
    batch: int, seq: int, feature: int, plan: ExecutionPlan, m_coeffs: int
) -> int:
    """Tail-aware prediction matching what instrumentation must observe."""
    if plan.strategy == STRATEGY_NAIVE:
        return predict_accesses_naive(batch, seq, feature, m_coeffs)
    grid_rows = -(-(batch * seq) // plan.block_size)
    return 3 * batch * seq * feature + 3 * m_coeffs * grid_rows * plan.layout.num_groups


def instrumented_backward(
    x: ActivationTensor,
    upstream: ActivationTensor,
    params: GroupRationalParams,
    plan: ExecutionPlan,
    workers: int = 1,
    combine_mode: str = COMBINE_ORDERED,
    validate: bool = True,
) -> tuple[GradBundle, AccessReport]:
    """Run a backward strategy while counting every modelled global access.

    Also verifies coverage: every tensor element must contribute to exactly
    one block's partials.
    """
    counter = AccessCounter()
    coverage = np.zeros((x.batch * x.seq, x.feature), dtype=np.int16)
    bundle = run_backward(
        x, upstream, params, plan,
        workers=workers, combine_mode=combine_mode, validate=validate,
        counter=counter, coverage=coverage,
    )
    if not np.all(coverage == 1):
        raise PartialCoverageError("partial coverage violation: element visited != 1 times")
    predicted = predicted_total_for_plan(x.batch, x.seq, x.feature, plan, params.total_coeffs)
    report = AccessReport(
        reads=counter.reads,
        writes=counter.writes,
        rmw_atomic=counter.rmw_atomic,
        total=counter.total,
        predicted_total=predicted,
        strategy=plan.strategy,
    )
    return bundle, report


@dataclass(frozen=True)
class FlopsConfig:
    """Inputs for the per-layer parameter and FLOP estimators.

    ``numerator_degree`` and ``denominator_degree`` are polynomial degrees
    (degree m means m + 1 stored numerator coefficients).
    """

    d_in: int
    d_out: int
    func_flops: int = 0
    spline_order: int = 0
    intervals: int = 0
    numerator_degree: int = 0
    denominator_degree: int = 0
    groups: int = 1

    def __post_init__(self):
        _require_positive(d_in=self.d_in, d_out=self.d_out)
        for name in ("func_flops", "spline_order", "intervals",
                     "numerator_degree", "denominator_degree"):
            if getattr(self, name) < 0:
                raise ValueError("%s must be non-negative" % name)
        if self.groups < 1:
            raise ValueError("groups must be positive")


def params_mlp(cfg: FlopsConfig) -> int:
    return cfg.d_in * cfg.d_out + cfg.d_out


def flops_mlp(cfg: FlopsConfig) -> int:
    return cfg.func_flops * cfg.d_out + 2 * cfg.d_in * cfg.d_out


def params_kan(cfg: FlopsConfig) -> int:
    return cfg.d_in * cfg.d_out * (cfg.intervals + cfg.spline_order + 3) + cfg.d_out


def flops_kan(cfg: FlopsConfig) -> int:
    k = cfg.spline_order
    g = cfg.intervals
    bracket = 9 * k * (g + Fraction(3, 2) * k) + 2 * g - Fraction(5, 2) * k + 3
    total = cfg.func_flops * cfg.d_in + cfg.d_in * cfg.d_out * bracket
    if total.denominator != 1:
        raise ValueError("spline cost is not an integer for this configuration")
    return int(total)


def params_grkan(cfg: FlopsConfig) -> int:
    m = cfg.numerator_degree
    n = cfg.denominator_degree
    return cfg.d_in * cfg.d_out + cfg.d_out + (m + n * cfg.groups)


def flops_grkan(cfg: FlopsConfig) -> int:
    m = cfg.numerator_degree
    n = cfg.denominator_degree
    return (2 * m + 2 * n + 3) * cfg.d_in + 2 * cfg.d_in * cfg.d_out
