"""Whole-tensor backward passes for the group-wise rational stage.

Two strategies produce the coefficient gradients:

* ``naive_atomic`` models a stream of per-element read-modify-write updates:
  every element's contribution is folded into a single working-precision
  accumulator per coefficient, one element at a time, in ascending flattened
  element order. The order is fixed so the rounding behaviour is reproducible,
  standing in for one representative serialization of contended atomic adds.

* ``blocked_reduction`` gives each (row-block, group) block a private partial
  accumulator over its block_size x group_width elements (rows outer, features
  inner), then folds the partials into the global accumulators, in ascending
  (row-block, group) order in ``deterministic_ordered`` mode.

Element gradients are shared between the strategies (see
:func:`grkan.rational.gradient_terms`), so d_x is bitwise identical across
strategies and only the coefficient accumulation structure differs.
Accumulation precision always equals tensor precision; nothing is widened.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AccumulationOverflowError,
    GridGeometryError,
    PartialCoverageError,
)
from .rational import (
    ActivationTensor,
    GroupLayout,
    GroupRationalParams,
    check_compatible,
    gradient_terms,
)

STRATEGY_NAIVE = "naive_atomic"
STRATEGY_BLOCKED = "blocked_reduction"
COMBINE_ORDERED = "deterministic_ordered"
COMBINE_UNORDERED = "unordered_scatter"
DEFAULT_BLOCK_SIZE = 256


@dataclass(frozen=True)
class ExecutionPlan:
    """Grid geometry for one backward pass.

    The naive plan covers the flattened element range with 1-D blocks
    (grid_rows = ceil(batch * seq * feature / block_size), grid_cols = 1).
    The blocked plan is a 2-D grid of grid_rows = ceil(batch * seq /
    block_size) row-blocks by grid_cols = num_groups group columns.
    """

    strategy: str
    block_size: int
    layout: GroupLayout
    grid_rows: int
    grid_cols: int

    def __post_init__(self):
        if self.strategy not in (STRATEGY_NAIVE, STRATEGY_BLOCKED):
            raise ValueError("unknown strategy %r" % (self.strategy,))
        if self.block_size < 1 or self.grid_rows < 1 or self.grid_cols < 1:
            raise GridGeometryError("grid geometry invalid: non-positive dimension")

    @classmethod
    def naive(cls, batch: int, seq: int, layout: GroupLayout,
              block_size: int = DEFAULT_BLOCK_SIZE) -> "ExecutionPlan":
        total = batch * seq * layout.feature_dim
        return cls(STRATEGY_NAIVE, block_size, layout,
                   grid_rows=-(-total // block_size), grid_cols=1)

    @classmethod
    def blocked(cls, batch: int, seq: int, layout: GroupLayout,
                block_size: int = DEFAULT_BLOCK_SIZE) -> "ExecutionPlan":
        return cls(STRATEGY_BLOCKED, block_size, layout,
                   grid_rows=-(-(batch * seq) // block_size), grid_cols=layout.num_groups)

    def validate_for(self, x: ActivationTensor) -> None:
        """Check the grid tiles this tensor exactly once."""
        if self.strategy == STRATEGY_NAIVE:
            want_rows = -(-(x.batch * x.seq * x.feature) // self.block_size)
            want_cols = 1
        else:
            want_rows = -(-(x.batch * x.seq) // self.block_size)
            want_cols = self.layout.num_groups
        if (self.grid_rows, self.grid_cols) != (want_rows, want_cols):
            raise GridGeometryError(
                "grid geometry invalid: plan %dx%d does not tile tensor (want %dx%d)"
                % (self.grid_rows, self.grid_cols, want_rows, want_cols)
            )


@dataclass
class GradBundle:
    """Backward-pass outputs with provenance metadata."""

    d_x: ActivationTensor
    d_a: np.ndarray
    d_b: np.ndarray
    strategy: str
    precision: str
    combine_mode: str


def sequential_total(values: np.ndarray) -> np.ndarray:
    """Strict left-to-right running sum of a 1-D array in its own dtype.

    ufunc.accumulate is defined as r[i] = r[i-1] + v[i], which is exactly the
    one-long-accumulator fold being modelled; the last prefix is the total.
    """
    return np.add.accumulate(values)[-1]


def block_partial_totals(terms_2d: np.ndarray, block_size: int) -> np.ndarray:
    """Strict per-block running sums over row blocks of a (rows, width) array.

    Rows are grouped into blocks of block_size (a shorter tail block is
    allowed); each block is summed left to right in row-major order, matching
    a private block accumulator filled rows-outer, features-inner.
    """
    rows = terms_2d.shape[0]
    width = terms_2d.shape[1]
    full_blocks = rows // block_size
    partials = []
    if full_blocks:
        main = terms_2d[: full_blocks * block_size].reshape(full_blocks, block_size * width)
        partials.append(np.add.accumulate(main, axis=1)[:, -1])
    if rows > full_blocks * block_size:
        tail = terms_2d[full_blocks * block_size:].reshape(-1)
        partials.append(np.add.accumulate(tail)[-1:])
    return np.concatenate(partials) if len(partials) > 1 else partials[0]


def combine_partials(
    partials: Sequence[tuple[int, np.ndarray, np.ndarray]],
    num_groups: int,
    mode: str = COMBINE_ORDERED,
) -> tuple[np.ndarray, np.ndarray]:
    """Fold per-block partial coefficient gradients into per-group totals.

    Each entry is (block_id, numerator_partials, denominator_partials) with
    block_id = row_block * num_groups + group. Every block id in
    0..len(partials)-1 must appear exactly once. ``deterministic_ordered``
    folds in ascending (row_block, group) order and is bit-reproducible for
    any worker count; ``unordered_scatter`` folds in the order given.
    """
    if mode not in (COMBINE_ORDERED, COMBINE_UNORDERED):
        raise ValueError("unknown combine mode %r" % (mode,))
    if not partials:
        raise PartialCoverageError("partial coverage violation: no partials")
    ids = [p[0] for p in partials]
    if sorted(ids) != list(range(len(partials))):
        raise PartialCoverageError("partial coverage violation")
    first_a = np.asarray(partials[0][1])
    first_b = np.asarray(partials[0][2])
    dtype = first_a.dtype
    num_w = first_a.shape[0]
    den_w = first_b.shape[0]
    for _, pa, pb in partials:
        if np.asarray(pa).shape != (num_w,) or np.asarray(pb).shape != (den_w,):
            raise PartialCoverageError("partial coverage violation: inconsistent shapes")

    ordered = sorted(partials, key=lambda p: p[0]) if mode == COMBINE_ORDERED else partials
    d_a = np.zeros((num_groups, num_w), dtype=dtype)
    d_b = np.zeros((num_groups, den_w), dtype=dtype)
    for block_id, pa, pb in ordered:
        g = block_id % num_groups
        d_a[g] += pa
        if den_w:
            d_b[g] += pb
    return d_a, d_b


def _check_accumulators(d_a: np.ndarray, d_b: np.ndarray) -> None:
    if not (np.all(np.isfinite(d_a)) and np.all(np.isfinite(d_b))):
        raise AccumulationOverflowError("accumulation overflow")


def backward_naive(
    x: ActivationTensor,
    upstream: ActivationTensor,
    params: GroupRationalParams,
    plan: ExecutionPlan | None = None,
    validate: bool = True,
    counter=None,
    coverage: np.ndarray | None = None,
) -> GradBundle:
    """Backward pass with one long per-coefficient running sum.

    d_x[e] is the elementwise input gradient. d_a[g, i] and d_b[g, j] fold the
    contributions of group g's elements one at a time, ascending flattened
    element order, into a single accumulator at tensor precision.
    """
    layout = plan.layout if plan is not None else GroupLayout(x.feature, params.num_groups)
    if plan is None:
        plan = ExecutionPlan.naive(x.batch, x.seq, layout)
    check_compatible(x, params, layout)
    if x.data.shape != upstream.data.shape:
        raise GridGeometryError("grid geometry invalid: x and upstream shapes differ")
    plan.validate_for(x)
    if validate:
        x.check_finite()
        upstream.check_finite()

    rows = x.rows()
    up_rows = upstream.rows()
    dt = x.data.dtype
    d_x = np.empty_like(x.data)
    dx_rows = d_x.reshape(rows.shape)
    d_a = np.empty((params.num_groups, params.num_coeffs), dtype=dt)
    d_b = np.empty((params.num_groups, params.den_coeffs), dtype=dt)

    m_c = params.total_coeffs
    for g, lo, hi in layout.group_slices():
        a, b = params.group_row(g)
        dxg, da_terms, db_terms = gradient_terms(rows[:, lo:hi], up_rows[:, lo:hi], a, b)
        dx_rows[:, lo:hi] = dxg
        for i, term in enumerate(da_terms):
            d_a[g, i] = sequential_total(term.reshape(-1))
        for j, term in enumerate(db_terms):
            d_b[g, j] = sequential_total(term.reshape(-1))
        if counter is not None:
            # Per element: load x and upstream, load every coefficient, one
            # read-modify-write per coefficient, store d_x.
            n_el = rows.shape[0] * (hi - lo)
            counter.add(reads=(2 + 2 * m_c) * n_el, writes=(1 + m_c) * n_el, rmw=m_c * n_el)
        if coverage is not None:
            coverage.reshape(rows.shape)[:, lo:hi] += 1

    _check_accumulators(d_a, d_b)
    return GradBundle(
        d_x=ActivationTensor(d_x),
        d_a=d_a,
        d_b=d_b,
        strategy=STRATEGY_NAIVE,
        precision=x.precision,
        combine_mode=COMBINE_ORDERED,
    )


def _blocked_group_chunk(
    rows: np.ndarray,
    up_rows: np.ndarray,
    dx_rows: np.ndarray,
    params: GroupRationalParams,
    g: int,
    lo: int,
    hi: int,
    row_start: int,
    row_end: int,
    block_size: int,
):
    """Process whole row-blocks [row_start, row_end) of one group column."""
    a, b = params.group_row(g)
    xg = rows[row_start:row_end, lo:hi]
    ug = up_rows[row_start:row_end, lo:hi]
    dxg, da_terms, db_terms = gradient_terms(xg, ug, a, b)
    dx_rows[row_start:row_end, lo:hi] = dxg
    pa = np.stack([block_partial_totals(t, block_size) for t in da_terms], axis=1)
    if db_terms:
        pb = np.stack([block_partial_totals(t, block_size) for t in db_terms], axis=1)
    else:
        pb = np.zeros((pa.shape[0], 0), dtype=pa.dtype)
    return pa, pb


def backward_blocked(
    x: ActivationTensor,
    upstream: ActivationTensor,
    params: GroupRationalParams,
    plan: ExecutionPlan | None = None,
    workers: int = 1,
    combine_mode: str = COMBINE_ORDERED,
    validate: bool = True,
    counter=None,
    coverage: np.ndarray | None = None,
) -> GradBundle:
    """Backward pass with per-block partial sums and a single combine step.

    Each of the grid_rows x num_groups blocks privately accumulates partial
    coefficient gradients over its block_size x group_width elements, then the
    partials are folded per group. Blocks are independent and may run on any
    number of workers; d_x is computed with the same element kernel as the
    naive strategy and is bitwise identical to it.
    """
    layout = plan.layout if plan is not None else GroupLayout(x.feature, params.num_groups)
    if plan is None:
        plan = ExecutionPlan.blocked(x.batch, x.seq, layout)
    check_compatible(x, params, layout)
    if x.data.shape != upstream.data.shape:
        raise GridGeometryError("grid geometry invalid: x and upstream shapes differ")
    plan.validate_for(x)
    if validate:
        x.check_finite()
        upstream.check_finite()

    rows = x.rows()
    up_rows = upstream.rows()
    n_rows = rows.shape[0]
    s_block = plan.block_size
    n_g = layout.num_groups
    d_g = layout.group_width
    grid_rows = plan.grid_rows
    m_c = params.total_coeffs

    d_x = np.empty_like(x.data)
    dx_rows = d_x.reshape(rows.shape)

    # Tasks are contiguous runs of row-blocks within one group column, so a
    # task boundary is always a block boundary and partial values cannot
    # depend on the worker count.
    blocks_per_task = max(1, math.ceil(grid_rows / max(1, workers) / 4))
    tasks = []
    for g, lo, hi in layout.group_slices():
        for t0 in range(0, grid_rows, blocks_per_task):
            t1 = min(t0 + blocks_per_task, grid_rows)
            tasks.append((g, lo, hi, t0, t1))

    def run_task(task):
        g, lo, hi, t0, t1 = task
        row_start = t0 * s_block
        row_end = min(t1 * s_block, n_rows)
        pa, pb = _blocked_group_chunk(
            rows, up_rows, dx_rows, params, g, lo, hi, row_start, row_end, s_block
        )
        counts = None
        if counter is not None:
            n_el = (row_end - row_start) * d_g
            n_blocks = t1 - t0
            counts = (2 * n_el + 2 * m_c * n_blocks, n_el + m_c * n_blocks, m_c * n_blocks)
        if coverage is not None:
            coverage.reshape(rows.shape)[row_start:row_end, lo:hi] += 1
        return task, pa, pb, counts

    partials: list[tuple[int, np.ndarray, np.ndarray]] = []

    def collect(result):
        task, pa, pb, counts = result
        g, _, _, t0, _ = task
        for k in range(pa.shape[0]):
            partials.append(((t0 + k) * n_g + g, pa[k], pb[k]))
        if counts is not None:
            counter.add(reads=counts[0], writes=counts[1], rmw=counts[2])

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # Collection order follows completion, which only matters for the
            # unordered combine mode; the ordered mode sorts by block id.
            for result in pool.map(run_task, tasks):
                collect(result)
    else:
        for task in tasks:
            collect(run_task(task))

    d_a, d_b = combine_partials(partials, n_g, combine_mode)
    _check_accumulators(d_a, d_b)
    return GradBundle(
        d_x=ActivationTensor(d_x),
        d_a=d_a,
        d_b=d_b,
        strategy=STRATEGY_BLOCKED,
        precision=x.precision,
        combine_mode=combine_mode,
    )


def run_backward(
    x: ActivationTensor,
    upstream: ActivationTensor,
    params: GroupRationalParams,
    plan: ExecutionPlan,
    workers: int = 1,
    combine_mode: str = COMBINE_ORDERED,
    validate: bool = True,
    counter=None,
    coverage: np.ndarray | None = None,
) -> GradBundle:
    """Dispatch on the plan's strategy tag."""
    if plan.strategy == STRATEGY_NAIVE:
        return backward_naive(
            x, upstream, params, plan, validate=validate, counter=counter, coverage=coverage
        )
    return backward_blocked(
        x, upstream, params, plan,
        workers=workers, combine_mode=combine_mode, validate=validate,
        counter=counter, coverage=coverage,
    )
