"""Independent oracles, gradient checking, and the rounding-error experiment.

The oracle here is deliberately written the slow way: an explicit triple loop
over batch, sequence and group width with plain power sums, no Horner scheme,
no blocking, all in double precision. It shares no evaluation code with the
production strategies, so agreement is meaningful.

The rounding experiment isolates summation rounding: each pass computes the
per-element gradient terms once at the run precision, then folds them three
ways (single long chain at run precision, blocked partials at run precision,
and one long chain with a double-precision accumulator). The double-precision
accumulation is the reference, so the measured error is exactly the rounding
introduced by accumulation order and precision, independent of hardware and
of elementwise evaluation error common to both strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .access import instrumented_backward, predict_accesses_blocked, predict_accesses_naive
from .backward import (
    ExecutionPlan,
    GradBundle,
    backward_blocked,
    backward_naive,
)
from .layer import GrKanLayer, layer_backward, layer_forward
from .rational import (
    ActivationTensor,
    GroupLayout,
    GroupRationalParams,
    gradient_terms,
)

DESK_ROUNDING_SHAPE = (256, 64, 256, 8, 6, 4)
FULL_SCALE_ROUNDING_SHAPE = (1024, 197, 768, 8, 6, 4)
ROUNDING_GRID_HEIGHT = 1024
KINK_THRESHOLD = 1e-9


# ---------------------------------------------------------------------------
# Triple-loop oracle
# ---------------------------------------------------------------------------

def oracle_backward(
    x: ActivationTensor,
    upstream: ActivationTensor,
    params: GroupRationalParams,
    layout: GroupLayout | None = None,
) -> GradBundle:
    """Ground-truth gradients by literal per-element summation in float64.

    Intended for small instances (the loops are pure Python); coefficient
    gradients are folded in ascending (batch, seq, feature) order.
    """
    if layout is None:
        layout = GroupLayout(x.feature, params.num_groups)
    batch, seq = x.batch, x.seq
    m_plus_1 = params.num_coeffs
    n = params.den_coeffs
    d_a = np.zeros((params.num_groups, m_plus_1))
    d_b = np.zeros((params.num_groups, n))
    d_x = np.zeros((batch, seq, x.feature))
    xd = x.data.astype(np.float64)
    ud = upstream.data.astype(np.float64)

    for g, lo, hi in layout.group_slices():
        a = [float(v) for v in params.numerator[g]]
        b = [float(v) for v in params.denominator[g]]
        for bi in range(batch):
            for si in range(seq):
                for f in range(lo, hi):
                    xv = float(xd[bi, si, f])
                    uv = float(ud[bi, si, f])
                    p = sum(a[i] * xv**i for i in range(m_plus_1))
                    series = sum(b[j - 1] * xv**j for j in range(1, n + 1))
                    q = 1.0 + abs(series)
                    sgn = 0.0 if series == 0.0 else math.copysign(1.0, series)
                    dp = sum(i * a[i] * xv ** (i - 1) for i in range(1, m_plus_1))
                    dseries = sum(j * b[j - 1] * xv ** (j - 1) for j in range(1, n + 1))
                    for i in range(m_plus_1):
                        d_a[g, i] += uv * xv**i / q
                    for j in range(1, n + 1):
                        d_b[g, j - 1] += uv * (-(xv**j) * sgn * p / q**2)
                    d_x[bi, si, f] = uv * (dp / q - sgn * dseries * p / q**2)

    return GradBundle(
        d_x=ActivationTensor(d_x),
        d_a=d_a,
        d_b=d_b,
        strategy="oracle",
        precision="double",
        combine_mode="deterministic_ordered",
    )


# ---------------------------------------------------------------------------
# Finite-difference harness
# ---------------------------------------------------------------------------

@dataclass
class FiniteDiffReport:
    max_rel_error: float
    tolerance: float
    n_checked: int
    n_skipped: int
    failures: list[tuple[str, float, float, float]] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def finite_diff_check(
    loss_fn,
    theta: np.ndarray,
    analytic: np.ndarray,
    tolerance: float,
    h_scale: float = 1e-6,
    skip: np.ndarray | None = None,
    names: list[str] | None = None,
) -> FiniteDiffReport:
    """Compare analytic gradients of a scalar loss against central differences.

    Every coordinate is perturbed by +-h with h = h_scale * max(1, |theta_i|)
    in double precision. The relative error denominator is floored at a small
    fraction of the overall gradient scale so central-difference roundoff on
    near-zero coordinates does not register as failure. tolerance = 0 always
    fails every checked coordinate (useful to exercise the reporting path).
    """
    theta = np.asarray(theta, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    if names is None:
        names = ["theta[%d]" % i for i in range(theta.size)]
    grad_scale = float(np.max(np.abs(analytic))) if analytic.size else 1.0
    floor = max(1e-2, 1e-3 * grad_scale)

    report = FiniteDiffReport(max_rel_error=0.0, tolerance=tolerance, n_checked=0, n_skipped=0)
    for i in range(theta.size):
        if skip is not None and skip[i]:
            report.n_skipped += 1
            report.skipped.append(names[i])
            continue
        h = h_scale * max(1.0, abs(theta[i]))
        bumped = theta.copy()
        bumped[i] = theta[i] + h
        f_plus = loss_fn(bumped)
        bumped[i] = theta[i] - h
        f_minus = loss_fn(bumped)
        fd = (f_plus - f_minus) / (2.0 * h)
        rel = abs(fd - analytic[i]) / max(abs(fd), abs(analytic[i]), floor)
        report.n_checked += 1
        report.max_rel_error = max(report.max_rel_error, rel)
        if not (rel <= tolerance):
            report.failures.append((names[i], float(analytic[i]), float(fd), float(rel)))
    return report


def _denominator_series_values(layer: GrKanLayer, x: ActivationTensor) -> np.ndarray:
    """|A(x)| per element, used to mask coordinates near the |.| kink."""
    rows = x.rows().astype(np.float64)
    out = np.empty_like(rows)
    for g, lo, hi in layer.layout.group_slices():
        b = layer.params.denominator[g]
        xv = rows[:, lo:hi]
        if b.size == 0:
            out[:, lo:hi] = 0.0
            continue
        acc = np.full(xv.shape, b[-1])
        for c in b[-2::-1]:
            acc = acc * xv + c
        out[:, lo:hi] = acc * xv
    return out


def layer_finite_diff_check(
    layer: GrKanLayer,
    x: ActivationTensor,
    upstream_y: ActivationTensor,
    tolerance: float = 1e-6,
    h_scale: float = 1e-6,
    kink_threshold: float = KINK_THRESHOLD,
) -> FiniteDiffReport:
    """Finite-difference check of every layer gradient.

    The probe loss is sum(upstream_y * layer_forward(x)), whose analytic
    gradients are exactly the backward-pass outputs. Coordinates whose
    perturbation can cross the non-smooth point of the safe denominator
    (elements with |A(x)| < kink_threshold, and the denominator coefficients
    of any group containing one) are skipped and reported.
    """
    n_g = layer.params.num_groups
    m_plus_1 = layer.params.num_coeffs
    n_den = layer.params.den_coeffs
    d_in, d_out = layer.d_in, layer.d_out
    shape_x = x.data.shape

    sizes = [n_g * m_plus_1, n_g * n_den, d_out * d_in, d_out, x.data.size]
    offsets = np.cumsum([0] + sizes)
    theta0 = np.concatenate([
        layer.params.numerator.ravel(),
        layer.params.denominator.ravel(),
        layer.weight.ravel(),
        layer.bias.ravel(),
        x.data.astype(np.float64).ravel(),
    ])
    uy = ActivationTensor(upstream_y.data.astype(np.float64))

    def unpack(theta):
        num = theta[offsets[0]:offsets[1]].reshape(n_g, m_plus_1)
        den = theta[offsets[1]:offsets[2]].reshape(n_g, n_den)
        w = theta[offsets[2]:offsets[3]].reshape(d_out, d_in)
        bias = theta[offsets[3]:offsets[4]]
        xv = theta[offsets[4]:offsets[5]].reshape(shape_x)
        lay = GrKanLayer(
            params=GroupRationalParams(num, den),
            layout=layer.layout,
            weight=w,
            bias=bias,
        )
        return lay, ActivationTensor(xv)

    def loss_fn(theta):
        lay, xv = unpack(theta)
        y = layer_forward(lay, xv, validate=False)
        return float(np.sum(uy.data * y.data))

    x64 = ActivationTensor(x.data.astype(np.float64))
    bundle, d_w, d_bias = layer_backward(layer, x64, uy, validate=False)
    analytic = np.concatenate([
        bundle.d_a.ravel(),
        bundle.d_b.ravel(),
        d_w.ravel(),
        d_bias.ravel(),
        bundle.d_x.data.ravel(),
    ])

    series = _denominator_series_values(layer, x64)
    kink_elements = np.abs(series) < kink_threshold
    kink_groups = np.zeros(n_g, dtype=bool)
    for g, lo, hi in layer.layout.group_slices():
        kink_groups[g] = bool(np.any(kink_elements[:, lo:hi]))

    skip = np.zeros(theta0.size, dtype=bool)
    den_skip = np.repeat(kink_groups, n_den)
    skip[offsets[1]:offsets[2]] = den_skip
    skip[offsets[4]:offsets[5]] = kink_elements.reshape(x.batch * x.seq, d_in).ravel()

    names = (
        ["a[%d,%d]" % (g, i) for g in range(n_g) for i in range(m_plus_1)]
        + ["b[%d,%d]" % (g, j) for g in range(n_g) for j in range(n_den)]
        + ["W[%d,%d]" % (o, i) for o in range(d_out) for i in range(d_in)]
        + ["bias[%d]" % o for o in range(d_out)]
        + ["x[%d]" % e for e in range(x.data.size)]
    )
    return finite_diff_check(
        loss_fn, theta0, analytic, tolerance=tolerance, h_scale=h_scale, skip=skip, names=names
    )


# ---------------------------------------------------------------------------
# Rounding experiment
# ---------------------------------------------------------------------------

@dataclass
class RoundingReport:
    shape: tuple[int, int, int, int, int, int]
    seed: int
    passes: int
    block_size: int
    precision: str
    mae_da_naive: float
    mae_da_blocked: float
    mae_db_naive: float
    mae_db_blocked: float
    variances: dict[str, float]
    ci95_half_widths: dict[str, float]
    per_pass: dict[str, list[float]]
    flags: list[str] = field(default_factory=list)

    @property
    def ratio_da(self) -> float:
        return self.mae_da_blocked / self.mae_da_naive if self.mae_da_naive else float("nan")

    @property
    def ratio_db(self) -> float:
        return self.mae_db_blocked / self.mae_db_naive if self.mae_db_naive else float("nan")

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        return {
            "shape": list(self.shape),
            "seed": self.seed,
            "passes": self.passes,
            "block_size": self.block_size,
            "precision": self.precision,
            "mae": {
                "da_naive": self.mae_da_naive,
                "da_blocked": self.mae_da_blocked,
                "db_naive": self.mae_db_naive,
                "db_blocked": self.mae_db_blocked,
            },
            "ratios": {"da": clean(self.ratio_da), "db": clean(self.ratio_db)},
            "variances": self.variances,
            "ci95_half_widths": {k: clean(v) for k, v in self.ci95_half_widths.items()},
            "per_pass": self.per_pass,
            "flags": list(self.flags),
        }


def reference_coeff_grads(
    x: ActivationTensor,
    upstream: ActivationTensor,
    params: GroupRationalParams,
    layout: GroupLayout,
) -> tuple[np.ndarray, np.ndarray]:
    """Double-precision sequential accumulation of the run-precision terms.

    Same element terms and same ascending order as the naive strategy, but the
    accumulator is float64, so the only difference from either strategy is
    accumulation rounding.
    """
    rows = x.rows()
    up_rows = upstream.rows()
    d_a = np.zeros((params.num_groups, params.num_coeffs))
    d_b = np.zeros((params.num_groups, params.den_coeffs))
    for g, lo, hi in layout.group_slices():
        a, b = params.group_row(g)
        _, da_terms, db_terms = gradient_terms(rows[:, lo:hi], up_rows[:, lo:hi], a, b)
        for i, term in enumerate(da_terms):
            d_a[g, i] = np.add.accumulate(term.reshape(-1).astype(np.float64))[-1]
        for j, term in enumerate(db_terms):
            d_b[g, j] = np.add.accumulate(term.reshape(-1).astype(np.float64))[-1]
    return d_a, d_b


def normal_ci95_half_width(samples: np.ndarray) -> float:
    """Normal-approximation 95% half width with the unbiased sample variance."""
    n = samples.size
    if n < 2:
        return float("nan")
    return 1.96 * float(np.std(samples, ddof=1)) / math.sqrt(n)


def rounding_experiment(
    shape: tuple[int, int, int, int, int, int] = FULL_SCALE_ROUNDING_SHAPE,
    n_passes: int = 100,
    seed: int = 2024,
    precision: str = "single",
    grid_height: int = ROUNDING_GRID_HEIGHT,
) -> RoundingReport:
    """Mean absolute accumulation error of both strategies over many passes.

    shape is (batch, seq, feature, groups, numerator_coeffs,
    denominator_coeffs). Every pass draws fresh standard-normal inputs,
    upstream gradients and coefficients from a per-pass seed, runs both
    strategies at the requested precision, and measures mean |strategy -
    reference| over the coefficient-gradient entries against the
    double-precision reference accumulation of the identical element terms.

    The blocked plan uses block_size = ceil(batch * seq / grid_height) so the
    grid keeps about grid_height row-blocks at any tensor size; with too few
    blocks the block structure has nothing to show at desk scale.
    """
    if n_passes < 1:
        raise ValueError("n_passes must be >= 1")
    batch, seq, feat, n_g, m_plus_1, n_den = shape
    layout = GroupLayout(feat, n_g)
    dtype = np.float32 if precision == "single" else np.float64
    block = max(1, -(-(batch * seq) // grid_height))
    plan = ExecutionPlan.blocked(batch, seq, layout, block)

    per_pass: dict[str, list[float]] = {
        "da_naive": [], "da_blocked": [], "db_naive": [], "db_blocked": [],
    }
    for p in range(n_passes):
        rng = np.random.default_rng([seed, p])
        xt = ActivationTensor(rng.standard_normal((batch, seq, feat)).astype(dtype))
        dot = ActivationTensor(rng.standard_normal((batch, seq, feat)).astype(dtype))
        params = GroupRationalParams(
            rng.standard_normal((n_g, m_plus_1)), rng.standard_normal((n_g, n_den))
        )
        naive = backward_naive(xt, dot, params, validate=False)
        blocked = backward_blocked(xt, dot, params, plan, validate=False)
        ref_a, ref_b = reference_coeff_grads(xt, dot, params, layout)
        per_pass["da_naive"].append(float(np.mean(np.abs(naive.d_a.astype(np.float64) - ref_a))))
        per_pass["da_blocked"].append(float(np.mean(np.abs(blocked.d_a.astype(np.float64) - ref_a))))
        per_pass["db_naive"].append(float(np.mean(np.abs(naive.d_b.astype(np.float64) - ref_b))))
        per_pass["db_blocked"].append(float(np.mean(np.abs(blocked.d_b.astype(np.float64) - ref_b))))

    flags: list[str] = []
    variances: dict[str, float] = {}
    ci95: dict[str, float] = {}
    for key, values in per_pass.items():
        arr = np.asarray(values)
        variances[key] = float(np.var(arr, ddof=1)) if n_passes > 1 else 0.0
        ci95[key] = normal_ci95_half_width(arr)
    if n_passes == 1:
        flags.append("insufficient passes")

    return RoundingReport(
        shape=tuple(shape),
        seed=seed,
        passes=n_passes,
        block_size=block,
        precision=precision,
        mae_da_naive=float(np.mean(per_pass["da_naive"])),
        mae_da_blocked=float(np.mean(per_pass["da_blocked"])),
        mae_db_naive=float(np.mean(per_pass["db_naive"])),
        mae_db_blocked=float(np.mean(per_pass["db_blocked"])),
        variances=variances,
        ci95_half_widths=ci95,
        per_pass=per_pass,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Named verification suites (shared by the CLI and the acceptance tests)
# ---------------------------------------------------------------------------

@dataclass
class SuiteResult:
    suite: str
    scale: str
    passed: bool
    checks: list[dict]
    details: dict

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "scale": self.scale,
            "passed": self.passed,
            "checks": self.checks,
            "details": self.details,
        }


def _random_small_instance(rng: np.random.Generator, with_layer: bool):
    batch = int(rng.integers(1, 5))
    seq = int(rng.integers(1, 5))
    n_g = int(rng.choice([1, 2, 4]))
    d_g = int(rng.integers(1, 16 // n_g + 1))
    d_in = n_g * d_g
    layout = GroupLayout(d_in, n_g)
    params = GroupRationalParams(
        rng.standard_normal((n_g, 6)), rng.standard_normal((n_g, 4))
    )
    x = ActivationTensor(rng.standard_normal((batch, seq, d_in)))
    if not with_layer:
        upstream = ActivationTensor(rng.standard_normal((batch, seq, d_in)))
        return x, upstream, params, layout
    d_out = int(rng.integers(1, 17))
    layer = GrKanLayer(
        params=params,
        layout=layout,
        weight=rng.standard_normal((d_out, d_in)),
        bias=rng.standard_normal(d_out),
    )
    upstream_y = ActivationTensor(rng.standard_normal((batch, seq, d_out)))
    return layer, x, upstream_y


def verify_grad(scale: str = "desk", seed: int = 11, n_instances: int = 50) -> SuiteResult:
    """Finite-difference validation of every analytic gradient."""
    rng = np.random.default_rng(seed)
    checks = []
    worst = 0.0
    total_skipped = 0
    for k in range(n_instances):
        layer, x, upstream_y = _random_small_instance(rng, with_layer=True)
        report = layer_finite_diff_check(layer, x, upstream_y, tolerance=1e-6)
        worst = max(worst, report.max_rel_error)
        total_skipped += report.n_skipped
        checks.append({
            "name": "instance %d" % k,
            "passed": report.passed,
            "max_rel_error": report.max_rel_error,
            "skipped": report.n_skipped,
        })
    passed = all(c["passed"] for c in checks)
    return SuiteResult(
        suite="grad", scale=scale, passed=passed, checks=checks,
        details={"max_rel_error": worst, "tolerance": 1e-6,
                 "instances": n_instances, "skipped_coordinates": total_skipped},
    )


def _matrix_rel(a: np.ndarray, b: np.ndarray) -> float:
    """Largest discrepancy relative to the gradient's own magnitude scale.

    Individual sum entries can cancel to near zero, where an entrywise
    relative error is dominated by the conditioning of the sum rather than by
    implementation agreement; comparing against the matrix scale keeps the
    1e-12 gate meaningful while still flagging any formula-level defect.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not a.size:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a - b))) / scale


def verify_oracle(scale: str = "desk", seed: int = 12, n_instances: int = 20) -> SuiteResult:
    """Strategies vs the triple-loop oracle, and cross-strategy d_x identity."""
    rng = np.random.default_rng(seed)
    checks = []
    for k in range(n_instances):
        x, upstream, params, layout = _random_small_instance(rng, with_layer=False)
        block = int(rng.choice([1, 2, 3, 4, 8]))
        plan = ExecutionPlan.blocked(x.batch, x.seq, layout, block)
        oracle = oracle_backward(x, upstream, params, layout)
        naive = backward_naive(x, upstream, params)
        blocked = backward_blocked(x, upstream, params, plan)
        rel = max(
            _matrix_rel(naive.d_a, oracle.d_a),
            _matrix_rel(naive.d_b, oracle.d_b),
            _matrix_rel(blocked.d_a, oracle.d_a),
            _matrix_rel(blocked.d_b, oracle.d_b),
            _matrix_rel(naive.d_x.data, oracle.d_x.data),
        )
        dx_match = naive.d_x.data.tobytes() == blocked.d_x.data.tobytes()

        x32 = ActivationTensor(x.data.astype(np.float32))
        up32 = ActivationTensor(upstream.data.astype(np.float32))
        naive32 = backward_naive(x32, up32, params)
        blocked32 = backward_blocked(x32, up32, params, plan)
        dx_match32 = naive32.d_x.data.tobytes() == blocked32.d_x.data.tobytes()

        checks.append({
            "name": "instance %d" % k,
            "passed": bool(rel <= 1e-12 and dx_match and dx_match32),
            "max_rel_error": rel,
            "dx_bitwise_double": dx_match,
            "dx_bitwise_single": dx_match32,
        })
    passed = all(c["passed"] for c in checks)
    worst = max(c["max_rel_error"] for c in checks)
    return SuiteResult(
        suite="oracle", scale=scale, passed=passed, checks=checks,
        details={"max_rel_error": worst, "tolerance": 1e-12, "instances": n_instances},
    )


ACCESS_CONFIGS = [
    # (batch, seq, feature, block_size, group_width, (num_coeffs, den_coeffs))
    (2, 4, 16, 8, 8, (6, 4)),
    (1, 1, 1, 1, 1, (1, 0)),
    (2, 4, 16, 4, 4, (6, 4)),
    (4, 2, 8, 2, 4, (3, 2)),
    (1, 8, 8, 4, 2, (6, 4)),
    (2, 2, 4, 2, 2, (2, 1)),
    (8, 1, 4, 2, 4, (6, 4)),
    (2, 4, 16, 8, 16, (6, 4)),
    (1, 16, 32, 4, 8, (6, 4)),
    (2, 8, 8, 16, 4, (4, 3)),
    (4, 4, 64, 8, 8, (6, 4)),
    (2, 3, 6, 3, 3, (5, 4)),
]


def verify_access(scale: str = "desk", seed: int = 13) -> SuiteResult:
    """Instrumented access totals equal the closed forms exactly."""
    rng = np.random.default_rng(seed)
    checks = []
    for batch, seq, feat, block, d_g, (mp1, nden) in ACCESS_CONFIGS:
        n_g = feat // d_g
        layout = GroupLayout(feat, n_g)
        params = GroupRationalParams(
            rng.standard_normal((n_g, mp1)), rng.standard_normal((n_g, nden))
        )
        m_c = params.total_coeffs
        x = ActivationTensor(rng.standard_normal((batch, seq, feat)))
        upstream = ActivationTensor(rng.standard_normal((batch, seq, feat)))

        _, naive_report = instrumented_backward(
            x, upstream, params, ExecutionPlan.naive(batch, seq, layout, block)
        )
        _, blocked_report = instrumented_backward(
            x, upstream, params, ExecutionPlan.blocked(batch, seq, layout, block)
        )
        naive_pred = predict_accesses_naive(batch, seq, feat, m_c)
        blocked_pred = predict_accesses_blocked(batch, seq, feat, block, d_g, m_c)
        ok = (
            naive_report.total == naive_pred == naive_report.predicted_total
            and blocked_report.total == blocked_pred == blocked_report.predicted_total
        )
        checks.append({
            "name": "B=%d N=%d d=%d S=%d d_g=%d m_c=%d" % (batch, seq, feat, block, d_g, m_c),
            "passed": bool(ok),
            "naive_total": naive_report.total,
            "naive_predicted": naive_pred,
            "blocked_total": blocked_report.total,
            "blocked_predicted": blocked_pred,
        })
    passed = all(c["passed"] for c in checks)
    return SuiteResult(
        suite="access", scale=scale, passed=passed, checks=checks,
        details={"configurations": len(checks)},
    )


def verify_rounding(scale: str = "desk", seed: int = 14, n_passes: int = 20) -> SuiteResult:
    """Blocked accumulation must cut the mean rounding error at least 10x."""
    shape = DESK_ROUNDING_SHAPE if scale == "desk" else FULL_SCALE_ROUNDING_SHAPE
    report = rounding_experiment(shape, n_passes=n_passes, seed=seed, precision="single")
    checks = [
        {
            "name": "d_a mean MAE ratio <= 0.1",
            "passed": bool(report.mae_da_blocked <= 0.1 * report.mae_da_naive),
            "ratio": report.ratio_da,
        },
        {
            "name": "d_b mean MAE ratio <= 0.1",
            "passed": bool(report.mae_db_blocked <= 0.1 * report.mae_db_naive),
            "ratio": report.ratio_db,
        },
    ]
    passed = all(c["passed"] for c in checks)
    return SuiteResult(
        suite="rounding", scale=scale, passed=passed, checks=checks,
        details=report.to_dict(),
    )


VERIFY_SUITES = {
    "grad": verify_grad,
    "oracle": verify_oracle,
    "access": verify_access,
    "rounding": verify_rounding,
}


def run_suite(suite: str, scale: str = "desk", seed: int | None = None) -> SuiteResult:
    if suite not in VERIFY_SUITES:
        raise ValueError("unknown suite %r (choose from %s)" % (suite, sorted(VERIFY_SUITES)))
    kwargs = {} if seed is None else {"seed": seed}
    return VERIFY_SUITES[suite](scale=scale, **kwargs)
