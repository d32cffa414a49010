"""Full layer: group-wise rational activation followed by a linear map.

    y[b, s, :] = W @ F(x[b, s, :]) + bias

with F the group-wise rational of :mod:`grkan.rational`. Includes coefficient
presets that mimic common activations (identity exactly, swish and gelu by
least squares on [-3, 3]) and a variance-preserving weight initialization
driven by a Monte Carlo estimate of E[F(z)^2] for z ~ N(0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backward import (
    DEFAULT_BLOCK_SIZE,
    STRATEGY_BLOCKED,
    STRATEGY_NAIVE,
    ExecutionPlan,
    GradBundle,
    backward_blocked,
    backward_naive,
)
from .errors import ActivationFitError, DegenerateAlphaError, LayoutMismatchError
from .rational import (
    ActivationTensor,
    GroupLayout,
    GroupRationalParams,
    forward_tensor,
    rational_values,
)

PRESET_DIR = Path(__file__).parent / "presets"
FIT_DOMAIN = (-3.0, 3.0)
FIT_GRID_POINTS = 2001
FIT_MAX_ERROR = 1e-2
SUPPORTED_TARGETS = ("identity", "swish", "gelu")


@dataclass
class GrKanLayer:
    """Layer parameters: group coefficients plus the linear map."""

    params: GroupRationalParams
    layout: GroupLayout
    weight: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weight = np.ascontiguousarray(np.asarray(self.weight, dtype=np.float64))
        if self.weight.ndim != 2:
            raise ValueError("weight must be a (d_out, d_in) matrix")
        if self.weight.shape[1] != self.layout.feature_dim:
            raise LayoutMismatchError(
                "layout mismatch: weight d_in %d vs layout %d"
                % (self.weight.shape[1], self.layout.feature_dim)
            )
        if self.params.num_groups != self.layout.num_groups:
            raise LayoutMismatchError("layout mismatch: params groups vs layout groups")
        if self.bias is None:
            self.bias = np.zeros(self.weight.shape[0])
        self.bias = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64))
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError("bias must have length d_out")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class InitSpec:
    """Configuration for variance-preserving weight initialization.

    ``alpha`` is filled in by :func:`init_variance_preserving` with the
    estimated second moment E[F(z)^2] / Var[z] (Var[z] = 1 for the standard
    normal probe).
    """

    target_activation: str = "identity"
    mc_samples: int = 1_000_000
    seed: int = 0
    alpha: float | None = None


@dataclass(frozen=True)
class ActivationFit:
    """One fitted coefficient row with its provenance."""

    activation: str
    numerator: np.ndarray
    denominator: np.ndarray
    fit_domain: tuple[float, float]
    fit_error: float

    @property
    def degrees(self) -> tuple[int, int]:
        return self.numerator.shape[0] - 1, self.denominator.shape[0]


def _swish(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def _gelu(x: np.ndarray) -> np.ndarray:
    return np.array([0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0))) for v in x])


_TARGET_FUNCS = {"swish": _swish, "gelu": _gelu}


def _safe_rational_grid(x, a, b):
    return rational_values(x, a, b)


def _lstsq(design: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        solution, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    except np.linalg.LinAlgError as exc:
        raise ActivationFitError(
            "fit failure: singular normal equations (cond=%.3e)" % np.linalg.cond(design)
        ) from exc
    if rank < design.shape[1]:
        raise ActivationFitError(
            "fit failure: rank-deficient design, rank %d < %d (cond=%.3e)"
            % (rank, design.shape[1], np.linalg.cond(design))
        )
    return solution


def fit_activation_coeffs(target: str, degrees: tuple[int, int] = (5, 4)) -> ActivationFit:
    """Fit one coefficient row so the rational mimics a known activation.

    ``identity`` is exact: a = (0, 1, 0, ...), b = 0. ``swish`` and ``gelu``
    are fitted on a uniform 2001-point grid over [-3, 3], first with a
    linearized iteration on the unsigned denominator form and then polished
    with damped Gauss-Newton steps on the true safe-form residual.
    """
    m, n = degrees
    if target == "identity":
        num = np.zeros(m + 1)
        num[1] = 1.0
        return ActivationFit("identity", num, np.zeros(n), FIT_DOMAIN, 0.0)
    if target not in _TARGET_FUNCS:
        raise ValueError("unknown activation target %r" % (target,))

    x = np.linspace(FIT_DOMAIN[0], FIT_DOMAIN[1], FIT_GRID_POINTS)
    y = _TARGET_FUNCS[target](x)
    vp = np.vander(x, m + 1, increasing=True)
    vq = np.vander(x, n + 1, increasing=True)[:, 1:]

    a = _lstsq(vp, y)
    b = np.zeros(n)
    # Linearized passes: solve P(x) - y * A(x) = y reweighted by 1 / |Q|.
    for _ in range(30):
        q = 1.0 + vq @ b
        w = 1.0 / np.maximum(np.abs(q), 1e-6)
        design = np.hstack([vp, -y[:, None] * vq]) * w[:, None]
        theta = _lstsq(design, y * w)
        a, b = theta[: m + 1], theta[m + 1:]

    def max_err(av, bv):
        return float(np.max(np.abs(_safe_rational_grid(x, av, bv) - y)))

    best_err, best_a, best_b = max_err(a, b), a.copy(), b.copy()
    lam = 1e-8
    for _ in range(150):
        series = vq @ b
        q = 1.0 + np.abs(series)
        sign = np.sign(series)
        p = vp @ a
        resid = p / q - y
        jac = np.hstack([vp / q[:, None], -(sign * p / q**2)[:, None] * vq])
        try:
            step = np.linalg.solve(jac.T @ jac + lam * np.eye(jac.shape[1]), jac.T @ resid)
        except np.linalg.LinAlgError as exc:
            raise ActivationFitError(
                "fit failure: singular normal equations (cond=%.3e)"
                % np.linalg.cond(jac.T @ jac)
            ) from exc
        a2, b2 = a - step[: m + 1], b - step[m + 1:]
        err2 = max_err(a2, b2)
        if err2 < best_err:
            best_err, best_a, best_b = err2, a2.copy(), b2.copy()
        new_sq = float(np.sum((_safe_rational_grid(x, a2, b2) - y) ** 2))
        if new_sq <= float(np.sum(resid**2)):
            a, b, lam = a2, b2, max(lam / 3.0, 1e-12)
        else:
            lam *= 5.0

    if best_err > FIT_MAX_ERROR:
        raise ActivationFitError(
            "fit failure: max grid error %.3e exceeds %.0e" % (best_err, FIT_MAX_ERROR)
        )
    return ActivationFit(target, best_a, best_b, FIT_DOMAIN, best_err)


def save_coeff_preset(path: str | Path, fit: ActivationFit) -> None:
    """Write a coefficient preset as a key-value text document.

    Floats are serialized with repr, which round-trips double precision
    exactly.
    """
    lines = [
        "activation = %s" % fit.activation,
        "m = %d" % fit.degrees[0],
        "n = %d" % fit.degrees[1],
        "fit_domain = %s %s" % (repr(fit.fit_domain[0]), repr(fit.fit_domain[1])),
        "fit_error = %s" % repr(float(fit.fit_error)),
        "numerator = %s" % ", ".join(repr(float(v)) for v in fit.numerator),
        "denominator = %s" % ", ".join(repr(float(v)) for v in fit.denominator),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_coeff_preset(path: str | Path) -> ActivationFit:
    fields: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    num = np.array([float(v) for v in fields["numerator"].split(",") if v.strip()])
    den_text = fields.get("denominator", "")
    den = np.array([float(v) for v in den_text.split(",") if v.strip()])
    lo, hi = fields["fit_domain"].split()
    fit = ActivationFit(
        activation=fields["activation"],
        numerator=num,
        denominator=den,
        fit_domain=(float(lo), float(hi)),
        fit_error=float(fields["fit_error"]),
    )
    if fit.degrees != (int(fields["m"]), int(fields["n"])):
        raise ActivationFitError("fit failure: preset degrees disagree with coefficient counts")
    return fit


def load_builtin_preset(target: str) -> ActivationFit:
    return load_coeff_preset(PRESET_DIR / ("%s.coeffs" % target))


def activation_row(target: str, degrees: tuple[int, int] = (5, 4)) -> ActivationFit:
    """Builtin preset when one matches, otherwise a fresh fit."""
    if target in SUPPORTED_TARGETS:
        preset_path = PRESET_DIR / ("%s.coeffs" % target)
        if preset_path.exists():
            fit = load_coeff_preset(preset_path)
            if fit.degrees == degrees:
                return fit
    return fit_activation_coeffs(target, degrees)


def make_layer(
    d_in: int,
    d_out: int,
    num_groups: int,
    target: str = "identity",
    degrees: tuple[int, int] = (5, 4),
    weight: np.ndarray | None = None,
) -> GrKanLayer:
    """Layer with every group set to the same activation-mimicking row."""
    layout = GroupLayout(d_in, num_groups)
    fit = activation_row(target, degrees)
    params = GroupRationalParams.from_row(fit.numerator, fit.denominator, num_groups)
    if weight is None:
        weight = np.zeros((d_out, d_in))
    return GrKanLayer(params=params, layout=layout, weight=weight)


def estimate_alpha(params: GroupRationalParams, mc_samples: int, seed: int) -> float:
    """Monte Carlo estimate of E[F(z)^2] for z ~ N(0, 1), averaged over groups."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(mc_samples)
    second_moments = [
        float(np.mean(rational_values(z, *params.group_row(g)) ** 2))
        for g in range(params.num_groups)
    ]
    return float(np.mean(second_moments))


def init_variance_preserving(layer: GrKanLayer, spec: InitSpec) -> GrKanLayer:
    """Draw the weight matrix so layer output variance matches input variance.

    With alpha = E[F(z)^2] for unit-variance input, weights are drawn i.i.d.
    from N(0, 1 / (alpha * d_in)), giving Var[row . F(z)] = alpha * d_in /
    (alpha * d_in) = 1. The bias starts at zero. The estimated alpha is
    recorded on the init spec for inspection.
    """
    if spec.mc_samples < 100_000:
        raise ValueError("mc_samples must be at least 1e5 for initialization use")
    alpha = estimate_alpha(layer.params, spec.mc_samples, spec.seed)
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise DegenerateAlphaError("degenerate alpha: E[F(z)^2] = %r" % (alpha,))
    spec.alpha = alpha
    rng = np.random.default_rng(spec.seed)
    scale = math.sqrt(1.0 / (alpha * layer.d_in))
    weight = rng.normal(0.0, scale, size=(layer.d_out, layer.d_in))
    return GrKanLayer(
        params=layer.params,
        layout=layer.layout,
        weight=weight,
        bias=np.zeros(layer.d_out),
    )


def layer_forward(layer: GrKanLayer, x: ActivationTensor, validate: bool = True) -> ActivationTensor:
    """y[b, s, :] = W @ F(x[b, s, :]) + bias, in the input precision."""
    activated = forward_tensor(x, layer.params, layer.layout, validate=validate)
    rows = activated.rows()
    w = layer.weight.astype(rows.dtype, copy=False)
    bias = layer.bias.astype(rows.dtype, copy=False)
    out_rows = rows @ w.T + bias
    return ActivationTensor(out_rows.reshape(x.batch, x.seq, layer.d_out))


def layer_backward(
    layer: GrKanLayer,
    x: ActivationTensor,
    upstream_y: ActivationTensor,
    strategy: str = STRATEGY_BLOCKED,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
    validate: bool = True,
) -> tuple[GradBundle, np.ndarray, np.ndarray]:
    """Gradients of the layer: rational-stage bundle plus d_weight and d_bias.

    The rational stage receives W^T @ upstream_y per position and delegates to
    the selected accumulation strategy (blocked by default). d_weight is
    accumulated from per-row-block partial products combined in ascending
    block order, the same deterministic ordered-combine contract the blocked
    strategy uses, so results do not depend on worker count.
    """
    if upstream_y.feature != layer.d_out:
        raise LayoutMismatchError(
            "layout mismatch: upstream feature %d vs d_out %d" % (upstream_y.feature, layer.d_out)
        )
    if (upstream_y.batch, upstream_y.seq) != (x.batch, x.seq):
        raise LayoutMismatchError("layout mismatch: upstream batch/seq differ from input")
    if validate:
        x.check_finite()
        upstream_y.check_finite()

    dt = x.data.dtype
    uy_rows = upstream_y.rows().astype(dt, copy=False)
    w = layer.weight.astype(dt, copy=False)

    upstream_rational = ActivationTensor(
        (uy_rows @ w).reshape(x.batch, x.seq, layer.d_in)
    )
    if strategy == STRATEGY_NAIVE:
        plan = ExecutionPlan.naive(x.batch, x.seq, layer.layout, block_size)
        bundle = backward_naive(x, upstream_rational, layer.params, plan, validate=validate)
    else:
        plan = ExecutionPlan.blocked(x.batch, x.seq, layer.layout, block_size)
        bundle = backward_blocked(
            x, upstream_rational, layer.params, plan, workers=workers, validate=validate
        )

    activated_rows = forward_tensor(x, layer.params, layer.layout, validate=False).rows()
    n_rows = activated_rows.shape[0]
    d_weight = np.zeros((layer.d_out, layer.d_in), dtype=dt)
    d_bias = np.zeros(layer.d_out, dtype=dt)
    for start in range(0, n_rows, block_size):
        stop = min(start + block_size, n_rows)
        d_weight += uy_rows[start:stop].T @ activated_rows[start:stop]
        d_bias += uy_rows[start:stop].sum(axis=0)
    return bundle, d_weight.astype(np.float64), d_bias.astype(np.float64)
