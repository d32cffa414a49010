"""Group-wise safe rational activation math.

The activation maps x to P(x) / Q(x) with

    P(x) = a_0 + a_1 x + ... + a_m x^m
    Q(x) = 1 + |b_1 x + b_2 x^2 + ... + b_n x^n|

so Q(x) >= 1 for every real x and the value and all partial derivatives are
finite whenever x and the coefficients are finite. Feature channels are split
into contiguous groups; every channel in a group shares one coefficient row.

All polynomials are evaluated with Horner's scheme, and the powers of x needed
by the coefficient gradients come from a single running product per element.
The scalar entry points reuse the vectorized kernels on 0-d arrays, so scalar
and tensor paths round identically in a given precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import LayoutMismatchError, NonFiniteInputError

PRECISION_DTYPES = {"single": np.float32, "double": np.float64}
DTYPE_PRECISIONS = {np.dtype(np.float32): "single", np.dtype(np.float64): "double"}


@dataclass(frozen=True)
class GroupLayout:
    """Partition of the feature dimension into equal contiguous groups."""

    feature_dim: int
    num_groups: int

    def __post_init__(self):
        if self.feature_dim < 1 or self.num_groups < 1:
            raise LayoutMismatchError("layout mismatch: dimensions must be positive")
        if self.feature_dim % self.num_groups != 0:
            raise LayoutMismatchError(
                "layout mismatch: feature_dim %d not divisible by num_groups %d"
                % (self.feature_dim, self.num_groups)
            )

    @property
    def group_width(self) -> int:
        return self.feature_dim // self.num_groups

    def group_slices(self) -> Iterator[tuple[int, int, int]]:
        """Yield (group, first_feature, one_past_last_feature) for each group."""
        w = self.group_width
        for g in range(self.num_groups):
            yield g, g * w, (g + 1) * w


@dataclass(frozen=True)
class GroupRationalParams:
    """Per-group coefficient rows.

    ``numerator`` has shape (num_groups, m + 1) holding a_0 .. a_m, and
    ``denominator`` has shape (num_groups, n) holding b_1 .. b_n; the constant
    denominator term is fixed to 1 and not stored.
    """

    numerator: np.ndarray
    denominator: np.ndarray

    def __post_init__(self):
        num = np.ascontiguousarray(np.atleast_2d(np.asarray(self.numerator, dtype=np.float64)))
        den = np.asarray(self.denominator, dtype=np.float64)
        if den.ndim == 1:
            den = den.reshape(num.shape[0], -1)
        den = np.ascontiguousarray(den)
        if num.ndim != 2 or den.ndim != 2:
            raise ValueError("coefficient arrays must be 2-D")
        if num.shape[1] < 1:
            raise ValueError("numerator needs at least the constant coefficient")
        if den.shape[0] != num.shape[0]:
            raise ValueError("numerator and denominator group counts differ")
        if not np.all(np.isfinite(num)) or not np.all(np.isfinite(den)):
            raise NonFiniteInputError("non-finite input: coefficients must be finite")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    @property
    def num_groups(self) -> int:
        return self.numerator.shape[0]

    @property
    def num_coeffs(self) -> int:
        """Numerator coefficient count, m + 1."""
        return self.numerator.shape[1]

    @property
    def den_coeffs(self) -> int:
        """Denominator coefficient count, n."""
        return self.denominator.shape[1]

    @property
    def degrees(self) -> tuple[int, int]:
        """(m, n) polynomial degrees."""
        return self.numerator.shape[1] - 1, self.denominator.shape[1]

    @property
    def total_coeffs(self) -> int:
        """Coefficients per group, (m + 1) + n."""
        return self.num_coeffs + self.den_coeffs

    def group_row(self, g: int) -> tuple[np.ndarray, np.ndarray]:
        return self.numerator[g], self.denominator[g]

    @classmethod
    def identity(cls, num_groups: int, degrees: tuple[int, int] = (5, 4)) -> "GroupRationalParams":
        """Coefficients making every group the exact identity function."""
        m, n = degrees
        if m < 1:
            raise ValueError("identity needs numerator degree >= 1")
        num = np.zeros((num_groups, m + 1))
        num[:, 1] = 1.0
        return cls(num, np.zeros((num_groups, n)))

    @classmethod
    def from_row(cls, numerator_row, denominator_row, num_groups: int) -> "GroupRationalParams":
        """Broadcast one coefficient row to every group."""
        num = np.tile(np.asarray(numerator_row, dtype=np.float64), (num_groups, 1))
        den = np.tile(np.asarray(denominator_row, dtype=np.float64).reshape(1, -1), (num_groups, 1))
        return cls(num, den)


@dataclass
class ActivationTensor:
    """Dense (batch, seq, feature) tensor in row-major order, f32 or f64."""

    data: np.ndarray
    validated: bool = field(default=False, repr=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        if arr.ndim != 3:
            raise ValueError("activation tensor must be rank 3 (batch, seq, feature)")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr

    @classmethod
    def from_array(cls, arr, validate: bool = True) -> "ActivationTensor":
        t = cls(np.asarray(arr))
        if validate:
            t.check_finite()
        return t

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def seq(self) -> int:
        return self.data.shape[1]

    @property
    def feature(self) -> int:
        return self.data.shape[2]

    @property
    def num_elements(self) -> int:
        return self.data.size

    @property
    def precision(self) -> str:
        return DTYPE_PRECISIONS[self.data.dtype]

    def check_finite(self) -> "ActivationTensor":
        if not self.validated:
            if not np.all(np.isfinite(self.data)):
                raise NonFiniteInputError("non-finite input")
            self.validated = True
        return self

    def rows(self) -> np.ndarray:
        """(batch * seq, feature) view of the data."""
        return self.data.reshape(self.batch * self.seq, self.feature)


@dataclass(frozen=True)
class ElementGrads:
    """Upstream-scaled partial derivatives at one element."""

    d_x: float
    d_a: np.ndarray
    d_b: np.ndarray


def _poly_horner(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate sum_k coeffs[k] x^k by Horner's scheme in x.dtype."""
    acc = np.full(x.shape, coeffs[-1], dtype=x.dtype)
    for c in coeffs[-2::-1]:
        acc = acc * x + c
    return acc


def _derivative_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Ascending coefficients of d/dx sum_k coeffs[k] x^k."""
    if coeffs.shape[0] <= 1:
        return np.zeros(1, dtype=coeffs.dtype)
    k = np.arange(1, coeffs.shape[0], dtype=coeffs.dtype)
    return coeffs[1:] * k


def _denominator_series(den: np.ndarray, x: np.ndarray) -> np.ndarray:
    """A(x) = b_1 x + ... + b_n x^n, zero when there are no denominator coefficients."""
    if den.shape[0] == 0:
        return np.zeros(x.shape, dtype=x.dtype)
    return _poly_horner(den, x) * x


def rational_values(x: np.ndarray, numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """P(x) / Q(x) for one coefficient row, evaluated in x.dtype."""
    a = np.asarray(numerator, dtype=x.dtype)
    b = np.asarray(denominator, dtype=x.dtype)
    p = _poly_horner(a, x)
    q = 1.0 + np.abs(_denominator_series(b, x))
    return p / q


def gradient_terms(
    x: np.ndarray,
    upstream: np.ndarray,
    numerator: np.ndarray,
    denominator: np.ndarray,
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Per-element gradient contributions for one coefficient row.

    Returns (d_x, da_terms, db_terms) where da_terms[i] holds the per-element
    contribution upstream * x^i / Q and db_terms[j] holds
    upstream * (-x^(j+1) * sign(A) * P / Q^2). Everything is computed in
    x.dtype with a fixed operation order shared by every caller, so the two
    accumulation strategies see bit-identical element terms. sign(0) is 0,
    the subgradient midpoint of |.|, which keeps the gradients finite at the
    kink of the denominator.
    """
    a = np.asarray(numerator, dtype=x.dtype)
    b = np.asarray(denominator, dtype=x.dtype)
    m_plus_1 = a.shape[0]
    n = b.shape[0]

    p = _poly_horner(a, x)
    series = _denominator_series(b, x)
    q = 1.0 + np.abs(series)
    sign = np.sign(series)
    inv_q = 1.0 / q
    dp = _poly_horner(_derivative_coeffs(a), x)
    if n > 0:
        da_series = _poly_horner(_derivative_coeffs(np.concatenate(([x.dtype.type(0)], b))), x)
    else:
        da_series = np.zeros(x.shape, dtype=x.dtype)

    p_over_q = p * inv_q
    d_x = upstream * (dp * inv_q - (sign * da_series) * p_over_q * inv_q)

    da_terms = []
    t = upstream * inv_q
    da_terms.append(t)
    for _ in range(1, m_plus_1):
        t = t * x
        da_terms.append(t)

    db_terms = []
    if n > 0:
        base = -(sign * upstream) * p_over_q * inv_q
        u = base * x
        db_terms.append(u)
        for _ in range(1, n):
            u = u * x
            db_terms.append(u)

    return d_x, da_terms, db_terms


def _as_scalar_array(x: float) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def eval_rational(x: float, numerator, denominator, validate: bool = True) -> float:
    """Evaluate one rational unit at a scalar point in double precision.

    Raises NonFiniteInputError for NaN or infinite x in checked mode; with
    validate=False non-finite values propagate through the arithmetic.
    """
    if validate and not np.isfinite(x):
        raise NonFiniteInputError("non-finite input")
    xv = _as_scalar_array(x)
    return float(rational_values(xv, np.asarray(numerator), np.asarray(denominator)))


def elementwise_grads(
    x: float, upstream: float, numerator, denominator, validate: bool = True
) -> ElementGrads:
    """Upstream-scaled partials of the rational unit at a scalar point."""
    if validate and not (np.isfinite(x) and np.isfinite(upstream)):
        raise NonFiniteInputError("non-finite input")
    xv = _as_scalar_array(x)
    uv = _as_scalar_array(upstream)
    d_x, da_terms, db_terms = gradient_terms(
        xv, uv, np.asarray(numerator), np.asarray(denominator)
    )
    d_a = np.array([float(t) for t in da_terms])
    d_b = np.array([float(t) for t in db_terms])
    return ElementGrads(d_x=float(d_x), d_a=d_a, d_b=d_b)


def check_compatible(x: ActivationTensor, params: GroupRationalParams, layout: GroupLayout) -> None:
    if x.feature != layout.feature_dim:
        raise LayoutMismatchError(
            "layout mismatch: tensor feature dim %d vs layout %d" % (x.feature, layout.feature_dim)
        )
    if params.num_groups != layout.num_groups:
        raise LayoutMismatchError(
            "layout mismatch: params have %d groups, layout %d"
            % (params.num_groups, layout.num_groups)
        )


def forward_tensor(
    x: ActivationTensor,
    params: GroupRationalParams,
    layout: GroupLayout,
    validate: bool = True,
) -> ActivationTensor:
    """Apply the group-wise rational to every element of a tensor.

    output[b, s, f] uses the coefficient row of group floor(f / group_width);
    shape and precision match the input.
    """
    check_compatible(x, params, layout)
    if validate:
        x.check_finite()
    rows = x.rows()
    out = np.empty_like(x.data)
    out_rows = out.reshape(rows.shape)
    for g, lo, hi in layout.group_slices():
        a, b = params.group_row(g)
        out_rows[:, lo:hi] = rational_values(rows[:, lo:hi], a, b)
    return ActivationTensor(out, validated=False)
