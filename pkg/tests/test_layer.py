import numpy as np
import pytest

from grkan import (
    ActivationTensor,
    DegenerateAlphaError,
    GroupLayout,
    GroupRationalParams,
    GrKanLayer,
    InitSpec,
    LayoutMismatchError,
    estimate_alpha,
    eval_rational,
    fit_activation_coeffs,
    init_variance_preserving,
    layer_backward,
    layer_forward,
    load_coeff_preset,
    make_layer,
    save_coeff_preset,
)
from grkan.layer import PRESET_DIR, load_builtin_preset
from grkan.verification import layer_finite_diff_check

from conftest import rel_err


def swish(x):
    return x / (1.0 + np.exp(-x))


def gelu(x):
    from math import erf, sqrt
    return np.array([0.5 * v * (1.0 + erf(v / sqrt(2.0))) for v in np.atleast_1d(x)])


class TestActivationFits:
    def test_identity_exact(self):
        fit = fit_activation_coeffs("identity", (5, 4))
        assert np.array_equal(fit.numerator, [0, 1, 0, 0, 0, 0])
        assert np.array_equal(fit.denominator, np.zeros(4))
        assert fit.fit_error == 0.0
        for x in (-1000.0, -1.5, 0.0, 2.5, 1000.0):
            assert eval_rational(x, fit.numerator, fit.denominator) == x

    def test_swish_fit_at_zero(self):
        fit = load_builtin_preset("swish")
        assert abs(eval_rational(0.0, fit.numerator, fit.denominator)) <= 1e-2

    @pytest.mark.parametrize("target,func", [("swish", swish), ("gelu", gelu)])
    def test_fit_error_on_grid(self, target, func):
        fit = load_builtin_preset(target)
        x = np.linspace(*fit.fit_domain, 2001)
        got = np.array([eval_rational(v, fit.numerator, fit.denominator) for v in x])
        err = float(np.max(np.abs(got - func(x))))
        assert err <= 1e-2
        assert err <= fit.fit_error + 1e-12  # recorded error is the achieved one

    def test_unknown_target(self):
        with pytest.raises(ValueError):
            fit_activation_coeffs("relu6", (5, 4))

    def test_singular_design_raises_with_diagnostics(self):
        from grkan.errors import ActivationFitError
        from grkan.layer import _lstsq

        with pytest.raises(ActivationFitError, match="cond"):
            _lstsq(np.zeros((8, 3)), np.ones(8))

    def test_preset_roundtrip_exact(self, tmp_path):
        fit = fit_activation_coeffs("swish", (5, 4))
        path = tmp_path / "swish.coeffs"
        save_coeff_preset(path, fit)
        loaded = load_coeff_preset(path)
        assert np.array_equal(loaded.numerator, fit.numerator)
        assert np.array_equal(loaded.denominator, fit.denominator)
        assert loaded.fit_error == fit.fit_error
        assert loaded.fit_domain == fit.fit_domain

    def test_builtin_presets_present(self):
        for name in ("identity", "swish", "gelu"):
            fit = load_coeff_preset(PRESET_DIR / f"{name}.coeffs")
            assert fit.degrees == (5, 4)
            assert fit.fit_error <= 1e-2


class TestVariancePreservingInit:
    def test_identity_alpha_near_one(self):
        params = GroupRationalParams.identity(2)
        n = 200_000
        alpha = estimate_alpha(params, n, seed=5)
        # E[z^2] = 1 and Var[z^2] = 2, so 3 standard errors is 3 * sqrt(2 / n).
        assert abs(alpha - 1.0) <= 3.0 * np.sqrt(2.0 / n)

    def test_degenerate_alpha(self):
        layer = GrKanLayer(
            params=GroupRationalParams(np.zeros((2, 6)), np.zeros((2, 4))),
            layout=GroupLayout(8, 2),
            weight=np.zeros((4, 8)),
        )
        with pytest.raises(DegenerateAlphaError):
            init_variance_preserving(layer, InitSpec("identity", mc_samples=100_000, seed=0))

    def test_mc_samples_floor(self):
        layer = make_layer(8, 4, 2)
        with pytest.raises(ValueError):
            init_variance_preserving(layer, InitSpec("identity", mc_samples=10_000, seed=0))

    def test_swish_layer_preserves_variance(self):
        # Unit-variance inputs through a swish-initialized layer keep unit
        # output variance to within 20 percent.
        d_in = 768
        layer = make_layer(d_in, 64, 8, target="swish")
        spec = InitSpec("swish", mc_samples=1_000_000, seed=9)
        layer = init_variance_preserving(layer, spec)
        assert spec.alpha is not None and spec.alpha > 0
        rng = np.random.default_rng(10)
        x = ActivationTensor(rng.standard_normal((512, 4, d_in)))
        y = layer_forward(layer, x)
        var = float(np.var(y.data))
        assert abs(var - 1.0) <= 0.2

    def test_alpha_recorded_on_spec(self):
        layer = make_layer(8, 4, 2, target="identity")
        spec = InitSpec("identity", mc_samples=100_000, seed=3)
        init_variance_preserving(layer, spec)
        assert spec.alpha == pytest.approx(1.0, abs=0.05)


class TestLayerForward:
    def test_identity_weight_identity_coeffs(self, rng):
        layer = make_layer(4, 4, 2, target="identity", weight=np.eye(4))
        x = ActivationTensor(rng.uniform(-1000, 1000, (2, 3, 4)))
        y = layer_forward(layer, x)
        assert y.data.tobytes() == x.data.tobytes()

    def test_sum_weights(self):
        layer = make_layer(2, 1, 1, target="identity", weight=np.array([[1.0, 1.0]]))
        x = ActivationTensor(np.array([[[2.0, 5.0]]]))
        y = layer_forward(layer, x)
        assert y.data.ravel().tolist() == [7.0]

    def test_against_scalar_oracle(self, rng):
        layout = GroupLayout(6, 3)
        params = GroupRationalParams(rng.standard_normal((3, 6)), rng.standard_normal((3, 4)))
        weight = rng.standard_normal((5, 6))
        bias = rng.standard_normal(5)
        layer = GrKanLayer(params=params, layout=layout, weight=weight, bias=bias)
        x = ActivationTensor(rng.standard_normal((2, 2, 6)))
        y = layer_forward(layer, x)

        for b in range(2):
            for s in range(2):
                feats = [
                    eval_rational(float(x.data[b, s, f]), *params.group_row(f // 2))
                    for f in range(6)
                ]
                for o in range(5):
                    want = sum(weight[o, i] * feats[i] for i in range(6)) + bias[o]
                    assert rel_err(y.data[b, s, o], want) <= 1e-12

    def test_shape_mismatch(self, rng):
        layer = make_layer(4, 2, 2)
        with pytest.raises(LayoutMismatchError):
            layer_forward(layer, ActivationTensor(rng.standard_normal((1, 1, 6))))


class TestLayerBackward:
    def test_identity_configuration(self, rng):
        layer = make_layer(4, 4, 2, target="identity", weight=np.eye(4))
        x = ActivationTensor(rng.standard_normal((2, 2, 4)))
        ones = ActivationTensor(np.ones((2, 2, 4)))
        bundle, d_w, d_bias = layer_backward(layer, x, ones)
        assert np.allclose(bundle.d_x.data, 1.0)
        want_dw = np.tile(x.rows().sum(axis=0), (4, 1))
        assert np.allclose(d_w, want_dw)
        assert np.allclose(d_bias, np.full(4, 4.0))

    def test_zero_upstream(self, rng):
        layer = make_layer(4, 3, 2, target="swish",
                           weight=rng.standard_normal((3, 4)))
        x = ActivationTensor(rng.standard_normal((2, 2, 4)))
        zero = ActivationTensor(np.zeros((2, 2, 3)))
        bundle, d_w, d_bias = layer_backward(layer, x, zero)
        assert np.all(bundle.d_x.data == 0)
        assert np.all(d_w == 0)
        assert np.all(d_bias == 0)
        assert np.all(bundle.d_a == 0)
        assert np.all(bundle.d_b == 0)

    def test_finite_differences_small_instance(self, rng):
        layout = GroupLayout(4, 2)
        layer = GrKanLayer(
            params=GroupRationalParams(rng.standard_normal((2, 6)), rng.standard_normal((2, 4))),
            layout=layout,
            weight=rng.standard_normal((3, 4)),
            bias=rng.standard_normal(3),
        )
        x = ActivationTensor(rng.standard_normal((2, 2, 4)))
        upstream = ActivationTensor(rng.standard_normal((2, 2, 3)))
        report = layer_finite_diff_check(layer, x, upstream, tolerance=1e-6)
        assert report.passed, report.failures[:3]

    def test_naive_strategy_delegation(self, rng):
        layer = make_layer(4, 3, 2, target="swish", weight=rng.standard_normal((3, 4)))
        x = ActivationTensor(rng.standard_normal((2, 2, 4)))
        uy = ActivationTensor(rng.standard_normal((2, 2, 3)))
        blocked, d_w_b, _ = layer_backward(layer, x, uy, strategy="blocked_reduction")
        naive, d_w_n, _ = layer_backward(layer, x, uy, strategy="naive_atomic")
        assert blocked.strategy == "blocked_reduction"
        assert naive.strategy == "naive_atomic"
        assert rel_err(blocked.d_a, naive.d_a) <= 1e-12
        assert np.array_equal(d_w_b, d_w_n)

    def test_upstream_shape_mismatch(self, rng):
        layer = make_layer(4, 3, 2)
        x = ActivationTensor(rng.standard_normal((2, 2, 4)))
        with pytest.raises(LayoutMismatchError):
            layer_backward(layer, x, ActivationTensor(rng.standard_normal((2, 2, 4))))
