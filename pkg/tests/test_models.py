import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qualdyn.errors import DivergenceError, ModelLookupError
from qualdyn.models import (
    ConstraintMap,
    apply_constraint,
    builtin,
    eval_jacobian,
    eval_rhs,
    finite_diff_jacobian,
    zoo_names,
)


def circuit(**kw):
    # arbitrary smooth constants; the paper does not supply them
    defaults = dict(epsilon=0.3, b=0.5, c=1.0)
    defaults.update(kw)
    return builtin("circuit", **defaults)


class TestEvalRhs:
    def test_lorenz_at_ones(self):
        m = builtin("lorenz")
        out = eval_rhs(m, [1.0, 1.0, 1.0], [10.0, 28.0, 8.0 / 3.0])
        np.testing.assert_allclose(out, [0.0, 26.0, 1.0 - 8.0 / 3.0])

    def test_lorenz_origin_fixed_point(self):
        m = builtin("lorenz")
        out = eval_rhs(m, np.zeros(3), [3.3, 17.0, 1.1])
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_hes1_zero_state_hill_saturates(self):
        m = builtin("hes1")
        out = eval_rhs(m, np.zeros(3), [2.0, 1.0, 0.005, 5.0])
        np.testing.assert_allclose(out, [1.0, 0.0, 0.0])

    def test_dimension_mismatch(self):
        m = builtin("lorenz")
        with pytest.raises(ValueError):
            eval_rhs(m, [1.0, 2.0], m.default_params)
        with pytest.raises(ValueError):
            eval_rhs(m, [1.0, 2.0, 3.0], [1.0])

    def test_overflow_raises_divergence(self):
        m = circuit()
        with pytest.raises(DivergenceError):
            eval_rhs(m, [0.0, 0.0, 1e4], [1.0])


class TestJacobian:
    def test_lorenz_hand_rows(self):
        m = builtin("lorenz")
        jac = eval_jacobian(m, [1.0, 1.0, 1.0], [10.0, 28.0, 8.0 / 3.0])
        expected = np.array([
            [-10.0, 10.0, 0.0],
            [27.0, -1.0, -1.0],
            [1.0, 1.0, -8.0 / 3.0],
        ])
        np.testing.assert_allclose(jac, expected)

    def test_lorenz_trace_is_negative_divergence(self):
        m = builtin("lorenz")
        rng = np.random.Generator(np.random.Philox(0))
        sigma, rho, beta = 10.0, 28.0, 8.0 / 3.0
        for _ in range(20):
            y = rng.uniform(-30, 30, 3)
            tr = np.trace(eval_jacobian(m, y, [sigma, rho, beta]))
            assert tr == pytest.approx(-(sigma + 1 + beta), rel=1e-12)

    def test_hes1_hill_slope_at_half_saturation(self):
        m = builtin("hes1")
        p0, nu, k1, h = 2.0, 1.0, 0.005, 4.0
        jac = eval_jacobian(m, [1.0, 1.0, p0], [p0, nu, k1, h])
        assert jac[0, 2] == pytest.approx(-h / (4.0 * p0), rel=1e-12)

    @pytest.mark.parametrize("name", zoo_names())
    def test_matches_finite_differences(self, name):
        rng = np.random.Generator(np.random.Philox(7))
        model = circuit() if name == "circuit" else builtin(name)
        checked = 0
        while checked < 100:
            if name == "hes1":
                y = rng.uniform(0.05, 5.0, model.dim)
                theta = np.array([rng.uniform(0.2, 10.0),
                                  rng.uniform(0.1, 5.0),
                                  rng.uniform(1e-3, 0.5),
                                  rng.uniform(1.0, 6.0)])
            elif name == "circuit":
                y = rng.uniform(-2.0, 2.0, model.dim)
                theta = np.array([rng.uniform(0.1, 3.0)])
            elif name == "hyperchaos4d":
                y = rng.uniform(-5.0, 5.0, model.dim)
                theta = rng.uniform(0.5, 50.0, 6)
            else:
                y = rng.uniform(-20.0, 20.0, model.dim)
                theta = rng.uniform(0.5, 30.0, 3)
            try:
                analytic = eval_jacobian(model, y, theta)
                numeric = finite_diff_jacobian(model, y, theta, 1e-6)
            except DivergenceError:
                continue
            np.testing.assert_allclose(
                analytic, numeric,
                atol=1e-5, rtol=1e-5,
                err_msg=f"{name} Jacobian mismatch at y={y}, theta={theta}")
            checked += 1


class TestFiniteDiff:
    def test_exact_for_linear_model(self, linear_decay_model):
        jac = finite_diff_jacobian(linear_decay_model, [0.7], [], 1e-6)
        assert jac[0, 0] == pytest.approx(-1.0, abs=1e-9)

    def test_lorenz_close_to_analytic(self):
        m = builtin("lorenz")
        fd = finite_diff_jacobian(m, [1.0, 1.0, 1.0], m.default_params, 1e-6)
        analytic = eval_jacobian(m, [1.0, 1.0, 1.0], m.default_params)
        np.testing.assert_allclose(fd, analytic, atol=1e-8)

    def test_zero_step_rejected(self):
        m = builtin("lorenz")
        with pytest.raises(ValueError):
            finite_diff_jacobian(m, [1.0, 1.0, 1.0], m.default_params, 0.0)


class TestConstraints:
    def test_absolute_value(self):
        p = ConstraintMap.absolute_value(2)
        np.testing.assert_array_equal(apply_constraint(p, [-3.0, 2.0]),
                                      [3.0, 2.0])

    def test_box_clamp(self):
        p = ConstraintMap.box([0.0] * 3, [30.0] * 3, mode="clamp")
        np.testing.assert_array_equal(
            apply_constraint(p, [-5.0, 40.0, 10.0]), [0.0, 30.0, 10.0])

    def test_identity(self):
        p = ConstraintMap.identity(3)
        theta = np.array([-4.0, 99.0, 0.5])
        np.testing.assert_array_equal(apply_constraint(p, theta), theta)

    def test_reflect_identity_on_interior(self):
        p = ConstraintMap.box([0.0], [10.0], mode="reflect")
        assert apply_constraint(p, [3.7])[0] == 3.7

    def test_reflect_folds_back(self):
        p = ConstraintMap.box([0.0], [10.0], mode="reflect")
        assert apply_constraint(p, [12.0])[0] == pytest.approx(8.0)
        assert apply_constraint(p, [-3.0])[0] == pytest.approx(3.0)

    @pytest.mark.parametrize("make", [
        lambda: ConstraintMap.absolute_value(3),
        lambda: ConstraintMap.box([0.0] * 3, [30.0] * 3, mode="clamp"),
        lambda: ConstraintMap.box([-1.0] * 3, [2.0] * 3, mode="reflect"),
    ])
    def test_idempotent_on_feasible(self, make):
        p = make()
        rng = np.random.Generator(np.random.Philox(3))
        for _ in range(50):
            theta = rng.uniform(-50, 50, 3)
            once = apply_constraint(p, theta)
            twice = apply_constraint(p, once)
            np.testing.assert_array_equal(once, twice)

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6,
                              allow_nan=False), min_size=3, max_size=3))
    @settings(max_examples=200, deadline=None)
    def test_output_always_feasible(self, theta):
        for p in (ConstraintMap.absolute_value(3),
                  ConstraintMap.box([0.0] * 3, [30.0] * 3, mode="clamp"),
                  ConstraintMap.box([0.0] * 3, [30.0] * 3, mode="reflect")):
            assert p.contains(apply_constraint(p, theta))


class TestZoo:
    def test_lorenz_default_params(self):
        np.testing.assert_allclose(builtin("lorenz").default_params,
                                   [10.0, 28.0, 8.0 / 3.0])

    def test_hes1_dim(self):
        assert builtin("hes1").dim == 3

    def test_hes1_kdeg_fixed(self):
        assert builtin("hes1").constants["k_deg"] == 0.03
        assert "k_deg" not in builtin("hes1").param_names

    def test_hyperchaos_accepts_reported_vector(self):
        m = builtin("hyperchaos4d")
        theta = np.array([49.98, 35.86, 30.5, 1.35, 36.6, 33.8])
        out = eval_rhs(m, m.default_initial_state, theta)
        assert np.all(np.isfinite(out))

    def test_unknown_name_lists_zoo(self):
        with pytest.raises(ModelLookupError) as err:
            builtin("roessler")
        for name in zoo_names():
            assert name in str(err.value)

    def test_circuit_requires_constants(self):
        with pytest.raises(ValueError) as err:
            builtin("circuit")
        msg = str(err.value)
        for field in ("epsilon", "b", "c"):
            assert field in msg

    def test_models_are_immutable(self):
        m = builtin("lorenz")
        with pytest.raises(AttributeError):
            m.dim = 4
