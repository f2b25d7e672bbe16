import math

import numpy as np
import pytest
from scipy.linalg import expm

from qualdyn.errors import DivergenceError, StiffnessError
from qualdyn.models import ModelSystem, builtin
from qualdyn.odeint import IntegratorConfig, integrate, step, step_augmented


class TestStep:
    def test_rk4_linear_decay(self, linear_decay_model):
        cfg = IntegratorConfig(method="rk4", dt=0.1)
        y1, t1, used = step(linear_decay_model, [1.0], [], 0.0, cfg)
        assert y1[0] == pytest.approx(0.9048375, abs=1e-9)
        assert abs(y1[0] - math.exp(-0.1)) < 1e-7
        assert t1 == 0.1 and used == 0.1

    def test_rk4_energy_drift(self, harmonic_model):
        cfg = IntegratorConfig(method="rk4", dt=0.01)
        y, t = np.array([1.0, 0.0]), 0.0
        for _ in range(1000):
            y, t, _ = step(harmonic_model, y, [], t, cfg)
        energy = y[0] ** 2 + y[1] ** 2
        assert abs(energy - 1.0) < 1e-6

    def test_rk4_order(self, linear_decay_model):
        def one_step_error(dt):
            cfg = IntegratorConfig(method="rk4", dt=dt)
            y1, _, _ = step(linear_decay_model, [1.0], [], 0.0, cfg)
            return abs(y1[0] - math.exp(-dt))

        ratio = one_step_error(0.2) / one_step_error(0.1)
        assert ratio >= 2 ** 4 * 0.9

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=-0.1)

    def test_dp45_accuracy(self, linear_decay_model):
        cfg = IntegratorConfig(method="dormand_prince", dt=0.5,
                               abs_tol=1e-10, rel_tol=1e-10)
        traj = integrate(linear_decay_model, [1.0], [], 0.0, 2.0, cfg)
        assert traj.y[-1, 0] == pytest.approx(math.exp(-2.0), abs=1e-8)

    def test_dp45_step_underflow_is_stiffness_error(self, blowup_model):
        # the step collapses against the finite-time singularity at t=1
        cfg = IntegratorConfig(method="dormand_prince", dt=0.01,
                               abs_tol=1e-9, rel_tol=1e-9)
        with pytest.raises(StiffnessError):
            integrate(blowup_model, [1.0], [1.0], 0.0, 2.0, cfg)


class TestIntegrate:
    def test_lorenz_bounded(self):
        m = builtin("lorenz")
        cfg = IntegratorConfig(dt=0.01)
        traj = integrate(m, [1.0, 1.0, 1.0], m.default_params, 0.0, 100.0, cfg)
        assert np.max(np.abs(traj.y)) < 100.0
        assert len(traj) == 10001

    def test_zero_length_interval(self, linear_decay_model):
        traj = integrate(linear_decay_model, [2.0], [], 1.0, 1.0,
                         IntegratorConfig(dt=0.1))
        assert len(traj) == 1
        assert traj.t[0] == 1.0 and traj.y[0, 0] == 2.0

    def test_endpoint_hit_exactly(self, linear_decay_model):
        traj = integrate(linear_decay_model, [1.0], [], 0.0, 0.25,
                         IntegratorConfig(dt=0.1))
        assert traj.t[-1] == pytest.approx(0.25, abs=1e-15)

    def test_hes1_positivity_on_limit_cycle(self):
        m = builtin("hes1")
        cfg = IntegratorConfig(dt=0.5)
        traj = integrate(m, m.default_initial_state, m.default_params,
                         0.0, 2000.0, cfg)
        assert np.all(traj.y > 0.0)

    def test_bitwise_deterministic(self):
        m = builtin("lorenz")
        cfg = IntegratorConfig(dt=0.01)
        a = integrate(m, [1.0, 1.0, 1.0], m.default_params, 0.0, 5.0, cfg)
        b = integrate(m, [1.0, 1.0, 1.0], m.default_params, 0.0, 5.0, cfg)
        assert np.array_equal(a.y, b.y) and np.array_equal(a.t, b.t)

    def test_divergence_tags_failure_time(self, blowup_model):
        with pytest.raises(DivergenceError) as err:
            integrate(blowup_model, [1.0], [1.0], 0.0, 10.0,
                      IntegratorConfig(dt=0.05))
        assert err.value.time is not None

    def test_sample_every(self):
        m = builtin("lorenz")
        traj = integrate(m, [1.0, 1.0, 1.0], m.default_params, 0.0, 1.0,
                         IntegratorConfig(dt=0.01), sample_every=10)
        assert len(traj) == 11

    def test_csv_roundtrip(self, tmp_path):
        m = builtin("lorenz")
        traj = integrate(m, [1.0, 1.0, 1.0], m.default_params, 0.0, 0.1,
                         IntegratorConfig(dt=0.01))
        path = tmp_path / "traj.csv"
        traj.write_csv(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (11, 4)
        np.testing.assert_array_equal(data[:, 1:], traj.y)


class TestStepAugmented:
    def test_scalar_tangent_decay(self, linear_decay_model):
        y, frame = np.array([1.0]), np.array([[1.0]])
        for _ in range(100):
            y, frame = step_augmented(linear_decay_model, y, frame, [],
                                      0.0, 0.01)
        assert frame[0, 0] == pytest.approx(math.exp(-1.0), abs=1e-6)

    def test_zero_field_leaves_frame(self):
        m = ModelSystem(
            name="still", dim=2, state_names=("a", "b"), param_names=(),
            rhs=lambda y, p, t: np.zeros(2),
            jacobian=lambda y, p: np.zeros((2, 2)),
            default_initial_state=(0.0, 0.0), default_params=())
        frame = np.array([[1.0, 0.0], [0.0, 1.0]])
        y1, frame1 = step_augmented(m, [0.3, -0.2], frame, [], 0.0, 0.1)
        np.testing.assert_array_equal(frame1, frame)
        np.testing.assert_array_equal(y1, [0.3, -0.2])

    def test_linear_model_matches_matrix_exponential(self):
        rng = np.random.Generator(np.random.Philox(5))
        A = rng.normal(scale=0.5, size=(3, 3))
        m = ModelSystem(
            name="linear", dim=3, state_names=("a", "b", "c"),
            param_names=(),
            rhs=lambda y, p, t: A @ y,
            jacobian=lambda y, p: A,
            default_initial_state=(1.0, 0.0, 0.0), default_params=())
        dt = 0.1
        frame = np.eye(3)
        _, frame1 = step_augmented(m, [1.0, 0.0, 0.0], frame, [], 0.0, dt)
        exact = expm(A * dt)
        # RK4 matches the exponential through 4th order in dt
        assert np.max(np.abs(frame1 - exact)) < np.linalg.norm(A) ** 5 * dt ** 5

    def test_lorenz_leading_tangent_growth(self):
        from qualdyn.lyapunov import LEConfig, estimate_spectrum
        m = builtin("lorenz")
        sp = estimate_spectrum(m, m.default_params,
                               config=LEConfig(k_exponents=1))
        assert sp.exponents[0] == pytest.approx(0.9, abs=0.1)

    def test_rejects_bad_frame(self):
        m = builtin("lorenz")
        with pytest.raises(ValueError):
            step_augmented(m, [1.0, 1.0, 1.0], np.empty((3, 0)),
                           m.default_params, 0.0, 0.01)
        with pytest.raises(ValueError):
            step_augmented(m, [1.0, 1.0, 1.0], np.eye(3),
                           m.default_params, 0.0, -0.01)
