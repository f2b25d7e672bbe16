import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qualdyn.errors import DegenerateFrameError, UnboundedDimensionError
from qualdyn.lyapunov import (
    AttractorClass,
    LEConfig,
    LyapunovSpectrum,
    classify,
    estimate_spectrum,
    gram_schmidt,
    kaplan_yorke_dimension,
    spectrum_record,
)
from qualdyn.models import builtin


class TestGramSchmidt:
    def test_identity_unchanged(self):
        q, norms = gram_schmidt(np.eye(3))
        np.testing.assert_array_equal(q, np.eye(3))
        np.testing.assert_array_equal(norms, np.ones(3))

    def test_hand_example(self):
        frame = np.array([[1.0, 1.0], [0.0, 1.0]])  # columns (1,0), (1,1)
        q, norms = gram_schmidt(frame)
        np.testing.assert_allclose(q, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(norms, [1.0, 1.0])

    def test_random_frame_orthonormal(self):
        rng = np.random.Generator(np.random.Philox(11))
        frame = rng.normal(size=(5, 5))
        q, _ = gram_schmidt(frame)
        np.testing.assert_allclose(q.T @ q, np.eye(5), atol=1e-12)

    def test_norms_are_residual_growth(self):
        # second norm is the component of column 2 orthogonal to column 1
        frame = np.array([[2.0, 3.0], [0.0, 4.0]])
        _, norms = gram_schmidt(frame)
        np.testing.assert_allclose(norms, [2.0, 4.0])

    def test_degenerate_frame_raises(self):
        # second column exactly parallel: residual cancels to exactly zero
        frame = np.array([[1.0, 2.0], [0.0, 0.0]])
        with pytest.raises(DegenerateFrameError):
            gram_schmidt(frame)

    def test_span_preservation(self):
        rng = np.random.Generator(np.random.Philox(12))
        frame = rng.normal(size=(4, 4))
        q, _ = gram_schmidt(frame)
        for j in range(1, 5):
            proj = q[:, :j] @ (q[:, :j].T @ frame[:, :j])
            assert np.max(np.abs(proj - frame[:, :j])) < 1e-10


class TestEstimateSpectrum:
    def test_linear_decay_exponent(self, linear_decay_model):
        cfg = LEConfig(burn_in_steps=100, estimation_steps=2000, dt=0.01)
        sp = estimate_spectrum(linear_decay_model, [], config=cfg)
        assert sp.exponents[0] == pytest.approx(-1.0, abs=1e-3)

    def test_harmonic_oscillator_zero_pair(self, harmonic_model):
        cfg = LEConfig(burn_in_steps=100, estimation_steps=5000, dt=0.01)
        sp = estimate_spectrum(harmonic_model, [], config=cfg)
        np.testing.assert_allclose(sp.exponents, [0.0, 0.0], atol=1e-3)

    def test_lorenz_reference_spectrum(self):
        m = builtin("lorenz")
        sp = estimate_spectrum(m, m.default_params)
        assert 0.85 <= sp.exponents[0] <= 0.95
        assert abs(sp.exponents[1]) <= 0.02
        assert -15.8 <= sp.exponents[2] <= -14.0

    def test_sum_rule_lorenz(self):
        m = builtin("lorenz")
        sp = estimate_spectrum(m, m.default_params)
        expected = -(10.0 + 1.0 + 8.0 / 3.0)
        assert sp.exponents.sum() == pytest.approx(expected, rel=0.02)

    def test_diverged_orbit_flagged(self, blowup_model):
        cfg = LEConfig(burn_in_steps=10, estimation_steps=100, dt=0.1)
        sp = estimate_spectrum(blowup_model, [1.0], config=cfg)
        assert sp.diverged
        assert classify(sp).kind is AttractorClass.DIVERGENT

    def test_initial_frame_rotation_invariance(self):
        m = builtin("lorenz")
        rng = np.random.Generator(np.random.Philox(21))
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        base = estimate_spectrum(m, m.default_params)
        rotated = estimate_spectrum(m, m.default_params, frame0=q)
        assert rotated.exponents[0] == pytest.approx(base.exponents[0],
                                                     abs=0.02)

    def test_initial_state_perturbation_invariance(self):
        m = builtin("lorenz")
        base = estimate_spectrum(m, m.default_params)
        moved = estimate_spectrum(m, m.default_params, y0=[2.0, -1.0, 5.0])
        assert moved.exponents[0] == pytest.approx(base.exponents[0],
                                                   abs=0.02)

    def test_backends_agree(self):
        m = builtin("lorenz")
        cfg = LEConfig(burn_in_steps=200, estimation_steps=2000, dt=0.01)
        via_python = estimate_spectrum(m, m.default_params, config=cfg,
                                       backend_choice="python")
        via_auto = estimate_spectrum(m, m.default_params, config=cfg)
        np.testing.assert_allclose(via_auto.exponents, via_python.exponents,
                                   atol=0.05)

    def test_renorm_interval_consistency(self):
        m = builtin("lorenz")
        every = estimate_spectrum(m, m.default_params)
        coarse = estimate_spectrum(m, m.default_params,
                                   config=LEConfig(renorm_interval=5))
        assert coarse.exponents[0] == pytest.approx(every.exponents[0],
                                                    abs=0.05)

    def test_k_exponents_subset(self):
        m = builtin("lorenz")
        sp = estimate_spectrum(m, m.default_params,
                               config=LEConfig(k_exponents=2))
        assert len(sp) == 2
        assert 0.85 <= sp.exponents[0] <= 0.95

    def test_deterministic(self):
        m = builtin("lorenz")
        a = estimate_spectrum(m, m.default_params)
        b = estimate_spectrum(m, m.default_params)
        np.testing.assert_array_equal(a.exponents, b.exponents)


class TestClassify:
    def test_paper_chaos_example(self):
        sp = LyapunovSpectrum([0.899, 2.74e-4, -14.6], 0.01, 10000)
        assert classify(sp, delta_tol=0.05).kind is AttractorClass.CHAOS

    def test_oscillation_example(self):
        sp = LyapunovSpectrum([-0.002, -1.3], 0.01, 10000)
        out = classify(sp, osc_tol=6e-3)
        assert out.kind is AttractorClass.LIMIT_CYCLE_OR_TORUS

    def test_hyperchaos_example(self):
        sp = LyapunovSpectrum([31.8, 16.8, -19.1, -71.4], 0.001, 10000)
        assert classify(sp).kind is AttractorClass.HYPERCHAOS

    def test_fixed_point(self):
        sp = LyapunovSpectrum([-0.5, -1.0], 0.01, 10000)
        assert classify(sp).kind is AttractorClass.FIXED_POINT

    def test_gap_reports_low_confidence_chaos(self):
        sp = LyapunovSpectrum([0.02, -1.0], 0.01, 10000)
        out = classify(sp, delta_tol=0.05, osc_tol=6e-3)
        assert out.kind is AttractorClass.CHAOS
        assert out.low_confidence

    def test_divergent_flag_wins(self):
        sp = LyapunovSpectrum([np.inf, np.inf], 0.01, 100, diverged=True)
        assert classify(sp).kind is AttractorClass.DIVERGENT

    _SEVERITY = {
        AttractorClass.FIXED_POINT: 0,
        AttractorClass.LIMIT_CYCLE_OR_TORUS: 1,
        AttractorClass.CHAOS: 2,
        AttractorClass.HYPERCHAOS: 3,
    }

    @given(st.floats(-5.0, 5.0), st.floats(-5.0, 5.0),
           st.floats(min_value=1e-4, max_value=4.9))
    @settings(max_examples=300, deadline=None)
    def test_monotone_in_leading_exponent(self, lam1, lam2, bump):
        lam2 = min(lam2, lam1)
        low = classify(LyapunovSpectrum([lam1, lam2], 0.01, 100))
        high = classify(LyapunovSpectrum([lam1 + bump, lam2], 0.01, 100))
        assert self._SEVERITY[high.kind] >= self._SEVERITY[low.kind]


class TestKaplanYorke:
    def test_sprott_reference(self):
        D = kaplan_yorke_dimension((0.906, 0.0, -14.57))
        assert D == pytest.approx(2.0622, abs=1e-4)

    def test_limit_cycle_dimension_one(self):
        assert kaplan_yorke_dimension((0.0, -1.0)) == 1.0

    def test_fixed_point_dimension_zero(self):
        assert kaplan_yorke_dimension((-0.5, -1.0)) == 0.0

    def test_all_nonnegative_unbounded(self):
        with pytest.raises(UnboundedDimensionError):
            kaplan_yorke_dimension((1.0, 0.5))

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            kaplan_yorke_dimension((0.0, 1.0))

    def test_accepts_spectrum_object(self):
        sp = LyapunovSpectrum([0.906, 0.0, -14.57], 0.01, 10000)
        assert kaplan_yorke_dimension(sp) == pytest.approx(2.0622, abs=1e-4)


class TestRecord:
    def test_json_round_trip_fields(self):
        sp = LyapunovSpectrum([0.9, 0.0, -14.5], 0.01, 10000)
        rec = spectrum_record(sp)
        assert rec["class"] == "Chaos"
        assert rec["diverged"] is False
        assert rec["ky_dimension"] == pytest.approx(2 + 0.9 / 14.5)
        assert rec["dt"] == 0.01 and rec["steps"] == 10000

    def test_diverged_record(self):
        sp = LyapunovSpectrum([np.inf], 0.01, 100, diverged=True)
        rec = spectrum_record(sp)
        assert rec["exponents"] is None
        assert rec["class"] == "Divergent"
        assert rec["ky_dimension"] is None
