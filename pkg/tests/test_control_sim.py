import math

import numpy as np
import pytest
from scipy.linalg import expm

from adaptalloc.control_sim import (DEG, ControllerGains, Pulse,
                                    ReferenceSignal, Scenario, SimSettings,
                                    build_scenario, controller, format_metrics,
                                    lqr_gains, metrics, rk4_step, run_scenario,
                                    soft_saturate, total_variation)
from adaptalloc.exceptions import IntegrationFault, ValidationError
from adaptalloc.plant import admire_model


def short(case="III", **kw):
    kw.setdefault("duration", 1.0)
    return build_scenario(case, SimSettings(**kw))


class TestSoftSaturation:
    def test_small_signal_passes(self):
        out = soft_saturate([1e-4, 0.0, -1e-4], np.zeros(3), 1e-3,
                            [1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        assert np.allclose(out, [1e-4, 0.0, -1e-4], rtol=1e-8)

    def test_magnitude_and_rate(self):
        M = np.array([0.5, 0.5, 0.1])
        prev = np.array([0.49, -0.2, 0.0])
        out = soft_saturate([100.0, -100.0, 100.0], prev, 1e-2, M, [2.0, 2.0, 2.0])
        assert np.all(np.abs(out) <= M)
        assert np.all(np.abs(out - prev) <= 2.0 * 1e-2 + 1e-15)
        assert out[1] == pytest.approx(-0.22)

    def test_rejects_bad_args(self):
        with pytest.raises(ValidationError):
            soft_saturate([0.0], [0.0], 0.0, [1.0], [1.0])


class TestRK4:
    def test_exponential_decay(self):
        y = np.array([1.0])
        for k in range(1000):
            y = rk4_step(lambda t, s: -s, y, k * 1e-3, 1e-3)
        assert abs(y[0] - math.exp(-1.0)) < 1e-9

    def test_fourth_order_on_admire(self):
        model, _ = admire_model()
        x0 = np.array([0.1, -0.05, 0.2, 0.0, 0.1])
        exact = expm(model.A * 1.0) @ x0
        errs = []
        for dt in (0.1, 0.05):
            x = x0.copy()
            for k in range(int(round(1.0 / dt))):
                x = rk4_step(lambda t, s: model.A @ s, x, k * dt, dt)
            errs.append(np.linalg.norm(x - exact))
        order = math.log2(errs[0] / errs[1])
        assert 3.7 < order < 4.3

    def test_non_finite(self):
        with pytest.raises(IntegrationFault):
            rk4_step(lambda t, s: s * np.inf, np.ones(2), 0.0, 0.1)


class TestController:
    def test_zero_error(self):
        g = ControllerGains.diagonal([2.0, 3.0, 4.0], [1.0, 1.0, 1.0], 5)
        v = controller([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], np.zeros(3), g)
        assert np.allclose(v, 0.0)

    def test_values(self):
        g = ControllerGains.diagonal([2.0, 3.0, 4.0], [1.0, 0.5, 0.0], 5)
        v = controller([0.0, 0.1, 0.0], [1.0, 0.0, 0.0], [0.2, 0.2, 0.2], g)
        assert np.allclose(v, [2.2, -0.2, 0.0])

    def test_setpoint_weight(self):
        g = ControllerGains.diagonal([2.0, 2.0, 2.0], [0, 0, 0], 5,
                                     setpoint_weight=0.0)
        assert np.allclose(controller(np.zeros(3), np.ones(3), np.zeros(3), g), 0)

    def test_gain_validation(self):
        with pytest.raises(ValidationError):
            ControllerGains(np.eye(3), np.eye(2), np.zeros((3, 5)))
        with pytest.raises(ValidationError):
            ControllerGains(np.eye(3), np.eye(3), np.zeros((3, 5)), 1.5)

    def test_lqr_closed_loop_is_stable(self):
        model, _ = admire_model()
        g = lqr_gains(model)
        n, r = model.n, model.r
        K = np.hstack([g.k_x, np.zeros((r, 0))])
        K[:, n - r:] += g.k_y
        A_cl = np.block([[model.A - model.B_v @ K, model.B_v @ g.k_i],
                         [-np.eye(n)[n - r:], np.zeros((r, r))]])
        assert np.max(np.linalg.eigvals(A_cl).real) < 0

    def test_lqr_weight_lengths(self):
        model, _ = admire_model()
        with pytest.raises(ValidationError):
            lqr_gains(model, state_weights=(1.0, 1.0))


class TestReference:
    def test_doublets(self):
        ref = ReferenceSignal.doublets()
        assert np.allclose(ref(0.5), 0.0)
        assert np.allclose(ref(1.0), [10 * DEG, 0, 0])
        assert np.allclose(ref(3.5), [-10 * DEG, 0, 0])
        assert np.allclose(ref(9.0), [0, 5 * DEG, 0])
        assert np.allclose(ref(12.0), 0.0)

    def test_overlap_rejected(self):
        with pytest.raises(ValidationError):
            ReferenceSignal((Pulse(0, 1.0, 0.0, 2.0), Pulse(0, 1.0, 1.0, 2.0)), 5.0)

    def test_bad_channel(self):
        with pytest.raises(ValidationError):
            ReferenceSignal((Pulse(3, 1.0, 0.0, 1.0),), 5.0)


class TestScenario:
    def test_unknown_case(self):
        with pytest.raises(ValidationError):
            build_scenario("IV")

    def test_case_projection_mismatch(self):
        sc = short("III")
        with pytest.raises(ValidationError):
            Scenario("II", sc.projection_kind, True, sc.reference, sc.schedule,
                     sc.dt, sc.duration, sc.allocator_config, sc.M, sc.L,
                     sc.gains, sc.model, sc.limits)

    def test_fractional_steps(self):
        with pytest.raises(ValidationError):
            short(duration=1.0005, dt=1e-3 * 0.7)

    def test_bad_weighting(self):
        with pytest.raises(ValidationError):
            short(bound_weighting="even")

    def test_bound_shape(self):
        with pytest.raises(ValidationError):
            short(M=(1.0, 1.0))


class TestRun:
    def test_row_count(self):
        traj = run_scenario(short(dt=2e-3, duration=0.5))
        assert len(traj) == 251
        assert traj.as_array().shape == (251, len(traj.columns))

    def test_zero_reference_equilibrium(self):
        sc = short(reference=ReferenceSignal((), 1.0))
        traj = run_scenario(sc)
        assert np.all(traj.x == 0.0)
        assert np.all(traj.u_app == 0.0)
        assert np.all(traj.theta == sc.allocator_config.theta_init)

    def test_pitch_step_response_sign(self):
        ref = ReferenceSignal((Pulse(1, 2 * DEG, 0.1, 1.9),), 2.0)
        traj = run_scenario(short(duration=2.0, reference=ref))
        q = traj.x[:, 3]
        assert q[-1] > 0.5 * 2 * DEG
        assert np.max(np.abs(traj.x[:, 2])) < 0.1 * 2 * DEG

    def test_csv_header(self):
        traj = run_scenario(short(duration=0.01))
        head = traj.to_csv_string().splitlines()[0].split(",")
        assert head[:2] == ["t", "x1"]
        assert "th_3_4" in head and head[-2:] == ["f_max", "h_max"]
        assert len(head) == 1 + 5 + 3 + 3 + 12 + 3 + 3 + 4 + 4 + 2

    def test_deterministic(self):
        a = run_scenario(short(duration=0.3)).to_csv_string()
        b = run_scenario(short(duration=0.3)).to_csv_string()
        assert a == b

    def test_integration_fault(self):
        model, limits = admire_model()
        from adaptalloc.plant import PlantModel
        wild = PlantModel(np.array(model.A) + 1e6 * np.eye(5), model.B_v, model.B)
        ref = ReferenceSignal((Pulse(0, 0.1, 0.0, 1.0),), 1.0)
        gains = ControllerGains.diagonal([1, 1, 1], [1, 1, 1], 5)
        sc = build_scenario("III", SimSettings(duration=1.0, reference=ref,
                                               gains=gains), wild, limits)
        with pytest.raises(IntegrationFault) as info:
            run_scenario(sc)
        assert 0 < info.value.time < 1.0


class TestMetrics:
    def test_total_variation(self):
        assert np.all(total_variation(np.ones((10, 2))) == 0)
        t = np.linspace(0, 2 * np.pi * 3, 30001)
        assert total_variation(0.5 * np.sin(t)) == pytest.approx(4 * 0.5 * 3, rel=1e-6)

    def test_empty(self):
        with pytest.raises(ValidationError):
            metrics(None)

    def test_format(self, default_runs):
        _, res = default_runs("III")
        text = format_metrics(res)
        assert text.startswith("case = III\n")
        assert text.count("pulse.") == 4
        assert "oscillation_total = " in text
