import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptalloc.exceptions import ValidationError
from adaptalloc.plant import (DEG, ActuatorBankState, ActuatorLimits,
                              EffectivenessSchedule, PlantModel,
                              achieved_virtual, admire_model,
                              apply_actuator_limits, lambda_at,
                              plant_derivatives)

# printed four-decimal values, parsed from text so the comparison is exact
A_TEXT = """
-0.5432  0.0137   0        0.9778  0
 0      -0.1179   0.2215   0      -0.9661
 0     -10.5123  -0.9967   0       0.6176
 2.6221 -0.0030   0       -0.5057  0
 0       0.7075  -0.0939   0      -0.2127
"""
B_TEXT = """
 0      -4.2423   4.2423   1.4871
 1.6532 -1.2735  -1.2735   0.0024
 0      -0.2805   0.2805  -0.8823
"""


def parse(text):
    return np.array([[float(tok) for tok in line.split()]
                     for line in text.strip().splitlines()])


class TestAdmire:
    def test_constants_bit_exact(self):
        model, _ = admire_model()
        assert np.array_equal(model.A, parse(A_TEXT))
        assert np.array_equal(model.B, parse(B_TEXT))

    def test_structure(self):
        model, _ = admire_model()
        assert (model.n, model.r, model.m) == (5, 3, 4)
        assert np.linalg.matrix_rank(model.B) == 3
        assert np.allclose(model.B_u, model.B_v @ model.B, rtol=0, atol=1e-15)
        assert np.array_equal(model.B_u[:2], np.zeros((2, 4)))
        assert np.array_equal(model.B_u[2:], model.B)

    def test_limits(self):
        _, limits = admire_model()
        assert np.allclose(limits.u_min / DEG, [-55, -30, -30, -30])
        assert np.allclose(limits.u_max / DEG, [25, 30, 30, 30])
        assert np.allclose(limits.rate / DEG, 40)
        assert np.allclose(limits.magnitude / DEG, [25, 30, 30, 30])

    def test_read_only(self):
        model, _ = admire_model()
        with pytest.raises(ValueError):
            model.A[0, 0] = 1.0


def test_derivative_of_unit_state():
    model, _ = admire_model()
    x = np.zeros(5)
    x[0] = 1.0
    d = plant_derivatives(x, np.zeros(4), np.ones(4), model)
    assert np.array_equal(d, model.A[:, 0])


def test_achieved_virtual_column():
    model, _ = admire_model()
    v = achieved_virtual(np.array([1.0, 0, 0, 0]), np.ones(4), model)
    assert np.allclose(v, [0.0, 1.6532, 0.0])
    v = achieved_virtual(np.array([1.0, 0, 0, 0]), np.full(4, 0.7), model)
    assert np.allclose(v, [0.0, 0.7 * 1.6532, 0.0])


def test_plant_validation():
    with pytest.raises(ValidationError):
        PlantModel(np.eye(4), np.eye(5)[:, :3], np.ones((3, 4)))
    with pytest.raises(ValidationError):
        PlantModel(np.eye(2), np.eye(2), np.array([[1.0, 1.0], [2.0, 2.0]]))


class TestLimiter:
    def test_rate_clamp_one_step(self):
        _, limits = admire_model()
        bank = ActuatorBankState.zeros(4)
        _, u = apply_actuator_limits(bank, np.full(4, 1.0), 1e-3, limits)
        assert np.allclose(u[1:], 0.0006981317007977319, rtol=0, atol=1e-18)

    def test_magnitude_only(self):
        _, limits = admire_model()
        bank = ActuatorBankState.zeros(4)
        _, u = apply_actuator_limits(bank, np.array([-2.0, 0.1, -2.0, 2.0]),
                                     1e-3, limits, enable_rate=False)
        assert np.allclose(u / DEG, [-55.0, 0.1 / DEG, -30.0, 30.0])

    def test_bad_dt(self):
        _, limits = admire_model()
        with pytest.raises(ValidationError):
            apply_actuator_limits(ActuatorBankState.zeros(4), np.zeros(4), 0.0,
                                  limits)

    def test_limit_validation(self):
        with pytest.raises(ValidationError):
            ActuatorLimits([0.1], [1.0], [-1.0], [1.0])


class TestSchedule:
    def test_step_fault(self):
        sched = EffectivenessSchedule.step_fault(4, 6.0, 0.7)
        assert np.array_equal(lambda_at(0.0, sched), np.ones(4))
        assert np.array_equal(lambda_at(5.999, sched), np.ones(4))
        assert np.array_equal(lambda_at(6.0, sched), np.full(4, 0.7))

    def test_negative_time(self):
        with pytest.raises(ValidationError):
            lambda_at(-0.1, EffectivenessSchedule.nominal(2))

    @pytest.mark.parametrize("segments", [
        ((1.0, [1.0]),),
        ((0.0, [1.0]), (0.0, [0.5])),
        ((0.0, [1.0]), (2.0, [0.0])),
        ((0.0, [1.0]), (2.0, [0.5, 0.5])),
    ])
    def test_rejects(self, segments):
        with pytest.raises(ValidationError):
            EffectivenessSchedule(segments)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0), min_size=4, max_size=4),
       st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4),
       st.sampled_from([1e-3, 5e-4, 2e-3, 1e-2, 3.7e-3]))
def test_limiter_is_sound(cmd, start, dt):
    _, limits = admire_model()
    prev = np.clip(np.array(start), limits.u_min, limits.u_max)
    _, u = apply_actuator_limits(ActuatorBankState(prev), np.array(cmd), dt,
                                 limits)
    rate = (u - prev) / dt
    assert np.all(rate <= limits.rate_max)
    assert np.all(rate >= limits.rate_min)
    assert np.all(u <= limits.u_max) and np.all(u >= limits.u_min)
