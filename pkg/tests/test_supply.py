import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from datadiss.supply import (SupplyRate, evaluate, gain_supply, inverse_gain, inverse_passivity,
                             invert, passivity_supply)


def test_gain_template():
    Pi = gain_supply(1.0, 1, 1)
    assert Pi.Q.item() == -1 and Pi.S.item() == 0 and Pi.R.item() == 1
    np.testing.assert_allclose(gain_supply(2.0, 2, 2).R, 4 * np.eye(2))
    assert evaluate(gain_supply(2.0, 1, 1), 1, 2) == pytest.approx(0.0)
    assert evaluate(gain_supply(2.0, 1, 1), 1, 1) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        gain_supply(0.0, 1, 1)


def test_passivity_template():
    assert evaluate(passivity_supply(0.0, 1), 2, 3) == pytest.approx(6.0)
    assert evaluate(passivity_supply(0.25, 1), 1, 1) == pytest.approx(0.75)
    np.testing.assert_allclose(passivity_supply(-0.5, 2).R, 0.5 * np.eye(2))
    with pytest.raises(ValueError):
        passivity_supply(0.0, 2, 3)


def test_evaluate_zero_and_shape_errors():
    assert evaluate(gain_supply(3.0, 2, 1), [0, 0], [0]) == 0.0
    with pytest.raises(ValueError):
        evaluate(gain_supply(3.0, 2, 1), [1], [0])


def test_invert_templates():
    g = 3.0
    inv = invert(gain_supply(g, 2, 2))
    np.testing.assert_allclose(inv.Rt, np.eye(2) / g**2, atol=1e-12)
    np.testing.assert_allclose(inv.St, 0, atol=1e-12)
    np.testing.assert_allclose(inv.Qt, -np.eye(2), atol=1e-12)
    rho = -0.3
    inv = invert(passivity_supply(rho, 2))
    np.testing.assert_allclose(inv.Rt, 0, atol=1e-12)
    np.testing.assert_allclose(inv.St, 2 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(inv.Qt, 4 * rho * np.eye(2), atol=1e-12)
    # closed forms agree with the numeric inverse
    np.testing.assert_allclose(inverse_gain(1 / g**2, 2, 2).matrix(),
                               invert(gain_supply(g, 2, 2)).matrix(), atol=1e-12)
    np.testing.assert_allclose(inverse_passivity(rho, 2).matrix(), inv.matrix(), atol=1e-12)


def test_identity_supply_inverse():
    Pi = SupplyRate(Q=np.eye(1), S=np.zeros((1, 1)), R=np.eye(1))
    np.testing.assert_allclose(invert(Pi).matrix(), np.eye(2))


def test_singular_supply_rejected():
    Pi = SupplyRate(Q=np.zeros((1, 1)), S=np.zeros((1, 1)), R=np.eye(1), name="degenerate")
    with pytest.raises(ValueError, match="degenerate"):
        invert(Pi)


def test_asymmetric_blocks_rejected():
    with pytest.raises(ValueError):
        SupplyRate(Q=[[0.0, 1.0], [0.0, 0.0]], S=np.zeros((2, 1)), R=np.eye(1))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10), st.integers(0, 2**31))
def test_gain_evaluate_property(g, seed):
    rng = np.random.default_rng(seed)
    u, y = rng.standard_normal(2), rng.standard_normal(3)
    assert evaluate(gain_supply(g, 2, 3), u, y) == pytest.approx(g**2 * u @ u - y @ y, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5).filter(lambda r: abs(r) > 1e-3), st.floats(0.1, 10))
def test_invert_is_involution(rho, g):
    for Pi in (passivity_supply(rho, 2), gain_supply(g, 2, 1)):
        back = invert(invert(Pi).as_supply())
        np.testing.assert_allclose(back.matrix(), Pi.matrix(), atol=1e-9)
