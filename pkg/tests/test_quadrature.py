# tests/test_quadrature.py
import numpy as np
import pytest

from meanfield_lab.quadrature import (
    cell_integrals,
    cumulative_integral,
    integrate,
    midpoints,
)


def test_cubic_rule_is_exact_for_cubics():
    t = np.linspace(0.0, 1.0, 11)
    f = 3 * t**3 - t**2 + 2
    assert integrate(f, 0.1) == pytest.approx(0.75 - 1 / 3 + 2, abs=1e-13)


def test_cumulative_integral_starts_at_zero():
    t = np.linspace(0.0, 2.0, 21)
    out = cumulative_integral(np.cos(t), 0.1)
    assert out.shape == t.shape
    assert out[0] == 0.0
    assert np.max(np.abs(out - np.sin(t))) < 2e-6


def test_cubic_rule_is_fourth_order():
    def error(n):
        t = np.linspace(0.0, 1.0, n + 1)
        return abs(integrate(np.exp(t), 1.0 / n) - (np.e - 1.0))

    assert error(50) / error(100) > 14.0


def test_trapezoid_rule_and_short_grids():
    f = np.array([0.0, 1.0, 4.0])
    # fewer than four nodes falls back to the trapezoid rule
    assert np.allclose(cell_integrals(f, 1.0), [0.5, 2.5])
    assert integrate(np.array([0.0, 1.0, 4.0, 9.0]), 1.0, rule="trapezoid") == 9.5


def test_unknown_rule_rejected():
    with pytest.raises(ValueError, match="Unknown quadrature rule"):
        integrate(np.ones(5), 0.1, rule="simpson")


def test_midpoints():
    t = np.linspace(0.0, 1.0, 9)
    centres = 0.5 * (t[:-1] + t[1:])
    f = t**3 - 2 * t
    assert np.allclose(midpoints(f, "cubic"), centres**3 - 2 * centres, atol=1e-14)
    assert np.allclose(midpoints(f, "linear"), 0.5 * (f[:-1] + f[1:]))
