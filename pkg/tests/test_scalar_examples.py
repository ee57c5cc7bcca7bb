# tests/test_scalar_examples.py
import math

import numpy as np
import pytest

from meanfield_lab.errors import ModelValidationError, UnsupportedModeError
from meanfield_lab.mfg_lq import solve_mfg
from meanfield_lab.mkv_lq import solve_mkv
from meanfield_lab.scalar_examples import (
    Existence,
    Mode,
    additive_running_mean,
    comparison_table,
    general_linear_terminal,
    in_solvability_set,
    linear_terminal,
    lq_zero_terminal_mean,
    lq_zero_terminal_model,
    quadratic_cost_mfg,
    quadratic_terminal,
)


def test_linear_terminal_roots():
    assert linear_terminal(1.0, 1.0, 1.0, Mode.MFG).roots == [0.5]
    assert linear_terminal(1.0, 1.0, 1.0, Mode.MKV).roots == [1.0 / 3.0]
    for mode in Mode:
        assert linear_terminal(0.0, 2.0, 0.7, mode).roots == [0.7]


def test_linear_terminal_degenerate_cases():
    assert linear_terminal(-1.0, 1.0, 0.0, "MFG").existence is Existence.CONTINUUM
    assert linear_terminal(-1.0, 1.0, 1.0, "MFG").existence is Existence.NONE
    assert linear_terminal(-0.5, 1.0, 0.0, "mkv").existence is Existence.CONTINUUM
    assert linear_terminal(-0.5, 1.0, 2.0, "MKV").roots == []


def test_quadratic_terminal_worked_example():
    mkv = quadratic_terminal(-1.0, 1.0, 1.0 / 12.0, Mode.MKV)
    assert mkv.roots == [pytest.approx(1.0 / 6.0, abs=1e-12)]
    assert mkv.double_root

    mfg = quadratic_terminal(-1.0, 1.0, 1.0 / 12.0, Mode.MFG)
    assert mfg.existence is Existence.MULTIPLE
    expected = [(3 - math.sqrt(6)) / 6, (3 + math.sqrt(6)) / 6]
    assert mfg.roots == pytest.approx(expected, abs=1e-12)
    for mu in mfg.roots:
        assert abs(-(mu**2) + mu - 1.0 / 12.0) < 1e-10


def test_quadratic_terminal_edge_cases():
    assert quadratic_terminal(0.0, 1.0, 0.4, Mode.MFG).roots == [0.4]
    none = quadratic_terminal(-1.0, 1.0, 1.0, Mode.MFG)
    assert none.existence is Existence.NONE
    assert none.solvability_margin == pytest.approx(-3.0)


def test_general_linear_terminal_reduces_to_closed_forms():
    def linear(u):
        return 0.8 * u

    for mode in Mode:
        report = general_linear_terminal(
            linear, 1.0, 1.0, mode, gamma_prime=lambda u: 0.8
        )
        expected = linear_terminal(0.8, 1.0, 1.0, mode).roots
        assert report.roots == pytest.approx(expected, abs=1e-12)

    for mode in Mode:
        report = general_linear_terminal(
            lambda u: -(u**2), 1.0, 1.0 / 24.0, mode, gamma_prime=lambda u: -2.0 * u
        )
        closed = quadratic_terminal(-1.0, 1.0, 1.0 / 24.0, mode)
        assert report.roots == pytest.approx(closed.roots, abs=1e-10)


def test_general_linear_terminal_sine():
    report = general_linear_terminal(math.sin, 1.0, 1.0, Mode.MFG)
    assert report.existence is Existence.UNIQUE
    (mu,) = report.roots
    assert mu == pytest.approx(0.510973, abs=1e-6)
    assert abs(mu + math.sin(mu) - 1.0) < 1e-10


def test_general_linear_terminal_finds_tangent_root():
    report = general_linear_terminal(
        lambda u: -(u**2), 1.0, 1.0 / 12.0, Mode.MKV, gamma_prime=lambda u: -2.0 * u
    )
    assert report.existence is Existence.UNIQUE
    assert report.roots == [pytest.approx(1.0 / 6.0, abs=1e-5)]
    assert report.double_root

    mfg = general_linear_terminal(lambda u: -(u**2), 1.0, 1.0 / 12.0, Mode.MFG)
    expected = [(3 - math.sqrt(6)) / 6, (3 + math.sqrt(6)) / 6]
    assert mfg.roots == pytest.approx(expected, abs=1e-10)
    assert not mfg.double_root


def test_quadratic_cost_mfg_tangent_root():
    # 2 mu^2 + mu + 1/8 = 2 (mu + 1/4)^2
    report = quadratic_cost_mfg(lambda u: u, 1.0, -1.0 / 8.0)
    assert report.roots == [pytest.approx(-0.25, abs=1e-5)]
    assert report.double_root


def test_general_linear_terminal_needs_derivative_for_mkv():
    with pytest.raises(ValueError, match="gamma_prime"):
        general_linear_terminal(math.sin, 1.0, 1.0, Mode.MKV)


def test_quadratic_cost_mfg():
    assert quadratic_cost_mfg(lambda u: 0.0, 1.0, 0.3).roots == pytest.approx([0.3])
    assert quadratic_cost_mfg(lambda u: 0.5, 2.0, 1.5).roots == pytest.approx([0.5])
    report = quadratic_cost_mfg(lambda u: u, 1.0, 1.0)
    # 2 mu^2 + mu - 1 = 0
    assert report.roots == pytest.approx([-1.0, 0.5], abs=1e-10)
    with pytest.raises(UnsupportedModeError):
        quadratic_cost_mfg(lambda u: u, 1.0, 1.0, Mode.MKV)


def test_additive_running_mean():
    for mode in Mode:
        start = additive_running_mean(1.0, 1.3, mode, 0.0)
        assert start == pytest.approx(1.3, abs=1e-15)
    mfg = additive_running_mean(1.0, 1.0, Mode.MFG, 1.0)
    mkv = additive_running_mean(1.0, 1.0, Mode.MKV, 1.0)
    assert mfg == pytest.approx(2.0 / (math.e + 1.0 / math.e), abs=1e-12)
    assert mfg == pytest.approx(0.648054, abs=1e-6)
    r2 = math.sqrt(2.0)
    assert mkv == pytest.approx(2.0 / (math.exp(r2) + math.exp(-r2)), abs=1e-12)
    assert mkv < mfg

    t = np.linspace(0.0, 2.0, 9)
    profile = additive_running_mean(2.0, 1.0, Mode.MFG, t)
    assert np.allclose(profile, np.cosh(2.0 - t) / np.cosh(2.0), atol=1e-12)
    with pytest.raises(ModelValidationError):
        additive_running_mean(1.0, 1.0, Mode.MFG, 1.5)


def test_zero_terminal_mean_is_constant():
    assert np.all(lq_zero_terminal_mean(1.0, 1.0, Mode.MFG).values == 1.0)
    assert np.all(lq_zero_terminal_mean(1.0, 0.0, Mode.MKV).values == 0.0)
    model = lq_zero_terminal_model(1.0, 1.0)
    assert np.max(np.abs(solve_mfg(model).mean_flow.values - 1.0)) < 1e-8
    assert np.max(np.abs(solve_mkv(model).xbar.values - 1.0)) < 1e-8


def test_solvability_set_inclusion():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        r, x0 = rng.uniform(-5.0, 5.0, size=2)
        T = rng.uniform(0.01, 5.0)
        in_mfg = in_solvability_set(r, T, x0, Mode.MFG)
        in_mkv = in_solvability_set(r, T, x0, Mode.MKV)
        if r * x0 > 0:
            assert in_mfg and in_mkv
        elif in_mkv:
            assert in_mfg


def test_comparison_table():
    rows = comparison_table(1.0, 1.0, 1.0)
    names = {row["example"] for row in rows}
    assert names == {
        "linear_terminal",
        "quadratic_terminal",
        "additive_running_mean_T",
        "lq_zero_terminal_mean_T",
    }
    linear = [r for r in rows if r["example"] == "linear_terminal"]
    assert {r["mode"]: r["value"] for r in linear} == {"MFG": 0.5, "MKV": 1.0 / 3.0}
