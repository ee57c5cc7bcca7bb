# tests/test_lqmodel.py
import json

import numpy as np
import pytest

from meanfield_lab.errors import GridMismatchError, ModelValidationError
from meanfield_lab.lqmodel import (
    FeedbackPolicy,
    LQModel,
    MeanFlow,
    load_model,
    lq_model,
    make_grid,
    reduce_mfg,
    reduce_mkv,
    simple_model,
)


def test_make_grid_nodes():
    grid = make_grid(1.0, 4)
    assert np.allclose(grid.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert grid.dt == 0.25
    assert grid.n_nodes == 5


@pytest.mark.parametrize(
    "T, n_steps", [(0.0, 10), (-1.0, 10), (1.0, 1), (float("inf"), 10)]
)
def test_make_grid_rejects_bad_input(T, n_steps):
    with pytest.raises(ModelValidationError):
        make_grid(T, n_steps)


def test_model_validation():
    grid = make_grid(1.0, 10)
    with pytest.raises(ModelValidationError, match="b must be strictly positive"):
        lq_model(grid, b=0.0)
    with pytest.raises(ModelValidationError, match="n must be strictly positive"):
        lq_model(grid, n=-1.0)
    with pytest.raises(ModelValidationError, match="sigma"):
        lq_model(grid, sigma=-0.1)
    with pytest.raises(ModelValidationError, match="11 samples"):
        lq_model(grid, a=[0.0, 1.0])


def test_model_arrays_are_read_only():
    model = simple_model(n_steps=10)
    with pytest.raises(ValueError):
        model.a[0] = 1.0
    assert model.with_updates(q=2.0).q == 2.0
    assert model.q == 1.0


def test_is_decoupled():
    assert simple_model(qbar=0.0).is_decoupled()
    assert not simple_model(qbar=1.0).is_decoupled()


def test_reduce_mfg_simple_example():
    model = simple_model(q=1.0, qbar=0.0, n_steps=10)
    rc = reduce_mfg(model, MeanFlow.constant(model.grid, 0.7))
    assert np.allclose(rc.a, 0.0)
    assert np.allclose(rc.b, -1.0)
    assert np.allclose(rc.c, 0.0)
    assert np.allclose(rc.m, 0.0)
    assert np.allclose(rc.d, 0.0)
    assert rc.q == 1.0 and rc.r == 0.0


def test_reduce_mfg_drift_offset():
    grid = make_grid(1.0, 10)
    model = lq_model(grid, a=1.0, abar=2.0, beta=0.5)
    rc = reduce_mfg(model, MeanFlow.constant(grid, 3.0))
    assert np.allclose(rc.c, 6.5)
    assert np.allclose(rc.mids["c"], 6.5)


def test_terminal_offsets_differ_between_limits():
    model = simple_model(q=1.0, qbar=1.0, n_steps=10)
    ones = MeanFlow.constant(model.grid, 1.0)
    assert reduce_mkv(model, ones, ones).r == pytest.approx(3.0)
    assert reduce_mfg(model, ones).r == pytest.approx(1.0)


def test_reduction_rejects_foreign_grid():
    model = simple_model(n_steps=10)
    flow = MeanFlow.constant(make_grid(1.0, 20), 1.0)
    with pytest.raises(GridMismatchError):
        reduce_mfg(model, flow)


def test_mean_flow_validation():
    grid = make_grid(1.0, 4)
    with pytest.raises(ModelValidationError):
        MeanFlow(np.zeros(3), grid)
    with pytest.raises(ModelValidationError, match="non-finite"):
        MeanFlow(np.array([0, 1, np.nan, 1, 0]), grid)
    flow = MeanFlow(np.array([0.0, 1.0, 2.0, 3.0, 4.0]), grid)
    assert flow.terminal == 4.0
    assert flow.at(0.125) == pytest.approx(0.5)


def test_feedback_policy_perturbed():
    grid = make_grid(1.0, 10)
    policy = FeedbackPolicy(-1.0, 0.25, grid)
    assert np.allclose(policy.at_node(3, [2.0, -4.0]), [-1.75, 4.25])
    bumped = policy.perturbed(d_slope=0.5)
    assert np.allclose(bumped.slope, -0.5)
    assert np.allclose(policy.slope, -1.0)


def test_load_model(tmp_path):
    p = tmp_path / "model.json"
    p.write_text(json.dumps({"T": 2.0, "n_steps": 8, "q": 1.5, "m": [0.0] * 9}))
    model = load_model(p)
    assert isinstance(model, LQModel)
    assert model.T == 2.0 and model.q == 1.5
    assert model.to_mapping()["m"] == 0.0


def test_from_mapping_rejects_unknown_keys():
    with pytest.raises(ModelValidationError, match="unknown model keys"):
        LQModel.from_mapping({"T": 1.0, "n_steps": 4, "gamma": 1.0})
