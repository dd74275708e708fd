"""Marking strategy and the adaptive loop."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbf2d.adapt import adaptive_solve, mark
from cbf2d.bench import example_catalog
from cbf2d.estimator import IndicatorField


def _field(eta_sq):
    return IndicatorField(eta_sq=np.asarray(eta_sq, dtype=float),
                          terms={}, kind="theta1")


def test_mark_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        eta_sq = rng.uniform(0.0, 4.0, size=rng.integers(3, 60))
        c = rng.uniform(0.1, 1.0)
        marked = mark(_field(eta_sq), c_adm=c)
        eta = np.sqrt(eta_sq)
        brute = [t for t in range(len(eta)) if eta[t] >= c * eta.mean()]
        assert sorted(marked.tolist()) == brute


@given(st.lists(st.floats(min_value=0.0, max_value=1e3), min_size=1,
                max_size=50))
@settings(max_examples=50, deadline=None)
def test_mark_never_empty_on_positive_indicators(vals):
    eta_sq = np.array(vals) + 1e-12
    marked = mark(_field(eta_sq), c_adm=1.0)
    # the maximum always satisfies eta_max >= mean(eta)
    assert len(marked) >= 1
    assert int(np.argmax(eta_sq)) in marked


def test_mark_rejects_bad_threshold():
    with pytest.raises(ValueError):
        mark(_field([1.0]), c_adm=0.0)
    with pytest.raises(ValueError):
        mark(_field([1.0]), c_adm=1.5)


def test_adaptive_loop_refines_and_reduces_estimate():
    case = example_catalog()["ex2"]()
    mesh = case.mesh_factory(0)
    result = adaptive_solve(mesh, case.data, k=0, estimator_kind="theta1",
                            c_adm=0.75, max_steps=4)
    steps = result.steps
    assert len(steps) == 4
    dofs = [s.dofs for s in steps]
    assert all(d2 > d1 for d1, d2 in zip(dofs, dofs[1:]))
    assert steps[-1].estimate < steps[0].estimate
    assert all(s.num_marked > 0 for s in steps[:-1])


def test_adaptive_loop_respects_dof_budget():
    case = example_catalog()["ex2"]()
    mesh = case.mesh_factory(0)
    result = adaptive_solve(mesh, case.data, k=0, max_steps=10,
                            dof_budget=2000)
    # refinement stops once a step reaches the budget, so every step
    # before the last stays strictly below it
    assert all(s.dofs < 2000 for s in result.steps[:-1])
    assert len(result.steps) < 10


def test_adaptive_callback_sees_every_step():
    case = example_catalog()["ex2"]()
    mesh = case.mesh_factory(0)
    seen = []
    result = adaptive_solve(mesh, case.data, k=0, max_steps=3,
                            callback=lambda s: seen.append(s.dofs))
    assert seen == [s.dofs for s in result.steps]
