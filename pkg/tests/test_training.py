import numpy as np
import pytest

import porous_pinn.training as training
from porous_pinn.errors import ConfigurationError
from porous_pinn.optim import AdamConfig
from porous_pinn.physics import CostWeights, ProblemConfig
from porous_pinn.sampling import AdaptivityConfig
from porous_pinn.training import Schedule, held_out_point_sets, train_adaptive, train_fixed

CFG = ProblemConfig()
SMALL = Schedule(fixed_grid=(6, 6), adaptive_grid=(5, 5), qn_max_iter=30, hidden_layers=(6, 6),
                 n_test=50, n_test_boundary=10)
ADAM = AdamConfig(learning_rate=5e-3, iterations=40)
ACFG = AdaptivityConfig(iterations_per_step=5, max_steps=4, points_per_step=8, bc_points_per_step=2,
                        dense_resolution=(20, 20))


@pytest.fixture(scope="module")
def fixed():
    return train_fixed(CFG, CostWeights(), ADAM, SMALL, seed=3)


@pytest.fixture(scope="module")
def adaptive():
    return train_adaptive(CFG, CostWeights(), ACFG, ADAM, SMALL, seed=3)


def test_fixed_log_layout(fixed):
    its = [r.iteration for r in fixed.records]
    adam = [r.iteration for r in fixed.records if r.phase == "adam"]
    assert adam == list(range(0, 40, 10))
    qn = [r.iteration for r in fixed.records if r.phase == "qn"]
    assert qn == list(range(40, 40 + len(qn)))
    assert its == sorted(its)
    assert fixed.status == "ok"


def test_training_lowers_the_cost(fixed, adaptive):
    for result in (fixed, adaptive):
        assert result.records[-1].train_cost < 0.5 * result.records[0].train_cost
        assert all(np.isfinite(r.test_cost) for r in result.records)


def test_quasi_newton_phase_monotone_on_fixed_points(fixed):
    qn = [r.train_cost for r in fixed.records if r.phase == "qn"]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(qn, qn[1:]))


def test_fixed_sizes_constant(fixed):
    assert all(r.sizes == fixed.records[0].sizes for r in fixed.records)
    assert fixed.records[0].sizes["f1"] == 36


def test_adaptive_growth_only_at_step_boundaries(adaptive):
    assert 1 <= len(adaptive.events) <= ACFG.max_steps
    assert adaptive.events[0].qn_iteration == 0
    for ev in adaptive.events:
        assert ev.qn_iteration % ACFG.iterations_per_step == 0
        b, a = ev.before.sizes(), ev.after.sizes()
        assert all(a[k] >= b[k] for k in b)
        assert a["f1"] - b["f1"] <= ACFG.points_per_step
    recs = adaptive.records
    for prev, cur in zip(recs, recs[1:]):
        if cur.sizes != prev.sizes:
            assert cur.phase == "qn"
            assert (cur.iteration - ADAM.iterations) % ACFG.iterations_per_step == 0


def test_adaptive_starts_from_coarse_grid(adaptive):
    assert adaptive.records[0].sizes["f1"] == 25


def test_runs_are_deterministic():
    a = train_adaptive(CFG, CostWeights(), ACFG, AdamConfig(iterations=10), Schedule(
        adaptive_grid=(4, 4), qn_max_iter=12, hidden_layers=(4,), n_test=20, n_test_boundary=5), seed=1)
    b = train_adaptive(CFG, CostWeights(), ACFG, AdamConfig(iterations=10), Schedule(
        adaptive_grid=(4, 4), qn_max_iter=12, hidden_layers=(4,), n_test=20, n_test_boundary=5), seed=1)
    assert np.array_equal(a.triple.flatten(), b.triple.flatten())
    assert [r.train_cost for r in a.records] == [r.train_cost for r in b.records]


def test_held_out_points_fixed_and_in_domain():
    s1 = held_out_point_sets(CFG, SMALL)
    s2 = held_out_point_sets(CFG, SMALL)
    assert np.array_equal(s1.f1, s2.f1)
    s1.validate(CFG)


def test_divergence_returns_last_good_state(monkeypatch):
    real = training.adam_step

    def poisoned(params, grad, state, cfg):
        new, st = real(params, grad, state, cfg)
        return (np.full_like(new, np.nan) if st.step == 15 else new), st

    monkeypatch.setattr(training, "adam_step", poisoned)
    r = train_fixed(CFG, CostWeights(), ADAM, SMALL, seed=0)
    assert r.status == "diverged"
    assert np.all(np.isfinite(r.triple.flatten()))
    assert r.records[-1].iteration == 10


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        Schedule(fixed_grid=(1, 5))
    with pytest.raises(ConfigurationError):
        Schedule(qn_max_iter=-1)


def test_disabled_adaptivity_reduces_to_fixed_training():
    schedule = Schedule(fixed_grid=(5, 5), adaptive_grid=(5, 5), qn_max_iter=15, hidden_layers=(5,),
                        n_test=30, n_test_boundary=5)
    off = AdaptivityConfig(max_steps=1, points_per_step=0, bc_points_per_step=0, dense_resolution=(15, 15))
    adam = AdamConfig(iterations=20)
    a = train_adaptive(CFG, CostWeights(), off, adam, schedule, seed=4)
    f = train_fixed(CFG, CostWeights(), adam, schedule, seed=4)
    assert a.events == []
    assert np.array_equal(a.triple.flatten(), f.triple.flatten())
    assert [r.train_cost for r in a.records] == [r.train_cost for r in f.records]


def test_held_out_points_not_in_training_grids():
    held = held_out_point_sets(CFG, Schedule())
    grid = training.grid_point_sets(CFG, 50, 50).f1
    both = np.vstack([held.f1, grid])
    assert len(np.unique(both, axis=0)) == len(both)
