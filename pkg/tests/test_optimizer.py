import math
from dataclasses import replace

import numpy as np
import pytest

from clockgate.atom import LaserConfig, PolarizationImpurity, coupling_table, enumerate_basis
from clockgate.dynamics import PhaseProfile, propagate
from clockgate.fidelity import extract_gate_matrix, gauge_fix
from clockgate.optimizer import (
    GateObjective,
    OptimizationSpec,
    add_edges,
    fixed_duration_scan,
    grape_optimize,
    min_duration,
    select_best,
    starting_points,
)


def central_difference(f, x, h=1e-6):
    return np.array([(f(x + e)[0] - f(x - e)[0]) / (2 * h) for e in np.eye(x.size) * h])


@pytest.mark.parametrize(
    "edges, impurity",
    [(False, None), (True, None), (False, PolarizationImpurity(0.05, 0.4)), (True, PolarizationImpurity(0.01, 5.0))],
)
@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_matches_finite_differences(edges, impurity, seed):
    spec = OptimizationSpec(0.8, 1.4, segment_count=12, edges=edges)
    obj = GateObjective(spec.laser(), spec.template(), impurity)
    x = np.random.default_rng(seed).uniform(0, 2 * np.pi, 13)
    f, g = obj(x)
    fd = central_difference(obj, x)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(g)) < 1e-5


def test_objective_agrees_with_propagate():
    spec = OptimizationSpec(0.8, 1.4, segment_count=10, edges=True)
    obj = GateObjective(spec.laser(), spec.template())
    phases = np.random.default_rng(3).uniform(0, 6, 10)
    basis = enumerate_basis(False)
    u, _ = propagate(obj.profile(phases), basis, coupling_table(spec.laser()))
    assert np.allclose(obj.gate_matrix(phases), extract_gate_matrix(u, basis), atol=1e-12)
    theta = obj.initial_theta(phases)
    assert 1 - obj(np.append(phases, theta))[0] == pytest.approx(gauge_fix(extract_gate_matrix(u, basis)).fidelity, abs=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        OptimizationSpec(0.8, 1.5, segment_count=1)
    with pytest.raises(ValueError):
        OptimizationSpec(0.8, 1.5, restarts=0)
    with pytest.raises(ValueError):
        OptimizationSpec(0.8, 1.5, infidelity_target=1.0)


def test_starting_points_anchor_and_determinism():
    spec = OptimizationSpec(0.8, 1.5, restarts=4, seed=9)
    pts = starting_points(spec)
    assert len(pts) == 4
    assert np.all(pts[0] == 0)
    assert all(np.array_equal(a, b) for a, b in zip(pts, starting_points(spec)))
    assert np.all((pts[1] >= 0) & (pts[1] < 2 * np.pi))


def test_converges_above_minimal_duration():
    rep = grape_optimize(OptimizationSpec(1.0, 1.35, restarts=3))
    assert rep.converged
    assert rep.best_infidelity < 1e-7
    assert rep.best_infidelity == rep.per_restart_infidelities[select_best(rep.per_restart_infidelities)]


def test_far_below_minimum_does_not_converge():
    rep = grape_optimize(OptimizationSpec(1.0, 0.8, restarts=30, max_iterations=400))
    assert not rep.converged
    assert min(rep.per_restart_infidelities) > 1e-2


def test_determinism():
    spec = OptimizationSpec(0.9, 1.45, restarts=3, seed=4)
    a, b = grape_optimize(spec), grape_optimize(spec)
    assert [f"{v:.12e}" for v in a.per_restart_infidelities] == [f"{v:.12e}" for v in b.per_restart_infidelities]
    assert np.array_equal(a.best_profile.phases, b.best_profile.phases)


def test_fidelity_monotone_within_restart():
    rep = grape_optimize(OptimizationSpec(0.7, 1.5, restarts=3, max_iterations=300))
    for hist in rep.histories:
        assert np.all(np.diff(hist) <= 1e-15)


def test_select_best_breaks_ties_to_earliest():
    assert select_best([3e-13, 1e-15, 1e-9]) == 0
    assert select_best([1e-3, 1e-9, 1e-10]) == 2


def test_add_edges_widths():
    n = 1.497
    base = PhaseProfile.uniform(2 * math.pi * n, np.linspace(0, 1, 40))
    edged = add_edges(base, n)
    assert edged.edge.rise_duration == pytest.approx(0.1497 * math.pi)
    assert edged.edge.fall_duration == pytest.approx(0.1497 * math.pi)
    assert edged.total_duration == pytest.approx(1.1 * 2 * math.pi * n, abs=1e-12)
    assert edged.edge.phase_start == base.phases[0] and edged.edge.phase_end == base.phases[-1]
    with pytest.raises(ValueError):
        add_edges(edged, n)


def test_zero_width_edges_degenerate():
    rng = np.random.default_rng(2)
    base = PhaseProfile.uniform(9.0, rng.uniform(0, 6, 8))
    edged = add_edges(base, 1.5, fraction=0.0)
    basis = enumerate_basis(False)
    c = coupling_table(LaserConfig.from_ratio(0.8))
    assert np.allclose(propagate(base, basis, c)[0], propagate(edged, basis, c)[0], atol=1e-14)


def test_edges_only_touch_flat_phases():
    spec = OptimizationSpec(0.8, 1.5, segment_count=8, edges=True, restarts=1, max_iterations=20)
    rep = grape_optimize(spec)
    prof = rep.best_profile
    assert prof.edge.phase_start == prof.phases[0]
    assert prof.edge.phase_end == prof.phases[-1]
    assert prof.total_duration == pytest.approx(1.1 * spec.duration)


def test_min_duration_coarse():
    base = OptimizationSpec(1.0, 1.4, restarts=6)
    res = min_duration(1.0, (1.2, 1.4), resolution=0.02, base=base)
    assert res.feasible
    assert abs(res.n_min - 1.291) <= 0.02 + 1e-12
    assert res.best_infidelity < 1e-7
    ns = [n for n, _ in res.probes]
    assert ns[0] == 1.4


def test_min_duration_empty_window():
    res = min_duration(1.0, (0.5, 0.8), resolution=0.05, base=OptimizationSpec(1.0, 0.8, restarts=3, max_iterations=300))
    assert not res.feasible and res.n_min is None
    with pytest.raises(ValueError):
        min_duration(1.0, (1.0, 0.9))


@pytest.mark.parametrize("split", [0.3, 0.7])
def test_detuning_split_does_not_move_threshold(split):
    # feasible just above the reference minimum at ratio 1.0, infeasible just below
    above = grape_optimize(OptimizationSpec(1.0, 1.30, restarts=6, split=split, stop_at_target=True))
    below = grape_optimize(OptimizationSpec(1.0, 1.27, restarts=6, split=split))
    assert above.converged
    assert below.best_infidelity > 1e-6


def test_fixed_duration_scan_shape():
    out = fixed_duration_scan(3 * math.pi, [1.0], base=OptimizationSpec(1.0, 1.5, restarts=2))
    (ratio, rep), = out
    assert ratio == 1.0
    assert rep.spec.n_periods == pytest.approx(1.5)
    assert rep.best_infidelity < 1e-6
    with pytest.raises(ValueError):
        fixed_duration_scan(0.0, [1.0])


def test_parallel_restarts_match_serial():
    spec = OptimizationSpec(0.9, 1.45, restarts=2, max_iterations=50, seed=2)
    a = grape_optimize(spec)
    b = grape_optimize(spec, workers=2)
    assert np.allclose(a.per_restart_infidelities, b.per_restart_infidelities, rtol=1e-10, atol=1e-15)
