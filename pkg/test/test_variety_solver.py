from dataclasses import replace

import numpy as np
import pytest

from app.experiments.variety_experiment import instance_system, random_instance
from app.quantum.nash_conditions import NashInstance
from app.quantum.operator_core import commutator, random_hermitian, random_state
from app.quantum.qpd import qpd_instance, qpd_variety_residual
from app.quantum.variety_solver import (
    GaugeKind,
    NewtonFailure,
    QuadricSystem,
    VarietyPoint,
    build_system,
    deduplicate,
    estimate_local_dimension,
    gauge_distance,
    inverse_stereographic,
    newton_solve,
    random_start_search,
    stereographic,
    stereographic_any_chart,
    tilde_v_membership,
    tilde_w_system,
    trace_component,
)
from app.utils.exceptions import (
    InvariantViolationError,
    ProjectionPoleError,
    ResidualTooLargeError,
    SystemKindError,
    TangentDimensionError,
)


@pytest.fixture(scope="module")
def qpd_tilde():
    return tilde_w_system(build_system(qpd_instance(), real_symmetric=True))


@pytest.fixture(scope="module")
def real_instance_systems():
    systems = []
    for seed in range(3):
        inst = random_instance(2, seed, real_symmetric=True)
        systems.append(instance_system(inst, real_symmetric=True))
    return systems


def _as_vector(psi: np.ndarray) -> np.ndarray:
    return np.concatenate([psi.real, psi.imag])


def test_qpd_system_structure():
    sys = build_system(qpd_instance(), real_symmetric=True)
    assert sys.ambient_dim == 8
    assert sys.n_equations == 6
    assert len(sys.symmetric_blocks) == 2
    assert len(sys.antisymmetric_blocks) == 4
    for block in sys.antisymmetric_blocks:
        np.testing.assert_allclose(block, -block.T, atol=1e-12)


def test_qpd_tilde_forms_match_variety_polynomials(qpd_tilde):
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(size=4)
        values = qpd_tilde.values(x)
        r1, r2 = qpd_variety_residual(x)
        assert values[0] == pytest.approx(-2.0 * r1, abs=1e-12)
        assert values[1] == pytest.approx(-2.0 * r2, abs=1e-12)


def test_forms_match_complex_arithmetic():
    inst = random_instance(2, 5, real_symmetric=False)
    sys = build_system(inst)
    assert sys.ambient_dim == 8 and sys.n_equations == 6
    for seed in range(5):
        psi = random_state(4, seed).amplitudes
        expected = [np.vdot(psi, commutator(h, a).entries @ psi).real
                    for h, gens in zip(inst.observables, inst.generators) for a in gens]
        np.testing.assert_allclose(sys.values(_as_vector(psi)), expected, atol=1e-12)


def test_forms_are_homogeneous_and_phase_invariant():
    sys = build_system(random_instance(2, 8, real_symmetric=False))
    psi = random_state(4, 1).amplitudes
    v = _as_vector(psi)
    np.testing.assert_allclose(sys.values(3.0 * v), 9.0 * sys.values(v), atol=1e-11)
    np.testing.assert_allclose(sys.values(_as_vector(np.exp(0.7j) * psi)), sys.values(v), atol=1e-12)


def test_real_symmetric_rejects_complex_observables():
    with pytest.raises(SystemKindError):
        build_system(random_instance(2, 0, real_symmetric=False), real_symmetric=True)
    with pytest.raises(SystemKindError):
        tilde_w_system(build_system(random_instance(2, 0, real_symmetric=False)))


def test_quadric_system_validation():
    with pytest.raises(ValueError):
        QuadricSystem(2, (np.array([[0.0, 1.0], [0.0, 0.0]]),), GaugeKind.SIGN)
    with pytest.raises(ValueError):
        QuadricSystem(3, (np.eye(2),), GaugeKind.SIGN)
    with pytest.raises(ValueError):
        VarietyPoint(np.array([1.0, 1.0]), 0.0)


def test_newton_near_basis_state(qpd_tilde):
    start = np.array([0.05, 0.03, -0.02, 1.0])
    point = newton_solve(qpd_tilde, start)
    assert isinstance(point, VarietyPoint)
    assert point.residual < 1e-10
    assert abs(np.linalg.norm(point.coords) - 1.0) < 1e-12
    assert np.linalg.norm(point.coords - start / np.linalg.norm(start)) < 0.2


def test_newton_returns_start_already_on_variety(qpd_tilde):
    point = newton_solve(qpd_tilde, [0.0, 0.0, 0.0, 2.0])
    assert isinstance(point, VarietyPoint)
    assert point.iterations == 0
    np.testing.assert_allclose(point.coords, [0, 0, 0, 1])
    with pytest.raises(ValueError):
        newton_solve(qpd_tilde, np.zeros(4))


def test_newton_reports_failure_on_empty_variety():
    # x² + y² = 0 has no point on the circle
    sys = QuadricSystem(2, (np.eye(2),), GaugeKind.SIGN)
    result = newton_solve(sys, [1.0, 0.3], max_iter=20)
    assert isinstance(result, NewtonFailure)
    assert result.residual > 0.5


def test_random_start_search_points_are_on_variety(qpd_tilde):
    points = random_start_search(qpd_tilde, 50, seed=1)
    assert points
    for point in points:
        assert point.residual < 1e-10
        assert abs(np.linalg.norm(point.coords) - 1.0) < 1e-12
    again = random_start_search(qpd_tilde, 50, seed=1)
    np.testing.assert_array_equal(np.array([p.coords for p in points]), np.array([p.coords for p in again]))
    with pytest.raises(ValueError):
        random_start_search(qpd_tilde, 0, seed=1)


def test_deduplicate_sign_and_phase():
    p = VarietyPoint(np.array([0.6, 0.8, 0.0, 0.0]), 0.0)
    q = VarietyPoint(np.array([-0.6, -0.8, 0.0, 0.0]), 0.0)
    assert len(deduplicate([p, q], GaugeKind.SIGN, quotient_sign=True)) == 1
    assert len(deduplicate([p, q], GaugeKind.SIGN, quotient_sign=False)) == 2

    psi = random_state(4, 2).amplitudes
    u = _as_vector(psi)
    w = _as_vector(np.exp(1.3j) * psi)
    assert gauge_distance(u, w, GaugeKind.PHASE) < 1e-12
    assert len(deduplicate([VarietyPoint(u, 0.0), VarietyPoint(w, 0.0)], GaugeKind.PHASE)) == 1


def test_isolated_points_for_two_qubit_complex_instances():
    found = 0
    for seed in range(3):
        sys = build_system(random_instance(2, seed, real_symmetric=False))
        points = random_start_search(sys, 40, seed)
        found += len(points)
        for point in points:
            assert estimate_local_dimension(sys, point).est_dim == 0
    assert found > 0


def test_three_qubit_dimension():
    sys = build_system(random_instance(3, 4, real_symmetric=False))
    points = random_start_search(sys, 5, seed=4)
    assert points
    for point in points:
        assert estimate_local_dimension(sys, point).est_dim == 5


def test_dimension_estimate_is_stable_under_rank_tol(real_instance_systems):
    search, _ = real_instance_systems[0]
    point = random_start_search(search, 20, seed=0)[0]
    for rank_tol in (1e-8, 1e-7, 1e-6, 1e-5):
        frame = estimate_local_dimension(search, point, rank_tol=rank_tol)
        assert frame.est_dim == 1
        assert abs(np.linalg.norm(frame.basis[0]) - 1.0) < 1e-12


def test_dimension_estimate_needs_small_residual(qpd_tilde):
    with pytest.raises(ResidualTooLargeError):
        estimate_local_dimension(qpd_tilde, VarietyPoint(np.array([0.5, 0.5, 0.5, 0.5]), 1e-3))


def test_real_symmetric_points_satisfy_all_six_forms(real_instance_systems):
    for search, full in real_instance_systems:
        for point in random_start_search(search, 30, seed=2):
            for lam in (0.0, 0.5, -2.0):
                assert tilde_v_membership(point.coords, lam, full)


def test_tilde_v_membership_rejects_off_variety(real_instance_systems):
    _, full = real_instance_systems[0]
    off = np.array([1.0, 0.0, 0.0, 0.0]) + 0.3
    if max(abs(off @ b @ off) for b in full.symmetric_blocks) > 1e-6:
        assert not tilde_v_membership(off, 0.5, full)
    with pytest.raises(SystemKindError):
        tilde_v_membership(off, 0.5, build_system(random_instance(2, 1, real_symmetric=False)))


def test_tilde_v_membership_raises_when_six_forms_disagree(real_instance_systems):
    search, full = real_instance_systems[0]
    point = random_start_search(search, 20, seed=3)[0]
    assert tilde_v_membership(point.coords, 0.5, full)
    broken = replace(full, forms=full.forms + (np.eye(8),))
    with pytest.raises(InvariantViolationError):
        tilde_v_membership(point.coords, 0.5, broken)


def test_traces_close_into_loops(real_instance_systems):
    closed = 0
    for search, full in real_instance_systems:
        start = random_start_search(search, 20, seed=3)[0]
        trace = trace_component(search, start, step=0.05, max_steps=2000)
        assert len(trace.points) > 3
        for point in trace.points:
            assert point.residual < 1e-10
            assert full.residual(np.concatenate([point.coords, point.coords])) < 1e-9
        closed += trace.closed
    assert closed >= 2


def test_trace_refinement_stays_near_coarse_curve(real_instance_systems):
    search, _ = real_instance_systems[0]
    start = random_start_search(search, 20, seed=3)[0]
    coarse = np.array([p.coords for p in trace_component(search, start, step=0.05, max_steps=2000).points])
    fine = np.array([p.coords for p in trace_component(search, start, step=0.025, max_steps=4000).points])
    distances = np.linalg.norm(fine[:, None, :] - coarse[None, :, :], axis=2).min(axis=1)
    assert distances.max() < 0.05


def test_trace_of_sign_flipped_start_is_the_same_curve(real_instance_systems):
    search, _ = real_instance_systems[1]
    start = random_start_search(search, 20, seed=3)[0]
    flipped = VarietyPoint(-start.coords, start.residual)
    forward = trace_component(search, start, step=0.05, max_steps=2000)
    mirrored = trace_component(search, flipped, step=0.05, max_steps=2000)
    if not (forward.closed and mirrored.closed):
        pytest.skip("component did not close; orientation of open arcs is not comparable")
    a = np.array([p.coords for p in forward.points])
    b = -np.array([p.coords for p in mirrored.points])
    distances = np.linalg.norm(b[:, None, :] - a[None, :, :], axis=2).min(axis=1)
    assert distances.max() < 0.05


def test_trace_requires_curve():
    sys = build_system(random_instance(2, 0, real_symmetric=False))
    points = random_start_search(sys, 40, seed=0)
    if points:
        with pytest.raises(TangentDimensionError):
            trace_component(sys, points[0])


def test_stereographic_examples():
    np.testing.assert_allclose(stereographic([1.0, 0.0, 0.0, 0.0]), [0, 0, 0])
    np.testing.assert_allclose(stereographic([0.0, 1.0, 0.0, 0.0]), [1, 0, 0])
    np.testing.assert_allclose(stereographic([0.0, 0.0, 0.0, 1.0]), [0, 0, 1])
    with pytest.raises(ProjectionPoleError):
        stereographic([-1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(stereographic([-1.0, 0.0, 0.0, 0.0], chart="south"), [0, 0, 0])
    with pytest.raises(ValueError):
        stereographic([1.0, 1.0, 0.0, 0.0])


def test_stereographic_any_chart_uses_south_only_at_pole():
    xyz, chart = stereographic_any_chart([-1.0, 0.0, 0.0, 0.0])
    assert chart == "south"
    np.testing.assert_allclose(xyz, [0, 0, 0])
    xyz, chart = stereographic_any_chart([0.0, 0.0, 0.0, 1.0])
    assert chart == "north"
    np.testing.assert_allclose(xyz, [0, 0, 1])


def test_inverse_stereographic_recovers_point():
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = rng.normal(size=4)
        p /= np.linalg.norm(p)
        for chart in ("north", "south"):
            np.testing.assert_allclose(inverse_stereographic(stereographic(p, chart), chart), p, atol=1e-12)


def test_single_observable_instance_system():
    h = random_hermitian(2, 7)
    sys = build_system(NashInstance.single_qubit([h], 1))
    assert sys.ambient_dim == 4 and sys.n_equations == 3
    # 단일 큐비트의 내시 상태 = ĥ 의 고유상태
    points = random_start_search(sys, 20, seed=0)
    assert len(points) == 2
