import numpy as np
import pytest
import scipy.linalg as la
from scipy.optimize import minimize

from app.quantum.nash_conditions import (
    LocalKind,
    NashInstance,
    bilinear_form_matrix,
    classify_local,
    dimension_counts,
    frustration_free_check,
    global_su2_check,
    is_epsilon_nash,
    nash_residual,
    nash_residuals_batch,
    optimal_product_state,
    winners,
)
from app.quantum.operator_core import (
    PAULI,
    DenseOperator,
    DensityMatrix,
    HermitianTag,
    StateVector,
    commutator,
    diagonalize,
    embed,
    expectation,
    hamiltonian,
    pauli_operator,
    random_hermitian,
    random_local_observables,
    random_state,
    random_two_local_graph,
    random_unitary,
    star_hamiltonians,
)
from app.quantum.tfim import TFIMSpec, ed_ground_state, ed_spectrum, star_instance, tfim_graph
from app.utils.exceptions import DimensionMismatchError, NotNashStateError


def random_instance(n_qubits: int, seed: int) -> NashInstance:
    return NashInstance.single_qubit([random_hermitian(2 ** n_qubits, seed + i) for i in range(n_qubits)], n_qubits)


@pytest.fixture
def tfim_spec():
    return TFIMSpec(n_sites=6, g=0.7)


@pytest.fixture
def tfim_ground(tfim_spec):
    _, state = ed_ground_state(tfim_spec.n_sites, tfim_spec.g)
    return state


def test_instance_validation():
    h = random_hermitian(4, 0)
    with pytest.raises(ValueError):
        NashInstance(2, [h, h], [(0,), (0,)], [(), ()])
    with pytest.raises(DimensionMismatchError):
        NashInstance.single_qubit([random_hermitian(8, 1)], 2)
    scaled = DenseOperator(2j * pauli_operator("X", 0, 2).entries, HermitianTag.ANTI_HERMITIAN)
    with pytest.raises(ValueError):
        NashInstance(2, [h], [(0,)], [(scaled,)])


def test_residual_maximally_mixed_is_zero():
    inst = random_instance(2, 3)
    assert nash_residual(DensityMatrix.maximally_mixed(4), inst).max < 1e-14


def test_residual_block_eigenstates():
    local = [random_hermitian(2, 10), random_hermitian(2, 11)]
    observables = [embed(local[0], [0], 2), embed(local[1], [1], 2)]
    inst = NashInstance.single_qubit(observables, 2)
    vectors = [np.linalg.eigh(h.entries)[1][:, 0] for h in local]
    state = StateVector.from_amplitudes(np.kron(vectors[0], vectors[1]))
    assert nash_residual(state, inst).max < 1e-12


def test_residual_matches_direct_oracle():
    inst = random_instance(2, 20)
    psi = random_state(4, 21)
    residual = nash_residual(psi, inst)
    for i, (h, gens) in enumerate(zip(inst.observables, inst.generators)):
        expected = max(abs(expectation(psi, commutator(h, a))) for a in gens)
        assert residual.per_block[i] == pytest.approx(expected, abs=1e-12)
    assert residual.max == max(residual.per_block)
    with pytest.raises(DimensionMismatchError):
        nash_residual(random_state(8, 0), inst)


def test_epsilon_nash():
    _, vectors = diagonalize(hamiltonian(random_two_local_graph(3, 4)))
    inst = NashInstance.single_qubit(star_hamiltonians(random_two_local_graph(3, 4)), 3)
    assert is_epsilon_nash(vectors[0], inst, 1e-6)

    x0 = NashInstance.single_qubit([pauli_operator("X", 0, 2)], 2)
    zero = StateVector.basis(0, 4)
    assert nash_residual(zero, x0).max == pytest.approx(2.0)
    assert not is_epsilon_nash(zero, x0, 0.1)
    with pytest.raises(ValueError):
        is_epsilon_nash(zero, x0, 0.0)


def test_haar_random_states_are_approximately_nash():
    n_sites = 8
    epsilon = 2.0 ** (-n_sites / 4)
    inst = NashInstance.single_qubit(random_local_observables(n_sites, 0), n_sites)
    hits = [is_epsilon_nash(random_state(inst.dim, seed), inst, epsilon) for seed in range(200)]
    assert np.mean(hits) >= 0.99


def test_bilinear_form_identity_is_zero():
    inst = NashInstance.single_qubit([DenseOperator.identity(4)] * 2, 2)
    form = bilinear_form_matrix(random_state(4, 1), inst, 0)
    assert np.max(np.abs(form)) < 1e-14
    with pytest.raises(IndexError):
        bilinear_form_matrix(random_state(4, 1), inst, 2)


def _second_derivative(state, h: np.ndarray, a: np.ndarray, step: float = 1e-3) -> float:
    def value(t):
        u = la.expm(t * a)
        rotated = u.conj().T @ h @ u
        if isinstance(state, StateVector):
            return float(np.real(np.vdot(state.amplitudes, rotated @ state.amplitudes)))
        return float(np.real(np.trace(state.entries @ rotated)))

    f0 = value(0.0)
    central = lambda s: (value(s) - 2 * f0 + value(-s)) / s ** 2
    return (4 * central(step / 2) - central(step)) / 3


def test_bilinear_form_matches_finite_differences():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n_qubits = 2 if trial % 2 else 3
        inst = random_instance(n_qubits, 1000 + trial)
        psi = random_state(inst.dim, 2000 + trial)
        block = trial % n_qubits
        direction = rng.normal(size=3)
        a = sum(v * g.entries for v, g in zip(direction, inst.generators[block]))
        exact = direction @ bilinear_form_matrix(psi, inst, block) @ direction
        numeric = _second_derivative(psi, inst.observables[block].entries, a)
        assert abs(numeric - exact) < 1e-5 * max(1.0, abs(exact))


def test_bilinear_form_density_matrix():
    inst = random_instance(2, 50)
    spectrum = np.array([0.5, 0.3, 0.15, 0.05])
    u = random_unitary(4, 51).entries
    rho = DensityMatrix((u * spectrum) @ u.conj().T)
    form = bilinear_form_matrix(rho, inst, 1)
    np.testing.assert_allclose(form, form.T, atol=1e-12)
    direction = np.array([0.3, -1.1, 0.4])
    a = sum(v * g.entries for v, g in zip(direction, inst.generators[1]))
    numeric = _second_derivative(rho, inst.observables[1].entries, a)
    assert abs(numeric - direction @ form @ direction) < 1e-5 * max(1.0, abs(numeric))


def test_classify_tfim_ground_is_local_min(tfim_spec, tfim_ground):
    local = classify_local(tfim_ground, star_instance(tfim_spec))
    assert local.kind is LocalKind.LOCAL_MIN
    assert len(local.eigenvalue_lists) == tfim_spec.n_sites


def test_classify_maximally_mixed_is_degenerate(tfim_spec):
    local = classify_local(DensityMatrix.maximally_mixed(2 ** tfim_spec.n_sites), star_instance(tfim_spec))
    assert local.kind is LocalKind.DEGENERATE


def test_classify_highest_eigenstate_of_negated_instance():
    spec = TFIMSpec(n_sites=4, g=1.3)
    _, vectors = ed_spectrum(spec.n_sites, spec.g)
    top = StateVector.from_amplitudes(vectors[:, -1])
    inst = star_instance(spec)
    assert classify_local(top, inst.negated()).kind is LocalKind.LOCAL_MIN
    assert classify_local(top, inst).kind is LocalKind.LOCAL_MAX


def test_classify_invariant_under_rescaling(tfim_spec, tfim_ground):
    inst = star_instance(tfim_spec)
    factors = [0.5, 2.0, 3.0, 1.0, 0.1, 7.0]
    assert classify_local(tfim_ground, inst.rescaled(factors)).kind is classify_local(tfim_ground, inst).kind


def test_classify_rejects_non_nash_state(tfim_spec):
    with pytest.raises(NotNashStateError):
        classify_local(random_state(64, 3), star_instance(tfim_spec))


def test_global_check_trivial_qubit():
    h = embed(random_hermitian(2, 4), [1], 2)
    psi = random_state(4, 5)
    check = global_su2_check(psi, h, 0)
    assert check.is_global
    assert check.optimal_value == pytest.approx(expectation(psi, h, real=True), abs=1e-12)
    with pytest.raises(IndexError):
        global_su2_check(psi, h, 2)


def test_global_check_tfim_ground(tfim_spec, tfim_ground):
    inst = star_instance(tfim_spec)
    for site, h in enumerate(inst.observables):
        assert global_su2_check(tfim_ground, h, site, mode="min").is_global


def _su2_grid_values(psi: np.ndarray, h: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """U = cos φ + i sin φ (n·σ) 를 큐비트 0 에 적용한 ⟨U†hU⟩"""
    phi, theta, azimuth = angles[:, 0], angles[:, 1], angles[:, 2]
    n = np.stack([np.sin(theta) * np.cos(azimuth), np.sin(theta) * np.sin(azimuth), np.cos(theta)], axis=1)
    sigma = np.stack([PAULI["X"], PAULI["Y"], PAULI["Z"]])
    u = np.cos(phi)[:, None, None] * np.eye(2) + 1j * np.sin(phi)[:, None, None] * np.einsum("ka,aij->kij", n, sigma)
    rotated = np.einsum("kab,bc->kac", u, psi.reshape(2, 2)).reshape(-1, 4)
    return np.real(np.einsum("ki,ij,kj->k", rotated.conj(), h, rotated))


def test_global_check_matches_grid_search():
    h = random_hermitian(4, 60)
    psi = random_state(4, 61)
    axis = lambda hi: np.linspace(0, hi, 50)
    grid = np.array(np.meshgrid(axis(np.pi), axis(np.pi), axis(2 * np.pi), indexing="ij")).reshape(3, -1).T
    for mode, sign in (("min", 1.0), ("max", -1.0)):
        values = sign * _su2_grid_values(psi.amplitudes, h.entries, grid)
        best = grid[np.argmin(values)]
        polished = minimize(lambda x: sign * _su2_grid_values(psi.amplitudes, h.entries, x[None, :])[0], best,
                            method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000})
        check = global_su2_check(psi, h, 0, mode=mode)
        assert abs(sign * polished.fun - check.optimal_value) < 1e-4
        assert values.min() >= sign * check.optimal_value - 1e-9


def test_unitary_covariance():
    inst = random_instance(2, 70)
    psi = random_state(4, 71)
    u = random_unitary(4, 72)
    moved = nash_residual(psi.evolved(u), inst.conjugated(u)).max
    assert moved == pytest.approx(nash_residual(psi, inst).max, abs=1e-10)


@pytest.mark.parametrize("n_sites,seed", [(3, 1), (3, 2), (4, 3)])
def test_two_local_eigenstates_are_nash(n_sites, seed):
    graph = random_two_local_graph(n_sites, seed)
    inst = NashInstance.single_qubit(star_hamiltonians(graph), n_sites)
    _, vectors = diagonalize(hamiltonian(graph))
    assert max(nash_residual(v, inst).max for v in vectors) < 1e-8
    for site, h in enumerate(inst.observables):
        assert global_su2_check(vectors[0], h, site, mode="min").is_global


def test_frustration_free_examples():
    zz = lambda i, j: (pauli_operator("Z", i, 3) @ pauli_operator("Z", j, 3))
    assert frustration_free_check([-zz(0, 1), -zz(1, 2)], StateVector.basis(0, 8))
    terms = [-pauli_operator("Z", 0, 2), -(pauli_operator("Z", 0, 2) @ pauli_operator("Z", 1, 2))]
    assert frustration_free_check(terms, StateVector.basis(0, 4))
    _, ground = ed_ground_state(4, 0.5)
    assert not frustration_free_check(star_hamiltonians(tfim_graph(4, 0.5)), ground)


def test_dimension_counts():
    assert dimension_counts(0, [], local_case=(2, 1)).dim_V_prime == 0
    assert dimension_counts(0, [], local_case=(3, 1)).dim_V_prime == 5
    assert dimension_counts(0, [], local_case=(2, 1)).dim_D == 9
    counts = dimension_counts(4, [3, 3])
    assert (counts.dim_D, counts.dim_V, counts.dim_V_prime) == (9, 2, 0)
    with pytest.raises(ValueError):
        dimension_counts(4, [0, 3])


def test_optimal_product_state_is_nash_minimum():
    n_sites, g = 6, 1.5
    graph = tfim_graph(n_sites, g)
    optimum = optimal_product_state(hamiltonian(graph), n_sites, seed=0)
    assert optimum.converged
    inst = NashInstance.single_qubit(star_hamiltonians(graph, onsite_weight=0.5), n_sites)
    assert nash_residual(optimum.state, inst).max < 1e-8
    for site, h in enumerate(inst.observables):
        assert global_su2_check(optimum.state, h, site, mode="min", tol=1e-8).is_global
    ground_energy, _ = ed_ground_state(n_sites, g)
    assert optimum.energy > ground_energy


def test_residual_batch_preserves_order():
    inst = random_instance(2, 80)
    states = [random_state(4, s) for s in range(6)]
    batch = nash_residuals_batch(states, inst)
    assert [r.max for r in batch] == [nash_residual(s, inst).max for s in states]


def test_winners():
    assert winners([2.5, 2.5]) == [0, 1]
    assert winners([0.0, 5.0]) == [1]
