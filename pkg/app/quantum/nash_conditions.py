"""
내시 상태 조건 평가.

- nash_residual / is_epsilon_nash: ⟨[ĥ_i, Â_iα]⟩ 잔차
- bilinear_form_matrix / classify_local: 2차 형식에 의한 국소 최소/최대 판정
- global_su2_check: 단일 큐비트 블록에 대한 전역 최적성 (4×4 이차형식)
- frustration_free_check, dimension_counts, optimal_product_state
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from app.config import settings
from app.quantum.operator_core import (
    PAULI,
    DenseOperator,
    HermitianTag,
    State,
    StateVector,
    acts_within,
    reduce_to_support,
    embed,
    su2_generators,
)
from app.utils.exceptions import DimensionMismatchError, NonHermitianError, NotNashStateError
from app.utils.logger import logger


@dataclass(frozen=True)
class NashInstance:
    """관측량 {ĥ_i}, 서로소 블록, 블록별 반에르미트 생성자 기저"""
    n_qubits: int
    observables: Tuple[DenseOperator, ...]
    blocks: Tuple[Tuple[int, ...], ...]
    generators: Tuple[Tuple[DenseOperator, ...], ...]

    def __post_init__(self):
        observables = tuple(self.observables)
        blocks = tuple(tuple(block) for block in self.blocks)
        generators = tuple(tuple(gens) for gens in self.generators)
        dim = 2 ** self.n_qubits
        if not (len(observables) == len(blocks) == len(generators)):
            raise ValueError("observables, blocks and generators must have equal length")
        seen = set()
        for block in blocks:
            if seen.intersection(block):
                raise ValueError(f"blocks are not disjoint: {blocks}")
            seen.update(block)
        for i, (h, block, gens) in enumerate(zip(observables, blocks, generators)):
            if h.dim != dim:
                raise DimensionMismatchError(f"observable {i} has dim {h.dim}, expected {dim}")
            if not h.is_hermitian:
                raise NonHermitianError(f"observable {i} is not Hermitian")
            for a in gens:
                if a.dim != dim or a.hermitian_tag is not HermitianTag.ANTI_HERMITIAN:
                    raise NonHermitianError(f"generator of block {i} must be anti-Hermitian with dim {dim}")
                if not acts_within(a, block, self.n_qubits):
                    raise ValueError(f"generator of block {i} acts outside {block}")
                # 블록 밖에서 항등이므로 노름은 국소 연산자의 노름과 같다
                if abs(reduce_to_support(a, block, self.n_qubits).norm() - 1.0) > 1e-10:
                    raise ValueError(f"generator of block {i} must have operator norm 1")
        object.__setattr__(self, "observables", observables)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "generators", generators)

    @property
    def n_blocks(self) -> int:
        return len(self.observables)

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    @classmethod
    def single_qubit(cls, observables: Sequence[DenseOperator], n_qubits: int,
                     sites: Optional[Sequence[int]] = None) -> "NashInstance":
        """블록 = 단일 큐비트, 생성자 = (iX, iY, iZ)"""
        sites = list(range(len(observables))) if sites is None else list(sites)
        return cls(
            n_qubits=n_qubits,
            observables=tuple(observables),
            blocks=tuple((site,) for site in sites),
            generators=tuple(su2_generators(site, n_qubits) for site in sites),
        )

    def negated(self) -> "NashInstance":
        return NashInstance(self.n_qubits, tuple(-h for h in self.observables), self.blocks, self.generators)

    def rescaled(self, factors: Sequence[float]) -> "NashInstance":
        return NashInstance(self.n_qubits, tuple(h.scaled(f) for h, f in zip(self.observables, factors)),
                            self.blocks, self.generators)

    def conjugated(self, unitary: DenseOperator) -> "NashInstance":
        """ĥ → UĥU†, Â → UÂU†. 블록 지지 조건이 깨지므로 검증 없이 만든다"""
        u = unitary.entries
        conj = lambda op: DenseOperator(u @ op.entries @ u.conj().T, op.hermitian_tag)
        instance = object.__new__(NashInstance)
        object.__setattr__(instance, "n_qubits", self.n_qubits)
        object.__setattr__(instance, "observables", tuple(conj(h) for h in self.observables))
        object.__setattr__(instance, "blocks", self.blocks)
        object.__setattr__(instance, "generators",
                           tuple(tuple(conj(a) for a in gens) for gens in self.generators))
        return instance


@dataclass(frozen=True)
class NashResidual:
    per_block: Tuple[float, ...]
    max: float


class LocalKind(str, Enum):
    LOCAL_MIN = "local_min"
    LOCAL_MAX = "local_max"
    SADDLE = "saddle"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class LocalClass:
    kind: LocalKind
    eigenvalue_lists: Tuple[Tuple[float, ...], ...]


@dataclass(frozen=True)
class GlobalCheck:
    optimal_value: float
    is_global: bool
    current_value: float
    optimizer: np.ndarray


@dataclass(frozen=True)
class DimensionCounts:
    dim_D: int
    dim_V: int
    dim_V_prime: int


@dataclass(frozen=True)
class ProductOptimum:
    state: StateVector
    local_states: Tuple[np.ndarray, ...]
    energy: float
    sweeps: int
    converged: bool


def _check_dims(state: State, inst: NashInstance):
    if state.dim != inst.dim:
        raise DimensionMismatchError(f"state dim {state.dim} does not match instance dim {inst.dim}")


def _commutator_expectation(state: State, h: np.ndarray, a: np.ndarray) -> float:
    """⟨[h, A]⟩ (h 에르미트, A 반에르미트 → 실수)"""
    if isinstance(state, StateVector):
        psi = state.amplitudes
        # ⟨ψ|hA − Ah|ψ⟩ = 2 Re⟨hψ|Aψ⟩
        return 2.0 * float(np.real(np.vdot(h @ psi, a @ psi)))
    rho = state.entries
    value = np.einsum("ij,ji->", rho @ h, a) - np.einsum("ij,ji->", rho @ a, h)
    return float(np.real(value))


def nash_residual(state: State, inst: NashInstance) -> NashResidual:
    _check_dims(state, inst)
    per_block = []
    for h, gens in zip(inst.observables, inst.generators):
        values = [abs(_commutator_expectation(state, h.entries, a.entries)) for a in gens]
        per_block.append(max(values) if values else 0.0)
    return NashResidual(tuple(per_block), max(per_block) if per_block else 0.0)


def is_epsilon_nash(state: State, inst: NashInstance, epsilon: float) -> bool:
    """max_α |⟨[ĥ_i, Â_iα]⟩| ≤ ε. ‖v‖₁ 가중 조건과 동치 (기저 방향에서 등호)"""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return nash_residual(state, inst).max <= epsilon


def bilinear_form_matrix(state: State, inst: NashInstance, block_index: int) -> np.ndarray:
    """B_ab = ⟨½{ĥ,{A_a,A_b}} − A_a ĥ A_b − A_b ĥ A_a⟩"""
    _check_dims(state, inst)
    if not 0 <= block_index < inst.n_blocks:
        raise IndexError(f"block_index {block_index} out of range for {inst.n_blocks} blocks")
    h = inst.observables[block_index].entries
    gens = [a.entries for a in inst.generators[block_index]]
    k = len(gens)
    form = np.zeros((k, k))

    if isinstance(state, StateVector):
        psi = state.amplitudes
        w = h @ psi
        u = [a @ psi for a in gens]
        hu = [h @ v for v in u]
        for a in range(k):
            for b in range(a, k):
                p_ab = np.vdot(w, gens[a] @ u[b])
                p_ba = np.vdot(w, gens[b] @ u[a])
                value = np.real(p_ab + p_ba) + 2.0 * np.real(np.vdot(u[a], hu[b]))
                form[a, b] = form[b, a] = value
        return form

    rho = state.entries
    rh = rho @ h
    ra = [rho @ a for a in gens]
    ha = [h @ a for a in gens]
    ah = [a @ h for a in gens]
    rha = [rh @ a for a in gens]
    trace = lambda x, y: np.einsum("ij,ji->", x, y)
    for a in range(k):
        for b in range(a, k):
            anti = 0.5 * (trace(rha[a], gens[b]) + trace(rha[b], gens[a])
                          + trace(ra[a], ah[b]) + trace(ra[b], ah[a]))
            cross = trace(ra[a], ha[b]) + trace(ra[b], ha[a])
            form[a, b] = form[b, a] = float(np.real(anti - cross))
    return form


def classify_local(state: State, inst: NashInstance, tol: float = settings.CLASSIFY_TOL,
                   nash_tol: float = settings.NASH_TOL) -> LocalClass:
    residual = nash_residual(state, inst)
    if residual.max >= nash_tol:
        raise NotNashStateError(f"not a Nash state: residual {residual.max:.3e} >= {nash_tol:.1e}")

    eigenvalue_lists = tuple(
        tuple(float(x) for x in np.linalg.eigvalsh(bilinear_form_matrix(state, inst, i)))
        for i in range(inst.n_blocks)
    )
    values = np.concatenate([np.asarray(ev) for ev in eigenvalue_lists]) if eigenvalue_lists else np.zeros(0)
    if np.all(np.abs(values) <= tol):
        kind = LocalKind.DEGENERATE
    elif np.all(values >= -tol):
        kind = LocalKind.LOCAL_MIN
    elif np.all(values <= tol):
        kind = LocalKind.LOCAL_MAX
    else:
        kind = LocalKind.SADDLE
    logger.debug(f"classify_local -> {kind.value}")
    return LocalClass(kind, eigenvalue_lists)


def _su2_quadratic_form(state: State, h: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """U = a0·1 + i(a1X + a2Y + a3Z) 에 대해 ⟨U†hU⟩ = aᵀQa"""
    sigmas = [embed(DenseOperator(PAULI[l]), [qubit], n_qubits).entries for l in ("I", "X", "Y", "Z")]
    phases = np.array([1.0, 1j, 1j, 1j])
    moments = np.zeros((4, 4), dtype=complex)
    if isinstance(state, StateVector):
        psi = state.amplitudes
        shifted = [s @ psi for s in sigmas]
        h_shifted = [h @ v for v in shifted]
        for mu in range(4):
            for nu in range(4):
                moments[mu, nu] = np.vdot(shifted[mu], h_shifted[nu])
    else:
        rho = state.entries
        for mu in range(4):
            left = rho @ sigmas[mu] @ h
            for nu in range(4):
                moments[mu, nu] = np.einsum("ij,ji->", left, sigmas[nu])
    kernel = np.conj(phases)[:, None] * phases[None, :] * moments
    q = np.real(kernel)
    return 0.5 * (q + q.T)


def global_su2_check(state: State, h: DenseOperator, qubit: int, mode: str = "min",
                     tol: float = settings.NASH_TOL) -> GlobalCheck:
    n_qubits = int(round(np.log2(h.dim)))
    if not 0 <= qubit < n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {n_qubits} qubits")
    if state.dim != h.dim:
        raise DimensionMismatchError(f"state dim {state.dim} does not match operator dim {h.dim}")
    if mode not in ("min", "max"):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    if not h.is_hermitian:
        raise NonHermitianError("global_su2_check requires a Hermitian observable")

    q = _su2_quadratic_form(state, h.entries, qubit, n_qubits)
    values, vectors = la.eigh(q)
    index = 0 if mode == "min" else -1
    optimal = float(values[index])
    current = float(q[0, 0])
    return GlobalCheck(
        optimal_value=optimal,
        is_global=abs(optimal - current) < tol * max(1.0, abs(current)),
        current_value=current,
        optimizer=vectors[:, index],
    )


def frustration_free_check(terms: Sequence[DenseOperator], state: StateVector, tol: float = 1e-9) -> bool:
    """모든 ĥ_i 에 대해 ĥ_i|ψ⟩ = ε_min|ψ⟩"""
    psi = state.amplitudes
    for i, term in enumerate(terms):
        if not term.is_hermitian:
            raise NonHermitianError(f"term {i} is not Hermitian")
        lowest = float(np.linalg.eigvalsh(term.entries)[0])
        if np.linalg.norm(term.entries @ psi - lowest * psi) >= tol:
            return False
    return True


def dimension_counts(d: int, group_dims: Sequence[int],
                     local_case: Optional[Tuple[int, int]] = None) -> DimensionCounts:
    """
    dim D = d² − 1 − Σ dim g_i, dim V = 2d − Σ dim g_i, dim V' = dim V − 2.

    local_case = (N, q) 이면 d = 2^N, 블록 N/q 개, dim g_i = 4^q − 1 (su(2^q)).
    """
    if local_case is not None:
        n, q = local_case
        if n % q:
            raise ValueError(f"q={q} must divide N={n}")
        d = 2 ** n
        group_dims = [4 ** q - 1] * (n // q)
    if any(g <= 0 for g in group_dims):
        raise ValueError("group dimensions must be positive")
    total = sum(group_dims)
    dim_v = 2 * d - total
    return DimensionCounts(dim_D=d * d - 1 - total, dim_V=dim_v, dim_V_prime=dim_v - 2)


def _product_vector(local_states: Sequence[np.ndarray]) -> np.ndarray:
    vector = np.ones(1, dtype=complex)
    for phi in local_states:
        vector = np.kron(vector, phi)
    return vector


def optimal_product_state(hamiltonian: DenseOperator, n_qubits: int, seed: int,
                          max_sweeps: int = 10000, tol: float = 1e-14,
                          state_tol: float = 1e-11) -> ProductOptimum:
    """
    사이트별 교대 최소화로 최적 곱상태를 찾는다.

    각 사이트에서 나머지를 고정한 2×2 유효 해밀토니안의 최저 고유벡터를 취하고,
    스윕 전후 에너지 변화가 tol, 국소 상태 변화가 state_tol 이하가 되면 멈춘다.
    """
    if hamiltonian.dim != 2 ** n_qubits:
        raise DimensionMismatchError(f"hamiltonian dim {hamiltonian.dim} is not 2^{n_qubits}")
    rng = np.random.default_rng(seed)
    local_states = []
    for _ in range(n_qubits):
        phi = rng.normal(size=2) + 1j * rng.normal(size=2)
        local_states.append(phi / np.linalg.norm(phi))

    h = hamiltonian.entries
    energy = float(np.real(np.vdot(_product_vector(local_states), h @ _product_vector(local_states))))
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        change = 0.0
        for site in range(n_qubits):
            columns = []
            for basis in (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)):
                trial = list(local_states)
                trial[site] = basis
                columns.append(_product_vector(trial))
            frame = np.stack(columns, axis=1)
            effective = frame.conj().T @ h @ frame
            _, vectors = np.linalg.eigh(0.5 * (effective + effective.conj().T))
            new = vectors[:, 0]
            # 전역 위상 정렬 후 변화량 측정
            overlap = np.vdot(local_states[site], new)
            if abs(overlap) > 0:
                new = new * np.conj(overlap) / abs(overlap)
            change = max(change, float(np.linalg.norm(new - local_states[site])))
            local_states[site] = new
        vector = _product_vector(local_states)
        new_energy = float(np.real(np.vdot(vector, h @ vector)))
        delta = abs(new_energy - energy)
        energy = new_energy
        if delta <= tol * max(1.0, abs(energy)) and change <= state_tol:
            converged = True
            break

    if not converged:
        logger.warning(f"optimal_product_state did not converge in {max_sweeps} sweeps")
    return ProductOptimum(
        state=StateVector.from_amplitudes(_product_vector(local_states)),
        local_states=tuple(local_states),
        energy=energy,
        sweeps=sweeps,
        converged=converged,
    )


def nash_residuals_batch(states: Sequence[State], inst: NashInstance) -> List[NashResidual]:
    """여러 상태의 잔차를 스레드 풀에서 병렬 계산 (순서 보존)"""
    with ThreadPoolExecutor(max_workers=settings.THREAD_COUNT) as executor:
        return list(executor.map(lambda s: nash_residual(s, inst), states))


def winners(payoffs: Sequence[float], tol: float = 1e-12) -> List[int]:
    """u_i ≥ u_j (모든 j) 를 만족하는 플레이어 목록. 사후 비교 전용"""
    best = max(payoffs)
    return [i for i, u in enumerate(payoffs) if u >= best - tol]
