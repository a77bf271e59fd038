"""
n-큐비트 힐베르트 공간 위의 밀집 연산자 대수.

큐비트 순서: site 0 이 가장 상위 텐서 인자 (|01⟩ = qubit0 이 0, qubit1 이 1).
모든 타입은 생성 후 불변이고, 모든 난수는 명시적 시드를 통해서만 생성된다.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la

from app.config import settings
from app.utils.exceptions import DimensionMismatchError, NonHermitianError
from app.utils.logger import logger

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12

PAULI: Dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class HermitianTag(str, Enum):
    HERMITIAN = "hermitian"
    ANTI_HERMITIAN = "anti_hermitian"
    GENERAL = "general"


def _scale(entries: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(entries))) if entries.size else 1.0)


def _satisfies(entries: np.ndarray, tag: HermitianTag) -> bool:
    if tag is HermitianTag.GENERAL:
        return True
    sign = -1.0 if tag is HermitianTag.HERMITIAN else 1.0
    return bool(np.max(np.abs(entries + sign * entries.conj().T)) < HERMITIAN_TOL * _scale(entries))


def _infer_tag(entries: np.ndarray) -> HermitianTag:
    for tag in (HermitianTag.HERMITIAN, HermitianTag.ANTI_HERMITIAN):
        if _satisfies(entries, tag):
            return tag
    return HermitianTag.GENERAL


def _read_only(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class DenseOperator:
    """d×d 복소 행렬 + 에르미트 태그"""
    entries: np.ndarray
    hermitian_tag: Optional[HermitianTag] = None

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatchError(f"operator must be square, got shape {entries.shape}")
        if self.hermitian_tag is None:
            tag = _infer_tag(entries)
        else:
            tag = HermitianTag(self.hermitian_tag)
            if not _satisfies(entries, tag):
                raise NonHermitianError(f"entries are not {tag.value}")
        object.__setattr__(self, "entries", _read_only(entries))
        object.__setattr__(self, "hermitian_tag", tag)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_hermitian(self) -> bool:
        return self.hermitian_tag is HermitianTag.HERMITIAN

    def dagger(self) -> "DenseOperator":
        return DenseOperator(self.entries.conj().T)

    def norm(self) -> float:
        """연산자 노름 ‖·‖∞ (최대 특이값)"""
        return float(np.linalg.norm(self.entries, 2))

    def scaled(self, factor: complex) -> "DenseOperator":
        return DenseOperator(factor * self.entries)

    def _check(self, other: "DenseOperator"):
        if self.dim != other.dim:
            raise DimensionMismatchError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        self._check(other)
        return DenseOperator(self.entries + other.entries)

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        self._check(other)
        return DenseOperator(self.entries - other.entries)

    def __neg__(self) -> "DenseOperator":
        return DenseOperator(-self.entries)

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        self._check(other)
        return DenseOperator(self.entries @ other.entries)

    @classmethod
    def zeros(cls, dim: int) -> "DenseOperator":
        return cls(np.zeros((dim, dim), dtype=complex))

    @classmethod
    def identity(cls, dim: int) -> "DenseOperator":
        return cls(np.eye(dim, dtype=complex))


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1.0) >= NORM_TOL:
            raise ValueError(f"state vector is not normalized (norm={norm!r})")
        object.__setattr__(self, "amplitudes", _read_only(amplitudes))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[complex]) -> "StateVector":
        """임의 벡터를 정규화해서 상태로 만든다"""
        vector = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValueError("zero vector cannot be normalized")
        return cls(vector / norm)

    @classmethod
    def basis(cls, index: int, dim: int) -> "StateVector":
        vector = np.zeros(dim, dtype=complex)
        vector[index] = 1.0
        return cls(vector)

    def evolved(self, op: DenseOperator) -> "StateVector":
        if op.dim != self.dim:
            raise DimensionMismatchError(f"dimension mismatch: {op.dim} vs {self.dim}")
        return StateVector.from_amplitudes(op.entries @ self.amplitudes)


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatchError(f"density matrix must be square, got {entries.shape}")
        if np.max(np.abs(entries - entries.conj().T)) >= HERMITIAN_TOL:
            raise NonHermitianError("density matrix is not Hermitian")
        if abs(np.trace(entries).real - 1.0) >= 1e-12:
            raise ValueError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(entries)[0] < -1e-10:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", _read_only(entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        return cls(np.outer(state.amplitudes, state.amplitudes.conj()))

    @classmethod
    def from_spectrum(cls, energies: np.ndarray, vectors: np.ndarray, beta: float) -> "DensityMatrix":
        """고유분해로부터 깁스 상태 e^{-βH}/Z 를 만든다"""
        weights = np.exp(-beta * (energies - energies[0]))
        weights /= weights.sum()
        entries = (vectors * weights) @ vectors.conj().T
        entries = 0.5 * (entries + entries.conj().T)
        return cls(entries / np.trace(entries).real)


State = Union[StateVector, DensityMatrix]


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    letters: Mapping[int, str] = field(default_factory=dict)

    def to_operator(self, n_qubits: int) -> DenseOperator:
        for site, letter in self.letters.items():
            if not 0 <= site < n_qubits:
                raise ValueError(f"site {site} out of range for {n_qubits} qubits")
            if letter not in ("X", "Y", "Z"):
                raise ValueError(f"unknown Pauli letter {letter!r}")
        matrix = np.ones((1, 1), dtype=complex)
        for site in range(n_qubits):
            matrix = np.kron(matrix, PAULI[self.letters.get(site, "I")])
        return DenseOperator(self.coefficient * matrix)


def pauli_operator(letter: str, site: int, n_qubits: int) -> DenseOperator:
    return PauliTerm(1.0, {site: letter}).to_operator(n_qubits)


def su2_generators(site: int, n_qubits: int) -> Tuple[DenseOperator, DenseOperator, DenseOperator]:
    """(iX, iY, iZ): 노름 1 반에르미트 생성자"""
    return tuple(
        DenseOperator(1j * pauli_operator(letter, site, n_qubits).entries, HermitianTag.ANTI_HERMITIAN)
        for letter in ("X", "Y", "Z")
    )


def embed(local_op: DenseOperator, support: Sequence[int], n_qubits: int) -> DenseOperator:
    """support 위에서는 local_op, 나머지 큐비트에는 항등으로 작용하는 연산자"""
    support = list(support)
    if len(set(support)) != len(support):
        raise ValueError(f"support has repeated sites: {support}")
    for site in support:
        if not 0 <= site < n_qubits:
            raise ValueError(f"site {site} out of range for {n_qubits} qubits")
    if local_op.dim != 2 ** len(support):
        raise DimensionMismatchError(
            f"local operator dim {local_op.dim} does not match support of size {len(support)}")

    rest = [q for q in range(n_qubits) if q not in support]
    order = support + rest
    full = np.kron(local_op.entries, np.eye(2 ** len(rest), dtype=complex))
    axes = [order.index(q) for q in range(n_qubits)]
    tensor = full.reshape([2] * (2 * n_qubits))
    tensor = tensor.transpose(axes + [n_qubits + a for a in axes])
    dim = 2 ** n_qubits
    return DenseOperator(tensor.reshape(dim, dim), local_op.hermitian_tag)


def reduce_to_support(op: DenseOperator, support: Sequence[int], n_qubits: int) -> DenseOperator:
    """보조 큐비트에 대한 정규화된 부분 대각합 (Tr_rest / 2^{|rest|})"""
    support = list(support)
    rest = [q for q in range(n_qubits) if q not in support]
    order = support + rest
    tensor = op.entries.reshape([2] * (2 * n_qubits))
    tensor = tensor.transpose(order + [n_qubits + q for q in order])
    k = len(support)
    tensor = tensor.reshape(2 ** k, 2 ** len(rest), 2 ** k, 2 ** len(rest))
    local = np.einsum("arbr->ab", tensor) / (2 ** len(rest))
    return DenseOperator(local)


def acts_within(op: DenseOperator, support: Sequence[int], n_qubits: int, tol: float = 1e-10) -> bool:
    if op.dim != 2 ** n_qubits:
        raise DimensionMismatchError(f"operator dim {op.dim} is not 2^{n_qubits}")
    rebuilt = embed(reduce_to_support(op, support, n_qubits), support, n_qubits)
    return bool(np.max(np.abs(rebuilt.entries - op.entries)) < tol * _scale(op.entries))


def commutator(a: DenseOperator, b: DenseOperator) -> DenseOperator:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")
    entries = a.entries @ b.entries - b.entries @ a.entries
    tags = {a.hermitian_tag, b.hermitian_tag}
    if HermitianTag.GENERAL in tags:
        tag = None
    elif len(tags) == 1:
        tag = HermitianTag.ANTI_HERMITIAN
    else:
        tag = HermitianTag.HERMITIAN
    if tag is not None:
        # 반올림 오차 제거
        sign = 1.0 if tag is HermitianTag.HERMITIAN else -1.0
        entries = 0.5 * (entries + sign * entries.conj().T)
    return DenseOperator(entries, tag)


def expectation(state: State, op: DenseOperator, real: bool = False) -> Union[complex, float]:
    if state.dim != op.dim:
        raise DimensionMismatchError(f"dimension mismatch: state {state.dim} vs operator {op.dim}")
    if isinstance(state, StateVector):
        value = complex(np.vdot(state.amplitudes, op.entries @ state.amplitudes))
    else:
        value = complex(np.einsum("ij,ji->", state.entries, op.entries))
    if not real:
        return value
    if not op.is_hermitian:
        raise NonHermitianError("real expectation requested for a non-Hermitian operator")
    if abs(value.imag) >= 1e-12 * _scale(op.entries):
        raise NonHermitianError(f"expectation has imaginary part {value.imag!r}")
    return value.real


@dataclass(frozen=True)
class InteractionGraph:
    n_sites: int
    edges: Mapping[Tuple[int, int], DenseOperator]
    onsite: Mapping[int, DenseOperator] = field(default_factory=dict)

    def __post_init__(self):
        normalized = {}
        for (i, j), op in self.edges.items():
            if i == j:
                raise ValueError(f"edge endpoints must be distinct: {(i, j)}")
            for site in (i, j):
                if not 0 <= site < self.n_sites:
                    raise ValueError(f"edge {(i, j)} out of range")
            if op.dim != 4 or not op.is_hermitian:
                raise NonHermitianError(f"edge {(i, j)} needs a Hermitian 4x4 operator")
            # (i, j) 순서로 저장. j < i 로 들어오면 swap 연산자로 맞춘다
            key = (min(i, j), max(i, j))
            if i > j:
                swap = np.eye(4)[[0, 2, 1, 3]]
                op = DenseOperator(swap @ op.entries @ swap)
            if key in normalized:
                op = normalized[key] + op
            normalized[key] = op
        for site, op in self.onsite.items():
            if not 0 <= site < self.n_sites:
                raise ValueError(f"onsite term at {site} out of range")
            if op.dim != 2 or not op.is_hermitian:
                raise NonHermitianError(f"onsite term at {site} needs a Hermitian 2x2 operator")
        object.__setattr__(self, "edges", normalized)
        object.__setattr__(self, "onsite", dict(self.onsite))


def hamiltonian(graph: InteractionGraph) -> DenseOperator:
    n = graph.n_sites
    total = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for (i, j), op in graph.edges.items():
        total += embed(op, [i, j], n).entries
    for site, op in graph.onsite.items():
        total += embed(op, [site], n).entries
    return DenseOperator(total, HermitianTag.HERMITIAN)


def star_hamiltonians(graph: InteractionGraph, onsite_weight: float = 1.0) -> List[DenseOperator]:
    """ĥ_i = ½ Σ_{j~i} ĥ_ij + w·ŝ_i"""
    if onsite_weight not in (1.0, 0.5):
        raise ValueError(f"onsite_weight must be 1.0 or 0.5, got {onsite_weight}")
    n = graph.n_sites
    dim = 2 ** n
    stars = [np.zeros((dim, dim), dtype=complex) for _ in range(n)]
    for (i, j), op in graph.edges.items():
        embedded = embed(op, [i, j], n).entries
        stars[i] += 0.5 * embedded
        stars[j] += 0.5 * embedded
    for site, op in graph.onsite.items():
        stars[site] += onsite_weight * embed(op, [site], n).entries
    return [DenseOperator(entries, HermitianTag.HERMITIAN) for entries in stars]


def diagonalize(op: DenseOperator) -> Tuple[np.ndarray, List[StateVector]]:
    """오름차순 고유값과 정규직교 고유벡터. 축퇴 부분공간 안의 벡터 선택은 임의"""
    energies, vectors = eigh_dense(op)
    return energies, [StateVector(vectors[:, k]) for k in range(vectors.shape[1])]


def eigh_dense(op: DenseOperator) -> Tuple[np.ndarray, np.ndarray]:
    if op.dim > 2 ** settings.ED_MAX_QUBITS:
        raise ValueError(f"dense diagonalization limited to dim <= 2^{settings.ED_MAX_QUBITS}")
    if not _satisfies(op.entries, HermitianTag.HERMITIAN):
        raise NonHermitianError("diagonalize requires a Hermitian operator")
    energies, vectors = la.eigh(op.entries)
    logger.debug(f"diagonalized dim={op.dim}, E0={energies[0]:.12g}")
    return energies, vectors


def random_hermitian(d: int, seed: int, real_symmetric: bool = False, scale: float = 1.0) -> DenseOperator:
    """가우시안 에르미트 행렬 (GUE/GOE 류). 비대각 원소는 E|h_ij|² = scale²"""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    if real_symmetric:
        g = rng.normal(size=(d, d))
        entries = (g + g.T) / np.sqrt(2.0)
    else:
        g = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2.0)
        entries = (g + g.conj().T) / np.sqrt(2.0)
    return DenseOperator(scale * entries, HermitianTag.HERMITIAN)


def random_state(d: int, seed: int) -> StateVector:
    """하르 균등 순수 상태"""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    vector = rng.normal(size=d) + 1j * rng.normal(size=d)
    return StateVector.from_amplitudes(vector)


def random_unitary(d: int, seed: int) -> DenseOperator:
    rng = np.random.default_rng(seed)
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2.0)
    q, r = la.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return DenseOperator(q * phases)


def spawn_seeds(seed: int, n: int) -> List[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def random_two_local_graph(n_sites: int, seed: int, strictly: bool = True) -> InteractionGraph:
    """완전 그래프 위 무작위 2-국소 해밀토니안. strictly 이면 1-국소/항등 성분이 없다"""
    rng = np.random.default_rng(seed)
    letters = ("X", "Y", "Z")
    edges = {}
    for i in range(n_sites):
        for j in range(i + 1, n_sites):
            couplings = rng.normal(size=(3, 3))
            entries = sum(
                couplings[a, b] * np.kron(PAULI[letters[a]], PAULI[letters[b]])
                for a in range(3) for b in range(3)
            )
            edges[(i, j)] = DenseOperator(entries, HermitianTag.HERMITIAN)
    onsite = {}
    if not strictly:
        for i in range(n_sites):
            fields = rng.normal(size=3)
            onsite[i] = DenseOperator(sum(f * PAULI[l] for f, l in zip(fields, letters)),
                                      HermitianTag.HERMITIAN)
    return InteractionGraph(n_sites, edges, onsite)


def random_local_observables(n_sites: int, seed: int) -> List[DenseOperator]:
    """고리 위 (i, i+1) 에 놓인 무작위 2-큐비트 항, 각각 ‖h_i‖∞ = 1"""
    observables = []
    for site, child in enumerate(spawn_seeds(seed, n_sites)):
        local = random_hermitian(4, child).entries
        local = local / np.linalg.norm(local, 2)
        observables.append(embed(DenseOperator(local, HermitianTag.HERMITIAN),
                                 [site, (site + 1) % n_sites], n_sites))
    return observables
