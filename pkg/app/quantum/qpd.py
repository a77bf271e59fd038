"""
양자 죄수의 딜레마 (두 플레이어, 큐비트당 SU(2) 전략).

기저 순서 (|00⟩, |01⟩, |10⟩, |11⟩), 0 = 협력, 1 = 배신.
내시 다양체는 rebit 좌표 X ∈ S³ 위의 두 이차식, 내시 최대 조건은 두 부등식이다.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import settings
from app.quantum.nash_conditions import (
    GlobalCheck,
    LocalKind,
    NashInstance,
    NashResidual,
    classify_local,
    global_su2_check,
    nash_residual,
    winners,
)
from app.quantum.operator_core import (
    DenseOperator,
    HermitianTag,
    PauliTerm,
    StateVector,
    acts_within,
    embed,
    expectation,
)
from app.quantum.variety_solver import (
    GaugeKind,
    QuadricSystem,
    VarietyPoint,
    build_system,
    deduplicate,
    inverse_stereographic,
    random_start_search,
    stereographic,
    stereographic_any_chart,
    tilde_w_system,
)
from app.utils.exceptions import (
    InvariantViolationError,
    OffVarietyError,
)
from app.utils.logger import logger

# 보수표: (협력, 협력) = (3, 3), (협력, 배신) = (0, 5), (배신, 협력) = (5, 0), (배신, 배신) = (1, 1)
PAYOFF_TABLE = {
    (0, 0): (3.0, 3.0),
    (0, 1): (0.0, 5.0),
    (1, 0): (5.0, 0.0),
    (1, 1): (1.0, 1.0),
}
MAX_ENTANGLEMENT = 0.25

# (1, z₁, z₂) 행: |00⟩, |01⟩, |10⟩, |11⟩ 에서 Ẑ 고유값
_TORUS_CHARACTERS = np.array([
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0],
    [1.0, -1.0, 1.0],
    [1.0, -1.0, -1.0],
])


class OrbitFamily(str, Enum):
    SEPARABLE = "separable"
    MAX_ENTANGLED_A = "max_entangled_a"
    MAX_ENTANGLED_B = "max_entangled_b"
    GENERIC_PLUS = "generic_plus"
    GENERIC_MINUS = "generic_minus"


@dataclass(frozen=True)
class RebitState:
    X: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        x = np.asarray(self.X, dtype=float).reshape(4)
        if self.normalized and abs(np.linalg.norm(x) - 1.0) >= 1e-12:
            raise ValueError("normalized rebit must have unit norm")
        x.setflags(write=False)
        object.__setattr__(self, "X", x)

    def to_state(self) -> StateVector:
        return StateVector.from_amplitudes(self.X)

    def project(self, chart: Optional[str] = None) -> "ProjectedPoint":
        """chart 를 주지 않으면 북쪽 차트, 북극점에서만 남쪽 차트"""
        unit = self.X / np.linalg.norm(self.X)
        if chart is None:
            coords, chart = stereographic_any_chart(unit)
        else:
            coords = stereographic(unit, chart)
        return ProjectedPoint(*coords, chart=chart)


@dataclass(frozen=True)
class ProjectedPoint:
    x: float
    y: float
    z: float
    chart: str = "north"

    def __post_init__(self):
        if self.chart not in ("north", "south"):
            raise ValueError(f"chart must be 'north' or 'south', got {self.chart!r}")

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def to_rebit(self) -> RebitState:
        return RebitState(inverse_stereographic(self.coords, self.chart))


@dataclass(frozen=True)
class RebitFailure:
    """토러스 위상으로 실수화할 수 없는 상태의 증명서"""
    reason: str
    irreducible_imaginary: float


@dataclass(frozen=True)
class GameInstance:
    instance: NashInstance
    initial_state: StateVector

    def __post_init__(self):
        if self.initial_state.dim != self.instance.dim:
            raise ValueError(f"initial state dim {self.initial_state.dim} != instance dim {self.instance.dim}")

    @property
    def n_players(self) -> int:
        return self.instance.n_blocks


@dataclass(frozen=True)
class OrbitIntersection:
    point: ProjectedPoint
    rebit: RebitState
    family: OrbitFamily
    nash_max: bool
    payoffs: Tuple[float, float]
    orbit_residual: float
    variety_residual: float

    @property
    def residual(self) -> float:
        return max(self.orbit_residual, self.variety_residual)


@dataclass(frozen=True)
class EquilibriumCertificate:
    is_equilibrium: bool
    residual: NashResidual
    block_optima: Tuple[GlobalCheck, ...]
    local_kind: Optional[LocalKind] = None


def qpd_payoff_operators() -> Tuple[DenseOperator, DenseOperator]:
    h1 = DenseOperator(np.diag([3.0, 0.0, 5.0, 1.0]).astype(complex), HermitianTag.HERMITIAN)
    h2 = DenseOperator(np.diag([3.0, 5.0, 0.0, 1.0]).astype(complex), HermitianTag.HERMITIAN)

    # ĥ = 9/4·1 ± ... 파울리 전개와 일치해야 한다
    pauli_1 = [PauliTerm(9 / 4), PauliTerm(7 / 4, {1: "Z"}), PauliTerm(-3 / 4, {0: "Z"}),
               PauliTerm(-1 / 4, {0: "Z", 1: "Z"})]
    pauli_2 = [PauliTerm(9 / 4), PauliTerm(-3 / 4, {1: "Z"}), PauliTerm(7 / 4, {0: "Z"}),
               PauliTerm(-1 / 4, {0: "Z", 1: "Z"})]
    for h, terms in ((h1, pauli_1), (h2, pauli_2)):
        expansion = sum(term.to_operator(2).entries for term in terms)
        if np.max(np.abs(expansion - h.entries)) >= 1e-14:
            raise InvariantViolationError("payoff operator differs from its Pauli expansion")
    return h1, h2


def qpd_instance() -> NashInstance:
    return NashInstance.single_qubit(list(qpd_payoff_operators()), 2)


def qpd_game(initial_state: StateVector) -> GameInstance:
    return GameInstance(qpd_instance(), initial_state)


def _as_block_operator(strategy: Union[DenseOperator, np.ndarray], block: Sequence[int], n_qubits: int) -> np.ndarray:
    op = strategy if isinstance(strategy, DenseOperator) else DenseOperator(np.asarray(strategy, dtype=complex))
    if op.dim == 2 ** len(block) and op.dim != 2 ** n_qubits:
        op = embed(op, list(block), n_qubits)
    if op.dim != 2 ** n_qubits or not acts_within(op, block, n_qubits):
        raise ValueError(f"strategy acts outside its block {tuple(block)}")
    return op.entries


def payoffs(state: StateVector, game: GameInstance,
            strategies: Sequence[Union[DenseOperator, np.ndarray]]) -> np.ndarray:
    """u_i = ⟨ψ₀|(ΠU_j)† ĥ_i (ΠU_j)|ψ₀⟩"""
    inst = game.instance
    if len(strategies) != inst.n_blocks:
        raise ValueError(f"expected {inst.n_blocks} strategies, got {len(strategies)}")
    ops = [_as_block_operator(s, block, inst.n_qubits) for s, block in zip(strategies, inst.blocks)]

    forward = np.eye(inst.dim, dtype=complex)
    for op in ops:
        forward = op @ forward
    backward = np.eye(inst.dim, dtype=complex)
    for op in reversed(ops):
        backward = op @ backward
    if np.max(np.abs(forward - backward)) >= 1e-12:
        raise InvariantViolationError("strategies do not commute")

    psi = forward @ state.amplitudes
    return np.array([float(np.real(np.vdot(psi, h.entries @ psi))) for h in inst.observables])


def rebit_canonicalize(psi: StateVector, tol: float = settings.NASH_TOL
                       ) -> Tuple[Union[RebitState, RebitFailure], Tuple[float, float, float]]:
    """
    e^{i(α₀ + α₁Z₁ + α₂Z₂)} 로 진폭을 실수화한다.

    세 위상으로 |00⟩, |01⟩, |10⟩ 진폭을 실수로 만들면 |11⟩ 에는 φ₃' = φ₀ + φ₃ − φ₁ − φ₂ 가 남는다.
    X₅ = X₃ sin φ₃' 가 0 이거나 진폭 하나가 0 (예: X₁ = X₂ = 0, 추가 Z 회전) 이면 성공.
    """
    if psi.dim != 4:
        raise ValueError("rebit_canonicalize needs a two-qubit state")
    amplitudes = psi.amplitudes
    magnitudes = np.abs(amplitudes)
    cutoff = 1e-12
    phases = np.where(magnitudes > cutoff, np.angle(amplitudes), 0.0)

    # 행 j 의 위상 이동은 α₀ + α₁z₁(j) + α₂z₂(j); 어느 세 행도 독립
    rows = [j for j in range(4) if magnitudes[j] > cutoff][:3]
    alphas = np.linalg.lstsq(_TORUS_CHARACTERS[rows], -phases[rows], rcond=None)[0]
    if rows == [0, 1, 2]:
        phi0, phi1, phi2, _ = phases
        alphas = np.array([-(phi1 + phi2) / 2.0, (phi2 - phi0) / 2.0, (phi1 - phi0) / 2.0])

    rotated = amplitudes * np.exp(1j * (_TORUS_CHARACTERS @ alphas))
    imaginary = float(np.max(np.abs(rotated.imag)))
    torus = (float(alphas[0]), float(alphas[1]), float(alphas[2]))
    if imaginary >= tol:
        logger.debug(f"rebit_canonicalize failed: irreducible imaginary part {imaginary:.3e}")
        return RebitFailure("state is not torus-equivalent to a rebit", imaginary), torus
    real = rotated.real
    return RebitState(real / np.linalg.norm(real)), torus


def apply_torus(psi: StateVector, alphas: Sequence[float]) -> StateVector:
    return StateVector.from_amplitudes(psi.amplitudes * np.exp(1j * (_TORUS_CHARACTERS @ np.asarray(alphas))))


def qpd_variety_residual(X: Union[RebitState, Sequence[float]]) -> Tuple[float, float]:
    x = X.X if isinstance(X, RebitState) else np.asarray(X, dtype=float)
    return float(2 * x[0] * x[2] + x[1] * x[3]), float(2 * x[0] * x[1] + x[2] * x[3])


def nash_max_margins(X: Union[RebitState, Sequence[float]]) -> Tuple[float, float]:
    """두 부등식의 좌변. 둘 다 ≤ 0 이면 내시 최대"""
    x = X.X if isinstance(X, RebitState) else np.asarray(X, dtype=float)
    return (float(2 * (x[0] ** 2 - x[2] ** 2) + (x[1] ** 2 - x[3] ** 2)),
            float(2 * (x[0] ** 2 - x[1] ** 2) + (x[2] ** 2 - x[3] ** 2)))


def qpd_nash_max_check(X: Union[RebitState, Sequence[float]], tol: float = settings.NASH_TOL) -> bool:
    x = X.X if isinstance(X, RebitState) else np.asarray(X, dtype=float)
    scale = float(x @ x)
    r1, r2 = qpd_variety_residual(x)
    if max(abs(r1), abs(r2)) >= tol * scale:
        raise OffVarietyError(f"rebit {x.tolist()} is off the Nash variety (residuals {r1:.3e}, {r2:.3e})")
    m1, m2 = nash_max_margins(x)
    return m1 <= tol * scale and m2 <= tol * scale


def entanglement_parameter(X: Union[RebitState, Sequence[float]]) -> float:
    """χ² = (X₀X₃ − X₁X₂)²"""
    x = X.X if isinstance(X, RebitState) else np.asarray(X, dtype=float)
    return float((x[0] * x[3] - x[1] * x[2]) ** 2)


def complex_entanglement_parameter(psi: StateVector) -> float:
    """복소 상태의 |a₀₀a₁₁ − a₀₁a₁₀|². 국소 유니터리에 대해 불변이고 rebit 에서는 χ²"""
    a = psi.amplitudes
    return float(abs(a[0] * a[3] - a[1] * a[2]) ** 2)


def _check_chi(chi: float):
    if chi < 0 or chi * chi > MAX_ENTANGLEMENT + 1e-12:
        raise ValueError(f"chi must satisfy 0 <= chi and chi^2 <= 1/4, got {chi}")


def _rebit_orbit_residual(X: np.ndarray, chi: float, family: OrbitFamily) -> float:
    """남쪽 차트 점은 rebit 좌표에서 직접 잰다"""
    if family is OrbitFamily.MAX_ENTANGLED_A:
        return float(max(abs(X[0] - X[3]), abs(X[1] + X[2])))
    if family is OrbitFamily.MAX_ENTANGLED_B:
        return float(max(abs(X[0] + X[3]), abs(X[1] - X[2])))
    determinant = X[0] * X[3] - X[1] * X[2]
    if family is OrbitFamily.SEPARABLE:
        return float(abs(determinant))
    _check_chi(chi)
    sign = 1.0 if family is OrbitFamily.GENERIC_PLUS else -1.0
    return float(abs(determinant - sign * chi))


def orbit_residual(p: ProjectedPoint, chi: float, family: Union[OrbitFamily, str]) -> float:
    """
    얽힘 궤도의 정의식 잔차.

    일반 궤도는 (1−r²)z − 2xy ∓ (χ/2)(1+r²)² 를 2/(1+r²)² 로 정규화해 |X₀X₃ − X₁X₂ ∓ χ| 와 같게 만든다.
    """
    family = OrbitFamily(family)
    if p.chart == "south":
        return _rebit_orbit_residual(p.to_rebit().X, chi, family)
    x, y, z = p.x, p.y, p.z
    r2 = x * x + y * y + z * z
    if family is OrbitFamily.SEPARABLE:
        return abs((1 - r2) * z - 2 * x * y) * 2 / (1 + r2) ** 2
    # X₀ = X₃, X₁ = −X₂  ⇒  x = −y, 1 − r² = 2z
    if family is OrbitFamily.MAX_ENTANGLED_A:
        return max(abs(x + y), abs((z + 1) ** 2 + x * x + y * y - 2))
    # X₀ = −X₃, X₁ = X₂  ⇒  x = y, 1 − r² = −2z
    if family is OrbitFamily.MAX_ENTANGLED_B:
        return max(abs(x - y), abs((z - 1) ** 2 + x * x + y * y - 2))
    _check_chi(chi)
    sign = 1.0 if family is OrbitFamily.GENERIC_PLUS else -1.0
    return abs((1 - r2) * z - 2 * x * y - sign * 0.5 * chi * (1 + r2) ** 2) * 2 / (1 + r2) ** 2


def _sym(pairs: Sequence[Tuple[int, int, float]]) -> np.ndarray:
    q = np.zeros((4, 4))
    for i, j, value in pairs:
        q[i, j] += value / 2
        q[j, i] += value / 2
    return q


def _entanglement_form() -> np.ndarray:
    """X₀X₃ − X₁X₂"""
    return _sym([(0, 3, 1.0), (1, 2, -1.0)])


def _orbit_systems(chi: float) -> List[Tuple[OrbitFamily, QuadricSystem]]:
    variety = tilde_w_system(build_system(qpd_instance(), real_symmetric=True))
    base = list(variety.forms)
    if chi < 1e-12:
        families = [(OrbitFamily.SEPARABLE, [_entanglement_form()], [])]
    elif abs(chi * chi - MAX_ENTANGLEMENT) < 1e-12:
        # 이 궤도에서 이차식이 반정치로 퇴화하므로 두 원의 선형식을 쓴다
        families = [
            (OrbitFamily.MAX_ENTANGLED_A, [], [np.array([1.0, 0, 0, -1.0]), np.array([0, 1.0, 1.0, 0])]),
            (OrbitFamily.MAX_ENTANGLED_B, [], [np.array([1.0, 0, 0, 1.0]), np.array([0, 1.0, -1.0, 0])]),
        ]
    else:
        families = [
            (OrbitFamily.GENERIC_PLUS, [_entanglement_form() - chi * np.eye(4)], []),
            (OrbitFamily.GENERIC_MINUS, [_entanglement_form() + chi * np.eye(4)], []),
        ]
    return [
        (family, QuadricSystem(4, tuple(base + extra), GaugeKind.SIGN, tuple(linear),
                               labels=tuple(variety.labels) + (family.value,) * (len(extra) + len(linear))))
        for family, extra, linear in families
    ]


def orbit_variety_intersections(chi: float, tol: float = settings.NASH_TOL, n_starts: int = 200, seed: int = 0,
                                quotient_sign: bool = False) -> List[OrbitIntersection]:
    """얽힘 궤도 ∩ 내시 다양체. 기본은 이중 피복 (X 와 −X 를 구분)"""
    _check_chi(chi)
    h1, h2 = qpd_payoff_operators()
    points: List[Tuple[OrbitFamily, VarietyPoint]] = []
    for offset, (family, system) in enumerate(_orbit_systems(chi)):
        found = random_start_search(system, n_starts, seed + offset, quotient_sign=quotient_sign)
        points.extend((family, p) for p in found)

    # 가족 사이 중복 제거 (χ² = 1/4 원은 서로소지만 안전하게)
    unique = deduplicate([p for _, p in points], GaugeKind.SIGN, quotient_sign)
    family_of = {tuple(np.round(p.coords, 8)): f for f, p in points}

    results: List[OrbitIntersection] = []
    for p in unique:
        key = tuple(np.round(p.coords, 8))
        family = family_of.get(key) or family_of.get(tuple(np.round(-p.coords, 8)))
        rebit = RebitState(p.coords)
        projected = rebit.project()
        if projected.chart == "south":
            logger.info(f"intersection {p.coords.tolist()} sits on the north pole; using the south chart")
        r1, r2 = qpd_variety_residual(rebit)
        variety_res = max(abs(r1), abs(r2))
        orbit_res = orbit_residual(projected, chi, family)
        if max(variety_res, orbit_res) >= tol:
            raise InvariantViolationError(
                f"intersection {p.coords.tolist()} fails audit: variety {variety_res:.3e}, orbit {orbit_res:.3e}")
        state = rebit.to_state()
        results.append(OrbitIntersection(
            point=projected,
            rebit=rebit,
            family=family,
            nash_max=qpd_nash_max_check(rebit, tol),
            payoffs=(expectation(state, h1, real=True), expectation(state, h2, real=True)),
            orbit_residual=orbit_res,
            variety_residual=variety_res,
        ))
    logger.info(f"orbit_variety_intersections(chi={chi}): {len(results)} points, "
                f"{sum(r.nash_max for r in results)} Nash-max")
    return sorted(results, key=lambda r: (r.point.chart, tuple(np.round(r.point.coords, 8))))


def nash_equilibrium_certificate(game: GameInstance, tol: float = settings.NASH_TOL,
                                 allow_local: bool = False) -> EquilibriumCertificate:
    """'아무것도 안 하기' 프로필이 내시 균형 ⇔ 초기 상태가 내시 최대 상태"""
    inst = game.instance
    state = game.initial_state
    residual = nash_residual(state, inst)
    single = all(len(block) == 1 for block in inst.blocks)
    if not single and not allow_local:
        raise ValueError("global certification needs single-qubit blocks; pass allow_local=True")

    if residual.max >= tol:
        return EquilibriumCertificate(False, residual, ())

    if single:
        optima = tuple(global_su2_check(state, h, block[0], mode="max", tol=tol)
                       for h, block in zip(inst.observables, inst.blocks))
        return EquilibriumCertificate(all(o.is_global for o in optima), residual, optima)

    local = classify_local(state, inst, nash_tol=tol)
    return EquilibriumCertificate(local.kind is LocalKind.LOCAL_MAX, residual, (), local.kind)


def game_report(game: GameInstance) -> dict:
    """항등 전략 하의 보수와 사후 승자 비교"""
    identity = [np.eye(2 ** len(block), dtype=complex) for block in game.instance.blocks]
    values = payoffs(game.initial_state, game, identity)
    return {"payoffs": [float(v) for v in values], "winners": winners(values)}
