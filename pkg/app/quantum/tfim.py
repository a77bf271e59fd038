"""
주기 경계 횡자기장 이징 사슬 H = −Σ Z_i Z_{i+1} − g Σ X_i 의 자유 페르미온 열역학과 ED 교차검증.

두 패리티 섹터 σ = ± 는 운동량 집합 K_σ 와 부호 η_σ 를 가진다.
Z = Σ_σ Z_σ,  Z_σ = ½ e^{βΣ_{K_σ} ε_k} [Π(1 + e^{−2βε_k}) + η_σ Π(1 − e^{−2βε_k})].
모드 점유수는 섹터 조건부로 (occ + vac = 1) 저장하고, 상관함수는 섹터 가중치 Z_σ/Z 로 합친다.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit, logsumexp

from app.config import settings
from app.quantum.nash_conditions import NashInstance
from app.quantum.operator_core import (
    DenseOperator,
    DensityMatrix,
    HermitianTag,
    InteractionGraph,
    PAULI,
    StateVector,
    commutator,
    eigh_dense,
    hamiltonian,
    pauli_operator,
    star_hamiltonians,
)
from app.utils.exceptions import InvariantViolationError
from app.utils.logger import logger

FREE_FERMION_MAX_SITES = 24


class TFIMSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_sites: int = Field(ge=2, le=FREE_FERMION_MAX_SITES)
    g: float = Field(ge=0.0)
    beta: float = Field(default=0.0, ge=0.0)


@dataclass(frozen=True)
class MomentumSectors:
    k_plus: Tuple[float, ...]
    k_minus: Tuple[float, ...]
    eta_plus: int
    eta_minus: int

    def sector(self, sigma: int) -> Tuple[Tuple[float, ...], int]:
        return (self.k_plus, self.eta_plus) if sigma > 0 else (self.k_minus, self.eta_minus)


@dataclass(frozen=True)
class ModeData:
    k: float
    epsilon: float
    theta: float
    occ: float
    vac: float
    sector: int
    sector_weight: float


@dataclass(frozen=True)
class Correlators:
    x_avg: float
    zz_avg: float


def momentum_sectors(spec: TFIMSpec) -> MomentumSectors:
    n = spec.n_sites
    odd = [(2 * m + 1) * np.pi / n for m in range(n // 2)]
    even = [2 * m * np.pi / n for m in range(1, (n + 1) // 2)]
    if n % 2 == 0:
        k_plus = [s * k for k in odd for s in (1, -1)]
        k_minus = [0.0, np.pi] + [s * k for k in even for s in (1, -1)]
    else:
        k_plus = [s * k for k in odd if not np.isclose(k, np.pi) for s in (1, -1)] + [np.pi]
        k_minus = [0.0] + [s * k for k in even for s in (1, -1)]
    # g = 1 은 상자성 쪽 규약 (η_σ = σ)
    eta_minus = 1 if spec.g < 1.0 else -1
    return MomentumSectors(tuple(sorted(k_plus)), tuple(sorted(k_minus)), 1, eta_minus)


def mode_energy(k: np.ndarray, g: float) -> np.ndarray:
    return np.sqrt(np.maximum(1.0 + g * g - 2.0 * g * np.cos(k), 0.0))


def bogoliubov_angle(k: np.ndarray, g: float) -> np.ndarray:
    """sin θ = sin k / ε, cos θ = (g − cos k) / ε. k = 0 에서는 g ≥ 1 이면 0, g < 1 이면 π"""
    k = np.asarray(k, dtype=float)
    sin_k = np.where(np.isclose(np.abs(k), np.pi) | (k == 0.0), 0.0, np.sin(k))
    return np.arctan2(sin_k, g - np.cos(k))


def _log_bracket(x: np.ndarray, eta: int) -> float:
    """log[Π(1 + e^{−x}) + η Π(1 − e^{−x})], x = 2βε ≥ 0"""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.log(2.0) if eta > 0 else -np.inf
    a = np.exp(-x)
    log_plus = float(np.sum(np.log1p(a)))
    with np.errstate(divide="ignore"):
        s = float(np.sum(np.arctanh(np.minimum(a, 1.0))))
    # Π(1−a)/Π(1+a) = e^{−2s}
    if eta > 0:
        return log_plus + float(np.log1p(np.exp(-2.0 * s)))
    if s > 1e-150:
        return log_plus + float(np.log(-np.expm1(-2.0 * s)))
    return log_plus + np.log(2.0) + float(logsumexp(-x))


def _sector_log_weights(spec: TFIMSpec, sectors: MomentumSectors) -> Tuple[float, float]:
    logs = []
    for sigma in (1, -1):
        ks, eta = sectors.sector(sigma)
        eps = mode_energy(np.array(ks), spec.g)
        logs.append(spec.beta * float(np.sum(eps)) + np.log(0.5) + _log_bracket(2.0 * spec.beta * eps, eta))
    return logs[0], logs[1]


def log_partition_function(spec: TFIMSpec) -> float:
    return float(logsumexp(_sector_log_weights(spec, momentum_sectors(spec))))


def partition_function(spec: TFIMSpec) -> float:
    """Z(β). β·N 가 매우 크면 log_partition_function 을 쓸 것"""
    return float(np.exp(log_partition_function(spec)))


def mode_occupations(spec: TFIMSpec) -> List[ModeData]:
    sectors = momentum_sectors(spec)
    log_weights = _sector_log_weights(spec, sectors)
    log_z = logsumexp(log_weights)
    modes: List[ModeData] = []
    for sigma, log_w in zip((1, -1), log_weights):
        ks, eta = sectors.sector(sigma)
        k_arr = np.array(ks)
        eps = mode_energy(k_arr, spec.g)
        theta = bogoliubov_angle(k_arr, spec.g)
        x = 2.0 * spec.beta * eps
        weight = float(np.exp(log_w - log_z))
        for index in range(len(ks)):
            others = np.delete(x, index)
            # 섹터 조건부: occ ∝ e^{−x_k}[P'_+ − ηP'_−], vac ∝ [P'_+ + ηP'_−]
            log_occ = -x[index] + _log_bracket(others, -eta)
            log_vac = _log_bracket(others, eta)
            if np.isneginf(log_occ) and np.isneginf(log_vac):
                occ = 0.0
            else:
                occ = float(expit(log_occ - log_vac))
            modes.append(ModeData(
                k=float(k_arr[index]),
                epsilon=float(eps[index]),
                theta=float(theta[index]),
                occ=occ,
                vac=1.0 - occ,
                sector=sigma,
                sector_weight=weight,
            ))
    return modes


def correlators(spec: TFIMSpec) -> Correlators:
    """⟨X_i⟩_β, ⟨Z_i Z_{i+1}⟩_β"""
    n = spec.n_sites
    x_sum = 0.0
    zz_sum = 0.0
    for mode in mode_occupations(spec):
        cos2 = np.cos(mode.theta / 2.0) ** 2
        sin2 = np.sin(mode.theta / 2.0) ** 2
        paired = cos2 * mode.vac + sin2 * mode.occ
        x_sum += mode.sector_weight * paired
        zz_sum += mode.sector_weight * (
            -2.0 * np.cos(mode.k) * paired
            + np.sin(mode.k) * np.sin(mode.theta) * (mode.vac - mode.occ)
        )
    return Correlators(x_avg=float(-1.0 + 2.0 * x_sum / n), zz_avg=float(zz_sum / n))


def thermal_hessian(spec: TFIMSpec) -> np.ndarray:
    """diag(4⟨zz⟩, 4⟨zz⟩ + 4g⟨x⟩, 4g⟨x⟩)"""
    c = correlators(spec)
    return np.diag([4.0 * c.zz_avg, 4.0 * c.zz_avg + 4.0 * spec.g * c.x_avg, 4.0 * spec.g * c.x_avg])


def free_fermion_ground_energy(n_sites: int, g: float) -> float:
    sectors = momentum_sectors(TFIMSpec(n_sites=n_sites, g=g))
    return -float(np.sum(mode_energy(np.array(sectors.k_plus), g)))


# ---------------------------------------------------------------- ED 교차검증

def _check_dense(n_sites: int):
    if n_sites > settings.ED_MAX_QUBITS:
        raise ValueError(f"dense TFIM limited to N <= {settings.ED_MAX_QUBITS}, got {n_sites}")


def tfim_graph(n_sites: int, g: float) -> InteractionGraph:
    """고리 결합 −ZZ, 현장 항 −gX. N = 2 에서는 두 결합이 같은 쌍에 겹친다"""
    zz = DenseOperator(-np.kron(PAULI["Z"], PAULI["Z"]), HermitianTag.HERMITIAN)
    edges = {}
    for i in range(n_sites):
        key = (i, (i + 1) % n_sites)
        ordered = (min(key), max(key))
        edges[ordered] = edges[ordered] + zz if ordered in edges else zz
    onsite = {i: DenseOperator(-g * PAULI["X"], HermitianTag.HERMITIAN) for i in range(n_sites)}
    return InteractionGraph(n_sites, edges, onsite)


@lru_cache(maxsize=None)
def tfim_hamiltonian(n_sites: int, g: float) -> DenseOperator:
    _check_dense(n_sites)
    return hamiltonian(tfim_graph(n_sites, g))


@lru_cache(maxsize=None)
def ed_spectrum(n_sites: int, g: float) -> Tuple[np.ndarray, np.ndarray]:
    energies, vectors = eigh_dense(tfim_hamiltonian(n_sites, g))
    energies.setflags(write=False)
    vectors.setflags(write=False)
    return energies, vectors


def ed_ground_state(n_sites: int, g: float) -> Tuple[float, StateVector]:
    energies, vectors = ed_spectrum(n_sites, g)
    return float(energies[0]), StateVector.from_amplitudes(vectors[:, 0])


def ed_log_partition_function(spec: TFIMSpec) -> float:
    energies, _ = ed_spectrum(spec.n_sites, spec.g)
    return float(logsumexp(-spec.beta * energies))


def ed_partition_function(spec: TFIMSpec) -> float:
    return float(np.exp(ed_log_partition_function(spec)))


def ed_thermal_state(spec: TFIMSpec) -> DensityMatrix:
    energies, vectors = ed_spectrum(spec.n_sites, spec.g)
    return DensityMatrix.from_spectrum(energies, vectors, spec.beta)


def _thermal_average(spec: TFIMSpec, op: np.ndarray) -> float:
    """Σ_n e^{−βE_n} ⟨n|O|n⟩ / Z. 축퇴 준위는 합 자체가 기저에 무관"""
    energies, vectors = ed_spectrum(spec.n_sites, spec.g)
    weights = np.exp(-spec.beta * (energies - energies[0]))
    weights /= weights.sum()
    diagonal = np.real(np.einsum("in,in->n", vectors.conj(), op @ vectors))
    return float(weights @ diagonal)


def ed_correlators(spec: TFIMSpec) -> Correlators:
    n = spec.n_sites
    x0 = pauli_operator("X", 0, n).entries
    zz = (pauli_operator("Z", 0, n) @ pauli_operator("Z", 1, n)).entries
    return Correlators(x_avg=_thermal_average(spec, x0), zz_avg=_thermal_average(spec, zz))


def star_instance(spec: TFIMSpec, sites: Optional[Sequence[int]] = None) -> NashInstance:
    """ĥ_i = −½Z_i(Z_{i−1} + Z_{i+1}) − gX_i, 블록 = 단일 큐비트, 생성자 (iX, iY, iZ)"""
    _check_dense(spec.n_sites)
    n = spec.n_sites
    if sites is None:
        stars = star_hamiltonians(tfim_graph(n, spec.g), onsite_weight=1.0)
        return NashInstance.single_qubit(stars, n)
    sites = list(sites)
    return NashInstance.single_qubit([_star_term(n, spec.g, site) for site in sites], n, sites)


def _star_term(n_sites: int, g: float, site: int) -> DenseOperator:
    if not 0 <= site < n_sites:
        raise IndexError(f"site {site} out of range for N={n_sites}")
    z = lambda j: pauli_operator("Z", j % n_sites, n_sites).entries
    entries = -0.5 * z(site) @ (z(site - 1) + z(site + 1)) - g * pauli_operator("X", site, n_sites).entries
    return DenseOperator(entries, HermitianTag.HERMITIAN)


def commutator_table(spec: TFIMSpec, site: int) -> Tuple[DenseOperator, DenseOperator, DenseOperator]:
    """[ĥ_i, X_i], [ĥ_i, Y_i], [ĥ_i, Z_i] 와 닫힌 형태 비교"""
    _check_dense(spec.n_sites)
    n, g = spec.n_sites, spec.g
    h = _star_term(n, g, site)
    x, y, z = (pauli_operator(letter, site, n) for letter in ("X", "Y", "Z"))
    neighbours = pauli_operator("Z", (site - 1) % n, n) + pauli_operator("Z", (site + 1) % n, n)
    table = (commutator(h, x), commutator(h, y), commutator(h, z))
    closed = (
        (y @ neighbours).scaled(-1j),
        z.scaled(-2j * g) + (x @ neighbours).scaled(1j),
        y.scaled(2j * g),
    )
    for label, got, expected in zip("XYZ", table, closed):
        error = float(np.max(np.abs(got.entries - expected.entries)))
        if error >= 1e-12:
            raise InvariantViolationError(f"[h_{site}, {label}] differs from closed form by {error:.3e}")
    logger.debug(f"commutator_table verified at site {site} (N={n}, g={g})")
    return table
