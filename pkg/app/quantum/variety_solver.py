"""
내시 조건이 정의하는 실 이차 다항식 계의 풀이기.

상태 ψ = x + iy 를 v = (x, y) ∈ ℝ^{2d} 로 두면 각 조건 ⟨ψ|[ĥ_i, Â_iα]|ψ⟩ = 0 은
동차 2차식 vᵀQv = 0 이 된다. 무작위 시작점 Gauss–Newton 으로 점을 찾고,
야코비안 영공간으로 국소 차원을 추정하며, 1차원 성분은 예측-보정으로 추적한다.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import settings
from app.quantum.nash_conditions import NashInstance
from app.quantum.operator_core import commutator
from app.utils.exceptions import (
    InvariantViolationError,
    ProjectionPoleError,
    ResidualTooLargeError,
    SystemKindError,
    TangentDimensionError,
)
from app.utils.logger import logger

STRUCTURE_TOL = 1e-12


class GaugeKind(str, Enum):
    PHASE = "phase"  # 복소 좌표: (x, y) → (cos·x − sin·y, sin·x + cos·y)
    SIGN = "sign"    # 실 좌표: v → −v


class ChartTag(str, Enum):
    SPHERE = "sphere"
    STEREOGRAPHIC = "stereographic"


@dataclass(frozen=True)
class QuadricSystem:
    ambient_dim: int
    forms: Tuple[np.ndarray, ...]
    gauge: GaugeKind
    linear_forms: Tuple[np.ndarray, ...] = ()
    labels: Tuple[str, ...] = ()
    real_symmetric: bool = False
    # 실대칭 2큐비트 경우의 B_iY (대칭), B_iX/B_iZ (반대칭) 행렬
    symmetric_blocks: Tuple[np.ndarray, ...] = ()
    antisymmetric_blocks: Tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        forms = []
        for q in self.forms:
            q = np.asarray(q, dtype=float)
            if q.shape != (self.ambient_dim, self.ambient_dim):
                raise ValueError(f"form of shape {q.shape} does not match ambient_dim {self.ambient_dim}")
            if np.max(np.abs(q - q.T)) >= STRUCTURE_TOL * max(1.0, np.max(np.abs(q))):
                raise ValueError("quadratic forms must be symmetric")
            forms.append(0.5 * (q + q.T))
        linear = [np.asarray(a, dtype=float).reshape(self.ambient_dim) for a in self.linear_forms]
        object.__setattr__(self, "forms", tuple(forms))
        object.__setattr__(self, "linear_forms", tuple(linear))
        object.__setattr__(self, "gauge", GaugeKind(self.gauge))

    @property
    def gauge_dim(self) -> int:
        return 1 if self.gauge is GaugeKind.PHASE else 0

    @property
    def n_equations(self) -> int:
        return len(self.forms) + len(self.linear_forms)

    def values(self, v: np.ndarray) -> np.ndarray:
        quad = [v @ q @ v for q in self.forms]
        lin = [a @ v for a in self.linear_forms]
        return np.array(quad + lin, dtype=float)

    def residual(self, v: np.ndarray) -> float:
        """정규화된 v 에서 max_c |vᵀQ_c v| (선형 조건 포함)"""
        u = np.asarray(v, dtype=float) / np.linalg.norm(v)
        vals = self.values(u)
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    def gradients(self, v: np.ndarray) -> np.ndarray:
        rows = [2.0 * (q @ v) for q in self.forms] + list(self.linear_forms)
        return np.array(rows, dtype=float).reshape(-1, self.ambient_dim)

    def gauge_directions(self, v: np.ndarray) -> List[np.ndarray]:
        if self.gauge is GaugeKind.SIGN:
            return []
        d = self.ambient_dim // 2
        x, y = v[:d], v[d:]
        return [np.concatenate([-y, x])]


@dataclass(frozen=True)
class VarietyPoint:
    coords: np.ndarray
    residual: float
    chart_tag: ChartTag = ChartTag.SPHERE
    iterations: int = 0

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if self.chart_tag is ChartTag.SPHERE and abs(np.linalg.norm(coords) - 1.0) >= 1e-12:
            raise ValueError("variety point must have unit norm")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True)
class NewtonFailure:
    reason: str
    iterations: int
    residual: float


@dataclass(frozen=True)
class TangentFrame:
    base: VarietyPoint
    basis: Tuple[np.ndarray, ...]
    est_dim: int


@dataclass(frozen=True)
class TraceResult:
    points: Tuple[VarietyPoint, ...]
    closed: bool
    diagnostic: Optional[str] = None


def _phase_form(c: np.ndarray) -> np.ndarray:
    """에르미트 C 에 대해 Re ψ†Cψ = vᵀQv"""
    re, im = np.real(c), np.imag(c)
    q = np.block([[re, -im], [im, re]])
    return 0.5 * (q + q.T)


def build_system(inst: NashInstance, real_symmetric: bool = False) -> QuadricSystem:
    d = inst.dim
    forms, labels, sym_blocks, anti_blocks = [], [], [], []
    if real_symmetric:
        for i, h in enumerate(inst.observables):
            if np.max(np.abs(np.imag(h.entries))) >= STRUCTURE_TOL:
                raise SystemKindError(f"observable {i} has imaginary entries; real_symmetric requires real ĥ_i")

    for i, (h, gens) in enumerate(zip(inst.observables, inst.generators)):
        for alpha, a in enumerate(gens):
            c = commutator(h, a).entries
            label = f"block{i}:gen{alpha}"
            if not real_symmetric:
                forms.append(_phase_form(c))
                labels.append(label)
                continue
            scale = max(1.0, np.max(np.abs(c)))
            # 0 인 교환자 (대각 ĥ 와 iZ) 는 반대칭 쪽으로 보낸다
            if np.max(np.abs(np.real(c))) < STRUCTURE_TOL * scale:
                # [ĥ, iX], [ĥ, iZ] 형: C = iB, B 실반대칭, xᵀBy
                b = np.imag(c)
                if np.max(np.abs(b + b.T)) >= STRUCTURE_TOL * scale:
                    raise SystemKindError(f"{label}: expected a real antisymmetric matrix")
                zero = np.zeros_like(b)
                forms.append(0.5 * np.block([[zero, b], [b.T, zero]]))
                anti_blocks.append(b)
                labels.append(label + ":anti")
            elif np.max(np.abs(np.imag(c))) < STRUCTURE_TOL * scale:
                # [ĥ, iY] 형: 실대칭 B, xᵀBx + yᵀBy
                b = np.real(c)
                if np.max(np.abs(b - b.T)) >= STRUCTURE_TOL * scale:
                    raise SystemKindError(f"{label}: expected a real symmetric matrix")
                zero = np.zeros_like(b)
                forms.append(np.block([[b, zero], [zero, b]]))
                sym_blocks.append(b)
                labels.append(label + ":sym")
            else:
                raise SystemKindError(f"{label}: commutator is neither real nor imaginary")

    logger.debug(f"build_system: {len(forms)} forms on R^{2 * d} (real_symmetric={real_symmetric})")
    return QuadricSystem(
        ambient_dim=2 * d,
        forms=tuple(forms),
        gauge=GaugeKind.PHASE,
        labels=tuple(labels),
        real_symmetric=real_symmetric,
        symmetric_blocks=tuple(sym_blocks),
        antisymmetric_blocks=tuple(anti_blocks),
    )


def tilde_w_system(sys: QuadricSystem) -> QuadricSystem:
    """W̃' = {x ∈ S³ : xᵀB_iY x = 0}: 실대칭 2큐비트 계에서 y = 0 단면"""
    if not sys.real_symmetric or sys.ambient_dim != 8:
        raise SystemKindError("tilde_w_system needs a real-symmetric two-qubit system")
    return QuadricSystem(
        ambient_dim=4,
        forms=sys.symmetric_blocks,
        gauge=GaugeKind.SIGN,
        labels=tuple(f"B{i}Y" for i in range(len(sys.symmetric_blocks))),
    )


def _full_residual(sys: QuadricSystem, v: np.ndarray,
                   hyperplane: Optional[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = [sys.values(v), [v @ v - 1.0]]
    if hyperplane is not None:
        normal, anchor = hyperplane
        parts.append([normal @ (v - anchor)])
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def _jacobian(sys: QuadricSystem, v: np.ndarray,
              hyperplane: Optional[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    rows = [sys.gradients(v), (2.0 * v)[None, :]]
    if hyperplane is not None:
        rows.append(hyperplane[0][None, :])
    return np.vstack(rows)


def newton_solve(sys: QuadricSystem, start: Sequence[float], tol: float = settings.NEWTON_TOL,
                 max_iter: int = settings.NEWTON_MAX_ITER,
                 hyperplane: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                 rank_tol: float = 1e-12) -> Union[VarietyPoint, NewtonFailure]:
    """
    단위 노름 조건을 덧붙인 잔차에 대한 Gauss–Newton.

    Args:
        hyperplane: (normal, anchor) 이면 normal·(v − anchor) = 0 을 추가 (추적 보정 단계)
    Returns:
        성공 시 재정규화된 VarietyPoint, 아니면 NewtonFailure
    """
    v = np.asarray(start, dtype=float).copy()
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("start vector must be nonzero")
    v /= norm

    def converged(point: np.ndarray) -> Optional[VarietyPoint]:
        unit = point / np.linalg.norm(point)
        residual = sys.residual(unit)
        if residual >= tol:
            return None
        if hyperplane is not None and abs(hyperplane[0] @ (unit - hyperplane[1])) >= max(tol, 1e-9):
            return None
        return VarietyPoint(unit, residual)

    hit = converged(v)
    if hit is not None:
        return hit

    expected_rank = min(sys.n_equations + 1 + (hyperplane is not None), sys.ambient_dim - sys.gauge_dim)
    for iteration in range(1, max_iter + 1):
        f = _full_residual(sys, v, hyperplane)
        jac = _jacobian(sys, v, hyperplane)
        singular = np.linalg.svd(jac, compute_uv=False)
        rank = int(np.sum(singular > rank_tol * singular[0])) if singular.size and singular[0] > 0 else 0
        if rank == 0:
            return NewtonFailure("jacobian rank collapse", iteration, sys.residual(v))
        step = np.linalg.lstsq(jac, -f, rcond=rank_tol)[0]

        # Armijo 감쇠: 잔차 노름이 줄어들 때까지 0.5배
        f_norm = np.linalg.norm(f)
        t = 1.0
        while t > 2.0 ** -30:
            trial = v + t * step
            if np.linalg.norm(_full_residual(sys, trial, hyperplane)) <= (1.0 - 1e-4 * t) * f_norm:
                break
            t *= 0.5
        else:
            hit = converged(v)
            if hit is not None:
                return VarietyPoint(hit.coords, hit.residual, iterations=iteration)
            reason = "jacobian rank collapse" if rank < expected_rank else "line search stalled"
            return NewtonFailure(reason, iteration, sys.residual(v))
        v = trial

        hit = converged(v)
        if hit is not None:
            return VarietyPoint(hit.coords, hit.residual, iterations=iteration)

    return NewtonFailure("no convergence", max_iter, sys.residual(v))


def gauge_distance(u: np.ndarray, w: np.ndarray, gauge: GaugeKind, quotient_sign: bool = True) -> float:
    """게이지 정렬 후 거리 (작은 각도에서 각거리와 같다)"""
    if gauge is GaugeKind.PHASE:
        d = u.shape[0] // 2
        psi_u = u[:d] + 1j * u[d:]
        psi_w = w[:d] + 1j * w[d:]
        overlap = np.vdot(psi_u, psi_w)
        if abs(overlap) > 0:
            psi_w = psi_w * np.conj(overlap) / abs(overlap)
        return float(np.linalg.norm(psi_u - psi_w))
    if quotient_sign:
        return float(min(np.linalg.norm(u - w), np.linalg.norm(u + w)))
    return float(np.linalg.norm(u - w))


def canonical_coords(v: np.ndarray, gauge: GaugeKind, quotient_sign: bool = True) -> np.ndarray:
    """게이지 대표원: 절댓값이 가장 큰 성분을 양의 실수로"""
    if gauge is GaugeKind.PHASE:
        d = v.shape[0] // 2
        psi = v[:d] + 1j * v[d:]
        pivot = int(np.argmax(np.round(np.abs(psi), 9)))
        psi = psi * np.conj(psi[pivot]) / abs(psi[pivot])
        return np.concatenate([psi.real, psi.imag])
    if quotient_sign:
        pivot = int(np.argmax(np.round(np.abs(v), 9)))
        return v if v[pivot] >= 0 else -v
    return v


def deduplicate(points: Sequence[VarietyPoint], gauge: GaugeKind, quotient_sign: bool = True,
                threshold: float = settings.DEDUP_TOL) -> List[VarietyPoint]:
    unique: List[VarietyPoint] = []
    for point in points:
        if all(gauge_distance(point.coords, kept.coords, gauge, quotient_sign) >= threshold for kept in unique):
            unique.append(point)
    canon = [VarietyPoint(canonical_coords(p.coords, gauge, quotient_sign), p.residual, p.chart_tag, p.iterations)
             for p in unique]
    return sorted(canon, key=lambda p: tuple(np.round(p.coords, 8)))


def random_start_search(sys: QuadricSystem, n_starts: int, seed: int, tol: float = settings.NEWTON_TOL,
                        max_iter: int = settings.NEWTON_MAX_ITER, quotient_sign: bool = True,
                        dedup_tol: float = settings.DEDUP_TOL) -> List[VarietyPoint]:
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    rng = np.random.default_rng(seed)
    starts = rng.normal(size=(n_starts, sys.ambient_dim))

    with ThreadPoolExecutor(max_workers=settings.THREAD_COUNT) as executor:
        results = list(executor.map(lambda s: newton_solve(sys, s, tol, max_iter), starts))

    found = [r for r in results if isinstance(r, VarietyPoint)]
    failures = len(results) - len(found)
    unique = deduplicate(found, sys.gauge, quotient_sign, dedup_tol)
    logger.info(f"random_start_search: {len(found)}/{n_starts} converged, {failures} failed, "
                f"{len(unique)} distinct")
    return unique


def estimate_local_dimension(sys: QuadricSystem, p: VarietyPoint, rank_tol: float = 1e-7) -> TangentFrame:
    """구면 위 제약 야코비안의 영공간 차원 − 게이지 차원"""
    if p.residual >= 1e-8:
        raise ResidualTooLargeError(f"point residual {p.residual:.3e} too large for a tangent estimate")
    v = p.coords
    jac = np.vstack([sys.gradients(v), (2.0 * v)[None, :]])
    _, singular, vt = np.linalg.svd(jac, full_matrices=True)
    rank = int(np.sum(singular > rank_tol * singular[0])) if singular.size else 0
    null = vt[rank:].T

    gauge = [g / np.linalg.norm(g) for g in sys.gauge_directions(v)]
    for g in gauge:
        null = null - np.outer(g, g @ null)
    basis: Tuple[np.ndarray, ...] = ()
    if null.size:
        u, s, _ = np.linalg.svd(null, full_matrices=False)
        keep = int(np.sum(s > 0.5))
        basis = tuple(u[:, k] for k in range(keep))
    return TangentFrame(base=p, basis=basis, est_dim=len(basis))


def _segment_distance(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    direction = b - a
    length = direction @ direction
    t = 0.0 if length == 0 else float(np.clip((point - a) @ direction / length, 0.0, 1.0))
    return float(np.linalg.norm(point - (a + t * direction)))


def trace_component(sys: QuadricSystem, p: VarietyPoint, step: float = settings.TRACE_STEP,
                    max_steps: int = settings.TRACE_MAX_STEPS, tol: float = settings.NEWTON_TOL) -> TraceResult:
    """
    1차원 성분 예측-보정 추적.

    예측: 접선 방향으로 step 만큼 이동, 보정: 접선에 수직인 초평면 위 Newton.
    시작점에서 step/2 이내로 돌아오고 방향 코사인 > 0.9 이면 닫힌 고리로 본다.
    """
    frame = estimate_local_dimension(sys, p)
    if frame.est_dim != 1:
        raise TangentDimensionError(f"trace_component needs est_dim 1, got {frame.est_dim}")

    start = p.coords
    initial = frame.basis[0]
    direction = initial
    points = [p]
    current = p
    for index in range(1, max_steps + 1):
        predicted = current.coords + step * direction
        corrected = newton_solve(sys, predicted, tol=tol, hyperplane=(direction, predicted))
        if isinstance(corrected, NewtonFailure):
            message = f"corrector failed at step {index}: {corrected.reason}"
            logger.warning(message)
            return TraceResult(tuple(points), closed=False, diagnostic=message)

        tangent = estimate_local_dimension(sys, corrected)
        if tangent.est_dim != 1:
            message = f"tangent dimension {tangent.est_dim} at step {index}"
            logger.warning(message)
            return TraceResult(tuple(points + [corrected]), closed=False, diagnostic=message)
        new_direction = tangent.basis[0]
        if new_direction @ direction < 0:
            new_direction = -new_direction

        points.append(corrected)
        if index >= 3 and _segment_distance(start, current.coords, corrected.coords) < step / 2 \
                and new_direction @ initial > 0.9:
            logger.debug(f"trace closed after {index} steps")
            return TraceResult(tuple(points), closed=True)
        current, direction = corrected, new_direction

    return TraceResult(tuple(points), closed=False, diagnostic=f"max_steps={max_steps} reached")


def tilde_v_membership(x: Sequence[float], lam: float, sys: QuadricSystem, tol: float = 1e-9) -> bool:
    """
    x 가 xᵀB_iY x = 0 (i = 1, 2) 를 만족하는지.

    참이면 (x, λx) 에서 여섯 식 전체 잔차도 0 이어야 한다 (B_iX, B_iZ 식은 자동으로 소거).
    """
    if not sys.real_symmetric or sys.ambient_dim != 8:
        raise SystemKindError("tilde_v_membership needs a real-symmetric two-qubit system")
    x = np.asarray(x, dtype=float)
    scale = x @ x
    if not all(abs(x @ b @ x) < tol * scale for b in sys.symmetric_blocks):
        return False
    v = np.concatenate([x, lam * x])
    full = np.max(np.abs(sys.values(v)))
    if full >= tol * (v @ v):
        raise InvariantViolationError(f"six-form residual {full:.3e} does not vanish on (x, λx)")
    return True


def stereographic(p: Sequence[float], chart: str = "north") -> np.ndarray:
    """x_i = X_i / (1 + X_0) (north), x_i = X_i / (1 − X_0) (south)"""
    p = np.asarray(p, dtype=float)
    if abs(np.linalg.norm(p) - 1.0) >= 1e-12:
        raise ValueError("stereographic projection needs a unit 4-vector")
    sign = 1.0 if chart == "north" else -1.0
    denominator = 1.0 + sign * p[0]
    if abs(denominator) < 1e-12:
        raise ProjectionPoleError(f"point {p.tolist()} sits on the projection pole of the {chart} chart")
    return p[1:] / denominator


def stereographic_any_chart(p: Sequence[float]) -> Tuple[np.ndarray, str]:
    """북쪽 차트로 사영하고, 북극점 (X_0 = −1) 만 남쪽 차트로 보낸다"""
    try:
        return stereographic(p, "north"), "north"
    except ProjectionPoleError:
        return stereographic(p, "south"), "south"


def inverse_stereographic(xyz: Sequence[float], chart: str = "north") -> np.ndarray:
    """X_i = 2x_i / (1 + r²), X_0 = ±(1 − r²) / (1 + r²)"""
    xyz = np.asarray(xyz, dtype=float)
    r2 = float(xyz @ xyz)
    sign = 1.0 if chart == "north" else -1.0
    return np.concatenate([[sign * (1.0 - r2) / (1.0 + r2)], 2.0 * xyz / (1.0 + r2)])
