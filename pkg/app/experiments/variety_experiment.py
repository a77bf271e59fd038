from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from app.config import settings
from app.config.run_config import RunConfig
from app.experiments.base import BaseExperiment
from app.quantum.nash_conditions import NashInstance, dimension_counts
from app.quantum.operator_core import random_hermitian, spawn_seeds
from app.quantum.variety_solver import (
    QuadricSystem,
    TraceResult,
    VarietyPoint,
    build_system,
    estimate_local_dimension,
    random_start_search,
    stereographic_any_chart,
    tilde_w_system,
    trace_component,
)
from app.utils.exceptions import TangentDimensionError
from app.utils.logger import logger


def random_instance(n_sites: int, seed: int, real_symmetric: bool) -> NashInstance:
    """큐비트마다 한 명, 관측량은 전체 공간의 무작위 에르미트 행렬"""
    seeds = spawn_seeds(seed, n_sites)
    observables = [random_hermitian(2 ** n_sites, s, real_symmetric=real_symmetric) for s in seeds]
    return NashInstance.single_qubit(observables, n_sites)


def instance_system(inst: NashInstance, real_symmetric: bool) -> Tuple[QuadricSystem, QuadricSystem]:
    """(탐색할 계, 감사용 전체 계). 실대칭 2큐비트는 W̃' 에서 탐색한다"""
    full = build_system(inst, real_symmetric=real_symmetric)
    if real_symmetric and inst.n_qubits == 2:
        return tilde_w_system(full), full
    return full, full


def full_residual(search: QuadricSystem, full: QuadricSystem, point: VarietyPoint) -> float:
    if search is full:
        return point.residual
    # W̃' 점 x 는 임의의 λ 에 대해 (x, λx) 로 여섯 식을 만족해야 한다
    v = np.concatenate([point.coords, 0.5 * point.coords])
    return full.residual(v)


def projected(coords: np.ndarray) -> Dict[str, Any]:
    """x, y, z 와 사용한 차트 (북극점만 남쪽 차트)"""
    xyz, chart = stereographic_any_chart(coords)
    return {"x": float(xyz[0]), "y": float(xyz[1]), "z": float(xyz[2]), "chart": chart}


class VarietySampleExperiment(BaseExperiment):
    """무작위 인스턴스의 다양체 점 표본과 국소 차원 추정"""

    def __init__(self):
        super().__init__("variety sample")

    def _sample(self, n_sites: int, seed: int, config: RunConfig) -> List[Dict[str, Any]]:
        inst = random_instance(n_sites, seed, config.real_symmetric)
        search, full = instance_system(inst, config.real_symmetric)
        points = random_start_search(search, config.n_starts, seed, tol=config.newton_tol,
                                     quotient_sign=True, dedup_tol=config.dedup_tol)
        if search is full:
            expected = dimension_counts(inst.dim, [3] * n_sites).dim_V_prime
        else:
            expected = 1
        rows = []
        for index, point in enumerate(points):
            frame = estimate_local_dimension(search, point)
            row = {
                "n_sites": n_sites,
                "instance_seed": seed,
                "point": index,
                "residual": point.residual,
                "full_residual": full_residual(search, full, point),
                "est_dim": frame.est_dim,
                "expected_dim": expected,
            }
            if search.ambient_dim == 4:
                row.update(projected(point.coords))
            row.update({f"c{k}": float(c) for k, c in enumerate(point.coords)})
            rows.append(row)
        if not points:
            logger.warning(f"variety sample: no point found for seed {seed} (N={n_sites})")
        return rows

    def compute(self, config: RunConfig) -> Dict[str, Any]:
        sizes = config.dense_sites_or([2])
        n_instances = config.n_instances or 1
        jobs = [(n, s) for n in sizes for s in spawn_seeds(config.seed + n, n_instances)]
        with ThreadPoolExecutor(max_workers=settings.THREAD_COUNT) as executor:
            batches = list(executor.map(lambda job: self._sample(job[0], job[1], config), jobs))
        table = pd.DataFrame([row for batch in batches for row in batch])

        mismatched = 0 if table.empty else int((table["est_dim"] != table["expected_dim"]).sum())
        if mismatched:
            logger.warning(f"variety sample: {mismatched} points with est_dim != expected_dim")
        return {
            "kind": "csv",
            "table": table,
            "audit_columns": {"residual": config.newton_tol, "full_residual": config.tol},
            "violations": [],
            "summary": f"{len(table)} points over {len(jobs)} instances, {mismatched} dimension mismatches",
        }


def covered(point: VarietyPoint, traces: List[TraceResult], radius: float) -> bool:
    return any(np.min(np.linalg.norm(np.array([p.coords for p in t.points]) - point.coords, axis=1)) < radius
               for t in traces)


def trace_components(search: QuadricSystem, points: List[VarietyPoint], config: RunConfig) -> List[TraceResult]:
    """아직 추적되지 않은 표본점에서 차례로 성분을 추적"""
    traces: List[TraceResult] = []
    for point in points:
        if len(traces) >= config.max_components:
            break
        if covered(point, traces, 2 * config.step):
            continue
        try:
            traces.append(trace_component(search, point, step=config.step, max_steps=config.max_steps,
                                          tol=config.newton_tol))
        except TangentDimensionError as e:
            logger.info(f"skipping trace start {point.coords.tolist()}: {e}")
    return traces


class VarietyTraceExperiment(BaseExperiment):
    """실대칭 2큐비트 인스턴스의 W̃' 성분 추적"""

    def __init__(self):
        super().__init__("variety trace")

    def _trace(self, seed: int, config: RunConfig) -> List[Dict[str, Any]]:
        inst = random_instance(2, seed, real_symmetric=True)
        search, full = instance_system(inst, real_symmetric=True)
        points = random_start_search(search, config.n_starts, seed, tol=config.newton_tol,
                                     quotient_sign=False, dedup_tol=config.dedup_tol)
        rows = []
        for component, trace in enumerate(trace_components(search, points, config)):
            for step, point in enumerate(trace.points):
                rows.append({
                    "instance_seed": seed,
                    "component": component,
                    "step": step,
                    **projected(point.coords),
                    **{f"X{k}": float(c) for k, c in enumerate(point.coords)},
                    "residual": point.residual,
                    "full_residual": full_residual(search, full, point),
                    "closed": trace.closed,
                })
        return rows

    def compute(self, config: RunConfig) -> Dict[str, Any]:
        seeds = spawn_seeds(config.seed, config.n_instances or 1)
        with ThreadPoolExecutor(max_workers=settings.THREAD_COUNT) as executor:
            batches = list(executor.map(lambda s: self._trace(s, config), seeds))
        table = pd.DataFrame([row for batch in batches for row in batch])
        if table.empty:
            closed_instances = 0
        else:
            closed_instances = int(table.groupby("instance_seed")["closed"].all().sum())
        return {
            "kind": "csv",
            "table": table,
            "audit_columns": {"residual": config.newton_tol, "full_residual": config.tol},
            "violations": [],
            "summary": f"{closed_instances}/{len(seeds)} instances with all traced components closed",
        }
