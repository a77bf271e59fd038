from typing import Any, Dict, List

import pandas as pd

from app.config.run_config import RunConfig
from app.experiments.base import BaseExperiment
from app.experiments.variety_experiment import projected, trace_components
from app.quantum.qpd import (
    nash_max_margins,
    orbit_variety_intersections,
    qpd_instance,
    qpd_variety_residual,
)
from app.quantum.variety_solver import build_system, random_start_search, tilde_w_system


class QPDVarietyExperiment(BaseExperiment):
    """QPD 내시 다양체의 점 구름 (사영 좌표 + 내시 최대 표시)"""

    def __init__(self):
        super().__init__("qpd variety")

    def compute(self, config: RunConfig) -> Dict[str, Any]:
        system = tilde_w_system(build_system(qpd_instance(), real_symmetric=True))
        starts = random_start_search(system, config.n_starts, config.seed, tol=config.newton_tol,
                                     quotient_sign=False, dedup_tol=config.dedup_tol)
        traces = trace_components(system, starts, config)

        rows: List[Dict[str, Any]] = []
        for component, trace in enumerate(traces):
            for step, point in enumerate(trace.points):
                r1, r2 = qpd_variety_residual(point.coords)
                m1, m2 = nash_max_margins(point.coords)
                rows.append({
                    "component": component,
                    "step": step,
                    **projected(point.coords),
                    **{f"X{k}": float(c) for k, c in enumerate(point.coords)},
                    "residual": max(abs(r1), abs(r2)),
                    "on_max_set": bool(m1 <= config.tol and m2 <= config.tol),
                    "closed": trace.closed,
                })
        table = pd.DataFrame(rows)
        on_max = 0 if table.empty else int(table["on_max_set"].sum())
        return {
            "kind": "csv",
            "table": table,
            "audit_columns": {"residual": config.tol},
            "violations": [],
            "summary": f"{len(traces)} components, {len(table)} points, {on_max} on the Nash-max set",
        }


class QPDOrbitsExperiment(BaseExperiment):
    """고정 얽힘 궤도와 내시 다양체의 교점 보고서"""

    def __init__(self):
        super().__init__("qpd orbits")

    def compute(self, config: RunConfig) -> Dict[str, Any]:
        chi = float(config.chi)
        found = orbit_variety_intersections(chi, tol=config.tol, n_starts=config.n_starts, seed=config.seed,
                                            quotient_sign=config.quotient_sign)
        points = [{
            "x": p.point.x,
            "y": p.point.y,
            "z": p.point.z,
            "chart": p.point.chart,
            "state": [float(c) for c in p.rebit.X],
            "family": p.family.value,
            "nash_max": p.nash_max,
            "payoffs": [float(u) for u in p.payoffs],
            "orbit_residual": p.orbit_residual,
            "variety_residual": p.variety_residual,
            "residual": p.residual,
        } for p in found]
        n_max = sum(p["nash_max"] for p in points)
        return {
            "kind": "json",
            "report": {
                "chi": chi,
                "chi_squared": chi * chi,
                "quotient_sign": config.quotient_sign,
                "n_points": len(points),
                "n_nash_max": n_max,
                "points": points,
            },
            "audit_columns": {},
            "violations": [],
            "summary": f"chi={chi}: {len(points)} intersections, {n_max} Nash-max",
        }
