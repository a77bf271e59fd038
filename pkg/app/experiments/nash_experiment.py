import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

from app.config import settings
from app.config.run_config import RunConfig
from app.experiments.base import BaseExperiment
from app.quantum.nash_conditions import (
    NashInstance,
    classify_local,
    global_su2_check,
    is_epsilon_nash,
    nash_residual,
    nash_residuals_batch,
    optimal_product_state,
)
from app.quantum.operator_core import (
    StateVector,
    diagonalize,
    hamiltonian,
    random_local_observables,
    random_state,
    random_two_local_graph,
    spawn_seeds,
    star_hamiltonians,
)
from app.quantum.qpd import (
    RebitFailure,
    game_report,
    qpd_game,
    qpd_instance,
    qpd_nash_max_check,
    qpd_variety_residual,
    rebit_canonicalize,
)
from app.quantum.tfim import TFIMSpec, ed_ground_state, star_instance, tfim_graph
from app.utils.exceptions import ConfigError, SolverFailureError
from app.utils.logger import logger

EIGENSTATE_TOL = 1e-8
UBIQUITY_FRACTION = 0.99


def load_state(path: str) -> StateVector:
    """{"real": [...], "imag": [...]} 형식의 상태 파일"""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        real = np.asarray(data["real"], dtype=float)
        imag = np.asarray(data.get("imag", np.zeros_like(real)), dtype=float)
    except (OSError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"cannot read state file {path}: {e}") from e
    if real.shape != imag.shape or real.size < 2 or real.size & (real.size - 1):
        raise ConfigError(f"state file {path} must hold 2^N real and imaginary parts")
    if real.size > 2 ** settings.ED_MAX_QUBITS:
        raise ConfigError(f"state file {path} exceeds {settings.ED_MAX_QUBITS} qubits")
    try:
        return StateVector.from_amplitudes(real + 1j * imag)
    except ValueError as e:
        raise ConfigError(f"state file {path} does not hold a valid state: {e}") from e


class NashCheckExperiment(BaseExperiment):
    """상태 파일에 대한 잔차, 국소 분류, 블록별 전역 검사 보고서"""

    def __init__(self):
        super().__init__("nash check")

    @staticmethod
    def _instance(config: RunConfig, n_qubits: int) -> NashInstance:
        if config.instance == "qpd":
            if n_qubits != 2:
                raise ConfigError("the qpd instance needs a two-qubit state")
            return qpd_instance()
        return star_instance(TFIMSpec(n_sites=n_qubits, g=config.g_or([1.0])[0]))

    def compute(self, config: RunConfig) -> Dict[str, Any]:
        state = load_state(config.state_path)
        n_qubits = int(np.log2(state.dim))
        inst = self._instance(config, n_qubits)
        residual = nash_residual(state, inst)
        is_nash = residual.max < config.tol
        mode = "max" if config.instance == "qpd" else "min"

        report: Dict[str, Any] = {
            "instance": config.instance,
            "n_qubits": n_qubits,
            "nash_residual": {"per_block": list(residual.per_block), "max": residual.max},
            "is_nash": is_nash,
            "mode": mode,
        }
        if is_nash:
            local = classify_local(state, inst, nash_tol=config.tol)
            report["classification"] = local.kind.value
            report["eigenvalues"] = [list(values) for values in local.eigenvalue_lists]
            checks = [global_su2_check(state, h, block[0], mode=mode, tol=config.tol)
                      for h, block in zip(inst.observables, inst.blocks)]
            report["global"] = [{
                "qubit": block[0],
                "optimal_value": c.optimal_value,
                "current_value": c.current_value,
                "is_global": c.is_global,
            } for c, block in zip(checks, inst.blocks)]
            report[f"nash_{mode}imum"] = all(c.is_global for c in checks)

        if config.instance == "qpd":
            rebit, phases = rebit_canonicalize(state, config.tol)
            report["torus_phases"] = list(phases)
            report.update(game_report(qpd_game(state)))
            if isinstance(rebit, RebitFailure):
                report["rebit"] = {"reason": rebit.reason, "irreducible_imaginary": rebit.irreducible_imaginary}
            else:
                report["rebit"] = {"X": [float(c) for c in rebit.X],
                                   "variety": list(qpd_variety_residual(rebit))}
                if is_nash:
                    report["rebit"]["nash_max_inequalities"] = qpd_nash_max_check(rebit, config.tol)
        return {
            "kind": "json",
            "report": report,
            "audit_columns": {},
            "violations": [],
            "summary": f"residual max {residual.max:.3e} ({'Nash' if is_nash else 'not Nash'})",
        }


class HaarUbiquityExperiment(BaseExperiment):
    """하르 무작위 상태가 2^{-N/4}-근사 내시 상태인 비율"""

    def __init__(self):
        super().__init__("haar ubiquity")

    def compute(self, config: RunConfig) -> Dict[str, Any]:
        n_sites = config.dense_sites_or([8], minimum=2)[0]
        epsilon = 2.0 ** (-n_sites / 4)
        inst = NashInstance.single_qubit(random_local_observables(n_sites, config.seed), n_sites)
        seeds = spawn_seeds(config.seed + 1, config.n_samples)
        states = [random_state(inst.dim, s) for s in seeds]
        residuals = nash_residuals_batch(states, inst)

        table = pd.DataFrame({
            "sample": np.arange(len(seeds)),
            "seed": [str(s) for s in seeds],
            "residual_max": [r.max for r in residuals],
            "epsilon": epsilon,
            "approximate_nash": [is_epsilon_nash(s, inst, epsilon) for s in states],
        })
        fraction = float(table["approximate_nash"].mean())
        violations = []
        if fraction < UBIQUITY_FRACTION:
            violations.append(f"only {fraction:.3f} of samples are {epsilon:.4f}-approximate Nash states")
        return {
            "kind": "csv",
            "table": table,
            "audit_columns": {},
            "violations": violations,
            "summary": f"N={n_sites}, epsilon={epsilon:.4f}: fraction {fraction:.3f}",
        }


def audit_two_local(n_sites: int, seed: int, tol: float) -> Dict[str, Any]:
    """무작위 엄밀 2-국소 H: 모든 고유상태의 잔차와 바닥상태의 사이트별 전역 최소성"""
    graph = random_two_local_graph(n_sites, seed, strictly=True)
    inst = NashInstance.single_qubit(star_hamiltonians(graph), n_sites)
    energies, vectors = diagonalize(hamiltonian(graph))
    residuals = [nash_residual(v, inst).max for v in vectors]
    ground = vectors[0]
    checks = [global_su2_check(ground, h, site, mode="min", tol=tol) for site, h in enumerate(inst.observables)]
    return {
        "n_sites": n_sites,
        "seed": str(seed),
        "ground_energy": float(energies[0]),
        "max_eigen_residual": float(max(residuals)),
        "ground_global_min": all(c.is_global for c in checks),
        "ground_global_gap": float(max(abs(c.optimal_value - c.current_value) for c in checks)),
    }


class Theorem1AuditExperiment(BaseExperiment):
    """엄밀 2-국소 해밀토니안의 고유상태 = 별 관측량의 내시 상태, 바닥상태 = 내시 최소"""

    def __init__(self):
        super().__init__("theorem1 audit")

    def compute(self, config: RunConfig) -> Dict[str, Any]:
        sizes = config.dense_sites_or([3, 4, 5], minimum=2)
        seeds = spawn_seeds(config.seed, config.n_instances or 20)
        jobs = [(sizes[i % len(sizes)], s) for i, s in enumerate(seeds)]
        with ThreadPoolExecutor(max_workers=settings.THREAD_COUNT) as executor:
            rows = list(executor.map(lambda job: audit_two_local(job[0], job[1], config.tol), jobs))
        table = pd.DataFrame(rows)
        violations = [f"ground state of instance {i} (N={row.n_sites}) is not a per-site global minimum"
                      for i, row in enumerate(table.itertuples()) if not row.ground_global_min]
        return {
            "kind": "csv",
            "table": table,
            "audit_columns": {"max_eigen_residual": EIGENSTATE_TOL},
            "violations": violations,
            "summary": f"{len(table)} instances, worst eigenstate residual {table['max_eigen_residual'].max():.3e}",
        }


class ProductOptimumExperiment(BaseExperiment):
    """TFIM 최적 곱상태가 ½-현장 가중 별 관측량의 내시 최소 상태인지 검사"""

    def __init__(self):
        super().__init__("product optimum")

    def compute(self, config: RunConfig) -> Dict[str, Any]:
        n_sites = config.dense_sites_or([6], minimum=2)[0]
        g = config.g_or([1.5])[0]
        graph = tfim_graph(n_sites, g)
        optimum = optimal_product_state(hamiltonian(graph), n_sites, config.seed)
        if not optimum.converged:
            raise SolverFailureError(f"alternating optimization did not converge in {optimum.sweeps} sweeps")

        inst = NashInstance.single_qubit(star_hamiltonians(graph, onsite_weight=0.5), n_sites)
        residual = nash_residual(optimum.state, inst)
        checks = [global_su2_check(optimum.state, h, site, mode="min", tol=EIGENSTATE_TOL)
                  for site, h in enumerate(inst.observables)]
        ground_energy, _ = ed_ground_state(n_sites, g)

        violations = []
        if residual.max >= EIGENSTATE_TOL:
            violations.append(f"product optimum residual {residual.max:.3e} >= {EIGENSTATE_TOL}")
        if not all(c.is_global for c in checks):
            violations.append("product optimum is not a per-site global minimum")
        if optimum.energy <= ground_energy:
            violations.append(f"product energy {optimum.energy} does not exceed ground energy {ground_energy}")
        logger.info(f"product optimum: E={optimum.energy:.12f}, E0={ground_energy:.12f}, sweeps={optimum.sweeps}")
        return {
            "kind": "json",
            "report": {
                "n_sites": n_sites,
                "g": g,
                "energy": optimum.energy,
                "ground_energy": ground_energy,
                "energy_gap": optimum.energy - ground_energy,
                "sweeps": optimum.sweeps,
                "nash_residual": residual.max,
                "site_global_min": [c.is_global for c in checks],
                "local_states": [[[float(a.real), float(a.imag)] for a in phi] for phi in optimum.local_states],
            },
            "audit_columns": {},
            "violations": violations,
            "summary": f"E_product - E0 = {optimum.energy - ground_energy:.6f}",
        }
