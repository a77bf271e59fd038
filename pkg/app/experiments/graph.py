from typing import Any, Dict, List, Optional, TypedDict

from langgraph.graph import END, Graph
from pydantic import ValidationError

from app.config.run_config import RunConfig
from app.experiments.artifacts import check_report, check_table, write_csv, write_json
from app.experiments.base import BaseExperiment
from app.experiments.nash_experiment import (
    HaarUbiquityExperiment,
    NashCheckExperiment,
    ProductOptimumExperiment,
    Theorem1AuditExperiment,
)
from app.experiments.qpd_experiment import QPDOrbitsExperiment, QPDVarietyExperiment
from app.experiments.tfim_experiment import TFIMCorrelatorsExperiment, TFIMHessianExperiment
from app.experiments.variety_experiment import VarietySampleExperiment, VarietyTraceExperiment
from app.utils.exceptions import ConfigError, InvariantViolationError, SolverFailureError
from app.utils.logger import logger

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_SOLVER = 2
EXIT_INVARIANT = 3
EXIT_CONFIG = 4


class ExperimentState(TypedDict, total=False):
    config: RunConfig
    payload: Dict[str, Any]
    violations: List[str]
    artifacts: List[str]
    summary: str
    error: Optional[str]
    exit_code: int


EXPERIMENTS: Dict[str, BaseExperiment] = {
    experiment.name: experiment
    for experiment in (
        VarietySampleExperiment(),
        VarietyTraceExperiment(),
        TFIMCorrelatorsExperiment(),
        TFIMHessianExperiment(),
        QPDVarietyExperiment(),
        QPDOrbitsExperiment(),
        NashCheckExperiment(),
        HaarUbiquityExperiment(),
        Theorem1AuditExperiment(),
        ProductOptimumExperiment(),
    )
}


def exit_code_for(error: Exception) -> int:
    if isinstance(error, SolverFailureError):
        return EXIT_SOLVER
    if isinstance(error, InvariantViolationError):
        return EXIT_INVARIANT
    if isinstance(error, (ConfigError, ValidationError)):
        return EXIT_CONFIG
    return EXIT_INTERNAL


async def run_experiment(state: ExperimentState) -> ExperimentState:
    config = state["config"]
    logger.info(f"run_experiment: {config.command} (seed={config.seed})")
    try:
        payload = await EXPERIMENTS[config.command].run(config)
        return {**state, "payload": payload, "summary": payload.get("summary", "")}
    except Exception as e:
        logger.error(f"Error in {config.command}: {e}")
        return {**state, "error": str(e), "exit_code": exit_code_for(e)}


async def audit_artifact(state: ExperimentState) -> ExperimentState:
    payload = state["payload"]
    violations = list(payload.get("violations", []))
    if payload["kind"] == "csv":
        violations += check_table(payload["table"], payload.get("audit_columns", {})).violations
    else:
        violations += check_report(payload["report"], state["config"].tol).violations
    if violations:
        for message in violations[:20]:
            logger.error(f"invariant violation: {message}")
        return {**state, "violations": violations, "error": f"{len(violations)} invariant violations",
                "exit_code": EXIT_INVARIANT}
    return {**state, "violations": []}


async def write_artifact(state: ExperimentState) -> ExperimentState:
    config = state["config"]
    payload = state["payload"]
    try:
        if payload["kind"] == "csv":
            paths = write_csv(payload["table"], config, payload.get("audit_columns", {}))
        else:
            paths = write_json(payload["report"], config, payload.get("audit_columns", {}))
    except OSError as e:
        logger.error(f"Error writing artifact: {e}")
        return {**state, "error": str(e), "exit_code": EXIT_CONFIG}
    return {**state, "artifacts": paths, "exit_code": EXIT_OK}


def define_workflow() -> Graph:
    """실행 → 감사 → 기록. 오류나 감사 실패 시 기록하지 않고 종료"""
    logger.debug("Defining experiment workflow")
    workflow = Graph()

    workflow.add_node("run_experiment", run_experiment)
    workflow.add_node("audit_artifact", audit_artifact)
    workflow.add_node("write_artifact", write_artifact)

    workflow.set_entry_point("run_experiment")
    workflow.add_conditional_edges(
        "run_experiment",
        path=lambda x: x.get("error") is None,
        path_map={
            True: "audit_artifact",
            False: END,
        }
    )
    workflow.add_conditional_edges(
        "audit_artifact",
        path=lambda x: x.get("error") is None,
        path_map={
            True: "write_artifact",
            False: END,
        }
    )
    workflow.add_edge("write_artifact", END)

    return workflow


async def execute(config: RunConfig) -> ExperimentState:
    app = define_workflow().compile()
    result = await app.ainvoke({"config": config})
    return result
