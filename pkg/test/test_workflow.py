import json

import pandas as pd
import pytest
from pydantic import ValidationError

from app.config.run_config import RunConfig
from app.experiments import graph
from app.experiments.artifacts import audit_file
from app.experiments.base import BaseExperiment
from app.experiments.graph import (
    EXIT_CONFIG,
    EXIT_INTERNAL,
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_SOLVER,
    execute,
    exit_code_for,
)
from app.experiments.nash_experiment import HaarUbiquityExperiment
from app.quantum.tfim import TFIMSpec
from app.utils.exceptions import ConfigError, InvariantViolationError, SolverFailureError


class FixedExperiment(BaseExperiment):
    """미리 정한 결과를 돌려주는 실험"""

    def __init__(self, payload=None, error=None):
        super().__init__("tfim correlators")
        self.payload = payload
        self.error = error

    def compute(self, config):
        if self.error is not None:
            raise self.error
        return self.payload


@pytest.fixture
def fake_experiment(monkeypatch):
    def install(experiment):
        monkeypatch.setitem(graph.EXPERIMENTS, "tfim correlators", experiment)
    return install


def test_exit_codes():
    assert exit_code_for(SolverFailureError("x")) == EXIT_SOLVER
    assert exit_code_for(InvariantViolationError("x")) == EXIT_INVARIANT
    assert exit_code_for(ConfigError("x")) == EXIT_CONFIG
    assert exit_code_for(ValueError("x")) == EXIT_INTERNAL
    assert exit_code_for(RuntimeError("x")) == EXIT_INTERNAL
    with pytest.raises(ValidationError) as info:
        TFIMSpec(n_sites=1, g=0.5)
    assert exit_code_for(info.value) == EXIT_CONFIG


def test_registry_covers_every_command():
    from app.config.run_config import COMMANDS
    assert set(graph.EXPERIMENTS) == set(COMMANDS)


@pytest.mark.asyncio
async def test_qpd_orbits_workflow(tmp_path):
    output = tmp_path / "orbits.json"
    result = await execute(RunConfig(command="qpd orbits", chi=0.0, n_starts=100, output=str(output)))
    assert result["exit_code"] == EXIT_OK
    assert result["artifacts"] == [str(output)]

    report = json.loads(output.read_text(encoding="utf-8"))
    assert report["n_points"] == 8
    assert report["n_nash_max"] == 2
    assert report["metadata"]["command"] == "qpd orbits"
    assert audit_file(str(output)).passed


@pytest.mark.asyncio
async def test_workflow_is_deterministic(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for path in (first, second):
        await execute(RunConfig(command="qpd orbits", chi=0.5, n_starts=60, seed=7, output=str(path)))
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.asyncio
async def test_tfim_correlators_workflow(tmp_path):
    output = tmp_path / "tfim.csv"
    config = RunConfig(command="tfim correlators", n_sites=[4], g_values=[0.5, 1.5], betas=[1.0, 2.0],
                       output=str(output))
    result = await execute(config)
    assert result["exit_code"] == EXIT_OK

    table = pd.read_csv(output)
    assert len(table) == 4
    assert {"temperature", "g", "x_avg", "zz_avg", "hs11", "hs22", "hs33"} <= set(table.columns)
    assert (table["x_residual"].abs() < 1e-8).all()
    meta = json.loads((tmp_path / "tfim.csv.meta.json").read_text(encoding="utf-8"))
    assert meta["config_hash"] == config.config_hash()
    assert audit_file(str(output)).passed


@pytest.mark.asyncio
async def test_nash_check_workflow(tmp_path):
    state = tmp_path / "state.json"
    state.write_text(json.dumps({"real": [0, 0, 0, 1], "imag": [0, 0, 0, 0]}), encoding="utf-8")
    output = tmp_path / "check.json"
    result = await execute(RunConfig(command="nash check", instance="qpd", state_path=str(state),
                                     output=str(output)))
    assert result["exit_code"] == EXIT_OK
    report = json.loads(output.read_text(encoding="utf-8"))
    assert report["is_nash"]
    assert report["nash_maximum"]
    assert report["rebit"]["nash_max_inequalities"]
    assert report["payoffs"] == [1.0, 1.0]


@pytest.mark.asyncio
async def test_audit_failure_writes_nothing(tmp_path, fake_experiment):
    table = pd.DataFrame({"residual": [0.0, 1.0]})
    fake_experiment(FixedExperiment({"kind": "csv", "table": table, "audit_columns": {"residual": 1e-9}}))
    output = tmp_path / "bad.csv"
    result = await execute(RunConfig(command="tfim correlators", output=str(output)))
    assert result["exit_code"] == EXIT_INVARIANT
    assert len(result["violations"]) == 1
    assert not output.exists()


@pytest.mark.asyncio
async def test_solver_failure_exit_code(tmp_path, fake_experiment):
    fake_experiment(FixedExperiment(error=SolverFailureError("no convergence")))
    result = await execute(RunConfig(command="tfim correlators", output=str(tmp_path / "x.csv")))
    assert result["exit_code"] == EXIT_SOLVER
    assert "no convergence" in result["error"]


@pytest.mark.asyncio
async def test_report_residuals_are_audited(tmp_path, fake_experiment):
    report = {"points": [{"residual": 1e-12}, {"residual": 0.5}]}
    fake_experiment(FixedExperiment({"kind": "json", "report": report}))
    result = await execute(RunConfig(command="tfim correlators", output=str(tmp_path / "r.json")))
    assert result["exit_code"] == EXIT_INVARIANT
    assert result["violations"] == [".points[1].residual=0.5 >= 1e-09"]


@pytest.mark.asyncio
async def test_library_crash_is_internal_error(tmp_path, fake_experiment):
    fake_experiment(FixedExperiment(error=ValueError("output array is read-only")))
    output = tmp_path / "x.csv"
    result = await execute(RunConfig(command="tfim correlators", output=str(output)))
    assert result["exit_code"] == EXIT_INTERNAL
    assert not output.exists()


@pytest.mark.asyncio
async def test_oversized_dense_request_is_config_error(tmp_path):
    config = RunConfig(command="haar ubiquity", n_sites=[40], output=str(tmp_path / "h.csv"))
    result = await execute(config)
    assert result["exit_code"] == EXIT_CONFIG


def test_haar_ubiquity_experiment():
    payload = HaarUbiquityExperiment().compute(RunConfig(command="haar ubiquity"))
    table = payload["table"]
    assert len(table) == 200
    assert (table["epsilon"] == 0.25).all()
    assert table["approximate_nash"].mean() >= 0.99
    assert payload["violations"] == []
