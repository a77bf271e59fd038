"""
실험 실행 설정. CLI 플래그와 YAML 파일(--config)이 모두 여기로 모인다.
"""
import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.config import settings
from app.utils.exceptions import ConfigError

COMMANDS = (
    "variety sample",
    "variety trace",
    "tfim correlators",
    "tfim hessian",
    "qpd variety",
    "qpd orbits",
    "nash check",
    "haar ubiquity",
    "theorem1 audit",
    "product optimum",
)

DEFAULT_BETAS = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal[COMMANDS]
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    output: Optional[str] = None

    # 허용 오차
    tol: float = Field(default=settings.NASH_TOL, gt=0)
    newton_tol: float = Field(default=settings.NEWTON_TOL, gt=0)
    dedup_tol: float = Field(default=settings.DEDUP_TOL, gt=0)

    # 실험 파라미터 (None 이면 실험별 기본값)
    n_sites: Optional[List[int]] = None
    g_values: Optional[List[float]] = None
    betas: Optional[List[float]] = None
    chi: Optional[float] = None
    n_starts: int = Field(default=200, ge=1)
    n_instances: Optional[int] = Field(default=None, ge=1)
    n_samples: int = Field(default=200, ge=1)
    real_symmetric: bool = False
    quotient_sign: bool = False
    step: float = Field(default=settings.TRACE_STEP, gt=0)
    max_steps: int = Field(default=settings.TRACE_MAX_STEPS, ge=1)
    max_components: int = Field(default=4, ge=1)
    ed_check: bool = True

    # nash check
    state_path: Optional[str] = None
    instance: Literal["tfim", "qpd"] = "tfim"

    @field_validator("n_sites")
    @classmethod
    def _sites_positive(cls, value):
        if value is not None and any(n < 1 for n in value):
            raise ValueError("n_sites entries must be positive")
        return value

    @field_validator("g_values", "betas")
    @classmethod
    def _non_negative(cls, value):
        if value is not None and any(v < 0 for v in value):
            raise ValueError("g and beta values must be non-negative")
        return value

    @model_validator(mode="after")
    def _command_requirements(self):
        if self.chi is not None and (self.chi < 0 or self.chi * self.chi > 0.25 + 1e-12):
            raise ValueError("chi must satisfy 0 <= chi and chi^2 <= 1/4")
        if self.command == "qpd orbits" and self.chi is None:
            raise ValueError("qpd orbits needs --chi")
        if self.command == "nash check" and self.state_path is None:
            raise ValueError("nash check needs --state")
        return self

    def sites_or(self, default: List[int]) -> List[int]:
        return list(self.n_sites) if self.n_sites else list(default)

    def dense_sites_or(self, default: List[int], minimum: int = 1) -> List[int]:
        """밀집 행렬로 다룰 크기. 범위를 벗어나면 ConfigError"""
        sizes = self.sites_or(default)
        bad = [n for n in sizes if not minimum <= n <= settings.ED_MAX_QUBITS]
        if bad:
            raise ConfigError(f"{self.command} needs {minimum} <= N <= {settings.ED_MAX_QUBITS}, got {bad}")
        return sizes

    def g_or(self, default: List[float]) -> List[float]:
        return list(self.g_values) if self.g_values else list(default)

    def betas_or(self, default: List[float] = DEFAULT_BETAS) -> List[float]:
        return list(self.betas) if self.betas else list(default)

    def echo(self) -> dict:
        """출력 메타데이터에 들어갈 설정 (출력 경로 제외)"""
        return self.model_dump(mode="json", exclude={"output"})

    def config_hash(self) -> str:
        canonical = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_yaml(path: str) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return data


def build_run_config(overrides: dict, config_path: Optional[str] = None) -> RunConfig:
    """YAML 값 위에 CLI 값(None 이 아닌 것)을 덮어써 RunConfig 생성"""
    values = load_yaml(config_path) if config_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e}") from e
