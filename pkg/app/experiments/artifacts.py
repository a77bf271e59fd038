"""
실험 산출물 입출력과 사후 감사.

CSV 는 17 유효숫자, 옆에 <file>.meta.json 메타데이터를 둔다.
JSON 은 키 정렬, UTF-8, metadata 블록 포함.
"""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from app.config import settings
from app.config.run_config import RunConfig
from app.utils.exceptions import ConfigError
from app.utils.logger import logger

FLOAT_FORMAT = "%.17g"


@dataclass
class AuditReport:
    path: str
    checked: int = 0
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def default_output_path(config: RunConfig, kind: str) -> Path:
    stem = config.command.replace(" ", "_")
    return Path(settings.OUTPUT_DIR) / f"{stem}.{kind}"


def metadata(config: RunConfig, audit_columns: Dict[str, float]) -> Dict[str, Any]:
    return {
        "project": settings.PROJECT_NAME,
        "version": settings.VERSION,
        "command": config.command,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "config": config.echo(),
        "audit_columns": dict(sorted(audit_columns.items())),
        "audit_tol": config.tol,
    }


def _dumps(data: Dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False, indent=2, allow_nan=True) + "\n"


def write_csv(table: pd.DataFrame, config: RunConfig, audit_columns: Dict[str, float],
              path: Optional[Path] = None) -> List[str]:
    path = Path(path or config.output or default_output_path(config, "csv"))
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(_dumps(metadata(config, audit_columns)), encoding="utf-8")
    logger.info(f"wrote {len(table)} rows to {path}")
    return [str(path), str(meta_path)]


def write_json(report: Dict[str, Any], config: RunConfig, audit_columns: Dict[str, float],
               path: Optional[Path] = None) -> List[str]:
    path = Path(path or config.output or default_output_path(config, "json"))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps({**report, "metadata": metadata(config, audit_columns)}), encoding="utf-8")
    logger.info(f"wrote report to {path}")
    return [str(path)]


def check_table(table: pd.DataFrame, audit_columns: Dict[str, float]) -> AuditReport:
    report = AuditReport(path="<memory>")
    for column, tol in audit_columns.items():
        if column not in table.columns:
            report.violations.append(f"audited column {column!r} is missing")
            continue
        values = pd.to_numeric(table[column], errors="coerce")
        bad = table.index[~(values.abs() < tol)]
        report.checked += len(values)
        for index in bad:
            report.violations.append(f"row {index}: {column}={table.at[index, column]} >= {tol}")
    return report


def _residual_entries(node: Any, trail: str = ""):
    """보고서 안의 모든 'residual' 값을 (경로, 값) 으로 순회"""
    if isinstance(node, dict):
        for key, value in sorted(node.items()):
            if key == "metadata":
                continue
            if key == "residual" and isinstance(value, (int, float)):
                yield f"{trail}.residual", float(value)
            else:
                yield from _residual_entries(value, f"{trail}.{key}")
    elif isinstance(node, list):
        for i, value in enumerate(node):
            yield from _residual_entries(value, f"{trail}[{i}]")


def check_report(report: Dict[str, Any], tol: float) -> AuditReport:
    audit = AuditReport(path="<memory>")
    for trail, value in _residual_entries(report):
        audit.checked += 1
        if math.isnan(value) or value >= tol:
            audit.violations.append(f"{trail}={value} >= {tol}")
    return audit


def audit_file(path: str) -> AuditReport:
    """기존 산출물의 잔차를 다시 검증한다"""
    target = Path(path)
    if not target.exists():
        raise ConfigError(f"artifact {path} does not exist")
    if target.suffix not in (".csv", ".json"):
        raise ConfigError(f"unsupported artifact type {target.suffix!r}")
    try:
        if target.suffix == ".csv":
            meta_path = target.with_name(target.name + ".meta.json")
            if not meta_path.exists():
                raise ConfigError(f"CSV artifact {path} has no {meta_path.name} sidecar")
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            result = check_table(pd.read_csv(target), meta.get("audit_columns", {}))
        else:
            data = json.loads(target.read_text(encoding="utf-8"))
            tol = float(data.get("metadata", {}).get("audit_tol", settings.NASH_TOL))
            result = check_report(data, tol)
    except ConfigError:
        raise
    except (ValueError, AttributeError, KeyError) as e:
        # json/CSV 파싱 오류와 dict 가 아닌 최상위 값
        raise ConfigError(f"cannot parse artifact {path}: {e}") from e
    result.path = str(target)
    logger.info(f"audit {path}: {result.checked} values checked, {len(result.violations)} violations")
    return result
