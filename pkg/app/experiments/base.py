import asyncio
from abc import ABC, abstractmethod
from typing import Any, Dict

from app.config.run_config import RunConfig


class BaseExperiment(ABC):
    def __init__(self, name: str):
        self.name = name

    @abstractmethod
    def compute(self, config: RunConfig) -> Dict[str, Any]:
        """
        실험의 수치 계산.

        Returns:
            {"kind": "csv" | "json", "table": DataFrame, "report": dict,
             "audit_columns": {열: 허용오차}, "violations": [str], "summary": str}
        """
        pass

    async def run(self, config: RunConfig) -> Dict[str, Any]:
        """수치 계산은 작업 스레드에서 실행"""
        return await asyncio.to_thread(self.compute, config)
