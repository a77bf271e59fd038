import os
from dotenv import load_dotenv

# .env 파일 로드
load_dotenv()

# 프로젝트 정보
PROJECT_NAME = "NashStates"
VERSION = "0.1.0"

# 경로
LOG_DIR = os.getenv("NASHSTATES_LOG_DIR", "logs")
OUTPUT_DIR = os.getenv("NASHSTATES_OUTPUT_DIR", "outputs")

# 병렬 처리 (멀티스타트, 인스턴스 스윕)
THREAD_COUNT = int(os.getenv("NASHSTATES_THREADS", str(min(8, os.cpu_count() or 1))))

# 수치 허용 오차
NASH_TOL = float(os.getenv("NASHSTATES_NASH_TOL", "1e-9"))
CLASSIFY_TOL = float(os.getenv("NASHSTATES_CLASSIFY_TOL", "1e-7"))
NEWTON_TOL = float(os.getenv("NASHSTATES_NEWTON_TOL", "1e-10"))
NEWTON_MAX_ITER = int(os.getenv("NASHSTATES_NEWTON_MAX_ITER", "100"))
DEDUP_TOL = float(os.getenv("NASHSTATES_DEDUP_TOL", "1e-6"))

# 곡선 추적
TRACE_STEP = float(os.getenv("NASHSTATES_TRACE_STEP", "0.02"))
TRACE_MAX_STEPS = int(os.getenv("NASHSTATES_TRACE_MAX_STEPS", "10000"))

# 밀집 행렬 한계 (ED)
ED_MAX_QUBITS = int(os.getenv("NASHSTATES_ED_MAX_QUBITS", "12"))
