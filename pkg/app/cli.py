"""
명령행 인터페이스: `<group> <action>` 하위 명령과 `audit <file>`.

종료 코드: 0 성공, 2 풀이기 미수렴, 3 불변식 위반, 4 잘못된 설정.
"""
import argparse
import asyncio
from typing import List, Optional

from app.config import settings
from app.config.run_config import build_run_config
from app.experiments.artifacts import audit_file
from app.experiments.graph import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, execute, exit_code_for
from app.utils.exceptions import ConfigError
from app.utils.logger import logger

SUBCOMMANDS = {
    "variety": ("sample", "trace"),
    "tfim": ("correlators", "hessian"),
    "qpd": ("variety", "orbits"),
    "nash": ("check",),
    "haar": ("ubiquity",),
    "theorem1": ("audit",),
    "product": ("optimum",),
}


class ArgumentParser(argparse.ArgumentParser):
    """인자 오류를 SystemExit(2) 대신 ConfigError 로 올린다"""

    def error(self, message):
        raise ConfigError(message)


def _common_options() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with RunConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--output", "-o")
    common.add_argument("--tol", type=float)
    common.add_argument("--newton-tol", type=float, dest="newton_tol")
    common.add_argument("--dedup-tol", type=float, dest="dedup_tol")
    common.add_argument("--n", type=int, action="append", dest="n_sites", help="number of sites (repeatable)")
    common.add_argument("--g", type=float, action="append", dest="g_values", help="transverse field (repeatable)")
    common.add_argument("--beta", type=float, action="append", dest="betas", help="inverse temperature (repeatable)")
    common.add_argument("--chi", type=float)
    common.add_argument("--starts", type=int, dest="n_starts")
    common.add_argument("--instances", type=int, dest="n_instances")
    common.add_argument("--samples", type=int, dest="n_samples")
    common.add_argument("--step", type=float)
    common.add_argument("--max-steps", type=int, dest="max_steps")
    common.add_argument("--max-components", type=int, dest="max_components")
    common.add_argument("--real-symmetric", action="store_true", default=None, dest="real_symmetric")
    common.add_argument("--quotient-sign", action="store_true", default=None, dest="quotient_sign")
    common.add_argument("--no-ed-check", action="store_false", default=None, dest="ed_check")
    common.add_argument("--state", dest="state_path")
    common.add_argument("--instance", choices=("tfim", "qpd"))
    return common


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="nashstates", description=f"{settings.PROJECT_NAME} {settings.VERSION}")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=ArgumentParser)
    common = _common_options()
    for group, actions in SUBCOMMANDS.items():
        group_parser = groups.add_parser(group)
        action_parsers = group_parser.add_subparsers(dest="action", required=True, parser_class=ArgumentParser)
        for action in actions:
            action_parsers.add_parser(action, parents=[common])
    audit = groups.add_parser("audit", help="re-verify residuals of an existing artifact")
    audit.add_argument("file")
    return parser


def _run_audit(path: str) -> int:
    report = audit_file(path)
    print(f"audit {report.path}: {report.checked} values, {len(report.violations)} violations")
    return EXIT_OK if report.passed else EXIT_INVARIANT


def run(argv: Optional[List[str]] = None) -> int:
    try:
        args = vars(build_parser().parse_args(argv))
        group = args.pop("group")
        if group == "audit":
            return _run_audit(args["file"])
        command = f"{group} {args.pop('action')}"
        config_path = args.pop("config")
        config = build_run_config({**args, "command": command}, config_path)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}")
        return EXIT_CONFIG

    result = asyncio.run(execute(config))
    code = result.get("exit_code", EXIT_OK)
    if result.get("error"):
        print(f"{config.command}: failed ({result['error']}), exit {code}")
    else:
        print(f"{config.command}: {result.get('summary', '')} -> {', '.join(result.get('artifacts', []))}")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    try:
        return run(argv)
    except Exception as e:
        logger.error(f"Unhandled error: {e}")
        return exit_code_for(e)
