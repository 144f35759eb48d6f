import argparse
import sys
from pathlib import Path
from typing import List, Optional

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from backend.config import settings
from backend.core.analysis import behavioral_stats, load_snapshots, save_snapshots, write_cdf
from backend.core.errors import (
    CacheValidationError,
    SimConfigError,
    SweepRunError,
    TopologyError,
    WorkloadError,
)
from backend.core.simulator import load_config, run_simulation
from backend.core.sweep import load_runs, run_sweep, summarize
from backend.models.schemas import MetricsReport, SweepSpec
from backend.utils.logger import setup_logger

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_USAGE = 2

CONFIG_ERRORS = (CacheValidationError, SimConfigError, TopologyError, WorkloadError)


def format_validation_error(error: ValidationError) -> str:
    """把 pydantic 校验错误整理成 `键路径: 原因` 的多行文本"""
    lines = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{key}: {item['msg']}")
    return "\n".join(lines)


def write_run_outputs(report: MetricsReport, resolved_config: str, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / "resolved_config.json").write_text(resolved_config, encoding="utf-8")
    pd.DataFrame(report.router_rows()).to_csv(out_dir / "routers.csv", index=False)
    save_snapshots(report.snapshots, out_dir / "snapshots.csv")
    logger.info(f"运行结果已写入 {out_dir}")


# ============ 子命令 ============
def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(Path(args.config))
    report = run_simulation(cfg)
    sys.stdout.write(report.to_text())
    if args.out:
        write_run_outputs(report, cfg.model_dump_json(indent=2), Path(args.out))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    spec_path = Path(args.spec)
    spec = SweepSpec.model_validate_json(spec_path.read_text(encoding="utf-8"))
    spec = spec.model_copy(update={"base": spec.base.resolve_paths(spec_path.parent)})
    out_dir = Path(args.out or spec.output_dir or settings.OUTPUT_DIR)
    runs = run_sweep(spec, parallel=args.parallel, output_dir=out_dir)
    sys.stdout.write(summarize(runs).to_csv(index=False))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    in_dir = Path(args.input)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"结果目录不存在: {in_dir}")

    if args.cdf:
        stats = behavioral_stats(load_snapshots(in_dir / "snapshots.csv"))
        write_cdf(stats.hit_cdf, in_dir / "hit_cdf.txt")
        write_cdf(stats.stored_cdf, in_dir / "stored_cdf.txt")
        stats.objects.to_csv(in_dir / "objects.csv", index=False)
        sys.stdout.write("# hits vs chunk rank\n")
        sys.stdout.write(stats.hit_cdf.rename(columns={"F": "F(x)"}).to_csv(index=False))
        sys.stdout.write("# stored chunks vs chunk rank\n")
        sys.stdout.write(stats.stored_cdf.rename(columns={"F": "F(x)"}).to_csv(index=False))
        return EXIT_OK

    runs_path = in_dir / "runs.csv"
    if args.csv or runs_path.exists():
        summary = summarize(load_runs(runs_path))
        if args.csv:
            summary.to_csv(in_dir / "summary.csv", index=False)
        sys.stdout.write(summary.to_csv(index=False))
        return EXIT_OK

    sys.stdout.write((in_dir / "report.txt").read_text(encoding="utf-8"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opc-sim", description="分块缓存仿真与参数扫描")
    parser.add_argument("--log-level", default=None, help="日志级别，缺省取 LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="运行单次仿真")
    run.add_argument("--config", required=True, help="JSON 运行配置")
    run.add_argument("--out", default=None, help="输出目录（报告、路由器CSV、快照、解析后的配置）")
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser("sweep", help="参数扫描")
    sweep.add_argument("--spec", required=True, help="JSON 扫描描述")
    sweep.add_argument("--out", default=None, help="输出目录")
    sweep.add_argument("--parallel", type=int, default=settings.SWEEP_PARALLEL, help="并行进程数")
    sweep.set_defaults(handler=cmd_sweep)

    report = sub.add_parser("report", help="汇总已有结果")
    report.add_argument("--in", dest="input", required=True, help="run 或 sweep 的输出目录")
    mode = report.add_mutually_exclusive_group()
    mode.add_argument("--csv", action="store_true", help="由 runs.csv 重新汇总并写 summary.csv")
    mode.add_argument("--cdf", action="store_true", help="由 snapshots.csv 计算命中/缓存分块的 CDF")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    setup_logger(level=args.log_level)
    try:
        return args.handler(args)
    except FileNotFoundError as e:
        logger.error(f"文件不存在: {e}")
        return EXIT_USAGE
    except ValidationError as e:
        logger.error(f"配置校验失败:\n{format_validation_error(e)}")
        return EXIT_USAGE
    except CONFIG_ERRORS as e:
        logger.error(f"配置错误: {e}")
        return EXIT_USAGE
    except SweepRunError as e:
        logger.error(f"{e}")
        return EXIT_RUN_FAILURE
    except Exception as e:
        logger.exception(f"运行失败: {e}")
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
