"""
参数扫描
在 缓存规模 × 快慢比 × 放置策略 × 缓存方案 × 拓扑种子 上批量运行仿真，
汇总各配置在种子上的均值，并计算相对基线方案（LRU）的归一化增益
"""
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd
from loguru import logger

from backend.core.errors import SweepRunError
from backend.core.simulator import run_simulation
from backend.models.schemas import CacheScheme, CacheSizing, MetricsReport, SimConfig, SweepSpec

KEY_COLUMNS = ["placement", "fast_fraction", "slow_ratio", "scheme", "seed"]
GROUP_COLUMNS = ["placement", "fast_fraction", "slow_ratio", "scheme"]

# (指标, 越小越好)；增益列名写明归一化方向
GAIN_METRICS = [
    ("network_load", True),
    ("server_load", True),
    ("mean_completion_time_ms", True),
    ("dram_total", True),
    ("dram_insert_evict", True),
    ("hit_ratio", False),
]
# LRU 的 l2 恒等于 l1，快慢比不影响结果
LRU_SLOW_RATIO = 1.0


def gain_column(metric: str, lower_is_better: bool) -> str:
    direction = "baseline_over_value" if lower_is_better else "value_over_baseline"
    return f"gain_{metric}_{direction}_pct"


def normalized_gain(value: float, baseline: float, lower_is_better: bool) -> float:
    """
    相对基线的增益（百分比），>100 表示优于基线

    越小越好的指标取 baseline/value，命中率取 value/baseline；两者相等（含同为0）时为100
    """
    if value == baseline:
        return 100.0
    numerator, denominator = (baseline, value) if lower_is_better else (value, baseline)
    if denominator == 0:
        return float("inf")
    return numerator / denominator * 100.0


def run_key(cfg: SimConfig) -> Tuple[str, float, float, str, int]:
    return (
        cfg.placement.value,
        cfg.sizing.fast_fraction,
        cfg.sizing.slow_ratio,
        cfg.scheme.value,
        cfg.topology.seed,
    )


def expand_spec(spec: SweepSpec) -> List[SimConfig]:
    """展开为具体运行配置；LRU 在快慢比维度上去重"""
    configs: Dict[Tuple, SimConfig] = {}
    for placement in spec.placements:
        for fraction in spec.fast_fractions:
            for ratio in spec.slow_ratios:
                for scheme in spec.schemes:
                    effective_ratio = LRU_SLOW_RATIO if scheme == CacheScheme.LRU else ratio
                    for seed in spec.seeds:
                        cfg = spec.base.model_copy(update={
                            "scheme": scheme,
                            "placement": placement,
                            "sizing": CacheSizing(fast_fraction=fraction, slow_ratio=effective_ratio),
                            "topology": spec.base.topology.model_copy(update={"seed": seed}),
                            "workload": spec.base.workload.model_copy(update={"seed": seed}),
                            "record_events": False,
                        })
                        key = run_key(cfg)
                        cfg = cfg.model_copy(update={"name": "/".join(str(part) for part in key)})
                        configs.setdefault(key, cfg)
    return list(configs.values())


def _run_one(cfg: SimConfig) -> Dict[str, object]:
    report: MetricsReport = run_simulation(cfg)
    return dict(zip(KEY_COLUMNS, run_key(cfg)), **report.scalars())


def run_sweep(spec: SweepSpec, parallel: int = 1, output_dir: Optional[Path] = None) -> pd.DataFrame:
    """
    执行参数扫描

    Args:
        spec: 扫描描述
        parallel: 并行进程数（<=1 时在当前进程内顺序执行）
        output_dir: 输出目录，缺省取 spec.output_dir；给出时写 runs.csv / summary.csv / resolved_spec.json

    Returns:
        每个 (配置, 种子) 一行的结果表

    Raises:
        SweepRunError: 任一运行失败，携带失败配置的键
    """
    configs = expand_spec(spec)
    logger.info(f"[Sweep] 共 {len(configs)} 次运行, parallel={parallel}")

    rows: List[Dict[str, object]] = []
    if parallel <= 1:
        for index, cfg in enumerate(configs, start=1):
            try:
                rows.append(_run_one(cfg))
            except Exception as e:
                raise SweepRunError(cfg.name, e) from e
            logger.info(f"[Sweep] 进度 {index}/{len(configs)}: {cfg.name}")
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = {pool.submit(_run_one, cfg): cfg for cfg in configs}
            for done, future in enumerate(as_completed(futures), start=1):
                cfg = futures[future]
                try:
                    rows.append(future.result())
                except Exception as e:
                    for pending in futures:
                        pending.cancel()
                    raise SweepRunError(cfg.name, e) from e
                logger.info(f"[Sweep] 进度 {done}/{len(configs)}: {cfg.name}")

    runs = pd.DataFrame(rows).sort_values(KEY_COLUMNS, kind="stable").reset_index(drop=True)

    output_dir = output_dir or spec.output_dir
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        runs.to_csv(output_dir / "runs.csv", index=False)
        summarize(runs).to_csv(output_dir / "summary.csv", index=False)
        (output_dir / "resolved_spec.json").write_text(spec.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"[Sweep] 结果已写入 {output_dir}")
    return runs


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    """
    按配置对种子求均值，并计算相对基线方案的归一化增益

    基线为 LRU（结果中没有 LRU 时各方案以自身为基线）；基线按 (placement, fast_fraction) 匹配。
    """
    metrics = [c for c in MetricsReport.SCALAR_FIELDS if c in runs.columns]
    means = runs.groupby(GROUP_COLUMNS, sort=True)[metrics].mean().reset_index()
    means["seeds"] = runs.groupby(GROUP_COLUMNS, sort=True)["seed"].nunique().to_numpy()

    has_lru = (means["scheme"] == CacheScheme.LRU.value).any()
    baseline_index: Dict[Tuple, pd.Series] = {}
    if has_lru:
        for _, row in means[means["scheme"] == CacheScheme.LRU.value].iterrows():
            baseline_index[(row["placement"], row["fast_fraction"])] = row

    for metric, lower_is_better in GAIN_METRICS:
        if metric not in means.columns:
            continue
        gains = []
        for _, row in means.iterrows():
            baseline = baseline_index.get((row["placement"], row["fast_fraction"]), row) if has_lru else row
            gains.append(normalized_gain(row[metric], baseline[metric], lower_is_better))
        means[gain_column(metric, lower_is_better)] = gains
    return means


def load_runs(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)
