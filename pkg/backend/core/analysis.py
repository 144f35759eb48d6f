"""
缓存行为统计
基于周期性缓存快照计算每个对象的缓存频率、占用、命中与缓存效率，
以及命中数 / 缓存分块数随分块序号的累积分布
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from loguru import logger

from backend.core.workload import Catalog, Trace
from backend.models.schemas import CacheStateLog

OBJECT_COLUMNS = [
    "object", "caching_frequency", "popularity", "size_chunks",
    "occupied_slot_log_total", "hits", "caching_efficiency",
]
SNAPSHOT_COLUMNS = ["time", "router", "object", "last_or_ranks", "hits"]


@dataclass
class BehavioralStats:
    """objects 每个对象一行；两个 CDF 均为 (x=分块序号, F) 两列"""
    objects: pd.DataFrame
    hit_cdf: pd.DataFrame
    stored_cdf: pd.DataFrame
    log_count: int

    def top(self, n: int) -> pd.DataFrame:
        """缓存频率最高的 n 个对象"""
        return self.objects.sort_values(
            ["caching_frequency", "object"], ascending=[False, True], kind="stable"
        ).head(n).reset_index(drop=True)


def _cdf(counts: Dict[int, float]) -> pd.DataFrame:
    if not counts:
        return pd.DataFrame({"x": pd.Series(dtype="int64"), "F": pd.Series(dtype="float64")})
    series = pd.Series(counts, dtype="float64").sort_index()
    total = series.sum()
    cumulative = series.cumsum() / total if total > 0 else series * 0.0
    return pd.DataFrame({"x": series.index.astype("int64"), "F": cumulative.to_numpy()})


def behavioral_stats(
    logs: Sequence[CacheStateLog],
    catalog: Optional[Catalog] = None,
    trace: Optional[Trace] = None,
) -> BehavioralStats:
    """
    计算缓存行为统计

    一条日志指一个 (快照, 路由器) 记录：
    - caching_frequency = 含该对象的日志数 / 日志总数
    - occupied_slot_log_total = 所有日志中该对象的分块出现次数
    - hits 取最后一次快照的累计命中数（各路由器求和）
    - caching_efficiency = hits / occupied_slot_log_total，占用为0时记0

    Args:
        logs: 快照序列
        catalog: 对象目录（提供对象大小）
        trace: 请求序列（提供对象流行度）

    Returns:
        BehavioralStats
    """
    if not logs:
        raise ValueError("至少需要一个快照")

    routers = sorted({router for log in logs for router in log.stored} | {r for log in logs for r in log.hits})
    log_count = len(logs) * max(1, len(routers))

    logs_with_object: Dict[str, int] = {}
    occupied: Dict[str, int] = {}
    max_rank: Dict[str, int] = {}
    stored_by_rank: Dict[int, float] = {}
    for log in logs:
        for per_router in log.stored.values():
            for object_id, ranks in per_router.items():
                if not ranks:
                    continue
                logs_with_object[object_id] = logs_with_object.get(object_id, 0) + 1
                occupied[object_id] = occupied.get(object_id, 0) + len(ranks)
                max_rank[object_id] = max(max_rank.get(object_id, 0), max(ranks))
                for rank in ranks:
                    stored_by_rank[rank] = stored_by_rank.get(rank, 0) + 1

    hits: Dict[str, int] = {}
    hits_by_rank: Dict[int, float] = {}
    for per_router in logs[-1].hits.values():
        for object_id, ranks in per_router.items():
            for rank, count in ranks.items():
                hits[object_id] = hits.get(object_id, 0) + count
                hits_by_rank[int(rank)] = hits_by_rank.get(int(rank), 0) + count

    popularity: Dict[str, int] = {}
    if trace is not None:
        for requests in trace.receivers.values():
            for object_id in requests:
                popularity[object_id] = popularity.get(object_id, 0) + 1

    rows = []
    for object_id in sorted(set(logs_with_object) | set(hits)):
        stored_total = occupied.get(object_id, 0)
        object_hits = hits.get(object_id, 0)
        if catalog is not None and object_id in catalog:
            size = catalog.size_of(object_id)
        else:
            size = max_rank.get(object_id, 0)
        rows.append({
            "object": object_id,
            "caching_frequency": logs_with_object.get(object_id, 0) / log_count,
            "popularity": popularity.get(object_id, 0),
            "size_chunks": size,
            "occupied_slot_log_total": stored_total,
            "hits": object_hits,
            "caching_efficiency": object_hits / stored_total if stored_total else 0.0,
        })

    objects = pd.DataFrame(rows, columns=OBJECT_COLUMNS)
    logger.debug(f"[Analysis] 统计完成: {len(objects)} 个对象, {log_count} 条日志")
    return BehavioralStats(
        objects=objects,
        hit_cdf=_cdf(hits_by_rank),
        stored_cdf=_cdf(stored_by_rank),
        log_count=log_count,
    )


# ============ 快照文件 ============
def snapshots_to_frame(logs: Sequence[CacheStateLog]) -> pd.DataFrame:
    rows: List[Dict[str, object]] = []
    for log in logs:
        rows.extend(log.to_records())
    return pd.DataFrame(rows, columns=SNAPSHOT_COLUMNS)


def _parse_ranks(text) -> List[int]:
    if pd.isna(text) or str(text) == "":
        return []
    return [int(part) for part in str(text).split(";")]


def _parse_hits(text) -> Dict[int, int]:
    if pd.isna(text) or str(text) == "":
        return {}
    pairs = (part.split(":") for part in str(text).split(";"))
    return {int(rank): int(count) for rank, count in pairs}


def snapshots_from_frame(frame: pd.DataFrame) -> List[CacheStateLog]:
    """由快照行记录还原 CacheStateLog 列表（按时间排序）"""
    logs: List[CacheStateLog] = []
    for time_ms, group in frame.groupby("time", sort=True):
        stored: Dict[int, Dict[str, List[int]]] = {}
        hits: Dict[int, Dict[str, Dict[int, int]]] = {}
        for router, object_id, ranks, object_hits in zip(
            group["router"], group["object"], group["last_or_ranks"], group["hits"]
        ):
            stored.setdefault(int(router), {})
            if pd.isna(object_id) or str(object_id) == "":
                continue
            parsed_ranks = _parse_ranks(ranks)
            parsed_hits = _parse_hits(object_hits)
            if parsed_ranks:
                stored.setdefault(int(router), {})[str(object_id)] = parsed_ranks
            if parsed_hits:
                hits.setdefault(int(router), {})[str(object_id)] = parsed_hits
        logs.append(CacheStateLog(time_ms=float(time_ms), stored=stored, hits=hits))
    return logs


def save_snapshots(logs: Sequence[CacheStateLog], path: Path) -> None:
    snapshots_to_frame(logs).to_csv(path, index=False)


def load_snapshots(path: Path) -> List[CacheStateLog]:
    frame = pd.read_csv(path, dtype={"object": str, "last_or_ranks": str, "hits": str}, keep_default_na=False)
    return snapshots_from_frame(frame)


def write_cdf(cdf: pd.DataFrame, path: Path) -> None:
    """两列 `x,F(x)` 文本"""
    cdf.rename(columns={"F": "F(x)"}).to_csv(path, index=False)
