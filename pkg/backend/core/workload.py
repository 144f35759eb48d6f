"""
流量生成模块
按流量类别参数生成对象目录（对数正态大小）与各接收者的请求序列（Zipf 流行度）
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from backend.core.errors import WorkloadError
from backend.models.schemas import (
    PopularityParams,
    SizeDistribution,
    TrafficClass,
    TrafficClassParams,
)
from cache_schemes.base import MAX_CHUNK_RANK

CATALOG_COLUMNS = ["object_id", "class", "size_chunks"]
TRACE_COLUMNS = ["receiver_id", "seq_no", "object_id"]

# 全量流量统计：对象数 / 分块数(median, max, std) / 每对象请求数(mean, max, std) / Zipf 指数
TRAFFIC_CLASS_PRESETS = {
    TrafficClass.WEB: (195386, (6, 19929, 56.6), (10984, 658686, 53.8), 0.8),
    TrafficClass.P2P: (1, (687168, 687167, 0.0), (2, 2, 0.0), 0.8),
    TrafficClass.VIDEO: (176, (8133, 16977, 5261.2), (17, 326, 2.33), 0.2),
    TrafficClass.OTHER: (10485, (4, 5120, 0.0), (1106, 22352, 15.3), 0.8),
}


@dataclass(frozen=True)
class CatalogEntry:
    object_id: str
    traffic_class: TrafficClass
    size_chunks: int


@dataclass
class Catalog:
    """对象目录：object_id -> 类别与大小（分块数）"""
    objects: Dict[str, CatalogEntry] = field(default_factory=dict)

    @property
    def total_chunks(self) -> int:
        return sum(entry.size_chunks for entry in self.objects.values())

    def __len__(self) -> int:
        return len(self.objects)

    def __contains__(self, object_id: str) -> bool:
        return object_id in self.objects

    def size_of(self, object_id: str) -> int:
        return self.objects[object_id].size_chunks

    def by_class(self) -> Dict[TrafficClass, List[str]]:
        grouped: Dict[TrafficClass, List[str]] = {}
        for object_id in sorted(self.objects):
            grouped.setdefault(self.objects[object_id].traffic_class, []).append(object_id)
        return grouped

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (entry.object_id, entry.traffic_class.value, entry.size_chunks)
            for _, entry in sorted(self.objects.items())
        ]
        return pd.DataFrame(rows, columns=CATALOG_COLUMNS)


@dataclass
class Trace:
    """请求序列：receiver_id -> 按顺序请求的对象列表"""
    receivers: Dict[int, List[str]] = field(default_factory=dict)
    seed: int = 0

    @property
    def total_requests(self) -> int:
        return sum(len(requests) for requests in self.receivers.values())

    def validate(self, catalog: Catalog) -> "Trace":
        missing = sorted({
            object_id
            for requests in self.receivers.values()
            for object_id in requests
            if object_id not in catalog
        })
        if missing:
            raise WorkloadError(f"请求序列引用了目录中不存在的对象: {missing[:5]}")
        return self

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (receiver, seq_no, object_id)
            for receiver in sorted(self.receivers)
            for seq_no, object_id in enumerate(self.receivers[receiver])
        ]
        return pd.DataFrame(rows, columns=TRACE_COLUMNS)


# ============ 参数预设 ============
def default_class_params(scale: int = 1000) -> List[TrafficClassParams]:
    """
    按缩放因子生成四类流量参数

    对象数除以 scale（至少为1）；中位大小超过 scale 的类别（P2P、视频），
    单对象分块数也除以 scale，使目录总分块数保持在桌面仿真可承受的量级。
    """
    if scale < 1:
        raise WorkloadError(f"缩放因子必须为正: {scale}")
    params = []
    for traffic_class, (count, (med, max_chunks, std), (mean, max_req, req_std), alpha) in TRAFFIC_CLASS_PRESETS.items():
        if med > scale:
            max_chunks = max(1, max_chunks // scale)
            med, std = med / scale, std / scale
        params.append(TrafficClassParams(
            traffic_class=traffic_class,
            object_count=max(1, count // scale),
            # P2P 的中位数略大于最大值，截到最大值
            size=SizeDistribution(median=max(1.0, min(med, max_chunks)), max=max_chunks, std_dev=std),
            popularity=PopularityParams(mean=mean, max=max_req, std_dev=req_std),
            zipf_alpha=alpha,
        ))
    return params


# ============ 目录生成 ============
def lognormal_sigma(median: float, std_dev: float) -> float:
    """由中位数与标准差求对数正态的 σ：sd² = m²·x·(x-1)，x = exp(σ²)"""
    ratio = std_dev / median
    x = (1.0 + math.sqrt(1.0 + 4.0 * ratio * ratio)) / 2.0
    return math.sqrt(math.log(x))


def sample_sizes(size: SizeDistribution, count: int, rng: np.random.Generator) -> np.ndarray:
    """对数正态抽样后取整并截断到 [1, max]；max 另受分块计数器上限约束"""
    upper = min(size.max, MAX_CHUNK_RANK)
    if size.fixed:
        return np.full(count, int(np.clip(round(size.median), 1, upper)), dtype=np.int64)
    draws = rng.lognormal(mean=math.log(size.median), sigma=lognormal_sigma(size.median, size.std_dev), size=count)
    return np.clip(np.rint(draws), 1, upper).astype(np.int64)


def generate_catalog(params: Sequence[TrafficClassParams], seed: int = 0) -> Catalog:
    """
    生成对象目录

    Args:
        params: 各流量类别参数
        seed: 随机种子

    Returns:
        Catalog，对象名形如 "web/000123"
    """
    if not params:
        raise WorkloadError("流量类别参数不能为空")
    for p in params:
        if p.size.median > p.size.max:
            raise WorkloadError(f"{p.traffic_class.value}: median={p.size.median} 大于 max={p.size.max}")

    rng = np.random.default_rng(seed)
    objects: Dict[str, CatalogEntry] = {}
    for p in params:
        sizes = sample_sizes(p.size, p.object_count, rng)
        for index, size in enumerate(sizes):
            object_id = f"{p.traffic_class.value}/{index:06d}"
            objects[object_id] = CatalogEntry(object_id, p.traffic_class, int(size))

    catalog = Catalog(objects)
    logger.info(f"[Workload] 目录生成完成: {len(catalog)} 个对象, {catalog.total_chunks} 个分块")
    return catalog


# ============ 流行度 ============
class ZipfSampler:
    """有限 Zipf 分布：P(k) ∝ k^(-alpha)，k ∈ [1, n]"""

    def __init__(self, n: int, alpha: float):
        if n < 1:
            raise WorkloadError(f"Zipf 取值个数必须 >= 1: {n}")
        if alpha < 0:
            raise WorkloadError(f"Zipf 指数不能为负: {alpha}")
        self.n = n
        self.alpha = alpha
        weights = np.arange(1, n + 1, dtype=np.float64) ** (-alpha)
        self.pmf = weights / weights.sum()
        self._cdf = np.cumsum(self.pmf)
        self._cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        u = rng.random(size)
        ranks = np.searchsorted(self._cdf, u, side="right") + 1
        ranks = np.minimum(ranks, self.n)
        return int(ranks) if size is None else ranks


def zipf_sample(n: int, alpha: float, rng: np.random.Generator) -> int:
    """按 Zipf 分布抽取一个排名（1 最热门）"""
    return ZipfSampler(n, alpha).sample(rng)


# ============ 请求生成 ============
def generate_requests(
    catalog: Catalog,
    params: Sequence[TrafficClassParams],
    receiver_count: int,
    requests_per_receiver: int,
    seed: int = 0,
) -> Trace:
    """
    生成各接收者的对象级请求序列

    每个请求先按类别请求量占比选类别，再在该类别的流行度排名（按种子打乱）
    上做 Zipf 抽样；所有请求打乱后按块分给各接收者。

    Args:
        catalog: 对象目录
        params: 流量类别参数（提供请求占比与 Zipf 指数）
        receiver_count: 接收者数
        requests_per_receiver: 每个接收者的请求数
        seed: 随机种子

    Returns:
        Trace
    """
    if len(catalog) == 0:
        raise WorkloadError("目录为空，无法生成请求")

    receivers: Dict[int, List[str]] = {receiver: [] for receiver in range(receiver_count)}
    total = receiver_count * requests_per_receiver
    if total == 0:
        return Trace(receivers, seed)

    rng = np.random.default_rng(seed)
    by_class = catalog.by_class()
    active = [p for p in params if p.traffic_class in by_class]
    if not active:
        raise WorkloadError("流量类别参数与目录中的对象类别没有交集")

    weights = np.array([p.request_weight for p in active], dtype=np.float64)
    if weights.sum() <= 0:
        raise WorkloadError("各类别请求占比之和必须为正")
    shares = weights / weights.sum()

    class_of_request = rng.choice(len(active), size=total, p=shares)
    requests = np.empty(total, dtype=object)
    for class_index, p in enumerate(active):
        mask = class_of_request == class_index
        count = int(mask.sum())
        if count == 0:
            continue
        ranking = rng.permutation(np.array(by_class[p.traffic_class], dtype=object))
        ranks = ZipfSampler(len(ranking), p.zipf_alpha).sample(rng, count)
        requests[mask] = ranking[ranks - 1]

    requests = rng.permutation(requests)
    for receiver in range(receiver_count):
        start = receiver * requests_per_receiver
        receivers[receiver] = [str(obj) for obj in requests[start:start + requests_per_receiver]]

    logger.info(f"[Workload] 请求序列生成完成: {receiver_count} 个接收者, 共 {total} 个对象请求")
    return Trace(receivers, seed)


# ============ 文件读写 ============
def save_catalog(catalog: Catalog, path: Path) -> None:
    catalog.to_frame().to_csv(path, index=False)


def load_catalog(path: Path) -> Catalog:
    frame = _read_csv(path, CATALOG_COLUMNS)
    objects: Dict[str, CatalogEntry] = {}
    for object_id, traffic_class, size in zip(frame["object_id"], frame["class"], frame["size_chunks"]):
        object_id, size = str(object_id).strip(), int(size)
        if not 1 <= size <= MAX_CHUNK_RANK:
            raise WorkloadError(f"{path}: 对象 {object_id} 的大小 {size} 不在 [1, {MAX_CHUNK_RANK}] 之间")
        if object_id in objects:
            raise WorkloadError(f"{path}: 对象 {object_id} 重复")
        objects[object_id] = CatalogEntry(object_id, TrafficClass(str(traffic_class).strip()), size)
    return Catalog(objects)


def save_trace(trace: Trace, path: Path) -> None:
    trace.to_frame().to_csv(path, index=False)


def load_trace(path: Path, seed: int = 0) -> Trace:
    frame = _read_csv(path, TRACE_COLUMNS).sort_values(["receiver_id", "seq_no"], kind="stable")
    receivers: Dict[int, List[str]] = {}
    for receiver, group in frame.groupby("receiver_id", sort=True):
        receivers[int(receiver)] = [str(obj) for obj in group["object_id"]]
    return Trace(receivers, seed)


def _read_csv(path: Path, columns: List[str]) -> pd.DataFrame:
    """读取带表头的逗号分隔文件，列名两侧空白忽略"""
    frame = pd.read_csv(path, skipinitialspace=True, dtype={"object_id": str})
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise WorkloadError(f"{path}: 缺少列 {missing}")
    return frame[columns]
