"""
访存计费模型
SRAM/DRAM 访问计数按 (存储层级, 原因) 累加，延迟只由计数推导，不做实测
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

from backend.config import settings
from backend.core.errors import CacheValidationError
from backend.models.schemas import CacheScheme, MemoryConfig


class MemoryTier(str, Enum):
    SRAM = "sram"
    DRAM = "dram"


class AccessCause(str, Enum):
    INSERT = "insert"
    EVICT = "evict"
    HIT = "hit"
    MISS_LOOKUP = "miss_lookup"


@dataclass(frozen=True)
class CacheCapacity:
    """快内存索引槽位数(l1) 与 慢内存分块槽位数(l2)"""
    l1_slots: int
    l2_slots: int

    @classmethod
    def zero(cls) -> "CacheCapacity":
        return cls(0, 0)

    @property
    def item_ratio(self) -> float:
        return self.l2_slots / self.l1_slots if self.l1_slots else 0.0


def entry_bytes_for(scheme: CacheScheme) -> int:
    """LRU 每个分块一个40字节表项；OPC 多2字节存放已缓存分块数"""
    if scheme == CacheScheme.LRU:
        return settings.LRU_ENTRY_BYTES
    return settings.OPC_ENTRY_BYTES


def capacity_from_config(cfg: MemoryConfig, scheme: CacheScheme) -> CacheCapacity:
    """
    由内存配置推导槽位数

    Args:
        cfg: 每台路由器的内存配置
        scheme: 缓存方案

    Returns:
        CacheCapacity，LRU 方案的 l2 被截断到 l1（索引与分块一一对应）

    Raises:
        CacheValidationError: 推导出的任一槽位数为0
    """
    entry_bytes = cfg.entry_bytes or entry_bytes_for(scheme)
    l1_slots = cfg.sram_bytes // entry_bytes
    l2_slots = cfg.dram_bytes // cfg.mss_bytes
    if l1_slots == 0 or l2_slots == 0:
        raise CacheValidationError(
            f"内存配置容量为0: sram_bytes={cfg.sram_bytes}, dram_bytes={cfg.dram_bytes}, "
            f"entry_bytes={entry_bytes}, mss_bytes={cfg.mss_bytes}"
        )
    if scheme == CacheScheme.LRU:
        l2_slots = min(l2_slots, l1_slots)
    return CacheCapacity(l1_slots=l1_slots, l2_slots=l2_slots)


def memory_for_fraction(
    fast_fraction: float,
    slow_ratio: float,
    catalog_chunks: int,
    mss_bytes: Optional[int] = None,
) -> Optional[MemoryConfig]:
    """
    按目录分块数的比例换算内存配置

    快内存条目数按 LRU 表项粒度计：fast_items = round(fast_fraction × catalog_chunks)（至少1），
    SRAM = fast_items × 40B，DRAM = round(fast_items × slow_ratio) × MSS。
    比例为0或目录为空时返回 None，表示不部署缓存。
    """
    if fast_fraction <= 0 or catalog_chunks <= 0:
        return None
    mss = mss_bytes or settings.MSS_BYTES
    fast_items = max(1, round(fast_fraction * catalog_chunks))
    slow_items = max(1, round(fast_items * slow_ratio))
    return MemoryConfig(
        sram_bytes=fast_items * settings.LRU_ENTRY_BYTES,
        dram_bytes=slow_items * mss,
        mss_bytes=mss,
    )


def capacity_from_fraction(
    fast_fraction: float,
    slow_ratio: float,
    catalog_chunks: int,
    scheme: CacheScheme,
) -> CacheCapacity:
    """fast_fraction 模式下的槽位数；太小以致 OPC 放不下一个表项时仍保留1个"""
    memory = memory_for_fraction(fast_fraction, slow_ratio, catalog_chunks)
    if memory is None:
        return CacheCapacity.zero()
    entry_bytes = entry_bytes_for(scheme)
    l1_slots = max(1, memory.sram_bytes // entry_bytes)
    l2_slots = memory.dram_bytes // memory.mss_bytes
    if scheme == CacheScheme.LRU:
        l2_slots = min(l2_slots, l1_slots)
    return CacheCapacity(l1_slots=l1_slots, l2_slots=l2_slots)


@dataclass
class CostModel:
    """访存计数器，一个实例只归属一个缓存"""
    sram_ns: float = field(default_factory=lambda: settings.SRAM_ACCESS_NS)
    dram_ns: float = field(default_factory=lambda: settings.DRAM_ACCESS_NS)
    counters: Dict[Tuple[MemoryTier, AccessCause], int] = field(default_factory=dict)

    def record_access(self, tier: MemoryTier, cause: AccessCause, count: int = 1) -> "CostModel":
        if count < 0:
            raise ValueError(f"访问次数不能为负: {count}")
        if count:
            key = (tier, cause)
            self.counters[key] = self.counters.get(key, 0) + count
        return self

    def charge(self, cause: AccessCause, sram: int = 0, dram: int = 0) -> None:
        """同一原因下同时计 SRAM 与 DRAM"""
        if sram:
            self.record_access(MemoryTier.SRAM, cause, sram)
        if dram:
            self.record_access(MemoryTier.DRAM, cause, dram)

    def count(self, tier: MemoryTier, cause: Optional[AccessCause] = None) -> int:
        if cause is not None:
            return self.counters.get((tier, cause), 0)
        return sum(v for (t, _), v in self.counters.items() if t == tier)

    def tier_latency_ns(self, tier: MemoryTier) -> float:
        unit = self.sram_ns if tier == MemoryTier.SRAM else self.dram_ns
        return self.count(tier) * unit

    @property
    def total_latency_ns(self) -> float:
        return self.tier_latency_ns(MemoryTier.SRAM) + self.tier_latency_ns(MemoryTier.DRAM)

    def summary(self) -> Dict[str, float]:
        """扁平化摘要，用于报告与CSV"""
        result: Dict[str, float] = {}
        for tier in MemoryTier:
            for cause in AccessCause:
                result[f"{tier.value}_{cause.value}"] = self.count(tier, cause)
        result["sram_ns"] = self.tier_latency_ns(MemoryTier.SRAM)
        result["dram_ns"] = self.tier_latency_ns(MemoryTier.DRAM)
        result["total_ns"] = self.total_latency_ns
        return result
