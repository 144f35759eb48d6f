from collections import OrderedDict
from typing import Dict, List, Optional, Tuple

from loguru import logger

from backend.core.cost_model import AccessCause, CacheCapacity, CostModel
from .base import (
    DEFAULT_MSS_BYTES,
    BaseChunkCache,
    Chunk,
    ChunkId,
    InsertOutcome,
    IntegrityReport,
    LookupOutcome,
    LookupResult,
    ObjectId,
)


class LruChunkCache(BaseChunkCache):
    """分块级 LRU - 对比基线

    每个缓存分块在快内存中占一个索引表项，快:慢 条目比固定为 1:1，
    因此容量取 min(l1_slots, l2_slots)。
    """

    def __init__(
        self,
        capacity: CacheCapacity,
        cost: Optional[CostModel] = None,
        mss_bytes: int = DEFAULT_MSS_BYTES,
    ):
        super().__init__("LRU", capacity, cost)
        self.mss_bytes = mss_bytes
        self.size = min(capacity.l1_slots, capacity.l2_slots)
        # 末尾为最近使用
        self._index: "OrderedDict[ChunkId, int]" = OrderedDict()
        self._slots: List[Optional[Chunk]] = [None] * self.size
        self._free: List[int] = list(range(self.size - 1, -1, -1))
        logger.debug(f"[LruChunkCache] 初始化: size={self.size}")

    def lookup(self, chunk_id: ChunkId) -> LookupResult:
        index = self._index.get(chunk_id)
        if index is None:
            self.cost.charge(AccessCause.MISS_LOOKUP, sram=1)
            return LookupResult(LookupOutcome.MISS, 1, 0)
        self._index.move_to_end(chunk_id)
        self.cost.charge(AccessCause.HIT, sram=1, dram=1)
        return LookupResult(LookupOutcome.HIT, 1, 1, self._slots[index])

    def insert(self, chunk: Chunk) -> InsertOutcome:
        chunk.validate(self.mss_bytes)
        if chunk.id in self._index:
            # 重复插入不刷新 LRU 位置
            self.cost.charge(AccessCause.INSERT, sram=1)
            return InsertOutcome.IGNORED_DUPLICATE
        if self.size == 0:
            self.cost.charge(AccessCause.INSERT, sram=1)
            return InsertOutcome.IGNORED_NO_CAPACITY

        outcome = InsertOutcome.STORED
        if self._free:
            index = self._free.pop()
        else:
            _, index = self._index.popitem(last=False)
            outcome = InsertOutcome.STORED_WITH_EVICTION

        self._slots[index] = chunk
        self._index[chunk.id] = index
        self.cost.charge(AccessCause.INSERT, sram=1, dram=1)
        return outcome

    @property
    def occupied_slots(self) -> int:
        return len(self._index)

    def __contains__(self, chunk_id: ChunkId) -> bool:
        return chunk_id in self._index

    def chunk_order(self) -> List[ChunkId]:
        """分块 LRU 顺序，从头（最近）到尾"""
        return list(reversed(self._index))

    def cached_chunks(self) -> Dict[ObjectId, Tuple[int, ...]]:
        grouped: Dict[ObjectId, List[int]] = {}
        for chunk_id in self._index:
            grouped.setdefault(chunk_id.object_id, []).append(chunk_id.rank)
        return {object_id: tuple(sorted(grouped[object_id])) for object_id in sorted(grouped)}

    def dump_state(self) -> List[Dict[str, object]]:
        return [
            {"object": chunk_id.object_id, "rank": chunk_id.rank, "lru_position": position}
            for position, chunk_id in enumerate(self.chunk_order())
        ]

    def verify_integrity(self) -> IntegrityReport:
        report = IntegrityReport(occupied=len(self._index), free=len(self._free))
        if report.occupied + report.free != self.size:
            report.violations.append(
                f"槽位不守恒: occupied={report.occupied} + free={report.free} != {self.size}"
            )
        used = set(self._index.values())
        if len(used) != len(self._index):
            report.violations.append("多个分块共用同一槽位")
        if used & set(self._free):
            report.violations.append("空闲槽位仍被索引引用")
        for chunk_id, index in self._index.items():
            chunk = self._slots[index]
            if chunk is None or chunk.id != chunk_id:
                report.violations.append(f"槽位 {index} 内容与索引 {chunk_id} 不一致")
        return report
