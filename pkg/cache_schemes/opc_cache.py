"""
OPC - 面向对象的分组缓存

结构：
1. L1 索引（快内存）：每个对象一个表项 -> (last_chunk_id, 尾分块槽位)
2. L2 槽位数组（慢内存）：每槽一个分块 + 指向同对象前一分块的 prev_slot，
   空闲槽位通过 prev_slot 串成空闲链表
3. 对象级排序链表（LRU / FIFO / LFU）：决定丢哪个对象的尾分块 / 淘汰哪个对象

保证：每个对象总是缓存从第1块到第 last_chunk_id 块，中间没有空洞
"""
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Tuple

from loguru import logger

from backend.core.cost_model import AccessCause, CacheCapacity, CostModel
from backend.models.schemas import AllocatorMode, NewObjectPlacement, ObjectPolicy
from .base import (
    DEFAULT_MSS_BYTES,
    MAX_CHUNK_RANK,
    BaseChunkCache,
    Chunk,
    ChunkId,
    InsertOutcome,
    IntegrityReport,
    LookupOutcome,
    LookupResult,
    NoVictimError,
    ObjectId,
)


@dataclass(slots=True)
class Slot:
    """L2 槽位；在空闲链表上时 prev_slot 指向下一个空闲槽位"""
    index: int
    chunk: Optional[Chunk] = None
    prev_slot: Optional[int] = None


@dataclass(slots=True)
class L1Entry:
    object_id: ObjectId
    last_chunk_id: int
    tail_slot: int
    region: Optional[int] = None  # 仅固定分区模式使用
    hits: int = 0  # 准入以来的命中次数，LFU 排序用


class OpcCache(BaseChunkCache):
    """OPC 缓存"""

    def __init__(
        self,
        capacity: CacheCapacity,
        cost: Optional[CostModel] = None,
        allocator: AllocatorMode = AllocatorMode.DYNAMIC,
        new_object_placement: NewObjectPlacement = NewObjectPlacement.HEAD,
        object_policy: ObjectPolicy = ObjectPolicy.LRU,
        mss_bytes: int = DEFAULT_MSS_BYTES,
    ):
        super().__init__("OPC", capacity, cost)
        self.allocator = allocator
        self.new_object_placement = new_object_placement
        self.object_policy = object_policy
        self.mss_bytes = mss_bytes

        self._l1: Dict[ObjectId, L1Entry] = {}
        # 末尾为链表头，开头为链表尾；LRU/FIFO 下尾部即下一个受害者
        self._object_lru: "OrderedDict[ObjectId, None]" = OrderedDict()
        self._slots: List[Slot] = [Slot(i) for i in range(capacity.l2_slots)]

        self._free_head: Optional[int] = None
        self._free_count = 0
        self._region_size = 0
        self._free_regions: Deque[int] = deque()

        if allocator == AllocatorMode.DYNAMIC:
            for slot in self._slots[:-1]:
                slot.prev_slot = slot.index + 1
            self._free_head = 0 if self._slots else None
            self._free_count = len(self._slots)
            self._l1_limit = capacity.l1_slots if self._slots else 0
        else:
            # 每个对象一块固定大小的连续区域
            if capacity.l1_slots and capacity.l2_slots:
                self._region_size = max(1, capacity.l2_slots // capacity.l1_slots)
            region_count = (
                min(capacity.l1_slots, capacity.l2_slots // self._region_size)
                if self._region_size else 0
            )
            self._free_regions = deque(range(region_count))
            self._l1_limit = region_count

        logger.debug(
            f"[OpcCache] 初始化: l1={capacity.l1_slots}, l2={capacity.l2_slots}, "
            f"allocator={allocator.value}, policy={object_policy.value}"
        )

    # ========== 查找 ==========
    def lookup(self, chunk_id: ChunkId) -> LookupResult:
        entry = self._l1.get(chunk_id.object_id)
        if entry is None or chunk_id.rank > entry.last_chunk_id:
            self.cost.charge(AccessCause.MISS_LOOKUP, sram=1)
            return LookupResult(LookupOutcome.MISS, 1, 0)

        hops = entry.last_chunk_id - chunk_id.rank
        if self.allocator == AllocatorMode.DYNAMIC:
            # 从尾分块沿 prev_slot 回溯
            index = entry.tail_slot
            for _ in range(hops):
                index = self._slots[index].prev_slot
            dram = 1 + hops
        else:
            index = entry.tail_slot - hops
            dram = 1

        self.cost.charge(AccessCause.HIT, sram=1, dram=dram)
        entry.hits += 1
        if self.object_policy == ObjectPolicy.LRU:
            self._object_lru.move_to_end(chunk_id.object_id)
        return LookupResult(LookupOutcome.HIT, 1, dram, self._slots[index].chunk)

    # ========== 插入 ==========
    def insert(self, chunk: Chunk) -> InsertOutcome:
        chunk.validate(self.mss_bytes)
        object_id, rank = chunk.id.object_id, chunk.id.rank
        entry = self._l1.get(object_id)

        if entry is None:
            if rank != 1:
                return self._ignore(InsertOutcome.IGNORED_OUT_OF_SEQUENCE)
            if self._l1_limit == 0:
                return self._ignore(InsertOutcome.IGNORED_NO_CAPACITY)
            if len(self._l1) >= self._l1_limit:
                self.evict_tail_object()

            region = None
            if self.allocator == AllocatorMode.DYNAMIC:
                index = self._allocate(exclude=object_id)
            else:
                region = self._free_regions.popleft()
                index = region * self._region_size

            slot = self._slots[index]
            slot.chunk = chunk
            slot.prev_slot = None
            self._l1[object_id] = L1Entry(object_id, 1, index, region)
            self._object_lru[object_id] = None
            if self.new_object_placement == NewObjectPlacement.TAIL:
                self._object_lru.move_to_end(object_id, last=False)
            self.cost.charge(AccessCause.INSERT, sram=1, dram=1)
            return InsertOutcome.STORED_NEW

        if rank <= entry.last_chunk_id:
            return self._ignore(InsertOutcome.IGNORED_DUPLICATE)
        if rank != entry.last_chunk_id + 1:
            return self._ignore(InsertOutcome.IGNORED_OUT_OF_SEQUENCE)

        if self.allocator == AllocatorMode.DYNAMIC:
            try:
                index = self._allocate(exclude=object_id)
            except NoVictimError:
                # 偷自己的尾分块会立刻产生空洞
                return self._ignore(InsertOutcome.IGNORED_SELF_VICTIM)
            self._slots[index].prev_slot = entry.tail_slot
        else:
            if entry.last_chunk_id >= self._region_size:
                return self._ignore(InsertOutcome.IGNORED_OUT_OF_SPACE)
            index = entry.tail_slot + 1

        self._slots[index].chunk = chunk
        entry.tail_slot = index
        entry.last_chunk_id += 1
        # 追加的分块继承对象当前的 LRU 位置
        self.cost.charge(AccessCause.INSERT, sram=1, dram=1)
        return InsertOutcome.STORED_APPEND

    def _ignore(self, outcome: InsertOutcome) -> InsertOutcome:
        self.cost.charge(AccessCause.INSERT, sram=1)
        return outcome

    def _allocate(self, exclude: ObjectId) -> int:
        """取空闲链表头；没有空闲槽位时偷对象 LRU 尾部对象的最后一块"""
        if self._free_head is None:
            return self.evict_tail_chunk(exclude)
        index = self._free_head
        slot = self._slots[index]
        self._free_head = slot.prev_slot
        slot.prev_slot = None
        self._free_count -= 1
        return index

    # ========== 驱逐 ==========
    def _victim(self, exclude: Optional[ObjectId] = None) -> Optional[ObjectId]:
        """从链表尾部起第一个可选对象；LFU 取命中最少者，同频时越靠尾越先"""
        candidates = (o for o in self._object_lru if o != exclude)
        if self.object_policy == ObjectPolicy.LFU:
            return min(candidates, key=lambda o: self._l1[o].hits, default=None)
        return next(candidates, None)

    def evict_tail_chunk(self, exclude: Optional[ObjectId] = None) -> int:
        """
        摘下受害对象（跳过 exclude）的最后一个分块

        Args:
            exclude: 不允许作为受害者的对象（正在插入的对象）

        Returns:
            被释放、可立即复用的槽位下标

        Raises:
            NoVictimError: 没有可选的受害者
        """
        victim = self._victim(exclude)
        if victim is None:
            raise NoVictimError(f"没有可偷取分块的对象 (exclude={exclude})")

        entry = self._l1[victim]
        index = entry.tail_slot
        slot = self._slots[index]
        entry.last_chunk_id -= 1
        if self.allocator == AllocatorMode.DYNAMIC:
            entry.tail_slot = slot.prev_slot
        else:
            entry.tail_slot -= 1
        slot.chunk = None
        slot.prev_slot = None

        if entry.last_chunk_id == 0:
            del self._l1[victim]
            del self._object_lru[victim]
            if entry.region is not None:
                self._free_regions.append(entry.region)
        self.cost.charge(AccessCause.EVICT, sram=1, dram=1)
        return index

    def evict_tail_object(self) -> int:
        """
        淘汰受害对象整体，其分块链整体挂到空闲链表头

        Returns:
            释放的槽位数

        Raises:
            NoVictimError: 缓存为空
        """
        victim = self._victim()
        if victim is None:
            raise NoVictimError("缓存为空，无对象可淘汰")

        del self._object_lru[victim]
        entry = self._l1.pop(victim)
        freed = entry.last_chunk_id

        if self.allocator == AllocatorMode.DYNAMIC:
            index = entry.tail_slot
            while True:
                slot = self._slots[index]
                slot.chunk = None
                if slot.prev_slot is None:
                    # 第1块接到原空闲链表头
                    slot.prev_slot = self._free_head
                    break
                index = slot.prev_slot
            self._free_head = entry.tail_slot
            self._free_count += freed
            self.cost.charge(AccessCause.EVICT, sram=freed, dram=1)
        else:
            base = entry.region * self._region_size
            for slot in self._slots[base:base + freed]:
                slot.chunk = None
            self._free_regions.append(entry.region)
            self.cost.charge(AccessCause.EVICT, sram=1)
        return freed

    # ========== 状态查询 ==========
    @property
    def occupied_slots(self) -> int:
        if self.allocator == AllocatorMode.DYNAMIC:
            return len(self._slots) - self._free_count
        return sum(entry.last_chunk_id for entry in self._l1.values())

    @property
    def free_list_length(self) -> int:
        return self._free_count

    @property
    def free_head(self) -> Optional[int]:
        return self._free_head

    @property
    def object_count(self) -> int:
        return len(self._l1)

    def entry(self, object_id: ObjectId) -> Optional[L1Entry]:
        return self._l1.get(object_id)

    def slot(self, index: int) -> Slot:
        return self._slots[index]

    def object_order(self) -> List[ObjectId]:
        """对象 LRU 顺序，从头（最有价值）到尾"""
        return list(reversed(self._object_lru))

    def cached_chunks(self) -> Dict[ObjectId, Tuple[int, ...]]:
        return {
            object_id: tuple(range(1, self._l1[object_id].last_chunk_id + 1))
            for object_id in sorted(self._l1)
        }

    def dump_state(self) -> List[Dict[str, object]]:
        return [
            {
                "object": object_id,
                "last_chunk_id": self._l1[object_id].last_chunk_id,
                "lru_position": position,
            }
            for position, object_id in enumerate(self.object_order())
        ]

    def verify_integrity(self) -> IntegrityReport:
        """检查槽位守恒、链无环、无空洞、Σlast=占用数、LRU 与 L1 一一对应"""
        report = IntegrityReport()
        if self.allocator == AllocatorMode.DYNAMIC:
            self._verify_linked(report)
        else:
            self._verify_fixed(report)

        report.occupied = sum(1 for slot in self._slots if slot.chunk is not None)
        total_last = sum(entry.last_chunk_id for entry in self._l1.values())
        if total_last != report.occupied:
            report.violations.append(f"Σlast_chunk_id={total_last} 与占用槽位数 {report.occupied} 不一致")
        if report.occupied + report.free != len(self._slots):
            report.violations.append(
                f"槽位不守恒: occupied={report.occupied} + free={report.free} != {len(self._slots)}"
            )
        if set(self._object_lru) != set(self._l1) or len(self._object_lru) != len(self._l1):
            report.violations.append("对象LRU链表与L1索引不一致")
        if len(self._l1) > self._l1_limit:
            report.violations.append(f"L1表项数 {len(self._l1)} 超过上限 {self._l1_limit}")
        return report

    def _verify_linked(self, report: IntegrityReport) -> None:
        seen: Dict[int, str] = {}

        index = self._free_head
        while index is not None:
            if index in seen:
                report.violations.append(f"空闲链表在槽位 {index} 处成环")
                break
            seen[index] = "<free>"
            if self._slots[index].chunk is not None:
                report.violations.append(f"空闲槽位 {index} 仍持有分块")
            report.free += 1
            index = self._slots[index].prev_slot
        if report.free != self._free_count:
            report.violations.append(f"空闲计数 {self._free_count} 与空闲链表长度 {report.free} 不一致")

        for object_id, entry in self._l1.items():
            if not 1 <= entry.last_chunk_id <= MAX_CHUNK_RANK:
                report.violations.append(f"{object_id}: last_chunk_id={entry.last_chunk_id} 越界")
            expected = entry.last_chunk_id
            index = entry.tail_slot
            while index is not None:
                if index in seen:
                    report.violations.append(f"{object_id}: 槽位 {index} 重复出现（链成环或与 {seen[index]} 交叠）")
                    break
                seen[index] = object_id
                chunk = self._slots[index].chunk
                if chunk is None or chunk.id.object_id != object_id or chunk.id.rank != expected:
                    report.violations.append(f"{object_id}: 槽位 {index} 处期望第 {expected} 块")
                expected -= 1
                index = self._slots[index].prev_slot
            else:
                if expected != 0:
                    report.violations.append(f"{object_id}: 链长度与 last_chunk_id 不符（缺 {expected} 块）")

    def _verify_fixed(self, report: IntegrityReport) -> None:
        for object_id, entry in self._l1.items():
            base = entry.region * self._region_size
            if entry.tail_slot != base + entry.last_chunk_id - 1:
                report.violations.append(f"{object_id}: 尾槽位 {entry.tail_slot} 不在区域末端")
            for offset in range(self._region_size):
                chunk = self._slots[base + offset].chunk
                if offset < entry.last_chunk_id:
                    if chunk is None or chunk.id.object_id != object_id or chunk.id.rank != offset + 1:
                        report.violations.append(f"{object_id}: 区域偏移 {offset} 处期望第 {offset + 1} 块")
        report.free = sum(1 for slot in self._slots if slot.chunk is None)
