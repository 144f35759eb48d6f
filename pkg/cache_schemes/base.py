from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from backend.core.cost_model import CacheCapacity, CostModel
from backend.core.errors import CacheValidationError, NoVictimError

# 对象内分块计数器占2字节
MAX_CHUNK_RANK = 2 ** 16
DEFAULT_MSS_BYTES = 1500

ObjectId = str

__all__ = [
    "MAX_CHUNK_RANK",
    "DEFAULT_MSS_BYTES",
    "ObjectId",
    "CacheValidationError",
    "NoVictimError",
    "ChunkId",
    "make_chunk_id",
    "Chunk",
    "LookupOutcome",
    "InsertOutcome",
    "LookupResult",
    "IntegrityReport",
    "BaseChunkCache",
]

@dataclass(frozen=True, slots=True)
class ChunkId:
    """自标识的网络单元：对象名 + 从1开始的序号"""
    object_id: ObjectId
    rank: int

    def __post_init__(self):
        if not self.object_id:
            raise CacheValidationError("对象名不能为空")
        if not 1 <= self.rank <= MAX_CHUNK_RANK:
            raise CacheValidationError(
                f"分块序号必须在 [1, {MAX_CHUNK_RANK}] 之间: {self.object_id}, {self.rank}"
            )

    def __str__(self) -> str:
        return f"{self.object_id}, {self.rank}"


def make_chunk_id(object_id: ObjectId, rank: int) -> ChunkId:
    """
    构造分块标识

    Args:
        object_id: 对象名
        rank: 分块在对象内的序号（从1开始）

    Returns:
        ChunkId

    Raises:
        CacheValidationError: 序号越界或对象名为空
    """
    return ChunkId(object_id, rank)


@dataclass(slots=True)
class Chunk:
    """数据分块（仿真时通常只携带元数据）"""
    id: ChunkId
    size_bytes: int = DEFAULT_MSS_BYTES
    payload: Optional[bytes] = None

    def validate(self, mss_bytes: int = DEFAULT_MSS_BYTES) -> "Chunk":
        if not 1 <= self.size_bytes <= mss_bytes:
            raise CacheValidationError(f"分块大小 {self.size_bytes} 超出 [1, {mss_bytes}]")
        if self.payload is not None and len(self.payload) != self.size_bytes:
            raise CacheValidationError(
                f"分块负载长度 {len(self.payload)} 与 size_bytes={self.size_bytes} 不一致"
            )
        return self


class LookupOutcome(str, Enum):
    HIT = "hit"
    MISS = "miss"


class InsertOutcome(str, Enum):
    """插入结果"""
    STORED_NEW = "stored_new"
    STORED_APPEND = "stored_append"
    STORED = "stored"
    STORED_WITH_EVICTION = "stored_with_eviction"
    IGNORED_OUT_OF_SEQUENCE = "ignored_out_of_sequence"
    IGNORED_DUPLICATE = "ignored_duplicate"
    IGNORED_SELF_VICTIM = "ignored_self_victim"
    IGNORED_OUT_OF_SPACE = "ignored_out_of_space"
    IGNORED_NO_CAPACITY = "ignored_no_capacity"

    @property
    def stored(self) -> bool:
        return self in (
            InsertOutcome.STORED_NEW,
            InsertOutcome.STORED_APPEND,
            InsertOutcome.STORED,
            InsertOutcome.STORED_WITH_EVICTION,
        )


@dataclass(slots=True)
class LookupResult:
    """查找结果，附带本次查找计费的访存次数（含链表跳数）"""
    outcome: LookupOutcome
    sram_accesses: int
    dram_accesses: int
    chunk: Optional[Chunk] = None

    @property
    def hit(self) -> bool:
        return self.outcome is LookupOutcome.HIT


@dataclass
class IntegrityReport:
    """缓存结构自检报告"""
    occupied: int = 0
    free: int = 0
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class BaseChunkCache(ABC):
    """分块缓存基类 - 所有缓存方案的抽象基类"""

    def __init__(self, name: str, capacity: CacheCapacity, cost: Optional[CostModel] = None):
        """
        初始化缓存

        Args:
            name: 方案名称
            capacity: 快/慢内存槽位数
            cost: 访存计费模型（缺省新建一个）
        """
        self.name = name
        self.capacity = capacity
        self.cost = cost or CostModel()

    @abstractmethod
    def lookup(self, chunk_id: ChunkId) -> LookupResult:
        """
        按分块标识查找

        Args:
            chunk_id: 请求的分块

        Returns:
            查找结果（命中/未命中 + 计费）
        """
        pass

    @abstractmethod
    def insert(self, chunk: Chunk) -> InsertOutcome:
        """
        尝试缓存一个经过本节点的数据分块

        Args:
            chunk: 数据分块

        Returns:
            插入结果
        """
        pass

    @abstractmethod
    def cached_chunks(self) -> Dict[ObjectId, Tuple[int, ...]]:
        """当前缓存内容：对象 -> 已缓存的分块序号（升序）"""
        pass

    @abstractmethod
    def dump_state(self) -> List[Dict[str, object]]:
        """调试用状态导出，每行一条结构化记录"""
        pass

    @abstractmethod
    def verify_integrity(self) -> IntegrityReport:
        pass

    @property
    @abstractmethod
    def occupied_slots(self) -> int:
        pass

    def __len__(self) -> int:
        return self.occupied_slots

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(l1_slots={self.capacity.l1_slots}, "
            f"l2_slots={self.capacity.l2_slots}, occupied={self.occupied_slots})"
        )
