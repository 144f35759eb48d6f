"""
朴素参考模型（测试用 oracle）

不做槽位分配，只维护 对象 -> 连续分块数 与 线性排序列表，
用于与带分配器的实现逐操作比对命中/未命中与 last_chunk_id
"""
from typing import Dict, List, Optional

from backend.models.schemas import NewObjectPlacement, ObjectPolicy
from .base import ChunkId, InsertOutcome, ObjectId


class ReferenceOpcModel:
    """OPC 参考模型：列表下标0为尾部（下一个受害者），末尾为头部"""

    def __init__(
        self,
        l1_slots: int,
        l2_slots: int,
        new_object_placement: NewObjectPlacement = NewObjectPlacement.HEAD,
        object_policy: ObjectPolicy = ObjectPolicy.LRU,
    ):
        self.l1_slots = l1_slots if l2_slots else 0
        self.l2_slots = l2_slots
        self.new_object_placement = new_object_placement
        self.object_policy = object_policy
        self.cached: Dict[ObjectId, int] = {}
        self.hits: Dict[ObjectId, int] = {}
        self.order: List[ObjectId] = []

    @property
    def used(self) -> int:
        return sum(self.cached.values())

    def lookup(self, chunk_id: ChunkId) -> bool:
        last = self.cached.get(chunk_id.object_id, 0)
        hit = chunk_id.rank <= last
        if hit:
            self.hits[chunk_id.object_id] += 1
        if hit and self.object_policy == ObjectPolicy.LRU:
            self.order.remove(chunk_id.object_id)
            self.order.append(chunk_id.object_id)
        return hit

    def _victim(self, exclude: Optional[ObjectId] = None) -> Optional[ObjectId]:
        candidates = [o for o in self.order if o != exclude]
        if not candidates:
            return None
        if self.object_policy == ObjectPolicy.LFU:
            fewest = min(self.hits[o] for o in candidates)
            return next(o for o in candidates if self.hits[o] == fewest)
        return candidates[0]

    def _drop(self, victim: ObjectId) -> None:
        del self.cached[victim]
        del self.hits[victim]
        self.order.remove(victim)

    def _steal(self, exclude: ObjectId) -> bool:
        victim = self._victim(exclude)
        if victim is None:
            return False
        self.cached[victim] -= 1
        if self.cached[victim] == 0:
            self._drop(victim)
        return True

    def insert(self, chunk_id: ChunkId) -> InsertOutcome:
        object_id, rank = chunk_id.object_id, chunk_id.rank
        if object_id not in self.cached:
            if rank != 1:
                return InsertOutcome.IGNORED_OUT_OF_SEQUENCE
            if self.l1_slots == 0:
                return InsertOutcome.IGNORED_NO_CAPACITY
            if len(self.cached) >= self.l1_slots:
                self._drop(self._victim())
            if self.used >= self.l2_slots:
                self._steal(object_id)
            self.cached[object_id] = 1
            self.hits[object_id] = 0
            if self.new_object_placement == NewObjectPlacement.TAIL:
                self.order.insert(0, object_id)
            else:
                self.order.append(object_id)
            return InsertOutcome.STORED_NEW

        last = self.cached[object_id]
        if rank <= last:
            return InsertOutcome.IGNORED_DUPLICATE
        if rank != last + 1:
            return InsertOutcome.IGNORED_OUT_OF_SEQUENCE
        if self.used >= self.l2_slots and not self._steal(object_id):
            return InsertOutcome.IGNORED_SELF_VICTIM
        self.cached[object_id] = last + 1
        return InsertOutcome.STORED_APPEND


class ReferenceLruModel:
    """暴力 LRU：列表末尾为最近使用"""

    def __init__(self, size: int):
        self.size = size
        self.items: List[ChunkId] = []

    def lookup(self, chunk_id: ChunkId) -> bool:
        if chunk_id not in self.items:
            return False
        self.items.remove(chunk_id)
        self.items.append(chunk_id)
        return True

    def insert(self, chunk_id: ChunkId) -> InsertOutcome:
        if chunk_id in self.items:
            return InsertOutcome.IGNORED_DUPLICATE
        if self.size == 0:
            return InsertOutcome.IGNORED_NO_CAPACITY
        outcome = InsertOutcome.STORED
        if len(self.items) >= self.size:
            self.items.pop(0)
            outcome = InsertOutcome.STORED_WITH_EVICTION
        self.items.append(chunk_id)
        return outcome
