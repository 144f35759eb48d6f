from typing import Optional

from backend.core.cost_model import CacheCapacity, CostModel
from backend.models.schemas import CacheScheme, OpcOptions
from .base import (
    BaseChunkCache,
    CacheValidationError,
    Chunk,
    ChunkId,
    InsertOutcome,
    IntegrityReport,
    LookupOutcome,
    LookupResult,
    NoVictimError,
    make_chunk_id,
)
from .lru_cache import LruChunkCache
from .opc_cache import OpcCache

CACHE_SCHEMES = {
    CacheScheme.LRU: LruChunkCache,
    CacheScheme.OPC: OpcCache,
}


def create_cache(
    scheme: CacheScheme,
    capacity: CacheCapacity,
    opc_options: Optional[OpcOptions] = None,
    cost: Optional[CostModel] = None,
) -> BaseChunkCache:
    """按方案名创建缓存实例"""
    if scheme == CacheScheme.OPC:
        options = opc_options or OpcOptions()
        return OpcCache(
            capacity,
            cost=cost,
            allocator=options.allocator,
            new_object_placement=options.new_object_placement,
            object_policy=options.object_policy,
        )
    return CACHE_SCHEMES[scheme](capacity, cost=cost)


__all__ = [
    "BaseChunkCache",
    "CacheValidationError",
    "Chunk",
    "ChunkId",
    "InsertOutcome",
    "IntegrityReport",
    "LookupOutcome",
    "LookupResult",
    "NoVictimError",
    "make_chunk_id",
    "LruChunkCache",
    "OpcCache",
    "CACHE_SCHEMES",
    "create_cache",
]
