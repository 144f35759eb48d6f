"""
OPC 缓存测试：插入规则、偷块与对象淘汰、计费、固定分区模式，
以及与朴素参考模型的逐操作比对
"""
import os
import random

import pytest

from backend.core.cost_model import AccessCause, CacheCapacity, CostModel, MemoryTier
from backend.models.schemas import AllocatorMode, NewObjectPlacement, ObjectPolicy
from cache_schemes import Chunk, ChunkId, InsertOutcome, NoVictimError, OpcCache
from cache_schemes.reference import ReferenceOpcModel

# OPC_RUN_SLOW=1 时按完整操作量运行随机性质测试
RUN_SLOW = os.getenv("OPC_RUN_SLOW") == "1"
PROPERTY_STEPS = 1_000_000 if RUN_SLOW else 20_000
ORACLE_STEPS = 100_000 if RUN_SLOW else 5_000
ORACLE_SEEDS = range(20) if RUN_SLOW else range(5)


def print_separator(title=""):
    """打印分隔线"""
    print("\n" + "=" * 80)
    if title:
        print(f"  {title}")
        print("=" * 80)


def opc(l1: int, l2: int, **kwargs) -> OpcCache:
    return OpcCache(CacheCapacity(l1, l2), cost=CostModel(), **kwargs)


def put(cache, object_id: str, rank: int) -> InsertOutcome:
    return cache.insert(Chunk(ChunkId(object_id, rank)))


def fill(cache, object_id: str, count: int) -> None:
    for rank in range(1, count + 1):
        assert put(cache, object_id, rank).stored


def last_of(cache: OpcCache, object_id: str) -> int:
    entry = cache.entry(object_id)
    return entry.last_chunk_id if entry else 0


# ============ 插入与查找 ============
def test_insert_then_lookup_prefix():
    cache = opc(4, 10)
    assert put(cache, "a", 1) == InsertOutcome.STORED_NEW
    assert put(cache, "a", 2) == InsertOutcome.STORED_APPEND
    assert put(cache, "a", 3) == InsertOutcome.STORED_APPEND
    assert [cache.lookup(ChunkId("a", r)).hit for r in (1, 2, 3, 4)] == [True, True, True, False]
    assert cache.lookup(ChunkId("zzz", 1)).hit is False
    assert cache.cached_chunks() == {"a": (1, 2, 3)}
    assert cache.occupied_slots == 3


def test_new_object_must_start_at_rank_one():
    cache = opc(4, 10)
    assert put(cache, "a", 2) == InsertOutcome.IGNORED_OUT_OF_SEQUENCE
    assert cache.object_count == 0
    assert cache.cost.count(MemoryTier.SRAM, AccessCause.INSERT) == 1
    assert cache.cost.count(MemoryTier.DRAM) == 0


def test_out_of_order_chunk_ignored():
    cache = opc(4, 100)
    fill(cache, "a", 45)
    assert put(cache, "a", 50) == InsertOutcome.IGNORED_OUT_OF_SEQUENCE
    assert last_of(cache, "a") == 45
    assert not cache.lookup(ChunkId("a", 50)).hit


def test_duplicate_chunk_ignored():
    cache = opc(4, 10)
    fill(cache, "a", 2)
    assert put(cache, "a", 1) == InsertOutcome.IGNORED_DUPLICATE
    assert put(cache, "a", 2) == InsertOutcome.IGNORED_DUPLICATE
    assert last_of(cache, "a") == 2


def test_hit_walks_prev_chain():
    cache = opc(4, 10)
    fill(cache, "a", 5)
    result = cache.lookup(ChunkId("a", 2))
    assert result.hit
    assert result.chunk.id == ChunkId("a", 2)
    assert result.dram_accesses == 4
    assert cache.cost.count(MemoryTier.DRAM, AccessCause.HIT) == 4
    assert cache.cost.count(MemoryTier.SRAM, AccessCause.HIT) == 1


def test_hit_dram_identity():
    cache = opc(4, 10)
    fill(cache, "a", 5)
    ranks = [1, 3, 5, 5, 2]
    for rank in ranks:
        assert cache.lookup(ChunkId("a", rank)).hit
    assert cache.cost.count(MemoryTier.DRAM, AccessCause.HIT) == sum(1 + 5 - r for r in ranks)


def test_miss_charges_one_sram():
    cache = opc(4, 10)
    fill(cache, "a", 1)
    cache.lookup(ChunkId("a", 2))
    cache.lookup(ChunkId("b", 1))
    assert cache.cost.count(MemoryTier.SRAM, AccessCause.MISS_LOOKUP) == 2
    assert cache.cost.count(MemoryTier.DRAM, AccessCause.MISS_LOOKUP) == 0


# ============ 偷块与对象淘汰 ============
def test_full_l2_steals_tail_object_last_chunk():
    cache = opc(4, 4)
    fill(cache, "a", 2)
    fill(cache, "b", 2)
    assert put(cache, "c", 1) == InsertOutcome.STORED_NEW
    assert last_of(cache, "a") == 1
    assert last_of(cache, "b") == 2
    assert not cache.lookup(ChunkId("a", 2)).hit
    assert cache.cost.count(MemoryTier.SRAM, AccessCause.EVICT) == 1
    assert cache.cost.count(MemoryTier.DRAM, AccessCause.EVICT) == 1
    assert cache.verify_integrity().ok


def test_steal_of_last_chunk_removes_object():
    cache = opc(4, 2)
    fill(cache, "a", 1)
    fill(cache, "b", 1)
    put(cache, "c", 1)
    assert cache.entry("a") is None
    assert cache.object_count == 2
    assert cache.verify_integrity().ok


def test_append_skips_own_object_as_victim():
    cache = opc(4, 3)
    fill(cache, "b", 1)
    fill(cache, "a", 2)
    # b 位于 LRU 尾部，但不能偷自己的块
    assert put(cache, "b", 2) == InsertOutcome.STORED_APPEND
    assert last_of(cache, "b") == 2
    assert last_of(cache, "a") == 1


def test_self_victim_ignored():
    cache = opc(4, 3)
    fill(cache, "a", 3)
    assert put(cache, "a", 4) == InsertOutcome.IGNORED_SELF_VICTIM
    assert last_of(cache, "a") == 3
    assert cache.verify_integrity().ok


def test_full_l1_evicts_tail_object():
    cache = opc(2, 100)
    fill(cache, "a", 3)
    fill(cache, "b", 2)
    assert put(cache, "c", 1) == InsertOutcome.STORED_NEW
    assert cache.entry("a") is None
    assert cache.object_order() == ["c", "b"]
    # 动态模式：1 次 DRAM + 每块 1 次 SRAM
    assert cache.cost.count(MemoryTier.SRAM, AccessCause.EVICT) == 3
    assert cache.cost.count(MemoryTier.DRAM, AccessCause.EVICT) == 1
    # 被淘汰对象的尾块槽位成为新的空闲链表头
    assert cache.entry("c").tail_slot == 2
    put(cache, "c", 2)
    assert cache.entry("c").tail_slot == 1


def test_evict_tail_object_splices_free_list():
    cache = opc(4, 10)
    fill(cache, "a", 3)
    assert cache.free_head == 3
    assert cache.evict_tail_object() == 3
    assert cache.free_head == 2
    assert cache.free_list_length == 10
    assert cache.slot(0).prev_slot == 3
    assert cache.verify_integrity().ok


def test_eviction_on_empty_cache_raises():
    cache = opc(4, 10)
    with pytest.raises(NoVictimError):
        cache.evict_tail_object()
    with pytest.raises(NoVictimError):
        cache.evict_tail_chunk()


# ============ 对象排序策略 ============
def test_hit_promotes_object():
    cache = opc(2, 100)
    fill(cache, "a", 1)
    fill(cache, "b", 1)
    assert cache.object_order() == ["b", "a"]
    cache.lookup(ChunkId("a", 1))
    assert cache.object_order() == ["a", "b"]
    put(cache, "c", 1)
    assert cache.entry("b") is None
    assert cache.entry("a") is not None


def test_fifo_policy_never_promotes():
    cache = opc(2, 100, object_policy=ObjectPolicy.FIFO)
    fill(cache, "a", 1)
    fill(cache, "b", 1)
    cache.lookup(ChunkId("a", 1))
    assert cache.object_order() == ["b", "a"]
    put(cache, "c", 1)
    assert cache.entry("a") is None


def test_lfu_policy_evicts_least_hit_object():
    cache = opc(3, 30, object_policy=ObjectPolicy.LFU)
    for name in ("a", "b", "c"):
        fill(cache, name, 2)
    for _ in range(3):
        assert cache.lookup(ChunkId("a", 1)).hit
    assert cache.lookup(ChunkId("c", 2)).hit
    # LFU 命中不改变链表位置
    assert cache.object_order() == ["c", "b", "a"]
    put(cache, "d", 1)
    assert cache.cached_chunks().keys() == {"a", "c", "d"}
    # d 与 c 同为最少命中时，先准入的 c 先出
    assert cache.lookup(ChunkId("d", 1)).hit
    put(cache, "e", 1)
    assert "c" not in cache.cached_chunks()
    assert cache.verify_integrity().ok


def test_lfu_steals_from_least_hit_object():
    cache = opc(3, 4, object_policy=ObjectPolicy.LFU)
    fill(cache, "a", 2)
    fill(cache, "b", 2)
    assert cache.lookup(ChunkId("a", 2)).hit
    assert cache.lookup(ChunkId("a", 1)).hit
    assert cache.lookup(ChunkId("b", 1)).hit
    # 空间已满；b 最近命中但次数更少，被偷最后一块
    assert put(cache, "c", 1) == InsertOutcome.STORED_NEW
    assert last_of(cache, "a") == 2
    assert last_of(cache, "b") == 1
    assert cache.verify_integrity().ok


def test_appended_chunks_inherit_position():
    cache = opc(3, 100)
    fill(cache, "a", 1)
    fill(cache, "b", 1)
    put(cache, "a", 2)
    assert cache.object_order() == ["b", "a"]


def test_tail_placement_for_new_objects():
    cache = opc(2, 100, new_object_placement=NewObjectPlacement.TAIL)
    fill(cache, "a", 1)
    fill(cache, "b", 1)
    assert cache.object_order() == ["a", "b"]
    put(cache, "c", 1)
    assert cache.entry("b") is None
    assert cache.entry("a") is not None


# ============ 固定分区 ============
def test_fixed_allocator_regions():
    cache = opc(2, 10, allocator=AllocatorMode.FIXED)
    fill(cache, "a", 5)
    assert put(cache, "a", 6) == InsertOutcome.IGNORED_OUT_OF_SPACE
    result = cache.lookup(ChunkId("a", 3))
    assert result.hit and result.dram_accesses == 1
    fill(cache, "b", 3)
    assert cache.object_order() == ["b", "a"]
    put(cache, "c", 1)
    assert cache.entry("a") is None
    assert cache.entry("c").region == 0
    # 固定模式淘汰对象只改索引
    assert cache.cost.count(MemoryTier.SRAM, AccessCause.EVICT) == 1
    assert cache.cost.count(MemoryTier.DRAM, AccessCause.EVICT) == 0
    assert cache.verify_integrity().ok


def test_fixed_allocator_with_fewer_slots_than_entries():
    cache = opc(4, 2, allocator=AllocatorMode.FIXED)
    fill(cache, "a", 1)
    fill(cache, "b", 1)
    put(cache, "c", 1)
    assert cache.object_count == 2
    assert put(cache, "c", 2) == InsertOutcome.IGNORED_OUT_OF_SPACE
    assert cache.verify_integrity().ok


@pytest.mark.parametrize("l1, l2", [(0, 0), (5, 0), (0, 5)])
def test_zero_capacity_drops_inserts(l1, l2):
    for allocator in AllocatorMode:
        cache = opc(l1, l2, allocator=allocator)
        assert put(cache, "a", 1) == InsertOutcome.IGNORED_NO_CAPACITY
        assert not cache.lookup(ChunkId("a", 1)).hit
        assert cache.cost.count(MemoryTier.SRAM, AccessCause.INSERT) == 1
        assert cache.cost.count(MemoryTier.DRAM) == 0


# ============ 循环替换 ============
def sequential_pass(cache, object_id: str, size: int) -> int:
    hits = 0
    for rank in range(1, size + 1):
        if cache.lookup(ChunkId(object_id, rank)).hit:
            hits += 1
        else:
            put(cache, object_id, rank)
    return hits


def test_looped_replacement_avoided():
    cache = opc(10, 100)
    assert sequential_pass(cache, "big", 150) == 0
    assert last_of(cache, "big") == 100
    assert sequential_pass(cache, "big", 150) == 100


def test_integrity_reports_corrupted_chain():
    cache = opc(4, 10)
    assert cache.verify_integrity().ok
    fill(cache, "a", 3)
    assert cache.verify_integrity().ok
    # 让第1块指回尾分块，链成环
    head_slot = cache.entry("a").tail_slot - 2
    cache._slots[head_slot].prev_slot = cache.entry("a").tail_slot
    report = cache.verify_integrity()
    assert not report.ok
    assert any("重复出现" in violation for violation in report.violations)


# ============ 性质与参考模型 ============
def random_workload(rng: random.Random, object_count: int, max_size: int):
    return {f"o{i}": rng.randint(1, max_size) for i in range(object_count)}


@pytest.mark.parametrize("allocator", list(AllocatorMode))
@pytest.mark.parametrize("l2", [10, 100, 1000])
def test_no_gap_property(allocator, l2):
    rng = random.Random(l2)
    l1 = max(2, l2 // 8)
    cache = opc(l1, l2, allocator=allocator)
    sizes = random_workload(rng, 3 * l1, max(4, l2 // 3))
    objects = sorted(sizes)
    check_every = max(1, l2 // 10)
    for step in range(PROPERTY_STEPS):
        obj = rng.choice(objects)
        if rng.random() < 0.4:
            cache.lookup(ChunkId(obj, rng.randint(1, sizes[obj])))
        else:
            rank = last_of(cache, obj) + 1 if rng.random() < 0.85 else rng.randint(1, sizes[obj])
            if rank <= sizes[obj]:
                put(cache, obj, rank)
        if step % check_every == 0:
            report = cache.verify_integrity()
            assert report.ok, report.violations
            for object_id, ranks in cache.cached_chunks().items():
                assert ranks == tuple(range(1, last_of(cache, object_id) + 1))
    report = cache.verify_integrity()
    assert report.ok, report.violations
    for object_id in list(cache.cached_chunks()):
        last = last_of(cache, object_id)
        assert cache.lookup(ChunkId(object_id, last)).hit
        assert not cache.lookup(ChunkId(object_id, last + 1)).hit


@pytest.mark.parametrize("placement", list(NewObjectPlacement))
@pytest.mark.parametrize("policy", list(ObjectPolicy))
@pytest.mark.parametrize("seed", ORACLE_SEEDS)
def test_matches_reference_model(seed, policy, placement):
    rng = random.Random(seed)
    l1, l2 = rng.randint(1, 6), rng.randint(1, 30)
    cache = opc(l1, l2, new_object_placement=placement, object_policy=policy)
    reference = ReferenceOpcModel(l1, l2, placement, policy)
    sizes = random_workload(rng, 12, 20)
    objects = sorted(sizes)

    for _ in range(ORACLE_STEPS):
        obj = rng.choice(objects)
        if rng.random() < 0.4:
            cid = ChunkId(obj, rng.randint(1, sizes[obj]))
            assert cache.lookup(cid).hit == reference.lookup(cid)
            continue
        if rng.random() < 0.85:
            rank = reference.cached.get(obj, 0) + 1
        else:
            rank = rng.randint(1, sizes[obj])
        if rank > sizes[obj]:
            continue
        cid = ChunkId(obj, rank)
        assert cache.insert(Chunk(cid)) == reference.insert(cid)

    assert {o: last_of(cache, o) for o in cache.cached_chunks()} == reference.cached
    assert cache.object_order() == list(reversed(reference.order))
    assert cache.verify_integrity().ok


@pytest.mark.parametrize("policy", list(ObjectPolicy))
@pytest.mark.parametrize("seed", range(10))
def test_fixed_allocator_matches_dynamic_when_regions_fit(seed, policy):
    rng = random.Random(100 + seed)
    l1, max_size = rng.randint(1, 6), rng.randint(2, 12)
    # 每个区域都放得下最大对象：固定分区既不越界，链表模式也不会偷块
    dynamic = opc(l1, l1 * max_size, object_policy=policy)
    fixed = opc(l1, l1 * max_size, allocator=AllocatorMode.FIXED, object_policy=policy)
    sizes = random_workload(rng, 3 * l1 + 2, max_size)
    objects = sorted(sizes)

    for step in range(ORACLE_STEPS):
        obj = rng.choice(objects)
        if rng.random() < 0.4:
            cid = ChunkId(obj, rng.randint(1, sizes[obj]))
            assert dynamic.lookup(cid).hit == fixed.lookup(cid)
            continue
        rank = last_of(dynamic, obj) + 1 if rng.random() < 0.85 else rng.randint(1, sizes[obj])
        if rank > sizes[obj]:
            continue
        assert put(dynamic, obj, rank) == put(fixed, obj, rank)
        if step % 500 == 0:
            assert dynamic.cached_chunks() == fixed.cached_chunks()

    assert dynamic.cached_chunks() == fixed.cached_chunks()
    assert dynamic.object_order() == fixed.object_order()
    assert fixed.verify_integrity().ok
    assert dynamic.verify_integrity().ok


def main():
    """主测试函数"""
    print_separator("OPC 缓存测试")
    tests = [
        test_insert_then_lookup_prefix,
        test_new_object_must_start_at_rank_one,
        test_out_of_order_chunk_ignored,
        test_duplicate_chunk_ignored,
        test_hit_walks_prev_chain,
        test_hit_dram_identity,
        test_miss_charges_one_sram,
        test_full_l2_steals_tail_object_last_chunk,
        test_steal_of_last_chunk_removes_object,
        test_append_skips_own_object_as_victim,
        test_self_victim_ignored,
        test_full_l1_evicts_tail_object,
        test_evict_tail_object_splices_free_list,
        test_eviction_on_empty_cache_raises,
        test_hit_promotes_object,
        test_fifo_policy_never_promotes,
        test_lfu_policy_evicts_least_hit_object,
        test_lfu_steals_from_least_hit_object,
        test_appended_chunks_inherit_position,
        test_tail_placement_for_new_objects,
        test_fixed_allocator_regions,
        test_fixed_allocator_with_fewer_slots_than_entries,
        test_looped_replacement_avoided,
        test_integrity_reports_corrupted_chain,
    ]
    for test in tests:
        test()
        print(f"✅ {test.__name__}")
    for seed in ORACLE_SEEDS:
        for policy in ObjectPolicy:
            test_matches_reference_model(seed, policy, NewObjectPlacement.HEAD)
    print("✅ test_matches_reference_model")
    for seed in range(10):
        test_fixed_allocator_matches_dynamic_when_regions_fit(seed, ObjectPolicy.LRU)
    print("✅ test_fixed_allocator_matches_dynamic_when_regions_fit")
    print_separator("测试完成")


if __name__ == "__main__":
    main()
