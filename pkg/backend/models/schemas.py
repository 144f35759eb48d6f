from enum import Enum
from pathlib import Path
from typing import ClassVar, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from backend.config import settings


# ============ 枚举 ============
class CacheScheme(str, Enum):
    LRU = "lru"
    OPC = "opc"


class PlacementPolicy(str, Enum):
    UNIVERSAL = "universal"
    EDGE = "edge"
    BETWEENNESS = "betweenness"


class AllocatorMode(str, Enum):
    """慢内存分配方式：动态链表 / 每对象固定区域"""
    DYNAMIC = "dynamic"
    FIXED = "fixed"


class ObjectPolicy(str, Enum):
    """对象级替换排序：LRU（命中时提升）/ FIFO（按准入顺序）/ LFU（命中最少者先出，同频按准入先后）"""
    LRU = "lru"
    FIFO = "fifo"
    LFU = "lfu"


class NewObjectPlacement(str, Enum):
    HEAD = "head"
    TAIL = "tail"


class TrafficClass(str, Enum):
    WEB = "web"
    P2P = "p2p"
    VIDEO = "video"
    OTHER = "other"


# ============ 内存配置 ============
class MemoryConfig(BaseModel):
    """单台路由器的内存配置"""
    model_config = ConfigDict(extra="forbid")

    sram_bytes: int = Field(..., gt=0, description="快内存字节数")
    dram_bytes: int = Field(..., gt=0, description="慢内存字节数")
    entry_bytes: Optional[int] = Field(None, gt=0, description="索引表项字节数，缺省按方案取40/42")
    mss_bytes: int = Field(default_factory=lambda: settings.MSS_BYTES, gt=0)


# ============ 流量相关 ============
class SizeDistribution(BaseModel):
    """对象大小（分块数）分布"""
    model_config = ConfigDict(extra="forbid")

    median: float = Field(..., ge=1)
    max: int = Field(..., ge=1)
    std_dev: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _check_feasible(self):
        if self.median > self.max:
            raise ValueError(f"median={self.median} 大于 max={self.max}")
        return self

    @property
    def fixed(self) -> bool:
        return self.std_dev == 0 or self.median == self.max


class PopularityParams(BaseModel):
    """每对象请求数统计，仅作为请求量比例的提示"""
    model_config = ConfigDict(extra="forbid")

    mean: float = Field(..., ge=0)
    max: float = Field(..., ge=0)
    std_dev: float = Field(0.0, ge=0)


class TrafficClassParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    traffic_class: TrafficClass
    object_count: int = Field(..., gt=0)
    size: SizeDistribution
    popularity: Optional[PopularityParams] = None
    request_share: Optional[float] = Field(None, ge=0, description="请求占比，缺省由 object_count×mean 推导")
    zipf_alpha: float = Field(0.8, ge=0)

    @model_validator(mode="after")
    def _check_share(self):
        if self.request_share is None and self.popularity is None:
            raise ValueError("request_share 与 popularity 至少提供一个")
        return self

    @property
    def request_weight(self) -> float:
        if self.request_share is not None:
            return self.request_share
        return self.object_count * self.popularity.mean


# ============ 仿真配置 ============
class TopologyConfig(BaseModel):
    """拓扑：BA随机生成，或从边列表文件加载"""
    model_config = ConfigDict(extra="forbid")

    nodes: int = Field(20, gt=1)
    attachment: int = Field(default_factory=lambda: settings.BA_ATTACHMENT, ge=1)
    seed: int = 0
    edge_list_path: Optional[Path] = None
    origin: Optional[int] = None
    access_nodes: Optional[List[int]] = None
    receivers_per_access: int = Field(default_factory=lambda: settings.RECEIVERS_PER_ACCESS, gt=0)
    receiver_attachment: Optional[Dict[int, int]] = None


class WorkloadConfig(BaseModel):
    """流量：按类别参数生成，或从目录/请求序列文件加载"""
    model_config = ConfigDict(extra="forbid")

    classes: Optional[List[TrafficClassParams]] = None
    scale: int = Field(default_factory=lambda: settings.DESK_SCALE, gt=0)
    requests_per_receiver: int = Field(10, ge=0)
    seed: int = 0
    catalog_path: Optional[Path] = None
    trace_path: Optional[Path] = None

    @model_validator(mode="after")
    def _check_files(self):
        if (self.catalog_path is None) != (self.trace_path is None):
            raise ValueError("catalog_path 与 trace_path 必须同时提供")
        return self


class CacheSizing(BaseModel):
    """
    每台路由器的缓存规模：
    - fast_fraction: 快内存可索引条目数占目录分块总数的比例
    - slow_ratio: 快:慢 条目比（1:slow_ratio）
    - memory: 直接给出内存字节数（与 fast_fraction 互斥）
    """
    model_config = ConfigDict(extra="forbid")

    fast_fraction: Optional[float] = Field(None, ge=0, le=1)
    slow_ratio: float = Field(11.0, gt=0)
    memory: Optional[MemoryConfig] = None

    @model_validator(mode="after")
    def _check_exclusive(self):
        if (self.fast_fraction is None) == (self.memory is None):
            raise ValueError("fast_fraction 与 memory 必须且只能提供一个")
        return self


class OpcOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    allocator: AllocatorMode = AllocatorMode.DYNAMIC
    new_object_placement: NewObjectPlacement = NewObjectPlacement.HEAD
    object_policy: ObjectPolicy = ObjectPolicy.LRU


class SimConfig(BaseModel):
    """一次仿真运行的完整描述"""
    model_config = ConfigDict(extra="forbid")

    name: str = "run"
    scheme: CacheScheme = CacheScheme.OPC
    placement: PlacementPolicy = PlacementPolicy.UNIVERSAL
    topology: TopologyConfig = Field(default_factory=TopologyConfig)
    workload: WorkloadConfig = Field(default_factory=WorkloadConfig)
    sizing: CacheSizing = Field(default_factory=lambda: CacheSizing(fast_fraction=0.001))
    opc: OpcOptions = Field(default_factory=OpcOptions)
    link_delay_ms: float = Field(default_factory=lambda: settings.LINK_DELAY_MS, ge=0)
    snapshot_interval_ms: Optional[float] = Field(None, gt=0)
    betweenness_lookup_all: bool = Field(True, description="中介中心性放置下非最大节点是否仍做查找")
    record_events: bool = False

    def resolve_paths(self, base_dir: Path) -> "SimConfig":
        """把配置中的相对路径解析为相对 base_dir 的绝对路径"""
        def _resolve(path: Optional[Path]) -> Optional[Path]:
            if path is None or path.is_absolute():
                return path
            return (base_dir / path).resolve()

        return self.model_copy(update={
            "topology": self.topology.model_copy(update={
                "edge_list_path": _resolve(self.topology.edge_list_path),
            }),
            "workload": self.workload.model_copy(update={
                "catalog_path": _resolve(self.workload.catalog_path),
                "trace_path": _resolve(self.workload.trace_path),
            }),
        })


class SweepSpec(BaseModel):
    """参数扫描描述"""
    model_config = ConfigDict(extra="forbid")

    base: SimConfig
    fast_fractions: List[float] = Field(default=[0.0001, 0.001, 0.01], min_length=1)
    slow_ratios: List[float] = Field(default=[11.0], min_length=1)
    placements: List[PlacementPolicy] = Field(default=list(PlacementPolicy), min_length=1)
    schemes: List[CacheScheme] = Field(default=[CacheScheme.LRU, CacheScheme.OPC], min_length=1)
    seeds: List[int] = Field(default=list(range(10)), min_length=1)
    output_dir: Optional[Path] = None


# ============ 运行结果 ============
class CacheStateLog(BaseModel):
    """周期性缓存状态快照"""
    time_ms: float
    # router -> object -> 已缓存分块序号
    stored: Dict[int, Dict[str, List[int]]] = Field(default_factory=dict)
    # router -> object -> rank -> 累计命中数
    hits: Dict[int, Dict[str, Dict[int, int]]] = Field(default_factory=dict)

    def to_records(self) -> List[Dict[str, object]]:
        """每个 (router, object) 一行：time, router, object, last_or_ranks, hits；空缓存输出一行空对象"""
        records = []
        for router in sorted(set(self.stored) | set(self.hits)):
            stored = self.stored.get(router, {})
            hits = self.hits.get(router, {})
            if not stored and not hits:
                records.append({"time": self.time_ms, "router": router, "object": "", "last_or_ranks": "", "hits": ""})
            for object_id in sorted(set(stored) | set(hits)):
                ranks = stored.get(object_id, [])
                object_hits = hits.get(object_id, {})
                records.append({
                    "time": self.time_ms,
                    "router": router,
                    "object": object_id,
                    "last_or_ranks": ";".join(str(r) for r in ranks),
                    "hits": ";".join(f"{r}:{c}" for r, c in sorted(object_hits.items())),
                })
        return records


class MetricsReport(BaseModel):
    """一次运行的度量结果"""
    name: str = "run"
    scheme: CacheScheme = CacheScheme.OPC
    placement: PlacementPolicy = PlacementPolicy.UNIVERSAL
    chunks_requested: int = 0
    chunks_delivered: int = 0
    network_load: int = 0
    server_load: int = 0
    cache_requests: int = 0
    cache_hits: int = 0
    hit_ratio: float = 0.0
    mean_completion_time_ms: float = 0.0
    propagation_time_ms: float = 0.0
    memory_time_ms: float = 0.0
    total_memory_ns: float = 0.0
    dram_insert_evict: int = 0
    dram_hit: int = 0
    sram_total: int = 0
    dram_total: int = 0
    completion_time_ms: Dict[int, float] = Field(default_factory=dict)
    memory: Dict[int, Dict[str, float]] = Field(default_factory=dict)
    snapshots: List[CacheStateLog] = Field(default_factory=list)

    SCALAR_FIELDS: ClassVar[Tuple[str, ...]] = (
        "chunks_requested", "chunks_delivered", "network_load", "server_load",
        "cache_requests", "cache_hits", "hit_ratio", "mean_completion_time_ms",
        "propagation_time_ms", "memory_time_ms", "total_memory_ns",
        "dram_insert_evict", "dram_hit", "sram_total", "dram_total",
    )

    def scalars(self) -> Dict[str, float]:
        return {key: getattr(self, key) for key in self.SCALAR_FIELDS}

    def to_text(self) -> str:
        """扁平 key=value 文本，每行一项"""
        lines = [f"name={self.name}", f"scheme={self.scheme.value}", f"placement={self.placement.value}"]
        lines += [f"{key}={value!r}" for key, value in self.scalars().items()]
        lines += [
            f"completion_time_ms.{rid}={value!r}"
            for rid, value in sorted(self.completion_time_ms.items())
        ]
        return "\n".join(lines) + "\n"

    def router_rows(self) -> List[Dict[str, float]]:
        return [{"router": router, **summary} for router, summary in sorted(self.memory.items())]

    def snapshot_rows(self) -> List[Dict[str, object]]:
        rows = []
        for snapshot in self.snapshots:
            rows.extend(snapshot.to_records())
        return rows
