"""
离散事件仿真器
接收者驱动的停等式分块传输：每个接收者顺序拉取对象，对象内按序号升序请求分块，
任一时刻只有一个未完成请求。请求逐跳上行，沿途缓存查找；数据沿原路返回，
按放置策略在沿途节点尝试插入。
"""
import heapq
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple

from loguru import logger

from backend.core.cost_model import (
    AccessCause,
    CacheCapacity,
    CostModel,
    MemoryTier,
    capacity_from_config,
    capacity_from_fraction,
)
from backend.core.errors import SimConfigError, TopologyError
from backend.core.topology import (
    NodeId,
    RoutingTable,
    Topology,
    attach_receivers,
    betweenness,
    build_topology,
    caching_nodes_for,
    generate_ba,
    load_edge_list,
    lookup_nodes_for,
    shortest_paths,
)
from backend.core.workload import (
    Catalog,
    Trace,
    default_class_params,
    generate_catalog,
    generate_requests,
    load_catalog,
    load_trace,
)
from backend.models.schemas import CacheStateLog, MetricsReport, SimConfig
from cache_schemes import BaseChunkCache, Chunk, ChunkId, create_cache

SNAPSHOT_PRIORITY = 0
EVENT_PRIORITY = 1


class EventKind(str, Enum):
    ISSUE = "issue"              # 接收者发出下一个分块请求
    REQUEST = "request"          # 请求到达某个路由器
    DATA = "data"                # 数据到达某个路由器
    DELIVER = "deliver"          # 数据到达接收者
    SNAPSHOT = "snapshot"


class RequestAction(str, Enum):
    RESPOND_FROM_CACHE = "respond_from_cache"
    RESPOND_FROM_ORIGIN = "respond_from_origin"
    FORWARD_UPSTREAM = "forward_upstream"


@dataclass
class ReceiverState:
    """单个接收者的传输状态"""
    receiver_id: int
    access_node: NodeId
    objects: List[str]
    path: List[NodeId]                  # 接入节点 -> 源站
    lookup_set: Set[NodeId]
    caching_set: Set[NodeId]
    object_index: int = 0
    rank: int = 1
    requested: int = 0
    delivered: int = 0
    finish_ms: float = 0.0
    memory_ns: float = 0.0

    @property
    def done(self) -> bool:
        return self.object_index >= len(self.objects)

    def current_chunk(self) -> ChunkId:
        return ChunkId(self.objects[self.object_index], self.rank)


@dataclass
class SimInputs:
    """一次运行的全部输入：拓扑、路由、目录、请求序列与挂接关系"""
    config: SimConfig
    topology: Topology
    routing: RoutingTable
    scores: Dict[NodeId, float]
    catalog: Catalog
    trace: Trace
    attachment: Dict[int, NodeId]
    capacity: CacheCapacity = field(default_factory=CacheCapacity.zero)


# ============ 输入构建 ============
def load_topology(cfg: SimConfig) -> Topology:
    topo_cfg = cfg.topology
    if topo_cfg.edge_list_path is not None:
        topology = load_edge_list(topo_cfg.edge_list_path)
        if topo_cfg.origin is not None or topo_cfg.access_nodes is not None:
            topology = build_topology(
                topology.graph,
                seed=topo_cfg.seed,
                origin=topo_cfg.origin if topo_cfg.origin is not None else topology.origin,
                access_nodes=topo_cfg.access_nodes,
            )
        return topology
    graph = generate_ba(topo_cfg.nodes, topo_cfg.attachment, topo_cfg.seed)
    return build_topology(graph, seed=topo_cfg.seed, origin=topo_cfg.origin, access_nodes=topo_cfg.access_nodes)


def load_workload(cfg: SimConfig, topology: Topology) -> Tuple[Catalog, Trace]:
    wl = cfg.workload
    if wl.catalog_path is not None:
        catalog = load_catalog(wl.catalog_path)
        trace = load_trace(wl.trace_path, seed=wl.seed)
    else:
        classes = wl.classes or default_class_params(wl.scale)
        catalog = generate_catalog(classes, seed=wl.seed)
        receiver_count = len(topology.access_nodes) * cfg.topology.receivers_per_access
        trace = generate_requests(catalog, classes, receiver_count, wl.requests_per_receiver, seed=wl.seed)
    return catalog, trace.validate(catalog)


def cache_capacity(cfg: SimConfig, catalog: Catalog) -> CacheCapacity:
    sizing = cfg.sizing
    if sizing.memory is not None:
        return capacity_from_config(sizing.memory, cfg.scheme)
    return capacity_from_fraction(sizing.fast_fraction, sizing.slow_ratio, catalog.total_chunks, cfg.scheme)


def build_inputs(cfg: SimConfig) -> SimInputs:
    """
    由配置构建仿真输入

    Raises:
        SimConfigError: 源站不可达等配置不一致
    """
    try:
        topology = load_topology(cfg)
        routing = shortest_paths(topology.graph)
    except TopologyError as e:
        raise SimConfigError(f"拓扑配置错误: {e}") from e

    catalog, trace = load_workload(cfg, topology)
    try:
        attachment = attach_receivers(
            topology,
            trace.receivers.keys(),
            cfg.topology.receivers_per_access,
            seed=cfg.topology.seed,
            explicit=cfg.topology.receiver_attachment,
        )
    except TopologyError as e:
        raise SimConfigError(f"接收者挂接错误: {e}") from e

    return SimInputs(
        config=cfg,
        topology=topology,
        routing=routing,
        scores=betweenness(topology.graph),
        catalog=catalog,
        trace=trace,
        attachment=attachment,
        capacity=cache_capacity(cfg, catalog),
    )


# ============ 仿真器 ============
class Simulator:
    """单次仿真运行，严格单线程、按 (时间, 优先级, 序号) 处理事件"""

    def __init__(self, inputs: SimInputs):
        self.inputs = inputs
        self.config = inputs.config
        self.topology = inputs.topology
        self.link_delay_ms = self.config.link_delay_ms
        self.catalog = inputs.catalog

        origin = self.topology.origin
        self.caches: Dict[NodeId, BaseChunkCache] = {
            node: create_cache(self.config.scheme, inputs.capacity, self.config.opc, cost=CostModel())
            for node in self.topology.routers
        }
        self.receivers: Dict[int, ReceiverState] = {}
        for receiver_id, objects in sorted(inputs.trace.receivers.items()):
            access = inputs.attachment[receiver_id]
            path = inputs.routing.path(access, origin)
            self.receivers[receiver_id] = ReceiverState(
                receiver_id=receiver_id,
                access_node=access,
                objects=list(objects),
                path=path,
                lookup_set=lookup_nodes_for(
                    self.config.placement, path, self.topology.roles, inputs.scores,
                    self.config.betweenness_lookup_all,
                ),
                caching_set=caching_nodes_for(self.config.placement, path, inputs.scores, self.topology.roles),
            )

        self.network_load = 0
        self.server_load = 0
        self.cache_requests = 0
        self.cache_hits = 0
        self.hit_counts: Dict[NodeId, Dict[str, Dict[int, int]]] = {node: {} for node in self.caches}
        self.snapshots: List[CacheStateLog] = []
        self.event_log: List[Dict[str, Any]] = []
        self.recording = self.config.record_events

        self._queue: List[Tuple[float, int, int, EventKind, Any]] = []
        self._seq = 0
        self.now = 0.0

    # ---------- 事件队列 ----------
    def _schedule(self, time: float, kind: EventKind, payload: Any = None) -> None:
        priority = SNAPSHOT_PRIORITY if kind == EventKind.SNAPSHOT else EVENT_PRIORITY
        heapq.heappush(self._queue, (time, priority, self._seq, kind, payload))
        self._seq += 1

    def _log(self, step: str, message: str, details: Optional[Dict] = None) -> None:
        if self.recording:
            self.event_log.append({
                "time": self.now,
                "step": step,
                "message": message,
                "details": details or {},
            })

    def _charged(self, node: NodeId, state: ReceiverState, operation):
        """执行一次缓存操作，把新增的访存延迟记到发起请求的接收者名下"""
        cost = self.caches[node].cost
        before = cost.total_latency_ns
        result = operation()
        state.memory_ns += cost.total_latency_ns - before
        return result

    # ---------- 运行 ----------
    def run(self) -> MetricsReport:
        logger.info(
            f"[Simulator] 开始运行 {self.config.name}: scheme={self.config.scheme.value}, "
            f"placement={self.config.placement.value}, receivers={len(self.receivers)}, "
            f"capacity={self.inputs.capacity}"
        )
        if self.config.snapshot_interval_ms is not None:
            self._schedule(0.0, EventKind.SNAPSHOT)
        for receiver_id, state in self.receivers.items():
            if not state.done:
                self._schedule(0.0, EventKind.ISSUE, receiver_id)

        while self._queue:
            self.now, _, _, kind, payload = heapq.heappop(self._queue)
            if kind == EventKind.SNAPSHOT:
                self.snapshots.append(self.snapshot_caches())
                if self._queue:
                    self._schedule(self.now + self.config.snapshot_interval_ms, EventKind.SNAPSHOT)
            elif kind == EventKind.ISSUE:
                self._issue(self.receivers[payload])
            elif kind == EventKind.REQUEST:
                receiver_id, hop = payload
                self._on_request_event(self.receivers[receiver_id], hop)
            elif kind == EventKind.DATA:
                receiver_id, hop, chunk = payload
                self._on_data_event(self.receivers[receiver_id], hop, chunk)
            else:
                self._deliver(self.receivers[payload])

        self._check_conservation()
        report = self._build_report()
        logger.info(
            f"[Simulator] 运行完成 {self.config.name}: network_load={report.network_load}, "
            f"server_load={report.server_load}, hit_ratio={report.hit_ratio:.4f}"
        )
        return report

    def _issue(self, state: ReceiverState) -> None:
        chunk_id = state.current_chunk()
        state.requested += 1
        # 接收者 -> 接入节点这一跳
        self.network_load += 1
        if self.recording:
            self._log("issue", f"接收者 {state.receiver_id} 请求 {chunk_id}")
        self._schedule(self.now + self.link_delay_ms, EventKind.REQUEST, (state.receiver_id, 0))

    def _on_request_event(self, state: ReceiverState, hop: int) -> None:
        node = state.path[hop]
        chunk_id = state.current_chunk()
        action = self.on_request(node, chunk_id, state)
        if action == RequestAction.FORWARD_UPSTREAM:
            self.network_load += 1
            self._schedule(self.now + self.link_delay_ms, EventKind.REQUEST, (state.receiver_id, hop + 1))
            return
        # 命中节点或源站本身不再插入，数据从下游一跳开始回传
        chunk = Chunk(chunk_id)
        self._send_data_downstream(state, hop, chunk)

    def on_request(self, node: NodeId, chunk_id: ChunkId, state: ReceiverState) -> RequestAction:
        """
        请求到达 node 时的处理

        Returns:
            从缓存响应 / 源站响应 / 继续上行
        """
        if node == self.topology.origin:
            self.server_load += 1
            if self.recording:
                self._log("origin", f"源站响应 {chunk_id}", {"node": node, "receiver": state.receiver_id})
            return RequestAction.RESPOND_FROM_ORIGIN
        if node not in state.lookup_set:
            return RequestAction.FORWARD_UPSTREAM

        self.cache_requests += 1
        result = self._charged(node, state, lambda: self.caches[node].lookup(chunk_id))
        if not result.hit:
            return RequestAction.FORWARD_UPSTREAM

        self.cache_hits += 1
        per_object = self.hit_counts[node].setdefault(chunk_id.object_id, {})
        per_object[chunk_id.rank] = per_object.get(chunk_id.rank, 0) + 1
        if self.recording:
            self._log("hit", f"节点 {node} 命中 {chunk_id}", {
                "node": node,
                "receiver": state.receiver_id,
                "dram": result.dram_accesses,
            })
        return RequestAction.RESPOND_FROM_CACHE

    def _send_data_downstream(self, state: ReceiverState, hop: int, chunk: Chunk) -> None:
        if hop == 0:
            self._schedule(self.now + self.link_delay_ms, EventKind.DELIVER, state.receiver_id)
        else:
            self._schedule(self.now + self.link_delay_ms, EventKind.DATA, (state.receiver_id, hop - 1, chunk))

    def _on_data_event(self, state: ReceiverState, hop: int, chunk: Chunk) -> None:
        self.on_data(state.path[hop], chunk, state)
        self._send_data_downstream(state, hop, chunk)

    def on_data(self, node: NodeId, chunk: Chunk, state: ReceiverState) -> None:
        """数据经过 node：属于放置策略的缓存集合时尝试插入"""
        if node not in state.caching_set:
            return
        outcome = self._charged(node, state, lambda: self.caches[node].insert(chunk))
        if self.recording:
            self._log("insert", f"节点 {node} 插入 {chunk.id}: {outcome.value}", {"node": node})

    def _deliver(self, state: ReceiverState) -> None:
        state.delivered += 1
        state.rank += 1
        if state.rank > self.catalog.size_of(state.objects[state.object_index]):
            state.object_index += 1
            state.rank = 1
        if state.done:
            state.finish_ms = self.now
            self._log("complete", f"接收者 {state.receiver_id} 完成全部请求", {
                "finish_ms": self.now,
                "memory_ns": state.memory_ns,
            })
        else:
            self._issue(state)

    # ---------- 快照 ----------
    def snapshot_caches(self) -> CacheStateLog:
        """导出各缓存当前内容与累计命中计数，不改变任何状态"""
        stored = {
            node: {obj: list(ranks) for obj, ranks in cache.cached_chunks().items()}
            for node, cache in self.caches.items()
        }
        hits = {
            node: {obj: dict(ranks) for obj, ranks in per_node.items()}
            for node, per_node in self.hit_counts.items()
        }
        return CacheStateLog(time_ms=self.now, stored=stored, hits=hits)

    # ---------- 汇总 ----------
    def _check_conservation(self) -> None:
        requested = sum(state.requested for state in self.receivers.values())
        delivered = sum(state.delivered for state in self.receivers.values())
        if requested != delivered:
            raise RuntimeError(f"分块不守恒: requested={requested}, delivered={delivered}")

    def _build_report(self) -> MetricsReport:
        active = [state for state in self.receivers.values() if state.requested]
        completion = {
            state.receiver_id: state.finish_ms + state.memory_ns / 1e6
            for state in self.receivers.values()
        }

        def _mean(values: List[float]) -> float:
            return sum(values) / len(values) if values else 0.0

        costs = [cache.cost for cache in self.caches.values()]
        return MetricsReport(
            name=self.config.name,
            scheme=self.config.scheme,
            placement=self.config.placement,
            chunks_requested=sum(state.requested for state in self.receivers.values()),
            chunks_delivered=sum(state.delivered for state in self.receivers.values()),
            network_load=self.network_load,
            server_load=self.server_load,
            cache_requests=self.cache_requests,
            cache_hits=self.cache_hits,
            hit_ratio=self.cache_hits / self.cache_requests if self.cache_requests else 0.0,
            mean_completion_time_ms=_mean([completion[state.receiver_id] for state in active]),
            propagation_time_ms=_mean([state.finish_ms for state in active]),
            memory_time_ms=_mean([state.memory_ns / 1e6 for state in active]),
            total_memory_ns=sum(cost.total_latency_ns for cost in costs),
            dram_insert_evict=sum(
                cost.count(MemoryTier.DRAM, AccessCause.INSERT) + cost.count(MemoryTier.DRAM, AccessCause.EVICT)
                for cost in costs
            ),
            dram_hit=sum(cost.count(MemoryTier.DRAM, AccessCause.HIT) for cost in costs),
            sram_total=sum(cost.count(MemoryTier.SRAM) for cost in costs),
            dram_total=sum(cost.count(MemoryTier.DRAM) for cost in costs),
            completion_time_ms=completion,
            memory={node: cache.cost.summary() for node, cache in sorted(self.caches.items())},
            snapshots=self.snapshots,
        )


def run_simulation(cfg: SimConfig) -> MetricsReport:
    """构建输入并运行一次仿真"""
    return Simulator(build_inputs(cfg)).run()


def load_config(path: Path) -> SimConfig:
    """读取 JSON 运行配置，相对路径按配置文件所在目录解析"""
    path = Path(path)
    cfg = SimConfig.model_validate_json(path.read_text(encoding="utf-8"))
    return cfg.resolve_paths(path.parent)
