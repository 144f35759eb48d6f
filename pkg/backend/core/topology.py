"""
拓扑模块
BA无标度拓扑生成、最短路路由表、中介中心性以及三种缓存放置策略
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import median
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set

import networkx as nx
import numpy as np
from loguru import logger

from backend.core.errors import TopologyError
from backend.models.schemas import PlacementPolicy

NodeId = int


class NodeRole(str, Enum):
    CORE = "core"
    ACCESS = "access"  # 挂接接收者组
    ORIGIN = "origin"  # 挂接源服务器，不做缓存


@dataclass(frozen=True)
class Topology:
    """路由器图 + 角色；接收者与源服务器是端点挂接，不是图节点"""
    graph: nx.Graph
    roles: Dict[NodeId, NodeRole]

    @property
    def origin(self) -> NodeId:
        return next(node for node, role in self.roles.items() if role == NodeRole.ORIGIN)

    @property
    def access_nodes(self) -> List[NodeId]:
        return sorted(node for node, role in self.roles.items() if role == NodeRole.ACCESS)

    @property
    def routers(self) -> List[NodeId]:
        """可部署缓存模块的节点（源站以外的全部节点）"""
        return sorted(node for node, role in self.roles.items() if role != NodeRole.ORIGIN)


def generate_ba(n: int, m: int, seed: int) -> nx.Graph:
    """
    Barabási-Albert 优先连接生成

    Args:
        n: 节点数
        m: 每个新节点连出的边数
        seed: 随机种子

    Returns:
        以 m+1 个节点的完全图为种子、节点编号 0..n-1 的无向图
    """
    if m < 1 or n <= m:
        raise TopologyError(f"BA参数不合法: n={n}, m={m}（要求 n > m >= 1）")
    seed_clique = nx.complete_graph(m + 1)
    if n == m + 1:
        return seed_clique
    return nx.barabasi_albert_graph(n, m, seed=seed, initial_graph=seed_clique)


def build_topology(
    graph: nx.Graph,
    seed: int = 0,
    origin: Optional[NodeId] = None,
    access_nodes: Optional[Sequence[NodeId]] = None,
) -> Topology:
    """
    为路由器图分配角色

    默认度数不超过中位数的节点可作为接入节点；源站从中按种子选一个，
    其余候选全部为接入节点。

    Args:
        graph: 连通的路由器图
        seed: 选择源站的随机种子
        origin: 显式指定源站节点
        access_nodes: 显式指定接入节点

    Returns:
        Topology
    """
    if graph.number_of_nodes() == 0 or not nx.is_connected(graph):
        raise TopologyError("拓扑必须非空且连通")

    degrees = dict(graph.degree())
    median_degree = median(degrees.values())
    eligible = sorted(node for node, degree in degrees.items() if degree <= median_degree)

    if origin is None:
        origin = eligible[int(np.random.default_rng(seed).integers(len(eligible)))]
    if origin not in graph:
        raise TopologyError(f"源站节点 {origin} 不在拓扑中")

    if access_nodes is None:
        access = [node for node in eligible if node != origin]
        if not access:
            access = [node for node in sorted(graph.nodes) if node != origin]
    else:
        access = list(access_nodes)
        unknown = [node for node in access if node not in graph]
        if unknown:
            raise TopologyError(f"接入节点不在拓扑中: {unknown}")
        if origin in access:
            raise TopologyError(f"源站节点 {origin} 不能同时是接入节点")

    roles = {node: NodeRole.CORE for node in graph.nodes}
    roles.update({node: NodeRole.ACCESS for node in access})
    roles[origin] = NodeRole.ORIGIN
    return Topology(graph=graph, roles=roles)


@dataclass
class RoutingTable:
    """全源最短路下一跳表；多条等长路径时取编号最小的邻居"""
    distances: Dict[NodeId, Dict[NodeId, int]]
    next_hops: Dict[NodeId, Dict[NodeId, NodeId]] = field(default_factory=dict)

    def distance(self, source: NodeId, target: NodeId) -> int:
        return self.distances[target][source]

    def next_hop(self, source: NodeId, target: NodeId) -> NodeId:
        return self.next_hops[target][source]

    def path(self, source: NodeId, target: NodeId) -> List[NodeId]:
        route = [source]
        while route[-1] != target:
            route.append(self.next_hop(route[-1], target))
        return route


def shortest_paths(graph: nx.Graph) -> RoutingTable:
    """
    计算全源最短路下一跳表

    Raises:
        TopologyError: 图不连通
    """
    if graph.number_of_nodes() == 0 or not nx.is_connected(graph):
        raise TopologyError("拓扑不连通，无法计算路由")

    # distances[target][node]：node 到 target 的跳数
    distances = {target: dict(nx.single_source_shortest_path_length(graph, target)) for target in graph.nodes}
    next_hops: Dict[NodeId, Dict[NodeId, NodeId]] = {}
    for target, dist in distances.items():
        hops = {}
        for node in graph.nodes:
            if node == target:
                continue
            hops[node] = min(nb for nb in graph.neighbors(node) if dist[nb] == dist[node] - 1)
        next_hops[target] = hops
    return RoutingTable(distances=distances, next_hops=next_hops)


def betweenness(graph: nx.Graph) -> Dict[NodeId, float]:
    """
    未归一化的最短路中介中心性，按有序点对 (s, t) 累加 σ_st(v)/σ_st

    networkx 对无向图按无序点对计数，这里乘2还原为有序点对。
    """
    scores = nx.betweenness_centrality(graph, normalized=False, endpoints=False)
    return {node: 2.0 * score for node, score in sorted(scores.items())}


def lookup_nodes_for(
    policy: PlacementPolicy,
    path: Sequence[NodeId],
    roles: Mapping[NodeId, NodeRole],
    scores: Optional[Mapping[NodeId, float]] = None,
    betweenness_lookup_all: bool = True,
) -> Set[NodeId]:
    """请求路径上会做缓存查找的节点"""
    if policy == PlacementPolicy.EDGE:
        return caching_nodes_for(policy, path, scores or {}, roles)
    if policy == PlacementPolicy.BETWEENNESS and not betweenness_lookup_all:
        return caching_nodes_for(policy, path, scores or {}, roles)
    return {node for node in path if roles[node] != NodeRole.ORIGIN}


def caching_nodes_for(
    policy: PlacementPolicy,
    path: Sequence[NodeId],
    scores: Mapping[NodeId, float],
    roles: Mapping[NodeId, NodeRole],
) -> Set[NodeId]:
    """
    按放置策略确定数据分块回程时要尝试插入的节点

    Args:
        policy: 放置策略
        path: 从接入节点到源站的路由器序列
        scores: 中介中心性
        roles: 节点角色

    Returns:
        缓存节点集合
    """
    if not path:
        raise TopologyError("路径为空")
    routers = [node for node in path if roles[node] != NodeRole.ORIGIN]
    if policy == PlacementPolicy.UNIVERSAL:
        return set(routers)
    if policy == PlacementPolicy.EDGE:
        return {node for node in routers if roles[node] == NodeRole.ACCESS}
    if not routers:
        return set()
    best = max(scores.get(node, 0.0) for node in routers)
    return {node for node in routers if scores.get(node, 0.0) == best}


# ============ 边列表文件 ============
def save_edge_list(topology: Topology, path: Path) -> None:
    """一行一条边 `u v`，角色写在 [roles] 段，每行 `node role`"""
    lines = ["# edges"]
    lines += [f"{u} {v}" for u, v in sorted(tuple(sorted(edge)) for edge in topology.graph.edges)]
    lines += ["", "[roles]"]
    lines += [f"{node} {role.value}" for node, role in sorted(topology.roles.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_edge_list(path: Path) -> Topology:
    graph = nx.Graph()
    roles: Dict[NodeId, NodeRole] = {}
    section = "edges"
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"{path}:{line_no} 格式错误: {raw!r}")
        if section == "roles":
            roles[int(parts[0])] = NodeRole(parts[1])
        else:
            graph.add_edge(int(parts[0]), int(parts[1]))

    if not roles:
        logger.info(f"[Topology] {path} 未提供角色段，按度数自动分配")
        return build_topology(graph)
    origins = [node for node, role in roles.items() if role == NodeRole.ORIGIN]
    if len(origins) != 1:
        raise TopologyError(f"{path}: 必须恰好有一个 origin 节点，实际 {origins}")
    access = [node for node, role in roles.items() if role == NodeRole.ACCESS]
    return build_topology(graph, origin=origins[0], access_nodes=access)


def attach_receivers(
    topology: Topology,
    receiver_ids: Iterable[int],
    receivers_per_access: int,
    seed: int = 0,
    explicit: Optional[Mapping[int, NodeId]] = None,
) -> Dict[int, NodeId]:
    """
    接收者挂接到接入节点：接入节点按种子打乱，每个节点依次挂 receivers_per_access 个

    Returns:
        receiver_id -> 接入节点
    """
    access = topology.access_nodes
    if not access:
        raise TopologyError("拓扑没有接入节点")
    order = [access[i] for i in np.random.default_rng(seed).permutation(len(access))]
    attachment: Dict[int, NodeId] = {}
    for position, receiver in enumerate(sorted(receiver_ids)):
        if explicit and receiver in explicit:
            attachment[receiver] = explicit[receiver]
        else:
            attachment[receiver] = order[(position // receivers_per_access) % len(order)]
    unknown = {node for node in attachment.values() if node not in topology.roles}
    if unknown:
        raise TopologyError(f"接收者挂接到不存在的节点: {sorted(unknown)}")
    return attachment
