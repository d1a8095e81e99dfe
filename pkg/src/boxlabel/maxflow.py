"""Exact s-t max-flow / min-cut over sparse graphs.

The solver is Dinic's algorithm (level graph + blocking flow) compiled
with numba; exactness of the cut value is the contract, not the
particular algorithm. Capacities are real-valued; residuals below
1e-12 count as saturated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import TooLarge

_EPS = 1e-12


@dataclass
class FlowNetwork:
    """s-t network over `n_nodes` plain nodes plus implicit source/sink.

    terminal capacities: cap_source[i] is the source->i capacity,
    cap_sink[i] the i->sink capacity. Each entry of `edges` is
    (u, v, cap_uv, cap_vu), a pair of antiparallel directed arcs.
    """

    n_nodes: int
    cap_source: np.ndarray = field(default=None)
    cap_sink: np.ndarray = field(default=None)
    edges_u: np.ndarray = field(default=None)
    edges_v: np.ndarray = field(default=None)
    cap_uv: np.ndarray = field(default=None)
    cap_vu: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        n = self.n_nodes
        if self.cap_source is None:
            self.cap_source = np.zeros(n)
        if self.cap_sink is None:
            self.cap_sink = np.zeros(n)
        for name in ("edges_u", "edges_v", "cap_uv", "cap_vu"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(0, dtype=np.int64 if name.startswith("edges") else np.float64))
        self.cap_source = np.ascontiguousarray(self.cap_source, dtype=np.float64)
        self.cap_sink = np.ascontiguousarray(self.cap_sink, dtype=np.float64)
        self.edges_u = np.ascontiguousarray(self.edges_u, dtype=np.int64)
        self.edges_v = np.ascontiguousarray(self.edges_v, dtype=np.int64)
        self.cap_uv = np.ascontiguousarray(self.cap_uv, dtype=np.float64)
        self.cap_vu = np.ascontiguousarray(self.cap_vu, dtype=np.float64)
        self._validate()

    def _validate(self) -> None:
        n = self.n_nodes
        if self.cap_source.shape != (n,) or self.cap_sink.shape != (n,):
            raise ValueError("terminal capacity arrays must have length n_nodes")
        if not (np.all(np.isfinite(self.cap_source)) and np.all(np.isfinite(self.cap_sink))):
            raise ValueError("terminal capacities must be finite")
        if np.any(self.cap_source < 0) or np.any(self.cap_sink < 0):
            raise ValueError("terminal capacities must be non-negative")
        m = len(self.edges_u)
        if not (len(self.edges_v) == len(self.cap_uv) == len(self.cap_vu) == m):
            raise ValueError("edge arrays must share length")
        if m:
            if np.any(self.edges_u == self.edges_v):
                raise ValueError("self-loops are not allowed")
            ids = np.concatenate([self.edges_u, self.edges_v])
            if np.any(ids < 0) or np.any(ids >= n):
                raise ValueError("edge endpoints must be valid node ids")
            caps = np.concatenate([self.cap_uv, self.cap_vu])
            if not np.all(np.isfinite(caps)) or np.any(caps < 0):
                raise ValueError("edge capacities must be finite and non-negative")

    @classmethod
    def from_edge_list(cls, n_nodes, terminal_caps, edges) -> "FlowNetwork":
        """Build from [(cap_source, cap_sink)] per node and (u, v, cuv, cvu) tuples."""
        tc = np.asarray(terminal_caps, dtype=np.float64).reshape(n_nodes, 2) if n_nodes else np.zeros((0, 2))
        e = np.asarray(edges, dtype=np.float64).reshape(-1, 4)
        return cls(
            n_nodes=n_nodes,
            cap_source=tc[:, 0].copy(),
            cap_sink=tc[:, 1].copy(),
            edges_u=e[:, 0].astype(np.int64),
            edges_v=e[:, 1].astype(np.int64),
            cap_uv=e[:, 2].copy(),
            cap_vu=e[:, 3].copy(),
        )


@njit(cache=True)
def _dinic(n_total, s, t, head, nxt, to, cap):  # pragma: no cover - jitted
    level = np.empty(n_total, np.int64)
    cur = np.empty(n_total, np.int64)
    queue = np.empty(n_total, np.int64)
    path_e = np.empty(n_total, np.int64)
    path_n = np.empty(n_total + 1, np.int64)
    flow = 0.0
    while True:
        for i in range(n_total):
            level[i] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            e = head[u]
            while e != -1:
                v = to[e]
                if cap[e] > _EPS and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
                e = nxt[e]
        if level[t] < 0:
            return flow, level
        for i in range(n_total):
            cur[i] = head[i]
        depth = 0
        path_n[0] = s
        u = s
        while True:
            if u == t:
                f = 1e300
                for i in range(depth):
                    if cap[path_e[i]] < f:
                        f = cap[path_e[i]]
                for i in range(depth):
                    cap[path_e[i]] -= f
                    cap[path_e[i] ^ 1] += f
                flow += f
                depth = 0
                u = s
                continue
            e = cur[u]
            while e != -1:
                v = to[e]
                if cap[e] > _EPS and level[v] == level[u] + 1:
                    break
                e = nxt[e]
            cur[u] = e
            if e != -1:
                path_e[depth] = e
                depth += 1
                path_n[depth] = to[e]
                u = to[e]
            else:
                if u == s:
                    break
                level[u] = -1
                depth -= 1
                u = path_n[depth]


def _build_adjacency(net: FlowNetwork):
    n = net.n_nodes
    s, t = n, n + 1
    m = 4 * n + 2 * len(net.edges_u)  # arc + reverse per link
    to = np.empty(m, np.int64)
    cap = np.empty(m, np.float64)
    nxt = np.empty(m, np.int64)
    head = np.full(n + 2, -1, np.int64)

    def add(idx, u, v, c):
        to[idx] = v
        cap[idx] = c
        nxt[idx] = head[u]
        head[u] = idx

    idx = 0
    for i in range(n):
        add(idx, s, i, net.cap_source[i])
        add(idx + 1, i, s, 0.0)
        add(idx + 2, i, t, net.cap_sink[i])
        add(idx + 3, t, i, 0.0)
        idx += 4
    for k in range(len(net.edges_u)):
        u, v = int(net.edges_u[k]), int(net.edges_v[k])
        add(idx, u, v, net.cap_uv[k])
        add(idx + 1, v, u, net.cap_vu[k])
        idx += 2
    return head, nxt, to, cap, s, t


def min_cut(net: FlowNetwork) -> tuple[float, np.ndarray]:
    """Solve max-flow; returns (flow_value, source_side bool array).

    Nodes unreachable from the source in the final residual graph are
    sink-side (deterministic tie rule).
    """
    n = net.n_nodes
    if n == 0:
        return 0.0, np.zeros(0, dtype=bool)
    head, nxt, to, cap, s, t = _build_adjacency(net)
    flow, level = _dinic(n + 2, s, t, head, nxt, to, cap)
    source_side = level[:n] >= 0
    return float(flow), source_side


def cut_value(net: FlowNetwork, source_side: np.ndarray) -> float:
    """Capacity of the cut induced by a source-side assignment."""
    ss = np.asarray(source_side, dtype=bool)
    val = float(net.cap_source[~ss].sum() + net.cap_sink[ss].sum())
    if len(net.edges_u):
        us = ss[net.edges_u]
        vs = ss[net.edges_v]
        val += float(net.cap_uv[us & ~vs].sum())
        val += float(net.cap_vu[~us & vs].sum())
    return val


def brute_force_min_cut(net: FlowNetwork) -> tuple[float, np.ndarray]:
    """Exhaustive min-cut oracle over all 2^n partitions (n <= 20).

    Among minimizers returns the lexicographically smallest assignment
    (SINK encoded 0, SOURCE 1, node 0 most significant).
    """
    n = net.n_nodes
    if n > 20:
        raise TooLarge(f"brute force limited to 20 nodes, got {n}")
    if n == 0:
        return 0.0, np.zeros(0, dtype=bool)
    masks = np.arange(1 << n, dtype=np.int64)
    side = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)  # (M, n)
    vals = (~side) @ net.cap_source + side @ net.cap_sink
    if len(net.edges_u):
        us = side[:, net.edges_u]
        vs = side[:, net.edges_v]
        vals += (us & ~vs) @ net.cap_uv + (~us & vs) @ net.cap_vu
    best = vals.min()
    tied = np.flatnonzero(vals <= best)
    keys = side[tied] @ (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
    pick = tied[np.argmin(keys)]
    return float(vals[pick]), side[pick].copy()
