"""Directed user-tweet bipartite graph with typed edges and neighbor sampling.

Every interaction (user, tweet, kind) is stored in both directions, so each
node's out-neighborhood doubles as its in-neighborhood. The graph is frozen
after construction; samplers take an explicit generator per call, making
concurrent reads safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .errors import DataError


class NodeKind(IntEnum):
    USER = 0
    TWEET = 1


class EdgeKind(Enum):
    POST = "post"
    RETWEET = "retweet"


class NodeRef(NamedTuple):
    kind: NodeKind
    index: int


_KIND_CODE = {EdgeKind.POST: 0, EdgeKind.RETWEET: 1}
_CODE_KIND = {0: EdgeKind.POST, 1: EdgeKind.RETWEET}


class BipartiteGraph:
    """Compressed per-direction adjacency over dense user/tweet indices.

    Adjacency lists are sorted by (neighbor index, edge kind); a parallel
    deduplicated adjacency backs uniform sampling over distinct neighbors.
    Instances are immutable after :func:`build_graph`.
    """

    def __init__(self, user_ids, tweet_ids, adj, adj_kinds, distinct):
        self.user_ids: tuple[str, ...] = tuple(user_ids)
        self.tweet_ids: tuple[str, ...] = tuple(tweet_ids)
        self.user_index = {uid: i for i, uid in enumerate(self.user_ids)}
        self.tweet_index = {tid: i for i, tid in enumerate(self.tweet_ids)}
        # per NodeKind: (indptr, neighbor indices, edge-kind codes)
        self._adj = adj
        self._adj_kinds = adj_kinds
        # per NodeKind: (indptr, distinct neighbor indices)
        self._distinct = distinct

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_tweets(self) -> int:
        return len(self.tweet_ids)

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_tweets

    @property
    def num_directed_edges(self) -> int:
        return int(self._adj[NodeKind.USER][0][-1] + self._adj[NodeKind.TWEET][0][-1])

    def contains(self, node: NodeRef) -> bool:
        count = self.num_users if node.kind == NodeKind.USER else self.num_tweets
        return 0 <= node.index < count

    def _check_node(self, node: NodeRef) -> None:
        if not self.contains(node):
            raise ValueError(f"unknown node {node}")

    def user(self, user_id: str) -> NodeRef:
        if user_id not in self.user_index:
            raise ValueError(f"unknown user id {user_id!r}")
        return NodeRef(NodeKind.USER, self.user_index[user_id])

    def tweet(self, tweet_id: str) -> NodeRef:
        if tweet_id not in self.tweet_index:
            raise ValueError(f"unknown tweet id {tweet_id!r}")
        return NodeRef(NodeKind.TWEET, self.tweet_index[tweet_id])

    def all_users(self) -> list[NodeRef]:
        return [NodeRef(NodeKind.USER, i) for i in range(self.num_users)]

    def all_nodes(self) -> list[NodeRef]:
        return self.all_users() + [NodeRef(NodeKind.TWEET, i) for i in range(self.num_tweets)]


def build_graph(
    users: Iterable[str],
    tweets: Iterable[str],
    interactions: Iterable[tuple[str, str, EdgeKind]],
) -> BipartiteGraph:
    """Assemble the frozen bipartite graph from id-level interactions.

    Each interaction joins an existing user to an existing tweet and is
    stored in both directions with its kind. Every tweet must be posted by
    exactly one user. Violations raise DataError.
    """
    user_ids = tuple(users)
    tweet_ids = tuple(tweets)
    user_index = {uid: i for i, uid in enumerate(user_ids)}
    tweet_index = {tid: i for i, tid in enumerate(tweet_ids)}
    if len(user_index) != len(user_ids):
        raise DataError("duplicate user id")
    if len(tweet_index) != len(tweet_ids):
        raise DataError("duplicate tweet id")

    post_count = np.zeros(len(tweet_ids), dtype=np.int64)
    pairs: list[tuple[int, int, int]] = []  # (user idx, tweet idx, kind code)
    for user_id, tweet_id, kind in interactions:
        if user_id in tweet_index or tweet_id in user_index:
            raise DataError(f"interaction {user_id!r}->{tweet_id!r} is not user-to-tweet")
        if user_id not in user_index:
            raise DataError(f"interaction references unknown user id {user_id!r}")
        if tweet_id not in tweet_index:
            raise DataError(f"interaction references unknown tweet id {tweet_id!r}")
        if not isinstance(kind, EdgeKind):
            raise DataError(f"bad edge kind {kind!r}")
        ti = tweet_index[tweet_id]
        if kind == EdgeKind.POST:
            post_count[ti] += 1
        pairs.append((user_index[user_id], ti, _KIND_CODE[kind]))

    if len(tweet_ids):
        bad = np.nonzero(post_count != 1)[0]
        if bad.size:
            ti = int(bad[0])
            raise DataError(
                f"tweet {tweet_ids[ti]!r} has {int(post_count[ti])} post interactions, expected 1"
            )

    def compress(n_nodes: int, entries: list[tuple[int, int, int]]):
        entries.sort()
        indptr = np.zeros(n_nodes + 1, dtype=np.int64)
        nbr = np.fromiter((e[1] for e in entries), dtype=np.int64, count=len(entries))
        kinds = np.fromiter((e[2] for e in entries), dtype=np.int8, count=len(entries))
        for src, _, _ in entries:
            indptr[src + 1] += 1
        np.cumsum(indptr, out=indptr)
        # distinct neighbors per node for uniform sampling
        d_ptr = np.zeros(n_nodes + 1, dtype=np.int64)
        d_nbr: list[np.ndarray] = []
        for v in range(n_nodes):
            seg = nbr[indptr[v] : indptr[v + 1]]
            uniq = np.unique(seg)
            d_nbr.append(uniq)
            d_ptr[v + 1] = d_ptr[v] + len(uniq)
        d_all = np.concatenate(d_nbr) if d_nbr else np.zeros(0, dtype=np.int64)
        return (indptr, nbr, kinds), (d_ptr, d_all)

    user_entries = [(u, t, c) for u, t, c in pairs]
    tweet_entries = [(t, u, c) for u, t, c in pairs]
    (u_adj, u_dist) = compress(len(user_ids), user_entries)
    (t_adj, t_dist) = compress(len(tweet_ids), tweet_entries)

    adj = {NodeKind.USER: (u_adj[0], u_adj[1]), NodeKind.TWEET: (t_adj[0], t_adj[1])}
    adj_kinds = {NodeKind.USER: u_adj[2], NodeKind.TWEET: t_adj[2]}
    distinct = {NodeKind.USER: u_dist, NodeKind.TWEET: t_dist}
    return BipartiteGraph(user_ids, tweet_ids, adj, adj_kinds, distinct)


def _other_kind(kind: NodeKind) -> NodeKind:
    return NodeKind.TWEET if kind == NodeKind.USER else NodeKind.USER


def neighbors(g: BipartiteGraph, node: NodeRef) -> list[tuple[NodeRef, EdgeKind]]:
    """All out-neighbors with edge kinds, ordered by neighbor index."""
    g._check_node(node)
    indptr, nbr = g._adj[node.kind]
    kinds = g._adj_kinds[node.kind]
    lo, hi = indptr[node.index], indptr[node.index + 1]
    other = _other_kind(node.kind)
    return [
        (NodeRef(other, int(nbr[i])), _CODE_KIND[int(kinds[i])]) for i in range(lo, hi)
    ]


def degree(g: BipartiteGraph, node: NodeRef) -> int:
    """Number of distinct neighbors."""
    g._check_node(node)
    d_ptr, _ = g._distinct[node.kind]
    return int(d_ptr[node.index + 1] - d_ptr[node.index])


def sample_neighbors(
    g: BipartiteGraph,
    node: NodeRef,
    size: int,
    mode: str = "replacement",
    rng: Optional[np.random.Generator] = None,
) -> list[NodeRef]:
    """Fixed-size uniform draw with replacement over distinct neighbors.

    Replacement mode returns exactly ``size`` draws (empty for isolated
    nodes); exhaustive mode returns each distinct neighbor once, in index
    order, and needs no generator.
    """
    g._check_node(node)
    if size < 1:
        raise ValueError("sample size must be >= 1")
    d_ptr, d_nbr = g._distinct[node.kind]
    lo, hi = d_ptr[node.index], d_ptr[node.index + 1]
    other = _other_kind(node.kind)
    if mode == "exhaustive":
        return [NodeRef(other, int(d_nbr[i])) for i in range(lo, hi)]
    if mode != "replacement":
        raise ValueError(f"unknown sampling mode {mode!r}")
    if hi == lo:
        return []
    if rng is None:
        raise ValueError("replacement sampling needs a random generator")
    picks = rng.integers(lo, hi, size=size)
    return [NodeRef(other, int(d_nbr[i])) for i in picks]


@dataclass(frozen=True)
class Frontier:
    """Nested node sets plus the retained neighbor draws for one mini-batch.

    ``sets[k]`` is the depth-k set (``sets[depth]`` is the batch) and
    ``samples[k][u] = (one_hop, two_hop)`` where ``two_hop[i]`` holds the
    draws taken from ``one_hop[i]``. The forward pass replays exactly these
    draws.
    """

    depth: int
    one_hop_size: int
    two_hop_size: int
    mode: str
    batch: tuple[NodeRef, ...]
    sets: tuple[frozenset, ...]
    samples: dict

    def one_hop(self, k: int, node: NodeRef) -> list[NodeRef]:
        return self.samples[k][node][0]

    def two_hop(self, k: int, node: NodeRef) -> list[list[NodeRef]]:
        return self.samples[k][node][1]


def build_frontier(
    g: BipartiteGraph,
    batch: Iterable[NodeRef],
    depth: int,
    one_hop_size: int,
    two_hop_size: int,
    mode: str = "replacement",
    rng: Optional[np.random.Generator] = None,
) -> Frontier:
    """Expand a batch outward ``depth`` times, sampling one- and two-hop draws.

    Nodes are visited in sorted order so a fixed seed yields an identical
    frontier. Each depth-k node's draws are all members of the depth-(k-1)
    set, which therefore contains everything the forward pass reads.
    """
    batch_nodes = tuple(sorted(set(batch)))
    if not batch_nodes:
        raise ValueError("batch must be nonempty")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    for node in batch_nodes:
        g._check_node(node)

    sets: list[frozenset] = [frozenset()] * (depth + 1)
    sets[depth] = frozenset(batch_nodes)
    samples: dict[int, dict] = {}
    for k in range(depth, 0, -1):
        level: dict[NodeRef, tuple] = {}
        expanded = set(sets[k])
        for u in sorted(sets[k]):
            one = sample_neighbors(g, u, one_hop_size, mode, rng)
            two = [sample_neighbors(g, v, two_hop_size, mode, rng) for v in one]
            level[u] = (one, two)
            expanded.update(one)
            for hop2 in two:
                expanded.update(hop2)
        samples[k] = level
        sets[k - 1] = frozenset(expanded)
    return Frontier(
        depth=depth,
        one_hop_size=one_hop_size,
        two_hop_size=two_hop_size,
        mode=mode,
        batch=batch_nodes,
        sets=tuple(sets),
        samples=samples,
    )


def graph_stats(g: BipartiteGraph) -> dict:
    """Node/edge counts and the retweet share of interactions."""
    kinds = np.concatenate([g._adj_kinds[NodeKind.USER], g._adj_kinds[NodeKind.TWEET]])
    retweet_dir_edges = int((kinds == _KIND_CODE[EdgeKind.RETWEET]).sum())
    total_dir_edges = int(kinds.size)
    return {
        "users": g.num_users,
        "tweets": g.num_tweets,
        "nodes": g.num_nodes,
        "directed_edges": total_dir_edges,
        "interactions": total_dir_edges // 2,
        "post_interactions": (total_dir_edges - retweet_dir_edges) // 2,
        "retweet_interactions": retweet_dir_edges // 2,
        "retweet_fraction": (retweet_dir_edges / total_dir_edges) if total_dir_edges else 0.0,
    }
