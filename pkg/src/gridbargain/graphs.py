"""Small undirected-graph helpers for communication topologies.

Nodes are integers 0..n-1. Graphs are plain edge lists; nothing here
depends on the rest of the package.
"""

from collections import deque

from .errors import DisconnectedGraph, InvariantViolation


def ring_graph(n):
    """Edge list of an n-node ring (a single edge for n = 2)."""
    if n < 2:
        return ()
    if n == 2:
        return ((0, 1),)
    return tuple((i, (i + 1) % n) for i in range(n))


def normalize_edges(edges, n):
    """Validate an edge list over n nodes and return it deduplicated.

    Self-loops and out-of-range endpoints are invariant violations.
    Orientation and duplicates are ignored.
    """
    seen = set()
    problems = []
    for e in edges:
        try:
            i, j = int(e[0]), int(e[1])
        except (TypeError, ValueError, IndexError):
            problems.append(f"graph: edge {e!r} is not a node pair")
            continue
        if i == j:
            problems.append(f"graph: self-loop at node {i}")
            continue
        if not (0 <= i < n and 0 <= j < n):
            problems.append(f"graph: edge ({i},{j}) outside 0..{n - 1}")
            continue
        seen.add((min(i, j), max(i, j)))
    if problems:
        raise InvariantViolation(problems)
    return tuple(sorted(seen))


def adjacency(edges, n):
    """Neighbor lists for each node."""
    nbrs = [[] for _ in range(n)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    return nbrs


def degrees(edges, n):
    return [len(a) for a in adjacency(edges, n)]


def check_connected(edges, n):
    """Raise DisconnectedGraph unless the graph spans all n nodes."""
    if n <= 1:
        return
    nbrs = adjacency(edges, n)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise DisconnectedGraph(f"nodes unreachable from node 0: {missing}")
