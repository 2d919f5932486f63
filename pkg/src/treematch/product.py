"""Direct product of two dependency trees, and the brute-force helpers that
serve as the mining oracle.

The product graph is only ever materialised for small inputs; the miner
works on subtree pairs directly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from .abstraction import Clustering, abstract_vertex
from .treebank import DepTree

DEFAULT_VERTEX_CAP = 64


class ProductError(ValueError):
    pass


@dataclass(frozen=True)
class ProductVertex:
    x_index: int
    y_index: int
    label: object  # (wx, wy), "SameEntity" or "SimWord_k"


@dataclass(frozen=True)
class ProductGraph:
    vertices: tuple[ProductVertex, ...]
    edges: tuple[tuple[int, int], ...]  # directed, positions into ``vertices``

    def adjacency(self) -> list[set[int]]:
        """Undirected neighbour sets (weak connectivity)."""
        adj: list[set[int]] = [set() for _ in self.vertices]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


def build_product(tx: DepTree, ty: DepTree, clustering: Clustering | None = None) -> ProductGraph:
    ny = len(ty)
    verts = []
    for i in range(1, len(tx) + 1):
        a = tx.token(i)
        for j in range(1, ny + 1):
            b = ty.token(j)
            verts.append(ProductVertex(i, j, abstract_vertex(a.form, b.form, a.ne_tag, b.ne_tag,
                                                             clustering)))

    def pos(i, j):
        return (i - 1) * ny + (j - 1)

    edges = [(pos(hx, hy), pos(dx, dy))
             for hx, dx in tx.edges() for hy, dy in ty.edges()]
    return ProductGraph(tuple(verts), tuple(sorted(edges)))


def enumerate_connected_subgraphs(pg: ProductGraph, max_vertices: int,
                                  cap: int = DEFAULT_VERTEX_CAP) -> set[frozenset[int]]:
    """All weakly connected vertex subsets with at most ``max_vertices`` members."""
    if max_vertices < 1:
        raise ProductError("max_vertices must be >= 1")
    if len(pg.vertices) > cap:
        raise ProductError(f"product graph has {len(pg.vertices)} vertices (cap {cap})")
    adj = pg.adjacency()
    found: set[frozenset[int]] = set()
    frontier = {frozenset([v]) for v in range(len(pg.vertices))}
    found |= frontier
    for _ in range(max_vertices - 1):
        nxt = set()
        for s in frontier:
            for v in s:
                for u in adj[v]:
                    if u not in s:
                        nxt.add(s | {u})
        nxt -= found
        found |= nxt
        frontier = nxt
        if not frontier:
            break
    return found


def _is_weakly_connected(members, adj) -> bool:
    members = set(members)
    start = next(iter(members))
    seen, stack = {start}, [start]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u in members and u not in seen:
                seen.add(u)
                stack.append(u)
    return seen == members


def _tree_path(tree: DepTree, a: int, b: int) -> set[int]:
    def ancestors(v):
        out = [v]
        while tree.head(v):
            v = tree.head(v)
            out.append(v)
        return out

    up_a, up_b = ancestors(a), ancestors(b)
    common = set(up_a) & set(up_b)
    path = set()
    for chain in (up_a, up_b):
        for v in chain:
            path.add(v)
            if v in common:
                break
    return path


def steiner_subtree(tree: DepTree, nodes) -> frozenset[int]:
    """Minimal connected token set spanning ``nodes`` (union of pairwise paths)."""
    nodes = sorted(set(nodes))
    out = set(nodes)
    for a, b in itertools.combinations(nodes, 2):
        out |= _tree_path(tree, a, b)
    return frozenset(out)


def factorize(pg: ProductGraph, subgraph, tx: DepTree, ty: DepTree) -> tuple[frozenset, frozenset]:
    """Minimal subtrees of X and Y whose product covers a connected subgraph."""
    subgraph = set(subgraph)
    if not subgraph:
        raise ProductError("empty subgraph")
    if not _is_weakly_connected(subgraph, pg.adjacency()):
        raise ProductError("subgraph is not connected")
    xs = {pg.vertices[v].x_index for v in subgraph}
    ys = {pg.vertices[v].y_index for v in subgraph}
    return steiner_subtree(tx, xs), steiner_subtree(ty, ys)


def to_dot(pg: ProductGraph) -> str:
    def name(v):
        lab = v.label
        if isinstance(lab, tuple):
            lab = f"({lab[0]},{lab[1]})"
        return lab.replace('"', '\\"')

    lines = ["digraph product {"]
    for i, v in enumerate(pg.vertices):
        lines.append(f'  v{i} [label="{name(v)}"];')
    for a, b in pg.edges:
        lines.append(f"  v{a} -> v{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"
