"""Directed acyclic graphs, equivalence classes and constraint masks.

A DAG on p nodes is stored as a frozenset of (tail, head) arcs over integer
node ids 0..p-1.  The completed partially directed version (CPDAG) keeps the
arcs every covariance-equivalent DAG shares and leaves the rest undirected.
A ConstraintMask records arcs that background knowledge forbids; conversion
and enumeration both honour it.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolation, ExtensionCapExceeded, NoExtension

log = logging.getLogger(__name__)

Arc = tuple[int, int]

_UNKNOWN, _COMPELLED, _REVERSIBLE = 0, 1, 2


def _default_labels(n_nodes: int) -> tuple[str, ...]:
    return tuple(f"X{i + 1}" for i in range(n_nodes))


class ConstraintMask:
    """Boolean forbidden-arc matrix: forbidden[a, b] means a -> b may never appear.

    The diagonal is always forbidden.  Instances are immutable; derive new
    masks with with_forbidden().
    """

    __slots__ = ("n_nodes", "forbidden")

    def __init__(self, n_nodes: int, forbidden: np.ndarray | None = None):
        if forbidden is None:
            mat = np.zeros((n_nodes, n_nodes), dtype=bool)
        else:
            mat = np.array(forbidden, dtype=bool, copy=True)
            if mat.shape != (n_nodes, n_nodes):
                raise ConstraintViolation(
                    f"mask shape {mat.shape} does not match n_nodes={n_nodes}"
                )
        np.fill_diagonal(mat, True)
        mat.setflags(write=False)
        self.n_nodes = n_nodes
        self.forbidden = mat

    @classmethod
    def empty(cls, n_nodes: int) -> "ConstraintMask":
        return cls(n_nodes)

    def allows(self, a: int, b: int) -> bool:
        return not self.forbidden[a, b]

    def allows_arcs(self, arcs) -> bool:
        return all(not self.forbidden[a, b] for a, b in arcs)

    def with_forbidden(self, arcs) -> "ConstraintMask":
        mat = np.array(self.forbidden, copy=True)
        for a, b in arcs:
            mat[a, b] = True
        return ConstraintMask(self.n_nodes, mat)

    def free_pairs(self) -> list[tuple[int, int]]:
        """Unordered pairs with at least one allowed direction."""
        out = []
        for a in range(self.n_nodes):
            for b in range(a + 1, self.n_nodes):
                if not (self.forbidden[a, b] and self.forbidden[b, a]):
                    out.append((a, b))
        return out

    def __eq__(self, other):
        return (
            isinstance(other, ConstraintMask)
            and self.n_nodes == other.n_nodes
            and bool(np.array_equal(self.forbidden, other.forbidden))
        )

    def __hash__(self):
        return hash((self.n_nodes, self.forbidden.tobytes()))

    def __repr__(self):
        k = int(self.forbidden.sum()) - self.n_nodes
        return f"ConstraintMask(n_nodes={self.n_nodes}, extra_forbidden={k})"


def topological_order(n_nodes: int, arcs) -> list[int] | None:
    """Kahn's algorithm; returns None when the arc set has a cycle.

    Ties are broken by node id so the order is deterministic.
    """
    indeg = [0] * n_nodes
    children: list[list[int]] = [[] for _ in range(n_nodes)]
    for a, b in arcs:
        indeg[b] += 1
        children[a].append(b)
    ready = sorted(i for i in range(n_nodes) if indeg[i] == 0)
    order: list[int] = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        fresh = []
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                fresh.append(c)
        if fresh:
            ready = sorted(ready + fresh)
    if len(order) != n_nodes:
        return None
    return order


def is_acyclic(n_nodes: int, arcs) -> bool:
    return topological_order(n_nodes, arcs) is not None


@dataclass(frozen=True)
class Dag:
    """Immutable directed acyclic graph over nodes 0..n_nodes-1."""

    n_nodes: int
    arcs: frozenset[Arc]
    labels: tuple[str, ...] = field(default=None, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.labels is None:
            object.__setattr__(self, "labels", _default_labels(self.n_nodes))
        if len(self.labels) != self.n_nodes:
            raise ValueError("label count does not match n_nodes")
        if not isinstance(self.arcs, frozenset):
            object.__setattr__(self, "arcs", frozenset(self.arcs))
        for a, b in self.arcs:
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes) or a == b:
                raise ValueError(f"bad arc ({a}, {b})")
        if not is_acyclic(self.n_nodes, self.arcs):
            raise ValueError("arc set has a directed cycle")

    @property
    def complexity(self) -> int:
        return len(self.arcs)

    def parents(self, v: int) -> list[int]:
        return sorted(a for a, b in self.arcs if b == v)

    def parent_lists(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for a, b in self.arcs:
            out[b].append(a)
        for lst in out:
            lst.sort()
        return out

    def adjacency(self) -> np.ndarray:
        mat = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for a, b in self.arcs:
            mat[a, b] = True
        return mat

    def topological_order(self) -> list[int]:
        order = topological_order(self.n_nodes, self.arcs)
        assert order is not None
        return order

    def skeleton(self) -> frozenset[tuple[int, int]]:
        return frozenset((min(a, b), max(a, b)) for a, b in self.arcs)

    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        """Colliders a -> c <- b with a, b non-adjacent, canonical (min, c, max)."""
        skel = self.skeleton()
        out = set()
        par: dict[int, list[int]] = {}
        for a, b in self.arcs:
            par.setdefault(b, []).append(a)
        for c, ps in par.items():
            for a, b in itertools.combinations(sorted(ps), 2):
                if (min(a, b), max(a, b)) not in skel:
                    out.add((a, c, b))
        return frozenset(out)


@dataclass(frozen=True)
class Cpdag:
    """Completed partially directed graph: compelled arcs plus undirected edges.

    Undirected edges are stored once as (a, b) with a < b.
    """

    n_nodes: int
    directed: frozenset[Arc]
    undirected: frozenset[tuple[int, int]]
    labels: tuple[str, ...] = field(default=None, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.labels is None:
            object.__setattr__(self, "labels", _default_labels(self.n_nodes))
        if len(self.labels) != self.n_nodes:
            raise ValueError("label count does not match n_nodes")
        if not isinstance(self.directed, frozenset):
            object.__setattr__(self, "directed", frozenset(self.directed))
        if not isinstance(self.undirected, frozenset):
            object.__setattr__(
                self,
                "undirected",
                frozenset((min(a, b), max(a, b)) for a, b in self.undirected),
            )
        seen = set()
        for a, b in self.directed:
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes) or a == b:
                raise ValueError(f"bad arc ({a}, {b})")
            seen.add((min(a, b), max(a, b)))
        for a, b in self.undirected:
            if not (0 <= a < b < self.n_nodes):
                raise ValueError(f"bad undirected edge ({a}, {b})")
            if (a, b) in seen:
                raise ValueError(f"edge ({a}, {b}) is both directed and undirected")

    @property
    def n_edges(self) -> int:
        return len(self.directed) + len(self.undirected)

    def skeleton(self) -> frozenset[tuple[int, int]]:
        skel = set(self.undirected)
        skel.update((min(a, b), max(a, b)) for a, b in self.directed)
        return frozenset(skel)

    def has_arc(self, a: int, b: int) -> bool:
        return (a, b) in self.directed

    def has_undirected(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.undirected


def repair_arcs(n_nodes: int, arcs, mask: ConstraintMask | None,
                rng: np.random.Generator) -> frozenset[Arc]:
    """Arc-set form of repair_to_dag, used on the search hot path."""
    if mask is not None:
        kept = {(a, b) for a, b in arcs if mask.allows(a, b)}
    else:
        kept = {(a, b) for a, b in arcs if a != b}
    while True:
        cycle = _find_cycle(n_nodes, kept)
        if cycle is None:
            return frozenset(kept)
        drop = cycle[int(rng.integers(len(cycle)))]
        kept.discard(drop)


def repair_to_dag(arcs, mask: ConstraintMask, rng: np.random.Generator,
                  labels: tuple[str, ...] | None = None) -> Dag:
    """Make an arbitrary arc set acyclic and mask-consistent.

    Forbidden arcs are dropped outright.  While a cycle remains, one arc on
    some cycle is removed, chosen uniformly by the supplied generator, so
    repair is reproducible under a fixed seed.
    """
    return Dag(mask.n_nodes, repair_arcs(mask.n_nodes, arcs, mask, rng), labels)


def _find_cycle(n_nodes: int, arcs) -> list[Arc] | None:
    """Return the arcs of one directed cycle, or None if acyclic."""
    children: list[list[int]] = [[] for _ in range(n_nodes)]
    for a, b in arcs:
        children[a].append(b)
    color = [0] * n_nodes  # 0 unvisited, 1 on stack, 2 done
    parent_arc: dict[int, int] = {}

    for start in range(n_nodes):
        if color[start] != 0:
            continue
        stack: list[tuple[int, int]] = [(start, 0)]
        color[start] = 1
        while stack:
            v, i = stack[-1]
            if i < len(children[v]):
                stack[-1] = (v, i + 1)
                c = children[v][i]
                if color[c] == 1:
                    # walk the stack back from v to c to recover the cycle
                    cyc = [(v, c)]
                    node = v
                    for u, _ in reversed(stack[:-1]):
                        cyc.append((u, node))
                        node = u
                        if u == c:
                            break
                    return cyc
                if color[c] == 0:
                    color[c] = 1
                    stack.append((c, 0))
            else:
                color[v] = 2
                stack.pop()
    return None


def has_directed_path(graph, a: int, b: int) -> bool:
    """True when a directed path a -> ... -> b exists (a == b counts as a path
    only if a lies on a cycle, which cannot happen for a Dag).

    Accepts a Dag or a Cpdag; for a Cpdag only directed arcs are followed.
    """
    arcs = graph.arcs if isinstance(graph, Dag) else graph.directed
    children: dict[int, list[int]] = {}
    for u, v in arcs:
        children.setdefault(u, []).append(v)
    seen = set()
    frontier = [a]
    while frontier:
        v = frontier.pop()
        for c in children.get(v, ()):
            if c == b:
                return True
            if c not in seen:
                seen.add(c)
                frontier.append(c)
    return False


def _chickering_labels(dag: Dag) -> dict[Arc, int]:
    """Label every arc compelled or reversible (Chickering's edge labelling).

    Arcs are processed in the canonical order: sort by topological position of
    the head ascending, breaking ties by position of the tail descending.
    """
    topo = dag.topological_order()
    pos = {v: i for i, v in enumerate(topo)}
    order = sorted(dag.arcs, key=lambda e: (pos[e[1]], -pos[e[0]]))
    idx = {e: i for i, e in enumerate(order)}

    parent_set: dict[int, set[int]] = {v: set() for v in range(dag.n_nodes)}
    for a, b in dag.arcs:
        parent_set[b].add(a)
    # parents of v sorted by the position of the arc (w, v) in the ordering
    parents_by_edge = {
        v: sorted(parent_set[v], key=lambda w: idx[(w, v)]) for v in range(dag.n_nodes)
    }

    label = {e: _UNKNOWN for e in order}
    for x, y in order:
        if label[(x, y)] != _UNKNOWN:
            continue
        resolved = False
        for w in parents_by_edge[x]:
            if label[(w, x)] != _COMPELLED:
                continue
            if w not in parent_set[y]:
                for z in parent_set[y]:
                    label[(z, y)] = _COMPELLED
                resolved = True
                break
            label[(w, y)] = _COMPELLED
        if resolved:
            continue
        if any(z != x and z not in parent_set[x] for z in parent_set[y]):
            mark = _COMPELLED
        else:
            mark = _REVERSIBLE
        for z in parent_set[y]:
            if label[(z, y)] == _UNKNOWN:
                label[(z, y)] = mark
    return label


def _meek_closure(
    n_nodes: int,
    directed: set[Arc],
    undirected: set[tuple[int, int]],
    mask: ConstraintMask | None,
    reference_arcs: frozenset[Arc] | None,
) -> None:
    """Orient undirected edges in place until Meek's rules reach a fixpoint.

    reference_arcs, when given, is the DAG the pattern came from; every
    orientation a sound rule derives must agree with it, so a disagreement
    means the mask and the pattern are inconsistent.
    """
    adj: list[set[int]] = [set() for _ in range(n_nodes)]
    for a, b in directed:
        adj[a].add(b)
        adj[b].add(a)
    for a, b in undirected:
        adj[a].add(b)
        adj[b].add(a)

    def orient(u: int, v: int) -> None:
        undirected.discard((min(u, v), max(u, v)))
        directed.add((u, v))
        if mask is not None and not mask.allows(u, v):
            raise ConstraintViolation(
                f"orientation {u} -> {v} forced by closure but forbidden by mask"
            )
        if reference_arcs is not None and (u, v) not in reference_arcs:
            raise ConstraintViolation(
                f"closure derived {u} -> {v}, which contradicts the source graph"
            )

    changed = True
    while changed:
        changed = False
        # R1: a -> b, b - c, a and c non-adjacent  =>  b -> c
        for a, b in list(directed):
            for c in list(adj[b]):
                if c != a and (min(b, c), max(b, c)) in undirected and c not in adj[a]:
                    orient(b, c)
                    changed = True
        # R2: a -> c -> b with a - b  =>  a -> b
        for a, b in list(undirected):
            for u, v in ((a, b), (b, a)):
                if any((u, c) in directed and (c, v) in directed for c in adj[u]):
                    orient(u, v)
                    changed = True
                    break
        # R3: a - b, a - c, a - d, c -> b, d -> b, c and d non-adjacent  =>  a -> b
        for a, b in list(undirected):
            for u, v in ((a, b), (b, a)):
                into_v = [
                    c
                    for c in adj[u]
                    if (min(u, c), max(u, c)) in undirected and (c, v) in directed
                ]
                if any(
                    d not in adj[c]
                    for c, d in itertools.combinations(into_v, 2)
                ):
                    orient(u, v)
                    changed = True
                    break
        # R4: i - j, i - k, k -> l, l -> j, k and j non-adjacent  =>  i -> j
        for a, b in list(undirected):
            for i, j in ((a, b), (b, a)):
                hit = False
                for k in adj[i]:
                    if (min(i, k), max(i, k)) not in undirected or k in adj[j]:
                        continue
                    if any((k, l) in directed and (l, j) in directed for l in adj[k]):
                        hit = True
                        break
                if hit:
                    orient(i, j)
                    changed = True
                    break


def dag_to_cpdag(dag: Dag, mask: ConstraintMask | None = None) -> Cpdag:
    """Convert a DAG to the pattern of its (mask-constrained) equivalence class.

    Without a mask this is the ordinary CPDAG.  With one, reversible arcs
    whose reversal the mask forbids are kept directed, and the orientation
    rules then propagate to a maximally oriented, still mask-consistent
    pattern.  Raises ConstraintViolation when the DAG itself breaks the mask.
    """
    if mask is not None:
        if mask.n_nodes != dag.n_nodes:
            raise ConstraintViolation("mask size does not match graph")
        for a, b in dag.arcs:
            if not mask.allows(a, b):
                raise ConstraintViolation(f"input arc {a} -> {b} is forbidden")

    labels = _chickering_labels(dag)
    directed = {e for e, l in labels.items() if l == _COMPELLED}
    undirected: set[tuple[int, int]] = set()
    for (x, y), l in labels.items():
        if l != _REVERSIBLE:
            continue
        if mask is not None and not mask.allows(y, x):
            directed.add((x, y))
        else:
            undirected.add((min(x, y), max(x, y)))

    if mask is not None:
        _meek_closure(dag.n_nodes, directed, undirected, mask, dag.arcs)

    return Cpdag(dag.n_nodes, frozenset(directed), frozenset(undirected), dag.labels)


def enumerate_extensions(
    cpdag: Cpdag, mask: ConstraintMask | None = None, cap: int = 4096
) -> list[Dag]:
    """All DAGs in the equivalence class the pattern represents.

    Each extension keeps every directed arc, orients every undirected edge,
    creates no new v-structure, stays acyclic and respects the mask.  Raises
    NoExtension when none exists and ExtensionCapExceeded when the class is
    larger than cap.
    """
    n = cpdag.n_nodes
    base = set(cpdag.directed)
    if mask is not None:
        for a, b in base:
            if not mask.allows(a, b):
                raise ConstraintViolation(f"pattern arc {a} -> {b} is forbidden")
    free = sorted(cpdag.undirected)

    # v-structure test needs adjacency of the full skeleton, which extensions share
    adj = [set() for _ in range(n)]
    for a, b in cpdag.skeleton():
        adj[a].add(b)
        adj[b].add(a)

    results: list[Dag] = []
    chosen: list[Arc] = []

    parents: list[set[int]] = [set() for _ in range(n)]
    for a, b in base:
        parents[b].add(a)

    def creates_v(a: int, b: int) -> bool:
        # a -> b joins existing c -> b with c not adjacent to a
        return any(c != a and c not in adj[a] for c in parents[b])

    def reachable(src: int, dst: int, arcs: set[Arc]) -> bool:
        kids: dict[int, list[int]] = {}
        for u, v in arcs:
            kids.setdefault(u, []).append(v)
        seen = {src}
        front = [src]
        while front:
            v = front.pop()
            if v == dst:
                return True
            for c in kids.get(v, ()):
                if c not in seen:
                    seen.add(c)
                    front.append(c)
        return False

    current: set[Arc] = set(base)

    def place(k: int) -> None:
        if k == len(free):
            results.append(Dag(n, frozenset(current), cpdag.labels))
            if len(results) > cap:
                raise ExtensionCapExceeded(
                    f"equivalence class exceeds cap of {cap} members"
                )
            return
        a, b = free[k]
        for u, v in ((a, b), (b, a)):
            if mask is not None and not mask.allows(u, v):
                continue
            if creates_v(u, v):
                continue
            if reachable(v, u, current):
                continue
            current.add((u, v))
            parents[v].add(u)
            chosen.append((u, v))
            place(k + 1)
            chosen.pop()
            parents[v].discard(u)
            current.discard((u, v))

    # the compelled part itself must be acyclic for any extension to exist
    if not is_acyclic(n, base):
        raise NoExtension("directed part of the pattern is cyclic")
    place(0)
    if not results:
        raise NoExtension("pattern admits no consistent acyclic extension")
    return results


def to_dot(graph, edge_labels: dict | None = None) -> str:
    """Graphviz-style text for a Dag or Cpdag.

    Directed arcs appear as `a -> b`, undirected edges as `a -- b [dir=none]`.
    edge_labels maps an arc or canonical pair to a label string attached to
    that edge.
    """
    lines = ["digraph G {"]
    for name in graph.labels:
        lines.append(f'  "{name}";')

    if isinstance(graph, Dag):
        directed = sorted(graph.arcs)
        undirected: list[tuple[int, int]] = []
    else:
        directed = sorted(graph.directed)
        undirected = sorted(graph.undirected)

    for a, b in directed:
        attrs = []
        if edge_labels and (a, b) in edge_labels:
            attrs.append(f'label="{edge_labels[(a, b)]}"')
        tail = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f'  "{graph.labels[a]}" -> "{graph.labels[b]}"{tail};')
    for a, b in undirected:
        attrs = ["dir=none"]
        if edge_labels and (a, b) in edge_labels:
            attrs.append(f'label="{edge_labels[(a, b)]}"')
        lines.append(
            f'  "{graph.labels[a]}" -- "{graph.labels[b]}" [{", ".join(attrs)}];'
        )
    lines.append("}")
    return "\n".join(lines)
