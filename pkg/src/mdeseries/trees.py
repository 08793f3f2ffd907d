"""Ordered rooted trees, their frames and summation graphs.

Trees are stored canonically as Dyck words: walking around the tree from the
root, ``1`` descends to the next unvisited child and ``0`` returns to the
parent. Vertices are numbered in order of first visit (root is 0), and a tree
edge is identified with the number of its child endpoint.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache

from .errors import ResourceLimitError, StructureError, ValidationError

MAX_ORDER = 12


def check_order(k: int) -> int:
    k = int(k)
    if k < 0:
        raise ValidationError(f"tree order must be nonnegative, got {k}")
    if k > MAX_ORDER:
        raise ResourceLimitError(f"tree order {k} exceeds the guard k <= {MAX_ORDER}")
    return k


def catalan(k: int) -> int:
    """Catalan number via the convolution recurrence."""
    table = [1]
    for n in range(1, k + 1):
        table.append(sum(table[i] * table[n - 1 - i] for i in range(n)))
    return table[k]


@dataclass(frozen=True, order=True)
class OrderedTree:
    """Rooted tree with a total order on the children of every vertex.

    Comparison is lexicographic on the Dyck word, which is the canonical
    enumeration order.
    """

    word: str = ""

    def __post_init__(self):
        depth = 0
        for ch in self.word:
            if ch == "1":
                depth += 1
            elif ch == "0":
                depth -= 1
                if depth < 0:
                    raise ValidationError(f"unbalanced Dyck word {self.word!r}")
            else:
                raise ValidationError(f"Dyck word may only contain 0/1, got {self.word!r}")
        if depth != 0:
            raise ValidationError(f"unbalanced Dyck word {self.word!r}")

    @classmethod
    def from_children(cls, children=()) -> "OrderedTree":
        """Build a tree whose root has the given subtrees, in order."""
        return cls("".join("1" + c.word + "0" for c in children))

    @property
    def edge_count(self) -> int:
        return len(self.word) // 2

    @property
    def node_count(self) -> int:
        return self.edge_count + 1

    @cached_property
    def _structure(self):
        parent = [-1]
        children = [[]]
        stack = [0]
        for ch in self.word:
            if ch == "1":
                v = len(parent)
                parent.append(stack[-1])
                children.append([])
                children[stack[-1]].append(v)
                stack.append(v)
            else:
                stack.pop()
        return tuple(parent), tuple(tuple(c) for c in children)

    @property
    def parent(self) -> tuple:
        """Parent of every vertex; ``-1`` for the root."""
        return self._structure[0]

    @property
    def children(self) -> tuple:
        """Ordered children of every vertex."""
        return self._structure[1]

    def position(self, w: int) -> int:
        """1-based position of ``w`` among its parent's children."""
        if w == 0:
            raise ValidationError("the root has no position")
        return self.children[self.parent[w]].index(w) + 1

    def subtrees(self) -> tuple:
        """Subtrees hanging from the root, in order."""
        out, depth, start = [], 0, 0
        for i, ch in enumerate(self.word):
            if ch == "1":
                if depth == 0:
                    start = i + 1
                depth += 1
            else:
                depth -= 1
                if depth == 0:
                    out.append(OrderedTree(self.word[start:i]))
        return tuple(out)

    def __str__(self) -> str:
        return self.word


def encode_tree(g: OrderedTree) -> str:
    return g.word


def decode_tree(bits: str) -> OrderedTree:
    return OrderedTree(str(bits))


@lru_cache(maxsize=None)
def _dyck_words(k: int) -> tuple:
    # lexicographic with '0' < '1'
    out = []

    def extend(prefix, opened, closed):
        if closed == k:
            out.append("".join(prefix))
            return
        if closed < opened:
            prefix.append("0")
            extend(prefix, opened, closed + 1)
            prefix.pop()
        if opened < k:
            prefix.append("1")
            extend(prefix, opened + 1, closed)
            prefix.pop()

    extend([], 0, 0)
    return tuple(out)


def enumerate_trees(k: int) -> list:
    """All ordered trees with ``k`` edges, in lexicographic Dyck-word order."""
    k = check_order(k)
    return [OrderedTree(w) for w in _dyck_words(k)]


def compose(g1: OrderedTree, g2: OrderedTree) -> OrderedTree:
    """Attach the root of ``g2`` as the last child of the root of ``g1``."""
    return OrderedTree(g1.word + "1" + g2.word + "0")


def decompose(g: OrderedTree) -> tuple:
    """Split off the last child of the root together with its subtree."""
    if g.edge_count == 0:
        raise ValidationError("the single-vertex tree has no decomposition")
    depth = 0
    # walk backwards to the opening step of the root's last child
    for i in range(len(g.word) - 1, -1, -1):
        depth += 1 if g.word[i] == "0" else -1
        if depth == 0:
            return OrderedTree(g.word[:i]), OrderedTree(g.word[i + 1:-1])
    raise StructureError(f"cannot decompose {g.word!r}")


@dataclass(frozen=True)
class Frame:
    """The closed walk around a tree, as a directed path graph.

    Frame vertex ``i`` is the ``i``-th vertex visited; frame edge ``i`` joins
    frame vertices ``i`` and ``i + 1``.

    Attributes
    ----------
    tree : OrderedTree
    association : tuple of int
        Tree vertex associated with each frame vertex.
    slot : tuple of int
        Index ``n`` such that the frame vertex is the ``n``-th copy of its tree
        vertex (``p_n^v`` in the walk notation).
    edge_association : tuple of int
        Tree edge (child vertex id) associated with each frame edge.
    direction : tuple of int
        ``+1`` for a step towards a child, ``-1`` for a step back to the parent.
    """

    tree: OrderedTree
    association: tuple
    slot: tuple
    edge_association: tuple
    direction: tuple

    @property
    def vertices(self) -> range:
        return range(len(self.association))

    @property
    def edges(self) -> tuple:
        return tuple((i, i + 1) for i in range(len(self.edge_association)))

    @cached_property
    def _index(self) -> dict:
        return {(v, n): i for i, (v, n) in enumerate(zip(self.association, self.slot))}

    def p(self, v: int, n: int) -> int:
        """Frame vertex holding the ``n``-th copy of tree vertex ``v``."""
        return self._index[(v, n)]

    def copies(self, v: int) -> tuple:
        return tuple(self.p(v, n) for n in range(len(self.tree.children[v]) + 1))

    @cached_property
    def edge_quadruples(self) -> tuple:
        """Per tree edge (ordered by child id), the frame vertices ``(a, b, c, d)``.

        ``a -> b`` is the descending frame edge and ``c -> d`` the ascending one:
        ``a = p_{n-1}^{parent}``, ``b = p_0^{child}``, ``c = p_{c(child)}^{child}``,
        ``d = p_n^{parent}`` with ``n`` the child's position.
        """
        g = self.tree
        quads = []
        for w in range(1, g.node_count):
            v = g.parent[w]
            n = g.position(w)
            quads.append((self.p(v, n - 1), self.p(w, 0), self.p(w, len(g.children[w])), self.p(v, n)))
        return tuple(quads)


def build_frame(g: OrderedTree) -> Frame:
    association, slot = [0], [0]
    edge_association, direction = [], []
    visits = [0] * g.node_count
    stack = [0]
    next_vertex = 1
    for ch in g.word:
        if ch == "1":
            w = next_vertex
            next_vertex += 1
            stack.append(w)
            edge_association.append(w)
            direction.append(1)
            association.append(w)
            slot.append(0)
        else:
            w = stack.pop()
            v = stack[-1]
            visits[v] += 1
            edge_association.append(w)
            direction.append(-1)
            association.append(v)
            slot.append(visits[v])
    return Frame(g, tuple(association), tuple(slot), tuple(edge_association), tuple(direction))


@dataclass(frozen=True)
class SummationGraph:
    """One of the ``2^k`` pairing graphs on the frame vertices.

    ``choices[j]`` refers to tree edge ``j + 1``: ``0`` joins ``{a, d}`` and
    ``{b, c}``, ``1`` joins ``{a, c}`` and ``{b, d}`` (see
    :attr:`Frame.edge_quadruples`). A leaf child makes ``b == c``, so choice 0
    then produces an explicit self-loop.
    """

    frame: Frame
    choices: tuple
    edges: tuple

    @property
    def vertices(self) -> range:
        return self.frame.vertices

    def length(self, labels) -> float:
        """Sum of ``|label(p) - label(q)|`` over the graph's edges."""
        return sum(abs(labels[p] - labels[q]) for p, q in self.edges)


def summation_graph(frame: Frame, choices) -> SummationGraph:
    choices = tuple(int(c) for c in choices)
    if len(choices) != len(frame.edge_quadruples) or any(c not in (0, 1) for c in choices):
        raise ValidationError("need one 0/1 choice per tree edge")
    edges = []
    for (a, b, c, d), bit in zip(frame.edge_quadruples, choices):
        pairs = ((a, d), (b, c)) if bit == 0 else ((a, c), (b, d))
        edges.extend(tuple(sorted(e)) for e in pairs)
    return SummationGraph(frame, choices, tuple(edges))


def summation_graphs(g: OrderedTree) -> list:
    frame = build_frame(g)
    return [summation_graph(frame, bits) for bits in itertools.product((0, 1), repeat=g.edge_count)]


@dataclass(frozen=True)
class Components:
    """A summation graph split into its unique path and its cycles.

    ``path`` lists vertices from the first to the last root copy; each cycle
    lists its vertices in traversal order (a loop is a 1-vertex cycle).
    """

    path: tuple
    cycles: tuple

    @property
    def path_length(self) -> int:
        return len(self.path) - 1

    @property
    def cycle_lengths(self) -> tuple:
        return tuple(len(c) for c in self.cycles)


def _walk(start, adjacency, used):
    order, v = [start], start
    while True:
        nxt = None
        for eid, u in adjacency[v]:
            if eid not in used:
                used.add(eid)
                nxt = u
                break
        if nxt is None or nxt == start:
            return order
        order.append(nxt)
        v = nxt


def classify_components(sg: SummationGraph) -> Components:
    """Decompose ``sg`` into one path between the root copies plus cycles.

    Raises :class:`StructureError` if the graph is not of that shape or if the
    copies of some tree vertex are split across components.
    """
    frame = sg.frame
    n_vertices = len(frame.vertices)
    adjacency = [[] for _ in range(n_vertices)]
    degree = [0] * n_vertices
    for eid, (p, q) in enumerate(sg.edges):
        adjacency[p].append((eid, q))
        degree[p] += 1
        if p != q:
            adjacency[q].append((eid, p))
        degree[q] += 1

    start, end = 0, n_vertices - 1
    used = set()
    if start == end:
        if degree[start] != 0:
            raise StructureError("k = 0 summation graph must have no edges")
        path = (start,)
    else:
        for v in range(n_vertices):
            want = 1 if v in (start, end) else 2
            if degree[v] != want:
                raise StructureError(f"frame vertex {v} has degree {degree[v]}, expected {want}")
        path = tuple(_walk(start, adjacency, used))
        if path[-1] != end:
            raise StructureError("the path starting at the first root copy does not end at the last one")

    seen = set(path)
    cycles = []
    for v in range(n_vertices):
        if v in seen:
            continue
        cycle = _walk(v, adjacency, used)
        seen.update(cycle)
        cycles.append(tuple(cycle))
    if len(used) != len(sg.edges):
        raise StructureError("edges left over after removing the path and cycles")

    component = {}
    for i, comp in enumerate((path, *cycles)):
        for v in comp:
            component[v] = i
    for v in range(frame.tree.node_count):
        if len({component[p] for p in frame.copies(v)}) != 1:
            raise StructureError(f"copies of tree vertex {v} lie in different components")
    return Components(path, tuple(cycles))
