"""Sparse undirected weighted graph: representation, ingestion, normalization.

The adjacency of every node preserves first-seen order from the source file,
which downstream code relies on ("first k neighbors" truncation). Self-loops
are kept out of the adjacency lists and stored per node in ``loop_weight``.

Degree convention: degree(i) = sum of incident edge weights + 2 * loop_weight(i),
so that the degrees of all nodes sum to exactly twice the total weight W
(W counts each undirected edge once and each loop once).
"""

import gzip
from dataclasses import dataclass, field

from .errors import ParseError, StructureError

# Sentinel for unused neighbor slots.
DUMMY_ID = -1
DUMMY_WEIGHT = -1.0

NORM_MIN = 0.000001
NORM_MAX = 1.0


class Graph:
    """Immutable undirected weighted graph with ordered adjacency lists."""

    __slots__ = ("node_count", "adjacency", "loop_weight", "total_weight", "_degrees")

    def __init__(self, node_count, adjacency, loop_weight, total_weight):
        self.node_count = node_count
        self.adjacency = adjacency
        self.loop_weight = loop_weight
        self.total_weight = total_weight
        self._degrees = None

    @classmethod
    def from_edges(cls, node_count, edges):
        """Build a graph from (u, v, w) triples.

        Duplicate (u, v) pairs are summed. Entries with u == v become loop
        weight. Adjacency keeps the order in which each neighbor first
        appears in ``edges``.
        """
        adjacency = [[] for _ in range(node_count)]
        loop_weight = [0.0] * node_count
        slot_of = [{} for _ in range(node_count)]  # neighbor id -> adjacency index
        total = 0.0
        for u, v, w in edges:
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise StructureError(
                    f"edge ({u}, {v}) outside declared node range [0, {node_count})"
                )
            w = float(w)
            if w < 0 or w != w:
                raise ValueError(f"edge ({u}, {v}) has invalid weight {w}")
            total += w
            if u == v:
                loop_weight[u] += w
                continue
            iu = slot_of[u].get(v)
            if iu is None:
                slot_of[u][v] = len(adjacency[u])
                adjacency[u].append((v, w))
                slot_of[v][u] = len(adjacency[v])
                adjacency[v].append((u, w))
            else:
                old = adjacency[u][iu][1]
                adjacency[u][iu] = (v, old + w)
                iv = slot_of[v][u]
                adjacency[v][iv] = (u, old + w)
        return cls(node_count, adjacency, loop_weight, total)

    @property
    def degrees(self):
        if self._degrees is None:
            self._degrees = [
                sum(w for _, w in self.adjacency[i]) + 2.0 * self.loop_weight[i]
                for i in range(self.node_count)
            ]
        return self._degrees

    def degree(self, node):
        return self.degrees[node]

    @property
    def num_edges(self):
        """Number of distinct undirected non-loop edges plus loops."""
        pairs = sum(len(a) for a in self.adjacency) // 2
        loops = sum(1 for w in self.loop_weight if w > 0)
        return pairs + loops

    def neighbors(self, node):
        return self.adjacency[node]

    def edges(self):
        """Yield each undirected edge once as (u, v, w) with u < v, then loops."""
        for u in range(self.node_count):
            for v, w in self.adjacency[u]:
                if u < v:
                    yield u, v, w
        for u, w in enumerate(self.loop_weight):
            if w > 0:
                yield u, u, w

    def check_symmetry(self):
        """Verify (u,v,w) appears in v's adjacency with identical weight."""
        for u in range(self.node_count):
            for v, w in self.adjacency[u]:
                back = dict(self.adjacency[v]).get(u)
                if back != w:
                    raise StructureError(
                        f"adjacency asymmetry between {u} and {v}: {w} vs {back}"
                    )


@dataclass
class NeighborSlots:
    """Fixed-length action-slot view of a node: itself first, then neighbors."""

    node: int
    slots: list = field(default_factory=list)  # (neighbor id or DUMMY_ID, weight)


def neighbor_slots(g, node, action_size):
    """First ``action_size`` slots for a node: [self, first neighbors..., dummies].

    Slot 0 is always the node itself (paired with its loop weight). Remaining
    slots take the node's neighbors in adjacency order; surplus slots are
    filled with the dummy sentinel.
    """
    if not 0 <= node < g.node_count:
        raise ValueError(f"node {node} out of range [0, {g.node_count})")
    if action_size < 1:
        raise ValueError("action_size must be >= 1")
    slots = [(node, g.loop_weight[node])]
    adj = g.adjacency[node]
    for k in range(action_size - 1):
        if k < len(adj):
            slots.append(adj[k])
        else:
            slots.append((DUMMY_ID, DUMMY_WEIGHT))
    return NeighborSlots(node=node, slots=slots)


def normalize_weights(g):
    """Affinely map all edge and loop weights into [0.000001, 1].

    When every weight is equal the map degenerates and all weights become 1.
    Returns a new graph; total weight is recomputed from the mapped weights.
    Normalizing an already normalized graph is a no-op (up to rounding).
    """
    weights = [w for u in range(g.node_count) for _, w in g.adjacency[u]]
    weights += [w for w in g.loop_weight if w > 0]
    if not weights:
        raise ValueError("cannot normalize a graph with no edges")
    w_min = min(weights)
    w_max = max(weights)
    if w_max == w_min:
        def remap(w):
            return NORM_MAX
    else:
        scale = (NORM_MAX - NORM_MIN) / (w_max - w_min)

        def remap(w):
            return NORM_MIN + (w - w_min) * scale

    adjacency = [[(v, remap(w)) for v, w in g.adjacency[u]] for u in range(g.node_count)]
    loop_weight = [remap(w) if w > 0 else 0.0 for w in g.loop_weight]
    total = sum(w for u in range(g.node_count) for v, w in adjacency[u] if u < v)
    total += sum(loop_weight)
    return Graph(g.node_count, adjacency, loop_weight, total)


def is_normalized(g):
    """True if every stored weight already lies in the normalized range."""
    eps = 1e-12
    for u in range(g.node_count):
        for _, w in g.adjacency[u]:
            if w < NORM_MIN - eps or w > NORM_MAX + eps:
                return False
    for w in g.loop_weight:
        if w > 0 and (w < NORM_MIN - eps or w > NORM_MAX + eps):
            return False
    return True


def _open_text(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rt")
    return open(path, "r")


def load_matrix_market(path):
    """Load a Matrix Market coordinate file as an undirected weighted graph.

    Supported headers: object ``matrix``, format ``coordinate``, field
    ``real``/``integer``/``pattern``, symmetry ``symmetric``/``general``.
    Pattern entries get weight 1. Duplicate entries for the same ordered
    pair are summed. In a general file, (u, v) and (v, u) describe the same
    undirected edge: both orientations must agree in (summed) weight and the
    edge is taken once, not doubled. Diagonal entries become loop weight.
    Files ending in .gz are decompressed transparently.
    """
    with _open_text(path) as fh:
        header = fh.readline()
        if not header.startswith("%%MatrixMarket"):
            raise ParseError(f"{path}:1: missing %%MatrixMarket header")
        fields = header.strip().split()
        if len(fields) < 5:
            raise ParseError(f"{path}:1: incomplete MatrixMarket header: {header.strip()!r}")
        _, obj, fmt, field_kind, symmetry = [f.lower() for f in fields[:5]]
        if obj != "matrix" or fmt != "coordinate":
            raise ParseError(f"{path}:1: unsupported MatrixMarket type {obj!r} {fmt!r}")
        if field_kind not in ("real", "integer", "pattern"):
            raise ParseError(f"{path}:1: unsupported field {field_kind!r}")
        if symmetry not in ("symmetric", "general"):
            raise ParseError(f"{path}:1: unsupported symmetry {symmetry!r}")
        pattern = field_kind == "pattern"

        lineno = 1
        size_line = None
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise ParseError(f"{path}:{lineno}: missing size line")
        parts = size_line.split()
        if len(parts) != 3:
            raise ParseError(f"{path}:{lineno}: size line must be 'rows cols nnz'")
        try:
            rows, cols, nnz = (int(p) for p in parts)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer size line {size_line!r}") from None
        if rows != cols:
            raise StructureError(f"{path}: matrix is {rows}x{cols}, graph requires square")

        # Per unordered pair: summed weight per orientation, in first-seen order.
        fwd = {}
        rev = {}
        order = []
        loops = {}
        loop_order = []
        seen = 0
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            seen += 1
            if seen > nnz:
                raise ParseError(f"{path}:{lineno}: more entries than declared nnz={nnz}")
            parts = stripped.split()
            want = 2 if pattern else 3
            if len(parts) < want:
                raise ParseError(f"{path}:{lineno}: expected {want} columns, got {len(parts)}")
            try:
                u = int(parts[0]) - 1
                v = int(parts[1]) - 1
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer index") from None
            if pattern:
                w = 1.0
            else:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: non-numeric weight {parts[2]!r}") from None
            if not (0 <= u < rows and 0 <= v < rows):
                raise StructureError(
                    f"{path}:{lineno}: index ({u + 1}, {v + 1}) outside declared size {rows}"
                )
            if w < 0:
                raise ValueError(f"{path}:{lineno}: negative weight {w}")
            if u == v:
                if u not in loops:
                    loop_order.append(u)
                loops[u] = loops.get(u, 0.0) + w
                continue
            key = (u, v) if u < v else (v, u)
            if key not in fwd and key not in rev:
                order.append(key)
            side = fwd if (u, v) == key else rev
            side[key] = side.get(key, 0.0) + w
        if seen < nnz:
            raise ParseError(f"{path}: truncated file: {seen} entries, declared {nnz}")

    edges = []
    for key in order:
        a = fwd.get(key)
        b = rev.get(key)
        if symmetry == "symmetric":
            # Both triangles in a symmetric file are duplicates of one edge.
            w = (a or 0.0) + (b or 0.0)
        elif a is not None and b is not None:
            if a != b:
                raise StructureError(
                    f"{path}: asymmetric weights {a} vs {b} for undirected edge "
                    f"({key[0] + 1}, {key[1] + 1})"
                )
            w = a
        else:
            w = a if a is not None else b
        edges.append((key[0], key[1], w))
    edges.extend((u, u, loops[u]) for u in loop_order)
    return Graph.from_edges(rows, edges)


def load_edge_list(path, index_base=0, default_weight=1.0, duplicates="sum"):
    """Load a whitespace-separated "u v [w]" edge list.

    ``index_base`` selects 0- or 1-based node ids. Missing weights default to
    ``default_weight``. With ``duplicates="sum"`` repeated pairs accumulate;
    with ``duplicates="strict"`` a repeated pair must carry the same weight
    (kept once) and a conflicting repeat raises. Node count is one past the
    highest id seen. Files ending in .gz are decompressed transparently.
    """
    if index_base not in (0, 1):
        raise ValueError("index_base must be 0 or 1")
    if duplicates not in ("sum", "strict"):
        raise ValueError("duplicates must be 'sum' or 'strict'")
    raw = []
    max_node = -1
    first_weight = {}
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#") or stripped.startswith("%"):
                continue
            parts = stripped.split()
            if len(parts) < 2:
                raise ParseError(f"{path}:{lineno}: expected 'u v [w]'")
            try:
                u = int(parts[0]) - index_base
                v = int(parts[1]) - index_base
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer node id") from None
            if u < 0 or v < 0:
                raise StructureError(f"{path}:{lineno}: node id below index base")
            if len(parts) >= 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: non-numeric weight {parts[2]!r}") from None
            else:
                w = default_weight
            if w < 0:
                raise ValueError(f"{path}:{lineno}: negative weight {w}")
            key = (u, v) if u <= v else (v, u)
            if duplicates == "strict":
                prev = first_weight.get(key)
                if prev is None:
                    first_weight[key] = w
                elif prev != w:
                    raise StructureError(
                        f"{path}:{lineno}: conflicting duplicate edge {key} "
                        f"({prev} vs {w})"
                    )
                else:
                    continue
            raw.append((u, v, w))
            max_node = max(max_node, u, v)
    return Graph.from_edges(max_node + 1, raw)
