"""Louvain hierarchical community detection by greedy modularity optimization.

Modularity of a partition S of the node set V:

    Q = (1/2W) * sum_{i in V} e_{i->C(i)}  -  sum_{C in S} (deg_C / 2W)^2

where e_{i->C} is the weight from node i into community C (a loop counts
twice toward its own community, matching the degree convention), deg_C is
the summed degree of C's members and W the total edge weight. Node moves are
scored by the incremental gain of this quantity, computed in O(deg(node)).
"""

import numpy as np


class CommunityState:
    """Mutable node-to-community assignment with per-community aggregates."""

    __slots__ = ("community", "deg_c", "internal_w", "size")

    def __init__(self, community, deg_c, internal_w, size):
        self.community = community      # list: node -> community id
        self.deg_c = deg_c              # community id -> summed member degree
        self.internal_w = internal_w    # community id -> intra weight (edges once, loops once)
        self.size = size                # community id -> member count

    @classmethod
    def singletons(cls, g):
        community = list(range(g.node_count))
        deg_c = {i: g.degree(i) for i in range(g.node_count)}
        internal_w = {i: g.loop_weight[i] for i in range(g.node_count)}
        size = {i: 1 for i in range(g.node_count)}
        return cls(community, deg_c, internal_w, size)

    @classmethod
    def from_assignment(cls, g, community):
        community = list(community)
        deg_c = {}
        internal_w = {}
        size = {}
        for i in range(g.node_count):
            c = community[i]
            deg_c[c] = deg_c.get(c, 0.0) + g.degree(i)
            internal_w[c] = internal_w.get(c, 0.0) + g.loop_weight[i]
            size[c] = size.get(c, 0) + 1
        for u in range(g.node_count):
            cu = community[u]
            for v, w in g.adjacency[u]:
                if u < v and community[v] == cu:
                    internal_w[cu] += w
        return cls(community, deg_c, internal_w, size)

    @property
    def community_count(self):
        return len(self.size)

    def copy(self):
        return CommunityState(
            list(self.community), dict(self.deg_c), dict(self.internal_w), dict(self.size)
        )

    def weight_to_communities(self, g, node):
        """Weight from ``node`` into each adjacent community, excluding loops.

        The node's own community is always present (possibly with weight 0);
        for the own community the node's edges to *other* members are counted.
        """
        own = self.community[node]
        acc = {own: 0.0}
        for v, w in g.adjacency[node]:
            c = self.community[v]
            acc[c] = acc.get(c, 0.0) + w
        return acc


def modularity(g, cs):
    """Partition quality in [-1, 1); 0 when all nodes share one community."""
    w_total = g.total_weight
    if w_total <= 0:
        raise ValueError("modularity undefined for a graph with zero total weight")
    two_w = 2.0 * w_total
    q = 0.0
    for c, deg in cs.deg_c.items():
        q += cs.internal_w[c] / w_total - (deg / two_w) ** 2
    return q


def modularity_unnormalized(g, cs):
    """The same objective without the leading 1/2W factor (2W * Q)."""
    return 2.0 * g.total_weight * modularity(g, cs)


def modularity_gain(g, cs, node, target):
    """Change in modularity from moving ``node`` to community ``target``.

    Computed incrementally from the node's adjacency; exact move semantics
    (the full recompute difference matches this to rounding).
    """
    current = cs.community[node]
    if target == current:
        return 0.0
    w_total = g.total_weight
    e_target = 0.0
    e_current = 0.0
    for v, w in g.adjacency[node]:
        c = cs.community[v]
        if c == target:
            e_target += w
        elif c == current:
            e_current += w
    k = g.degree(node)
    deg_target = cs.deg_c.get(target, 0.0)
    deg_current = cs.deg_c[current]
    return (e_target - e_current) / w_total - k * (deg_target - deg_current + k) / (
        2.0 * w_total * w_total
    )


def apply_move(g, cs, node, target):
    """Move ``node`` into ``target``, updating aggregates; no-op if already there."""
    current = cs.community[node]
    if target == current:
        return
    e_target = 0.0
    e_current = 0.0
    for v, w in g.adjacency[node]:
        c = cs.community[v]
        if c == target:
            e_target += w
        elif c == current:
            e_current += w
    k = g.degree(node)
    loop = g.loop_weight[node]
    cs.deg_c[current] -= k
    cs.internal_w[current] -= e_current + loop
    cs.size[current] -= 1
    if cs.size[current] == 0:
        del cs.deg_c[current]
        del cs.internal_w[current]
        del cs.size[current]
    cs.deg_c[target] = cs.deg_c.get(target, 0.0) + k
    cs.internal_w[target] = cs.internal_w.get(target, 0.0) + e_target + loop
    cs.size[target] = cs.size.get(target, 0) + 1
    cs.community[node] = target


def best_community(g, cs, node, candidates):
    """Candidate community with the largest positive modularity gain.

    The node's current community is always an implicit candidate. If no
    candidate yields a positive gain the node stays put. Ties break to the
    earliest candidate in list order.
    """
    current = cs.community[node]
    best = current
    best_gain = 0.0
    for cand in candidates:
        gain = modularity_gain(g, cs, node, cand)
        if gain > best_gain:
            best_gain = gain
            best = cand
    return best


def _neighbor_candidates(cs, g, node):
    """Adjacent communities in adjacency order (first occurrence), then own."""
    seen = set()
    out = []
    for v, _ in g.adjacency[node]:
        c = cs.community[v]
        if c not in seen:
            seen.add(c)
            out.append(c)
    own = cs.community[node]
    if own not in seen:
        out.append(own)
    return out


def _verify_gains(g, cs, node, candidates):
    """Check every candidate's incremental gain against apply-and-recompute."""
    q_before = modularity(g, cs)
    for cand in candidates:
        gain = modularity_gain(g, cs, node, cand)
        moved = cs.copy()
        apply_move(g, moved, node, cand)
        q_after = modularity(g, moved)
        if abs((q_after - q_before) - gain) > 1e-9:
            raise AssertionError(
                f"incremental gain {gain} disagrees with recompute "
                f"{q_after - q_before} for node {node} -> community {cand}"
            )


def one_level(g, cs, min_gain=1e-7, max_sweeps=None, check_gains=False, q_trace=None):
    """Optimize one Louvain level by repeated node sweeps.

    Sweeps nodes in index order, moving each to its best neighboring
    community, until a full sweep gains less than ``min_gain`` (or makes no
    move at all). Returns ``(cs, converged)`` where ``converged`` is True
    when the final sweep made zero moves, i.e. a fixed point was reached
    rather than the gain threshold cutting the loop short.

    ``check_gains=True`` verifies the incremental gain of every candidate
    considered for every node against a full apply-and-recompute difference
    (1e-9 tolerance) and raises AssertionError on mismatch; this is a
    debugging aid, quadratic in practice. With ``q_trace`` (a list) it also
    records the recomputed modularity after every accepted move.
    """
    cs, converged, _, _ = _one_level(g, cs, min_gain, max_sweeps, check_gains, q_trace)
    return cs, converged


def _one_level(g, cs, min_gain, max_sweeps=None, check_gains=False, q_trace=None):
    if min_gain < 0:
        raise ValueError("min_gain must be >= 0")
    sweeps = 0
    moves_total = 0
    converged = False
    while True:
        sweeps += 1
        sweep_gain = 0.0
        sweep_moves = 0
        for node in range(g.node_count):
            candidates = _neighbor_candidates(cs, g, node)
            if check_gains:
                _verify_gains(g, cs, node, candidates)
            target = best_community(g, cs, node, candidates)
            if target == cs.community[node]:
                continue
            gain = modularity_gain(g, cs, node, target)
            apply_move(g, cs, node, target)
            if check_gains and q_trace is not None:
                q_trace.append(modularity(g, cs))
            sweep_gain += gain
            sweep_moves += 1
        moves_total += sweep_moves
        if sweep_moves == 0:
            converged = True
            break
        if sweep_gain < min_gain:
            break
        if max_sweeps is not None and sweeps >= max_sweeps:
            break
    return cs, converged, moves_total, sweeps


class Level:
    """One dendrogram level: an assignment of the level's nodes to communities."""

    __slots__ = ("assignment", "quality", "moves", "sweeps")

    def __init__(self, assignment, quality, moves=0, sweeps=0):
        self.assignment = assignment
        self.quality = quality
        self.moves = moves
        self.sweeps = sweeps

    @property
    def community_count(self):
        return int(max(self.assignment)) + 1 if len(self.assignment) else 0


class Dendrogram:
    """Hierarchy of clusterings; level k's nodes are level k-1's communities."""

    def __init__(self, levels=None):
        self.levels = levels if levels is not None else []

    def final_assignment(self):
        """Compose all level mappings into original-node -> final community."""
        if not self.levels:
            return np.array([], dtype=int)
        out = np.asarray(self.levels[0].assignment, dtype=int).copy()
        for level in self.levels[1:]:
            mapping = np.asarray(level.assignment, dtype=int)
            out = mapping[out]
        return out

    def to_text(self):
        """Line-oriented export: 'level k:' then alternating node/community ids."""
        lines = []
        for k, level in enumerate(self.levels, start=1):
            pairs = " ".join(
                f"{node} {int(c)}" for node, c in enumerate(level.assignment)
            )
            lines.append(f"level {k}: {pairs}")
        return "\n".join(lines) + "\n"

    def metrics(self):
        return {
            "levels": [
                {
                    "level": k,
                    "modularity": level.quality,
                    "communities": level.community_count,
                    "moves": level.moves,
                    "sweeps": level.sweeps,
                }
                for k, level in enumerate(self.levels, start=1)
            ],
        }


def _renumber(community, node_count):
    """Relabel communities 0..k-1 in order of first appearance by node index."""
    mapping = {}
    out = np.empty(node_count, dtype=int)
    for i in range(node_count):
        c = community[i]
        if c not in mapping:
            mapping[c] = len(mapping)
        out[i] = mapping[c]
    return out, len(mapping)


def aggregate(g, cs):
    """Coarsen: one node per community, intra weight (loops included) as loops.

    Inter-community weights sum into single edges; total weight is conserved.
    New node ids follow first appearance of each community by node index, and
    the coarse adjacency keeps first-seen edge order for determinism.
    """
    from .graph import Graph

    comm_ids, k = _renumber(cs.community, g.node_count)
    inter = {}
    order = []
    for u in range(g.node_count):
        cu = comm_ids[u]
        for v, w in g.adjacency[u]:
            if u < v:
                cv = comm_ids[v]
                if cu == cv:
                    continue
                key = (cu, cv) if cu < cv else (cv, cu)
                if key not in inter:
                    order.append(key)
                    inter[key] = 0.0
                inter[key] += w
    edges = [(a, b, inter[(a, b)]) for a, b in order]
    old_to_new = {}
    for i in range(g.node_count):
        old_to_new.setdefault(cs.community[i], comm_ids[i])
    loops = [(old_to_new[c], old_to_new[c], w) for c, w in cs.internal_w.items() if w > 0]
    loops.sort()
    return Graph.from_edges(k, edges + loops)


def louvain(g, min_gain=1e-7):
    """Full multi-phase Louvain: optimize a level, aggregate, repeat.

    Stops when a phase improves modularity by less than ``min_gain`` or makes
    no move. The first phase is always recorded, so the dendrogram is never
    empty for a valid graph. Per-level modularity is computed on that level's
    (aggregated) graph; by construction it equals the modularity of the
    composed assignment on the original graph up to rounding.
    """
    if g.total_weight <= 0:
        raise ValueError("louvain requires a graph with positive total weight")
    dendrogram = Dendrogram()
    work = g
    prev_q = None
    while True:
        cs, _, moves, sweeps = _one_level(work, CommunityState.singletons(work), min_gain)
        q = modularity(work, cs)
        if prev_q is not None and (moves == 0 or q - prev_q < min_gain):
            break
        assignment, _ = _renumber(cs.community, work.node_count)
        dendrogram.levels.append(Level(assignment, q, moves, sweeps))
        if moves == 0:
            break
        prev_q = q
        work = aggregate(work, cs)
        if work.node_count <= 1:
            break
    return dendrogram


