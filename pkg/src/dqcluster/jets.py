"""kt-family jet distances, sequential recombination, and graph-based clustering.

Pairwise distance: d_ij = min(pt_i^2p, pt_j^2p) * dR2_ij with
dR2_ij = (y_i - y_j)^2 + (phi_i - phi_j)^2 (azimuth wrapped into (-pi, pi]),
beam distance d_iB = pt_i^2p. p = 1 is the kt algorithm, p = -1 anti-kt,
p = 0 a pure-angle variant. An optional radius divides dR2 by r^2; it is off
by default so distances follow the bare definition above.

Recombination is the E-scheme: constituents are summed as massless four
vectors and (pt, y, phi) re-extracted from the sum.
"""

import json
import math
from dataclasses import dataclass, field

from .errors import ParseError
from .graph import Graph

TWO_PI = 2.0 * math.pi


@dataclass
class Particle:
    """Kinematics: transverse momentum, rapidity, azimuth in [0, 2*pi)."""

    pt: float
    y: float
    phi: float

    def __post_init__(self):
        if self.pt < 0:
            raise ValueError(f"negative transverse momentum {self.pt}")
        self.phi = self.phi % TWO_PI

    def four_vector(self):
        """Massless (E, px, py, pz)."""
        return (
            self.pt * math.cosh(self.y),
            self.pt * math.cos(self.phi),
            self.pt * math.sin(self.phi),
            self.pt * math.sinh(self.y),
        )


def recombine(a, b):
    """E-scheme sum of two particles."""
    ea, xa, ya_, za = a.four_vector()
    eb, xb, yb_, zb = b.four_vector()
    e, px, py, pz = ea + eb, xa + xb, ya_ + yb_, za + zb
    pt = math.hypot(px, py)
    phi = math.atan2(py, px) % TWO_PI
    if e - abs(pz) <= 0:
        # Degenerate (collinear with the beam); clamp rapidity.
        y = math.copysign(1e9, pz)
    else:
        y = 0.5 * math.log((e + pz) / (e - pz))
    return Particle(pt, y, phi)


def delta_phi(a, b):
    """Azimuth difference wrapped into (-pi, pi]."""
    d = (a - b) % TWO_PI
    if d > math.pi:
        d -= TWO_PI
    return d


def delta_r2(a, b):
    """Squared rapidity-azimuth separation with azimuth wraparound.

    Uses |dphi| folded into [0, pi], which makes the result exactly
    symmetric in its arguments (the signed modulo form is not, at the last
    bit).
    """
    dy = a.y - b.y
    dphi = abs(a.phi - b.phi)
    if dphi > math.pi:
        dphi = TWO_PI - dphi
    return dy * dy + dphi * dphi


def kt_distance(a, b, p, r=None):
    """Pairwise distance min(pt_a^2p, pt_b^2p) * dR2, optionally over r^2."""
    if p not in (-1, 0, 1):
        raise ValueError(f"p must be -1, 0 or 1, got {p}")
    if p == -1 and (a.pt == 0 or b.pt == 0):
        raise ValueError("anti-kt distance undefined for zero transverse momentum")
    dr2 = delta_r2(a, b)
    if r is not None:
        dr2 /= r * r
    if p == 0:
        return dr2
    if p == 1:
        return min(a.pt * a.pt, b.pt * b.pt) * dr2
    return min(1.0 / (a.pt * a.pt), 1.0 / (b.pt * b.pt)) * dr2


def beam_distance(a, p):
    """Distance to the beam, pt^2p."""
    if p not in (-1, 0, 1):
        raise ValueError(f"p must be -1, 0 or 1, got {p}")
    if p == 0:
        return 1.0
    if p == 1:
        return a.pt * a.pt
    if a.pt == 0:
        raise ValueError("anti-kt beam distance undefined for zero transverse momentum")
    return 1.0 / (a.pt * a.pt)


@dataclass
class MergeEvent:
    i: int
    j: int
    new_id: int
    d: float


@dataclass
class BeamEvent:
    i: int
    d: float


@dataclass
class ClusterSequence:
    """Full recombination history plus the resulting jets.

    ``events`` is the ordered list of merge/beam steps; cluster ids 0..n-1
    are the input particles and merged clusters continue the numbering.
    ``jets`` are in beam-emission order with sorted constituent index lists.
    """

    events: list = field(default_factory=list)
    jets: list = field(default_factory=list)
    constituents: list = field(default_factory=list)

    def to_dict(self):
        events = []
        for e in self.events:
            if isinstance(e, MergeEvent):
                events.append({"type": "merge", "i": e.i, "j": e.j, "new_id": e.new_id, "d": e.d})
            else:
                events.append({"type": "beam", "i": e.i, "d": e.d})
        return {
            "events": events,
            "jets": [
                {"pt": jet.pt, "y": jet.y, "phi": jet.phi, "constituents": cons}
                for jet, cons in zip(self.jets, self.constituents)
            ],
        }


def sequential_cluster(particles, p, r=None):
    """Classic sequential recombination over the full event.

    Repeatedly takes the global minimum over all pairwise and beam distances;
    a minimal pair is merged, a minimal beam distance emits that cluster as a
    final jet. Ties resolve to the earliest candidate scanning clusters in
    creation order, beam distance before that cluster's pairs.
    """
    if not particles:
        raise ValueError("cannot cluster an empty event")
    clusters = {i: part for i, part in enumerate(particles)}
    constituents = {i: [i] for i in range(len(particles))}
    live = list(range(len(particles)))
    next_id = len(particles)
    pair_d = {}
    for a_idx in range(len(live)):
        for b_idx in range(a_idx + 1, len(live)):
            i, j = live[a_idx], live[b_idx]
            pair_d[(i, j)] = kt_distance(clusters[i], clusters[j], p, r)
    seq = ClusterSequence()
    while live:
        best = None
        best_d = math.inf
        for a_idx, i in enumerate(live):
            d_beam = beam_distance(clusters[i], p)
            if d_beam < best_d:
                best_d = d_beam
                best = (i, None)
            for j in live[a_idx + 1:]:
                d = pair_d[(i, j)]
                if d < best_d:
                    best_d = d
                    best = (i, j)
        i, j = best
        if j is None:
            seq.events.append(BeamEvent(i, best_d))
            seq.jets.append(clusters[i])
            seq.constituents.append(sorted(constituents[i]))
            live.remove(i)
            for k in live:
                pair_d.pop((min(i, k), max(i, k)), None)
        else:
            merged = recombine(clusters[i], clusters[j])
            seq.events.append(MergeEvent(i, j, next_id, best_d))
            live.remove(i)
            live.remove(j)
            for k in live:
                pair_d.pop((min(i, k), max(i, k)), None)
                pair_d.pop((min(j, k), max(j, k)), None)
            del pair_d[(i, j)]
            clusters[next_id] = merged
            constituents[next_id] = constituents[i] + constituents[j]
            for k in live:
                pair_d[(k, next_id)] = kt_distance(clusters[k], merged, p, r)
            live.append(next_id)
            next_id += 1
    return seq


def sequential_cluster_reference(particles, p, r=None):
    """Naive reference recombiner: rebuilds every distance at every step.

    O(n^3) and bookkeeping-free, kept as an independent check on the
    incremental implementation; both use the same tie rule (earliest
    candidate in creation order, beam before pairs).
    """
    if not particles:
        raise ValueError("cannot cluster an empty event")
    clusters = list(enumerate(particles))  # (id, particle), creation order
    constituents = {i: [i] for i in range(len(particles))}
    next_id = len(particles)
    seq = ClusterSequence()
    while clusters:
        best = None
        best_d = math.inf
        for a in range(len(clusters)):
            ia, pa = clusters[a]
            d_beam = beam_distance(pa, p)
            if d_beam < best_d:
                best_d = d_beam
                best = (a, None)
            for b in range(a + 1, len(clusters)):
                _, pb = clusters[b]
                d = kt_distance(pa, pb, p, r)
                if d < best_d:
                    best_d = d
                    best = (a, b)
        a, b = best
        if b is None:
            ia, pa = clusters.pop(a)
            seq.events.append(BeamEvent(ia, best_d))
            seq.jets.append(pa)
            seq.constituents.append(sorted(constituents[ia]))
        else:
            ia, pa = clusters[a]
            ib, pb = clusters[b]
            merged = recombine(pa, pb)
            seq.events.append(MergeEvent(ia, ib, next_id, best_d))
            del clusters[b]
            del clusters[a]
            clusters.append((next_id, merged))
            constituents[next_id] = constituents[ia] + constituents[ib]
            next_id += 1
    return seq


def build_particle_graph(particles, p, r=None):
    """Particle graph: edges to the nearest and second-nearest neighbors.

    A particle whose beam distance does not exceed its smallest pairwise
    distance counts as emitted and becomes an isolated node; emitted
    particles are excluded from everyone else's neighbor selection (single
    pass, no cascading). Edge weight is the pairwise distance; ties in
    neighbor choice go to the smaller index. Duplicate edges are kept once.
    """
    if not particles:
        raise ValueError("cannot build a graph from an empty event")
    n = len(particles)
    d = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d[i][j] = d[j][i] = kt_distance(particles[i], particles[j], p, r)
    emitted = []
    for i in range(n):
        d_beam = beam_distance(particles[i], p)
        nearest = min((d[i][j] for j in range(n) if j != i), default=math.inf)
        emitted.append(d_beam <= nearest)
    edges = []
    seen = set()
    for i in range(n):
        if emitted[i]:
            continue
        ranked = sorted(
            ((d[i][j], j) for j in range(n) if j != i and not emitted[j])
        )
        for _, j in ranked[:2]:
            key = (min(i, j), max(i, j))
            if key not in seen:
                seen.add(key)
                edges.append((key[0], key[1], d[key[0]][key[1]]))
    return Graph.from_edges(n, edges)


def _min_distance_sweep(g):
    """One level of joining: each node enters its closest neighbor's community.

    Community labels behave like containers (Louvain-style): a node joins the
    community its closest neighbor belongs to at that moment; ties on the
    edge weight go to the smallest neighbor index. Isolated nodes stay in
    their own singleton community. Returns the per-node community labels.
    """
    comm = list(range(g.node_count))
    for node in range(g.node_count):
        adj = g.adjacency[node]
        if not adj:
            continue
        best_j = None
        best_d = math.inf
        for j, w in adj:
            if w < best_d or (w == best_d and j < best_j):
                best_d = w
                best_j = j
        comm[node] = comm[best_j]
    return comm


def hierarchical_cluster(particles, p, r=None):
    """Louvain-shaped kt clustering; returns (dendrogram, jets, constituents).

    At each level the current particles become graph nodes (nearest plus
    second-nearest edges); every node joins the community of its closest
    neighbor; communities recombine into coarse particles for the next
    level. The process stops when every node is isolated, i.e. everything
    has been assigned to a jet. No modularity is involved.
    """
    from .louvain import Dendrogram, Level, _renumber

    if not particles:
        raise ValueError("cannot cluster an empty event")
    dendrogram = Dendrogram()
    current = list(particles)
    constituents = [[i] for i in range(len(particles))]
    while True:
        g = build_particle_graph(current, p, r)
        if all(not g.adjacency[i] for i in range(g.node_count)):
            break
        comm = _min_distance_sweep(g)
        assignment, k = _renumber(comm, g.node_count)
        moves = sum(1 for i in range(g.node_count) if comm[i] != i)
        dendrogram.levels.append(Level(assignment, None, moves=moves, sweeps=1))
        groups = [[] for _ in range(k)]
        for i, c in enumerate(assignment):
            groups[c].append(i)
        new_particles = []
        new_constituents = []
        for members in groups:
            merged = current[members[0]]
            cons = list(constituents[members[0]])
            for m in members[1:]:
                merged = recombine(merged, current[m])
                cons.extend(constituents[m])
            new_particles.append(merged)
            new_constituents.append(sorted(cons))
        current = new_particles
        constituents = new_constituents
    if not dendrogram.levels:
        dendrogram.levels.append(
            Level(list(range(len(particles))), None, moves=0, sweeps=1)
        )
    return dendrogram, current, constituents


def hierarchical_kt(particles, p, r=None):
    """Dendrogram of the hierarchical kt clustering; leaves are the jets."""
    dendrogram, _, _ = hierarchical_cluster(particles, p, r)
    return dendrogram


def compare_methods(particles, p, r=None):
    """Agreement report between sequential and hierarchical clustering.

    The two methods are not claimed to coincide; this measures how close
    they land: jet counts, whether the constituent partitions are identical,
    and the pairwise Rand index between the partitions.
    """
    seq = sequential_cluster(particles, p, r)
    _, jets, constituents = hierarchical_cluster(particles, p, r)
    n = len(particles)
    label_a = [0] * n
    for lab, cons in enumerate(seq.constituents):
        for i in cons:
            label_a[i] = lab
    label_b = [0] * n
    for lab, cons in enumerate(constituents):
        for i in cons:
            label_b[i] = lab
    same = 0
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            pairs += 1
            if (label_a[i] == label_a[j]) == (label_b[i] == label_b[j]):
                same += 1
    return {
        "sequential_jets": len(seq.jets),
        "hierarchical_jets": len(jets),
        "identical_partition": sorted(map(tuple, seq.constituents))
        == sorted(map(tuple, constituents)),
        "rand_index": same / pairs if pairs else 1.0,
    }


def load_particles(path):
    """Read particles from text lines "pt y phi"; blanks and # comments skipped."""
    import gzip

    opener = gzip.open if str(path).endswith(".gz") else open
    particles = []
    with opener(path, "rt") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) < 3:
                raise ParseError(f"{path}:{lineno}: expected 'pt y phi'")
            try:
                pt, y, phi = (float(v) for v in parts[:3])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric particle field") from None
            particles.append(Particle(pt, y, phi))
    return particles


def export_sequence(seq, path):
    with open(path, "w") as fh:
        json.dump(seq.to_dict(), fh, indent=2)
        fh.write("\n")
