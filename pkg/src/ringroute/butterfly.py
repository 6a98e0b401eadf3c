"""Node-disjoint subset routing on concatenated pairs of butterflies.

Labels are ``d``-bit integers; bit position ``j`` (0-based, most significant
first) is integer bit ``d - 1 - j``.  Edge layer ``i`` of the left butterfly
rewrites position ``left_order[i]``; edge layer ``d + i`` of the right one
rewrites ``right_order[i]``.  An optional ``middle`` permutation maps each
left output label to the right input label it is glued to, which covers
pairs that are not layer-permuted.  A layer-``d`` node is always named by
its left label.

Every router here picks a set of layer-``d`` crossing nodes whose counts
split as ceil/floor down the sub-butterfly tree on both sides, then walks
packets forward from the inputs and backward from the outputs with
straight/crossed switch settings realising those counts.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_bipartite_matching, maximum_flow

LEFT, RIGHT = "left", "right"


class RoutingError(RuntimeError):
    """A constructed path set failed verification."""


@dataclass(frozen=True)
class ButterflyPair:
    d: int
    left_order: tuple
    right_order: tuple
    middle: Optional[tuple] = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        for name in ("left_order", "right_order"):
            order = tuple(getattr(self, name))
            if sorted(order) != list(range(self.d)):
                raise ValueError(f"{name} must be a permutation of 0..{self.d - 1}")
            object.__setattr__(self, name, order)
        if self.middle is not None:
            mid = tuple(self.middle)
            if sorted(mid) != list(range(self.size)):
                raise ValueError("middle must be a permutation of the labels")
            object.__setattr__(self, "middle", mid)

    @classmethod
    def standard(cls, d: int) -> "ButterflyPair":
        return cls(d, tuple(range(d)), tuple(range(d)))

    @classmethod
    def random(cls, d: int, rng: np.random.Generator, glued: bool = False) -> "ButterflyPair":
        """Random layer-permuted pair; ``glued`` also scrambles the middle."""
        mid = tuple(int(x) for x in rng.permutation(1 << d)) if glued else None
        return cls(d, tuple(int(x) for x in rng.permutation(d)),
                   tuple(int(x) for x in rng.permutation(d)), mid)

    @property
    def size(self) -> int:
        return 1 << self.d

    @property
    def layer_permuted(self) -> bool:
        return self.middle is None

    def glue(self, label: int) -> int:
        return label if self.middle is None else self.middle[label]

    @property
    def unglue(self) -> tuple:
        if self.middle is None:
            return tuple(range(self.size))
        inv = [0] * self.size
        for x, y in enumerate(self.middle):
            inv[y] = x
        return tuple(inv)

    def split_order(self, side: str) -> tuple:
        """Bit positions fixed one by one when descending from that side's end."""
        return self.left_order if side == LEFT else tuple(reversed(self.right_order))

    def successors(self, layer: int, label: int) -> tuple:
        if not 0 <= layer < 2 * self.d:
            return ()
        if layer < self.d:
            pos = self.left_order[layer]
        else:
            pos = self.right_order[layer - self.d]
            if layer == self.d:
                label = self.glue(label)
        return set_bit(label, pos, 0, self.d), set_bit(label, pos, 1, self.d)

    def bits(self, label: int) -> str:
        return format(label, f"0{self.d}b")

    def to_dict(self) -> dict:
        return {"d": self.d, "left_order": list(self.left_order),
                "right_order": list(self.right_order),
                "middle": None if self.middle is None else list(self.middle)}

    @classmethod
    def from_dict(cls, data: dict) -> "ButterflyPair":
        return cls(int(data["d"]), tuple(data["left_order"]), tuple(data["right_order"]),
                   None if data.get("middle") is None else tuple(data["middle"]))


def get_bit(label: int, pos: int, d: int) -> int:
    return (label >> (d - 1 - pos)) & 1


def set_bit(label: int, pos: int, value: int, d: int) -> int:
    mask = 1 << (d - 1 - pos)
    return (label | mask) if value else (label & ~mask)


def prefix(label: int, order: Sequence[int], k: int, d: int) -> tuple:
    return tuple(get_bit(label, order[j], d) for j in range(k))


@dataclass(frozen=True)
class SubButterfly:
    """Sub-butterfly with ``len(fixed)`` positions pinned.

    Left ones live on layers ``len(fixed)..d`` and right ones on
    ``d..2d-len(fixed)``; ``layer`` is the end away from layer ``d``.
    Right labels are in the right butterfly's own label space.
    """

    side: str
    fixed: tuple
    layer: int
    q: int

    @classmethod
    def of(cls, pair: ButterflyPair, side: str, values: tuple) -> "SubButterfly":
        m = len(values)
        order = pair.split_order(side)
        fixed = tuple(sorted(zip(order[:m], values)))
        layer = m if side == LEFT else 2 * pair.d - m
        return cls(side, fixed, layer, pair.d - m)

    def contains(self, label: int, d: int) -> bool:
        return all(get_bit(label, pos, d) == v for pos, v in self.fixed)

    def __str__(self):
        pins = dict(self.fixed)
        body = "".join(str(pins[j]) if j in pins else "*" for j in range(self.q + len(self.fixed)))
        return f"{self.side}:{body}@{self.layer}"


@dataclass
class ConnectivityGraph:
    """Bipartite graph of level ``m = d - q`` sub-butterflies.

    ``edges`` maps (left index, right index) to the number of shared
    layer-``d`` nodes.
    """

    q: int
    left: list
    right: list
    edges: dict

    @property
    def m(self) -> int:
        return len(self.left[0].fixed) if self.left else 0

    def degrees(self) -> tuple[list, list]:
        dl = [0] * len(self.left)
        dr = [0] * len(self.right)
        for (i, j), w in self.edges.items():
            dl[i] += w
            dr[j] += w
        return dl, dr

    def components(self) -> list[tuple[list, list]]:
        parent = list(range(len(self.left) + len(self.right)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        off = len(self.left)
        for i, j in self.edges:
            a, b = find(i), find(off + j)
            if a != b:
                parent[a] = b
        groups: dict = defaultdict(lambda: ([], []))
        for i in range(len(self.left)):
            groups[find(i)][0].append(i)
        for j in range(len(self.right)):
            groups[find(off + j)][1].append(j)
        return sorted((tuple(sorted(a)), tuple(sorted(b))) for a, b in groups.values())

    def component_of(self) -> tuple[dict, dict]:
        lc, rc = {}, {}
        for c, (ls, rs) in enumerate(self.components()):
            lc.update({i: c for i in ls})
            rc.update({j: c for j in rs})
        return lc, rc

    def regular(self) -> bool:
        dl, dr = self.degrees()
        return set(dl) | set(dr) == {1 << self.q}

    def complete_components(self) -> bool:
        """Every component is complete bipartite with equal sides."""
        for ls, rs in self.components():
            if len(ls) != len(rs):
                return False
            if any((i, j) not in self.edges for i in ls for j in rs):
                return False
        return True

    def simple_matrix(self):
        rows, cols = zip(*self.edges) if self.edges else ((), ())
        return sp.csr_matrix((np.ones(len(rows), np.int8), (rows, cols)),
                             shape=(len(self.left), len(self.right)))


def _vertices(pair: ButterflyPair, side: str, m: int) -> list:
    return [SubButterfly.of(pair, side, v) for v in itertools.product((0, 1), repeat=m)]


@lru_cache(maxsize=None)
def connectivity_graph(pair: ButterflyPair, q: int) -> ConnectivityGraph:
    """Connectivity graph of the ``q``-dimensional sub-butterflies.

    Layer-permuted pairs connect two sub-butterflies iff their pinned bits
    agree wherever both pin the same position, with multiplicity
    ``2**(free positions)``; glued pairs count shared nodes directly.
    """
    if not 0 <= q <= pair.d:
        raise ValueError(f"q must lie in 0..{pair.d}")
    m = pair.d - q
    left = _vertices(pair, LEFT, m)
    right = _vertices(pair, RIGHT, m)
    edges: dict = {}
    if pair.layer_permuted:
        for i, a in enumerate(left):
            pa = dict(a.fixed)
            for j, b in enumerate(right):
                if all(pa.get(pos, v) == v for pos, v in b.fixed):
                    edges[(i, j)] = 1 << (pair.d - len(pa.keys() | dict(b.fixed).keys()))
    else:
        lo, ro = pair.split_order(LEFT), pair.split_order(RIGHT)
        for x in range(pair.size):
            key = (_index(prefix(x, lo, m, pair.d)), _index(prefix(pair.glue(x), ro, m, pair.d)))
            edges[key] = edges.get(key, 0) + 1
    return ConnectivityGraph(q, left, right, edges)


def _index(bits: tuple) -> int:
    out = 0
    for b in bits:
        out = 2 * out + b
    return out


def refinement(pair: ButterflyPair, q: int) -> list[dict]:
    """How each component at dimension ``q`` splits at ``q - 1``.

    ``case`` is ``"none"``, ``"one"`` or ``"two"`` reused dimensions for 1, 2
    or 4 child components of equal size, else ``"irregular"``.
    """
    if not 1 <= q <= pair.d:
        raise ValueError(f"q must lie in 1..{pair.d}")
    coarse = connectivity_graph(pair, q)
    fine = connectivity_graph(pair, q - 1)
    flc, frc = fine.component_of()
    fine_comps = fine.components()
    out = []
    for ls, rs in coarse.components():
        kids = {flc[2 * i + b] for i in ls for b in (0, 1)} | {frc[2 * j + b] for j in rs for b in (0, 1)}
        sizes = {(len(fine_comps[c][0]), len(fine_comps[c][1])) for c in kids}
        expect = {(2 * len(ls) // len(kids), 2 * len(rs) // len(kids))}
        case = {1: "none", 2: "one", 4: "two"}.get(len(kids), "irregular")
        if sizes != expect:
            case = "irregular"
        out.append({"left": len(ls), "right": len(rs), "children": len(kids), "case": case})
    return out


def shared_node(pair: ButterflyPair, m: int, x: tuple, y: tuple) -> Optional[int]:
    """A layer-``d`` node in left sub-butterfly ``x`` and right sub-butterfly ``y``."""
    lo, ro = pair.split_order(LEFT), pair.split_order(RIGHT)
    if pair.layer_permuted:
        z = 0
        pins = dict(zip(lo[:m], x))
        for pos, v in zip(ro[:m], y):
            if pins.setdefault(pos, v) != v:
                return None
        for pos, v in pins.items():
            z = set_bit(z, pos, v, pair.d)
        return z
    return _glued_table(pair, m).get((x, y))


@lru_cache(maxsize=None)
def _glued_table(pair: ButterflyPair, m: int) -> dict:
    lo, ro = pair.split_order(LEFT), pair.split_order(RIGHT)
    table: dict = {}
    for z in range(pair.size):
        table.setdefault((prefix(z, lo, m, pair.d), prefix(pair.glue(z), ro, m, pair.d)), z)
    return table


@dataclass
class SplitResult:
    moves: dict
    settings: dict
    counts: tuple


def split_layer(labels: Iterable[int], pos: int, d: int, zeros: Optional[int] = None,
                extra: int = 0) -> SplitResult:
    """Send packets across one switch layer that rewrites position ``pos``.

    ``zeros`` packets go to the 0 child; the default is the ceiling of half
    the packets for ``extra = 0`` and the floor for ``extra = 1``.  Switches
    holding two packets send one each way.  ``settings`` maps each used
    switch (label with ``pos`` cleared) to ``"straight"`` or ``"crossed"``.
    """
    labels = list(labels)
    if len(set(labels)) != len(labels):
        raise ValueError("at most one packet per node")
    n = len(labels)
    if zeros is None:
        zeros = (n + 1) // 2 if extra == 0 else n // 2
    switches: dict = defaultdict(list)
    for x in labels:
        switches[set_bit(x, pos, 0, d)].append(x)
    pairs = sum(1 for v in switches.values() if len(v) == 2)
    singles = n - 2 * pairs
    need = zeros - pairs
    if not 0 <= need <= singles:
        raise ValueError(f"cannot send {zeros} of {n} packets to the 0 side "
                         f"({pairs} full switches, {singles} single)")
    moves, settings = {}, {}
    for key in sorted(switches):
        group = switches[key]
        if len(group) == 2:
            for x in group:
                moves[x] = x
            settings[key] = "straight"
            continue
        x = group[0]
        target = 0 if need > 0 else 1
        need -= target == 0
        moves[x] = set_bit(x, pos, target, d)
        settings[key] = "straight" if get_bit(x, pos, d) == target else "crossed"
    return SplitResult(moves, settings, (zeros, n - zeros))


def _descend(pair: ButterflyPair, side: str, starts: Sequence[int], target: dict,
             depth: int) -> dict:
    """Walk packets ``depth`` levels from one end following the target counts.

    ``target[k][prefix]`` is the packet count wanted in each level-``k``
    sub-butterfly; a missing entry means a default ceil/floor split.
    Returns each start's label sequence on levels ``0..depth``.
    """
    d = pair.d
    order = pair.split_order(side)
    trail = {s: [s] for s in starts}
    where = {s: s for s in starts}
    for k in range(depth):
        groups: dict = defaultdict(list)
        for s, x in where.items():
            groups[prefix(x, order, k, d)].append(s)
        for pre, members in groups.items():
            labels = [where[s] for s in members]
            want = target.get(k + 1, {})
            zeros = want.get(pre + (0,), 0) if want else None
            if want and zeros + want.get(pre + (1,), 0) != len(labels):
                raise RoutingError(f"target counts disagree with packets at level {k + 1}")
            res = split_layer(labels, order[k], d, zeros)
            for s in members:
                where[s] = res.moves[where[s]]
                trail[s].append(where[s])
    return trail


def _walk_to(pair: ButterflyPair, side: str, label: int, start: int, goal: int) -> list:
    order = pair.split_order(side)
    out = []
    for k in range(start, pair.d):
        label = set_bit(label, order[k], get_bit(goal, order[k], pair.d), pair.d)
        out.append(label)
    return out


def trie_counts(pair: ButterflyPair, side: str, nodes: Iterable[int]) -> dict:
    """Per-level sub-butterfly counts of a set of layer-``d`` nodes."""
    d = pair.d
    order = pair.split_order(side)
    labels = [x if side == LEFT else pair.glue(x) for x in nodes]
    out = {}
    for k in range(d + 1):
        c: dict = defaultdict(int)
        for x in labels:
            c[prefix(x, order, k, d)] += 1
        out[k] = dict(c)
    return out


def balanced(pair: ButterflyPair, nodes: Iterable[int]) -> bool:
    """Whether both sides' counts split as ceil/floor at every sub-butterfly."""
    nodes = list(nodes)
    for side in (LEFT, RIGHT):
        counts = trie_counts(pair, side, nodes)
        for k in range(pair.d):
            for pre, c in counts[k].items():
                a = counts[k + 1].get(pre + (0,), 0)
                b = counts[k + 1].get(pre + (1,), 0)
                if a + b != c or abs(a - b) > 1:
                    return False
    return True


@dataclass
class PathSet:
    d: int
    paths: list = field(default_factory=list)

    @property
    def endpoints(self) -> dict:
        return {p[0]: p[-1] for p in self.paths}

    def to_json(self, pair: ButterflyPair) -> list:
        return [[[layer, pair.bits(x)] for layer, x in enumerate(p)] for p in self.paths]

    @classmethod
    def from_json(cls, d: int, data: list) -> "PathSet":
        return cls(d, [[int(x, 2) for _, x in p] for p in data])


def _join(pair: ButterflyPair, left: dict, right: dict) -> PathSet:
    """Glue forward walks to backward walks meeting at the same layer-``d`` node."""
    arrive = {trail[-1]: trail for trail in left.values()}
    back = pair.unglue
    paths = []
    for trail in right.values():
        z = back[trail[-1]]
        head = arrive[z]
        paths.append(list(head) + list(reversed(trail[:-1])))
    return PathSet(pair.d, sorted(paths))


def _route_through(pair: ButterflyPair, A, B, crossing: Iterable[int]) -> PathSet:
    crossing = list(crossing)
    left = _descend(pair, LEFT, sorted(A), trie_counts(pair, LEFT, crossing), pair.d)
    right = _descend(pair, RIGHT, sorted(B), trie_counts(pair, RIGHT, crossing), pair.d)
    return _join(pair, left, right)


def _check_sets(pair: ButterflyPair, A, B) -> tuple[list, list]:
    A, B = sorted(set(A)), sorted(set(B))
    if len(A) != len(B):
        raise ValueError("input and output sets must have equal size")
    if any(not 0 <= x < pair.size for x in A + B):
        raise ValueError("labels out of range")
    return A, B


def _matched_crossing(pair: ButterflyPair, m: int) -> list:
    graph = connectivity_graph(pair, pair.d - m)
    match = maximum_bipartite_matching(graph.simple_matrix(), perm_type="column")
    if (match < 0).any():
        raise RoutingError("regular connectivity graph without a perfect matching")
    values = list(itertools.product((0, 1), repeat=m))
    return [shared_node(pair, m, values[i], values[int(j)]) for i, j in enumerate(match)]


@lru_cache(maxsize=None)
def crossing_plan(pair: ButterflyPair, n: int) -> tuple:
    """``n`` layer-``d`` nodes with ceil/floor counts on both sides.

    Depends only on ``n``, so one plan serves every input/output set of
    that size.  Powers of two use a perfect matching of the connectivity
    graph; other sizes reuse the plan for ``n - 2**m`` and balance the
    components one level deeper.
    """
    if not 0 <= n <= pair.size:
        raise ValueError(f"size must lie in 0..{pair.size}")
    if n == 0:
        return ()
    m = n.bit_length() - 1
    if n == 1 << m:
        return tuple(sorted(_matched_crossing(pair, m)))
    if not pair.layer_permuted:
        raise ValueError("sizes other than powers of two need a layer-permuted pair")
    return tuple(sorted(_extend_plan(pair, m, crossing_plan(pair, n - (1 << m)))))


def _extend_plan(pair: ButterflyPair, m: int, base: tuple) -> list:
    d = pair.d
    cl = trie_counts(pair, LEFT, base)[m]
    cr = trie_counts(pair, RIGHT, base)[m]
    values = list(itertools.product((0, 1), repeat=m))
    load = {LEFT: {v: 1 + cl.get(v, 0) for v in values},
            RIGHT: {v: 1 + cr.get(v, 0) for v in values}}
    for side in load:
        if not set(load[side].values()) <= {1, 2}:
            raise RoutingError("level holds a sub-butterfly without one or two packets")
    fine = connectivity_graph(pair, d - m - 1)
    comp = dict(zip((LEFT, RIGHT), fine.component_of()))
    ncomp = len(fine.components())

    chosen = {LEFT: [], RIGHT: []}
    free = {LEFT: [], RIGHT: []}
    excess = [0] * ncomp
    for side, sign in ((LEFT, 1), (RIGHT, -1)):
        for v in values:
            kids = (2 * _index(v), 2 * _index(v) + 1)
            if load[side][v] == 2:
                chosen[side].extend(kids)
                for kid in kids:
                    excess[comp[side][kid]] += sign
            else:
                free[side].append(kids)
                excess[comp[side][kids[0]]] += sign

    # Moving a free packet from its first child to its second shifts one unit
    # of left-minus-right excess between the two child components.
    movers: dict = defaultdict(list)
    cap = np.zeros((ncomp + 2, ncomp + 2), np.int32)
    for side in (LEFT, RIGHT):
        for idx, kids in enumerate(free[side]):
            a, b = comp[side][kids[0]], comp[side][kids[1]]
            if a == b:
                continue
            u, v = (a, b) if side == LEFT else (b, a)
            cap[u, v] += 1
            movers[(u, v)].append((side, idx))
    src, snk = ncomp, ncomp + 1
    for c, e in enumerate(excess):
        if e > 0:
            cap[src, c] = e
        elif e < 0:
            cap[c, snk] = -e
    flow = maximum_flow(sp.csr_matrix(cap), src, snk)
    if flow.flow_value != sum(e for e in excess if e > 0):
        raise RoutingError("free packets cannot balance the child components")
    moved = set()
    f = flow.flow.toarray()
    for (u, v), who in movers.items():
        moved.update(who[: max(int(f[u, v]), 0)])
    for side in (LEFT, RIGHT):
        for idx, kids in enumerate(free[side]):
            chosen[side].append(kids[1] if (side, idx) in moved else kids[0])

    buckets = [([], []) for _ in range(ncomp)]
    for side, slot in ((LEFT, 0), (RIGHT, 1)):
        for kid in chosen[side]:
            buckets[comp[side][kid]][slot].append(kid)
    fine_values = list(itertools.product((0, 1), repeat=m + 1))
    out = []
    for ls, rs in buckets:
        if len(ls) != len(rs):
            raise RoutingError("unbalanced component after splitting")
        for i, j in zip(sorted(ls), sorted(rs)):
            z = shared_node(pair, m + 1, fine_values[i], fine_values[j])
            if z is None:
                raise RoutingError("component is not complete bipartite")
            out.append(z)
    return out


def route_power_of_two(pair: ButterflyPair, A, B) -> PathSet:
    """Node-disjoint paths from ``A`` to ``B`` when their size is a power of two."""
    A, B = _check_sets(pair, A, B)
    n = len(A)
    if n == 0 or n & (n - 1):
        raise ValueError("set size must be a power of two")
    paths = _route_through(pair, A, B, _matched_crossing(pair, n.bit_length() - 1))
    _enforce(pair, paths, A, B)
    return paths


def route_subset(pair: ButterflyPair, A, B) -> PathSet:
    """Node-disjoint paths from ``A`` to ``B`` on a layer-permuted pair."""
    if not pair.layer_permuted:
        raise ValueError("subset routing needs a layer-permuted pair")
    A, B = _check_sets(pair, A, B)
    paths = _route_through(pair, A, B, crossing_plan(pair, len(A)))
    _enforce(pair, paths, A, B)
    return paths


def mid_layer_complete(pair: ButterflyPair) -> tuple[bool, Optional[tuple]]:
    """Whether every layer ``h = d//2`` node reaches every layer ``2d - h`` node.

    On failure the witness is ``((h, left label), (2d - h, right label))``.
    """
    h = pair.d // 2
    graph = connectivity_graph(pair, pair.d - h)
    for i, a in enumerate(graph.left):
        for j, b in enumerate(graph.right):
            if (i, j) not in graph.edges:
                x = sum(v << (pair.d - 1 - pos) for pos, v in a.fixed)
                y = sum(v << (pair.d - 1 - pos) for pos, v in b.fixed)
                return False, ((h, x), (2 * pair.d - h, y))
    return True, None


def route_permutation_small(pair: ButterflyPair, mapping: dict) -> PathSet:
    """Disjoint paths taking each input ``a`` to ``mapping[a]``.

    Needs at most ``2**(d//2)`` pairs and a complete mid-layer connection.
    """
    A, B = _check_sets(pair, mapping.keys(), mapping.values())
    h = pair.d // 2
    if len(A) > 1 << h:
        raise ValueError(f"at most {1 << h} pairs can be routed this way")
    ok, witness = mid_layer_complete(pair)
    if not ok:
        raise ValueError(f"no path from layer-{h} node {witness[0][1]} "
                         f"to layer-{2 * pair.d - h} node {witness[1][1]}")
    d = pair.d
    left = _descend(pair, LEFT, A, {}, h)
    right = _descend(pair, RIGHT, B, {}, h)
    lo, ro = pair.split_order(LEFT), pair.split_order(RIGHT)
    paths = []
    for a in A:
        b = mapping[a]
        x = prefix(left[a][-1], lo, h, d)
        y = prefix(right[b][-1], ro, h, d)
        z = shared_node(pair, h, x, y)
        head = left[a] + _walk_to(pair, LEFT, left[a][-1], h, z)
        tail = right[b] + _walk_to(pair, RIGHT, right[b][-1], h, pair.glue(z))
        paths.append(head + list(reversed(tail[:-1])))
    out = PathSet(d, sorted(paths))
    _enforce(pair, out, A, B, mapping)
    return out


def switch_maps(pair: ButterflyPair, paths: PathSet) -> list[dict]:
    """Complete switch settings consistent with ``paths``.

    Entry ``i`` maps every label on layer ``i`` to its successor on layer
    ``i + 1``; layer ``d`` is keyed and valued in left labels up to the
    glue step.  Unused switches are straight.
    """
    d = pair.d
    maps = []
    for i in range(2 * d):
        pos = pair.left_order[i] if i < d else pair.right_order[i - d]
        step: dict = {}
        for p in paths.paths:
            src = p[i] if i != d else pair.glue(p[i])
            step[src] = p[i + 1]
        full = {}
        for x in range(pair.size):
            if x in step:
                full[x] = step[x]
                continue
            mate = x ^ (1 << (d - 1 - pos))
            full[x] = (step[mate] ^ (1 << (d - 1 - pos))) if mate in step else x
        maps.append(full)
    return maps


def complement_paths(pair: ButterflyPair, paths: PathSet) -> PathSet:
    """Paths between the unused inputs and outputs from completed switch settings."""
    d = pair.d
    maps = switch_maps(pair, paths)
    used = {p[0] for p in paths.paths}
    out = []
    for a in range(pair.size):
        if a in used:
            continue
        trail = [a]
        for i, step in enumerate(maps):
            x = trail[-1]
            trail.append(step[pair.glue(x) if i == d else x])
        out.append(trail)
    return PathSet(d, out)


@dataclass
class Verdict:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def verify_node_disjoint(paths: PathSet, pair: ButterflyPair, A=None, B=None,
                         mapping: Optional[dict] = None) -> Verdict:
    """Check edges, layer count, endpoints and node-disjointness."""
    d = pair.d
    bad = []
    seen: dict = {}
    for n, p in enumerate(paths.paths):
        if len(p) != 2 * d + 1:
            bad.append({"path": n, "kind": "length", "detail": len(p)})
            continue
        if any(not 0 <= x < pair.size for x in p):
            bad.append({"path": n, "kind": "label", "detail": p})
            continue
        for layer in range(2 * d):
            if p[layer + 1] not in pair.successors(layer, p[layer]):
                bad.append({"path": n, "kind": "edge", "layer": layer,
                            "detail": [pair.bits(p[layer]), pair.bits(p[layer + 1])]})
        for layer, x in enumerate(p):
            owner = seen.setdefault((layer, x), n)
            if owner != n:
                bad.append({"path": n, "kind": "shared", "layer": layer,
                            "detail": [owner, pair.bits(x)]})
    starts = [p[0] for p in paths.paths]
    ends = [p[-1] for p in paths.paths]
    if A is not None and sorted(starts) != sorted(set(A)):
        bad.append({"kind": "inputs", "detail": sorted(set(starts) ^ set(A))})
    if B is not None and sorted(ends) != sorted(set(B)):
        bad.append({"kind": "outputs", "detail": sorted(set(ends) ^ set(B))})
    if mapping is not None:
        for p in paths.paths:
            if mapping.get(p[0]) != p[-1]:
                bad.append({"kind": "mapping", "detail": [p[0], p[-1]]})
    return Verdict(not bad, bad)


def _enforce(pair, paths, A, B, mapping=None):
    verdict = verify_node_disjoint(paths, pair, A, B, mapping)
    if not verdict.ok:
        raise RoutingError(f"routing failed verification: {verdict.violations[:3]}")
