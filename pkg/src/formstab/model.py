"""Formation instances and the graph machinery defined on them.

A formation is a finite set of agents with linear dynamics, connected by a
directed acyclic "follows" graph whose edges carry desired displacement
vectors.  This module validates instances, computes the level decomposition
of the graph (levels, order function, designated parents, cumulative
offsets, leader reach), finds multi-leader witnesses, and reads/writes the
JSON interchange format used by the rest of the package.

Node ids are 1-based everywhere they surface (files, reports); edges point
from follower to parent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import FormationValidationError

__all__ = [
    "AgentDynamics",
    "Edge",
    "FormationSpec",
    "LevelDecomposition",
    "MultiLeaderWitness",
    "Violation",
    "validate",
    "decompose",
    "find_multi_leader_witness",
    "formation_from_dict",
    "formation_to_dict",
    "load_formation",
    "save_formation",
    "weak_components",
    "split_components",
]


def _frozen_array(x, dtype=float) -> np.ndarray:
    a = np.array(x, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AgentDynamics:
    """State matrix A (n x n) and input matrix B (n x m) of one agent."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen_array(self.A))
        object.__setattr__(self, "B", _frozen_array(self.B))


@dataclass(frozen=True)
class Edge:
    """Directed edge follower -> parent with desired displacement d.

    In the ideal configuration the endpoint states satisfy x_i + d = x_j.
    """

    i: int
    j: int
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", _frozen_array(self.d))

    @property
    def key(self) -> tuple[int, int]:
        return (self.i, self.j)


@dataclass(frozen=True)
class FormationSpec:
    """A complete problem instance: dimensions, per-agent dynamics, edges.

    Agents are implicitly numbered 1..l by their position in ``agents``.
    Construction does not validate; call `validate` to get an exhaustive
    report of structural violations.
    """

    n: int
    m: int
    agents: tuple[AgentDynamics, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(
            self,
            "edges",
            tuple(e if isinstance(e, Edge) else Edge(*e) for e in self.edges),
        )
        parents: dict[int, list[int]] = {i: [] for i in self.nodes}
        disp: dict[tuple[int, int], np.ndarray] = {}
        for e in self.edges:
            if e.i in parents:
                parents[e.i].append(e.j)
            disp[e.key] = e.d
        object.__setattr__(
            self, "_parents", {i: tuple(sorted(js)) for i, js in parents.items()}
        )
        object.__setattr__(self, "_disp", disp)

    @property
    def l(self) -> int:
        return len(self.agents)

    @property
    def nodes(self) -> range:
        return range(1, len(self.agents) + 1)

    def agent(self, i: int) -> AgentDynamics:
        return self.agents[i - 1]

    def parents(self, i: int) -> tuple[int, ...]:
        """L_i: parents of node i (empty for leaders)."""
        return self._parents[i]

    def displacement(self, i: int, j: int) -> np.ndarray:
        return self._disp[(i, j)]

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self._disp


@dataclass(frozen=True)
class Violation:
    """One structural violation found by `validate`.

    kind is one of: cycle_detected, dimension_mismatch, not_weakly_connected,
    duplicate_edge, self_loop.  ``info`` carries the witness (cycle node
    list, component lists, agent index with expected/actual shapes, ...).
    """

    kind: str
    message: str
    info: tuple = ()

    def __str__(self):
        return f"{self.kind}: {self.message}"


def _find_cycle(spec: FormationSpec) -> list[int] | None:
    """Return one directed cycle as a node list [v0, ..., v0], or None."""
    color = {i: 0 for i in spec.nodes}  # 0 new, 1 on stack, 2 done
    for start in spec.nodes:
        if color[start] != 0:
            continue
        stack = [(start, iter(spec.parents(start)))]
        color[start] = 1
        path = [start]
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 1:
                    k = path.index(nxt)
                    return path[k:] + [nxt]
                if color[nxt] == 0:
                    color[nxt] = 1
                    path.append(nxt)
                    stack.append((nxt, iter(spec.parents(nxt))))
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                path.pop()
                stack.pop()
    return None


def weak_components(spec: FormationSpec) -> list[tuple[int, ...]]:
    """Connected components of the underlying undirected graph, each a
    sorted tuple of node ids, ordered by smallest member."""
    neighbours: dict[int, set[int]] = {i: set() for i in spec.nodes}
    for e in spec.edges:
        if e.i in neighbours and e.j in neighbours and e.i != e.j:
            neighbours[e.i].add(e.j)
            neighbours[e.j].add(e.i)
    seen: set[int] = set()
    components = []
    for start in spec.nodes:
        if start in seen:
            continue
        comp = []
        queue = [start]
        seen.add(start)
        while queue:
            v = queue.pop()
            comp.append(v)
            for w in neighbours[v]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        components.append(tuple(sorted(comp)))
    return components


def validate(spec: FormationSpec) -> FormationSpec:
    """Check all structural invariants of a formation instance.

    Returns the spec unchanged when everything holds.  Otherwise raises
    `FormationValidationError` carrying *all* violations found, so callers
    see every problem at once rather than fixing them one by one.
    """
    v: list[Violation] = []
    n, m = spec.n, spec.m

    if n <= 0 or m <= 0 or spec.l == 0:
        v.append(
            Violation(
                "dimension_mismatch",
                f"need positive n, m and at least one agent (n={n}, m={m}, l={spec.l})",
            )
        )

    for idx, ag in enumerate(spec.agents, start=1):
        if ag.A.shape != (n, n):
            v.append(
                Violation(
                    "dimension_mismatch",
                    f"agent {idx}: A has shape {ag.A.shape}, expected {(n, n)}",
                    info=(idx, "A", (n, n), ag.A.shape),
                )
            )
        if ag.B.shape != (n, m):
            v.append(
                Violation(
                    "dimension_mismatch",
                    f"agent {idx}: B has shape {ag.B.shape}, expected {(n, m)}",
                    info=(idx, "B", (n, m), ag.B.shape),
                )
            )

    seen_edges: set[tuple[int, int]] = set()
    for e in spec.edges:
        if e.i == e.j:
            v.append(Violation("self_loop", f"edge ({e.i}, {e.j})", info=(e.i,)))
        if e.key in seen_edges:
            v.append(
                Violation("duplicate_edge", f"edge ({e.i}, {e.j}) repeated", info=e.key)
            )
        seen_edges.add(e.key)
        for end in (e.i, e.j):
            if not 1 <= end <= spec.l:
                v.append(
                    Violation(
                        "dimension_mismatch",
                        f"edge ({e.i}, {e.j}) references unknown node {end}",
                        info=(end,),
                    )
                )
        if e.d.shape != (n,):
            v.append(
                Violation(
                    "dimension_mismatch",
                    f"edge ({e.i}, {e.j}): d has shape {e.d.shape}, expected ({n},)",
                    info=(e.key, e.d.shape),
                )
            )

    cycle = _find_cycle(spec)
    if cycle is not None:
        v.append(
            Violation(
                "cycle_detected",
                "directed cycle " + " -> ".join(str(x) for x in cycle),
                info=tuple(cycle),
            )
        )

    comps = weak_components(spec)
    if len(comps) > 1:
        v.append(
            Violation(
                "not_weakly_connected",
                f"{len(comps)} weak components: "
                + ", ".join("{" + ", ".join(map(str, c)) + "}" for c in comps),
                info=tuple(comps),
            )
        )

    if v:
        raise FormationValidationError(v)
    return spec


@dataclass(frozen=True)
class LevelDecomposition:
    """Level structure of the formation graph.

    levels[k] holds the nodes whose parents all live in levels below k;
    level 0 is the leader set.  ``order`` maps node -> level index,
    ``parent`` maps each follower to its designated parent (the parent in
    the next-lower level with the largest id; leaders map to themselves),
    ``cumulative_offset`` maps node -> sum of displacements along the
    designated-parent chain down to a leader, and ``leader_reach`` maps
    node -> the leader that chain ends at.  ``renumbering`` lists original
    ids level by level (ascending id inside a level); position k holds the
    node whose new index is k+1.
    """

    levels: tuple[frozenset, ...]
    order: dict
    parent: dict
    cumulative_offset: dict
    leader_reach: dict
    renumbering: tuple[int, ...]
    leaders: frozenset
    l0: int

    def new_index(self, i: int) -> int:
        """1-based index of node i in the order-consistent renumbering."""
        return self.renumbering.index(i) + 1

    def parent_chain(self, i: int) -> list[int]:
        """[i, p(i), p(p(i)), ..., leader]."""
        chain = [i]
        while self.order[chain[-1]] > 0:
            chain.append(self.parent[chain[-1]])
        return chain

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def followers(self) -> list[int]:
        """All non-leader nodes, in renumbering order."""
        return [i for i in self.renumbering if self.order[i] > 0]


def decompose(spec: FormationSpec) -> LevelDecomposition:
    """Compute the level decomposition of a validated formation.

    Peels the graph level by level: level 0 is the parentless nodes, and
    each next level collects the nodes whose parents are all already
    placed.  The designated parent of a follower is chosen among its
    parents by (level, id) lexicographic maximum, which lands one level
    below the follower; offsets accumulate along those designated edges.
    """
    validate(spec)

    placed: set[int] = set()
    levels: list[frozenset] = []
    order: dict[int, int] = {}
    remaining = set(spec.nodes)
    while remaining:
        level = {i for i in remaining if set(spec.parents(i)) <= placed}
        k = len(levels)
        for i in level:
            order[i] = k
        levels.append(frozenset(level))
        placed |= level
        remaining -= level

    renumbering = tuple(i for level in levels for i in sorted(level))
    leaders = levels[0]

    parent: dict[int, int] = {}
    for i in spec.nodes:
        if order[i] == 0:
            parent[i] = i
        else:
            parent[i] = max(spec.parents(i), key=lambda j: (order[j], j))

    cumulative: dict[int, np.ndarray] = {}
    reach: dict[int, int] = {}
    for i in renumbering:  # parents are processed before children
        if order[i] == 0:
            cumulative[i] = _frozen_array(np.zeros(spec.n))
            reach[i] = i
        else:
            p = parent[i]
            cumulative[i] = _frozen_array(spec.displacement(i, p) + cumulative[p])
            reach[i] = reach[p]

    return LevelDecomposition(
        levels=tuple(levels),
        order=order,
        parent=parent,
        cumulative_offset=cumulative,
        leader_reach=reach,
        renumbering=renumbering,
        leaders=leaders,
        l0=len(leaders),
    )


@dataclass(frozen=True)
class MultiLeaderWitness:
    """A vertex with directed paths to two distinct leaders."""

    i: int
    j: int
    s: int
    path_to_j: tuple[int, ...]
    path_to_s: tuple[int, ...]


def _shortest_path_to(spec: FormationSpec, start: int, goal: int) -> list[int] | None:
    """BFS along follower->parent edges; deterministic via sorted parents."""
    if start == goal:
        return [start]
    prev: dict[int, int | None] = {start: None}
    queue = [start]
    while queue:
        v = queue.pop(0)
        for w in spec.parents(v):
            if w not in prev:
                prev[w] = v
                if w == goal:
                    path = [w]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return list(reversed(path))
                queue.append(w)
    return None


def find_multi_leader_witness(
    decomp: LevelDecomposition, spec: FormationSpec
) -> MultiLeaderWitness | None:
    """Find a vertex with directed paths to two distinct leaders.

    For a weakly connected acyclic graph such a vertex exists exactly when
    there is more than one leader; single-leader formations return None.
    The witness is deterministic: the first vertex in renumbering order
    that reaches at least two leaders, with its two smallest reachable
    leaders and shortest paths to them.
    """
    if decomp.l0 <= 1:
        return None

    reachable: dict[int, frozenset] = {}
    for i in decomp.renumbering:  # parents first
        if decomp.order[i] == 0:
            reachable[i] = frozenset([i])
        else:
            acc = frozenset()
            for j in spec.parents(i):
                acc |= reachable[j]
            reachable[i] = acc

    for i in decomp.renumbering:
        if len(reachable[i]) >= 2:
            j, s = sorted(reachable[i])[:2]
            return MultiLeaderWitness(
                i=i,
                j=j,
                s=s,
                path_to_j=tuple(_shortest_path_to(spec, i, j)),
                path_to_s=tuple(_shortest_path_to(spec, i, s)),
            )
    return None


# ---------------------------------------------------------------------------
# JSON interchange format


def formation_from_dict(data: dict) -> FormationSpec:
    """Build a FormationSpec from the interchange dict.

    Expected shape::

        {"n": int, "m": int,
         "agents": [{"A": [[...]], "B": [[...]]}, ...],
         "edges":  [{"from": int, "to": int, "d": [...]}, ...]}

    Matrices are row-major; node ids are 1-based.
    """
    try:
        n = int(data["n"])
        m = int(data["m"])
        agents = tuple(
            AgentDynamics(A=np.asarray(a["A"], dtype=float), B=np.asarray(a["B"], dtype=float))
            for a in data["agents"]
        )
        edges = tuple(
            Edge(int(e["from"]), int(e["to"]), np.asarray(e["d"], dtype=float))
            for e in data.get("edges", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed formation document: {exc}") from exc
    return FormationSpec(n=n, m=m, agents=agents, edges=edges)


def formation_to_dict(spec: FormationSpec) -> dict:
    return {
        "n": spec.n,
        "m": spec.m,
        "agents": [{"A": ag.A.tolist(), "B": ag.B.tolist()} for ag in spec.agents],
        "edges": [{"from": e.i, "to": e.j, "d": e.d.tolist()} for e in spec.edges],
    }


def load_formation(path) -> FormationSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return formation_from_dict(json.load(fh))


def save_formation(spec: FormationSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(formation_to_dict(spec), fh, indent=2)
        fh.write("\n")


def split_components(spec: FormationSpec) -> list[tuple[tuple[int, ...], FormationSpec]]:
    """Split a (possibly disconnected) instance into its weak components.

    Returns [(original_ids, sub_spec), ...] where sub_spec renumbers the
    component's nodes 1..k in ascending original id; original_ids[k-1] is
    the original id of sub-spec node k.
    """
    out = []
    for comp in weak_components(spec):
        remap = {orig: new for new, orig in enumerate(comp, start=1)}
        agents = tuple(spec.agent(i) for i in comp)
        edges = tuple(
            Edge(remap[e.i], remap[e.j], e.d)
            for e in spec.edges
            if e.i in remap and e.j in remap
        )
        out.append((comp, FormationSpec(n=spec.n, m=spec.m, agents=agents, edges=edges)))
    return out
