"""Bundled demo instances and random instance generators.

The four bundled instances exercise every verdict pattern the analysis can
produce; the random generators build arbitrary weakly connected acyclic
formations (for structural property tests) and stable-by-construction
instances (the oracle used to exercise the criterion and the simulation
envelope end to end).
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .errors import NotStabilizableError, SynthesisFailure
from .linalg import spectral_abscissa, stabilize
from .model import AgentDynamics, Edge, FormationSpec

__all__ = [
    "three_agent_chain",
    "triangle_mismatched_offsets",
    "two_leader_fork",
    "consistent_triangle",
    "DEMO_BUILDERS",
    "demo_instance",
    "demo_path",
    "random_dag_formation",
    "random_in_tree_formation",
    "random_feasible_formation",
    "random_controllable_pair",
]


def three_agent_chain() -> FormationSpec:
    """Chain 3 -> 2 -> 1 with one (uncontrolled, unstable) leader.

    The whole formation is stable, yet the (3, 2) pair taken alone is not:
    neither of its pairwise equations is solvable.  The follower equations
    have N_2 = N_3 = [1, 1], kt_2 = -1, kt_3 = -4.
    """
    return FormationSpec(
        n=2,
        m=1,
        agents=(
            AgentDynamics(A=[[1.0, 0.0], [0.0, 2.0]], B=[[0.0], [0.0]]),
            AgentDynamics(A=[[0.0, -1.0], [-1.0, 1.0]], B=[[1.0], [1.0]]),
            AgentDynamics(A=[[0.0, -1.0], [-2.0, 0.0]], B=[[1.0], [2.0]]),
        ),
        edges=(
            Edge(2, 1, [2.0, 1.0]),
            Edge(3, 2, [2.0, 3.0]),
        ),
    )


def triangle_mismatched_offsets(n: int = 2) -> FormationSpec:
    """Triangle 2 -> 1, 3 -> 1, 3 -> 2 with identical displacements.

    All agents share the Hurwitz matrix -I and every pair taken alone is
    stable, but equal displacements on all three edges cannot close the
    triangle (the (3, 1) displacement would have to be the sum of the
    other two), so the formation is unstable.
    """
    A = -np.eye(n)
    d = np.zeros(n)
    d[0] = 1.0
    B = (A @ d)[:, None]
    agent = AgentDynamics(A=A, B=B)
    return FormationSpec(
        n=n,
        m=1,
        agents=(agent, agent, agent),
        edges=(Edge(2, 1, d), Edge(3, 1, d), Edge(3, 2, d)),
    )


def two_leader_fork() -> FormationSpec:
    """Two leaders 1, 2 and one follower 3 tracking both.

    Leader matrices are equal and Hurwitz and the follower equations are
    solvable, but the two displacement demands differ, which no control
    can reconcile: the instance fails exactly the displacement condition.
    """
    A_lead = -np.eye(2)
    B_lead = np.array([[1.0], [1.0]])
    A3 = np.array([[-2.0, -1.0], [0.0, -1.0]])  # A_lead - B3 @ [[1, 1]]
    B3 = np.array([[1.0], [0.0]])
    return FormationSpec(
        n=2,
        m=1,
        agents=(
            AgentDynamics(A=A_lead, B=B_lead),
            AgentDynamics(A=A_lead, B=B_lead),
            AgentDynamics(A=A3, B=B3),
        ),
        edges=(
            Edge(3, 1, [1.0, 0.0]),
            Edge(3, 2, [2.0, 0.0]),
        ),
    )


def consistent_triangle() -> FormationSpec:
    """The chain instance plus a closing edge 3 -> 1 whose displacement is
    consistent (the sum of the other two), giving a stable single-leader
    formation whose graph is not an in-tree."""
    base = three_agent_chain()
    return FormationSpec(
        n=base.n,
        m=base.m,
        agents=base.agents,
        edges=base.edges + (Edge(3, 1, [4.0, 4.0]),),
    )


DEMO_BUILDERS = {
    "example1": triangle_mismatched_offsets,
    "example2": three_agent_chain,
    "remark5": two_leader_fork,
    "triangle": consistent_triangle,
}


def demo_instance(name: str) -> FormationSpec:
    try:
        return DEMO_BUILDERS[name]()
    except KeyError:
        raise KeyError(
            f"unknown demo {name!r}; available: {', '.join(sorted(DEMO_BUILDERS))}"
        ) from None


def demo_path(name: str):
    """Filesystem path of the bundled JSON file for a demo instance."""
    if name not in DEMO_BUILDERS:
        raise KeyError(
            f"unknown demo {name!r}; available: {', '.join(sorted(DEMO_BUILDERS))}"
        )
    return resources.files("formstab").joinpath("data", f"{name}.json")


# ---------------------------------------------------------------------------
# Random generators


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _weak_components_of(edges, l: int):
    comp = {i: i for i in range(1, l + 1)}

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    for i, j in edges:
        comp[find(i)] = find(j)
    groups = {}
    for i in range(1, l + 1):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _random_edge_structure(rng, l: int, l0: int, extra_edge_prob: float):
    """Random weakly connected acyclic edge set over nodes 1..l with the
    first l0 nodes parentless; edges point from higher to lower ids."""
    edges = set()
    for i in range(l0 + 1, l + 1):
        parents = [j for j in range(1, i) if rng.random() < extra_edge_prob]
        if not parents:
            parents = [int(rng.integers(1, i))]
        for j in parents:
            edges.add((i, j))
    # merge weak components through node l (the largest follower), keeping
    # every edge pointed from higher to lower id so the graph stays acyclic
    comps = _weak_components_of(edges, l)
    if len(comps) > 1:
        for group in comps:
            if l not in group:
                edges.add((l, min(group)))
    return sorted(edges)


def random_dag_formation(
    rng=0,
    max_nodes: int = 8,
    n: int = 2,
    m: int = 1,
    relabel: bool = True,
    max_leaders: int = 3,
) -> FormationSpec:
    """Random weakly connected acyclic formation with random dynamics.

    Node labels are shuffled by default, so the input numbering is in
    general *not* consistent with the level order — exercising the
    renumbering logic.  No stability structure is implied.
    """
    rng = _rng(rng)
    l = int(rng.integers(2, max_nodes + 1))
    l0 = int(rng.integers(1, min(max_leaders, l - 1) + 1))
    structure = _random_edge_structure(rng, l, l0, extra_edge_prob=0.4)

    perm = {i: i for i in range(1, l + 1)}
    if relabel:
        shuffled = list(range(1, l + 1))
        rng.shuffle(shuffled)
        perm = {old: new for old, new in zip(range(1, l + 1), shuffled)}

    agents = [None] * l
    for old in range(1, l + 1):
        agents[perm[old] - 1] = AgentDynamics(
            A=rng.standard_normal((n, n)), B=rng.standard_normal((n, m))
        )
    edges = tuple(
        Edge(perm[i], perm[j], rng.standard_normal(n)) for i, j in structure
    )
    return FormationSpec(n=n, m=m, agents=tuple(agents), edges=edges)


def random_in_tree_formation(rng=0, max_nodes: int = 8, n: int = 2, m: int = 1) -> FormationSpec:
    """Random in-tree (single leader, one parent per follower), random d."""
    rng = _rng(rng)
    l = int(rng.integers(2, max_nodes + 1))
    agents = tuple(
        AgentDynamics(A=rng.standard_normal((n, n)), B=rng.standard_normal((n, m)))
        for _ in range(l)
    )
    edges = tuple(
        Edge(i, int(rng.integers(1, i)), rng.standard_normal(n)) for i in range(2, l + 1)
    )
    return FormationSpec(n=n, m=m, agents=agents, edges=edges)


def random_feasible_formation(
    rng=0,
    max_nodes: int = 6,
    max_n: int = 4,
    max_m: int = 3,
    multi_leader_prob: float = 0.3,
) -> FormationSpec:
    """Stable-by-construction random instance.

    Follower matrices are built as A_i = A_ref - B_i N_i for random B_i
    and N_i, so the gain equation is consistent by construction; each
    follower's offset D_i is chosen as the solution of A_i D_i = B_i kt_i
    for a random kt_i, making the offset equation consistent as well; then
    every edge displacement is set to D_i - D_j so displacement
    consistency holds on every edge.  Multi-leader draws share one Hurwitz
    leader matrix.  Stabilizability of the random follower pairs holds
    generically.
    """
    rng = _rng(rng)
    n = int(rng.integers(2, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    l = int(rng.integers(3, max_nodes + 1))
    l0 = 2 if (rng.random() < multi_leader_prob and l >= 3) else 1
    structure = _random_edge_structure(rng, l, l0, extra_edge_prob=0.45)

    if l0 > 1:
        R = rng.standard_normal((n, n))
        A_ref = R - (spectral_abscissa(R) + 1.0 + rng.uniform(0.0, 1.0)) * np.eye(n)
    else:
        # the single-leader matrix may be unstable, but its growth rate is
        # capped so closed-loop trajectories stay within the range where
        # float roundoff sits far below verification tolerances
        A_ref = rng.standard_normal((n, n))
        absc = spectral_abscissa(A_ref)
        cap = rng.uniform(0.2, 0.6)
        if absc > cap:
            A_ref = A_ref - (absc - cap) * np.eye(n)

    agents = []
    D = {}
    for i in range(1, l0 + 1):
        agents.append(AgentDynamics(A=A_ref, B=rng.standard_normal((n, m))))
        D[i] = np.zeros(n)
    for i in range(l0 + 1, l + 1):
        # reject weakly controllable draws: they pass the criterion but
        # force violent stabilizing gains, and with them closed loops too
        # stiff for any reasonable fixed-step integration
        for _ in range(60):
            B = rng.standard_normal((n, m))
            N = rng.standard_normal((m, n))
            A = A_ref - B @ N
            sv = np.linalg.svd(A, compute_uv=False)
            if sv[-1] <= 1e-6 * sv[0]:
                continue
            try:
                S = stabilize(A, B)
            except (NotStabilizableError, SynthesisFailure):
                continue
            if np.linalg.norm(A + B @ S, "fro") <= 40.0:
                break
        kt = rng.standard_normal(m)
        D[i] = np.linalg.solve(A, B @ kt)
        norm_D = float(np.linalg.norm(D[i]))
        if norm_D > 10.0:
            kt = kt * (10.0 / norm_D)
            D[i] = np.linalg.solve(A, B @ kt)
        agents.append(AgentDynamics(A=A, B=B))

    edges = tuple(Edge(i, j, D[i] - D[j]) for i, j in structure)
    return FormationSpec(n=n, m=m, agents=tuple(agents), edges=edges)


def random_controllable_pair(rng=0, n: int = 3, m: int = 1):
    """Random (A, B) resampled until the controllability matrix has full
    rank (a brute-force oracle independent of the PBH test)."""
    rng = _rng(rng)
    while True:
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        blocks = [B]
        for _ in range(n - 1):
            blocks.append(A @ blocks[-1])
        if np.linalg.matrix_rank(np.hstack(blocks)) == n:
            return A, B
