"""Decide internal stability of three small formations.

A formation is a set of linear agents xdot_i = A_i x_i + B_i u_i tied
together by an acyclic "follows" graph whose edges carry desired
displacements d_ij (ideally x_i + d_ij = x_j).  The criterion checks four
things: follower stabilizability, solvability of the follower gain/offset
equations, displacement consistency along the graph, and (with several
leaders) agreement of the leader matrices.
"""

import formstab as fs
from formstab.instances import (
    three_agent_chain,
    triangle_mismatched_offsets,
    two_leader_fork,
)

for title, spec in (
    ("chain 3 -> 2 -> 1", three_agent_chain()),
    ("triangle with equal displacements", triangle_mismatched_offsets()),
    ("two leaders, one follower", two_leader_fork()),
):
    print("=" * 72)
    print(title)
    fs.validate(spec)
    decomp = fs.decompose(spec)
    print("levels:", [sorted(level) for level in decomp.levels])
    print("designated parents:", {i: decomp.parent[i] for i in decomp.followers()})
    print("cumulative offsets:",
          {i: decomp.cumulative_offset[i].tolist() for i in spec.nodes})

    report = fs.check(spec, decomp)
    print()
    print(report.format_table())

    witness = fs.find_multi_leader_witness(decomp, spec)
    if witness is not None:
        print(f"\nmulti-leader witness: node {witness.i} reaches leader "
              f"{witness.j} via {list(witness.path_to_j)} and leader "
              f"{witness.s} via {list(witness.path_to_s)}")
    print()
