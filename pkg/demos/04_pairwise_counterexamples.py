"""Pairwise stability and whole-formation stability are independent.

Each edge, taken alone as a two-agent formation, has its own criterion.
Neither direction of implication holds: the equal-displacement triangle
has three individually stable pairs but is unstable as a whole (the
displacements cannot close the triangle), while the chain is stable as a
whole although one of its pairs is unstable on its own.
"""

import formstab as fs
from formstab.instances import three_agent_chain, triangle_mismatched_offsets

for title, spec in (
    ("triangle with equal displacements", triangle_mismatched_offsets()),
    ("chain 3 -> 2 -> 1", three_agent_chain()),
):
    print("=" * 72)
    print(title)
    decomp = fs.decompose(spec)
    result = fs.cross_compare(spec, decomp)
    print(result.pairwise.format_table())
    print(f"formation verdict: {result.criterion.overall}")
    print(f"pattern: {result.pattern}")
    print()
