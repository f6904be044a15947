"""Two-agent subformation analysis.

Each edge (i, j), taken alone as a two-agent formation, is stable exactly
when (A_i, B_i) is stabilizable and the equations B_i N = A_j - A_i and
B_i kt = A_i d_ij are solvable.  Pairwise stability neither implies nor is
implied by stability of the whole formation; `cross_compare` classifies an
instance by which of the four agreement/disagreement patterns it exhibits.
"""

from __future__ import annotations

from dataclasses import dataclass


from . import criterion as _criterion
from .linalg import (
    DEFAULT_TOLERANCES,
    LinearSolveReport,
    StabilizabilityResult,
    Tolerances,
    is_stabilizable,
    solve_matrix_equation,
)
from .model import FormationSpec, LevelDecomposition

__all__ = [
    "EdgeAnalysis",
    "PairwiseReport",
    "CrossComparison",
    "analyze_pairs",
    "cross_compare",
    "BOTH_STABLE",
    "BOTH_UNSTABLE",
    "PAIRS_STABLE_FORMATION_UNSTABLE",
    "FORMATION_STABLE_PAIR_UNSTABLE",
]

BOTH_STABLE = "both-stable"
BOTH_UNSTABLE = "both-unstable"
PAIRS_STABLE_FORMATION_UNSTABLE = "pairs-stable-formation-unstable"
FORMATION_STABLE_PAIR_UNSTABLE = "formation-stable-pair-unstable"


@dataclass(frozen=True)
class EdgeAnalysis:
    """Stability analysis of one two-agent subformation."""

    edge: tuple
    stabilizable: StabilizabilityResult
    gain_solve: LinearSolveReport  # B_i N = A_j - A_i
    offset_solve: LinearSolveReport  # B_i kt = A_i d_ij
    stable: bool

    def to_dict(self):
        return {
            "edge": list(self.edge),
            "stabilizable": self.stabilizable.stabilizable,
            "witness": None
            if self.stabilizable.witness is None
            else [self.stabilizable.witness.real, self.stabilizable.witness.imag],
            "gain_equation": self.gain_solve.to_dict(),
            "offset_equation": self.offset_solve.to_dict(),
            "stable": self.stable,
        }


@dataclass(frozen=True)
class PairwiseReport:
    edges: tuple

    def verdicts(self) -> dict:
        return {e.edge: e.stable for e in self.edges}

    @property
    def all_stable(self) -> bool:
        return all(e.stable for e in self.edges)

    def entry(self, key) -> EdgeAnalysis:
        for e in self.edges:
            if e.edge == tuple(key):
                return e
        raise KeyError(f"edge {key} not in report")

    def to_dict(self):
        return {"edges": [e.to_dict() for e in self.edges]}

    def format_table(self) -> str:
        lines = ["pairwise subformation verdicts:"]
        for e in self.edges:
            mark = "stable" if e.stable else "UNSTABLE"
            lines.append(
                f"  edge {e.edge}: {mark}  stabilizable={e.stabilizable.stabilizable}"
                f"  gain rel.residual={e.gain_solve.relative_residual:.3e}"
                f"  offset rel.residual={e.offset_solve.relative_residual:.3e}"
            )
        return "\n".join(lines)


def analyze_pairs(
    spec: FormationSpec, tol: Tolerances = DEFAULT_TOLERANCES
) -> PairwiseReport:
    """Analyze every edge as an isolated two-agent formation.

    Independent of the global level decomposition: the follower's offset
    equation uses the edge displacement d_ij directly.
    """
    entries = []
    for e in spec.edges:
        ai = spec.agent(e.i)
        aj = spec.agent(e.j)
        stab = is_stabilizable(ai.A, ai.B, tol)
        gain = solve_matrix_equation(ai.B, aj.A - ai.A, tol)
        offset = solve_matrix_equation(ai.B, ai.A @ e.d, tol)
        entries.append(
            EdgeAnalysis(
                edge=e.key,
                stabilizable=stab,
                gain_solve=gain,
                offset_solve=offset,
                stable=bool(stab) and gain.solvable and offset.solvable,
            )
        )
    return PairwiseReport(edges=tuple(entries))


@dataclass(frozen=True)
class CrossComparison:
    """Whole-formation verdict vs. the conjunction of pairwise verdicts."""

    pattern: str
    formation_stable: bool
    pairs_all_stable: bool
    criterion: _criterion.CriterionReport
    pairwise: PairwiseReport

    def to_dict(self):
        return {
            "pattern": self.pattern,
            "formation_stable": self.formation_stable,
            "pairs_all_stable": self.pairs_all_stable,
            "criterion": self.criterion.to_dict(),
            "pairwise": self.pairwise.to_dict(),
        }


def cross_compare(
    spec: FormationSpec,
    decomp: LevelDecomposition,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CrossComparison:
    """Classify the instance by formation-vs-pairwise (dis)agreement."""
    rep = _criterion.check(spec, decomp, tol)
    pw = analyze_pairs(spec, tol)
    f_ok = rep.stable
    p_ok = pw.all_stable
    if f_ok and p_ok:
        pattern = BOTH_STABLE
    elif not f_ok and not p_ok:
        pattern = BOTH_UNSTABLE
    elif p_ok and not f_ok:
        pattern = PAIRS_STABLE_FORMATION_UNSTABLE
    else:
        pattern = FORMATION_STABLE_PAIR_UNSTABLE
    return CrossComparison(
        pattern=pattern,
        formation_stable=f_ok,
        pairs_all_stable=p_ok,
        criterion=rep,
        pairwise=pw,
    )
