"""Internal-stability decision for linear formations.

A weakly connected acyclic formation of linear agents admits affine
follower controls with an input-to-state error bound exactly when

  1. every follower pair (A_i, B_i) is stabilizable,
  2. for every follower the linear equations B_i N_i = A_ref - A_i and
     B_i kt_i = A_i D_i are solvable (A_ref is the reference leader's
     state matrix),
  3. every edge displacement satisfies d_ij = D_i - D_j, and
  4. when there is more than one leader: all leader state matrices
     coincide and that common matrix is Hurwitz.

`check` evaluates all four with numeric evidence and never short-circuits;
`verify_controller` tests a user-supplied control law against the same
algebra; `classify` tags the instance with the special-case family it
falls into (multi-leader, or in-tree where condition 3 is vacuous).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controllers import ControllerSet
from .linalg import (
    DEFAULT_TOLERANCES,
    HurwitzReport,
    LinearSolveReport,
    StabilizabilityResult,
    Tolerances,
    is_hurwitz,
    is_stabilizable,
    solve_matrix_equation,
)
from .model import FormationSpec, LevelDecomposition

__all__ = [
    "StabilizabilityCheck",
    "GainEquationCheck",
    "DisplacementCheck",
    "LeaderConsistencyCheck",
    "CriterionReport",
    "ControllerVerification",
    "check",
    "verify_controller",
    "classify",
    "CASE_NONE",
    "CASE_MULTI_LEADER",
    "CASE_IN_TREE",
]

CASE_NONE = "none"
CASE_MULTI_LEADER = "multi_leader"
CASE_IN_TREE = "in_tree"


@dataclass(frozen=True)
class StabilizabilityCheck:
    """Condition 1 for one follower."""

    node: int
    result: StabilizabilityResult
    implied: bool  # condition follows from 2 + 4 in the multi-leader case

    @property
    def passed(self) -> bool:
        return self.result.stabilizable or self.implied

    def to_dict(self):
        return {
            "node": self.node,
            "stabilizable": self.result.stabilizable,
            "witness": None
            if self.result.witness is None
            else [self.result.witness.real, self.result.witness.imag],
            "implied": self.implied,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class GainEquationCheck:
    """Condition 2 for one follower: solvability of the aggregate-gain and
    offset equations, with the minimum-norm solutions N_i and kt_i."""

    node: int
    gain_solve: LinearSolveReport  # B_i N_i = A_ref - A_i
    offset_solve: LinearSolveReport  # B_i kt_i = A_i D_i

    @property
    def passed(self) -> bool:
        return self.gain_solve.solvable and self.offset_solve.solvable

    @property
    def N(self) -> np.ndarray:
        return self.gain_solve.solution

    @property
    def k_tilde(self) -> np.ndarray:
        return self.offset_solve.solution

    def to_dict(self):
        return {
            "node": self.node,
            "gain_equation": self.gain_solve.to_dict(),
            "offset_equation": self.offset_solve.to_dict(),
            "passed": self.passed,
        }


@dataclass(frozen=True)
class DisplacementCheck:
    """Condition 3 for one edge: defect d_ij - (D_i - D_j)."""

    edge: tuple
    defect: np.ndarray
    defect_norm: float
    passed: bool

    def to_dict(self):
        return {
            "edge": list(self.edge),
            "defect": self.defect.tolist(),
            "defect_norm": self.defect_norm,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class LeaderConsistencyCheck:
    """Condition 4: leader matrices equal and Hurwitz.  Binding only with
    more than one leader; for a single leader the Hurwitz report is kept
    as information (the formation can be stable around an unstable
    leader), and ``passed`` is vacuously true."""

    defects: dict  # leader id -> ||A_i - A_ref||_F
    hurwitz: HurwitzReport
    binding: bool
    passed: bool

    def to_dict(self):
        return {
            "defects": {str(i): d for i, d in sorted(self.defects.items())},
            "hurwitz": self.hurwitz.to_dict(),
            "binding": self.binding,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class CriterionReport:
    """Full evidence for the stability verdict of one instance."""

    overall: str  # "stable" | "unstable"
    condition1: tuple
    condition2: tuple
    condition3: tuple
    condition3_vacuous: bool
    condition4: LeaderConsistencyCheck
    applicable_corollary: str
    reference_leader: int
    scale: float

    @property
    def stable(self) -> bool:
        return self.overall == "stable"

    def gain_solution(self, i: int) -> GainEquationCheck:
        for entry in self.condition2:
            if entry.node == i:
                return entry
        raise KeyError(f"node {i} is not a follower of this instance")

    def to_dict(self):
        return {
            "overall": self.overall,
            "applicable_corollary": self.applicable_corollary,
            "reference_leader": self.reference_leader,
            "scale": self.scale,
            "condition1": [c.to_dict() for c in self.condition1],
            "condition2": [c.to_dict() for c in self.condition2],
            "condition3": [c.to_dict() for c in self.condition3],
            "condition3_vacuous": self.condition3_vacuous,
            "condition4": self.condition4.to_dict(),
        }

    def format_table(self) -> str:
        """Human-readable condition-by-condition summary."""
        lines = [f"verdict: {self.overall}  (corollary: {self.applicable_corollary})"]
        lines.append("condition 1 (follower stabilizability):")
        for c in self.condition1:
            mark = "pass" if c.passed else "FAIL"
            extra = " [implied]" if c.implied and not c.result.stabilizable else ""
            wit = "" if c.result.witness is None else f"  witness={c.result.witness:.6g}"
            lines.append(f"  node {c.node}: {mark}{extra}{wit}")
        lines.append("condition 2 (gain/offset equations):")
        for c in self.condition2:
            mark = "pass" if c.passed else "FAIL"
            lines.append(
                f"  node {c.node}: {mark}  gain rel.residual={c.gain_solve.relative_residual:.3e}"
                f"  offset rel.residual={c.offset_solve.relative_residual:.3e}"
            )
        vac = "  (vacuous: in-tree)" if self.condition3_vacuous else ""
        lines.append(f"condition 3 (displacement consistency):{vac}")
        for c in self.condition3:
            mark = "pass" if c.passed else "FAIL"
            lines.append(
                f"  edge {c.edge}: {mark}  defect_norm={c.defect_norm:.3e}"
                f"  defect={np.array2string(c.defect, precision=6)}"
            )
        c4 = self.condition4
        role = "binding" if c4.binding else "informational"
        mark = "pass" if c4.passed else "FAIL"
        lines.append(f"condition 4 (leader consistency, {role}): {mark}")
        for i, d in sorted(c4.defects.items()):
            lines.append(f"  leader {i}: ||A_i - A_ref||_F = {d:.3e}")
        lines.append(
            f"  reference leader {self.reference_leader}: "
            f"spectral abscissa {c4.hurwitz.spectral_abscissa:.6g} "
            f"({'Hurwitz' if c4.hurwitz.is_hurwitz else 'not Hurwitz'})"
        )
        return "\n".join(lines)


def classify(spec: FormationSpec, decomp: LevelDecomposition) -> str:
    """Special-case tag: multi_leader (more than one leader), in_tree
    (single leader, every follower has exactly one parent), or none."""
    if decomp.l0 > 1:
        return CASE_MULTI_LEADER
    if all(len(spec.parents(i)) == 1 for i in decomp.followers()):
        return CASE_IN_TREE
    return CASE_NONE


def _defect_scale(spec: FormationSpec, A_ref: np.ndarray) -> float:
    max_d = max((float(np.linalg.norm(e.d)) for e in spec.edges), default=0.0)
    return 1.0 + float(np.linalg.norm(A_ref, "fro")) + max_d


def check(
    spec: FormationSpec,
    decomp: LevelDecomposition,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CriterionReport:
    """Evaluate the full stability criterion, never short-circuiting.

    All four conditions are computed for every follower/edge/leader so the
    report carries complete evidence; the verdict is their conjunction.
    Condition 4 binds only when there is more than one leader.  In the
    multi-leader case with conditions 2 and 4 passing, condition 1 is
    implied (take S_i = N_i) and reported as such, though the PBH test is
    still run for diagnostics.
    """
    ref = decomp.renumbering[0]
    A_ref = spec.agent(ref).A
    scale = _defect_scale(spec, A_ref)
    special_case = classify(spec, decomp)
    D = decomp.cumulative_offset

    cond2 = []
    stab_results = {}
    for i in decomp.followers():
        ag = spec.agent(i)
        stab_results[i] = is_stabilizable(ag.A, ag.B, tol)
        cond2.append(
            GainEquationCheck(
                node=i,
                gain_solve=solve_matrix_equation(ag.B, A_ref - ag.A, tol),
                offset_solve=solve_matrix_equation(ag.B, ag.A @ D[i], tol),
            )
        )
    cond2_ok = all(c.passed for c in cond2)

    cond3 = []
    for e in spec.edges:
        defect = e.d - (D[e.i] - D[e.j])
        norm = float(np.linalg.norm(defect))
        cond3.append(
            DisplacementCheck(
                edge=e.key,
                defect=defect,
                defect_norm=norm,
                passed=bool(norm <= tol.eps_solve * scale),
            )
        )
    cond3_ok = all(c.passed for c in cond3)

    leaders = sorted(decomp.leaders)
    defects = {
        i: float(np.linalg.norm(spec.agent(i).A - A_ref, "fro")) for i in leaders
    }
    hw = is_hurwitz(A_ref, tol)
    binding = decomp.l0 > 1
    cond4_ok = (not binding) or (
        hw.is_hurwitz and all(d <= tol.eps_solve * scale for d in defects.values())
    )
    cond4 = LeaderConsistencyCheck(
        defects=defects, hurwitz=hw, binding=binding, passed=cond4_ok
    )

    implied = special_case == CASE_MULTI_LEADER and cond2_ok and cond4_ok
    cond1 = [
        StabilizabilityCheck(node=i, result=stab_results[i], implied=implied)
        for i in decomp.followers()
    ]
    cond1_ok = all(c.passed for c in cond1)

    stable = cond1_ok and cond2_ok and cond3_ok and cond4_ok
    return CriterionReport(
        overall="stable" if stable else "unstable",
        condition1=tuple(cond1),
        condition2=tuple(cond2),
        condition3=tuple(cond3),
        condition3_vacuous=special_case == CASE_IN_TREE,
        condition4=cond4,
        applicable_corollary=special_case,
        reference_leader=ref,
        scale=scale,
    )


@dataclass(frozen=True)
class ControllerVerification:
    """Result of checking a concrete control law against the closed-loop
    matching equations: M_i = A_i + B_i N_i and
    m_i = B_i kt_i - A_i D_i must agree across every edge, and every
    follower's own-state closed loop must be Hurwitz."""

    max_matrix_defect: float
    max_offset_defect: float
    edge_matrix_defects: dict
    edge_offset_defects: dict
    follower_hurwitz: dict  # follower id -> HurwitzReport for A_i + B_i S_i
    passed: bool
    scale: float

    def to_dict(self):
        return {
            "max_matrix_defect": self.max_matrix_defect,
            "max_offset_defect": self.max_offset_defect,
            "edge_matrix_defects": {str(e): d for e, d in self.edge_matrix_defects.items()},
            "edge_offset_defects": {str(e): d for e, d in self.edge_offset_defects.items()},
            "follower_hurwitz": {
                str(i): h.to_dict() for i, h in sorted(self.follower_hurwitz.items())
            },
            "passed": self.passed,
            "scale": self.scale,
        }


def verify_controller(
    spec: FormationSpec,
    decomp: LevelDecomposition,
    ctrl: ControllerSet,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> ControllerVerification:
    """Check a control law against the necessary closed-loop identities.

    Computes M_i = A_i + B_i (S_i + sum_s K_is) and
    m_i = B_i (k_i - S_i D_i - sum_s K_is D_s) - A_i D_i for every agent
    (leaders use zero gains) and reports the worst mismatch across edges.
    Passes when both defects stay within eps_solve * scale and every
    *follower* closed loop A_i + B_i S_i is Hurwitz — leader matrices are
    exempt, since a single-leader formation may be stable around an
    unstable leader.
    """
    if ctrl.n != spec.n or ctrl.m != spec.m:
        raise ValueError(
            f"controller dims ({ctrl.n}, {ctrl.m}) do not match spec ({spec.n}, {spec.m})"
        )
    for i, fc in ctrl.followers.items():
        if fc.S.shape != (spec.m, spec.n):
            raise ValueError(f"follower {i}: S has shape {fc.S.shape}")
        if set(fc.K) != set(spec.parents(i)):
            raise ValueError(
                f"follower {i}: per-parent gains keyed {sorted(fc.K)} "
                f"but parents are {sorted(spec.parents(i))}"
            )

    D = decomp.cumulative_offset
    M = {}
    mvec = {}
    hurwitz = {}
    for i in spec.nodes:
        ag = spec.agent(i)
        fc = ctrl.followers.get(i)
        if fc is None:
            M[i] = ag.A
            mvec[i] = -ag.A @ D[i]
        else:
            M[i] = ag.A + ag.B @ fc.N
            mvec[i] = ag.B @ fc.k_tilde - ag.A @ D[i]
            hurwitz[i] = is_hurwitz(ag.A + ag.B @ fc.S, tol)

    edge_M = {}
    edge_m = {}
    for e in spec.edges:
        edge_M[e.key] = float(np.linalg.norm(M[e.i] - M[e.j], "fro"))
        edge_m[e.key] = float(np.linalg.norm(mvec[e.i] - mvec[e.j]))

    max_M = max(edge_M.values(), default=0.0)
    max_m = max(edge_m.values(), default=0.0)
    ref = decomp.renumbering[0]
    scale = _defect_scale(spec, spec.agent(ref).A)
    passed = (
        max_M <= tol.eps_solve * scale
        and max_m <= tol.eps_solve * scale
        and all(h.is_hurwitz for h in hurwitz.values())
    )
    return ControllerVerification(
        max_matrix_defect=max_M,
        max_offset_defect=max_m,
        edge_matrix_defects=edge_M,
        edge_offset_defects=edge_m,
        follower_hurwitz=hurwitz,
        passed=passed,
        scale=scale,
    )
