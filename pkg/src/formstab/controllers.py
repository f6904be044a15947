"""Affine follower controllers u_i = S_i x_i + sum_s K_is x_s + k_i.

`ControllerSet` stores the per-follower gains together with the derived
aggregate gain N_i = S_i + sum_s K_is and derived offset
kt_i = k_i - S_i D_i - sum_s K_is D_s, which are the quantities the
stability criterion constrains.  Leaders carry no gains (implicitly zero).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import MissingStateError
from .model import LevelDecomposition

__all__ = [
    "FollowerController",
    "ControllerSet",
    "assemble_controller",
    "control_input",
    "controller_from_dict",
    "controller_to_dict",
    "load_controller",
    "save_controller",
]


def _arr(x) -> np.ndarray:
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FollowerController:
    """Gains of one follower: own-state gain S, per-parent gains K, offset k,
    plus the derived aggregate gain N and derived offset k_tilde."""

    S: np.ndarray
    K: dict  # parent id -> (m, n) gain
    k: np.ndarray
    N: np.ndarray
    k_tilde: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "S", _arr(self.S))
        object.__setattr__(self, "K", {int(s): _arr(Ks) for s, Ks in self.K.items()})
        object.__setattr__(self, "k", _arr(self.k))
        object.__setattr__(self, "N", _arr(self.N))
        object.__setattr__(self, "k_tilde", _arr(self.k_tilde))


@dataclass(frozen=True)
class ControllerSet:
    """Complete follower control law for one formation instance."""

    n: int
    m: int
    followers: dict  # follower id -> FollowerController

    def __post_init__(self):
        object.__setattr__(self, "followers", dict(self.followers))

    def gains(self, i: int) -> FollowerController:
        return self.followers[i]


def assemble_controller(
    decomp: LevelDecomposition,
    n: int,
    m: int,
    S: dict,
    N: dict,
    k_tilde: dict,
    split_weights: dict,
) -> ControllerSet:
    """Build a ControllerSet from stabilizing gains and criterion solutions.

    For each follower i, the per-parent gains split the aggregate
    N_i - S_i according to ``split_weights[i]`` (a parent -> weight map
    summing to 1), and the offset follows
    k_i = kt_i + S_i D_i + sum_s K_is D_s.  The stored derived fields are
    recomputed from (S, K, k) so the construction identities hold by
    definition.
    """
    D = decomp.cumulative_offset
    followers = {}
    for i in decomp.followers():
        Si = np.asarray(S[i], dtype=float)
        Ni = np.asarray(N[i], dtype=float)
        kti = np.asarray(k_tilde[i], dtype=float)
        K = {s: w * (Ni - Si) for s, w in split_weights[i].items()}
        ki = kti + Si @ D[i] + sum(Ks @ D[s] for s, Ks in K.items())
        followers[i] = FollowerController(
            S=Si,
            K=K,
            k=ki,
            N=Si + sum(K.values()),
            k_tilde=ki - Si @ D[i] - sum(Ks @ D[s] for s, Ks in K.items()),
        )
    return ControllerSet(n=n, m=m, followers=followers)


def control_input(ctrl: ControllerSet, i: int, states: dict) -> np.ndarray:
    """Evaluate u_i = S_i x_i + sum_s K_is x_s + k_i at the given states.

    Leaders (nodes without stored gains) get the zero input.  Raises
    `MissingStateError` when the follower's own state or any parent state
    is absent from ``states``.
    """
    fc = ctrl.followers.get(i)
    if fc is None:
        return np.zeros(ctrl.m)
    if i not in states:
        raise MissingStateError(f"state of agent {i} not provided")
    u = fc.S @ np.asarray(states[i], dtype=float) + fc.k
    for s, Ks in fc.K.items():
        if not Ks.any():  # zero gain: the parent state is not actually used
            continue
        if s not in states:
            raise MissingStateError(f"state of parent {s} (needed by agent {i}) not provided")
        u = u + Ks @ np.asarray(states[s], dtype=float)
    return u


def controller_to_dict(ctrl: ControllerSet) -> dict:
    return {
        "n": ctrl.n,
        "m": ctrl.m,
        "followers": {
            str(i): {
                "S": fc.S.tolist(),
                "K": {str(s): Ks.tolist() for s, Ks in fc.K.items()},
                "k": fc.k.tolist(),
                "N": fc.N.tolist(),
                "k_tilde": fc.k_tilde.tolist(),
            }
            for i, fc in sorted(ctrl.followers.items())
        },
    }


def controller_from_dict(data: dict) -> ControllerSet:
    followers = {
        int(i): FollowerController(
            S=np.asarray(fc["S"], dtype=float),
            K={int(s): np.asarray(Ks, dtype=float) for s, Ks in fc["K"].items()},
            k=np.asarray(fc["k"], dtype=float),
            N=np.asarray(fc["N"], dtype=float),
            k_tilde=np.asarray(fc["k_tilde"], dtype=float),
        )
        for i, fc in data["followers"].items()
    }
    return ControllerSet(n=int(data["n"]), m=int(data["m"]), followers=followers)


def save_controller(ctrl: ControllerSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(controller_to_dict(ctrl), fh, indent=2)
        fh.write("\n")


def load_controller(path) -> ControllerSet:
    with open(path, "r", encoding="utf-8") as fh:
        return controller_from_dict(json.load(fh))
