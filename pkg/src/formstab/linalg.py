"""Dense linear-algebra kernels: eigenvalues, Hurwitz and stabilizability
tests, rank-aware matrix-equation solves, stabilizing-gain synthesis, and
exponential decay certificates.

All routines are pure functions over value inputs and safe to call from
concurrent tasks.  Tolerances are collected in a single `Tolerances` record
so front-ends can thread one configuration object through every check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    CertificateError,
    ConvergenceFailure,
    NotStabilizableError,
    RateTooAggressive,
    SynthesisFailure,
)

__all__ = [
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "HurwitzReport",
    "LinearSolveReport",
    "StabilizabilityResult",
    "ExpEnvelope",
    "eigenvalues",
    "spectral_abscissa",
    "is_hurwitz",
    "solve_matrix_equation",
    "matrix_rank",
    "controllability_matrix",
    "is_stabilizable",
    "stabilize",
    "exp_envelope",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used by every verdict in the package.

    eps_solve : relative Frobenius residual below which a linear matrix
        equation counts as solvable.
    eps_hurwitz : stability margin; a matrix is Hurwitz when its spectral
        abscissa is below ``-eps_hurwitz``, and an eigenvalue takes part in
        the PBH test when its real part is at least ``-eps_hurwitz``.
    rank_cutoff : multiplier c in the singular-value rank cutoff
        ``c * max(shape) * machine_eps * sigma_max``.
    """

    eps_solve: float = 1e-8
    eps_hurwitz: float = 1e-9
    rank_cutoff: float = 1.0

    def __post_init__(self):
        if self.eps_solve <= 0 or self.eps_hurwitz <= 0 or self.rank_cutoff <= 0:
            raise ValueError("all tolerances must be positive")


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class HurwitzReport:
    """Stability verdict for a square matrix."""

    spectral_abscissa: float
    eigenvalues: tuple
    is_hurwitz: bool
    margin: float

    def to_dict(self):
        return {
            "spectral_abscissa": self.spectral_abscissa,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "is_hurwitz": self.is_hurwitz,
            "margin": self.margin,
        }


@dataclass(frozen=True)
class LinearSolveReport:
    """Minimum-norm least-squares solve of B X = C with a solvability verdict.

    ``solvable`` holds exactly when ``relative_residual <= eps_solve`` where
    ``relative_residual = ||B X - C||_F / (1 + ||C||_F)``.
    """

    solution: np.ndarray
    residual_norm: float
    relative_residual: float
    solvable: bool
    rank_B: int

    def to_dict(self):
        return {
            "solution": self.solution.tolist(),
            "residual_norm": self.residual_norm,
            "relative_residual": self.relative_residual,
            "solvable": self.solvable,
            "rank_B": self.rank_B,
        }


@dataclass(frozen=True)
class StabilizabilityResult:
    """PBH verdict for a pair (A, B); falsy when some unstable mode is
    unreachable, with the offending eigenvalue attached as ``witness``."""

    stabilizable: bool
    witness: complex | None = None

    def __bool__(self):
        return self.stabilizable


@dataclass(frozen=True)
class ExpEnvelope:
    """Certified bound ||exp(t A)|| <= C * exp(-alpha * t) for all t >= 0."""

    C: float
    alpha: float


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {A.shape}")
    return A


def eigenvalues(A) -> np.ndarray:
    """Eigenvalues (with multiplicity) of a real square matrix.

    Computed from the real Schur form: 1x1 diagonal blocks give real
    eigenvalues, 2x2 blocks give complex-conjugate pairs.  Results are
    sorted by (real part, imaginary part) for reproducibility.

    Raises
    ------
    ConvergenceFailure
        If the QR iteration behind the Schur reduction does not converge.
    """
    A = _as_matrix(A)
    n, m = A.shape
    if n != m:
        raise ValueError("matrix must be square")
    if n == 0:
        return np.empty(0, dtype=complex)
    try:
        T, _ = scipy.linalg.schur(A, output="real")
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise ConvergenceFailure(str(exc)) from exc

    eigs = []
    k = 0
    while k < n:
        if k == n - 1 or T[k + 1, k] == 0.0:
            eigs.append(complex(T[k, k]))
            k += 1
        else:
            # standardized 2x2 block: eigenvalues from trace/determinant
            a, b = T[k, k], T[k, k + 1]
            c, d = T[k + 1, k], T[k + 1, k + 1]
            half_tr = 0.5 * (a + d)
            disc = half_tr * half_tr - (a * d - b * c)
            if disc < 0.0:
                im = np.sqrt(-disc)
                eigs.extend([complex(half_tr, -im), complex(half_tr, im)])
            else:
                rt = np.sqrt(disc)
                eigs.extend([complex(half_tr - rt), complex(half_tr + rt)])
            k += 2
    eigs.sort(key=lambda z: (z.real, z.imag))
    return np.array(eigs, dtype=complex)


def spectral_abscissa(A) -> float:
    """max Re(lambda) over the spectrum of A."""
    return float(np.max(eigenvalues(A).real))


def is_hurwitz(A, tol: Tolerances = DEFAULT_TOLERANCES) -> HurwitzReport:
    """Test whether all eigenvalues of A lie in the open left half-plane.

    The verdict uses a strict margin: Hurwitz iff the spectral abscissa is
    below ``-tol.eps_hurwitz``.
    """
    eigs = eigenvalues(A)
    abscissa = float(np.max(eigs.real)) if eigs.size else -np.inf
    return HurwitzReport(
        spectral_abscissa=abscissa,
        eigenvalues=tuple(eigs),
        is_hurwitz=bool(abscissa < -tol.eps_hurwitz),
        margin=tol.eps_hurwitz,
    )


def solve_matrix_equation(B, C, tol: Tolerances = DEFAULT_TOLERANCES) -> LinearSolveReport:
    """Minimum-norm least-squares solution X of B X = C.

    Parameters
    ----------
    B : (n, m) array_like
    C : (n, k) or (n,) array_like
        Right-hand side; a vector RHS yields a vector solution.

    Returns
    -------
    LinearSolveReport
        Infeasibility is a report state (``solvable=False``), never an error.
    """
    B = _as_matrix(B)
    C = np.asarray(C, dtype=float)
    vector_rhs = C.ndim == 1
    C2 = C[:, None] if vector_rhs else C
    if C2.ndim != 2 or B.shape[0] != C2.shape[0]:
        raise ValueError(f"row counts must match: B is {B.shape}, C is {C.shape}")

    X, _, rank, _ = np.linalg.lstsq(B, C2, rcond=None)
    residual = float(np.linalg.norm(B @ X - C2))
    rel = residual / (1.0 + float(np.linalg.norm(C2)))
    if vector_rhs:
        X = X[:, 0]
    return LinearSolveReport(
        solution=X,
        residual_norm=residual,
        relative_residual=rel,
        solvable=bool(rel <= tol.eps_solve),
        rank_B=int(rank),
    )


def matrix_rank(M, tol: Tolerances = DEFAULT_TOLERANCES) -> int:
    """Numerical rank from singular values.

    Cutoff is ``tol.rank_cutoff * max(shape) * eps * sigma_max``.
    """
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    cutoff = tol.rank_cutoff * max(M.shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > cutoff))


def controllability_matrix(A, B) -> np.ndarray:
    """[B, AB, ..., A^(n-1) B] stacked horizontally."""
    A = _as_matrix(A)
    B = _as_matrix(B)
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_stabilizable(A, B, tol: Tolerances = DEFAULT_TOLERANCES) -> StabilizabilityResult:
    """PBH test: (A, B) is stabilizable iff rank [A - lambda I, B] = n for
    every eigenvalue lambda of A with Re(lambda) >= -eps_hurwitz."""
    A = _as_matrix(A)
    B = _as_matrix(B)
    n = A.shape[0]
    if A.shape[1] != n or B.shape[0] != n:
        raise ValueError("A must be n x n and B must be n x m")
    eye = np.eye(n)
    for lam in eigenvalues(A):
        if lam.real < -tol.eps_hurwitz:
            continue
        pencil = np.hstack([A - lam * eye, B.astype(complex)])
        if matrix_rank(pencil, tol) < n:
            return StabilizabilityResult(False, witness=complex(lam))
    return StabilizabilityResult(True)


def _controllable_staircase(A, B, tol: Tolerances):
    """Orthonormal split of the state space into controllable/uncontrollable
    parts: returns (V, W) with range(V) the controllable subspace."""
    n = A.shape[0]
    K = controllability_matrix(A, B)
    if not np.any(K):
        return np.zeros((n, 0)), np.eye(n)
    U, s, _ = np.linalg.svd(K)
    cutoff = tol.rank_cutoff * max(K.shape) * np.finfo(float).eps * s[0]
    r = int(np.sum(s > cutoff))
    return U[:, :r], U[:, r:]


def _bass_gain(A, B, tol: Tolerances) -> np.ndarray:
    """Bass shift gain on the controllable block of a staircase split.

    With beta = ||A||_F + 1 solve (A1 + beta I) P + P (A1 + beta I)^T =
    2 B1 B1^T and take S1 = -B1^T pinv(P); the uncontrollable block is
    left alone (it must already be Hurwitz for a stabilizable pair).
    Places every controllable closed-loop eigenvalue at Re = -beta, which
    can demand very large gains for single-input systems.
    """
    n, m = B.shape
    V, _ = _controllable_staircase(A, B, tol)
    r = V.shape[1]
    if r == 0:
        return np.zeros((m, n))
    A1 = V.T @ A @ V
    B1 = V.T @ B
    beta = np.linalg.norm(A, "fro") + 1.0
    P = scipy.linalg.solve_continuous_lyapunov(A1 + beta * np.eye(r), 2.0 * B1 @ B1.T)
    P = 0.5 * (P + P.T)
    return -(B1.T @ np.linalg.pinv(P)) @ V.T


def stabilize(A, B, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Compute a gain S such that A + B S is Hurwitz.

    Primary construction: the Riccati gain S = -B^T P with P the
    stabilizing solution of A^T P + P A - P B B^T P + I = 0, which works
    for every stabilizable pair without user-chosen pole locations and
    keeps gains moderate.  When the Riccati solve fails numerically, the
    Bass shift construction is used as a fallback.  Either way the closed
    loop is re-verified before the gain is handed back.

    Raises
    ------
    NotStabilizableError
        If the PBH test fails (witness eigenvalue attached).
    SynthesisFailure
        If the synthesized closed loop fails the Hurwitz check numerically.
    """
    A = _as_matrix(A)
    B = _as_matrix(B)
    n, m = B.shape
    verdict = is_stabilizable(A, B, tol)
    if not verdict:
        raise NotStabilizableError(verdict.witness)

    S = None
    if np.any(B):
        try:
            P = scipy.linalg.solve_continuous_are(A, B, np.eye(n), np.eye(m))
            S = -B.T @ P
        except (scipy.linalg.LinAlgError, np.linalg.LinAlgError, ValueError):
            S = None
        if S is not None and not is_hurwitz(A + B @ S, tol).is_hurwitz:
            S = None
    if S is None:
        S = _bass_gain(A, B, tol)

    if not is_hurwitz(A + B @ S, tol).is_hurwitz:
        raise SynthesisFailure(
            "closed loop failed the Hurwitz check after gain synthesis"
        )
    return S


def exp_envelope(
    A,
    alpha: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
    grid_points: int = 200,
) -> ExpEnvelope:
    """Decay certificate ||exp(t A)|| <= C exp(-alpha t) for a Hurwitz matrix.

    C = sqrt(cond(P)) where P solves (A + alpha I)^T P + P (A + alpha I) = -I;
    the Lyapunov function x^T P x then decays at rate 2*alpha, which yields
    the operator-norm bound.  The certificate is cross-checked by sampling
    ||exp(t A)|| on ``grid_points`` points of [0, 20/alpha].

    Raises
    ------
    RateTooAggressive
        If alpha >= -spectral_abscissa(A).
    CertificateError
        If the sampled norms violate the certified bound (numerical failure).
    """
    A = _as_matrix(A)
    n = A.shape[0]
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    abscissa = spectral_abscissa(A)
    if alpha >= -abscissa:
        raise RateTooAggressive(
            f"requested rate {alpha} but spectral abscissa is {abscissa}"
        )

    shifted = A + alpha * np.eye(n)
    P = scipy.linalg.solve_continuous_lyapunov(shifted.T, -np.eye(n))
    P = 0.5 * (P + P.T)
    w = np.linalg.eigvalsh(P)
    if w[0] <= 0:
        raise CertificateError("Lyapunov solution is not positive definite")
    C = float(np.sqrt(w[-1] / w[0]))

    # sample the bound: successive products of the one-step propagator
    step = (20.0 / alpha) / (grid_points - 1)
    F = scipy.linalg.expm(step * A)
    E = np.eye(n)
    for k in range(grid_points):
        t = k * step
        if np.linalg.norm(E, 2) > C * np.exp(-alpha * t) * (1.0 + 1e-6):
            raise CertificateError(
                f"certificate violated at t={t}: "
                f"||exp(tA)||={np.linalg.norm(E, 2)} > {C * np.exp(-alpha * t)}"
            )
        E = F @ E
    return ExpEnvelope(C=C, alpha=float(alpha))
