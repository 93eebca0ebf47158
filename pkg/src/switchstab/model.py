"""Switched-system problem instances and the shared linear-algebra predicates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_RANK_TOL = 1e-10


class StructuralError(ValueError):
    """Matrices have incompatible shapes."""


class OutOfScopeError(StructuralError):
    """Input is well formed but outside the single-input scope."""


def _as_complex_matrix(M, name: str) -> np.ndarray:
    arr = np.array(M, dtype=complex, ndmin=2)
    if arr.ndim != 2:
        raise StructuralError(f"{name} must be 2-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SubsystemPair:
    """One mode ``(A_i, B_i)`` of the switched system; ``index`` is 1-based."""

    A: np.ndarray
    B: np.ndarray
    index: int = 1

    def __post_init__(self):
        A = _as_complex_matrix(self.A, f"A_{self.index}")
        B = np.array(self.B, dtype=complex)
        if B.ndim == 1:
            B = B[:, None]
        B = _as_complex_matrix(B, f"B_{self.index}")
        if A.shape[0] != A.shape[1]:
            raise StructuralError(f"A_{self.index} is not square: {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise StructuralError(
                f"B_{self.index} has {B.shape[0]} rows, A_{self.index} has {A.shape[0]}")
        if B.shape[1] != 1:
            raise OutOfScopeError(
                f"B_{self.index} has {B.shape[1]} columns; only single-input "
                "systems (m = 1) are supported")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def b(self) -> np.ndarray:
        """Input column as a flat vector."""
        return self.B[:, 0]

    @property
    def is_real(self) -> bool:
        return not (np.any(self.A.imag) or np.any(self.B.imag))


@dataclass(frozen=True)
class SwitchedSystem:
    """Ordered collection of modes sharing one state dimension."""

    modes: tuple[SubsystemPair, ...]

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise StructuralError("a switched system needs at least one mode")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_matrices(cls, As: Sequence, Bs: Sequence) -> "SwitchedSystem":
        if len(As) != len(Bs):
            raise StructuralError(f"{len(As)} A matrices but {len(Bs)} B matrices")
        return cls(tuple(SubsystemPair(A, B, i + 1) for i, (A, B) in enumerate(zip(As, Bs))))

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def N(self) -> int:
        return len(self.modes)

    @property
    def is_real(self) -> bool:
        return all(m.is_real for m in self.modes)

    @property
    def As(self) -> np.ndarray:
        return np.stack([m.A for m in self.modes])

    @property
    def Bs(self) -> np.ndarray:
        """Input columns stacked as an ``(N, n)`` array."""
        return np.stack([m.b for m in self.modes])


@dataclass(frozen=True)
class ClosedLoopSet:
    gains: tuple[np.ndarray, ...]
    closed_loops: tuple[np.ndarray, ...]

    def stacked(self) -> np.ndarray:
        return np.stack(self.closed_loops)


def closed_loops(system: SwitchedSystem, gains: Sequence) -> ClosedLoopSet:
    """Form ``A_i + B_i K_i`` for every mode."""
    if len(gains) != system.N:
        raise StructuralError(f"{len(gains)} gains for {system.N} modes")
    Ks, cls_ = [], []
    for mode, K in zip(system.modes, gains):
        K = np.asarray(K).reshape(1, -1)
        if K.shape[1] != system.n:
            raise StructuralError(f"gain {mode.index} has {K.shape[1]} entries, expected {system.n}")
        Ks.append(K)
        cls_.append(mode.A + mode.B @ K)
    return ClosedLoopSet(tuple(Ks), tuple(cls_))


@dataclass(frozen=True)
class Violation:
    mode: int
    predicate: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def summary(self) -> str:
        if self.ok:
            return "pass"
        return "; ".join(f"mode {v.mode}: {v.predicate}" + (f" ({v.detail})" if v.detail else "")
                         for v in self.violations)


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def numerical_rank(M: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank counting singular values above ``rank_tol * sigma_max``."""
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def is_controllable(A, B, rank_tol: float = DEFAULT_RANK_TOL) -> bool:
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex).reshape(A.shape[0], -1)
    return numerical_rank(controllability_matrix(A, B), rank_tol) == A.shape[0]


def validate(system: SwitchedSystem, rank_tol: float = DEFAULT_RANK_TOL) -> ValidationReport:
    """Check the standing assumptions on every mode.

    Raises
    ------
    StructuralError
        If the modes do not share one state dimension or are not indexed
        ``1..N``. This is separate from the report, which only lists
        assumption failures (zero input column, uncontrollable pair).
    """
    n = system.n
    for k, mode in enumerate(system.modes, start=1):
        if mode.n != n:
            raise StructuralError(f"mode {mode.index} has dimension {mode.n}, mode 1 has {n}")
        if mode.index != k:
            raise StructuralError(f"mode indices must be 1..N without gaps; got {mode.index} at {k}")

    violations = []
    for mode in system.modes:
        if not np.any(mode.B):
            violations.append(Violation(mode.index, "input column is zero"))
            continue
        C = controllability_matrix(mode.A, mode.B)
        r = numerical_rank(C, rank_tol)
        if r < n:
            violations.append(Violation(mode.index, "pair (A, B) not controllable",
                                        f"controllability rank {r} < {n}"))
    return ValidationReport(tuple(violations))


def spectral_radius(M) -> float:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise StructuralError(f"spectral radius needs a square matrix, got {M.shape}")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigensolver failed on\n{M!r}") from exc
    return float(np.max(np.abs(ev))) if ev.size else 0.0


def distance_to_image(v, B) -> float:
    """Euclidean distance from ``v`` to the complex line spanned by ``B``."""
    v = np.asarray(v, dtype=complex).ravel()
    b = np.asarray(B, dtype=complex).ravel()
    bb = np.vdot(b, b).real
    if bb == 0.0:
        raise ValueError("distance to Im B is undefined for B = 0")
    return float(np.linalg.norm(v - b * (np.vdot(b, v) / bb)))
