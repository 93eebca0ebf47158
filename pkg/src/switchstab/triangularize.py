"""Iterative approximate triangularization of the closed-loop family by feedback.

Each level assigns one approximate common eigenvector, then restricts every
closed-loop map to its orthogonal complement and repeats on the smaller
system. The accumulated basis ``U`` makes every ``U* (A_i + B_i K_i) U``
nearly upper triangular, with the per-level eigenvalues on the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cea import CeaFailure, CeaInputs, CeaOptions, CeaSolution, run_cea
from .model import SwitchedSystem, spectral_radius, validate

DEFLATION_FLOOR = 1e-12
DEFAULT_TAU_IM = 1e-6


class DeflationError(RuntimeError):
    """A deflated input column vanished, so the next level is ill posed."""


class DesignFailure(RuntimeError):
    """Assignment failed at some level; completed levels are kept for inspection."""

    def __init__(self, level: int, cause: CeaFailure, iterations, gains):
        self.level = level
        self.cause = cause
        self.iterations = tuple(iterations)
        self.gains = gains
        super().__init__(f"level {level}: {cause}")


class RealizationRefused(RuntimeError):
    """Gains carry too much imaginary part to be replaced by their real part."""

    def __init__(self, result: "DesignResult", imag_ratios: np.ndarray, tau_im: float):
        self.result = result
        self.imag_ratios = imag_ratios
        self.tau_im = tau_im
        worst = int(np.argmax(imag_ratios))
        super().__init__(
            f"mode {worst + 1}: relative imaginary norm {imag_ratios[worst]:.3e} exceeds {tau_im:.1e}")


@dataclass(frozen=True)
class IterationRecord:
    level: int
    n_r: int
    cea: CeaSolution
    U_next: np.ndarray | None = None
    As_next: np.ndarray | None = None
    Bs_next: np.ndarray | None = None
    min_deflated_b: float | None = None


@dataclass(frozen=True)
class DesignResult:
    gains: np.ndarray               # (N, n), row i is K_i
    U: np.ndarray                   # (n, n)
    iterations: tuple[IterationRecord, ...]
    lower_residual: float
    closed_loop_radii: np.ndarray
    realization: str = "complex"
    imag_discarded: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def active_flags(self) -> list[bool]:
        return [rec.cea.trace.active_stability_constraint for rec in self.iterations]

    @property
    def lambdas(self) -> np.ndarray:
        """``(n, N)`` array; row ``l`` holds the level-``l`` eigenvalue of each mode."""
        return np.array([rec.cea.lambdas for rec in self.iterations])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([rec.cea.residual for rec in self.iterations])


def unitary_completion(v) -> np.ndarray:
    """Columns 2..n_r of a unitary matrix whose first column is ``v``.

    Uses the Householder reflector sending ``v`` to a multiple of ``e_1``;
    the reflector's sign follows the phase of ``v[0]`` to avoid cancellation.
    Real ``v`` gives a real completion.
    """
    v = np.asarray(v).ravel()
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise ValueError(f"unitary completion needs a unit vector, got norm {np.linalg.norm(v)}")
    n = v.size
    if n < 2:
        raise ValueError("unitary completion needs n_r >= 2")
    phase = v[0] / abs(v[0]) if v[0] != 0 else 1.0
    u = v.astype(np.result_type(v, phase), copy=True)
    u[0] += phase
    H = np.eye(n, dtype=u.dtype) - 2.0 * np.outer(u, u.conj()) / np.vdot(u, u).real
    # H is Hermitian with H v = -phase e_1, so its first column is parallel to v
    return H[:, 1:]


def deflate(As, Bs, sol: CeaSolution):
    """Restrict the closed loops to the orthogonal complement of ``sol.v``.

    Returns ``(U_next, As_next, Bs_next)``.
    """
    As = np.asarray(As)
    Bs = np.asarray(Bs)
    U = unitary_completion(sol.v)
    Ucc = U.conj().T
    Acl = np.stack([A + np.outer(b, F.ravel()) for A, b, F in zip(As, Bs, sol.F)])
    As_next = np.einsum("ij,mjk,kl->mil", Ucc, Acl, U)
    Bs_next = Bs @ U.conj()
    norms = np.linalg.norm(Bs_next, axis=1)
    if norms.min() < DEFLATION_FLOOR:
        i = int(np.argmin(norms))
        raise DeflationError(
            f"deflated input column of mode {i + 1} has norm {norms[i]:.3e}; "
            "the assigned vector lies (numerically) in Im B")
    return U, As_next, Bs_next


def near_triangularity(gains, U, system: SwitchedSystem) -> float:
    """Largest Frobenius norm of the strictly lower part of ``U*(A_i + B_i K_i)U``."""
    gains = np.asarray(gains).reshape(system.N, system.n)
    U = np.asarray(U)
    worst = 0.0
    for mode, K in zip(system.modes, gains):
        T = U.conj().T @ (mode.A + np.outer(mode.b, K)) @ U
        worst = max(worst, float(np.linalg.norm(np.tril(T, -1))))
    return worst


def _radii(gains, system: SwitchedSystem) -> np.ndarray:
    return np.array([spectral_radius(m.A + np.outer(m.b, K)) for m, K in zip(system.modes, gains)])


def run_algorithm1(system: SwitchedSystem, eps_c: float = 1e-4, eps_d: float = 1e-4,
                   opts: CeaOptions | None = None) -> DesignResult:
    """Compute feedback gains by repeated common-eigenvector assignment.

    Raises
    ------
    ValueError
        If the system fails validation.
    DesignFailure
        If assignment is infeasible at some level.
    """
    report = validate(system)
    if not report.ok:
        raise ValueError(f"system fails validation: {report.summary()}")
    opts = opts or CeaOptions()
    n, N = system.n, system.N
    As, Bs = system.As, system.Bs
    gains = np.zeros((N, n), dtype=complex)
    U = np.zeros((n, n), dtype=complex)
    basis = np.eye(n, dtype=complex)    # product U_1 ... U_l, shape (n, n_r)
    records = []
    for level in range(1, n + 1):
        n_r = n - level + 1
        try:
            sol = run_cea(CeaInputs(As, Bs, eps_c, eps_d), opts)
        except CeaFailure as exc:
            raise DesignFailure(level, exc, records, gains.copy()) from exc
        U[:, level - 1] = basis @ sol.v
        gains += np.vstack([F.ravel() for F in sol.F]) @ basis.conj().T
        if level < n:
            U_next, As, Bs = deflate(As, Bs, sol)
            basis = basis @ U_next
            records.append(IterationRecord(level, n_r, sol, U_next, As, Bs,
                                           float(np.linalg.norm(Bs, axis=1).min())))
        else:
            records.append(IterationRecord(level, n_r, sol))
    return DesignResult(gains, U, tuple(records), near_triangularity(gains, U, system),
                        _radii(gains, system), "complex", np.zeros(N))


def realize_real_gains(result: DesignResult, system: SwitchedSystem,
                       tau_im: float = DEFAULT_TAU_IM) -> DesignResult:
    """Replace each gain by its real part when its imaginary part is negligible.

    Raises
    ------
    ValueError
        If the system data are not real.
    RealizationRefused
        If some ``||Im K_i|| / ||K_i||`` exceeds ``tau_im``; the exception
        carries the untouched complex result.
    """
    if not system.is_real:
        raise ValueError("real gains can only be realized for real system data")
    K = np.asarray(result.gains)
    imag = np.linalg.norm(K.imag, axis=1)
    scale = np.linalg.norm(K, axis=1)
    ratios = np.divide(imag, scale, out=np.zeros_like(imag), where=scale > 0)
    if np.any(ratios > tau_im):
        raise RealizationRefused(result, ratios, tau_im)
    Kr = K.real.copy()
    return replace(result, gains=Kr,
                   lower_residual=near_triangularity(Kr, result.U, system),
                   closed_loop_radii=_radii(Kr, system),
                   realization="real_projected", imag_discarded=imag)
