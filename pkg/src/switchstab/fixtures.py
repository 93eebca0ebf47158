"""Embedded example systems and seeded exactly-triangularizable test instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SwitchedSystem, is_controllable

EX41_A = (
    np.array([[0.574, 0.074, 0.089],
              [0.074, 0.572, -0.091],
              [0.089, -0.091, 0.538]]),
    np.array([[-0.737, 0.386, -1.680],
              [1.351, 0.638, 0.035],
              [1.071, -1.295, -0.936]]),
)
EX41_B = (
    np.array([-0.038, 0.327, 0.175]),
    np.array([0.0, 0.114, 1.067]),
)
EX43_A3 = np.array([[0.352, 0.159, -1.129],
                    [0.159, 0.0, 0.262],
                    [-1.129, 0.262, -0.705]])
EX43_B3 = np.array([-0.433, 0.0, 0.0])


def example_41() -> SwitchedSystem:
    """Two random 3-state modes, one stable and one anti-stable."""
    return SwitchedSystem.from_matrices(EX41_A, EX41_B)


def example_42(alpha: float) -> SwitchedSystem:
    """Two-state pair with shear ``alpha``; the family loses its CQLF at ``alpha = 1.5``."""
    A1 = np.array([[0.5, alpha], [0.0, 0.5]])
    A2 = np.array([[0.5, 0.0], [alpha, 0.5]])
    return SwitchedSystem.from_matrices([A1, A2], [[0.0, 1.0], [1.0, 0.0]])


def example_43() -> SwitchedSystem:
    """:func:`example_41` with a third mode appended."""
    return SwitchedSystem.from_matrices(EX41_A + (EX43_A3,), EX41_B + (EX43_B3,))


EXAMPLES = {
    "4.1": example_41,
    "4.3": example_43,
}


@dataclass(frozen=True)
class ExactFixture:
    """``A_i = T Ahat_i T^T - B_i Khat_i`` so that ``Khat_i`` triangularizes every mode."""

    system: SwitchedSystem
    T: np.ndarray
    A_hat: np.ndarray       # (N, n, n) upper triangular
    K_hat: np.ndarray       # (N, n)
    seed: int


def exact_fixture(seed: int, n: int | None = None, N: int | None = None,
                  diag_max: float = 0.9) -> ExactFixture:
    """Build a real instance whose closed loops can be made simultaneously triangular.

    ``n`` is drawn from {2, 3, 4} and ``N`` from {2, 3} unless given. ``T`` is
    a Haar-random orthogonal matrix, ``Ahat_i`` are upper triangular with
    diagonal entries in ``[-diag_max, diag_max]`` and off-diagonal entries in
    ``[-1, 1]``, ``Khat_i`` are standard normal and each ``B_i`` is resampled
    until ``(A_i, B_i)`` is controllable.
    """
    rng = np.random.default_rng([seed, 0x5eed])
    n = int(rng.choice([2, 3, 4])) if n is None else n
    N = int(rng.choice([2, 3])) if N is None else N
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    T = Q * np.sign(np.diag(R))
    A_hat = np.triu(rng.uniform(-1.0, 1.0, (N, n, n)), 1)
    idx = np.arange(n)
    A_hat[:, idx, idx] = rng.uniform(-diag_max, diag_max, (N, n))
    K_hat = rng.standard_normal((N, n))
    As, Bs = [], []
    for i in range(N):
        while True:
            b = rng.standard_normal(n)
            A = T @ A_hat[i] @ T.T - np.outer(b, K_hat[i])
            if is_controllable(A, b):
                break
        As.append(A)
        Bs.append(b)
    return ExactFixture(SwitchedSystem.from_matrices(As, Bs), T, A_hat, K_hat, seed)


def perturbed(system: SwitchedSystem, magnitude: float, seed: int) -> SwitchedSystem:
    """Add independent uniform noise in ``[-magnitude, magnitude]`` to every real entry."""
    rng = np.random.default_rng([seed, 0xbad])
    As = system.As.real
    Bs = system.Bs.real
    As = As + rng.uniform(-magnitude, magnitude, As.shape)
    Bs = Bs + rng.uniform(-magnitude, magnitude, Bs.shape)
    return SwitchedSystem.from_matrices(list(As), list(Bs))
