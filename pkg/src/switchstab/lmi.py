"""LMI feasibility for common quadratic Lyapunov functions.

Two problems are handled:

* analysis: given closed loops ``A_i``, find ``P = P^T`` with
  ``P > 0`` and ``P - A_i^T P A_i > 0`` for all i;
* synthesis: given ``(A_i, B_i)``, find ``X = X^T > 0`` and rows ``N_i``
  with ``[[X, (A_i X + B_i N_i)^T], [A_i X + B_i N_i, X]] > 0``; then
  ``K_i = N_i X^{-1}`` and ``V(x) = x^T X^{-1} x``.

Both are posed on the slice ``trace = n`` and searched first by projected
subgradient descent on the worst minimum-eigenvalue deficit. When that
stalls, a log-barrier Newton method maximizes the worst margin directly,
which resolves borderline instances whose margins are far below what a
``c/sqrt(k)`` step can reach. Every certificate returned is re-checked by
:func:`verify_cqlf` / :func:`verify_synthesis`, which recompute all margins
from scratch. A failed search is reported as an :class:`InfeasibleVerdict`
and is not a proof of infeasibility, except for the ``mode_unstable`` case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import SwitchedSystem, spectral_radius

DEFAULT_FLOOR = 1e-6
DEFAULT_MAX_ITER = 20000
IMAG_TOL = 1e-10
COND_LIMIT = 1e12


class CertificateError(ValueError):
    """A candidate certificate does not meet its margin floor."""


@dataclass(frozen=True)
class CqlfCertificate:
    P: np.ndarray
    margin_pd: float
    margins_decrease: np.ndarray
    floor: float

    @property
    def min_margin(self) -> float:
        return float(min(self.margin_pd, self.margins_decrease.min()))


@dataclass(frozen=True)
class SynthesisCertificate:
    X: np.ndarray
    N: np.ndarray              # (modes, n)
    gains: np.ndarray          # (modes, n)
    block_margins: np.ndarray
    cqlf: CqlfCertificate
    floor: float


@dataclass(frozen=True)
class InfeasibleVerdict:
    """Outcome of a search that produced no certificate.

    ``heuristic`` is False only for the ``mode_unstable`` reason, where some
    closed loop has spectral radius >= 1 and no CQLF can exist.
    """

    reason: str
    best_objective: float
    iterations: int
    heuristic: bool = True
    best_margin: float | None = None


def project_psd(S, floor: float = 0.0) -> np.ndarray:
    """Nearest symmetric matrix (Frobenius) with all eigenvalues >= ``floor``."""
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    return (V * np.maximum(w, floor)) @ V.T


def discrete_lyapunov(A, Q) -> np.ndarray:
    """Solve ``P - A^* P A = Q`` for stable ``A`` by a vectorized linear solve."""
    A = np.asarray(A)
    Q = np.asarray(Q)
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise ValueError(f"discrete Lyapunov equation needs rho(A) < 1, got {rho}")
    n = A.shape[0]
    # row-major vec(A^H P A) = (A^H kron A^T) vec(P)
    M = np.eye(n * n) - np.kron(A.conj().T, A.T)
    P = np.linalg.solve(M, Q.reshape(-1)).reshape(n, n)
    return 0.5 * (P + P.conj().T)


def _min_eig(S):
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return w[0], V[:, 0]


def _as_real_stack(closed_loops) -> np.ndarray:
    Acl = np.asarray([np.asarray(A) for A in closed_loops])
    if Acl.ndim != 3 or Acl.shape[1] != Acl.shape[2]:
        raise ValueError(f"closed loops must be square and of equal size, got {Acl.shape}")
    if np.iscomplexobj(Acl):
        if np.linalg.norm(Acl.imag) > IMAG_TOL:
            raise ValueError("complex closed loops are not accepted; realify them first")
        Acl = Acl.real
    return np.ascontiguousarray(Acl, dtype=float)


def realify(A) -> np.ndarray:
    """Real ``2n x 2n`` form of a complex map acting on ``(Re x, Im x)``."""
    A = np.asarray(A, dtype=complex)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def verify_cqlf(P, closed_loops, floor: float = DEFAULT_FLOOR) -> CqlfCertificate:
    """Check a candidate ``P`` by direct eigendecomposition.

    ``P`` is symmetrized and rescaled to ``trace(P) = n`` before the margins
    are computed, so any positive multiple of ``P`` gives the same answer.

    Raises
    ------
    CertificateError
        If a margin falls below ``floor``.
    """
    Acl = _as_real_stack(closed_loops)
    P = np.asarray(P, dtype=float)
    P = 0.5 * (P + P.T)
    tr = np.trace(P)
    if not tr > 0:
        raise CertificateError(f"trace(P) = {tr} is not positive")
    P = P * (P.shape[0] / tr)
    pd = float(np.linalg.eigvalsh(P)[0])
    dec = np.array([np.linalg.eigvalsh(P - A.T @ P @ A)[0] for A in Acl])
    if pd < floor or dec.min() < floor:
        raise CertificateError(
            f"margins below floor {floor:.1e}: pd {pd:.3e}, decrease {dec.min():.3e}")
    return CqlfCertificate(P, pd, dec, floor)


def _trace_zero_basis(n: int) -> np.ndarray:
    """Orthonormal basis of symmetric trace-zero ``n x n`` matrices, shape ``(k, n, n)``."""
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            out.append(E)
    for i in range(1, n):
        # Helmert-style diagonal directions
        d = np.zeros(n)
        d[:i] = 1.0
        d[i] = -float(i)
        out.append(np.diag(d / np.linalg.norm(d)))
    return np.array(out).reshape(-1, n, n)


def _chol_ok(S) -> bool:
    try:
        np.linalg.cholesky(S)
        return True
    except np.linalg.LinAlgError:
        return False


def barrier_max_margin(F0s, Fks, y0, gap_tol: float = 1e-10, stop_above: float | None = None,
                       stop_below: float | None = None, max_newton: int = 2000):
    """Maximize ``t`` subject to ``F_j(y) - t I >= 0`` for affine symmetric blocks.

    ``F_j(y) = F0s[j] + sum_k y[k] * Fks[j][k]``. Path-following log-barrier
    with damped Newton centering; the feasible set in ``t`` must be bounded
    above, which holds for the trace-normalized problems in this module.

    Parameters
    ----------
    stop_above : float, optional
        Return as soon as a centered iterate has ``t`` above this value.
    stop_below : float, optional
        Return as soon as the upper bound on ``t`` drops below this value.

    Returns
    -------
    y, t, upper, newton_steps
        ``upper = t + m/s`` bounds the optimal margin from above at the last
        centered point (``m`` total block size, ``s`` barrier weight).
    """
    F0s = [np.asarray(F, dtype=float) for F in F0s]
    Cs = []
    for F0, Fk in zip(F0s, Fks):
        m = F0.shape[0]
        Fk = np.asarray(Fk, dtype=float).reshape(-1, m, m)
        Cs.append(np.concatenate([Fk, -np.eye(m)[None]], axis=0))
    m_tot = sum(F.shape[0] for F in F0s)
    y = np.asarray(y0, dtype=float).copy()
    K = y.size

    def blocks(z):
        return [F0 + np.tensordot(z[:K], C[:K], axes=1) - z[K] * np.eye(F0.shape[0])
                for F0, C in zip(F0s, Cs)]

    t0 = min(np.linalg.eigvalsh(F0 + np.tensordot(y, C[:K], axes=1))[0]
             for F0, C in zip(F0s, Cs)) - 1.0
    z = np.concatenate([y, [t0]])
    s = 1.0
    steps = 0

    def phi(z, s):
        val = -s * z[K]
        for G in blocks(z):
            L = np.linalg.cholesky(G)
            val -= 2.0 * np.sum(np.log(np.diag(L)))
        return val

    while True:
        for _ in range(100):
            g = np.zeros(K + 1)
            g[K] = -s
            H = np.zeros((K + 1, K + 1))
            for G, C in zip(blocks(z), Cs):
                Gi = np.linalg.inv(G)
                W = np.einsum("ab,kbc->kac", Gi, C)
                g -= np.einsum("kaa->k", W)
                H += np.einsum("kab,lba->kl", W, W)
            try:
                dz = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                dz = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec2 = float(-g @ dz)
            steps += 1
            if dec2 / 2.0 <= 1e-10 or steps >= max_newton:
                break
            f0 = phi(z, s)
            a = 1.0
            while a > 1e-14:
                zn = z + a * dz
                if all(_chol_ok(G) for G in blocks(zn)) and phi(zn, s) <= f0 - 0.25 * a * dec2:
                    break
                a *= 0.5
            else:
                break
            z = zn
        t = float(z[K])
        upper = t + m_tot / s
        if steps >= max_newton or m_tot / s <= gap_tol * max(1.0, abs(t)):
            return z[:K], t, upper, steps
        if stop_above is not None and t > stop_above:
            return z[:K], t, upper, steps
        if stop_below is not None and upper < stop_below:
            return z[:K], t, upper, steps
        s *= 8.0


def _descend(x, evaluate, project, max_iter, step):
    """Projected subgradient loop; ``evaluate(x) -> (phi, g)``."""
    best_x, best_phi = x, np.inf
    for k in range(1, max_iter + 1):
        phi, g = evaluate(x)
        if phi < best_phi:
            best_x, best_phi = x, phi
        if phi <= 0.0:
            return best_x, best_phi, k
        g = project(g)
        gn = np.linalg.norm(g)
        if gn == 0.0:
            break
        x = x - (step / np.sqrt(k)) * g / gn
    return best_x, best_phi, max_iter


def check_cqlf(closed_loops, floor: float = DEFAULT_FLOOR, max_iter: int = DEFAULT_MAX_ITER,
               step: float = 1.0, warm_start=None, method: str = "auto"):
    """Search for a common quadratic Lyapunov function.

    Parameters
    ----------
    method : {"auto", "subgradient", "barrier"}
        ``auto`` runs the subgradient search and falls back to the barrier
        method if it ends without a certificate.

    Returns
    -------
    CqlfCertificate or InfeasibleVerdict
    """
    if method not in ("auto", "subgradient", "barrier"):
        raise ValueError(f"unknown method {method!r}")
    Acl = _as_real_stack(closed_loops)
    n = Acl.shape[1]
    for A in Acl:
        if spectral_radius(A) >= 1.0:
            return InfeasibleVerdict("mode_unstable", np.inf, 0, heuristic=False)

    if warm_start is None:
        P0 = np.zeros((n, n))
        for A in Acl:
            Pi = discrete_lyapunov(A, np.eye(n)).real
            P0 += Pi * (n / np.trace(Pi))
        P0 /= len(Acl)
    else:
        P0 = np.asarray(warm_start, dtype=float)
        P0 = 0.5 * (P0 + P0.T) * (n / np.trace(P0))
    eye = np.eye(n)
    phi, iters = np.inf, 0

    if method != "barrier":
        def evaluate(P):
            lam, u = _min_eig(P)
            phi, g = floor - lam, -np.outer(u, u)
            for A in Acl:
                lam, u = _min_eig(P - A.T @ P @ A)
                if floor - lam > phi:
                    Au = A @ u
                    phi, g = floor - lam, -(np.outer(u, u) - np.outer(Au, Au))
            return phi, g

        def project(g):
            g = 0.5 * (g + g.T)
            return g - (np.trace(g) / n) * eye

        P, phi, iters = _descend(P0, evaluate, project, max_iter, step)
        if phi <= 0.0:
            try:
                return verify_cqlf(P, Acl, floor)
            except CertificateError:
                pass
        if method == "subgradient":
            return InfeasibleVerdict("budget_exhausted", float(phi), iters)

    # P = I + sum y_k S_k keeps trace(P) = n
    S = _trace_zero_basis(n)
    y0 = np.einsum("kab,ab->k", S, P0 - eye) if S.size else np.zeros(0)
    F0s = [eye] + [eye - A.T @ A for A in Acl]
    Fks = [S] + [S - np.einsum("ba,kbc,cd->kad", A, S, A) for A in Acl]
    y, t, upper, steps = barrier_max_margin(F0s, Fks, y0, stop_above=10.0 * floor, stop_below=floor)
    P = eye + np.tensordot(y, S, axes=1) if S.size else eye
    if t >= floor:
        try:
            return verify_cqlf(P, Acl, floor)
        except CertificateError:
            pass
    return InfeasibleVerdict("max_margin_below_floor", float(floor - upper), iters + steps,
                             best_margin=t)


def _block(A, b, X, Nrow):
    M = A @ X + np.outer(b, Nrow)
    return np.block([[X, M.T], [M, X]])


def implied_cqlf_floor(X, floor: float) -> float:
    """Decrease margin that block margins ``>= floor`` guarantee for ``P ∝ X^{-1}``.

    If the block is ``>= floor * I`` then ``X - M^T X^{-1} M >= floor * I``,
    hence ``X^{-1} - A^T X^{-1} A >= floor * X^{-2}``. Rescaling ``X^{-1}``
    to trace ``n`` multiplies this by ``n / trace(X^{-1})``.
    """
    w = np.linalg.eigvalsh(X)
    c = X.shape[0] / np.sum(1.0 / w)
    return float(floor * c / w[-1] ** 2)


def verify_synthesis(system: SwitchedSystem, X, N, floor: float = DEFAULT_FLOOR) -> SynthesisCertificate:
    """Recheck ``(X, N_i)`` and the CQLF ``x^T X^{-1} x`` it implies.

    The block margins are checked against ``floor``. The CQLF is checked by
    direct eigendecomposition against :func:`implied_cqlf_floor`, which can
    be far below ``floor`` when ``X`` is badly conditioned.

    Raises
    ------
    CertificateError
        If a block margin is below ``floor``, ``X`` is too ill conditioned
        to invert, or the implied CQLF fails its check.
    """
    X = np.asarray(X, dtype=float)
    X = 0.5 * (X + X.T)
    scale = X.shape[0] / np.trace(X)
    X = X * scale
    N = np.atleast_2d(np.asarray(N, dtype=float)) * scale
    As = system.As.real
    Bs = system.Bs.real
    margins = np.array([np.linalg.eigvalsh(_block(A, b, X, Nr))[0] for A, b, Nr in zip(As, Bs, N)])
    if np.linalg.eigvalsh(X)[0] < floor or margins.min() < floor:
        raise CertificateError(f"block margin {margins.min():.3e} below floor {floor:.1e}")
    cond = np.linalg.cond(X)
    if cond > COND_LIMIT:
        raise CertificateError(f"X is numerically singular (condition number {cond:.2e})")
    Xinv = np.linalg.inv(X)
    gains = N @ Xinv
    Acl = np.stack([A + np.outer(b, K) for A, b, K in zip(As, Bs, gains)])
    # half the guaranteed value, to absorb rounding in the inverse
    cert = verify_cqlf(Xinv, Acl, 0.5 * implied_cqlf_floor(X, float(margins.min())))
    return SynthesisCertificate(X, N, gains, margins, cert, floor)


def synthesize_lmi(system: SwitchedSystem, floor: float = DEFAULT_FLOOR,
                   max_iter: int = DEFAULT_MAX_ITER, step: float = 1.0, method: str = "auto"):
    """Search for gains and a CQLF jointly.

    Parameters
    ----------
    method : {"auto", "subgradient", "barrier"}
        As for :func:`check_cqlf`.

    Returns
    -------
    SynthesisCertificate or InfeasibleVerdict
    """
    if method not in ("auto", "subgradient", "barrier"):
        raise ValueError(f"unknown method {method!r}")
    if not system.is_real:
        raise ValueError("LMI synthesis needs real system data")
    As = system.As.real
    Bs = system.Bs.real
    n, N = system.n, system.N
    eye = np.eye(n)

    # warm start: X = I, N_i = least-squares deadbeat row
    N0 = np.stack([-(b @ A) / (b @ b) for A, b in zip(As, Bs)])
    phi, iters = np.inf, 0

    def unpack(x):
        return x[:n * n].reshape(n, n), x[n * n:].reshape(N, n)

    if method != "barrier":
        def evaluate(x):
            X, Nm = unpack(x)
            lam, u = _min_eig(X)
            phi = floor - lam
            gX, gN = -np.outer(u, u), np.zeros((N, n))
            for i, (A, b) in enumerate(zip(As, Bs)):
                lam, u = _min_eig(_block(A, b, X, Nm[i]))
                if floor - lam > phi:
                    u1, u2 = u[:n], u[n:]
                    At_u2 = A.T @ u2
                    gX = -(np.outer(u1, u1) + np.outer(u2, u2) + np.outer(At_u2, u1)
                           + np.outer(u1, At_u2))
                    gN = np.zeros((N, n))
                    gN[i] = -2.0 * (b @ u2) * u1
                    phi = floor - lam
            return phi, np.concatenate([gX.ravel(), gN.ravel()])

        def project(g):
            gX, gN = unpack(g)
            gX = 0.5 * (gX + gX.T)
            gX = gX - (np.trace(gX) / n) * eye
            return np.concatenate([gX.ravel(), gN.ravel()])

        x0 = np.concatenate([eye.ravel(), N0.ravel()])
        x, phi, iters = _descend(x0, evaluate, project, max_iter, step)
        if phi <= 0.0:
            X, Nm = unpack(x)
            try:
                return verify_synthesis(system, X, Nm, floor)
            except CertificateError:
                pass
        if method == "subgradient":
            return InfeasibleVerdict("budget_exhausted", float(phi), iters)

    # variables: X = I + sum a_k S_k, then the N*n entries of N
    S = _trace_zero_basis(n)
    kx = S.shape[0]
    Z = np.zeros((n, n))
    F0s = [eye]
    Fks = [np.concatenate([S, np.zeros((N * n, n, n))])]
    for i, (A, b) in enumerate(zip(As, Bs)):
        F0s.append(_block(A, b, eye, np.zeros(n)))
        dirs = [np.block([[Sk, (A @ Sk).T], [A @ Sk, Sk]]) for Sk in S]
        for j in range(N):
            for c in range(n):
                if j == i:
                    M = np.outer(b, eye[c])
                    dirs.append(np.block([[Z, M.T], [M, Z]]))
                else:
                    dirs.append(np.zeros((2 * n, 2 * n)))
        Fks.append(np.array(dirs))
    y0 = np.concatenate([np.zeros(kx), N0.ravel()])
    y, t, upper, steps = barrier_max_margin(F0s, Fks, y0, stop_above=10.0 * floor, stop_below=floor)
    X = eye + (np.tensordot(y[:kx], S, axes=1) if kx else 0.0)
    Nm = y[kx:].reshape(N, n)
    if t >= floor:
        try:
            return verify_synthesis(system, X, Nm, floor)
        except CertificateError:
            pass
    return InfeasibleVerdict("max_margin_below_floor", float(floor - upper), iters + steps,
                             best_margin=t)
