"""Approximate common-eigenvector assignment for single-input mode sets.

Given pairs ``(A_i, B_i)`` of dimension ``n_r``, find a unit vector ``v`` and
feedback rows ``F_i`` so that ``v`` is (nearly) an eigenvector of every
``A_i + B_i F_i`` with eigenvalue inside the disc of radius ``1 - eps_c``.
For fixed ``v`` the best ``F_i`` is a least-squares solution, so the search
is over ``v`` alone: minimize the residual cost ``J(v)`` subject to

* ``||v|| = 1``,
* ``||(A_i + B_i M_i(v)) v|| <= 1 - eps_c`` for every mode (stability),
* ``d(v, Im B_i) >= eps_d`` for every mode (keeps ``M_i`` well defined).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from . import kernels
from .model import StructuralError, distance_to_image

SINGULAR_FLOOR = 1e-12


class SingularFeedbackError(ValueError):
    """``v`` is too close to Im B for the least-squares feedback to exist."""


class CeaFailure(RuntimeError):
    """No point of the constraint set was found within the start budget.

    Attributes
    ----------
    reason : str
        ``"feasibility_search_exhausted"`` or ``"empty_constraint_set_witness"``
        (the latter when a dense grid over the 2-D sphere also found nothing).
    best_violation : float
        Smallest worst-constraint violation reached by any start.
    starts : int
        Number of starts tried.
    """

    def __init__(self, reason: str, best_violation: float, starts: int, grid_max_margin=None):
        self.reason = reason
        self.best_violation = float(best_violation)
        self.starts = int(starts)
        self.grid_max_margin = grid_max_margin
        msg = (f"{reason}: best worst-constraint violation {self.best_violation:.3e} "
               f"after {self.starts} starts")
        if grid_max_margin is not None:
            msg += f"; grid max margin {grid_max_margin:.3e}"
        super().__init__(msg)


@dataclass(frozen=True)
class CeaInputs:
    As: np.ndarray
    Bs: np.ndarray
    eps_c: float
    eps_d: float

    def __post_init__(self):
        As = np.array(self.As, dtype=complex)
        Bs = np.array(self.Bs, dtype=complex)
        if As.ndim != 3 or As.shape[1] != As.shape[2]:
            raise StructuralError(f"A stack must have shape (N, n_r, n_r), got {As.shape}")
        if Bs.ndim == 3 and Bs.shape[2] == 1:
            Bs = Bs[:, :, 0]
        if Bs.shape != As.shape[:2]:
            raise StructuralError(f"B stack must have shape {As.shape[:2]}, got {Bs.shape}")
        if As.shape[1] < 1 or As.shape[0] < 1:
            raise StructuralError("need n_r >= 1 and at least one mode")
        if not np.all(np.any(Bs != 0, axis=1)):
            raise StructuralError("every input column must be nonzero")
        if not 0 < self.eps_c <= 1:
            raise ValueError(f"eps_c must lie in (0, 1], got {self.eps_c}")
        if not self.eps_d > 0:
            raise ValueError(f"eps_d must be positive, got {self.eps_d}")
        As.setflags(write=False)
        Bs.setflags(write=False)
        object.__setattr__(self, "As", As)
        object.__setattr__(self, "Bs", Bs)

    @classmethod
    def from_pairs(cls, pairs: Sequence, eps_c: float, eps_d: float) -> "CeaInputs":
        As = [np.asarray(A, dtype=complex).reshape(np.shape(A)[0], -1) for A, _ in pairs]
        Bs = [np.asarray(B, dtype=complex).ravel() for _, B in pairs]
        return cls(np.stack(As), np.stack(Bs), eps_c, eps_d)

    @property
    def n_r(self) -> int:
        return self.As.shape[1]

    @property
    def N(self) -> int:
        return self.As.shape[0]

    @property
    def is_real(self) -> bool:
        return not (np.any(self.As.imag) or np.any(self.Bs.imag))

    def pairs(self):
        return [(self.As[i], self.Bs[i][:, None]) for i in range(self.N)]


@dataclass(frozen=True)
class CeaOptions:
    """Search settings.

    ``field`` selects the search space: ``"complex"`` searches C^n_r,
    ``"real"`` searches R^n_r only, and ``"auto"`` searches R^n_r first when
    the data are real and falls back to C^n_r if no real point is feasible.

    With ``prefer_interior`` the winner is the least-``J`` minimizer whose
    stability margins all exceed ``active_tol``; minimizers pressed against
    the stability boundary are used only when no other feasible one was found.
    Minimizers within ``j_tie`` of the least ``J`` count as tied and the one
    with the widest worst margin wins.

    With ``goal_attainment`` every start is descended twice: once from the
    first feasible point reached and once from the point maximizing the
    worst margin.
    """

    multistart: int = 32
    seed: int = 0
    field: str = "auto"
    feastol: float = 1e-9
    fd_step: float = 1e-7
    maxiter: int = 200
    phase1_cap: float = 1e-2
    goal_attainment: bool = True
    j_tie: float = 1e-10
    polish: bool = True
    active_tol: float = 1e-6
    prefer_interior: bool = True
    scalar_target: complex = 0.0
    grid_witness: bool = True
    grid_resolution: int = 100

    def __post_init__(self):
        if self.field not in ("auto", "complex", "real"):
            raise ValueError(f"unknown field {self.field!r}")
        if self.multistart < 0:
            raise ValueError("multistart must be nonnegative")


@dataclass(frozen=True)
class OptimizerTrace:
    starts_tried: int
    feasible_starts: int
    best_start: int
    iterations: int
    field: str
    active_stability_constraint: bool
    grid_max_margin: float | None = None


@dataclass(frozen=True)
class CeaSolution:
    v: np.ndarray
    F: tuple[np.ndarray, ...]
    lambdas: np.ndarray
    residual: float
    s2_margins: np.ndarray
    s3_margins: np.ndarray
    trace: OptimizerTrace

    @property
    def min_margin(self) -> float:
        return float(min(self.s2_margins.min(), self.s3_margins.min()))


@dataclass(frozen=True)
class Membership:
    in_S1: bool
    s2_margins: np.ndarray
    s3_margins: np.ndarray
    feastol: float = 0.0

    @property
    def feasible(self) -> bool:
        return (self.in_S1 and bool(np.all(self.s2_margins >= -self.feastol))
                and bool(np.all(self.s3_margins >= -self.feastol)))


# -- matrix-form operations ---------------------------------------------------

def _column(B) -> np.ndarray:
    B = np.asarray(B, dtype=complex)
    return B.reshape(-1, 1)


def residual_terms(v, A, B):
    """Return ``E = (vv* - I) A`` and ``H = (vv* - I) B``."""
    v = np.asarray(v, dtype=complex).reshape(-1, 1)
    Pm = v @ v.conj().T - np.eye(v.shape[0])
    return Pm @ np.asarray(A, dtype=complex), Pm @ _column(B)


def optimal_feedback(v, A, B, floor: float = SINGULAR_FLOOR) -> np.ndarray:
    """Least-squares feedback row ``M(v) = -(H*H)^{-1} H* E``."""
    E, H = residual_terms(v, A, B)
    hn = np.linalg.norm(H)
    if hn < floor:
        raise SingularFeedbackError(
            f"||(vv* - I) B|| = {hn:.3e} is below {floor:.1e}; v lies (numerically) in Im B")
    return -np.linalg.solve(H.conj().T @ H, H.conj().T @ E)


def closed_loop_map(v, A, B, floor: float = SINGULAR_FLOOR) -> np.ndarray:
    return np.asarray(A, dtype=complex) + _column(B) @ optimal_feedback(v, A, B, floor)


def cost(v, inputs: CeaInputs, floor: float = SINGULAR_FLOOR) -> float:
    v = np.asarray(v, dtype=complex).ravel()
    total = 0.0
    for A, B in inputs.pairs():
        E, H = residual_terms(v, A, B)
        M = optimal_feedback(v, A, B, floor)
        r = (E + H @ M) @ v
        total += float(np.vdot(r, r).real)
    return total


def constraint_membership(v, inputs: CeaInputs, feastol: float = 0.0,
                          floor: float = SINGULAR_FLOOR) -> Membership:
    """Margins of ``v`` with respect to the stability and distance constraints.

    A stability margin for a mode whose Im B contains ``v`` is reported as the
    large negative sentinel ``(1 - eps_c) - SINGULAR_NORM`` instead of raising.
    """
    v = np.asarray(v, dtype=complex).ravel()
    in_S1 = abs(np.linalg.norm(v) - 1.0) <= 1e-12
    s2, s3 = [], []
    for A, B in inputs.pairs():
        try:
            clv = closed_loop_map(v, A, B, floor) @ v
            s2.append((1.0 - inputs.eps_c) - min(np.linalg.norm(clv), kernels.SINGULAR_NORM))
        except SingularFeedbackError:
            s2.append((1.0 - inputs.eps_c) - kernels.SINGULAR_NORM)
        s3.append(distance_to_image(v, B) - inputs.eps_d)
    return Membership(bool(in_S1), np.array(s2), np.array(s3), feastol)


def phase_normalize(v) -> np.ndarray:
    """Rotate ``v`` so its largest-magnitude entry is real and nonnegative."""
    v = np.asarray(v, dtype=complex).ravel()
    k = int(np.argmax(np.abs(v)))
    if v[k] == 0:
        return v.copy()
    return v * (np.conj(v[k]) / abs(v[k]))


# -- search -------------------------------------------------------------------

class _Objective:
    """Cached batch evaluation of cost and margins in real coordinates.

    ``x`` holds ``[Re v, Im v]`` for complex search and ``v`` for real search;
    the kernel normalizes, so all quantities are scale invariant in ``x``.
    """

    def __init__(self, inputs: CeaInputs, real: bool, step: float):
        self.As = np.ascontiguousarray(inputs.As)
        self.Bs = np.ascontiguousarray(inputs.Bs)
        self.n = inputs.n_r
        self.N = inputs.N
        self.real = real
        self.dim = self.n if real else 2 * self.n
        self.step = step
        self.bound = 1.0 - inputs.eps_c
        self.eps_d = inputs.eps_d
        self._key = None
        self._cache = None
        self.evals = 0

    def to_complex(self, X):
        X = np.atleast_2d(X)
        if self.real:
            return X.astype(complex)
        return X[:, :self.n] + 1j * X[:, self.n:]

    def from_complex(self, v):
        v = np.asarray(v, dtype=complex).ravel()
        if self.real:
            return v.real.copy()
        return np.concatenate([v.real, v.imag])

    def batch(self, X):
        self.evals += len(np.atleast_2d(X))
        J, cl, dist, R = kernels.cea_eval(self.to_complex(X), self.As, self.Bs,
                                          SINGULAR_FLOOR ** 2)
        margins = np.concatenate([self.bound - cl, dist - self.eps_d], axis=1)
        return J, margins, R

    def _eval(self, x):
        key = x.tobytes()
        if key != self._key:
            h = self.step * max(1.0, float(np.linalg.norm(x)))
            eye = np.eye(self.dim) * h
            X = np.vstack([x, x + eye, x - eye])
            J, M, _ = self.batch(X)
            d = self.dim
            gJ = (J[1:d + 1] - J[d + 1:]) / (2 * h)
            gM = ((M[1:d + 1] - M[d + 1:]) / (2 * h)).T
            self._key = key
            self._cache = (J[0], M[0], gJ, gM)
        return self._cache

    def J(self, x):
        return self._eval(x)[0]

    def dJ(self, x):
        return self._eval(x)[2]

    def margins(self, x):
        return self._eval(x)[1]

    def dmargins(self, x):
        return self._eval(x)[3]

    def residuals(self, x):
        _, _, R = self.batch(x[None, :])
        R = R[0].ravel()
        return np.concatenate([R.real, R.imag])

    def residual_jac(self, x):
        h = self.step * max(1.0, float(np.linalg.norm(x)))
        eye = np.eye(self.dim) * h
        _, _, R = self.batch(np.vstack([x + eye, x - eye]))
        R = R.reshape(2 * self.dim, -1)
        R = np.concatenate([R.real, R.imag], axis=1)
        return ((R[:self.dim] - R[self.dim:]) / (2 * h)).T


def _unit(x):
    return x / np.linalg.norm(x)


def _feasibility_phase(obj: _Objective, x0, opts: CeaOptions, full: bool = False):
    """Raise the worst margin starting from ``x0``.

    By default this stops once the worst margin reaches ``opts.phase1_cap``
    and returns feasible starts untouched. With ``full`` it runs goal
    attainment to the local maximizer of the worst margin.
    Returns ``(x, worst margin, iterations)``.
    """
    d = obj.dim
    m0 = float(obj.margins(x0).min())
    if not full and m0 >= -opts.feastol:
        return x0, m0, 0
    cap = 1.0 if full else opts.phase1_cap

    def fun(z):
        return -z[-1]

    def jac(z):
        g = np.zeros_like(z)
        g[-1] = -1.0
        return g

    def ineq(z):
        return obj.margins(z[:d]) - z[-1]

    def ineq_jac(z):
        Jm = obj.dmargins(z[:d])
        return np.hstack([Jm, -np.ones((Jm.shape[0], 1))])

    def eq(z):
        return np.array([z[:d] @ z[:d] - 1.0])

    def eq_jac(z):
        return np.concatenate([2 * z[:d], [0.0]])[None, :]

    z0 = np.concatenate([x0, [min(m0, cap)]])
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Values in x were outside bounds")
        res = minimize(fun, z0, jac=jac, method="SLSQP",
                       bounds=[(None, None)] * d + [(None, cap)],
                       constraints=[{"type": "ineq", "fun": ineq, "jac": ineq_jac},
                                    {"type": "eq", "fun": eq, "jac": eq_jac}],
                       options={"maxiter": opts.maxiter, "ftol": 1e-15})
    x = _unit(res.x[:d])
    worst = float(obj.margins(x).min())
    if worst < m0:
        x, worst = x0, m0
    return x, worst, int(res.nit)


def _descent_phase(obj: _Objective, x0, opts: CeaOptions):
    """Minimize J from a feasible ``x0`` keeping all margins nonnegative."""
    res = minimize(obj.J, x0, jac=obj.dJ, method="SLSQP",
                   constraints=[{"type": "ineq", "fun": obj.margins, "jac": obj.dmargins},
                                {"type": "eq", "fun": lambda x: np.array([x @ x - 1.0]),
                                 "jac": lambda x: 2 * x[None, :]}],
                   options={"maxiter": opts.maxiter, "ftol": 1e-16})
    x, J, it = x0, obj.J(x0), int(res.nit)
    xr = _unit(res.x)
    if obj.margins(xr).min() >= -opts.feastol and obj.J(xr) <= J:
        x, J = xr, obj.J(xr)
    if opts.polish and J > 0.0:
        lm = least_squares(obj.residuals, x, jac=obj.residual_jac, method="lm",
                           xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=50 * obj.dim)
        xp = _unit(lm.x)
        if obj.margins(xp).min() >= -opts.feastol and obj.J(xp) < J:
            x, J = xp, obj.J(xp)
        it += int(lm.nfev)
    return x, float(J), it


def _starts(inputs: CeaInputs, opts: CeaOptions, real: bool, rng) -> list[np.ndarray]:
    n = inputs.n_r
    starts = []
    for A, b in zip(inputs.As, inputs.Bs):
        w, V = np.linalg.eig(A)
        u = V[:, int(np.argmax(np.abs(w)))]
        if real:
            u = u.real if np.linalg.norm(u.real) >= np.linalg.norm(u.imag) else u.imag
            u = u.astype(complex)
        if np.linalg.norm(u) == 0:
            continue
        u = u / np.linalg.norm(u)
        for bj in inputs.Bs:
            if distance_to_image(u, bj) < inputs.eps_d:
                u = u - bj * (np.vdot(bj, u) / np.vdot(bj, bj))
                if np.linalg.norm(u) < 1e-8:
                    break
                u = u / np.linalg.norm(u)
        if np.linalg.norm(u) >= 1e-8:
            starts.append(u)
    m = opts.multistart
    if real:
        Z = rng.standard_normal((m, n)).astype(complex)
    else:
        half = (m + 1) // 2
        W = rng.standard_normal((half, n)) + 1j * rng.standard_normal((half, n))
        Z = np.empty((2 * half, n), dtype=complex)
        Z[0::2], Z[1::2] = W, W.conj()
        Z = Z[:m]
    starts.extend(z / np.linalg.norm(z) for z in Z)
    return starts


def grid_scan(inputs: CeaInputs, resolution: int = 100):
    """Worst-constraint margin on a grid over the unit sphere of C^2.

    Membership depends on ``v`` only through ``vv*``, so the grid covers the
    phase-fixed parameterization ``v = (cos t, sin t e^{j p})`` with
    ``t`` in [0, pi/2] and ``p`` in [0, 2 pi).

    Returns
    -------
    best : float
        Largest worst-margin found on the grid.
    v_best : ndarray
        Grid point attaining it.
    """
    if inputs.n_r != 2:
        raise ValueError("grid scan is only available for n_r = 2")
    t = np.linspace(0.0, np.pi / 2, resolution)
    p = np.linspace(0.0, 2 * np.pi, resolution, endpoint=False)
    T, Pp = np.meshgrid(t, p, indexing="ij")
    V = np.stack([np.cos(T).ravel() + 0j, np.sin(T).ravel() * np.exp(1j * Pp.ravel())], axis=1)
    _, cl, dist, _ = kernels.cea_eval(V, inputs.As, inputs.Bs, SINGULAR_FLOOR ** 2)
    worst = np.minimum(((1.0 - inputs.eps_c) - cl).min(axis=1), (dist - inputs.eps_d).min(axis=1))
    k = int(np.argmax(worst))
    return float(worst[k]), V[k]


def _select(cands, opts: CeaOptions):
    """Pick ``(x, J, k)`` from ``(x, J, worst, interior, k)`` candidates."""
    if not cands:
        return None
    if opts.prefer_interior and any(c[3] for c in cands):
        cands = [c for c in cands if c[3]]
    jmin = min(c[1] for c in cands)
    tied = [c for c in cands if c[1] <= jmin + opts.j_tie]
    # widest margin first, then earliest start
    x, J, _, _, k = max(tied, key=lambda c: (c[2], -c[4]))
    return x, J, k


def _search(inputs: CeaInputs, opts: CeaOptions, real: bool, extra_starts=()):
    obj = _Objective(inputs, real, opts.fd_step)
    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, inputs.n_r, int(real)]))
    starts = _starts(inputs, opts, real, rng) + list(extra_starts)
    cands = []
    best_violation = math.inf
    feasible, iters = 0, 0
    n = inputs.N
    modes = (False, True) if opts.goal_attainment else (False,)
    for k, u in enumerate(starts):
        x0 = obj.from_complex(u)
        hit = False
        for full in modes:
            x1, worst, it = _feasibility_phase(obj, x0, opts, full)
            iters += it
            best_violation = min(best_violation, max(0.0, -worst))
            if worst < -opts.feastol:
                continue
            hit = True
            x2, J, it = _descent_phase(obj, x1, opts)
            iters += it
            m = obj.margins(x2)
            cands.append((x2, J, float(m.min()), bool(m[:n].min() >= opts.active_tol), k))
        feasible += hit
    return _select(cands, opts), best_violation, len(starts), feasible, iters, obj


def _scalar_solution(inputs: CeaInputs, opts: CeaOptions) -> CeaSolution:
    target = complex(opts.scalar_target)
    if abs(target) > 1.0 - inputs.eps_c:
        raise ValueError(f"scalar closed-loop target {target} violates |a| <= 1 - eps_c")
    a = inputs.As[:, 0, 0]
    b = inputs.Bs[:, 0]
    F = tuple(np.array([[(target - ai) / bi]]) for ai, bi in zip(a, b))
    lambdas = np.full(inputs.N, target, dtype=complex)
    s2 = np.full(inputs.N, (1.0 - inputs.eps_c) - abs(target))
    s3 = np.full(inputs.N, -inputs.eps_d)
    trace = OptimizerTrace(0, 0, -1, 0, "scalar", False)
    return CeaSolution(np.ones(1, dtype=complex), F, lambdas, 0.0, s2, s3, trace)


def run_cea(inputs: CeaInputs, opts: CeaOptions | None = None) -> CeaSolution:
    """Find the approximately assignable common eigenvector of least residual.

    For ``n_r = 1`` every scalar closed loop is directly assignable and the
    result is ``v = 1`` with each closed loop set to ``opts.scalar_target``
    (deadbeat by default); the distance constraint is vacuous there, so the
    reported distance margins are not meaningful.

    For ``n_r > 1`` each start first climbs to a feasible point by raising
    the worst margin, then minimizes ``J`` under the constraints. The feasible
    local minimizer of least ``J`` wins; see :class:`CeaOptions` for the
    interior preference and tie rule.

    Raises
    ------
    CeaFailure
        If no start reaches the constraint set.
    """
    opts = opts or CeaOptions()
    if inputs.n_r == 1:
        return _scalar_solution(inputs, opts)

    fields = {"real": [True], "complex": [False]}.get(opts.field)
    if fields is None:
        fields = [True, False] if inputs.is_real else [False]
    if any(fields) and not inputs.is_real:
        raise ValueError("real search requested on complex data")

    tried, best_violation, grid_best = 0, math.inf, None
    for real in fields:
        best, viol, n_starts, n_feas, iters, obj = _search(inputs, opts, real)
        tried += n_starts
        best_violation = min(best_violation, viol)
        if best is None and opts.grid_witness and inputs.n_r == 2 and not real:
            grid_best, v_grid = grid_scan(inputs, opts.grid_resolution)
            if grid_best >= -opts.feastol:
                best, viol, n2, n_feas, it2, obj = _search(
                    inputs, replace(opts, multistart=0), real, [v_grid])
                tried += n2
                iters += it2
        if best is not None:
            break
    else:
        reason = "feasibility_search_exhausted"
        if grid_best is not None and grid_best < -opts.feastol:
            reason = "empty_constraint_set_witness"
        raise CeaFailure(reason, best_violation, tried, grid_best)

    x, J, k = best
    v = phase_normalize(_unit(obj.to_complex(x)[0]))
    if real:
        v = v.real.astype(complex)
    F = tuple(optimal_feedback(v, A, B) for A, B in inputs.pairs())
    lambdas = np.array([np.vdot(v, (A + B @ Fi) @ v) for (A, B), Fi in zip(inputs.pairs(), F)])
    mem = constraint_membership(v, inputs, opts.feastol)
    trace = OptimizerTrace(
        starts_tried=tried, feasible_starts=n_feas, best_start=k, iterations=iters,
        field="real" if real else "complex",
        active_stability_constraint=bool(mem.s2_margins.min() < opts.active_tol),
        grid_max_margin=grid_best)
    return CeaSolution(v, F, lambdas, cost(v, inputs), mem.s2_margins, mem.s3_margins, trace)
