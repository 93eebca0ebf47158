"""Trajectory rollouts of closed-loop switched systems and adversarial stress tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import kernels
from .model import spectral_radius

DEFAULT_HORIZON = 1000
DEFAULT_WORD_CAP = 2 ** 14
# below this norm a state is treated as zero; its entries may be subnormal
TINY_NORM = 1e-290


@dataclass(frozen=True)
class RandomSwitching:
    """Modes drawn uniformly and independently from a seeded generator."""

    seed: int = 0


@dataclass(frozen=True)
class PeriodicSwitching:
    """Repeat ``pattern`` (0-based mode indices) for the whole horizon."""

    pattern: tuple[int, ...]


@dataclass(frozen=True)
class AdversarialSwitching:
    """Greedy one-step maximization of ``x^T P x`` (``P = I`` when omitted)."""

    P: np.ndarray | None = None


SwitchingSource = Union[Sequence[int], np.ndarray, RandomSwitching, PeriodicSwitching,
                        AdversarialSwitching]


@dataclass(frozen=True)
class SwitchingTrace:
    """Result of one rollout; ``sequence`` holds 0-based mode indices."""

    sequence: np.ndarray
    states: np.ndarray
    lyapunov: np.ndarray | None
    decay_rate: float
    P: np.ndarray | None = None

    def recheck(self, closed_loops) -> float:
        """Largest deviation of ``states[k+1]`` from ``A[seq[k]] @ states[k]``."""
        Acl = _stack(closed_loops)
        if len(self.sequence) == 0:
            return 0.0
        pred = np.einsum("kij,kj->ki", Acl[self.sequence], self.states[:-1])
        return float(np.max(np.abs(pred - self.states[1:])))

    def lyapunov_ratios(self) -> np.ndarray:
        """``V(x_{k+1}) / V(x_k)`` per step, evaluated on ``x_k / ||x_k||``.

        Scaling both states by ``||x_k||`` avoids the underflow that ``V``
        itself suffers on long decaying runs. Steps starting from a state
        with norm below ``TINY_NORM`` give ``nan``.
        """
        if self.P is None:
            raise ValueError("trace carries no Lyapunov matrix")
        X = self.states
        nrm = np.linalg.norm(X[:-1], axis=1)
        ok = nrm >= TINY_NORM
        out = np.full(len(nrm), np.nan)
        a = X[:-1][ok] / nrm[ok, None]
        b = X[1:][ok] / nrm[ok, None]
        va = np.einsum("ki,ij,kj->k", a, self.P, a)
        vb = np.einsum("ki,ij,kj->k", b, self.P, b)
        out[ok] = vb / va
        return out

    def strictly_decreasing(self) -> bool:
        """True when ``V`` drops at every step taken from a (numerically) nonzero state."""
        r = self.lyapunov_ratios()
        r = r[~np.isnan(r)]
        return bool(np.all(r < 1.0))


def _stack(closed_loops) -> np.ndarray:
    Acl = np.asarray([np.asarray(A) for A in closed_loops])
    if Acl.ndim != 3 or Acl.shape[1] != Acl.shape[2]:
        raise ValueError(f"closed loops must be square and of equal size, got {Acl.shape}")
    if np.iscomplexobj(Acl):
        if np.any(Acl.imag):
            raise ValueError("rollouts need real closed loops; realify complex data first")
        Acl = Acl.real
    return np.ascontiguousarray(Acl, dtype=float)


def default_x0(n: int) -> np.ndarray:
    return np.ones(n) / np.sqrt(n)


def decay_rate(states) -> float:
    """Geometric rate fitted to ``log ||x_k||`` by least squares.

    Only the prefix before the first (numerically) zero state is used;
    returns 0 when that prefix has fewer than two states.
    """
    norms = np.linalg.norm(np.asarray(states), axis=1)
    small = np.flatnonzero(norms < TINY_NORM)
    end = int(small[0]) if small.size else norms.size
    if end < 2:
        return 0.0
    slope = np.polyfit(np.arange(end), np.log(norms[:end]), 1)[0]
    return float(np.exp(slope))


def _finish(seq, states, P) -> SwitchingTrace:
    lyap = None
    if P is not None:
        P = np.asarray(P, dtype=float)
        lyap = np.einsum("ki,ij,kj->k", states, P, states)
    return SwitchingTrace(np.asarray(seq, dtype=np.int64), states, lyap, decay_rate(states), P)


def rollout(closed_loops, x0=None, switching: SwitchingSource = RandomSwitching(),
            horizon: int = DEFAULT_HORIZON, P=None) -> SwitchingTrace:
    """Iterate ``x_{k+1} = A_{i(k)} x_k``.

    Parameters
    ----------
    switching
        An explicit sequence of 0-based indices (its length overrides
        ``horizon``), or a :class:`RandomSwitching`, :class:`PeriodicSwitching`
        or :class:`AdversarialSwitching` source.
    P : array, optional
        When given, ``lyapunov`` holds ``x_k^T P x_k``.

    Raises
    ------
    IndexError
        If an explicit or periodic index is out of range.
    """
    Acl = _stack(closed_loops)
    N, n = Acl.shape[0], Acl.shape[1]
    x0 = default_x0(n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x0.size != n:
        raise ValueError(f"x0 has length {x0.size}, closed loops are {n} x {n}")
    if isinstance(switching, AdversarialSwitching):
        return adversarial_switch(Acl, x0, horizon, switching.P, P)
    if isinstance(switching, RandomSwitching):
        seq = np.random.default_rng(switching.seed).integers(0, N, size=horizon)
    elif isinstance(switching, PeriodicSwitching):
        if not switching.pattern:
            raise ValueError("periodic pattern is empty")
        seq = np.resize(np.asarray(switching.pattern, dtype=np.int64), horizon)
    else:
        seq = np.asarray(switching, dtype=np.int64).ravel()
    states = kernels.rollout(Acl, x0, seq)
    return _finish(seq, states, P)


def adversarial_switch(closed_loops, x0=None, horizon: int = DEFAULT_HORIZON, P=None,
                       P_report=None) -> SwitchingTrace:
    """Greedy adversary: pick the mode maximizing ``x_{k+1}^T P x_{k+1}``.

    Ties go to the lowest mode index. ``lyapunov`` is reported under
    ``P_report`` if given, else under ``P`` when that is given.
    """
    Acl = _stack(closed_loops)
    n = Acl.shape[1]
    x0 = default_x0(n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x0.size != n:
        raise ValueError(f"x0 has length {x0.size}, closed loops are {n} x {n}")
    Pg = np.eye(n) if P is None else np.asarray(P, dtype=float)
    seq, states = kernels.greedy_rollout(Acl, x0, int(horizon), Pg)
    return _finish(seq, states, P_report if P_report is not None else P)


def certified_decrease_factor(P, margin: float) -> float:
    """Per-step bound ``V(x_{k+1}) <= (1 - margin / lambda_max(P)) V(x_k)``."""
    return float(1.0 - margin / np.linalg.eigvalsh(np.asarray(P, dtype=float))[-1])


def _check_words(N: int, horizon: int, cap: int) -> None:
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if N ** horizon > cap:
        raise ValueError(f"{N}^{horizon} = {N ** horizon} words exceed the enumeration cap {cap}; "
                         "use a smaller horizon")


def _products(Acl: np.ndarray, horizon: int):
    """Yield ``(word, A_{w_H} ... A_{w_1})`` for every word, sharing prefixes."""
    N, n = Acl.shape[0], Acl.shape[1]
    stack = [((), np.eye(n))]
    while stack:
        word, M = stack.pop()
        if len(word) == horizon:
            yield word, M
            continue
        for i in range(N - 1, -1, -1):
            stack.append((word + (i,), Acl[i] @ M))


def product_radius_lower_bound(closed_loops, horizon: int, cap: int = DEFAULT_WORD_CAP) -> float:
    """``max_w rho(A_{w_H} ... A_{w_1})^{1/H}``, a lower bound on the joint spectral radius.

    Raises
    ------
    ValueError
        If ``N**horizon`` exceeds ``cap``.
    """
    Acl = _stack(closed_loops)
    _check_words(Acl.shape[0], horizon, cap)
    best = max(spectral_radius(M) for _, M in _products(Acl, horizon))
    return float(best ** (1.0 / horizon))


def product_norm_upper_bound(closed_loops, horizon: int, cap: int = DEFAULT_WORD_CAP) -> float:
    """``max_w ||A_{w_H} ... A_{w_1}||_2^{1/H}``, an upper bound on the joint spectral radius."""
    Acl = _stack(closed_loops)
    _check_words(Acl.shape[0], horizon, cap)
    best = max(np.linalg.norm(M, 2) for _, M in _products(Acl, horizon))
    return float(best ** (1.0 / horizon))


def worst_word(closed_loops, horizon: int, cap: int = DEFAULT_WORD_CAP):
    """Exhaustive search for the word of length ``horizon`` with largest product radius.

    Returns ``(word, rho)`` with ``rho`` the unnormalized spectral radius.
    """
    Acl = _stack(closed_loops)
    _check_words(Acl.shape[0], horizon, cap)
    word, rho = (), -1.0
    for w, M in _products(Acl, horizon):
        r = spectral_radius(M)
        if r > rho:
            word, rho = w, r
    return word, float(rho)


def all_words(N: int, horizon: int):
    """All mode words of the given length in lexicographic order."""
    return itertools.product(range(N), repeat=horizon)
