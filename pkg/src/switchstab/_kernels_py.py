"""Pure-numpy versions of the hot kernels.

Signatures and outputs match the compiled ``_kernels`` extension exactly; the
dispatcher in :mod:`switchstab.kernels` picks one at import time.
"""

import numpy as np

# Closed-loop norm reported when v (numerically) lies in Im B.
SINGULAR_NORM = 1.0e3


def cea_eval(V, A, B, floor):
    """Evaluate the eigenvector-assignment residuals for a batch of vectors.

    Each row of ``V`` is normalized before use, so the outputs are invariant
    to the scale of the rows.

    Parameters
    ----------
    V : (k, n) complex array
        Candidate vectors, one per row.
    A : (N, n, n) complex array
        Mode state matrices.
    B : (N, n) complex array
        Mode input columns.
    floor : float
        Threshold on ``||(I - vv*) B_i||^2`` below which v is treated as
        lying in Im B_i.

    Returns
    -------
    J : (k,) float array
        Residual cost, sum over modes of ``||r_i||^2``.
    clnorm : (k, N) float array
        ``||(A_i + B_i M_i(v)) v||``, clipped at ``SINGULAR_NORM``.
    dist : (k, N) float array
        Distance from v to the line Im B_i.
    R : (k, N, n) complex array
        Residual vectors ``r_i = (vv* - I)(A_i + B_i M_i(v)) v``.
    """
    V = np.asarray(V, dtype=complex)
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    norms = np.sqrt(np.einsum("kj,kj->k", V.conj(), V).real)
    v = V / norms[:, None]

    a = np.einsum("imn,kn->kim", A, v)                       # A_i v
    c = np.einsum("kn,kin->ki", v.conj(), a)                 # v* A_i v
    pa = a - c[:, :, None] * v[:, None, :]                   # (I - vv*) A_i v
    bv = np.einsum("kn,in->ki", v.conj(), B)                 # v* B_i
    h = B[None, :, :] - bv[:, :, None] * v[:, None, :]       # (I - vv*) B_i
    hh = np.einsum("kin,kin->ki", h.conj(), h).real
    singular = hh <= floor
    safe = np.where(singular, 1.0, hh)
    g = np.einsum("kin,kin->ki", h.conj(), pa) / safe
    g = np.where(singular, 0.0, g)

    R = -(pa - g[:, :, None] * h)
    J = np.einsum("kin,kin->k", R.conj(), R).real

    cl = a - g[:, :, None] * B[None, :, :]
    clnorm = np.sqrt(np.einsum("kin,kin->ki", cl.conj(), cl).real)
    clnorm = np.where(singular, SINGULAR_NORM, np.minimum(clnorm, SINGULAR_NORM))

    bb = np.einsum("in,in->i", B.conj(), B).real
    proj = bv.conj() / bb[None, :]                           # (B* v) / B*B
    resid = v[:, None, :] - proj[:, :, None] * B[None, :, :]
    dist = np.sqrt(np.einsum("kin,kin->ki", resid.conj(), resid).real)
    return J, clnorm, dist, R


def rollout(Acl, x0, seq):
    """Iterate ``x_{k+1} = Acl[seq[k]] x_k`` and return all states."""
    Acl = np.asarray(Acl, dtype=float)
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size and (seq.min() < 0 or seq.max() >= Acl.shape[0]):
        bad = seq[(seq < 0) | (seq >= Acl.shape[0])][0]
        raise IndexError(f"mode index {bad} out of range")
    states = np.empty((len(seq) + 1, Acl.shape[1]))
    states[0] = x0
    for k, i in enumerate(seq):
        states[k + 1] = Acl[i] @ states[k]
    return states


def greedy_rollout(Acl, x0, horizon, P):
    """Worst-case one-step adversary: pick the mode maximizing ``x'^T P x'``.

    Ties go to the lowest mode index.
    """
    Acl = np.asarray(Acl, dtype=float)
    P = np.asarray(P, dtype=float)
    n = Acl.shape[1]
    states = np.empty((horizon + 1, n))
    seq = np.empty(horizon, dtype=np.int64)
    states[0] = x0
    for k in range(horizon):
        cand = Acl @ states[k]
        vals = np.einsum("in,nm,im->i", cand, P, cand)
        i = int(np.argmax(vals))
        seq[k] = i
        states[k + 1] = cand[i]
    return seq, states
