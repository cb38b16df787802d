"""Independent reference routes used to cross-check the production propagators.

Nothing here is used on the production path; these are slow, dense and simple.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .hilbert import UP, DensityOp, OperatorMatrix, PureState


def liouvillian(H: np.ndarray, collapse: Sequence[np.ndarray]) -> np.ndarray:
    """Superoperator acting on row-major vec(rho)."""
    d = H.shape[0]
    eye = np.eye(d)
    # row-major vec: vec(A X B) = kron(A, B^T) vec(X)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for c in collapse:
        cdc = c.conj().T @ c
        L += np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
    return L


def lindblad_expm_p_up(H: OperatorMatrix, collapse: Sequence[OperatorMatrix], rho0: DensityOp,
                       times) -> np.ndarray:
    """Excited-state population from exp(L t) vec(rho0), one dense exponential per time."""
    d = rho0.space.dim
    L = liouvillian(H.matrix, [c.matrix for c in collapse])
    v0 = np.asarray(rho0.matrix).reshape(-1)
    up = rho0.space.level_mask(UP)
    out = []
    for t in np.atleast_1d(times):
        rho = (expm(L * t) @ v0).reshape(d, d)
        out.append(float(np.real(np.trace(rho[np.ix_(up, up)]))))
    return np.array(out)


def _sector_labels(space) -> np.ndarray:
    """Total excitation number n1 + n2 + [e == up] for every basis index."""
    labels = []
    for i in range(space.dim):
        e, n1, n2 = space.label(i)
        labels.append(n1 + n2 + (1 if e == UP else 0) + (1000 * e if e > UP else 0))
    return np.array(labels)


def lindblad_expm_sectors_p_up(H: OperatorMatrix, collapse: Sequence[OperatorMatrix],
                               rho0: DensityOp, times) -> np.ndarray:
    """Same as :func:`lindblad_expm_p_up` but exponentiates one excitation-sector
    pair at a time. Valid only for number-conserving H and diagonal collapse
    operators, which is the model used throughout; lets the oracle reach
    spaces too large for a single dense Liouvillian.
    """
    space = rho0.space
    lab = _sector_labels(space)
    sectors = [np.flatnonzero(lab == k) for k in np.unique(lab)]
    Hm = H.matrix
    cs = [c.matrix for c in collapse]
    rho0m = np.asarray(rho0.matrix)
    up = space.level_mask(UP)
    times = np.atleast_1d(times)
    out = np.zeros(len(times))
    for s in sectors:
        sub_up = up[s]
        if not np.any(sub_up):
            continue
        block = rho0m[np.ix_(s, s)]
        if not np.any(block):
            continue
        L = liouvillian(Hm[np.ix_(s, s)], [c[np.ix_(s, s)] for c in cs])
        v0 = block.reshape(-1)
        for k, t in enumerate(times):
            r = (expm(L * t) @ v0).reshape(len(s), len(s))
            out[k] += float(np.real(np.trace(r[np.ix_(sub_up, sub_up)])))
    return out


def unitary_expm_p_up(H: OperatorMatrix, state: PureState, times) -> np.ndarray:
    up = state.space.level_mask(UP)
    out = []
    for t in np.atleast_1d(times):
        psi = expm(-1j * H.matrix * t) @ state.amplitudes
        out.append(float(np.sum(np.abs(psi[up]) ** 2)))
    return np.array(out)


def ladder_collective_state(N: int, n: int) -> np.ndarray:
    """|psi_n^N> built as b^dag^n d^dag^(N-n) |0,0> / sqrt(n! (N-n)!) with
    b = (a1 + a2)/sqrt(2), d = (a2 - a1)/sqrt(2), returned as an (N+1)x(N+1)
    motional array indexed [n1, n2]."""
    from math import factorial

    dim = N + 1
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    eye = np.eye(dim)
    a1, a2 = np.kron(a, eye), np.kron(eye, a)
    bd = (a1 + a2).T / np.sqrt(2)
    dd = (a2 - a1).T / np.sqrt(2)
    v = np.zeros(dim * dim)
    v[0] = 1.0
    for _ in range(N - n):
        v = dd @ v
    for _ in range(n):
        v = bd @ v
    v /= np.sqrt(factorial(n) * factorial(N - n))
    return v.reshape(dim, dim)


def sector_p_up_function(H: OperatorMatrix, collapse: Sequence[OperatorMatrix], rho0: DensityOp):
    """Return t -> P(up) built from per-sector Liouvillian exponentials (same validity
    conditions as :func:`lindblad_expm_sectors_p_up`)."""
    space = rho0.space
    lab = _sector_labels(space)
    up = space.level_mask(UP)
    Hm = H.matrix
    cs = [c.matrix for c in collapse]
    rho0m = np.asarray(rho0.matrix)
    parts = []
    for k in np.unique(lab):
        s = np.flatnonzero(lab == k)
        sub_up = up[s]
        block = rho0m[np.ix_(s, s)]
        if not np.any(sub_up) or not np.any(block):
            continue
        L = liouvillian(Hm[np.ix_(s, s)], [c[np.ix_(s, s)] for c in cs])
        # P(up) = w . exp(L t) v0 with w picking the up-up diagonal
        w = np.zeros((len(s), len(s)))
        w[sub_up, sub_up] = 1.0
        parts.append((L, block.reshape(-1), w.reshape(-1)))

    def p_up(t: float) -> float:
        return float(sum(np.real(w @ (expm(L * t) @ v)) for L, v, w in parts))

    return p_up


def oracle_first_peak(fn, t_max: float, samples: int = 201) -> tuple[float, float]:
    """First local maximum of a scalar function: uniform grid, then bounded Brent."""
    from scipy.optimize import minimize_scalar

    grid = np.linspace(0.0, t_max, samples)
    vals = np.array([fn(t) for t in grid])
    for i in range(1, samples - 1):
        if vals[i] > vals[i - 1] and vals[i] >= vals[i + 1]:
            res = minimize_scalar(lambda t: -fn(t), bounds=(grid[i - 1], grid[i + 1]),
                                  method="bounded", options={"xatol": 1e-13})
            return float(res.x), float(-res.fun)
    raise ValueError("no interior maximum on the grid")
