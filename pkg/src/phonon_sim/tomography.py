"""Sideband Rabi-signal model and phonon-number distribution fits.

The signal is linear in the distribution,

    P_up(t) = sum_n p_n * (1 - cos(2 pi Omega_n t) exp(-2 pi gamma_n t)) / 2

so a joint RSB+BSB fit over the probability simplex is a convex quadratic
program. A short accelerated projected-gradient run finds the support, and
a primal active-set pass finishes at the exact optimum.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .hilbert import displacement_matrix


class Sideband(str, enum.Enum):
    RSB = "RSB"
    BSB = "BSB"


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class RabiModel:
    omega0: float
    eta: float
    decay: float = 0.0
    decay_exponent: float = 0.0

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValueError("omega0 must be > 0")
        if not 0 < self.eta < 0.3:
            raise ValueError(f"eta={self.eta} is outside the Lamb-Dicke regime (0, 0.3)")
        if self.decay < 0:
            raise ValueError("decay must be >= 0")

    @property
    def sideband_rabi(self) -> float:
        return self.omega0 * self.eta


@dataclass(frozen=True, eq=False)
class PhononDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < -1e-12):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()}, not 1")
        p = np.clip(p, 0, None)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def nmax(self) -> int:
        return len(self.probs) - 1

    def padded(self, nmax: int) -> np.ndarray:
        out = np.zeros(nmax + 1)
        k = min(nmax, self.nmax) + 1
        out[:k] = self.probs[:k]
        return out


@dataclass(frozen=True, eq=False)
class RabiTrace:
    times: np.ndarray
    p_up: np.ndarray
    sideband: Sideband
    mode: int = 1
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.p_up, dtype=float)
        if t.shape != p.shape or t.ndim != 1:
            raise ValueError("times and p_up must be equal-length vectors")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != t.shape:
                raise ValueError("sigma must match times")
            object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "p_up", p)
        object.__setattr__(self, "sideband", Sideband(self.sideband))
        if self.mode not in (1, 2):
            raise ValueError("mode must be 1 or 2")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        with_sigma = self.sigma is not None
        w.writerow(["t_ms", "p_up"] + (["sigma"] if with_sigma else []))
        for i, t in enumerate(self.times):
            row = [repr(float(t)), repr(float(self.p_up[i]))]
            if with_sigma:
                row.append(repr(float(self.sigma[i])))
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, sideband: Sideband, mode: int = 1) -> "RabiTrace":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:2] != ["t_ms", "p_up"]:
            raise ValueError("RabiTrace CSV needs a header row starting with t_ms,p_up")
        header = rows[0]
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        sigma = data[:, 2] if len(header) > 2 and header[2] == "sigma" else None
        return cls(data[:, 0], data[:, 1], sideband, mode, sigma)


def component_signals(model: RabiModel, sideband: Sideband, times, nmax: int) -> np.ndarray:
    """Design matrix: column n is the signal of a pure |n> phonon state."""
    t = np.asarray(times, dtype=float)[:, None]
    n = np.arange(nmax + 1)[None, :]
    sideband = Sideband(sideband)
    rate = np.sqrt(n + 1) if sideband is Sideband.BSB else np.sqrt(n)
    omega = model.sideband_rabi * rate
    gamma = model.decay * (n + 1.0) ** model.decay_exponent
    return 0.5 * (1 - np.cos(2 * np.pi * omega * t) * np.exp(-2 * np.pi * gamma * t))


def rabi_signal(dist: PhononDistribution, model: RabiModel, sideband: Sideband, times) -> np.ndarray:
    return component_signals(model, sideband, times, dist.nmax) @ dist.probs


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def _solve_simplex_qp(A: np.ndarray, b: np.ndarray, x0: np.ndarray,
                      max_iter: int = 300, tol: float = 1e-11) -> np.ndarray:
    """Approximate min ||A x - b||^2 over the simplex by FISTA with adaptive restart."""
    Q = A.T @ A
    c = A.T @ b
    lip = float(np.linalg.eigvalsh(Q)[-1])
    step = 1.0 / lip if lip > 0 else 1.0
    x = project_simplex(x0)
    y, tk = x.copy(), 1.0
    for _ in range(max_iter):
        grad = Q @ y - c
        x_new = project_simplex(y - step * grad)
        if np.dot(grad, x_new - x) > 0:
            # momentum points uphill: restart from the last iterate
            y, tk = x.copy(), 1.0
            continue
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * tk * tk))
        y = x_new + ((tk - 1) / t_new) * (x_new - x)
        done = np.max(np.abs(x_new - x)) < tol
        x, tk = x_new, t_new
        if done:
            break
    return x


def _equality_ls(A: np.ndarray, b: np.ndarray, support: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares on ``support`` subject to sum = 1; returns (x_support, multiplier)."""
    As = A[:, support]
    k = len(support)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2 * As.T @ As
    kkt[:k, k] = kkt[k, :k] = 1.0
    rhs = np.concatenate([2 * As.T @ b, [1.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k], -sol[k]


def _polish(A: np.ndarray, b: np.ndarray, x: np.ndarray, zero_tol: float = 1e-7,
            max_rounds: int = 200) -> np.ndarray:
    """Primal active-set method on the simplex, warm-started from ``x``.

    Terminates at the exact KKT point: non-negative equality-constrained
    solution on the working set, with no excluded coordinate offering descent.
    """
    n = len(x)
    work = set(np.flatnonzero(x > zero_tol).tolist()) or {int(np.argmax(x))}
    cur = np.zeros(n)
    idx = np.array(sorted(work))
    cur[idx] = np.clip(x[idx], 0, None)
    cur = cur / cur.sum() if cur.sum() > 0 else np.full(n, 0.0)
    if cur.sum() == 0:
        cur[idx] = 1.0 / len(idx)
    for _ in range(max_rounds):
        idx = np.array(sorted(work))
        xs, lam = _equality_ls(A, b, idx)
        if np.all(xs >= 0):
            cur = np.zeros(n)
            cur[idx] = xs
            grad = 2 * A.T @ (A @ cur - b)
            # KKT: grad_i + lam >= 0 on coordinates held at zero
            slack = {i: grad[i] + lam for i in range(n) if i not in work}
            worst = min(slack, key=slack.get, default=None)
            if worst is None or slack[worst] >= -1e-12 * max(1.0, abs(lam)):
                break
            work.add(worst)
            continue
        d = xs - cur[idx]
        blocking = d < 0
        ratios = np.full(len(idx), np.inf)
        ratios[blocking] = cur[idx][blocking] / -d[blocking]
        step = min(1.0, float(ratios.min()))
        cur[idx] = cur[idx] + step * d
        drop = idx[(cur[idx] <= 1e-15) | (ratios == ratios.min())]
        cur[drop] = 0.0
        work -= set(drop.tolist())
        if not work:
            j = int(np.argmax(cur)) if cur.sum() > 0 else 0
            work = {j}
    cur = np.clip(cur, 0, None)
    return cur / cur.sum()


@dataclass(frozen=True, eq=False)
class DistributionFit:
    distribution: PhononDistribution
    residual: float
    stderr: np.ndarray
    chi2_red: float

    def to_json(self) -> str:
        return json.dumps({
            "probs": [float(p) for p in self.distribution.probs],
            "residual": self.residual,
            "stderr": [float(s) for s in self.stderr],
        })


def _weighted_system(traces: Sequence[RabiTrace], model: RabiModel, nmax: int):
    rows, rhs = [], []
    for tr in traces:
        A = component_signals(model, tr.sideband, tr.times, nmax)
        w = np.ones_like(tr.p_up) if tr.sigma is None else 1.0 / np.maximum(tr.sigma, 1e-6)
        rows.append(A * w[:, None])
        rhs.append(tr.p_up * w)
    return np.vstack(rows), np.concatenate(rhs)


def _stderr(A: np.ndarray, r: np.ndarray, x: np.ndarray, weighted: bool,
            zero_tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Curvature (local quadratic) uncertainty restricted to the free face of the simplex."""
    m, _ = A.shape
    free = np.flatnonzero(x > zero_tol)
    dof = max(1, m - max(len(free) - 1, 0))
    chi2_red = float(r @ r) / dof
    scale = 1.0 if weighted else chi2_red
    err = np.zeros(len(x))
    k = len(free)
    if k <= 1:
        return err, chi2_red
    # null-space basis of the sum constraint on the free coordinates
    Z = np.linalg.svd(np.ones((1, k)))[2][1:].T
    Af = A[:, free] @ Z
    H = Af.T @ Af
    try:
        cov = Z @ np.linalg.inv(H) @ Z.T * scale
    except np.linalg.LinAlgError:
        return np.full(len(x), np.nan), chi2_red
    err[free] = np.sqrt(np.clip(np.diag(cov), 0, None))
    return err, chi2_red


def fit_distribution(rsb: RabiTrace, bsb: RabiTrace, model: RabiModel, nmax: int = 7,
                     seed: int = 0, starts: int = 5,
                     max_rms: Optional[float] = None) -> DistributionFit:
    """Joint least-squares fit of RSB and BSB traces over the probability simplex.

    Multi-start: the uniform distribution plus ``starts`` Dirichlet draws from
    a generator seeded with ``seed``; the best optimum wins. Raises
    :class:`FitError` when the design is rank deficient or, if ``max_rms`` is
    given, when the root-mean-square residual exceeds it.
    """
    if rsb.mode != bsb.mode:
        raise ValueError("RSB and BSB traces come from different modes")
    if Sideband(rsb.sideband) is not Sideband.RSB or Sideband(bsb.sideband) is not Sideband.BSB:
        raise ValueError("expected one RSB trace and one BSB trace")
    A, b = _weighted_system([rsb, bsb], model, nmax)
    if np.linalg.matrix_rank(A) < nmax + 1:
        raise FitError(f"design matrix is rank deficient for nmax={nmax}; add time points")
    rng = np.random.default_rng(seed)
    x0s = [np.full(nmax + 1, 1.0 / (nmax + 1))] + list(rng.dirichlet(np.ones(nmax + 1), size=starts))
    best, best_f = None, np.inf
    for x0 in x0s:
        x = _polish(A, b, _solve_simplex_qp(A, b, x0))
        f = float(np.sum((A @ x - b) ** 2))
        if f < best_f:
            best, best_f = x, f
    best = np.clip(best, 0, None)
    best = best / best.sum()
    r = A @ best - b
    residual = float(r @ r)
    rms = math.sqrt(residual / len(b))
    if max_rms is not None and rms > max_rms:
        raise FitError(f"fit residual rms {rms:.3g} exceeds {max_rms:.3g}")
    weighted = rsb.sigma is not None and bsb.sigma is not None
    stderr, chi2_red = _stderr(A, r, best, weighted)
    return DistributionFit(PhononDistribution(best), residual, stderr, chi2_red)


# --- displaced thermal states -------------------------------------------------

def displaced_thermal_distribution(alpha: float, n_th: float, nmax: int,
                                   work_cutoff: Optional[int] = None) -> np.ndarray:
    """Occupations of D(alpha) rho_th D(alpha)^dag, computed by displacing a
    truncated thermal density matrix and reading the diagonal. The last entry
    absorbs the tail above ``nmax`` so the result sums to one."""
    alpha = float(alpha)
    if work_cutoff is None:
        mean = alpha ** 2 + n_th
        work_cutoff = max(nmax, int(mean + 10 * math.sqrt(mean + 1) + 20))
    n = np.arange(work_cutoff + 1)
    if n_th > 0:
        p_th = np.exp(n * math.log(n_th) - (n + 1) * math.log1p(n_th))
    else:
        p_th = (n == 0).astype(float)
    D = displacement_matrix(alpha, work_cutoff)
    occ = np.real(np.einsum("mk,k,mk->m", D, p_th, D.conj()))
    occ = np.clip(occ, 0, None)
    out = occ[:nmax + 1].copy()
    out[-1] += max(0.0, 1.0 - out.sum())
    return out / out.sum()


def fit_coherent_alpha(trace: RabiTrace, model: RabiModel, nmax: int = 15, seed: int = 0,
                       starts: int = 4) -> tuple[float, float]:
    """Fit (alpha, n_th) of a displaced thermal state to one BSB trace."""
    if Sideband(trace.sideband) is not Sideband.BSB:
        raise ValueError("fit_coherent_alpha expects a BSB trace")
    A = component_signals(model, Sideband.BSB, trace.times, nmax)
    w = np.ones_like(trace.p_up) if trace.sigma is None else 1.0 / np.maximum(trace.sigma, 1e-6)

    # occupations depend on |alpha|^2 only; fitting the square keeps the
    # problem regular at alpha = 0
    def resid(x):
        return (A @ displaced_thermal_distribution(math.sqrt(x[0]), x[1], nmax) - trace.p_up) * w

    rng = np.random.default_rng(seed)
    guesses = [(1.0, 0.05), (0.1, 0.01)] + [(rng.uniform(0, 6.0), rng.uniform(0, 0.5))
                                            for _ in range(starts)]
    best = None
    for g in guesses:
        sol = least_squares(resid, x0=np.array(g), bounds=([0.0, 0.0], [16.0, 3.0]),
                            xtol=1e-13, ftol=1e-15, gtol=1e-15, max_nfev=500)
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or best.status <= 0:
        raise FitError("coherent displacement fit did not converge")
    return math.sqrt(float(best.x[0])), float(best.x[1])


def synthetic_trace(dist: PhononDistribution, model: RabiModel, sideband: Sideband, times,
                    mode: int = 1, shots: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> RabiTrace:
    """Model trace, optionally with binomial projection noise of ``shots`` per point."""
    p = np.clip(rabi_signal(dist, model, sideband, times), 0, 1)
    if shots is None:
        return RabiTrace(times, p, sideband, mode)
    if rng is None:
        raise ValueError("a seeded rng is required for noisy traces")
    k = rng.binomial(shots, p)
    est = k / shots
    sigma = np.sqrt(np.maximum(est * (1 - est), 1.0 / shots) / shots)
    return RabiTrace(times, est, sideband, mode, sigma)
