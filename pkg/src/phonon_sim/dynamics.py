"""Bichromatic red-sideband Hamiltonian, collapse operators and time propagation.

Rates are stored in kHz as cyclic frequencies; the factor 2*pi is applied
here when operators are built, so angular frequencies are in rad/ms and
times in ms.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse import csr_matrix

from .hilbert import (UP, DensityOp, OperatorMatrix, PureState, SpaceConfig, State,
                      annihilation, level_population, level_projector, number, spin_lower,
                      spin_raise)

TWO_PI = 2 * np.pi

# RK4 step h obeys ||L|| h <= STEP_NORM
STEP_NORM = 0.025


class IntegrationError(RuntimeError):
    """Raised when the master-equation integrator leaves its error budget."""


@dataclass(frozen=True)
class SimParams:
    g1: float
    g2: float
    phi: float = 0.0
    gamma_m: float = 0.0
    gamma_e: float = 0.0
    n_th: float = 0.0
    contrast: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        for name in ("g1", "g2", "gamma_m", "gamma_e", "n_th"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0 < self.contrast <= 1 + 1e-12:
            raise ValueError(f"contrast must lie in (0, 1], got {self.contrast}")
        if not 0 <= self.offset < 1:
            raise ValueError(f"offset must lie in [0, 1), got {self.offset}")
        if self.contrast + self.offset > 1.05:
            raise ValueError(
                f"contrast + offset = {self.contrast + self.offset} exceeds 1.05"
            )

    @classmethod
    def symmetric(cls, g: float, **kw) -> "SimParams":
        return cls(g1=g, g2=g, **kw)

    @property
    def g(self) -> float:
        if self.g1 != self.g2:
            raise ValueError("coupling is asymmetric; use g1/g2 explicitly")
        return self.g1

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def interaction_hamiltonian(space: SpaceConfig, params: SimParams) -> OperatorMatrix:
    """H = 2 pi g1 (s+ a1 + h.c.) + 2 pi g2 (e^{-i phi} s+ a2 + h.c.).

    With phi = 0 the state (|0,1> + |1,0>)/sqrt(2) couples with strength
    sqrt(2) g; with phi = pi it is dark.
    """
    sp = spin_raise(space)
    t1 = sp @ annihilation(space, 1)
    t2 = (sp @ annihilation(space, 2)) * np.exp(-1j * params.phi)
    h = t1 * (TWO_PI * params.g1) + t2 * (TWO_PI * params.g2)
    return h + h.dag()


def single_mode_hamiltonian(space: SpaceConfig, g: float, mode: int) -> OperatorMatrix:
    """Red-sideband Jaynes-Cummings coupling to one mode only."""
    t = spin_raise(space) @ annihilation(space, mode)
    return (t + t.dag()) * (TWO_PI * g)


def collapse_operators(space: SpaceConfig, params: SimParams) -> list[OperatorMatrix]:
    ops = []
    if params.gamma_m > 0:
        rate = math.sqrt(TWO_PI * params.gamma_m)
        ops += [number(space, 1) * rate, number(space, 2) * rate]
    if params.gamma_e > 0:
        ops.append(spin_raise(space) @ spin_lower(space) * math.sqrt(TWO_PI * params.gamma_e))
    return ops


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: list
    p_up: np.ndarray
    trace_err: np.ndarray = None
    p_reported: np.ndarray = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or len(times) != len(self.p_up) or len(times) != len(self.states):
            raise ValueError("times, states and p_up must have matching lengths")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "p_up", np.asarray(self.p_up, dtype=float))
        if self.trace_err is None:
            object.__setattr__(self, "trace_err", np.zeros(len(times)))
        if self.p_reported is None:
            object.__setattr__(self, "p_reported", self.p_up.copy())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_ms", "p_up", "p_up_reported", "trace_err"])
        for row in zip(self.times, self.p_up, self.p_reported, self.trace_err):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def _require_hermitian(H: OperatorMatrix, tol: float = 1e-10) -> None:
    if not H.is_hermitian(tol):
        raise ValueError("Hamiltonian is not Hermitian")


class UnitaryPropagator:
    """exp(-i H t) by a single eigendecomposition, reusable at arbitrary times."""

    def __init__(self, H: OperatorMatrix):
        _require_hermitian(H)
        self.space = H.space
        self.energies, self.vectors = np.linalg.eigh(H.matrix)

    def evolve(self, psi0: np.ndarray, times) -> np.ndarray:
        """Rows are the evolved state vectors at each time."""
        c = self.vectors.conj().T @ psi0
        phases = np.exp(-1j * np.outer(np.atleast_1d(times), self.energies))
        return (phases * c) @ self.vectors.T

    def p_up(self, state: PureState, times) -> np.ndarray:
        mask = self.space.level_mask(UP)
        psi_t = self.evolve(state.amplitudes, times)
        return np.sum(np.abs(psi_t[:, mask]) ** 2, axis=1)


def evolve_unitary(H: OperatorMatrix, state: PureState, duration: float,
                   samples: int = 101) -> Trajectory:
    """Closed-system evolution on a uniform grid over [0, duration]."""
    times = np.linspace(0.0, duration, samples)
    return evolve_unitary_at(H, state, times)


def evolve_unitary_at(H: OperatorMatrix, state: PureState, times) -> Trajectory:
    prop = UnitaryPropagator(H)
    psi_t = prop.evolve(state.amplitudes, times)
    states = [PureState(state.space, v, state.weight) for v in psi_t]
    p_up = [level_population(s, UP) for s in states]
    return Trajectory(np.asarray(times, dtype=float), states, np.array(p_up))


# --- Lindblad ----------------------------------------------------------------

class _LindbladRHS:
    """Right-hand side of the master equation in matrix form.

    H is held sparse. For Hermitian arguments the commutator needs one
    product, since rho H = (H rho)^dag. When every collapse operator is
    diagonal in the product basis the dissipator reduces to an elementwise
    mask.
    """

    def __init__(self, H: np.ndarray, collapse: Sequence[np.ndarray]):
        self.dim = H.shape[0]
        self.H = csr_matrix(H)
        self.diag_only = all(np.count_nonzero(c - np.diag(np.diag(c))) == 0 for c in collapse)
        h_norm = float(np.linalg.norm(H, 2))
        if self.diag_only:
            mask = np.zeros((self.dim, self.dim), dtype=complex)
            for c in collapse:
                d = np.diag(c)
                p = np.abs(d) ** 2
                mask += np.outer(d, d.conj()) - 0.5 * (p[:, None] + p[None, :])
            self.mask = mask
            # ||L|| <= 2||H|| + max|mask| for an elementwise dissipator
            self.norm_bound = 2 * h_norm + float(np.max(np.abs(mask), initial=0))
        else:
            self.c = [np.asarray(c) for c in collapse]
            self.cdc = [c.conj().T @ c for c in self.c]
            self.norm_bound = 2 * h_norm + 2 * sum(float(np.linalg.norm(c, 2)) ** 2 for c in self.c)

    def __call__(self, rho: np.ndarray, adjoint: bool = False, hermitian: bool = True) -> np.ndarray:
        sign = 1j if adjoint else -1j
        hr = self.H @ rho
        if hermitian:
            # contiguous copy then in-place conj is much faster than hr.conj().T
            neg = hr.T.copy()
            np.conjugate(neg, out=neg)
            neg -= hr
            out = neg * (-sign)
        else:
            out = sign * (hr - (self.H.T @ rho.T).T)
        if self.diag_only:
            out += (self.mask.conj() if adjoint else self.mask) * rho
            return out
        for c, cdc in zip(self.c, self.cdc):
            if adjoint:
                out += c.conj().T @ rho @ c - 0.5 * (cdc @ rho + rho @ cdc)
            else:
                out += c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc)
        return out


def _rk4(rhs, rho: np.ndarray, dt: float, steps: int, adjoint: bool = False,
         hermitian: bool = True) -> np.ndarray:
    for _ in range(steps):
        k1 = rhs(rho, adjoint, hermitian)
        k2 = rhs(rho + 0.5 * dt * k1, adjoint, hermitian)
        k3 = rhs(rho + 0.5 * dt * k2, adjoint, hermitian)
        k4 = rhs(rho + dt * k3, adjoint, hermitian)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def _n_steps(interval: float, h_max: float) -> int:
    return max(1, math.ceil(interval / h_max - 1e-12))


def evolve_lindblad(H: OperatorMatrix, collapse: Sequence[OperatorMatrix], rho0: DensityOp,
                    t_grid, *, step_norm: float = STEP_NORM, trace_tol: float = 1e-8,
                    richardson_tol: float = 1e-7, positivity_tol: float = 1e-6) -> Trajectory:
    """Integrate the Lindblad equation with fixed-step RK4, sampled at ``t_grid``.

    The step obeys ``norm_bound * h <= step_norm``. The first output interval
    is repeated at half the step as a Richardson error check. Trace drift and
    negative eigenvalues are monitored at every output time and abort the run.
    """
    _require_hermitian(H)
    rho0.validate()
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a non-empty strictly increasing vector")
    if t_grid[0] < 0:
        raise ValueError("t_grid must start at t >= 0")
    rhs = _LindbladRHS(H.matrix, [c.matrix for c in collapse])
    h_max = step_norm / rhs.norm_bound if rhs.norm_bound > 0 else np.inf

    space = rho0.space
    up = space.level_mask(UP)
    rho = np.array(rho0.matrix)
    t_prev = 0.0
    states, p_up, errs = [], [], []
    checked = False
    for t in t_grid:
        interval = t - t_prev
        if interval > 0:
            steps = _n_steps(interval, h_max)
            new = _rk4(rhs, rho, interval / steps, steps)
            if not checked:
                fine = _rk4(rhs, rho, interval / (2 * steps), 2 * steps)
                est = float(np.max(np.abs(new - fine))) * 16 / 15
                if est > richardson_tol:
                    raise IntegrationError(
                        f"Richardson error estimate {est:.2e} exceeds {richardson_tol:.0e} "
                        f"at t = {t:.6g} ms; reduce step_norm"
                    )
                checked = True
            rho = new
        tr = complex(np.trace(rho))
        err = abs(tr - 1.0)
        if err > trace_tol:
            raise IntegrationError(f"trace drift {err:.2e} at t = {t:.6g} ms")
        rho = rho / tr
        lam = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        if lam < -positivity_tol:
            raise IntegrationError(f"negative eigenvalue {lam:.2e} at t = {t:.6g} ms")
        states.append(DensityOp(space, rho, rho0.weight))
        p_up.append(float(np.real(np.trace(rho[np.ix_(up, up)]))))
        errs.append(err)
        t_prev = t
    return Trajectory(t_grid, states, np.array(p_up), np.array(errs))


def heisenberg_observable(H: OperatorMatrix, collapse: Sequence[OperatorMatrix],
                          observable: OperatorMatrix, duration: float, *,
                          step_norm: float = STEP_NORM) -> np.ndarray:
    """Evolve an observable backwards with the adjoint generator.

    ``Tr[O(T) rho0]`` then equals ``Tr[O rho(T)]`` for any initial state,
    which makes fixed-duration scans over many initial states cheap.
    """
    _require_hermitian(H)
    rhs = _LindbladRHS(H.matrix, [c.matrix for c in collapse])
    if duration <= 0:
        return np.array(observable.matrix)
    h_max = step_norm / rhs.norm_bound if rhs.norm_bound > 0 else np.inf
    steps = _n_steps(duration, h_max)
    return _rk4(rhs, np.array(observable.matrix), duration / steps, steps, adjoint=True,
                hermitian=observable.is_hermitian())


def apply_readout_model(traj: Trajectory, params: SimParams) -> Trajectory:
    reported = np.clip(params.offset + params.contrast * traj.p_up, 0.0, 1.0)
    return Trajectory(traj.times, traj.states, traj.p_up, traj.trace_err, reported)


def readout(p_up, params: SimParams) -> np.ndarray:
    return np.clip(params.offset + params.contrast * np.asarray(p_up, dtype=float), 0.0, 1.0)


def initial_density(state: State) -> DensityOp:
    return state.to_density() if isinstance(state, PureState) else state


def evolve(H: OperatorMatrix, collapse: Sequence[OperatorMatrix], state: State,
           t_grid) -> Trajectory:
    """Unitary propagation when possible, Lindblad otherwise."""
    if not collapse and isinstance(state, PureState):
        return evolve_unitary_at(H, state, t_grid)
    return evolve_lindblad(H, collapse, initial_density(state), t_grid)


# --- peak finding ------------------------------------------------------------

def first_peak_sampled(times, values) -> tuple[float, float]:
    """First local maximum of a sampled curve, refined by a parabola through three points."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    for i in range(1, len(values) - 1):
        if values[i] > values[i - 1] and values[i] >= values[i + 1]:
            y0, y1, y2 = values[i - 1:i + 2]
            denom = y0 - 2 * y1 + y2
            if denom == 0:
                return float(times[i]), float(y1)
            dt = times[i + 1] - times[i]
            shift = 0.5 * (y0 - y2) / denom
            return float(times[i] + shift * dt), float(y1 - 0.25 * (y0 - y2) * shift)
    raise ValueError("no interior local maximum in the sampled curve")


def first_peak(fn: Callable[[np.ndarray], np.ndarray], t_max: float,
               samples: int = 2001) -> tuple[float, float]:
    """First local maximum of a continuous curve: coarse grid, then bounded Brent refinement."""
    grid = np.linspace(0.0, t_max, samples)
    vals = np.asarray(fn(grid), dtype=float)
    for i in range(1, samples - 1):
        if vals[i] > vals[i - 1] and vals[i] >= vals[i + 1]:
            res = minimize_scalar(lambda t: -float(np.asarray(fn(np.array([t])))[0]),
                                  bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                                  options={"xatol": 1e-14})
            return float(res.x), float(-res.fun)
    raise ValueError("no interior local maximum found; extend t_max")


def trajectory_peak(H: OperatorMatrix, collapse: Sequence[OperatorMatrix], traj: Trajectory,
                    *, step_norm: float = STEP_NORM) -> tuple[float, float]:
    """Refine the first sampled maximum of ``traj.p_up`` by re-propagating locally.

    The search restarts from the stored state one grid point before the
    sampled maximum. For the master equation the step count is fixed over the
    bracket so the refined curve is a smooth function of time.
    """
    vals = traj.p_up
    idx = next((i for i in range(1, len(vals) - 1)
                if vals[i] > vals[i - 1] and vals[i] >= vals[i + 1]), None)
    if idx is None:
        raise ValueError("no interior local maximum in the trajectory")
    a, b = traj.times[idx - 1], traj.times[idx + 1]
    base = traj.states[idx - 1]
    up = base.space.level_mask(UP)
    if isinstance(base, PureState) and not collapse:
        prop = UnitaryPropagator(H)

        def f(t):
            return float(prop.p_up(base, [t - a])[0])
    else:
        rhs = _LindbladRHS(H.matrix, [c.matrix for c in collapse])
        h_max = step_norm / rhs.norm_bound if rhs.norm_bound > 0 else np.inf
        steps = _n_steps(b - a, h_max)
        rho0 = np.array(initial_density(base).matrix)

        def f(t):
            rho = _rk4(rhs, rho0, max(t - a, 0.0) / steps, steps)
            return float(np.real(np.trace(rho[np.ix_(up, up)]) / np.trace(rho)))
    res = minimize_scalar(lambda t: -f(t), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-13})
    return float(res.x), float(-res.fun)
