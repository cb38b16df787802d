"""Composite Hilbert space: one emitter (2 or 3 levels) times two truncated bosonic modes.

Basis ordering is fixed and part of the file contract::

    index = e * (n_max_1 + 1) * (n_max_2 + 1) + n1 * (n_max_2 + 1) + n2

with ``e = 0`` for down, ``1`` for up and ``2`` for the auxiliary up' level.
All operators are dense numpy arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

DOWN, UP, AUX = 0, 1, 2
LEVEL_NAMES = {"down": DOWN, "up": UP, "aux": AUX}


@dataclass(frozen=True)
class SpaceConfig:
    n_max_1: int
    n_max_2: int
    electronic_levels: int = 2

    def __post_init__(self):
        for name in ("n_max_1", "n_max_2", "electronic_levels"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
        if self.n_max_1 < 1 or self.n_max_2 < 1:
            raise ValueError(
                f"Fock cutoffs must be >= 1, got ({self.n_max_1}, {self.n_max_2})"
            )
        if self.electronic_levels not in (2, 3):
            raise ValueError(
                f"electronic_levels must be 2 or 3, got {self.electronic_levels}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.electronic_levels, self.n_max_1 + 1, self.n_max_2 + 1)

    @property
    def mode_dim(self) -> int:
        return (self.n_max_1 + 1) * (self.n_max_2 + 1)

    @property
    def dim(self) -> int:
        return self.electronic_levels * self.mode_dim

    def index(self, e: int, n1: int, n2: int) -> int:
        if not (0 <= e < self.electronic_levels and 0 <= n1 <= self.n_max_1
                and 0 <= n2 <= self.n_max_2):
            raise IndexError(f"label ({e}, {n1}, {n2}) outside {self}")
        return (e * (self.n_max_1 + 1) + n1) * (self.n_max_2 + 1) + n2

    def label(self, index: int) -> tuple[int, int, int]:
        if not 0 <= index < self.dim:
            raise IndexError(f"index {index} outside dimension {self.dim}")
        e, rest = divmod(index, self.mode_dim)
        n1, n2 = divmod(rest, self.n_max_2 + 1)
        return e, n1, n2

    def level_mask(self, level: int) -> np.ndarray:
        """Boolean mask over basis indices belonging to one electronic level."""
        mask = np.zeros(self.dim, dtype=bool)
        mask[level * self.mode_dim:(level + 1) * self.mode_dim] = True
        return mask

    def to_dict(self) -> dict:
        return {"n1": self.n_max_1, "n2": self.n_max_2, "levels": self.electronic_levels}

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceConfig":
        return cls(int(d["n1"]), int(d["n2"]), int(d.get("levels", 2)))


def make_space(n_max_1: int, n_max_2: int, electronic_levels: int = 2) -> SpaceConfig:
    return SpaceConfig(n_max_1, n_max_2, electronic_levels)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def _check_weight(weight: float) -> float:
    weight = float(weight)
    if not -1e-12 <= weight <= 1 + 1e-12:
        raise ValueError(f"weight must lie in [0, 1], got {weight}")
    return min(max(weight, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class PureState:
    """State vector on a :class:`SpaceConfig`.

    ``weight`` carries the survival probability accumulated through
    postselection; the amplitudes themselves stay unit-norm for every state
    produced by the preparation routines. :func:`apply` is the one place that
    hands back an unnormalised vector.
    """

    space: SpaceConfig
    amplitudes: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        amps = _frozen(self.amplitudes).reshape(-1)
        if amps.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} amplitudes, got {amps.shape[0]}")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "weight", _check_weight(self.weight))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.norm - 1.0) <= tol

    def normalized(self) -> "PureState":
        norm = self.norm
        if norm == 0:
            raise ValueError("cannot normalise the zero vector")
        return PureState(self.space, self.amplitudes / norm, self.weight)

    def amplitude(self, e: int, n1: int, n2: int) -> complex:
        return complex(self.amplitudes[self.space.index(e, n1, n2)])

    def to_density(self) -> "DensityOp":
        return DensityOp(self.space, np.outer(self.amplitudes, self.amplitudes.conj()),
                         self.weight)

    def to_json(self) -> str:
        return json.dumps({
            "space": self.space.to_dict(),
            "weight": self.weight,
            "amplitudes": [[float(a.real), float(a.imag)] for a in self.amplitudes],
        })

    @classmethod
    def from_json(cls, text: str) -> "PureState":
        d = json.loads(text)
        amps = np.array([complex(re, im) for re, im in d["amplitudes"]])
        return cls(SpaceConfig.from_dict(d["space"]), amps, d.get("weight", 1.0))


@dataclass(frozen=True, eq=False)
class DensityOp:
    space: SpaceConfig
    matrix: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"expected {self.space.dim}x{self.space.dim} matrix, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "weight", _check_weight(self.weight))

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-10,
                 eig_tol: float = 1e-8) -> "DensityOp":
        m = self.matrix
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > herm_tol:
            raise ValueError(f"density matrix not Hermitian (max deviation {herm:.3e})")
        tr = complex(np.trace(m))
        if abs(tr - 1) > trace_tol:
            raise ValueError(f"density matrix trace {tr} differs from 1")
        lam = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
        if lam < -eig_tol:
            raise ValueError(f"density matrix has negative eigenvalue {lam:.3e}")
        return self

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    space: SpaceConfig
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"operator shape {m.shape} does not match dimension {self.space.dim}")
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix.conj().T)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def _other(self, other: "OperatorMatrix") -> np.ndarray:
        _same_space(self.space, other.space)
        return other.matrix

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix @ self._other(other))

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix + self._other(other))

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix - self._other(other))

    def __mul__(self, scalar: complex) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix * scalar)

    __rmul__ = __mul__


State = Union[PureState, DensityOp]


def _same_space(a: SpaceConfig, b: SpaceConfig) -> None:
    if a != b:
        raise ValueError(f"space mismatch: {a} vs {b}")


# --- single-factor building blocks -------------------------------------------

def ladder_matrix(n_max: int) -> np.ndarray:
    """Truncated annihilation operator on ``n_max + 1`` Fock levels.

    The creation operator is its adjoint, so the top level is sent to zero
    (hard cutoff).
    """
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


def displacement_matrix(alpha: complex, n_max: int) -> np.ndarray:
    """Block ``<m|D(alpha)|n>`` for ``m, n <= n_max`` of the untruncated displacement.

    Uses the closed-form Laguerre matrix elements, so every entry is the exact
    infinite-dimensional value; only the block is truncated.
    """
    alpha = complex(alpha)
    if alpha == 0:
        return np.eye(n_max + 1, dtype=complex)
    x = abs(alpha) ** 2
    m, n = np.meshgrid(np.arange(n_max + 1), np.arange(n_max + 1), indexing="ij")
    lo, hi = np.minimum(m, n), np.maximum(m, n)
    k = hi - lo
    log_pref = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - x / 2 + k * np.log(abs(alpha))
    unit = alpha / abs(alpha)
    phase = np.where(m >= n, unit ** k, (-np.conj(unit)) ** k)
    return np.exp(log_pref) * eval_genlaguerre(lo, k, x) * phase


def embed(space: SpaceConfig, electronic=None, mode1=None, mode2=None) -> np.ndarray:
    """Kronecker product of per-factor matrices; ``None`` means identity."""
    e = np.eye(space.electronic_levels) if electronic is None else electronic
    m1 = np.eye(space.n_max_1 + 1) if mode1 is None else mode1
    m2 = np.eye(space.n_max_2 + 1) if mode2 is None else mode2
    return np.kron(np.kron(e, m1), m2)


def _transition(space: SpaceConfig, to: int, frm: int) -> np.ndarray:
    t = np.zeros((space.electronic_levels,) * 2, dtype=complex)
    t[to, frm] = 1.0
    return t


# --- operators ---------------------------------------------------------------

def annihilation(space: SpaceConfig, mode: int) -> OperatorMatrix:
    if mode == 1:
        return OperatorMatrix(space, embed(space, mode1=ladder_matrix(space.n_max_1)))
    if mode == 2:
        return OperatorMatrix(space, embed(space, mode2=ladder_matrix(space.n_max_2)))
    raise ValueError(f"mode must be 1 or 2, got {mode!r}")


def creation(space: SpaceConfig, mode: int) -> OperatorMatrix:
    return annihilation(space, mode).dag()


def number(space: SpaceConfig, mode: int) -> OperatorMatrix:
    a = annihilation(space, mode)
    return a.dag() @ a


def spin_raise(space: SpaceConfig) -> OperatorMatrix:
    """|up><down| on the electronic factor; the auxiliary level is untouched."""
    return OperatorMatrix(space, embed(space, electronic=_transition(space, UP, DOWN)))


def spin_lower(space: SpaceConfig) -> OperatorMatrix:
    return spin_raise(space).dag()


def level_projector(space: SpaceConfig, level: int) -> OperatorMatrix:
    return OperatorMatrix(space, np.diag(space.level_mask(level).astype(complex)))


def excitation_number(space: SpaceConfig) -> OperatorMatrix:
    """Total phonon number n1 + n2, diagonal in the product basis."""
    n1 = np.arange(space.n_max_1 + 1)
    n2 = np.arange(space.n_max_2 + 1)
    per_level = (n1[:, None] + n2[None, :]).ravel()
    return OperatorMatrix(space, np.diag(np.tile(per_level, space.electronic_levels)).astype(complex))


# --- states and inner products ------------------------------------------------

def basis_state(space: SpaceConfig, e: int, n1: int, n2: int) -> PureState:
    v = np.zeros(space.dim, dtype=complex)
    v[space.index(e, n1, n2)] = 1.0
    return PureState(space, v)


def product_state(space: SpaceConfig, level: int, motional: np.ndarray) -> PureState:
    """Electronic level tensored with a motional vector of shape (n1+1, n2+1)."""
    motional = np.asarray(motional, dtype=complex)
    if motional.shape != (space.n_max_1 + 1, space.n_max_2 + 1):
        raise ValueError(f"motional array has shape {motional.shape}")
    v = np.zeros(space.shape, dtype=complex)
    v[level] = motional
    return PureState(space, v.ravel())


def apply(op: OperatorMatrix, state: PureState) -> PureState:
    _same_space(op.space, state.space)
    return PureState(state.space, op.matrix @ state.amplitudes, state.weight)


def overlap(a: PureState, b: PureState) -> complex:
    _same_space(a.space, b.space)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def expectation(state: State, op: OperatorMatrix) -> complex:
    _same_space(state.space, op.space)
    if isinstance(state, PureState):
        return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    return complex(np.trace(state.matrix @ op.matrix))


def level_population(state: State, level: int) -> float:
    mask = state.space.level_mask(level)
    if isinstance(state, PureState):
        return float(np.sum(np.abs(state.amplitudes[mask]) ** 2))
    return float(np.real(np.trace(state.matrix[np.ix_(mask, mask)])))


def mode_marginals(state: State) -> tuple[np.ndarray, np.ndarray]:
    """Phonon-number distributions of mode 1 and mode 2, traced over everything else."""
    if isinstance(state, PureState):
        pops = np.abs(state.amplitudes) ** 2
    else:
        pops = np.real(np.diag(state.matrix))
    pops = pops.reshape(state.space.shape)
    return pops.sum(axis=(0, 2)), pops.sum(axis=(0, 1))


def with_levels(state: State, levels: int, tol: float = 1e-12) -> State:
    """Move a state to a space with a different electronic level count.

    Levels that are removed must be unpopulated (below ``tol``).
    """
    old = state.space
    new = SpaceConfig(old.n_max_1, old.n_max_2, levels)
    keep = min(levels, old.electronic_levels)
    lost = sum(level_population(state, e) for e in range(keep, old.electronic_levels))
    if lost > tol:
        raise ValueError(f"dropping electronic levels would discard population {lost:.2e}")
    block = old.mode_dim
    if isinstance(state, PureState):
        amps = np.zeros(new.dim, dtype=complex)
        amps[:keep * block] = state.amplitudes[:keep * block]
        return PureState(new, amps, state.weight)
    m = np.zeros((new.dim, new.dim), dtype=complex)
    m[:keep * block, :keep * block] = state.matrix[:keep * block, :keep * block]
    return DensityOp(new, m, state.weight)


def boundary_population(state: State) -> float:
    """Population sitting on the top Fock level of either mode (a truncation diagnostic)."""
    space = state.space
    if isinstance(state, PureState):
        pops = np.abs(state.amplitudes) ** 2
    else:
        pops = np.real(np.diag(state.matrix))
    pops = pops.reshape(space.shape)
    edge = np.zeros(space.shape, dtype=bool)
    edge[:, -1, :] = True
    edge[:, :, -1] = True
    return float(pops[edge].sum())
