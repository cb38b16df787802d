"""Pulse primitives and the scripted preparation programs.

Resonant pulses are ideal two-level rotations. On the pair (lower, upper)
a pulse of Rabi angle theta and phase phi acts as

    [[cos(theta/2),          -e^{-i phi} sin(theta/2)],
     [e^{i phi} sin(theta/2),  cos(theta/2)          ]]

Sideband areas are calibrated on the n=0 <-> n=1 pair; the pair involving
Fock level n+1 is rotated by theta * sqrt(n+1).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .collective import COHERENT_TAIL_TOL
from .hilbert import (AUX, DOWN, UP, DensityOp, PureState, SpaceConfig, State, basis_state,
                      displacement_matrix, embed)
from .dynamics import (SimParams, UnitaryPropagator, collapse_operators, evolve_lindblad,
                       interaction_hamiltonian)

# tickle calibration: coherent displacement per ms of drive
TICKLE_RATE_PER_MS = {1: 6.53, 2: 8.81}

# exact amplitude balance for the second BSB pulse of the Upsilon program
UPSILON_BSB2_AREA = 2 * math.asin(1 / math.sqrt(3))


class PulseKind(str, enum.Enum):
    CARRIER_A = "CARRIER_A"
    CARRIER_B = "CARRIER_B"
    RSB1 = "RSB1"
    RSB2 = "RSB2"
    BSB1 = "BSB1"
    BSB2 = "BSB2"
    BICHROMATIC_RSB = "BICHROMATIC_RSB"
    TICKLE = "TICKLE"


RESONANT = {PulseKind.CARRIER_A, PulseKind.CARRIER_B, PulseKind.RSB1, PulseKind.RSB2,
            PulseKind.BSB1, PulseKind.BSB2}


@dataclass(frozen=True)
class PulseSpec:
    kind: PulseKind
    area: Optional[float] = None
    duration: Optional[float] = None
    phase: float = 0.0
    alpha: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PulseKind(self.kind))
        if self.kind in RESONANT:
            if self.area is None or self.duration is not None:
                raise ValueError(f"{self.kind.value} takes an area, not a duration")
        elif self.kind is PulseKind.BICHROMATIC_RSB:
            if self.duration is None or self.area is not None:
                raise ValueError("BICHROMATIC_RSB takes a duration, not an area")
            if self.duration < 0:
                raise ValueError("pulse duration must be >= 0")
        else:
            if self.alpha is None or len(self.alpha) != 2:
                raise ValueError("TICKLE needs alpha = (alpha1, alpha2)")
            object.__setattr__(self, "alpha", (complex(self.alpha[0]), complex(self.alpha[1])))


@dataclass(frozen=True)
class Postselect:
    keep: frozenset

    def __post_init__(self):
        keep = frozenset(int(k) for k in self.keep)
        if not keep:
            raise ValueError("postselection must keep at least one level")
        object.__setattr__(self, "keep", keep)


@dataclass(frozen=True)
class SequenceSpec:
    pulses: tuple
    initial: str = "GROUND"
    n_th: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        if self.initial not in ("GROUND", "THERMAL"):
            raise ValueError(f"initial must be GROUND or THERMAL, got {self.initial!r}")


class PostselectionError(RuntimeError):
    pass


# --- unitaries ----------------------------------------------------------------

def _pair_rotation(u: np.ndarray, lo: int, hi: int, theta: float, phase: float) -> None:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    u[lo, lo] = c
    u[hi, hi] = c
    u[hi, lo] = np.exp(1j * phase) * s
    u[lo, hi] = -np.exp(-1j * phase) * s


def pulse_unitary(space: SpaceConfig, kind: PulseKind, area: float, phase: float = 0.0) -> np.ndarray:
    kind = PulseKind(kind)
    if kind not in RESONANT:
        raise ValueError(f"{kind.value} is not a resonant pulse")
    if kind is PulseKind.CARRIER_B and space.electronic_levels != 3:
        raise ValueError("CARRIER_B needs a space with the auxiliary level")
    u = np.eye(space.dim, dtype=complex)
    if kind in (PulseKind.CARRIER_A, PulseKind.CARRIER_B):
        upper = UP if kind is PulseKind.CARRIER_A else AUX
        for n1 in range(space.n_max_1 + 1):
            for n2 in range(space.n_max_2 + 1):
                _pair_rotation(u, space.index(DOWN, n1, n2), space.index(upper, n1, n2),
                               area, phase)
        return u
    mode = 1 if kind in (PulseKind.RSB1, PulseKind.BSB1) else 2
    blue = kind in (PulseKind.BSB1, PulseKind.BSB2)
    n_max = space.n_max_1 if mode == 1 else space.n_max_2
    n_other = space.n_max_2 if mode == 1 else space.n_max_1
    for k in range(n_other + 1):
        for n in range(n_max):
            # pair between Fock levels n and n+1 of the addressed mode
            lo_n, hi_n = (n, n + 1) if blue else (n + 1, n)

            def idx(e, nm):
                return space.index(e, nm, k) if mode == 1 else space.index(e, k, nm)

            _pair_rotation(u, idx(DOWN, lo_n), idx(UP, hi_n), area * math.sqrt(n + 1), phase)
    return u


def _apply_unitary(state: State, u: np.ndarray) -> State:
    if isinstance(state, PureState):
        return PureState(state.space, u @ state.amplitudes, state.weight)
    return DensityOp(state.space, u @ state.matrix @ u.conj().T, state.weight)


def resonant_pulse(state: State, kind: PulseKind, area: float, phase: float = 0.0) -> State:
    return _apply_unitary(state, pulse_unitary(state.space, kind, area, phase))


def bichromatic_pulse(state: State, params: SimParams, duration: float) -> State:
    """Evolve under the two-mode red-sideband Hamiltonian for ``duration`` ms.

    Pure input gives pure output (collapse operators ignored); a density
    operator is propagated with the full master equation.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    space = state.space
    H = interaction_hamiltonian(space, params)
    if isinstance(state, PureState):
        psi = UnitaryPropagator(H).evolve(state.amplitudes, [duration])[0]
        return PureState(space, psi, state.weight)
    if duration == 0:
        return state
    traj = evolve_lindblad(H, collapse_operators(space, params), state, [duration])
    return DensityOp(space, traj.states[-1].matrix, state.weight)


def tickle(state: State, alpha1: complex, alpha2: complex) -> State:
    """Instantaneous displacement D(alpha1) x D(alpha2) on the two modes.

    The truncated block of each displacement is exact; the probability it
    leaks above the cutoff must stay below the coherent-state tolerance.
    """
    space = state.space
    d1 = displacement_matrix(alpha1, space.n_max_1)
    d2 = displacement_matrix(alpha2, space.n_max_2)
    u = embed(space, mode1=d1, mode2=d2)
    out = _apply_unitary(state, u)
    if isinstance(out, PureState):
        kept = out.norm ** 2
        result = out.normalized()
    else:
        kept = float(np.real(np.trace(out.matrix)))
        result = DensityOp(space, out.matrix / kept, out.weight)
    if 1 - kept > COHERENT_TAIL_TOL:
        raise ValueError(
            f"displacement leaks {1 - kept:.2e} probability above the cutoffs "
            f"({space.n_max_1}, {space.n_max_2})"
        )
    return result


def thermal_distribution(n_th: float, n_max: int) -> np.ndarray:
    if n_th < 0:
        raise ValueError("n_th must be >= 0")
    if n_th == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    n = np.arange(n_max + 1)
    p = np.exp(n * np.log(n_th) - (n + 1) * np.log1p(n_th))
    return p / p.sum()


def thermal_state(space: SpaceConfig, n_th: float) -> DensityOp:
    p1 = thermal_distribution(n_th, space.n_max_1)
    p2 = thermal_distribution(n_th, space.n_max_2)
    diag = np.zeros(space.shape)
    diag[DOWN] = np.outer(p1, p2)
    return DensityOp(space, np.diag(diag.ravel()).astype(complex))


def postselect(state: State, kept_levels: Iterable[int]) -> tuple:
    """Project onto the kept electronic levels; returns (state, survival probability)."""
    kept = frozenset(kept_levels)
    if not kept:
        raise ValueError("kept_levels must be nonempty")
    space = state.space
    mask = np.zeros(space.dim, dtype=bool)
    for level in kept:
        mask |= space.level_mask(level)
    if isinstance(state, PureState):
        amps = np.where(mask, state.amplitudes, 0)
        prob = float(np.sum(np.abs(amps) ** 2)) / state.norm ** 2
        if prob < 1e-12:
            raise PostselectionError(f"postselection on levels {sorted(kept)} keeps nothing")
        return PureState(space, amps / np.linalg.norm(amps), state.weight * prob), prob
    m = np.where(np.outer(mask, mask), state.matrix, 0)
    prob = float(np.real(np.trace(m))) / float(np.real(np.trace(state.matrix)))
    if prob < 1e-12:
        raise PostselectionError(f"postselection on levels {sorted(kept)} keeps nothing")
    return DensityOp(space, m / np.real(np.trace(m)), state.weight * prob), prob


def tickle_duration_for(alpha: float, mode: int) -> float:
    """Drive time in ms that produces displacement ``alpha`` on ``mode``."""
    if mode not in TICKLE_RATE_PER_MS:
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return alpha / TICKLE_RATE_PER_MS[mode]


# --- programs -----------------------------------------------------------------

def initial_state(space: SpaceConfig, seq: SequenceSpec) -> State:
    if seq.initial == "GROUND":
        return basis_state(space, DOWN, 0, 0)
    return thermal_state(space, seq.n_th)


def run_sequence(space: SpaceConfig, seq: SequenceSpec, params: Optional[SimParams] = None,
                 state: Optional[State] = None) -> tuple:
    """Replay a program; returns (final state, survival probability of each postselection)."""
    state = initial_state(space, seq) if state is None else state
    survivals = []
    for step in seq.pulses:
        if isinstance(step, Postselect):
            state, prob = postselect(state, step.keep)
            survivals.append(prob)
        elif step.kind in RESONANT:
            state = resonant_pulse(state, step.kind, step.area, step.phase)
        elif step.kind is PulseKind.BICHROMATIC_RSB:
            if params is None:
                raise ValueError("a bichromatic pulse needs SimParams")
            state = bichromatic_pulse(state, params, step.duration)
        else:
            state = tickle(state, *step.alpha)
    return state, survivals


def single_phonon_program(phi: float, final_carrier: bool = True) -> SequenceSpec:
    """BSB1(pi/2) -> BSB2(pi) -> keep {up} -> CAR_A(pi).

    Pulse phases are chosen so the output is exactly
    (|0,1> + e^{i phi}|1,0>)/sqrt(2) with no stray global phase.
    """
    pulses = [
        PulseSpec(PulseKind.BSB1, area=math.pi / 2, phase=phi),
        PulseSpec(PulseKind.BSB2, area=math.pi, phase=0.0),
        Postselect(frozenset({UP})),
    ]
    if final_carrier:
        pulses.append(PulseSpec(PulseKind.CARRIER_A, area=math.pi, phase=math.pi))
    return SequenceSpec(tuple(pulses))


def prepare_single_phonon(space: SpaceConfig, phi: float, final_carrier: bool = True) -> PureState:
    return run_sequence(space, single_phonon_program(phi, final_carrier))[0]


def upsilon_program(phi1: float, phi2: float, bsb2_area: float = UPSILON_BSB2_AREA) -> SequenceSpec:
    """Eleven-step preparation of (|0>+|1>)(|0>+e^{i phi}|1>)/2 via the auxiliary level.

    The photon-adding step on the occupied state |up,1,0> is a red sideband on
    mode 2 (|up,1,0> -> |down,1,1>); on mode 1 it would not reach |1,1>.
    """
    pi = math.pi
    return SequenceSpec((
        PulseSpec(PulseKind.BSB1, area=pi / 3),
        PulseSpec(PulseKind.BSB2, area=bsb2_area, phase=phi2),
        PulseSpec(PulseKind.CARRIER_A, area=pi),
        PulseSpec(PulseKind.CARRIER_B, area=pi),
        Postselect(frozenset({UP, AUX})),
        PulseSpec(PulseKind.CARRIER_A, area=pi),
        PulseSpec(PulseKind.BSB1, area=pi / 2, phase=phi1),
        PulseSpec(PulseKind.RSB2, area=pi, phase=pi),
        PulseSpec(PulseKind.CARRIER_B, area=pi / 2),
        Postselect(frozenset({AUX})),
        PulseSpec(PulseKind.CARRIER_B, area=pi),
    ))


def prepare_upsilon(space: SpaceConfig, phi1: float, phi2: Optional[float] = None,
                    bsb2_area: float = UPSILON_BSB2_AREA) -> PureState:
    if space.electronic_levels != 3:
        raise ValueError("Upsilon preparation needs electronic_levels = 3")
    phi2 = phi1 if phi2 is None else phi2
    return run_sequence(space, upsilon_program(phi1, phi2, bsb2_area))[0]


def single_mode_program(mode: int = 2, excited: bool = False) -> SequenceSpec:
    """One phonon in ``mode`` only: BSB pi pulse, then a carrier pi pulse unless ``excited``."""
    kind = {1: PulseKind.BSB1, 2: PulseKind.BSB2}.get(mode)
    if kind is None:
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")
    pulses = [PulseSpec(kind, area=math.pi)]
    if not excited:
        pulses.append(PulseSpec(PulseKind.CARRIER_A, area=math.pi, phase=math.pi))
    return SequenceSpec(tuple(pulses))


def coherent_program(alpha1: complex, alpha2: complex, n_th: float = 0.0) -> SequenceSpec:
    """Thermal start (ground state if ``n_th`` is 0) followed by one tickle."""
    initial = "THERMAL" if n_th > 0 else "GROUND"
    return SequenceSpec((PulseSpec(PulseKind.TICKLE, alpha=(alpha1, alpha2)),),
                        initial=initial, n_th=n_th)


# --- config form ----------------------------------------------------------------

def _complex_to_list(z: complex) -> list:
    return [float(z.real), float(z.imag)]


def step_to_dict(step) -> dict:
    if isinstance(step, Postselect):
        return {"postselect": sorted(step.keep)}
    d = {"kind": step.kind.value, "phase": float(step.phase)}
    if step.area is not None:
        d["area"] = float(step.area)
    if step.duration is not None:
        d["duration"] = float(step.duration)
    if step.alpha is not None:
        d["alpha"] = [_complex_to_list(a) for a in step.alpha]
    return d


def step_from_dict(d: dict):
    if "postselect" in d:
        extra = set(d) - {"postselect"}
        if extra:
            raise ValueError(f"unknown key in postselect entry: {sorted(extra)[0]!r}")
        return Postselect(frozenset(d["postselect"]))
    allowed = {"kind", "area", "duration", "phase", "alpha"}
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"unknown key in pulse entry: {sorted(extra)[0]!r}")
    if "kind" not in d:
        raise ValueError("pulse entry needs a 'kind'")
    alpha = d.get("alpha")
    if alpha is not None:
        alpha = tuple(complex(*a) if isinstance(a, (list, tuple)) else complex(a) for a in alpha)
    return PulseSpec(PulseKind(d["kind"]), area=d.get("area"), duration=d.get("duration"),
                     phase=float(d.get("phase", 0.0)), alpha=alpha)


def sequence_to_dict(seq: SequenceSpec) -> dict:
    return {"initial": seq.initial, "n_th": float(seq.n_th),
            "pulses": [step_to_dict(p) for p in seq.pulses]}


def sequence_from_dict(d: dict) -> SequenceSpec:
    extra = set(d) - {"initial", "n_th", "pulses"}
    if extra:
        raise ValueError(f"unknown key in sequence: {sorted(extra)[0]!r}")
    return SequenceSpec(tuple(step_from_dict(p) for p in d.get("pulses", [])),
                        initial=d.get("initial", "GROUND"), n_th=float(d.get("n_th", 0.0)))
