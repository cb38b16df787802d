"""Two-mode collective basis |psi_n^N> and the named bright/dark/coherent/Upsilon states.

For equal couplings the N-phonon manifold {|m, N-m>} is rotated into states
labelled by a bright index n: n = N is maximally bright, n = 0 is dark.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .hilbert import DOWN, PureState, SpaceConfig, displacement_matrix, product_state

# max truncation loss (probability) tolerated when building coherent states
COHERENT_TAIL_TOL = 1e-6


@dataclass(frozen=True, order=True)
class CollectiveIndex:
    N: int
    n: int

    def __post_init__(self):
        if self.N < 0 or not 0 <= self.n <= self.N:
            raise ValueError(f"invalid collective index (N={self.N}, n={self.n})")


def q_bounds(N: int, n: int, m: int) -> tuple[int, int]:
    """Summation range keeping every factorial argument non-negative."""
    return max(0, n + m - N), min(n, m)


def collective_coeff(N: int, n: int, m: int,
                     bounds: Callable[[int, int, int], tuple[int, int]] = q_bounds) -> float:
    """Coefficient of |m, N-m> in |psi_n^N>.

    The alternating sum is accumulated as an exact rational, then squared and
    multiplied by the integer prefactor before a single float conversion, so
    there is no cancellation error and no factorial overflow.
    """
    if N < 0 or not 0 <= n <= N or not 0 <= m <= N:
        raise ValueError(f"indices out of range: N={N}, n={n}, m={m}")
    q_lo, q_hi = bounds(N, n, m)
    s = Fraction(0)
    for q in range(q_lo, q_hi + 1):
        s += Fraction((-1) ** ((m - q) % 2),
                      math.factorial(q) * math.factorial(n - q)
                      * math.factorial(m - q) * math.factorial(N - n - m + q))
    if s == 0:
        return 0.0
    pref = Fraction(math.factorial(n) * math.factorial(N - n)
                    * math.factorial(m) * math.factorial(N - m), 2 ** N)
    return math.copysign(math.sqrt(pref * s * s), s)


def collective_vector(N: int, n: int, coeff: Callable[[int, int, int], float] = collective_coeff
                      ) -> np.ndarray:
    """Coefficients C_{m,n}^N for m = 0..N."""
    return np.array([coeff(N, n, m) for m in range(N + 1)])


def _motional_array(space: SpaceConfig) -> np.ndarray:
    return np.zeros((space.n_max_1 + 1, space.n_max_2 + 1), dtype=complex)


def _check_manifold(space: SpaceConfig, N: int) -> None:
    if N > min(space.n_max_1, space.n_max_2):
        raise ValueError(
            f"N={N} exceeds the Fock cutoffs ({space.n_max_1}, {space.n_max_2})"
        )


def collective_state(space: SpaceConfig, idx: CollectiveIndex, electronic: int = DOWN) -> PureState:
    _check_manifold(space, idx.N)
    psi = _motional_array(space)
    for m, c in enumerate(collective_vector(idx.N, idx.n)):
        psi[m, idx.N - m] = c
    return product_state(space, electronic, psi)


def bright_state(space: SpaceConfig, N: int, electronic: int = DOWN) -> PureState:
    return collective_state(space, CollectiveIndex(N, N), electronic)


def dark_state(space: SpaceConfig, N: int, electronic: int = DOWN) -> PureState:
    return collective_state(space, CollectiveIndex(N, 0), electronic)


def coherent_amplitudes(alpha: complex, n_max: int) -> tuple[np.ndarray, float]:
    """Truncated single-mode coherent amplitudes and the dropped tail probability."""
    col = displacement_matrix(alpha, n_max)[:, 0]
    return col, max(0.0, 1.0 - float(np.sum(np.abs(col) ** 2)))


def coherent_two_mode(space: SpaceConfig, alpha: complex, phi: float,
                      electronic: int = DOWN) -> PureState:
    """|alpha, e^{i phi} alpha>: phi = 0 is the coherent bright state, phi = pi the dark one."""
    return coherent_product(space, alpha, np.exp(1j * phi) * alpha, electronic)


def coherent_product(space: SpaceConfig, alpha1: complex, alpha2: complex,
                     electronic: int = DOWN) -> PureState:
    c1, tail1 = coherent_amplitudes(alpha1, space.n_max_1)
    c2, tail2 = coherent_amplitudes(alpha2, space.n_max_2)
    tail = 1.0 - (1.0 - tail1) * (1.0 - tail2)
    if tail > COHERENT_TAIL_TOL:
        raise ValueError(
            f"coherent state truncation loses {tail:.2e} probability at cutoffs "
            f"({space.n_max_1}, {space.n_max_2}); raise the cutoffs"
        )
    return product_state(space, electronic, np.outer(c1, c2)).normalized()


def upsilon_state(space: SpaceConfig, phi: float, electronic: int = DOWN) -> PureState:
    """(|0> + |1>)(|0> + e^{i phi}|1>) / 2 on mode 1 and mode 2."""
    psi = _motional_array(space)
    psi[0, 0] = psi[1, 0] = 0.5
    psi[0, 1] = psi[1, 1] = 0.5 * np.exp(1j * phi)
    return product_state(space, electronic, psi)


@dataclass(frozen=True)
class CollectiveDecomposition:
    entries: dict
    residual: float

    def amplitude(self, N: int, n: int) -> complex:
        return self.entries.get(CollectiveIndex(N, n), 0j)

    def weight(self, N: int, n: int) -> float:
        return abs(self.amplitude(N, n)) ** 2

    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.entries.values()))

    def to_json(self) -> str:
        return json.dumps({
            "entries": [
                {"N": k.N, "n": k.n, "re": float(v.real), "im": float(v.imag)}
                for k, v in sorted(self.entries.items())
            ],
            "residual": self.residual,
        })

    @classmethod
    def from_json(cls, text: str) -> "CollectiveDecomposition":
        d = json.loads(text)
        entries = {CollectiveIndex(e["N"], e["n"]): complex(e["re"], e["im"]) for e in d["entries"]}
        return cls(entries, float(d["residual"]))


def motional_part(state: PureState, level: int | None = None, tol: float = 1e-12) -> np.ndarray:
    amps = state.amplitudes.reshape(state.space.shape)
    pops = np.sum(np.abs(amps) ** 2, axis=(1, 2))
    if level is None:
        level = int(np.argmax(pops))
    others = float(pops.sum() - pops[level])
    if others > tol:
        raise ValueError(
            f"state is spread over several electronic levels (population {others:.2e} "
            f"outside level {level}); decomposition needs a single level"
        )
    return amps[level]


def decompose(state: PureState, level: int | None = None) -> CollectiveDecomposition:
    psi = motional_part(state, level)
    space = state.space
    entries = {}
    rebuilt = np.zeros_like(psi)
    for N in range(min(space.n_max_1, space.n_max_2) + 1):
        m = np.arange(N + 1)
        fock = psi[m, N - m]
        for n in range(N + 1):
            c = collective_vector(N, n)
            amp = complex(np.dot(c, fock))
            entries[CollectiveIndex(N, n)] = amp
            rebuilt[m, N - m] += amp * c
    residual = float(np.linalg.norm(psi - rebuilt))
    return CollectiveDecomposition(entries, residual)
