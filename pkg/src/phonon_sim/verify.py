"""Self-check suite: algebraic invariants plus comparisons against the dense oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .collective import (CollectiveIndex, bright_state, collective_coeff, collective_state,
                         collective_vector, dark_state, upsilon_state)
from .dynamics import SimParams, collapse_operators, evolve_lindblad, interaction_hamiltonian
from .hilbert import UP, SpaceConfig, apply, overlap
from .oracles import lindblad_expm_p_up, unitary_expm_p_up
from .sequences import prepare_single_phonon, prepare_upsilon
from .tomography import (PhononDistribution, RabiModel, Sideband, fit_distribution,
                         synthetic_trace)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def _result(name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(value < threshold), float(value), threshold, detail)


def check_orthonormality(coeff: Callable = collective_coeff, n_max: int = 10) -> CheckResult:
    """Gram matrix of every |psi_n^N> with N <= n_max against the identity."""
    try:
        worst = 0.0
        for N in range(n_max + 1):
            # different N live in disjoint Fock manifolds, so only same-N blocks can fail
            vecs = np.array([collective_vector(N, n, coeff) for n in range(N + 1)])
            gram = vecs @ vecs.T
            worst = max(worst, float(np.max(np.abs(gram - np.eye(N + 1)))))
    except (ValueError, ArithmeticError) as exc:
        return CheckResult("orthonormality", False, math.inf, 1e-12, f"coefficients failed: {exc}")
    return _result("orthonormality", worst, 1e-12, f"N <= {n_max}")


def check_ladder(n_max: int = 6) -> CheckResult:
    """H|down>|psi_n^N> = 2 pi g sqrt(2n) |up>|psi_{n-1}^{N-1}>."""
    g = 1.0
    space = SpaceConfig(n_max, n_max)
    H = interaction_hamiltonian(space, SimParams.symmetric(g))
    worst = 0.0
    for N in range(1, n_max + 1):
        for n in range(N + 1):
            lhs = apply(H, collective_state(space, CollectiveIndex(N, n))).amplitudes
            rhs = np.zeros_like(lhs)
            if n > 0:
                rhs = (2 * math.pi * g * math.sqrt(2 * n)
                       * collective_state(space, CollectiveIndex(N - 1, n - 1), UP).amplitudes)
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return _result("ladder relation", worst, 1e-10, f"N <= {n_max}")


def check_dark_bright(n_max: int = 6) -> CheckResult:
    space = SpaceConfig(n_max, n_max)
    g = 1.0
    H = interaction_hamiltonian(space, SimParams.symmetric(g))
    worst = 0.0
    for N in range(1, n_max + 1):
        worst = max(worst, apply(H, dark_state(space, N)).norm)
        elem = overlap(bright_state(space, N - 1, UP), apply(H, bright_state(space, N)))
        worst = max(worst, abs(elem / (2 * math.pi * g) - math.sqrt(2 * N)))
    return _result("dark annihilation / bright element", worst, 1e-10, f"N <= {n_max}")


def check_integrator_closed(samples: int = 41) -> CheckResult:
    """Zero-rate master equation against exp(-iHt) on a 2x3x3 space."""
    space = SpaceConfig(2, 2)
    params = SimParams.symmetric(5.2)
    H = interaction_hamiltonian(space, params)
    state = prepare_single_phonon(space, 0.0)
    times = np.linspace(0, 1 / (math.sqrt(2) * 5.2), samples)
    traj = evolve_lindblad(H, [], state.to_density(), times)
    ref = unitary_expm_p_up(H, state, times)
    return _result("integrator vs exp(-iHt), gamma = 0", float(np.max(np.abs(traj.p_up - ref))),
                   1e-8)


def check_integrator_open(samples: int = 41) -> CheckResult:
    """Dephasing master equation against the Liouvillian exponential on a 2x3x3 space."""
    space = SpaceConfig(2, 2)
    params = SimParams.symmetric(5.2, gamma_m=0.0, gamma_e=1.5)
    H = interaction_hamiltonian(space, params)
    cs = collapse_operators(space, params)
    rho0 = prepare_single_phonon(space, 0.0).to_density()
    times = np.linspace(0, 1 / (math.sqrt(2) * 5.2), samples)
    traj = evolve_lindblad(H, cs, rho0, times)
    ref = lindblad_expm_p_up(H, cs, rho0, times)
    return _result("integrator vs Liouvillian exponential", float(np.max(np.abs(traj.p_up - ref))),
                   1e-6)


def check_fit_roundtrip() -> CheckResult:
    """Noiseless RSB+BSB traces from three ground truths are recovered in max-norm."""
    model = RabiModel(250.0, 0.041)
    times = np.linspace(0, 2 / model.sideband_rabi, 60)
    poisson = np.array([math.exp(-1) / math.factorial(n) for n in range(8)])
    truths = {"ground": np.eye(8)[0], "half": np.r_[0.5, 0.5, np.zeros(6)],
              "poisson": poisson / poisson.sum()}
    worst = 0.0
    for p in truths.values():
        dist = PhononDistribution(p)
        rsb = synthetic_trace(dist, model, Sideband.RSB, times)
        bsb = synthetic_trace(dist, model, Sideband.BSB, times)
        fit = fit_distribution(rsb, bsb, model, nmax=7)
        worst = max(worst, float(np.max(np.abs(fit.distribution.probs - p))))
    return _result("tomography round trips", worst, 1e-4)


def check_preparation() -> CheckResult:
    space2 = SpaceConfig(3, 3)
    space3 = SpaceConfig(3, 3, 3)
    errs = [
        np.linalg.norm(prepare_single_phonon(space2, 0.0).amplitudes
                       - bright_state(space2, 1).amplitudes),
        np.linalg.norm(prepare_single_phonon(space2, math.pi).amplitudes
                       - dark_state(space2, 1).amplitudes),
    ]
    for phi in (0.0, math.pi / 2, math.pi):
        errs.append(np.linalg.norm(prepare_upsilon(space3, phi).amplitudes
                                   - upsilon_state(space3, phi).amplitudes))
    return _result("state preparation programs", float(max(errs)), 1e-10)


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "orthonormality": check_orthonormality,
    "ladder": check_ladder,
    "dark-bright": check_dark_bright,
    "integrator-closed": check_integrator_closed,
    "integrator-open": check_integrator_open,
    "fit-roundtrip": check_fit_roundtrip,
    "preparation": check_preparation,
}


def run_checks(name_filter: Optional[str] = None,
               coeff: Callable = collective_coeff) -> list[CheckResult]:
    """Run every check whose key contains ``name_filter``."""
    selected = [k for k in CHECKS if name_filter is None or name_filter in k]
    if not selected:
        raise ValueError(f"no check matches {name_filter!r}; known: {', '.join(CHECKS)}")
    out = []
    for key in selected:
        if key == "orthonormality":
            out.append(check_orthonormality(coeff))
        else:
            out.append(CHECKS[key]())
    return out


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  value      threshold"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {status:<6}  {r.value:<9.2e}  {r.threshold:.0e}"
                     + (f"  {r.detail}" if r.detail else ""))
    return "\n".join(lines)
