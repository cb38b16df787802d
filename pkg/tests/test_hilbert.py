import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonon_sim.hilbert import (AUX, DOWN, UP, DensityOp, OperatorMatrix, PureState, SpaceConfig,
                                annihilation, basis_state, boundary_population, creation,
                                displacement_matrix, excitation_number, expectation,
                                level_population, mode_marginals, number, with_levels)

cutoffs = st.integers(min_value=1, max_value=5)


@given(cutoffs, cutoffs, st.sampled_from([2, 3]))
def test_index_label_roundtrip(n1, n2, levels):
    space = SpaceConfig(n1, n2, levels)
    for i in range(space.dim):
        assert space.index(*space.label(i)) == i


def test_index_layout():
    space = SpaceConfig(2, 3)
    assert space.index(1, 1, 2) == 1 * 12 + 1 * 4 + 2
    assert space.dim == 24


@pytest.mark.parametrize("args", [(0, 2), (2, 0), (2, 2, 4), (2.0, 2)])
def test_space_rejects_bad_values(args):
    with pytest.raises((ValueError, TypeError)):
        SpaceConfig(*args)


def test_index_out_of_range():
    with pytest.raises(IndexError):
        SpaceConfig(1, 1).index(0, 2, 0)


@given(cutoffs, cutoffs)
def test_ladder_commutator_below_cutoff(n1, n2):
    space = SpaceConfig(n1, n2)
    for mode, top in ((1, n1), (2, n2)):
        a = annihilation(space, mode).matrix
        comm = a @ a.conj().T - a.conj().T @ a
        labels = [space.label(i) for i in range(space.dim)]
        keep = [i for i, lab in enumerate(labels) if lab[mode] < top]
        np.testing.assert_allclose(comm[np.ix_(keep, keep)], np.eye(len(keep)), atol=1e-14)


def test_number_operator():
    space = SpaceConfig(3, 2)
    psi = basis_state(space, UP, 3, 1)
    assert expectation(psi, number(space, 1)).real == pytest.approx(3)
    assert expectation(psi, number(space, 2)).real == pytest.approx(1)
    assert expectation(psi, excitation_number(space)).real == pytest.approx(4)


def test_creation_is_adjoint():
    space = SpaceConfig(2, 2)
    np.testing.assert_array_equal(creation(space, 2).matrix, annihilation(space, 2).matrix.conj().T)


@given(st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False))
@settings(max_examples=30)
def test_displacement_block_approaches_unitary(alpha):
    D = displacement_matrix(alpha, 40)
    # leading 10x10 block of a unitary with a negligible tail
    block = D[:, :10]
    np.testing.assert_allclose(block.conj().T @ block, np.eye(10), atol=1e-10)


def test_displacement_vacuum_is_poisson():
    col = displacement_matrix(1.2, 30)[:, 0]
    n = np.arange(31)
    want = np.exp(-1.44) * 1.44 ** n / np.array([math.factorial(k) for k in n], dtype=float)
    np.testing.assert_allclose(np.abs(col) ** 2, want, atol=1e-14)


def test_state_shape_checked():
    with pytest.raises(ValueError):
        PureState(SpaceConfig(1, 1), np.ones(3))
    with pytest.raises(ValueError):
        DensityOp(SpaceConfig(1, 1), np.eye(3))
    with pytest.raises(ValueError):
        OperatorMatrix(SpaceConfig(1, 1), np.eye(3))


def test_density_validate():
    space = SpaceConfig(1, 1)
    rho = basis_state(space, DOWN, 1, 0).to_density()
    assert rho.validate() is rho
    bad = rho.matrix.copy()
    bad[0, 0] = -0.5
    with pytest.raises(ValueError):
        DensityOp(space, bad).validate()


def test_arrays_are_read_only():
    psi = basis_state(SpaceConfig(1, 1), DOWN, 0, 0)
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 2


def test_json_roundtrip():
    space = SpaceConfig(2, 1)
    amps = np.arange(space.dim) * (1 + 0.5j)
    psi = PureState(space, amps / np.linalg.norm(amps), 0.25)
    back = PureState.from_json(psi.to_json())
    np.testing.assert_array_equal(back.amplitudes, psi.amplitudes)
    assert back.weight == 0.25 and back.space == space


def test_operator_space_mismatch():
    with pytest.raises(ValueError):
        number(SpaceConfig(1, 1), 1) @ number(SpaceConfig(1, 2), 1)


def test_marginals_and_populations():
    space = SpaceConfig(2, 2)
    amps = (basis_state(space, DOWN, 0, 1).amplitudes + basis_state(space, UP, 2, 0).amplitudes)
    psi = PureState(space, amps / math.sqrt(2))
    m1, m2 = mode_marginals(psi)
    np.testing.assert_allclose(m1, [0.5, 0, 0.5])
    np.testing.assert_allclose(m2, [0.5, 0.5, 0])
    assert level_population(psi.to_density(), UP) == pytest.approx(0.5)
    assert boundary_population(psi) == pytest.approx(0.5)


def test_with_levels():
    space3 = SpaceConfig(1, 1, 3)
    psi = basis_state(space3, UP, 1, 0)
    two = with_levels(psi, 2)
    assert two.space.electronic_levels == 2
    assert level_population(two, UP) == pytest.approx(1)
    with pytest.raises(ValueError):
        with_levels(basis_state(space3, AUX, 0, 0), 2)
    back = with_levels(two.to_density(), 3)
    assert back.matrix.shape == (12, 12)
