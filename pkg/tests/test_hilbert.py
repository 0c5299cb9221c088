import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from sprintsim.hilbert import (
    AtomLevelSet,
    CompositeSpace,
    annihilation_op,
    basis_state,
    expectation,
    number_op,
    projector,
    transition_op,
)

levels = st.builds(AtomLevelSet, e1=st.booleans(), dark=st.booleans())
spaces = st.builds(CompositeSpace, levels, st.integers(1, 4), st.integers(1, 4))


@given(spaces)
def test_flatten_round_trip(space):
    for i in range(space.dim):
        assert space.flatten(*space.unflatten(i)) == i


@given(spaces)
def test_commutator_below_cutoff(space):
    for mode, n in (("a", space.n_a), ("b", space.n_b)):
        a = annihilation_op(space, mode)
        comm = (a @ a.conj().T - a.conj().T @ a).toarray()
        num = np.rint(number_op(space, mode).diagonal().real)
        # [a, a^dag] = 1 except on the top Fock level
        d = np.diag(comm).real
        assert np.allclose(d[num < n], 1.0)
        assert np.allclose(comm - np.diag(np.diag(comm)), 0.0)


@given(spaces)
def test_projectors_resolve_identity(space):
    total = sum(projector(space, lv) for lv in space.levels.names)
    assert abs(total - sp.identity(space.dim)).max() == 0


def test_modes_commute():
    space = CompositeSpace(AtomLevelSet(dark=True), 3, 2)
    a, b = annihilation_op(space, "a"), annihilation_op(space, "b")
    assert abs(a @ b - b @ a).max() == 0


def test_transition_moves_population():
    space = CompositeSpace(AtomLevelSet(), 2, 2)
    psi = basis_state(space, "alpha", 1, 0)
    out = transition_op(space, "alpha", "e0") @ psi
    assert np.allclose(out, basis_state(space, "e0", 1, 0))


def test_expectation_number():
    space = CompositeSpace(AtomLevelSet(), 3, 3)
    psi = basis_state(space, "beta", 2, 1)
    assert expectation(psi, number_op(space, "a")) == pytest.approx(2)
    assert expectation(psi, number_op(space, "b")) == pytest.approx(1)


def test_unknown_level():
    space = CompositeSpace(AtomLevelSet(), 2, 2)
    with pytest.raises(KeyError, match="e1"):
        projector(space, "e1")
    with pytest.raises(ValueError):
        CompositeSpace(AtomLevelSet(), 0, 2)
