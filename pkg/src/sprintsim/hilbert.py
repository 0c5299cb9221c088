"""Truncated (atom x mode a x mode b) space and its operators.

Basis ordering is atom-major: flat index ``(atom * (N_a+1) + n_a) * (N_b+1) + n_b``.
Operators are scipy CSR matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LEVELS",
    "AtomLevelSet",
    "CompositeSpace",
    "annihilation_op",
    "number_op",
    "transition_op",
    "projector",
    "identity",
    "basis_state",
    "expectation",
]

LEVELS = ("alpha", "beta", "e0", "e1", "dark")


@dataclass(frozen=True)
class AtomLevelSet:
    """Ordered atomic levels; alpha, beta, e0 always present, e1/dark optional."""

    e1: bool = False
    dark: bool = False

    @property
    def names(self) -> tuple[str, ...]:
        out = ["alpha", "beta", "e0"]
        if self.e1:
            out.append("e1")
        if self.dark:
            out.append("dark")
        return tuple(out)

    def index(self, level: str) -> int:
        try:
            return self.names.index(level)
        except ValueError:
            raise KeyError(f"unknown atomic level {level!r}; available: {self.names}") from None

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class CompositeSpace:
    levels: AtomLevelSet
    n_a: int
    n_b: int

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 1:
            raise ValueError("Fock cutoffs must be >= 1")

    @property
    def d_atom(self) -> int:
        return len(self.levels)

    @property
    def dim(self) -> int:
        return self.d_atom * (self.n_a + 1) * (self.n_b + 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.d_atom, self.n_a + 1, self.n_b + 1)

    def flatten(self, atom: int, na: int, nb: int) -> int:
        return (atom * (self.n_a + 1) + na) * (self.n_b + 1) + nb

    def unflatten(self, i: int) -> tuple[int, int, int]:
        atom, rest = divmod(int(i), (self.n_a + 1) * (self.n_b + 1))
        na, nb = divmod(rest, self.n_b + 1)
        return atom, na, nb

    def with_cutoffs(self, n_a: int, n_b: int) -> "CompositeSpace":
        return CompositeSpace(self.levels, n_a, n_b)


def _lift(space: CompositeSpace, atom_op, a_op, b_op) -> sp.csr_matrix:
    ia = sp.identity(space.d_atom, format="csr") if atom_op is None else atom_op
    na = sp.identity(space.n_a + 1, format="csr") if a_op is None else a_op
    nb = sp.identity(space.n_b + 1, format="csr") if b_op is None else b_op
    return sp.kron(sp.kron(ia, na), nb, format="csr").astype(complex)


def _destroy(n: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n + 1, dtype=float)), 1, shape=(n + 1, n + 1), format="csr")


def annihilation_op(space: CompositeSpace, mode: str) -> sp.csr_matrix:
    """Photon annihilation operator for mode ``'a'`` or ``'b'``."""
    if mode == "a":
        return _lift(space, None, _destroy(space.n_a), None)
    if mode == "b":
        return _lift(space, None, None, _destroy(space.n_b))
    raise ValueError(f"mode must be 'a' or 'b', got {mode!r}")


def number_op(space: CompositeSpace, mode: str) -> sp.csr_matrix:
    a = annihilation_op(space, mode)
    return (a.conj().T @ a).tocsr()


def transition_op(space: CompositeSpace, from_level: str, to_level: str) -> sp.csr_matrix:
    """``|to><from|`` on the atom, identity on both modes."""
    i = space.levels.index(from_level)
    j = space.levels.index(to_level)
    atom = sp.csr_matrix(([1.0], ([j], [i])), shape=(space.d_atom, space.d_atom))
    return _lift(space, atom, None, None)


def projector(space: CompositeSpace, level: str) -> sp.csr_matrix:
    return transition_op(space, level, level)


def identity(space: CompositeSpace) -> sp.csr_matrix:
    return sp.identity(space.dim, dtype=complex, format="csr")


def basis_state(space: CompositeSpace, level: str = "alpha", na: int = 0, nb: int = 0) -> np.ndarray:
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.flatten(space.levels.index(level), na, nb)] = 1.0
    return psi


def expectation(state: np.ndarray, op) -> complex:
    """<psi|op|psi> / <psi|psi>."""
    state = np.asarray(state)
    if op.shape != (state.size, state.size):
        raise ValueError(f"operator shape {op.shape} does not match state of length {state.size}")
    norm2 = np.vdot(state, state).real
    if norm2 <= 0.0:
        raise ValueError("expectation of a zero-norm state is undefined")
    return complex(np.vdot(state, op @ state) / norm2)
