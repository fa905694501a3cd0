"""Hadamard-test estimates of ``<psi_l| O |psi_r>`` and biorthogonal quantities.

The ancilla is qubit 0 of an ``(L + 1)``-qubit register. After a Hadamard
(and an ``S`` gate for the imaginary part) the ancilla controls
``W = U_l^dag O U_r`` on the system, and a final Hadamard precedes the
ancilla measurement:

    P_r(0) = 1/2 + 1/2 Re <0|W|0>,     P_i(0) = 1/2 - 1/2 Im <0|W|0>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import AnsatzParams, GateOp, apply_gate, zero_state
from .exceptions import ContractViolation, DegenerateOverlapError, DimensionError
from .pauli import PauliSum, PauliTerm

OVERLAP_FLOOR = 1e-10

_HADAMARD = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


@dataclass(frozen=True)
class HadamardOutcome:
    p_real: float
    p_imag: float
    shots: int = 0

    def __post_init__(self):
        for p in (self.p_real, self.p_imag):
            if not -1e-12 <= p <= 1 + 1e-12:
                raise ValueError(f"probability {p} outside [0, 1]")

    @property
    def value(self) -> complex:
        return complex(2.0 * self.p_real - 1.0, 1.0 - 2.0 * self.p_imag)


class _Preparation:
    """State-preparation unitary ``V`` with ``V|0> = psi`` and its inverse."""

    def __init__(self, source):
        if isinstance(source, AnsatzParams):
            self.num_sites = source.num_sites
            self.gates = source.gates()
            self.vector = None
        else:
            psi = np.asarray(source, dtype=complex)
            norm = np.linalg.norm(psi)
            if abs(norm - 1.0) > 1e-10:
                raise ContractViolation(f"state must be unit-normalized, got norm {norm}")
            self.num_sites = int(np.log2(psi.size))
            if 1 << self.num_sites != psi.size:
                raise DimensionError(f"state length {psi.size} is not a power of two")
            self.vector = psi
            # Householder reflection R with R (phase e_0) = psi, so V = phase * R
            a = psi[0]
            self.phase = a / abs(a) if abs(a) > 1e-300 else 1.0
            w = -psi.copy()
            w[0] += self.phase
            nw = np.vdot(w, w).real
            self.w = w if nw > 1e-28 else None
            self.nw = nw

    def _reflect(self, x):
        if self.w is None:
            return x
        return x - 2.0 * self.w * (np.vdot(self.w, x) / self.nw)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.vector is None:
            for g in self.gates:
                x = apply_gate(x, g)
            return x
        return self.phase * self._reflect(x)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        if self.vector is None:
            for g in reversed(self.gates):
                x = apply_gate(x, GateOp(g.kind, g.sites, -g.angle))
            return x
        return np.conj(self.phase) * self._reflect(x)


def _unitary_term(o) -> PauliTerm:
    if isinstance(o, PauliTerm):
        term = o
    elif isinstance(o, PauliSum):
        if len(o) != 1:
            raise ContractViolation(f"Hadamard test needs a single Pauli term, got {len(o)} terms")
        term = o.terms[0]
    else:
        raise ContractViolation(f"unsupported operator type {type(o).__name__}")
    if abs(abs(term.coefficient) - 1.0) > 1e-12:
        raise ContractViolation(f"operator coefficient {term.coefficient} is not unit modulus")
    return term


def _ancilla_zero_probability(prep_l: _Preparation, prep_r: _Preparation, term: PauliTerm, imag: bool) -> float:
    n = prep_r.num_sites
    reg = np.zeros((2, 1 << n), dtype=complex)
    reg[0] = zero_state(n)
    reg = _HADAMARD @ reg
    if imag:
        reg[1] *= 1j
    # controlled-W acts on the ancilla-1 branch only
    reg[1] = prep_l.inverse(term.apply(prep_r.forward(reg[1])))
    reg = _HADAMARD @ reg
    return float(np.vdot(reg[0], reg[0]).real)


def hadamard_test(u_left, u_right, o=None, shots: int = 0, rng=None) -> HadamardOutcome:
    """Ancilla-zero probabilities of the real- and imaginary-part circuits.

    ``u_left``/``u_right`` are ``AnsatzParams`` or unit state vectors; ``o``
    is a single unit-modulus Pauli term (identity when ``None``). With
    ``shots > 0`` each probability is replaced by a binomial frequency drawn
    from ``rng`` (a seed or ``numpy.random.Generator``).
    """
    prep_l, prep_r = _Preparation(u_left), _Preparation(u_right)
    if prep_l.num_sites != prep_r.num_sites:
        raise DimensionError(f"left state has {prep_l.num_sites} sites, right {prep_r.num_sites}")
    term = PauliTerm(1.0, "I" * prep_r.num_sites) if o is None else _unitary_term(o)
    if term.num_sites != prep_r.num_sites:
        raise DimensionError(f"operator acts on {term.num_sites} sites, states on {prep_r.num_sites}")
    p_r = _ancilla_zero_probability(prep_l, prep_r, term, imag=False)
    p_i = _ancilla_zero_probability(prep_l, prep_r, term, imag=True)
    p_r, p_i = (min(max(p, 0.0), 1.0) for p in (p_r, p_i))
    if shots:
        gen = np.random.default_rng(rng)
        p_r = gen.binomial(shots, p_r) / shots
        p_i = gen.binomial(shots, p_i) / shots
    return HadamardOutcome(p_r, p_i, int(shots))


def matrix_element(u_left, u_right, o=None, shots: int = 0, rng=None) -> complex:
    """``<psi_l|O|psi_r>`` as ``(2 P_r(0) - 1) + i (1 - 2 P_i(0))``."""
    return hadamard_test(u_left, u_right, o, shots, rng).value


def fidelity(u_left, u_right, shots: int = 0, rng=None) -> float:
    """``|<psi_l|psi_r>|`` for unit-normalized states."""
    return abs(matrix_element(u_left, u_right, None, shots, rng))


def fidelity_matrix(lefts, rights, shots: int = 0, rng=None) -> np.ndarray:
    """``|<psi_l_m|psi_r_n>|`` with rows ``m`` and columns ``n``."""
    gen = np.random.default_rng(rng) if shots else None
    return np.array([[fidelity(l, r, shots, gen) for r in rights] for l in lefts])


def biorthogonal_expectation(a: PauliSum, u_left, u_right, shots: int = 0, rng=None) -> complex:
    """``<psi_l|A|psi_r> / <psi_l|psi_r>`` from one Hadamard test per term.

    Raises
    ------
    DegenerateOverlapError
        When ``|<psi_l|psi_r>|`` is below ``1e-10``.
    """
    gen = np.random.default_rng(rng) if shots else None
    identity = "I" * a.num_sites
    overlap = matrix_element(u_left, u_right, None, shots, gen)
    if abs(overlap) < OVERLAP_FLOOR:
        raise DegenerateOverlapError(f"|<l|r>| = {abs(overlap):.3e} is below {OVERLAP_FLOOR}")
    total = 0j
    for t in a.terms:
        if t.letters == identity:
            total += t.coefficient * overlap
        else:
            total += t.coefficient * matrix_element(u_left, u_right, PauliTerm(1.0, t.letters), shots, gen)
    return total / overlap


def biorthogonal_expectation_exact(a: PauliSum, psi_left: np.ndarray, psi_right: np.ndarray) -> complex:
    """Direct ratio ``<l|A|r>/<l|r>`` on arbitrary (unnormalized) vectors."""
    from .pauli import to_dense

    overlap = np.vdot(psi_left, psi_right)
    scale = np.linalg.norm(psi_left) * np.linalg.norm(psi_right)
    if abs(overlap) < OVERLAP_FLOOR * scale:
        raise DegenerateOverlapError(f"relative overlap {abs(overlap) / scale:.3e} is below {OVERLAP_FLOOR}")
    return complex(np.vdot(psi_left, to_dense(a) @ psi_right) / overlap)
