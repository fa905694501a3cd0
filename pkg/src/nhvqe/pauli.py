"""Complex-weighted Pauli strings and sums.

Site 0 is the most significant bit of a computational basis index, so the
dense realization of ``"XI"`` is ``kron(X, I)``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .exceptions import DimensionError, ResourceError

PRUNE_TOL = 1e-14
MAX_DENSE_SITES = 12

_LETTERS = "IXYZ"

# single-site products: (a, b) -> (phase, letter) with a.b = phase * letter
_PRODUCT_TABLE = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


class BoundaryCondition(str, enum.Enum):
    OPEN = "open"
    PERIODIC = "periodic"

    def bonds(self, num_sites: int) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds of a chain with this boundary."""
        if self is BoundaryCondition.PERIODIC:
            if num_sites < 2:
                raise DimensionError("periodic boundary requires at least 2 sites")
            # for L = 2 the wrap-around bond repeats (0, 1), as the literal sum does
            return [(j, (j + 1) % num_sites) for j in range(num_sites)]
        return [(j, j + 1) for j in range(num_sites - 1)]


@dataclass(frozen=True)
class PauliTerm:
    coefficient: complex
    letters: str

    def __post_init__(self):
        c = complex(self.coefficient)
        if not (np.isfinite(c.real) and np.isfinite(c.imag)):
            raise ValueError(f"non-finite coefficient {c!r} for {self.letters!r}")
        if not self.letters or any(ch not in _LETTERS for ch in self.letters):
            raise ValueError(f"invalid Pauli word {self.letters!r}")
        object.__setattr__(self, "coefficient", c)

    @property
    def num_sites(self) -> int:
        return len(self.letters)

    def masks(self) -> tuple[int, int, int]:
        """Return ``(x_mask, z_mask, n_y)`` with site 0 as the top bit."""
        n = len(self.letters)
        x_mask = z_mask = 0
        n_y = 0
        for site, ch in enumerate(self.letters):
            bit = 1 << (n - 1 - site)
            if ch in "XY":
                x_mask |= bit
            if ch in "ZY":
                z_mask |= bit
            if ch == "Y":
                n_y += 1
        return x_mask, z_mask, n_y

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Apply the term to state(s) whose last axis has length 2**L."""
        dim = 1 << self.num_sites
        if psi.shape[-1] != dim:
            raise DimensionError(f"state dimension {psi.shape[-1]} != {dim}")
        x_mask, z_mask, n_y = self.masks()
        idx = np.arange(dim)
        phase = _parity_sign(idx & z_mask) * (1j**n_y) * self.coefficient
        # P|b> = phase(b) |b ^ x_mask>, so (P psi)[b ^ x_mask] = phase(b) psi[b]
        out = np.empty(psi.shape, dtype=complex)
        out[..., idx ^ x_mask] = phase * psi
        return out


def _parity_sign(values: np.ndarray) -> np.ndarray:
    bits = np.zeros(values.shape, dtype=np.int64)
    v = values.copy()
    while np.any(v):
        bits ^= v & 1
        v >>= 1
    return 1 - 2 * bits


def term_product(a: PauliTerm, b: PauliTerm) -> PauliTerm:
    """Operator product ``a @ b`` as a single Pauli term."""
    if a.num_sites != b.num_sites:
        raise DimensionError(f"site count mismatch: {a.num_sites} vs {b.num_sites}")
    phase = 1
    letters = []
    for x, y in zip(a.letters, b.letters):
        p, ch = _PRODUCT_TABLE[x, y]
        phase *= p
        letters.append(ch)
    return PauliTerm(a.coefficient * b.coefficient * phase, "".join(letters))


class PauliSum:
    """A simplified linear combination of Pauli strings on ``num_sites`` qubits.

    Terms are stored keyed by their letter word, so like terms are always
    merged; coefficients with modulus below ``PRUNE_TOL`` are dropped.
    """

    def __init__(self, terms: Iterable[PauliTerm | tuple] = (), num_sites: int | None = None):
        merged: dict[str, complex] = {}
        for t in terms:
            if not isinstance(t, PauliTerm):
                t = PauliTerm(*t)
            if num_sites is None:
                num_sites = t.num_sites
            elif t.num_sites != num_sites:
                raise DimensionError(
                    f"term {t.letters!r} acts on {t.num_sites} sites, expected {num_sites}"
                )
            merged[t.letters] = merged.get(t.letters, 0j) + t.coefficient
        if num_sites is None or num_sites < 1:
            raise DimensionError("PauliSum needs a positive number of sites")
        self.num_sites = int(num_sites)
        self._terms = {k: v for k, v in merged.items() if abs(v) >= PRUNE_TOL}

    @classmethod
    def identity(cls, num_sites: int, coefficient: complex = 1.0) -> "PauliSum":
        return cls([PauliTerm(coefficient, "I" * num_sites)], num_sites)

    @classmethod
    def from_dict(cls, terms: Mapping[str, complex], num_sites: int | None = None) -> "PauliSum":
        return cls([PauliTerm(c, w) for w, c in terms.items()], num_sites)

    @property
    def terms(self) -> list[PauliTerm]:
        return [PauliTerm(c, w) for w, c in sorted(self._terms.items())]

    def as_dict(self) -> dict[str, complex]:
        return dict(sorted(self._terms.items()))

    def coefficient(self, letters: str) -> complex:
        return self._terms.get(letters, 0j)

    def __iter__(self) -> Iterator[PauliTerm]:
        return iter(self.terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        body = ", ".join(f"({c:.6g}, {w!r})" for w, c in sorted(self._terms.items()))
        return f"PauliSum([{body}], num_sites={self.num_sites})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.num_sites == other.num_sites and self.as_dict() == other.as_dict()

    def allclose(self, other: "PauliSum", atol: float = 1e-12) -> bool:
        if self.num_sites != other.num_sites:
            return False
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(k) - other.coefficient(k)) <= atol for k in keys)

    def _check_same(self, other: "PauliSum"):
        if self.num_sites != other.num_sites:
            raise DimensionError(f"site count mismatch: {self.num_sites} vs {other.num_sites}")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PauliSum.identity(self.num_sites, other)
        if not isinstance(other, PauliSum):
            return NotImplemented
        self._check_same(other)
        return PauliSum(self.terms + other.terms, self.num_sites)

    __radd__ = __add__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float, complex, np.number)):
            return NotImplemented
        return PauliSum([PauliTerm(c * scalar, w) for w, c in self._terms.items()], self.num_sites)

    __rmul__ = __mul__

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        return sum_product(self, other)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= atol for c in self._terms.values())

    def to_json(self) -> dict:
        return {
            "num_sites": self.num_sites,
            "terms": [
                {"coeff_re": c.real, "coeff_im": c.imag, "letters": w}
                for w, c in sorted(self._terms.items())
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping | str) -> "PauliSum":
        if isinstance(data, str):
            data = json.loads(data)
        terms = [
            PauliTerm(complex(t["coeff_re"], t["coeff_im"]), t["letters"]) for t in data["terms"]
        ]
        return cls(terms, int(data["num_sites"]))


def adjoint(s: PauliSum) -> PauliSum:
    """Hermitian adjoint: conjugate every coefficient."""
    return PauliSum([PauliTerm(t.coefficient.conjugate(), t.letters) for t in s.terms], s.num_sites)


def sum_product(a: PauliSum, b: PauliSum) -> PauliSum:
    """Operator product of two sums, simplified."""
    if a.num_sites != b.num_sites:
        raise DimensionError(f"site count mismatch: {a.num_sites} vs {b.num_sites}")
    return PauliSum([term_product(x, y) for x in a.terms for y in b.terms], a.num_sites)


def build_ising(
    num_sites: int,
    lam: float,
    kappa: float,
    bc: BoundaryCondition | str = BoundaryCondition.OPEN,
) -> PauliSum:
    """Ising chain with a transverse z field and an imaginary longitudinal field.

    ``H = -1/2 sum_j (lam X_j X_{j+1} + Z_j + i kappa X_j)``, bonds per ``bc``.
    """
    if num_sites < 1:
        raise DimensionError("the chain needs at least one site")
    bc = BoundaryCondition(bc)
    terms = []
    if num_sites >= 2:
        for i, j in bc.bonds(num_sites):
            w = ["I"] * num_sites
            w[i] = w[j] = "X"
            terms.append(PauliTerm(-0.5 * lam, "".join(w)))
    for j in range(num_sites):
        w = "I" * j + "{}" + "I" * (num_sites - j - 1)
        terms.append(PauliTerm(-0.5, w.format("Z")))
        terms.append(PauliTerm(-0.5j * kappa, w.format("X")))
    return PauliSum(terms, num_sites)


def to_dense(s: PauliSum, max_sites: int = MAX_DENSE_SITES) -> np.ndarray:
    """Dense ``2**L x 2**L`` matrix of ``s``."""
    if s.num_sites > max_sites:
        raise ResourceError(f"{s.num_sites} sites exceeds the dense limit of {max_sites}")
    dim = 1 << s.num_sites
    out = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for t in s.terms:
        x_mask, z_mask, n_y = t.masks()
        out[cols ^ x_mask, cols] += t.coefficient * (1j**n_y) * _parity_sign(cols & z_mask)
    return out
