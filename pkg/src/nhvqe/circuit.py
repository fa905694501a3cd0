"""Layered XX/Z/X rotation ansatz and exact statevector simulation.

Every gate is ``exp(-i * angle * G)`` with ``G`` one of ``X_l X_m``, ``Z_l`` or
``X_l``. Since ``G**2 = I`` this is ``cos(angle) - i sin(angle) G``, which is
what the kernels below evaluate. The kernels act along one length-``2**L`` axis of an
array with optional leading batch axes, so the same code drives single
states, batches of parameter-shifted states and (row and column axes)
density matrices.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .exceptions import DimensionError
from .pauli import BoundaryCondition, PauliSum, to_dense

INIT_SCALE = 0.1


class GateKind(str, enum.Enum):
    RXX = "rxx"
    RZ = "rz"
    RX = "rx"


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    sites: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        want = 2 if self.kind is GateKind.RXX else 1
        if len(self.sites) != want:
            raise DimensionError(f"{self.kind.value} acts on {want} site(s), got {self.sites}")

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "sites": list(self.sites), "angle": float(self.angle)}


@lru_cache(maxsize=None)
def generator_action(kind: GateKind, sites: tuple[int, ...], num_sites: int) -> tuple[np.ndarray, np.ndarray]:
    """``(perm, sign)`` with ``(G psi)[b] = sign[b] * psi[perm[b]]``.

    Every generator here is a signed permutation of basis states: ``X``-type
    generators flip bits, ``Z`` multiplies by +/-1.
    """
    idx = np.arange(1 << num_sites)
    bits = [1 << (num_sites - 1 - s) for s in sites]
    if kind is GateKind.RZ:
        sign = np.where(idx & bits[0], -1.0, 1.0)
        return idx, sign
    mask = 0
    for b in bits:
        mask |= b
    return idx ^ mask, np.ones(idx.size)


def rotate(arr: np.ndarray, kind: GateKind, sites: Sequence[int], angles, num_sites: int, axis: int = -1) -> np.ndarray:
    """Apply ``exp(-i angle G)`` along ``axis`` of ``arr`` (length ``2**L``).

    ``angles`` is a scalar or has one entry per leading batch element.
    """
    perm, sign = generator_action(GateKind(kind), tuple(sites), num_sites)
    angles = np.asarray(angles, dtype=float)
    if angles.ndim:
        angles = angles.reshape((-1,) + (1,) * (arr.ndim - 1))
    axis = axis % arr.ndim
    shape = [1] * arr.ndim
    shape[axis] = sign.size
    moved = np.take(arr, perm, axis=axis) * sign.reshape(shape)
    return np.cos(angles) * arr - 1j * np.sin(angles) * moved


def layer_layout(num_sites: int, bc: BoundaryCondition | str = "open") -> list[tuple[GateKind, tuple[int, ...]]]:
    """Gate slots of one layer in application order: XX bonds, then Z, then X."""
    bc = BoundaryCondition(bc)
    bonds = bc.bonds(num_sites) if num_sites >= 2 else []
    slots = [(GateKind.RXX, b) for b in bonds]
    slots += [(GateKind.RZ, (l,)) for l in range(num_sites)]
    slots += [(GateKind.RX, (l,)) for l in range(num_sites)]
    return slots


def n_bonds(num_sites: int, bc: BoundaryCondition | str = "open") -> int:
    return len(BoundaryCondition(bc).bonds(num_sites)) if num_sites >= 2 else 0


@dataclass
class AnsatzParams:
    """Rotation angles of a depth-``P`` ansatz.

    ``alpha`` has shape ``(P, n_bonds)``, ``beta`` and ``gamma`` have shape
    ``(P, L)``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    num_sites: int
    bc: BoundaryCondition = BoundaryCondition.OPEN
    layout: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.bc = BoundaryCondition(self.bc)
        self.beta = np.array(self.beta, dtype=float)
        self.gamma = np.array(self.gamma, dtype=float)
        depth = self.beta.shape[0]
        self.alpha = np.array(self.alpha, dtype=float)
        if self.alpha.size == 0:
            self.alpha = self.alpha.reshape(depth, 0)
        expected = {
            "alpha": (depth, n_bonds(self.num_sites, self.bc)),
            "beta": (depth, self.num_sites),
            "gamma": (depth, self.num_sites),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise DimensionError(f"{name} has shape {got}, expected {shape}")
        self.layout = layer_layout(self.num_sites, self.bc)

    @property
    def depth(self) -> int:
        return self.beta.shape[0]

    @property
    def n_params(self) -> int:
        return self.alpha.size + self.beta.size + self.gamma.size

    @classmethod
    def zeros(cls, num_sites: int, depth: int, bc="open") -> "AnsatzParams":
        nb = n_bonds(num_sites, bc)
        return cls(np.zeros((depth, nb)), np.zeros((depth, num_sites)), np.zeros((depth, num_sites)), num_sites, bc)

    @classmethod
    def random(cls, num_sites: int, depth: int, bc="open", seed=None, scale: float = INIT_SCALE) -> "AnsatzParams":
        """Uniform angles in ``[-scale, scale]`` from a seeded generator."""
        rng = np.random.default_rng(seed)
        n = depth * (n_bonds(num_sites, bc) + 2 * num_sites)
        return cls.from_vector(rng.uniform(-scale, scale, size=n), num_sites, depth, bc)

    def to_vector(self) -> np.ndarray:
        """Flatten layer by layer as ``[alpha_j, beta_j, gamma_j]``, matching gate order."""
        return np.concatenate(
            [np.concatenate([self.alpha[j], self.beta[j], self.gamma[j]]) for j in range(self.depth)]
        ) if self.depth else np.zeros(0)

    @classmethod
    def from_vector(cls, vec, num_sites: int, depth: int, bc="open") -> "AnsatzParams":
        vec = np.asarray(vec, dtype=float)
        nb = n_bonds(num_sites, bc)
        per = nb + 2 * num_sites
        if vec.shape != (depth * per,):
            raise DimensionError(f"expected {depth * per} angles, got shape {vec.shape}")
        rows = vec.reshape(depth, per)
        return cls(rows[:, :nb], rows[:, nb:nb + num_sites], rows[:, nb + num_sites:], num_sites, bc)

    def with_vector(self, vec) -> "AnsatzParams":
        return AnsatzParams.from_vector(vec, self.num_sites, self.depth, self.bc)

    def gates(self) -> list[GateOp]:
        vec = self.to_vector()
        slots = self.layout * self.depth
        return [GateOp(kind, sites, angle) for (kind, sites), angle in zip(slots, vec)]

    def to_json(self) -> dict:
        return {
            "num_sites": self.num_sites,
            "depth": self.depth,
            "bc": self.bc.value,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
        }

    @classmethod
    def from_json(cls, data) -> "AnsatzParams":
        if isinstance(data, str):
            data = json.loads(data)
        depth = int(data["depth"])
        nb = n_bonds(int(data["num_sites"]), data["bc"])
        alpha = np.array(data["alpha"], dtype=float).reshape(depth, nb)
        return cls(alpha, data["beta"], data["gamma"], int(data["num_sites"]), data["bc"])


def zero_state(num_sites: int) -> np.ndarray:
    if num_sites < 1:
        raise DimensionError("need at least one site")
    psi = np.zeros(1 << num_sites, dtype=complex)
    psi[0] = 1.0
    return psi


def num_sites_of(psi: np.ndarray) -> int:
    dim = psi.shape[-1]
    n = dim.bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise DimensionError(f"state length {dim} is not a power of two")
    return n


def apply_gate(psi: np.ndarray, gate: GateOp) -> np.ndarray:
    """Return ``exp(-i angle G) psi`` for a single state vector."""
    n = num_sites_of(psi)
    if any(s < 0 or s >= n for s in gate.sites):
        raise DimensionError(f"gate sites {gate.sites} out of range for {n} sites")
    return rotate(np.asarray(psi, dtype=complex), gate.kind, gate.sites, gate.angle, n)


def simulate_batch(thetas: np.ndarray, num_sites: int, depth: int, bc="open") -> np.ndarray:
    """Prepare ``U(theta)|0>`` for every row of ``thetas``; returns ``(B, 2**L)``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    slots = layer_layout(num_sites, bc) * depth
    if thetas.shape[1] != len(slots):
        raise DimensionError(f"expected {len(slots)} angles per row, got {thetas.shape[1]}")
    cos, msin = np.cos(thetas)[:, :, None], -1j * np.sin(thetas)[:, :, None]
    actions = [generator_action(kind, sites, num_sites) for kind, sites in slots]
    psi = np.zeros((thetas.shape[0], 1 << num_sites), dtype=complex)
    psi[:, 0] = 1.0
    for k, (perm, sign) in enumerate(actions):
        psi = cos[:, k] * psi + msin[:, k] * (psi[:, perm] * sign)
    return psi


def apply_ansatz(params: AnsatzParams, bc: BoundaryCondition | str | None = None) -> np.ndarray:
    """State ``U(theta)|0>``; layers in order 1..P, each XX block then Z then X."""
    if bc is not None and BoundaryCondition(bc) is not params.bc:
        raise DimensionError(f"params were built for {params.bc.value} boundary, not {BoundaryCondition(bc).value}")
    return simulate_batch(params.to_vector()[None, :], params.num_sites, params.depth, params.bc)[0]


def expectation(psi: np.ndarray, s: PauliSum) -> complex:
    """``<psi|S|psi>`` (complex for non-Hermitian ``S``)."""
    if num_sites_of(psi) != s.num_sites:
        raise DimensionError(f"state has {num_sites_of(psi)} sites, operator {s.num_sites}")
    return complex(np.vdot(psi, to_dense(s) @ psi))


def circuit_to_json(params: AnsatzParams) -> str:
    return json.dumps([g.to_json() for g in params.gates()])
