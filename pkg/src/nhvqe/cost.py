"""Energy-variance cost ``<psi(theta)| M(E) |psi(theta)>`` and its gradients.

For the right problem ``M(E) = (H^dag - E*)(H - E)``, for the left problem
``M'(E) = (H - E)(H^dag - E*)``. Both expand to

    <A> - 2 Re(E* <H>) + |E|^2

with ``A = H^dag H`` (right) or ``H H^dag`` (left), so the cost is evaluated
from the two moments ``<A>`` and ``<H>``. The energy gradient is then
``(2 (E_r - Re<H>), 2 (E_i - Im<H>))`` on either side.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .circuit import AnsatzParams, simulate_batch
from .exceptions import DimensionError
from .pauli import PauliSum, adjoint, sum_product, to_dense

NEGATIVE_CLAMP = 1e-10
SHIFT = np.pi / 4


class EigenSide(str, enum.Enum):
    RIGHT = "right"
    LEFT = "left"


@dataclass(frozen=True)
class EnergyParam:
    e_r: float
    e_i: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.e_r) and np.isfinite(self.e_i)):
            raise ValueError(f"non-finite energy ({self.e_r}, {self.e_i})")
        object.__setattr__(self, "e_r", float(self.e_r))
        object.__setattr__(self, "e_i", float(self.e_i))

    @property
    def value(self) -> complex:
        return complex(self.e_r, self.e_i)

    @classmethod
    def from_complex(cls, z: complex) -> "EnergyParam":
        z = complex(z)
        return cls(z.real, z.imag)

    def conjugate(self) -> "EnergyParam":
        return EnergyParam(self.e_r, -self.e_i)


def variance_operator(h: PauliSum, e: EnergyParam, side: EigenSide | str = EigenSide.RIGHT) -> PauliSum:
    """Hermitian operator whose expectation is the cost."""
    side = EigenSide(side)
    shifted = h - e.value
    shifted_dag = adjoint(h) - e.value.conjugate()
    if side is EigenSide.RIGHT:
        return sum_product(shifted_dag, shifted)
    return sum_product(shifted, shifted_dag)


def _clamp(values):
    values = np.asarray(values, dtype=float)
    return np.where((values < 0) & (values >= -NEGATIVE_CLAMP), 0.0, values)


class VarianceObjective:
    """Cached dense moments of ``H`` for batched cost and gradient evaluation.

    Parameters
    ----------
    h : PauliSum
        Hamiltonian, possibly non-Hermitian.
    side : EigenSide
        Which eigenvector problem the cost targets.
    depth, bc :
        Ansatz shape used to turn flat angle vectors into states.
    """

    def __init__(self, h: PauliSum, side=EigenSide.RIGHT, depth: int = 1, bc="open"):
        self.h = h
        self.side = EigenSide(side)
        self.num_sites = h.num_sites
        self.depth = depth
        self.bc = bc
        hd = adjoint(h)
        quad = sum_product(hd, h) if self.side is EigenSide.RIGHT else sum_product(h, hd)
        self.quad_matrix = to_dense(quad)
        self.h_matrix = to_dense(h)

    def states(self, thetas: np.ndarray) -> np.ndarray:
        return simulate_batch(thetas, self.num_sites, self.depth, self.bc)

    def moments(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(<A>, <H>)`` for every row of ``thetas``."""
        psi = self.states(thetas)
        quad = (psi.conj() * (psi @ self.quad_matrix.T)).sum(axis=1).real
        hexp = (psi.conj() * (psi @ self.h_matrix.T)).sum(axis=1)
        return quad, hexp

    @staticmethod
    def combine(quad, hexp, e: EnergyParam):
        return quad - 2.0 * (e.e_r * hexp.real + e.e_i * hexp.imag) + e.e_r**2 + e.e_i**2

    def value(self, theta: np.ndarray, e: EnergyParam) -> float:
        quad, hexp = self.moments(np.asarray(theta)[None, :])
        return float(self.combine(quad, hexp, e)[0])

    def value_and_grad(self, theta: np.ndarray, e: EnergyParam, with_theta: bool = True):
        """Cost, angle gradient (parameter shift), energy gradient and ``<H>``.

        The angle gradient is ``None`` when ``with_theta`` is false.
        """
        theta = np.asarray(theta, dtype=float)
        n = theta.size
        if with_theta:
            shifts = SHIFT * np.eye(n)
            rows = np.vstack([theta[None, :], theta + shifts, theta - shifts])
        else:
            rows = theta[None, :]
        quad, hexp = self.moments(rows)
        costs = self.combine(quad, hexp, e)
        g_theta = costs[1:n + 1] - costs[n + 1:] if with_theta else None
        h0 = complex(hexp[0])
        g_e = np.array([2.0 * (e.e_r - h0.real), 2.0 * (e.e_i - h0.imag)])
        return float(costs[0]), g_theta, g_e, h0


def _check(h: PauliSum, params: AnsatzParams):
    if h.num_sites != params.num_sites:
        raise DimensionError(f"Hamiltonian has {h.num_sites} sites, ansatz {params.num_sites}")


def sampled_expectation(psi: np.ndarray, s: PauliSum, shots: int, rng=None) -> complex:
    """Estimate ``<psi|S|psi>`` measuring each Pauli term on its own.

    Each non-identity term gets ``shots`` single-shot +/-1 outcomes drawn from
    its exact expectation; the identity term is added exactly.
    """
    rng = np.random.default_rng(rng)
    total = 0j
    for t in s.terms:
        if set(t.letters) == {"I"}:
            total += t.coefficient
            continue
        unit = type(t)(1.0, t.letters)
        mean = float(np.vdot(psi, unit.apply(psi)).real)
        p_plus = min(max(0.5 * (1.0 + mean), 0.0), 1.0)
        k = rng.binomial(shots, p_plus)
        total += t.coefficient * (2.0 * k / shots - 1.0)
    return total


def cost(
    h: PauliSum,
    params: AnsatzParams,
    e: EnergyParam,
    side: EigenSide | str = EigenSide.RIGHT,
    shots: int = 0,
    rng=None,
) -> float:
    """Variance cost at ``(theta, E)``.

    Exact mode (``shots=0``) clamps roundoff in ``[-1e-10, 0)`` to zero. With
    ``shots > 0`` each Pauli term of ``M(E)`` is sampled and the raw estimate
    is returned, so it may be slightly negative.
    """
    _check(h, params)
    if shots:
        from .circuit import apply_ansatz

        psi = apply_ansatz(params)
        return float(sampled_expectation(psi, variance_operator(h, e, side), shots, rng).real)
    obj = VarianceObjective(h, side, params.depth, params.bc)
    return float(_clamp(obj.value(params.to_vector(), e)))


def grad_energy(h: PauliSum, params: AnsatzParams, e: EnergyParam, side=EigenSide.RIGHT) -> tuple[float, float]:
    """``(dL/dE_r, dL/dE_i)`` in closed form."""
    _check(h, params)
    obj = VarianceObjective(h, side, params.depth, params.bc)
    _, _, g_e, _ = obj.value_and_grad(params.to_vector(), e, with_theta=False)
    return float(g_e[0]), float(g_e[1])


def grad_theta(h: PauliSum, params: AnsatzParams, e: EnergyParam, side=EigenSide.RIGHT) -> AnsatzParams:
    """Parameter-shift gradient, shaped like ``params``.

    For gates ``exp(-i t G)`` with ``G**2 = I`` the shift rule
    ``f(t + pi/4) - f(t - pi/4)`` is exact.
    """
    _check(h, params)
    obj = VarianceObjective(h, side, params.depth, params.bc)
    _, g, _, _ = obj.value_and_grad(params.to_vector(), e)
    return params.with_vector(g)
