"""Depolarizing-noise density-matrix simulation and Richardson extrapolation.

Gates act as ``rho -> U rho U^dag`` through the same ``rotate`` kernel used
for state vectors: once along the row axis with ``theta`` and once along the
column axis with ``-theta`` (every generator is real, so ``conj(U)`` is the
gate at the opposite angle). After each gate the single-qubit channel

    eps(rho) = (1 - p) rho + p/3 (X rho X + Y rho Y + Z rho Z)

acts on every qubit the gate touched, ``p1`` for one-qubit gates and ``p2``
for the XX gates. Using ``X.X + Y.Y + Z.Z = 2 I Tr_q - id`` the channel is
evaluated as ``(1 - 4p/3) rho + (2p/3) I_q (x) Tr_q rho``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import AnsatzParams, GateKind, layer_layout, rotate, simulate_batch
from .cost import EigenSide, EnergyParam, VarianceObjective, _check
from .exceptions import ContractViolation, DimensionError
from .optimizer import EigenSolution, OptimizerConfig, Pin, two_step_optimize
from .pauli import PauliSum, to_dense

logger = logging.getLogger(__name__)

P_MAX = 0.75
# parameter-shift batches are simulated in chunks to bound memory
CHUNK = 24


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing probabilities after one-qubit (``p1``) and XX (``p2``) gates."""

    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not (np.isfinite(p) and 0.0 <= p <= P_MAX):
                raise ContractViolation(f"{name}={p} outside [0, {P_MAX}]")
            object.__setattr__(self, name, float(p))

    @property
    def is_zero(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0

    def scaled(self, c: float) -> "NoiseModel":
        return NoiseModel(c * self.p1, c * self.p2)


@dataclass(frozen=True)
class MitigationPlan:
    """Noise-rate multipliers for Richardson extrapolation; order is ``len - 1``."""

    scale_factors: tuple[float, ...] = (1.0, 2.0)

    def __post_init__(self):
        c = tuple(float(x) for x in self.scale_factors)
        if not c:
            raise ContractViolation("need at least one scale factor")
        if c[0] != 1.0:
            raise ContractViolation(f"scale factors must start at 1, got {c[0]}")
        if any(b <= a for a, b in zip(c, c[1:])):
            raise ContractViolation(f"scale factors must be strictly ascending, got {c}")
        object.__setattr__(self, "scale_factors", c)

    @property
    def order(self) -> int:
        return len(self.scale_factors) - 1

    def check(self, nm: NoiseModel):
        top = self.scale_factors[-1]
        if top * nm.p1 > P_MAX or top * nm.p2 > P_MAX:
            raise ContractViolation(f"scale {top} pushes ({nm.p1}, {nm.p2}) past {P_MAX}")

    @property
    def weights(self) -> np.ndarray:
        return richardson_weights(self.scale_factors)


@dataclass
class DensityMatrix:
    entries: np.ndarray
    num_sites: int

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        d = 1 << self.num_sites
        if self.entries.shape != (d, d):
            raise DimensionError(f"density matrix shape {self.entries.shape}, expected {(d, d)}")

    def check(self, tol: float = 1e-10):
        """Raise ``ContractViolation`` unless Hermitian, unit trace and PSD."""
        rho = self.entries
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ContractViolation("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > tol:
            raise ContractViolation(f"trace {np.trace(rho).real:.3e} != 1")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -1e-9:
            raise ContractViolation("density matrix has a negative eigenvalue")
        return self

    @property
    def purity(self) -> float:
        return float(np.einsum("ij,ji->", self.entries, self.entries).real)

    def expectation(self, op) -> complex:
        mat = to_dense(op) if isinstance(op, PauliSum) else np.asarray(op)
        return complex(np.einsum("ij,ji->", self.entries, mat))


def richardson_weights(scale_factors: Sequence[float]) -> np.ndarray:
    """Lagrange weights ``w_k = prod_{j != k} c_j / (c_j - c_k)`` for ``c -> 0``."""
    c = np.asarray(scale_factors, dtype=float)
    if len(np.unique(c)) != len(c):
        raise ContractViolation(f"coincident scale factors {list(c)}")
    w = np.ones(len(c))
    for k in range(len(c)):
        for j in range(len(c)):
            if j != k:
                w[k] *= c[j] / (c[j] - c[k])
    return w


def richardson_extrapolate(values, plan: MitigationPlan | Sequence[float]):
    """Zero-noise value of the polynomial through ``(c_k, values[k])``."""
    c = plan.scale_factors if isinstance(plan, MitigationPlan) else tuple(plan)
    values = np.asarray(values)
    if len(c) < 2:
        raise ContractViolation("extrapolation needs at least two scale factors")
    if values.shape[0] != len(c):
        raise ContractViolation(f"{values.shape[0]} values for {len(c)} scale factors")
    return np.tensordot(richardson_weights(c), values, axes=1)


def depolarize(rho: np.ndarray, qubit: int, p: float, num_sites: int) -> np.ndarray:
    """Apply the single-qubit channel to ``qubit`` of a (batch of) density matrices."""
    if p == 0.0:
        return rho
    lead = rho.shape[:-2]
    a, b = 1 << qubit, 1 << (num_sites - qubit - 1)
    r = rho.reshape(lead + (a, 2, b, a, 2, b))
    traced = r[..., :, 0, :, :, 0, :] + r[..., :, 1, :, :, 1, :]
    out = (1.0 - 4.0 * p / 3.0) * r
    out[..., :, 0, :, :, 0, :] += (2.0 * p / 3.0) * traced
    out[..., :, 1, :, :, 1, :] += (2.0 * p / 3.0) * traced
    return out.reshape(rho.shape)


def evolve_batch(thetas: np.ndarray, num_sites: int, depth: int, bc, nm: NoiseModel) -> np.ndarray:
    """Noisy ``rho(theta)`` for each row of ``thetas``; shape ``(B, 2**L, 2**L)``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    slots = layer_layout(num_sites, bc) * depth
    if thetas.shape[1] != len(slots):
        raise DimensionError(f"expected {len(slots)} angles per row, got {thetas.shape[1]}")
    d = 1 << num_sites
    rho = np.zeros((thetas.shape[0], d, d), dtype=complex)
    rho[:, 0, 0] = 1.0
    for k, (kind, sites) in enumerate(slots):
        rho = rotate(rho, kind, sites, thetas[:, k], num_sites, axis=-2)
        rho = rotate(rho, kind, sites, -thetas[:, k], num_sites, axis=-1)
        p = nm.p2 if kind is GateKind.RXX else nm.p1
        for q in sites:
            rho = depolarize(rho, q, p, num_sites)
    return rho


def noisy_ansatz(params: AnsatzParams, nm: NoiseModel, bc=None) -> DensityMatrix:
    """Density matrix of the ansatz with the channel after every gate."""
    if bc is not None and str(getattr(bc, "value", bc)) != params.bc.value:
        raise DimensionError(f"params were built for {params.bc.value} boundary")
    rho = evolve_batch(params.to_vector()[None, :], params.num_sites, params.depth, params.bc, nm)[0]
    return DensityMatrix(rho, params.num_sites)


class NoisyObjective(VarianceObjective):
    """Variance objective evaluated on noisy density matrices.

    With a ``plan`` the moments ``Tr[rho A]`` and ``Tr[rho H]`` are the
    Richardson combination over the scaled noise models. The cost is linear in
    the moments, so the combined cost and its parameter-shift and energy
    gradients are the extrapolated ones. The shift rule stays exact because
    each angle enters only through its own ``U rho U^dag``.
    """

    def __init__(self, h: PauliSum, nm: NoiseModel, side=EigenSide.RIGHT, depth: int = 1, bc="open",
                 plan: MitigationPlan | None = None):
        super().__init__(h, side, depth, bc)
        self.nm = nm
        self.plan = plan
        if plan is None:
            self.models, self.weights = [nm], np.ones(1)
        else:
            plan.check(nm)
            self.models = [nm.scaled(c) for c in plan.scale_factors]
            self.weights = plan.weights

    def moments(self, thetas: np.ndarray):
        thetas = np.atleast_2d(thetas)
        if self.nm.is_zero:
            # pure states: the statevector path is exact and cheaper
            return super().moments(thetas)
        quad = np.zeros(thetas.shape[0])
        hexp = np.zeros(thetas.shape[0], dtype=complex)
        qt, ht = self.quad_matrix.T, self.h_matrix.T
        for w, nm in zip(self.weights, self.models):
            for lo in range(0, thetas.shape[0], CHUNK):
                rho = evolve_batch(thetas[lo:lo + CHUNK], self.num_sites, self.depth, self.bc, nm)
                quad[lo:lo + CHUNK] += w * np.einsum("bij,ij->b", rho, qt).real
                hexp[lo:lo + CHUNK] += w * np.einsum("bij,ij->b", rho, ht)
        return quad, hexp


def noisy_cost(h: PauliSum, params: AnsatzParams, e: EnergyParam, nm: NoiseModel, side=EigenSide.RIGHT) -> float:
    """``Tr[rho(theta) M(E)]``; roundoff in ``[-1e-10, 0)`` is clamped to zero."""
    _check(h, params)
    obj = NoisyObjective(h, nm, side, params.depth, params.bc)
    val = obj.value(params.to_vector(), e)
    return 0.0 if -1e-10 <= val < 0 else float(val)


def noisy_expectation(op: PauliSum, params: AnsatzParams, nm: NoiseModel, plan: MitigationPlan | None = None) -> complex:
    """``Tr[rho O]``, Richardson-extrapolated over ``plan`` when given."""
    mat = to_dense(op)
    theta = params.to_vector()[None, :]
    if plan is None:
        rho = evolve_batch(theta, params.num_sites, params.depth, params.bc, nm)[0]
        return complex(np.einsum("ij,ji->", rho, mat))
    plan.check(nm)
    vals = [
        np.einsum("ij,ji->", evolve_batch(theta, params.num_sites, params.depth, params.bc, nm.scaled(c))[0], mat)
        for c in plan.scale_factors
    ]
    return complex(richardson_extrapolate(vals, plan))


@dataclass
class TraceRow:
    iteration: int
    cost: float
    fidelity: float
    e_r: float
    e_i: float
    condition: str
    phase: int = 0
    theta: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "phase": self.phase,
            "cost": self.cost,
            "fidelity": self.fidelity,
            "E_r": self.e_r,
            "E_i": self.e_i,
            "condition": self.condition,
        }


@dataclass
class ConditionRun:
    condition: str
    solution: EigenSolution
    trace: list[TraceRow] = field(default_factory=list)
    noise: NoiseModel | None = None

    def attach_fidelity(self, reference: np.ndarray) -> "ConditionRun":
        """Fill ``fidelity`` with ``<phi|rho(theta)|phi>`` of the physical state.

        The noisy and mitigated conditions share the unscaled noise model, so
        their fidelities describe the state the device would prepare.
        """
        p = self.solution.params
        fid = _fidelity_fn(reference, p.num_sites, p.depth, p.bc, self.noise)
        for row in self.trace:
            row.fidelity = fid(row.theta)
        return self


def _fidelity_fn(reference, num_sites, depth, bc, nm: NoiseModel | None):
    phi = np.asarray(reference, dtype=complex)
    phi = phi / np.linalg.norm(phi)
    if nm is None or nm.is_zero:
        return lambda theta: float(abs(np.vdot(phi, simulate_batch(theta[None, :], num_sites, depth, bc)[0])) ** 2)

    def fid(theta):
        rho = evolve_batch(theta[None, :], num_sites, depth, bc, nm)[0]
        return float(np.vdot(phi, rho @ phi).real)

    return fid


def _run(h, init, cfg, pinned, side, objective, condition, nm, reference) -> ConditionRun:
    rows: list[TraceRow] = []

    def record(phase, it, f, theta, energy):
        rows.append(TraceRow(len(rows), float(f), float("nan"), energy.e_r, energy.e_i, condition, phase,
                             np.array(theta, dtype=float, copy=True)))

    sol = two_step_optimize(h, init, cfg, pinned, side, objective, callback=record)
    run = ConditionRun(condition, sol, rows, nm)
    if reference is not None:
        run.attach_fidelity(reference)
    return run


def mitigated_optimize(
    h: PauliSum,
    init: tuple[AnsatzParams, EnergyParam],
    cfg: OptimizerConfig | None,
    nm: NoiseModel,
    plan: MitigationPlan | None = None,
    pinned: Pin | str = Pin.E_R,
    side=EigenSide.RIGHT,
    reference: np.ndarray | None = None,
) -> ConditionRun:
    """Two-step optimization with every evaluation noisy (and mitigated with ``plan``).

    ``plan=None`` or a single-node plan is plain noisy optimization. The trace
    holds one row per accepted iterate with the optimized cost and energy
    parameter; fidelities to ``reference`` are filled when it is given.
    """
    params, _ = init
    _check(h, params)
    if plan is not None and len(plan.scale_factors) == 1:
        plan = None
    condition = "mitigated" if plan is not None else "noisy"
    obj = NoisyObjective(h, nm, side, params.depth, params.bc, plan)
    return _run(h, init, cfg, pinned, side, obj, condition, nm, reference)


def ideal_optimize(h, init, cfg, pinned=Pin.E_R, side=EigenSide.RIGHT, reference=None) -> ConditionRun:
    """Noise-free counterpart of ``mitigated_optimize`` with the same trace format."""
    params, _ = init
    _check(h, params)
    obj = VarianceObjective(h, side, params.depth, params.bc)
    return _run(h, init, cfg, pinned, side, obj, "ideal", None, reference)


def compare_conditions(h, init, cfg, nm: NoiseModel, plan: MitigationPlan, pinned=Pin.E_R, side=EigenSide.RIGHT,
                       reference=None) -> dict[str, ConditionRun]:
    """Ideal, noisy and mitigated runs from the same initial point."""
    return {
        "ideal": ideal_optimize(h, init, cfg, pinned, side, reference),
        "noisy": mitigated_optimize(h, init, cfg, nm, None, pinned, side, reference),
        "mitigated": mitigated_optimize(h, init, cfg, nm, plan, pinned, side, reference),
    }
