import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhvqe.circuit import AnsatzParams, GateOp, apply_ansatz
from nhvqe.cost import EnergyParam, VarianceObjective, cost
from nhvqe.exceptions import ContractViolation
from nhvqe.noise import (
    DensityMatrix,
    MitigationPlan,
    NoiseModel,
    NoisyObjective,
    compare_conditions,
    depolarize,
    evolve_batch,
    mitigated_optimize,
    noisy_ansatz,
    noisy_cost,
    noisy_expectation,
    richardson_extrapolate,
    richardson_weights,
)
from nhvqe.optimizer import OptimizerConfig
from nhvqe.pauli import build_ising
from reference import X, Y, Z, gate_matrix, site_op


def kraus_reference(params: AnsatzParams, p1: float, p2: float) -> np.ndarray:
    """Gate-by-gate evolution with explicit Pauli sandwiches."""
    n = params.num_sites
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1
    for g in params.gates():
        u = gate_matrix(g.kind.value, g.sites, n, g.angle)
        rho = u @ rho @ u.conj().T
        p = p2 if g.kind.value == "rxx" else p1
        for q in g.sites:
            paulis = [site_op(P, q, n) for P in (X, Y, Z)]
            rho = (1 - p) * rho + p / 3 * sum(s @ rho @ s for s in paulis)
    return rho


def test_matches_kraus_reference():
    params = AnsatzParams.random(3, 2, seed=4, scale=1.5)
    got = noisy_ansatz(params, NoiseModel(0.02, 0.05)).entries
    assert np.allclose(got, kraus_reference(params, 0.02, 0.05), atol=1e-13)


def test_zero_noise_is_pure_state():
    params = AnsatzParams.random(3, 2, seed=1, scale=1.0)
    psi = apply_ansatz(params)
    dm = noisy_ansatz(params, NoiseModel())
    assert np.allclose(dm.entries, np.outer(psi, psi.conj()), atol=1e-12)
    assert abs(dm.purity - 1) < 1e-10


def test_full_depolarization_fixed_point():
    rho = np.zeros((2, 2), dtype=complex)
    rho[0, 0] = 1
    u = gate_matrix("rx", (0,), 1, 0.37)
    out = depolarize(u @ rho @ u.conj().T, 0, 0.75, 1)
    assert np.allclose(out, np.eye(2) / 2, atol=1e-15)


@given(seed=st.integers(0, 10**6), p1=st.floats(0, 0.75), p2=st.floats(0, 0.75))
def test_density_invariants(seed, p1, p2):
    dm = noisy_ansatz(AnsatzParams.random(3, 3, seed=seed, scale=2.0), NoiseModel(p1, p2))
    dm.check()
    assert abs(np.trace(dm.entries) - 1) < 1e-12
    if p1 > 1e-6 or p2 > 1e-6:
        assert dm.purity < 1


def test_noisy_cost_reduces_to_ideal():
    h = build_ising(3, 1.0, 0.4)
    params = AnsatzParams.random(3, 2, seed=2, scale=1.0)
    e = EnergyParam(-1.2, 0.3)
    assert abs(noisy_cost(h, params, e, NoiseModel()) - cost(h, params, e)) < 1e-12
    obj = NoisyObjective(h, NoiseModel(1e-12, 0.0), "right", 2)
    assert abs(obj.value(params.to_vector(), e) - cost(h, params, e)) < 1e-9


def test_parameter_shift_exact_under_noise():
    h = build_ising(2, 1.0, 0.4)
    obj = NoisyObjective(h, NoiseModel(0.01, 0.05), "right", 2, plan=MitigationPlan((1, 2, 3)))
    rng = np.random.default_rng(0)
    theta = rng.uniform(-1, 1, 2 * 5)
    e = EnergyParam(-0.7, 0.1)
    _, g, _, _ = obj.value_and_grad(theta, e)
    d = 1e-5
    fd = [(obj.value(theta + d * v, e) - obj.value(theta - d * v, e)) / (2 * d) for v in np.eye(theta.size)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_energy_optimum_shifts_under_noise():
    h = build_ising(3, 1.0, 0.4)
    params = AnsatzParams.random(3, 2, seed=8, scale=1.0)
    ideal = VarianceObjective(h, "right", 2).moments(params.to_vector()[None, :])[1][0]
    noisy = NoisyObjective(h, NoiseModel(0.001, 0.01), "right", 2).moments(params.to_vector()[None, :])[1][0]
    assert abs(noisy - ideal) > 1e-6


def test_richardson_weights_and_exactness():
    for c in [(1, 2), (1, 2, 3), (1, 1.5, 2.5, 4)]:
        assert abs(richardson_weights(c).sum() - 1) < 1e-12
    assert np.allclose(richardson_weights((1, 2)), [2, -1])
    f = lambda c: 0.7 - 0.3 * c
    assert abs(richardson_extrapolate([f(1), f(2)], MitigationPlan()) - 0.7) <= 1e-12
    g = lambda c: (0.2 + 0.1j) + 0.5 * c - 0.25 * c**2
    assert abs(richardson_extrapolate([g(1), g(2), g(3)], (1, 2, 3)) - (0.2 + 0.1j)) <= 1e-12


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_richardson_recovers_quadratics(a, b, c):
    vals = [a + b * s + c * s * s for s in (1, 2, 3)]
    assert abs(richardson_extrapolate(vals, (1, 2, 3)) - a) <= 1e-12 * (1 + abs(a) + abs(b) + abs(c)) * 50


def test_mitigated_expectation_closer_to_ideal():
    h = build_ising(4, 1.0, 0.4)
    params = AnsatzParams.random(4, 4, seed=0, scale=1.0)
    psi = apply_ansatz(params)
    from nhvqe.pauli import to_dense

    ideal = np.vdot(psi, to_dense(h) @ psi)
    nm = NoiseModel(0.001, 0.01)
    raw = noisy_expectation(h, params, nm)
    mit = noisy_expectation(h, params, nm, MitigationPlan())
    assert abs(mit - ideal) < abs(raw - ideal)


def test_single_node_plan_is_plain_noisy():
    h = build_ising(2, 1.0, 0.4)
    init = (AnsatzParams.random(2, 1, seed=0), EnergyParam(-1.0))
    cfg = OptimizerConfig(max_iters=30)
    a = mitigated_optimize(h, init, cfg, NoiseModel(0.01, 0.02), MitigationPlan((1,)))
    b = mitigated_optimize(h, init, cfg, NoiseModel(0.01, 0.02), None)
    assert a.condition == b.condition == "noisy"
    assert [r.cost for r in a.trace] == [r.cost for r in b.trace]


def test_zero_noise_conditions_coincide():
    h = build_ising(2, 1.0, 0.4)
    init = (AnsatzParams.random(2, 2, seed=0), EnergyParam(-1.5))
    runs = compare_conditions(h, init, OptimizerConfig(), NoiseModel(), MitigationPlan(), reference=np.eye(4)[0])
    ref = runs["ideal"].trace
    for name in ("noisy", "mitigated"):
        tr = runs[name].trace
        assert len(tr) == len(ref)
        assert max(abs(x.cost - y.cost) + abs(x.e_r - y.e_r) + abs(x.e_i - y.e_i) for x, y in zip(tr, ref)) < 1e-10
        assert all(np.isfinite(r.fidelity) for r in tr)


def test_validation():
    with pytest.raises(ContractViolation):
        NoiseModel(0.8, 0.0)
    with pytest.raises(ContractViolation):
        MitigationPlan((1, 1))
    with pytest.raises(ContractViolation):
        MitigationPlan((2, 3))
    with pytest.raises(ContractViolation):
        MitigationPlan((1, 3)).check(NoiseModel(0.3, 0.0))
    with pytest.raises(ContractViolation):
        richardson_extrapolate([1.0], (1,))
    with pytest.raises(ContractViolation):
        richardson_weights((1, 2, 2))
    with pytest.raises(ContractViolation):
        DensityMatrix(np.eye(2) * 0.6, 1).check()
    assert evolve_batch(np.zeros((2, 2)), 1, 1, "open", NoiseModel(0.1, 0)).shape == (2, 2, 2)
    assert GateOp("rx", (0,), 0.0).kind.value == "rx"
