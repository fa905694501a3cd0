"""scikit-learn style wrappers around the variational eigensolver.

``fit`` takes the Hamiltonian (a ``PauliSum``) in place of a data matrix;
learned quantities carry the usual trailing underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .circuit import AnsatzParams, apply_ansatz
from .cost import EigenSide, EnergyParam
from .optimizer import OptimizerConfig, Pin, ScanConfig, spectrum_scan, two_step_optimize
from .overlap import biorthogonal_expectation, fidelity
from .validation import check_bc, check_int, check_operator, check_real


class VarianceEigensolver(BaseEstimator):
    """Single eigenpair nearest ``(e_r0, e_i0)`` in the pinned component.

    Parameters
    ----------
    depth : int
        Number of ansatz layers.
    side : {"right", "left"}
    e_r0, e_i0 : float
        Initial energy parameter.
    pinned : {"pin_e_r", "pin_e_i"}
        Component held fixed during phase 1.
    method : {"lbfgs", "gd", "momentum"}
    init_scale : float
        Half-width of the uniform initial angles.
    seed : int
    """

    def __init__(self, depth=3, side="right", e_r0=-3.0, e_i0=0.0, pinned="pin_e_r", bc="open",
                 method="lbfgs", learning_rate=0.05, max_iters=5000, init_scale=0.1, seed=0):
        self.depth = depth
        self.side = side
        self.e_r0 = e_r0
        self.e_i0 = e_i0
        self.pinned = pinned
        self.bc = bc
        self.method = method
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.init_scale = init_scale
        self.seed = seed

    def _config(self) -> OptimizerConfig:
        return OptimizerConfig(learning_rate=self.learning_rate, max_iters=self.max_iters,
                               seed=self.seed, method=self.method)

    def fit(self, h, y=None):
        h = check_operator(h)
        depth = check_int(self.depth, "depth", 1)
        bc = check_bc(self.bc)
        init = AnsatzParams.random(h.num_sites, depth, bc, seed=self.seed,
                                   scale=check_real(self.init_scale, "init_scale", lo=0.0))
        energy = EnergyParam(check_real(self.e_r0, "e_r0"), check_real(self.e_i0, "e_i0"))
        sol = two_step_optimize(h, (init, energy), self._config(), Pin(self.pinned), EigenSide(self.side))
        self.solution_ = sol
        self.eigenvalue_ = sol.energy.value
        self.params_ = sol.params
        self.cost_ = sol.final_cost
        self.converged_ = sol.converged
        self.n_sites_ = h.num_sites
        return self

    def transform(self, X=None):
        """Prepared state ``U(theta*)|0>``."""
        check_is_fitted(self, "params_")
        return apply_ansatz(self.params_)

    def predict(self, X=None) -> complex:
        check_is_fitted(self, "eigenvalue_")
        return self.eigenvalue_

    def score(self, X=None, y=None) -> float:
        """Negative final cost (higher is better)."""
        check_is_fitted(self, "cost_")
        return -self.cost_


class SpectrumScanner(BaseEstimator):
    """Low-lying spectrum by walking the pinned real energy upward."""

    def __init__(self, depth=3, side="right", n_levels=3, e_r0=-3.0, delta_e=0.1, step=0.1,
                 energy_match_tol=1e-4, max_attempts=60, bc="open", method="lbfgs", seed=0):
        self.depth = depth
        self.side = side
        self.n_levels = n_levels
        self.e_r0 = e_r0
        self.delta_e = delta_e
        self.step = step
        self.energy_match_tol = energy_match_tol
        self.max_attempts = max_attempts
        self.bc = bc
        self.method = method
        self.seed = seed

    def fit(self, h, y=None):
        h = check_operator(h)
        scan = ScanConfig(
            n=check_int(self.n_levels, "n_levels"),
            delta_e=check_real(self.delta_e, "delta_e", lo=0.0),
            step=check_real(self.step, "step", lo=0.0),
            e_r0=check_real(self.e_r0, "e_r0"),
            energy_match_tol=check_real(self.energy_match_tol, "energy_match_tol", lo=0.0),
            max_attempts=check_int(self.max_attempts, "max_attempts", 1),
        )
        cfg = OptimizerConfig(seed=self.seed, method=self.method)
        shape = (h.num_sites, check_int(self.depth, "depth", 1), check_bc(self.bc).value)
        self.report_ = spectrum_scan(h, cfg, scan, shape, EigenSide(self.side))
        self.solutions_ = self.report_.solutions
        self.eigenvalues_ = self.report_.eigenvalues
        self.complete_ = self.report_.complete
        return self

    def predict(self, X=None) -> np.ndarray:
        check_is_fitted(self, "eigenvalues_")
        return self.eigenvalues_

    def transform(self, X=None) -> np.ndarray:
        """Prepared states, one column per recorded level."""
        check_is_fitted(self, "solutions_")
        return np.stack([apply_ansatz(s.params) for s in self.solutions_], axis=1)


class BiorthogonalEstimator(BaseEstimator):
    """Right and left eigenstates of one level and biorthogonal expectations.

    ``fit`` solves the right and left problems from the same energy guess;
    ``predict(ops)`` returns ``<l|A|r>/<l|r>`` for each operator via Hadamard
    tests (``shots=0`` for exact probabilities).
    """

    def __init__(self, depth=3, e_r0=-3.0, e_i0=0.0, bc="open", method="lbfgs", shots=0, seed=0):
        self.depth = depth
        self.e_r0 = e_r0
        self.e_i0 = e_i0
        self.bc = bc
        self.method = method
        self.shots = shots
        self.seed = seed

    def fit(self, h, y=None):
        h = check_operator(h)
        common = dict(depth=self.depth, e_r0=self.e_r0, e_i0=self.e_i0, bc=self.bc, method=self.method, seed=self.seed)
        self.right_ = VarianceEigensolver(side="right", **common).fit(h)
        # the left state of E pairs with the right state of E, so target it;
        # conjugate partners share E_r, so pin E_i when it tells them apart
        e = self.right_.eigenvalue_
        pin = "pin_e_i" if abs(e.imag) > 1e-6 else "pin_e_r"
        self.left_ = VarianceEigensolver(side="left", pinned=pin, **{**common, "e_r0": e.real, "e_i0": e.imag}).fit(h)
        self.eigenvalue_ = e
        self.fidelity_ = fidelity(self.left_.params_, self.right_.params_)
        return self

    def predict(self, operators) -> np.ndarray:
        check_is_fitted(self, "right_")
        shots = check_int(self.shots, "shots")
        rng = np.random.default_rng(self.seed) if shots else None
        ops = operators if isinstance(operators, (list, tuple)) else [operators]
        return np.array([
            biorthogonal_expectation(check_operator(a, self.right_.n_sites_), self.left_.params_, self.right_.params_,
                                     shots, rng)
            for a in ops
        ])
