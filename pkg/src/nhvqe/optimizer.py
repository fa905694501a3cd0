"""Two-step gradient descent on ``(theta, E_r, E_i)`` and spectrum scanning."""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .circuit import AnsatzParams
from .cost import EigenSide, EnergyParam, VarianceObjective
from .exceptions import ContractViolation, NumericalDivergenceError
from .pauli import PauliSum

logger = logging.getLogger(__name__)

INCREASE_SLACK = 1e-12


class Pin(str, enum.Enum):
    """Energy component held fixed during phase 1."""

    E_R = "pin_e_r"
    E_I = "pin_e_i"


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.05
    tol_phase1: float = 1e-9
    tol_phase2: float = 1e-12
    window: int = 10
    max_iters: int = 5000
    backoff: float = 0.5
    max_backoffs: int = 5
    # cost at or below this counts as converged when the run ends
    accept_cost: float = 1e-6
    # stop as soon as the cost reaches this floor
    target_cost: float = 1e-14
    seed: int = 0
    method: str = "lbfgs"
    momentum: float = 0.9
    # extra phase-1 starts drawn uniformly in [-restart_scale, restart_scale]
    restarts: int = 0
    restart_scale: float = np.pi / 2

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractViolation("learning_rate must be positive")
        if not (self.tol_phase1 > 0 and self.tol_phase2 > 0):
            raise ContractViolation("convergence tolerances must be positive")
        if self.window < 1 or self.max_iters < 1:
            raise ContractViolation("window and max_iters must be positive")
        if self.method not in ("gd", "momentum", "lbfgs"):
            raise ContractViolation(f"unknown method {self.method!r}")

    @property
    def convergence_tol(self) -> float:
        return self.tol_phase2


@dataclass
class ScanConfig:
    n: int = 3
    delta_e: float = 0.05
    step: float = 0.05
    e_r0: float = -3.0
    e_i0: float = 0.0
    energy_match_tol: float = 1e-4
    # scan attempts (bumps of E_r) before giving up
    max_attempts: int = 200
    refine: bool = True
    # fresh phase-1 starts per attempt besides the warm start; an exact
    # eigenstate can be a stationary point of the shifted cost
    restarts: int = 1

    def __post_init__(self):
        if self.n < 0:
            raise ContractViolation("n must be non-negative")
        if not self.step > 0:
            raise ContractViolation("step must be positive")
        if not self.delta_e > 0:
            raise ContractViolation("delta_e must be positive")
        if self.restarts < 0 or self.max_attempts < 1:
            raise ContractViolation("restarts must be >= 0 and max_attempts >= 1")


@dataclass
class EigenSolution:
    energy: EnergyParam
    params: AnsatzParams
    final_cost: float
    side: EigenSide
    iterations: tuple[int, int]
    converged: bool
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "e_r": self.energy.e_r,
            "e_i": self.energy.e_i,
            "final_cost": self.final_cost,
            "side": self.side.value,
            "iterations": list(self.iterations),
            "converged": self.converged,
            "flags": list(self.flags),
            "params": self.params.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "EigenSolution":
        return cls(
            EnergyParam(data["e_r"], data["e_i"]),
            AnsatzParams.from_json(data["params"]),
            float(data["final_cost"]),
            EigenSide(data["side"]),
            tuple(data["iterations"]),
            bool(data["converged"]),
            list(data.get("flags", [])),
        )


@dataclass
class SpectrumReport:
    solutions: list[EigenSolution]
    complete: bool
    provenance: dict

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([s.energy.value for s in self.solutions])

    def to_json(self) -> dict:
        return {
            "complete": self.complete,
            "provenance": self.provenance,
            "solutions": [s.to_json() for s in self.solutions],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SpectrumReport":
        return cls([EigenSolution.from_json(s) for s in data["solutions"]], data["complete"], data["provenance"])

    def csv_rows(self) -> list[dict]:
        return [
            {
                "index": i,
                "E_r": s.energy.e_r,
                "E_i": s.energy.e_i,
                "final_cost": s.final_cost,
                "iterations": s.iterations[0] + s.iterations[1],
                "converged": int(s.converged),
            }
            for i, s in enumerate(self.solutions)
        ]


@dataclass
class PhaseResult:
    theta: np.ndarray
    energy: EnergyParam
    cost: float
    best: tuple
    iterations: int
    converged: bool
    flags: set


def _descend_lbfgs(objective, theta, energy, cfg, free, tol, phase, callback) -> PhaseResult:
    use_theta = "theta" in free
    n = theta.size if use_theta else 0
    keep = [k for k in ("e_r", "e_i") if k in free]
    last = {}

    def unpack(z):
        th = z[:n] if use_theta else theta
        e = {"e_r": energy.e_r, "e_i": energy.e_i}
        e.update(zip(keep, z[n:]))
        return th, EnergyParam(e["e_r"], e["e_i"])

    def fg(z):
        th, en = unpack(z)
        f, g_t, g_e, _ = objective.value_and_grad(th, en, with_theta=use_theta)
        grad = np.concatenate(([] if not use_theta else g_t, [g_e[("e_r", "e_i").index(k)] for k in keep]))
        if not np.isfinite(f) or not np.all(np.isfinite(grad)):
            raise NumericalDivergenceError(
                f"non-finite cost or gradient at phase {phase} evaluation {last.get('count', 0)} "
                f"(E = {en.e_r:+.6g}{en.e_i:+.6g}i)",
                iteration=last.get("it", 0),
                phase=phase,
            )
        last["count"] = last.get("count", 0) + 1
        last[z.tobytes()] = f
        return f, grad

    z0 = np.concatenate(([] if not use_theta else theta, [getattr(energy, k) for k in keep]))
    f0, _ = fg(z0)
    if callback is not None:
        callback(phase, 0, f0, *unpack(z0))
    trace = [0]

    def on_iter(zk):
        trace[0] += 1
        if callback is not None:
            th, en = unpack(zk)
            fk = last.get(zk.tobytes())
            if fk is None:
                fk = objective.value_and_grad(th, en, with_theta=False)[0]
            callback(phase, trace[0], fk, th, en)

    flags: set = set()
    if f0 <= cfg.target_cost:
        return PhaseResult(theta, energy, f0, (f0, theta.copy(), energy), 0, True, flags)
    res = minimize(
        fg,
        z0,
        jac=True,
        method="L-BFGS-B",
        callback=on_iter,
        options={"maxiter": cfg.max_iters, "ftol": tol * 1e-3, "gtol": 1e-12, "maxcor": 30, "maxls": 40},
    )
    th, en = unpack(res.x)
    f = float(res.fun)
    converged = bool(res.success) or f <= cfg.target_cost
    if not converged:
        flags.add(f"phase{phase}_budget_exhausted" if res.nit >= cfg.max_iters else f"phase{phase}_linesearch_stop")
    best = (f, np.array(th, copy=True), en)
    if f0 < f:
        best = (f0, theta.copy(), energy)
    return PhaseResult(np.array(th, copy=True), en, f, best, int(res.nit), converged, flags)


def _descend(
    objective,
    theta: np.ndarray,
    energy: EnergyParam,
    cfg: OptimizerConfig,
    free: frozenset,
    tol: float,
    phase: int,
    callback: Callable | None = None,
) -> PhaseResult:
    """Gradient descent on the ``free`` subset of {theta, e_r, e_i}."""
    if cfg.method == "lbfgs":
        return _descend_lbfgs(objective, theta, energy, cfg, free, tol, phase, callback)
    use_theta = "theta" in free
    mask_e = np.array(["e_r" in free, "e_i" in free], dtype=float)
    lr = cfg.learning_rate
    flags: set = set()

    def evaluate(th, en, it):
        f, g_t, g_e, _ = objective.value_and_grad(th, en, with_theta=use_theta)
        if not np.isfinite(f) or not np.all(np.isfinite(g_e)) or (use_theta and not np.all(np.isfinite(g_t))):
            raise NumericalDivergenceError(
                f"non-finite cost or gradient at phase {phase} iteration {it} "
                f"(E = {en.e_r:+.6g}{en.e_i:+.6g}i)",
                iteration=it,
                phase=phase,
            )
        return f, g_t, g_e

    f, g_t, g_e = evaluate(theta, energy, 0)
    best = (f, theta.copy(), energy)
    history = [f]
    velocity = np.zeros(theta.size + 2)
    converged = False
    it = 0
    if callback is not None:
        callback(phase, 0, f, theta, energy)
    while it < cfg.max_iters:
        if f <= cfg.target_cost:
            converged = True
            break
        it += 1
        step_e = g_e * mask_e
        step_t = g_t if use_theta else np.zeros_like(theta)
        if cfg.method == "momentum":
            velocity = cfg.momentum * velocity - lr * np.concatenate([step_t, step_e])
            new_t = theta + velocity[:-2]
            new_e = EnergyParam(energy.e_r + velocity[-2], energy.e_i + velocity[-1])
            f_new, gt_new, ge_new = evaluate(new_t, new_e, it)
        else:
            for attempt in range(cfg.max_backoffs + 1):
                new_t = theta - lr * step_t
                new_e = EnergyParam(energy.e_r - lr * step_e[0], energy.e_i - lr * step_e[1])
                f_new, gt_new, ge_new = evaluate(new_t, new_e, it)
                if f_new <= f + INCREASE_SLACK or attempt == cfg.max_backoffs:
                    break
                lr *= cfg.backoff
                flags.add("lr_backoff")
            if f_new > f + INCREASE_SLACK:
                flags.add("monotone_violation")
        theta, energy, f, g_t, g_e = new_t, new_e, f_new, gt_new, ge_new
        if f < best[0]:
            best = (f, theta.copy(), energy)
        history.append(f)
        if callback is not None:
            callback(phase, it, f, theta, energy)
        if len(history) > cfg.window and history[-cfg.window - 1] - history[-1] < tol:
            converged = True
            break
    if not converged:
        flags.add(f"phase{phase}_budget_exhausted")
    return PhaseResult(theta, energy, f, best, it, converged, flags)


def _objective_for(h: PauliSum, params: AnsatzParams, side) -> VarianceObjective:
    if h.num_sites != params.num_sites:
        raise ContractViolation(f"Hamiltonian has {h.num_sites} sites, ansatz {params.num_sites}")
    return VarianceObjective(h, side, params.depth, params.bc)


def two_step_optimize(
    h: PauliSum,
    init: tuple[AnsatzParams, EnergyParam],
    cfg: OptimizerConfig | None = None,
    pinned: Pin | str = Pin.E_R,
    side: EigenSide | str = EigenSide.RIGHT,
    objective=None,
    callback: Callable | None = None,
    restart_key: int = 0,
) -> EigenSolution:
    """Find the eigenpair whose pinned energy component is nearest its start.

    Phase 1 descends on ``theta`` and the unpinned energy component; phase 2
    releases everything. The best iterate seen across both phases is
    returned. ``objective`` overrides the exact cost (the noisy and mitigated
    paths plug in here); ``callback(phase, it, cost, theta, energy)`` sees
    every accepted iterate.

    With ``cfg.restarts > 0`` phase 1 is also run from that many random
    angle vectors (seeded by ``(cfg.seed, restart_key)``) and phase 2 starts
    from the phase-1 result with the lowest cost. At an eigenstate the
    phase-1 cost is the squared distance of the pinned component, so this
    keeps the level nearest the pinned value.
    """
    cfg = cfg or OptimizerConfig()
    params, energy = init
    side = EigenSide(side)
    pinned = Pin(pinned)
    objective = objective or _objective_for(h, params, side)
    theta = params.to_vector()
    if not np.all(np.isfinite(theta)):
        raise ContractViolation("initial angles must be finite")

    free1 = frozenset({"theta", "e_i"}) if pinned is Pin.E_R else frozenset({"theta", "e_r"})
    r1 = _descend(objective, theta, energy, cfg, free1, cfg.tol_phase1, 1, callback)
    if cfg.restarts:
        rng = np.random.default_rng((cfg.seed, restart_key))
        for _ in range(cfg.restarts):
            start = rng.uniform(-cfg.restart_scale, cfg.restart_scale, size=theta.size)
            alt = _descend(objective, start, energy, cfg, free1, cfg.tol_phase1, 1)
            if alt.cost < r1.cost:
                alt.iterations += r1.iterations
                r1 = alt
    r2 = _descend(objective, r1.theta, r1.energy, cfg, frozenset({"theta", "e_r", "e_i"}), cfg.tol_phase2, 2, callback)
    best = min((r1.best, r2.best), key=lambda b: b[0])
    cost_val = max(best[0], 0.0) if best[0] >= -1e-10 else best[0]
    flags = sorted(r1.flags | r2.flags)
    return EigenSolution(
        energy=best[2],
        params=params.with_vector(best[1]),
        final_cost=float(cost_val),
        side=side,
        iterations=(r1.iterations, r2.iterations),
        converged=bool(best[0] <= cfg.accept_cost),
        flags=flags,
    )


def optimize_theta(
    h: PauliSum,
    params: AnsatzParams,
    energy: EnergyParam,
    cfg: OptimizerConfig | None = None,
    side: EigenSide | str = EigenSide.RIGHT,
    objective=None,
    callback: Callable | None = None,
) -> EigenSolution:
    """Descend on the angles only, with ``E`` frozen."""
    cfg = cfg or OptimizerConfig()
    side = EigenSide(side)
    objective = objective or _objective_for(h, params, side)
    r = _descend(objective, params.to_vector(), energy, cfg, frozenset({"theta"}), cfg.tol_phase2, 2, callback)
    f, theta, e = r.best
    return EigenSolution(
        energy=e,
        params=params.with_vector(theta),
        final_cost=float(max(f, 0.0)),
        side=side,
        iterations=(0, r.iterations),
        converged=bool(f <= cfg.accept_cost),
        flags=sorted(r.flags),
    )


def spectrum_scan(
    h: PauliSum,
    cfg_opt: OptimizerConfig,
    cfg_scan: ScanConfig,
    ansatz_shape: tuple[int, int, str],
    side: EigenSide | str = EigenSide.RIGHT,
    init_params: AnsatzParams | None = None,
) -> SpectrumReport:
    """Ground state first, then walk ``E_r`` upward to collect excited states.

    A candidate counts as a new level when it converged, its ``E_r`` moved
    away from the last recorded level by more than ``energy_match_tol``, and
    it does not coincide with any level already recorded. A new level with
    non-zero ``E_i`` triggers an angle-only descent at ``conj(E)`` to pick up
    its complex-conjugate partner.
    """
    side = EigenSide(side)
    num_sites, depth, bc = ansatz_shape
    params = init_params or AnsatzParams.random(num_sites, depth, bc, seed=cfg_opt.seed)
    objective = _objective_for(h, params, side)
    tol = cfg_scan.energy_match_tol
    cfg_walk = replace(cfg_opt, restarts=max(cfg_opt.restarts, cfg_scan.restarts))

    solutions: list[EigenSolution] = []

    def known(e: EnergyParam) -> bool:
        return any(abs(s.energy.value - e.value) <= tol for s in solutions)

    current = two_step_optimize(h, (params, EnergyParam(cfg_scan.e_r0, cfg_scan.e_i0)), cfg_opt, Pin.E_R, side, objective)
    solutions.append(current)
    logger.info("ground: E = %.6f%+.6fi cost %.2e", current.energy.e_r, current.energy.e_i, current.final_cost)
    found = 0
    attempts = 0
    delta = cfg_scan.delta_e
    if found < cfg_scan.n and abs(current.energy.e_i) > tol:
        partner = optimize_theta(h, current.params, current.energy.conjugate(), cfg_opt, side, objective)
        solutions.append(partner)
        found += 1
        current = partner
    while found < cfg_scan.n and attempts < cfg_scan.max_attempts:
        attempts += 1
        e_temp = current.energy.e_r
        start = EnergyParam(current.energy.e_r + delta, current.energy.e_i)
        cand = two_step_optimize(h, (current.params, start), cfg_walk, Pin.E_R, side, objective, restart_key=attempts)
        moved = abs(cand.energy.e_r - e_temp) > tol
        if cand.converged and moved and not known(cand.energy):
            # phase 2 can run past a level lying between the probe and the
            # candidate; probe midpoints until no lower new level turns up
            while cfg_scan.refine and cand.energy.e_r - start.e_r > 2 * cfg_scan.step:
                mid = EnergyParam(0.5 * (start.e_r + cand.energy.e_r), start.e_i)
                probe = two_step_optimize(h, (cand.params, mid), cfg_walk, Pin.E_R, side, objective,
                                          restart_key=10**6 + attempts)
                lower = e_temp + tol < probe.energy.e_r < cand.energy.e_r - tol
                if not (probe.converged and lower and not known(probe.energy)):
                    break
                logger.info("refine: E_r %.6f replaces %.6f", probe.energy.e_r, cand.energy.e_r)
                cand = probe
            solutions.append(cand)
            found += 1
            current = cand
            delta = cfg_scan.step
            logger.info("level %d: E = %.6f%+.6fi cost %.2e", found, cand.energy.e_r, cand.energy.e_i, cand.final_cost)
            if found < cfg_scan.n and abs(cand.energy.e_i) > tol and not known(cand.energy.conjugate()):
                partner = optimize_theta(h, cand.params, cand.energy.conjugate(), cfg_opt, side, objective)
                solutions.append(partner)
                found += 1
                current = partner
                delta = cfg_scan.step
        else:
            delta += cfg_scan.step
    complete = found >= cfg_scan.n
    provenance = {
        "e_r0": cfg_scan.e_r0,
        "e_i0": cfg_scan.e_i0,
        "seed": cfg_opt.seed,
        "side": side.value,
        "attempts": attempts,
        "ansatz": {"num_sites": num_sites, "depth": depth, "bc": str(getattr(bc, "value", bc))},
        "optimizer": asdict(cfg_opt),
        "scan": asdict(cfg_scan),
    }
    return SpectrumReport(solutions, complete, provenance)
