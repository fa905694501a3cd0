"""Command-line experiments: spectrum, fidelity, expectation, noise-trace.

Every run writes CSV files (first line ``#schema=<name>/<version>``) and a
``manifest.json`` holding the resolved configuration and output digests.
Passing that manifest back through ``--config`` reproduces the outputs.

Exit codes: 0 success, 2 invalid configuration, 3 numerical divergence,
4 partial or unconverged results (files are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import linear_sum_assignment

from .circuit import AnsatzParams
from .cost import EigenSide, EnergyParam
from .exceptions import ConfigError, ContractViolation, DegenerateOverlapError, DimensionError, NumericalDivergenceError
from .noise import MitigationPlan, NoiseModel, compare_conditions
from .optimizer import OptimizerConfig, Pin, ScanConfig, spectrum_scan
from .oracle import exact_eig, exceptional_point_scan
from .overlap import biorthogonal_expectation, fidelity, fidelity_matrix
from .pauli import PauliSum, build_ising
from .validation import check_bc, check_grid, check_int, check_operator, check_real, check_scale_factors

logger = logging.getLogger("nhvqe")

COMMANDS = ("spectrum", "fidelity", "expectation", "noise-trace")
MANIFEST_SCHEMA = "nhvqe.manifest/v1"
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_PARTIAL = 0, 2, 3, 4
# imaginary parts below this count as real when locating the transition
REAL_BELOW, COMPLEX_ABOVE = 1e-6, 1e-3


@dataclass
class RunConfig:
    """Resolved, validated run settings."""

    num_sites: int = 3
    lam: float = 1.0
    kappa: list = field(default_factory=lambda: [0.4])
    bc: str = "open"
    depth: int = 3
    init_scale: float = 0.1
    optimizer: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    noise: dict = field(default_factory=lambda: {"p1": 0.0, "p2": 0.0, "scale_factors": [1.0, 2.0]})
    operator: object = "H"
    shots: int = 0
    seed: int = 0
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a mapping")
        data = dict(data.get("config", data))
        model = data.pop("model", {}) or {}
        ansatz = data.pop("ansatz", {}) or {}
        data.pop("command", None)
        unknown = set(data) - {f.name for f in fields(cls)} - {"num_sites", "lam"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        cfg = cls(**data)
        cfg.num_sites = model.get("L", model.get("num_sites", cfg.num_sites))
        cfg.lam = model.get("lambda", model.get("lam", cfg.lam))
        cfg.kappa = model.get("kappa", cfg.kappa)
        cfg.bc = model.get("bc", cfg.bc)
        cfg.depth = ansatz.get("P", ansatz.get("depth", cfg.depth))
        cfg.init_scale = ansatz.get("init_scale", cfg.init_scale)
        return cfg.validate()

    def validate(self) -> "RunConfig":
        self.num_sites = check_int(self.num_sites, "model.L", 1)
        if self.num_sites > 10:
            raise ConfigError("model.L", "dense simulation is limited to L <= 10")
        self.lam = check_real(self.lam, "model.lambda")
        self.kappa = check_grid(self.kappa, "model.kappa")
        self.bc = check_bc(self.bc, "model.bc").value
        self.depth = check_int(self.depth, "ansatz.P", 1)
        self.init_scale = check_real(self.init_scale, "ansatz.init_scale", lo=0.0)
        self.shots = check_int(self.shots, "shots")
        self.seed = check_int(self.seed, "seed")
        self.workers = check_int(self.workers, "workers", 1)
        self.optimizer = dict(self.optimizer or {})
        self.scan = dict(self.scan or {})
        self.noise = dict(self.noise or {})
        try:
            self.optimizer_config()
            self.scan_config(0.0)
        except TypeError as exc:
            raise ConfigError("optimizer/scan", str(exc)) from None
        except ContractViolation as exc:
            raise ConfigError("optimizer/scan", str(exc)) from None
        self.noise_model()
        self.operator_for(build_ising(self.num_sites, self.lam, self.kappa[0], self.bc))
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["operator"] = _operator_to_json(self.operator)
        return out

    def optimizer_config(self) -> OptimizerConfig:
        opts = {"seed": self.seed, **self.optimizer}
        return OptimizerConfig(**opts)

    def scan_config(self, floor: float, levels: int | None = None) -> ScanConfig:
        """``ScanConfig`` with ``e_r0`` defaulting to ``floor``."""
        opts = dict(self.scan)
        if opts.get("e_r0") is None:
            opts["e_r0"] = floor
        if levels is not None and "n" not in self.scan:
            opts["n"] = levels
        return ScanConfig(**opts)

    def noise_model(self) -> tuple[NoiseModel, MitigationPlan]:
        nm = dict(self.noise)
        p1 = check_real(nm.get("p1", 0.0), "noise.p1", 0.0, 0.75)
        p2 = check_real(nm.get("p2", 0.0), "noise.p2", 0.0, 0.75)
        plan = MitigationPlan(check_scale_factors(nm.get("scale_factors", [1.0, 2.0]), "noise.scale_factors"))
        model = NoiseModel(p1, p2)
        try:
            plan.check(model)
        except ContractViolation as exc:
            raise ConfigError("noise.scale_factors", str(exc)) from None
        return model, plan

    def operator_for(self, h: PauliSum) -> PauliSum:
        op = self.operator
        if op in ("H", "h", None):
            return h
        if op in ("I", "identity"):
            return PauliSum.identity(self.num_sites)
        if isinstance(op, dict):
            try:
                terms = {k: complex(v.replace(" ", "")) if isinstance(v, str) else complex(v) for k, v in op.items()}
                return check_operator(PauliSum.from_dict(terms, self.num_sites), self.num_sites)
            except (ValueError, TypeError) as exc:
                raise ConfigError("operator", str(exc)) from None
        raise ConfigError("operator", f"expected 'H', 'I' or a letters->coefficient mapping, got {op!r}")


def _operator_to_json(op):
    if isinstance(op, dict):
        return {k: str(complex(v)) if not isinstance(v, str) else v for k, v in op.items()}
    return op


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("--config", f"cannot parse {path}: {exc}") from None
    return data or {}


def spectral_floor(h: PauliSum) -> float:
    """Lower bound on Re(E): minus the sum of coefficient moduli."""
    return -float(sum(abs(t.coefficient) for t in h.terms))


def match_levels(found: np.ndarray, exact: np.ndarray) -> np.ndarray:
    """Oracle index for each found eigenvalue (one-to-one, nearest in total)."""
    if len(found) == 0:
        return np.zeros(0, dtype=int)
    dist = np.abs(np.asarray(found)[:, None] - np.asarray(exact)[None, :])
    rows, cols = linear_sum_assignment(dist)
    out = np.empty(len(found), dtype=int)
    out[rows] = cols
    return out


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, schema: str, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"#schema={schema}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in header])


def read_csv(path: str | Path) -> tuple[str, list[dict]]:
    """Return ``(schema, rows)`` for a file written by ``write_csv``."""
    with open(path) as fh:
        first = fh.readline().strip()
        schema = first.split("=", 1)[1] if first.startswith("#schema=") else ""
        return schema, list(csv.DictReader(fh))


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _pmap(fn, items, workers: int):
    """Ordered map, optionally over a process pool (results keyed by input order)."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# per-kappa tasks; each returns {"kappa", "rows", "error", "partial", ...}


def _scan(cfg: RunConfig, h, side, levels=None):
    shape = (cfg.num_sites, cfg.depth, cfg.bc)
    init = AnsatzParams.random(cfg.num_sites, cfg.depth, cfg.bc, seed=cfg.seed, scale=cfg.init_scale)
    return spectrum_scan(h, cfg.optimizer_config(), cfg.scan_config(spectral_floor(h), levels), shape, side, init)


def _guard(task):
    def run(args):
        cfg_dict, kappa, idx = args
        cfg = RunConfig.from_dict(cfg_dict)
        try:
            out = task(cfg, kappa, idx)
            out.update(kappa=kappa, error=None)
        except NumericalDivergenceError as exc:
            out = {"kappa": kappa, "rows": [], "error": str(exc), "partial": True}
        return out

    return run


def _spectrum_task(cfg: RunConfig, kappa: float, idx: int) -> dict:
    h = build_ising(cfg.num_sites, cfg.lam, kappa, cfg.bc)
    ed = exact_eig(h, strict=False)
    rep = _scan(cfg, h, EigenSide.RIGHT)
    idx_exact = match_levels(rep.eigenvalues, ed.eigenvalues)
    rows = []
    for n, (s, m) in enumerate(zip(rep.solutions, idx_exact)):
        ex = ed.eigenvalues[m]
        rows.append({
            "kappa": kappa, "n": n, "E_r": s.energy.e_r, "E_i": s.energy.e_i,
            "E_r_exact": float(ex.real), "E_i_exact": float(ex.imag), "exact_index": int(m),
            "cost": s.final_cost, "converged": s.converged,
        })
    partial = (not rep.complete) or not all(s.converged for s in rep.solutions)
    return {"rows": rows, "partial": partial, "levels": len(rep.solutions)}


def _solve_pairs(cfg: RunConfig, h, levels):
    """Right and left scans matched to oracle indices: {n: (right, left)}."""
    ed = exact_eig(h, strict=False)
    right = _scan(cfg, h, EigenSide.RIGHT, levels)
    left = _scan(cfg, h, EigenSide.LEFT, levels)
    r_idx = match_levels(right.eigenvalues, ed.eigenvalues)
    l_idx = match_levels(left.eigenvalues, ed.eigenvalues)
    lefts = dict(zip(l_idx.tolist(), left.solutions))
    pairs = {int(n): (s, lefts[int(n)]) for n, s in zip(r_idx, right.solutions) if int(n) in lefts}
    partial = not (right.complete and left.complete) or not all(
        s.converged for s in right.solutions + left.solutions)
    return ed, dict(sorted(pairs.items())), partial


def _fidelity_task(cfg: RunConfig, kappa: float, idx: int) -> dict:
    h = build_ising(cfg.num_sites, cfg.lam, kappa, cfg.bc)
    ed, pairs, partial = _solve_pairs(cfg, h, (1 << cfg.num_sites) - 1)
    rng = np.random.default_rng((cfg.seed, idx)) if cfg.shots else None
    exact = ed.fidelities
    rows = []
    for n, (r, l) in pairs.items():
        rows.append({
            "kappa": kappa, "n": n, "E_r": r.energy.e_r, "E_i": r.energy.e_i,
            "fidelity": fidelity(l.params, r.params, cfg.shots, rng), "fidelity_exact": float(exact[n]),
            "converged": r.converged and l.converged,
        })
    keys = list(pairs)
    mat = fidelity_matrix([pairs[m][1].params for m in keys], [pairs[n][0].params for n in keys], cfg.shots, rng)
    matrix = [
        {"kappa": kappa, "m": m, "n": n, "fidelity": float(mat[i, j])}
        for i, m in enumerate(keys) for j, n in enumerate(keys)
    ]
    partial = partial or len(pairs) < (1 << cfg.num_sites)
    return {"rows": rows, "matrix": matrix, "partial": partial}


def _expectation_task(cfg: RunConfig, kappa: float, idx: int) -> dict:
    h = build_ising(cfg.num_sites, cfg.lam, kappa, cfg.bc)
    op = cfg.operator_for(h)
    ed, pairs, partial = _solve_pairs(cfg, h, None)
    rng = np.random.default_rng((cfg.seed, idx)) if cfg.shots else None
    rows = []
    from .overlap import biorthogonal_expectation_exact

    for n, (r, l) in pairs.items():
        flag = ""
        try:
            val = biorthogonal_expectation(op, l.params, r.params, cfg.shots, rng)
        except DegenerateOverlapError:
            val, flag = complex(np.nan, np.nan), "degenerate_overlap"
        try:
            ex = biorthogonal_expectation_exact(op, ed.left_vectors[:, n], ed.right_vectors[:, n])
        except DegenerateOverlapError:
            ex = complex(np.nan, np.nan)
        rows.append({
            "kappa": kappa, "n": n, "Re": val.real, "Im": val.imag, "Re_exact": ex.real, "Im_exact": ex.imag,
            "converged": r.converged and l.converged, "flag": flag,
        })
    return {"rows": rows, "partial": partial}


def _noise_task(cfg: RunConfig, kappa: float, idx: int) -> dict:
    h = build_ising(cfg.num_sites, cfg.lam, kappa, cfg.bc)
    ed = exact_eig(h, strict=False)
    nm, plan = cfg.noise_model()
    scan = cfg.scan_config(spectral_floor(h))
    init = (
        AnsatzParams.random(cfg.num_sites, cfg.depth, cfg.bc, seed=cfg.seed, scale=cfg.init_scale),
        EnergyParam(scan.e_r0, scan.e_i0),
    )
    runs = compare_conditions(h, init, cfg.optimizer_config(), nm, plan, Pin.E_R, EigenSide.RIGHT)
    rows, summary = [], {}
    for name, run in runs.items():
        # conjugate partners share E_r, so each condition is scored against the level it reached
        sol = run.solution
        target = int(np.argmin(np.abs(ed.eigenvalues - sol.energy.value)))
        run.attach_fidelity(ed.right_vectors[:, target])
        rows += [{"kappa": kappa, **r.as_dict()} for r in run.trace]
        ex = ed.eigenvalues[target]
        summary[name] = {"E_r": sol.energy.e_r, "E_i": sol.energy.e_i, "cost": sol.final_cost,
                         "fidelity": run.trace[-1].fidelity if run.trace else float("nan"),
                         "E_r_exact": float(ex.real), "E_i_exact": float(ex.imag), "exact_index": target}
    return {"rows": rows, "summary": summary, "partial": not runs["ideal"].solution.converged}


def _transition(cfg: RunConfig, results: list[dict]) -> dict:
    """VQE and oracle real-to-complex brackets along the kappa grid."""
    per, levels = [], None
    for res in results:
        if res["error"]:
            continue
        im = [abs(r["E_i"]) for r in res["rows"]]
        per.append({"kappa": res["kappa"], "max_abs_imag": max(im) if im else float("nan")})
        levels = max(levels or 0, res.get("levels", 0))
    bracket = None
    for a, b in zip(per, per[1:]):
        if a["max_abs_imag"] < REAL_BELOW and b["max_abs_imag"] > COMPLEX_ABOVE:
            bracket = [a["kappa"], b["kappa"]]
            break
    oracle = {"rows": [], "bracket": None}
    if per:
        oracle = exceptional_point_scan(cfg.num_sites, cfg.lam, [p["kappa"] for p in per], cfg.bc, levels or None)
    return {
        "vqe": {"rows": per, "bracket": bracket},
        "oracle": {"rows": oracle["rows"], "bracket": list(oracle["bracket"]) if oracle["bracket"] else None},
        "levels": levels,
    }


SPECS = {
    "spectrum": (_spectrum_task, "spectrum.csv", "nhvqe.spectrum/v1",
                 ["kappa", "n", "E_r", "E_i", "E_r_exact", "E_i_exact", "exact_index", "cost", "converged"]),
    "fidelity": (_fidelity_task, "fidelity.csv", "nhvqe.fidelity/v1",
                 ["kappa", "n", "E_r", "E_i", "fidelity", "fidelity_exact", "converged"]),
    "expectation": (_expectation_task, "expectation.csv", "nhvqe.expectation/v1",
                    ["kappa", "n", "Re", "Im", "Re_exact", "Im_exact", "converged", "flag"]),
    "noise-trace": (_noise_task, "trace.csv", "nhvqe.trace/v1",
                    ["kappa", "iteration", "phase", "cost", "fidelity", "E_r", "E_i", "condition"]),
}


class _Task:
    """Picklable wrapper so tasks can cross a process pool."""

    def __init__(self, command):
        self.command = command

    def __call__(self, args):
        return _guard(SPECS[self.command][0])(args)


def run_command(command: str, cfg: RunConfig, out_dir: str | Path) -> int:
    """Run ``command`` for every kappa, write outputs and the manifest; return the exit code."""
    if command not in SPECS:
        raise ConfigError("command", f"unknown command {command!r}")
    _, fname, schema, header = SPECS[command]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_dict = cfg.to_dict()
    jobs = [(cfg_dict, k, i) for i, k in enumerate(cfg.kappa)]
    results = _pmap(_Task(command), jobs, cfg.workers)

    written = {}
    rows = [r for res in results for r in res["rows"]]
    write_csv(out / fname, schema, header, rows)
    written[fname] = out / fname
    if command == "fidelity":
        write_csv(out / "fidelity_matrix.csv", "nhvqe.fidelity_matrix/v1", ["kappa", "m", "n", "fidelity"],
                  [r for res in results for r in res.get("matrix", [])])
        written["fidelity_matrix.csv"] = out / "fidelity_matrix.csv"
    extra = None
    if command == "spectrum":
        extra = ("transition.json", _transition(cfg, results))
    elif command == "noise-trace":
        extra = ("summary.json", [{"kappa": res["kappa"], **res.get("summary", {})} for res in results])
    if extra:
        path = out / extra[0]
        path.write_text(json.dumps(extra[1], indent=2, sort_keys=True) + "\n")
        written[extra[0]] = path

    errors = [{"kappa": res["kappa"], "error": res["error"]} for res in results if res["error"]]
    partial = any(res.get("partial") for res in results)
    code = EXIT_DIVERGED if errors else (EXIT_PARTIAL if partial else EXIT_OK)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config": cfg_dict,
        "status": "complete" if code == EXIT_OK else ("diverged" if errors else "partial"),
        "errors": errors,
        "outputs": {name: _digest(p) for name, p in sorted(written.items())},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nhvqe", description="Variational eigensolver experiments for non-Hermitian chains.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML/JSON config or a previous manifest.json")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", default="out")
        s.add_argument("--shots", type=int)
        s.add_argument("--workers", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        raw = load_config(args.config)
        if isinstance(raw, dict) and raw.get("command") not in (None, args.command):
            raise ConfigError("command", f"config was written for {raw['command']!r}, not {args.command!r}")
        cfg = RunConfig.from_dict(raw)
        for name in ("seed", "shots", "workers"):
            if getattr(args, name) is not None:
                setattr(cfg, name, getattr(args, name))
        cfg.validate()
    except (ConfigError, DimensionError, ContractViolation) as exc:
        print(f"nhvqe: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = run_command(args.command, cfg, args.out)
    except NumericalDivergenceError as exc:
        print(f"nhvqe: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    if code == EXIT_PARTIAL:
        print("nhvqe: some levels are missing or unconverged (see manifest.json)", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
