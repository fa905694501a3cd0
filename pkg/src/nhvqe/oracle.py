"""Exact diagonalization with paired left/right eigenvectors.

The dense non-symmetric eigenproblems are delegated to LAPACK through
``scipy.linalg.eig``; pairing, ordering and degeneracy handling live here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .exceptions import AmbiguityError
from .pauli import BoundaryCondition, PauliSum, build_ising, to_dense

PAIR_TOL = 1e-8
REAL_TOL = 1e-8
ORDER_TOL = 1e-9


@dataclass
class EigenDecomposition:
    """Spectrum ordered by ascending real part, ties by ascending imaginary part.

    ``right_vectors[:, n]`` and ``left_vectors[:, n]`` are unit vectors with
    ``H r_n = E_n r_n`` and ``H^dag l_n = conj(E_n) l_n``.
    ``flags[n]`` holds ``"degenerate"`` when ``E_n`` sits in a cluster of
    eigenvalues closer than the pairing tolerance (labels inside the
    cluster are arbitrary) and ``"ill_conditioned"`` when
    ``|<l_n|r_n>| < 1e-6`` (near an exceptional point).
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    flags: list[list[str]] = field(default_factory=list)

    @property
    def overlaps(self) -> np.ndarray:
        """``<l_n|r_n>`` for each pair."""
        return np.einsum("in,in->n", self.left_vectors.conj(), self.right_vectors)

    @property
    def fidelities(self) -> np.ndarray:
        return np.abs(self.overlaps)

    def overlap_matrix(self) -> np.ndarray:
        """``|<l_m|r_n>|`` for all pairs (rows m, columns n)."""
        return np.abs(self.left_vectors.conj().T @ self.right_vectors)

    def to_json(self) -> dict:
        def cplx(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        return {
            "eigenvalues": cplx(self.eigenvalues),
            "right_vectors": cplx(self.right_vectors),
            "left_vectors": cplx(self.left_vectors),
            "flags": self.flags,
        }

    @classmethod
    def from_json(cls, data) -> "EigenDecomposition":
        if isinstance(data, str):
            data = json.loads(data)

        def cplx(d):
            return np.array(d["re"]) + 1j * np.array(d["im"])

        return cls(cplx(data["eigenvalues"]), cplx(data["right_vectors"]), cplx(data["left_vectors"]), data["flags"])


def spectral_order(values: np.ndarray, tol: float = ORDER_TOL) -> np.ndarray:
    """Permutation sorting by real part, treating reals within ``tol`` as tied."""
    values = np.asarray(values)
    idx = np.argsort(values.real, kind="stable")
    order = []
    start = 0
    while start < len(idx):
        stop = start + 1
        while stop < len(idx) and values[idx[stop]].real - values[idx[stop - 1]].real <= tol:
            stop += 1
        group = idx[start:stop]
        order.extend(group[np.argsort(values[group].imag, kind="stable")])
        start = stop
    return np.array(order, dtype=int)


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    pivots = np.argmax(np.abs(vecs) > np.abs(vecs).max(axis=0) - 1e-9, axis=0)
    phases = vecs[pivots, np.arange(vecs.shape[1])]
    return vecs * (np.abs(phases) / phases)


def _clusters(values: np.ndarray, tol: float) -> list[list[int]]:
    n = len(values)
    seen = [False] * n
    out = []
    for i in range(n):
        if seen[i]:
            continue
        group = [i]
        seen[i] = True
        for j in range(i + 1, n):
            if not seen[j] and any(abs(values[j] - values[k]) <= tol for k in group):
                group.append(j)
                seen[j] = True
        out.append(group)
    return out


def exact_eig(h: PauliSum | np.ndarray, pair_tol: float = PAIR_TOL, strict: bool = True) -> EigenDecomposition:
    """Full left/right eigendecomposition of a (possibly non-Hermitian) operator.

    Right vectors come from ``H``, left vectors from the adjoint problem
    ``H^dag``; pairs are matched by eigenvalue conjugation. Inside a cluster
    of eigenvalues within ``pair_tol`` the left vectors are rebuilt from the
    inverse of the right-vector block so the pairing is biorthogonal.

    Raises
    ------
    AmbiguityError
        If some right eigenvalue has no adjoint partner within ``pair_tol``
        (only when ``strict``).
    """
    mat = to_dense(h) if isinstance(h, PauliSum) else np.asarray(h, dtype=complex)
    evals, right = scipy.linalg.eig(mat)
    mu, left = scipy.linalg.eig(mat.conj().T)
    order = spectral_order(evals)
    evals, right = evals[order], right[:, order]

    dist = np.abs(evals[:, None] - mu.conj()[None, :])
    rows, cols = linear_sum_assignment(dist)
    left = left[:, cols[np.argsort(rows)]]
    gaps = dist[rows, cols][np.argsort(rows)]
    # relative tolerance for large spectra
    scale = max(1.0, float(np.abs(evals).max()))
    bad = np.nonzero(gaps > pair_tol * scale)[0]
    if bad.size and strict:
        raise AmbiguityError(
            f"could not pair {bad.size} eigenvalue(s) with the adjoint spectrum",
            unmatched=[complex(evals[i]) for i in bad],
        )

    right = _fix_phase(right)
    flags: list[list[str]] = [[] for _ in evals]
    for group in _clusters(evals, pair_tol * scale):
        if len(group) == 1:
            continue
        block = right[:, group]
        span = left[:, group]
        # recombine within the adjoint eigenspace so that dual^dag block = I
        gram = span.conj().T @ block
        left[:, group] = span @ np.linalg.pinv(gram).conj().T
        for i in group:
            flags[i].append("degenerate")
    left = _fix_phase(left)
    overlaps = np.abs(np.einsum("in,in->n", left.conj(), right))
    for i, ov in enumerate(overlaps):
        if ov < 1e-6:
            flags[i].append("ill_conditioned")
    for i in bad:
        flags[i].append("unpaired")
    return EigenDecomposition(evals, right, left, flags)


def is_real_spectrum(evals: np.ndarray, tol: float = REAL_TOL) -> bool:
    return bool(np.max(np.abs(np.imag(evals))) < tol)


def min_level_gap(evals: np.ndarray) -> float:
    evals = np.asarray(evals)
    if len(evals) < 2:
        return float("inf")
    d = np.abs(evals[:, None] - evals[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def exceptional_point_scan(
    num_sites: int,
    lam: float,
    kappa_grid,
    bc: BoundaryCondition | str = "open",
    levels: int | None = None,
) -> dict:
    """Reality of the spectrum along a kappa grid.

    Returns ``{"rows": [...], "bracket": (k_lo, k_hi) or None}`` where each row
    has ``kappa``, ``max_abs_imag``, ``min_gap`` and ``real``. ``levels``
    restricts the summary to the lowest levels (by real part); the bracket is
    the first grid cell where reality is lost.
    """
    kappas = [float(k) for k in kappa_grid]
    if not kappas:
        raise ValueError("kappa grid is empty")
    rows = []
    for k in kappas:
        evals = np.linalg.eigvals(to_dense(build_ising(num_sites, lam, k, bc)))
        evals = evals[spectral_order(evals)]
        if levels is not None:
            evals = evals[:levels]
        rows.append(
            {
                "kappa": k,
                "max_abs_imag": float(np.max(np.abs(evals.imag))),
                "min_gap": min_level_gap(evals),
                "real": is_real_spectrum(evals),
            }
        )
    bracket = None
    for a, b in zip(rows, rows[1:]):
        if a["real"] and not b["real"]:
            bracket = (a["kappa"], b["kappa"])
            break
    return {"rows": rows, "bracket": bracket}


def locate_exceptional_point(
    num_sites: int,
    lam: float,
    lo: float,
    hi: float,
    bc: BoundaryCondition | str = "open",
    levels: int | None = 2,
    tol: float = 1e-10,
) -> float:
    """Bisect for the kappa where the lowest ``levels`` stop being real.

    Reality is judged with a threshold that scales with the square-root
    splitting near the coalescence, so the returned point is accurate to
    roughly ``tol`` in kappa, not to the raw eigenvalue tolerance.
    """

    def complex_at(k):
        evals = np.linalg.eigvals(to_dense(build_ising(num_sites, lam, k, bc)))
        evals = evals[spectral_order(evals)]
        if levels is not None:
            evals = evals[:levels]
        return not is_real_spectrum(evals, 1e-7)

    if complex_at(lo) or not complex_at(hi):
        raise ValueError(f"[{lo}, {hi}] does not bracket a real-to-complex transition")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if complex_at(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
