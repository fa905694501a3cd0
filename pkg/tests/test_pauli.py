import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhvqe.exceptions import DimensionError, ResourceError
from nhvqe.pauli import (
    BoundaryCondition,
    PauliSum,
    PauliTerm,
    adjoint,
    build_ising,
    sum_product,
    term_product,
    to_dense,
)
from reference import ising_matrix, kron_string

letters = st.text(alphabet="IXYZ", min_size=3, max_size=3)
coeffs = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
sums = st.dictionaries(letters, coeffs, min_size=1, max_size=5).map(lambda d: PauliSum.from_dict(d, 3))


def dense_ref(s: PauliSum) -> np.ndarray:
    return sum((t.coefficient * kron_string(t.letters) for t in s.terms), np.zeros((8, 8), dtype=complex)) \
        if s.num_sites == 3 else None


def test_single_site_products():
    assert term_product(PauliTerm(1, "X"), PauliTerm(1, "Y")) == PauliTerm(1j, "Z")
    assert term_product(PauliTerm(1, "Y"), PauliTerm(1, "X")) == PauliTerm(-1j, "Z")
    assert term_product(PauliTerm(1, "Z"), PauliTerm(1, "Z")) == PauliTerm(1, "I")


def test_to_dense_matches_kron():
    s = PauliSum.from_dict({"XYZ": 0.5, "ZIX": -1j, "III": 2.0}, 3)
    assert np.allclose(to_dense(s), dense_ref(s), atol=1e-14)


@given(sums, sums)
def test_product_is_matrix_product(a, b):
    assert np.allclose(to_dense(sum_product(a, b)), to_dense(a) @ to_dense(b), atol=1e-10)


@given(sums)
def test_adjoint_is_conjugate_transpose(a):
    assert np.allclose(to_dense(adjoint(a)), to_dense(a).conj().T, atol=1e-12)


@given(sums, sums, coeffs)
def test_dense_is_linear(a, b, c):
    assert np.allclose(to_dense(a + b * c), to_dense(a) + c * to_dense(b), atol=1e-10)


def test_variance_operator_single_site_is_hermitian():
    h = PauliSum.from_dict({"Z": -0.5, "X": -0.5j * 0.7}, 1)
    e = complex(0.3, -0.1)
    m = sum_product(adjoint(h) - e.conjugate(), h - e)
    assert m.is_hermitian()
    assert all(abs(c.imag) < 1e-14 for c in m.as_dict().values())


def test_variance_operator_psd_on_random_two_site():
    rng = np.random.default_rng(3)
    for _ in range(10):
        d = {l: complex(*rng.normal(size=2)) for l in ("XX", "ZI", "IZ", "XI", "YZ")}
        h = PauliSum.from_dict(d, 2)
        e = complex(*rng.normal(size=2))
        m = to_dense(sum_product(adjoint(h) - e.conjugate(), h - e))
        assert np.linalg.eigvalsh(m).min() >= -1e-12


@pytest.mark.parametrize("n,kappa", [(1, 0.5), (2, 0.3), (3, 0.4), (4, 0.8)])
def test_build_ising_matches_reference(n, kappa):
    assert np.allclose(to_dense(build_ising(n, 1.0, kappa)), ising_matrix(n, 1.0, kappa), atol=1e-14)


def test_periodic_bonds():
    assert BoundaryCondition("periodic").bonds(4)[-1] == (3, 0)
    assert np.allclose(to_dense(build_ising(3, 0.7, 0.2, "periodic")), ising_matrix(3, 0.7, 0.2, True))


def test_ising_is_complex_symmetric_not_hermitian():
    m = to_dense(build_ising(3, 1.0, 0.4))
    assert np.allclose(m, m.T)
    assert not build_ising(3, 1.0, 0.4).is_hermitian()
    assert build_ising(3, 1.0, 0.0).is_hermitian()


def test_merge_and_prune():
    s = PauliSum.from_dict({"XZ": 1.0}, 2) + PauliSum.from_dict({"XZ": -1.0, "ZZ": 1e-16}, 2)
    assert len(s) == 0


def test_json_roundtrip():
    h = build_ising(3, 1.0, 0.4)
    assert PauliSum.from_json(h.to_json()) == h


def test_errors():
    with pytest.raises(DimensionError):
        PauliSum.from_dict({"XX": 1}, 2) + PauliSum.from_dict({"XXX": 1}, 3)
    with pytest.raises(ValueError):
        PauliTerm(1.0, "XQ")
    with pytest.raises(ValueError):
        PauliTerm(float("nan"), "X")
    with pytest.raises(ResourceError):
        to_dense(PauliSum.identity(13))
