import numpy as np
import pytest

from phononbus.errors import NumericalIntegrityError
from phononbus.qops import (
    DensityMatrix,
    Operator,
    SpaceLayout,
    annihilator,
    basis_ket,
    embed,
    fidelity_pure,
    identity,
    sigma_z,
)

LAYOUT = SpaceLayout((2, 3, 2))


def random_hermitian(rng, n):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (m + m.conj().T)


def test_annihilator_qubit_matrix():
    a = annihilator(2).matrix
    np.testing.assert_array_equal(a, np.array([[0, 1], [0, 0]], dtype=complex))


def test_annihilator_ladder_normalization():
    a = annihilator(3).matrix
    assert a[1, 2] == pytest.approx(np.sqrt(2.0), rel=1e-15)
    assert a[0, 1] == 1.0


def test_number_operator_eigenvalue():
    a = annihilator(4)
    n_op = a.matrix.conj().T @ a.matrix
    ket2 = np.zeros(4)
    ket2[2] = 1.0
    assert (ket2 @ n_op @ ket2).real == pytest.approx(2.0, abs=1e-15)


def test_annihilator_rejects_scalar_space():
    with pytest.raises(ValueError):
        annihilator(1)


def test_layout_requires_dims_at_least_two():
    with pytest.raises(ValueError):
        SpaceLayout((2, 1, 2))


def test_layout_row_major_index():
    assert LAYOUT.index((1, 0, 0)) == 6
    assert LAYOUT.index((0, 1, 0)) == 2
    assert LAYOUT.index((0, 0, 1)) == 1
    assert LAYOUT.index((1, 2, 1)) == 11


def test_embed_identity_is_identity():
    out = embed(identity(SpaceLayout((2,))), 0, LAYOUT)
    np.testing.assert_array_equal(out.matrix, np.eye(12, dtype=complex))


def test_embed_acts_on_named_subsystem_only():
    lay = SpaceLayout((2, 2, 2))
    z = embed(sigma_z(2), 2, lay).matrix
    ket = np.zeros(8)
    ket[lay.index((0, 0, 0))] = 1.0
    assert (ket @ z @ ket).real == pytest.approx(-1.0)
    ket2 = np.zeros(8)
    ket2[lay.index((1, 1, 0))] = 1.0
    assert (ket2 @ z @ ket2).real == pytest.approx(-1.0)


def test_embed_trace_product_rule():
    # oracle: explicit Kronecker assembly of the same operators
    rng = np.random.default_rng(11)
    a = random_hermitian(rng, 2)
    b = random_hermitian(rng, 2)
    ea = embed(Operator(a, SpaceLayout((2,))), 0, LAYOUT).matrix
    eb = embed(Operator(b, SpaceLayout((2,))), 2, LAYOUT).matrix
    direct = np.kron(np.kron(a, np.eye(3)), np.eye(2)) @ np.kron(np.kron(np.eye(2), np.eye(3)), b)
    assert np.trace(ea @ eb) == pytest.approx(np.trace(direct), rel=1e-13)
    assert np.trace(ea @ eb) == pytest.approx(np.trace(a) * np.trace(b) * 3, rel=1e-12)


def test_embed_rejects_bad_index_and_dimension():
    with pytest.raises(ValueError):
        embed(identity(SpaceLayout((2,))), 3, LAYOUT)
    with pytest.raises(ValueError):
        embed(identity(SpaceLayout((4,))), 1, LAYOUT)


def test_embed_preserves_hermiticity_and_spectral_norm():
    rng = np.random.default_rng(5)
    for _ in range(10):
        local = random_hermitian(rng, 3)
        out = embed(Operator(local, SpaceLayout((3,))), 1, LAYOUT)
        assert out.is_hermitian()
        assert np.linalg.norm(out.matrix, 2) == pytest.approx(np.linalg.norm(local, 2), rel=1e-12)


def test_ladder_commutator_on_truncation_safe_states():
    n_ph = 4
    lay = SpaceLayout((2, n_ph, 2))
    a = embed(annihilator(n_ph), 1, lay).matrix
    comm = a @ a.conj().T - a.conj().T @ a
    for n_sc in (0, 1):
        for n_p in range(n_ph - 1):
            for n_e in (0, 1):
                ket = np.zeros(lay.dim)
                ket[lay.index((n_sc, n_p, n_e))] = 1.0
                assert (ket @ comm @ ket).real == pytest.approx(1.0, abs=1e-13)


def test_basis_ket_index_and_trace():
    rho = basis_ket((1, 0, 0), LAYOUT)
    assert rho.matrix[6, 6] == 1.0
    assert np.trace(rho.matrix) == pytest.approx(1.0)
    assert np.count_nonzero(rho.matrix) == 1
    rho0 = basis_ket((0, 0, 0), LAYOUT)
    assert rho0.matrix[0, 0] == 1.0


def test_basis_ket_trace_is_one_for_all_labels():
    for n_sc in range(2):
        for n_p in range(3):
            for n_e in range(2):
                rho = basis_ket((n_sc, n_p, n_e), LAYOUT)
                assert np.trace(rho.matrix) == pytest.approx(1.0)


def test_basis_ket_rejects_out_of_range_label():
    with pytest.raises(ValueError):
        basis_ket((0, 3, 0), LAYOUT)


def test_fidelity_pure_self_and_orthogonal():
    rho = basis_ket((1, 0, 0), LAYOUT)
    assert fidelity_pure(rho, (1, 0, 0)) == 1.0
    assert fidelity_pure(rho, (0, 0, 1)) == 0.0


def test_fidelity_pure_maximally_mixed():
    lay = SpaceLayout((2, 2, 2))
    rho = DensityMatrix(np.eye(8, dtype=complex) / 8.0, lay)
    for labels in ((0, 0, 0), (1, 1, 1), (1, 0, 1)):
        assert fidelity_pure(rho, labels) == pytest.approx(0.125)


def test_fidelity_pure_rejects_non_hermitian():
    rho = basis_ket((0, 0, 0), LAYOUT)
    crooked = rho.matrix.copy()
    crooked[0, 1] = 0.5
    bad = object.__new__(DensityMatrix)
    object.__setattr__(bad, "matrix", crooked)
    object.__setattr__(bad, "layout", LAYOUT)
    with pytest.raises(NumericalIntegrityError):
        fidelity_pure(bad, (0, 0, 0))


def test_fidelity_pure_random_mixtures_in_unit_interval():
    rng = np.random.default_rng(3)
    for _ in range(20):
        probs = rng.dirichlet(np.ones(12))
        rho = DensityMatrix(np.diag(probs).astype(complex), LAYOUT)
        for labels in ((1, 0, 0), (0, 2, 1)):
            f = fidelity_pure(rho, labels)
            assert -1e-9 <= f <= 1 + 1e-9


def test_density_matrix_validation():
    with pytest.raises(NumericalIntegrityError):
        DensityMatrix(np.array([[0.5, 0.5], [0.1, 0.5]], dtype=complex), SpaceLayout((2,)))
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(2, dtype=complex), SpaceLayout((2,)))  # trace 2


def test_operator_matrices_are_frozen():
    op = annihilator(3)
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 1.0
