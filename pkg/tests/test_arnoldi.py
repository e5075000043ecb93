import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiar import arnoldi
from tiar.arnoldi import (
    BasisTensor,
    RitzPair,
    RitzReport,
    iar_run,
    ritz_values,
    tiar_build_G,
    tiar_F,
    tiar_orthogonalize,
    tiar_run,
    tiar_y_block,
)
from tiar.nep import CayleyShift, PolynomialNep, cayley_inverse


def _start(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def _hrel(a, b):
    return np.linalg.norm(a.hessenberg.H - b.hessenberg.H) / np.linalg.norm(a.hessenberg.H)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(5, 25), st.integers(1, 3))
def test_iar_tiar_same_hessenberg(seed, n, degree):
    p = PolynomialNep.random(n, degree, seed)
    x = _start(n, seed)
    a = iar_run(p, x, 15)
    b = tiar_run(p, x, 15)
    assert a.hessenberg.H.shape == b.hessenberg.H.shape
    assert _hrel(a, b) < 1e-10


def test_rank_deficient_z_keeps_equivalence():
    # n = 3 < m: the z-basis saturates and TIAR continues without new z
    p = PolynomialNep.random(3, 2, 11)
    x = _start(3, 1)
    a = iar_run(p, x, 10)
    b = tiar_run(p, x, 10)
    assert b.report.flags["z_deficient"]
    assert b.basis.r == 3
    assert _hrel(a, b) < 1e-10


def test_reconstruction_matches_iar_basis():
    p = PolynomialNep.random(30, 3, 5)
    x = _start(30, 5)
    a = iar_run(p, x, 12)
    b = tiar_run(p, x, 12)
    Q_iar = a.basis.dense(13)
    Q_tiar = b.basis.reconstruct()
    assert Q_tiar.shape == Q_iar.shape == (13 * 30, 13)
    np.testing.assert_allclose(Q_tiar, Q_iar, atol=1e-10)
    # the basis is orthonormal
    np.testing.assert_allclose(Q_iar.conj().T @ Q_iar, np.eye(13), atol=1e-12)


def test_arnoldi_relation_holds_for_iar_basis():
    # Q_{k+1} H_k equals the companion operator applied to Q_k
    p = PolynomialNep.random(8, 2, 2)
    run = iar_run(p, _start(8), 6)
    n, k = 8, 6
    Q = run.basis.dense(k + 1)
    H = run.hessenberg.H
    for j in range(k):
        q = Q[:, j][: (j + 1) * n].reshape(j + 1, n)
        Y = (q / np.arange(1, j + 2)[:, None]).T
        y = np.concatenate([p.solve_step(Y), Y.T.ravel()])
        lhs = Q[: len(y), : j + 2] @ H[: j + 2, j]
        np.testing.assert_allclose(lhs, y, atol=1e-12)


def test_hessenberg_structure():
    run = tiar_run(PolynomialNep.random(10, 2, 4), _start(10), 9)
    H = run.hessenberg.H
    assert np.allclose(np.tril(H, -2), 0)
    sub = run.hessenberg.subdiagonal
    assert np.all(sub.real > 0) and np.allclose(sub.imag, 0)


def test_z_orthonormal_every_step():
    errs = []

    def mon(k, tensor, H):
        Z = tensor.Z
        errs.append(np.linalg.norm(Z.conj().T @ Z - np.eye(Z.shape[1])))

    run = tiar_run(PolynomialNep.random(60, 3, 9), _start(60), 40, monitor=mon)
    assert len(errs) == 40
    assert max(errs) < 1e-12
    assert run.basis.r <= 60


def test_storage_accounting():
    run = tiar_run(PolynomialNep.random(20, 2, 1), _start(20), 7)
    t = run.basis
    assert t.k == 8 and t.r == 8
    assert t.storage() == 8 * 20 + 8 ** 3
    run2 = iar_run(PolynomialNep.random(20, 2, 1), _start(20), 7)
    assert run2.basis.storage() == 8 * 8 * 20


def test_ritz_values_converge_to_companion_eigenvalues():
    p = PolynomialNep.random(10, 2, 21)
    run = tiar_run(p, _start(10), 40, residual_fn=arnoldi.default_residual(p))
    ev = p.companion_eigenvalues()
    good = [q for q in run.report.pairs if q.residual < 1e-10]
    assert len(good) >= 3
    for q in good:
        assert np.min(np.abs(ev - q.value)) < 1e-8 * max(1, abs(q.value))


def test_ritz_values_back_map():
    H = np.array([[2.0, 1.0], [0.5, 4.0], [0.0, 0.1]], dtype=complex)
    shift = CayleyShift(-3 + 1j)
    pairs, excluded = ritz_values(H, 2, shift)
    mus = np.linalg.eigvals(H[:2, :2])
    assert excluded == 0
    got = np.sort_complex([p.mu for p in pairs])
    np.testing.assert_allclose(np.sort_complex(mus), got, rtol=1e-14)
    for p in pairs:
        np.testing.assert_allclose(p.gamma, cayley_inverse(1 / p.mu, shift))


def test_ritz_values_exclude_zero():
    H = np.zeros((3, 2), dtype=complex)
    H[0, 0] = 1.0
    pairs, excluded = ritz_values(H, 2)
    assert excluded == 1 and len(pairs) == 1
    assert pairs[0].value == 1


def test_ritz_values_needs_columns():
    with pytest.raises(ValueError):
        ritz_values(np.zeros((3, 2)), 3)


def test_orthogonalize_breakdown():
    Z = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 3)))[0] + 0j
    y = Z @ np.array([1.0, 2.0, -1.0])
    out = tiar_orthogonalize(Z, y)
    assert out.breakdown and out.z is None
    np.testing.assert_allclose(out.t, [1, 2, -1], atol=1e-14)
    out2 = tiar_orthogonalize(Z, y + 1e-3 * np.eye(6)[0] - Z @ (Z.T @ (1e-3 * np.eye(6)[0])))
    assert not out2.breakdown
    assert abs(np.vdot(Z[:, 0], out2.z)) < 1e-14
    # largest entry of z is real positive
    i = np.argmax(np.abs(out2.z))
    assert out2.z[i].real > 0 and abs(out2.z[i].imag) < 1e-15


def test_tiar_building_blocks_against_dense_gram_schmidt():
    p = PolynomialNep.random(12, 2, 3)
    run = tiar_run(p, _start(12, 3), 5)
    tensor = run.basis
    k = tensor.k
    Yt, Y = tiar_y_block(tensor)
    np.testing.assert_allclose(Yt[:, 0], tensor.Z @ tensor.a[0, k - 1, :])
    y1 = p.solve_step(Y)
    orth = tiar_orthogonalize(tensor.Z, y1)
    G = tiar_build_G(tensor, orth.t, k)
    Q = np.vstack([tensor.reconstruct(), np.zeros((12, k))])
    y = np.concatenate([y1, Y.T.ravel()])
    Zp = np.hstack([tensor.Z, orth.z[:, None]])
    # G represents y in the extended z basis
    np.testing.assert_allclose((G @ Zp.T).ravel(), y, atol=1e-12)
    F, h, beta = tiar_F(tensor, G, passes=2)
    np.testing.assert_allclose(h, Q.conj().T @ y, atol=1e-12)
    np.testing.assert_allclose(beta, np.linalg.norm(y - Q @ h), rtol=1e-10)


def test_basis_tensor_from_arrays():
    rng = np.random.default_rng(0)
    Z = np.linalg.qr(rng.standard_normal((5, 3)))[0]
    a = rng.standard_normal((3, 3, 3))
    t = BasisTensor.from_arrays(Z, a)
    R = t.reconstruct()
    for j in range(3):
        for i in range(3):
            np.testing.assert_allclose(R[i * 5:(i + 1) * 5, j], Z @ a[i, j, :])


def test_converged_streak():
    def pair(v, r):
        return RitzPair(1 / v, v, residual=r)

    hist = [(1, [pair(1.0, 1e-3)]), (2, [pair(1.0 + 1e-9, 1e-10)]),
            (3, [pair(1.0, 1e-11)])]
    rep = RitzReport([pair(1.0, 1e-12), pair(5.0, 1e-12)], hist,
                     flags={"iterations": 4})
    assert len(rep.converged(1e-8, streak=1)) == 2
    got = rep.converged(1e-8, streak=3)
    assert [p.value for p in got] == [1.0]
    assert rep.converged(1e-8, streak=4) == []


def test_bad_start_vector():
    p = PolynomialNep.random(4, 1, 0)
    with pytest.raises(ValueError):
        tiar_run(p, np.zeros(4), 3)
    with pytest.raises(ValueError):
        iar_run(p, np.ones(5), 3)
