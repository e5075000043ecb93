"""TIAR specialized to the Cayley-transformed waveguide NEP (WTIAR).

With ``gamma = (g0 + lam conj(g0)) / (1 - lam)`` the transformed problem is

    Mt(lam) = diag((1-lam)^2 I, (1-lam) I) M(gamma(lam))
            = [[F_A(lam), F_C1(lam)], [(1-lam) C2^T, Pt(lam)]]

where ``F_A`` and ``F_C1`` are quadratic in ``lam`` and ``Pt`` is diagonal
in Fourier space with entries ``(1-lam)(s_j(gamma(lam)) + d0)``.
"""

from __future__ import annotations

import math
import warnings
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from . import arnoldi
from .nep import CayleyShift, PoleError, SingularMatrixError, cayley_inverse
from .waveguide import (
    BranchError,
    WaveguideNep,
    fourier_indices,
    fourier_matrix,
)

# alpha_l grows like l!; beyond this the double range is exhausted
MAX_DEPTH = 170


@dataclass
class AlphaCoefficients:
    """Taylor data of ``(1-lam)(s_j(gamma(lam)) + d0)`` for one side."""

    j: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    w: np.ndarray
    f: np.ndarray  # (len(j), lmax+1)
    alpha: np.ndarray  # (len(j), lmax+1)


def alpha_recursion(gamma0, kappa, j, lmax: int, d0: float = 0.0) -> AlphaCoefficients:
    """Derivatives ``alpha_{j,l}``, ``l = 0..lmax``, by a three-term recurrence.

    ``f_l`` are the Taylor coefficients of ``sqrt(a lam^2 + b lam + c)``:
    ``f_0 = sqrt(c)``, ``f_1 = b / (2 sqrt(c))`` and
    ``f_l = -(2 a (l-3) f_{l-2} + b (2l-3) f_{l-1}) / (2 l c)``.
    Then ``alpha_l = i w f_l l!`` plus ``d0`` (``l = 0``) or ``-d0``
    (``l = 1``).
    """
    if lmax > MAX_DEPTH:
        raise ValueError(f"lmax={lmax} exceeds {MAX_DEPTH}; l! overflows")
    g0 = complex(gamma0)
    if g0.real == 0:
        raise BranchError("the shift must not be purely imaginary")
    gc = g0.conjugate()
    j = np.atleast_1d(np.asarray(j))
    pij = np.pi * j
    a = gc ** 2 - 4j * pij * gc - 4 * pij ** 2 + kappa ** 2
    b = 2 * g0 * gc + 4j * pij * (gc - g0) + 8 * pij ** 2 - 2 * kappa ** 2
    c = 4j * pij * g0 - 4 * pij ** 2 + kappa ** 2 + g0 ** 2
    if np.any(c == 0):
        raise BranchError("c_j vanishes; the shift is a branch point")
    w = np.sign(g0.real * (g0.imag + 2 * pij))
    if np.any(w == 0):
        raise BranchError("Im(shift) + 2 pi j vanishes for some j")
    f = np.zeros((len(j), lmax + 1), dtype=complex)
    sc = np.sqrt(c)
    f[:, 0] = sc
    if lmax >= 1:
        f[:, 1] = b / (2 * sc)
    for l in range(2, lmax + 1):
        f[:, l] = -(2 * a * (l - 3) * f[:, l - 2]
                    + b * (2 * l - 3) * f[:, l - 1]) / (2 * l * c)
    fact = np.array([float(math.factorial(l)) for l in range(lmax + 1)])
    alpha = 1j * w[:, None] * f * fact
    alpha[:, 0] += d0
    if lmax >= 1:
        alpha[:, 1] -= d0
    return AlphaCoefficients(j, a, b, c, w, f, alpha)


def _fft_weighted_sum(coeffs, Y):
    """``R sum_i diag(coeffs[:, i]) R^{-1} Y[:, i]`` for one boundary side."""
    Yh = np.fft.fft(np.roll(Y, 1, axis=0), axis=0)
    s = np.sum(Yh * np.fft.ifftshift(coeffs, axes=0), axis=1)
    return np.roll(np.fft.ifft(s), -1)


class CayleyNEP:
    """The transformed waveguide problem with its precomputations.

    Built once per shift: derivative blocks of ``F_A`` and ``F_C1``, the
    ``alpha`` table up to depth ``m`` and a Schur-complement factorization
    of ``Mt(0) = M(g0)``.
    """

    def __init__(self, problem: WaveguideNep, shift, m: int):
        if not isinstance(shift, CayleyShift):
            shift = CayleyShift(shift)
        self.problem = problem
        self.shift = shift
        self.m = int(m)
        mats, grid = problem.mats, problem.grid
        self.N, self.nz = grid.n_interior, grid.nz
        self.n = grid.n
        g0, gc = shift.gamma0, shift.conj
        d0 = mats.stencil.d0
        self.d0 = d0

        def derivs(B0, B1, B2):
            return (
                (B0 + g0 * B1 + g0 ** 2 * B2).tocsc(),
                (-2 * B0 + (gc - g0) * B1 + 2 * g0 * gc * B2).tocsr(),
                (2 * B0 - 2 * gc * B1 + 2 * gc ** 2 * B2).tocsr(),
            )

        self.FA = derivs(*mats.A)
        self.FC = derivs(*mats.C1)
        self.C2T = mats.C2T

        geo = problem.geometry
        j = fourier_indices(self.nz)
        self.alpha_minus = alpha_recursion(g0, geo.kappa_minus, j, self.m, d0)
        self.alpha_plus = alpha_recursion(g0, geo.kappa_plus, j, self.m, d0)
        # D_i diagonals, rows ordered (-, j=-p..p), (+, j=-p..p)
        self.D = np.vstack([self.alpha_minus.alpha, self.alpha_plus.alpha])
        self._P_dense = {}
        self._factorize()

    # -- construction -------------------------------------------------------

    def _factorize(self):
        try:
            self.lu_Q = spla.splu(self.FA[0])
        except RuntimeError as exc:
            raise SingularMatrixError(f"Q(gamma0) is singular: {exc}") from exc
        FC0 = self.FC[0].toarray()
        self.QinvC1 = self.lu_Q.solve(FC0)
        S = self.P_derivative(0) - self.C2T @ self.QinvC1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            lu, piv = la.lu_factor(S)
        d = np.abs(np.diag(lu))
        if d.min() <= 1e-14 * d.max():
            raise SingularMatrixError("Schur complement of Mt(0) is singular")
        self.schur = (lu, piv)

    def P_derivative(self, i: int) -> np.ndarray:
        """Dense ``Pt^{(i)}(0)`` built from the explicit Fourier matrix."""
        if i not in self._P_dense:
            nz = self.nz
            R = fourier_matrix(nz)
            Rinv = np.linalg.inv(R)
            P = np.zeros((2 * nz, 2 * nz), dtype=complex)
            P[:nz, :nz] = (R * self.D[:nz, i]) @ Rinv
            P[nz:, nz:] = (R * self.D[nz:, i]) @ Rinv
            self._P_dense[i] = P
        return self._P_dense[i]

    # -- linear algebra -------------------------------------------------------

    def solve_M0(self, rhs) -> np.ndarray:
        """Solve ``Mt(0) x = rhs`` via the Schur complement on the boundary."""
        N = self.N
        f, g = rhs[:N], rhs[N:]
        Qf = self.lu_Q.solve(np.ascontiguousarray(f))
        yb = la.lu_solve(self.schur, g - self.C2T @ Qf)
        return np.concatenate([Qf - self.QinvC1 @ yb, yb])

    def apply_M0(self, x) -> np.ndarray:
        N = self.N
        u, ub = x[:N], x[N:]
        return np.concatenate([self.FA[0] @ u + self.FC[0] @ ub,
                               self.C2T @ u + self.P_derivative(0) @ ub])

    def _z1(self, y2, y3):
        N = self.N
        top = self.FA[1] @ y2[:N] + self.FC[1] @ y2[N:]
        if y3 is not None:
            top = top + self.FA[2] @ y3[:N] + self.FC[2] @ y3[N:]
        return top, -(self.C2T @ y2[:N])

    def solve_step(self, Y) -> np.ndarray:
        """Generic ``y_1`` with every ``Pt^{(i)}(0)`` applied as a dense matrix."""
        Y = np.asarray(Y).reshape(self.n, -1)
        k = Y.shape[1]
        if k > self.m:
            raise ValueError(f"alpha table holds depth {self.m}, need {k}")
        top, bottom = self._z1(Y[:, 0], Y[:, 1] if k >= 2 else None)
        N = self.N
        for i in range(1, k + 1):
            bottom = bottom + self.P_derivative(i) @ Y[N:, i - 1]
        return -self.solve_M0(np.concatenate([top, bottom]))

    def tensor_step(self, Z, Ak, timings=None) -> np.ndarray:
        """``y_1`` straight from the compressed basis (WTIAR steps 2-3).

        Only ``y_2``, ``y_3`` are formed in full; for ``y_4..y_{k+1}`` just
        the trailing ``2 nz`` boundary entries are computed, and the DtN
        derivative terms are summed in Fourier space.
        """
        t0 = time.perf_counter()
        k = Ak.shape[1]
        if k > self.m:
            raise ValueError(f"alpha table holds depth {self.m}, need {k}")
        N, nz = self.N, self.nz
        head = Z @ Ak[:, : min(k, 2)]
        if k >= 2:
            head[:, 1] /= 2
        tail = (Z[N:] @ Ak[:, 2:]) / np.arange(3, k + 1)
        t1 = time.perf_counter()
        top, bottom = self._z1(head[:, 0], head[:, 1] if k >= 2 else None)
        Yb = np.hstack([head[N:], tail])
        bottom = bottom + np.concatenate([
            _fft_weighted_sum(self.D[:nz, 1:k + 1], Yb[:nz]),
            _fft_weighted_sum(self.D[nz:, 1:k + 1], Yb[nz:]),
        ])
        y1 = -self.solve_M0(np.concatenate([top, bottom]))
        if timings is not None:
            timings["basis_access"] = timings.get("basis_access", 0.0) + t1 - t0
            timings["solve"] = timings.get("solve", 0.0) + time.perf_counter() - t1
        return y1

    def y1(self, tensor: arnoldi.BasisTensor) -> np.ndarray:
        return self.tensor_step(tensor.Z, tensor.coefficient_matrix())

    # -- evaluation -----------------------------------------------------------

    def gamma(self, lam):
        return cayley_inverse(lam, self.shift)

    def evaluate(self, lam, w) -> np.ndarray:
        """``Mt(lam) w``."""
        if lam == 1:
            raise PoleError("Mt is evaluated through M(gamma); lam = 1 maps to infinity")
        v = self.problem.evaluate(self.gamma(lam), w)
        N = self.N
        return np.concatenate([(1 - lam) ** 2 * v[:N], (1 - lam) * v[N:]])

    def residual(self, gamma, w) -> float:
        """Relative residual ``E(w, gamma)`` of the untransformed problem."""
        return self.problem.residual(gamma, w)

    def dense(self, lam) -> np.ndarray:
        g = self.gamma(lam)
        M = self.problem.dense(g)
        N = self.N
        M[:N] *= (1 - lam) ** 2
        M[N:] *= (1 - lam)
        return M


def build_cayley_nep(problem: WaveguideNep, gamma0, m: int) -> CayleyNEP:
    return CayleyNEP(problem, gamma0, m)


def default_start(n: int, seed=None) -> np.ndarray:
    """Normalized all-ones vector, or a seeded complex random vector."""
    if seed is None:
        return np.ones(n, dtype=complex) / np.sqrt(n)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return x / np.linalg.norm(x)


def _cayley_residual(nep: CayleyNEP):
    return lambda gamma, w: nep.residual(gamma, w)


def wtiar_run(nep: CayleyNEP, x1=None, m: int | None = None, *,
              history: bool = False, structured: bool = True,
              **kwargs) -> arnoldi.ArnoldiRun:
    """Run TIAR on ``nep``; Ritz values are mapped back to ``gamma``.

    ``structured=False`` uses the generic ``Z A_k`` access and dense DtN
    derivatives (plain TIAR on the transformed problem).
    """
    m = nep.m if m is None else m
    x1 = default_start(nep.n) if x1 is None else x1
    return arnoldi.tiar_run(
        nep, x1, m,
        tensor_step=nep.tensor_step if structured else None,
        residual_fn=_cayley_residual(nep), shift=nep.shift, history=history,
        **kwargs)


def iar_waveguide_run(nep: CayleyNEP, x1=None, m: int | None = None, *,
                      history: bool = False, **kwargs) -> arnoldi.ArnoldiRun:
    m = nep.m if m is None else m
    x1 = default_start(nep.n) if x1 is None else x1
    return arnoldi.iar_run(nep, x1, m, residual_fn=_cayley_residual(nep),
                           shift=nep.shift, history=history, **kwargs)


def in_region(gamma, shift=None) -> bool:
    """Membership in ``Omega = (-inf, 0) x (-2 pi, 0)``.

    With a shift whose imaginary part is positive the mirrored strip
    ``(0, 2 pi)`` is used; the spectrum is closed under conjugation.
    """
    im = np.imag(gamma)
    if shift is not None and np.imag(complex(getattr(shift, "gamma0", shift))) > 0:
        im = -im
    return bool(np.real(gamma) < 0 and -2 * np.pi < im < 0)


def wtiar_y1(nep: CayleyNEP, tensor: arnoldi.BasisTensor, k: int | None = None):
    if k is not None and k != tensor.k:
        raise ValueError("tensor must hold exactly k columns")
    return nep.y1(tensor)


def solve(problem: WaveguideNep, gamma0, m: int, x1=None, **kwargs):
    """Convenience wrapper: build the transformed problem and run WTIAR."""
    nep = CayleyNEP(problem, gamma0, m)
    return nep, wtiar_run(nep, x1, m, **kwargs)


__all__ = [
    "AlphaCoefficients", "CayleyNEP", "alpha_recursion", "build_cayley_nep",
    "default_start", "in_region", "iar_waveguide_run", "solve", "wtiar_run",
    "wtiar_y1",
]
