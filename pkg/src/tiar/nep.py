"""Nonlinear eigenvalue problem interface, Cayley maps and polynomial NEPs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
import scipy.linalg as la


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix that must be factorized is (numerically) singular."""


class PoleError(ZeroDivisionError):
    """Evaluation of a Cayley map at its pole."""


@runtime_checkable
class NepProblem(Protocol):
    """What the Arnoldi solvers need from a NEP ``M(lam) w = 0``.

    ``solve_step`` receives the block ``Y = [y_2, ..., y_{k+1}]`` (shape
    ``(n, k)``) and returns ``y_1 = -M(0)^{-1} sum_i M^{(i)}(0) y_{i+1}``.
    ``evaluate`` returns ``M(lam) w`` and is only used for residuals.
    """

    n: int

    def solve_step(self, Y: np.ndarray) -> np.ndarray: ...

    def evaluate(self, lam: complex, w: np.ndarray) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# Cayley transformation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CayleyShift:
    """Shift of the Cayley map ``lam = (gamma - g0) / (gamma + conj(g0))``."""

    gamma0: complex

    def __post_init__(self):
        g = complex(self.gamma0)
        object.__setattr__(self, "gamma0", g)
        if g.real == 0:
            raise ValueError("the shift must have a nonzero real part")
        if math.isclose(math.remainder(g.imag, 2 * math.pi), 0.0, abs_tol=1e-14):
            raise ValueError("Im(shift) must not be a multiple of 2*pi")

    @property
    def conj(self) -> complex:
        return self.gamma0.conjugate()


def cayley_forward(gamma, shift: CayleyShift):
    """Map ``gamma`` to ``(gamma - g0) / (gamma + conj(g0))``."""
    den = gamma + shift.conj
    if np.any(den == 0):
        raise PoleError("gamma = -conj(shift) is the pole of the Cayley map")
    return (gamma - shift.gamma0) / den


def cayley_inverse(lam, shift: CayleyShift):
    """Map ``lam`` back to ``(g0 + lam conj(g0)) / (1 - lam)``."""
    den = 1 - lam
    if np.any(den == 0):
        raise PoleError("lam = 1 is the pole of the inverse Cayley map")
    return (shift.gamma0 + lam * shift.conj) / den


# ---------------------------------------------------------------------------
# Polynomial NEPs (test fixtures and small examples)
# ---------------------------------------------------------------------------


class PolynomialNep:
    """``M(lam) = sum_i lam^i B_i`` with dense coefficient matrices."""

    def __init__(self, coeffs):
        coeffs = [np.atleast_2d(np.asarray(B, dtype=complex)) for B in coeffs]
        if len(coeffs) < 2:
            raise ValueError("need at least B0 and B1")
        n = coeffs[0].shape[0]
        for B in coeffs:
            if B.shape != (n, n):
                raise ValueError("coefficients must be square and of equal size")
        self.coeffs = tuple(coeffs)
        self.n = n
        self._lu = None

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def random(cls, n: int, degree: int, rng=None) -> "PolynomialNep":
        rng = np.random.default_rng(rng)
        coeffs = [rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
                  for _ in range(degree + 1)]
        return cls(coeffs)

    @property
    def lu(self):
        if self._lu is None:
            B0 = self.coeffs[0]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", la.LinAlgWarning)
                lu, piv = la.lu_factor(B0, check_finite=True)
            d = np.abs(np.diag(lu))
            if d.min() <= 1e-14 * max(d.max(), 1e-300):
                raise SingularMatrixError("B0 = M(0) is singular")
            self._lu = (lu, piv)
        return self._lu

    def derivative(self, i: int) -> np.ndarray:
        """``M^{(i)}(0) = i! B_i``."""
        if i > self.degree:
            return np.zeros((self.n, self.n), dtype=complex)
        return math.factorial(i) * self.coeffs[i]

    def solve_step(self, Y) -> np.ndarray:
        Y = np.asarray(Y).reshape(self.n, -1)
        k = Y.shape[1]
        rhs = np.zeros(self.n, dtype=complex)
        for i in range(1, min(k, self.degree) + 1):
            rhs += math.factorial(i) * (self.coeffs[i] @ Y[:, i - 1])
        return -la.lu_solve(self.lu, rhs)

    def evaluate(self, lam, w) -> np.ndarray:
        out = np.zeros(np.shape(w), dtype=complex)
        for B in reversed(self.coeffs):
            out = lam * out + B @ w
        return out

    def companion_eigenvalues(self) -> np.ndarray:
        """All eigenvalues via a dense companion pencil (reference oracle)."""
        d, n = self.degree, self.n
        A = np.zeros((d * n, d * n), dtype=complex)
        B = np.eye(d * n, dtype=complex)
        for i in range(d):
            A[:n, i * n:(i + 1) * n] = -self.coeffs[d - 1 - i]
        A[n:, :-n] = np.eye((d - 1) * n)
        B[:n, :n] = self.coeffs[d]
        return la.eigvals(A, B)


def polynomial_solve_step(p: PolynomialNep, Y) -> np.ndarray:
    return p.solve_step(Y)
