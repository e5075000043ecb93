"""Infinite Arnoldi (IAR) and its tensor-compressed form (TIAR).

Both run Arnoldi on the infinite companion operator of a NEP ``M``; the
only problem-specific operation is ``y_1`` from ``y_2..y_{k+1}``.  IAR keeps
the block upper-triangular basis ``Q_k`` explicitly; TIAR stores it as
``q_{i,j} = sum_l a[i, j, l] z_l`` with orthonormal ``Z``.  Indices in code
are 0-based: ``a[i, j, l]`` is ``a_{i+1, j+1, l+1}``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as la

from .nep import CayleyShift, NepProblem, cayley_inverse

BREAKDOWN_TOL = 1e-12


# ---------------------------------------------------------------------------
# State containers
# ---------------------------------------------------------------------------


@dataclass
class HessenbergState:
    """Rectangular Hessenberg matrix; ``H`` has shape ``(k+1, k)``."""

    H: np.ndarray
    breakdown: bool = False

    @property
    def k(self) -> int:
        return self.H.shape[1]

    @property
    def subdiagonal(self) -> np.ndarray:
        return np.real(np.diag(self.H, -1))


@dataclass
class IarBasis:
    """Block upper-triangular basis; column ``j`` stores ``q_{1..j+1, j}``."""

    n: int
    columns: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.columns)

    def dense(self, k: int | None = None) -> np.ndarray:
        """``Q_k`` as an ``(n k) x k`` array (zeros below the block diagonal)."""
        k = self.k if k is None else k
        Q = np.zeros((k * self.n, k), dtype=complex)
        for j in range(k):
            c = self.columns[j][: k * self.n]
            Q[: len(c), j] = c
        return Q

    def first_block(self, k: int) -> np.ndarray:
        """``[q_{1,1} .. q_{1,k}]``."""
        return np.stack([c[: self.n] for c in self.columns[:k]], axis=1)

    def storage(self) -> int:
        """Complex numbers accounted for the basis (``k^2 n``)."""
        return self.k ** 2 * self.n


class BasisTensor:
    """Compressed basis: coefficients ``a`` (``k x k x r``) and ``Z`` (``n x r``).

    Arrays are preallocated for ``capacity`` columns; ``k`` is the number of
    basis columns and ``r`` the number of ``z`` vectors (``r = k`` unless a
    ``y_1`` fell into ``span(Z)``).
    """

    def __init__(self, n: int, capacity: int, dtype=complex):
        self.n = n
        self._Z = np.zeros((n, capacity), dtype=dtype, order="F")
        self._a = np.zeros((capacity, capacity, capacity), dtype=dtype)
        self.k = 0
        self.r = 0

    @classmethod
    def from_arrays(cls, Z, a) -> "BasisTensor":
        Z = np.asarray(Z, dtype=complex)
        a = np.asarray(a, dtype=complex)
        k, _, r = a.shape
        cap = max(k, r)
        t = cls(Z.shape[0], cap)
        t._Z[:, :r] = Z
        t._a[:k, :k, :r] = a
        t.k, t.r = k, r
        return t

    @property
    def Z(self) -> np.ndarray:
        return self._Z[:, : self.r]

    @property
    def a(self) -> np.ndarray:
        return self._a[: self.k, : self.k, : self.r]

    def coefficient_matrix(self) -> np.ndarray:
        """``A_k`` with ``A_k[l, i] = a[i, k-1, l]`` (last basis column)."""
        return self._a[: self.k, self.k - 1, : self.r].T

    def reconstruct(self) -> np.ndarray:
        """``Q_k = sum_l a[:, :, l] (x) z_l`` as an ``(n k) x k`` array."""
        k, n = self.k, self.n
        blocks = np.einsum("ijl,nl->inj", self.a, self.Z)
        return blocks.reshape(k * n, k)

    def storage(self) -> int:
        """Complex numbers accounted for the basis (``k n + k^3``)."""
        return self.r * self.n + self.k * self.k * self.r


@dataclass
class RitzPair:
    mu: complex
    value: complex  # 1/mu, the NEP eigenvalue approximation
    gamma: complex | None = None  # back-mapped through the inverse Cayley map
    residual: float = np.nan
    iteration: int = 0
    vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def eigenvalue(self) -> complex:
        return self.value if self.gamma is None else self.gamma


@dataclass
class RitzReport:
    pairs: list
    history: list = field(default_factory=list)  # [(iteration, [RitzPair])]
    excluded_zero: int = 0
    timings: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def eigenvalues(self) -> np.ndarray:
        return np.array([p.eigenvalue for p in self.pairs])

    def converged(self, tol: float, streak: int = 1) -> list:
        """Pairs with residual below ``tol`` for ``streak`` consecutive iterations.

        A pair counts at an earlier iteration if a Ritz value there lies
        within ``sqrt(tol)`` (relative) of it and also has residual below
        ``tol``.  Without a recorded history only the final residual is used.
        """
        earlier = [pairs for it, pairs in self.history
                   if it < self.flags.get("iterations", np.inf)][-(streak - 1):] \
            if streak > 1 else []
        out = []
        for p in self.pairs:
            if not p.residual < tol:
                continue
            ev = p.eigenvalue
            rad = np.sqrt(tol) * max(1.0, abs(ev))
            if all(any(abs(q.eigenvalue - ev) <= rad and q.residual < tol
                       for q in pairs) for pairs in earlier):
                out.append(p)
        return out


class ArnoldiRun(NamedTuple):
    hessenberg: HessenbergState
    basis: object  # IarBasis or BasisTensor
    report: RitzReport


# ---------------------------------------------------------------------------
# Ritz extraction
# ---------------------------------------------------------------------------


def ritz_values(H, m: int | None = None, shift: CayleyShift | None = None,
                vectors: bool = False):
    """Ritz values of the leading ``m x m`` block of ``H``.

    Returns ``(pairs, excluded)`` where ``pairs`` is a list of
    :class:`RitzPair` (``mu``, ``1/mu`` and, with a shift, the back-mapped
    ``gamma``) and ``excluded`` counts ``mu = 0`` values that have no
    finite approximation.  With ``vectors=True`` each pair carries its
    eigenvector of the small matrix.
    """
    H = H.H if isinstance(H, HessenbergState) else np.asarray(H)
    m = H.shape[1] if m is None else m
    if H.shape[1] < m:
        raise ValueError(f"H has {H.shape[1]} columns, need {m}")
    if vectors:
        mus, S = la.eig(H[:m, :m])
    else:
        mus, S = la.eigvals(H[:m, :m]), None
    pairs, excluded = [], 0
    scale = max(np.abs(mus).max(initial=0.0), 1e-300)
    for i, mu in enumerate(mus):
        if abs(mu) <= 1e-14 * scale or mu == 0:
            excluded += 1
            continue
        value = 1.0 / mu
        gamma = None
        if shift is not None and value != 1:
            gamma = complex(cayley_inverse(value, shift))
        pairs.append(RitzPair(complex(mu), complex(value), gamma, iteration=m,
                              vector=None if S is None else S[:, i]))
    return pairs, excluded


def _sort_pairs(pairs):
    def key(p):
        r = p.residual if np.isfinite(p.residual) else np.inf
        return (r, abs(np.real(p.eigenvalue)))
    return sorted(pairs, key=key)


def _ritz_with_residuals(H, k, first_block_fn, residual_fn, shift):
    pairs, excluded = ritz_values(H[: k + 1, :k], k, shift, vectors=True)
    if residual_fn is not None and pairs:
        S = np.stack([p.vector for p in pairs], axis=1)
        W = first_block_fn(S)
        for p, w in zip(pairs, W.T):
            nw = np.linalg.norm(w)
            p.vector = w / nw if nw > 0 else w
            p.residual = residual_fn(p.eigenvalue, p.vector) if nw > 0 else np.inf
    return _sort_pairs(pairs), excluded


def default_residual(problem: NepProblem) -> Callable:
    """``||M(lam) w|| / ||w||`` using ``problem.evaluate``."""

    def res(lam, w):
        return float(np.linalg.norm(problem.evaluate(lam, w)) / np.linalg.norm(w))

    return res


# ---------------------------------------------------------------------------
# IAR (reference)
# ---------------------------------------------------------------------------


def _start_vector(x1, n):
    x1 = np.asarray(x1, dtype=complex).ravel()
    if x1.shape[0] != n:
        raise ValueError(f"start vector has length {x1.shape[0]}, expected {n}")
    nrm = np.linalg.norm(x1)
    if nrm == 0:
        raise ValueError("start vector must be nonzero")
    return x1 / nrm


def iar_run(problem: NepProblem, x1, m: int, *, residual_fn=None,
            shift: CayleyShift | None = None, history: bool = False,
            breakdown_tol: float = BREAKDOWN_TOL) -> ArnoldiRun:
    """Infinite Arnoldi, Taylor version, with the full block basis.

    Gram-Schmidt is classical with one unconditional reorthogonalization.
    """
    n = problem.n
    q1 = _start_vector(x1, n)
    basis = IarBasis(n, [q1])
    H = np.zeros((m + 1, m), dtype=complex)
    timings = dict.fromkeys(("basis_access", "solve", "orthogonalization", "ritz"), 0.0)
    hist, breakdown, k_done = [], False, 0
    resid = residual_fn

    def first_block(k):
        return lambda S: basis.first_block(k) @ S

    for k in range(1, m + 1):
        t0 = time.perf_counter()
        last = basis.columns[k - 1].reshape(k, n)
        Y = (last / np.arange(1, k + 1)[:, None]).T
        t1 = time.perf_counter()
        y1 = problem.solve_step(Y)
        t2 = time.perf_counter()
        y = np.concatenate([y1, Y.T.ravel()])
        ny = np.linalg.norm(y)
        h = np.zeros(k, dtype=complex)
        for _ in range(2):
            dh = np.array([np.vdot(c, y[: len(c)]) for c in basis.columns])
            for c, d in zip(basis.columns, dh):
                y[: len(c)] -= d * c
            h += dh
        beta = np.linalg.norm(y)
        H[:k, k - 1] = h
        H[k, k - 1] = beta
        k_done = k
        t3 = time.perf_counter()
        timings["basis_access"] += t1 - t0
        timings["solve"] += t2 - t1
        timings["orthogonalization"] += t3 - t2
        if beta <= breakdown_tol * max(ny, 1.0):
            breakdown = True
            break
        basis.columns.append(y / beta)
        if history and resid is not None:
            t4 = time.perf_counter()
            pairs, _ = _ritz_with_residuals(H, k, first_block(k), resid, shift)
            hist.append((k, pairs))
            timings["ritz"] += time.perf_counter() - t4

    t4 = time.perf_counter()
    Hk = H[: k_done + 1, :k_done]
    pairs, excluded = _ritz_with_residuals(Hk, k_done, first_block(k_done), resid, shift)
    timings["ritz"] += time.perf_counter() - t4
    report = RitzReport(pairs, hist, excluded, timings,
                        {"breakdown": breakdown, "iterations": k_done,
                         "storage": basis.storage()})
    return ArnoldiRun(HessenbergState(Hk, breakdown), basis, report)


# ---------------------------------------------------------------------------
# TIAR building blocks
# ---------------------------------------------------------------------------


def tiar_y_block(tensor: BasisTensor, k: int | None = None):
    """``[y~_2..y~_{k+1}] = Z_k A_k`` and the scaled ``y_j = y~_j/(j-1)``."""
    k = tensor.k if k is None else k
    if k != tensor.k:
        raise ValueError("tensor must hold exactly k completed columns")
    Yt = tensor.Z @ tensor.coefficient_matrix()
    return Yt, Yt / np.arange(1, k + 1)


@dataclass
class Orthogonalization:
    t: np.ndarray  # length r+1 (or r on breakdown)
    z: np.ndarray | None  # new unit vector, None on breakdown
    breakdown: bool


def tiar_orthogonalize(Z, y1, tol: float = BREAKDOWN_TOL) -> Orthogonalization:
    """Gram-Schmidt of ``y1`` against orthonormal ``Z`` (two CGS passes).

    On success ``y1 = Z t[:-1] + t[-1] z`` with ``t[-1] = ||remainder||``
    real positive up to the phase normalization of ``z`` (largest-magnitude
    entry made real positive).  When the remainder is below
    ``tol * ||y1||`` the vector lies in ``span(Z)``: ``z`` is ``None`` and
    ``t`` has only the ``r`` in-span coefficients.
    """
    y = np.array(y1, dtype=complex)
    r = Z.shape[1]
    t = np.zeros(r + 1, dtype=complex)
    ny = np.linalg.norm(y)
    if r:
        for _ in range(2):
            dt = Z.conj().T @ y
            y -= Z @ dt
            t[:r] += dt
    rem = np.linalg.norm(y)
    if rem <= tol * ny or rem == 0:
        return Orthogonalization(t[:r], None, True)
    z = y / rem
    i = np.argmax(np.abs(z))
    phase = z[i] / abs(z[i])
    z /= phase
    t[r] = rem * phase
    return Orthogonalization(t, z, False)


def tiar_build_G(tensor: BasisTensor, t, k: int | None = None) -> np.ndarray:
    """``G`` with ``g_{1,l} = t_l`` and ``g_{i,l} = a_{i-1,k,l}/(i-1)``."""
    k = tensor.k if k is None else k
    t = np.asarray(t)
    G = np.zeros((k + 1, len(t)), dtype=complex)
    G[0] = t
    r = tensor.r
    G[1:, :r] = tensor.a[:, k - 1, :] / np.arange(1, k + 1)[:, None]
    return G


def tiar_h(tensor: BasisTensor, G) -> np.ndarray:
    """``h = sum_l a[:, :, l]^H g(1..k, l)``."""
    k, r = tensor.k, tensor.r
    return np.einsum("ijl,il->j", tensor.a.conj(), G[:k, :r])


def tiar_F(tensor: BasisTensor, G, h=None, passes: int = 1):
    """Coefficients ``F`` of ``y_perp`` and ``beta = ||F||_fro``.

    With ``h=None`` the projection is computed here; ``passes=2`` adds one
    reorthogonalization (``h <- h + dh``).  Returns ``(F, h, beta)``.
    """
    k, r = tensor.k, tensor.r
    F = np.array(G, dtype=complex)
    htot = np.zeros(k, dtype=complex)
    for p in range(passes):
        hp = tiar_h(tensor, F) if (h is None or p > 0) else np.asarray(h)
        F[:k, :r] -= np.einsum("ijl,j->il", tensor.a, hp)
        htot += hp
    return F, htot, float(np.linalg.norm(F))


# ---------------------------------------------------------------------------
# TIAR
# ---------------------------------------------------------------------------


def tiar_run(problem: NepProblem, x1, m: int, *, tensor_step=None,
             residual_fn=None, shift: CayleyShift | None = None,
             history: bool = False, breakdown_tol: float = BREAKDOWN_TOL,
             monitor=None) -> ArnoldiRun:
    """Tensor infinite Arnoldi.

    ``tensor_step(Z, A_k, timings) -> y_1`` replaces steps 2-3 when the
    problem can compute ``y_1`` without forming every ``y_j`` (WTIAR);
    by default ``Z A_k`` is formed and ``problem.solve_step`` is called.
    ``monitor(k, tensor, H)`` is called after each iteration.
    """
    n = problem.n
    tensor = BasisTensor(n, m + 1)
    tensor._Z[:, 0] = _start_vector(x1, n)
    tensor._a[0, 0, 0] = 1.0
    tensor.k = tensor.r = 1
    H = np.zeros((m + 1, m), dtype=complex)
    timings = dict.fromkeys(("basis_access", "solve", "orthogonalization", "ritz"), 0.0)
    hist, k_done = [], 0
    flags = {"breakdown": False, "z_deficient": False}
    resid = residual_fn

    def first_block(S):
        k = S.shape[0]
        return tensor.Z @ (tensor._a[0, :k, : tensor.r].T @ S)

    for k in range(1, m + 1):
        t0 = time.perf_counter()
        Ak = tensor.coefficient_matrix()
        if tensor_step is None:
            Y = (tensor.Z @ Ak) / np.arange(1, k + 1)
            t1 = time.perf_counter()
            y1 = problem.solve_step(Y)
            t2 = time.perf_counter()
            timings["basis_access"] += t1 - t0
            timings["solve"] += t2 - t1
        else:
            y1 = tensor_step(tensor.Z, Ak, timings)
            t2 = time.perf_counter()

        orth = tiar_orthogonalize(tensor.Z, y1, breakdown_tol)
        G = tiar_build_G(tensor, orth.t, k)
        F, h, beta = tiar_F(tensor, G, passes=2)
        k_done = k
        H[:k, k - 1] = h
        H[k, k - 1] = beta
        if beta <= breakdown_tol * max(np.linalg.norm(G), 1.0):
            flags["breakdown"] = True
            timings["orthogonalization"] += time.perf_counter() - t2
            break
        r = tensor.r
        if orth.breakdown:
            flags["z_deficient"] = True
        else:
            tensor._Z[:, r] = orth.z
            r += 1
        # expansion: new column j = k; new row i = k and new l = r-1 are
        # zero for the old columns by preallocation
        tensor._a[: k + 1, k, :r] = F[:, :r] / beta
        tensor.k, tensor.r = k + 1, r
        timings["orthogonalization"] += time.perf_counter() - t2
        if monitor is not None:
            monitor(k, tensor, H[: k + 1, :k])
        if history and resid is not None:
            t4 = time.perf_counter()
            pairs, _ = _ritz_with_residuals(H, k, first_block, resid, shift)
            hist.append((k, pairs))
            timings["ritz"] += time.perf_counter() - t4

    t4 = time.perf_counter()
    Hk = H[: k_done + 1, :k_done]
    pairs, excluded = _ritz_with_residuals(Hk, k_done, first_block, resid, shift)
    timings["ritz"] += time.perf_counter() - t4
    flags.update(iterations=k_done, storage=tensor.storage())
    report = RitzReport(pairs, hist, excluded, timings, flags)
    return ArnoldiRun(HessenbergState(Hk, flags["breakdown"]), tensor, report)
