"""Discretized waveguide eigenvalue problem with DtN boundary conditions.

The interior strip ``[x_-, x_+] x [0, 1]`` is meshed with bilinear
rectangular elements that are periodic in ``z``.  Unknowns are ordered as
``w = [u (z fastest, x slowest); u_-; u_+]`` so ``n = nx*nz + 2*nz``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class GeometryError(ValueError):
    """Raised for an inconsistent waveguide geometry or grid."""


class BranchError(ValueError):
    """Raised when the signed square root in the DtN symbol is undefined."""


# ---------------------------------------------------------------------------
# Geometry and grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    x0: float
    x1: float
    z0: float
    z1: float
    kappa: float


@dataclass(frozen=True)
class WaveguideGeometry:
    """Piecewise constant wavenumber on a z-periodic strip.

    ``regions`` must tile ``[x_minus, x_plus] x [0, 1]``; outside the strip
    the wavenumber is ``kappa_minus`` (left) and ``kappa_plus`` (right).
    """

    kappa_minus: float
    kappa_plus: float
    x_minus: float
    x_plus: float
    regions: tuple[Region, ...]
    omega: float = math.pi
    name: str = "custom"
    note: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self, tol: float = 1e-12) -> None:
        if not self.x_minus < self.x_plus:
            raise GeometryError("x_minus must be smaller than x_plus")
        if self.kappa_minus <= 0 or self.kappa_plus <= 0:
            raise GeometryError("exterior wavenumbers must be positive")
        if not self.regions:
            raise GeometryError("at least one interior region is required")
        area = 0.0
        for r in self.regions:
            if r.kappa <= 0:
                raise GeometryError(f"region {r} has non-positive kappa")
            if not (r.x0 < r.x1 and r.z0 < r.z1):
                raise GeometryError(f"region {r} is empty")
            if (r.x0 < self.x_minus - tol or r.x1 > self.x_plus + tol
                    or r.z0 < -tol or r.z1 > 1 + tol):
                raise GeometryError(f"region {r} leaves the interior strip")
            area += (r.x1 - r.x0) * (r.z1 - r.z0)
        for i, r in enumerate(self.regions):
            for s in self.regions[i + 1:]:
                dx = min(r.x1, s.x1) - max(r.x0, s.x0)
                dz = min(r.z1, s.z1) - max(r.z0, s.z0)
                if dx > tol and dz > tol:
                    raise GeometryError(f"regions {r} and {s} overlap")
        total = self.x_plus - self.x_minus
        if abs(area - total) > 1e-9 * max(1.0, total):
            raise GeometryError(
                f"regions cover area {area:.12g}, strip has area {total:.12g}")

    def kappa(self, x, z):
        """Wavenumber at points ``(x, z)``; ``z`` is taken modulo 1."""
        x = np.asarray(x, dtype=float)
        z = np.mod(np.asarray(z, dtype=float), 1.0)
        x, z = np.broadcast_arrays(x, z)
        out = np.full(x.shape, np.nan)
        out[x < self.x_minus] = self.kappa_minus
        out[x > self.x_plus] = self.kappa_plus
        for r in self.regions:
            mask = (x >= r.x0) & (x <= r.x1) & (z >= r.z0) & (z <= r.z1)
            out[mask & np.isnan(out)] = r.kappa
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WaveguideGeometry":
        omega = float(data.get("omega", math.pi))
        try:
            regions = tuple(
                Region(float(r["x0"]), float(r["x1"]), float(r["z0"]),
                       float(r["z1"]), float(r["kappa"]))
                for r in data["regions"])
            return cls(
                kappa_minus=float(data["kappa_minus"]),
                kappa_plus=float(data["kappa_plus"]),
                x_minus=float(data["x_minus"]),
                x_plus=float(data["x_plus"]),
                regions=regions,
                omega=omega,
                name=str(data.get("name", "custom")),
                note=str(data.get("note", "")),
            )
        except (KeyError, TypeError) as exc:
            raise GeometryError(f"malformed geometry description: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "note": self.note,
            "omega": self.omega,
            "kappa_minus": self.kappa_minus,
            "kappa_plus": self.kappa_plus,
            "x_minus": self.x_minus,
            "x_plus": self.x_plus,
            "regions": [r.__dict__.copy() for r in self.regions],
        }

    @classmethod
    def from_file(cls, path) -> "WaveguideGeometry":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


PRESETS = ("benchmark", "complex")


def load_preset(name: str) -> WaveguideGeometry:
    """Load one of the bundled geometries (see ``PRESETS``)."""
    if name not in PRESETS:
        raise GeometryError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("tiar.presets").joinpath(f"{name}.json").read_text()
    data = json.loads(text)
    return WaveguideGeometry.from_dict(data)


@dataclass(frozen=True)
class DiscretizationGrid:
    """Uniform grid: ``nx`` interior columns, ``nz`` (odd) periodic rows."""

    nx: int
    nz: int
    x_minus: float
    x_plus: float

    def __post_init__(self):
        if self.nx < 2:
            raise GeometryError("nx must be at least 2 (one-sided stencil)")
        if self.nz < 1 or self.nz % 2 == 0:
            raise GeometryError("nz must be a positive odd integer")

    @classmethod
    def for_geometry(cls, geometry: WaveguideGeometry, nx: int, nz: int):
        return cls(int(nx), int(nz), geometry.x_minus, geometry.x_plus)

    @property
    def hx(self) -> float:
        return (self.x_plus - self.x_minus) / (self.nx + 1)

    @property
    def hz(self) -> float:
        return 1.0 / self.nz

    @property
    def p(self) -> int:
        return (self.nz - 1) // 2

    @property
    def n_interior(self) -> int:
        return self.nx * self.nz

    @property
    def n(self) -> int:
        return self.nx * self.nz + 2 * self.nz

    @property
    def x_nodes(self) -> np.ndarray:
        """Interior node abscissae ``x_1..x_nx``."""
        return self.x_minus + self.hx * np.arange(1, self.nx + 1)

    @property
    def z_nodes(self) -> np.ndarray:
        """Node ordinates ``z_1..z_nz``; ``z_nz = 1`` coincides with ``z = 0``."""
        return self.hz * np.arange(1, self.nz + 1)


# ---------------------------------------------------------------------------
# DtN symbol
# ---------------------------------------------------------------------------


def beta(gamma, kappa, k):
    """``(gamma + 2 i pi k)^2 + kappa^2``, vectorized over ``k``."""
    return (gamma + 2j * np.pi * np.asarray(k)) ** 2 + kappa ** 2


def s_coeff(gamma, kappa, k):
    """DtN symbol ``sign(Im beta) * i * sqrt(beta)`` (principal root).

    Raises :class:`BranchError` when ``Im beta = 0`` for some ``k``.
    """
    b = beta(gamma, kappa, k)
    sgn = np.sign(np.imag(b))
    if np.any(sgn == 0):
        raise BranchError(
            f"Im beta vanishes for gamma={gamma!r}; need Re gamma != 0 "
            "and Im gamma not in 2*pi*Z")
    return sgn * 1j * np.sqrt(b)


def fourier_indices(nz: int) -> np.ndarray:
    p = (nz - 1) // 2
    return np.arange(-p, p + 1)


def fourier_matrix(nz: int) -> np.ndarray:
    """Dense ``R = [exp(2 i pi j z_k)]`` with ``z_k = k/nz``, ``j = -p..p``."""
    z = np.arange(1, nz + 1) / nz
    return np.exp(2j * np.pi * np.outer(z, fourier_indices(nz)))


def apply_fourier_diagonal(diag, g):
    """Compute ``R diag(d) R^{-1} g`` with FFTs.

    ``diag`` is ordered ``j = -p..p`` and may carry trailing axes matching
    ``g``'s columns, i.e. ``g`` may be ``(nz,)`` or ``(nz, k)``.
    """
    g = np.asarray(g)
    diag = np.asarray(diag)
    if diag.ndim < g.ndim:
        diag = diag.reshape(diag.shape + (1,) * (g.ndim - diag.ndim))
    # Grid point z_nz = 1 is the FFT's sample at z = 0.
    coef = np.fft.fft(np.roll(g, 1, axis=0), axis=0)
    coef *= np.fft.ifftshift(diag, axes=0)
    return np.roll(np.fft.ifft(coef, axis=0), -1, axis=0)


@dataclass(frozen=True)
class DtnOperator:
    """Discrete DtN map on one side, ``R L(gamma) R^{-1}``."""

    kappa: float
    nz: int
    side: str = "+"

    def symbols(self, gamma) -> np.ndarray:
        return s_coeff(gamma, self.kappa, fourier_indices(self.nz))

    def apply(self, gamma, g, shift: float = 0.0) -> np.ndarray:
        """``R (L(gamma) + shift I) R^{-1} g`` via FFT."""
        if len(g) != self.nz:
            raise ValueError(f"expected {self.nz} samples, got {len(g)}")
        return apply_fourier_diagonal(self.symbols(gamma) + shift, g)

    def dense(self, gamma, shift: float = 0.0) -> np.ndarray:
        R = fourier_matrix(self.nz)
        return R @ np.diag(self.symbols(gamma) + shift) @ np.linalg.inv(R)


def dtn_apply(op: DtnOperator, gamma, g) -> np.ndarray:
    return op.apply(gamma, g)


# ---------------------------------------------------------------------------
# FEM assembly
# ---------------------------------------------------------------------------


def _mass1d(h):
    return h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def _stiff1d(h):
    return np.array([[1.0, -1.0], [-1.0, 1.0]]) / h


# rows: test function, cols: trial function; int phi_c' phi_r over the element
_DERIV1D = np.array([[-0.5, 0.5], [-0.5, 0.5]])


def _partial_mass1d(h, a, b):
    """``int_a^b phi_r phi_c`` on ``[0, h]`` for the two hat pieces."""

    def prim(t):
        # antiderivatives of (1-t/h)^2, (1-t/h)(t/h), (t/h)^2
        u = t / h
        return np.array([
            [-h * (1 - u) ** 3 / 3, h * (u ** 2 / 2 - u ** 3 / 3)],
            [h * (u ** 2 / 2 - u ** 3 / 3), h * u ** 3 / 3],
        ])

    return prim(b) - prim(a)


def element_matrices(hx: float, hz: float) -> dict[str, np.ndarray]:
    """Reference-element matrices for the bilinear forms.

    Local node order is ``(ix, iz) -> 2*ix + iz``.  Returns ``stiff``
    (``int grad u . grad phi``), ``dz`` (``int u_z phi``) and ``mass``.
    """
    mx, mz = _mass1d(hx), _mass1d(hz)
    return {
        "stiff": np.kron(_stiff1d(hx), mz) + np.kron(mx, _stiff1d(hz)),
        "dz": np.kron(mx, _DERIV1D),
        "mass": np.kron(mx, mz),
    }


def _element_kappa2_mass(geometry, x0, hx, z0, hz, rule):
    if rule == "midpoint":
        k = geometry.kappa(x0 + hx / 2, z0 + hz / 2)
        return float(k) ** 2 * np.kron(_mass1d(hx), _mass1d(hz))
    # exact: sum over the regions intersecting the element
    out = np.zeros((4, 4))
    for r in geometry.regions:
        a, b = max(r.x0, x0), min(r.x1, x0 + hx)
        if b - a <= 1e-14 * hx:
            continue
        c, d = max(r.z0, z0), min(r.z1, z0 + hz)
        if d - c <= 1e-14 * hz:
            continue
        out += r.kappa ** 2 * np.kron(_partial_mass1d(hx, a - x0, b - x0),
                                      _partial_mass1d(hz, c - z0, d - z0))
    return out


@dataclass(frozen=True)
class BoundaryStencil:
    d0: float
    d1: float
    d2: float

    @classmethod
    def for_spacing(cls, hx: float) -> "BoundaryStencil":
        return cls(-3.0 / (2 * hx), 2.0 / hx, -1.0 / (2 * hx))


@dataclass
class WaveguideMatrices:
    """Sparse blocks of the quadratic part and the boundary coupling."""

    grid: DiscretizationGrid
    A: tuple  # A0, A1, A2
    C1: tuple  # C1_0, C1_1, C1_2
    C2T: sp.csr_matrix
    stencil: BoundaryStencil
    K: sp.csr_matrix
    full: dict = field(default_factory=dict, repr=False)
    _norms: tuple | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    def frobenius_norms(self) -> tuple:
        """``(||A_i|| + ||C1_i|| for i=0,1,2, ||C2^T||)``, computed once."""
        if self._norms is None:
            coef = tuple(float(spla.norm(a) + spla.norm(c))
                         for a, c in zip(self.A, self.C1))
            self._norms = coef + (float(spla.norm(self.C2T)),)
        return self._norms

    def Q(self, gamma):
        A0, A1, A2 = self.A
        return (A0 + gamma * A1 + gamma ** 2 * A2).tocsc()

    def C1_at(self, gamma):
        C0, C1, C2 = self.C1
        return (C0 + gamma * C1 + gamma ** 2 * C2).tocsc()


def _full_index(grid, ix, t):
    """Global index of the node at x-column ``ix`` (0..nx+1), z-row ``t``.

    Row ``t`` sits at ``z = t*hz``; ``t = 0`` is the same node as
    ``t = nz``, stored in the last slot of the column.
    """
    return ix * grid.nz + (t - 1) % grid.nz


def assemble_fem(geometry: WaveguideGeometry, grid: DiscretizationGrid,
                 kappa_rule: str = "exact") -> WaveguideMatrices:
    """Ritz-Galerkin matrices of the weak form by element quadrature.

    The weak form is ``a(u,phi) + gamma b(u,phi) + gamma^2 c(u,phi)`` with
    ``a = -int grad u . grad phi + int kappa^2 u phi``, ``b = 2 int u_z phi``
    and ``c = int u phi``.  Test functions are the interior hats only; trial
    functions include the two boundary columns.

    ``kappa_rule='exact'`` integrates the piecewise constant ``kappa^2``
    exactly over each element; ``'midpoint'`` samples it at the element
    centre.
    """
    if kappa_rule not in ("exact", "midpoint"):
        raise ValueError(f"unknown kappa_rule {kappa_rule!r}")
    if (abs(grid.x_minus - geometry.x_minus) > 1e-14
            or abs(grid.x_plus - geometry.x_plus) > 1e-14):
        raise GeometryError("grid and geometry disagree on the strip bounds")
    nx, nz, hx, hz = grid.nx, grid.nz, grid.hx, grid.hz
    N = (nx + 2) * nz
    ref = element_matrices(hx, hz)

    # connectivity: elements ex = 0..nx (x), t = 0..nz-1 (z)
    ex, tz = np.meshgrid(np.arange(nx + 1), np.arange(nz), indexing="ij")
    ex, tz = ex.ravel(), tz.ravel()
    conn = np.stack([
        _full_index(grid, ex, tz),
        _full_index(grid, ex, tz + 1),
        _full_index(grid, ex + 1, tz),
        _full_index(grid, ex + 1, tz + 1),
    ], axis=1)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()

    def build(local):
        vals = np.broadcast_to(local.ravel(), (len(ex), 16)).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))

    stiff = build(ref["stiff"])
    dz = build(ref["dz"])
    mass = build(ref["mass"])
    kvals = np.empty((len(ex), 16))
    for e, (i, t) in enumerate(zip(ex, tz)):
        x0 = grid.x_minus + i * hx
        kvals[e] = _element_kappa2_mass(geometry, x0, hx, t * hz, hz,
                                        kappa_rule).ravel()
    kmass = sp.csr_matrix((kvals.ravel(), (rows, cols)), shape=(N, N))

    inner = np.arange(nz, (nx + 1) * nz)
    bnd = np.concatenate([np.arange(nz), np.arange((nx + 1) * nz, N)])

    def split(Mfull):
        Mr = Mfull[inner]
        return Mr[:, inner].tocsr(), Mr[:, bnd].tocsr()

    S_in, S_bd = split(stiff)
    K_in, K_bd = split(kmass)
    D_in, D_bd = split(dz)
    M_in, M_bd = split(mass)

    stencil = BoundaryStencil.for_spacing(hx)
    e_left = sp.csr_matrix(([stencil.d1, stencil.d2], ([0, 0], [0, 1])),
                           shape=(1, nx))
    e_right = sp.csr_matrix(([stencil.d2, stencil.d1], ([0, 0], [nx - 2, nx - 1])),
                            shape=(1, nx))
    I = sp.identity(nz, format="csr")
    C2T = sp.vstack([sp.kron(e_left, I), sp.kron(e_right, I)]).tocsr()

    return WaveguideMatrices(
        grid=grid,
        A=((-S_in + K_in).tocsr(), (2 * D_in).tocsr(), M_in),
        C1=((-S_bd + K_bd).tocsr(), (2 * D_bd).tocsr(), M_bd),
        C2T=C2T,
        stencil=stencil,
        K=K_in,
        full={"stiff": stiff, "dz": dz, "mass": mass, "kmass": kmass},
    )


# ---------------------------------------------------------------------------
# The NEP M(gamma)
# ---------------------------------------------------------------------------


@dataclass
class WaveguideNep:
    """Assembled waveguide NEP ``M(gamma) = [[Q, C1], [C2^T, P]]``."""

    geometry: WaveguideGeometry
    grid: DiscretizationGrid
    mats: WaveguideMatrices

    @classmethod
    def build(cls, geometry, nx, nz, kappa_rule="exact") -> "WaveguideNep":
        grid = DiscretizationGrid.for_geometry(geometry, nx, nz)
        return cls(geometry, grid, assemble_fem(geometry, grid, kappa_rule))

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def dtn_minus(self) -> DtnOperator:
        return DtnOperator(self.geometry.kappa_minus, self.grid.nz, "-")

    @property
    def dtn_plus(self) -> DtnOperator:
        return DtnOperator(self.geometry.kappa_plus, self.grid.nz, "+")

    def evaluate(self, gamma, w) -> np.ndarray:
        return evaluate_M(self.mats, self.dtn_minus, self.dtn_plus, gamma, w)

    def residual(self, gamma, w) -> float:
        return residual(self.mats, (self.dtn_minus, self.dtn_plus), gamma, w)

    def dense(self, gamma) -> np.ndarray:
        """Dense ``M(gamma)``; small grids only."""
        nz, d0 = self.grid.nz, self.mats.stencil.d0
        top = sp.hstack([self.mats.Q(gamma), self.mats.C1_at(gamma)]).toarray()
        P = np.zeros((2 * nz, 2 * nz), dtype=complex)
        P[:nz, :nz] = self.dtn_minus.dense(gamma, d0)
        P[nz:, nz:] = self.dtn_plus.dense(gamma, d0)
        bottom = np.hstack([self.mats.C2T.toarray(), P])
        return np.vstack([top, bottom])


def evaluate_M(mats: WaveguideMatrices, dtn_minus: DtnOperator,
               dtn_plus: DtnOperator, gamma, w) -> np.ndarray:
    """``M(gamma) w`` with the DtN blocks applied by FFT.

    ``w`` may be a vector or an ``(n, k)`` block of vectors.
    """
    w = np.asarray(w)
    N, nz = mats.grid.n_interior, mats.grid.nz
    if w.shape[0] != mats.n:
        raise ValueError(f"expected leading dimension {mats.n}, got {w.shape[0]}")
    u, ub = w[:N], w[N:]
    A0, A1, A2 = mats.A
    C0, C1, C2 = mats.C1
    top = (A0 @ u + C0 @ ub) + gamma * (A1 @ u + C1 @ ub) \
        + gamma ** 2 * (A2 @ u + C2 @ ub)
    d0 = mats.stencil.d0
    bottom = mats.C2T @ u
    bottom = bottom + np.concatenate([
        apply_fourier_diagonal(_col(dtn_minus.symbols(gamma) + d0, ub), ub[:nz]),
        apply_fourier_diagonal(_col(dtn_plus.symbols(gamma) + d0, ub), ub[nz:]),
    ])
    return np.concatenate([top, bottom])


def _col(diag, like):
    return diag if like.ndim == 1 else diag[:, None]


def residual_scale(mats: WaveguideMatrices, dtn, gamma) -> float:
    """Denominator of the relative residual norm (Frobenius norms)."""
    dtn_minus, dtn_plus = dtn
    g = abs(gamma)
    norms = mats.frobenius_norms()
    total = sum(g ** i * norms[i] for i in range(3))
    total += norms[3] + 2 * abs(mats.stencil.d0)
    total += np.sum(np.abs(dtn_plus.symbols(gamma))) \
        + np.sum(np.abs(dtn_minus.symbols(gamma)))
    return float(total)


def residual(mats: WaveguideMatrices, dtn, gamma, w) -> float:
    """Relative residual norm ``E(w, gamma)``; ``w`` is normalized first."""
    w = np.asarray(w)
    w = w / np.linalg.norm(w)
    r = evaluate_M(mats, dtn[0], dtn[1], gamma, w)
    return float(np.linalg.norm(r) / residual_scale(mats, dtn, gamma))


# ---------------------------------------------------------------------------
# Exterior problem diagnostics
# ---------------------------------------------------------------------------


@dataclass
class ExteriorReport:
    modes: np.ndarray
    ode_residual: float
    decaying: bool
    dtn_error: float
    decay_rates: np.ndarray


def exterior_check(gamma, kappa, g_hat, x_samples) -> ExteriorReport:
    """Verify the mode-wise exterior solution ``w_k(x) = g_k e^{i s_k x}``.

    ``g_hat`` holds Fourier coefficients for ``k = -p..p``.  Checks the ODE
    ``w'' + beta w = 0``, strict decay of ``|w_k(x)|`` in ``x`` and that the
    DtN symbol equals ``w_x(0)`` mode by mode.
    """
    g_hat = np.asarray(g_hat, dtype=complex)
    p = (len(g_hat) - 1) // 2
    k = np.arange(-p, p + 1)
    b = beta(gamma, kappa, k)
    sgn = np.sign(b.imag)
    if np.any(sgn == 0):
        raise BranchError(f"Im beta vanishes for gamma={gamma!r}")
    root = sgn * np.sqrt(b)  # exponent i*root*x
    x = np.asarray(x_samples, dtype=float)
    w = g_hat[:, None] * np.exp(1j * np.outer(root, x))
    # w'' = -(root^2) w and root^2 = beta exactly, so the residual is the
    # rounding error of the substitution.
    wxx = -(root ** 2)[:, None] * w
    ode = np.abs(wxx + b[:, None] * w)
    scale = np.maximum(np.abs(b)[:, None] * np.abs(w), 1e-300)
    ode_residual = float(np.max(ode / scale))
    mags = np.abs(w)
    nonzero = np.abs(g_hat) > 0
    decaying = bool(np.all(np.diff(mags[nonzero], axis=1) < 0)) if len(x) > 1 else True
    s = s_coeff(gamma, kappa, k)
    wx0 = 1j * root * g_hat
    dtn_error = float(np.max(np.abs(wx0 - s * g_hat)) / max(1.0, np.max(np.abs(s * g_hat))))
    return ExteriorReport(k, ode_residual, decaying, dtn_error, root.imag)


def load_geometry(preset: str | None = None, path: str | Path | None = None):
    if (preset is None) == (path is None):
        raise GeometryError("give exactly one of preset or geometry file")
    return load_preset(preset) if preset else WaveguideGeometry.from_file(path)
