"""Independent reference computations used by the tests.

Nothing here shares code paths with the quantities it checks: Taylor
coefficients come from contour integrals of directly evaluated functions,
FEM matrices from global Kronecker products of 1D matrices.
"""

import math

import mpmath
import numpy as np
import scipy.sparse as sp

from tiar.nep import CayleyShift

# Reference eigenvalues of the benchmark waveguide (m = 100) per grid.
REFERENCE_EIGENVALUES = {
    (10, 11): (-0.010297987 - 4.966269257j, -0.008202089 - 1.390972357j),
    (20, 21): (-0.009556975 - 4.965939619j, -0.009012367 - 1.337899343j),
    (40, 41): (-0.009401369 - 4.965933116j, -0.009258151 - 1.322687924j),
    (80, 81): (-0.009368285 - 4.966067569j, -0.009332752 - 1.318511833j),
    (160, 161): (-0.009359775 - 4.966072322j, -0.009350769 - 1.317465909j),
}


def taylor_by_contour(fun, lmax, radius, npts=2048):
    """``d^l f(0)`` for ``l = 0..lmax`` by the trapezoid rule on a circle."""
    theta = 2 * np.pi * np.arange(npts) / npts
    lam = radius * np.exp(1j * theta)
    vals = fun(lam)
    # coefficients c_l = mean(f e^{-i l theta}) / radius^l
    coef = np.fft.fft(vals, axis=0)[: lmax + 1] / npts
    scale = np.array([math.factorial(l) / radius ** l for l in range(lmax + 1)])
    return coef * scale.reshape((-1,) + (1,) * (coef.ndim - 1))


def analytic_radius(gamma0, j, samples=20001):
    """Distance from 0 to the nearest point where ``s_j(gamma(lam))`` is not analytic.

    That is ``|lam| = 1`` (``Re gamma = 0``) or the image of the line
    ``Im gamma = -2 pi j``.
    """
    shift = CayleyShift(gamma0)
    t = np.linspace(-1e3, 1e3, samples)
    t = np.concatenate([t, np.linspace(-20, 20, samples)])
    g = t - 2j * np.pi * j
    lam = (g - shift.gamma0) / (g + shift.conj)
    return min(1.0, float(np.min(np.abs(lam))))


def alpha_by_contour(gamma0, kappa, j, lmax, d0, fraction=0.8, npts=128, dps=30):
    """``d^l/dlam^l [(1-lam)(s_j(gamma(lam)) + d0)]`` at 0, evaluating ``s`` directly.

    The directly evaluated ``s_j`` jumps across the image of
    ``Im gamma = -2 pi j``, so the circle must stay inside that curve while
    the Taylor coefficients decay only like ``1^{-l}``; extended precision
    keeps the high-order coefficients from drowning in rounding error.
    """
    mp = mpmath.mp
    with mpmath.workdps(dps):
        rho = mpmath.mpf(fraction * analytic_radius(gamma0, j))
        g0 = mpmath.mpc(gamma0)
        gc = mpmath.conj(g0)
        two_pi = 2 * mp.pi
        kap2 = mpmath.mpf(kappa) ** 2
        vals = []
        for q in range(npts):
            lam = rho * mpmath.expj(two_pi * q / npts)
            g = (g0 + lam * gc) / (1 - lam)
            b = (g + 1j * two_pi * j) ** 2 + kap2
            s = mpmath.sign(b.imag) * 1j * mpmath.sqrt(b)
            vals.append((1 - lam) * (s + d0))
        out = []
        for l in range(lmax + 1):
            acc = mpmath.fsum(v * mpmath.expj(-two_pi * l * q / npts)
                              for q, v in enumerate(vals))
            out.append(complex(acc / npts * mpmath.factorial(l) / rho ** l))
    return np.array(out)


# ---------------------------------------------------------------------------
# FEM reference by Kronecker products (constant wavenumber)
# ---------------------------------------------------------------------------


def _tridiag(n, lo, di, up, periodic=False):
    M = sp.diags([np.full(n - 1, lo), np.full(n, di), np.full(n - 1, up)],
                 [-1, 0, 1], format="lil")
    if periodic:
        M[0, n - 1] = lo
        M[n - 1, 0] = up
    return M.tocsr()


def kron_fem(nx, nz, x_minus, x_plus, kappa):
    """Full-node matrices (stiff, dz, mass, kmass) on ``(nx+2) x nz`` nodes."""
    hx = (x_plus - x_minus) / (nx + 1)
    hz = 1.0 / nz
    nnx = nx + 2
    Mx = _tridiag(nnx, hx / 6, 4 * hx / 6, hx / 6).tolil()
    Mx[0, 0] = Mx[-1, -1] = 2 * hx / 6
    Sx = _tridiag(nnx, -1 / hx, 2 / hx, -1 / hx).tolil()
    Sx[0, 0] = Sx[-1, -1] = 1 / hx
    Mz = _tridiag(nz, hz / 6, 4 * hz / 6, hz / 6, periodic=True)
    Sz = _tridiag(nz, -1 / hz, 2 / hz, -1 / hz, periodic=True)
    # row = test function, column = trial; int phi_col' phi_row
    Dz = _tridiag(nz, -0.5, 0.0, 0.5, periodic=True)
    Mx, Sx = Mx.tocsr(), Sx.tocsr()
    stiff = sp.kron(Sx, Mz) + sp.kron(Mx, Sz)
    dz = sp.kron(Mx, Dz)
    mass = sp.kron(Mx, Mz)
    return {"stiff": stiff.tocsr(), "dz": dz.tocsr(), "mass": mass.tocsr(),
            "kmass": (kappa ** 2 * mass).tocsr()}


def split_blocks(M, nx, nz):
    """Rows of interior nodes; columns split into interior and boundary."""
    N = (nx + 2) * nz
    inner = np.arange(nz, (nx + 1) * nz)
    bnd = np.concatenate([np.arange(nz), np.arange((nx + 1) * nz, N)])
    M = sp.csr_matrix(M)[inner]
    return M[:, inner].toarray(), M[:, bnd].toarray()


# ---------------------------------------------------------------------------
# Transformed problem derivatives from dense evaluations
# ---------------------------------------------------------------------------


def cayley_derivatives_dense(nep, imax, radius=0.05, npts=256):
    """``Mt^{(i)}(0)`` for ``i = 0..imax`` from dense ``Mt(lam)`` on a circle."""
    theta = 2 * np.pi * np.arange(npts) / npts
    vals = np.array([nep.dense(radius * np.exp(1j * t)) for t in theta])
    return taylor_by_contour(lambda lam: vals, imax, radius, npts)

