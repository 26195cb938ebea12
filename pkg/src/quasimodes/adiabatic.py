"""Constant-fibre adiabatic engine on a product A = B x F.

The operator family is h^{-2} P_F + P_0 + h P_1 + ... with P_F acting in
the fibre variable Y only.  Fixing a simple fibre eigenpair (lambda_F, psi)
and a simple eigenpair (lambda_0, phi) of the horizontal operator
U -> Pi P_0 (U x psi), the inductive step solves a triangular 2x2 model
problem per order and accumulates the eigenvalue series and the 2D
quasimode coefficients.
"""

import warnings

import numpy as np

from .errors import DomainError, GridMismatchError, TruncationError
from .numerics import (ConstrainedSolver, GridFunction1D, SymBandMatrix,
                       smallest_eigenpairs)
from .series import HalfPowerSeries


class GridFunction2D:
    """Interior samples on base_grid x fibre_grid, zero on the boundary.

    values has shape (base.n, fibre.n); values[i, j] is the sample at
    (x_i, Y_j).
    """

    def __init__(self, base_grid, fibre_grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (base_grid.n, fibre_grid.n):
            raise GridMismatchError("2D value array does not match the grids")
        self.base_grid = base_grid
        self.fibre_grid = fibre_grid
        self.values = values

    @classmethod
    def zero(cls, base_grid, fibre_grid):
        return cls(base_grid, fibre_grid, np.zeros((base_grid.n, fibre_grid.n)))

    @classmethod
    def rank_one(cls, U, psi):
        """The product U(x) psi(Y)."""
        return cls(U.grid, psi.grid, np.outer(U.values, psi.values))

    @classmethod
    def from_callable(cls, base_grid, fibre_grid, f):
        X, Y = np.meshgrid(base_grid.nodes, fibre_grid.nodes, indexing="ij")
        return cls(base_grid, fibre_grid, f(X, Y))

    def copy(self):
        return GridFunction2D(self.base_grid, self.fibre_grid, self.values.copy())

    def _check(self, other):
        if not (self.base_grid.same_as(other.base_grid)
                and self.fibre_grid.same_as(other.fibre_grid)):
            raise GridMismatchError("2D functions on different grids")

    def __add__(self, other):
        self._check(other)
        return GridFunction2D(self.base_grid, self.fibre_grid,
                              self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return GridFunction2D(self.base_grid, self.fibre_grid,
                              self.values - other.values)

    def __mul__(self, c):
        return GridFunction2D(self.base_grid, self.fibre_grid,
                              self.values * float(c))

    __rmul__ = __mul__

    def norm(self):
        w = self.base_grid.spacing * self.fibre_grid.spacing
        return float(np.sqrt(w) * np.linalg.norm(self.values))


def _pad2(values):
    """Embed interior values in an array with one ring of boundary zeros."""
    nx, ny = values.shape
    out = np.zeros((nx + 2, ny + 2))
    out[1:-1, 1:-1] = values
    return out


def _derivative(values, sx, sy, alpha, beta):
    """Centered FD of order (alpha, beta) <= 2 with zero Dirichlet padding."""
    p = _pad2(values)
    if alpha == 1:
        p = (p[2:, :] - p[:-2, :]) / (2 * sx)
    elif alpha == 2:
        p = (p[2:, :] - 2 * p[1:-1, :] + p[:-2, :]) / sx**2
    else:
        p = p[1:-1, :]
    if beta == 1:
        p = (p[:, 2:] - p[:, :-2]) / (2 * sy)
    elif beta == 2:
        p = (p[:, 2:] - 2 * p[:, 1:-1] + p[:, :-2]) / sy**2
    else:
        p = p[:, 1:-1]
    return p


class OperatorDescriptor:
    """Sum of terms  c(x, Y) * d^alpha/dx^alpha d^beta/dY^beta,  alpha+beta <= 2.

    Coefficients may be None (meaning 1), scalars, or callables c(x, Y)
    (vectorized over meshgrid arrays).
    """

    def __init__(self, terms):
        for _, alpha, beta in terms:
            if alpha < 0 or beta < 0 or alpha + beta > 2:
                raise DomainError("derivative orders must satisfy a+b <= 2, a,b >= 0")
        self.terms = list(terms)

    def apply(self, f):
        """Apply to a GridFunction2D, returning a GridFunction2D."""
        bx, fy = f.base_grid, f.fibre_grid
        out = np.zeros_like(f.values)
        X = Y = None
        for coeff, alpha, beta in self.terms:
            d = _derivative(f.values, bx.spacing, fy.spacing, alpha, beta)
            if coeff is None:
                out += d
            elif np.isscalar(coeff):
                out += coeff * d
            else:
                if X is None:
                    X, Y = np.meshgrid(bx.nodes, fy.nodes, indexing="ij")
                out += coeff(X, Y) * d
        return GridFunction2D(bx, fy, out)

    @classmethod
    def laplacian_x(cls):
        return cls([(-1.0, 2, 0)])


def project_pi(f, psi):
    """Fibrewise projection  x -> <f(x, .), psi>  (quadrature inner product)."""
    if not f.fibre_grid.same_as(psi.grid):
        raise GridMismatchError("psi is not on the fibre grid")
    vals = f.fibre_grid.spacing * f.values @ psi.values
    return GridFunction1D(f.base_grid, vals)


def perp_part(f, psi):
    """f minus its rank-one Pi component along psi."""
    U = project_pi(f, psi)
    return GridFunction2D(f.base_grid, f.fibre_grid,
                          f.values - np.outer(U.values, psi.values))


# relative asymmetry beyond which the horizontal operator is rejected
PB_ASYM_RTOL = 1e-6


def horizontal_operator(P0, psi, base_grid):
    """Matrix of U -> Pi P0 (U x psi), assembled column by column.

    The matrix is symmetrized; asymmetry beyond PB_ASYM_RTOL (relative)
    means P0 does not induce a self-adjoint horizontal operator and is
    rejected.
    """
    n = base_grid.n
    M = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        col = GridFunction2D(base_grid, psi.grid, np.outer(e, psi.values))
        M[:, i] = project_pi(P0.apply(col), psi).values
    asym = np.max(np.abs(M - M.T))
    if asym > PB_ASYM_RTOL * max(np.max(np.abs(M)), 1.0):
        raise DomainError(
            f"horizontal operator asymmetry {asym:.3e} violates self-adjointness")
    return SymBandMatrix.from_dense(0.5 * (M + M.T))


class AdiabaticFamily:
    """Fibre operator, descriptor list [P0, P1, ...], and the tracked fibre mode.

    valid_order: highest power of h through which the descriptor list is
    exact (None when terms beyond the list are exactly zero).
    """

    def __init__(self, base_grid, fibre_grid, fibre_op, descriptors,
                 fibre_mode=0, valid_order=None):
        if fibre_op.n != fibre_grid.n:
            raise DomainError("fibre operator does not match the fibre grid")
        if not descriptors:
            raise DomainError("need at least the descriptor P0")
        self.base_grid = base_grid
        self.fibre_grid = fibre_grid
        self.fibre_op = fibre_op
        self.descriptors = list(descriptors)
        self.fibre_mode = int(fibre_mode)
        self.valid_order = valid_order
        self._fibre_pair = None
        self._pb = None
        if self.fibre_mode > 0:
            warnings.warn("tracked fibre eigenvalue is not the lowest; the "
                          "quasimode need not approximate a true eigenfunction",
                          stacklevel=2)

    def fibre_pair(self):
        if self._fibre_pair is None:
            pairs = smallest_eigenpairs(self.fibre_op, self.fibre_mode + 1,
                                        grid=self.fibre_grid)
            self._fibre_pair = pairs[self.fibre_mode]
        return self._fibre_pair

    def pb_matrix(self):
        if self._pb is None:
            _, psi = self.fibre_pair()
            self._pb = horizontal_operator(self.descriptors[0], psi,
                                           self.base_grid)
        return self._pb

    def descriptor(self, i):
        """P_i, or None when the term is zero / beyond the list."""
        if 0 <= i < len(self.descriptors):
            return self.descriptors[i]
        return None

    def apply_full(self, h, f):
        """Action of h^{-2} P_F + sum_j h^j P_j on a GridFunction2D."""
        out = h**-2 * _apply_fibre_op(self.fibre_op, f)
        for j, D in enumerate(self.descriptors):
            if D is not None:
                out = out + h**j * D.apply(f)
        return out


def _apply_fibre_op(fibre_op, f):
    vals = np.empty_like(f.values)
    for i in range(f.values.shape[0]):
        vals[i] = fibre_op.matvec(f.values[i])
    return GridFunction2D(f.base_grid, f.fibre_grid, vals)


def model_solve(g_perp, g_pi, family, lambda0, phi, _solvers=None):
    """Triangular model solve of the inductive step.

    (i)  fibrewise (P_F - lambda_F) v_perp(x, .) = g_perp(x, .), v_perp _|_ psi;
    (ii) mu = <g_pi - Pi P0 v_perp, phi> and
         (P_B - lambda0) v_pi = g_pi - Pi P0 v_perp - mu phi, v_pi _|_ phi.

    Returns (v = v_perp + v_pi x psi, mu).
    """
    lam_f, psi = family.fibre_pair()
    if _solvers is None:
        fs = ConstrainedSolver(family.fibre_op, lam_f, psi,
                               family.fibre_grid.spacing)
        bs = ConstrainedSolver(family.pb_matrix(), lambda0, phi,
                               family.base_grid.spacing)
    else:
        fs, bs = _solvers
    pre = project_pi(g_perp, psi)
    if np.max(np.abs(pre.values)) > 1e-8 * max(1.0, np.max(np.abs(g_perp.values))):
        raise DomainError("g_perp has a nonzero Pi component")

    v_perp_vals = np.zeros_like(g_perp.values)
    if np.any(g_perp.values):
        for i in range(g_perp.values.shape[0]):
            v_perp_vals[i], _ = fs.solve(g_perp.values[i])
    v_perp = GridFunction2D(family.base_grid, family.fibre_grid, v_perp_vals)

    rhs = g_pi.values - project_pi(family.descriptors[0].apply(v_perp), psi).values
    mu = float(family.base_grid.spacing * np.dot(rhs, phi.values))
    v_pi_vals, gamma = bs.solve(rhs - mu * phi.values)
    # gamma absorbs residual projection error; it should be negligible
    v = GridFunction2D(family.base_grid, family.fibre_grid,
                       v_perp_vals + np.outer(v_pi_vals, psi.values))
    return v, mu


class AdiabaticResult:
    def __init__(self, lambda_series, u_coeffs, psi, phi):
        self.lambda_series = lambda_series
        self.u_coeffs = u_coeffs
        self.psi = psi
        self.phi = phi
        if abs(lambda_series.coeff(-2)) > 1e-12 * max(abs(lambda_series.coeff(-4)), 1.0):
            raise DomainError("nonzero h^{-1} coefficient in adiabatic series")
        # leading coefficient must be the rank-one product phi x psi
        r1 = np.outer(phi.values, psi.values)
        if np.max(np.abs(u_coeffs[0].values - r1)) > 1e-8:
            raise DomainError("leading quasimode coefficient is not rank-one")

    def lambda_coeffs(self):
        """[lambda_{-2}, lambda_{-1}, lambda_0, lambda_1, ...]."""
        s = self.lambda_series
        return [s.coeff(k) for k in range(-4, s.k_max + 1, 2)]

    def quasimode(self, h):
        vals = np.zeros_like(self.u_coeffs[0].values)
        for j, u in enumerate(self.u_coeffs):
            vals += h**j * u.values
        return GridFunction2D(self.u_coeffs[0].base_grid,
                              self.u_coeffs[0].fibre_grid, vals)


def adiabatic_expansion(family, base_mode, order):
    """Eigenvalue series and quasimode coefficients through h^order.

    The order-k step feeds the model solve with the known leading parts of
    the remainder h^{-k}(P - lambda) u: its full h^{k-2} coefficient (for
    the perpendicular corrector) and the Pi part of its h^k coefficient
    (for the horizontal corrector and lambda_k).
    """
    if order < 0:
        raise DomainError("order must be nonnegative")
    if family.valid_order is not None and order > family.valid_order:
        raise TruncationError(
            f"descriptor list is exact only through order {family.valid_order}")
    lam_f, psi = family.fibre_pair()
    PB = family.pb_matrix()
    pairs = smallest_eigenpairs(PB, base_mode + 1, grid=family.base_grid)
    lam0, phi = pairs[base_mode]

    fs = ConstrainedSolver(family.fibre_op, lam_f, psi, family.fibre_grid.spacing)
    bs = ConstrainedSolver(PB, lam0, phi, family.base_grid.spacing)

    u0 = GridFunction2D.rank_one(phi, psi)
    us = [u0]
    lams = {-2: lam_f, -1: 0.0, 0: lam0}

    def op_term(i, u):
        """(P_i - lambda_i) u with absent pieces treated as zero; the
        unknown lambda at the current order is excluded by the caller."""
        D = family.descriptor(i) if i >= 0 else None
        out = D.apply(u) if D is not None else None
        li = lams.get(i, 0.0)
        if li != 0.0:
            out = (out - li * u) if out is not None else (-li) * u
        return out

    for k in range(1, order + 1):
        f_perp = GridFunction2D.zero(family.base_grid, family.fibre_grid)
        for j in range(0, k):
            t = op_term(k - 2 - j, us[j])
            if t is not None:
                f_perp = f_perp + t
        f_pi = GridFunction2D.zero(family.base_grid, family.fibre_grid)
        for j in range(0, k):
            i = k - j
            D = family.descriptor(i)
            t = D.apply(us[j]) if D is not None else None
            li = lams.get(i) if i != k else None  # lambda_k is the unknown
            if li:
                t = (t - li * us[j]) if t is not None else (-li) * us[j]
            if t is not None:
                f_pi = f_pi + t
        g_perp = perp_part(-1.0 * f_perp, psi)
        g_pi = project_pi(-1.0 * f_pi, psi)
        v, mu = model_solve(g_perp, g_pi, family, lam0, phi, _solvers=(fs, bs))
        lams[k] = -mu
        us.append(v)

    coeffs = np.zeros(2 * order + 5)
    for i in range(-2, order + 1):
        coeffs[2 * i + 4] = lams.get(i, 0.0)
    series = HalfPowerSeries(-4, coeffs, denominator=2)
    return AdiabaticResult(series, us, psi, phi)


# ---------------------------------------------------------------------------
# presets


def product_family(base_grid, fibre_grid, fibre_mode=0):
    """Flat rectangle B x (0, h): P_F = -d^2/dY^2, P0 = -d^2/dx^2, no
    higher terms.  All corrections vanish identically."""
    from .numerics import assemble_schrodinger
    fibre_op = assemble_schrodinger(fibre_grid)
    return AdiabaticFamily(base_grid, fibre_grid, fibre_op,
                           [OperatorDescriptor.laplacian_x()],
                           fibre_mode=fibre_mode)


def tube_family(base_grid, fibre_grid, kappa, fibre_mode=0):
    """Thin tube of width h about a curve with curvature kappa(x).

    In tube coordinates with transverse metric factor 1 - h Y kappa(x) and
    after conjugating to the flat measure, the operator expands as
    h^{-2} P_F + P_0 + h P_1 + O(h^2); the descriptors are derived
    symbolically and the expansion is exact through order 1
    (valid_order=1).  kappa is a sympy expression in x or a constant.
    """
    import sympy as sp

    x, Y, h = sp.symbols("x Y h", real=True)
    u = sp.Function("u")
    kap = sp.sympify(kappa)
    if kap.free_symbols - {x}:
        raise DomainError("kappa must depend on x only")
    a = 1 - h * Y * kap
    w = a ** sp.Rational(-1, 2) * u(x, Y)
    expr = (a ** sp.Rational(1, 2)
            * (-1 / a * sp.diff(1 / a * sp.diff(w, x), x)
               - h**-2 / a * sp.diff(a * sp.diff(w, Y), Y)))
    expr = sp.expand(expr * h**2)

    derivs = [((2, 0), sp.Derivative(u(x, Y), (x, 2))),
              ((0, 2), sp.Derivative(u(x, Y), (Y, 2))),
              ((1, 1), sp.Derivative(u(x, Y), x, Y)),
              ((1, 0), sp.Derivative(u(x, Y), x)),
              ((0, 1), sp.Derivative(u(x, Y), Y)),
              ((0, 0), u(x, Y))]

    # per-derivative coefficient, series-expanded in h through the h^1 level
    tables = {}
    for (alpha, beta), dsym in derivs:
        c = sp.simplify(expr.coeff(dsym))
        cser = sp.expand(sp.series(c, h, 0, 4).removeO())
        for j in range(4):
            cj = sp.simplify(cser.coeff(h, j))
            if cj != 0:
                tables.setdefault(j - 2, []).append((cj, alpha, beta))

    # the h^-2 level must be exactly the free fibre operator and the h^-1
    # level must cancel after the measure-flattening conjugation
    lead = tables.pop(-2, [])
    if len(lead) != 1 or lead[0][1:] != (0, 2) or sp.simplify(lead[0][0] + 1) != 0:
        raise DomainError("unexpected leading fibre operator in tube expansion")
    if -1 in tables:
        raise DomainError("tube expansion has an unexpected h^{-1} term")

    def to_descriptor(entries):
        terms = []
        for c, alpha, beta in entries:
            if c.free_symbols:
                fn = sp.lambdify((x, Y), c, "numpy")
                terms.append((_vectorized(fn), alpha, beta))
            else:
                terms.append((float(c), alpha, beta))
        if not terms:
            terms = [(0.0, 0, 0)]
        return OperatorDescriptor(terms)

    P0 = to_descriptor(tables.get(0, []))
    P1 = to_descriptor(tables.get(1, []))
    from .numerics import assemble_schrodinger
    fibre_op = assemble_schrodinger(fibre_grid)
    return AdiabaticFamily(base_grid, fibre_grid, fibre_op, [P0, P1],
                           fibre_mode=fibre_mode, valid_order=1)


def _vectorized(fn):
    def wrapped(X, Y):
        return np.broadcast_to(np.asarray(fn(X, Y), dtype=float), X.shape).copy()
    return wrapped
