"""Variable-thickness engine: strips h*a_-(x) < y < h*a_+(x).

The width profile a = a_+ - a_- has a nondegenerate (or order-2p) interior
maximum at x = 0.  Rescaling Y = (y - h a_-)/(h a), xi = x/sqrt(h) and
t = sqrt(h) turns the Dirichlet Laplacian into a fibre operator plus a
harmonic-oscillator base operator with polynomial corrections; eigenvalues
expand in powers of h^{1/2} with leading terms
c0 pi^2 h^{-2} + omega (2m+1) h^{-1}.

The base is the real line, discretized spectrally in the oscillator's own
Hermite eigenbasis; the fibre stays on a Dirichlet FD grid.
"""

from math import factorial

import numpy as np
import sympy as sp

from .errors import DomainError, TruncationError
from .numerics import (ConstrainedSolver, Grid1D, SymBandMatrix,
                       _hermite_values, anharmonic_eigs,
                       assemble_schrodinger, smallest_eigenpairs)
from .series import HalfPowerSeries

_x = sp.Symbol("x", real=True)


class ThicknessProfile:
    """Width profile given by sympy expressions (or strings) in x.

    p is the half-order of the maximum: a(x) - a(0) ~ x^{2p}.
    """

    def __init__(self, a_minus, a_plus, interval, p=1):
        if p < 1:
            raise DomainError("degeneracy order p must be >= 1")
        x_lo, x_hi = float(interval[0]), float(interval[1])
        if not (x_lo < 0.0 < x_hi):
            raise DomainError("interval must contain the maximum point 0")
        self.x_lo, self.x_hi = x_lo, x_hi
        self.p = int(p)
        self.am_expr = sp.sympify(a_minus, locals={"x": _x})
        self.ap_expr = sp.sympify(a_plus, locals={"x": _x})
        for e in (self.am_expr, self.ap_expr):
            if e.free_symbols - {_x}:
                raise DomainError("profile expressions may depend on x only")
        self.a_expr = sp.simplify(self.ap_expr - self.am_expr)
        self.a_minus = sp.lambdify(_x, self.am_expr, "numpy")
        self.a_plus = sp.lambdify(_x, self.ap_expr, "numpy")
        self.width = sp.lambdify(_x, self.a_expr, "numpy")
        self._check_invariants()

    def _check_invariants(self):
        # positivity strictly inside the interval
        xs = np.linspace(self.x_lo, self.x_hi, 401)[1:-1]
        w = np.asarray(self.width(xs), dtype=float)
        if np.any(w <= 0):
            raise DomainError("width must be positive inside the interval")
        a0 = float(self.a_expr.subs(_x, 0))
        if a0 <= 0:
            raise DomainError("width at the maximum must be positive")
        # vanishing derivatives below order 2p, strictly negative at 2p
        d = self.a_expr
        for k in range(1, 2 * self.p):
            d = sp.diff(d, _x)
            val = float(d.subs(_x, 0))
            if abs(val) > 1e-10 * max(a0, 1.0):
                raise DomainError(
                    f"derivative of order {k} does not vanish at the maximum")
        top = float(sp.diff(self.a_expr, _x, 2 * self.p).subs(_x, 0))
        if top >= 0:
            raise DomainError("maximum is not of the stated order (need a^{(2p)}(0) < 0)")
        # unique quantitative maximum: outside |x| > delta the width must sit
        # below the peak by at least a quarter of the local Taylor drop
        for eps in (0.05, 0.15, 0.3):
            delta = eps * min(-self.x_lo, self.x_hi)
            drop = 0.25 * abs(top) / factorial(2 * self.p) * delta ** (2 * self.p)
            lo = w[np.abs(xs) > delta]
            if lo.size and np.max(lo) > a0 - drop:
                raise DomainError("the interior maximum at 0 is not unique")

    def taylor_a(self, order):
        """Taylor coefficients of the width a at 0 through x^order."""
        return [float(sp.diff(self.a_expr, _x, k).subs(_x, 0)) / factorial(k)
                for k in range(order + 1)]


def taylor_inverse_square(profile, order):
    """Taylor coefficients of a(x)^{-2} at 0, by power-series reciprocal.

    Odd coefficients below 2p must vanish (to 1e-10, relative).
    """
    a0 = float(profile.a_expr.subs(_x, 0))
    if a0 <= 0:
        raise DomainError("width at the maximum must be positive")
    ser = sp.series(profile.a_expr ** -2, _x, 0, order + 1).removeO()
    coeffs = [float(ser.coeff(_x, k)) for k in range(order + 1)]
    for k in range(1, min(2 * profile.p, order + 1), 2):
        if abs(coeffs[k]) > 1e-10 * max(abs(coeffs[0]), 1.0):
            raise DomainError("odd reciprocal-square coefficient does not vanish")
    return coeffs


class OscillatorModel:
    """Rescaled transverse-maximum model -d^2/dxi^2 + omega^2 xi^{2p}.

    c0 and c2p are the constant and x^{2p} Taylor coefficients of a^{-2};
    omega = pi * sqrt(c2p).  For p = 1 this equals pi * sqrt(c0 * c2_closed)
    with c2_closed = -a''(0)/a(0), since c2p = -a''(0) a(0)^{-3} exactly;
    both values are kept so the identity can be tested downstream.
    """

    def __init__(self, c0, c2p, p, c2_closed=None):
        if c0 <= 0 or c2p <= 0:
            raise DomainError("model constants must be positive")
        self.c0 = float(c0)
        self.c2p = float(c2p)
        self.p = int(p)
        self.omega = float(np.pi * np.sqrt(c2p))
        self.c2_closed = c2_closed


def oscillator_model(profile):
    coeffs = taylor_inverse_square(profile, 2 * profile.p)
    c0 = coeffs[0]
    c2p = coeffs[2 * profile.p]
    a0 = float(profile.a_expr.subs(_x, 0))
    app = float(sp.diff(profile.a_expr, _x, 2).subs(_x, 0))
    c2_closed = -app / a0
    model = OscillatorModel(c0, c2p, profile.p, c2_closed=c2_closed)
    if profile.p == 1:
        # exact identity c2p = c0 * c2_closed
        assert abs(model.c2p - c0 * c2_closed) <= 1e-9 * abs(model.c2p)
    return model


def leading_quasieigenvalue(model, m, h):
    """First two terms of the quasi-eigenvalue for mode m at thickness h."""
    if h <= 0:
        raise DomainError("h must be positive")
    if m < 0:
        raise DomainError("mode index must be nonnegative")
    lead = model.c0 * np.pi**2 * h**-2
    if model.p == 1:
        return lead + model.omega * (2 * m + 1) * h**-1
    nu = anharmonic_eigs(model.p, model.omega, m + 1)[m]
    return lead + nu * h ** (-2.0 / (model.p + 1))


# ---------------------------------------------------------------------------
# Hermite-spectral base representation


def hermite_ladder(N, omega):
    """Matrices of multiplication by xi and of d/dxi on the first N
    oscillator eigenfunctions of -d^2/dxi^2 + omega^2 xi^2."""
    ns = np.sqrt(np.arange(1, N))
    X = np.zeros((N, N))
    D = np.zeros((N, N))
    X[np.arange(N - 1), np.arange(1, N)] = ns / np.sqrt(2 * omega)
    X[np.arange(1, N), np.arange(N - 1)] = ns / np.sqrt(2 * omega)
    D[np.arange(N - 1), np.arange(1, N)] = np.sqrt(omega / 2) * ns
    D[np.arange(1, N), np.arange(N - 1)] = -np.sqrt(omega / 2) * ns
    return X, D


def _fibre_derivative_matrices(grid):
    n, s = grid.n, grid.spacing
    D1 = np.zeros((n, n))
    idx = np.arange(n - 1)
    D1[idx, idx + 1] = 1.0 / (2 * s)
    D1[idx + 1, idx] = -1.0 / (2 * s)
    D2 = -assemble_schrodinger(grid).to_dense()
    return {0: np.eye(n), 1: D1, 2: D2}


def _descriptor_tables(profile, order):
    """Symbolic t-expansion of the rescaled operator.

    Returns (c0, tables) where tables[j] is a list of terms
    (gamma, i, l, alpha, beta) meaning gamma * xi^i Y^l d_xi^alpha d_Y^beta
    in the operator coefficient of t^j (j >= 0); the t^{-2} level is
    -c0 d_Y^2 and the t^{-1} level must vanish.
    """
    t, xi, Y = sp.symbols("t xi Y", real=True)
    x = _x
    a = profile.a_expr
    am = profile.am_expr
    b = -(sp.diff(am, x) + Y * sp.diff(a, x)) / a
    bx = sp.diff(b, x)
    bY = sp.diff(b, Y)
    coeffs = {
        (2, 0): sp.Integer(-1),
        (1, 1): -2 * t * b,
        (0, 1): -t**2 * bx - t**2 * b * bY,
        (0, 2): -(a ** -2) / t**2 - t**2 * b**2,
    }
    n_terms = order + 3  # powers t^{-2} .. t^{order}
    tables = {j: [] for j in range(order + 1)}
    c0 = None
    for (alpha, beta), c in coeffs.items():
        c = c.subs(x, t * xi)
        ser = sp.series(c, t, 0, order + 1).removeO()
        ser = sp.expand(ser)
        for j in range(-2, order + 1):
            cj = ser.coeff(t, j)
            if cj == 0:
                continue
            if j == -2:
                if (alpha, beta) != (0, 2) or cj.free_symbols:
                    raise DomainError("unexpected leading-order term")
                c0 = float(-cj)
                continue
            if j == -1:
                raise DomainError("unexpected t^{-1} term; is the maximum at 0?")
            poly = sp.Poly(cj, xi, Y)
            for (i, l), gamma in poly.terms():
                tables[j].append((float(gamma), i, l, alpha, beta))
    if c0 is None:
        raise DomainError("missing fibre operator in the expansion")
    return c0, tables


class _SpectralBase:
    """Work arrays for the Hermite x fibre-grid representation."""

    def __init__(self, profile, fibre_grid, N, order):
        self.c0, self.tables = _descriptor_tables(profile, order)
        self.fibre_grid = fibre_grid
        lap = assemble_schrodinger(fibre_grid)
        self.fibre_op = SymBandMatrix(self.c0 * lap.bands)
        pairs = smallest_eigenpairs(self.fibre_op, 1, grid=fibre_grid)
        self.lam_f, self.psi = pairs[0]
        self.mu_d = self.lam_f / self.c0      # discrete transverse pi^2
        # x^2 coefficient of a^-2 drives the oscillator
        c2p = None
        for gamma, i, l, alpha, beta in self.tables[0]:
            if (i, l, alpha, beta) == (2, 0, 0, 2):
                c2p = -gamma
        if c2p is None:
            raise DomainError("missing oscillator coefficient at order 0")
        self.c2p = c2p
        self.omega_d = float(np.sqrt(c2p * self.mu_d))
        self.N = N
        self.X, self.D = hermite_ladder(N, self.omega_d)
        self.fib = _fibre_derivative_matrices(fibre_grid)
        ydiag = fibre_grid.nodes
        self._ypow = {0: np.ones_like(ydiag), 1: ydiag, 2: ydiag**2}
        self._Xpow = {0: np.eye(N), 1: self.X, 2: self.X @ self.X}
        self._ximats = {}

    def xi_power(self, i):
        if i not in self._Xpow:
            self._Xpow[i] = self.X @ self.xi_power(i - 1)
        return self._Xpow[i]

    def y_power(self, l):
        if l not in self._ypow:
            self._ypow[l] = self.fibre_grid.nodes ** l
        return self._ypow[l]

    def apply_table(self, j, C):
        """Apply the order-j operator to a coefficient array C (N x nY)."""
        out = np.zeros_like(C)
        for gamma, i, l, alpha, beta in self.tables[j]:
            left = C if alpha == 0 else np.linalg.matrix_power(self.D, alpha) @ C
            if i > 0:
                left = self.xi_power(i) @ left
            right = left if beta == 0 else left @ self.fib[beta].T
            if l > 0:
                right = right * self.y_power(l)[None, :]
            out += gamma * right
        return out

    def project(self, C):
        """Hermite-coefficient vector of the Pi component."""
        return self.fibre_grid.spacing * C @ self.psi.values


class VariableExpansionResult:
    """Quasi-eigenvalue series in h^{1/2} plus the Hermite-coefficient
    tables of the quasimode correctors in rescaled coordinates."""

    def __init__(self, model, m, lambda_series, hermite_tables, fibre_grid):
        self.model = model
        self.m = m
        self.lambda_series = lambda_series
        self.hermite_tables = hermite_tables
        self.fibre_grid = fibre_grid


def _run_induction(base, m, order):
    N = base.N
    nY = base.fibre_grid.n
    lam0 = base.omega_d * (2 * m + 1)
    fs = ConstrainedSolver(base.fibre_op, base.lam_f, base.psi,
                           base.fibre_grid.spacing)
    u0 = np.zeros((N, nY))
    u0[m] = base.psi.values
    us = [u0]
    lams = {-2: base.lam_f, -1: 0.0, 0: lam0}
    pb_diag = base.omega_d * (2 * np.arange(N) + 1)

    for k in range(1, order + 1):
        f_perp = np.zeros((N, nY))
        for j in range(k):
            i = k - 2 - j
            if i >= 0 and base.tables.get(i):
                f_perp += base.apply_table(i, us[j])
            li = lams.get(i, 0.0)
            if li:
                f_perp -= li * us[j]
        f_perp = -f_perp
        f_perp -= np.outer(base.project(f_perp), base.psi.values)
        v_perp = np.zeros((N, nY))
        for n in range(N):
            if np.any(f_perp[n]):
                v_perp[n], _ = fs.solve(f_perp[n])

        f_pi = np.zeros((N, nY))
        for j in range(k):
            i = k - j
            if i >= 0 and base.tables.get(i):
                f_pi += base.apply_table(i, us[j])
            if i != k:
                li = lams.get(i, 0.0)
                if li:
                    f_pi -= li * us[j]
        rhs = -base.project(f_pi) - base.project(base.apply_table(0, v_perp))
        mu = rhs[m]
        v_pi = np.zeros(N)
        denom = pb_diag - lam0
        denom[m] = 1.0
        v_pi = (rhs - mu * (np.arange(N) == m)) / denom
        v_pi[m] = 0.0
        lams[k] = -mu
        us.append(v_perp + np.outer(v_pi, base.psi.values))
    return lams, us


# Hermite truncation default and the instability threshold under N -> N+8
HERMITE_N = 64
HERMITE_STAB_TOL = 1e-6


def variable_expansion(profile, m, order, fibre_n=80, hermite_n=HERMITE_N):
    """Quasi-eigenvalue series through h^{(order-2)/2} for base mode m.

    Runs the inductive construction in t = h^{1/2} with the fibre on a
    Dirichlet grid and the base in the discrete oscillator's Hermite
    eigenbasis.  The two leading coefficients are replaced by their exact
    values c0 pi^2 and omega (2m+1); higher coefficients carry the O(s^2)
    fibre discretization error.  Coefficients must be stable under
    enlarging the Hermite truncation by 8 modes.
    """
    if profile.p != 1:
        raise DomainError("the full expansion is implemented for p = 1 only")
    if m < 0 or order < 0:
        raise DomainError("need m >= 0 and order >= 0")
    model = oscillator_model(profile)
    fibre_grid = Grid1D(0.0, 1.0, fibre_n)
    base = _SpectralBase(profile, fibre_grid, hermite_n, order)
    lams, us = _run_induction(base, m, order)
    if order >= 1:
        base2 = _SpectralBase(profile, fibre_grid, hermite_n + 8, order)
        lams2, _ = _run_induction(base2, m, order)
        for k in range(1, order + 1):
            if abs(lams[k] - lams2[k]) > HERMITE_STAB_TOL * max(1.0, abs(lams[k])):
                raise TruncationError(
                    f"order-{k} coefficient unstable under Hermite enlargement")

    coeffs = np.zeros(order + 3)
    coeffs[0] = model.c0 * np.pi**2
    coeffs[2] = model.omega * (2 * m + 1)
    for k in range(1, order + 1):
        coeffs[k + 2] = lams[k]
    series = HalfPowerSeries(-4, coeffs, denominator=2)
    return VariableExpansionResult(model, m, series, us, fibre_grid)


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f0 = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        f1 = np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)
    return f0 / (f0 + f1)


def quasimode_evaluate(profile, m, h, x, y):
    """Leading-order quasimode value at a point of the physical strip.

    sin(pi Y) in the fibre times the m-th oscillator eigenfunction in
    xi = x/sqrt(h), with a smooth cutoff beyond |x| > (x_hi - x_lo)/4
    enforcing the Dirichlet condition at the interval ends.
    """
    if h <= 0:
        raise DomainError("h must be positive")
    if not (profile.x_lo < x < profile.x_hi):
        raise DomainError("x outside the profile interval")
    y_lo = h * float(profile.a_minus(x))
    y_hi = h * float(profile.a_plus(x))
    if not (y_lo <= y <= y_hi):
        raise DomainError("point outside the strip")
    model = oscillator_model(profile)
    Yc = (y - y_lo) / (y_hi - y_lo)
    xi = x / np.sqrt(h)
    om = model.omega
    norm = (om / np.pi) ** 0.25 / np.sqrt(2.0**m * factorial(m))
    osc = norm * _hermite_values(m, np.sqrt(om) * np.asarray(xi)) \
        * np.exp(-0.5 * om * xi**2)
    r = (profile.x_hi - profile.x_lo) / 4.0
    edge = min(-profile.x_lo, profile.x_hi)
    cut = _smooth_step((edge - abs(x)) / max(edge - r, 1e-12))
    return float(np.sin(np.pi * Yc) * osc * cut)


def ellipse_profile(half=0.98):
    """Width profile of the ellipse-like strip |y| < h sqrt(1 - x^2)."""
    return ThicknessProfile("-sqrt(1-x**2)", "sqrt(1-x**2)", (-half, half))
