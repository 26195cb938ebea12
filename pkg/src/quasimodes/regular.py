"""Regular-perturbation engine on a fixed interval.

Input is a family P(h) = P0 + h P1 + ... of symmetric operators on one
grid, given through its Taylor coefficient matrices.  The recursion picks
the k-th eigenpair of P0 and produces the eigenvalue Taylor coefficients
lambda_j together with corrector functions u_j, each orthogonal to u_0.
Also provides the first-order boundary-variation rate for moving endpoints,
as an independent cross-check on lambda_1.
"""

import numpy as np

from .errors import DomainError, TruncationError
from .numerics import (ConstrainedSolver, GridFunction1D, SymBandMatrix,
                       assemble_schrodinger, smallest_eigenpairs)
from .series import HalfPowerSeries


class RegularFamily:
    """Taylor coefficients [P0, P1, ..., PJ] of a pulled-back operator
    family on a fixed Dirichlet interval, plus the tracked mode index."""

    def __init__(self, grid, terms, mode_index=0):
        if not terms:
            raise DomainError("need at least the leading operator P0")
        n = terms[0].n
        for T in terms:
            if T.n != n:
                raise DomainError("operator terms of mixed dimensions")
        if n != grid.n:
            raise DomainError("operators do not match the grid")
        if mode_index < 0:
            raise DomainError("mode index must be nonnegative")
        self.grid = grid
        self.terms = list(terms)
        self.mode_index = int(mode_index)

    def apply(self, h, values):
        """Action of the truncated family P(h) on a value vector."""
        out = np.zeros_like(values)
        for j, T in enumerate(self.terms):
            out += h**j * T.matvec(values)
        return out


class PerturbationResult:
    def __init__(self, lambda_series, correctors):
        self.lambda_series = lambda_series
        self.correctors = correctors

    def lambda_coeffs(self):
        """Plain list [lambda_0, lambda_1, ...] of integer-power coefficients."""
        s = self.lambda_series
        return [s.coeff(k) for k in range(0, s.k_max + 1, s.denominator)]

    def eigenfunction(self, h):
        vals = np.zeros_like(self.correctors[0].values)
        for j, u in enumerate(self.correctors):
            vals += h**j * u.values
        return GridFunction1D(self.correctors[0].grid, vals)


def perturbation_series(family, order):
    """Taylor recursion for the tracked eigenvalue of P(h).

    Solves (P0 - lambda_0) u_0 = 0, then order by order
      f_j = sum_{i=1..j} P_i u_{j-i} - sum_{i=1..j-1} lambda_i u_{j-i},
      lambda_j = <f_j, u_0>,
      (P0 - lambda_0) u_j = -f_j + lambda_j u_0,   <u_j, u_0> = 0.
    """
    if order < 0:
        raise DomainError("order must be nonnegative")
    J = len(family.terms) - 1
    if order > J:
        raise TruncationError(
            f"family supplies operator terms only through order {J}")
    grid = family.grid
    k = family.mode_index
    pairs = smallest_eigenpairs(family.terms[0], k + 1, grid=grid)
    lam0, u0 = pairs[k]
    solver = ConstrainedSolver(family.terms[0], lam0, u0, grid.spacing)

    lams = [lam0]
    us = [u0]
    for j in range(1, order + 1):
        f = np.zeros(grid.n)
        for i in range(1, j + 1):
            if i <= J:
                f += family.terms[i].matvec(us[j - i].values)
            if i < j:
                f -= lams[i] * us[j - i].values
        lam_j = grid.spacing * np.dot(f, u0.values)
        v, _ = solver.solve(-f + lam_j * u0.values)
        lams.append(lam_j)
        us.append(GridFunction1D(grid, v))

    coeffs = np.zeros(2 * order + 1)
    coeffs[::2] = lams
    series = HalfPowerSeries(0, coeffs, denominator=2)
    return PerturbationResult(series, us)


def hadamard_rate(u0, a_left, a_right):
    """First-order eigenvalue rate under boundary motion.

    The endpoints move outward with speeds a_left, a_right (positive =
    domain grows); for an L2-normalized Dirichlet eigenfunction the rate is
    minus the sum of a * (normal derivative)^2 over the two endpoints.
    Normal derivatives are one-sided second-order differences using the
    implicit zero boundary values.
    """
    s = u0.grid.spacing
    v = u0.values
    d_left = (4.0 * v[0] - v[1]) / (2.0 * s)
    d_right = (-4.0 * v[-1] + v[-2]) / (2.0 * s)
    return -(a_left * d_left**2 + a_right * d_right**2)


def stretch_family(grid, n_terms, mode_index=0):
    """Pullback of the Dirichlet Laplacian on (0, 1+h) to the unit interval.

    The stretched operator is (1+h)^{-2} (-d^2/dx^2), whose Taylor terms are
    P_j = (-1)^j (j+1) (-d^2/dx^2).
    """
    if n_terms < 1:
        raise DomainError("need at least one term")
    L = assemble_schrodinger(grid)
    terms = [SymBandMatrix(((-1.0) ** j * (j + 1)) * L.bands)
             for j in range(n_terms)]
    return RegularFamily(grid, terms, mode_index=mode_index)
