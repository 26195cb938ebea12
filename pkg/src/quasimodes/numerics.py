"""1D grids, banded operators, eigensolves and the constrained resolvent.

Everything here is second-order centered finite differences on uniform
interior grids with homogeneous Dirichlet ends.  The constrained solve
inverts (A - lambda0) on the orthogonal complement of a simple eigenvector,
which is the kernel of every inductive step of the expansion engines.
"""

import numpy as np
import scipy.linalg as sla

from .errors import (DomainError, GridMismatchError, MultiplicityError,
                     SolverError)


class Grid1D:
    """Uniform interior grid on (x0, x1) with Dirichlet endpoints.

    n interior nodes at x0 + (i+1)*spacing, i = 0..n-1.
    """

    def __init__(self, x0, x1, n):
        if not x0 < x1:
            raise DomainError("need x0 < x1")
        if n < 3:
            raise DomainError("need at least 3 interior nodes")
        self.x0 = float(x0)
        self.x1 = float(x1)
        self.n = int(n)
        self.spacing = (self.x1 - self.x0) / (self.n + 1)

    @property
    def nodes(self):
        return self.x0 + self.spacing * np.arange(1, self.n + 1)

    def same_as(self, other):
        return (self.n == other.n and abs(self.x0 - other.x0) < 1e-14
                and abs(self.x1 - other.x1) < 1e-14)

    def __repr__(self):
        return f"Grid1D({self.x0}, {self.x1}, n={self.n})"


class GridFunction1D:
    """Interior samples of a function vanishing at both endpoints."""

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n,):
            raise GridMismatchError("value vector does not match grid size")
        self.grid = grid
        self.values = values

    @classmethod
    def from_callable(cls, grid, f):
        return cls(grid, np.asarray([f(x) for x in grid.nodes], dtype=float))

    def copy(self):
        return GridFunction1D(self.grid, self.values.copy())

    def __add__(self, other):
        _check_same_grid(self, other)
        return GridFunction1D(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return GridFunction1D(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridFunction1D(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def norm(self):
        return float(np.sqrt(self.grid.spacing) * np.linalg.norm(self.values))


def _check_same_grid(f, g):
    if not f.grid.same_as(g.grid):
        raise GridMismatchError("grid functions live on different grids")


def quad_inner(f, g):
    """L2 inner product by the composite trapezoid rule.

    With zero boundary values the trapezoid rule reduces to
    spacing * sum of interior products.
    """
    _check_same_grid(f, g)
    return float(f.grid.spacing * np.dot(f.values, g.values))


class SymBandMatrix:
    """Symmetric banded matrix in lower band storage.

    bands[b, i] holds entry (i+b, i); bands[0] is the diagonal.
    """

    def __init__(self, bands):
        bands = np.asarray(bands, dtype=float)
        if bands.ndim != 2:
            raise DomainError("band storage must be 2D")
        self.bands = bands

    @property
    def n(self):
        return self.bands.shape[1]

    @property
    def bandwidth(self):
        return self.bands.shape[0] - 1

    @classmethod
    def from_dense(cls, M, sym_rtol=1e-12):
        M = np.asarray(M, dtype=float)
        scale = np.max(np.abs(M)) or 1.0
        asym = np.max(np.abs(M - M.T))
        if asym > sym_rtol * scale * 1e6:  # caller handles tighter checks
            raise DomainError("matrix is not symmetric")
        M = 0.5 * (M + M.T)
        n = M.shape[0]
        bw = 0
        for b in range(n - 1, 0, -1):
            if np.max(np.abs(np.diagonal(M, -b))) > 1e-300:
                bw = b
                break
        bands = np.zeros((bw + 1, n))
        for b in range(bw + 1):
            bands[b, :n - b] = np.diagonal(M, -b)
        return cls(bands)

    def to_dense(self):
        n = self.n
        M = np.zeros((n, n))
        for b in range(self.bands.shape[0]):
            idx = np.arange(n - b)
            M[idx + b, idx] = self.bands[b, :n - b]
            M[idx, idx + b] = self.bands[b, :n - b]
        return M

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        out = self.bands[0] * v
        n = self.n
        for b in range(1, self.bands.shape[0]):
            band = self.bands[b, :n - b]
            out[b:] += band * v[:n - b]
            out[:n - b] += band * v[b:]
        return out

    def norm_estimate(self):
        """Infinity-norm upper bound, used for relative tolerances."""
        return float(np.max(np.abs(self.bands)) * (2 * self.bands.shape[0] - 1))

    def add_diagonal(self, c):
        bands = self.bands.copy()
        bands[0] += c
        return SymBandMatrix(bands)

    def _upper_ab(self):
        """Storage expected by scipy's *_banded routines (upper form)."""
        bw = self.bandwidth
        n = self.n
        ab = np.zeros((bw + 1, n))
        for b in range(bw + 1):
            ab[bw - b, b:] = self.bands[b, :n - b]
        return ab


def assemble_schrodinger(grid, V=None):
    """Centered FD matrix of -d^2/dx^2 + V with Dirichlet rows eliminated."""
    n = grid.n
    s = grid.spacing
    bands = np.zeros((2, n))
    bands[0] = 2.0 / s**2
    bands[1, :n - 1] = -1.0 / s**2
    if V is not None:
        if not V.grid.same_as(grid):
            raise GridMismatchError("potential sampled on a different grid")
        bands[0] += V.values
    return SymBandMatrix(bands)


def eigvals_banded_all(A):
    return sla.eigvals_banded(A._upper_ab(), lower=False)


def _general_ab(A, shift=0.0):
    """(2*bw+1)-row storage of A - shift*I for scipy.linalg.solve_banded."""
    bw = A.bandwidth
    n = A.n
    ab = np.zeros((2 * bw + 1, n))
    ab[bw] = A.bands[0] - shift
    for b in range(1, bw + 1):
        ab[bw + b, :n - b] = A.bands[b, :n - b]   # subdiagonal b
        ab[bw - b, b:] = A.bands[b, :n - b]       # superdiagonal b
    return ab


def _polish_eigenpair(A, lam, vec):
    """One or two inverse-iteration steps to push the eigenpair residual
    toward machine precision; the nearly singular shifted solve is exactly
    what makes the iteration converge."""
    bw = A.bandwidth
    for _ in range(2):
        try:
            y = sla.solve_banded((bw, bw), _general_ab(A, lam), vec)
        except np.linalg.LinAlgError:
            break
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0:
            break
        y /= nrm
        if np.dot(y, vec) < 0:
            y = -y
        vec = y
        lam = float(np.dot(vec, A.matvec(vec)))
    return lam, vec


def smallest_eigenpairs(A, count, tol=1e-10, grid=None):
    """The `count` algebraically smallest eigenpairs of a SymBandMatrix.

    Eigenvectors are polished by shifted inverse iteration and normalized
    to unit L2 norm under the grid quadrature (plain 2-norm if no grid is
    given) with a deterministic sign: the entry of largest magnitude is
    positive.
    """
    if count < 1 or count > A.n:
        raise DomainError("invalid eigenpair count")
    w, v = sla.eig_banded(A._upper_ab(), lower=False,
                          select="i", select_range=(0, count - 1))
    out = []
    scale = A.norm_estimate()
    for i in range(count):
        wi, vec = _polish_eigenpair(A, float(w[i]), v[:, i])
        w[i] = wi
        res = np.linalg.norm(A.matvec(vec) - w[i] * vec)
        if res > max(tol, 1e-13) * max(scale, 1.0):
            raise SolverError(f"eigenpair residual {res:.3e} exceeds tolerance")
        j = int(np.argmax(np.abs(vec)))
        if vec[j] < 0:
            vec = -vec
        if grid is not None:
            vec = vec / (np.sqrt(grid.spacing) * np.linalg.norm(vec))
            out.append((float(w[i]), GridFunction1D(grid, vec)))
        else:
            out.append((float(w[i]), vec / np.linalg.norm(vec)))
    return out


# relative spectral gap below which an eigenvalue is treated as multiple
GAP_RTOL = 1e-6


def _gap_guard(A, lambda0):
    w = eigvals_banded_all(A)
    scale = max(abs(lambda0), 1.0)
    close = np.sum(np.abs(w - lambda0) <= GAP_RTOL * scale)
    if close > 1:
        raise MultiplicityError(
            f"{close} eigenvalues within {GAP_RTOL:g} (relative) of {lambda0:.6g}")
    if close == 0:
        raise DomainError("lambda0 is not an eigenvalue of A")


class ConstrainedSolver:
    """Factored solver for (A - lambda0) v = rhs + gamma*kernel, <v,kernel> = 0.

    The one-dimensional kernel direction is pinned by a bordered system
    solved with a single LU factorization, so repeated right-hand sides
    (e.g. one per base node in fibrewise solves) reuse the factorization.
    `weight` is the quadrature weight of the inner product (grid spacing);
    kernel must be normalized so that weight * |kernel|^2 = 1.
    """

    def __init__(self, A, lambda0, kernel, weight, check_gap=True):
        kvec = np.asarray(getattr(kernel, "values", kernel), dtype=float)
        nrm2 = weight * np.dot(kvec, kvec)
        if abs(nrm2 - 1.0) > 1e-8:
            raise DomainError("kernel vector is not quadrature-normalized")
        res = np.linalg.norm(A.matvec(kvec) - lambda0 * kvec)
        if res > 1e-8 * max(A.norm_estimate(), 1.0):
            raise DomainError("kernel is not an eigenvector for lambda0")
        if check_gap:
            _gap_guard(A, lambda0)
        n = A.n
        B = np.zeros((n + 1, n + 1))
        B[:n, :n] = A.to_dense() - lambda0 * np.eye(n)
        B[:n, n] = -kvec
        B[n, :n] = weight * kvec
        self._lu = sla.lu_factor(B)
        self._n = n
        self.weight = weight
        self.kernel = kvec

    def solve(self, rhs):
        """Returns (v, gamma) with (A - lambda0) v = rhs + gamma*kernel,
        gamma = -<rhs, kernel> and <v, kernel> = 0."""
        rvec = np.asarray(getattr(rhs, "values", rhs), dtype=float)
        b = np.concatenate([rvec, [0.0]])
        sol = sla.lu_solve(self._lu, b)
        return sol[:self._n], float(sol[self._n])


def constrained_solve(A, lambda0, kernel, rhs):
    """One-shot constrained solve; see ConstrainedSolver.

    kernel and rhs are GridFunction1D on the same grid; returns
    (v: GridFunction1D, gamma: float).
    """
    _check_same_grid(kernel, rhs)
    solver = ConstrainedSolver(A, lambda0, kernel, kernel.grid.spacing)
    v, gamma = solver.solve(rhs)
    return GridFunction1D(kernel.grid, v), gamma


def _hermite_values(m, t):
    """Physicists' Hermite polynomial H_m by the three-term recurrence."""
    if m == 0:
        return np.ones_like(t)
    h_prev = np.ones_like(t)
    h = 2.0 * t
    for k in range(1, m):
        h, h_prev = 2.0 * t * h - 2.0 * k * h_prev, h
    return h


def hermite_eigenpair(m, omega, grid):
    """Closed-form oscillator eigenpair of -d^2/dxi^2 + omega^2 xi^2.

    mu = omega*(2m+1) exactly; the eigenfunction H_m(sqrt(omega) xi)
    exp(-omega xi^2 / 2) is sampled on the grid and quadrature-normalized.
    """
    if m < 0:
        raise DomainError("mode index must be nonnegative")
    if omega <= 0:
        raise DomainError("omega must be positive")
    reach = 8.0 / np.sqrt(omega)
    if grid.x0 > -reach or grid.x1 < reach:
        raise DomainError("grid does not cover |xi| <= 8/sqrt(omega)")
    xi = grid.nodes
    t = np.sqrt(omega) * xi
    vals = _hermite_values(m, t) * np.exp(-0.5 * omega * xi**2)
    vals /= np.sqrt(grid.spacing) * np.linalg.norm(vals)
    return omega * (2 * m + 1), GridFunction1D(grid, vals)


def anharmonic_eigs(p, omega, count, rtol=1e-6):
    """Smallest eigenvalues of -d^2/dxi^2 + omega^2 xi^{2p} on the line.

    Dirichlet truncation at |xi| = 12 / omega^{1/(p+1)}; the grid is refined
    (with Richardson extrapolation of the O(s^2) error) until successive
    levels agree to `rtol` relative.
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    if omega <= 0:
        raise DomainError("omega must be positive")
    half = 12.0 / omega ** (1.0 / (p + 1))
    prev = None
    prev_s = None
    for n in (2000, 4000, 8000, 16000):
        grid = Grid1D(-half, half, n)
        V = GridFunction1D(grid, omega**2 * grid.nodes ** (2 * p))
        A = assemble_schrodinger(grid, V)
        w = np.array([lam for lam, _ in smallest_eigenpairs(A, count, grid=grid)])
        if prev is not None:
            r2 = (prev_s / grid.spacing) ** 2
            extrap = (r2 * w - prev) / (r2 - 1.0)
            if np.max(np.abs(w - prev) / np.maximum(np.abs(extrap), 1e-30)) < 3 * rtol:
                return [float(x) for x in extrap]
        prev, prev_s = w, grid.spacing
    raise SolverError("anharmonic eigenvalues did not converge under refinement")
