"""Strip-end scattering engine.

The domain is a semi-infinite unit-width strip [0, inf) x (0, 1) with an
arbitrary polygonal piece glued along the segment {0} x [0, 1] on the left.
At the threshold pi^2 the first transverse mode becomes propagating; the
generalized eigenfunction behaves like (X + a) sin(pi Y) up to exponentially
decaying modes, and the intercept a feeds the eigenvalue correction
m^2 pi^2 (1 + a h)^{-2} for the glued thin domain.

Discretization: uniform 5-point grid with spacing matched to the transverse
Dirichlet nodes.  The strip is truncated at X = L_trunc and closed with a
per-transverse-mode ghost column built from the exact decay factors of the
discrete operator, so the half-strip case is solved exactly (not just to
truncation accuracy).  The spectral shift uses the discrete first transverse
eigenvalue, which keeps the first-mode solutions exactly affine on the grid.
"""

import json

import numpy as np
import sympy as sp
from matplotlib.path import Path
from scipy import sparse
from scipy.sparse.linalg import eigs, splu

from .errors import DomainError, SolverError, TruncationError
from .numerics import Grid1D
from .series import CornerExpansion, HalfPowerSeries

# defaults for the truncation closure
DEFAULT_L_TRUNC = 8.0
DEFAULT_MODES = 12

# relative smallest-singular-value thresholds for the resonance decision
RESONANCE_CLEAR = 1e-6
RESONANCE_GRAY = 1e-8


class EndDomain:
    """Polygonal end piece in {x <= 0} glued to the unit half-strip.

    vertices: counterclockwise simple polygon whose boundary contains the
    segment from (0, 0) to (0, 1); ny is the transverse interior node count
    (spacing 1/(ny+1)); n_modes is the number of transverse modes given a
    decaying ghost closure at the truncation face (the rest get a Dirichlet
    ghost, harmless since they decay even faster).
    """

    def __init__(self, vertices, L_trunc=DEFAULT_L_TRUNC, ny=32,
                 n_modes=DEFAULT_MODES):
        vs = [(float(x), float(y)) for x, y in vertices]
        if len(vs) < 3:
            raise DomainError("polygon needs at least 3 vertices")
        if any(x > 1e-12 for x, _ in vs):
            raise DomainError("end polygon must lie in x <= 0")
        if not _has_glue_edge(vs):
            raise DomainError(
                "polygon boundary must contain the segment (0,0)-(0,1)")
        if _shoelace(vs) <= 0:
            raise DomainError("vertices must be in counterclockwise order")
        if L_trunc < 2:
            raise DomainError("truncation length below 2 is unreliable")
        if ny < 8:
            raise DomainError("need at least 8 transverse nodes")
        if not 1 <= n_modes <= ny:
            raise DomainError("mode count must lie in [1, ny]")
        self.vertices = vs
        self.L_trunc = float(L_trunc)
        self.ny = int(ny)
        self.n_modes = int(n_modes)

    def with_truncation(self, L_trunc):
        return EndDomain(self.vertices, L_trunc, self.ny, self.n_modes)

    def with_resolution(self, ny):
        return EndDomain(self.vertices, self.L_trunc, ny, self.n_modes)

    def to_json(self):
        return json.dumps({"vertices": [list(v) for v in self.vertices]})

    @classmethod
    def from_json(cls, text, **kwargs):
        return cls(json.loads(text)["vertices"], **kwargs)


def _shoelace(vs):
    area2 = 0.0
    for (x0, y0), (x1, y1) in zip(vs, vs[1:] + vs[:1]):
        area2 += x0 * y1 - x1 * y0
    return 0.5 * area2


def _has_glue_edge(vs):
    for p, q in zip(vs, vs[1:] + vs[:1]):
        pts = sorted([p, q])
        if (abs(pts[0][0]) < 1e-12 and abs(pts[1][0]) < 1e-12
                and abs(pts[0][1]) < 1e-12 and abs(pts[1][1] - 1.0) < 1e-12):
            return True
    return False


def straight_end(c=1.0, **kwargs):
    """Rectangular extension [-c, 0] x [0, 1]; scattering constant is c."""
    if c <= 0:
        raise DomainError("extension length must be positive")
    return EndDomain([(0, 0), (0, 1), (-c, 1), (-c, 0)], **kwargs)


def trapezoid_end(**kwargs):
    """Convex trapezoid tapering from the full glue segment to half width.

    The default resolution keeps the vertices on grid nodes (spacing 1/68
    divides 1/4), so the slanted edges pass exactly through nodes and the
    discretization converges at second order.
    """
    kwargs.setdefault("ny", 67)
    return EndDomain([(0, 0), (0, 1), (-0.25, 0.75), (-0.25, 0.25)], **kwargs)


def bulge_end(width, depth=0.25, **kwargs):
    """Transverse box of the given width and height 2 behind a short neck.

    Near width 2/sqrt(3) the box traps a mode at the threshold pi^2; used as
    the resonance regression fixture.
    """
    d = depth
    return EndDomain([(0, 0), (0, 1), (-d, 1), (-d, 1.5), (-d - width, 1.5),
                      (-d - width, -0.5), (-d, -0.5), (-d, 0)], **kwargs)


def discrete_transverse_eigenvalue(k, spacing):
    """Eigenvalue of the FD second difference for mode sin(k pi y)."""
    return (2.0 - 2.0 * np.cos(k * np.pi * spacing)) / spacing**2


def decay_factor(k, spacing):
    """Per-step decay rho_k > 1 of transverse mode k for the discrete
    operator shifted by the discrete first-mode eigenvalue."""
    dmu = (discrete_transverse_eigenvalue(k, spacing)
           - discrete_transverse_eigenvalue(1, spacing))
    c = 2.0 + spacing**2 * dmu
    if c <= 2.0:
        return 1.0
    return 0.5 * (c + np.sqrt(c * c - 4.0))


class _System:
    """Masked 5-point system for (-Delta - mu_1) with the mode-matched
    ghost closure at X = L_trunc."""

    def __init__(self, domain):
        self.domain = domain
        ny = domain.ny
        s = 1.0 / (ny + 1)
        self.spacing = s
        i_strip = int(round(domain.L_trunc * (ny + 1)))
        if abs(i_strip * s - domain.L_trunc) > 1e-9:
            raise DomainError("truncation length must be a multiple of spacing")
        self.i_strip = i_strip
        xs = [v[0] for v in domain.vertices]
        ys = [v[1] for v in domain.vertices]
        self.i_lo = int(np.floor(min(xs) / s)) - 1
        self.j_lo = int(np.floor(min(min(ys), 0.0) / s)) - 1
        j_hi = int(np.ceil(max(max(ys), 1.0) / s)) + 1
        self.NI = i_strip - self.i_lo + 1
        self.NJ = j_hi - self.j_lo + 1
        self.mask = self._build_mask()
        self.mu1 = discrete_transverse_eigenvalue(1, s)
        self._assemble()

    def x_of(self, i):
        return (self.i_lo + i) * self.spacing

    def y_of(self, j):
        return (self.j_lo + j) * self.spacing

    def _build_mask(self):
        s = self.spacing
        ny = self.domain.ny
        ii, jj = np.meshgrid(np.arange(self.NI), np.arange(self.NJ),
                             indexing="ij")
        X = (self.i_lo + ii) * s
        Y = (self.j_lo + jj) * s
        strip = (X > -0.5 * s) & (ii + self.i_lo <= self.i_strip) \
            & (jj + self.j_lo >= 1) & (jj + self.j_lo <= ny)
        mask = strip
        left = X < -0.5 * s
        if np.any(left):
            path = Path(np.asarray(self.domain.vertices))
            pts = np.column_stack([X[left], Y[left]])
            inside = np.ones(len(pts), dtype=bool)
            # strictly interior: all four perturbed copies must test inside,
            # so nodes exactly on an edge become Dirichlet nodes
            eps = 1e-9
            for dx, dy in ((eps, eps), (eps, -eps), (-eps, eps), (-eps, -eps)):
                inside &= path.contains_points(pts + [dx, dy])
            mask = mask.copy()
            mask[left] = inside
        return mask

    def _assemble(self):
        s = self.spacing
        ny = self.domain.ny
        n = int(np.sum(self.mask))
        if n == 0:
            raise DomainError("empty discretization")
        idx = -np.ones(self.mask.shape, dtype=int)
        idx[self.mask] = np.arange(n)
        self.idx = idx
        self.n = n
        rows, cols, vals = [], [], []
        ii, jj = np.nonzero(self.mask)
        rows.append(idx[ii, jj])
        cols.append(idx[ii, jj])
        vals.append(np.full(n, 4.0 / s**2 - self.mu1))
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = ii + di, jj + dj
            ok = (ni >= 0) & (ni < self.NI) & (nj >= 0) & (nj < self.NJ)
            ok[ok] &= self.mask[ni[ok], nj[ok]]
            rows.append(idx[ii[ok], jj[ok]])
            cols.append(idx[ni[ok], nj[ok]])
            vals.append(np.full(int(np.sum(ok)), -1.0 / s**2))
        # ghost closure at the truncation face: mode k ghost value is
        # (mode value) / rho_k for the decaying modes, equal for mode 1
        K = self.domain.n_modes
        yj = np.arange(1, ny + 1) * s
        S = np.sin(np.outer(yj, np.arange(1, K + 1) * np.pi))
        g = np.array([1.0] + [1.0 / decay_factor(k, s)
                              for k in range(2, K + 1)])
        T = S @ np.diag(g) @ (2.0 * s * S.T)
        self._T = T
        i_face = self.i_strip - self.i_lo
        face = idx[i_face, np.arange(1, ny + 1) - self.j_lo]
        if np.any(face < 0):
            raise DomainError("truncation face is not fully interior")
        self.face = face
        R, C = np.meshgrid(face, face, indexing="ij")
        rows.append(R.ravel())
        cols.append(C.ravel())
        vals.append((-T / s**2).ravel())
        A = sparse.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsc()
        self.matrix = A
        self._lu = None

    def lu(self):
        if self._lu is None:
            self._lu = splu(self.matrix)
        return self._lu

    def scattering_rhs(self):
        """Ghost contribution forcing unit slope in the first mode."""
        s = self.spacing
        ny = self.domain.ny
        yj = np.arange(1, ny + 1) * s
        b = np.zeros(self.n)
        b[self.face] = np.sin(np.pi * yj) / s
        return b

    def mode_coefficient(self, v, k):
        """(x nodes, k-th transverse mode coefficient) over the strip."""
        s = self.spacing
        ny = self.domain.ny
        sk = np.sin(np.arange(1, ny + 1) * k * np.pi * s)
        xs, cs = [], []
        for i_abs in range(0, self.i_strip + 1):
            col = self.idx[i_abs - self.i_lo,
                           np.arange(1, ny + 1) - self.j_lo]
            xs.append(i_abs * s)
            cs.append(2.0 * s * np.dot(v[col], sk))
        return np.asarray(xs), np.asarray(cs)

    def values_grid(self, v):
        out = np.zeros(self.mask.shape)
        out[self.mask] = v
        return out


class ScatteringSolution:
    """Solution on the truncated domain with its strip-mode diagnostics."""

    def __init__(self, system, v, a, fit_residual, residual_norm):
        self._system = system
        self.v = system.values_grid(v)
        self._flat = v
        self.a = a
        self.fit_residual = fit_residual
        self.residual_norm = residual_norm
        self.spacing = system.spacing
        self.mode_amplitudes = {
            k: system.mode_coefficient(v, k)[1][-1]
            for k in range(2, min(system.domain.n_modes, 6) + 1)}

    def mode_coefficient(self, k):
        return self._system.mode_coefficient(self._flat, k)

    def mode_decay_rate(self, k):
        """Fitted exponential decay rate of mode k over the outer half."""
        xs, cs = self.mode_coefficient(k)
        sel = (xs >= 0.5 * xs[-1]) & (np.abs(cs) > 1e-300)
        if np.sum(sel) < 3:
            raise SolverError("mode amplitude underflow, cannot fit decay")
        slope = np.polyfit(xs[sel], np.log(np.abs(cs[sel])), 1)[0]
        return -slope


def _affine_intercept(system, v):
    xs, c1 = system.mode_coefficient(v, 1)
    sel = xs >= 0.75 * xs[-1]
    slope, intercept = np.polyfit(xs[sel], c1[sel], 1)
    fit_res = float(np.max(np.abs(c1[sel] - (slope * xs[sel] + intercept))))
    return float(slope), float(intercept), fit_res


def scattering_constant(domain, check_stability=True, full_output=False):
    """Intercept a of the generalized eigenfunction (X + a) sin(pi Y).

    Solves the homogeneous problem with a unit-slope first-mode closure at
    the truncation face and fits the affine first-mode coefficient on the
    outer quarter of the strip.  The value must be stable when the
    truncation grows by one unit.
    """
    sys0 = _System(domain)
    v = sys0.lu().solve(sys0.scattering_rhs())
    slope, a, fit_res = _affine_intercept(sys0, v)
    if abs(slope - 1.0) > 1e-6:
        raise SolverError(f"first-mode slope {slope} is not 1")
    if check_stability:
        sys1 = _System(domain.with_truncation(domain.L_trunc + 1.0))
        v1 = sys1.lu().solve(sys1.scattering_rhs())
        _, a1, _ = _affine_intercept(sys1, v1)
        if abs(a1 - a) > 1e-6:
            raise TruncationError(
                f"scattering constant drifts {abs(a1 - a):.3e} per added unit")
    if full_output:
        return a, ScatteringSolution(sys0, v, a, fit_res, 0.0)
    return a


def scattering_constant_refined(domain, levels=3):
    """Richardson-extrapolated scattering constant over grid refinement.

    Uses `levels` grids with spacing halved each time, fits the observed
    convergence order on the last three values and extrapolates.
    """
    if levels < 2:
        raise DomainError("need at least two refinement levels")
    nys = [domain.ny]
    for _ in range(levels - 1):
        nys.append(2 * nys[-1] + 1)
    a_vals = [scattering_constant(domain.with_resolution(ny),
                                  check_stability=False) for ny in nys]
    if levels == 2:
        # assume second order
        return a_vals[1] + (a_vals[1] - a_vals[0]) / 3.0
    d1 = a_vals[-2] - a_vals[-3]
    d2 = a_vals[-1] - a_vals[-2]
    if abs(d1) < 1e-9 and abs(d2) < 1e-9:
        # already at the floor (exact cases); nothing left to extrapolate
        return a_vals[-1]
    r = d1 / d2
    if r <= 1.0:
        raise SolverError("scattering constant not converging under refinement")
    return a_vals[-1] + d2 / (r - 1.0)


def surgery_solve(domain, f):
    """Solve (-Delta - pi^2) v = f with bounded behavior along the strip.

    f is a callable f(x, y) with compact support whose first transverse
    mode vanishes along the strip (otherwise the bounded solution does not
    exist and a DomainError is raised).
    """
    system = _System(domain)
    ii, jj = np.nonzero(system.mask)
    fv = np.asarray([float(f(system.x_of(i), system.y_of(j)))
                     for i, j in zip(ii, jj)])
    fnorm = float(np.max(np.abs(fv))) if fv.size else 0.0
    if fnorm > 0:
        _, c1 = system.mode_coefficient(fv, 1)
        if np.max(np.abs(c1)) > 1e-8 * fnorm:
            raise DomainError(
                "source has a nonvanishing first-mode component on the strip")
    v = system.lu().solve(fv)
    res = float(np.linalg.norm(system.matrix @ v - fv))
    if fnorm > 0 and res > 1e-6 * np.linalg.norm(fv):
        raise SolverError(f"surgery residual {res:.3e} above tolerance")
    xs, c1 = system.mode_coefficient(v, 1)
    sel = xs >= 0.75 * xs[-1]
    a = float(np.mean(c1[sel]))
    fit_res = float(np.max(np.abs(c1[sel] - a)))
    return ScatteringSolution(system, v, a, fit_res, res)


class NonresonanceResult:
    """Diagnostics of the threshold-resonance test; truthy iff clear."""

    def __init__(self, status, sigma_min, nearest_eigenvalue, system_norm):
        self.status = status
        self.sigma_min = sigma_min
        self.nearest_eigenvalue = nearest_eigenvalue
        self.system_norm = system_norm

    def __bool__(self):
        return self.status == "clear"

    def __repr__(self):
        return (f"NonresonanceResult({self.status}, "
                f"sigma_min={self.sigma_min:.3e}, "
                f"nearest_eig={self.nearest_eigenvalue:.3e}, "
                f"norm={self.system_norm:.3e})")


def nonresonance_check(domain, ny=32):
    """Decide whether the end is free of a threshold resonance at pi^2.

    Tests unique solvability of the bounded-closure system: smallest
    singular value by inverse power iteration on the factored system, plus
    the eigenvalue of smallest magnitude.  Relative to the system norm,
    above 1e-6 is clear, below 1e-8 resonant, in between suspect.

    The thresholds are relative to the matrix norm, which grows like the
    inverse spacing squared, so the verdict is computed on a fixed moderate
    grid (`ny`) rather than the domain's own resolution; this keeps the
    decision independent of how finely the caller meshes the solves.
    """
    system = _System(domain.with_resolution(ny))
    A = system.matrix
    lu = system.lu()
    norm = float(np.max(np.abs(A).sum(axis=1)))
    x = np.ones(system.n) / np.sqrt(system.n)
    sigma = None
    for _ in range(40):
        y = lu.solve(x)
        y = lu.solve(y, trans="T")
        nrm = np.linalg.norm(y)
        if nrm == 0:
            break
        x = y / nrm
        sigma = 1.0 / np.sqrt(nrm)
    try:
        w = eigs(A, k=1, sigma=0.0, return_eigenvectors=False,
                 v0=np.ones(system.n))
        nearest = float(np.min(np.abs(w)))
    except Exception:
        nearest = float("nan")
    score = sigma if np.isnan(nearest) else min(sigma, nearest)
    if score > RESONANCE_CLEAR * norm:
        status = "clear"
    elif score < RESONANCE_GRAY * norm:
        status = "resonant"
    else:
        status = "suspect"
    return NonresonanceResult(status, sigma, nearest, norm)


def ends_quasieigenvalue(domain, m, h, a=None):
    """Quasi-eigenvalue pi^2 h^-2 + m^2 pi^2 (1 + a h)^-2 and its series.

    `domain` may also be a plain number, taken as the scattering constant
    directly (a = 0 means no end).  The series carries the expansion of the
    closed form through h^2; deeper coefficients are not computed and the
    truncation makes that explicit.
    """
    if m < 1:
        raise DomainError("mode index m must be >= 1")
    if h <= 0:
        raise DomainError("h must be positive")
    if a is None:
        if isinstance(domain, (int, float)):
            a = float(domain)
        else:
            a = scattering_constant(domain)
    value = np.pi**2 / h**2 + m**2 * np.pi**2 / (1.0 + a * h) ** 2
    mm = m**2 * np.pi**2
    series = HalfPowerSeries(
        -4, [np.pi**2, 0.0, 0.0, 0.0, mm, 0.0, -2.0 * a * mm, 0.0,
             3.0 * a**2 * mm], denominator=2)
    return value, series


def quasimode_corner_expansion(a, m, n_j=3, n_l=4, fibre_grid=None):
    """Corner table a_{jl}(Y) (h/x)^j x^l of the base eigenfunction factor.

    The length-(1+ah) interval eigenfunction sin(m pi (x+ah)/(1+ah)) becomes,
    with w = h/x, a double series in (w, x) whose coefficients multiply the
    fibre profile sqrt(2) sin(pi Y); every power of w arrives with at least
    one power of x, which is exactly the triangular constraint l >= j.
    """
    if m < 1:
        raise DomainError("mode index m must be >= 1")
    if fibre_grid is None:
        fibre_grid = Grid1D(0.0, 1.0, 31)
    w, x = sp.symbols("w x", real=True)
    u = sp.sin(m * sp.pi * x * (1 + a * w) / (1 + a * w * x))
    poly = sp.series(u, x, 0, n_l).removeO()
    profile = np.sqrt(2.0) * np.sin(np.pi * fibre_grid.nodes)
    table = []
    for j in range(n_j):
        row = []
        for l in range(n_l):
            cl = sp.expand(poly.coeff(x, l))
            g = sp.series(cl, w, 0, n_j).removeO().coeff(w, j)
            row.append(float(g) * profile)
        table.append(row)
    return CornerExpansion(table)
