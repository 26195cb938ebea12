"""Independent direct 2D eigensolver for thin domains.

Rasterizes a domain family at thickness h onto an anisotropic uniform grid
(fine across the thin direction), assembles the masked 5-point Dirichlet
Laplacian, and computes the lowest eigenvalues by shift-invert Lanczos.
Richardson extrapolation over halved grids separates discretization error
from the asymptotic residuals whose empirical convergence order this module
fits.
"""

import numpy as np
from matplotlib.path import Path
from scipy import sparse
from scipy.ndimage import label
from scipy.sparse.linalg import eigsh

from .errors import DomainError, SolverError
from .thinshape import ThicknessProfile

try:
    from .ends import EndDomain
except ImportError:  # pragma: no cover
    EndDomain = None

# minimum number of transverse nodes across the thin scale
MIN_TRANSVERSE_NODES = 24


class RectangleFamily:
    """Plain rectangles (0, width) x (0, h)."""

    def __init__(self, width=1.0):
        if width <= 0:
            raise DomainError("width must be positive")
        self.width = float(width)

    def bounding_box(self, h):
        return 0.0, self.width, 0.0, h

    def inside(self, X, Y, h):
        return np.ones_like(X, dtype=bool)

    def thickness_scale(self, h):
        return h


class RasterDomain:
    """Boolean interior mask on an anisotropic uniform Dirichlet grid.

    Interior nodes live at (x0 + (i+1) sx, y0 + (j+1) sy); everything
    outside the mask is a homogeneous Dirichlet value.
    """

    def __init__(self, box, mask, thickness_scale=None):
        x0, x1, y0, y1 = (float(v) for v in box)
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise DomainError("mask must be 2D")
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.nx, self.ny = mask.shape
        self.spacing_x = (x1 - x0) / (self.nx + 1)
        self.spacing_y = (y1 - y0) / (self.ny + 1)
        self.mask = mask
        if not np.any(mask):
            raise DomainError("empty mask")
        n_comp = label(mask)[1]
        if n_comp != 1:
            raise DomainError(f"mask splits into {n_comp} components")
        if thickness_scale is not None:
            if thickness_scale / self.spacing_y < MIN_TRANSVERSE_NODES:
                raise DomainError(
                    "resolution insufficient for the thin direction: "
                    f"{thickness_scale / self.spacing_y:.1f} nodes across "
                    f"thickness, need {MIN_TRANSVERSE_NODES}")
        self.thickness_scale = thickness_scale

    @property
    def n_inside(self):
        return int(np.sum(self.mask))

    def area(self):
        return self.n_inside * self.spacing_x * self.spacing_y

    def nodes(self):
        xs = self.x0 + self.spacing_x * np.arange(1, self.nx + 1)
        ys = self.y0 + self.spacing_y * np.arange(1, self.ny + 1)
        return xs, ys

    def laplacian(self):
        sx2 = 1.0 / self.spacing_x**2
        sy2 = 1.0 / self.spacing_y**2
        n = self.n_inside
        idx = -np.ones(self.mask.shape, dtype=int)
        idx[self.mask] = np.arange(n)
        ii, jj = np.nonzero(self.mask)
        rows = [idx[ii, jj]]
        cols = [idx[ii, jj]]
        vals = [np.full(n, 2.0 * sx2 + 2.0 * sy2)]
        for di, dj, w in ((1, 0, sx2), (-1, 0, sx2), (0, 1, sy2),
                          (0, -1, sy2)):
            ni, nj = ii + di, jj + dj
            ok = (ni >= 0) & (ni < self.nx) & (nj >= 0) & (nj < self.ny)
            ok[ok] &= self.mask[ni[ok], nj[ok]]
            rows.append(idx[ii[ok], jj[ok]])
            cols.append(idx[ni[ok], nj[ok]])
            vals.append(np.full(int(np.sum(ok)), -w))
        return sparse.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsc()


def _strict_inside_polygon(vertices, pts):
    path = Path(np.asarray(vertices))
    eps = 1e-9
    inside = np.ones(len(pts), dtype=bool)
    for dx, dy in ((eps, eps), (eps, -eps), (-eps, eps), (-eps, -eps)):
        inside &= path.contains_points(pts + [dx, dy])
    return inside


def _node_count(length, spacing):
    n = int(round(length / spacing)) - 1
    if n < 3:
        raise DomainError("resolution too coarse for the domain extent")
    return n


def rasterize(family, h, spacing_x=None, spacing_y=None):
    """Boolean raster of the family's domain at thickness h.

    Defaults: spacing_y = h/32 across the thin direction and spacing_x =
    1/256 along the base, except for end domains where the end region lives
    at scale h in both directions and the grid is uniform at h/32.
    """
    if h <= 0:
        raise DomainError("h must be positive")
    if spacing_y is None:
        spacing_y = h / 32.0
    if isinstance(family, RectangleFamily):
        if spacing_x is None:
            spacing_x = 1.0 / 256.0
        x0, x1, y0, y1 = family.bounding_box(h)
        nx = _node_count(x1 - x0, spacing_x)
        ny = _node_count(y1 - y0, spacing_y)
        mask = np.ones((nx, ny), dtype=bool)
        return RasterDomain((x0, x1, y0, y1), mask,
                            thickness_scale=family.thickness_scale(h))
    if isinstance(family, ThicknessProfile):
        if spacing_x is None:
            spacing_x = 1.0 / 256.0
        x0, x1 = family.x_lo, family.x_hi
        xs_dense = np.linspace(x0, x1, 2001)
        y0 = h * float(np.min(family.a_minus(xs_dense)))
        y1 = h * float(np.max(family.a_plus(xs_dense)))
        nx = _node_count(x1 - x0, spacing_x)
        ny = _node_count(y1 - y0, spacing_y)
        sx = (x1 - x0) / (nx + 1)
        sy = (y1 - y0) / (ny + 1)
        X = x0 + sx * np.arange(1, nx + 1)
        Y = y0 + sy * np.arange(1, ny + 1)
        XX, YY = np.meshgrid(X, Y, indexing="ij")
        lo = h * np.asarray(family.a_minus(XX), dtype=float)
        hi = h * np.asarray(family.a_plus(XX), dtype=float)
        mask = (YY > lo) & (YY < hi)
        return RasterDomain((x0, x1, y0, y1), mask,
                            thickness_scale=h * float(family.width(0.0)))
    if EndDomain is not None and isinstance(family, EndDomain):
        # h * end polygon glued to the rectangle [0,1) x (0,h)
        if spacing_x is None:
            spacing_x = spacing_y
        vx = [v[0] for v in family.vertices]
        vy = [v[1] for v in family.vertices]
        x0 = h * min(vx)
        x1 = 1.0
        y0 = min(0.0, h * min(vy))
        y1 = max(h, h * max(vy))
        nx = _node_count(x1 - x0, spacing_x)
        ny = _node_count(y1 - y0, spacing_y)
        sx = (x1 - x0) / (nx + 1)
        sy = (y1 - y0) / (ny + 1)
        X = x0 + sx * np.arange(1, nx + 1)
        Y = y0 + sy * np.arange(1, ny + 1)
        XX, YY = np.meshgrid(X, Y, indexing="ij")
        mask = (XX > -1e-12) & (YY > 0) & (YY < h)
        left = XX < -1e-12
        if np.any(left):
            pts = np.column_stack([XX[left] / h, YY[left] / h])
            mask[left] = _strict_inside_polygon(family.vertices, pts)
        return RasterDomain((x0, x1, y0, y1), mask, thickness_scale=h)
    raise DomainError(f"cannot rasterize {type(family).__name__}")


def direct_eigs(domain, count):
    """The `count` smallest Dirichlet eigenvalues of the masked 5-point
    Laplacian, by shift-invert Lanczos with a fixed start vector."""
    if count < 1:
        raise DomainError("count must be positive")
    A = domain.laplacian()
    if count >= A.shape[0] - 1:
        raise DomainError("count too large for this grid")
    try:
        w = eigsh(A, k=count, sigma=0.0, v0=np.ones(A.shape[0]),
                  return_eigenvectors=False)
    except Exception as exc:
        raise SolverError(f"direct eigensolve failed: {exc}") from exc
    return np.sort(w)


def transverse_consistency_correction(h, spacing_y):
    """Discrete-minus-continuum first transverse eigenvalue at thickness h.

    Subtracting this from a raw eigenvalue removes the h^-2-scale part of
    the y-discretization error for first-transverse-mode states.
    """
    return (2.0 - 2.0 * np.cos(np.pi * spacing_y / h)) / spacing_y**2 \
        - np.pi**2 / h**2


class RichardsonResult:
    """Extrapolated eigenvalues with the observed convergence orders."""

    def __init__(self, values, orders, raw):
        self.values = values
        self.orders = orders
        self.raw = raw


def richardson_eigs(family, h, count, levels=3, spacing_x=None,
                    spacing_y=None, transverse_correction=False):
    """direct_eigs over `levels` grids with halved spacings, extrapolated.

    With three or more levels the convergence order is estimated from the
    last three values and used in the extrapolation; with two levels second
    order is assumed.  transverse_correction subtracts the exactly known
    transverse part of the y-discretization error first (valid for
    first-transverse-mode eigenvalues of thickness-h domains).
    """
    if levels < 2:
        raise DomainError("need at least two grid levels")
    if spacing_y is None:
        spacing_y = h / 32.0
    lam = []
    for lev in range(levels):
        f = 2**lev
        sx = None if spacing_x is None else spacing_x / f
        dom = rasterize(family, h, spacing_x=sx, spacing_y=spacing_y / f)
        w = direct_eigs(dom, count)
        if transverse_correction:
            w = w - transverse_consistency_correction(h, dom.spacing_y)
        lam.append(w)
    lam = np.asarray(lam)
    values = np.empty(count)
    orders = np.full(count, np.nan)
    for i in range(count):
        if levels == 2:
            values[i] = lam[-1, i] + (lam[-1, i] - lam[-2, i]) / 3.0
            continue
        d1 = lam[-2, i] - lam[-3, i]
        d2 = lam[-1, i] - lam[-2, i]
        if abs(d2) < 1e-12 * max(abs(lam[-1, i]), 1.0):
            values[i] = lam[-1, i]
            orders[i] = np.inf
            continue
        r = d1 / d2
        if r <= 1.0:
            raise SolverError(
                f"eigenvalue {i} not converging under refinement (ratio {r:.3g})")
        orders[i] = np.log2(r)
        values[i] = lam[-1, i] + d2 / (r - 1.0)
    return RichardsonResult(values, orders, lam)


class ValidationRecord:
    """One prediction-versus-direct comparison at a given thickness."""

    def __init__(self, h, m, lambda_pred, lambda_direct, nx=None, ny=None):
        self.h = float(h)
        self.m = int(m)
        self.lambda_pred = float(lambda_pred)
        self.lambda_direct = float(lambda_direct)
        self.nx = nx
        self.ny = ny
        if not np.isfinite(self.residual):
            raise DomainError("non-finite residual")

    @property
    def residual(self):
        return self.lambda_direct - self.lambda_pred


class SlopeFit:
    """Least-squares order fit of |residual| against h on log axes."""

    def __init__(self, slope, interval, sign_change):
        self.slope = slope
        self.interval = interval
        self.sign_change = sign_change

    def __repr__(self):
        lo, hi = self.interval
        flag = ", sign changes" if self.sign_change else ""
        return f"SlopeFit({self.slope:.3f}, [{lo:.3f}, {hi:.3f}]{flag})"


def convergence_slope(records):
    """Fitted log-log slope of the residuals over a geometric h sweep.

    Returns the slope with a 2-sigma confidence interval; a residual sign
    change across the sweep is flagged (cancellation near zero residual
    makes the fitted order unreliable).
    """
    if len(records) < 3:
        raise DomainError("need at least 3 records for a slope fit")
    hs = np.array([r.h for r in records])
    res = np.array([r.residual for r in records])
    if np.any(res == 0):
        raise DomainError("zero residual in slope fit")
    sign_change = bool(np.any(np.sign(res) != np.sign(res[0])))
    x = np.log(hs)
    y = np.log(np.abs(res))
    coeffs, cov = np.polyfit(x, y, 1, cov=True)
    slope = float(coeffs[0])
    err = 2.0 * float(np.sqrt(cov[0, 0]))
    return SlopeFit(slope, (slope - err, slope + err), sign_change)
