"""Truncated asymptotic series in fractional powers of a small parameter.

A HalfPowerSeries stores coefficients c_k for exponents k/d, k an integer
running from k_min to k_max, d a fixed positive denominator (2 by default).
Arithmetic truncates so that every retained coefficient is exact given the
truncation of the inputs.  The module also provides consistency checks for
double expansions at a corner: equality of mixed Taylor coefficients between
two face expansions, and the triangularity constraint on (h/x)^j x^l tables.
"""

import json

import numpy as np

from .errors import DomainError, GridMismatchError

# relative threshold below which a coefficient counts as zero
ZERO_RTOL = 1e-12


class HalfPowerSeries:
    """Finite sum  sum_k c_k h^{k/d},  k = k_min .. k_max.

    The denominator d is 2 for all the engines except the degenerate-maximum
    thin-shape variant, which uses d = p+1.

    `exact=True` marks a series whose tail beyond k_max is identically zero
    (a polynomial in h^{1/d} known in full, not a truncation).  Exact
    operands impose no truncation on arithmetic results.
    """

    def __init__(self, k_min, coeffs, denominator=2, exact=False):
        if denominator < 1:
            raise DomainError("denominator must be a positive integer")
        k_min = int(k_min)
        if k_min < -2 * denominator:
            raise DomainError("leading exponent below h^-2 is not supported")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise DomainError("coeffs must be a nonempty 1D sequence")
        self.k_min = k_min
        self.coeffs = coeffs
        self.denominator = int(denominator)
        self.exact = bool(exact)

    @property
    def k_max(self):
        return self.k_min + len(self.coeffs) - 1

    def coeff(self, k):
        """Coefficient of h^{k/d}; zero if k lies inside the retained range
        but has no entry, error if k is beyond the truncation."""
        if k > self.k_max:
            if self.exact:
                return 0.0
            raise DomainError("coefficient beyond truncation order")
        if k < self.k_min:
            return 0.0
        return float(self.coeffs[k - self.k_min])

    def evaluate(self, h):
        if h <= 0:
            raise DomainError("series evaluation requires h > 0")
        ks = np.arange(self.k_min, self.k_max + 1)
        return float(np.dot(self.coeffs, np.power(float(h), ks / self.denominator)))

    def __add__(self, other):
        return series_add(self, other)

    def __mul__(self, other):
        return series_mul(self, other)

    def __repr__(self):
        terms = []
        scale = np.max(np.abs(self.coeffs)) if len(self.coeffs) else 0.0
        for k, c in zip(range(self.k_min, self.k_max + 1), self.coeffs):
            if scale > 0 and abs(c) <= ZERO_RTOL * scale:
                continue
            terms.append(f"{c:.6g}*h^({k}/{self.denominator})")
        body = " + ".join(terms) if terms else "0"
        return f"HalfPowerSeries({body}; k<=({self.k_max}/{self.denominator}))"

    def to_json(self):
        return json.dumps({
            "denominator": self.denominator,
            "k_min": self.k_min,
            "coeffs": [float(c) for c in self.coeffs],
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["k_min"], d["coeffs"], denominator=d["denominator"])

    @classmethod
    def zero(cls, denominator=2):
        return cls(0, [0.0], denominator=denominator, exact=True)

    @classmethod
    def monomial(cls, k, c=1.0, denominator=2):
        """The single exact term c * h^{k/d}."""
        return cls(k, [float(c)], denominator=denominator, exact=True)


def _common_denominator(a, b):
    if a.denominator != b.denominator:
        raise DomainError("series with different exponent denominators")
    return a.denominator


def series_add(a, b):
    """Coefficientwise sum, truncated to the common range of validity.

    Exact operands (zero tail) do not truncate: adding the exact zero
    series is the identity.
    """
    d = _common_denominator(a, b)
    k_min = min(a.k_min, b.k_min)
    limits = [s.k_max for s in (a, b) if not s.exact]
    k_max = min(limits) if limits else max(a.k_max, b.k_max)
    if k_max < k_min:
        raise DomainError("truncations leave no common exponent range")
    out = np.zeros(k_max - k_min + 1)
    for s in (a, b):
        lo = max(s.k_min, k_min)
        hi = min(s.k_max, k_max)
        if hi >= lo:
            out[lo - k_min:hi - k_min + 1] += s.coeffs[lo - s.k_min:hi - s.k_min + 1]
    return HalfPowerSeries(k_min, out, denominator=d, exact=a.exact and b.exact)


def series_mul(a, b):
    """Cauchy product on exponent indices.

    A product coefficient at index k sums a_i b_j over i+j = k; it is
    retained only if all contributing pairs are inside both truncations,
    which bounds the result at min(a.k_max + b.k_min, b.k_max + a.k_min).
    An exact operand imposes no bound of its own.
    """
    d = _common_denominator(a, b)
    k_min = a.k_min + b.k_min
    limits = []
    if not a.exact:
        limits.append(a.k_max + b.k_min)
    if not b.exact:
        limits.append(b.k_max + a.k_min)
    full = a.k_max + b.k_max
    k_max = min(limits) if limits else full
    if k_max < k_min:
        raise DomainError("truncations leave no exact product coefficients")
    out = np.convolve(a.coeffs, b.coeffs)[:k_max - k_min + 1]
    if k_max > full:
        out = np.concatenate([out, np.zeros(k_max - full)])
    return HalfPowerSeries(k_min, out, denominator=d, exact=a.exact and b.exact)


def series_evaluate(a, h):
    return a.evaluate(h)


def check_matching(row_expansions, col_expansions, tol):
    """Compare mixed corner coefficients extracted along the two faces.

    row_expansions[z] holds the coefficients c_{z,w}, w = 0,1,...: the
    w-expansion of the z-th coefficient of the first face's expansion.
    col_expansions[w] holds c'_{z,w}, z = 0,1,...: the z-expansion of the
    w-th coefficient of the second face's expansion.  Consistency of the two
    double expansions demands c_{z,w} = c'_{z,w} on the common index
    rectangle.
    """
    rows = [np.asarray(getattr(r, "values", r), dtype=float) for r in row_expansions]
    cols = [np.asarray(getattr(c, "values", c), dtype=float) for c in col_expansions]
    if not rows or not cols:
        raise GridMismatchError("empty coefficient tables")
    for t in rows + cols:
        if t.ndim != 1:
            raise GridMismatchError("coefficient tables must be 1D")
    n_z = min(len(rows), min(len(c) for c in cols))
    n_w = min(len(cols), min(len(r) for r in rows))
    for z in range(n_z):
        for w in range(n_w):
            if abs(rows[z][w] - cols[w][z]) > tol:
                return False
    return True


class CornerExpansion:
    """Double expansion u ~ sum_{j,l} a_{jl}(Y) (h/x)^j x^l near a corner.

    `table` is indexed [j][l]; each entry is a profile in Y (GridFunction1D
    or plain array), all on one common Y-grid.
    """

    def __init__(self, table):
        if len(table) == 0 or len(table[0]) == 0:
            raise DomainError("empty corner expansion")
        n_l = len(table[0])
        ny = None
        rows = []
        for row in table:
            if len(row) != n_l:
                raise GridMismatchError("ragged corner-expansion table")
            vals = []
            for entry in row:
                v = np.asarray(getattr(entry, "values", entry), dtype=float)
                if ny is None:
                    ny = v.shape
                elif v.shape != ny:
                    raise GridMismatchError("corner-expansion entries on different Y-grids")
                vals.append(v)
            rows.append(vals)
        self.table = rows
        self.n_j = len(rows)
        self.n_l = n_l

    def entry(self, j, l):
        return self.table[j][l]


def check_triangular(e, tol):
    """True iff every sub-diagonal profile (l < j) vanishes to `tol` in max-norm."""
    for j in range(e.n_j):
        for l in range(min(j, e.n_l)):
            if np.max(np.abs(e.entry(j, l))) > tol:
                return False
    return True
