"""Linear stability analysis of fractional-step splittings.

One FSRK step on a linear 2-split test problem amplifies the solution
by a product of per-sub-integration Runge-Kutta stability factors.
When both operator eigenvalues are negative reals the product reduces
to a single-variable function of z = lambda_R * dt: the DR ordering
scales operator-1 (diffusion) arguments by eigen_ratio =
lambda_D / lambda_R, the RD ordering does the same with the roles
swapped. The practical step bound for such spectra is xhat, the
right-most negative x-intercept of |R(z)| = 1. Backward implicit
sub-steps put poles of R on the negative real axis, which can carve
holes of instability and make xhat pole-limited.
"""

import numpy as np

from .errors import InputError, PoleError
from .plans import check_ordering
from .tableaus import ButcherTableau, ExactFlow

DEFAULT_SCAN_DEPTH = 50.0
SCAN_POINTS = 100000
BISECT_TOL = 1e-12
# |R| - 1 above this counts as instability; smaller wiggles are roundoff
# or tangential touches, which do not bound the step size.
_POS_TOL = 1e-13


def rk_stability(tab, z):
    """R(z) = 1 + z b^T (I - zA)^{-1} 1 for one tableau, scalar z.

    Raises a pole error when z makes a stage denominator vanish
    (det(I - zA) = 0 for lower-triangular A means some 1 - z*A_ii = 0).
    """
    if isinstance(tab, ExactFlow):
        return complex(np.exp(z))
    if not isinstance(tab, ButcherTableau):
        raise InputError(f"expected a ButcherTableau, got {type(tab).__name__}")
    z = complex(z)
    A, b = tab.A, tab.b
    w = []
    for i in range(tab.n_stages):
        acc = 1.0 + 0.0j
        for j in range(i):
            if A[i, j] != 0.0:
                acc += z * A[i, j] * w[j]
        if A[i, i] != 0.0:
            den = 1.0 - z * A[i, i]
            if abs(den) < 1e-13 * max(1.0, abs(z * A[i, i])):
                raise PoleError(
                    f"tableau {tab.name}: z = {z} is a pole (stage {i + 1} "
                    f"denominator {den})",
                    z=z,
                )
            acc /= den
        w.append(acc)
    out = 1.0 + 0.0j
    for i in range(tab.n_stages):
        if b[i] != 0.0:
            out += z * b[i] * w[i]
    return out


def _method_factors(method, plan, scales):
    """Nonzero sub-integrations as (stage, operator, tableau, scale*alpha);
    zero coefficients are skipped without touching the plan."""
    out = []
    for k in range(1, method.stages + 1):
        for op in (1, 2):
            a = method.alpha[k - 1, op - 1]
            if a != 0.0:
                out.append((k, op, plan.resolve(k, op, a), scales[op - 1] * a))
    return tuple(out)


def _factor_product(factors, z, pick=None):
    """Strict scalar product of stability factors; pick maps operator to
    its z argument (default: same z for both)."""
    out = 1.0 + 0.0j
    for k, op, tab, coeff in factors:
        arg = coeff * (z if pick is None else pick[op - 1])
        try:
            out *= rk_stability(tab, arg)
        except PoleError as exc:
            raise PoleError(
                f"stability pole at stage {k}, operator {op}: {exc}",
                z=arg,
                stage=k,
                operator=op,
            ) from exc
    return out


def fsrk_stability(method, plan, z1, z2):
    """Two-variable FSRK stability function R(z1, z2).

    Product over stages of R_k[1](alpha_k[1] z1) * R_k[2](alpha_k[2] z2);
    factors with a zero coefficient contribute exactly 1.
    """
    factors = _method_factors(method, plan, (1.0, 1.0))
    return _factor_product(factors, None, pick=(complex(z1), complex(z2)))


class StabilityContext:
    """Single-variable stability setting: method, plan, operator ordering,
    and the eigenvalue ratio lambda_D / lambda_R."""

    def __init__(self, method, plan, ordering, eigen_ratio):
        self.ordering = check_ordering(ordering)
        eigen_ratio = float(eigen_ratio)
        if not np.isfinite(eigen_ratio):
            raise InputError(f"eigen_ratio must be finite, got {eigen_ratio}")
        if not plan.covers(method):
            raise InputError(
                f"plan {plan.describe()!r} does not cover every nonzero "
                f"coefficient of method {method.name}"
            )
        self.method = method
        self.plan = plan
        self.eigen_ratio = eigen_ratio
        # diffusion arguments carry the ratio; z is in lambda_R*dt units
        if self.ordering == "DR":
            self.scales = (eigen_ratio, 1.0)
        else:
            self.scales = (1.0, eigen_ratio)
        self.factors = _method_factors(method, plan, self.scales)

    def __repr__(self):
        return (
            f"StabilityContext({self.method.name!r}, {self.ordering}, "
            f"ratio={self.eigen_ratio:g}, plan={self.plan.describe()!r})"
        )


def single_var_stability(ctx, z):
    """R_DR(z) or R_RD(z) at scalar z = lambda_R * dt."""
    return _factor_product(ctx.factors, complex(z))


def _magnitude(ctx, Z):
    """|R| over an array of z values; non-finite values map to +inf."""
    Z = np.asarray(Z, dtype=complex)
    R = np.ones_like(Z)
    for _, _, tab, coeff in ctx.factors:
        R = R * tab.stability(coeff * Z)
    mag = np.abs(R)
    mag[~np.isfinite(mag)] = np.inf
    return mag


def negative_real_poles(ctx):
    """Sorted negative-real-axis poles of the single-variable R."""
    out = set()
    for _, _, tab, coeff in ctx.factors:
        for p in tab.poles():
            zp = p / coeff
            if zp < 0.0:
                out.add(zp)
    return sorted(out)


class XHatResult:
    """Right-most negative x-intercept of |R| = 1, with its certificate."""

    def __init__(self, xhat, bracket, is_pole_limited):
        self.xhat = xhat
        self.bracket = bracket
        self.is_pole_limited = is_pole_limited

    def __repr__(self):
        if self.xhat is None:
            return "XHatResult(stable to scan depth)"
        return (
            f"XHatResult(xhat={self.xhat:.9g}, bracket={self.bracket}, "
            f"is_pole_limited={self.is_pole_limited})"
        )


def find_xhat(ctx, scan_depth=DEFAULT_SCAN_DEPTH, n_points=SCAN_POINTS):
    """Locate xhat by dense scan plus bisection.

    Scans g(x) = |R(x)| - 1 on n_points geometrically spaced samples of
    [-scan_depth, 0), nearest zero first, with the analytic negative
    real-axis poles inserted as +inf samples so no pole sits between
    grid points unseen. The first obstruction (sign change or pole) is
    bracketed and bisected to width 1e-12. Returns xhat = None when the
    whole scanned axis is stable. is_pole_limited reports whether the
    unstable pocket behind the crossing contains a pole.
    """
    scan_depth = float(scan_depth)
    if scan_depth <= 0.0:
        raise InputError(f"scan_depth must be positive, got {scan_depth}")
    xs = -np.geomspace(scan_depth * 1e-8, scan_depth, int(n_points))
    gvals = _magnitude(ctx, xs) - 1.0
    ispole = np.zeros(xs.shape, dtype=bool)
    poles = [p for p in negative_real_poles(ctx) if -scan_depth <= p < 0.0]
    if poles:
        xs = np.concatenate([xs, poles])
        gvals = np.concatenate([gvals, np.full(len(poles), np.inf)])
        ispole = np.concatenate([ispole, np.ones(len(poles), dtype=bool)])
        order = np.argsort(-xs)  # ascending |x|
        xs, gvals, ispole = xs[order], gvals[order], ispole[order]

    def g_eval(x):
        try:
            return abs(single_var_stability(ctx, x)) - 1.0
        except PoleError:
            return np.inf

    unstable = (gvals > _POS_TOL) | ~np.isfinite(gvals)
    hits = np.flatnonzero(unstable)
    if hits.size == 0:
        return XHatResult(None, None, False)
    idx = hits[0]
    lo = xs[idx]
    hi = xs[idx - 1] if idx > 0 else 0.0
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if g_eval(mid) > _POS_TOL:
            lo = mid
        else:
            hi = mid
    run_end = idx
    while run_end + 1 < len(xs) and unstable[run_end + 1]:
        run_end += 1
    pole_limited = bool(ispole[idx : run_end + 1].any())
    return XHatResult(0.5 * (lo + hi), (lo, hi), pole_limited)


def practical_interval(ctx, scan_depth=DEFAULT_SCAN_DEPTH):
    """[xhat, 0], the stable negative-real-axis interval containing the
    origin; None when stable through the whole scan depth."""
    res = find_xhat(ctx, scan_depth=scan_depth)
    if res.xhat is None:
        return None
    return (res.xhat, 0.0)


class RegionRaster:
    """|R| sampled on a rectangular complex-plane grid."""

    def __init__(self, x_range, y_range, xs, ys, magnitude, pole):
        self.x_range = x_range
        self.y_range = y_range
        self.xs = xs
        self.ys = ys
        self.magnitude = magnitude
        self.pole = pole
        self.inside = magnitude <= 1.0

    @property
    def nx(self):
        return len(self.xs)

    @property
    def ny(self):
        return len(self.ys)

    def __repr__(self):
        return (
            f"RegionRaster({self.nx}x{self.ny}, x={self.x_range}, "
            f"y={self.y_range}, inside={int(self.inside.sum())} cells)"
        )


def raster(ctx, window, nx, ny):
    """Rasterize |R| over window = (x0, x1, y0, y1).

    Cells within one cell-diagonal of an analytic pole are flagged:
    magnitude +inf, inside False.
    """
    try:
        x0, x1, y0, y1 = (float(v) for v in window)
    except (TypeError, ValueError) as exc:
        raise InputError(f"window must be (x0, x1, y0, y1), got {window!r}") from exc
    nx, ny = int(nx), int(ny)
    if nx < 2 or ny < 2:
        raise InputError(f"raster needs nx, ny >= 2, got {nx}x{ny}")
    if not (x0 < x1 and y0 < y1):
        raise InputError(f"degenerate window {window!r}")
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    Z = xs[:, None] + 1j * ys[None, :]
    mag = _magnitude(ctx, Z)
    pole = np.zeros(Z.shape, dtype=bool)
    diag = np.hypot(xs[1] - xs[0], ys[1] - ys[0])
    for zp in negative_real_poles(ctx):
        pole |= np.abs(Z - zp) <= diag
    mag[pole] = np.inf
    return RegionRaster((x0, x1), (y0, y1), xs, ys, mag, pole)


def raster_to_csv(r, path):
    """Write one row per grid cell with header x,y,abs_R,inside,pole."""
    lines = ["x,y,abs_R,inside,pole"]
    for i in range(r.nx):
        for j in range(r.ny):
            lines.append(
                f"{r.xs[i]:.12g},{r.ys[j]:.12g},{r.magnitude[i, j]:.12g},"
                f"{int(r.inside[i, j])},{int(r.pole[i, j])}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _interp_point(xa, ya, fa, xb, yb, fb, level):
    if fb == fa:
        t = 0.5
    else:
        t = min(1.0, max(0.0, (level - fa) / (fb - fa)))
    return (xa + t * (xb - xa), ya + t * (yb - ya))


# marching-squares segment topology: case bits are corners above level
# (c0 bottom-left, c1 bottom-right, c2 top-right, c3 top-left); edges
# E0 bottom, E1 right, E2 top, E3 left
_MS_CASES = {
    1: [(0, 3)],
    2: [(0, 1)],
    3: [(3, 1)],
    4: [(1, 2)],
    6: [(0, 2)],
    7: [(3, 2)],
    8: [(2, 3)],
    9: [(0, 2)],
    11: [(1, 2)],
    12: [(3, 1)],
    13: [(0, 1)],
    14: [(0, 3)],
}


def contour_segments(r, level=1.0):
    """|R| = level contour as line segments via marching squares."""
    F = np.minimum(r.magnitude, 1e6)
    xs, ys = r.xs, r.ys
    segs = []
    for i in range(r.nx - 1):
        for j in range(r.ny - 1):
            f00, f10 = F[i, j], F[i + 1, j]
            f01, f11 = F[i, j + 1], F[i + 1, j + 1]
            case = (
                (f00 > level)
                + 2 * (f10 > level)
                + 4 * (f11 > level)
                + 8 * (f01 > level)
            )
            if case in (0, 15):
                continue
            x0, x1v, y0, y1v = xs[i], xs[i + 1], ys[j], ys[j + 1]
            edge_pts = {
                0: _interp_point(x0, y0, f00, x1v, y0, f10, level),
                1: _interp_point(x1v, y0, f10, x1v, y1v, f11, level),
                2: _interp_point(x0, y1v, f01, x1v, y1v, f11, level),
                3: _interp_point(x0, y0, f00, x0, y1v, f01, level),
            }
            if case in (5, 10):
                center_above = 0.25 * (f00 + f10 + f01 + f11) > level
                if case == 5:
                    pairs = [(0, 1), (2, 3)] if center_above else [(0, 3), (1, 2)]
                else:
                    pairs = [(0, 3), (1, 2)] if center_above else [(0, 1), (2, 3)]
            else:
                pairs = _MS_CASES[case]
            for ea, eb in pairs:
                segs.append((edge_pts[ea], edge_pts[eb]))
    return segs


def origin_component(r):
    """Boolean mask of the inside cells 4-connected to the cell nearest
    the origin (the practically relevant stability region)."""
    inside = r.inside & ~r.pole
    comp = np.zeros_like(inside)
    if not inside.any():
        return comp
    X, Y = np.meshgrid(r.xs, r.ys, indexing="ij")
    d2 = X**2 + Y**2
    d2[~inside] = np.inf
    stack = [np.unravel_index(int(np.argmin(d2)), d2.shape)]
    comp[stack[0]] = True
    while stack:
        i, j = stack.pop()
        for ii, jj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if 0 <= ii < r.nx and 0 <= jj < r.ny and inside[ii, jj] and not comp[ii, jj]:
                comp[ii, jj] = True
                stack.append((ii, jj))
    return comp


def export_region_svg(r, path, title=""):
    """Render the |R| = 1 contour with the origin-connected component
    shaded and pole cells marked, as a standalone SVG file."""
    W, H, pad = 640.0, 480.0, 42.0
    x0, x1 = r.x_range
    y0, y1 = r.y_range

    def px(x):
        return pad + (x - x0) / (x1 - x0) * W

    def py(y):
        return pad + (y1 - y) / (y1 - y0) * H

    dx = (r.xs[1] - r.xs[0]) / 2.0
    dy = (r.ys[1] - r.ys[0]) / 2.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{W + 2 * pad:.0f}" height="{H + 2 * pad:.0f}" '
        f'viewBox="0 0 {W + 2 * pad:.0f} {H + 2 * pad:.0f}">',
        f'<rect x="0" y="0" width="{W + 2 * pad:.0f}" height="{H + 2 * pad:.0f}" fill="white"/>',
    ]
    # shaded origin-connected component, merged into per-column runs
    comp = origin_component(r)
    for i in range(r.nx):
        j = 0
        while j < r.ny:
            if comp[i, j]:
                j0 = j
                while j + 1 < r.ny and comp[i, j + 1]:
                    j += 1
                xl, xr = px(r.xs[i] - dx), px(r.xs[i] + dx)
                yt, yb = py(r.ys[j] + dy), py(r.ys[j0] - dy)
                out.append(
                    f'<rect x="{xl:.2f}" y="{yt:.2f}" width="{xr - xl:.2f}" '
                    f'height="{yb - yt:.2f}" fill="#aec7e8" stroke="none"/>'
                )
            j += 1
    for i, j in zip(*np.nonzero(r.pole)):
        xl, xr = px(r.xs[i] - dx), px(r.xs[i] + dx)
        yt, yb = py(r.ys[j] + dy), py(r.ys[j] - dy)
        out.append(
            f'<rect x="{xl:.2f}" y="{yt:.2f}" width="{xr - xl:.2f}" '
            f'height="{yb - yt:.2f}" fill="#d62728" fill-opacity="0.6" stroke="none"/>'
        )
    # axes
    if x0 < 0.0 < x1:
        out.append(
            f'<line x1="{px(0):.2f}" y1="{py(y0):.2f}" x2="{px(0):.2f}" '
            f'y2="{py(y1):.2f}" stroke="#999" stroke-width="1"/>'
        )
    if y0 < 0.0 < y1:
        out.append(
            f'<line x1="{px(x0):.2f}" y1="{py(0):.2f}" x2="{px(x1):.2f}" '
            f'y2="{py(0):.2f}" stroke="#999" stroke-width="1"/>'
        )
    # |R| = 1 contour as one path
    pieces = []
    for (xa, ya), (xb, yb) in contour_segments(r, 1.0):
        pieces.append(f"M{px(xa):.2f} {py(ya):.2f}L{px(xb):.2f} {py(yb):.2f}")
    if pieces:
        out.append(
            f'<path d="{"".join(pieces)}" stroke="black" stroke-width="1.2" fill="none"/>'
        )
    out.append(
        f'<rect x="{pad:.0f}" y="{pad:.0f}" width="{W:.0f}" height="{H:.0f}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    )
    if title:
        out.append(
            f'<text x="{pad:.0f}" y="{pad - 12:.0f}" font-family="sans-serif" '
            f'font-size="16">{title}</text>'
        )
    out.append(
        f'<text x="{pad:.0f}" y="{pad + H + 26:.0f}" font-family="sans-serif" '
        f'font-size="12">x: [{x0:g}, {x1:g}]   y: [{y0:g}, {y1:g}]   '
        'shaded: origin-connected |R| &lt;= 1</text>'
    )
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
