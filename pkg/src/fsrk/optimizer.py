"""Coefficient design by multi-start constrained optimization.

Searches the third-order manifold of 2-split methods for minimizers of
either the local error measure or the practical stability bound xhat.
The five order conditions are eliminated exactly: a fixed set of five
dependent coefficients is solved by Newton iteration from the sampled
free coefficients, and derivative-free simplex descent runs on the free
coordinates only (the xhat objective is non-smooth where the binding
crossing jumps between branches, so no gradients are assumed).
"""

import numpy as np
from scipy.optimize import minimize as nm_minimize

from .errors import InputError, SearchFailureError
from .methods import (
    SplittingMethod,
    iter_config_lines,
    order_condition_residuals,
)
from .stability import (
    DEFAULT_SCAN_DEPTH,
    StabilityContext,
    find_xhat,
    negative_real_poles,
)

FEASIBLE_RESIDUAL = 1e-9
BOX_SLACK = 1e-12
MANIFOLD_MAX_ITERS = 50
MANIFOLD_TOL = 1e-12
# deterministic starts for the dependent block, tried in order;
# asymmetric on purpose (a uniform block makes the condition Jacobian
# singular by symmetry)
DEPENDENT_STARTS = (
    (0.6, -0.3, 0.9, -0.2, 0.4),
    (-0.4, 0.7, 0.2, 0.8, -0.5),
    (0.3, 0.2, -0.6, 0.5, 0.9),
    (1.1, 0.4, 0.3, -0.8, 0.6),
    (-1.5, 1.2, -0.7, 1.6, -1.1),
)
SEARCH_SCAN_POINTS = 4000

OBJECTIVES = ("min_lem", "min_xhat")


class DesignSpec:
    """Search-space description for one optimization run."""

    def __init__(self, stages, target_order=3, zero_pattern=(), box=(-1.0, 1.0),
                 objective="min_lem", seeds=50, rng_seed=0):
        self.stages = int(stages)
        self.target_order = int(target_order)
        if self.target_order != 3:
            raise InputError("only target_order 3 designs are supported")
        if self.stages < 3:
            raise InputError(
                f"stages must be >= 3 for third order (a two-stage splitting "
                f"cannot satisfy the third-order conditions), got {self.stages}"
            )
        pattern = []
        for pos in zero_pattern:
            k, ell = (int(v) for v in pos)
            if not (1 <= k <= self.stages) or ell not in (1, 2):
                raise InputError(f"zero position {(k, ell)} out of range")
            if (k, ell) in pattern:
                raise InputError(f"duplicate zero position {(k, ell)}")
            pattern.append((k, ell))
        self.zero_pattern = tuple(pattern)
        if 2 * self.stages - len(pattern) < 5:
            raise InputError(
                "zero_pattern must leave at least 5 free coefficients "
                "(five third-order conditions to satisfy)"
            )
        lo, hi = (float(v) for v in box)
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise InputError(f"box must be a finite interval, got {box}")
        self.box = (lo, hi)
        if objective not in OBJECTIVES:
            raise InputError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
        self.objective = objective
        self.seeds = int(seeds)
        if self.seeds < 1:
            raise InputError("seeds must be >= 1")
        self.rng_seed = int(rng_seed)

    def positions(self):
        """Non-forced-zero coefficient positions in column-major order."""
        cols = [(k, 1) for k in range(1, self.stages + 1)]
        cols += [(k, 2) for k in range(1, self.stages + 1)]
        return [pos for pos in cols if pos not in self.zero_pattern]

    def partition(self):
        """(free positions, dependent positions): dependents are the
        last five non-zero positions in column-major order."""
        pos = self.positions()
        return pos[:-5], pos[-5:]


class CandidateMethod:
    """One evaluated design: the method plus its scorecard."""

    def __init__(self, method, objective_value, order_residual_norm, feasible):
        self.method = method
        self.objective_value = float(objective_value)
        self.order_residual_norm = float(order_residual_norm)
        self.feasible = bool(feasible)

    def __repr__(self):
        return (
            f"CandidateMethod(obj={self.objective_value:.6g}, "
            f"residual={self.order_residual_norm:.2e}, feasible={self.feasible})"
        )


class ContextTemplate:
    """Stability-evaluation settings for the xhat objective."""

    def __init__(self, ordering, eigen_ratio, plan):
        self.ordering = ordering
        self.eigen_ratio = float(eigen_ratio)
        self.plan = plan


def _residuals(a, b):
    """The five conditions for order 3 (two consistency, one p=2, two p=3)."""
    sa = np.cumsum(a)
    ra = sa[-1] - sa
    tb = np.cumsum(b[::-1])[::-1]
    return np.array([
        sa[-1] - 1.0,
        tb[0] - 1.0,
        b @ sa - 0.5,
        b @ ra**2 - 1.0 / 3.0,
        a @ tb**2 - 1.0 / 3.0,
    ])


def _residual_jacobian(a, b):
    """d(residuals)/d(alpha) as a (5, s, 2) array, analytic."""
    s = a.size
    sa = np.cumsum(a)
    ra = sa[-1] - sa
    tb = np.cumsum(b[::-1])[::-1]
    J = np.zeros((5, s, 2))
    J[0, :, 0] = 1.0
    J[1, :, 1] = 1.0
    J[2, :, 0] = tb
    J[2, :, 1] = sa
    u = b * ra
    J[3, :, 0] = 2.0 * np.concatenate(([0.0], np.cumsum(u)[:-1]))
    J[3, :, 1] = ra**2
    J[4, :, 0] = tb**2
    J[4, :, 1] = 2.0 * np.cumsum(a * tb)
    return J


def _assemble(spec, free_values, dep_values):
    alpha = np.zeros((spec.stages, 2))
    free_pos, dep_pos = spec.partition()
    for (k, ell), v in zip(free_pos, free_values):
        alpha[k - 1, ell - 1] = v
    for (k, ell), v in zip(dep_pos, dep_values):
        alpha[k - 1, ell - 1] = v
    return alpha


def _batch_residuals(A, B):
    sa = np.cumsum(A, axis=1)
    ra = sa[:, -1:] - sa
    tb = np.cumsum(B[:, ::-1], axis=1)[:, ::-1]
    return np.stack([
        sa[:, -1] - 1.0,
        tb[:, 0] - 1.0,
        np.sum(B * sa, axis=1) - 0.5,
        np.sum(B * ra**2, axis=1) - 1.0 / 3.0,
        np.sum(A * tb**2, axis=1) - 1.0 / 3.0,
    ], axis=1)


def _batch_jacobian(A, B, rows, cols):
    m, s = A.shape
    sa = np.cumsum(A, axis=1)
    ra = sa[:, -1:] - sa
    tb = np.cumsum(B[:, ::-1], axis=1)[:, ::-1]
    J = np.zeros((m, 5, s, 2))
    J[:, 0, :, 0] = 1.0
    J[:, 1, :, 1] = 1.0
    J[:, 2, :, 0] = tb
    J[:, 2, :, 1] = sa
    u = B * ra
    J[:, 3, :, 0] = 2.0 * np.concatenate(
        [np.zeros((m, 1)), np.cumsum(u, axis=1)[:, :-1]], axis=1
    )
    J[:, 3, :, 1] = ra**2
    J[:, 4, :, 0] = tb**2
    J[:, 4, :, 1] = 2.0 * np.cumsum(A * tb, axis=1)
    return J[:, :, rows, cols]


def _newton_batch(free_values, spec, rows, cols):
    """Run Newton from every fixed dependent start at once; returns the
    converged completions as (start_index, alpha) pairs in start order.
    Divergent iterates are cut early (a converging run is far below the
    stall threshold well before the iteration cap)."""
    m = len(DEPENDENT_STARTS)
    s = spec.stages
    dep = np.array(DEPENDENT_STARTS, dtype=float)
    free_pos, dep_pos = spec.partition()
    base = np.zeros((s, 2))
    for (k, ell), v in zip(free_pos, free_values):
        base[k - 1, ell - 1] = v
    A = np.tile(base[:, 0], (m, 1))
    B = np.tile(base[:, 1], (m, 1))
    drow = np.array(rows)
    dcol = np.array(cols)
    active = np.ones(m, dtype=bool)
    done = np.full(m, False)
    out = [None] * m
    for it in range(MANIFOLD_MAX_ITERS):
        for j in range(5):
            (A if dcol[j] == 0 else B)[:, drow[j]] = dep[:, j]
        r = _batch_residuals(A, B)
        rmax = np.max(np.abs(r), axis=1)
        with np.errstate(invalid="ignore"):
            bad = ~np.isfinite(rmax) | (np.max(np.abs(dep), axis=1) > 1e6)
        if it > 15:
            bad |= rmax > 1e-6
        conv = active & ~bad & (rmax <= MANIFOLD_TOL)
        for i in np.flatnonzero(conv):
            alpha = np.stack([A[i], B[i]], axis=1)
            out[i] = alpha
            done[i] = True
        active &= ~bad & ~conv
        if not active.any():
            break
        idx = np.flatnonzero(active)
        J5 = _batch_jacobian(A[idx], B[idx], rows, cols)
        try:
            step = np.linalg.solve(J5, r[idx][:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            # isolate singular systems, drop only those
            step = np.full((len(idx), 5), np.nan)
            for pos, i in enumerate(idx):
                try:
                    step[pos] = np.linalg.solve(J5[pos], r[i])
                except np.linalg.LinAlgError:
                    pass
        ok = np.all(np.isfinite(step), axis=1)
        active[idx[~ok]] = False
        dep[idx[ok]] -= step[ok]
    return [(i, out[i]) for i in range(m) if done[i]]


def _check_free(free_values, spec):
    free_values = np.asarray(free_values, dtype=float)
    free_pos, dep_pos = spec.partition()
    if free_values.shape != (len(free_pos),):
        raise InputError(
            f"expected {len(free_pos)} free values, got shape {free_values.shape}"
        )
    rows = [k - 1 for k, _ in dep_pos]
    cols = [ell - 1 for _, ell in dep_pos]
    return free_values, rows, cols


def solve_order_manifold(free_values, spec):
    """Solve the five third-order conditions for the five dependent
    coefficients by Newton iteration; None on non-convergence or a
    singular Jacobian (the first converged dependent start wins)."""
    free_values, rows, cols = _check_free(free_values, spec)
    found = _newton_batch(free_values, spec, rows, cols)
    return found[0][1] if found else None


def manifold_branches(free_values, spec):
    """All distinct third-order completions the fixed dependent-start
    list converges to, in start order. The manifold equations admit
    several real solution branches for the same free coordinates; the
    objectives score every branch found rather than just the first."""
    free_values, rows, cols = _check_free(free_values, spec)
    branches = []
    keys = set()
    for _, alpha in _newton_batch(free_values, spec, rows, cols):
        key = tuple(np.round(alpha.ravel(), 10))
        if key not in keys:
            keys.add(key)
            branches.append(alpha)
    return branches


def _lem_of(alpha):
    a, b = alpha[:, 0], alpha[:, 1]
    sa = np.cumsum(a)
    ra = sa[-1] - sa
    tb = np.cumsum(b[::-1])[::-1]
    lb = tb[0] - tb
    s1 = b @ ra**3
    u = b * ra**2
    tail_u = np.concatenate((np.cumsum(u[::-1])[::-1][1:], [0.0]))
    s2 = (b**2) @ ra**2 + 2.0 * (b @ tail_u)
    s3 = a @ lb**3
    lam = np.array([4.0 * s1 - 1.0, 6.0 * s2 - 1.0, 4.0 * s3 - 1.0])
    return float(np.linalg.norm(lam))


def _box_violation(alpha, box):
    lo, hi = box
    return float(max(0.0, np.max(alpha) - hi, lo - np.min(alpha)))


def _method_from(alpha, name):
    m = SplittingMethod(name, alpha, claimed_order=3)
    return m


def _finish(spec, alpha, objective_value):
    rep = order_condition_residuals(
        SplittingMethod("candidate", alpha), max_p=3
    )
    residual = rep.max_residual(3)
    feasible = (
        residual < FEASIBLE_RESIDUAL
        and _box_violation(alpha, spec.box) <= BOX_SLACK
    )
    name = f"opt-{'lem' if spec.objective == 'min_lem' else 'xhat'}-{spec.stages}s"
    try:
        meth = _method_from(alpha, name)
    except InputError:
        meth = SplittingMethod(name, alpha, claimed_order=0)
        feasible = False
    return CandidateMethod(meth, objective_value, residual, feasible)


def _nm_options(spec):
    if spec.objective == "min_lem":
        return {"xatol": 1e-11, "fatol": 1e-13, "maxiter": 1200, "maxfev": 2500}
    return {"xatol": 1e-6, "fatol": 1e-9, "maxiter": 250, "maxfev": 400}


def _multi_start(spec, objective_fn, final_value_fn):
    """Shared driver: NM from each sampled start on the free coordinates,
    exact re-evaluation of every manifold branch at each final point,
    deterministic reduction (min objective, then lexicographic)."""
    free_pos, _ = spec.partition()
    n_free = len(free_pos)
    rng = np.random.default_rng(spec.rng_seed)
    starts = rng.uniform(spec.box[0], spec.box[1], size=(spec.seeds, n_free))
    best = None
    best_key = None
    best_residual = np.inf
    discarded = 0
    for x0 in starts:
        if n_free:
            res = nm_minimize(objective_fn, x0, method="Nelder-Mead",
                              options=_nm_options(spec))
            xb = res.x
        else:
            xb = x0
        for alpha in manifold_branches(xb, spec):
            try:
                value = final_value_fn(alpha)
            except Exception:
                discarded += 1
                continue
            cand = _finish(spec, alpha, value)
            best_residual = min(best_residual, cand.order_residual_norm)
            if not cand.feasible:
                continue
            key = (cand.objective_value, tuple(cand.method.alpha.ravel()))
            if best is None or key < best_key:
                best, best_key = cand, key
    if best is None:
        raise SearchFailureError(
            f"no feasible candidate in {spec.seeds} starts "
            f"(best order residual {best_residual:.3e})",
            best_residual=best_residual,
        )
    best.discarded_evaluations = discarded
    return best


def minimize_lem(spec):
    """Best feasible minimizer of the local error measure on the
    third-order manifold."""
    if spec.objective != "min_lem":
        raise InputError("spec.objective must be min_lem")

    def objective(x):
        vals = [1e9]
        for alpha in manifold_branches(x, spec):
            viol = _box_violation(alpha, spec.box)
            if viol > BOX_SLACK:
                vals.append(1e6 * (1.0 + viol))
            else:
                vals.append(_lem_of(alpha))
        return min(vals)

    return _multi_start(spec, objective, _lem_of)


def _xhat_value(alpha, spec, ctx_template, n_points):
    meth = SplittingMethod("probe", alpha)
    ctx = StabilityContext(meth, ctx_template.plan, ctx_template.ordering,
                           ctx_template.eigen_ratio)
    floor = -DEFAULT_SCAN_DEPTH * 1e-8
    poles = negative_real_poles(ctx)
    if poles and max(poles) >= floor:
        # a pole at (or inside) the first scan point: unusable method
        return np.inf
    res = find_xhat(ctx, n_points=n_points)
    if res.xhat is None:
        return -DEFAULT_SCAN_DEPTH
    return res.xhat


def minimize_xhat(spec, ctx_template):
    """Best feasible candidate with the most negative practical
    stability bound xhat under the given ordering/ratio/plan."""
    if spec.objective != "min_xhat":
        raise InputError("spec.objective must be min_xhat")

    def objective(x):
        vals = [1e9]
        for alpha in manifold_branches(x, spec):
            viol = _box_violation(alpha, spec.box)
            if viol > BOX_SLACK:
                vals.append(1e6 * (1.0 + viol))
                continue
            try:
                vals.append(_xhat_value(alpha, spec, ctx_template,
                                        SEARCH_SCAN_POINTS))
            except Exception:
                vals.append(1e9)
        return min(vals)

    def final(alpha):
        return _xhat_value(alpha, spec, ctx_template, 100000)

    return _multi_start(spec, objective, final)


def read_design_file(path):
    """Parse a design-spec file.

    Line keys: stages s; zero k l (repeatable); box lo hi; seeds n;
    rng m; objective lem|xhat; ordering DR|RD; ratio r; name text.
    Returns (DesignSpec, extras) where extras carries name, ordering,
    and ratio for the caller to build the stability context.
    """
    stages = None
    zero = []
    box = (-1.0, 1.0)
    seeds = 50
    rng_seed = 0
    objective = None
    extras = {"name": None, "ordering": None, "ratio": None}
    for lineno, tokens in iter_config_lines(path):
        key = tokens[0].lower()
        args = tokens[1:]
        try:
            if key == "name":
                extras["name"] = " ".join(args)
            elif key == "stages":
                stages = int(args[0])
            elif key == "zero":
                zero.append((int(args[0]), int(args[1])))
            elif key == "box":
                box = (float(args[0]), float(args[1]))
            elif key == "seeds":
                seeds = int(args[0])
            elif key == "rng":
                rng_seed = int(args[0])
            elif key == "objective":
                word = args[0].lower()
                if word not in ("lem", "xhat"):
                    raise ValueError(f"objective must be lem or xhat, got {word!r}")
                objective = f"min_{word}"
            elif key == "ordering":
                extras["ordering"] = args[0].upper()
            elif key == "ratio":
                extras["ratio"] = float(args[0])
            else:
                raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        except (IndexError, ValueError) as exc:
            raise InputError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    if stages is None:
        raise InputError(f"{path}: missing required 'stages' line")
    if objective is None:
        raise InputError(f"{path}: missing required 'objective' line")
    spec = DesignSpec(stages, zero_pattern=zero, box=box, objective=objective,
                      seeds=seeds, rng_seed=rng_seed)
    return spec, extras
